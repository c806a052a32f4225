//! Experiment orchestration: config parsing, subcommand bodies,
//! atomic artifact writes and run manifests. The CLI binary is a thin
//! argument parser over this module.
//!
//! All randomness flows from the single top-level `seed` through
//! documented derivation labels (`"train"`, `"transfer"`, `"split"`,
//! `"sa-design"`, `"evaluate"`, `"scan-loop"`; dataset generation
//! derives `(seed, "dataset", snr, p, l)` internally). Identical
//! config + seed therefore reproduce identical numeric artifacts; the
//! run manifest is the one artifact excluded from byte comparison
//! because it records wall time.

use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::bounds::{BoundCriterion, CovMode, CrbFormula, CrbOptions};
use crate::dataset::{
    generate_training_data_with_tolerance, load_dataset, save_dataset, split_train_val,
    DirectionSampling, LabelSource, Sector,
};
use crate::doa::{
    evaluate_rmse, run_scan_loop, RmseConfig, SelectionPolicy, Sweep, TruthModel,
};
use crate::error::{Error, Result};
use crate::geometry::{ArrayGeometry, Direction, GeometryConfig};
use crate::learner::{
    accuracy, load_model, log_to_csv, save_model, train, transfer_learn, ModelState, NetworkSpec,
    TrainConfig,
};
use crate::rng::derive_seed;
use crate::sa2d::{coupling_cost, generate_candidates, SaConfig};
use crate::bounds::crb_for_candidate;
use crate::selection::{
    best_subarray, greedy_select, random_select, reduce_classes, SubarrayLabel,
};

pub use crate::plot::{emit_plot, PlotKind};

use crate::bounds::crb_pair;
use crate::simulation::{asymptotic_covariance, sample_covariance, simulate_snapshots};

/// Write a file atomically: temp file in the destination directory,
/// then rename. No partially written artifact is ever observable.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = path.parent().unwrap_or_else(|| Path::new("."));
    std::fs::create_dir_all(dir)?;
    let file_name = path
        .file_name()
        .map(|f| f.to_string_lossy().into_owned())
        .unwrap_or_else(|| "artifact".into());
    let tmp = dir.join(format!(".{file_name}.tmp-{}", std::process::id()));
    std::fs::write(&tmp, bytes)?;
    match std::fs::rename(&tmp, path) {
        Ok(()) => Ok(()),
        Err(e) => {
            std::fs::remove_file(&tmp).ok();
            Err(e.into())
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SelectionConfig {
    pub k: usize,
    pub mode: CovMode,
    pub criterion: BoundCriterion,
    /// Exhaustive-enumeration cap; larger problems must use `sa-design`.
    pub budget: u64,
    /// Relative CRB tie tolerance; defaults per mode when absent.
    pub tie_tolerance: Option<f64>,
    /// Azimuth grid size for `reduce-classes` and `crb-diff`.
    pub grid_points: usize,
}

impl Default for SelectionConfig {
    fn default() -> Self {
        SelectionConfig {
            k: 4,
            mode: CovMode::Empirical,
            criterion: BoundCriterion::Absolute,
            budget: 1_000_000,
            tie_tolerance: None,
            grid_points: 100,
        }
    }
}

impl SelectionConfig {
    pub fn crb_options(&self) -> CrbOptions {
        CrbOptions {
            mode: self.mode,
            criterion: self.criterion,
            formula: CrbFormula::Fim,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DatasetConfig {
    pub directions: usize,
    pub realizations: usize,
    pub snapshots: usize,
    pub snr_db: Vec<f64>,
    pub sector: Sector,
    pub sampling: DirectionSampling,
    /// `exhaustive` or `sa` (candidate pool from the `[sa]` block).
    pub label_source: String,
    pub split_fraction: f64,
}

impl Default for DatasetConfig {
    fn default() -> Self {
        DatasetConfig {
            directions: 60,
            realizations: 20,
            snapshots: 100,
            snr_db: vec![20.0],
            sector: Sector::default(),
            sampling: DirectionSampling::Grid,
            label_source: "exhaustive".into(),
            split_fraction: 0.8,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct NetworkConfig {
    pub conv_filters: Vec<usize>,
    pub fc_widths: Vec<usize>,
    pub dropout: f64,
}

impl Default for NetworkConfig {
    fn default() -> Self {
        NetworkConfig {
            conv_filters: vec![16, 16],
            fc_widths: vec![128],
            dropout: 0.5,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SaBlock {
    pub iterations: usize,
    pub initial_temperature: Option<f64>,
    pub cooling_factor: f64,
    pub moves_per_temperature: usize,
    pub distance_bound: Option<f64>,
    pub feasibility_attempts: usize,
    /// Candidate-set size for `sa-design` / SA-labeled datasets.
    pub candidates: usize,
}

impl Default for SaBlock {
    fn default() -> Self {
        let d = SaConfig::default();
        SaBlock {
            iterations: d.iterations,
            initial_temperature: d.initial_temperature,
            cooling_factor: d.cooling_factor,
            moves_per_temperature: d.moves_per_temperature,
            distance_bound: d.distance_bound,
            feasibility_attempts: d.feasibility_attempts,
            candidates: 32,
        }
    }
}

impl SaBlock {
    fn sa_config(&self, seed: u64) -> SaConfig {
        SaConfig {
            iterations: self.iterations,
            initial_temperature: self.initial_temperature,
            cooling_factor: self.cooling_factor,
            moves_per_temperature: self.moves_per_temperature,
            distance_bound: self.distance_bound,
            feasibility_attempts: self.feasibility_attempts,
            seed,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EvaluationConfig {
    pub policies: Vec<String>,
    pub snr_sweep: Vec<f64>,
    /// When nonempty, sweeps snapshots at `dataset.snr_db[0]`.
    pub snapshot_sweep: Vec<usize>,
    pub trials: usize,
    pub grid_step_deg: f64,
    /// Fixed truth azimuth in degrees; absent = uniform in the sector.
    pub truth_phi_deg: Option<f64>,
    /// Evaluation sector override (truth draws and search grid);
    /// absent = the dataset sector.
    pub sector: Option<Sector>,
}

impl Default for EvaluationConfig {
    fn default() -> Self {
        EvaluationConfig {
            policies: vec!["best_crb".into(), "random".into()],
            snr_sweep: vec![0.0, 10.0, 20.0],
            snapshot_sweep: vec![],
            trials: 100,
            grid_step_deg: 1.0,
            truth_phi_deg: None,
            sector: None,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ScanConfig {
    pub scans: usize,
    pub refresh_period: usize,
    pub start_phi_deg: f64,
    pub drift_deg_per_scan: f64,
    pub snr_db: f64,
    pub snapshots: usize,
    /// `cnn`, `best_crb`, `greedy`, `random` or `full_array`.
    pub policy: String,
}

impl Default for ScanConfig {
    fn default() -> Self {
        ScanConfig {
            scans: 60,
            refresh_period: 5,
            start_phi_deg: 90.0,
            drift_deg_per_scan: 0.5,
            snr_db: 20.0,
            snapshots: 100,
            policy: "best_crb".into(),
        }
    }
}

/// Whole experiment description; unknown keys anywhere are rejected.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub seed: u64,
    #[serde(default)]
    pub output_dir: Option<String>,
    pub geometry: GeometryConfig,
    #[serde(default)]
    pub selection: SelectionConfig,
    #[serde(default)]
    pub dataset: DatasetConfig,
    #[serde(default)]
    pub network: NetworkConfig,
    #[serde(default)]
    pub training: TrainConfig,
    #[serde(default)]
    pub sa: SaBlock,
    #[serde(default)]
    pub evaluation: EvaluationConfig,
    #[serde(default)]
    pub scan: ScanConfig,
}

impl ExperimentConfig {
    pub fn parse(text: &str) -> Result<Self> {
        let cfg: ExperimentConfig =
            toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        self.training.validate()?;
        if !(0.0..=1.0).contains(&self.dataset.split_fraction) {
            return Err(Error::Validation("split_fraction outside [0, 1]".into()));
        }
        if self.dataset.snr_db.is_empty() {
            return Err(Error::Validation("dataset.snr_db must be nonempty".into()));
        }
        if !matches!(self.dataset.label_source.as_str(), "exhaustive" | "sa") {
            return Err(Error::Validation(format!(
                "dataset.label_source {:?} is not exhaustive|sa",
                self.dataset.label_source
            )));
        }
        if self.selection.grid_points == 0 {
            return Err(Error::Validation("selection.grid_points must be >= 1".into()));
        }
        if self.evaluation.trials == 0 {
            return Err(Error::Validation("evaluation.trials must be >= 1".into()));
        }
        Ok(())
    }

    fn network_spec(&self, input_size: usize, num_classes: usize) -> NetworkSpec {
        NetworkSpec {
            input_size,
            conv_filters: self.network.conv_filters.clone(),
            fc_widths: self.network.fc_widths.clone(),
            dropout: self.network.dropout,
            num_classes,
        }
    }
}

/// Flag-level overrides (flags beat config values, which beat the
/// `DOAKIT_OUT` environment variable).
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub output_dir: Option<PathBuf>,
    pub dataset_path: Option<PathBuf>,
    pub model_path: Option<PathBuf>,
    pub source_model_path: Option<PathBuf>,
}

/// Artifacts written by one subcommand run.
#[derive(Debug, Clone)]
pub struct RunOutcome {
    pub artifacts: Vec<PathBuf>,
    /// One-line human summary for the CLI.
    pub summary: String,
}

pub const SUBCOMMANDS: &[&str] = &[
    "gen-data",
    "reduce-classes",
    "train",
    "transfer",
    "eval-acc",
    "select",
    "sa-design",
    "evaluate",
    "scan-loop",
    "crb-diff",
];

struct Ctx {
    cfg: ExperimentConfig,
    out_dir: PathBuf,
    seed: u64,
    digest: String,
    artifacts: Vec<PathBuf>,
}

impl Ctx {
    fn geometry(&self) -> Result<ArrayGeometry<f64>> {
        self.cfg.geometry.build()
    }

    fn path(&self, name: &str) -> PathBuf {
        self.out_dir.join(name)
    }

    fn emit(&mut self, name: &str, bytes: &[u8]) -> Result<PathBuf> {
        let p = self.path(name);
        write_atomic(&p, bytes)?;
        self.artifacts.push(p.clone());
        Ok(p)
    }

    fn dataset_path(&self, ov: &Overrides) -> PathBuf {
        ov.dataset_path
            .clone()
            .unwrap_or_else(|| self.path("dataset.dkds"))
    }

    fn model_path(&self, ov: &Overrides) -> PathBuf {
        ov.model_path
            .clone()
            .unwrap_or_else(|| self.path("model.dkmd"))
    }
}

/// FNV-1a digest of the raw config text, hex encoded.
pub fn config_digest(text: &str) -> String {
    let mut h: u64 = 0xcbf29ce484222325;
    for b in text.as_bytes() {
        h ^= *b as u64;
        h = h.wrapping_mul(0x100000001b3);
    }
    format!("{h:016x}")
}

/// Run one named subcommand against a config file. Writes the declared
/// artifacts plus a `<name>-manifest.txt` recording the config digest,
/// seed, toolkit version and wall time.
pub fn run_subcommand(name: &str, config_path: &Path, ov: &Overrides) -> Result<RunOutcome> {
    let start = Instant::now();
    let text = std::fs::read_to_string(config_path)
        .map_err(|e| Error::Config(format!("cannot read {}: {e}", config_path.display())))?;
    let mut cfg = ExperimentConfig::parse(&text)?;
    if let Some(seed) = ov.seed {
        cfg.seed = seed;
    }
    let out_dir = ov
        .output_dir
        .clone()
        .or_else(|| cfg.output_dir.as_ref().map(PathBuf::from))
        .or_else(|| std::env::var_os("DOAKIT_OUT").map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from("out"));

    let mut ctx = Ctx {
        seed: cfg.seed,
        digest: config_digest(&text),
        cfg,
        out_dir,
        artifacts: Vec::new(),
    };

    let summary = match name {
        "gen-data" => cmd_gen_data(&mut ctx, ov)?,
        "reduce-classes" => cmd_reduce_classes(&mut ctx)?,
        "train" => cmd_train(&mut ctx, ov)?,
        "transfer" => cmd_transfer(&mut ctx, ov)?,
        "eval-acc" => cmd_eval_acc(&mut ctx, ov)?,
        "select" => cmd_select(&mut ctx)?,
        "sa-design" => cmd_sa_design(&mut ctx)?,
        "evaluate" => cmd_evaluate(&mut ctx, ov)?,
        "scan-loop" => cmd_scan_loop(&mut ctx, ov)?,
        "crb-diff" => cmd_crb_diff(&mut ctx)?,
        other => {
            return Err(Error::Config(format!(
                "unknown subcommand {other:?}; expected one of {SUBCOMMANDS:?}"
            )))
        }
    };

    let manifest = format!(
        "command={name}\nconfig_digest={}\nseed={}\nversion={}\nwall_time_ms={}\n{}",
        ctx.digest,
        ctx.seed,
        env!("CARGO_PKG_VERSION"),
        start.elapsed().as_millis(),
        ctx.artifacts
            .iter()
            .map(|p| format!("artifact={}\n", p.display()))
            .collect::<String>()
    );
    let manifest_path = ctx.path(&format!("{name}-manifest.txt"));
    write_atomic(&manifest_path, manifest.as_bytes())?;

    let mut artifacts = ctx.artifacts;
    artifacts.push(manifest_path);
    Ok(RunOutcome { artifacts, summary })
}

fn label_source<'a>(
    ctx: &Ctx,
    g: &ArrayGeometry<f64>,
    cache: &'a mut Option<crate::sa2d::CandidateSet<f64>>,
) -> Result<LabelSource<'a>> {
    match ctx.cfg.dataset.label_source.as_str() {
        "sa" => {
            let sa_cfg = ctx.cfg.sa.sa_config(derive_seed(ctx.seed, "sa-design", &[]));
            *cache = Some(generate_candidates(
                g,
                ctx.cfg.selection.k,
                ctx.cfg.sa.candidates,
                &sa_cfg,
            )?);
            Ok(LabelSource::Candidates(cache.as_ref().unwrap()))
        }
        _ => Ok(LabelSource::Exhaustive {
            budget: ctx.cfg.selection.budget as u128,
        }),
    }
}

fn cmd_gen_data(ctx: &mut Ctx, ov: &Overrides) -> Result<String> {
    let g = ctx.geometry()?;
    let mut sa_cache = None;
    let source = label_source(ctx, &g, &mut sa_cache)?;
    let ds = generate_training_data_with_tolerance(
        &g,
        ctx.cfg.selection.k,
        ctx.cfg.dataset.directions,
        ctx.cfg.dataset.realizations,
        ctx.cfg.dataset.snapshots,
        &ctx.cfg.dataset.snr_db,
        ctx.seed,
        source,
        &ctx.cfg.selection.crb_options(),
        &ctx.cfg.dataset.sector,
        ctx.cfg.dataset.sampling,
        ctx.cfg.selection.tie_tolerance,
    )?;

    let path = ctx.dataset_path(ov);
    save_dataset(&ds, &path)?;
    ctx.artifacts.push(path);

    let sidecar = serde_json::json!({
        "samples": ds.len(),
        "sensors": ds.meta.num_sensors(),
        "k": ds.meta.k,
        "candidates": ds.catalog.all.len(),
        "classes": ds.catalog.num_classes(),
        "class_histogram": ds.class_histogram(),
        "snr_db": ds.meta.snr_list,
        "seed": ds.meta.seed,
        "generator": ds.meta.generator,
    });
    ctx.emit(
        "dataset_summary.json",
        serde_json::to_string_pretty(&sidecar)
            .map_err(|e| Error::Validation(e.to_string()))?
            .as_bytes(),
    )?;
    Ok(format!(
        "{} samples, {} classes (of {} candidates)",
        ds.len(),
        ds.catalog.num_classes(),
        ds.catalog.all.len()
    ))
}

fn cmd_reduce_classes(ctx: &mut Ctx) -> Result<String> {
    let g = ctx.geometry()?;
    let grid = ctx.cfg.dataset.sector.grid(ctx.cfg.selection.grid_points)?;
    // Class reduction is a design-time sweep on the model covariance.
    let opts = CrbOptions {
        mode: CovMode::Asymptotic,
        ..ctx.cfg.selection.crb_options()
    };
    let tie_tol = ctx
        .cfg
        .selection
        .tie_tolerance
        .unwrap_or_else(|| crate::selection::default_tie_tolerance(&opts));
    let (catalog, reps) = reduce_classes(
        &g,
        ctx.cfg.selection.k,
        &grid,
        ctx.cfg.dataset.snr_db[0],
        ctx.cfg.dataset.snapshots,
        &opts,
        tie_tol,
        ctx.cfg.selection.budget as u128,
    )?;
    ctx.emit("catalog.csv", catalog.to_csv(&reps).as_bytes())?;
    Ok(format!(
        "C = {}, C-bar = {}",
        catalog.all.len(),
        catalog.num_classes()
    ))
}

fn cmd_train(ctx: &mut Ctx, ov: &Overrides) -> Result<String> {
    let ds = load_dataset(&ctx.dataset_path(ov))?;
    let (ds_train, ds_val) = split_train_val(
        &ds,
        ctx.cfg.dataset.split_fraction,
        derive_seed(ctx.seed, "split", &[]),
    )?;
    let spec = ctx
        .cfg
        .network_spec(ds.meta.num_sensors(), ds.catalog.num_classes());
    let train_cfg = TrainConfig {
        seed: derive_seed(ctx.seed, "train", &[]),
        ..ctx.cfg.training.clone()
    };
    let model = train::<f32>(&ds_train, &ds_val, &spec, &train_cfg)?;
    let val_acc = accuracy(&model, &ds_val)?;

    let path = ctx.model_path(ov);
    save_model(&model, &path)?;
    ctx.artifacts.push(path);
    ctx.emit("training_log.csv", log_to_csv(&model.log).as_bytes())?;
    Ok(format!(
        "{} epochs, validation accuracy {val_acc:.1}%",
        model.log.len()
    ))
}

fn cmd_transfer(ctx: &mut Ctx, ov: &Overrides) -> Result<String> {
    let source_path = ov
        .source_model_path
        .clone()
        .unwrap_or_else(|| ctx.path("model.dkmd"));
    let source: ModelState<f32> = load_model(&source_path)?;
    let ds = load_dataset(&ctx.dataset_path(ov))?;
    let (ds_train, ds_val) = split_train_val(
        &ds,
        ctx.cfg.dataset.split_fraction,
        derive_seed(ctx.seed, "split", &[]),
    )?;

    // Target-only baseline on the same scarce corpus, then transfer.
    let spec = ctx
        .cfg
        .network_spec(ds.meta.num_sensors(), ds.catalog.num_classes());
    let target_cfg = TrainConfig {
        seed: derive_seed(ctx.seed, "train-target", &[]),
        ..ctx.cfg.training.clone()
    };
    let target_only = train::<f32>(&ds_train, &ds_val, &spec, &target_cfg)?;
    let tl_cfg = TrainConfig {
        seed: derive_seed(ctx.seed, "transfer", &[]),
        ..ctx.cfg.training.clone()
    };
    let transferred = transfer_learn(&source, &ds_train, &ds_val, &tl_cfg)?;

    let acc_t = accuracy(&target_only, &ds_val)?;
    let acc_tr = accuracy(&transferred, &ds_val)?;

    let path = ov
        .model_path
        .clone()
        .unwrap_or_else(|| ctx.path("transfer.dkmd"));
    save_model(&transferred, &path)?;
    ctx.artifacts.push(path);
    ctx.emit("transfer_log.csv", log_to_csv(&transferred.log).as_bytes())?;
    let size = ds.len();
    ctx.emit(
        "tl_accuracy.csv",
        format!(
            "size,method,accuracy_pct\n{size},cnn_t,{acc_t}\n{size},cnn_tr,{acc_tr}\n"
        )
        .as_bytes(),
    )?;
    Ok(format!(
        "target-only {acc_t:.1}% vs transferred {acc_tr:.1}%"
    ))
}

/// Selection accuracy of a saved model against a dataset file.
fn cmd_eval_acc(ctx: &mut Ctx, ov: &Overrides) -> Result<String> {
    let model: ModelState<f32> = load_model(&ctx.model_path(ov))?;
    let ds = load_dataset(&ctx.dataset_path(ov))?;
    let acc = accuracy(&model, &ds)?;
    ctx.emit(
        "eval_acc.csv",
        format!(
            "samples,classes,accuracy_pct\n{},{},{acc}\n",
            ds.len(),
            ds.catalog.num_classes()
        )
        .as_bytes(),
    )?;
    Ok(format!("{acc:.1}% over {} samples", ds.len()))
}

fn cmd_select(ctx: &mut Ctx) -> Result<String> {
    let g = ctx.geometry()?;
    let sector = ctx.cfg.dataset.sector;
    let phi = ctx
        .cfg
        .evaluation
        .truth_phi_deg
        .unwrap_or(0.5 * (sector.phi_start_deg + sector.phi_end_deg));
    let d = Direction::from_degrees(sector.theta_deg, phi)?;
    let opts = ctx.cfg.selection.crb_options();
    let k = ctx.cfg.selection.k;
    let snr = ctx.cfg.dataset.snr_db[0];
    let t = ctx.cfg.dataset.snapshots;

    let cov = match opts.mode {
        CovMode::Empirical => {
            let snaps = simulate_snapshots(&g, d, snr, t, derive_seed(ctx.seed, "select", &[]));
            Some(sample_covariance(snaps.samples()))
        }
        CovMode::Asymptotic => None,
    };
    let cov_ref = cov.as_ref();

    let (best, best_crb) = best_subarray(&g, d, k, snr, t, cov_ref, &opts)?;
    let greedy = greedy_select(&g, d, k, snr, t, cov_ref, &opts)?;
    let greedy_crb = crb_for_candidate(&g, &greedy, d, snr, t, cov_ref, &opts)?;
    let random = random_select(g.len(), k, derive_seed(ctx.seed, "ras", &[]))?;
    let random_crb = crb_for_candidate(&g, &random, d, snr, t, cov_ref, &opts)?;

    let crit = opts.criterion;
    let mut csv = String::from("method,indices,kappa\n");
    csv.push_str(&format!(
        "best_crb,{},{}\n",
        best.to_compact(),
        best_crb.criterion_value(crit)
    ));
    csv.push_str(&format!(
        "greedy,{},{}\n",
        greedy.to_compact(),
        greedy_crb.criterion_value(crit)
    ));
    csv.push_str(&format!(
        "random,{},{}\n",
        random.to_compact(),
        random_crb.criterion_value(crit)
    ));
    ctx.emit("selection.csv", csv.as_bytes())?;
    ctx.emit("geometry.csv", g.to_csv().as_bytes())?;
    Ok(format!(
        "best {} (kappa {:.3e})",
        best.to_compact(),
        best_crb.criterion_value(crit)
    ))
}

fn cmd_sa_design(ctx: &mut Ctx) -> Result<String> {
    let g = ctx.geometry()?;
    let sa_cfg = ctx.cfg.sa.sa_config(derive_seed(ctx.seed, "sa-design", &[]));
    let set = generate_candidates(&g, ctx.cfg.selection.k, ctx.cfg.sa.candidates, &sa_cfg)?;
    ctx.emit("candidates.csv", set.to_csv().as_bytes())?;
    let full_cost = coupling_cost(&g)?;
    let best = set
        .costs
        .iter()
        .cloned()
        .fold(f64::INFINITY, f64::min);
    Ok(format!(
        "{n} candidates, best k_o {best:.4} (parent {full_cost:.4})",
        n = set.labels.len()
    ))
}

/// Policy names plus the `fixed:<i-j-...>` form pinning one subarray.
fn parse_policy<'a>(
    name: &str,
    model: Option<&'a ModelState<f32>>,
    m: usize,
) -> Result<SelectionPolicy<'a>> {
    if let Some(compact) = name.strip_prefix("fixed:") {
        return Ok(SelectionPolicy::Fixed(SubarrayLabel::from_compact(
            compact, m,
        )?));
    }
    match name {
        "cnn" => model
            .map(SelectionPolicy::Cnn)
            .ok_or_else(|| Error::Validation("cnn policy needs a trained model".into())),
        "best_crb" => Ok(SelectionPolicy::BestCrb),
        "greedy" => Ok(SelectionPolicy::Greedy),
        "random" => Ok(SelectionPolicy::Random),
        "full_array" => Ok(SelectionPolicy::FullArray),
        other => Err(Error::Validation(format!(
            "unknown policy {other:?} (cnn|best_crb|greedy|random|full_array|fixed:<indices>)"
        ))),
    }
}

fn cmd_evaluate(ctx: &mut Ctx, ov: &Overrides) -> Result<String> {
    let g = ctx.geometry()?;
    let needs_model = ctx.cfg.evaluation.policies.iter().any(|p| p == "cnn");
    let model: Option<ModelState<f32>> = if needs_model {
        Some(load_model(&ctx.model_path(ov))?)
    } else {
        None
    };
    let policies = ctx
        .cfg
        .evaluation
        .policies
        .iter()
        .map(|p| parse_policy(p, model.as_ref(), g.len()))
        .collect::<Result<Vec<_>>>()?;

    let sector = ctx.cfg.evaluation.sector.unwrap_or(ctx.cfg.dataset.sector);
    let truth = match ctx.cfg.evaluation.truth_phi_deg {
        Some(phi) => TruthModel::Fixed(Direction::from_degrees(sector.theta_deg, phi)?),
        None => TruthModel::RandomInSector(sector),
    };
    let cfg = RmseConfig {
        k: ctx.cfg.selection.k,
        snr_db: ctx.cfg.dataset.snr_db[0],
        snapshots: ctx.cfg.dataset.snapshots,
        trials: ctx.cfg.evaluation.trials,
        grid_step_deg: ctx.cfg.evaluation.grid_step_deg,
        sector,
        crb: ctx.cfg.selection.crb_options(),
        truth,
        seed: derive_seed(ctx.seed, "evaluate", &[]),
    };
    let sweep = if ctx.cfg.evaluation.snapshot_sweep.is_empty() {
        Sweep::SnrDb(ctx.cfg.evaluation.snr_sweep.clone())
    } else {
        Sweep::Snapshots(ctx.cfg.evaluation.snapshot_sweep.clone())
    };
    let report = evaluate_rmse(&g, &policies, &sweep, &cfg)?;
    ctx.emit("rmse.csv", report.to_csv().as_bytes())?;
    Ok(format!("{} report rows", report.rows.len()))
}

fn cmd_scan_loop(ctx: &mut Ctx, ov: &Overrides) -> Result<String> {
    let g = ctx.geometry()?;
    let sc = ctx.cfg.scan.clone();
    let model: Option<ModelState<f32>> = if sc.policy == "cnn" {
        Some(load_model(&ctx.model_path(ov))?)
    } else {
        None
    };
    let policy = parse_policy(&sc.policy, model.as_ref(), g.len())?;
    let sector = ctx.cfg.dataset.sector;
    let trajectory = (0..sc.scans)
        .map(|s| {
            Direction::from_degrees(
                sector.theta_deg,
                sc.start_phi_deg + sc.drift_deg_per_scan * s as f64,
            )
        })
        .collect::<Result<Vec<_>>>()?;
    let log = run_scan_loop(
        &g,
        &policy,
        &trajectory,
        sc.refresh_period,
        ctx.cfg.selection.k,
        sc.snr_db,
        sc.snapshots,
        ctx.cfg.evaluation.grid_step_deg,
        &sector,
        &ctx.cfg.selection.crb_options(),
        derive_seed(ctx.seed, "scan-loop", &[]),
    )?;
    ctx.emit("scan_log.csv", log.to_csv().as_bytes())?;

    // Per-sensor appearance rate over the operating (subarray) scans.
    let operating: Vec<SubarrayLabel> = log
        .records
        .iter()
        .filter(|r| !r.full_array)
        .map(|r| r.label.clone())
        .collect();
    if !operating.is_empty() {
        let hist = crate::selection::selection_histogram(&operating, g.len());
        let mut csv = String::from("index,percentage\n");
        for (i, pct) in hist.iter().enumerate() {
            csv.push_str(&format!("{i},{pct}\n"));
        }
        ctx.emit("selection_histogram.csv", csv.as_bytes())?;
    }
    Ok(format!(
        "{} scans, mean |error| {:.3} deg",
        log.records.len(),
        log.mean_abs_error()
    ))
}

/// Side-by-side per-angle bounds from the FIM inversion and from the
/// per-angle variant sometimes quoted for this model (whose
/// projector terms mix the two derivatives). Surfaces how far the two
/// readings diverge over the sector.
fn cmd_crb_diff(ctx: &mut Ctx) -> Result<String> {
    let g = ctx.geometry()?;
    let grid = ctx.cfg.dataset.sector.grid(ctx.cfg.selection.grid_points)?;
    let snr = ctx.cfg.dataset.snr_db[0];
    let t = ctx.cfg.dataset.snapshots;
    let mut csv = String::from(
        "phi_deg,fim_kappa_theta,fim_kappa_phi,literal_kappa_theta,literal_kappa_phi\n",
    );
    let mut disagreements = 0usize;
    for &d in &grid {
        let r = asymptotic_covariance(&g, d, snr);
        let fim = crb_pair(
            &g,
            d,
            snr,
            t,
            &r,
            &CrbOptions {
                mode: CovMode::Asymptotic,
                criterion: BoundCriterion::Absolute,
                formula: CrbFormula::Fim,
            },
        )?;
        let lit = crb_pair(
            &g,
            d,
            snr,
            t,
            &r,
            &CrbOptions {
                mode: CovMode::Asymptotic,
                criterion: BoundCriterion::Absolute,
                formula: CrbFormula::PerAngle,
            },
        )?;
        let agree = lit.kappa_phi.is_finite()
            && fim.kappa_phi.is_finite()
            && (lit.kappa_phi - fim.kappa_phi).abs() <= 0.1 * fim.kappa_phi;
        if !agree {
            disagreements += 1;
        }
        csv.push_str(&format!(
            "{},{},{},{},{}\n",
            d.phi_deg(),
            fim.kappa_theta,
            fim.kappa_phi,
            lit.kappa_theta,
            lit.kappa_phi
        ));
    }
    ctx.emit("crb_diff.csv", csv.as_bytes())?;
    Ok(format!(
        "literal azimuth bound off by >10% (or unbounded) at {disagreements}/{} directions",
        grid.len()
    ))
}

/// `plot` entry point used by the CLI (not a config-driven run).
pub fn run_plot(csv: &Path, kind: &str, out: Option<PathBuf>) -> Result<PathBuf> {
    let kind = PlotKind::parse(kind)?;
    let out = out.unwrap_or_else(|| csv.with_extension("svg"));
    emit_plot(csv, kind, &out)?;
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn atomic_write_replaces_whole_file() {
        let dir = std::env::temp_dir().join(format!("doakit-runner-{}", std::process::id()));
        std::fs::create_dir_all(&dir).unwrap();
        let p = dir.join("artifact.csv");
        write_atomic(&p, b"first").unwrap();
        write_atomic(&p, b"second").unwrap();
        assert_eq!(std::fs::read(&p).unwrap(), b"second");
        // No temp files left behind.
        let leftovers: Vec<_> = std::fs::read_dir(&dir)
            .unwrap()
            .filter(|e| {
                e.as_ref()
                    .unwrap()
                    .file_name()
                    .to_string_lossy()
                    .contains(".tmp-")
            })
            .collect();
        assert!(leftovers.is_empty());
        std::fs::remove_dir_all(&dir).ok();
    }

    #[test]
    fn config_parsing_and_strictness() {
        let cfg = ExperimentConfig::parse(
            r#"
            seed = 7
            [geometry]
            kind = "uca"
            m = 10
            spacing = 0.5
            [selection]
            k = 4
            "#,
        )
        .unwrap();
        assert_eq!(cfg.seed, 7);
        assert_eq!(cfg.selection.k, 4);
        assert_eq!(cfg.dataset.directions, 60);

        let bad = ExperimentConfig::parse(
            r#"
            seed = 7
            unknown_key = 1
            [geometry]
            kind = "uca"
            m = 10
            spacing = 0.5
            "#,
        );
        assert!(matches!(bad, Err(Error::Config(_))));

        let bad = ExperimentConfig::parse(
            r#"
            seed = 7
            [geometry]
            kind = "uca"
            m = 10
            spacing = 0.5
            [dataset]
            split_fraction = 1.5
            "#,
        );
        assert!(matches!(bad, Err(Error::Validation(_))));
    }

    #[test]
    fn digest_is_stable_and_content_sensitive() {
        let a = config_digest("seed = 1");
        assert_eq!(a, config_digest("seed = 1"));
        assert_ne!(a, config_digest("seed = 2"));
        assert_eq!(a.len(), 16);
    }
}
