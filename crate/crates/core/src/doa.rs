//! MUSIC direction finding on selected subarrays, Monte-Carlo RMSE
//! evaluation across selection policies, and the cognitive scan loop.
//!
//! Estimation sweeps azimuth on a 1-D ring at a known elevation (the
//! evaluation convention throughout; the azimuth RMSE is the reported
//! error). Angles cross this module's API in radians via [`Direction`]
//! and in degrees inside reports.

use rayon::prelude::*;

use crate::bounds::CrbOptions;
use crate::dataset::Sector;
use crate::error::{Error, Result};
use crate::geometry::{steering_vector, ArrayGeometry, Direction};
use crate::learner::{predict_subarray, ModelState};
use crate::linalg::{eigh, inner, Cx};
use crate::rng::{derive_seed, Stream};
use crate::scalar::Scalar;
use crate::selection::{best_subarray, greedy_select, random_select, SubarrayLabel};
use crate::simulation::{covariance_features, sample_covariance, simulate_snapshots,
    CovarianceMatrix};

/// Pseudo-spectrum sampled over a 1-D azimuth grid.
#[derive(Debug, Clone)]
pub struct Spectrum<T: Scalar = f64> {
    pub grid: Vec<Direction<T>>,
    pub values: Vec<T>,
    /// Grid wraps around (full-circle azimuth ring).
    pub cyclic: bool,
}

/// Uniform azimuth ring `[start, end)` at fixed elevation.
pub fn azimuth_grid<T: Scalar>(
    theta_deg: f64,
    phi_start_deg: f64,
    phi_end_deg: f64,
    step_deg: f64,
) -> Result<(Vec<Direction<T>>, bool)> {
    if step_deg <= 0.0 {
        return Err(Error::Validation("grid step must be positive".into()));
    }
    let span = phi_end_deg - phi_start_deg;
    if span <= 0.0 {
        return Err(Error::Validation("empty azimuth span".into()));
    }
    let n = (span / step_deg).round() as usize;
    let cyclic = (span - 360.0).abs() < 1e-9;
    let grid = (0..n.max(1))
        .map(|i| {
            Direction::from_degrees(
                T::of(theta_deg),
                T::of(phi_start_deg + i as f64 * step_deg),
            )
        })
        .collect::<Result<Vec<_>>>()?;
    Ok((grid, cyclic))
}

/// MUSIC pseudo-spectrum: eigendecompose the subarray covariance, take
/// the K - n smallest eigenvectors as the noise subspace E_n, and
/// score each direction as `1 / ||E_n^H a(d)||^2`.
pub fn music_spectrum<T: Scalar>(
    r_sub: &CovarianceMatrix<T>,
    g_sub: &ArrayGeometry<T>,
    n_sources: usize,
    grid: Vec<Direction<T>>,
    cyclic: bool,
) -> Result<Spectrum<T>> {
    let k = g_sub.len();
    if n_sources == 0 || k <= n_sources {
        return Err(Error::TooFewSensors {
            k,
            sources: n_sources,
        });
    }
    if r_sub.size() != k {
        return Err(Error::ShapeMismatch(format!(
            "covariance {}x{} vs {k}-sensor subarray",
            r_sub.size(),
            r_sub.size()
        )));
    }
    if grid.is_empty() {
        return Err(Error::Validation("empty spectrum grid".into()));
    }

    let (_, vectors) = eigh(r_sub.matrix());
    let noise: Vec<&Vec<Cx<T>>> = vectors.iter().take(k - n_sources).collect();
    let floor = T::of(1e-18) * T::of(k as f64);

    let values = grid
        .iter()
        .map(|&d| {
            let a = steering_vector(g_sub, d);
            let mut denom = T::zero();
            for en in &noise {
                denom += inner(en, a.entries()).norm_sqr();
            }
            T::one() / denom.max(floor)
        })
        .collect();

    Ok(Spectrum {
        grid,
        values,
        cyclic,
    })
}

/// The `n` largest local maxima, refined by quadratic interpolation
/// over the adjacent grid cells. Equal peaks order by grid index.
pub fn find_peaks<T: Scalar>(s: &Spectrum<T>, n: usize) -> Result<Vec<Direction<T>>> {
    if n == 0 {
        return Err(Error::Validation("asked for zero peaks".into()));
    }
    let len = s.values.len();
    let mut peaks: Vec<(usize, T)> = Vec::new();
    for i in 0..len {
        let (left, right) = if s.cyclic {
            (s.values[(i + len - 1) % len], s.values[(i + 1) % len])
        } else if i == 0 || i == len - 1 {
            // Edge bins: compare against the single inner neighbor.
            let inner_ix = if i == 0 { 1 } else { len - 2 };
            if len < 2 {
                (T::neg_infinity(), T::neg_infinity())
            } else {
                (s.values[inner_ix], T::neg_infinity())
            }
        } else {
            (s.values[i - 1], s.values[i + 1])
        };
        if s.values[i] > left && s.values[i] > right {
            peaks.push((i, s.values[i]));
        }
    }
    if peaks.len() < n {
        return Err(Error::TooFewPeaks {
            found: peaks.len(),
            requested: n,
        });
    }
    // Largest first; ties by grid index.
    peaks.sort_by(|a, b| b.1.partial_cmp(&a.1).unwrap().then(a.0.cmp(&b.0)));
    peaks.truncate(n);
    peaks.sort_by_key(|&(i, _)| i);

    peaks
        .into_iter()
        .map(|(i, _)| refine_peak(s, i))
        .collect()
}

fn refine_peak<T: Scalar>(s: &Spectrum<T>, i: usize) -> Result<Direction<T>> {
    let len = s.values.len();
    let d = s.grid[i];
    let interior = s.cyclic || (i > 0 && i + 1 < len);
    if !interior || len < 3 {
        return Ok(d);
    }
    let vm = s.values[(i + len - 1) % len];
    let v0 = s.values[i];
    let vp = s.values[(i + 1) % len];
    let curvature = vm - T::of(2.0) * v0 + vp;
    if curvature >= T::zero() {
        return Ok(d);
    }
    let offset = (T::of(0.5) * (vm - vp) / curvature).clamp(T::of(-0.5), T::of(0.5));
    // Uniform grid assumed: the cell width from the nearest neighbor.
    let phi_next = s.grid[(i + 1) % len].phi;
    let mut delta = phi_next - d.phi;
    let two_pi = T::of(2.0) * T::PI();
    if delta < T::zero() {
        delta += two_pi;
    }
    Direction::wrapped(d.theta, d.phi + offset * delta)
}

/// Wrap an angular difference into (-180, 180] degrees.
pub fn wrap_deg(x: f64) -> f64 {
    let mut w = x % 360.0;
    if w <= -180.0 {
        w += 360.0;
    } else if w > 180.0 {
        w -= 360.0;
    }
    w
}

/// Subarray selection rule under evaluation.
pub enum SelectionPolicy<'a> {
    /// Classifier prediction from the full-array covariance features.
    Cnn(&'a ModelState<f32>),
    /// Exhaustive CRB argmin on the selection-scan covariance.
    BestCrb,
    Greedy,
    /// Fresh uniform subarray per trial.
    Random,
    FullArray,
    Fixed(SubarrayLabel),
}

impl SelectionPolicy<'_> {
    pub fn name(&self) -> &'static str {
        match self {
            SelectionPolicy::Cnn(_) => "cnn",
            SelectionPolicy::BestCrb => "best_crb",
            SelectionPolicy::Greedy => "greedy",
            SelectionPolicy::Random => "random",
            SelectionPolicy::FullArray => "full_array",
            SelectionPolicy::Fixed(_) => "fixed",
        }
    }

    #[allow(clippy::too_many_arguments)]
    fn select(
        &self,
        g: &ArrayGeometry<f64>,
        k: usize,
        full_cov: &CovarianceMatrix<f64>,
        d_assumed: Direction<f64>,
        snr_db: f64,
        snapshots: usize,
        crb: &CrbOptions,
        trial_seed: u64,
    ) -> Result<SubarrayLabel> {
        match self {
            SelectionPolicy::Cnn(model) => {
                let features = covariance_features(full_cov).cast::<f32>();
                let (_, label, _) = predict_subarray(model, &features)?;
                Ok(label)
            }
            SelectionPolicy::BestCrb => Ok(best_subarray(
                g,
                d_assumed,
                k,
                snr_db,
                snapshots,
                Some(full_cov),
                crb,
            )?
            .0),
            SelectionPolicy::Greedy => {
                greedy_select(g, d_assumed, k, snr_db, snapshots, Some(full_cov), crb)
            }
            SelectionPolicy::Random => random_select(g.len(), k, trial_seed),
            SelectionPolicy::FullArray => Ok(SubarrayLabel::full(g.len())),
            SelectionPolicy::Fixed(label) => Ok(label.clone()),
        }
    }
}

/// What varies across the sweep.
#[derive(Debug, Clone)]
pub enum Sweep {
    SnrDb(Vec<f64>),
    Snapshots(Vec<usize>),
}

/// True bearing per trial.
#[derive(Debug, Clone)]
pub enum TruthModel {
    Fixed(Direction<f64>),
    /// Uniform azimuth inside the sector, shared across policies.
    RandomInSector(Sector),
}

#[derive(Debug, Clone)]
pub struct RmseConfig {
    pub k: usize,
    pub snr_db: f64,
    pub snapshots: usize,
    pub trials: usize,
    pub grid_step_deg: f64,
    pub sector: Sector,
    pub crb: CrbOptions,
    pub truth: TruthModel,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RmseRow {
    pub sweep_value: f64,
    pub method: String,
    pub rmse_deg: f64,
    pub failures: usize,
    pub trials: usize,
}

/// Monte-Carlo azimuth RMSE report; one row per (sweep point, policy).
#[derive(Debug, Clone, PartialEq)]
pub struct RmseReport {
    pub rows: Vec<RmseRow>,
}

impl RmseReport {
    /// CSV export: `sweep_value,method,rmse_deg,failures,trials`.
    pub fn to_csv(&self) -> String {
        let mut s = String::from("sweep_value,method,rmse_deg,failures,trials\n");
        for r in &self.rows {
            s.push_str(&format!(
                "{},{},{},{},{}\n",
                r.sweep_value, r.method, r.rmse_deg, r.failures, r.trials
            ));
        }
        s
    }
}

/// Squared azimuth errors for one policy at one sweep point. Failures
/// (no spectrum peak) are counted, never silently dropped into the
/// error average. Returns (squared errors in deg^2, failures).
#[allow(clippy::too_many_arguments)]
pub fn trial_errors(
    g: &ArrayGeometry<f64>,
    policy: &SelectionPolicy<'_>,
    cfg: &RmseConfig,
    sweep_ix: usize,
    snr_db: f64,
    snapshots: usize,
) -> Result<(Vec<f64>, usize)> {
    let results: Vec<Result<Option<f64>>> = (0..cfg.trials)
        .into_par_iter()
        .map(|j| {
            let ids = [sweep_ix as u64, j as u64];
            let truth = match &cfg.truth {
                TruthModel::Fixed(d) => *d,
                TruthModel::RandomInSector(sector) => {
                    let mut s = Stream::derived(cfg.seed, "truth", &ids);
                    Direction::from_degrees(
                        sector.theta_deg,
                        s.uniform_in(sector.phi_start_deg, sector.phi_end_deg),
                    )?
                }
            };

            // Selection scan, then an estimation scan with the chosen
            // subarray; seeds shared across policies for pairing.
            let sel_snaps = simulate_snapshots(
                g,
                truth,
                snr_db,
                snapshots,
                derive_seed(cfg.seed, "scan-select", &ids),
            );
            let full_cov = sample_covariance(sel_snaps.samples());
            let label = policy.select(
                g,
                cfg.k,
                &full_cov,
                truth,
                snr_db,
                snapshots,
                &cfg.crb,
                derive_seed(cfg.seed, "ras", &ids),
            )?;

            let est_snaps = simulate_snapshots(
                g,
                truth,
                snr_db,
                snapshots,
                derive_seed(cfg.seed, "scan-estimate", &ids),
            );
            let sub_geometry = g.restrict(&label)?;
            let sub_cov = sample_covariance(est_snaps.restrict(&label)?.samples());
            let (grid, cyclic) = cfg.sector.search_grid(cfg.grid_step_deg)?;
            let spectrum = music_spectrum(&sub_cov, &sub_geometry, 1, grid, cyclic)?;
            match find_peaks(&spectrum, 1) {
                Ok(peaks) => {
                    let err = wrap_deg(peaks[0].phi_deg() - truth.phi_deg());
                    Ok(Some(err * err))
                }
                Err(Error::TooFewPeaks { .. }) => Ok(None),
                Err(e) => Err(e),
            }
        })
        .collect();

    let mut errors = Vec::with_capacity(cfg.trials);
    let mut failures = 0usize;
    for r in results {
        match r? {
            Some(e2) => errors.push(e2),
            None => failures += 1,
        }
    }
    Ok((errors, failures))
}

impl Sector {
    /// Sectors declared as `[x, x+359]` or `[x, x+360]` cover the
    /// whole azimuth circle.
    pub fn spans_circle(&self) -> bool {
        let span = self.phi_end_deg - self.phi_start_deg;
        (span - 360.0).abs() < 1e-9 || (span - 359.0).abs() < 1e-9
    }

    /// Search grid for this sector: a cyclic 360-degree ring for
    /// full-circle sectors, otherwise the closed span plus one cell of
    /// headroom at the top edge.
    pub fn search_grid<T: crate::scalar::Scalar>(
        &self,
        step_deg: f64,
    ) -> Result<(Vec<Direction<T>>, bool)> {
        if self.spans_circle() {
            azimuth_grid(self.theta_deg, self.phi_start_deg, self.phi_start_deg + 360.0, step_deg)
        } else {
            azimuth_grid(self.theta_deg, self.phi_start_deg, self.phi_end_deg + step_deg, step_deg)
        }
    }
}

/// Sweep SNR or snapshot count for a set of policies.
pub fn evaluate_rmse(
    g: &ArrayGeometry<f64>,
    policies: &[SelectionPolicy<'_>],
    sweep: &Sweep,
    cfg: &RmseConfig,
) -> Result<RmseReport> {
    let points: Vec<(f64, f64, usize)> = match sweep {
        Sweep::SnrDb(values) => values
            .iter()
            .map(|&s| (s, s, cfg.snapshots))
            .collect(),
        Sweep::Snapshots(values) => values
            .iter()
            .map(|&t| (t as f64, cfg.snr_db, t))
            .collect(),
    };
    let mut rows = Vec::new();
    for (ix, &(sweep_value, snr_db, snapshots)) in points.iter().enumerate() {
        for policy in policies {
            let (errors, failures) = trial_errors(g, policy, cfg, ix, snr_db, snapshots)?;
            let rmse = if errors.is_empty() {
                f64::NAN
            } else {
                (errors.iter().sum::<f64>() / errors.len() as f64).sqrt()
            };
            rows.push(RmseRow {
                sweep_value,
                method: policy.name().to_string(),
                rmse_deg: rmse,
                failures,
                trials: cfg.trials,
            });
        }
    }
    Ok(RmseReport { rows })
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScanRecord {
    pub scan: usize,
    pub full_array: bool,
    pub label: SubarrayLabel,
    pub est_phi_deg: f64,
    pub err_deg: f64,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct ScanLog {
    pub records: Vec<ScanRecord>,
}

impl ScanLog {
    pub fn mean_abs_error(&self) -> f64 {
        self.records.iter().map(|r| r.err_deg.abs()).sum::<f64>() / self.records.len() as f64
    }

    /// CSV export: `scan,full_array,label,est_phi_deg,err_deg`.
    pub fn to_csv(&self) -> String {
        let mut s = String::from("scan,full_array,label,est_phi_deg,err_deg\n");
        for r in &self.records {
            s.push_str(&format!(
                "{},{},{},{},{}\n",
                r.scan,
                r.full_array as u8,
                r.label.to_compact(),
                r.est_phi_deg,
                r.err_deg
            ));
        }
        s
    }
}

/// Cognitive scan loop: every `refresh_period` scans the radar runs
/// the full array, re-selects a subarray from that scan's covariance
/// features, then operates the subarray on the scans between.
#[allow(clippy::too_many_arguments)]
pub fn run_scan_loop(
    g: &ArrayGeometry<f64>,
    policy: &SelectionPolicy<'_>,
    trajectory: &[Direction<f64>],
    refresh_period: usize,
    k: usize,
    snr_db: f64,
    snapshots: usize,
    grid_step_deg: f64,
    sector: &Sector,
    crb: &CrbOptions,
    seed: u64,
) -> Result<ScanLog> {
    if refresh_period == 0 {
        return Err(Error::Validation("refresh_period must be >= 1".into()));
    }
    let mut current = SubarrayLabel::full(g.len());
    let mut records = Vec::with_capacity(trajectory.len());

    for (scan, &truth) in trajectory.iter().enumerate() {
        let ids = [scan as u64];
        let snaps = simulate_snapshots(g, truth, snr_db, snapshots, derive_seed(seed, "scan", &ids));
        let full_scan = scan % refresh_period == 0;

        let active = if full_scan {
            let full_cov = sample_covariance(snaps.samples());
            current = policy.select(
                g,
                k,
                &full_cov,
                truth,
                snr_db,
                snapshots,
                crb,
                derive_seed(seed, "scan-ras", &ids),
            )?;
            SubarrayLabel::full(g.len())
        } else {
            current.clone()
        };

        let sub_geometry = g.restrict(&active)?;
        let sub_cov = sample_covariance(snaps.restrict(&active)?.samples());
        let (grid, cyclic) = sector.search_grid(grid_step_deg)?;
        let spectrum = music_spectrum(&sub_cov, &sub_geometry, 1, grid, cyclic)?;
        let peaks = find_peaks(&spectrum, 1)?;
        let est = peaks[0].phi_deg();
        records.push(ScanRecord {
            scan,
            full_array: full_scan,
            label: active,
            est_phi_deg: est,
            err_deg: wrap_deg(est - truth.phi_deg()),
        });
    }
    Ok(ScanLog { records })
}
