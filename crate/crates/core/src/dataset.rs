//! Labeled training corpora: P directions x L noisy realizations per
//! SNR, features from the full-array covariance, labels from the
//! per-realization CRB argmin. Candidates come either from exhaustive
//! enumeration or from an SA-generated candidate set. On-disk format
//! is a versioned little-endian binary with a trailing CRC32.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::bounds::{BoundCriterion, CovMode, CrbFormula, CrbOptions};
use crate::codec::{ByteReader, ByteWriter};
use crate::error::{Error, Result};
use crate::geometry::{ArrayGeometry, Direction, GeometryKind};
use crate::rng::{derive_seed, Stream};
use crate::sa2d::CandidateSet;
use crate::selection::{
    best_in_pool, binomial, default_tie_tolerance, enumerate_subarrays, ClassCatalog,
    SubarrayLabel, DEFAULT_ENUMERATION_BUDGET,
};
use crate::simulation::{covariance_features, sample_covariance, simulate_snapshots,
    CovarianceFeatures};

const MAGIC: &[u8; 4] = b"DKDS";
const FORMAT_VERSION: u32 = 1;

/// Where labeling candidates come from.
pub enum LabelSource<'a> {
    /// All binom(M, K) subarrays, capped by the enumeration budget.
    Exhaustive { budget: u128 },
    /// An SA-generated candidate pool on the same parent geometry.
    Candidates(&'a CandidateSet<f64>),
}

impl LabelSource<'_> {
    pub fn exhaustive() -> Self {
        LabelSource::Exhaustive {
            budget: DEFAULT_ENUMERATION_BUDGET,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum GeneratorTag {
    Exhaustive,
    Sa,
}

/// How the P training directions are drawn inside the azimuth sector.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DirectionSampling {
    /// Equally spaced over [phi_start, phi_end] inclusive.
    Grid,
    /// Uniform random in [phi_start, phi_end) (prediction-time draw).
    Random,
}

/// Fixed-elevation azimuth sector the corpus covers (degrees).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Sector {
    pub theta_deg: f64,
    pub phi_start_deg: f64,
    pub phi_end_deg: f64,
}

impl Default for Sector {
    /// Azimuth sweep over the full circle at 60 degrees elevation
    /// (planar arrays have no elevation aperture at 90).
    fn default() -> Self {
        Sector {
            theta_deg: 60.0,
            phi_start_deg: 0.0,
            phi_end_deg: 359.0,
        }
    }
}

impl Sector {
    pub fn direction(&self, sampling: DirectionSampling, p: usize, count: usize, seed: u64)
        -> Result<Direction<f64>>
    {
        let phi = match sampling {
            DirectionSampling::Grid => {
                if count <= 1 {
                    0.5 * (self.phi_start_deg + self.phi_end_deg)
                } else {
                    self.phi_start_deg
                        + (self.phi_end_deg - self.phi_start_deg) * p as f64 / (count - 1) as f64
                }
            }
            DirectionSampling::Random => {
                let mut s = Stream::derived(seed, "direction", &[p as u64]);
                s.uniform_in(self.phi_start_deg, self.phi_end_deg)
            }
        };
        Direction::from_degrees(self.theta_deg, phi)
    }

    pub fn grid(&self, count: usize) -> Result<Vec<Direction<f64>>> {
        (0..count)
            .map(|p| self.direction(DirectionSampling::Grid, p, count, 0))
            .collect()
    }
}

/// Generation metadata carried with every corpus.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetMeta {
    pub kind: GeometryKind,
    pub wavelength: f64,
    pub positions: Vec<[f64; 3]>,
    pub k: usize,
    pub directions: usize,
    pub realizations: usize,
    pub snapshots: usize,
    pub snr_list: Vec<f64>,
    pub seed: u64,
    pub generator: GeneratorTag,
    pub crb: CrbOptions,
    pub sector: Sector,
    pub sampling: DirectionSampling,
}

impl DatasetMeta {
    pub fn num_sensors(&self) -> usize {
        self.positions.len()
    }

    pub fn geometry(&self) -> Result<ArrayGeometry<f64>> {
        ArrayGeometry::custom(self.positions.clone(), self.wavelength)
    }
}

/// Feature/label pairs plus the catalog they index into. Stored order
/// is generation order (snr-major, then direction, then realization);
/// shuffling is the trainer's job.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainingDataset {
    pub features: Vec<CovarianceFeatures<f32>>,
    pub labels: Vec<u32>,
    pub catalog: ClassCatalog,
    pub meta: DatasetMeta,
}

impl TrainingDataset {
    pub fn len(&self) -> usize {
        self.features.len()
    }

    pub fn is_empty(&self) -> bool {
        self.features.is_empty()
    }

    pub fn label_of(&self, i: usize) -> &SubarrayLabel {
        &self.catalog.best[self.labels[i] as usize]
    }

    /// Per-class sample counts.
    pub fn class_histogram(&self) -> Vec<usize> {
        let mut h = vec![0usize; self.catalog.num_classes()];
        for &l in &self.labels {
            h[l as usize] += 1;
        }
        h
    }
}

#[allow(clippy::too_many_arguments)]
pub fn generate_training_data(
    g: &ArrayGeometry<f64>,
    k: usize,
    directions: usize,
    realizations: usize,
    snapshots: usize,
    snr_list: &[f64],
    seed: u64,
    label_source: LabelSource<'_>,
    crb: &CrbOptions,
    sector: &Sector,
    sampling: DirectionSampling,
) -> Result<TrainingDataset> {
    generate_training_data_with_tolerance(
        g,
        k,
        directions,
        realizations,
        snapshots,
        snr_list,
        seed,
        label_source,
        crb,
        sector,
        sampling,
        None,
    )
}

/// As [`generate_training_data`], with an explicit CRB tie tolerance
/// (`None` uses the per-mode default).
#[allow(clippy::too_many_arguments)]
pub fn generate_training_data_with_tolerance(
    g: &ArrayGeometry<f64>,
    k: usize,
    directions: usize,
    realizations: usize,
    snapshots: usize,
    snr_list: &[f64],
    seed: u64,
    label_source: LabelSource<'_>,
    crb: &CrbOptions,
    sector: &Sector,
    sampling: DirectionSampling,
    tie_tolerance: Option<f64>,
) -> Result<TrainingDataset> {
    if directions == 0 || realizations == 0 || snapshots == 0 || snr_list.is_empty() {
        return Err(Error::Validation(
            "directions, realizations, snapshots and snr list must be nonempty".into(),
        ));
    }
    let m = g.len();
    let (candidates, generator): (Vec<SubarrayLabel>, GeneratorTag) = match label_source {
        LabelSource::Exhaustive { budget } => {
            let count = binomial(m, k);
            if count > budget {
                return Err(Error::BudgetExceeded {
                    candidates: count,
                    budget,
                });
            }
            (
                enumerate_subarrays(m, k)?.collect(),
                GeneratorTag::Exhaustive,
            )
        }
        LabelSource::Candidates(set) => {
            if set.parent.positions() != g.positions() {
                return Err(Error::Validation(
                    "candidate set was generated for a different parent geometry".into(),
                ));
            }
            for l in &set.labels {
                if l.size() != k {
                    return Err(Error::Validation(format!(
                        "candidate {} has size {} != K = {k}",
                        l.to_compact(),
                        l.size()
                    )));
                }
            }
            (set.labels.clone(), GeneratorTag::Sa)
        }
    };

    let tie_tol = tie_tolerance.unwrap_or_else(|| default_tie_tolerance(crb));
    let n = snr_list.len() * directions * realizations;

    // One derived stream per (snr, direction, realization) task keeps
    // generation order-independent of the parallel schedule.
    let samples: Vec<(CovarianceFeatures<f32>, SubarrayLabel)> = (0..n)
        .into_par_iter()
        .map(|flat| {
            let s_idx = flat / (directions * realizations);
            let rem = flat % (directions * realizations);
            let p = rem / realizations;
            let l = rem % realizations;
            let snr_db = snr_list[s_idx];
            let d = sector.direction(sampling, p, directions, seed)?;
            let sample_seed = derive_seed(seed, "dataset", &[s_idx as u64, p as u64, l as u64]);

            let snaps = simulate_snapshots(g, d, snr_db, snapshots, sample_seed);
            let full_cov = sample_covariance(snaps.samples());
            let features = covariance_features(&full_cov).cast::<f32>();

            let cov_arg = match crb.mode {
                CovMode::Empirical => Some(&full_cov),
                CovMode::Asymptotic => None,
            };
            let (label, _) = best_in_pool(
                g, &candidates, d, snr_db, snapshots, cov_arg, crb, tie_tol,
            )?;
            Ok((features, label))
        })
        .collect::<Result<Vec<_>>>()?;

    // Classes are the distinct realized labels, sorted for stable ids.
    let mut best: Vec<SubarrayLabel> = samples.iter().map(|(_, l)| l.clone()).collect();
    best.sort();
    best.dedup();
    let catalog = ClassCatalog {
        all: candidates,
        best,
        crb_tolerance: tie_tol,
    };

    let mut features = Vec::with_capacity(n);
    let mut labels = Vec::with_capacity(n);
    for (f, l) in samples {
        let id = catalog
            .class_of(&l)
            .expect("realized label is in the catalog");
        features.push(f);
        labels.push(id as u32);
    }

    Ok(TrainingDataset {
        features,
        labels,
        catalog,
        meta: DatasetMeta {
            kind: g.kind(),
            wavelength: g.wavelength(),
            positions: g.positions().to_vec(),
            k,
            directions,
            realizations,
            snapshots,
            snr_list: snr_list.to_vec(),
            seed,
            generator,
            crb: *crb,
            sector: *sector,
            sampling,
        },
    })
}

/// Disjoint, exhaustive split by seeded shuffle. The train share is
/// `floor(fraction * N)` clamped to leave both sides nonempty.
pub fn split_train_val(
    ds: &TrainingDataset,
    fraction: f64,
    seed: u64,
) -> Result<(TrainingDataset, TrainingDataset)> {
    let n = ds.len();
    if n < 2 {
        return Err(Error::Validation("need at least 2 samples to split".into()));
    }
    if !(0.0..=1.0).contains(&fraction) {
        return Err(Error::Validation(format!("fraction {fraction} outside [0, 1]")));
    }
    let mut order: Vec<usize> = (0..n).collect();
    Stream::derived(seed, "split", &[]).shuffle(&mut order);
    let cut = ((fraction * n as f64).floor() as usize).clamp(1, n - 1);

    let pick = |ix: &[usize]| TrainingDataset {
        features: ix.iter().map(|&i| ds.features[i].clone()).collect(),
        labels: ix.iter().map(|&i| ds.labels[i]).collect(),
        catalog: ds.catalog.clone(),
        meta: ds.meta.clone(),
    };
    Ok((pick(&order[..cut]), pick(&order[cut..])))
}

pub fn save_dataset(ds: &TrainingDataset, path: &std::path::Path) -> Result<()> {
    let bytes = encode_dataset(ds)?;
    crate::runner::write_atomic(path, &bytes)
}

pub fn load_dataset(path: &std::path::Path) -> Result<TrainingDataset> {
    let bytes = std::fs::read(path)?;
    decode_dataset(&bytes)
}

pub fn encode_dataset(ds: &TrainingDataset) -> Result<Vec<u8>> {
    let m = ds.meta.num_sensors();
    let mut w = ByteWriter::new();
    w.raw(MAGIC);
    w.u32(FORMAT_VERSION);

    w.usize_as_u32(m)?;
    w.usize_as_u32(ds.meta.k)?;
    w.usize_as_u32(ds.meta.directions)?;
    w.usize_as_u32(ds.meta.realizations)?;
    w.usize_as_u32(ds.meta.snapshots)?;
    w.usize_as_u32(ds.meta.snr_list.len())?;
    for &s in &ds.meta.snr_list {
        w.f64(s);
    }
    w.u64(ds.meta.seed);
    w.u8(match ds.meta.generator {
        GeneratorTag::Exhaustive => 0,
        GeneratorTag::Sa => 1,
    });
    w.u8(match ds.meta.crb.mode {
        CovMode::Asymptotic => 0,
        CovMode::Empirical => 1,
    });
    w.u8(match ds.meta.crb.criterion {
        BoundCriterion::Absolute => 0,
        BoundCriterion::Azimuth => 1,
        BoundCriterion::Elevation => 2,
    });
    w.u8(match ds.meta.crb.formula {
        CrbFormula::Fim => 0,
        CrbFormula::PerAngle => 1,
    });
    w.f64(ds.catalog.crb_tolerance);
    w.f64(ds.meta.sector.theta_deg);
    w.f64(ds.meta.sector.phi_start_deg);
    w.f64(ds.meta.sector.phi_end_deg);
    w.u8(match ds.meta.sampling {
        DirectionSampling::Grid => 0,
        DirectionSampling::Random => 1,
    });

    w.u8(match ds.meta.kind {
        GeometryKind::Ula => 0,
        GeometryKind::Uca => 1,
        GeometryKind::Ura => 2,
        GeometryKind::Rda => 3,
        GeometryKind::Custom => 4,
    });
    w.f64(ds.meta.wavelength);
    for p in &ds.meta.positions {
        w.f64(p[0]);
        w.f64(p[1]);
        w.f64(p[2]);
    }

    let write_labels = |w: &mut ByteWriter, labels: &[SubarrayLabel]| -> Result<()> {
        w.usize_as_u32(labels.len())?;
        for l in labels {
            for &i in l.indices() {
                w.usize_as_u32(i)?;
            }
        }
        Ok(())
    };
    write_labels(&mut w, &ds.catalog.all)?;
    write_labels(&mut w, &ds.catalog.best)?;

    w.usize_as_u32(ds.len())?;
    for f in &ds.features {
        if f.size() != m {
            return Err(Error::ShapeMismatch(format!(
                "feature tensor is {}x{} but geometry has {m} sensors",
                f.size(),
                f.size()
            )));
        }
        for &v in f.data() {
            w.f32(v);
        }
    }
    for &l in &ds.labels {
        w.u32(l);
    }

    Ok(w.finish_with_crc())
}

/// Channel structure of a stored feature tensor: Re symmetric, Im
/// antisymmetric, phase in (-pi, pi] (with one f32 ulp of slack).
fn validate_feature_channels(f: &CovarianceFeatures<f32>) -> std::result::Result<(), String> {
    let m = f.size();
    let pi_hi = std::f32::consts::PI + 1e-6;
    for i in 0..m {
        for j in 0..m {
            if f.get(0, i, j) != f.get(0, j, i) {
                return Err(format!("Re channel not symmetric at ({i},{j})"));
            }
            if f.get(1, i, j) != -f.get(1, j, i) {
                return Err(format!("Im channel not antisymmetric at ({i},{j})"));
            }
            let ang = f.get(2, i, j);
            if !(-pi_hi..=pi_hi).contains(&ang) {
                return Err(format!("phase channel out of range at ({i},{j}): {ang}"));
            }
        }
    }
    Ok(())
}

pub fn decode_dataset(bytes: &[u8]) -> Result<TrainingDataset> {
    let mut r = ByteReader::with_crc(bytes, "dataset")?;
    r.expect_magic(MAGIC)?;
    let version = r.u32()?;
    if version != FORMAT_VERSION {
        return Err(Error::DatasetFormat(format!(
            "format version {version}, this build reads {FORMAT_VERSION}"
        )));
    }

    let m = r.len_u32()?;
    let k = r.len_u32()?;
    let directions = r.len_u32()?;
    let realizations = r.len_u32()?;
    let snapshots = r.len_u32()?;
    let n_snr = r.len_u32()?;
    let snr_list: Vec<f64> = (0..n_snr).map(|_| r.f64()).collect::<Result<_>>()?;
    let seed = r.u64()?;
    let generator = match r.u8()? {
        0 => GeneratorTag::Exhaustive,
        1 => GeneratorTag::Sa,
        v => return Err(Error::DatasetFormat(format!("bad generator tag {v}"))),
    };
    let mode = match r.u8()? {
        0 => CovMode::Asymptotic,
        1 => CovMode::Empirical,
        v => return Err(Error::DatasetFormat(format!("bad mode tag {v}"))),
    };
    let criterion = match r.u8()? {
        0 => BoundCriterion::Absolute,
        1 => BoundCriterion::Azimuth,
        2 => BoundCriterion::Elevation,
        v => return Err(Error::DatasetFormat(format!("bad criterion tag {v}"))),
    };
    let formula = match r.u8()? {
        0 => CrbFormula::Fim,
        1 => CrbFormula::PerAngle,
        v => return Err(Error::DatasetFormat(format!("bad formula tag {v}"))),
    };
    let crb_tolerance = r.f64()?;
    let sector = Sector {
        theta_deg: r.f64()?,
        phi_start_deg: r.f64()?,
        phi_end_deg: r.f64()?,
    };
    let sampling = match r.u8()? {
        0 => DirectionSampling::Grid,
        1 => DirectionSampling::Random,
        v => return Err(Error::DatasetFormat(format!("bad sampling tag {v}"))),
    };

    let kind = match r.u8()? {
        0 => GeometryKind::Ula,
        1 => GeometryKind::Uca,
        2 => GeometryKind::Ura,
        3 => GeometryKind::Rda,
        4 => GeometryKind::Custom,
        v => return Err(Error::DatasetFormat(format!("bad geometry kind {v}"))),
    };
    let wavelength = r.f64()?;
    let positions: Vec<[f64; 3]> = (0..m)
        .map(|_| Ok([r.f64()?, r.f64()?, r.f64()?]))
        .collect::<Result<_>>()?;

    let read_labels = |r: &mut ByteReader| -> Result<Vec<SubarrayLabel>> {
        let count = r.len_u32()?;
        (0..count)
            .map(|_| {
                let idx: Vec<usize> = (0..k).map(|_| r.len_u32()).collect::<Result<_>>()?;
                SubarrayLabel::new(idx, m)
                    .map_err(|e| Error::DatasetFormat(format!("bad stored label: {e}")))
            })
            .collect()
    };
    let all = read_labels(&mut r)?;
    let best = read_labels(&mut r)?;
    if !best.windows(2).all(|w| w[0] < w[1]) {
        return Err(Error::DatasetFormat("best labels not sorted".into()));
    }
    for b in &best {
        if !all.contains(b) {
            return Err(Error::DatasetFormat(format!(
                "best label {} is not in the candidate pool",
                b.to_compact()
            )));
        }
    }

    let n = r.len_u32()?;
    if n != directions * realizations * n_snr {
        return Err(Error::DatasetFormat(format!(
            "sample count {n} != P*L*|snr| = {}",
            directions * realizations * n_snr
        )));
    }
    let mut features = Vec::with_capacity(n);
    for sample in 0..n {
        let data: Vec<f32> = (0..3 * m * m).map(|_| r.f32()).collect::<Result<_>>()?;
        let f = CovarianceFeatures::from_raw(m, data)?;
        validate_feature_channels(&f)
            .map_err(|e| Error::DatasetFormat(format!("sample {sample}: {e}")))?;
        features.push(f);
    }
    let labels: Vec<u32> = (0..n).map(|_| r.u32()).collect::<Result<_>>()?;
    for &l in &labels {
        if l as usize >= best.len() {
            return Err(Error::DatasetFormat(format!(
                "label id {l} outside catalog of {} classes",
                best.len()
            )));
        }
    }
    r.done()?;

    Ok(TrainingDataset {
        features,
        labels,
        catalog: ClassCatalog {
            all,
            best,
            crb_tolerance,
        },
        meta: DatasetMeta {
            kind,
            wavelength,
            positions,
            k,
            directions,
            realizations,
            snapshots,
            snr_list,
            seed,
            generator,
            crb: CrbOptions {
                mode,
                criterion,
                formula,
            },
            sector,
            sampling,
        },
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::selection::best_subarray;
    use crate::simulation::{sample_covariance, simulate_snapshots};

    type G = ArrayGeometry<f64>;

    fn small_dataset(seed: u64) -> TrainingDataset {
        let g = G::uca(5, 0.8, 1.0).unwrap();
        generate_training_data(
            &g,
            3,
            4,
            3,
            32,
            &[15.0, 20.0],
            seed,
            LabelSource::exhaustive(),
            &CrbOptions::default(),
            &Sector::default(),
            DirectionSampling::Grid,
        )
        .unwrap()
    }

    #[test]
    fn sample_count_and_label_validity() {
        let ds = small_dataset(3);
        assert_eq!(ds.len(), 2 * 4 * 3);
        assert!(ds.labels.iter().all(|&l| (l as usize) < ds.catalog.num_classes()));
        assert_eq!(ds.class_histogram().iter().sum::<usize>(), ds.len());
        assert_eq!(ds.catalog.all.len() as u128, binomial(5, 3));
    }

    #[test]
    fn degenerate_sizes_single_sample() {
        let g = G::uca(4, 0.7, 1.0).unwrap();
        let ds = generate_training_data(
            &g,
            3,
            1,
            1,
            16,
            &[20.0],
            9,
            LabelSource::exhaustive(),
            &CrbOptions::default(),
            &Sector::default(),
            DirectionSampling::Grid,
        )
        .unwrap();
        assert_eq!(ds.len(), 1);

        // The stored label equals best_subarray on the same realization.
        let d = Sector::default().direction(DirectionSampling::Grid, 0, 1, 9).unwrap();
        let sample_seed = derive_seed(9, "dataset", &[0, 0, 0]);
        let snaps = simulate_snapshots(&g, d, 20.0, 16, sample_seed);
        let cov = sample_covariance(snaps.samples());
        let (label, _) =
            best_subarray(&g, d, 3, 20.0, 16, Some(&cov), &CrbOptions::default()).unwrap();
        assert_eq!(ds.label_of(0), &label);
    }

    #[test]
    fn replay_reproduces_every_label() {
        let ds = small_dataset(21);
        let g = ds.meta.geometry().unwrap();
        let dirs = ds.meta.directions;
        let reals = ds.meta.realizations;
        for (flat, _) in ds.features.iter().enumerate() {
            let s_idx = flat / (dirs * reals);
            let rem = flat % (dirs * reals);
            let (p, l) = (rem / reals, rem % reals);
            let snr = ds.meta.snr_list[s_idx];
            let d = ds
                .meta
                .sector
                .direction(ds.meta.sampling, p, dirs, ds.meta.seed)
                .unwrap();
            let sample_seed =
                derive_seed(ds.meta.seed, "dataset", &[s_idx as u64, p as u64, l as u64]);
            let snaps = simulate_snapshots(&g, d, snr, ds.meta.snapshots, sample_seed);
            let cov = sample_covariance(snaps.samples());
            let (label, _) = best_in_pool(
                &g,
                &ds.catalog.all,
                d,
                snr,
                ds.meta.snapshots,
                Some(&cov),
                &ds.meta.crb,
                ds.catalog.crb_tolerance,
            )
            .unwrap();
            assert_eq!(ds.label_of(flat), &label, "sample {flat}");
        }
    }

    #[test]
    fn generation_is_deterministic() {
        let a = small_dataset(5);
        let b = small_dataset(5);
        assert_eq!(a, b);
        let bytes_a = encode_dataset(&a).unwrap();
        let bytes_b = encode_dataset(&b).unwrap();
        assert_eq!(bytes_a, bytes_b, "byte-identical files");
        let c = small_dataset(6);
        assert_ne!(a, c);
    }

    #[test]
    fn split_sizes_and_exhaustiveness() {
        let ds = small_dataset(8);
        let (train, val) = split_train_val(&ds, 0.8, 1).unwrap();
        assert_eq!(train.len(), (0.8 * ds.len() as f64).floor() as usize);
        assert_eq!(train.len() + val.len(), ds.len());

        // Union of splits is the original multiset of (feature, label).
        let key = |d: &TrainingDataset, i: usize| {
            (
                d.features[i].data().iter().map(|f| f.to_bits()).collect::<Vec<_>>(),
                d.labels[i],
            )
        };
        let mut orig: Vec<_> = (0..ds.len()).map(|i| key(&ds, i)).collect();
        let mut merged: Vec<_> = (0..train.len())
            .map(|i| key(&train, i))
            .chain((0..val.len()).map(|i| key(&val, i)))
            .collect();
        orig.sort();
        merged.sort();
        assert_eq!(orig, merged);

        // 10-sample dataset splits 8/2.
        let g = G::uca(4, 0.7, 1.0).unwrap();
        let ten = generate_training_data(
            &g, 3, 5, 2, 16, &[20.0], 2,
            LabelSource::exhaustive(),
            &CrbOptions::default(),
            &Sector::default(),
            DirectionSampling::Grid,
        )
        .unwrap();
        let (tr, va) = split_train_val(&ten, 0.8, 0).unwrap();
        assert_eq!((tr.len(), va.len()), (8, 2));
    }

    #[test]
    fn split_class_proportions_roughly_preserved() {
        let g = G::uca(5, 0.8, 1.0).unwrap();
        let ds = generate_training_data(
            &g, 3, 25, 20, 24, &[20.0], 4,
            LabelSource::exhaustive(),
            &CrbOptions::default(),
            &Sector::default(),
            DirectionSampling::Grid,
        )
        .unwrap();
        assert!(ds.len() >= 500);
        let (train, val) = split_train_val(&ds, 0.8, 3).unwrap();
        let freq = |d: &TrainingDataset| {
            let h = d.class_histogram();
            h.iter().map(|&c| c as f64 / d.len() as f64).collect::<Vec<_>>()
        };
        let (f_all, f_tr, f_va) = (freq(&ds), freq(&train), freq(&val));
        for c in 0..ds.catalog.num_classes() {
            assert!((f_tr[c] - f_all[c]).abs() < 0.10, "train class {c}");
            assert!((f_va[c] - f_all[c]).abs() < 0.10, "val class {c}");
        }
    }

    #[test]
    fn file_roundtrip_is_lossless() {
        let ds = small_dataset(13);
        let dir = std::env::temp_dir().join(format!("doakit-ds-{}", std::process::id()));
        std::fs::create_dir_all(&dir).unwrap();
        let path = dir.join("roundtrip.dkds");
        save_dataset(&ds, &path).unwrap();
        let back = load_dataset(&path).unwrap();
        assert_eq!(ds, back);
        std::fs::remove_dir_all(&dir).ok();
    }

    #[test]
    fn corrupted_file_fails_checksum() {
        let ds = small_dataset(1);
        let mut bytes = encode_dataset(&ds).unwrap();
        let mid = bytes.len() / 2;
        bytes[mid] ^= 0xff;
        match decode_dataset(&bytes) {
            Err(Error::DatasetFormat(msg)) => assert!(msg.contains("checksum")),
            other => panic!("expected checksum failure, got {other:?}"),
        }
    }

    #[test]
    fn truncated_and_mismatched_files_rejected() {
        let ds = small_dataset(1);
        let bytes = encode_dataset(&ds).unwrap();
        assert!(decode_dataset(&bytes[..bytes.len() - 9]).is_err());

        // Flip the sample-count-consistency fields: a file claiming a
        // different shape than its payload must fail validation even
        // with a recomputed checksum.
        let mut body = bytes[..bytes.len() - 4].to_vec();
        // directions field lives after magic(4)+version(4)+m(4)+k(4).
        body[16] = body[16].wrapping_add(1);
        let mut w = ByteWriter::new();
        w.raw(&body);
        let forged = w.finish_with_crc();
        assert!(decode_dataset(&forged).is_err());
    }

    #[test]
    fn sa_candidate_source_restricts_labels() {
        // Short schedule so independent restarts stay diverse.
        let parent = G::ura(4, 4, 0.5, 1.0).unwrap();
        let set = crate::sa2d::generate_candidates(
            &parent,
            6,
            5,
            &crate::sa2d::SaConfig {
                seed: 3,
                iterations: 8,
                moves_per_temperature: 10,
                ..Default::default()
            },
        )
        .unwrap();
        let ds = generate_training_data(
            &parent,
            6,
            3,
            2,
            24,
            &[20.0],
            7,
            LabelSource::Candidates(&set),
            &CrbOptions::default(),
            &Sector::default(),
            DirectionSampling::Grid,
        )
        .unwrap();
        assert_eq!(ds.meta.generator, GeneratorTag::Sa);
        assert_eq!(ds.catalog.all, set.labels);
        for i in 0..ds.len() {
            assert!(set.labels.contains(ds.label_of(i)));
        }
    }
}
