//! Narrowband single-source snapshot simulation, sample covariance and
//! the 3-channel covariance features consumed by the classifier.

use num_complex::Complex;

use crate::error::{Error, Result};
use crate::geometry::{steering_vector, ArrayGeometry, Direction};
use crate::linalg::{CMat, Cx};
use crate::rng::Stream;
use crate::scalar::Scalar;
use crate::selection::SubarrayLabel;

/// Noise variance for unit signal power: `sigma_n^2 = 10^(-snr/10)`.
/// `snr_db = +inf` turns the noise off.
pub fn noise_variance(snr_db: f64) -> f64 {
    if snr_db.is_infinite() && snr_db > 0.0 {
        0.0
    } else {
        10f64.powf(-snr_db / 10.0)
    }
}

/// T complex array-output vectors from one source plus white noise.
#[derive(Debug, Clone, PartialEq)]
pub struct SnapshotSet<T: Scalar = f64> {
    samples: Vec<Vec<Cx<T>>>,
    pub truth: Direction<T>,
    pub snr_db: f64,
    pub seed: u64,
}

impl<T: Scalar> SnapshotSet<T> {
    pub fn samples(&self) -> &[Vec<Cx<T>>] {
        &self.samples
    }

    pub fn num_snapshots(&self) -> usize {
        self.samples.len()
    }

    pub fn num_sensors(&self) -> usize {
        self.samples.first().map_or(0, Vec::len)
    }

    /// Keep only the selected sensor rows of every snapshot.
    pub fn restrict(&self, sel: &SubarrayLabel) -> Result<SnapshotSet<T>> {
        let m = self.num_sensors();
        sel.check_range(m)?;
        let samples = self
            .samples
            .iter()
            .map(|y| sel.indices().iter().map(|&i| y[i]).collect())
            .collect();
        Ok(SnapshotSet {
            samples,
            truth: self.truth,
            snr_db: self.snr_db,
            seed: self.seed,
        })
    }
}

/// Simulate `y(t_i) = a(d) s_i + n_i` with circular complex Gaussian
/// `s_i ~ CN(0, 1)` and `n_i ~ CN(0, sigma_n^2 I)`. Deterministic given
/// `seed`; the stream is derived as `(seed, "snapshots")`.
pub fn simulate_snapshots<T: Scalar>(
    g: &ArrayGeometry<T>,
    d: Direction<T>,
    snr_db: f64,
    num_snapshots: usize,
    seed: u64,
) -> SnapshotSet<T> {
    assert!(num_snapshots >= 1, "need at least one snapshot");
    let a = steering_vector(g, d);
    let var_n = noise_variance(snr_db);
    let mut stream = Stream::derived(seed, "snapshots", &[]);

    let samples = (0..num_snapshots)
        .map(|_| {
            let (sr, si) = stream.complex_normal(1.0);
            let s = Complex::new(T::of(sr), T::of(si));
            a.entries()
                .iter()
                .map(|am| {
                    let mut y = *am * s;
                    if var_n > 0.0 {
                        let (nr, ni) = stream.complex_normal(var_n);
                        y += Complex::new(T::of(nr), T::of(ni));
                    }
                    y
                })
                .collect()
        })
        .collect();

    SnapshotSet {
        samples,
        truth: d,
        snr_db,
        seed,
    }
}

/// Hermitian sample covariance `R = (1/T) sum y y^H`.
#[derive(Debug, Clone, PartialEq)]
pub struct CovarianceMatrix<T: Scalar = f64> {
    mat: CMat<T>,
}

impl<T: Scalar> CovarianceMatrix<T> {
    /// Wrap a matrix, symmetrizing out rounding (defect must be tiny).
    pub fn from_matrix(mat: CMat<T>) -> Result<Self> {
        let scale = mat.trace_re().abs() + T::of(1e-300);
        if mat.hermitian_defect() > T::of(1e-9) * scale {
            return Err(Error::Validation(
                "matrix is not Hermitian within tolerance".into(),
            ));
        }
        Ok(CovarianceMatrix { mat })
    }

    pub fn size(&self) -> usize {
        self.mat.size()
    }

    pub fn matrix(&self) -> &CMat<T> {
        &self.mat
    }

    pub fn entry(&self, i: usize, j: usize) -> Cx<T> {
        self.mat[(i, j)]
    }

    /// Principal submatrix on the selected sensors.
    pub fn restrict(&self, sel: &SubarrayLabel) -> Result<CovarianceMatrix<T>> {
        Ok(CovarianceMatrix {
            mat: self.mat.principal_submatrix(sel.indices())?,
        })
    }

    /// Smallest eigenvalue (for PSD checks).
    pub fn min_eigenvalue(&self) -> T {
        let (vals, _) = crate::linalg::eigh(&self.mat);
        vals[0]
    }
}

/// Average of snapshot outer products.
pub fn sample_covariance<T: Scalar>(snapshots: &[Vec<Cx<T>>]) -> CovarianceMatrix<T> {
    assert!(!snapshots.is_empty(), "sample_covariance of no snapshots");
    let m = snapshots[0].len();
    let mut mat = CMat::zeros(m);
    let w = T::one() / T::of(snapshots.len() as f64);
    for y in snapshots {
        assert_eq!(y.len(), m, "ragged snapshot set");
        mat.add_scaled_outer(y, w);
    }
    // Outer-product sums are Hermitian by construction up to rounding;
    // fold the defect away so downstream checks see exact symmetry.
    for i in 0..m {
        mat[(i, i)] = Cx::new(mat[(i, i)].re, T::zero());
        for j in i + 1..m {
            let avg = (mat[(i, j)] + mat[(j, i)].conj()) * Cx::new(T::of(0.5), T::zero());
            mat[(i, j)] = avg;
            mat[(j, i)] = avg.conj();
        }
    }
    CovarianceMatrix { mat }
}

/// Model covariance `sigma_s^2 a a^H + sigma_n^2 I` (the infinite-
/// snapshot limit used by asymptotic-mode labeling).
pub fn asymptotic_covariance<T: Scalar>(
    g: &ArrayGeometry<T>,
    d: Direction<T>,
    snr_db: f64,
) -> CovarianceMatrix<T> {
    let a = steering_vector(g, d);
    let mut mat = CMat::zeros(g.len());
    mat.add_scaled_outer(a.entries(), T::one());
    mat.add_diagonal(T::of(noise_variance(snr_db)));
    CovarianceMatrix { mat }
}

/// M x M x 3 real tensor of Re/Im/angle of a covariance matrix,
/// stored channel-major: `data[ch * m * m + i * m + j]`.
#[derive(Debug, Clone, PartialEq)]
pub struct CovarianceFeatures<T: Scalar = f64> {
    m: usize,
    data: Vec<T>,
}

impl<T: Scalar> CovarianceFeatures<T> {
    pub fn size(&self) -> usize {
        self.m
    }

    pub fn data(&self) -> &[T] {
        &self.data
    }

    pub fn get(&self, ch: usize, i: usize, j: usize) -> T {
        self.data[ch * self.m * self.m + i * self.m + j]
    }

    pub fn from_raw(m: usize, data: Vec<T>) -> Result<Self> {
        if data.len() != 3 * m * m {
            return Err(Error::ShapeMismatch(format!(
                "feature tensor needs {} values for M={m}, got {}",
                3 * m * m,
                data.len()
            )));
        }
        Ok(CovarianceFeatures { m, data })
    }

    /// Cast the element type (used when freezing f64 pipelines to the
    /// f32 on-disk format).
    pub fn cast<U: Scalar>(&self) -> CovarianceFeatures<U> {
        CovarianceFeatures {
            m: self.m,
            data: self.data.iter().map(|&x| U::of(x.as_f64())).collect(),
        }
    }
}

/// Stack Re, Im and phase channels of a covariance matrix. The phase
/// uses `atan2` with `angle(0) = 0` and values normalized to
/// `(-pi, pi]`.
pub fn covariance_features<T: Scalar>(r: &CovarianceMatrix<T>) -> CovarianceFeatures<T> {
    let m = r.size();
    let mut data = vec![T::zero(); 3 * m * m];
    for i in 0..m {
        for j in 0..m {
            let z = r.entry(i, j);
            data[i * m + j] = z.re;
            data[m * m + i * m + j] = z.im;
            let ang = if z.re == T::zero() && z.im == T::zero() {
                T::zero()
            } else {
                let a = z.im.atan2(z.re);
                if a <= -T::PI() {
                    T::PI()
                } else {
                    a
                }
            };
            data[2 * m * m + i * m + j] = ang;
        }
    }
    CovarianceFeatures { m, data }
}
