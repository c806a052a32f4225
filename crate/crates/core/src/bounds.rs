//! Single-source Cramer-Rao bounds for (theta, phi) on a subarray and
//! the scalar absolute bound used to label training data.
//!
//! The authoritative evaluation inverts the 2x2 Fisher information
//! matrix of the concentrated single-source model,
//!
//! ```text
//! F_ij = (2 T / sigma_n^2) * Re{ [D^H P D]_ij } * sigma_s^4 a^H R^-1 a,
//! ```
//!
//! with `D = [da/dtheta, da/dphi]` and `P = I - a a^H / K`. A second,
//! per-angle variant sometimes quoted for this model (whose
//! projector terms mix the theta and phi derivatives) is kept behind
//! [`CrbFormula::PerAngle`] for the `crb-diff` diagnostic; labeling
//! always uses the FIM path.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{steering_derivatives, steering_vector, ArrayGeometry, Direction};
use crate::linalg::{hermitian_solve, inner, Cx};
use crate::scalar::Scalar;
use crate::simulation::{asymptotic_covariance, noise_variance, CovarianceMatrix};

/// Which covariance enters the bound.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CovMode {
    /// Model covariance `sigma_s^2 a a^H + sigma_n^2 I`: deterministic
    /// labels for a given direction.
    Asymptotic,
    /// Per-realization sample covariance (the training-data recipe).
    Empirical,
}

/// Which scalar the argmin ranks subarrays by.
///
/// `Absolute` is the RMS of the jointly-estimated theta and phi bounds.
/// The single-angle variants treat the other angle as known, which is
/// the usable criterion for arrays with no aperture along one angle
/// (e.g. a ULA swept in azimuth at theta = pi/2, where the joint bound
/// is infinite by construction).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BoundCriterion {
    Absolute,
    Azimuth,
    Elevation,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CrbFormula {
    Fim,
    PerAngle,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CrbOptions {
    pub mode: CovMode,
    pub criterion: BoundCriterion,
    pub formula: CrbFormula,
}

impl Default for CrbOptions {
    fn default() -> Self {
        CrbOptions {
            mode: CovMode::Empirical,
            criterion: BoundCriterion::Absolute,
            formula: CrbFormula::Fim,
        }
    }
}

impl CrbOptions {
    pub fn asymptotic() -> Self {
        CrbOptions {
            mode: CovMode::Asymptotic,
            ..Default::default()
        }
    }
}

/// Variance bounds for the two angles plus the RMS scalar label
/// criterion.
/// Unidentifiable angles carry `+inf` so argmin logic stays total.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CrbResult<T: Scalar = f64> {
    pub kappa_theta: T,
    pub kappa_phi: T,
    pub kappa_abs: T,
}

impl<T: Scalar> CrbResult<T> {
    pub fn is_degenerate(&self) -> bool {
        !self.kappa_abs.is_finite()
    }

    /// The scalar the labeling argmin ranks by.
    pub fn criterion_value(&self, criterion: BoundCriterion) -> T {
        match criterion {
            BoundCriterion::Absolute => self.kappa_abs,
            BoundCriterion::Azimuth => self.kappa_phi,
            BoundCriterion::Elevation => self.kappa_theta,
        }
    }
}

/// RMS combination `(1/sqrt(2)) * sqrt(kt^2 + kp^2)`.
pub fn absolute_crb<T: Scalar>(kappa_theta: T, kappa_phi: T) -> T {
    ((kappa_theta * kappa_theta + kappa_phi * kappa_phi) / T::of(2.0)).sqrt()
}

// Noise-free labeling: the bound scales as sigma_n^2 while the argmin
// over subarrays converges; a tiny floor keeps values finite and keeps
// the ordering of the vanishing-noise limit.
const SIGMA_N_FLOOR: f64 = 1e-30;

/// Evaluate the bound for one subarray geometry and direction against a
/// given (already restricted) covariance. `sigma_s^2 = 1`;
/// `sigma_n^2` follows from `snr_db`.
pub fn crb_pair<T: Scalar>(
    g_sub: &ArrayGeometry<T>,
    d: Direction<T>,
    snr_db: f64,
    num_snapshots: usize,
    r_sub: &CovarianceMatrix<T>,
    opts: &CrbOptions,
) -> Result<CrbResult<T>> {
    let k = g_sub.len();
    if k < 2 {
        return Err(Error::InvalidSubarray(format!(
            "CRB needs K >= 2 sensors, got {k}"
        )));
    }
    if r_sub.size() != k {
        return Err(Error::ShapeMismatch(format!(
            "covariance is {}x{} but subarray has {k} sensors",
            r_sub.size(),
            r_sub.size()
        )));
    }

    let a = steering_vector(g_sub, d);
    let (da_dt, da_dp) = steering_derivatives(g_sub, d);

    // sigma_s^4 a^H R^-1 a (real for Hermitian R).
    let r_inv_a = hermitian_solve(r_sub.matrix(), a.entries())?;
    let s = inner(a.entries(), &r_inv_a).re;
    let var_n = T::of(noise_variance(snr_db).max(SIGMA_N_FLOOR));
    let c = T::of(2.0) * T::of(num_snapshots as f64) / var_n;

    // P v = v - a (a^H v)/K with a^H a = K for unit-modulus entries.
    let kf = T::of(k as f64);
    let project = |v: &[Cx<T>]| -> Vec<Cx<T>> {
        let coef = inner(a.entries(), v) / Cx::new(kf, T::zero());
        v.iter()
            .zip(a.entries())
            .map(|(vi, ai)| *vi - *ai * coef)
            .collect()
    };
    let p_dt = project(&da_dt);
    let p_dp = project(&da_dp);

    match opts.formula {
        CrbFormula::Fim => {
            let ftt = inner(&da_dt, &p_dt).re * s * c;
            let fpp = inner(&da_dp, &p_dp).re * s * c;
            let ftp = inner(&da_dt, &p_dp) * Cx::new(s * c, T::zero());
            Ok(invert_fim(ftt, fpp, ftp.re, opts.criterion))
        }
        CrbFormula::PerAngle => {
            // Literal per-angle denominators with the
            // cross-derivative projector terms, kept for diagnosis.
            let pi_theta = inner(&da_dt, &p_dp);
            let pi_phi = inner(&da_dp, &p_dt);
            let denom_t = (pi_theta * Cx::new(s, T::zero())).re * c;
            let denom_p = (pi_phi * Cx::new(s, T::zero())).re * c;
            let kt = per_angle(denom_t);
            let kp = per_angle(denom_p);
            Ok(CrbResult {
                kappa_theta: kt,
                kappa_phi: kp,
                kappa_abs: absolute_crb(kt, kp),
            })
        }
    }
}

fn per_angle<T: Scalar>(denom: T) -> T {
    if denom <= T::of(1e-300) || !denom.is_finite() {
        T::infinity()
    } else {
        T::one() / denom
    }
}

fn invert_fim<T: Scalar>(ftt: T, fpp: T, ftp: T, criterion: BoundCriterion) -> CrbResult<T> {
    match criterion {
        BoundCriterion::Azimuth => {
            let kp = per_angle(fpp);
            CrbResult {
                kappa_theta: T::infinity(),
                kappa_phi: kp,
                kappa_abs: kp,
            }
        }
        BoundCriterion::Elevation => {
            let kt = per_angle(ftt);
            CrbResult {
                kappa_theta: kt,
                kappa_phi: T::infinity(),
                kappa_abs: kt,
            }
        }
        BoundCriterion::Absolute => {
            let scale = ftt.abs().max(fpp.abs());
            let rel = T::of(1e-12);
            let det = ftt * fpp - ftp * ftp;
            let (kt, kp) = if scale <= T::of(1e-300) || det <= rel * scale * scale {
                (T::infinity(), T::infinity())
            } else {
                (fpp / det, ftt / det)
            };
            CrbResult {
                kappa_theta: kt,
                kappa_phi: kp,
                kappa_abs: absolute_crb(kt, kp),
            }
        }
    }
}

/// Bound for a candidate subarray of a parent array: restricts the
/// geometry, builds the mode-appropriate covariance and evaluates.
/// `full_cov` is the parent-array covariance of the current
/// realization; it is ignored in asymptotic mode.
pub fn crb_for_candidate<T: Scalar>(
    parent: &ArrayGeometry<T>,
    sel: &crate::selection::SubarrayLabel,
    d: Direction<T>,
    snr_db: f64,
    num_snapshots: usize,
    full_cov: Option<&CovarianceMatrix<T>>,
    opts: &CrbOptions,
) -> Result<CrbResult<T>> {
    let g_sub = parent.restrict(sel)?;
    let r_sub = match opts.mode {
        CovMode::Asymptotic => asymptotic_covariance(&g_sub, d, snr_db),
        CovMode::Empirical => full_cov
            .ok_or_else(|| {
                Error::Validation("empirical CRB mode needs a covariance realization".into())
            })?
            .restrict(sel)?,
    };
    crb_pair(&g_sub, d, snr_db, num_snapshots, &r_sub, opts)
}
