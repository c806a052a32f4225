//! Array geometries, steering vectors and their analytic derivatives.
//!
//! Angle conventions: `theta` is elevation measured from the +z axis
//! (`[0, pi]`), `phi` is azimuth in the x-y plane (`[0, 2*pi)`). All
//! angles are radians inside the library; degrees appear only at CLI
//! and file boundaries.

use num_complex::Complex;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::Cx;
use crate::scalar::Scalar;
use crate::selection::SubarrayLabel;

/// Generator family of an array layout.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum GeometryKind {
    Ula,
    Uca,
    Ura,
    Rda,
    Custom,
}

/// Sensor positions on a 3-D grid plus the operating wavelength.
#[derive(Debug, Clone, PartialEq)]
pub struct ArrayGeometry<T: Scalar = f64> {
    positions: Vec<[T; 3]>,
    kind: GeometryKind,
    wavelength: T,
}

/// A source bearing (elevation, azimuth) in radians.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Direction<T: Scalar = f64> {
    pub theta: T,
    pub phi: T,
}

impl<T: Scalar> Direction<T> {
    pub fn new(theta: T, phi: T) -> Result<Self> {
        if !(theta >= T::zero() && theta <= T::PI()) {
            return Err(Error::InvalidDirection(format!(
                "theta {theta} outside [0, pi]"
            )));
        }
        if !(phi >= T::zero() && phi < T::of(2.0) * T::PI()) {
            return Err(Error::InvalidDirection(format!(
                "phi {phi} outside [0, 2*pi)"
            )));
        }
        Ok(Direction { theta, phi })
    }

    /// Construct with azimuth wrapped into `[0, 2*pi)`.
    pub fn wrapped(theta: T, phi: T) -> Result<Self> {
        let two_pi = T::of(2.0) * T::PI();
        let mut p = phi % two_pi;
        if p < T::zero() {
            p += two_pi;
        }
        Direction::new(theta, p)
    }

    pub fn from_degrees(theta_deg: T, phi_deg: T) -> Result<Self> {
        let rad = T::PI() / T::of(180.0);
        Direction::wrapped(theta_deg * rad, phi_deg * rad)
    }

    pub fn theta_deg(&self) -> T {
        self.theta * T::of(180.0) / T::PI()
    }

    pub fn phi_deg(&self) -> T {
        self.phi * T::of(180.0) / T::PI()
    }
}

/// Unit propagation vector `r(theta, phi)`.
pub fn unit_direction<T: Scalar>(d: Direction<T>) -> [T; 3] {
    let (st, ct) = d.theta.sin_cos();
    let (sp, cp) = d.phi.sin_cos();
    [cp * st, sp * st, ct]
}

/// Recover the bearing from the spatial-harmonic triple
/// `(mu, nu, xi) = (cos phi sin theta, sin phi sin theta, cos theta)`:
/// `theta = acos(xi / |r|)`, `phi = atan2(nu, mu)`.
pub fn direction_from_harmonics<T: Scalar>(mu: T, nu: T, xi: T) -> Result<Direction<T>> {
    let norm = (mu * mu + nu * nu + xi * xi).sqrt();
    if norm == T::zero() {
        return Err(Error::InvalidDirection("zero harmonic vector".into()));
    }
    let theta = (xi / norm).clamp(-T::one(), T::one()).acos();
    let phi = nu.atan2(mu);
    Direction::wrapped(theta, phi)
}

/// Unit-modulus phase response of each sensor (one entry per sensor).
#[derive(Debug, Clone, PartialEq)]
pub struct SteeringVector<T: Scalar = f64> {
    entries: Vec<Cx<T>>,
}

impl<T: Scalar> SteeringVector<T> {
    pub fn entries(&self) -> &[Cx<T>] {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}

impl<T: Scalar> ArrayGeometry<T> {
    /// Arbitrary sensor layout. Positions must be pairwise distinct.
    pub fn custom(positions: Vec<[T; 3]>, wavelength: T) -> Result<Self> {
        Self::with_kind(positions, GeometryKind::Custom, wavelength)
    }

    fn with_kind(positions: Vec<[T; 3]>, kind: GeometryKind, wavelength: T) -> Result<Self> {
        if positions.is_empty() {
            return Err(Error::InvalidGeometry("no sensors".into()));
        }
        if wavelength <= T::zero() {
            return Err(Error::InvalidGeometry("wavelength must be positive".into()));
        }
        for i in 0..positions.len() {
            for j in i + 1..positions.len() {
                if distance(&positions[i], &positions[j]) <= T::zero() {
                    return Err(Error::CoincidentSensors(i, j));
                }
            }
        }
        Ok(ArrayGeometry {
            positions,
            kind,
            wavelength,
        })
    }

    /// Uniform linear array along x, first element at the origin.
    pub fn ula(m: usize, spacing: T, wavelength: T) -> Result<Self> {
        check_generator(m, spacing)?;
        let positions = (0..m)
            .map(|i| [spacing * T::of(i as f64), T::zero(), T::zero()])
            .collect();
        Self::with_kind(positions, GeometryKind::Ula, wavelength)
    }

    /// Uniform circular array in the x-y plane, centered at the origin.
    pub fn uca(m: usize, radius: T, wavelength: T) -> Result<Self> {
        check_generator(m, radius)?;
        let positions = (0..m)
            .map(|i| {
                let ang = T::of(2.0) * T::PI() * T::of(i as f64) / T::of(m as f64);
                [radius * ang.cos(), radius * ang.sin(), T::zero()]
            })
            .collect();
        Self::with_kind(positions, GeometryKind::Uca, wavelength)
    }

    /// UCA with the given circumferential (arc-length) inter-element
    /// spacing: radius = M * spacing / (2*pi).
    pub fn uca_from_spacing(m: usize, spacing: T, wavelength: T) -> Result<Self> {
        check_generator(m, spacing)?;
        let radius = T::of(m as f64) * spacing / (T::of(2.0) * T::PI());
        Self::uca(m, radius, wavelength)
    }

    /// Uniform rectangular array in the x-y plane (rows along y).
    pub fn ura(rows: usize, cols: usize, spacing: T, wavelength: T) -> Result<Self> {
        check_generator(rows * cols, spacing)?;
        let mut positions = Vec::with_capacity(rows * cols);
        for r in 0..rows {
            for c in 0..cols {
                positions.push([
                    spacing * T::of(c as f64),
                    spacing * T::of(r as f64),
                    T::zero(),
                ]);
            }
        }
        Self::with_kind(positions, GeometryKind::Ura, wavelength)
    }

    /// Randomly deployed array: uniform over a square aperture in the
    /// x-y plane with a lambda/4 minimum-separation rejection radius.
    pub fn rda(m: usize, aperture: T, wavelength: T, seed: u64) -> Result<Self> {
        check_generator(m, aperture)?;
        let min_sep = wavelength / T::of(4.0);
        let mut stream = crate::rng::Stream::derived(seed, "rda", &[m as u64]);
        let mut positions: Vec<[T; 3]> = Vec::with_capacity(m);
        let mut attempts = 0usize;
        while positions.len() < m {
            attempts += 1;
            if attempts > 10_000 * m {
                return Err(Error::AttemptsExhausted {
                    attempts,
                    context: "RDA placement with minimum-separation rejection".into(),
                });
            }
            let cand = [
                T::of(stream.uniform()) * aperture,
                T::of(stream.uniform()) * aperture,
                T::zero(),
            ];
            if positions.iter().all(|p| distance(p, &cand) >= min_sep) {
                positions.push(cand);
            }
        }
        Self::with_kind(positions, GeometryKind::Rda, wavelength)
    }

    /// Independent Gaussian jitter of every coordinate (std `sigma`).
    /// The result no longer satisfies a generator formula, so it is
    /// tagged `Custom`.
    pub fn perturbed(&self, sigma: T, seed: u64) -> Result<Self> {
        let mut stream = crate::rng::Stream::derived(seed, "perturb", &[]);
        let positions = self
            .positions
            .iter()
            .map(|p| {
                [
                    p[0] + sigma * T::of(stream.normal()),
                    p[1] + sigma * T::of(stream.normal()),
                    p[2] + sigma * T::of(stream.normal()),
                ]
            })
            .collect();
        Self::with_kind(positions, GeometryKind::Custom, self.wavelength)
    }

    /// Subarray on the selected sensors, preserving order.
    pub fn restrict(&self, sel: &SubarrayLabel) -> Result<Self> {
        let positions = sel
            .indices()
            .iter()
            .map(|&i| {
                self.positions
                    .get(i)
                    .copied()
                    .ok_or(Error::IndexOutOfRange {
                        index: i,
                        size: self.positions.len(),
                    })
            })
            .collect::<Result<Vec<_>>>()?;
        Self::with_kind(positions, GeometryKind::Custom, self.wavelength)
    }

    pub fn len(&self) -> usize {
        self.positions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.positions.is_empty()
    }

    pub fn positions(&self) -> &[[T; 3]] {
        &self.positions
    }

    pub fn kind(&self) -> GeometryKind {
        self.kind
    }

    pub fn wavelength(&self) -> T {
        self.wavelength
    }

    /// CSV export: `m,x,y,z` with a header row.
    pub fn to_csv(&self) -> String {
        let mut s = String::from("m,x,y,z\n");
        for (i, p) in self.positions.iter().enumerate() {
            s.push_str(&format!("{i},{},{},{}\n", p[0], p[1], p[2]));
        }
        s
    }
}

fn check_generator<T: Scalar>(m: usize, scale: T) -> Result<()> {
    if m < 2 {
        return Err(Error::InvalidGeometry(format!("M = {m} < 2")));
    }
    if scale <= T::zero() {
        return Err(Error::InvalidGeometry(
            "spacing/radius/aperture must be positive".into(),
        ));
    }
    Ok(())
}

fn distance<T: Scalar>(a: &[T; 3], b: &[T; 3]) -> T {
    let dx = a[0] - b[0];
    let dy = a[1] - b[1];
    let dz = a[2] - b[2];
    (dx * dx + dy * dy + dz * dz).sqrt()
}

/// Steering vector `a(Theta)`: entry m is
/// `exp(-j * 2*pi/lambda * p_m . r(Theta))`.
pub fn steering_vector<T: Scalar>(g: &ArrayGeometry<T>, d: Direction<T>) -> SteeringVector<T> {
    let r = unit_direction(d);
    let k = T::of(2.0) * T::PI() / g.wavelength();
    let entries = g
        .positions()
        .iter()
        .map(|p| {
            let phase = -k * (p[0] * r[0] + p[1] * r[1] + p[2] * r[2]);
            let (s, c) = phase.sin_cos();
            Complex::new(c, s)
        })
        .collect();
    SteeringVector { entries }
}

/// Analytic partial derivatives of the steering vector with respect to
/// elevation and azimuth.
pub fn steering_derivatives<T: Scalar>(
    g: &ArrayGeometry<T>,
    d: Direction<T>,
) -> (Vec<Cx<T>>, Vec<Cx<T>>) {
    let a = steering_vector(g, d);
    let k = T::of(2.0) * T::PI() / g.wavelength();
    let (st, ct) = d.theta.sin_cos();
    let (sp, cp) = d.phi.sin_cos();
    // dr/dtheta and dr/dphi of r = [cp*st, sp*st, ct].
    let dr_dt = [cp * ct, sp * ct, -st];
    let dr_dp = [-sp * st, cp * st, T::zero()];

    let mut da_dt = Vec::with_capacity(g.len());
    let mut da_dp = Vec::with_capacity(g.len());
    for (p, am) in g.positions().iter().zip(a.entries()) {
        let gt = k * (p[0] * dr_dt[0] + p[1] * dr_dt[1] + p[2] * dr_dt[2]);
        let gp = k * (p[0] * dr_dp[0] + p[1] * dr_dp[1]);
        // d/dx exp(-j k p.r) = -j * k * p.(dr/dx) * a_m
        da_dt.push(Complex::new(T::zero(), -gt) * am);
        da_dp.push(Complex::new(T::zero(), -gp) * am);
    }
    (da_dt, da_dp)
}

/// Declarative geometry block used by config files.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GeometryConfig {
    pub kind: GeometryKind,
    /// Total sensor count (for URA use `rows` x `cols` instead).
    #[serde(default)]
    pub m: Option<usize>,
    #[serde(default)]
    pub rows: Option<usize>,
    #[serde(default)]
    pub cols: Option<usize>,
    /// Inter-element spacing in wavelengths (ULA/URA, UCA arc length).
    #[serde(default)]
    pub spacing: Option<f64>,
    /// Circle radius in wavelengths (UCA; overrides `spacing`).
    #[serde(default)]
    pub radius: Option<f64>,
    /// Square aperture side in wavelengths (RDA).
    #[serde(default)]
    pub aperture: Option<f64>,
    /// Operating wavelength in meters.
    #[serde(default = "default_wavelength")]
    pub wavelength: f64,
    #[serde(default)]
    pub seed: Option<u64>,
    /// Gaussian position jitter std in wavelengths; produces a
    /// `custom`-tagged geometry.
    #[serde(default)]
    pub perturb_sigma: Option<f64>,
}

fn default_wavelength() -> f64 {
    1.0
}

impl GeometryConfig {
    pub fn build<T: Scalar>(&self) -> Result<ArrayGeometry<T>> {
        let lam = T::of(self.wavelength);
        let in_meters = |w: Option<f64>| w.map(|v| T::of(v) * lam);
        let need = |name: &str, v: Option<T>| {
            v.ok_or_else(|| Error::Config(format!("geometry.{name} is required for this kind")))
        };
        let m = |v: Option<usize>| {
            v.ok_or_else(|| Error::Config("geometry.m is required for this kind".into()))
        };
        let base = match self.kind {
            GeometryKind::Ula => ArrayGeometry::ula(
                m(self.m)?,
                need("spacing", in_meters(self.spacing))?,
                lam,
            )?,
            GeometryKind::Uca => match in_meters(self.radius) {
                Some(r) => ArrayGeometry::uca(m(self.m)?, r, lam)?,
                None => ArrayGeometry::uca_from_spacing(
                    m(self.m)?,
                    need("spacing or radius", in_meters(self.spacing))?,
                    lam,
                )?,
            },
            GeometryKind::Ura => {
                let rows = self
                    .rows
                    .ok_or_else(|| Error::Config("geometry.rows required for ura".into()))?;
                let cols = self
                    .cols
                    .ok_or_else(|| Error::Config("geometry.cols required for ura".into()))?;
                ArrayGeometry::ura(rows, cols, need("spacing", in_meters(self.spacing))?, lam)?
            }
            GeometryKind::Rda => ArrayGeometry::rda(
                m(self.m)?,
                need("aperture", in_meters(self.aperture))?,
                lam,
                self.seed.unwrap_or(0),
            )?,
            GeometryKind::Custom => {
                return Err(Error::Config(
                    "custom geometries cannot be built from a config block".into(),
                ))
            }
        };
        match self.perturb_sigma {
            Some(sigma) if sigma > 0.0 => {
                base.perturbed(T::of(sigma) * lam, self.seed.unwrap_or(0))
            }
            _ => Ok(base),
        }
    }
}
