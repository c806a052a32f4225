//! Shared independent oracles for the integration suites.

use doakit::geometry::{steering_vector, ArrayGeometry, Direction};
use doakit::linalg::{hermitian_solve, CMat, Cx};
use doakit::simulation::noise_variance;

/// Complex matrix product.
fn matmul(a: &CMat<f64>, b: &CMat<f64>) -> CMat<f64> {
    let n = a.size();
    let mut out = CMat::zeros(n);
    for i in 0..n {
        for j in 0..n {
            let mut acc = Cx::new(0.0, 0.0);
            for k in 0..n {
                acc += a[(i, k)] * b[(k, j)];
            }
            out[(i, j)] = acc;
        }
    }
    out
}

/// `R^-1 A` column by column through the Hermitian solver.
fn solve_matrix(r: &CMat<f64>, a: &CMat<f64>) -> CMat<f64> {
    let n = r.size();
    let mut out = CMat::zeros(n);
    for col in 0..n {
        let rhs: Vec<Cx<f64>> = (0..n).map(|row| a[(row, col)]).collect();
        let x = hermitian_solve(r, &rhs).expect("oracle covariance invertible");
        for row in 0..n {
            out[(row, col)] = x[row];
        }
    }
    out
}

fn trace(m: &CMat<f64>) -> Cx<f64> {
    (0..m.size()).map(|i| m[(i, i)]).fold(Cx::new(0.0, 0.0), |acc, x| acc + x)
}

/// Real symmetric 4x4 inverse by Gauss-Jordan with partial pivoting.
fn invert4(a: [[f64; 4]; 4]) -> [[f64; 4]; 4] {
    let mut m = a;
    let mut inv = [[0.0; 4]; 4];
    for (i, row) in inv.iter_mut().enumerate() {
        row[i] = 1.0;
    }
    for col in 0..4 {
        let mut piv = col;
        for r in col + 1..4 {
            if m[r][col].abs() > m[piv][col].abs() {
                piv = r;
            }
        }
        assert!(m[piv][col].abs() > 1e-300, "oracle FIM singular");
        m.swap(col, piv);
        inv.swap(col, piv);
        let d = m[col][col];
        for j in 0..4 {
            m[col][j] /= d;
            inv[col][j] /= d;
        }
        for r in 0..4 {
            if r != col {
                let f = m[r][col];
                for j in 0..4 {
                    m[r][j] -= f * m[col][j];
                    inv[r][j] -= f * inv[col][j];
                }
            }
        }
    }
    inv
}

/// Independent single-source stochastic CRB oracle.
///
/// Builds the full 4-parameter Fisher information over
/// `psi = (theta, phi, sigma_s^2, sigma_n^2)` with the Gaussian trace
/// formula `F_ij = T * tr(R^-1 dR_i R^-1 dR_j)` on the model
/// covariance `R = sigma_s^2 a a^H + sigma_n^2 I`, using central
/// finite differences of the steering vector for the angle
/// derivatives, then returns the (theta, theta) and (phi, phi)
/// entries of the inverted full matrix. A completely different route
/// than the concentrated projector expression under test.
pub fn slepian_bangs_crb(
    g_sub: &ArrayGeometry<f64>,
    d: Direction<f64>,
    snr_db: f64,
    num_snapshots: usize,
) -> (f64, f64) {
    let k = g_sub.len();
    let sigma_s = 1.0f64;
    let sigma_n = noise_variance(snr_db);
    let a = steering_vector(g_sub, d).entries().to_vec();

    let mut r = CMat::zeros(k);
    r.add_scaled_outer(&a, sigma_s);
    r.add_diagonal(sigma_n);

    // d a / d angle by central differences (independent of the
    // analytic derivative code).
    let h = 1e-6;
    let fd = |dp: Direction<f64>, dm: Direction<f64>| -> Vec<Cx<f64>> {
        let ap = steering_vector(g_sub, dp).entries().to_vec();
        let am = steering_vector(g_sub, dm).entries().to_vec();
        ap.iter()
            .zip(&am)
            .map(|(p, m)| (p - m) / Cx::new(2.0 * h, 0.0))
            .collect()
    };
    let da_dt = fd(
        Direction::new(d.theta + h, d.phi).unwrap(),
        Direction::new(d.theta - h, d.phi).unwrap(),
    );
    let da_dp = fd(
        Direction::wrapped(d.theta, d.phi + h).unwrap(),
        Direction::wrapped(d.theta, d.phi - h).unwrap(),
    );

    // dR/dangle = sigma_s^2 (da a^H + a da^H).
    let rank2 = |da: &[Cx<f64>]| -> CMat<f64> {
        let mut m = CMat::zeros(k);
        for i in 0..k {
            for j in 0..k {
                m[(i, j)] = (da[i] * a[j].conj() + a[i] * da[j].conj()) * Cx::new(sigma_s, 0.0);
            }
        }
        m
    };
    let dr: [CMat<f64>; 4] = [
        rank2(&da_dt),
        rank2(&da_dp),
        {
            // dR/d sigma_s^2 = a a^H
            let mut m = CMat::zeros(k);
            m.add_scaled_outer(&a, 1.0);
            m
        },
        CMat::identity(k),
    ];

    let solved: Vec<CMat<f64>> = dr.iter().map(|m| solve_matrix(&r, m)).collect();
    let mut fim = [[0.0; 4]; 4];
    for i in 0..4 {
        for j in i..4 {
            let t = trace(&matmul(&solved[i], &solved[j])).re * num_snapshots as f64;
            fim[i][j] = t;
            fim[j][i] = t;
        }
    }
    let crb = invert4(fim);
    (crb[0][0], crb[1][1])
}
