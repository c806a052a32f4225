//! Small dense complex linear algebra: just enough for covariance
//! handling, CRB evaluation and MUSIC subspaces (matrices up to a few
//! dozen rows). Hermitian eigendecomposition goes through the real
//! symmetric augmentation `[A, -B; B, A]` and a cyclic Jacobi sweep.

use num_complex::Complex;

use crate::error::{Error, Result};
use crate::scalar::Scalar;

pub type Cx<T> = Complex<T>;

/// Dense square complex matrix, row major.
#[derive(Debug, Clone, PartialEq)]
pub struct CMat<T: Scalar> {
    n: usize,
    data: Vec<Cx<T>>,
}

impl<T: Scalar> CMat<T> {
    pub fn zeros(n: usize) -> Self {
        CMat {
            n,
            data: vec![Cx::new(T::zero(), T::zero()); n * n],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = CMat::zeros(n);
        for i in 0..n {
            m[(i, i)] = Cx::new(T::one(), T::zero());
        }
        m
    }

    pub fn from_rows(rows: Vec<Vec<Cx<T>>>) -> Self {
        let n = rows.len();
        assert!(rows.iter().all(|r| r.len() == n), "matrix must be square");
        CMat {
            n,
            data: rows.into_iter().flatten().collect(),
        }
    }

    #[inline]
    pub fn size(&self) -> usize {
        self.n
    }

    pub fn data(&self) -> &[Cx<T>] {
        &self.data
    }

    /// Scaled outer product `alpha * v v^H` added in place.
    pub fn add_scaled_outer(&mut self, v: &[Cx<T>], alpha: T) {
        assert_eq!(v.len(), self.n);
        for i in 0..self.n {
            for j in 0..self.n {
                self[(i, j)] += v[i] * v[j].conj() * alpha;
            }
        }
    }

    pub fn add_diagonal(&mut self, alpha: T) {
        for i in 0..self.n {
            self[(i, i)] += Cx::new(alpha, T::zero());
        }
    }

    pub fn trace_re(&self) -> T {
        (0..self.n).map(|i| self[(i, i)].re).sum()
    }

    /// Maximum elementwise deviation from Hermitian symmetry.
    pub fn hermitian_defect(&self) -> T {
        let mut worst = T::zero();
        for i in 0..self.n {
            for j in i..self.n {
                let d = (self[(i, j)] - self[(j, i)].conj()).norm();
                if d > worst {
                    worst = d;
                }
            }
        }
        worst
    }

    /// Principal submatrix on the given (sorted, distinct) indices.
    pub fn principal_submatrix(&self, idx: &[usize]) -> Result<CMat<T>> {
        for &i in idx {
            if i >= self.n {
                return Err(Error::IndexOutOfRange {
                    index: i,
                    size: self.n,
                });
            }
        }
        let k = idx.len();
        let mut out = CMat::zeros(k);
        for (r, &i) in idx.iter().enumerate() {
            for (c, &j) in idx.iter().enumerate() {
                out[(r, c)] = self[(i, j)];
            }
        }
        Ok(out)
    }

    pub fn matvec(&self, v: &[Cx<T>]) -> Vec<Cx<T>> {
        assert_eq!(v.len(), self.n);
        (0..self.n)
            .map(|i| {
                let mut acc = Cx::new(T::zero(), T::zero());
                for j in 0..self.n {
                    acc += self[(i, j)] * v[j];
                }
                acc
            })
            .collect()
    }
}

impl<T: Scalar> std::ops::Index<(usize, usize)> for CMat<T> {
    type Output = Cx<T>;
    #[inline]
    fn index(&self, (i, j): (usize, usize)) -> &Cx<T> {
        &self.data[i * self.n + j]
    }
}

impl<T: Scalar> std::ops::IndexMut<(usize, usize)> for CMat<T> {
    #[inline]
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut Cx<T> {
        &mut self.data[i * self.n + j]
    }
}

/// `a^H b`.
pub fn inner<T: Scalar>(a: &[Cx<T>], b: &[Cx<T>]) -> Cx<T> {
    debug_assert_eq!(a.len(), b.len());
    let mut acc = Cx::new(T::zero(), T::zero());
    for (x, y) in a.iter().zip(b) {
        acc += x.conj() * *y;
    }
    acc
}

pub fn norm_sq<T: Scalar>(a: &[Cx<T>]) -> T {
    a.iter().map(|z| z.norm_sqr()).sum()
}

/// Solve `A x = b` for Hermitian `A` by Gaussian elimination with
/// partial pivoting. When the pivot-ratio condition proxy exceeds
/// `1e12`, retries once with a ridge of `1e-10 * trace / n` on the
/// diagonal; a still-singular system is an error.
pub fn hermitian_solve<T: Scalar>(a: &CMat<T>, b: &[Cx<T>]) -> Result<Vec<Cx<T>>> {
    match solve_with_cond(a, b) {
        Ok((x, cond)) if cond <= T::of(1e12) => Ok(x),
        _ => {
            let mut reg = a.clone();
            let ridge = T::of(1e-10) * a.trace_re() / T::of(a.size() as f64);
            reg.add_diagonal(ridge);
            solve_with_cond(&reg, b)
                .map(|(x, _)| x)
                .map_err(|_| Error::SingularCovariance)
        }
    }
}

/// Plain solve returning the |max pivot| / |min pivot| ratio.
fn solve_with_cond<T: Scalar>(a: &CMat<T>, b: &[Cx<T>]) -> Result<(Vec<Cx<T>>, T)> {
    let n = a.size();
    assert_eq!(b.len(), n);
    let mut m = a.clone();
    let mut x: Vec<Cx<T>> = b.to_vec();

    let mut max_piv = T::zero();
    let mut min_piv = T::infinity();

    for col in 0..n {
        let mut piv = col;
        let mut best = m[(col, col)].norm();
        for r in col + 1..n {
            let v = m[(r, col)].norm();
            if v > best {
                best = v;
                piv = r;
            }
        }
        if best == T::zero() || !best.is_finite() {
            return Err(Error::SingularCovariance);
        }
        if piv != col {
            for j in 0..n {
                let tmp = m[(col, j)];
                m[(col, j)] = m[(piv, j)];
                m[(piv, j)] = tmp;
            }
            x.swap(col, piv);
        }
        max_piv = max_piv.max(best);
        min_piv = min_piv.min(best);

        let d = m[(col, col)];
        for r in col + 1..n {
            let f = m[(r, col)] / d;
            if f.norm_sqr() == T::zero() {
                continue;
            }
            for j in col..n {
                let t = m[(col, j)];
                m[(r, j)] -= f * t;
            }
            let t = x[col];
            x[r] -= f * t;
        }
    }

    for col in (0..n).rev() {
        let mut acc = x[col];
        for j in col + 1..n {
            acc -= m[(col, j)] * x[j];
        }
        x[col] = acc / m[(col, col)];
    }

    Ok((x, max_piv / min_piv))
}

/// Hermitian eigendecomposition. Returns eigenvalues ascending with a
/// complex-orthonormal eigenvector per eigenvalue (handles degenerate
/// spectra such as scaled identities).
pub fn eigh<T: Scalar>(h: &CMat<T>) -> (Vec<T>, Vec<Vec<Cx<T>>>) {
    let n = h.size();
    // Augmented 2n x 2n real symmetric [A, -B; B, A] for H = A + jB.
    let mut aug = vec![vec![T::zero(); 2 * n]; 2 * n];
    for i in 0..n {
        for j in 0..n {
            let z = h[(i, j)];
            aug[i][j] = z.re;
            aug[i][n + j] = -z.im;
            aug[n + i][j] = z.im;
            aug[n + i][n + j] = z.re;
        }
    }

    let (vals, vecs) = jacobi_symmetric(&mut aug);

    // Each complex eigenvector appears twice (v and j*v). Walk values
    // ascending, keep vectors with nonzero residual after projecting
    // out the ones already accepted.
    let mut order: Vec<usize> = (0..2 * n).collect();
    order.sort_by(|&a, &b| vals[a].partial_cmp(&vals[b]).unwrap());

    let mut out_vals = Vec::with_capacity(n);
    let mut out_vecs: Vec<Vec<Cx<T>>> = Vec::with_capacity(n);
    for &k in &order {
        if out_vecs.len() == n {
            break;
        }
        let mut v: Vec<Cx<T>> = (0..n).map(|i| Cx::new(vecs[k][i], vecs[k][n + i])).collect();
        for u in &out_vecs {
            let c = inner(u, &v);
            for (vi, ui) in v.iter_mut().zip(u) {
                *vi -= *ui * c;
            }
        }
        let nrm = norm_sq(&v).sqrt();
        if nrm > T::of(1e-8) {
            for vi in &mut v {
                *vi /= Cx::new(nrm, T::zero());
            }
            out_vals.push(vals[k]);
            out_vecs.push(v);
        }
    }
    debug_assert_eq!(out_vecs.len(), n, "eigenbasis extraction incomplete");
    (out_vals, out_vecs)
}

/// Cyclic Jacobi for a real symmetric matrix. Returns eigenvalues and
/// eigenvectors (row `i` of the result is the i-th eigenvector).
#[allow(clippy::needless_range_loop)]
fn jacobi_symmetric<T: Scalar>(a: &mut [Vec<T>]) -> (Vec<T>, Vec<Vec<T>>) {
    let n = a.len();
    let mut v = vec![vec![T::zero(); n]; n];
    for (i, row) in v.iter_mut().enumerate() {
        row[i] = T::one();
    }
    let scale: T = (0..n).map(|i| a[i][i].abs()).sum::<T>() + T::of(1e-300);
    let tol = T::of(1e-14) * scale;

    for _sweep in 0..100 {
        let mut off = T::zero();
        for p in 0..n {
            for q in p + 1..n {
                off += a[p][q].abs();
            }
        }
        if off < tol {
            break;
        }
        for p in 0..n - 1 {
            for q in p + 1..n {
                if a[p][q].abs() <= tol * T::of(1e-3) {
                    continue;
                }
                let apq = a[p][q];
                let diff = a[q][q] - a[p][p];
                let t = if diff.abs() < apq.abs() * T::of(1e-30) {
                    T::one().copysign(apq)
                } else {
                    let theta = diff / (T::of(2.0) * apq);
                    let t = T::one() / (theta.abs() + (T::one() + theta * theta).sqrt());
                    if theta < T::zero() {
                        -t
                    } else {
                        t
                    }
                };
                let c = T::one() / (T::one() + t * t).sqrt();
                let s = t * c;

                a[p][p] -= t * apq;
                a[q][q] += t * apq;
                a[p][q] = T::zero();
                a[q][p] = T::zero();

                for i in 0..n {
                    if i != p && i != q {
                        let aip = a[i][p];
                        let aiq = a[i][q];
                        a[i][p] = c * aip - s * aiq;
                        a[p][i] = a[i][p];
                        a[i][q] = s * aip + c * aiq;
                        a[q][i] = a[i][q];
                    }
                }
                for row in v.iter_mut() {
                    let vp = row[p];
                    let vq = row[q];
                    row[p] = c * vp - s * vq;
                    row[q] = s * vp + c * vq;
                }
            }
        }
    }

    let vals: Vec<T> = (0..n).map(|i| a[i][i]).collect();
    // Column i of v is the i-th eigenvector; transpose to rows.
    let vecs: Vec<Vec<T>> = (0..n).map(|i| (0..n).map(|j| v[j][i]).collect()).collect();
    (vals, vecs)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn c(re: f64, im: f64) -> Cx<f64> {
        Cx::new(re, im)
    }

    #[test]
    fn solve_recovers_known_solution() {
        // A = [[4, 1+j], [1-j, 3]] (Hermitian PD), x known, b = A x.
        let a = CMat::from_rows(vec![
            vec![c(4.0, 0.0), c(1.0, 1.0)],
            vec![c(1.0, -1.0), c(3.0, 0.0)],
        ]);
        let x_true = vec![c(1.0, -2.0), c(0.5, 0.25)];
        let b = a.matvec(&x_true);
        let x = hermitian_solve(&a, &b).unwrap();
        for (got, want) in x.iter().zip(&x_true) {
            assert!((got - want).norm() < 1e-12);
        }
    }

    #[test]
    fn solve_singular_errors() {
        let a = CMat::from_rows(vec![
            vec![c(0.0, 0.0), c(0.0, 0.0)],
            vec![c(0.0, 0.0), c(0.0, 0.0)],
        ]);
        let b = vec![c(1.0, 0.0), c(0.0, 0.0)];
        assert!(matches!(
            hermitian_solve(&a, &b),
            Err(Error::SingularCovariance)
        ));
    }

    #[test]
    fn solve_near_singular_regularizes() {
        // Rank-1 plus tiny diagonal: condition ~1e14, ridge path used.
        let mut a = CMat::zeros(3);
        let v = vec![c(1.0, 0.0), c(0.0, 1.0), c(1.0, 1.0)];
        a.add_scaled_outer(&v, 1.0);
        a.add_diagonal(1e-14);
        let b = a.matvec(&v);
        let x = hermitian_solve(&a, &b).unwrap();
        assert!(x.iter().all(|z| z.norm().is_finite()));
    }

    #[test]
    fn eigh_diagonal() {
        let a = CMat::from_rows(vec![
            vec![c(3.0, 0.0), c(0.0, 0.0)],
            vec![c(0.0, 0.0), c(1.0, 0.0)],
        ]);
        let (vals, vecs) = eigh(&a);
        assert!((vals[0] - 1.0).abs() < 1e-12);
        assert!((vals[1] - 3.0).abs() < 1e-12);
        assert!(vecs[0][1].norm() > 0.99);
        assert!(vecs[1][0].norm() > 0.99);
    }

    #[test]
    fn eigh_degenerate_identity() {
        let a = CMat::<f64>::identity(4);
        let (vals, vecs) = eigh(&a);
        assert_eq!(vecs.len(), 4);
        for v in &vals {
            assert!((v - 1.0).abs() < 1e-12);
        }
        // Complex orthonormality despite the fully degenerate spectrum.
        for i in 0..4 {
            for j in 0..4 {
                let ip = inner(&vecs[i], &vecs[j]).norm();
                let want = if i == j { 1.0 } else { 0.0 };
                assert!((ip - want).abs() < 1e-10, "({i},{j}) -> {ip}");
            }
        }
    }

    #[test]
    fn eigh_reconstructs_random_hermitian() {
        let mut s = crate::rng::Stream::from_seed(5);
        for _ in 0..10 {
            let n = 5;
            let mut a = CMat::zeros(n);
            for i in 0..n {
                for j in i..n {
                    if i == j {
                        a[(i, i)] = c(s.normal(), 0.0);
                    } else {
                        let z = c(s.normal(), s.normal());
                        a[(i, j)] = z;
                        a[(j, i)] = z.conj();
                    }
                }
            }
            let (vals, vecs) = eigh(&a);
            // A v = lambda v for each pair.
            for (lam, v) in vals.iter().zip(&vecs) {
                let av = a.matvec(v);
                for (x, y) in av.iter().zip(v) {
                    assert!((x - y * c(*lam, 0.0)).norm() < 1e-9);
                }
            }
            // Ascending order.
            assert!(vals.windows(2).all(|w| w[0] <= w[1] + 1e-12));
        }
    }

    #[test]
    fn principal_submatrix_picks_rows_cols() {
        let mut a = CMat::zeros(3);
        for i in 0..3 {
            for j in 0..3 {
                a[(i, j)] = c((10 * i + j) as f64, 0.0);
            }
        }
        let s = a.principal_submatrix(&[0, 2]).unwrap();
        assert_eq!(s[(0, 0)], c(0.0, 0.0));
        assert_eq!(s[(0, 1)], c(2.0, 0.0));
        assert_eq!(s[(1, 0)], c(20.0, 0.0));
        assert_eq!(s[(1, 1)], c(22.0, 0.0));
        assert!(a.principal_submatrix(&[3]).is_err());
    }
}
