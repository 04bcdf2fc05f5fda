use crate::error::{dim_err, Error, Result};

use super::Matrix;

/// Eigenvalues at or below `PINV_REL_EPS * λ_max` are treated as zero by [`pinv_psd`].
pub const PINV_REL_EPS: f64 = 1e-10;

const SYMMETRY_TOL: f64 = 1e-12;
const MAX_SWEEPS: usize = 100;

/// Eigenpairs of a symmetric matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct EigenDecomposition {
    /// Sorted descending.
    pub values: Vec<f64>,
    /// Column `i` is the unit eigenvector for `values[i]`; its largest-magnitude
    /// entry is positive.
    pub vectors: Matrix,
}

impl EigenDecomposition {
    pub fn vector(&self, i: usize) -> Vec<f64> {
        self.vectors.col(i)
    }

    /// `V diag(values) Vᵀ`.
    pub fn reconstruct(&self) -> Matrix {
        let n = self.values.len();
        let mut scaled = self.vectors.clone();
        for i in 0..n {
            for (j, &lam) in self.values.iter().enumerate() {
                scaled[(i, j)] *= lam;
            }
        }
        scaled
            .matmul_t(&self.vectors)
            .expect("eigenvector matrix is square")
    }
}

fn check_symmetric(a: &Matrix) -> Result<()> {
    if !a.is_square() {
        return dim_err(format!("expected a square matrix, got {}x{}", a.rows(), a.cols()));
    }
    if !a.is_symmetric(SYMMETRY_TOL) {
        return dim_err("matrix is not symmetric");
    }
    Ok(())
}

/// Full eigendecomposition of a symmetric matrix by cyclic Jacobi rotations.
pub fn sym_eigen(a: &Matrix) -> Result<EigenDecomposition> {
    check_symmetric(a)?;
    if !a.is_finite() {
        return Err(Error::Domain("matrix has non-finite entries".into()));
    }
    let n = a.rows();
    // Work on the exactly symmetric part so rotations stay consistent.
    let mut m = Matrix::from_fn(n, n, |i, j| 0.5 * (a[(i, j)] + a[(j, i)]));
    let mut v = Matrix::identity(n);
    let total = m.frobenius_norm();

    for _ in 0..MAX_SWEEPS {
        let off: f64 = (0..n)
            .flat_map(|i| (0..n).filter(move |&j| j != i).map(move |j| (i, j)))
            .map(|(i, j)| m[(i, j)] * m[(i, j)])
            .sum::<f64>()
            .sqrt();
        if off <= 1e-15 * total || off == 0.0 {
            break;
        }
        for p in 0..n {
            for q in (p + 1)..n {
                let apq = m[(p, q)];
                if apq == 0.0 {
                    continue;
                }
                let app = m[(p, p)];
                let aqq = m[(q, q)];
                // Negligible against both diagonal entries: zero it without rotating.
                if apq.abs() < f64::EPSILON * 1e-3 * (app.abs().min(aqq.abs())) {
                    m[(p, q)] = 0.0;
                    m[(q, p)] = 0.0;
                    continue;
                }
                let theta = (aqq - app) / (2.0 * apq);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                rotate_cols(&mut m, p, q, c, s);
                rotate_rows(&mut m, p, q, c, s);
                m[(p, q)] = 0.0;
                m[(q, p)] = 0.0;
                rotate_cols(&mut v, p, q, c, s);
            }
        }
    }

    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| m[(j, j)].total_cmp(&m[(i, i)]));
    let values = order.iter().map(|&i| m[(i, i)]).collect();
    let mut vectors = Matrix::zeros(n, n);
    for (dst, &src) in order.iter().enumerate() {
        let col = v.col(src);
        let pivot = col
            .iter()
            .enumerate()
            .fold((0, 0.0_f64), |best, (i, &x)| {
                if x.abs() > best.1.abs() {
                    (i, x)
                } else {
                    best
                }
            })
            .1;
        let sign = if pivot < 0.0 { -1.0 } else { 1.0 };
        for (i, x) in col.into_iter().enumerate() {
            vectors[(i, dst)] = sign * x;
        }
    }
    Ok(EigenDecomposition { values, vectors })
}

#[inline]
fn rotate_cols(m: &mut Matrix, p: usize, q: usize, c: f64, s: f64) {
    for k in 0..m.rows() {
        let kp = m[(k, p)];
        let kq = m[(k, q)];
        m[(k, p)] = c * kp - s * kq;
        m[(k, q)] = s * kp + c * kq;
    }
}

#[inline]
fn rotate_rows(m: &mut Matrix, p: usize, q: usize, c: f64, s: f64) {
    let n = m.cols();
    let data = m.as_mut_slice();
    for k in 0..n {
        let pk = data[p * n + k];
        let qk = data[q * n + k];
        data[p * n + k] = c * pk - s * qk;
        data[q * n + k] = s * pk + c * qk;
    }
}

/// Moore–Penrose pseudo-inverse of a symmetric positive semi-definite matrix.
pub fn pinv_psd(a: &Matrix) -> Result<Matrix> {
    let eig = sym_eigen(a)?;
    let n = eig.values.len();
    let lmax = eig.values.first().copied().unwrap_or(0.0).max(0.0);
    let cutoff = PINV_REL_EPS * lmax;
    let inv: Vec<f64> = eig
        .values
        .iter()
        .map(|&l| if l > cutoff && l > 0.0 { 1.0 / l } else { 0.0 })
        .collect();
    let mut scaled = eig.vectors.clone();
    for i in 0..n {
        for (j, &w) in inv.iter().enumerate() {
            scaled[(i, j)] *= w;
        }
    }
    scaled.matmul_t(&eig.vectors)
}

/// Projects centered rows of `x` onto the top-`k` principal axes.
pub fn pca_project(x: &Matrix, k: usize) -> Result<Matrix> {
    let (n, d) = x.shape();
    if k > n.min(d) {
        return dim_err(format!("k = {k} exceeds min(n, d) = {}", n.min(d)));
    }
    let mean = x.col_means();
    let centered = Matrix::from_fn(n, d, |i, j| x[(i, j)] - mean[j]);
    let cov = centered.t_matmul(&centered)?.scale(1.0 / n.max(1) as f64);
    let eig = sym_eigen(&cov)?;
    let basis = Matrix::from_fn(d, k, |i, j| eig.vectors[(i, j)]);
    centered.matmul(&basis)
}
