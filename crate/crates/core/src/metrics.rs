//! Representation-geometry measurements: NC1, NC2, the class-distance matrix and MSDR.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::error::{dim_err, Error, Result};
use crate::numerics::csv::fmt_f64;
use crate::numerics::matrix::{dot, sq_dist};
use crate::numerics::{pinv_psd, sym_eigen, Matrix, PINV_REL_EPS};

/// Between-class scatter below this fraction of the data scale (squared) counts as zero.
const DEGENERATE_REL: f64 = 1e-24;

/// Hidden representations with one class label per row.
#[derive(Debug, Clone, PartialEq)]
pub struct RepresentationMatrix {
    pub h: Matrix,
    pub labels: Vec<usize>,
    pub class_count: usize,
}

impl RepresentationMatrix {
    pub fn new(h: Matrix, labels: Vec<usize>, class_count: usize) -> Result<Self> {
        if labels.len() != h.rows() {
            return dim_err(format!("{} labels for {} rows", labels.len(), h.rows()));
        }
        if let Some(&bad) = labels.iter().find(|&&c| c >= class_count) {
            return Err(Error::InvalidArgument(format!("label {bad} outside 0..{class_count}")));
        }
        Ok(Self { h, labels, class_count })
    }

    pub fn dim(&self) -> usize {
        self.h.cols()
    }

    /// Row indices of each class.
    pub fn class_indices(&self) -> Vec<Vec<usize>> {
        let mut idx = vec![Vec::new(); self.class_count];
        for (i, &c) in self.labels.iter().enumerate() {
            idx[c].push(i);
        }
        idx
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ClassMeans {
    /// `C × d`, row `c` is the mean of class `c`.
    pub per_class: Matrix,
    pub global: Vec<f64>,
    pub counts: Vec<usize>,
}

pub fn class_means(reps: &RepresentationMatrix) -> Result<ClassMeans> {
    let d = reps.dim();
    let mut sums = Matrix::zeros(reps.class_count, d);
    let mut counts = vec![0usize; reps.class_count];
    for (row, &c) in reps.h.row_iter().zip(&reps.labels) {
        counts[c] += 1;
        for (s, v) in sums.row_mut(c).iter_mut().zip(row) {
            *s += v;
        }
    }
    if let Some(class) = counts.iter().position(|&n| n == 0) {
        return Err(Error::EmptyClass { class });
    }
    for (c, &n) in counts.iter().enumerate() {
        sums.row_mut(c).iter_mut().for_each(|v| *v /= n as f64);
    }
    Ok(ClassMeans {
        per_class: sums,
        global: reps.h.col_means(),
        counts,
    })
}

fn require_two_classes(reps: &RepresentationMatrix) -> Result<()> {
    if reps.class_count < 2 {
        return Err(Error::InvalidArgument(format!(
            "need at least 2 classes, got {}",
            reps.class_count
        )));
    }
    Ok(())
}

/// NC1 value with a flag for the all-means-equal case.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Nc1 {
    pub value: f64,
    /// Σ_B vanished, so the pseudo-inverse is zero and `value` is 0 without any collapse.
    pub degenerate: bool,
}

/// Centered class means `M` (rows `μ_c − μ_G`).
fn centered_means(means: &ClassMeans) -> Matrix {
    let (c, d) = means.per_class.shape();
    Matrix::from_fn(c, d, |i, j| means.per_class[(i, j)] - means.global[j])
}

/// Per-class biased covariance traces.
fn within_traces(reps: &RepresentationMatrix, means: &ClassMeans) -> Vec<f64> {
    let mut tr = vec![0.0; reps.class_count];
    for (row, &c) in reps.h.row_iter().zip(&reps.labels) {
        tr[c] += sq_dist(row, means.per_class.row(c));
    }
    tr.iter().zip(&means.counts).map(|(t, &n)| t / n as f64).collect()
}

fn is_degenerate(tr_between: f64, reps: &RepresentationMatrix, means: &ClassMeans) -> bool {
    let tr_within: f64 = within_traces(reps, means).iter().sum::<f64>() / reps.class_count as f64;
    let scale = tr_within + dot(&means.global, &means.global) + tr_between;
    tr_between <= DEGENERATE_REL * scale
}

/// `(1/C) Tr(Σ_W Σ_B†)`.
///
/// Σ_B has rank at most C − 1, so its pseudo-inverse is assembled from the
/// eigenpairs of the `C × C` matrix `MMᵀ/C`; Σ_W enters only through its
/// quadratic form on those eigenvectors.
pub fn nc1(reps: &RepresentationMatrix) -> Result<Nc1> {
    require_two_classes(reps)?;
    let means = class_means(reps)?;
    let c = reps.class_count as f64;
    let m = centered_means(&means);
    let small = m.matmul_t(&m)?.scale(1.0 / c);
    if is_degenerate(small.trace(), reps, &means) {
        return Ok(Nc1 { value: 0.0, degenerate: true });
    }
    let eig = sym_eigen(&small)?;
    let lmax = eig.values[0].max(0.0);
    let mut dirs: Vec<(f64, Vec<f64>)> = Vec::new();
    for (i, &lam) in eig.values.iter().enumerate() {
        if !(lam > PINV_REL_EPS * lmax && lam > 0.0) {
            continue;
        }
        let u = eig.vector(i);
        // v = Mᵀu / √(Cλ) is a unit eigenvector of MᵀM/C
        let norm = (c * lam).sqrt();
        let v: Vec<f64> = (0..m.cols())
            .map(|j| (0..m.rows()).map(|k| m[(k, j)] * u[k]).sum::<f64>() / norm)
            .collect();
        dirs.push((lam, v));
    }
    let mut quad = vec![0.0; dirs.len()];
    let mut centered = vec![0.0; reps.dim()];
    for (row, &cls) in reps.h.row_iter().zip(&reps.labels) {
        for ((dst, x), mu) in centered.iter_mut().zip(row).zip(means.per_class.row(cls)) {
            *dst = x - mu;
        }
        let w = 1.0 / means.counts[cls] as f64;
        for (q, (_, v)) in quad.iter_mut().zip(&dirs) {
            let p = dot(&centered, v);
            *q += w * p * p;
        }
    }
    let trace: f64 = quad.iter().zip(&dirs).map(|(q, (lam, _))| q / c / lam).sum();
    Ok(Nc1 {
        value: trace / c,
        degenerate: false,
    })
}

/// NC1 from explicitly formed `d × d` scatter matrices and [`pinv_psd`].
pub fn nc1_literal(reps: &RepresentationMatrix) -> Result<Nc1> {
    require_two_classes(reps)?;
    let means = class_means(reps)?;
    let (sw, sb) = scatter_matrices(reps, &means);
    if is_degenerate(sb.trace(), reps, &means) {
        return Ok(Nc1 { value: 0.0, degenerate: true });
    }
    let pinv = pinv_psd(&sb)?;
    Ok(Nc1 {
        value: sw.matmul(&pinv)?.trace() / reps.class_count as f64,
        degenerate: false,
    })
}

/// (Σ_W, Σ_B) with the 1/C normalizations and biased per-class covariances.
pub fn scatter_matrices(reps: &RepresentationMatrix, means: &ClassMeans) -> (Matrix, Matrix) {
    let d = reps.dim();
    let c = reps.class_count as f64;
    let mut sw = Matrix::zeros(d, d);
    let mut diff = vec![0.0; d];
    for (row, &cls) in reps.h.row_iter().zip(&reps.labels) {
        for ((dst, x), mu) in diff.iter_mut().zip(row).zip(means.per_class.row(cls)) {
            *dst = x - mu;
        }
        let w = 1.0 / (c * means.counts[cls] as f64);
        outer_add(&mut sw, &diff, w);
    }
    let mut sb = Matrix::zeros(d, d);
    for k in 0..reps.class_count {
        let dm: Vec<f64> = means
            .per_class
            .row(k)
            .iter()
            .zip(&means.global)
            .map(|(a, b)| a - b)
            .collect();
        outer_add(&mut sb, &dm, 1.0 / c);
    }
    (sw, sb)
}

fn outer_add(m: &mut Matrix, v: &[f64], w: f64) {
    for (i, &vi) in v.iter().enumerate() {
        if vi == 0.0 {
            continue;
        }
        for (dst, &vj) in m.row_mut(i).iter_mut().zip(v) {
            *dst += w * vi * vj;
        }
    }
}

/// `‖MMᵀ/‖MMᵀ‖_F − (I − 11ᵀ/C)/√(C−1)‖_F`.
pub fn nc2(reps: &RepresentationMatrix) -> Result<f64> {
    require_two_classes(reps)?;
    let means = class_means(reps)?;
    let m = centered_means(&means);
    let k = m.matmul_t(&m)?;
    let norm = k.frobenius_norm();
    if !(norm > 0.0) {
        return Err(Error::Domain("class means coincide; NC2 is undefined".into()));
    }
    let c = reps.class_count;
    let s = 1.0 / ((c - 1) as f64).sqrt();
    let mut acc = 0.0;
    for i in 0..c {
        for j in 0..c {
            let etf = s * (if i == j { 1.0 } else { 0.0 } - 1.0 / c as f64);
            acc += (k[(i, j)] / norm - etf).powi(2);
        }
    }
    Ok(acc.sqrt())
}

/// Symmetric matrix of mean squared distances between classes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DistanceMatrix(pub Matrix);

impl DistanceMatrix {
    pub fn size(&self) -> usize {
        self.0.rows()
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.0[(i, j)]
    }

    /// Header row `class,0,1,…` then one row per class.
    pub fn to_csv(&self) -> String {
        let c = self.size();
        let mut s = String::from("class");
        for j in 0..c {
            let _ = write!(s, ",{j}");
        }
        s.push('\n');
        for i in 0..c {
            let _ = write!(s, "{i}");
            for j in 0..c {
                let _ = write!(s, ",{}", fmt_f64(self.0[(i, j)]));
            }
            s.push('\n');
        }
        s
    }
}

/// Whether diagonal blocks average over the `u = v` pairs too.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DiagonalPairs {
    /// All `n_i²` ordered pairs, zero self-distances included.
    IncludeSelf,
    /// Only the `n_i(n_i − 1)` pairs with `u ≠ v`.
    ExcludeSelf,
}

impl Default for DiagonalPairs {
    fn default() -> Self {
        DiagonalPairs::IncludeSelf
    }
}

/// `D_ij = ‖μ_i − μ_j‖² + tr Ĉ_i + tr Ĉ_j` (O(n d)).
pub fn class_distance_matrix(reps: &RepresentationMatrix) -> Result<DistanceMatrix> {
    class_distance_matrix_with(reps, DiagonalPairs::IncludeSelf)
}

pub fn class_distance_matrix_with(reps: &RepresentationMatrix, diag: DiagonalPairs) -> Result<DistanceMatrix> {
    let means = class_means(reps)?;
    let tr = within_traces(reps, &means);
    let c = reps.class_count;
    let mut d = Matrix::zeros(c, c);
    for i in 0..c {
        for j in 0..c {
            d[(i, j)] = if i == j {
                match diag {
                    DiagonalPairs::IncludeSelf => 2.0 * tr[i],
                    DiagonalPairs::ExcludeSelf => {
                        let n = means.counts[i] as f64;
                        if n > 1.0 {
                            2.0 * tr[i] * n / (n - 1.0)
                        } else {
                            0.0
                        }
                    }
                }
            } else {
                sq_dist(means.per_class.row(i), means.per_class.row(j)) + tr[i] + tr[j]
            };
        }
    }
    Ok(DistanceMatrix(d))
}

/// The pairwise definition, O(n² d).
pub fn class_distance_matrix_literal(reps: &RepresentationMatrix, diag: DiagonalPairs) -> Result<DistanceMatrix> {
    let idx = reps.class_indices();
    if let Some(class) = idx.iter().position(|v| v.is_empty()) {
        return Err(Error::EmptyClass { class });
    }
    let c = reps.class_count;
    let mut d = Matrix::zeros(c, c);
    for i in 0..c {
        for j in i..c {
            let mut sum = 0.0;
            let mut pairs = 0usize;
            for &u in &idx[i] {
                for &v in &idx[j] {
                    if i == j && u == v && diag == DiagonalPairs::ExcludeSelf {
                        continue;
                    }
                    sum += sq_dist(reps.h.row(u), reps.h.row(v));
                    pairs += 1;
                }
            }
            let val = if pairs > 0 { sum / pairs as f64 } else { 0.0 };
            d[(i, j)] = val;
            d[(j, i)] = val;
        }
    }
    Ok(DistanceMatrix(d))
}

/// Mean same-super-class off-diagonal entry over the mean diagonal entry.
pub fn msdr(d: &DistanceMatrix, superclass_map: &[usize]) -> Result<f64> {
    msdr_restricted(d, superclass_map, |_| true)
}

/// MSDR with the numerator limited to super-classes accepted by `keep`.
pub fn msdr_restricted(d: &DistanceMatrix, superclass_map: &[usize], keep: impl Fn(usize) -> bool) -> Result<f64> {
    let c = d.size();
    if superclass_map.len() != c {
        return dim_err(format!(
            "super-class map covers {} classes, distance matrix has {c}",
            superclass_map.len()
        ));
    }
    let mut num = 0.0;
    let mut pairs = 0usize;
    for i in 0..c {
        for j in 0..c {
            if i != j && superclass_map[i] == superclass_map[j] && keep(superclass_map[i]) {
                num += d.get(i, j);
                pairs += 1;
            }
        }
    }
    if pairs == 0 {
        return Err(Error::InvalidArgument(
            "no pair of distinct classes shares a super-class".into(),
        ));
    }
    let den = (0..c).map(|i| d.get(i, i)).sum::<f64>() / c as f64;
    if !(den > 0.0) {
        return Err(Error::Domain(
            "mean within-class distance is zero; every class is collapsed to a point".into(),
        ));
    }
    Ok((num / pairs as f64) / den)
}

/// One checkpoint's measurements.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub step: usize,
    pub nc1: f64,
    pub nc2: f64,
    pub nc1_degenerate: bool,
    pub msdr: Option<f64>,
    /// Row-major class-distance matrix.
    pub distance: Vec<f64>,
    pub class_count: usize,
}

impl MetricsReport {
    /// NC1/NC2 from `collapse_reps` (usually coarse labels); distance matrix and MSDR
    /// from `distance_reps` (original labels) and its super-class map.
    pub fn compute(
        step: usize,
        collapse_reps: &RepresentationMatrix,
        distance_reps: &RepresentationMatrix,
        superclass_map: Option<&[usize]>,
    ) -> Result<Self> {
        let n1 = nc1(collapse_reps)?;
        let n2 = nc2(collapse_reps)?;
        let dist = class_distance_matrix(distance_reps)?;
        let msdr = match superclass_map {
            Some(map) => Some(msdr(&dist, map)?),
            None => None,
        };
        Ok(Self {
            step,
            nc1: n1.value,
            nc2: n2,
            nc1_degenerate: n1.degenerate,
            msdr,
            class_count: dist.size(),
            distance: dist.0.into_vec(),
        })
    }

    pub fn distance_matrix(&self) -> DistanceMatrix {
        DistanceMatrix(
            Matrix::from_vec(self.class_count, self.class_count, self.distance.clone())
                .expect("report holds a square matrix"),
        )
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)? + "\n")
    }
}
