use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::matrix::sq_dist;
use crate::numerics::{Matrix, RngStream};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct KmeansConfig {
    pub restarts: usize,
    pub max_iters: usize,
}

impl Default for KmeansConfig {
    fn default() -> Self {
        Self {
            restarts: 10,
            max_iters: 300,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct KmeansResult {
    pub assignments: Vec<usize>,
    pub centers: Matrix,
    pub inertia: f64,
    /// Inertia after each assignment step of the returned restart.
    pub inertia_trace: Vec<f64>,
}

/// Nearest center, ties to the lowest index.
fn nearest(row: &[f64], centers: &Matrix) -> (usize, f64) {
    let mut best = (0, f64::INFINITY);
    for (c, center) in centers.row_iter().enumerate() {
        let d = sq_dist(row, center);
        if d < best.1 {
            best = (c, d);
        }
    }
    best
}

fn plus_plus(x: &Matrix, k: usize, rng: &mut impl Rng) -> Matrix {
    let n = x.rows();
    let mut centers = Matrix::zeros(k, x.cols());
    centers.row_mut(0).copy_from_slice(x.row(rng.gen_range(0..n)));
    let mut d2: Vec<f64> = x.row_iter().map(|r| sq_dist(r, centers.row(0))).collect();
    for c in 1..k {
        let total: f64 = d2.iter().sum();
        let pick = if total > 0.0 {
            let mut u = rng.gen::<f64>() * total;
            let mut idx = n - 1;
            for (i, &w) in d2.iter().enumerate() {
                if u < w {
                    idx = i;
                    break;
                }
                u -= w;
            }
            idx
        } else {
            rng.gen_range(0..n)
        };
        centers.row_mut(c).copy_from_slice(x.row(pick));
        for (d, r) in d2.iter_mut().zip(x.row_iter()) {
            *d = d.min(sq_dist(r, centers.row(c)));
        }
    }
    centers
}

fn lloyd(x: &Matrix, mut centers: Matrix, max_iters: usize) -> KmeansResult {
    let (n, d) = x.shape();
    let k = centers.rows();
    let mut assignments = vec![usize::MAX; n];
    let mut trace = Vec::new();
    let mean = x.col_means();
    let slack = 1e-12 * x.row_iter().map(|r| sq_dist(r, &mean)).sum::<f64>();
    for _ in 0..max_iters.max(1) {
        let mut changed = false;
        let mut inertia = 0.0;
        for (i, row) in x.row_iter().enumerate() {
            let (c, dist) = nearest(row, &centers);
            inertia += dist;
            if assignments[i] != c {
                assignments[i] = c;
                changed = true;
            }
        }
        if let Some(&prev) = trace.last() {
            debug_assert!(inertia <= prev + slack, "Lloyd step raised inertia");
        }
        trace.push(inertia);
        if !changed {
            break;
        }
        let mut sums = Matrix::zeros(k, d);
        let mut counts = vec![0usize; k];
        for (row, &c) in x.row_iter().zip(&assignments) {
            counts[c] += 1;
            for (s, v) in sums.row_mut(c).iter_mut().zip(row) {
                *s += v;
            }
        }
        for c in 0..k {
            // an emptied cluster keeps its previous center
            if counts[c] > 0 {
                for (dst, s) in centers.row_mut(c).iter_mut().zip(sums.row(c)) {
                    *dst = s / counts[c] as f64;
                }
            }
        }
    }
    // inertia of the final assignment against the final centers
    let inertia = x.row_iter().zip(&assignments).map(|(r, &c)| sq_dist(r, centers.row(c))).sum();
    KmeansResult {
        assignments,
        centers,
        inertia,
        inertia_trace: trace,
    }
}

/// k-means++ seeding and Lloyd iterations; the lowest-inertia restart wins.
pub fn kmeans(x: &Matrix, k: usize, restarts: usize, max_iters: usize, stream: &RngStream) -> Result<KmeansResult> {
    let n = x.rows();
    if k == 0 || k > n {
        return Err(Error::InvalidArgument(format!("k = {k} must be in 1..={n}")));
    }
    if !x.is_finite() {
        return Err(Error::Domain("k-means input contains non-finite values".into()));
    }
    let mut best: Option<KmeansResult> = None;
    for r in 0..restarts.max(1) {
        let mut rng = stream.child(format!("restart{r}")).rng();
        let run = lloyd(x, plus_plus(x, k, &mut rng), max_iters);
        if best.as_ref().map_or(true, |b| run.inertia < b.inertia) {
            best = Some(run);
        }
    }
    Ok(best.expect("at least one restart"))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::gauss_sample;

    fn stream() -> RngStream {
        RngStream::new(5, "km")
    }

    fn col(v: &[f64]) -> Matrix {
        Matrix::from_vec(v.len(), 1, v.to_vec()).unwrap()
    }

    #[test]
    fn k_equals_n() {
        let x = col(&[3.0, -1.0, 8.0, 0.5]);
        let r = kmeans(&x, 4, 3, 100, &stream()).unwrap();
        assert_eq!(r.inertia, 0.0);
        let mut ids = r.assignments.clone();
        ids.sort();
        ids.dedup();
        assert_eq!(ids.len(), 4);
    }

    #[test]
    fn k_one_is_mean() {
        let x = Matrix::from_rows(&[[0.0, 1.0], [2.0, 3.0], [4.0, 8.0]]).unwrap();
        let r = kmeans(&x, 1, 1, 10, &stream()).unwrap();
        assert_eq!(r.centers.row(0), &[2.0, 4.0]);
        let want: f64 = x.row_iter().map(|row| sq_dist(row, &[2.0, 4.0])).sum();
        assert!((r.inertia - want).abs() < 1e-12);
    }

    #[test]
    fn two_blobs_match_exhaustive_optimum() {
        let v = [0.0, 0.1, 0.2, 10.0, 10.1, 10.2];
        let r = kmeans(&col(&v), 2, 10, 300, &stream()).unwrap();
        let mut best = f64::INFINITY;
        for mask in 0u32..64 {
            let mut cost = 0.0;
            for side in [0, 1] {
                let pts: Vec<f64> = (0..6).filter(|i| (mask >> i) & 1 == side).map(|i| v[i]).collect();
                if pts.is_empty() {
                    continue;
                }
                let m = pts.iter().sum::<f64>() / pts.len() as f64;
                cost += pts.iter().map(|p| (p - m).powi(2)).sum::<f64>();
            }
            best = best.min(cost);
        }
        assert!((r.inertia - best).abs() < 1e-12);
        assert_eq!(r.assignments[0], r.assignments[2]);
        assert_ne!(r.assignments[0], r.assignments[3]);
        let mut c = r.centers.col(0);
        c.sort_by(f64::total_cmp);
        assert!((c[0] - 0.1).abs() < 1e-12 && (c[1] - 10.1).abs() < 1e-12);
    }

    #[test]
    fn trace_non_increasing_and_deterministic() {
        let x = Matrix::from_vec(60, 3, gauss_sample(&stream(), 180, 0.0, 1.0).unwrap()).unwrap();
        let a = kmeans(&x, 4, 3, 300, &stream()).unwrap();
        assert!(a.inertia_trace.windows(2).all(|w| w[1] <= w[0]));
        assert_eq!(a, kmeans(&x, 4, 3, 300, &stream()).unwrap());
    }

    #[test]
    fn errors() {
        assert!(kmeans(&col(&[1.0, 2.0]), 3, 1, 10, &stream()).is_err());
        assert!(kmeans(&col(&[1.0, 2.0]), 0, 1, 10, &stream()).is_err());
    }
}
