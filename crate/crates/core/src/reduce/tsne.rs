use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::error::{dim_err, Error, Result};
use crate::numerics::csv::fmt_f64;
use crate::numerics::matrix::sq_dist;
use crate::numerics::{gauss_sample, Matrix, RngStream};

/// Allowed gap between achieved and target perplexity per point.
pub const PERPLEXITY_TOL: f64 = 1e-4;

const BETA_SEARCH_ITERS: usize = 200;
const P_FLOOR: f64 = 1e-12;
const MIN_GAIN: f64 = 0.01;
const INIT_STD: f64 = 1e-2;
const KL_EVERY: usize = 10;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TsneConfig {
    /// Clipped to `(n − 1)/3` for small inputs.
    pub perplexity: f64,
    pub iterations: usize,
    pub learning_rate: f64,
    pub early_exaggeration: f64,
    pub exaggeration_iters: usize,
    pub initial_momentum: f64,
    pub final_momentum: f64,
    pub momentum_switch: usize,
    pub seed: u64,
}

impl Default for TsneConfig {
    fn default() -> Self {
        Self {
            perplexity: 30.0,
            iterations: 1000,
            learning_rate: 200.0,
            early_exaggeration: 12.0,
            exaggeration_iters: 250,
            initial_momentum: 0.5,
            final_momentum: 0.8,
            momentum_switch: 250,
            seed: 0,
        }
    }
}

impl TsneConfig {
    /// Perplexity actually targeted for `n` points.
    pub fn effective_perplexity(&self, n: usize) -> Result<f64> {
        if n < 5 {
            return Err(Error::InvalidArgument(format!("t-SNE needs at least 5 points, got {n}")));
        }
        let p = self.perplexity.min((n as f64 - 1.0) / 3.0);
        if !(p > 1.0) {
            return Err(Error::InvalidArgument(format!(
                "perplexity {} is infeasible for {n} points",
                self.perplexity
            )));
        }
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        if self.iterations < self.exaggeration_iters {
            return Err(Error::InvalidArgument(format!(
                "iterations {} < exaggeration_iters {}",
                self.iterations, self.exaggeration_iters
            )));
        }
        for (name, v) in [
            ("learning_rate", self.learning_rate),
            ("early_exaggeration", self.early_exaggeration),
        ] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::InvalidArgument(format!("{name} must be positive, got {v}")));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TsneResult {
    pub embedding: Matrix,
    /// `(iteration, KL(P‖Q))` every ten iterations and at the end.
    pub kl_trace: Vec<(usize, f64)>,
    /// Achieved perplexity of each conditional distribution.
    pub perplexities: Vec<f64>,
}

fn pairwise_sq(x: &Matrix) -> Matrix {
    let n = x.rows();
    let mut d = Matrix::zeros(n, n);
    for i in 0..n {
        for j in i + 1..n {
            let v = sq_dist(x.row(i), x.row(j));
            d[(i, j)] = v;
            d[(j, i)] = v;
        }
    }
    d
}

/// Conditional row `p_{·|i}` for precision `beta`; returns the entropy in nats.
fn conditional_row(dist: &[f64], i: usize, beta: f64, out: &mut [f64]) -> f64 {
    let dmin = dist
        .iter()
        .enumerate()
        .filter(|&(j, _)| j != i)
        .map(|(_, &v)| v)
        .fold(f64::INFINITY, f64::min);
    let mut sum = 0.0;
    let mut weighted = 0.0;
    for (j, (o, &dv)) in out.iter_mut().zip(dist).enumerate() {
        if j == i {
            *o = 0.0;
            continue;
        }
        let shifted = dv - dmin;
        *o = (-beta * shifted).exp();
        sum += *o;
        weighted += *o * shifted;
    }
    out.iter_mut().for_each(|v| *v /= sum);
    sum.ln() + beta * weighted / sum
}

/// Row `i` is `p_{·|i}`, its precision found by bisection to the target perplexity.
///
/// Returns the conditionals and the achieved perplexity of each row.
pub fn conditional_probabilities(x: &Matrix, perplexity: f64) -> Result<(Matrix, Vec<f64>)> {
    let n = x.rows();
    let dist = pairwise_sq(x);
    let target = perplexity.ln();
    let mut cond = Matrix::zeros(n, n);
    let mut achieved = vec![0.0; n];
    for i in 0..n {
        let (mut beta, mut lo, mut hi) = (1.0, 0.0, f64::INFINITY);
        let mut row = vec![0.0; n];
        let mut ok = false;
        for _ in 0..BETA_SEARCH_ITERS {
            let h = conditional_row(dist.row(i), i, beta, &mut row);
            achieved[i] = h.exp();
            if (achieved[i] - perplexity).abs() <= PERPLEXITY_TOL * 0.1 {
                ok = true;
                break;
            }
            if h > target {
                lo = beta;
                beta = if hi.is_finite() { 0.5 * (beta + hi) } else { beta * 2.0 };
            } else {
                hi = beta;
                beta = 0.5 * (beta + lo);
            }
        }
        if !ok && (achieved[i] - perplexity).abs() > PERPLEXITY_TOL {
            return Err(Error::Numerical {
                iteration: i,
                what: format!(
                    "perplexity search for point {i} stalled at {} (target {perplexity})",
                    achieved[i]
                ),
            });
        }
        cond.row_mut(i).copy_from_slice(&row);
    }
    Ok((cond, achieved))
}

/// Symmetrized joint `P = (P_cond + P_condᵀ)/2n`: symmetric, zero diagonal, sums to 1.
///
/// Returns `(P, achieved perplexities)`.
pub fn joint_probabilities(x: &Matrix, perplexity: f64) -> Result<(Matrix, Vec<f64>)> {
    let n = x.rows();
    let (cond, achieved) = conditional_probabilities(x, perplexity)?;
    let scale = 1.0 / (2.0 * n as f64);
    let p = Matrix::from_fn(n, n, |i, j| (cond[(i, j)] + cond[(j, i)]) * scale);
    Ok((p, achieved))
}

/// Exact t-SNE embedding into two dimensions.
pub fn tsne_embed(x: &Matrix, cfg: &TsneConfig) -> Result<Matrix> {
    Ok(tsne_run(x, cfg)?.embedding)
}

/// Exact t-SNE with its objective trace.
pub fn tsne_run(x: &Matrix, cfg: &TsneConfig) -> Result<TsneResult> {
    cfg.validate()?;
    let n = x.rows();
    let perplexity = cfg.effective_perplexity(n)?;
    if !x.is_finite() {
        return Err(Error::Domain("t-SNE input contains non-finite values".into()));
    }
    let (p, perplexities) = joint_probabilities(x, perplexity)?;
    let init = gauss_sample(&RngStream::new(cfg.seed, "tsne/init"), n * 2, 0.0, INIT_STD)?;
    let mut y = Matrix::from_vec(n, 2, init)?;
    let mut update = Matrix::zeros(n, 2);
    let mut gains = Matrix::from_fn(n, 2, |_, _| 1.0);
    let mut num = Matrix::zeros(n, n);
    let mut grad = Matrix::zeros(n, 2);
    let mut kl_trace = Vec::new();

    for it in 0..=cfg.iterations {
        let mut z = 0.0;
        for i in 0..n {
            for j in i + 1..n {
                let v = 1.0 / (1.0 + sq_dist(y.row(i), y.row(j)));
                num[(i, j)] = v;
                num[(j, i)] = v;
                z += 2.0 * v;
            }
        }
        if it % KL_EVERY == 0 || it == cfg.iterations {
            let kl = kl_divergence(&p, &num, z);
            if !kl.is_finite() {
                return Err(Error::Numerical {
                    iteration: it,
                    what: "t-SNE objective is not finite".into(),
                });
            }
            kl_trace.push((it, kl));
        }
        if it == cfg.iterations {
            break;
        }
        let exag = if it < cfg.exaggeration_iters { cfg.early_exaggeration } else { 1.0 };
        for i in 0..n {
            let (mut g0, mut g1) = (0.0, 0.0);
            for j in 0..n {
                if i == j {
                    continue;
                }
                let w = (exag * p[(i, j)].max(P_FLOOR) - num[(i, j)] / z) * num[(i, j)];
                g0 += w * (y[(i, 0)] - y[(j, 0)]);
                g1 += w * (y[(i, 1)] - y[(j, 1)]);
            }
            grad.row_mut(i).copy_from_slice(&[4.0 * g0, 4.0 * g1]);
        }
        if !grad.is_finite() {
            return Err(Error::Numerical {
                iteration: it,
                what: "t-SNE gradient is not finite".into(),
            });
        }
        let momentum = if it < cfg.momentum_switch { cfg.initial_momentum } else { cfg.final_momentum };
        let (ys, us, gs, gr) = (y.as_mut_slice(), update.as_mut_slice(), gains.as_mut_slice(), grad.as_slice());
        for k in 0..ys.len() {
            gs[k] = if (gr[k] > 0.0) != (us[k] > 0.0) { gs[k] + 0.2 } else { gs[k] * 0.8 };
            gs[k] = gs[k].max(MIN_GAIN);
            us[k] = momentum * us[k] - cfg.learning_rate * gs[k] * gr[k];
            ys[k] += us[k];
        }
        let mean = y.col_means();
        for i in 0..n {
            y[(i, 0)] -= mean[0];
            y[(i, 1)] -= mean[1];
        }
    }
    Ok(TsneResult {
        embedding: y,
        kl_trace,
        perplexities,
    })
}

fn kl_divergence(p: &Matrix, num: &Matrix, z: f64) -> f64 {
    let mut kl = 0.0;
    for (pv, nv) in p.as_slice().iter().zip(num.as_slice()) {
        if *pv > 0.0 {
            kl += pv * (pv / (nv / z).max(f64::MIN_POSITIVE)).ln();
        }
    }
    kl
}

/// `x,y,label` rows.
pub fn embedding_csv(embedding: &Matrix, labels: &[usize]) -> Result<String> {
    if embedding.cols() != 2 || labels.len() != embedding.rows() {
        return dim_err(format!(
            "embedding {:?} with {} labels",
            embedding.shape(),
            labels.len()
        ));
    }
    let mut s = String::from("x,y,label\n");
    for (row, l) in embedding.row_iter().zip(labels) {
        let _ = writeln!(s, "{},{},{l}", fmt_f64(row[0]), fmt_f64(row[1]));
    }
    Ok(s)
}
