//! Deterministic full-batch gradient descent.
//!
//! Every update is `W ← W − η(∇L + λW)`. For the unhinged loss on a fixed-ones
//! net with fewer samples than input dimensions, the trainer runs in sample
//! space instead: every gradient lies in the row space of `X`, so
//! `W(t) = s_t W(0) + Xᵀ A(t)` with `s_t = (1 − ηλ)^t`, and the pre-activations
//! `X W(t) = s_t X W(0) + (X Xᵀ) A(t)` need only the `n × n` Gram matrix. The
//! iterates are the same as the direct path up to floating-point rounding.

use std::collections::BTreeSet;
use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{dim_err, Error, Result};
use crate::model::{
    grad_unhinged_from_pre, softmax_grads_from_pre, unhinged_from_outputs, ActivationKind,
    SecondLayer, TwoLayerNet,
};
use crate::numerics::{csv, gauss_sample, Matrix, RngStream};
use crate::synthgen::LabeledDataset;

const DIVERGENCE_LOSS: f64 = 1e12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LossKind {
    Unhinged,
    SoftmaxCe,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Solver {
    /// Sample-space iteration when it applies and `n < d`, direct otherwise.
    #[default]
    Auto,
    Direct,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainConfig {
    pub eta: f64,
    pub steps: usize,
    #[serde(default)]
    pub weight_decay: f64,
    pub init_std: f64,
    pub loss: LossKind,
    #[serde(default)]
    pub seed: u64,
    /// 0 logs only the first and last step.
    #[serde(default)]
    pub checkpoint_every: usize,
    #[serde(default)]
    pub extra_checkpoints: Vec<usize>,
    /// Keep hidden representations at each checkpoint.
    #[serde(default)]
    pub record_hidden: bool,
    #[serde(default)]
    pub solver: Solver,
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.eta >= 0.0) || !self.eta.is_finite() {
            return Err(Error::Domain(format!("eta = {} must be non-negative", self.eta)));
        }
        if !(self.weight_decay >= 0.0) {
            return Err(Error::Domain(format!("weight_decay = {} < 0", self.weight_decay)));
        }
        if !(self.init_std >= 0.0) {
            return Err(Error::Domain(format!("init_std = {} < 0", self.init_std)));
        }
        Ok(())
    }

    /// Steps at which the log records a checkpoint: 0, multiples of
    /// `checkpoint_every`, the extras, and the final step.
    pub fn checkpoint_steps(&self) -> BTreeSet<usize> {
        let mut s: BTreeSet<usize> = [0, self.steps].into_iter().collect();
        if self.checkpoint_every > 0 {
            s.extend((0..=self.steps).step_by(self.checkpoint_every));
        }
        s.extend(self.extra_checkpoints.iter().copied().filter(|&k| k <= self.steps));
        s
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub step: usize,
    pub loss: f64,
    pub accuracy: f64,
    /// Frobenius norm of all weights.
    pub weight_norm: f64,
    pub hidden: Option<Matrix>,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct TrainLog {
    pub checkpoints: Vec<Checkpoint>,
}

impl TrainLog {
    pub fn last(&self) -> Option<&Checkpoint> {
        self.checkpoints.last()
    }

    /// `step,loss,accuracy,weight_norm` rows.
    pub fn to_csv(&self) -> String {
        let mut s = String::from("step,loss,accuracy,weight_norm\n");
        for c in &self.checkpoints {
            let _ = writeln!(
                s,
                "{},{},{},{}",
                c.step,
                csv::fmt_f64(c.loss),
                csv::fmt_f64(c.accuracy),
                csv::fmt_f64(c.weight_norm)
            );
        }
        s
    }

    /// Writes `train_log.csv` plus `rep_step<k>.csv` for every recorded snapshot.
    /// Returns the file names written.
    pub fn save(&self, dir: impl AsRef<Path>) -> Result<Vec<String>> {
        let dir = dir.as_ref();
        fs::create_dir_all(dir)?;
        fs::write(dir.join("train_log.csv"), self.to_csv())?;
        let mut names = vec!["train_log.csv".to_string()];
        for c in &self.checkpoints {
            if let Some(h) = &c.hidden {
                let name = format!("rep_step{}.csv", c.step);
                csv::save_matrix(dir.join(&name), h)?;
                names.push(name);
            }
        }
        Ok(names)
    }
}

/// Training targets: ±1 for the unhinged loss, class ids for cross-entropy.
#[derive(Debug, Clone, PartialEq)]
pub enum Targets {
    Signs(Vec<f64>),
    Classes(Vec<usize>),
}

impl Targets {
    fn len(&self) -> usize {
        match self {
            Targets::Signs(v) => v.len(),
            Targets::Classes(v) => v.len(),
        }
    }
}

/// Entries i.i.d. N(0, ω²).
pub fn init_weights(d: usize, m: usize, omega: f64, stream: &RngStream) -> Result<Matrix> {
    Matrix::from_vec(d, m, gauss_sample(stream, d * m, 0.0, omega)?)
}

/// Two-layer MLP: first layer N(0, ω²), second layer N(0, 1/m), zero bias.
pub fn init_mlp(
    d: usize,
    m: usize,
    outputs: usize,
    omega: f64,
    activation: ActivationKind,
    stream: &RngStream,
) -> Result<TwoLayerNet> {
    let w1 = init_weights(d, m, omega, &stream.child("w1"))?;
    let a = init_weights(m, outputs, 1.0 / (m.max(1) as f64).sqrt(), &stream.child("a"))?;
    TwoLayerNet::trainable(w1, a, vec![0.0; outputs], activation)
}

/// Trains on `data.y_train`. The unhinged loss needs binary training labels:
/// label 0 becomes +1 and label 1 becomes −1.
pub fn train_gd(net: &TwoLayerNet, data: &LabeledDataset, cfg: &TrainConfig) -> Result<(TwoLayerNet, TrainLog)> {
    let targets = match cfg.loss {
        LossKind::Unhinged => Targets::Signs(
            data.y_train
                .iter()
                .map(|&y| match y {
                    0 => Ok(1.0),
                    1 => Ok(-1.0),
                    other => Err(Error::InvalidArgument(format!(
                        "unhinged loss needs binary labels, found {other}"
                    ))),
                })
                .collect::<Result<_>>()?,
        ),
        LossKind::SoftmaxCe => Targets::Classes(data.y_train.clone()),
    };
    train_on(net, &data.x, &targets, cfg)
}

pub fn train_on(net: &TwoLayerNet, x: &Matrix, targets: &Targets, cfg: &TrainConfig) -> Result<(TwoLayerNet, TrainLog)> {
    cfg.validate()?;
    if targets.len() != x.rows() {
        return dim_err(format!("{} targets for {} samples", targets.len(), x.rows()));
    }
    if x.cols() != net.input_dim() {
        return dim_err(format!("input has {} features, net expects {}", x.cols(), net.input_dim()));
    }
    match (cfg.loss, &net.second, targets) {
        (LossKind::Unhinged, SecondLayer::FixedOnes, Targets::Signs(y)) => {
            if let Some(v) = y.iter().find(|&&v| v != 1.0 && v != -1.0) {
                return Err(Error::InvalidArgument(format!("label {v} is not ±1")));
            }
            if cfg.solver == Solver::Auto && x.rows() < x.cols() {
                train_unhinged_sample_space(net, x, y, cfg)
            } else {
                train_direct(net, x, targets, cfg)
            }
        }
        (LossKind::SoftmaxCe, SecondLayer::Trainable { a, .. }, Targets::Classes(y)) => {
            if let Some(&bad) = y.iter().find(|&&c| c >= a.cols()) {
                return Err(Error::InvalidArgument(format!("label {bad} outside 0..{}", a.cols())));
            }
            train_direct(net, x, targets, cfg)
        }
        _ => Err(Error::InvalidArgument(
            "loss, second-layer mode and targets do not match".into(),
        )),
    }
}

fn sign_accuracy(f: &[f64], y: &[f64]) -> f64 {
    let hits = f
        .iter()
        .zip(y)
        .filter(|(&f, &y)| (if f >= 0.0 { 1.0 } else { -1.0 }) == y)
        .count();
    hits as f64 / y.len().max(1) as f64
}

fn argmax_accuracy(logits: &Matrix, y: &[usize]) -> f64 {
    let hits = logits
        .row_iter()
        .zip(y)
        .filter(|(row, &yi)| argmax(row) == yi)
        .count();
    hits as f64 / y.len().max(1) as f64
}

pub(crate) fn argmax(row: &[f64]) -> usize {
    row.iter()
        .enumerate()
        .fold((0, f64::NEG_INFINITY), |best, (i, &v)| if v > best.1 { (i, v) } else { best })
        .0
}

fn diverged(step: usize, log: &TrainLog) -> Error {
    Error::Diverged {
        step,
        last_finite: log.last().cloned().map(Box::new),
    }
}

fn blown_up(loss: f64, net: &TwoLayerNet) -> bool {
    !loss.is_finite() || loss.abs() > DIVERGENCE_LOSS || !net.weight_norm_sq().is_finite()
}

fn train_direct(net: &TwoLayerNet, x: &Matrix, targets: &Targets, cfg: &TrainConfig) -> Result<(TwoLayerNet, TrainLog)> {
    let mut net = net.clone();
    let checkpoints = cfg.checkpoint_steps();
    let mut log = TrainLog::default();
    let decay = 1.0 - cfg.eta * cfg.weight_decay;
    for step in 0..=cfg.steps {
        let pre = x.matmul(&net.w1)?;
        let record = checkpoints.contains(&step);
        match targets {
            Targets::Signs(y) => {
                let fwd = record.then(|| net.forward_from_pre(&pre));
                if let Some(fwd) = fwd {
                    let f = fwd.output.as_slice();
                    let loss = unhinged_from_outputs(f, y);
                    if blown_up(loss, &net) {
                        return Err(diverged(step, &log));
                    }
                    log.checkpoints.push(Checkpoint {
                        step,
                        loss,
                        accuracy: sign_accuracy(f, y),
                        weight_norm: net.weight_norm_sq().sqrt(),
                        hidden: cfg.record_hidden.then_some(fwd.hidden),
                    });
                }
                if step == cfg.steps {
                    break;
                }
                let g = grad_unhinged_from_pre(net.activation, x, &pre, y);
                step_matrix(&mut net.w1, &g, cfg.eta, decay);
                if !net.w1.is_finite() {
                    return Err(diverged(step + 1, &log));
                }
            }
            Targets::Classes(y) => {
                let (loss, grads, hidden) = softmax_grads_from_pre(&net, x, &pre, y);
                if blown_up(loss, &net) {
                    return Err(diverged(step, &log));
                }
                if record {
                    let logits = net.forward_from_pre(&pre).output;
                    log.checkpoints.push(Checkpoint {
                        step,
                        loss,
                        accuracy: argmax_accuracy(&logits, y),
                        weight_norm: net.weight_norm_sq().sqrt(),
                        hidden: cfg.record_hidden.then_some(hidden),
                    });
                }
                if step == cfg.steps {
                    break;
                }
                step_matrix(&mut net.w1, &grads.w1, cfg.eta, decay);
                if let SecondLayer::Trainable { a, bias } = &mut net.second {
                    step_matrix(a, &grads.a, cfg.eta, decay);
                    for (b, g) in bias.iter_mut().zip(&grads.bias) {
                        *b -= cfg.eta * g;
                    }
                }
            }
        }
    }
    Ok((net, log))
}

/// `w ← decay·w − η·g`.
fn step_matrix(w: &mut Matrix, g: &Matrix, eta: f64, decay: f64) {
    for (wv, gv) in w.as_mut_slice().iter_mut().zip(g.as_slice()) {
        *wv = decay * *wv - eta * gv;
    }
}

fn train_unhinged_sample_space(
    net: &TwoLayerNet,
    x: &Matrix,
    y: &[f64],
    cfg: &TrainConfig,
) -> Result<(TwoLayerNet, TrainLog)> {
    let (n, m) = (x.rows(), net.hidden_dim());
    let act = net.activation;
    let gram = x.matmul_t(x)?;
    let z0 = x.matmul(&net.w1)?;
    let w0_sq = net.w1.as_slice().iter().map(|v| v * v).sum::<f64>();
    let mut coef = Matrix::zeros(n, m);
    let mut scale = 1.0;
    let decay = 1.0 - cfg.eta * cfg.weight_decay;
    let lr = cfg.eta / (2.0 * n as f64);
    let checkpoints = cfg.checkpoint_steps();
    let mut log = TrainLog::default();
    let mut z = z0.clone();
    for step in 0..=cfg.steps {
        // z = scale·Z0 + G·A
        let ga = gram.matmul(&coef)?;
        for ((zv, &z0v), &gav) in z.as_mut_slice().iter_mut().zip(z0.as_slice()).zip(ga.as_slice()) {
            *zv = scale * z0v + gav;
        }
        if checkpoints.contains(&step) {
            if !z.is_finite() {
                return Err(diverged(step, &log));
            }
            let hidden = z.map(|v| act.value(v));
            let f: Vec<f64> = hidden.row_iter().map(|r| r.iter().sum()).collect();
            let loss = unhinged_from_outputs(&f, y);
            // ‖sW0 + XᵀA‖² = s²‖W0‖² + 2s⟨Z0, A⟩ + ⟨A, GA⟩
            let cross: f64 = z0.as_slice().iter().zip(coef.as_slice()).map(|(a, b)| a * b).sum();
            let quad: f64 = coef.as_slice().iter().zip(ga.as_slice()).map(|(a, b)| a * b).sum();
            let norm_sq = (scale * scale * w0_sq + 2.0 * scale * cross + quad).max(0.0);
            if !loss.is_finite() || loss.abs() > DIVERGENCE_LOSS || !norm_sq.is_finite() {
                return Err(diverged(step, &log));
            }
            log.checkpoints.push(Checkpoint {
                step,
                loss,
                accuracy: sign_accuracy(&f, y),
                weight_norm: norm_sq.sqrt(),
                hidden: cfg.record_hidden.then_some(hidden),
            });
        }
        if step == cfg.steps {
            break;
        }
        for (i, &yi) in y.iter().enumerate() {
            let zr = z.row(i);
            let ar = &mut coef.as_mut_slice()[i * m..(i + 1) * m];
            for (a, &zv) in ar.iter_mut().zip(zr) {
                *a = decay * *a + lr * yi * act.deriv(zv);
            }
        }
        scale *= decay;
    }
    let mut w1 = net.w1.scale(scale);
    w1.axpy(1.0, &x.t_matmul(&coef)?)?;
    if !w1.is_finite() {
        return Err(diverged(cfg.steps, &log));
    }
    Ok((TwoLayerNet::fixed_ones(w1, act), log))
}

/// Multipliers applied to the asymptotic learning-rate and horizon formulas.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScheduleConstants {
    pub c_eta: f64,
    pub c_t: f64,
}

impl Default for ScheduleConstants {
    fn default() -> Self {
        // c_t sits on the plateau of the cross/within distance ratio; shorter
        // horizons stop before the hidden units separate the clusters.
        Self { c_eta: 0.5, c_t: 64.0 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Schedule {
    pub eta: f64,
    pub steps: usize,
    /// `8κ√d / τ`.
    pub c_frak: f64,
}

/// `𝔠 = 8κ√d/τ`, `η = c_η·min{𝔠³τ⁻⁴, 𝔠²ωτ⁻³, 𝔠²ωτ}`, `T = round(c_T / (ηωτ³))`.
pub fn theorem_schedule(kappa: f64, tau: f64, omega: f64, d: usize, consts: ScheduleConstants) -> Schedule {
    let c = 8.0 * kappa * (d as f64).sqrt() / tau;
    let eta = consts.c_eta
        * (c.powi(3) * tau.powi(-4))
            .min(c * c * omega * tau.powi(-3))
            .min(c * c * omega * tau);
    let steps = (consts.c_t / (eta * omega * tau.powi(3))).round();
    Schedule {
        eta,
        steps: if steps.is_finite() { steps as usize } else { 0 },
        c_frak: c,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{grad_unhinged, ActivationKind};
    use crate::numerics::RngStream;

    fn cfg(eta: f64, steps: usize, loss: LossKind) -> TrainConfig {
        TrainConfig {
            eta,
            steps,
            weight_decay: 0.0,
            init_std: 1.0,
            loss,
            seed: 0,
            checkpoint_every: 1,
            extra_checkpoints: vec![],
            record_hidden: false,
            solver: Solver::Direct,
        }
    }

    fn random(rows: usize, cols: usize, std: f64, label: &str) -> Matrix {
        init_weights(rows, cols, std, &RngStream::new(31, label)).unwrap()
    }

    fn signs(n: usize) -> Vec<f64> {
        (0..n).map(|i| if i % 3 == 0 { -1.0 } else { 1.0 }).collect()
    }

    #[test]
    fn init_weights_contract() {
        let s = RngStream::new(1, "init");
        assert_eq!(init_weights(5, 4, 0.0, &s).unwrap(), Matrix::zeros(5, 4));
        let w = init_weights(400, 300, 0.3, &s).unwrap();
        assert_eq!(w, init_weights(400, 300, 0.3, &s).unwrap());
        let n = w.as_slice().len() as f64;
        let std = (w.as_slice().iter().map(|v| v * v).sum::<f64>() / n).sqrt();
        assert!((std - 0.3).abs() < 0.02 * 0.3, "{std}");
    }

    #[test]
    fn zero_learning_rate_keeps_weights() {
        let net = TwoLayerNet::fixed_ones(random(4, 3, 0.5, "w"), ActivationKind::SmoothedCubic);
        let x = random(6, 4, 1.0, "x");
        let (out, log) = train_on(&net, &x, &Targets::Signs(signs(6)), &cfg(0.0, 5, LossKind::Unhinged)).unwrap();
        assert_eq!(out, net);
        assert_eq!(log.checkpoints.len(), 6);
    }

    #[test]
    fn zero_is_a_fixed_point_under_decay() {
        let net = TwoLayerNet::fixed_ones(Matrix::zeros(4, 3), ActivationKind::SmoothedCubic);
        let x = random(6, 4, 1.0, "x");
        let mut c = cfg(0.1, 20, LossKind::Unhinged);
        c.weight_decay = 0.5;
        let (out, _) = train_on(&net, &x, &Targets::Signs(signs(6)), &c).unwrap();
        assert!(out.w1.as_slice().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn one_step_matches_gradient() {
        let net = TwoLayerNet::fixed_ones(random(4, 3, 0.8, "w"), ActivationKind::SmoothedCubic);
        let x = random(6, 4, 1.0, "x");
        let y = signs(6);
        let eta = 0.05;
        let (out, _) = train_on(&net, &x, &Targets::Signs(y.clone()), &cfg(eta, 1, LossKind::Unhinged)).unwrap();
        let g = grad_unhinged(&net, &x, &y).unwrap();
        let delta = out.w1.sub(&net.w1).unwrap();
        assert!(delta.sub(&g.scale(-eta)).unwrap().max_abs() < 1e-15);
    }

    #[test]
    fn decay_only_contracts() {
        // relu with all-negative preactivations has zero gradient
        let x = Matrix::from_fn(5, 2, |i, _| 1.0 + i as f64);
        let w1 = Matrix::from_vec(2, 2, vec![-1.0, -2.0, -0.5, -1.0]).unwrap();
        let net = TwoLayerNet::trainable(w1.clone(), Matrix::zeros(2, 2), vec![0.0; 2], ActivationKind::Relu).unwrap();
        let mut c = cfg(0.1, 1, LossKind::SoftmaxCe);
        c.weight_decay = 0.3;
        let (out, _) = train_on(&net, &x, &Targets::Classes(vec![0, 1, 0, 1, 0]), &c).unwrap();
        let ratio = out.w1.frobenius_norm() / w1.frobenius_norm();
        assert!((ratio - (1.0 - 0.1 * 0.3)).abs() < 1e-15);
    }

    #[test]
    fn separable_pair_loss_monotone() {
        let x = Matrix::from_rows(&[[1.0, 0.5], [-1.0, -0.5]]).unwrap();
        let net = init_mlp(2, 4, 2, 0.5, ActivationKind::Relu, &RngStream::new(2, "mlp")).unwrap();
        for eta in [0.1, 0.05] {
            let (_, log) = train_on(&net, &x, &Targets::Classes(vec![0, 1]), &cfg(eta, 200, LossKind::SoftmaxCe)).unwrap();
            assert!(log.checkpoints.windows(2).all(|w| w[1].loss <= w[0].loss + 1e-15));
        }
    }

    #[test]
    fn sample_space_matches_direct() {
        let (n, d, m) = (12, 40, 5);
        let x = random(n, d, 1.0, "x");
        let net = TwoLayerNet::fixed_ones(random(d, m, 0.3, "w"), ActivationKind::SmoothedCubic);
        let y = signs(n);
        let mut c = cfg(0.2, 50, LossKind::Unhinged);
        c.weight_decay = 0.01;
        c.checkpoint_every = 10;
        c.record_hidden = true;
        let (direct, dlog) = train_on(&net, &x, &Targets::Signs(y.clone()), &c).unwrap();
        c.solver = Solver::Auto;
        let (fast, flog) = train_on(&net, &x, &Targets::Signs(y), &c).unwrap();
        assert!(direct.w1.sub(&fast.w1).unwrap().max_abs() < 1e-12);
        for (a, b) in dlog.checkpoints.iter().zip(&flog.checkpoints) {
            assert_eq!(a.step, b.step);
            assert!((a.loss - b.loss).abs() < 1e-12);
            assert!((a.weight_norm - b.weight_norm).abs() < 1e-10 * a.weight_norm);
            let (ha, hb) = (a.hidden.as_ref().unwrap(), b.hidden.as_ref().unwrap());
            assert!(ha.sub(hb).unwrap().max_abs() < 1e-12);
        }
    }

    #[test]
    fn divergence_is_reported() {
        let x = Matrix::from_fn(4, 2, |i, j| (i + j) as f64 * 1e3);
        let net = init_mlp(2, 3, 2, 1.0, ActivationKind::Relu, &RngStream::new(0, "d")).unwrap();
        let err = train_on(&net, &x, &Targets::Classes(vec![0, 1, 0, 1]), &cfg(1e200, 10, LossKind::SoftmaxCe)).unwrap_err();
        match err {
            Error::Diverged { step, last_finite } => {
                assert!(step >= 1);
                assert!(last_finite.is_some());
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn mismatched_loss_and_mode() {
        let net = TwoLayerNet::fixed_ones(random(2, 2, 1.0, "w"), ActivationKind::Relu);
        let x = random(3, 2, 1.0, "x");
        assert!(train_on(&net, &x, &Targets::Classes(vec![0, 1, 0]), &cfg(0.1, 1, LossKind::SoftmaxCe)).is_err());
        assert!(train_on(&net, &x, &Targets::Signs(vec![1.0, 0.0, 1.0]), &cfg(0.1, 1, LossKind::Unhinged)).is_err());
    }

    #[test]
    fn checkpoints_are_strictly_increasing() {
        let mut c = cfg(0.1, 25, LossKind::Unhinged);
        c.checkpoint_every = 10;
        c.extra_checkpoints = vec![3, 10, 99];
        assert_eq!(c.checkpoint_steps().into_iter().collect::<Vec<_>>(), vec![0, 3, 10, 20, 25]);
    }

    #[test]
    fn schedule_arithmetic() {
        let d = 1usize << 20;
        let tau = (d as f64).powf(0.52);
        let omega = (d as f64).powf(-0.53);
        let s = theorem_schedule(1.0, tau, omega, d, ScheduleConstants { c_eta: 0.5, c_t: 1.0 });
        // 8 * 2^10 / 2^10.4
        assert!((s.c_frak - 8.0 * 2f64.powf(-0.4)).abs() < 1e-12);
        assert!((s.c_frak - 6.06).abs() < 0.01);
        let s2 = theorem_schedule(2.0, tau, omega, d, ScheduleConstants { c_eta: 0.5, c_t: 1.0 });
        assert!((s2.c_frak - 2.0 * s.c_frak).abs() < 1e-12);
        let prod = s.steps as f64 * s.eta * omega * tau.powi(3);
        assert!((prod - 1.0).abs() <= s.eta * omega * tau.powi(3));
    }
}
