//! One-hidden-layer networks: the fixed-output-layer theory net and a trainable
//! two-layer MLP.

use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use crate::error::{dim_err, Error, Result};
use crate::numerics::Matrix;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ActivationKind {
    /// `z³/3` on `[-1, 1]`, `z ∓ 2/3` outside.
    SmoothedCubic,
    Relu,
}

impl ActivationKind {
    #[inline]
    pub fn value(self, z: f64) -> f64 {
        match self {
            ActivationKind::SmoothedCubic => {
                if z >= 1.0 {
                    z - 2.0 / 3.0
                } else if z <= -1.0 {
                    z + 2.0 / 3.0
                } else {
                    z * z * z / 3.0
                }
            }
            ActivationKind::Relu => z.max(0.0),
        }
    }

    /// Derivative; ReLU uses subgradient 0 at 0.
    #[inline]
    pub fn deriv(self, z: f64) -> f64 {
        match self {
            ActivationKind::SmoothedCubic => {
                if z.abs() <= 1.0 {
                    z * z
                } else {
                    1.0
                }
            }
            ActivationKind::Relu => {
                if z > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
        }
    }

    fn code(self) -> u8 {
        match self {
            ActivationKind::SmoothedCubic => 0,
            ActivationKind::Relu => 1,
        }
    }

    fn from_code(c: u8) -> Result<Self> {
        match c {
            0 => Ok(ActivationKind::SmoothedCubic),
            1 => Ok(ActivationKind::Relu),
            _ => Err(Error::Parse(format!("unknown activation code {c}"))),
        }
    }
}

pub fn activation_value(z: f64, kind: ActivationKind) -> f64 {
    kind.value(z)
}

pub fn activation_deriv(z: f64, kind: ActivationKind) -> f64 {
    kind.deriv(z)
}

#[derive(Debug, Clone, PartialEq)]
pub enum SecondLayer {
    /// Scalar output `f = 1ᵀh`.
    FixedOnes,
    /// Logits `h A + b` with `A: m × outputs`.
    Trainable { a: Matrix, bias: Vec<f64> },
}

#[derive(Debug, Clone, PartialEq)]
pub struct TwoLayerNet {
    /// `d × m`; column `r` is the weight vector of hidden unit `r`.
    pub w1: Matrix,
    pub second: SecondLayer,
    pub activation: ActivationKind,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ForwardResult {
    /// `n × m` post-activation hidden representations.
    pub hidden: Matrix,
    /// `n × 1` for fixed-ones nets, `n × outputs` logits otherwise.
    pub output: Matrix,
}

/// Gradients of the softmax cross-entropy loss.
#[derive(Debug, Clone, PartialEq)]
pub struct SoftmaxGrads {
    pub w1: Matrix,
    pub a: Matrix,
    pub bias: Vec<f64>,
}

impl TwoLayerNet {
    pub fn fixed_ones(w1: Matrix, activation: ActivationKind) -> Self {
        Self {
            w1,
            second: SecondLayer::FixedOnes,
            activation,
        }
    }

    pub fn trainable(w1: Matrix, a: Matrix, bias: Vec<f64>, activation: ActivationKind) -> Result<Self> {
        if a.rows() != w1.cols() {
            return dim_err(format!(
                "second layer has {} rows for {} hidden units",
                a.rows(),
                w1.cols()
            ));
        }
        if bias.len() != a.cols() {
            return dim_err(format!("{} biases for {} outputs", bias.len(), a.cols()));
        }
        Ok(Self {
            w1,
            second: SecondLayer::Trainable { a, bias },
            activation,
        })
    }

    pub fn input_dim(&self) -> usize {
        self.w1.rows()
    }

    pub fn hidden_dim(&self) -> usize {
        self.w1.cols()
    }

    pub fn outputs(&self) -> usize {
        match &self.second {
            SecondLayer::FixedOnes => 1,
            SecondLayer::Trainable { a, .. } => a.cols(),
        }
    }

    fn check_input(&self, x: &Matrix) -> Result<()> {
        if x.cols() != self.input_dim() {
            return dim_err(format!(
                "input has {} features, net expects {}",
                x.cols(),
                self.input_dim()
            ));
        }
        Ok(())
    }

    /// `X W`, the hidden pre-activations.
    pub fn preactivations(&self, x: &Matrix) -> Result<Matrix> {
        self.check_input(x)?;
        x.matmul(&self.w1)
    }

    pub fn forward(&self, x: &Matrix) -> Result<ForwardResult> {
        let pre = self.preactivations(x)?;
        Ok(self.forward_from_pre(&pre))
    }

    pub(crate) fn forward_from_pre(&self, pre: &Matrix) -> ForwardResult {
        let act = self.activation;
        let hidden = pre.map(|z| act.value(z));
        let output = match &self.second {
            SecondLayer::FixedOnes => Matrix::from_fn(hidden.rows(), 1, |i, _| hidden.row(i).iter().sum()),
            SecondLayer::Trainable { a, bias } => {
                let mut out = hidden.matmul(a).expect("hidden width matches second layer");
                for i in 0..out.rows() {
                    for (v, b) in out.row_mut(i).iter_mut().zip(bias) {
                        *v += b;
                    }
                }
                out
            }
        };
        ForwardResult { hidden, output }
    }

    /// Squared Frobenius norm of all weights (biases excluded).
    pub fn weight_norm_sq(&self) -> f64 {
        let w = self.w1.as_slice().iter().map(|v| v * v).sum::<f64>();
        match &self.second {
            SecondLayer::FixedOnes => w,
            SecondLayer::Trainable { a, .. } => w + a.as_slice().iter().map(|v| v * v).sum::<f64>(),
        }
    }

    pub fn is_finite(&self) -> bool {
        self.w1.is_finite()
            && match &self.second {
                SecondLayer::FixedOnes => true,
                SecondLayer::Trainable { a, bias } => a.is_finite() && bias.iter().all(|b| b.is_finite()),
            }
    }
}

pub fn forward(net: &TwoLayerNet, x: &Matrix) -> Result<ForwardResult> {
    net.forward(x)
}

fn check_pm1(y: &[f64]) -> Result<()> {
    match y.iter().find(|&&v| v != 1.0 && v != -1.0) {
        Some(v) => Err(Error::InvalidArgument(format!("label {v} is not ±1"))),
        None => Ok(()),
    }
}

fn require_fixed(net: &TwoLayerNet) -> Result<()> {
    match net.second {
        SecondLayer::FixedOnes => Ok(()),
        SecondLayer::Trainable { .. } => Err(Error::InvalidArgument(
            "unhinged loss needs a fixed all-ones second layer".into(),
        )),
    }
}

/// `L = (1/n) Σ -y_i f(x_i) / 2`.
pub fn unhinged_loss(net: &TwoLayerNet, x: &Matrix, y: &[f64]) -> Result<f64> {
    require_fixed(net)?;
    check_pm1(y)?;
    if y.len() != x.rows() {
        return dim_err(format!("{} labels for {} samples", y.len(), x.rows()));
    }
    let out = net.forward(x)?.output;
    Ok(unhinged_from_outputs(out.as_slice(), y))
}

pub(crate) fn unhinged_from_outputs(f: &[f64], y: &[f64]) -> f64 {
    let n = y.len().max(1) as f64;
    -f.iter().zip(y).map(|(f, y)| y * f).sum::<f64>() / (2.0 * n)
}

/// `∂L/∂W` for the unhinged loss; column `r` is `-(1/2n) Σ_i y_i σ'(x_iᵀw_r) x_i`.
pub fn grad_unhinged(net: &TwoLayerNet, x: &Matrix, y: &[f64]) -> Result<Matrix> {
    require_fixed(net)?;
    check_pm1(y)?;
    if y.len() != x.rows() {
        return dim_err(format!("{} labels for {} samples", y.len(), x.rows()));
    }
    let pre = net.preactivations(x)?;
    Ok(grad_unhinged_from_pre(net.activation, x, &pre, y))
}

pub(crate) fn grad_unhinged_from_pre(act: ActivationKind, x: &Matrix, pre: &Matrix, y: &[f64]) -> Matrix {
    let scale = -1.0 / (2.0 * y.len() as f64);
    let mut dz = pre.clone();
    for (i, &yi) in y.iter().enumerate() {
        for v in dz.row_mut(i) {
            *v = scale * yi * act.deriv(*v);
        }
    }
    x.t_matmul(&dz).expect("shapes checked by caller")
}

fn check_classes<'a>(net: &'a TwoLayerNet, x: &Matrix, y: &[usize]) -> Result<(usize, &'a Matrix, &'a [f64])> {
    let (a, bias) = match &net.second {
        SecondLayer::Trainable { a, bias } => (a, bias.as_slice()),
        SecondLayer::FixedOnes => {
            return Err(Error::InvalidArgument(
                "softmax cross-entropy needs a trainable second layer".into(),
            ))
        }
    };
    if y.len() != x.rows() {
        return dim_err(format!("{} labels for {} samples", y.len(), x.rows()));
    }
    let k = a.cols();
    if let Some(&bad) = y.iter().find(|&&c| c >= k) {
        return Err(Error::InvalidArgument(format!("label {bad} outside 0..{k}")));
    }
    Ok((k, a, bias))
}

/// Row-wise softmax in place; returns `Σ_i -log p_i[y_i]`.
pub(crate) fn softmax_rows(logits: &mut Matrix, y: &[usize]) -> f64 {
    let mut nll = 0.0;
    for (i, &yi) in y.iter().enumerate() {
        let row = logits.row_mut(i);
        let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let mut sum = 0.0;
        for v in row.iter_mut() {
            *v = (*v - max).exp();
            sum += *v;
        }
        for v in row.iter_mut() {
            *v /= sum;
        }
        nll -= row[yi].max(f64::MIN_POSITIVE).ln();
    }
    nll
}

/// Mean softmax cross-entropy.
pub fn softmax_ce_loss(net: &TwoLayerNet, x: &Matrix, y: &[usize]) -> Result<f64> {
    check_classes(net, x, y)?;
    let mut logits = net.forward(x)?.output;
    Ok(softmax_rows(&mut logits, y) / y.len().max(1) as f64)
}

/// Exact gradients of the mean softmax cross-entropy.
pub fn grad_softmax_ce(net: &TwoLayerNet, x: &Matrix, y: &[usize]) -> Result<SoftmaxGrads> {
    check_classes(net, x, y)?;
    let pre = net.preactivations(x)?;
    Ok(softmax_grads_from_pre(net, x, &pre, y).1)
}

/// Returns (mean loss, gradients, hidden) computed from precomputed pre-activations.
pub(crate) fn softmax_grads_from_pre(
    net: &TwoLayerNet,
    x: &Matrix,
    pre: &Matrix,
    y: &[usize],
) -> (f64, SoftmaxGrads, Matrix) {
    let SecondLayer::Trainable { a, .. } = &net.second else {
        unreachable!("checked by caller")
    };
    let n = y.len().max(1) as f64;
    let fwd = net.forward_from_pre(pre);
    let mut g = fwd.output;
    let loss = softmax_rows(&mut g, y) / n;
    for (i, &yi) in y.iter().enumerate() {
        let row = g.row_mut(i);
        row[yi] -= 1.0;
        row.iter_mut().for_each(|v| *v /= n);
    }
    let ga = fwd.hidden.t_matmul(&g).expect("shapes agree");
    let mut gb = vec![0.0; g.cols()];
    for r in g.row_iter() {
        for (acc, v) in gb.iter_mut().zip(r) {
            *acc += v;
        }
    }
    let mut dz = g.matmul_t(a).expect("shapes agree");
    let act = net.activation;
    for (d, &z) in dz.as_mut_slice().iter_mut().zip(pre.as_slice()) {
        *d *= act.deriv(z);
    }
    let gw = x.t_matmul(&dz).expect("shapes agree");
    (
        loss,
        SoftmaxGrads {
            w1: gw,
            a: ga,
            bias: gb,
        },
        fwd.hidden,
    )
}

const MAGIC: &[u8; 4] = b"CSW1";
const VERSION: u32 = 1;

/// Binary weight file: little-endian header `CSW1`, version, d, m, mode, activation,
/// then `w1` row-major; trainable nets append output count, `a` row-major and the biases.
pub fn write_weights<W: Write>(mut w: W, net: &TwoLayerNet) -> Result<()> {
    let to_u32 = |v: usize| -> Result<u32> {
        u32::try_from(v).map_err(|_| Error::Dimension(format!("{v} does not fit in u32")))
    };
    w.write_all(MAGIC)?;
    w.write_all(&VERSION.to_le_bytes())?;
    w.write_all(&to_u32(net.input_dim())?.to_le_bytes())?;
    w.write_all(&to_u32(net.hidden_dim())?.to_le_bytes())?;
    let mode: u8 = match net.second {
        SecondLayer::FixedOnes => 0,
        SecondLayer::Trainable { .. } => 1,
    };
    w.write_all(&[mode, net.activation.code()])?;
    for v in net.w1.as_slice() {
        w.write_all(&v.to_le_bytes())?;
    }
    if let SecondLayer::Trainable { a, bias } = &net.second {
        w.write_all(&to_u32(a.cols())?.to_le_bytes())?;
        for v in a.as_slice().iter().chain(bias) {
            w.write_all(&v.to_le_bytes())?;
        }
    }
    Ok(())
}

pub fn read_weights<R: Read>(mut r: R) -> Result<TwoLayerNet> {
    let mut magic = [0u8; 4];
    r.read_exact(&mut magic)?;
    if &magic != MAGIC {
        return Err(Error::Parse("bad weight file magic".into()));
    }
    let mut u32buf = [0u8; 4];
    let mut read_u32 = |r: &mut R| -> Result<u32> {
        r.read_exact(&mut u32buf)?;
        Ok(u32::from_le_bytes(u32buf))
    };
    let version = read_u32(&mut r)?;
    if version != VERSION {
        return Err(Error::Parse(format!("unsupported weight file version {version}")));
    }
    let d = read_u32(&mut r)? as usize;
    let m = read_u32(&mut r)? as usize;
    let mut flags = [0u8; 2];
    r.read_exact(&mut flags)?;
    let activation = ActivationKind::from_code(flags[1])?;
    let read_f64s = |r: &mut R, n: usize| -> Result<Vec<f64>> {
        let mut buf = [0u8; 8];
        (0..n)
            .map(|_| {
                r.read_exact(&mut buf)?;
                Ok(f64::from_le_bytes(buf))
            })
            .collect()
    };
    let w1 = Matrix::from_vec(d, m, read_f64s(&mut r, d * m)?)?;
    match flags[0] {
        0 => Ok(TwoLayerNet::fixed_ones(w1, activation)),
        1 => {
            let k = read_u32(&mut r)? as usize;
            let a = Matrix::from_vec(m, k, read_f64s(&mut r, m * k)?)?;
            let bias = read_f64s(&mut r, k)?;
            TwoLayerNet::trainable(w1, a, bias, activation)
        }
        other => Err(Error::Parse(format!("unknown second-layer mode {other}"))),
    }
}
