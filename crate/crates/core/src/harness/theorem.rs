use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{ActivationKind, TwoLayerNet};
use crate::numerics::{Matrix, RngStream};
use crate::synthgen::{sample_dataset, LabelTransform, MeanMode, MixtureSpec, OrthoBasis};
use crate::trainer::{init_weights, theorem_schedule, train_gd, LossKind, ScheduleConstants, Solver, TrainConfig};

/// Triple budget per seed; smaller populations are enumerated exhaustively.
pub const MAX_TRIPLES: usize = 10_000;

/// One parameter tuple of the four-cluster setting.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TheoremParams {
    pub kappa: f64,
    pub tau: f64,
    pub omega: f64,
    pub d: usize,
    pub n: usize,
    pub m: usize,
    pub eta: f64,
    pub steps: usize,
    pub seeds: Vec<u64>,
    /// Factor standing in for "≪".
    #[serde(default = "default_margin")]
    pub margin: f64,
    /// Minimum per-seed median ratio.
    #[serde(default = "default_threshold")]
    pub pass_threshold: f64,
    /// Fraction of seeds that must reach the threshold.
    #[serde(default = "default_fraction")]
    pub pass_fraction: f64,
}

fn default_margin() -> f64 {
    4.0
}

fn default_threshold() -> f64 {
    3.0
}

fn default_fraction() -> f64 {
    0.8
}

impl TheoremParams {
    /// `κ = 1, τ = d^0.52, ω = d^−0.53, m = ⌈ln d⌉, n = ⌊d^0.32⌋` rounded down to a multiple of 4,
    /// with the default schedule.
    pub fn paper_example(d: usize, seeds: Vec<u64>) -> Self {
        let df = d as f64;
        let (kappa, tau, omega) = (1.0, df.powf(0.52), df.powf(-0.53));
        let n = (df.powf(0.32).floor() as usize) / 4 * 4;
        let m = df.ln().ceil() as usize;
        let sched = theorem_schedule(kappa, tau, omega, d, ScheduleConstants::default());
        Self {
            kappa,
            tau,
            omega,
            d,
            n,
            m,
            eta: sched.eta,
            steps: sched.steps,
            seeds,
            margin: default_margin(),
            pass_threshold: default_threshold(),
            pass_fraction: default_fraction(),
        }
    }

    /// Recomputes `eta` and `steps` from the schedule formulas.
    pub fn with_schedule(mut self, consts: ScheduleConstants) -> Self {
        let s = theorem_schedule(self.kappa, self.tau, self.omega, self.d, consts);
        self.eta = s.eta;
        self.steps = s.steps;
        self
    }

    pub fn c_frak(&self) -> f64 {
        8.0 * self.kappa * (self.d as f64).sqrt() / self.tau
    }

    pub fn validate(&self) -> Result<()> {
        if self.n == 0 || self.n % 4 != 0 {
            return Err(Error::InvalidArgument(format!("n = {} must be a positive multiple of 4", self.n)));
        }
        if self.d == 0 || self.m == 0 {
            return Err(Error::InvalidArgument("d and m must be positive".into()));
        }
        for (name, v) in [("kappa", self.kappa), ("tau", self.tau), ("omega", self.omega), ("eta", self.eta)] {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(Error::InvalidArgument(format!("{name} = {v} must be finite and non-negative")));
            }
        }
        if !(self.tau > 0.0) {
            return Err(Error::InvalidArgument("tau must be positive".into()));
        }
        if self.seeds.is_empty() {
            return Err(Error::InvalidArgument("at least one seed is required".into()));
        }
        Ok(())
    }
}

/// One side of one condition: `small ≪ large` holds when `large / small ≥ margin`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConditionCheck {
    pub name: String,
    pub small: f64,
    pub large: f64,
    pub ratio: f64,
    pub pass: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConditionReport {
    pub c_frak: f64,
    pub margin: f64,
    pub checks: Vec<ConditionCheck>,
}

impl ConditionReport {
    pub fn all_pass(&self) -> bool {
        self.checks.iter().all(|c| c.pass)
    }
}

pub fn check_conditions(p: &TheoremParams) -> ConditionReport {
    let (d, n) = (p.d as f64, p.n as f64);
    let c = p.c_frak();
    let tw = p.tau * p.omega;
    let check = |name: &str, small: f64, large: f64| {
        let ratio = large / small;
        ConditionCheck {
            name: name.to_string(),
            small,
            large,
            ratio,
            pass: ratio >= p.margin,
        }
    };
    ConditionReport {
        c_frak: c,
        margin: p.margin,
        checks: vec![
            check("1.lower", n.sqrt() * d.powf(-0.25), c),
            check("1.upper", c, n.sqrt() * d.powf(-1.0 / 6.0)),
            check("2", n, d.cbrt()),
            check("3.lower", d.powf(-0.25) * n.sqrt() / c, tw),
            check("3.upper", tw, (p.m as f64).ln().powf(-0.5)),
        ],
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeedRatios {
    pub seed: u64,
    pub triples: usize,
    pub min_ratio: f64,
    pub median_ratio: f64,
    pub mean_ratio: f64,
    pub mean_within: f64,
    pub mean_cross: f64,
    pub train_accuracy: f64,
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RatioSummary {
    pub min: f64,
    pub median: f64,
    pub mean: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RatioReport {
    pub params: TheoremParams,
    pub c_frak: f64,
    pub conditions: Vec<ConditionCheck>,
    pub per_seed: Vec<SeedRatios>,
    /// Over the per-seed medians.
    pub summary: RatioSummary,
    pub seeds_passing: usize,
    pub pass: bool,
}

impl RatioReport {
    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)? + "\n")
    }
}

fn median(v: &mut [f64]) -> f64 {
    v.sort_by(f64::total_cmp);
    let k = v.len();
    if k == 0 {
        f64::NAN
    } else if k % 2 == 1 {
        v[k / 2]
    } else {
        0.5 * (v[k / 2 - 1] + v[k / 2])
    }
}

fn summarize(v: &[f64]) -> RatioSummary {
    let mut s = v.to_vec();
    RatioSummary {
        min: s.iter().copied().fold(f64::INFINITY, f64::min),
        mean: s.iter().sum::<f64>() / s.len().max(1) as f64,
        median: median(&mut s),
    }
}

/// Cross/within distance ratios for triples `i1 ≠ i2` in `c1`, `i3` in `c2`.
pub fn triple_ratios(h: &Matrix, c1: &[usize], c2: &[usize], stream: &RngStream) -> Vec<(f64, f64)> {
    let dist = |a: usize, b: usize| crate::numerics::matrix::sq_dist(h.row(a), h.row(b)).sqrt();
    let total = c1.len() * c1.len().saturating_sub(1) * c2.len();
    let mut out = Vec::with_capacity(total.min(MAX_TRIPLES));
    if total <= MAX_TRIPLES {
        for &i1 in c1 {
            for &i2 in c1 {
                if i1 == i2 {
                    continue;
                }
                for &i3 in c2 {
                    out.push((dist(i1, i2), dist(i1, i3)));
                }
            }
        }
    } else {
        let mut rng = stream.rng();
        while out.len() < MAX_TRIPLES {
            let i1 = c1[rng.gen_range(0..c1.len())];
            let i2 = c1[rng.gen_range(0..c1.len())];
            if i1 == i2 {
                continue;
            }
            let i3 = c2[rng.gen_range(0..c2.len())];
            out.push((dist(i1, i2), dist(i1, i3)));
        }
    }
    out
}

fn ratio(within: f64, cross: f64) -> f64 {
    if within == 0.0 {
        if cross == 0.0 {
            1.0
        } else {
            f64::INFINITY
        }
    } else {
        cross / within
    }
}

/// Generates the four-cluster data, trains the fixed-ones net with `(eta, steps)`,
/// and measures distances between hidden representations.
pub fn run_seed(p: &TheoremParams, seed: u64) -> Result<SeedRatios> {
    p.validate()?;
    let root = RngStream::new(seed, "theorem");
    let spec = MixtureSpec {
        num_clusters: 4,
        input_dim: p.d,
        samples_per_cluster: p.n / 4,
        noise_std: p.kappa,
        mean_mode: MeanMode::Orthogonal {
            tau: p.tau,
            basis: OrthoBasis::Random,
        },
    };
    let data = sample_dataset(&spec, &root.child("data"))?
        .with_transform(LabelTransform::Coarse { c_tilde: 2 }, &root.child("labels"))?;
    let w0 = init_weights(p.d, p.m, p.omega, &root.child("init"))?;
    let net = TwoLayerNet::fixed_ones(w0, ActivationKind::SmoothedCubic);
    let cfg = TrainConfig {
        eta: p.eta,
        steps: p.steps,
        weight_decay: 0.0,
        init_std: p.omega,
        loss: LossKind::Unhinged,
        seed,
        checkpoint_every: 0,
        extra_checkpoints: Vec::new(),
        record_hidden: true,
        solver: Solver::Auto,
    };
    let (_, log) = train_gd(&net, &data, &cfg)?;
    let last = log.last().expect("final checkpoint is always logged");
    let h = last.hidden.as_ref().expect("hidden recorded");
    // clusters 0 and 2 share coarse label +1
    let members = |c: usize| -> Vec<usize> { (0..data.len()).filter(|&i| data.y_original[i] == c).collect() };
    let pairs = triple_ratios(h, &members(0), &members(2), &root.child("triples"));
    let mut ratios: Vec<f64> = pairs.iter().map(|&(w, c)| ratio(w, c)).collect();
    let k = pairs.len().max(1) as f64;
    Ok(SeedRatios {
        seed,
        triples: pairs.len(),
        min_ratio: ratios.iter().copied().fold(f64::INFINITY, f64::min),
        mean_ratio: ratios.iter().sum::<f64>() / k,
        median_ratio: median(&mut ratios),
        mean_within: pairs.iter().map(|p| p.0).sum::<f64>() / k,
        mean_cross: pairs.iter().map(|p| p.1).sum::<f64>() / k,
        train_accuracy: last.accuracy,
        error: None,
    })
}

/// Runs every seed; a failed seed is recorded and counts as not passing.
pub fn verify_theorem1(p: &TheoremParams) -> Result<RatioReport> {
    p.validate()?;
    let cond = check_conditions(p);
    let per_seed: Vec<SeedRatios> = p
        .seeds
        .iter()
        .map(|&seed| {
            run_seed(p, seed).unwrap_or_else(|e| SeedRatios {
                seed,
                triples: 0,
                min_ratio: f64::NAN,
                median_ratio: f64::NAN,
                mean_ratio: f64::NAN,
                mean_within: f64::NAN,
                mean_cross: f64::NAN,
                train_accuracy: f64::NAN,
                error: Some(e.to_string()),
            })
        })
        .collect();
    let seeds_passing = per_seed.iter().filter(|s| s.median_ratio >= p.pass_threshold).count();
    let medians: Vec<f64> = per_seed.iter().map(|s| s.median_ratio).filter(|v| !v.is_nan()).collect();
    Ok(RatioReport {
        params: p.clone(),
        c_frak: cond.c_frak,
        conditions: cond.checks,
        summary: summarize(&medians),
        pass: seeds_passing as f64 >= p.pass_fraction * per_seed.len() as f64,
        seeds_passing,
        per_seed,
    })
}
