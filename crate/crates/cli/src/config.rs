use std::fs;
use std::path::{Path, PathBuf};

use collapsescope::clp::ClpConfig;
use collapsescope::harness::{MlpSetup, SweepAxis, SweepDefaults, SweepKind, SweepSpec, TheoremParams};
use collapsescope::model::ActivationKind;
use collapsescope::synthgen::{LabelTransform, MeanMode, MixtureSpec};
use collapsescope::trainer::{LossKind, ScheduleConstants, Solver, TrainConfig};
use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::CliError;

pub const SEED_ENV: &str = "COLLAPSESCOPE_SEED";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    /// Master seed; every random stream derives from it.
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub output_dir: Option<PathBuf>,
    #[serde(default)]
    pub dataset: Option<DatasetSection>,
    #[serde(default)]
    pub model: Option<ModelSection>,
    #[serde(default)]
    pub train: Option<TrainSection>,
    #[serde(default)]
    pub metrics: Option<MetricsSection>,
    #[serde(default)]
    pub clp: Option<ClpConfig>,
    #[serde(default)]
    pub sweep: Option<SweepSection>,
    #[serde(default)]
    pub theorem: Option<TheoremSection>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetSection {
    pub num_clusters: usize,
    pub input_dim: usize,
    pub samples_per_cluster: usize,
    #[serde(default = "one")]
    pub noise_std: f64,
    pub mean_mode: MeanMode,
    #[serde(default = "original")]
    pub labels: LabelTransform,
    /// Held-out samples per cluster, used only by `clp`.
    #[serde(default)]
    pub test_per_cluster: usize,
}

fn one() -> f64 {
    1.0
}

fn original() -> LabelTransform {
    LabelTransform::Original
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SecondLayerKind {
    /// All-ones output weights, single output, unhinged loss.
    FixedOnes,
    #[default]
    Trainable,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelSection {
    pub hidden_dim: usize,
    #[serde(default = "relu")]
    pub activation: ActivationKind,
    #[serde(default)]
    pub second_layer: SecondLayerKind,
}

fn relu() -> ActivationKind {
    ActivationKind::Relu
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainSection {
    pub eta: f64,
    pub steps: usize,
    #[serde(default)]
    pub weight_decay: f64,
    /// Defaults to 1/√d.
    #[serde(default)]
    pub init_std: Option<f64>,
    /// Defaults to unhinged for fixed second layers, cross-entropy otherwise.
    #[serde(default)]
    pub loss: Option<LossKind>,
    #[serde(default)]
    pub checkpoint_every: usize,
    #[serde(default)]
    pub extra_checkpoints: Vec<usize>,
    #[serde(default = "yes")]
    pub record_hidden: bool,
    #[serde(default)]
    pub solver: Solver,
}

fn yes() -> bool {
    true
}

/// Input files for `metrics`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MetricsSection {
    pub representations: PathBuf,
    /// A `labels.csv` with `y_original,y_train,superclass` columns.
    pub labels: PathBuf,
    #[serde(default)]
    pub step: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepSection {
    pub kind: SweepKind,
    pub axis: SweepAxis,
    pub values: Vec<f64>,
    /// Offsets from the master seed.
    pub seeds: Vec<u64>,
    #[serde(default)]
    pub defaults: SweepDefaults,
}

/// The example parameter family at dimension `d`, with optional overrides.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TheoremSection {
    pub d: usize,
    pub seeds: Vec<u64>,
    #[serde(default)]
    pub kappa: Option<f64>,
    #[serde(default)]
    pub tau: Option<f64>,
    #[serde(default)]
    pub omega: Option<f64>,
    #[serde(default)]
    pub n: Option<usize>,
    #[serde(default)]
    pub m: Option<usize>,
    #[serde(default)]
    pub eta: Option<f64>,
    #[serde(default)]
    pub steps: Option<usize>,
    #[serde(default)]
    pub schedule: Option<ScheduleConstants>,
    #[serde(default)]
    pub margin: Option<f64>,
    #[serde(default)]
    pub pass_threshold: Option<f64>,
    #[serde(default)]
    pub pass_fraction: Option<f64>,
}

impl TheoremSection {
    /// Seeds are offsets from the master seed.
    pub fn params(&self, master: u64) -> TheoremParams {
        let seeds = self.seeds.iter().map(|s| master.wrapping_add(*s)).collect();
        let mut p = TheoremParams::paper_example(self.d, seeds);
        p.kappa = self.kappa.unwrap_or(p.kappa);
        p.tau = self.tau.unwrap_or(p.tau);
        p.omega = self.omega.unwrap_or(p.omega);
        p.n = self.n.unwrap_or(p.n);
        p.m = self.m.unwrap_or(p.m);
        p = p.with_schedule(self.schedule.unwrap_or_default());
        p.eta = self.eta.unwrap_or(p.eta);
        p.steps = self.steps.unwrap_or(p.steps);
        p.margin = self.margin.unwrap_or(p.margin);
        p.pass_threshold = self.pass_threshold.unwrap_or(p.pass_threshold);
        p.pass_fraction = self.pass_fraction.unwrap_or(p.pass_fraction);
        p
    }
}

fn invalid(msg: impl Into<String>) -> CliError {
    CliError::Config(msg.into())
}

/// Sets `path` (dot separated) in `doc`. The value is parsed as JSON, falling back to a string.
pub fn apply_override(doc: &mut Value, assignment: &str) -> Result<(), CliError> {
    let (key, raw) = assignment
        .split_once('=')
        .ok_or_else(|| invalid(format!("--set expects KEY=VALUE, got {assignment:?}")))?;
    let value = serde_json::from_str(raw).unwrap_or_else(|_| Value::String(raw.to_string()));
    let parts: Vec<&str> = key.split('.').collect();
    if parts.iter().any(|p| p.is_empty()) {
        return Err(invalid(format!("--set key {key:?} is malformed")));
    }
    let mut cur = doc;
    for (i, part) in parts.iter().enumerate() {
        let obj = match cur {
            Value::Object(o) => o,
            _ => return Err(invalid(format!("--set {key}: {} is not an object", parts[..i].join(".")))),
        };
        if i + 1 == parts.len() {
            obj.insert(part.to_string(), value);
            return Ok(());
        }
        cur = obj.entry(part.to_string()).or_insert_with(|| Value::Object(Default::default()));
    }
    unreachable!("loop returns on the last key")
}

/// Reads, overrides and schema-checks a config. Errors name the offending key.
pub fn load(path: &Path, overrides: &[String]) -> Result<RunConfig, CliError> {
    let text = fs::read_to_string(path).map_err(|e| invalid(format!("{}: {e}", path.display())))?;
    let mut doc: Value = serde_json::from_str(&text).map_err(|e| invalid(format!("{}: {e}", path.display())))?;
    for o in overrides {
        apply_override(&mut doc, o)?;
    }
    if let Ok(seed) = std::env::var(SEED_ENV) {
        let seed: u64 = seed
            .trim()
            .parse()
            .map_err(|_| invalid(format!("{SEED_ENV}={seed:?} is not an unsigned integer")))?;
        if let Value::Object(o) = &mut doc {
            o.insert("seed".into(), seed.into());
        }
    }
    serde_path_to_error::deserialize(doc).map_err(|e| {
        let at = e.path().to_string();
        invalid(format!("{}: {at}: {}", path.display(), e.into_inner()))
    })
}

fn section<'a, T>(s: &'a Option<T>, name: &str) -> Result<&'a T, CliError> {
    s.as_ref().ok_or_else(|| invalid(format!("config has no `{name}` section")))
}

impl RunConfig {
    pub fn dataset(&self) -> Result<&DatasetSection, CliError> {
        section(&self.dataset, "dataset")
    }

    pub fn model(&self) -> Result<&ModelSection, CliError> {
        section(&self.model, "model")
    }

    pub fn train(&self) -> Result<&TrainSection, CliError> {
        section(&self.train, "train")
    }

    pub fn metrics(&self) -> Result<&MetricsSection, CliError> {
        section(&self.metrics, "metrics")
    }

    pub fn sweep(&self) -> Result<&SweepSection, CliError> {
        section(&self.sweep, "sweep")
    }

    pub fn theorem(&self) -> Result<&TheoremSection, CliError> {
        section(&self.theorem, "theorem")
    }

    pub fn clp_config(&self) -> ClpConfig {
        let mut c = self.clp.clone().unwrap_or_default();
        c.seed = c.seed.wrapping_add(self.seed);
        c
    }

    pub fn mixture(&self) -> Result<MixtureSpec, CliError> {
        let d = self.dataset()?;
        let spec = MixtureSpec {
            num_clusters: d.num_clusters,
            input_dim: d.input_dim,
            samples_per_cluster: d.samples_per_cluster,
            noise_std: d.noise_std,
            mean_mode: d.mean_mode.clone(),
        };
        spec.validate().map_err(|e| invalid(format!("dataset: {e}")))?;
        if d.samples_per_cluster == 0 {
            return Err(invalid("dataset.samples_per_cluster must be positive"));
        }
        match d.labels {
            LabelTransform::Coarse { c_tilde } | LabelTransform::RandomMerge { c_tilde } => {
                if c_tilde == 0 || d.num_clusters % c_tilde != 0 {
                    return Err(invalid(format!(
                        "dataset.labels: coarse.c_tilde = {c_tilde} must divide num_clusters = {}",
                        d.num_clusters
                    )));
                }
            }
            LabelTransform::Original | LabelTransform::Fine { .. } => {}
        }
        Ok(spec)
    }

    pub fn train_config(&self, input_dim: usize) -> Result<TrainConfig, CliError> {
        let t = self.train()?;
        let second = self.model()?.second_layer;
        let cfg = TrainConfig {
            eta: t.eta,
            steps: t.steps,
            weight_decay: t.weight_decay,
            init_std: t.init_std.unwrap_or(1.0 / (input_dim.max(1) as f64).sqrt()),
            loss: t.loss.unwrap_or(match second {
                SecondLayerKind::FixedOnes => LossKind::Unhinged,
                SecondLayerKind::Trainable => LossKind::SoftmaxCe,
            }),
            seed: self.seed,
            checkpoint_every: t.checkpoint_every,
            extra_checkpoints: t.extra_checkpoints.clone(),
            record_hidden: t.record_hidden,
            solver: t.solver,
        };
        cfg.validate().map_err(|e| invalid(format!("train: {e}")))?;
        match (second, cfg.loss) {
            (SecondLayerKind::FixedOnes, LossKind::Unhinged) | (SecondLayerKind::Trainable, LossKind::SoftmaxCe) => Ok(cfg),
            _ => Err(invalid("train.loss: unhinged needs model.second_layer = fixed_ones, softmax_ce needs trainable")),
        }
    }

    /// The coarse-label MLP experiment described by the dataset, model and train sections.
    pub fn mlp_setup(&self) -> Result<MlpSetup, CliError> {
        let d = self.dataset()?;
        self.mixture()?;
        let c_tilde = match d.labels {
            LabelTransform::Coarse { c_tilde } => c_tilde,
            _ => return Err(invalid("dataset.labels must be coarse for this command")),
        };
        let m = self.model()?;
        if m.second_layer != SecondLayerKind::Trainable || m.activation != ActivationKind::Relu {
            return Err(invalid("model: this command trains a ReLU network with a trainable second layer"));
        }
        let cfg = self.train_config(d.input_dim)?;
        if (cfg.init_std - 1.0 / (d.input_dim as f64).sqrt()).abs() > 0.0 {
            return Err(invalid("train.init_std: this command always initializes with 1/sqrt(input_dim)"));
        }
        Ok(MlpSetup {
            clusters: d.num_clusters,
            samples_per_cluster: d.samples_per_cluster,
            test_per_cluster: d.test_per_cluster,
            input_dim: d.input_dim,
            hidden_dim: m.hidden_dim,
            noise_std: d.noise_std,
            mean_mode: d.mean_mode.clone(),
            c_tilde,
            steps: cfg.steps,
            learning_rate: cfg.eta,
            weight_decay: cfg.weight_decay,
        })
    }

    /// Sweep spec with seeds offset by the master seed.
    pub fn sweep_spec(&self) -> Result<(SweepKind, SweepSpec), CliError> {
        let s = self.sweep()?;
        let spec = SweepSpec {
            axis: s.axis,
            values: s.values.clone(),
            seeds: s.seeds.iter().map(|x| x.wrapping_add(self.seed)).collect(),
            defaults: s.defaults.clone(),
        };
        spec.validate(s.kind).map_err(|e| invalid(format!("sweep: {e}")))?;
        Ok((s.kind, spec))
    }
}
