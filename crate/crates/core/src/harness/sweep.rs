use std::fmt::Write as _;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::metrics::{class_distance_matrix, msdr, msdr_restricted, RepresentationMatrix};
use crate::numerics::csv::fmt_f64;
use crate::synthgen::MeanMode;

use super::mlp::MlpSetup;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepAxis {
    Sigma2,
    DInput,
    DHidden,
    WeightDecay,
    Tau2,
}

impl SweepAxis {
    pub fn name(self) -> &'static str {
        match self {
            SweepAxis::Sigma2 => "sigma2",
            SweepAxis::DInput => "d_input",
            SweepAxis::DHidden => "d_hidden",
            SweepAxis::WeightDecay => "weight_decay",
            SweepAxis::Tau2 => "tau2",
        }
    }
}

/// Fixed point of a sweep. Defaults: 8 clusters of 500, d_input = d_hidden = 512,
/// 1000 GD steps at learning rate 0.1, no weight decay.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SweepDefaults {
    pub clusters: usize,
    pub samples_per_cluster: usize,
    pub input_dim: usize,
    pub hidden_dim: usize,
    pub noise_std: f64,
    pub c_tilde: usize,
    pub steps: usize,
    pub learning_rate: f64,
    pub weight_decay: f64,
    pub sigma2: f64,
    pub tau2: f64,
}

impl Default for SweepDefaults {
    fn default() -> Self {
        Self {
            clusters: 8,
            samples_per_cluster: 500,
            input_dim: 512,
            hidden_dim: 512,
            noise_std: 1.0,
            c_tilde: 4,
            steps: 1000,
            learning_rate: 0.1,
            weight_decay: 0.0,
            sigma2: 4.0,
            tau2: 0.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepSpec {
    pub axis: SweepAxis,
    pub values: Vec<f64>,
    pub seeds: Vec<u64>,
    #[serde(default)]
    pub defaults: SweepDefaults,
}

/// Which data model and MSDR columns a sweep produces.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepKind {
    /// I.i.d. N(0, σ²I) cluster means.
    Msdr,
    /// Half the super-classes hold similar sub-classes drawn around a shared center.
    Similarity,
}

impl SweepSpec {
    pub fn validate(&self, kind: SweepKind) -> Result<()> {
        if self.values.is_empty() {
            return Err(Error::InvalidArgument("sweep.values must not be empty".into()));
        }
        if self.seeds.is_empty() {
            return Err(Error::InvalidArgument("sweep.seeds must not be empty".into()));
        }
        if kind == SweepKind::Msdr && self.axis == SweepAxis::Tau2 {
            return Err(Error::InvalidArgument("the tau2 axis needs the similarity sweep".into()));
        }
        for &v in &self.values {
            let integral = matches!(self.axis, SweepAxis::DInput | SweepAxis::DHidden);
            if !(v >= 0.0 && v.is_finite()) || (integral && (v.fract() != 0.0 || v < 1.0)) {
                return Err(Error::InvalidArgument(format!("bad {} value {v}", self.axis.name())));
            }
        }
        Ok(())
    }

    /// The experiment at one axis value.
    pub fn setup(&self, kind: SweepKind, value: f64) -> MlpSetup {
        let d = &self.defaults;
        let mut s = MlpSetup {
            clusters: d.clusters,
            samples_per_cluster: d.samples_per_cluster,
            test_per_cluster: 0,
            input_dim: d.input_dim,
            hidden_dim: d.hidden_dim,
            noise_std: d.noise_std,
            mean_mode: MeanMode::IidNormal { sigma2: d.sigma2 },
            c_tilde: d.c_tilde,
            steps: d.steps,
            learning_rate: d.learning_rate,
            weight_decay: d.weight_decay,
        };
        let (mut sigma2, mut tau2) = (d.sigma2, d.tau2);
        match self.axis {
            SweepAxis::Sigma2 => sigma2 = value,
            SweepAxis::DInput => s.input_dim = value as usize,
            SweepAxis::DHidden => s.hidden_dim = value as usize,
            SweepAxis::WeightDecay => s.weight_decay = value,
            SweepAxis::Tau2 => tau2 = value,
        }
        s.mean_mode = match kind {
            SweepKind::Msdr => MeanMode::IidNormal { sigma2 },
            SweepKind::Similarity => MeanMode::Hierarchical {
                sigma2,
                tau2,
                similar: None,
            },
        };
        s
    }

    /// SHA-256 of the canonical JSON of the spec and kind.
    pub fn config_hash(&self, kind: SweepKind) -> String {
        let doc = serde_json::json!({ "kind": kind, "spec": self });
        let digest = Sha256::digest(doc.to_string().as_bytes());
        digest.iter().map(|b| format!("{b:02x}")).collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub axis: SweepAxis,
    pub value: f64,
    pub seed: u64,
    pub msdr: Option<f64>,
    pub msdr_similar: Option<f64>,
    pub msdr_dissimilar: Option<f64>,
    pub train_acc: Option<f64>,
    /// Training accuracy reached 100%.
    pub converged: bool,
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepResult {
    pub kind: SweepKind,
    pub config_hash: String,
    pub spec: SweepSpec,
    pub rows: Vec<SweepRow>,
}

fn opt(v: Option<f64>) -> String {
    v.map(fmt_f64).unwrap_or_default()
}

impl SweepResult {
    /// `axis,value,seed,msdr[,msdr_similar,msdr_dissimilar],train_acc,converged`.
    pub fn to_csv(&self) -> String {
        let sim = self.kind == SweepKind::Similarity;
        let mut s = String::from("axis,value,seed,msdr");
        if sim {
            s.push_str(",msdr_similar,msdr_dissimilar");
        }
        s.push_str(",train_acc,converged\n");
        for r in &self.rows {
            let _ = write!(s, "{},{},{},{}", r.axis.name(), fmt_f64(r.value), r.seed, opt(r.msdr));
            if sim {
                let _ = write!(s, ",{},{}", opt(r.msdr_similar), opt(r.msdr_dissimilar));
            }
            let _ = writeln!(s, ",{},{}", opt(r.train_acc), r.converged);
        }
        s
    }

    /// Sidecar with the config hash, the spec and per-run errors.
    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)? + "\n")
    }

    /// Mean of `f` over the rows at `value` where it is defined.
    pub fn mean_at(&self, value: f64, f: impl Fn(&SweepRow) -> Option<f64>) -> Option<f64> {
        let v: Vec<f64> = self.rows.iter().filter(|r| r.value == value).filter_map(f).collect();
        (!v.is_empty()).then(|| v.iter().sum::<f64>() / v.len() as f64)
    }
}

/// One training run and its MSDR values.
pub fn run_point(spec: &SweepSpec, kind: SweepKind, value: f64, seed: u64) -> SweepRow {
    let mut row = SweepRow {
        axis: spec.axis,
        value,
        seed,
        msdr: None,
        msdr_similar: None,
        msdr_dissimilar: None,
        train_acc: None,
        converged: false,
        error: None,
    };
    let result = (|| -> Result<()> {
        let run = spec.setup(kind, value).run(seed, &[], false)?;
        let acc = run.log.last().map(|c| c.accuracy).unwrap_or(0.0);
        row.train_acc = Some(acc);
        row.converged = acc == 1.0;
        let hidden = run.net.forward(&run.train.x)?.hidden;
        let reps = RepresentationMatrix::new(hidden, run.train.y_original.clone(), run.train.class_count())?;
        let d = class_distance_matrix(&reps)?;
        let map = &run.train.superclass_map;
        row.msdr = Some(msdr(&d, map)?);
        if kind == SweepKind::Similarity {
            let similar = &run.train.similar_superclasses;
            row.msdr_similar = Some(msdr_restricted(&d, map, |s| similar.contains(&s))?);
            row.msdr_dissimilar = Some(msdr_restricted(&d, map, |s| !similar.contains(&s))?);
        }
        Ok(())
    })();
    if let Err(e) = result {
        row.error = Some(e.to_string());
    }
    row
}

fn run_sweep(spec: &SweepSpec, kind: SweepKind, jobs: usize) -> Result<SweepResult> {
    spec.validate(kind)?;
    let points: Vec<(f64, u64)> = spec
        .values
        .iter()
        .flat_map(|&v| spec.seeds.iter().map(move |&s| (v, s)))
        .collect();
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs.max(1))
        .build()
        .map_err(|e| Error::InvalidArgument(format!("worker pool: {e}")))?;
    let mut rows: Vec<SweepRow> =
        pool.install(|| points.par_iter().map(|&(v, s)| run_point(spec, kind, v, s)).collect());
    rows.sort_by(|a, b| a.value.total_cmp(&b.value).then(a.seed.cmp(&b.seed)));
    Ok(SweepResult {
        kind,
        config_hash: spec.config_hash(kind),
        spec: spec.clone(),
        rows,
    })
}

/// MSDR over an axis with i.i.d. cluster means; failed runs are kept as rows with an error.
pub fn msdr_sweep(spec: &SweepSpec, jobs: usize) -> Result<SweepResult> {
    run_sweep(spec, SweepKind::Msdr, jobs)
}

/// Similar/dissimilar MSDR with hierarchical means.
pub fn similarity_sweep(spec: &SweepSpec, jobs: usize) -> Result<SweepResult> {
    run_sweep(spec, SweepKind::Similarity, jobs)
}
