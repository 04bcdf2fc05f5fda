use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::model::{ActivationKind, TwoLayerNet};
use crate::numerics::{Matrix, RngStream};
use crate::synthgen::{sample_dataset, LabelTransform, LabeledDataset, MeanMode, MixtureSpec};
use crate::trainer::{init_mlp, train_gd, LossKind, Solver, TrainConfig, TrainLog};

/// A Gaussian mixture coarsened into super-classes and an MLP trained on the coarse labels.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MlpSetup {
    pub clusters: usize,
    pub samples_per_cluster: usize,
    /// Extra held-out samples drawn per cluster from the same means.
    #[serde(default)]
    pub test_per_cluster: usize,
    pub input_dim: usize,
    pub hidden_dim: usize,
    pub noise_std: f64,
    pub mean_mode: MeanMode,
    pub c_tilde: usize,
    pub steps: usize,
    pub learning_rate: f64,
    #[serde(default)]
    pub weight_decay: f64,
}

impl Default for MlpSetup {
    fn default() -> Self {
        Self {
            clusters: 8,
            samples_per_cluster: 500,
            test_per_cluster: 0,
            input_dim: 512,
            hidden_dim: 512,
            noise_std: 1.0,
            mean_mode: MeanMode::IidNormal { sigma2: 4.0 },
            c_tilde: 4,
            steps: 1000,
            learning_rate: 0.1,
            weight_decay: 0.0,
        }
    }
}

/// Held-out split with original labels.
#[derive(Debug, Clone, PartialEq)]
pub struct TestSplit {
    pub x: Matrix,
    pub y_original: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MlpRun {
    pub train: LabeledDataset,
    pub test: Option<TestSplit>,
    pub net: TwoLayerNet,
    pub log: TrainLog,
}

impl MlpSetup {
    pub fn mixture(&self) -> MixtureSpec {
        MixtureSpec {
            num_clusters: self.clusters,
            input_dim: self.input_dim,
            samples_per_cluster: self.samples_per_cluster + self.test_per_cluster,
            noise_std: self.noise_std,
            mean_mode: self.mean_mode.clone(),
        }
    }

    /// Coarsened training set and the optional test split.
    pub fn data(&self, seed: u64) -> Result<(LabeledDataset, Option<TestSplit>)> {
        let root = RngStream::new(seed, "mlp");
        let full = sample_dataset(&self.mixture(), &root.child("data"))?
            .with_transform(LabelTransform::Coarse { c_tilde: self.c_tilde }, &root.child("labels"))?;
        if self.test_per_cluster == 0 {
            return Ok((full, None));
        }
        let mut seen = vec![0usize; self.clusters];
        let (mut tr, mut te) = (Vec::new(), Vec::new());
        for (i, &c) in full.y_original.iter().enumerate() {
            if seen[c] < self.samples_per_cluster {
                tr.push(i);
            } else {
                te.push(i);
            }
            seen[c] += 1;
        }
        let test = TestSplit {
            x: full.x.select_rows(&te),
            y_original: te.iter().map(|&i| full.y_original[i]).collect(),
        };
        let mut train = full.clone();
        train.x = full.x.select_rows(&tr);
        train.y_original = tr.iter().map(|&i| full.y_original[i]).collect();
        train.y_train = tr.iter().map(|&i| full.y_train[i]).collect();
        Ok((train, Some(test)))
    }

    pub fn train_config(&self, seed: u64, checkpoints: &[usize], record_hidden: bool) -> TrainConfig {
        TrainConfig {
            eta: self.learning_rate,
            steps: self.steps,
            weight_decay: self.weight_decay,
            init_std: 1.0 / (self.input_dim as f64).sqrt(),
            loss: LossKind::SoftmaxCe,
            seed,
            checkpoint_every: 0,
            extra_checkpoints: checkpoints.to_vec(),
            record_hidden,
            solver: Solver::Auto,
        }
    }

    /// ReLU MLP with first layer N(0, 1/d_input), trained by full-batch GD on cross-entropy.
    pub fn run(&self, seed: u64, checkpoints: &[usize], record_hidden: bool) -> Result<MlpRun> {
        let (train, test) = self.data(seed)?;
        let cfg = self.train_config(seed, checkpoints, record_hidden);
        let net = init_mlp(
            self.input_dim,
            self.hidden_dim,
            self.c_tilde,
            cfg.init_std,
            ActivationKind::Relu,
            &RngStream::new(seed, "mlp").child("init"),
        )?;
        let (net, log) = train_gd(&net, &train, &cfg)?;
        Ok(MlpRun { train, test, net, log })
    }
}
