//! Cluster-and-linear-probe: recover sub-class labels from coarse-trained representations.

use itertools::Itertools;
use serde::{Deserialize, Serialize};

use crate::error::{dim_err, Error, Result};
use crate::numerics::{pca_project, Matrix, RngStream};
use crate::reduce::{kmeans, tsne_embed, KmeansConfig, TsneConfig};
use crate::trainer::argmax;

const PROBE_DIVERGENCE: f64 = 1e12;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Reducer {
    Tsne(TsneConfig),
    Pca,
}

impl Reducer {
    pub fn name(&self) -> &'static str {
        match self {
            Reducer::Tsne(_) => "tsne",
            Reducer::Pca => "pca",
        }
    }
}

impl Default for Reducer {
    fn default() -> Self {
        Reducer::Tsne(TsneConfig::default())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ProbeConfig {
    pub learning_rate: f64,
    pub iterations: usize,
}

impl Default for ProbeConfig {
    fn default() -> Self {
        Self {
            learning_rate: 0.1,
            iterations: 2000,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ClpConfig {
    pub reducer: Reducer,
    /// Clusters per super-class.
    pub k: usize,
    pub kmeans: KmeansConfig,
    pub probe: ProbeConfig,
    pub seed: u64,
}

impl Default for ClpConfig {
    fn default() -> Self {
        Self {
            reducer: Reducer::default(),
            k: 2,
            kmeans: KmeansConfig::default(),
            probe: ProbeConfig::default(),
            seed: 0,
        }
    }
}

impl ClpConfig {
    pub fn validate(&self) -> Result<()> {
        if self.k == 0 {
            return Err(Error::InvalidArgument("clp.k must be at least 1".into()));
        }
        if !(self.probe.learning_rate > 0.0) {
            return Err(Error::InvalidArgument("clp.probe.learning_rate must be positive".into()));
        }
        if let Reducer::Tsne(t) = &self.reducer {
            t.validate()?;
        }
        Ok(())
    }
}

fn group_by_super(coarse: &[usize], supers: usize) -> Result<Vec<Vec<usize>>> {
    let mut groups = vec![Vec::new(); supers];
    for (i, &s) in coarse.iter().enumerate() {
        if s >= supers {
            return Err(Error::InvalidArgument(format!("super-class {s} outside 0..{supers}")));
        }
        groups[s].push(i);
    }
    Ok(groups)
}

/// Per super-class: reduce to two dimensions, k-means into `cfg.k` clusters.
///
/// Sample `i` in super-class `s` assigned to cluster `j` gets label `s·k + j`.
pub fn reconstruct_labels(h: &Matrix, coarse: &[usize], supers: usize, cfg: &ClpConfig) -> Result<Vec<usize>> {
    cfg.validate()?;
    if coarse.len() != h.rows() {
        return dim_err(format!("{} coarse labels for {} rows", coarse.len(), h.rows()));
    }
    let groups = group_by_super(coarse, supers)?;
    let root = RngStream::new(cfg.seed, "clp");
    let mut out = vec![0; h.rows()];
    for (s, idx) in groups.iter().enumerate() {
        if idx.len() < 5 * cfg.k {
            return Err(Error::InvalidArgument(format!(
                "super-class {s} has {} samples, need at least {}",
                idx.len(),
                5 * cfg.k
            )));
        }
        if cfg.k == 1 {
            idx.iter().for_each(|&i| out[i] = s);
            continue;
        }
        let rows = h.select_rows(idx);
        let reduced = match &cfg.reducer {
            Reducer::Tsne(t) => tsne_embed(&rows, &TsneConfig { seed: cfg.seed, ..t.clone() })?,
            Reducer::Pca => pca_project(&rows, 2.min(rows.cols()))?,
        };
        let km = kmeans(
            &reduced,
            cfg.k,
            cfg.kmeans.restarts,
            cfg.kmeans.max_iters,
            &root.child(format!("super{s}")),
        )?;
        for (&i, &c) in idx.iter().zip(&km.assignments) {
            out[i] = s * cfg.k + c;
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Matching {
    /// `mapping[r]` is the original class assigned to reconstructed label `r`.
    pub mapping: Vec<usize>,
    pub matches: usize,
    pub accuracy: f64,
}

/// Best bijection from clusters to original classes, chosen independently within each super-class.
///
/// Reconstructed label `r` belongs to super-class `r / k`. With fewer clusters than
/// sub-classes the map is injective instead.
pub fn match_permutation(reconstructed: &[usize], y_original: &[usize], superclass_map: &[usize], k: usize) -> Result<Matching> {
    if reconstructed.len() != y_original.len() {
        return dim_err(format!("{} reconstructed vs {} original labels", reconstructed.len(), y_original.len()));
    }
    if k == 0 {
        return Err(Error::InvalidArgument("k must be at least 1".into()));
    }
    let supers = superclass_map.iter().max().map_or(0, |m| m + 1);
    let mut members: Vec<Vec<usize>> = vec![Vec::new(); supers];
    for (c, &s) in superclass_map.iter().enumerate() {
        members[s].push(c);
    }
    for (s, m) in members.iter().enumerate() {
        if m.len() < k {
            return Err(Error::InvalidArgument(format!(
                "super-class {s} has {} original classes but {k} clusters",
                m.len()
            )));
        }
    }
    let c = superclass_map.len();
    let mut counts = vec![vec![0usize; c]; supers * k];
    for (&r, &y) in reconstructed.iter().zip(y_original) {
        if r >= supers * k || y >= c {
            return Err(Error::InvalidArgument(format!("label pair ({r}, {y}) out of range")));
        }
        counts[r][y] += 1;
    }
    let mut mapping = vec![0; supers * k];
    let mut matches = 0;
    for (s, classes) in members.iter().enumerate() {
        let mut best: Option<(usize, Vec<usize>)> = None;
        for perm in classes.iter().copied().permutations(k) {
            let score: usize = perm.iter().enumerate().map(|(j, &y)| counts[s * k + j][y]).sum();
            if best.as_ref().map_or(true, |(b, _)| score > *b) {
                best = Some((score, perm));
            }
        }
        let (score, perm) = best.expect("non-empty permutation set");
        matches += score;
        mapping[s * k..(s + 1) * k].copy_from_slice(&perm);
    }
    Ok(Matching {
        mapping,
        matches,
        accuracy: matches as f64 / reconstructed.len().max(1) as f64,
    })
}

/// Multinomial logistic regression on standardized features.
#[derive(Debug, Clone, PartialEq)]
pub struct Probe {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
    /// `d × K`.
    pub w: Matrix,
    pub b: Vec<f64>,
}

impl Probe {
    fn standardize(&self, h: &Matrix) -> Matrix {
        Matrix::from_fn(h.rows(), h.cols(), |i, j| (h[(i, j)] - self.mean[j]) / self.std[j])
    }

    fn logits(&self, z: &Matrix) -> Matrix {
        let mut l = z.matmul(&self.w).expect("probe width matches");
        for i in 0..l.rows() {
            for (v, b) in l.row_mut(i).iter_mut().zip(&self.b) {
                *v += b;
            }
        }
        l
    }

    pub fn predict(&self, h: &Matrix) -> Result<Vec<usize>> {
        if h.cols() != self.mean.len() {
            return dim_err(format!("probe expects {} features, got {}", self.mean.len(), h.cols()));
        }
        let l = self.logits(&self.standardize(h));
        Ok(l.row_iter().map(argmax).collect())
    }
}

/// Full-batch gradient descent on the mean cross-entropy.
pub fn fit_probe(h: &Matrix, y: &[usize], classes: usize, cfg: &ProbeConfig) -> Result<Probe> {
    let (n, d) = h.shape();
    if y.len() != n || n == 0 {
        return dim_err(format!("{} labels for {n} rows", y.len()));
    }
    if let Some(&bad) = y.iter().find(|&&c| c >= classes) {
        return Err(Error::InvalidArgument(format!("label {bad} outside 0..{classes}")));
    }
    let mean = h.col_means();
    let std: Vec<f64> = (0..d)
        .map(|j| {
            let v = h.row_iter().map(|r| (r[j] - mean[j]).powi(2)).sum::<f64>() / n as f64;
            if v > 0.0 {
                v.sqrt()
            } else {
                1.0
            }
        })
        .collect();
    let mut probe = Probe {
        mean,
        std,
        w: Matrix::zeros(d, classes),
        b: vec![0.0; classes],
    };
    let z = probe.standardize(h);
    for step in 0..cfg.iterations {
        let mut g = probe.logits(&z);
        let mut loss = 0.0;
        for (i, &yi) in y.iter().enumerate() {
            let row = g.row_mut(i);
            let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let mut sum = 0.0;
            for v in row.iter_mut() {
                *v = (*v - max).exp();
                sum += *v;
            }
            loss -= (row[yi] / sum).ln();
            for v in row.iter_mut() {
                *v /= sum * n as f64;
            }
            row[yi] -= 1.0 / n as f64;
        }
        loss /= n as f64;
        if !loss.is_finite() || loss > PROBE_DIVERGENCE {
            return Err(Error::Diverged {
                step,
                last_finite: None,
            });
        }
        let gw = z.t_matmul(&g)?;
        probe.w.axpy(-cfg.learning_rate, &gw)?;
        for (k, b) in probe.b.iter_mut().enumerate() {
            *b -= cfg.learning_rate * (0..n).map(|i| g[(i, k)]).sum::<f64>();
        }
    }
    Ok(probe)
}

fn accuracy(pred: &[usize], truth: &[usize]) -> f64 {
    pred.iter().zip(truth).filter(|(a, b)| a == b).count() as f64 / truth.len().max(1) as f64
}

/// Train and test accuracy of a probe fit on the training split.
pub fn linear_probe(
    h_train: &Matrix,
    y_train: &[usize],
    h_test: &Matrix,
    y_test: &[usize],
    classes: usize,
    cfg: &ProbeConfig,
) -> Result<(f64, f64)> {
    if y_test.len() != h_test.rows() {
        return dim_err(format!("{} test labels for {} rows", y_test.len(), h_test.rows()));
    }
    let probe = fit_probe(h_train, y_train, classes, cfg)?;
    Ok((
        accuracy(&probe.predict(h_train)?, y_train),
        accuracy(&probe.predict(h_test)?, y_test),
    ))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MappingAccuracy {
    /// Reconstruction vs original training labels under the chosen mapping.
    pub train: f64,
    /// Best mapping re-chosen on test predictions; reported only.
    pub test: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClpResult {
    pub test_accuracy: f64,
    pub train_accuracy: f64,
    pub comparison_test_accuracy: f64,
    pub mapping: Vec<usize>,
    pub reducer: String,
    pub seed: u64,
    pub mapping_accuracy: MappingAccuracy,
    #[serde(skip)]
    pub reconstructed_labels: Vec<usize>,
}

impl ClpResult {
    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)? + "\n")
    }
}

/// Inputs for one CLP run.
#[derive(Debug, Clone, Copy)]
pub struct ClpInputs<'a> {
    pub h_train: &'a Matrix,
    pub coarse_train: &'a [usize],
    pub original_train: &'a [usize],
    pub h_test: &'a Matrix,
    pub original_test: &'a [usize],
    /// Original class → super-class.
    pub superclass_map: &'a [usize],
}

/// Reconstruct, match on training data, probe with reconstructed labels, score against original test labels.
pub fn clp_pipeline(inp: ClpInputs<'_>, cfg: &ClpConfig) -> Result<ClpResult> {
    let supers = inp.superclass_map.iter().max().map_or(0, |m| m + 1);
    let classes = inp.superclass_map.len();
    for (&c, &y) in inp.coarse_train.iter().zip(inp.original_train) {
        if y >= classes || inp.superclass_map[y] != c {
            return Err(Error::InvalidArgument(format!(
                "coarse label {c} disagrees with original class {y}"
            )));
        }
    }
    let recon = reconstruct_labels(inp.h_train, inp.coarse_train, supers, cfg)?;
    let matching = match_permutation(&recon, inp.original_train, inp.superclass_map, cfg.k)?;
    let probe = fit_probe(inp.h_train, &recon, supers * cfg.k, &cfg.probe)?;
    let map = |pred: Vec<usize>| -> Vec<usize> { pred.into_iter().map(|r| matching.mapping[r]).collect() };
    let train_pred = probe.predict(inp.h_train)?;
    let test_raw = probe.predict(inp.h_test)?;
    let test_rechosen = match_permutation(&test_raw, inp.original_test, inp.superclass_map, cfg.k)?;
    let train_accuracy = accuracy(&map(train_pred), inp.original_train);
    let test_accuracy = accuracy(&map(test_raw), inp.original_test);
    let (_, comparison_test_accuracy) = linear_probe(
        inp.h_train,
        inp.original_train,
        inp.h_test,
        inp.original_test,
        classes,
        &cfg.probe,
    )?;
    Ok(ClpResult {
        test_accuracy,
        train_accuracy,
        comparison_test_accuracy,
        mapping: matching.mapping,
        reducer: cfg.reducer.name().to_string(),
        seed: cfg.seed,
        mapping_accuracy: MappingAccuracy {
            train: matching.accuracy,
            test: test_rechosen.accuracy,
        },
        reconstructed_labels: recon,
    })
}
