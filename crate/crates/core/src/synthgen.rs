//! Gaussian-mixture datasets with coarse, fine and randomly merged labels.

use std::fs;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{dim_err, Error, Result};
use crate::numerics::{csv, Matrix, RngStream};

/// How orthogonal cluster means are laid out.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OrthoBasis {
    /// τ times a random orthonormal frame (Gram–Schmidt of a Gaussian matrix).
    #[default]
    Random,
    /// τ times the first P standard basis vectors.
    Standard,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum MeanMode {
    Orthogonal {
        tau: f64,
        #[serde(default)]
        basis: OrthoBasis,
    },
    IidNormal {
        sigma2: f64,
    },
    /// Two sub-classes per super-class. Class `c` and class `c + P/2` share
    /// super-class `c`, so the coarse map `y mod P/2` recovers the grouping.
    Hierarchical {
        sigma2: f64,
        tau2: f64,
        /// Super-classes whose two means are drawn around a shared center.
        /// `None` picks half of them from the seed.
        #[serde(default)]
        similar: Option<Vec<usize>>,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MixtureSpec {
    pub num_clusters: usize,
    pub input_dim: usize,
    pub samples_per_cluster: usize,
    pub noise_std: f64,
    pub mean_mode: MeanMode,
}

impl MixtureSpec {
    pub fn validate(&self) -> Result<()> {
        if self.num_clusters < 2 {
            return Err(Error::InvalidArgument(format!(
                "num_clusters = {} < 2",
                self.num_clusters
            )));
        }
        if !(self.noise_std >= 0.0) {
            return Err(Error::Domain(format!("noise_std = {} < 0", self.noise_std)));
        }
        match &self.mean_mode {
            MeanMode::Orthogonal { tau, .. } => {
                if self.num_clusters > self.input_dim {
                    return dim_err(format!(
                        "{} orthogonal means do not fit in dimension {}",
                        self.num_clusters, self.input_dim
                    ));
                }
                if !(*tau > 0.0) {
                    return Err(Error::Domain(format!("tau = {tau} must be positive")));
                }
            }
            MeanMode::IidNormal { sigma2 } => check_var("sigma2", *sigma2)?,
            MeanMode::Hierarchical {
                sigma2,
                tau2,
                similar,
            } => {
                check_var("sigma2", *sigma2)?;
                check_var("tau2", *tau2)?;
                if self.num_clusters % 2 != 0 {
                    return Err(Error::InvalidArgument(
                        "hierarchical mode needs an even number of clusters".into(),
                    ));
                }
                let s = self.num_clusters / 2;
                if let Some(set) = similar {
                    if let Some(bad) = set.iter().find(|&&i| i >= s) {
                        return Err(Error::InvalidArgument(format!(
                            "similar super-class {bad} out of range 0..{s}"
                        )));
                    }
                }
            }
        }
        Ok(())
    }

    pub fn num_samples(&self) -> usize {
        self.num_clusters * self.samples_per_cluster
    }
}

fn check_var(name: &str, v: f64) -> Result<()> {
    if v >= 0.0 {
        Ok(())
    } else {
        Err(Error::Domain(format!("{name} = {v} < 0")))
    }
}

/// Which training labels a dataset carries.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum LabelTransform {
    Original,
    /// `ỹ = y mod c_tilde`.
    Coarse { c_tilde: usize },
    /// `ŷ = y + βC`, β ~ Bernoulli(1/2).
    Fine {
        #[serde(default)]
        stratified: bool,
    },
    /// Permute class ids, then coarsen.
    RandomMerge { c_tilde: usize },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub spec: MixtureSpec,
    pub seed: u64,
    pub stream: String,
    pub transform: LabelTransform,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LabeledDataset {
    pub x: Matrix,
    pub means: Matrix,
    pub y_original: Vec<usize>,
    pub y_train: Vec<usize>,
    /// Original class id → super-class id.
    pub superclass_map: Vec<usize>,
    /// Super-classes generated with similar sub-classes (hierarchical mode only).
    pub similar_superclasses: Vec<usize>,
    pub provenance: Provenance,
}

impl LabeledDataset {
    pub fn len(&self) -> usize {
        self.y_original.len()
    }

    pub fn is_empty(&self) -> bool {
        self.y_original.is_empty()
    }

    pub fn class_count(&self) -> usize {
        self.superclass_map.len()
    }

    pub fn superclass_count(&self) -> usize {
        self.superclass_map.iter().max().map_or(0, |m| m + 1)
    }

    /// Number of distinct values `y_train` can take.
    pub fn train_class_count(&self) -> usize {
        match self.provenance.transform {
            LabelTransform::Original => self.class_count(),
            LabelTransform::Coarse { c_tilde } | LabelTransform::RandomMerge { c_tilde } => c_tilde,
            LabelTransform::Fine { .. } => 2 * self.class_count(),
        }
    }

    /// Replaces the training labels. Randomness comes from `stream`.
    pub fn with_transform(mut self, transform: LabelTransform, stream: &RngStream) -> Result<Self> {
        let c = self.class_count();
        match &transform {
            LabelTransform::Original => {
                self.y_train = self.y_original.clone();
                self.superclass_map = (0..c).collect();
            }
            LabelTransform::Coarse { c_tilde } => {
                let (y, map) = coarsen_labels(&self.y_original, c, *c_tilde)?;
                self.y_train = y;
                self.superclass_map = map;
            }
            LabelTransform::Fine { stratified } => {
                self.y_train = if *stratified {
                    refine_labels_stratified(&self.y_original, c, stream)?
                } else {
                    refine_labels(&self.y_original, c, stream)?
                };
                self.superclass_map = (0..c).collect();
            }
            LabelTransform::RandomMerge { c_tilde } => {
                let (y, map) = random_merge_labels(&self.y_original, c, *c_tilde, stream)?;
                self.y_train = y;
                self.superclass_map = map;
            }
        }
        self.provenance.transform = transform;
        Ok(self)
    }

    /// Writes `features.csv`, `labels.csv` and `provenance.json` into `dir`.
    pub fn save(&self, dir: impl AsRef<Path>) -> Result<()> {
        let dir = dir.as_ref();
        fs::create_dir_all(dir)?;
        csv::save_matrix(dir.join("features.csv"), &self.x)?;
        let mut labels = String::from("y_original,y_train,superclass\n");
        for (&yo, &yt) in self.y_original.iter().zip(&self.y_train) {
            labels.push_str(&format!("{yo},{yt},{}\n", self.superclass_map[yo]));
        }
        fs::write(dir.join("labels.csv"), labels)?;
        let prov = serde_json::json!({
            "spec": self.provenance.spec,
            "seed": self.provenance.seed,
            "stream": self.provenance.stream,
            "transform": self.provenance.transform,
            "similar_superclasses": self.similar_superclasses,
        });
        fs::write(
            dir.join("provenance.json"),
            serde_json::to_string_pretty(&prov)? + "\n",
        )?;
        Ok(())
    }

    /// Reads a dataset written by [`LabeledDataset::save`]. Means are regenerated from the
    /// provenance record.
    pub fn load(dir: impl AsRef<Path>) -> Result<Self> {
        let dir = dir.as_ref();
        let x = csv::load_matrix(dir.join("features.csv"))?;
        let table = LabelTable::load(dir.join("labels.csv"))?;
        let prov: serde_json::Value =
            serde_json::from_str(&fs::read_to_string(dir.join("provenance.json"))?)?;
        let provenance = Provenance {
            spec: serde_json::from_value(prov["spec"].clone())?,
            seed: serde_json::from_value(prov["seed"].clone())?,
            stream: serde_json::from_value(prov["stream"].clone())?,
            transform: serde_json::from_value(prov["transform"].clone())?,
        };
        let similar_superclasses =
            serde_json::from_value(prov["similar_superclasses"].clone()).unwrap_or_default();
        if x.rows() != table.y_original.len() {
            return dim_err(format!(
                "{} feature rows but {} label rows",
                x.rows(),
                table.y_original.len()
            ));
        }
        let superclass_map = table.superclass_map()?;
        let means = build_means(
            &provenance.spec,
            &RngStream::new(provenance.seed, provenance.stream.clone()),
        )?
        .0;
        Ok(Self {
            x,
            means,
            y_original: table.y_original,
            y_train: table.y_train,
            superclass_map,
            similar_superclasses,
            provenance,
        })
    }
}

/// Rows of a `labels.csv` file.
#[derive(Debug, Clone, PartialEq)]
pub struct LabelTable {
    pub y_original: Vec<usize>,
    pub y_train: Vec<usize>,
    pub superclass: Vec<usize>,
}

impl LabelTable {
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let text = fs::read_to_string(path)?;
        let mut lines = text.lines();
        let header = lines.next().unwrap_or_default();
        if header.trim() != "y_original,y_train,superclass" {
            return Err(Error::Parse(format!("unexpected label header {header:?}")));
        }
        let mut t = LabelTable {
            y_original: Vec::new(),
            y_train: Vec::new(),
            superclass: Vec::new(),
        };
        for (i, line) in lines.enumerate().filter(|(_, l)| !l.trim().is_empty()) {
            let f: Vec<usize> = line
                .split(',')
                .map(|s| s.trim().parse::<usize>())
                .collect::<std::result::Result<_, _>>()
                .map_err(|e| Error::Parse(format!("labels line {}: {e}", i + 2)))?;
            if f.len() != 3 {
                return Err(Error::Parse(format!("labels line {}: expected 3 fields", i + 2)));
            }
            t.y_original.push(f[0]);
            t.y_train.push(f[1]);
            t.superclass.push(f[2]);
        }
        Ok(t)
    }

    /// Reassembles the class → super-class map, checking consistency.
    pub fn superclass_map(&self) -> Result<Vec<usize>> {
        let c = self.y_original.iter().max().map_or(0, |m| m + 1);
        let mut map = vec![usize::MAX; c];
        for (&y, &s) in self.y_original.iter().zip(&self.superclass) {
            if map[y] != usize::MAX && map[y] != s {
                return Err(Error::Parse(format!("class {y} has two super-classes")));
            }
            map[y] = s;
        }
        if let Some(c) = map.iter().position(|&s| s == usize::MAX) {
            return Err(Error::EmptyClass { class: c });
        }
        Ok(map)
    }
}

fn normal_matrix(rows: usize, cols: usize, std: f64, stream: &RngStream) -> Matrix {
    let mut rng = stream.rng();
    Matrix::from_fn(rows, cols, |_, _| {
        let z: f64 = StandardNormal.sample(&mut rng);
        std * z
    })
}

/// `p` pairwise-orthogonal means of norm `tau` in dimension `d`.
pub fn gen_orthogonal_means(
    p: usize,
    d: usize,
    tau: f64,
    basis: OrthoBasis,
    stream: &RngStream,
) -> Result<Matrix> {
    if p > d {
        return dim_err(format!("{p} orthogonal vectors do not fit in dimension {d}"));
    }
    if !(tau > 0.0) {
        return Err(Error::Domain(format!("tau = {tau} must be positive")));
    }
    if basis == OrthoBasis::Standard {
        return Ok(Matrix::from_fn(p, d, |i, j| if i == j { tau } else { 0.0 }));
    }
    let mut q = normal_matrix(p, d, 1.0, stream);
    // Modified Gram-Schmidt, two passes.
    for _ in 0..2 {
        for i in 0..p {
            for j in 0..i {
                let proj: f64 = q.row(i).iter().zip(q.row(j)).map(|(a, b)| a * b).sum();
                let (head, tail) = q.as_mut_slice().split_at_mut(i * d);
                let rj = &head[j * d..(j + 1) * d];
                for (a, b) in tail[..d].iter_mut().zip(rj) {
                    *a -= proj * b;
                }
            }
            let norm = q.row(i).iter().map(|v| v * v).sum::<f64>().sqrt();
            if norm == 0.0 {
                return Err(Error::Numerical {
                    iteration: i,
                    what: "degenerate Gaussian draw in orthogonalization".into(),
                });
            }
            q.row_mut(i).iter_mut().for_each(|v| *v /= norm);
        }
    }
    Ok(q.scale(tau))
}

/// `p` means with entries i.i.d. N(0, sigma2).
pub fn gen_iid_means(p: usize, d: usize, sigma2: f64, stream: &RngStream) -> Result<Matrix> {
    check_var("sigma2", sigma2)?;
    Ok(normal_matrix(p, d, sigma2.sqrt(), stream))
}

/// Means for `superclass_count` super-classes of two sub-classes each. Row `s` and
/// row `s + superclass_count` belong to super-class `s`.
pub fn gen_hierarchical_means(
    superclass_count: usize,
    d: usize,
    sigma2: f64,
    tau2: f64,
    similar: &[usize],
    stream: &RngStream,
) -> Result<Matrix> {
    check_var("sigma2", sigma2)?;
    check_var("tau2", tau2)?;
    if let Some(bad) = similar.iter().find(|&&s| s >= superclass_count) {
        return Err(Error::InvalidArgument(format!(
            "similar super-class {bad} out of range 0..{superclass_count}"
        )));
    }
    let (sigma, tau) = (sigma2.sqrt(), tau2.sqrt());
    let mut rng = stream.rng();
    let mut draw = |std: f64| -> Vec<f64> {
        (0..d)
            .map(|_| {
                let z: f64 = StandardNormal.sample(&mut rng);
                std * z
            })
            .collect()
    };
    let mut means = Matrix::zeros(2 * superclass_count, d);
    for s in 0..superclass_count {
        let (a, b) = if similar.contains(&s) {
            let center = draw(sigma);
            let a: Vec<f64> = draw(tau).iter().zip(&center).map(|(e, c)| c + e).collect();
            let b: Vec<f64> = draw(tau).iter().zip(&center).map(|(e, c)| c + e).collect();
            (a, b)
        } else {
            (draw(sigma), draw(sigma))
        };
        means.row_mut(s).copy_from_slice(&a);
        means.row_mut(s + superclass_count).copy_from_slice(&b);
    }
    Ok(means)
}

fn build_means(spec: &MixtureSpec, stream: &RngStream) -> Result<(Matrix, Vec<usize>)> {
    let (p, d) = (spec.num_clusters, spec.input_dim);
    let mean_stream = stream.child("means");
    Ok(match &spec.mean_mode {
        MeanMode::Orthogonal { tau, basis } => {
            (gen_orthogonal_means(p, d, *tau, *basis, &mean_stream)?, Vec::new())
        }
        MeanMode::IidNormal { sigma2 } => (gen_iid_means(p, d, *sigma2, &mean_stream)?, Vec::new()),
        MeanMode::Hierarchical {
            sigma2,
            tau2,
            similar,
        } => {
            let s = p / 2;
            let set = match similar {
                Some(set) => {
                    let mut set = set.clone();
                    set.sort_unstable();
                    set.dedup();
                    set
                }
                None => {
                    let mut ids: Vec<usize> = (0..s).collect();
                    ids.shuffle(&mut stream.child("similar").rng());
                    let mut set = ids[..s / 2].to_vec();
                    set.sort_unstable();
                    set
                }
            };
            (
                gen_hierarchical_means(s, d, *sigma2, *tau2, &set, &mean_stream)?,
                set,
            )
        }
    })
}

/// Draws `samples_per_cluster` points around each mean, cluster by cluster.
/// Training labels start as the original labels.
pub fn sample_dataset(spec: &MixtureSpec, stream: &RngStream) -> Result<LabeledDataset> {
    spec.validate()?;
    let (means, similar) = build_means(spec, stream)?;
    let (p, d, per) = (spec.num_clusters, spec.input_dim, spec.samples_per_cluster);
    let mut rng = stream.child("noise").rng();
    let mut x = Matrix::zeros(p * per, d);
    let mut y = Vec::with_capacity(p * per);
    for c in 0..p {
        let mu = means.row(c).to_vec();
        for k in 0..per {
            let row = x.row_mut(c * per + k);
            for (v, m) in row.iter_mut().zip(&mu) {
                let z: f64 = StandardNormal.sample(&mut rng);
                *v = m + spec.noise_std * z;
            }
            y.push(c);
        }
    }
    Ok(LabeledDataset {
        x,
        means,
        y_train: y.clone(),
        y_original: y,
        superclass_map: (0..p).collect(),
        similar_superclasses: similar,
        provenance: Provenance {
            spec: spec.clone(),
            seed: stream.seed,
            stream: stream.label.clone(),
            transform: LabelTransform::Original,
        },
    })
}

fn check_labels(y: &[usize], c: usize) -> Result<()> {
    match y.iter().find(|&&v| v >= c) {
        Some(v) => Err(Error::InvalidArgument(format!("label {v} outside 0..{c}"))),
        None => Ok(()),
    }
}

fn check_divides(c: usize, c_tilde: usize) -> Result<()> {
    if c_tilde == 0 || c % c_tilde != 0 {
        return Err(Error::InvalidArgument(format!(
            "c_tilde = {c_tilde} does not divide class count {c}"
        )));
    }
    Ok(())
}

/// `y mod c_tilde`, plus the class → super-class map.
pub fn coarsen_labels(y: &[usize], c: usize, c_tilde: usize) -> Result<(Vec<usize>, Vec<usize>)> {
    check_divides(c, c_tilde)?;
    check_labels(y, c)?;
    Ok((
        y.iter().map(|&v| v % c_tilde).collect(),
        (0..c).map(|v| v % c_tilde).collect(),
    ))
}

/// `y + βC` for the given per-sample β.
pub fn refine_with_betas(y: &[usize], c: usize, betas: &[bool]) -> Result<Vec<usize>> {
    check_labels(y, c)?;
    if betas.len() != y.len() {
        return dim_err(format!("{} betas for {} labels", betas.len(), y.len()));
    }
    Ok(y.iter()
        .zip(betas)
        .map(|(&v, &b)| if b { v + c } else { v })
        .collect())
}

/// Fine labels with i.i.d. fair β per sample.
pub fn refine_labels(y: &[usize], c: usize, stream: &RngStream) -> Result<Vec<usize>> {
    let mut rng = stream.rng();
    let betas: Vec<bool> = y.iter().map(|_| rng.gen_bool(0.5)).collect();
    refine_with_betas(y, c, &betas)
}

/// Fine labels with each class split into halves of sizes ⌊n_c/2⌋ and ⌈n_c/2⌉.
pub fn refine_labels_stratified(y: &[usize], c: usize, stream: &RngStream) -> Result<Vec<usize>> {
    check_labels(y, c)?;
    let mut rng = stream.rng();
    let mut betas = vec![false; y.len()];
    for class in 0..c {
        let mut idx: Vec<usize> = (0..y.len()).filter(|&i| y[i] == class).collect();
        idx.shuffle(&mut rng);
        for &i in &idx[idx.len() / 2..] {
            betas[i] = true;
        }
    }
    refine_with_betas(y, c, &betas)
}

/// Merge with a fixed class permutation: `π(y) mod c_tilde`.
pub fn merge_with_permutation(
    y: &[usize],
    perm: &[usize],
    c_tilde: usize,
) -> Result<(Vec<usize>, Vec<usize>)> {
    let c = perm.len();
    check_divides(c, c_tilde)?;
    check_labels(y, c)?;
    let mut seen = vec![false; c];
    for &p in perm {
        if p >= c || std::mem::replace(&mut seen[p], true) {
            return Err(Error::InvalidArgument("not a permutation".into()));
        }
    }
    let map: Vec<usize> = perm.iter().map(|&p| p % c_tilde).collect();
    Ok((y.iter().map(|&v| map[v]).collect(), map))
}

/// Coarsening after a seeded uniform relabeling of the classes.
pub fn random_merge_labels(
    y: &[usize],
    c: usize,
    c_tilde: usize,
    stream: &RngStream,
) -> Result<(Vec<usize>, Vec<usize>)> {
    let mut perm: Vec<usize> = (0..c).collect();
    perm.shuffle(&mut stream.rng());
    merge_with_permutation(y, &perm, c_tilde)
}
