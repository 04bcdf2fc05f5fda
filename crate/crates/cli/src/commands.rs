use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use collapsescope::harness::{check_conditions, clp_experiment, msdr_sweep, nc_trajectory, similarity_sweep, verify_theorem1, SweepKind};
use collapsescope::metrics::{MetricsReport, RepresentationMatrix};
use collapsescope::model::{write_weights, TwoLayerNet};
use collapsescope::numerics::csv::{fmt_f64, load_matrix};
use collapsescope::synthgen::{sample_dataset, LabelTable, LabeledDataset};
use collapsescope::trainer::{init_mlp, init_weights, train_gd};
use collapsescope::RngStream;

use crate::config::{RunConfig, SecondLayerKind};
use crate::output::RunDir;
use crate::CliError;

pub struct Context {
    pub cfg: RunConfig,
    pub config_dir: PathBuf,
    pub out: PathBuf,
    pub jobs: usize,
    pub require_conditions: bool,
}

impl Context {
    /// Relative input paths resolve against the config file's directory.
    fn input(&self, p: &Path) -> PathBuf {
        if p.is_absolute() {
            p.to_path_buf()
        } else {
            self.config_dir.join(p)
        }
    }
}

fn dataset(cfg: &RunConfig) -> Result<LabeledDataset, CliError> {
    let spec = cfg.mixture()?;
    let labels = cfg.dataset()?.labels.clone();
    let root = RngStream::new(cfg.seed, "run");
    Ok(sample_dataset(&spec, &root.child("data"))?.with_transform(labels, &root.child("labels"))?)
}

fn save_dataset(dir: &mut RunDir, data: &LabeledDataset) -> Result<(), CliError> {
    data.save(dir.path("dataset"))?;
    for f in ["features.csv", "labels.csv", "provenance.json"] {
        dir.record(&format!("dataset/{f}"));
    }
    Ok(())
}

pub fn generate(ctx: &Context) -> Result<(), CliError> {
    let data = dataset(&ctx.cfg)?;
    let mut dir = RunDir::create(&ctx.out, "generate", &ctx.cfg)?;
    save_dataset(&mut dir, &data)?;
    dir.finish()
}

pub fn train(ctx: &Context) -> Result<(), CliError> {
    let cfg = &ctx.cfg;
    let model = cfg.model()?;
    let d = cfg.dataset()?.input_dim;
    let tcfg = cfg.train_config(d)?;
    let data = dataset(cfg)?;
    let init = RngStream::new(cfg.seed, "run").child("init");
    let net = match model.second_layer {
        SecondLayerKind::FixedOnes => TwoLayerNet::fixed_ones(init_weights(d, model.hidden_dim, tcfg.init_std, &init)?, model.activation),
        SecondLayerKind::Trainable => init_mlp(d, model.hidden_dim, data.train_class_count(), tcfg.init_std, model.activation, &init)?,
    };
    let mut dir = RunDir::create(&ctx.out, "train", cfg)?;
    save_dataset(&mut dir, &data)?;
    let (net, log) = train_gd(&net, &data, &tcfg)?;
    for name in log.save(dir.path("checkpoints"))? {
        dir.record(&format!("checkpoints/{name}"));
    }
    let mut bytes = Vec::new();
    write_weights(&mut bytes, &net)?;
    dir.write("weights.bin", bytes)?;
    dir.finish()
}

pub fn metrics(ctx: &Context) -> Result<(), CliError> {
    let m = ctx.cfg.metrics()?;
    let rep_path = ctx.input(&m.representations);
    let label_path = ctx.input(&m.labels);
    let h = load_matrix(&rep_path).map_err(|e| CliError::Io(format!("{}: {e}", rep_path.display())))?;
    let table = LabelTable::load(&label_path).map_err(|e| CliError::Io(format!("{}: {e}", label_path.display())))?;
    if h.rows() != table.y_original.len() {
        return Err(CliError::Config(format!(
            "{} representation rows but {} labels",
            h.rows(),
            table.y_original.len()
        )));
    }
    let map = table.superclass_map()?;
    let train_classes = table.y_train.iter().max().map_or(0, |v| v + 1);
    let collapse = RepresentationMatrix::new(h.clone(), table.y_train.clone(), train_classes)?;
    let fine = RepresentationMatrix::new(h, table.y_original.clone(), map.len())?;
    // MSDR needs two classes under one super-class
    let shared = (0..map.len()).any(|i| (0..i).any(|j| map[i] == map[j]));
    let report = MetricsReport::compute(m.step, &collapse, &fine, shared.then_some(map.as_slice()))?;
    let mut dir = RunDir::create(&ctx.out, "metrics", &ctx.cfg)?;
    dir.write("metrics.json", report.to_json()?)?;
    dir.write("distance.csv", report.distance_matrix().to_csv())?;
    dir.finish()
}

pub fn clp(ctx: &Context) -> Result<(), CliError> {
    let setup = ctx.cfg.mlp_setup()?;
    if setup.test_per_cluster == 0 {
        return Err(CliError::Config("dataset.test_per_cluster must be positive for clp".into()));
    }
    let clp_cfg = ctx.cfg.clp_config();
    clp_cfg.validate().map_err(|e| CliError::Config(format!("clp: {e}")))?;
    let r = clp_experiment(&setup, ctx.cfg.seed, &clp_cfg)?;
    let mut dir = RunDir::create(&ctx.out, "clp", &ctx.cfg)?;
    dir.write("clp.json", r.to_json()?)?;
    let mut labels = String::from("index,reconstructed\n");
    for (i, l) in r.reconstructed_labels.iter().enumerate() {
        let _ = writeln!(labels, "{i},{l}");
    }
    dir.write("reconstructed_labels.csv", labels)?;
    dir.finish()
}

pub fn theorem(ctx: &Context) -> Result<(), CliError> {
    let p = ctx.cfg.theorem()?.params(ctx.cfg.seed);
    p.validate().map_err(|e| CliError::Config(format!("theorem: {e}")))?;
    let conditions = check_conditions(&p);
    let mut dir = RunDir::create(&ctx.out, "theorem", &ctx.cfg)?;
    dir.write("conditions.json", serde_json::to_string_pretty(&conditions)? + "\n")?;
    if ctx.require_conditions && !conditions.all_pass() {
        dir.finish()?;
        let failed: Vec<String> = conditions
            .checks
            .iter()
            .filter(|c| !c.pass)
            .map(|c| format!("{} (margin {:.3})", c.name, c.ratio))
            .collect();
        return Err(CliError::Check(format!("conditions not satisfied: {}", failed.join(", "))));
    }
    let report = verify_theorem1(&p)?;
    dir.write("theorem.json", report.to_json()?)?;
    dir.finish()?;
    if report.pass {
        Ok(())
    } else {
        Err(CliError::Check(format!(
            "{} of {} seeds reached median ratio {}",
            report.seeds_passing,
            report.per_seed.len(),
            p.pass_threshold
        )))
    }
}

pub fn sweep(ctx: &Context) -> Result<(), CliError> {
    let (kind, spec) = ctx.cfg.sweep_spec()?;
    let result = match kind {
        SweepKind::Msdr => msdr_sweep(&spec, ctx.jobs)?,
        SweepKind::Similarity => similarity_sweep(&spec, ctx.jobs)?,
    };
    let mut dir = RunDir::create(&ctx.out, "sweep", &ctx.cfg)?;
    dir.write("sweep.csv", result.to_csv())?;
    dir.write("sweep.json", result.to_json()?)?;
    dir.finish()
}

pub fn trajectory(ctx: &Context) -> Result<(), CliError> {
    let setup = ctx.cfg.mlp_setup()?;
    let steps: Vec<usize> = ctx.cfg.train_config(setup.input_dim)?.checkpoint_steps().into_iter().collect();
    let reports = nc_trajectory(&setup, ctx.cfg.seed, &steps)?;
    let mut dir = RunDir::create(&ctx.out, "trajectory", &ctx.cfg)?;
    let mut csv = String::from("step,nc1,nc2,nc1_degenerate,msdr\n");
    for r in &reports {
        let msdr = r.msdr.map(fmt_f64).unwrap_or_default();
        let _ = writeln!(csv, "{},{},{},{},{msdr}", r.step, fmt_f64(r.nc1), fmt_f64(r.nc2), r.nc1_degenerate);
        dir.write(&format!("metrics/step{}.json", r.step), r.to_json()?)?;
        dir.write(&format!("distance/step{}.csv", r.step), r.distance_matrix().to_csv())?;
    }
    dir.write("trajectory.csv", csv)?;
    dir.finish()
}
