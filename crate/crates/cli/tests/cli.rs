use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::{json, Value};

fn bin() -> Command {
    let mut c = Command::new(env!("CARGO_BIN_EXE_collapsescope"));
    c.env_remove("COLLAPSESCOPE_SEED");
    c
}

fn write_config(dir: &Path, name: &str, v: &Value) -> PathBuf {
    let p = dir.join(name);
    fs::write(&p, serde_json::to_string_pretty(v).unwrap()).unwrap();
    p
}

fn run(cmd: &str, config: &Path, out: &Path, extra: &[&str]) -> Output {
    bin()
        .arg(cmd)
        .arg("--config")
        .arg(config)
        .arg("--out")
        .arg(out)
        .args(extra)
        .output()
        .unwrap()
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exit code")
}

fn read_json(p: &Path) -> Value {
    serde_json::from_str(&fs::read_to_string(p).unwrap()).unwrap()
}

fn small_dataset() -> Value {
    json!({
        "num_clusters": 4,
        "input_dim": 8,
        "samples_per_cluster": 10,
        "mean_mode": {"kind": "iid_normal", "sigma2": 4.0},
        "labels": {"kind": "coarse", "c_tilde": 2}
    })
}

#[test]
fn generate_writes_dataset_and_manifest() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), "c.json", &json!({"seed": 1, "dataset": small_dataset()}));
    let out = tmp.path().join("gen");
    let o = run("generate", &cfg, &out, &[]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let features = fs::read_to_string(out.join("dataset/features.csv")).unwrap();
    assert_eq!(features.lines().filter(|l| !l.starts_with('#')).count(), 40);
    let manifest = read_json(&out.join("manifest.json"));
    let files: Vec<&str> = manifest["files"].as_array().unwrap().iter().map(|f| f["path"].as_str().unwrap()).collect();
    for f in ["config.json", "dataset/features.csv", "dataset/labels.csv", "dataset/provenance.json"] {
        assert!(files.contains(&f), "{f} missing from manifest");
    }
    assert_eq!(manifest["seed"], 1);

    let again = tmp.path().join("gen2");
    assert_eq!(code(&run("generate", &cfg, &again, &[])), 0);
    let sums = |p: &Path| read_json(&p.join("manifest.json"))["files"].clone();
    assert_eq!(sums(&out), sums(&again));
}

#[test]
fn seed_env_and_set_override() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), "c.json", &json!({"seed": 1, "dataset": small_dataset()}));
    let a = tmp.path().join("a");
    let o = bin()
        .env("COLLAPSESCOPE_SEED", "9")
        .args(["generate", "--config"])
        .arg(&cfg)
        .arg("--out")
        .arg(&a)
        .args(["--set", "dataset.samples_per_cluster=3"])
        .output()
        .unwrap();
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let copy = read_json(&a.join("config.json"));
    assert_eq!(copy["seed"], 9);
    assert_eq!(copy["dataset"]["samples_per_cluster"], 3);
    let b = tmp.path().join("b");
    assert_eq!(code(&run("generate", &cfg, &b, &[])), 0);
    assert_ne!(
        fs::read(a.join("dataset/features.csv")).unwrap(),
        fs::read(b.join("dataset/features.csv")).unwrap()
    );
}

#[test]
fn config_errors_exit_two() {
    let tmp = tempfile::tempdir().unwrap();
    let mut ds = small_dataset();
    ds["labels"]["c_tilde"] = json!(3);
    let cfg = write_config(tmp.path(), "bad.json", &json!({"dataset": ds}));
    let o = run("generate", &cfg, &tmp.path().join("x"), &[]);
    assert_eq!(code(&o), 2);
    assert!(String::from_utf8_lossy(&o.stderr).contains("coarse.c_tilde"));

    let cfg = write_config(tmp.path(), "unknown.json", &json!({"dataset": small_dataset(), "bogus": 1}));
    let o = run("generate", &cfg, &tmp.path().join("y"), &[]);
    assert_eq!(code(&o), 2);
    assert!(String::from_utf8_lossy(&o.stderr).contains("bogus"));

    let mut ds = small_dataset();
    ds["extra_key"] = json!(true);
    let cfg = write_config(tmp.path(), "nested.json", &json!({"dataset": ds}));
    let o = run("generate", &cfg, &tmp.path().join("z"), &[]);
    assert_eq!(code(&o), 2);
    assert!(String::from_utf8_lossy(&o.stderr).contains("dataset"));

    let o = run("generate", &tmp.path().join("missing.json"), &tmp.path().join("w"), &[]);
    assert_eq!(code(&o), 2);
}

#[test]
fn train_then_metrics() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(
        tmp.path(),
        "train.json",
        &json!({
            "seed": 3,
            "dataset": small_dataset(),
            "model": {"hidden_dim": 16},
            "train": {"eta": 0.1, "steps": 20, "checkpoint_every": 10}
        }),
    );
    let out = tmp.path().join("run");
    let o = run("train", &cfg, &out, &[]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    for f in ["weights.bin", "checkpoints/train_log.csv", "checkpoints/rep_step0.csv", "checkpoints/rep_step20.csv"] {
        assert!(out.join(f).exists(), "{f}");
    }
    let log = fs::read_to_string(out.join("checkpoints/train_log.csv")).unwrap();
    assert_eq!(log.lines().count(), 4);

    let mcfg = write_config(
        tmp.path(),
        "metrics.json",
        &json!({"metrics": {"representations": "run/checkpoints/rep_step20.csv", "labels": "run/dataset/labels.csv", "step": 20}}),
    );
    let mout = tmp.path().join("m");
    let o = run("metrics", &mcfg, &mout, &[]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let r = read_json(&mout.join("metrics.json"));
    assert_eq!(r["step"], 20);
    assert_eq!(r["class_count"], 4);
    assert_eq!(r["distance"].as_array().unwrap().len(), 16);
    assert!(r["msdr"].as_f64().unwrap() > 0.0);
}

#[test]
fn metrics_on_collapsed_reps_and_missing_input() {
    let tmp = tempfile::tempdir().unwrap();
    let reps = "# rows=4 cols=2\n1,0\n1,0\n0,1\n0,1\n";
    fs::write(tmp.path().join("h.csv"), reps).unwrap();
    fs::write(tmp.path().join("labels.csv"), "y_original,y_train,superclass\n0,0,0\n0,0,0\n1,1,1\n1,1,1\n").unwrap();
    let cfg = write_config(tmp.path(), "m.json", &json!({"metrics": {"representations": "h.csv", "labels": "labels.csv"}}));
    let out = tmp.path().join("out");
    let o = run("metrics", &cfg, &out, &[]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let r = read_json(&out.join("metrics.json"));
    assert_eq!(r["nc1"], 0.0);
    assert!(r["msdr"].is_null());

    let cfg = write_config(tmp.path(), "missing.json", &json!({"metrics": {"representations": "nope.csv", "labels": "labels.csv"}}));
    assert_eq!(code(&run("metrics", &cfg, &tmp.path().join("o2"), &[])), 2);
}

#[test]
fn theorem_require_conditions_exit_three() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), "t.json", &json!({"theorem": {"d": 100, "n": 52, "seeds": [0]}}));
    let out = tmp.path().join("t");
    let o = run("theorem", &cfg, &out, &["--require-conditions"]);
    assert_eq!(code(&o), 3, "{}", String::from_utf8_lossy(&o.stderr));
    let cond = read_json(&out.join("conditions.json"));
    let two = cond["checks"].as_array().unwrap().iter().find(|c| c["name"] == "2").unwrap();
    assert_eq!(two["pass"], false);
    assert!(!out.join("theorem.json").exists());
    assert!(out.join("manifest.json").exists());
}

#[test]
fn theorem_noiseless_passes() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(
        tmp.path(),
        "t.json",
        &json!({"theorem": {"d": 1024, "seeds": [0, 1], "kappa": 0.0, "eta": 1e-3, "steps": 5}}),
    );
    let out = tmp.path().join("t");
    let o = run("theorem", &cfg, &out, &[]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    assert_eq!(read_json(&out.join("theorem.json"))["pass"], true);
}

#[test]
fn sweep_csv_columns() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(
        tmp.path(),
        "s.json",
        &json!({"sweep": {
            "kind": "similarity", "axis": "tau2", "values": [0.0], "seeds": [0],
            "defaults": {"samples_per_cluster": 20, "input_dim": 16, "hidden_dim": 16, "steps": 30}
        }}),
    );
    let out = tmp.path().join("s");
    let o = run("sweep", &cfg, &out, &["--jobs", "2"]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let csv = fs::read_to_string(out.join("sweep.csv")).unwrap();
    assert_eq!(csv.lines().next().unwrap(), "axis,value,seed,msdr,msdr_similar,msdr_dissimilar,train_acc,converged");
    assert_eq!(csv.lines().count(), 2);
    assert!(read_json(&out.join("sweep.json"))["config_hash"].is_string());
}

#[test]
fn trajectory_and_clp() {
    let tmp = tempfile::tempdir().unwrap();
    let mut ds = json!({
        "num_clusters": 4,
        "input_dim": 16,
        "samples_per_cluster": 30,
        "test_per_cluster": 10,
        "mean_mode": {"kind": "iid_normal", "sigma2": 4.0},
        "labels": {"kind": "coarse", "c_tilde": 2}
    });
    let base = json!({
        "seed": 2,
        "dataset": ds.clone(),
        "model": {"hidden_dim": 32},
        "train": {"eta": 0.1, "steps": 40, "extra_checkpoints": [10]},
        "clp": {"reducer": {"kind": "pca"}}
    });
    let cfg = write_config(tmp.path(), "c.json", &base);
    let out = tmp.path().join("clp");
    let o = run("clp", &cfg, &out, &[]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let r = read_json(&out.join("clp.json"));
    assert_eq!(r["reducer"], "pca");
    assert!(r["test_accuracy"].as_f64().unwrap() > 0.5);

    ds["test_per_cluster"] = json!(0);
    let mut t = base.clone();
    t["dataset"] = ds;
    let cfg = write_config(tmp.path(), "t.json", &t);
    let out = tmp.path().join("traj");
    let o = run("trajectory", &cfg, &out, &[]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let csv = fs::read_to_string(out.join("trajectory.csv")).unwrap();
    let steps: Vec<&str> = csv.lines().skip(1).map(|l| l.split(',').next().unwrap()).collect();
    assert_eq!(steps, ["0", "10", "40"]);
    assert!(out.join("distance/step40.csv").exists());
    assert_eq!(code(&run("clp", &cfg, &tmp.path().join("no"), &[])), 2);
}
