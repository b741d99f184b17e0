use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use mitarget::io::{load_bags, load_scores, ModelFile};

const SMALL: &str = r#"
seed = 3
n_pos_bags = 6
n_neg_bags = 6
instances_per_bag = 8
targets_per_positive_bag = 2
mean_target_proportion = 0.5
snr_db = 30.0

[endmembers]
kind = "smooth-spectra"
d = 12
count = 3
seed = 5
"#;

fn mitarget(args: &[&str], cwd: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_mitarget"))
        .args(args)
        .current_dir(cwd)
        .env_remove("MITARGET_OUT_DIR")
        .output()
        .expect("binary runs")
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn generated(dir: &Path) -> PathBuf {
    fs::write(dir.join("small.toml"), SMALL).unwrap();
    let o = mitarget(&["generate", "small.toml", "data"], dir);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    dir.join("data")
}

#[test]
fn generate_writes_dataset_and_is_deterministic() {
    let tmp = tempfile::tempdir().unwrap();
    let data = generated(tmp.path());
    for f in ["bags.csv", "truth.csv", "true_signature.json", "manifest.json"] {
        assert!(data.join(f).is_file(), "missing {f}");
    }
    let bags = load_bags(&data.join("bags.csv")).unwrap();
    assert_eq!(bags.n_positive(), 6);
    assert_eq!(bags.n_instances(), 96);

    let o = mitarget(&["generate", "small.toml", "again"], tmp.path());
    assert_eq!(o.status.code(), Some(0));
    for f in ["bags.csv", "truth.csv"] {
        assert_eq!(fs::read(data.join(f)).unwrap(), fs::read(tmp.path().join("again").join(f)).unwrap());
    }

    let o = mitarget(&["generate", "small.toml", "other", "--seed", "4"], tmp.path());
    assert_eq!(o.status.code(), Some(0));
    assert_ne!(fs::read(data.join("bags.csv")).unwrap(), fs::read(tmp.path().join("other/bags.csv")).unwrap());
}

#[test]
fn generate_rejects_too_many_targets() {
    let tmp = tempfile::tempdir().unwrap();
    fs::write(tmp.path().join("bad.toml"), SMALL.replace("targets_per_positive_bag = 2", "targets_per_positive_bag = 9")).unwrap();
    let o = mitarget(&["generate", "bad.toml"], tmp.path());
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("targets_per_positive_bag"), "{}", stderr(&o));
}

#[test]
fn missing_input_is_an_io_error() {
    let tmp = tempfile::tempdir().unwrap();
    let o = mitarget(&["train", "nowhere.csv"], tmp.path());
    assert_eq!(o.status.code(), Some(3));
}

#[test]
fn train_detect_eval_pipeline() {
    let tmp = tempfile::tempdir().unwrap();
    let data = generated(tmp.path());
    let o = mitarget(
        &["train", "data/bags.csv", "--mode", "ace", "--out", "ace.json", "--max-iterations", "50", "--trace", "trace.csv"],
        tmp.path(),
    );
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    assert!(tmp.path().join("ace.json.manifest.json").is_file());
    assert!(tmp.path().join("trace.csv").is_file());
    let model_text = fs::read_to_string(tmp.path().join("ace.json")).unwrap();
    let json: serde_json::Value = serde_json::from_str(&model_text).unwrap();
    assert_eq!(json["mode"], "ace");
    assert_eq!(json["converged"], true);
    assert!(json["iterations"].as_u64().unwrap() <= 50);

    let o = mitarget(&["detect", "data/bags.csv", "ace.json", "--truth", "data/truth.csv", "--out", "scores.csv"], tmp.path());
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let rows = load_scores(&tmp.path().join("scores.csv")).unwrap();
    assert_eq!(rows.len(), 96);

    let bags = load_bags(&data.join("bags.csv")).unwrap();
    let model = ModelFile::from_json(&model_text).unwrap().to_model().unwrap();
    for (row, x) in rows.iter().zip(bags.instances()) {
        assert_eq!(row.score, model.score(x).unwrap());
    }

    let auc = mitarget(&["eval", "scores.csv", "--metric", "auc", "--roc", "roc.csv"], tmp.path());
    assert_eq!(auc.status.code(), Some(0), "{}", stderr(&auc));
    assert!(tmp.path().join("roc.csv").is_file());
    let nauc = mitarget(&["eval", "scores.csv", "--metric", "nauc", "--far-max", "1"], tmp.path());
    let value = |o: &Output| stdout(o).split_whitespace().last().unwrap().parse::<f64>().unwrap();
    assert!(value(&auc) > 0.5);
    assert_eq!(value(&auc), value(&nauc));
}

#[test]
fn every_training_mode_runs() {
    let tmp = tempfile::tempdir().unwrap();
    generated(tmp.path());
    for mode in ["smf", "ace", "lindisc", "emdd", "emddp"] {
        let out = format!("{mode}.json");
        let o = mitarget(&["train", "data/bags.csv", "--mode", mode, "--out", &out, "--negative-bags", "kmeans:3"], tmp.path());
        assert_eq!(o.status.code(), Some(0), "{mode}: {}", stderr(&o));
        let o = mitarget(&["detect", "data/bags.csv", &out, "--out", "s.csv"], tmp.path());
        assert_eq!(o.status.code(), Some(0), "{mode}: {}", stderr(&o));
    }
}

#[test]
fn train_without_positive_bags_is_algorithmic() {
    let tmp = tempfile::tempdir().unwrap();
    fs::write(tmp.path().join("neg.csv"), "bag_id,label,f0,f1\nn0,0,1,2\nn0,0,2,1\nn1,0,0,1\n").unwrap();
    let o = mitarget(&["train", "neg.csv"], tmp.path());
    assert_eq!(o.status.code(), Some(4), "{}", stderr(&o));
}

#[test]
fn detect_rejects_wrong_dimension() {
    let tmp = tempfile::tempdir().unwrap();
    generated(tmp.path());
    let o = mitarget(&["train", "data/bags.csv", "--mode", "smf", "--out", "m.json"], tmp.path());
    assert_eq!(o.status.code(), Some(0));
    fs::write(tmp.path().join("short.csv"), "bag_id,label,f0,f1\nb,1,1,2\n").unwrap();
    let o = mitarget(&["detect", "short.csv", "m.json"], tmp.path());
    assert_eq!(o.status.code(), Some(2), "{}", stderr(&o));
}

#[test]
fn eval_perfect_and_degenerate() {
    let tmp = tempfile::tempdir().unwrap();
    fs::write(tmp.path().join("good.csv"), "instance_id,score,truth_label\n0,0.9,1\n1,0.8,1\n2,0.1,0\n3,0.2,0\n").unwrap();
    let o = mitarget(&["eval", "good.csv"], tmp.path());
    assert_eq!(o.status.code(), Some(0));
    assert_eq!(stdout(&o).trim(), "auc 1");

    fs::write(tmp.path().join("one.csv"), "instance_id,score,truth_label\n0,0.9,1\n1,0.8,1\n").unwrap();
    let o = mitarget(&["eval", "one.csv"], tmp.path());
    assert_eq!(o.status.code(), Some(4));

    fs::write(tmp.path().join("none.csv"), "instance_id,score,truth_label\n0,0.9,\n").unwrap();
    let o = mitarget(&["eval", "none.csv"], tmp.path());
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn experiment_writes_results() {
    let tmp = tempfile::tempdir().unwrap();
    let spec = format!("{}/configs/table1.toml", env!("CARGO_MANIFEST_DIR"));
    let o = mitarget(&["experiment", &spec, "res", "--runs", "1"], tmp.path());
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let dir = tmp.path().join("res");
    let results = fs::read_to_string(dir.join("table1_results.csv")).unwrap();
    let mut lines = results.lines();
    assert_eq!(lines.next(), Some("cell,algorithm,mean,std,mean_runtime_s"));
    assert_eq!(lines.count(), 3 * 4);
    assert!(dir.join("table1_roc.csv").is_file());
    assert!(dir.join("table1_manifest.json").is_file());
}

#[test]
fn out_dir_from_environment() {
    let tmp = tempfile::tempdir().unwrap();
    fs::write(tmp.path().join("small.toml"), SMALL).unwrap();
    let o = Command::new(env!("CARGO_BIN_EXE_mitarget"))
        .args(["generate", "small.toml"])
        .current_dir(tmp.path())
        .env("MITARGET_OUT_DIR", tmp.path().join("envdir"))
        .output()
        .unwrap();
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    assert!(tmp.path().join("envdir/bags.csv").is_file());
}
