use std::path::Path;
use std::process::{Command, Output};

const MINIMAL: &str = r#"
seed = 7
iterations = 2
learning_rate = 0.5
aggregation = "rflpa"

[task]
kind = "blobs"
seed = 1
features = 8
classes = 2
clients = 10
samples_per_client = 32
root_size = 50
test_size = 200

[protocol]
d = 3
l = 2
p = 2
threshold = 8
corrupt = 2
"#;

fn rflpa(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_rflpa"))
        .current_dir(dir)
        .args(args)
        .output()
        .expect("binary runs")
}

#[test]
fn train_writes_one_row_per_iteration() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("c.toml"), MINIMAL).unwrap();
    let out = rflpa(dir.path(), &["train", "--config", "c.toml", "--out", "o"]);
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stdout)
    );
    let csv = std::fs::read_to_string(dir.path().join("o/metrics.csv")).unwrap();
    assert_eq!(csv.lines().count(), 3);
    let summary: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("o/summary.json")).unwrap())
            .unwrap();
    assert_eq!(summary["seed"], 7);
    assert!(csv
        .lines()
        .nth(1)
        .unwrap()
        .starts_with(summary["config_hash"].as_str().unwrap()));
}

#[test]
fn missing_root_dataset_is_named() {
    let dir = tempfile::tempdir().unwrap();
    let text: String = MINIMAL
        .lines()
        .filter(|l| !l.starts_with("root_size"))
        .collect::<Vec<_>>()
        .join("\n");
    std::fs::write(dir.path().join("c.toml"), text).unwrap();
    let out = rflpa(dir.path(), &["train", "--config", "c.toml"]);
    assert!(!out.status.success());
    let err: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(err["error"], "config");
    assert!(err["message"].as_str().unwrap().contains("root_size"));
}

#[test]
fn same_seed_same_files() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("c.toml"), MINIMAL).unwrap();
    for o in ["a", "b"] {
        let out = rflpa(
            dir.path(),
            &[
                "train",
                "--config",
                "c.toml",
                "--out",
                o,
                "--backend",
                "fast-sim",
            ],
        );
        assert!(out.status.success());
    }
    for f in ["metrics.csv", "summary.json"] {
        let a = std::fs::read(dir.path().join("a").join(f)).unwrap();
        let b = std::fs::read(dir.path().join("b").join(f)).unwrap();
        assert_eq!(a, b, "{f}");
    }
    let out = rflpa(
        dir.path(),
        &["train", "--config", "c.toml", "--out", "c", "--seed", "8"],
    );
    assert!(out.status.success());
    assert_ne!(
        std::fs::read(dir.path().join("a/metrics.csv")).unwrap(),
        std::fs::read(dir.path().join("c/metrics.csv")).unwrap()
    );
}

#[test]
fn bench_comm_rows_match_predictor() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(
        dir.path().join("b.toml"),
        "n = [10, 20]\nm = [64]\nvss = \"kzg\"\n",
    )
    .unwrap();
    let out = rflpa(
        dir.path(),
        &["bench-comm", "--config", "b.toml", "--out", "r"],
    );
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stdout)
    );
    let mut rd = csv::Reader::from_path(dir.path().join("r/bench_comm.csv")).unwrap();
    let rows: Vec<csv::StringRecord> = rd.records().map(Result::unwrap).collect();
    assert_eq!(rows.len(), 2 * 2 * 2 * 5);
    for r in &rows {
        assert_eq!(r[7], r[8]);
    }
}

#[test]
fn bad_subcommand_input_fails_with_json() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("c.toml"), MINIMAL).unwrap();
    let out = rflpa(
        dir.path(),
        &["attack-eval", "--config", "c.toml", "--rules", "krum"],
    );
    assert!(!out.status.success());
    let err: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert!(err["message"].as_str().unwrap().contains("rules"));
}

#[test]
fn verify_passes() {
    let dir = tempfile::tempdir().unwrap();
    let out = rflpa(dir.path(), &["verify", "--seed", "5"]);
    assert!(out.status.success());
    assert_eq!(String::from_utf8_lossy(&out.stdout).lines().count(), 6);
}
