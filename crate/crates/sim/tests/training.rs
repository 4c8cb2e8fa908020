use rflpa_sim::{run_experiment, ExperimentConfig};

fn config(aggregation: &str, extra: &str) -> ExperimentConfig {
    let text = format!(
        r#"
seed = 3
iterations = 6
learning_rate = 0.5
aggregation = "{aggregation}"
{extra}
[task]
kind = "blobs"
seed = 4
features = 6
classes = 2
clients = 10
samples_per_client = 24
root_size = 40
test_size = 300

[protocol]
d = 3
l = 2
p = 2
threshold = 8
corrupt = 2
crypto = "fast-sim"
"#
    );
    ExperimentConfig::from_toml(&text).unwrap()
}

#[test]
fn secure_and_plaintext_trajectories_coincide() {
    let a = run_experiment(&config("rflpa", "")).unwrap();
    let b = run_experiment(&config("plaintext_fltrust", "")).unwrap();
    for (x, y) in a.rows.iter().zip(&b.rows) {
        assert!(
            (x.loss - y.loss).abs() < 1e-3,
            "iteration {}: {} vs {}",
            x.iteration,
            x.loss,
            y.loss
        );
    }
    for (x, y) in a.final_model.iter().zip(&b.final_model) {
        assert!((x - y).abs() < 1e-3);
    }
}

#[test]
fn runs_are_reproducible() {
    let cfg = config("rflpa", "");
    let csv = |m: &rflpa_sim::Metrics| {
        let mut out = Vec::new();
        m.write_csv(&mut out).unwrap();
        out
    };
    assert_eq!(
        csv(&run_experiment(&cfg).unwrap()),
        csv(&run_experiment(&cfg).unwrap())
    );
}

#[test]
fn dropouts_and_share_faults_do_not_stop_training() {
    let extra = r#"
[[behaviors]]
behavior = { kind = "dropout", round = 3 }
fraction = 0.1

[[behaviors]]
behavior = { kind = "invalid_shares" }
fraction = 0.1
"#;
    let m = run_experiment(&config("rflpa", extra)).unwrap();
    assert!(m.rows.iter().all(|r| !r.aborted));
    assert!(m.rows.iter().all(|r| r.excluded >= 1));
    assert!(m.final_accuracy().unwrap() > 0.8);
}

#[test]
fn label_flipping_is_scored_below_honest_clients() {
    let extra = r#"
[[behaviors]]
behavior = { kind = "label_flip" }
fraction = 0.3
"#;
    let m = run_experiment(&config("rflpa", extra)).unwrap();
    assert!(m.mean_ts_malicious().unwrap() < m.mean_ts_honest().unwrap());
}

#[test]
fn infeasible_fault_mix_is_rejected() {
    let mut cfg = config("rflpa", "");
    cfg.behaviors = vec![rflpa_sim::experiment::BehaviorSpec {
        behavior: rflpa_sim::ClientBehavior::Dropout { round: 1 },
        fraction: 0.5,
    }];
    assert!(cfg.validate().is_err());
}
