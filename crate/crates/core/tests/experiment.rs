use glpin::experiment::*;

const CONFIG: &str = r#"
eps = [0.1, 0.08]
degree = 1
seed = 5

[domain]
h = 0.03125
shape = { kind = "disc", radius = 1.0 }

[pinning]
kind = "uniform"

[solver]
restarts = 2
"#;

fn config() -> ExperimentConfig {
    let (cfg, _): (ExperimentConfig, _) = parse_toml(CONFIG, true).unwrap();
    cfg
}

#[test]
fn quantization_is_reproducible_and_round_trips() {
    let cfg = config();
    let a = run_quantization(&cfg);
    let b = run_quantization(&cfg);
    assert!(a.is_ok(), "{:?}", a.status);
    assert_eq!(a.without_timings(), b.without_timings());
    assert!(!a.timings.is_empty());
    for q in &a.quantization {
        assert_eq!(q.checks.zeros, 1);
        assert!(q.checks.all_degree_one);
        assert!(q.vortices.vortices[0].position.norm() < 0.1);
        assert_eq!(q.restarts.len(), 2);
    }

    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("record.json");
    a.save(&path).unwrap();
    assert_eq!(RunRecord::load(&path).unwrap(), a);
}

#[test]
fn a_different_seed_changes_only_the_perturbed_restarts() {
    let cfg = config();
    let mut other = cfg.clone();
    other.seed = 6;
    let a = run_quantization(&cfg);
    let b = run_quantization(&other);
    assert_ne!(a.config_hash, b.config_hash);
    assert_eq!(a.quantization[0].restarts[0].seeds, b.quantization[0].restarts[0].seeds);
    assert_ne!(a.quantization[0].restarts[1].seeds, b.quantization[0].restarts[1].seeds);
}

#[test]
fn invalid_configs_are_recorded_as_failures() {
    let mut cfg = config();
    cfg.eps = vec![0.05, 0.1];
    let rec = run_quantization(&cfg);
    match rec.status {
        RunStatus::Failed { ref stage, exit_code, .. } => {
            assert_eq!(stage, "config");
            assert_eq!(exit_code, 2);
        }
        RunStatus::Ok => panic!("accepted an increasing schedule"),
    }
    assert!(run_expansion(&config()).is_err());
}

#[test]
fn tampered_records_are_rejected() {
    let rec = run_quantization(&config());
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("record.json");
    let mut bad = rec.clone();
    bad.schema_version = 99;
    bad.save(&path).unwrap();
    assert!(RunRecord::load(&path).is_err());
    let text = serde_json::to_string(&rec).unwrap().replacen("\"seed\"", "\"extra\":1,\"seed\"", 1);
    std::fs::write(&path, text).unwrap();
    assert!(RunRecord::load(&path).is_err());
}

#[test]
fn plot_bundle_has_one_row_per_vortex() {
    let dir = tempfile::tempdir().unwrap();
    let empty = emit_plots(&[], dir.path()).unwrap();
    assert_eq!(empty.records, 0);
    let text = std::fs::read_to_string(dir.path().join("vortices.csv")).unwrap();
    assert_eq!(text.lines().count(), 1);
    assert_eq!(text.lines().next().unwrap(), VORTEX_HEADER.join(","));

    let rec = run_quantization(&config());
    emit_plots(std::slice::from_ref(&rec), dir.path()).unwrap();
    let text = std::fs::read_to_string(dir.path().join("vortices.csv")).unwrap();
    let rows: Vec<&str> = text.lines().skip(1).collect();
    let expected: usize = rec.quantization.iter().map(|q| q.vortices.vortices.len()).sum();
    assert_eq!(rows.len(), expected);
    let eps: Vec<f64> = rows.iter().map(|r| r.split(',').nth(2).unwrap().parse().unwrap()).collect();
    assert!(eps.windows(2).all(|w| w[1] <= w[0]));
    let exp = std::fs::read_to_string(dir.path().join("expansion.csv")).unwrap();
    assert_eq!(exp.trim(), EXPANSION_HEADER.join(","));
}
