use std::path::Path;
use std::process::Command;

use serde_json::Value;

fn glpin(args: &[&str]) -> (i32, String) {
    let out = Command::new(env!("CARGO_BIN_EXE_glpin")).args(args).env("RUST_LOG", "warn").output().expect("binary runs");
    (out.status.code().unwrap_or(-1), String::from_utf8_lossy(&out.stderr).into_owned())
}

fn write(dir: &Path, name: &str, text: &str) -> String {
    let p = dir.join(name);
    std::fs::write(&p, text).unwrap();
    p.to_string_lossy().into_owned()
}

fn json(path: &Path) -> Value {
    serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap()
}

const RING: &str = r#"
[ring]
center = { x = 0.0, y = 0.0 }
outer = 4.0
inner = 1.0
b = 0.5
degree = 2
layers = 32
weight = { kind = "sector", start = 0.5, width = 2.0 }
"#;

const EXPERIMENT: &str = r#"
eps = [0.1]
degree = 1

[domain]
h = 0.03125
shape = { kind = "disc", radius = 1.0 }

[pinning]
kind = "uniform"

[solver]
restarts = 1
"#;

#[test]
fn ring_writes_both_modes() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "ring.toml", RING);
    let out = dir.path().join("out");
    let (code, err) = glpin(&["ring", "--config", &cfg, "--out", out.to_str().unwrap()]);
    assert_eq!(code, 0, "{err}");
    let v = json(&out.join("ring.json"));
    let deg = v["degree"]["energy"].as_f64().unwrap();
    let dir_e = v["dirichlet"]["energy"].as_f64().unwrap();
    let log = 4f64.ln();
    assert!(deg >= 4.0 * 0.25 * std::f64::consts::PI * log && deg <= 4.0 * std::f64::consts::PI * log);
    assert!(dir_e >= deg - 1e-10);
}

#[test]
fn unknown_keys_fail_only_in_strict_mode() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "ring.toml", &format!("{RING}colour = 3\n"));
    let out = dir.path().join("out");
    let (code, err) = glpin(&["ring", "--strict", "--config", &cfg, "--out", out.to_str().unwrap()]);
    assert_eq!(code, 2);
    assert!(err.contains("ring.colour"), "{err}");
    let (code, err) = glpin(&["ring", "--config", &cfg, "--out", out.to_str().unwrap()]);
    assert_eq!(code, 0, "{err}");
}

#[test]
fn invalid_configs_exit_with_code_two() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("out");
    let bad = write(dir.path(), "bad.toml", &EXPERIMENT.replace("eps = [0.1]", "eps = [0.05, 0.1]"));
    let (code, err) = glpin(&["quantization", "--config", &bad, "--out", out.to_str().unwrap()]);
    assert_eq!(code, 2, "{err}");
    let (code, _) = glpin(&["ring", "--out", out.to_str().unwrap()]);
    assert_eq!(code, 2);
    let broken = write(dir.path(), "broken.toml", "eps = [");
    let (code, _) = glpin(&["solve-u", "--config", &broken]);
    assert_eq!(code, 2);
}

#[test]
fn renorm_and_homogenize_smoke() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("out");
    let renorm = write(
        dir.path(),
        "renorm.toml",
        "points = [{ x = 0.0, y = 0.0 }]\n[domain]\nh = 0.03125\nshape = { kind = \"disc\", radius = 1.0 }\n",
    );
    let (code, err) = glpin(&["renorm", "--config", &renorm, "--out", out.to_str().unwrap()]);
    assert_eq!(code, 0, "{err}");
    let w = json(&out.join("renorm.json"));
    assert!(w["gap"].as_f64().unwrap() < 1e-2);

    let hom = write(dir.path(), "hom.toml", "n = 32\n[cell]\nkind = \"laminate\"\nh1 = 0.25\nh2 = 1.0\n");
    let (code, err) = glpin(&["homogenize", "--config", &hom, "--out", out.to_str().unwrap()]);
    assert_eq!(code, 0, "{err}");
    let a = json(&out.join("homogenize.json"));
    assert!((a["matrix"]["entries"][0][0].as_f64().unwrap() - 0.4).abs() < 1e-3);
}

#[test]
fn quantization_record_feeds_the_plot_bundle() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "q.toml", EXPERIMENT);
    let out = dir.path().join("q");
    let (code, err) = glpin(&["quantization", "--config", &cfg, "--out", out.to_str().unwrap(), "--seed", "3", "--threads", "1"]);
    assert_eq!(code, 0, "{err}");
    let record = out.join("record.json");
    let r = json(&record);
    assert_eq!(r["seed"], 3);
    assert_eq!(r["status"]["state"], "ok");

    let plots = dir.path().join("plots");
    let (code, err) = glpin(&["plots", "--out", plots.to_str().unwrap(), record.to_str().unwrap()]);
    assert_eq!(code, 0, "{err}");
    let csv = std::fs::read_to_string(plots.join("vortices.csv")).unwrap();
    assert_eq!(csv.lines().count(), 2);
}
