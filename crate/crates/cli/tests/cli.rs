use std::fs;
use std::process::{Command, Output};

fn anyonmem(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_anyonmem"))
        .args(args)
        .env("ANYONMEM_WORKERS", "1")
        .output()
        .expect("binary runs")
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exited normally")
}

#[test]
fn analytics_writes_predictions() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().to_str().unwrap();
    let o = anyonmem(&["analytics", "--set", "L=8,16,32", "--out", out]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let csv = fs::read_to_string(dir.path().join("predictions.csv")).unwrap();
    assert_eq!(csv.lines().count(), 4);
    let meta: serde_json::Value = serde_json::from_str(&fs::read_to_string(dir.path().join("metadata.json")).unwrap()).unwrap();
    let hash = meta["config_hash"].as_str().unwrap();
    assert!(csv.lines().skip(1).all(|l| l.ends_with(hash)));
    assert_eq!(meta["config"]["sizes"], serde_json::json!([8, 16, 32]));
}

#[test]
fn config_errors_exit_with_two() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().to_str().unwrap();
    let o = anyonmem(&["analytics", "--set", "alpha=2.5", "--out", out]);
    assert_eq!(code(&o), 2);
    assert!(String::from_utf8_lossy(&o.stderr).contains("alpha"));
    assert_eq!(code(&anyonmem(&["simulate", "--set", "runs=0", "--out", out])), 2);
    assert_eq!(code(&anyonmem(&["simulate", "--set", "T=-1", "--out", out])), 2);
    assert_eq!(code(&anyonmem(&["threshold", "--recipe", "fig2", "--out", out])), 2);
    assert_eq!(code(&anyonmem(&["simulate", "--recipe", "nope", "--out", out])), 2);
}

#[test]
fn weak_threshold_scan_is_inconclusive() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().to_str().unwrap();
    let o = anyonmem(&[
        "threshold",
        "--set",
        "L=6,8",
        "--set",
        "runs=20",
        "--set",
        "threshold.f_values=[0.001,0.005,0.01]",
        "--out",
        out,
    ]);
    assert_eq!(code(&o), 3, "{}", String::from_utf8_lossy(&o.stderr));
    assert!(dir.path().join("threshold.csv").exists());
}

#[test]
fn config_files_and_reruns_are_reproducible() {
    let dir = tempfile::tempdir().unwrap();
    let cfg_path = dir.path().join("cfg.json");
    let o = anyonmem(&["simulate", "--set", "L=6", "--set", "runs=4", "--set", "t_max=3", "--print-config"]);
    assert_eq!(code(&o), 0);
    fs::write(&cfg_path, &o.stdout).unwrap();
    let cfg = cfg_path.to_str().unwrap();
    let a = dir.path().join("a");
    let b = dir.path().join("b");
    for out in [&a, &b] {
        let o = anyonmem(&["simulate", "--config", cfg, "--seed", "7", "--out", out.to_str().unwrap()]);
        assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    }
    for f in ["curves_L6_z.csv", "curves_L6_z_ec.csv", "curves_L6_anyons.csv", "metadata.json"] {
        assert_eq!(fs::read(a.join(f)).unwrap(), fs::read(b.join(f)).unwrap(), "{f}");
    }
}

#[test]
fn cavity_and_recipes() {
    let dir = tempfile::tempdir().unwrap();
    let o = anyonmem(&["cavity", "--out", dir.path().to_str().unwrap()]);
    assert_eq!(code(&o), 0);
    let body: serde_json::Value = serde_json::from_str(&fs::read_to_string(dir.path().join("cavity.json")).unwrap()).unwrap();
    assert_eq!(body["repulsive"], serde_json::json!(true));
    let o = anyonmem(&["recipes"]);
    let text = String::from_utf8_lossy(&o.stdout);
    for name in ["fig2", "fig3", "fig4", "fig5-ohmic", "fig5-superohmic", "fig6", "fig7", "fig8"] {
        assert!(text.contains(name));
    }
}
