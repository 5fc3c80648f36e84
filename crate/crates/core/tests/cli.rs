use std::path::Path;
use std::process::{Command, Output};

use shotnoise::config::RunConfig;
use shotnoise::trace::{read_json, Report};

fn shotnoise(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_shotnoise")).args(args).output().unwrap()
}

fn code(o: &Output) -> i32 {
    o.status.code().unwrap()
}

fn write_config(dir: &Path, cfg: &RunConfig) -> String {
    let path = dir.join("run.toml");
    std::fs::write(&path, cfg.to_toml_string()).unwrap();
    path.to_str().unwrap().to_string()
}

fn small_honest(n: usize) -> RunConfig {
    let mut c = RunConfig::honest_default();
    c.system.n_per_group = n;
    c
}

#[test]
fn simulate_is_reproducible_per_seed() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), &small_honest(500));
    let a = tmp.path().join("a");
    let b = tmp.path().join("b");
    let c = tmp.path().join("c");
    for (dir, seed) in [(&a, "7"), (&b, "7"), (&c, "8")] {
        let o = shotnoise(&["--config", &cfg, "--seed", seed, "--out", dir.to_str().unwrap(), "simulate"]);
        assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    }
    let read = |d: &Path, f: &str| std::fs::read(d.join(f)).unwrap();
    assert_eq!(read(&a, "trace.csv"), read(&b, "trace.csv"));
    assert_eq!(read(&a, "groups.csv"), read(&b, "groups.csv"));
    assert_eq!(read(&a, "manifest.json"), read(&b, "manifest.json"));
    assert_ne!(read(&a, "trace.csv"), read(&c, "trace.csv"));
}

#[test]
fn degenerate_schedule_is_a_validation_error() {
    let tmp = tempfile::tempdir().unwrap();
    let mut cfg = small_honest(100);
    cfg.schedule.step = Some(1.0);
    let path = write_config(tmp.path(), &cfg);
    let o = shotnoise(&["--config", &path, "--out", tmp.path().to_str().unwrap(), "simulate"]);
    assert_eq!(code(&o), 3, "{}", String::from_utf8_lossy(&o.stderr));
}

#[test]
fn unknown_config_key_is_rejected() {
    let tmp = tempfile::tempdir().unwrap();
    let path = tmp.path().join("bad.toml");
    std::fs::write(&path, "[system]\nv_a_snu = 5.0\ngain_mv2 = 1.0\nn_per_group = 10\nseed = 1\nbogus = 2\n").unwrap();
    let o = shotnoise(&["--config", path.to_str().unwrap(), "simulate"]);
    assert_ne!(code(&o), 0);
    assert!(String::from_utf8_lossy(&o.stderr).contains("bogus"));
}

#[test]
fn trace_and_summary_analysis_agree() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), &small_honest(2_000));
    let dir = tmp.path().join("run");
    let d = dir.to_str().unwrap();
    assert_eq!(code(&shotnoise(&["--config", &cfg, "--out", d, "simulate"])), 0);

    let from_trace = tmp.path().join("t");
    let from_groups = tmp.path().join("g");
    let ct = code(&shotnoise(&[
        "--out",
        from_trace.to_str().unwrap(),
        "analyze",
        dir.join("trace.csv").to_str().unwrap(),
    ]));
    let cg = code(&shotnoise(&[
        "--out",
        from_groups.to_str().unwrap(),
        "analyze",
        dir.join("groups.csv").to_str().unwrap(),
    ]));
    assert_eq!(ct, cg);
    let rt: Report = read_json(&from_trace.join("report.json")).unwrap();
    let rg: Report = read_json(&from_groups.join("report.json")).unwrap();
    assert_eq!(serde_json::to_value(&rt).unwrap(), serde_json::to_value(&rg).unwrap());
}

#[test]
fn honest_block_is_accepted_and_yields_a_key_rate() {
    let tmp = tempfile::tempdir().unwrap();
    let mut c = small_honest(1_000_000);
    c.system.seed = 1;
    let cfg = write_config(tmp.path(), &c);
    let d = tmp.path().to_str().unwrap();
    assert_eq!(code(&shotnoise(&["--config", &cfg, "--out", d, "simulate", "--summary-only"])), 0);
    assert!(!tmp.path().join("trace.csv").exists());
    let o = shotnoise(&["analyze", tmp.path().join("groups.csv").to_str().unwrap()]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stdout));
    assert!(String::from_utf8_lossy(&o.stdout).starts_with("ACCEPTED"));

    let report = tmp.path().join("report.json");
    let rep: Report = read_json(&report).unwrap();
    assert!(rep.accepted);
    let o = shotnoise(&["keyrate", "--report", report.to_str().unwrap(), "--summary-only"]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let rate: f64 = String::from_utf8_lossy(&o.stdout).trim().parse().unwrap();
    assert!(rate > 0.0 && rate < 2e-3, "{rate}");
}

#[test]
fn saturated_block_is_rejected_and_refused_by_keyrate() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), &RunConfig::saturation_scenario(20.0, 10_000, 3));
    let d = tmp.path().to_str().unwrap();
    assert_eq!(code(&shotnoise(&["--config", &cfg, "--out", d, "simulate"])), 0);
    let o = shotnoise(&["analyze", tmp.path().join("trace.csv").to_str().unwrap()]);
    assert_eq!(code(&o), 6);
    assert!(String::from_utf8_lossy(&o.stdout).contains("NOISE_FIT_R2"));

    let report = tmp.path().join("report.json");
    let o = shotnoise(&["keyrate", "--report", report.to_str().unwrap()]);
    assert_eq!(code(&o), 6);
    assert!(String::from_utf8_lossy(&o.stderr).contains("rejected"));
}

#[test]
fn malformed_trace_row_names_the_line() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), &small_honest(50));
    let d = tmp.path().to_str().unwrap();
    assert_eq!(code(&shotnoise(&["--config", &cfg, "--out", d, "simulate"])), 0);
    let path = tmp.path().join("trace.csv");
    let text = std::fs::read_to_string(&path).unwrap();
    let mut lines: Vec<String> = text.lines().map(String::from).collect();
    lines[5] = "4,X,0,not-a-number,1.0".into();
    std::fs::write(&path, lines.join("\n") + "\n").unwrap();
    let o = shotnoise(&["analyze", path.to_str().unwrap()]);
    assert_eq!(code(&o), 5);
    assert!(String::from_utf8_lossy(&o.stderr).contains("line 6"), "{}", String::from_utf8_lossy(&o.stderr));
}

#[test]
fn keyrate_from_parameters() {
    let o = shotnoise(&["keyrate", "--xi-alice-snu", "0.03", "--summary-only"]);
    assert_eq!(code(&o), 0);
    let rate: f64 = String::from_utf8_lossy(&o.stdout).trim().parse().unwrap();
    assert!((5e-4..2e-3).contains(&rate), "{rate}");
}

#[test]
fn attack_sweep_writes_a_table() {
    let tmp = tempfile::tempdir().unwrap();
    let d = tmp.path().to_str().unwrap();
    let o = shotnoise(&[
        "--out",
        d,
        "attack-sweep",
        "--param",
        "vb",
        "--values",
        "1,20",
        "--n-per-group",
        "5000",
        "--summary-only",
    ]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let table = std::fs::read_to_string(tmp.path().join("sweep_vb.csv")).unwrap();
    assert_eq!(table.lines().count(), 3, "{table}");
}

#[test]
fn usage_errors_exit_2() {
    assert_eq!(code(&shotnoise(&["attack-sweep", "--param", "nope", "--values", "1"])), 2);
    assert_eq!(code(&shotnoise(&["frobnicate"])), 2);
}
