use std::path::{Path, PathBuf};
use std::process::Command;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_majorana"))
}

fn configs() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs")
}

fn run(args: &[&str], out: &Path) -> (i32, String, String) {
    let o = bin().args(args).arg("--out").arg(out).output().unwrap();
    (o.status.code().unwrap_or(-1), String::from_utf8_lossy(&o.stdout).into(), String::from_utf8_lossy(&o.stderr).into())
}

fn with_config(cmd: &str, name: &str, out: &Path) -> (i32, String, String) {
    let cfg = configs().join(name);
    run(&[cmd, "--config", cfg.to_str().unwrap()], out)
}

fn inline(cmd: &str, toml: &str, dir: &Path) -> (i32, String, String) {
    let cfg = dir.join("run.toml");
    std::fs::write(&cfg, toml).unwrap();
    run(&[cmd, "--config", cfg.to_str().unwrap()], &dir.join("out"))
}

fn read_csv(path: &Path) -> (Vec<String>, Vec<Vec<f64>>) {
    let mut r = csv::Reader::from_path(path).unwrap();
    let header = r.headers().unwrap().iter().map(String::from).collect();
    let rows = r.records().map(|rec| rec.unwrap().iter().map(|x| x.parse().unwrap()).collect()).collect();
    (header, rows)
}

#[test]
fn ldos_sweet_spot_has_edge_zeros() {
    let d = tempfile::tempdir().unwrap();
    let (code, _, err) = with_config("ldos", "ldos_sweet_spot.toml", d.path());
    assert_eq!(code, 0, "{err}");
    let meta: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(d.path().join("bdg.json")).unwrap()).unwrap();
    assert_eq!(meta["zero_mode_present"], true);
    let (header, rows) = read_csv(&d.path().join("ldos_peaks.csv"));
    assert_eq!(header, ["site", "energy", "weight"]);
    let zero_sites: Vec<f64> = rows.iter().filter(|r| r[1].abs() < 1e-9 && r[2] > 1e-3).map(|r| r[0]).collect();
    assert!(zero_sites.contains(&1.0) && zero_sites.contains(&20.0), "{zero_sites:?}");
}

#[test]
fn spectrum_columns_and_determinism() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    assert_eq!(with_config("spectrum", "spectrum_hard_wall.toml", a.path()).0, 0);
    assert_eq!(with_config("spectrum", "spectrum_hard_wall.toml", b.path()).0, 0);
    let (header, rows) = read_csv(&a.path().join("spectrum.csv"));
    assert_eq!(header, ["omega", "gamma_plus", "gamma_minus", "x"]);
    assert_eq!(rows.len(), 10);
    for name in ["spectrum.csv", "spectrum_broadened.csv"] {
        assert_eq!(std::fs::read(a.path().join(name)).unwrap(), std::fs::read(b.path().join(name)).unwrap());
    }
}

#[test]
fn x_gate_trace_stays_at_half() {
    let d = tempfile::tempdir().unwrap();
    let (code, _, err) = with_config("gate", "x_gate.toml", d.path());
    assert_eq!(code, 0, "{err}");
    let (header, rows) = read_csv(&d.path().join("trajectory.csv"));
    assert_eq!(header, ["t", "occupation", "coherence_re", "coherence_im", "fidelity"]);
    for r in &rows {
        assert!((r[1] - 0.5).abs() < 0.02 && (r[2] - 0.5).abs() < 0.02, "{r:?}");
    }
}

#[test]
fn y_gate_flips_coherence() {
    let d = tempfile::tempdir().unwrap();
    assert_eq!(with_config("gate", "y_gate.toml", d.path()).0, 0);
    let (_, rows) = read_csv(&d.path().join("trajectory.csv"));
    assert!((rows.last().unwrap()[2] + 0.5).abs() < 0.02);
}

#[test]
fn phase_scan_flips_near_two() {
    let d = tempfile::tempdir().unwrap();
    assert_eq!(with_config("sweep", "phase_scan.toml", d.path()).0, 0);
    let (_, rows) = read_csv(&d.path().join("sweep.csv"));
    let first_absent = rows.iter().find(|r| r[2] == 0.0).unwrap()[0];
    assert!((first_absent - 2.0).abs() <= 0.05 + 1e-12, "{first_absent}");
}

#[test]
fn sweep_over_configs_writes_one_dir_each() {
    let d = tempfile::tempdir().unwrap();
    let (code, out, err) = with_config("sweep", "set_ring.toml", d.path());
    assert_eq!(code, 0, "{err}");
    assert_eq!(out.lines().count(), 4);
    for stem in ["to_minus_from_plus", "to_minus_from_minus", "to_plus_from_plus", "to_plus_from_minus"] {
        assert!(d.path().join(stem).join("report.json").exists(), "{stem}");
    }
}

#[test]
fn verify_and_compile_need_no_config() {
    let d = tempfile::tempdir().unwrap();
    assert_eq!(run(&["verify"], d.path()).0, 0);
    let v: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(d.path().join("verify.json")).unwrap()).unwrap();
    let off: Vec<&str> = v["identities"].as_array().unwrap().iter().filter(|r| r["pass"] == false).map(|r| r["gate"].as_str().unwrap()).collect();
    assert_eq!(off.len(), 1);
    assert!(off[0].starts_with("H1"));
    assert_eq!(run(&["compile"], d.path()).0, 0);
    assert!(d.path().join("compile.json").exists());
}

#[test]
fn oracle_check_is_seeded() {
    let d = tempfile::tempdir().unwrap();
    let e = tempfile::tempdir().unwrap();
    assert_eq!(run(&["oracle-check", "--seed", "5", "--threads", "1"], d.path()).0, 0);
    assert_eq!(run(&["oracle-check", "--seed", "5"], e.path()).0, 0);
    assert_eq!(std::fs::read(d.path().join("oracle.csv")).unwrap(), std::fs::read(e.path().join("oracle.csv")).unwrap());
}

#[test]
fn unknown_field_is_a_validation_failure() {
    let d = tempfile::tempdir().unwrap();
    let (code, _, err) = inline("ldos", "schema_version = 1\n[chain]\nn = 4\nj = 1.0\ndelta = 1.0\nmu = 0.0\ncolor = 3\n", d.path());
    assert_eq!(code, 2);
    assert!(err.contains("color"), "{err}");
}

#[test]
fn schema_version_is_checked() {
    let d = tempfile::tempdir().unwrap();
    let (code, _, err) = inline("gap", "schema_version = 2\n[gap]\nv = -4.0\nj = 1.0\nmu = 0.0\n", d.path());
    assert_eq!(code, 2);
    assert!(err.contains("schema_version"), "{err}");
}

#[test]
fn missing_config_and_section_exit_two() {
    let d = tempfile::tempdir().unwrap();
    assert_eq!(run(&["ldos"], d.path()).0, 2);
    assert_eq!(inline("ldos", "schema_version = 1\n", d.path()).0, 2);
}

#[test]
fn trivial_chain_has_no_spectrum() {
    let d = tempfile::tempdir().unwrap();
    let toml = "schema_version = 1\n[chain]\nn = 10\nj = 1.0\ndelta = 1.0\nmu = 3.0\n[cband]\njc = 1.0\n[spectrum]\n";
    let (code, _, err) = inline("spectrum", toml, d.path());
    assert_eq!(code, 2);
    assert!(err.contains("zero mode"), "{err}");
}

#[test]
fn failed_check_exits_three() {
    let d = tempfile::tempdir().unwrap();
    let (code, _, err) = inline("oracle-check", "schema_version = 1\n[oracle]\ntrials = 2\ntol = 1e-300\n", d.path());
    assert_eq!(code, 3, "{err}");
}

#[test]
fn gap_writes_uniform_value() {
    let d = tempfile::tempdir().unwrap();
    assert_eq!(with_config("gap", "gap_uniform.toml", d.path()).0, 0);
    let g: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(d.path().join("gap.json")).unwrap()).unwrap();
    assert!((g["delta"].as_f64().unwrap() - 1.0).abs() < 1e-10);
    let (_, rows) = read_csv(&d.path().join("gap_profile.csv"));
    assert_eq!(rows.len(), 39);
}

#[test]
fn explicit_schedule_flips_occupation() {
    let d = tempfile::tempdir().unwrap();
    assert_eq!(with_config("dynamics", "dynamics_pulse.toml", d.path()).0, 0);
    let (_, rows) = read_csv(&d.path().join("trajectory.csv"));
    assert!((rows[0][1] - 0.64).abs() < 1e-9);
    assert!((rows.last().unwrap()[1] - 0.36).abs() < 1e-6);
}
