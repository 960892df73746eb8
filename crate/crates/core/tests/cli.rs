use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use xfmr_integrity::io::{read_table, read_waveform};
use xfmr_integrity::validity::threshold_for;
use xfmr_integrity::verify::check_threshold;

const BIN: &str = env!("CARGO_BIN_EXE_xfmr-integrity");

fn cli(args: &[&str], env: &[(&str, &str)]) -> Output {
    let mut cmd = Command::new(BIN);
    cmd.args(args);
    for (k, v) in env {
        cmd.env(k, v);
    }
    cmd.output().unwrap()
}

fn write_config(dir: &Path, text: &str) -> PathBuf {
    let p = dir.join("cfg.toml");
    std::fs::write(&p, text).unwrap();
    p
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

const SHORT: &str = "[scenario]\nduration = 0.2\n";

fn synth(dir: &Path, cfg_text: &str) -> PathBuf {
    let cfg = write_config(dir, cfg_text);
    let out = dir.join("synth");
    let o = cli(&["synth", "-c", s(&cfg), "-o", s(&out)], &[]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    out
}

#[test]
fn synth_writes_three_files_with_units() {
    let dir = tempfile::tempdir().unwrap();
    let out = synth(dir.path(), SHORT);
    for (name, first) in [("truth.csv", "time [s]"), ("measurement.csv", "timestamp [s]"), ("states.csv", "time [s]")] {
        let text = std::fs::read_to_string(out.join(name)).unwrap();
        assert!(text.starts_with(first), "{name}");
        assert!(text.lines().next().unwrap().contains('['));
    }
    let meas = std::fs::read_to_string(out.join("measurement.csv")).unwrap();
    let times: Vec<f64> = meas.lines().skip(1).map(|l| l.split(',').next().unwrap().parse().unwrap()).collect();
    assert_eq!(times.len(), 1001);
    assert!((times[1] - times[0] - 2e-4).abs() < 1e-12);
}

#[test]
fn synth_is_byte_identical_per_seed() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    let (oa, ob) = (synth(a.path(), SHORT), synth(b.path(), SHORT));
    for name in ["truth.csv", "measurement.csv", "states.csv"] {
        assert_eq!(std::fs::read(oa.join(name)).unwrap(), std::fs::read(ob.join(name)).unwrap());
    }
    let c = tempfile::tempdir().unwrap();
    let cfg = write_config(c.path(), SHORT);
    let o = cli(&["synth", "-c", s(&cfg), "-o", s(&c.path().join("s"))], &[("XFMR_SCENARIO__SEED", "2")]);
    assert!(o.status.success());
    assert_ne!(std::fs::read(oa.join("measurement.csv")).unwrap(), std::fs::read(c.path().join("s/measurement.csv")).unwrap());
}

#[test]
fn zero_noise_measurement_is_decimated_truth() {
    let dir = tempfile::tempdir().unwrap();
    let out = synth(dir.path(), "[scenario]\nduration = 0.05\nnoise_fraction = 0.0\n");
    let truth = read_waveform(&out.join("truth.csv")).unwrap();
    let text = std::fs::read_to_string(out.join("measurement.csv")).unwrap();
    for (k, line) in text.lines().skip(1).enumerate() {
        let v: f64 = line.split(',').nth(1).unwrap().parse().unwrap();
        assert_eq!(v, truth.value[100 * k]);
    }
}

#[test]
fn analytic_three_phase_synthesis() {
    let dir = tempfile::tempdir().unwrap();
    let out = synth(
        dir.path(),
        "[model]\nvariant = \"three-phase\"\n[synth]\nengine = \"analytic\"\nmixing = [0.7, 0.2, 0.1, 0.3, 0.15]\n[scenario]\nduration = 0.05\nsim_step = 5e-5\n",
    );
    let (header, rows) = read_table(&out.join("states.csv")).unwrap();
    assert_eq!(header.len(), 9);
    assert_eq!(rows.len(), 1001);
}

#[test]
fn config_errors_exit_2() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "[scenario]\nduration = 0.2\nseed = -1\n");
    let o = cli(&["synth", "-c", s(&cfg), "-o", s(&dir.path().join("x"))], &[]);
    assert_eq!(o.status.code(), Some(2));
    let err = String::from_utf8_lossy(&o.stderr);
    assert!(err.contains("line 3") && err.contains("seed"), "{err}");
    let o = cli(&["synth", "-o", s(&dir.path().join("x"))], &[("XFMR_VALIDITY__RHO", "2.0")]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn malformed_rows_exit_3() {
    let dir = tempfile::tempdir().unwrap();
    let input = dir.path().join("in.csv");
    std::fs::write(&input, "timestamp [s],value [A],stream_id\n0,0.1,a\n0.0002,zz,a\n").unwrap();
    let o = cli(&["run", "-i", s(&input), "-o", s(&dir.path().join("o"))], &[]);
    assert_eq!(o.status.code(), Some(3));
    assert!(String::from_utf8_lossy(&o.stderr).contains("row 3"));
}

#[test]
fn broken_stream_exits_4() {
    let dir = tempfile::tempdir().unwrap();
    let input = dir.path().join("in.csv");
    std::fs::write(&input, "timestamp [s],value [A],stream_id\n0,0.1,a\n0.0002,0.2,a\n0.0010,0.2,a\n").unwrap();
    let o = cli(&["run", "-i", s(&input), "-o", s(&dir.path().join("o"))], &[]);
    assert_eq!(o.status.code(), Some(4), "{}", String::from_utf8_lossy(&o.stderr));
}

fn run(dir: &Path, synth_dir: &Path, extra: &[&str]) -> (PathBuf, serde_json::Value) {
    let cfg = dir.join("cfg.toml");
    let out = dir.join("run");
    let mut args = vec!["run", "-c", s(&cfg), "-i"];
    let input = synth_dir.join("measurement.csv");
    args.push(s(&input));
    args.extend(["-o", s(&out)]);
    args.extend(extra);
    let o = cli(&args, &[]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let manifest = serde_json::from_str(&std::fs::read_to_string(out.join("manifest.json")).unwrap()).unwrap();
    (out, manifest)
}

#[test]
fn gap_policy_marks_injected_outlier() {
    let dir = tempfile::tempdir().unwrap();
    let out = synth(dir.path(), "[scenario]\nduration = 0.3\nlambda_r = -1.4255576727219696\n");
    let path = out.join("measurement.csv");
    let text = std::fs::read_to_string(&path).unwrap();
    let mut lines: Vec<String> = text.lines().map(str::to_string).collect();
    let fields: Vec<String> = lines[1201].split(',').map(str::to_string).collect();
    let v: f64 = fields[1].parse::<f64>().unwrap() + 10.0 * 0.03 * 13.157894736842104;
    lines[1201] = format!("{},{v},{}", fields[0], fields[2]);
    std::fs::write(&path, lines.join("\n") + "\n").unwrap();
    let (run_dir, _) = run(dir.path(), &out, &["--flag-policy", "gap"]);
    let recon = std::fs::read_to_string(run_dir.join("reconstructed.csv")).unwrap();
    assert!(recon.lines().any(|l| l.ends_with(",gap,1200")), "no gap marker for the outlier");
    let records = std::fs::read_to_string(run_dir.join("records.csv")).unwrap();
    let row: Vec<&str> = records.lines().nth(1201).unwrap().split(',').collect();
    assert_eq!((row[11], row[13]), ("1", "gap"));
}

#[test]
fn manifest_reports_areas_and_recomputable_summary() {
    let dir = tempfile::tempdir().unwrap();
    let out = synth(dir.path(), SHORT);
    let truth = out.join("truth.csv");
    let (run_dir, m) = run(dir.path(), &out, &["-r", s(&truth)]);
    let stream = &m["streams"][0];
    let area = &stream["area"];
    for key in ["reference", "noiseless", "noisy", "reconstructed"] {
        assert!(area[key].as_f64().unwrap().is_finite(), "{key}");
    }
    assert_eq!(m["seed"], 1);
    assert!(m["config"]["scenario"].is_object());

    let text = std::fs::read_to_string(run_dir.join("records.csv")).unwrap();
    let rows: Vec<Vec<&str>> = text.lines().skip(1).map(|l| l.split(',').collect()).collect();
    let post: Vec<&Vec<&str>> = rows.iter().filter(|r| r[11] != "warmup").collect();
    let flags = post.iter().filter(|r| r[11] == "1").count();
    assert_eq!(stream["flags"].as_u64().unwrap() as usize, flags);
    assert!((stream["flag_rate"].as_f64().unwrap() - flags as f64 / post.len() as f64).abs() < 1e-15);
    let window: Vec<f64> = post.iter().take(500).map(|r| r[10].parse::<f64>().unwrap().powi(2)).collect();
    let mse = window.iter().sum::<f64>() / window.len() as f64;
    assert!((stream["mse"].as_f64().unwrap() - mse).abs() < 1e-12);
}

#[test]
fn no_load_flag_rate_within_binomial_bounds() {
    let dir = tempfile::tempdir().unwrap();
    let out = synth(dir.path(), "[scenario]\nduration = 5.0\n");
    let (_, m) = run(dir.path(), &out, &[]);
    let stream = &m["streams"][0];
    let n = stream["post_warmup"].as_f64().unwrap();
    let rate = stream["flag_rate"].as_f64().unwrap();
    let half = 3.0 * (0.01 * 0.99 / n).sqrt();
    assert!((rate - 0.01).abs() <= half, "flag rate {rate} outside 0.01 +- {half} (N = {n})");
}

#[test]
fn verify_json_reports_every_criterion() {
    let o = cli(&["verify", "--json"], &[]);
    let reports: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    let list = reports.as_array().unwrap();
    assert_eq!(list.len(), 9);
    let all_pass = list.iter().all(|r| r["passed"] == true);
    assert_eq!(o.status.code(), Some(if all_pass { 0 } else { 5 }));
}

#[test]
fn tampered_threshold_fails_anchor_check() {
    assert!(check_threshold(threshold_for).0);
    assert!(!check_threshold(|rho| threshold_for(rho).map(|t| t + 0.01)).0);
}
