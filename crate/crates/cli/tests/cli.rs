use serde_json::Value;
use std::f64::consts::PI;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_macrogrid"))
}

fn small() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/data/small.toml")
}

fn reference() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../core/data/reference/scenario.toml")
}

fn macrogrid(config: Option<&Path>, out: &Path, args: &[&str]) -> Output {
    let mut cmd = bin();
    if let Some(c) = config {
        cmd.arg("--config").arg(c);
    }
    cmd.arg("--out-dir").arg(out).args(args).output().unwrap()
}

fn ok(o: &Output) {
    assert!(o.status.success(), "exit {:?}\n{}", o.status.code(), String::from_utf8_lossy(&o.stderr));
}

fn json(path: PathBuf) -> Value {
    serde_json::from_str(&std::fs::read_to_string(&path).unwrap()).unwrap()
}

/// Columns of a CSV with a header row, parsed as numbers where possible.
fn columns(path: &Path) -> (Vec<String>, Vec<Vec<String>>) {
    let text = std::fs::read_to_string(path).unwrap();
    let mut lines = text.lines();
    let header: Vec<String> = lines.next().unwrap().split(',').map(str::to_string).collect();
    let rows = lines.map(|l| l.split(',').map(str::to_string).collect()).collect();
    (header, rows)
}

fn with_overlay(dir: &Path, base: &Path, extra: &str) -> PathBuf {
    let p = dir.join("scenario.toml");
    std::fs::write(&p, format!("include = [{:?}]\n{extra}", base.to_str().unwrap())).unwrap();
    p
}

#[test]
fn malformed_config_exits_2_without_outputs() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("bad.toml");
    std::fs::write(&cfg, "name = \n[[[").unwrap();
    let out = dir.path().join("out");
    let o = macrogrid(Some(&cfg), &out, &["powerflow"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(!out.exists());
}

#[test]
fn unknown_key_is_a_config_error() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = with_overlay(dir.path(), &small(), "[simulation]\nstep = 0.01\n");
    let o = macrogrid(Some(&cfg), &dir.path().join("out"), &["simulate"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("step"));
}

#[test]
fn usage_errors_exit_2() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(macrogrid(None, dir.path(), &["powerflow"]).status.code(), Some(2));
    assert_eq!(macrogrid(None, dir.path(), &["no-such-verb"]).status.code(), Some(2));
    // The small scenario has no frequency-scan section.
    assert_eq!(macrogrid(Some(&small()), dir.path(), &["freqscan"]).status.code(), Some(2));
}

#[test]
fn powerflow_non_convergence_exits_1_without_outputs() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = with_overlay(
        dir.path(),
        &small(),
        "[areas.a]\nloads = [{ name = \"LA\", bus = \"A2\", p_mw = 5000.0, q_mvar = 500.0 }]\n",
    );
    let out = dir.path().join("out");
    let o = macrogrid(Some(&cfg), &out, &["powerflow"]);
    assert_eq!(o.status.code(), Some(1), "{}", String::from_utf8_lossy(&o.stderr));
    assert!(!out.exists());
}

#[test]
fn zero_setpoints_give_a_flat_dc_profile() {
    let dir = tempfile::tempdir().unwrap();
    ok(&macrogrid(Some(&small()), dir.path(), &["powerflow"]));
    let (_, rows) = columns(&dir.path().join("powerflow_dc_nodes.csv"));
    assert_eq!(rows.len(), 2);
    for r in &rows {
        let v: f64 = r[1].parse().unwrap();
        assert!((v - 1.0).abs() < 1e-12, "{r:?}");
    }
    let s = json(dir.path().join("powerflow_summary.json"));
    assert_eq!(s["scheduled_transfer_mw"].as_f64(), Some(0.0));
    assert!(dir.path().join("powerflow_buses.csv").exists());
    assert!(dir.path().join("powerflow_branches.csv").exists());
}

#[test]
fn reference_powerflow_reports_loss_fraction() {
    let dir = tempfile::tempdir().unwrap();
    ok(&macrogrid(Some(&reference()), dir.path(), &["powerflow"]));
    let s = json(dir.path().join("powerflow_summary.json"));
    assert_eq!(s["scheduled_transfer_mw"].as_f64(), Some(14400.0));
    let f = s["loss_fraction"].as_f64().unwrap();
    assert!(f > 0.0 && f < 0.08, "loss fraction {f}");
    let (_, conv) = columns(&dir.path().join("powerflow_converters.csv"));
    assert_eq!(conv.len(), 13);
}

#[test]
fn no_event_run_is_flat() {
    let dir = tempfile::tempdir().unwrap();
    ok(&macrogrid(Some(&small()), dir.path(), &["simulate"]));
    let (header, rows) = columns(&dir.path().join("simulation.csv"));
    assert_eq!(header[0], "time");
    assert_eq!(rows.len(), 501);
    for c in 1..header.len() {
        let first: f64 = rows[0][c].parse().unwrap();
        for r in &rows {
            let v: f64 = r[c].parse().unwrap();
            assert!((v - first).abs() <= 1e-9 * first.abs().max(1.0), "{} drifts", header[c]);
        }
    }
}

#[test]
fn simulation_is_reproducible_and_manifested() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = with_overlay(
        dir.path(),
        &small(),
        "[[events]]\nkind = \"brake_insertion\"\narea = \"a\"\nbus = \"A2\"\nmw = 30.0\nt_on = 0.5\nduration = 0.1\n",
    );
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    ok(&macrogrid(Some(&cfg), &a, &["--seed", "99", "simulate"]));
    ok(&macrogrid(Some(&cfg), &b, &["--seed", "99", "simulate"]));
    let csv_a = std::fs::read(a.join("simulation.csv")).unwrap();
    assert_eq!(csv_a, std::fs::read(b.join("simulation.csv")).unwrap());
    let m = json(a.join("simulation_manifest.json"));
    assert_eq!(m["seed"].as_u64(), Some(99));
    assert_eq!(m["config_hash"].as_str().unwrap().len(), 64);
    assert_eq!(m["event_log"].as_array().unwrap().len(), 2);
    assert_eq!(m["events"][0]["kind"], "brake_insertion");
}

#[test]
fn brake_ringdown_feeds_analyze() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = with_overlay(
        dir.path(),
        &small(),
        "[[events]]\nkind = \"brake_insertion\"\narea = \"a\"\nbus = \"A2\"\nmw = 30.0\nt_on = 0.5\nduration = 0.1\n\
         [analysis]\nsample_rate_hz = 20.0\nband = [0.5, 5.0]\n",
    );
    let out = dir.path().join("out");
    ok(&macrogrid(Some(&cfg), &out, &["simulate"]));
    ok(&macrogrid(Some(&cfg), &out, &["analyze"]));
    let r = json(out.join("modes.json"));
    let modes = r["modes"].as_array().unwrap();
    assert!(!modes.is_empty(), "{r}");
    let f = modes[0]["freq_hz"].as_f64().unwrap();
    assert!(f > 0.5 && f < 5.0);
    assert_eq!(r["damping"].as_array().unwrap().len(), modes.len());
    let (header, rows) = columns(&out.join("mode_shapes.csv"));
    assert_eq!(header, ["freq_hz", "channel", "amplitude", "phase_deg"]);
    assert!(!rows.is_empty());
}

fn write_ringdown(path: &Path, f: f64, zeta: f64, amp: f64) {
    let w = 2.0 * PI * f;
    let sigma = zeta * w / (1.0 - zeta * zeta).sqrt();
    let mut text = String::from("time,x.speed.g\n");
    for k in 0..400 {
        let t = k as f64 * 0.05;
        text.push_str(&format!("{t},{}\n", 1.0 + amp * (-sigma * t).exp() * (w * t).cos()));
    }
    std::fs::write(path, text).unwrap();
}

#[test]
fn analyze_recovers_a_planted_mode_without_a_scenario() {
    let dir = tempfile::tempdir().unwrap();
    let csv = dir.path().join("ring.csv");
    write_ringdown(&csv, 0.74, 0.056, 1e-3);
    let out = dir.path().join("out");
    for method in ["prony", "matrix-pencil"] {
        ok(&macrogrid(None, &out, &["analyze", csv.to_str().unwrap(), "--t-start", "0", "--window", "15", "--method", method]));
        let r = json(out.join("modes.json"));
        let m = &r["modes"][0];
        assert!((m["freq_hz"].as_f64().unwrap() - 0.74).abs() < 1e-4, "{method}: {m}");
        assert!((m["damping_ratio"].as_f64().unwrap() - 0.056).abs() < 1e-3, "{method}: {m}");
        assert_eq!(r["damping"][0]["critical"], false);
    }
}

#[test]
fn analyze_batches_and_matches_modes_across_events() {
    let dir = tempfile::tempdir().unwrap();
    let (a, b) = (dir.path().join("ev1.csv"), dir.path().join("ev2.csv"));
    write_ringdown(&a, 0.84, 0.034, 1e-3);
    write_ringdown(&b, 0.84, 0.034, 3e-3);
    let out = dir.path().join("out");
    ok(&macrogrid(None, &out, &["--jobs", "2", "analyze", a.to_str().unwrap(), b.to_str().unwrap(), "--t-start", "0", "--window", "15"]));
    assert!(out.join("modes_ev1.json").exists() && out.join("modes_ev2.json").exists());
    let matched = json(out.join("modes_matched.json"));
    let first = &matched[0];
    assert!((first["freq_hz"].as_f64().unwrap() - 0.84).abs() < 1e-3);
    assert!(first["per_event"].as_array().unwrap().iter().all(|m| !m.is_null()));
    let critical: Vec<bool> = (1..=2)
        .map(|k| json(out.join(format!("modes_ev{k}.json")))["damping"][0]["critical"].as_bool().unwrap())
        .collect();
    assert_eq!(critical, [true, true]);
}

#[test]
fn design_from_a_tf_file_meets_the_placement_identity() {
    let dir = tempfile::tempdir().unwrap();
    // G(s) = 0.01 / (s² + 0.532 s + 22.07): poles near −0.266 ± j4.69.
    let tf = dir.path().join("tf.json");
    std::fs::write(&tf, r#"{"num": [0.01], "den": [1.0, 0.532, 22.0668], "quality": null}"#).unwrap();
    let out = dir.path().join("out");
    ok(&macrogrid(None, &out, &["design", "--tf", tf.to_str().unwrap(), "--zeta", "0.15"]));
    let p = json(out.join("sdc_params.json"));
    let d = json(out.join("design.json"));
    let w_cl = d["lambda_cl"][1].as_f64().unwrap();
    let (t1, t2) = (p["t1"].as_f64().unwrap(), p["t2"].as_f64().unwrap());
    if p["m"].as_u64() == Some(1) {
        assert!((t1 * t2 * w_cl * w_cl - 1.0).abs() < 1e-9);
    }
    assert!(d["placement_residual"].as_f64().unwrap() < 1e-6);
    assert!(d["closed_loop"]["dominant"]["damping_ratio"].as_f64().unwrap() > 0.15);
}

#[test]
fn validate_needs_parameters() {
    let dir = tempfile::tempdir().unwrap();
    let o = macrogrid(Some(&reference()), dir.path(), &["validate"]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn reference_pipeline_closes_without_manual_edits() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path();
    for verb in ["simulate", "analyze", "freqscan", "design", "validate"] {
        ok(&macrogrid(Some(&reference()), out, &[verb]));
    }
    let modes = json(out.join("modes.json"));
    assert!(modes["damping"].as_array().unwrap().iter().any(|d| d["critical"] == true));
    let scan = json(out.join("freqscan.json"));
    assert_eq!(scan["quality"]["passed"], true);
    let (header, rows) = columns(&out.join("frf.csv"));
    assert_eq!(header, ["freq_hz", "re", "im", "mag_db", "phase_deg", "coherence"]);
    assert!(rows.len() > 250);
    let v = json(out.join("validation.json"));
    assert_eq!(v["target_met"], true, "{v}");
    assert_eq!(v["others_ok"], true);
    assert_eq!(v["contingency_met"], true);
    let peak = scan["peak_freq_hz"].as_f64().unwrap();
    assert!((peak - v["target_freq_hz"].as_f64().unwrap()).abs() < 0.05);
    assert!(out.join("validation_off.csv").exists() && out.join("validation_on.csv").exists());
}
