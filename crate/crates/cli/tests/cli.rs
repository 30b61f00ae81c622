use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use involution_core::analysis::{characterize, classify_pulse, run_loop, LoopSetup, Regime};
use involution_core::delay_model::{exp_channel, ExpChannelParams};
use involution_core::signals::read_traces;
use involution_core::{AdversaryStrategy, EtaBounds};
use serde_json::Value;

fn invsim(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_invsim"))
        .args(args)
        .output()
        .unwrap()
}

fn data(name: &str) -> String {
    Path::new(env!("CARGO_MANIFEST_DIR"))
        .join("../../data")
        .join(name)
        .display()
        .to_string()
}

fn stdout_json(o: &Output) -> Value {
    serde_json::from_slice(&o.stdout)
        .unwrap_or_else(|e| panic!("{e}: {}", String::from_utf8_lossy(&o.stdout)))
}

fn stderr_json(o: &Output) -> Value {
    serde_json::from_slice(&o.stderr)
        .unwrap_or_else(|e| panic!("{e}: {}", String::from_utf8_lossy(&o.stderr)))
}

fn read_json(path: &Path) -> Value {
    serde_json::from_slice(&std::fs::read(path).unwrap()).unwrap()
}

fn out_dir(tmp: &tempfile::TempDir, name: &str) -> PathBuf {
    tmp.path().join(name)
}

fn simulate(tmp: &tempfile::TempDir, stimulus: &str, name: &str) -> (Output, PathBuf) {
    let out = out_dir(tmp, name);
    let o = invsim(&[
        "simulate",
        "--netlist",
        &data("storage_loop.json"),
        "--stimulus",
        &data(stimulus),
        "--horizon",
        "60",
        "--out",
        out.to_str().unwrap(),
    ]);
    (o, out)
}

fn output_signal(dir: &Path) -> involution_core::Signal {
    let f = std::fs::File::open(dir.join("trace_output_o.csv")).unwrap();
    read_traces(f).unwrap().remove("o").unwrap()
}

#[test]
fn wide_pulse_locks_the_storage_loop() {
    let tmp = tempfile::tempdir().unwrap();
    let (o, dir) = simulate(&tmp, "pulse_1.5.csv", "sim");
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let out = output_signal(&dir);
    assert_eq!(out.len(), 1);
    assert!(out.final_value());
    assert_eq!(stdout_json(&o)["verified"], true);
}

#[test]
fn short_pulse_leaves_the_output_at_zero() {
    let tmp = tempfile::tempdir().unwrap();
    let (o, dir) = simulate(&tmp, "pulse_0.5.csv", "sim");
    assert!(o.status.success());
    assert!(output_signal(&dir).is_zero());
}

#[test]
fn missing_file_is_an_io_error_without_outputs() {
    let tmp = tempfile::tempdir().unwrap();
    let out = out_dir(&tmp, "never");
    let o = invsim(&[
        "simulate",
        "--netlist",
        "/nonexistent/net.json",
        "--stimulus",
        &data("pulse_0.5.csv"),
        "--out",
        out.to_str().unwrap(),
    ]);
    assert_eq!(o.status.code(), Some(6));
    let err = stderr_json(&o);
    assert_eq!(err["kind"], "io");
    assert_eq!(err["code"], 6);
    assert!(!out.exists());
}

#[test]
fn malformed_netlist_is_a_parse_error() {
    let tmp = tempfile::tempdir().unwrap();
    let net = tmp.path().join("bad.json");
    std::fs::write(&net, r#"{"ports": [], "channels": [], "wires": 3}"#).unwrap();
    let out = out_dir(&tmp, "o");
    let o = invsim(&[
        "simulate",
        "--netlist",
        net.to_str().unwrap(),
        "--stimulus",
        &data("pulse_0.5.csv"),
        "--out",
        out.to_str().unwrap(),
    ]);
    assert_eq!(o.status.code(), Some(3));
    assert!(!out.exists());
}

#[test]
fn bad_flag_is_a_usage_error() {
    assert_eq!(
        invsim(&["analyze", "--delay", "exp:1,2"]).status.code(),
        Some(2)
    );
    assert_eq!(invsim(&["frobnicate"]).status.code(), Some(2));
}

#[test]
fn analyze_reference_channel() {
    let tmp = tempfile::tempdir().unwrap();
    let out = out_dir(&tmp, "an");
    let o = invsim(&[
        "analyze",
        "--delay",
        "exp:1,0.5,0.5",
        "--out",
        out.to_str().unwrap(),
    ]);
    assert!(o.status.success());
    let v = stdout_json(&o);
    let ch = &v["report"]["characterization"];
    assert!((ch["duty"].as_f64().unwrap() - 0.5).abs() < 1e-6);
    assert!((ch["tau_star"].as_f64().unwrap() - 0.649183262958026).abs() < 1e-9);
    assert_eq!(read_json(&out.join("report.json")), v);
}

#[test]
fn analyze_reports_constraint_violation() {
    let tmp = tempfile::tempdir().unwrap();
    let out = out_dir(&tmp, "an");
    let o = invsim(&[
        "analyze",
        "--eta-plus",
        "0.05",
        "--eta-minus",
        "0.4",
        "--out",
        out.to_str().unwrap(),
    ]);
    assert_eq!(o.status.code(), Some(4));
    let v = stdout_json(&o);
    assert_eq!(v["report"]["constraint"]["holds"], false);
    assert!(v["report"]["characterization"].is_null());
    assert!(v["report"]["error"]
        .as_str()
        .unwrap()
        .contains("constraint"));
    assert_eq!(stderr_json(&o)["kind"], "model_constraint");
    assert!(out.join("report.json").exists());
}

#[test]
fn analyze_other_exp_channel_passes_invariants() {
    let tmp = tempfile::tempdir().unwrap();
    let out = out_dir(&tmp, "an");
    let o = invsim(&[
        "analyze",
        "--delay",
        "exp:2,0.3,0.7",
        "--out",
        out.to_str().unwrap(),
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let v = stdout_json(&o);
    assert_eq!(v["involution"]["pass"], true);
    assert_eq!(v["shape"]["increasing"], true);
    assert_eq!(v["shape"]["concave"], true);
}

fn sweep_rows(dir: &Path) -> Vec<Vec<String>> {
    let text = std::fs::read_to_string(dir.join("sweep.csv")).unwrap();
    text.lines()
        .skip(1)
        .map(|l| l.split(',').map(str::to_string).collect())
        .collect()
}

fn reference() -> involution_core::DelayFunction {
    exp_channel(ExpChannelParams::new(1.0, 0.5, 0.5).unwrap()).unwrap()
}

#[test]
fn sweep_regimes_match_classification() {
    let tmp = tempfile::tempdir().unwrap();
    let out = out_dir(&tmp, "sw");
    let o = invsim(&[
        "spf-sweep",
        "--strategies",
        "zero",
        "--grid",
        "0.1:0.05:1.5",
        "--out",
        out.to_str().unwrap(),
    ]);
    assert!(o.status.success());
    assert_eq!(stdout_json(&o)["passed"], true);
    let ch = characterize(&reference(), EtaBounds::zero()).unwrap();
    let rows = sweep_rows(&out);
    assert_eq!(rows.len(), 29);
    for r in rows {
        let d0: f64 = r[0].parse().unwrap();
        match classify_pulse(&ch, d0) {
            Regime::PassThrough => assert_eq!(r[3], "0", "{d0}"),
            Regime::Lock => assert_eq!(r[3], "1", "{d0}"),
            Regime::Critical { .. } => {}
        }
    }
}

#[test]
fn sweep_just_above_the_critical_width_locks() {
    let tmp = tempfile::tempdir().unwrap();
    let ch = characterize(&reference(), EtaBounds::zero()).unwrap();
    let d0 = ch.tilde_delta0 + 1e-3;
    let out = out_dir(&tmp, "sw");
    let grid = format!("{d0}");
    let o = invsim(&[
        "spf-sweep",
        "--strategies",
        "worst_case_shrink",
        "--grid",
        &grid,
        "--horizon",
        "60",
        "--out",
        out.to_str().unwrap(),
    ]);
    assert!(o.status.success());
    let rows = sweep_rows(&out);
    assert_eq!(rows[0][3], "1");
    let setup = LoopSetup::dimensioned(reference(), EtaBounds::zero(), 60.0).unwrap();
    let run = run_loop(&setup, d0, &AdversaryStrategy::WorstCaseShrink).unwrap();
    assert_eq!(rows[0][2], run.pulses_observed.to_string());
}

#[test]
fn huge_epsilon_still_passes_f4() {
    let tmp = tempfile::tempdir().unwrap();
    let out = out_dir(&tmp, "sw");
    let o = invsim(&[
        "spf-sweep",
        "--epsilon",
        "100",
        "--random-runs",
        "1",
        "--out",
        out.to_str().unwrap(),
    ]);
    assert!(o.status.success());
    assert_eq!(stdout_json(&o)["f4"], true);
}

#[test]
fn waveform_self_test_and_fit() {
    let tmp = tempfile::tempdir().unwrap();
    let out = out_dir(&tmp, "wf");
    let o = invsim(&["waveform", "--out", out.to_str().unwrap()]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let v = stdout_json(&o);
    assert_eq!(v["coverage"], 1.0);
    assert!(v["max_abs_deviation"].as_f64().unwrap() < 1e-9);
    for (k, want) in [("tau", 1.0), ("t_p", 0.5), ("vth", 0.5)] {
        assert!(
            (v["fit"][k].as_f64().unwrap() - want).abs() < 1e-4 * want,
            "{k}"
        );
    }
}

#[test]
fn waveform_disturbed_run_writes_deviation_and_bins() {
    let tmp = tempfile::tempdir().unwrap();
    let out = out_dir(&tmp, "wf");
    let o = invsim(&[
        "waveform",
        "--amplitude",
        "0.01",
        "--seed",
        "3",
        "--no-fit",
        "--workers",
        "2",
        "--out",
        out.to_str().unwrap(),
    ]);
    assert!(o.status.success());
    let v = stdout_json(&o);
    assert_eq!(v["bins"].as_array().unwrap().len(), 4);
    assert!(v["max_abs_deviation"].as_f64().unwrap() > 1e-4);
    let dev = std::fs::read_to_string(out.join("deviation.csv")).unwrap();
    assert_eq!(dev.lines().next(), Some("edge,T,D,covered"));
    assert_eq!(
        dev.lines().count(),
        v["samples"].as_u64().unwrap() as usize + 1
    );
    assert_eq!(
        std::fs::read_to_string(out.join("coverage.csv"))
            .unwrap()
            .lines()
            .count(),
        5
    );
    assert!(!out.join("fit.json").exists());
}

#[test]
fn waveform_needs_an_exp_reference() {
    let o = invsim(&[
        "waveform",
        "--delay",
        "hyperbolic:1.2,0.5,1",
        "--out",
        "/nonexistent/x",
    ]);
    assert_eq!(o.status.code(), Some(2));
}

fn random_netlist(dir: &Path) -> PathBuf {
    let mut doc = read_json(Path::new(&data("storage_loop.json")));
    let c = &mut doc["channels"][1];
    c["eta"] = serde_json::json!({ "plus": 0.05, "minus": 0.1 });
    c["strategy"] = serde_json::json!({ "variant": "uniform_random", "seed": 5 });
    let path = dir.join("random.json");
    std::fs::write(&path, serde_json::to_vec_pretty(&doc).unwrap()).unwrap();
    path
}

#[test]
fn seeded_simulation_replays_identically() {
    let tmp = tempfile::tempdir().unwrap();
    let net = random_netlist(tmp.path());
    let out = out_dir(&tmp, "sim");
    let run = |seed: &str, out: &Path| {
        invsim(&[
            "simulate",
            "--netlist",
            net.to_str().unwrap(),
            "--stimulus",
            &data("pulse_1.5.csv"),
            "--horizon",
            "60",
            "--seed",
            seed,
            "--out",
            out.to_str().unwrap(),
        ])
    };
    assert!(run("11", &out).status.success());
    let manifest = read_json(&out.join("manifest.json"));
    assert_eq!(manifest["seeds"]["channel:c"], 12);
    assert!(manifest["inputs"].as_object().unwrap().len() >= 2);

    let o = invsim(&["replay", out.join("manifest.json").to_str().unwrap()]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    assert_eq!(stdout_json(&o)["identical"], true);
    let a = std::fs::read(out.join("trace_gate_or.csv")).unwrap();
    let b = std::fs::read(out.join("replay/trace_gate_or.csv")).unwrap();
    assert_eq!(a, b);

    let other = out_dir(&tmp, "other");
    assert!(run("12", &other).status.success());
    let r = read_json(&other.join("run.json"));
    assert_ne!(
        r["run"]["eta_sequences"]["c"],
        read_json(&out.join("run.json"))["run"]["eta_sequences"]["c"]
    );
}

#[test]
fn replay_refuses_changed_inputs() {
    let tmp = tempfile::tempdir().unwrap();
    let stim = tmp.path().join("stim.csv");
    std::fs::copy(data("pulse_1.5.csv"), &stim).unwrap();
    let out = out_dir(&tmp, "sim");
    let o = invsim(&[
        "simulate",
        "--netlist",
        &data("storage_loop.json"),
        "--stimulus",
        stim.to_str().unwrap(),
        "--out",
        out.to_str().unwrap(),
    ]);
    assert!(o.status.success());
    std::fs::write(&stim, "signal,time,value\ni,-inf,0\ni,0,1\ni,1.4,0\n").unwrap();
    let o = invsim(&["replay", out.join("manifest.json").to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(6));
    assert!(stderr_json(&o)["message"]
        .as_str()
        .unwrap()
        .contains("changed"));
}

#[test]
fn outputs_are_complete_and_listed() {
    let tmp = tempfile::tempdir().unwrap();
    let out = out_dir(&tmp, "sw");
    assert!(invsim(&[
        "spf-sweep",
        "--random-runs",
        "1",
        "--out",
        out.to_str().unwrap()
    ])
    .status
    .success());
    let mut files: Vec<String> = std::fs::read_dir(&out)
        .unwrap()
        .map(|e| e.unwrap().file_name().into_string().unwrap())
        .collect();
    files.sort();
    assert_eq!(files, ["manifest.json", "sweep.csv", "verdict.json"]);
    let m = read_json(&out.join("manifest.json"));
    assert_eq!(m["command"], "spf-sweep");
    assert_eq!(m["outputs"].as_object().unwrap().len(), 2);
    assert!(m["timestamp"].as_str().unwrap().ends_with('Z'));
}
