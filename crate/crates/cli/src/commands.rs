use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use involution_core::analysis::{
    characterize, spf_sweep, write_sweep_csv, CharacterizationReport, LoopSetup,
};
use involution_core::circuit::{
    execute_with, parse_circuit, verify_execution, ExecuteOptions, NetlistDocument,
};
use involution_core::delay_model::{
    check_involution, check_shape, write_delay_samples, DelayFunction, Edge,
};
use involution_core::signals::{read_traces, write_traces, Signal, Transition};
use involution_core::waveform_lab::{
    coverage_by_bins, deviation_analysis, fit_exp_channel_with, pulse_width_samples,
    synth_crossings, write_deviation_csv, Crossing, DeviationReport, FitOptions, RcSurrogateParams,
    VddDisturbance,
};
use involution_core::{AdversaryStrategy, ChannelSpec, EtaBounds};
use rayon::prelude::*;
use serde_json::{json, Value};

use crate::args::expand_strategies;
use crate::error::{CliError, ErrorKind};
use crate::manifest::{absolute, sha256_hex, Outputs, RunManifest};
use crate::{AnalyzeArgs, Command, ReplayArgs, SimulateArgs, SweepArgs, WaveformArgs};

/// Summary printed on stdout, if any, and the error deciding the exit code.
pub type Failure = (Option<Value>, CliError);

struct Done {
    manifest: RunManifest,
    summary: Value,
    /// Outputs were written but the command still reports a failure.
    failure: Option<CliError>,
}

pub fn run(cmd: Command) -> Result<Value, Failure> {
    if let Command::Replay(a) = &cmd {
        return replay(a);
    }
    let done = dispatch(&cmd).map_err(|e| (None, e))?;
    match done.failure {
        None => Ok(done.summary),
        Some(e) => Err((Some(done.summary), e)),
    }
}

fn dispatch(cmd: &Command) -> Result<Done, CliError> {
    match cmd {
        Command::Simulate(a) => simulate(a),
        Command::Analyze(a) => analyze(a),
        Command::SpfSweep(a) => sweep(a),
        Command::Waveform(a) => waveform(a),
        Command::Replay(_) => Err(CliError::usage("a replay cannot be replayed")),
    }
}

fn eta_bounds(eta_minus: f64, eta_plus: f64) -> Result<EtaBounds, CliError> {
    Ok(EtaBounds::new(eta_minus, eta_plus)?)
}

fn pool(workers: Option<usize>) -> Result<rayon::ThreadPool, CliError> {
    if workers == Some(0) {
        return Err(CliError::usage("--workers must be at least 1"));
    }
    rayon::ThreadPoolBuilder::new()
        .num_threads(workers.unwrap_or(0))
        .build()
        .map_err(|e| CliError::usage(format!("cannot start workers: {e}")))
}

fn file_part(name: &str) -> String {
    name.chars()
        .map(|c| {
            if c.is_ascii_alphanumeric() || c == '-' || c == '_' {
                c
            } else {
                '_'
            }
        })
        .collect()
}

fn simulate(a: &SimulateArgs) -> Result<Done, CliError> {
    if !(a.horizon.is_finite() && a.horizon > 0.0) {
        return Err(CliError::usage(format!(
            "--horizon must be positive, got {}",
            a.horizon
        )));
    }
    let mut a = a.clone();
    a.netlist = absolute(&a.netlist)?;
    a.stimulus = absolute(&a.stimulus)?;
    let mut m = RunManifest::new(&Command::Simulate(a.clone()));
    let text = String::from_utf8(m.read_input(&a.netlist)?)
        .map_err(|e| CliError::parse(format!("netlist is not UTF-8: {e}")))?;
    let base = a.netlist.parent();
    if let Ok(doc) = serde_json::from_str::<NetlistDocument>(&text) {
        for c in &doc.channels {
            let refs = c
                .params
                .table
                .iter()
                .chain(c.strategy.as_ref().and_then(|s| s.file.as_ref()));
            for r in refs {
                let p = base.map(|b| b.join(r)).unwrap_or_else(|| r.into());
                if p.exists() {
                    m.read_input(&absolute(&p)?)?;
                }
            }
        }
    }
    let circuit = parse_circuit(&text, base)?;
    let stimulus = read_traces(&m.read_input(&a.stimulus)?[..])?;

    let mut opts = ExecuteOptions::new(a.horizon);
    opts.events_max = a.events_max;
    opts.stabilization_guard = a.guard;
    if let Some(seed) = a.seed {
        for (i, ch) in circuit.channels().iter().enumerate() {
            if let ChannelSpec::EtaInvolution {
                strategy: AdversaryStrategy::UniformRandom { .. },
                ..
            } = &ch.spec
            {
                let s = AdversaryStrategy::UniformRandom {
                    seed: seed.wrapping_add(i as u64),
                };
                opts.strategies.insert(ch.name.clone(), s);
            }
        }
    }
    let e = execute_with(&circuit, &stimulus, &opts)?;
    let verify = verify_execution(&circuit, &e);
    let record = e.run_record();

    let mut out = Outputs::default();
    let groups = [
        ("input", &e.inputs),
        ("gate", &e.gates),
        ("output", &e.outputs),
    ];
    let mut signals: Vec<(String, &str, &Signal)> = groups
        .iter()
        .flat_map(|(kind, map)| {
            map.iter()
                .map(move |(k, v)| (format!("{kind}_{}", file_part(k)), k.as_str(), v))
        })
        .collect();
    signals.extend(e.channels.iter().map(|c| {
        (
            format!("channel_{}", file_part(&c.name)),
            c.name.as_str(),
            &c.output,
        )
    }));
    for (file, name, sig) in signals {
        let mut buf = Vec::new();
        write_traces(&mut buf, &[(name, sig)])?;
        out.add(format!("trace_{file}.csv"), buf);
    }
    let pending: BTreeMap<&str, usize> = e
        .channels
        .iter()
        .map(|c| (c.name.as_str(), c.pending_at_horizon))
        .collect();
    out.add_json("run.json", &json!({ "run": record, "verify": verify, "audit_ok": e.audit_ok(), "pending_at_horizon": pending }))?;

    m.horizon = Some(a.horizon);
    m.tolerances.insert("stabilization_guard".into(), e.guard);
    m.seeds.extend(
        record
            .seeds
            .iter()
            .map(|(k, v)| (format!("channel:{k}"), *v)),
    );
    let manifest = out.commit(&a.out, m)?;

    let outputs: BTreeMap<&str, Value> = e
        .outputs
        .iter()
        .map(|(k, s)| {
            let v = json!({
                "final": u8::from(s.final_value()),
                "transitions": s.len(),
                "stable": e.stabilized.get(k).copied().unwrap_or(false),
            });
            (k.as_str(), v)
        })
        .collect();
    let failure = (!verify.ok()).then(|| {
        CliError::new(
            ErrorKind::Engine,
            format!(
                "execution failed verification: {} mismatches",
                verify.mismatches.len()
            ),
        )
    });
    Ok(Done {
        manifest,
        summary: json!({ "outputs": outputs, "events": e.events, "verified": verify.ok(), "out": a.out }),
        failure,
    })
}

/// T grid of the invariant checks: inside both domains, and for exp-channels
/// no further than 5τ, where the composition is still well conditioned.
fn invariant_grid(df: &DelayFunction) -> Vec<f64> {
    let lo = 0.9
        * df.domain_start(Edge::Rising)
            .max(df.domain_start(Edge::Falling));
    let hi = match df {
        DelayFunction::Exp(p) => 5.0 * p.tau,
        _ => 3.0 * df.inf_up().max(df.inf_down()),
    };
    (0..200)
        .map(|k| lo + (hi - lo) * k as f64 / 199.0)
        .collect()
}

fn analyze(a: &AnalyzeArgs) -> Result<Done, CliError> {
    if !(a.tol > 0.0) {
        return Err(CliError::usage(format!(
            "--tol must be positive, got {}",
            a.tol
        )));
    }
    let mut a = a.clone();
    a.delay = a.delay.absolutized()?;
    let mut m = RunManifest::new(&Command::Analyze(a.clone()));
    let df = a.delay.build(&mut m)?;
    let bounds = eta_bounds(a.eta_minus, a.eta_plus)?;
    let report = CharacterizationReport::build(&df, bounds, a.tol);
    let grid = invariant_grid(&df);
    let involution = check_involution(&df, &grid, a.tol)?;
    let shape = check_shape(&df, &grid, a.tol)?;
    let summary = json!({ "report": report, "involution": involution, "shape": shape });

    let mut failure = characterize(&df, bounds).err().map(CliError::from);
    if failure.is_none() && !(involution.pass && shape.increasing && shape.concave) {
        failure = Some(CliError::new(
            ErrorKind::ModelConstraint,
            format!(
                "delay function fails its invariants: involution residual {:.3e}, increasing {}, concave {}",
                involution.max_residual, shape.increasing, shape.concave
            ),
        ));
    }
    let mut out = Outputs::default();
    out.add_json("report.json", &summary)?;
    m.tolerances.insert("involution".into(), a.tol);
    let manifest = out.commit(&a.out, m)?;
    Ok(Done {
        manifest,
        summary,
        failure,
    })
}

fn sweep(a: &SweepArgs) -> Result<Done, CliError> {
    let mut a = a.clone();
    a.delay = a.delay.absolutized()?;
    let mut m = RunManifest::new(&Command::SpfSweep(a.clone()));
    let df = a.delay.build(&mut m)?;
    let bounds = eta_bounds(a.eta_minus, a.eta_plus)?;
    if !(a.horizon.is_finite() && a.horizon > 0.0) {
        return Err(CliError::usage(format!(
            "--horizon must be positive, got {}",
            a.horizon
        )));
    }
    if a.workers == Some(0) {
        return Err(CliError::usage("--workers must be at least 1"));
    }
    let mut setup = LoopSetup::dimensioned(df, bounds, a.horizon)?;
    setup.events_max = a.events_max;
    let ch = characterize(&setup.df, bounds)?;
    let epsilon = a.epsilon.unwrap_or(ch.delta_up / 2.0);
    if !(epsilon > 0.0) {
        return Err(CliError::usage(format!(
            "--epsilon must be positive, got {epsilon}"
        )));
    }
    let strategies = expand_strategies(&a.strategies, a.seed, a.random_runs);
    if strategies.is_empty() {
        return Err(CliError::usage("no strategy to run"));
    }
    let res = spf_sweep(&setup, &a.grid.0, &strategies, epsilon, a.workers)?;

    let mut csv = Vec::new();
    write_sweep_csv(&mut csv, &res.rows).map_err(|e| CliError::io(e.to_string()))?;
    let mut out = Outputs::default();
    out.add("sweep.csv", csv);
    out.add_json(
        "verdict.json",
        &json!({
            "characterization": res.characterization,
            "ht": setup.ht,
            "epsilon": epsilon,
            "verdict": res.verdict,
            "runs": res.rows.len(),
        }),
    )?;
    m.horizon = Some(a.horizon);
    m.tolerances.insert("epsilon".into(), epsilon);
    for (k, s) in strategies.iter().filter_map(|s| s.seed()).enumerate() {
        m.seeds.insert(format!("uniform_random.{k}"), s);
    }
    let manifest = out.commit(&a.out, m)?;

    let mut resolved: BTreeMap<&str, usize> = BTreeMap::new();
    let mut regimes: BTreeMap<&str, usize> = BTreeMap::new();
    for r in &res.rows {
        *resolved.entry(r.resolved_to.as_str()).or_default() += 1;
        *regimes.entry(r.regime.as_str()).or_default() += 1;
    }
    let v = &res.verdict;
    Ok(Done {
        manifest,
        summary: json!({
            "passed": v.passed(),
            "f2": v.f2,
            "f3": v.f3,
            "f4": v.f4,
            "witnesses": v.witnesses.len(),
            "epsilon": epsilon,
            "runs": res.rows.len(),
            "resolved_to": resolved,
            "regimes": regimes,
            "out": a.out,
        }),
        failure: None,
    })
}

struct PulseRun {
    width: f64,
    initial: bool,
    crossings: Vec<Crossing>,
    report: DeviationReport,
}

fn waveform(a: &WaveformArgs) -> Result<Done, CliError> {
    let mut m = RunManifest::new(&Command::Waveform(a.clone()));
    let p = a
        .delay
        .exp_params()
        .ok_or_else(|| CliError::usage("waveform needs an exp delay (--delay exp:TAU,T_P,VTH)"))?;
    let df = a.delay.build(&mut m)?;
    if a.bins == 0 {
        return Err(CliError::usage("--bins must be at least 1"));
    }
    if let Some(w) = a.widths.0.iter().find(|w| !(**w > 0.0)) {
        return Err(CliError::usage(format!(
            "pulse widths must be positive, got {w}"
        )));
    }
    let eta_plus = match a.eta_plus {
        Some(e) => e,
        None => 0.02 * df.delta_min()?,
    };
    let base = RcSurrogateParams::from_exp(&p);
    let disturbed =
        |seed: u64| base.with_disturbance(VddDisturbance::sine(a.amplitude, a.period, seed));
    disturbed(a.seed)?;
    let workers = pool(a.workers)?;

    let runs: Vec<PulseRun> = workers.install(|| {
        a.widths
            .0
            .par_iter()
            .enumerate()
            .map(|(i, &w)| -> Result<Vec<PulseRun>, CliError> {
                let params = disturbed(a.seed.wrapping_add(i as u64))?;
                let horizon = w + p.t_p + 60.0 * p.tau;
                let mut v = Vec::with_capacity(2);
                for initial in [false, true] {
                    let input = Signal::new(
                        initial,
                        vec![Transition::new(0.0, !initial), Transition::new(w, initial)],
                    )
                    .map_err(|e| CliError::usage(format!("width {w}: {e}")))?;
                    let run = synth_crossings(&params, &input, horizon)?;
                    let report = deviation_analysis(&input, &run.output_signal()?, &df, eta_plus)?;
                    v.push(PulseRun {
                        width: w,
                        initial,
                        crossings: run.crossings,
                        report,
                    });
                }
                Ok(v)
            })
            .collect::<Result<Vec<_>, _>>()
            .map(|v| v.into_iter().flatten().collect())
    })?;

    let mut crossings = String::from("width,initial,edge,time,cause\n");
    for r in &runs {
        for c in &r.crossings {
            let cause = c.cause.map(|k| k.to_string()).unwrap_or_default();
            let _ = writeln!(
                crossings,
                "{},{},{},{},{}",
                r.width,
                u8::from(r.initial),
                c.edge,
                c.time,
                cause
            );
        }
    }
    let samples: Vec<_> = runs
        .iter()
        .flat_map(|r| r.report.samples.iter().copied())
        .collect();
    let bins = coverage_by_bins(&samples, a.bins);
    let mut coverage = String::from("t_lo,t_hi,count,covered,fraction\n");
    for b in &bins {
        let _ = writeln!(
            coverage,
            "{},{},{},{},{}",
            b.t_lo,
            b.t_hi,
            b.count,
            b.covered,
            b.fraction()
        );
    }
    let mut deviation = Vec::new();
    write_deviation_csv(&mut deviation, &samples)?;

    let covered = samples.iter().filter(|s| s.covered).count();
    let max_abs = samples.iter().map(|s| s.d.abs()).fold(0.0, f64::max);
    let eta_minus = runs.first().map(|r| r.report.eta_minus);
    let unpaired: usize = runs
        .iter()
        .map(|r| r.report.unpaired_actual.len() + r.report.unpaired_predicted.len())
        .sum();

    let mut out = Outputs::default();
    out.add("crossings.csv", crossings.into_bytes());
    out.add("deviation.csv", deviation);
    out.add("coverage.csv", coverage.into_bytes());

    let mut fit_summary = Value::Null;
    if !a.no_fit {
        let rows = pulse_width_samples(&disturbed(a.seed)?, &a.widths.0)?;
        let opts = FitOptions {
            seed: a.seed,
            ..FitOptions::default()
        };
        let fit = workers.install(|| fit_exp_channel_with(&rows, &opts))?;
        let mut buf = Vec::new();
        write_delay_samples(&mut buf, &rows)?;
        out.add("samples.csv", buf);
        out.add_json("fit.json", &json!({ "fit": fit, "reference": p }))?;
        m.seeds.insert("fit".into(), a.seed);
        fit_summary = json!({
            "tau": fit.params.tau,
            "t_p": fit.params.t_p,
            "vth": fit.params.vth,
            "rms_residual": fit.rms_residual,
        });
    }
    let bin_summary: Vec<Value> = bins
        .iter()
        .map(|b| json!({ "t_lo": b.t_lo, "t_hi": b.t_hi, "count": b.count, "coverage": b.fraction() }))
        .collect();
    let mut summary = json!({
        "samples": samples.len(),
        "coverage": if samples.is_empty() { 1.0 } else { covered as f64 / samples.len() as f64 },
        "eta_plus": eta_plus,
        "eta_minus": eta_minus,
        "max_abs_deviation": max_abs,
        "unpaired": unpaired,
        "bins": bin_summary,
        "fit": fit_summary,
    });
    out.add_json("summary.json", &summary)?;
    summary["out"] = json!(a.out);
    m.seeds.insert("disturbance".into(), a.seed);
    m.tolerances.insert("eta_plus".into(), eta_plus);
    let manifest = out.commit(&a.out, m)?;
    Ok(Done {
        manifest,
        summary,
        failure: None,
    })
}

fn replay(a: &ReplayArgs) -> Result<Value, Failure> {
    let fail = |e: CliError| (None, e);
    let recorded = RunManifest::read(&a.manifest).map_err(fail)?;
    for (path, digest) in &recorded.inputs {
        let bytes =
            fs::read(path).map_err(|e| fail(CliError::io(format!("cannot read {path}: {e}"))))?;
        if &sha256_hex(&bytes) != digest {
            return Err(fail(CliError::io(format!(
                "input {path} changed since the recorded run"
            ))));
        }
    }
    let out = a
        .out
        .clone()
        .unwrap_or_else(|| a.manifest.parent().unwrap_or(Path::new(".")).join("replay"));
    let mut cmd = recorded.invocation.clone();
    cmd.set_out(out.clone());
    let done = dispatch(&cmd).map_err(fail)?;
    let fresh = &done.manifest.outputs;
    let mismatched: Vec<&String> = recorded
        .outputs
        .keys()
        .chain(fresh.keys().filter(|k| !recorded.outputs.contains_key(*k)))
        .filter(|k| recorded.outputs.get(*k) != fresh.get(*k))
        .collect();
    let value = json!({
        "replayed": recorded.command,
        "out": out,
        "identical": mismatched.is_empty(),
        "mismatched": mismatched,
        "summary": done.summary,
    });
    if !mismatched.is_empty() {
        let e = CliError::new(
            ErrorKind::Engine,
            format!("replay differs in {} output file(s)", mismatched.len()),
        );
        return Err((Some(value), e));
    }
    Ok(value)
}
