//! Acceptance suite: one PASS/FAIL line per criterion, nonzero exit on any failure.

use std::time::{Duration, Instant};

use involution_core::analysis::{
    characterize, f_map, run_loop, spf_check, spf_sweep, worst_case_up_times, LoopSetup,
    PulseTrainCharacterization,
};
use involution_core::channel::{
    apply_channel, cancellation_oracle, AdversaryStrategy, ChannelSpec, EtaBounds,
};
use involution_core::delay_model::{exp_channel, DelayFunction, Edge, ExpChannelParams};
use involution_core::signals::{Signal, Transition};
use involution_core::waveform_lab::{
    coverage_by_bins, deviation_analysis, fit_exp_channel, pulse_width_samples, synth_crossings,
    RcSurrogateParams, VddDisturbance,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

type Outcome = Result<String, String>;

fn ref_params() -> ExpChannelParams {
    ExpChannelParams::new(1.0, 0.5, 0.5).unwrap()
}

fn reference() -> DelayFunction {
    exp_channel(ref_params()).unwrap()
}

fn worst_bounds() -> EtaBounds {
    EtaBounds::new(0.1, 0.05).unwrap()
}

fn check(ok: bool, detail: String) -> Outcome {
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn timed<F: FnOnce() -> Outcome>(limit: Duration, f: F) -> Outcome {
    let start = Instant::now();
    let r = f();
    let took = start.elapsed();
    let note = format!(
        " in {:.3} s (limit {} s)",
        took.as_secs_f64(),
        limit.as_secs_f64()
    );
    match r {
        Ok(d) if took <= limit => Ok(d + &note),
        Ok(d) | Err(d) => Err(d + &note),
    }
}

/// Triples with T_p ≤ τ, the family on which the composition is well
/// conditioned up to a few time constants.
fn random_triples(n: usize) -> Vec<ExpChannelParams> {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    (0..n)
        .map(|_| {
            let tau = rng.gen_range(0.1..10.0);
            let t_p = tau * rng.gen_range(0.05..1.0);
            ExpChannelParams::new(tau, t_p, rng.gen_range(0.05..0.95)).unwrap()
        })
        .collect()
}

fn criterion_1() -> Outcome {
    timed(Duration::from_secs(1), || {
        let mut worst: f64 = 0.0;
        for p in random_triples(50) {
            let df = exp_channel(p).unwrap();
            let (lo, hi) = (-0.9 * p.inf_up(), 5.0 * p.tau);
            for k in 0..200 {
                let t = lo + (hi - lo) * (10f64.powf(3.0 * k as f64 / 199.0) - 1.0) / 999.0;
                worst = worst.max((-df.up(-df.down(t)) - t).abs());
            }
        }
        check(
            worst <= 1e-9,
            format!("max residual {worst:.3e} s over 50 triples x 200 T in [-0.9 d_inf_up, 5 tau]"),
        )
    })
}

fn criterion_2() -> Outcome {
    let mut worst: f64 = 0.0;
    for p in random_triples(50) {
        let dm = exp_channel(p).unwrap().delta_min_numeric().unwrap();
        worst = worst.max((dm - p.t_p).abs());
    }
    check(
        worst <= 1e-9,
        format!("max |delta_min - T_p| {worst:.3e} s over 50 triples (bisection)"),
    )
}

fn bisect(mut f: impl FnMut(f64) -> f64, mut a: f64, mut b: f64) -> f64 {
    let fa = f(a);
    assert!(fa * f(b) < 0.0, "bracket [{a}, {b}] has no sign change");
    for _ in 0..200 {
        let m = 0.5 * (a + b);
        if (f(m) > 0.0) == (fa > 0.0) {
            a = m;
        } else {
            b = m;
        }
    }
    0.5 * (a + b)
}

fn criterion_3() -> Outcome {
    // independent closed forms for REF: tau = 1, T_p = 0.5, V = 0.5
    let inf = 0.5 + 2f64.ln();
    let up = |t: f64| (1.0 - (-(t + inf)).exp()).ln() + inf;
    let down = up;
    let oracle_dmin = bisect(|x| up(-x) - x, 1e-6, inf - 1e-6);
    let oracle_tau = bisect(|t| down(-t) + up(-t) - t, oracle_dmin + 1e-9, inf);
    let oracle_delta = down(-oracle_tau);
    let oracle_gamma = oracle_delta / oracle_tau;
    let oracle_tilde = bisect(
        |x| down(x - inf) + (x - inf) - oracle_delta,
        inf - oracle_dmin + 1e-9,
        inf,
    );
    let e = (-inf).exp();
    let oracle_a = 1.0 + e / (1.0 - e);

    let df = reference();
    let ch: PulseTrainCharacterization = characterize(&df, EtaBounds::zero()).unwrap();
    let rows = [
        ("d_inf_up", df.inf_up(), inf, 1.19315, 1e-4),
        ("delta_min", ch.delta_min, oracle_dmin, 0.5, 1e-9),
        ("tau", ch.tau_star, oracle_tau, 0.6491, 5e-4),
        ("Delta", ch.delta_up, oracle_delta, 0.3246, 5e-4),
        ("gamma", ch.duty, oracle_gamma, 0.5, 1e-6),
        ("tilde_Delta0", ch.tilde_delta0, oracle_tilde, 0.8686, 5e-4),
        ("a", ch.growth_rate, oracle_a, 1.4353, 1e-4),
    ];
    let mut ok = true;
    let mut parts = Vec::new();
    for (name, got, oracle, frozen, tol) in rows {
        let agrees = (got - oracle).abs() <= 1e-9 && (oracle - frozen).abs() <= tol;
        ok &= agrees;
        parts.push(format!(
            "{name}={got:.6}{}",
            if agrees { "" } else { "(!)" }
        ));
    }
    check(ok, parts.join(" "))
}

fn criterion_4() -> Outcome {
    timed(Duration::from_secs(10), || {
        let setup = LoopSetup::dimensioned(reference(), EtaBounds::zero(), 60.0).unwrap();
        let (mut low, mut high, mut bad) = (0, 0, Vec::new());
        for k in 0..=140 {
            let d0 = 0.1 + 0.01 * k as f64;
            let run = run_loop(&setup, d0, &AdversaryStrategy::Zero).unwrap();
            if d0 <= 0.69315 {
                low += 1;
                if run.or_signal != Signal::pulse(0.0, d0).unwrap() || !run.output.is_zero() {
                    bad.push(d0);
                }
            } else if d0 >= 1.19315 {
                high += 1;
                if run.output.transitions().len() != 1 || !run.output.final_value() {
                    bad.push(d0);
                }
            }
        }
        check(
            bad.is_empty(),
            format!("{low} pass-through and {high} lock points, exceptions {bad:?}"),
        )
    })
}

fn critical_widths(ch: &PulseTrainCharacterization, n: usize) -> Vec<f64> {
    (1..=n)
        .map(|k| ch.pass_below + (ch.lock_above - ch.pass_below) * k as f64 / (n + 1) as f64)
        .collect()
}

fn criterion_5() -> Outcome {
    let (df, b) = (reference(), worst_bounds());
    let ch = characterize(&df, b).unwrap();
    let setup = LoopSetup::dimensioned(df.clone(), b, 200.0).unwrap();
    let (mut compared, mut worst, mut bad) = (0, 0.0f64, Vec::new());
    for d0 in critical_widths(&ch, 20) {
        let run = run_loop(&setup, d0, &AdversaryStrategy::WorstCaseShrink).unwrap();
        let ups: Vec<f64> = run
            .or_signal
            .decompose_pulses(setup.horizon)
            .iter()
            .filter_map(|p| p.up_time)
            .collect();
        let iterates = worst_case_up_times(&df, b, d0, 10_000);
        if ups.is_empty() || (ups[0] - d0).abs() > 1e-9 || ups.len() - 1 != iterates.len() {
            bad.push(d0);
            continue;
        }
        for (u, f) in ups[1..].iter().zip(&iterates) {
            compared += 1;
            worst = worst.max((u - f).abs());
        }
    }
    check(
        bad.is_empty() && worst <= 1e-9,
        format!("{compared} up-times over 20 widths, max |engine - f| {worst:.3e} s, mismatched runs {bad:?}"),
    )
}

fn criterion_6() -> Outcome {
    let df = reference();
    let a = 1.0 + df.derivative_up(0.0).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let mut violations = 0;
    let mut min_ratio = f64::INFINITY;
    for b in [EtaBounds::zero(), worst_bounds()] {
        let ch = characterize(&df, b).unwrap();
        for _ in 0..100 {
            let d1 = ch.delta_up + (df.inf_down() - ch.delta_up) * rng.gen_range(1e-6..1.0 - 1e-6);
            let ratio = (f_map(&df, b, d1).unwrap() - ch.delta_up) / (d1 - ch.delta_up);
            min_ratio = min_ratio.min(ratio);
            if ratio < a {
                violations += 1;
            }
        }
    }
    check(
        violations == 0,
        format!("min ratio {min_ratio:.6} >= a = {a:.6}, {violations} violations in 2 x 100 draws"),
    )
}

fn criterion_7() -> Outcome {
    let (df, b) = (reference(), worst_bounds());
    let ch = characterize(&df, b).unwrap();
    let setup = LoopSetup::dimensioned(df, b, 200.0).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let tol = 1e-9;
    let (mut pulses, mut violating_runs, mut unexplained) = (0, 0, Vec::new());
    for run_id in 0..100u64 {
        let strategy = match run_id % 3 {
            0 => AdversaryStrategy::UniformRandom { seed: run_id },
            1 => AdversaryStrategy::WorstCaseShrink,
            _ => AdversaryStrategy::Zero,
        };
        let d0 = rng.gen_range(ch.pass_below..ch.lock_above);
        let run = run_loop(&setup, d0, &strategy).unwrap();
        let decomposed = run.or_signal.decompose_pulses(setup.horizon);
        let mut violated = false;
        for p in decomposed.iter().skip(1) {
            pulses += 1;
            let up_bad = p.up_time.is_some_and(|u| u > ch.delta_up + tol);
            let down_bad = p
                .down_time
                .is_some_and(|d| d < ch.period - ch.delta_up - tol);
            let duty_bad = p.duty_cycle().is_some_and(|g| g > ch.duty + tol);
            violated |= up_bad || down_bad || duty_bad;
        }
        if violated {
            violating_runs += 1;
            if run.resolved_to != Some(true) {
                unexplained.push((run_id, d0));
            }
        }
    }
    check(
        unexplained.is_empty(),
        format!(
            "{pulses} loop pulses in 100 runs; {violating_runs} runs exceed a bound, all resolve to 1 unless listed: {unexplained:?}"
        ),
    )
}

fn cancellation_case(offsets: &[f64]) -> (Vec<usize>, Vec<f64>) {
    let df = reference();
    let mut etas = Vec::new();
    let mut prev = (f64::NEG_INFINITY, 0.0);
    let mut tr = Vec::new();
    let mut pending = Vec::new();
    for (n, off) in offsets.iter().enumerate() {
        let t = n as f64;
        let value = n % 2 == 0;
        etas.push(off - df.eval(Edge::to_value(value), t - prev.0 - prev.1));
        prev = (t, *off);
        tr.push(Transition::new(t, value));
        pending.push(t + off);
    }
    let spec = ChannelSpec::EtaInvolution {
        df,
        bounds: EtaBounds::new(10.0, 10.0).unwrap(),
        strategy: AdversaryStrategy::FixedSequence {
            values: etas,
            strict: true,
        },
    };
    let run = apply_channel(&spec, &Signal::new(false, tr).unwrap()).unwrap();
    let ids = run
        .log
        .iter()
        .enumerate()
        .filter(|(_, e)| !e.canceled)
        .map(|(i, _)| i)
        .collect();
    (ids, pending)
}

fn criterion_8() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let (mut mismatches, mut canceled) = (0, 0);
    for _ in 0..1000 {
        let n = rng.gen_range(1..=20);
        let offsets: Vec<f64> = (0..n).map(|_| rng.gen_range(0.2..2.0)).collect();
        let (ids, pending) = cancellation_case(&offsets);
        let oracle = cancellation_oracle(&pending);
        canceled += n - oracle.len();
        if ids != oracle {
            mismatches += 1;
        }
    }
    check(
        mismatches == 0,
        format!("1000 pending lists, {canceled} canceled entries, {mismatches} mismatches"),
    )
}

fn criterion_9() -> Outcome {
    let (df, b) = (reference(), worst_bounds());
    let ch = characterize(&df, b).unwrap();
    let setup = LoopSetup::dimensioned(df, b, 80.0).unwrap();
    let grid: Vec<f64> = (0..=140).map(|k| 0.1 + 0.01 * k as f64).collect();
    let strategies = [
        AdversaryStrategy::Zero,
        AdversaryStrategy::WorstCaseShrink,
        AdversaryStrategy::UniformRandom { seed: 1 },
        AdversaryStrategy::UniformRandom { seed: 2 },
    ];
    let eps = ch.delta_up / 2.0;
    let sweep = spf_sweep(&setup, &grid, &strategies, eps, None).unwrap();
    let v = &sweep.verdict;
    let clean = v.f2 && v.f3 && v.f4 && v.witnesses.is_empty();
    let planted = Signal::from_pairs(false, &[(3.0, true), (3.0 + eps / 10.0, false)]).unwrap();
    let caught = spf_check(&Signal::zero(), &[Signal::step(1.0).unwrap(), planted], eps);
    let detected = !caught.f4 && caught.witnesses.iter().any(|w| w.run == 1);
    check(
        clean && detected,
        format!(
            "{} runs, eps = {eps:.6}: F2 {} F3 {} F4 {} witnesses {}; planted eps/10 pulse detected: {detected}",
            sweep.rows.len(),
            v.f2,
            v.f3,
            v.f4,
            v.witnesses.len()
        ),
    )
}

fn random_stimulus(rng: &mut ChaCha8Rng) -> Signal {
    let initial = rng.gen_bool(0.5);
    let mut t = rng.gen_range(0.0..1.0);
    let mut v = initial;
    let mut tr = Vec::new();
    for _ in 0..rng.gen_range(1..40) {
        v = !v;
        tr.push(Transition::new(t, v));
        t += rng.gen_range(0.05..3.0);
    }
    Signal::new(initial, tr).unwrap()
}

fn criterion_10() -> Outcome {
    let p = RcSurrogateParams::from_exp(&ref_params());
    let spec = ChannelSpec::Involution { df: reference() };
    let mut rng = ChaCha8Rng::seed_from_u64(10);
    let (mut worst, mut count_mismatch) = (0.0f64, 0);
    for _ in 0..100 {
        let input = random_stimulus(&mut rng);
        let horizon = input.last_time().unwrap() + 20.0;
        let model = apply_channel(&spec, &input)
            .unwrap()
            .output
            .truncated(horizon);
        let synth = synth_crossings(&p, &input, horizon)
            .unwrap()
            .output_signal()
            .unwrap();
        if model.len() != synth.len() || model.initial() != synth.initial() {
            count_mismatch += 1;
            continue;
        }
        for (a, b) in model.transitions().iter().zip(synth.transitions()) {
            worst = worst.max(if a.value == b.value {
                (a.time - b.time).abs()
            } else {
                f64::INFINITY
            });
        }
    }
    let widths: Vec<f64> = (1..=80).map(|k| 0.45 + 0.05 * k as f64).collect();
    let fit = fit_exp_channel(&pulse_width_samples(&p, &widths).unwrap()).unwrap();
    let r = ref_params();
    let rel = [
        (fit.params.tau, r.tau),
        (fit.params.t_p, r.t_p),
        (fit.params.vth, r.vth),
    ]
    .iter()
    .map(|(a, b)| ((a - b) / b).abs())
    .fold(0.0, f64::max);
    check(
        count_mismatch == 0 && worst <= 1e-9 && rel <= 1e-4,
        format!("100 stimuli: max crossing error {worst:.3e} s, {count_mismatch} count mismatches; self-fit max rel error {rel:.3e}"),
    )
}

fn criterion_11() -> Outcome {
    let df = reference();
    let base = RcSurrogateParams::from_exp(&ref_params());
    let eta_plus = 0.02 * df.delta_min().unwrap();
    let mut samples = Vec::new();
    let mut eta_minus = 0.0;
    for (i, w) in (1..=80).map(|k| 0.45 + 0.05 * k as f64).enumerate() {
        let p = base
            .with_disturbance(VddDisturbance::sine(0.01, 2.0, i as u64))
            .unwrap();
        for initial in [false, true] {
            let input = Signal::new(
                initial,
                vec![Transition::new(0.0, !initial), Transition::new(w, initial)],
            )
            .unwrap();
            let actual = synth_crossings(&p, &input, w + 60.0)
                .unwrap()
                .output_signal()
                .unwrap();
            let rep = deviation_analysis(&input, &actual, &df, eta_plus).unwrap();
            eta_minus = rep.eta_minus;
            samples.extend(rep.samples);
        }
    }
    let bins = coverage_by_bins(&samples, 4);
    let fr: Vec<f64> = bins.iter().map(|b| b.fraction()).collect();
    let trend = fr.windows(2).all(|w| w[1] <= w[0]);
    check(
        bins.len() == 4 && fr[0] == 1.0 && trend,
        format!("{} samples, eta+ = {eta_plus:.4}, eta- = {eta_minus:.4}, coverage per T quartile {fr:?}", samples.len()),
    )
}

fn main() {
    let criteria: [(&str, fn() -> Outcome); 11] = [
        ("involution identity", criterion_1),
        ("delta_min equals T_p", criterion_2),
        ("REF constants", criterion_3),
        ("loop regimes", criterion_4),
        ("engine matches pulse map", criterion_5),
        ("Lipschitz growth", criterion_6),
        ("duty-cycle and down-time bounds", criterion_7),
        ("cancellation oracle", criterion_8),
        ("SPF verdict", criterion_9),
        ("surrogate oracle", criterion_10),
        ("eta coverage trend", criterion_11),
    ];
    let mut failed = 0;
    for (i, (name, f)) in criteria.iter().enumerate() {
        let outcome = std::panic::catch_unwind(f).unwrap_or_else(|e| {
            let msg = e
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string()));
            Err(format!("panicked: {}", msg.unwrap_or_default()))
        });
        match outcome {
            Ok(d) => println!("PASS criterion {:>2} {name}: {d}", i + 1),
            Err(d) => {
                failed += 1;
                println!("FAIL criterion {:>2} {name}: {d}", i + 1);
            }
        }
    }
    println!(
        "acceptance: {} passed, {failed} failed",
        criteria.len() - failed
    );
    if failed > 0 {
        std::process::exit(1);
    }
}
