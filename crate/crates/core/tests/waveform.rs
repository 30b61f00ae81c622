use involution_core::channel::{apply_channel, ChannelSpec};
use involution_core::delay_model::{
    exp_channel, DelayFunction, DelaySample, ExpChannelParams, HyperbolicDelay,
};
use involution_core::signals::{Signal, Transition};
use involution_core::waveform_lab::{
    deviation_analysis, fit_exp_channel, fit_residuals, pulse_width_samples, synth_crossings,
    write_deviation_csv, RcSurrogateParams, VddDisturbance, WaveformError,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn ref_params() -> ExpChannelParams {
    ExpChannelParams::new(1.0, 0.5, 0.5).unwrap()
}

fn reference() -> DelayFunction {
    exp_channel(ref_params()).unwrap()
}

fn random_stimulus(rng: &mut ChaCha8Rng, n: usize) -> Signal {
    let mut t = rng.gen_range(0.0..1.0);
    let initial = rng.gen_bool(0.5);
    let mut v = initial;
    let mut tr = Vec::new();
    for _ in 0..n {
        v = !v;
        tr.push(Transition::new(t, v));
        t += rng.gen_range(0.05..3.0);
    }
    Signal::new(initial, tr).unwrap()
}

fn widths() -> Vec<f64> {
    (1..=80).map(|k| 0.45 + 0.05 * k as f64).collect()
}

#[test]
fn single_rising_edge_crosses_at_reference_asymptote() {
    let p = RcSurrogateParams::from_exp(&ref_params());
    let run = synth_crossings(&p, &Signal::step(0.0).unwrap(), 10.0).unwrap();
    assert_eq!(run.crossings.len(), 1);
    assert!((run.crossings[0].time - (0.5 + 2f64.ln())).abs() < 1e-12);
}

#[test]
fn undisturbed_surrogate_is_the_exp_channel() {
    let p = RcSurrogateParams::from_exp(&ref_params());
    let spec = ChannelSpec::Involution { df: reference() };
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let mut canceled = 0;
    for _ in 0..100 {
        let input = random_stimulus(&mut rng, 30);
        let horizon = input.last_time().unwrap() + 20.0;
        let run = apply_channel(&spec, &input).unwrap();
        canceled += run.log.iter().filter(|e| e.canceled).count();
        let model = run.output.truncated(horizon);
        let synth = synth_crossings(&p, &input, horizon)
            .unwrap()
            .output_signal()
            .unwrap();
        assert_eq!(model.initial(), synth.initial());
        assert_eq!(model.len(), synth.len());
        for (a, b) in model.transitions().iter().zip(synth.transitions()) {
            assert_eq!(a.value, b.value);
            assert!((a.time - b.time).abs() <= 1e-9, "{} vs {}", a.time, b.time);
        }
    }
    assert!(canceled > 0);
}

#[test]
fn zero_amplitude_ignores_the_seed() {
    let base = RcSurrogateParams::from_exp(&ref_params());
    let input = random_stimulus(&mut ChaCha8Rng::seed_from_u64(3), 20);
    let a = synth_crossings(
        &base
            .with_disturbance(VddDisturbance::sine(0.0, 1.0, 1))
            .unwrap(),
        &input,
        80.0,
    )
    .unwrap();
    let b = synth_crossings(
        &base
            .with_disturbance(VddDisturbance::sine(0.0, 1.0, 2))
            .unwrap(),
        &input,
        80.0,
    )
    .unwrap();
    assert_eq!(a.crossings, b.crossings);
}

#[test]
fn disturbance_phase_is_seeded() {
    let base = RcSurrogateParams::from_exp(&ref_params());
    let input = random_stimulus(&mut ChaCha8Rng::seed_from_u64(4), 20);
    let d = |s| {
        base.with_disturbance(VddDisturbance::sine(0.05, 1.2, s))
            .unwrap()
    };
    let a = synth_crossings(&d(9), &input, 80.0).unwrap();
    let b = synth_crossings(&d(9), &input, 80.0).unwrap();
    let c = synth_crossings(&d(10), &input, 80.0).unwrap();
    assert_eq!(a, b);
    assert_ne!(a.phases, c.phases);
    assert_eq!(a.phases.len(), 10 + usize::from(input.initial()));
}

#[test]
fn pulse_samples_reproduce_reference() {
    let p = RcSurrogateParams::from_exp(&ref_params());
    let rows = pulse_width_samples(&p, &widths()).unwrap();
    let df = reference();
    let (mut up, mut down, mut negative) = (0, 0, 0);
    for r in &rows {
        if r.t < 0.0 {
            negative += 1;
        }
        if let Some(d) = r.delta_up {
            up += 1;
            assert!((d - df.up(r.t)).abs() < 1e-6);
        }
        if let Some(d) = r.delta_down {
            down += 1;
            assert!((d - df.down(r.t)).abs() < 1e-6);
        }
    }
    assert!(up > 50 && down > 50 && negative > 0);
}

#[test]
fn self_deviation_is_zero() {
    let p = RcSurrogateParams::from_exp(&ref_params());
    let input = random_stimulus(&mut ChaCha8Rng::seed_from_u64(5), 60);
    let actual = synth_crossings(&p, &input, 400.0)
        .unwrap()
        .output_signal()
        .unwrap();
    let rep = deviation_analysis(&input, &actual, &reference(), 0.01).unwrap();
    assert!(rep.max_abs_deviation() <= 1e-9);
    assert_eq!(rep.coverage, 1.0);
    assert!(rep.unpaired_actual.is_empty() && rep.unpaired_predicted.is_empty());
    assert!((rep.eta_minus - 0.317_414).abs() < 1e-5);
}

#[test]
fn slower_process_gives_one_sided_deviation() {
    let mut p = RcSurrogateParams::from_exp(&ref_params());
    p.tau_rc *= 1.1;
    let input = random_stimulus(&mut ChaCha8Rng::seed_from_u64(6), 60);
    let actual = synth_crossings(&p, &input, 400.0)
        .unwrap()
        .output_signal()
        .unwrap();
    let rep = deviation_analysis(&input, &actual, &reference(), 0.01).unwrap();
    assert!(rep.samples.len() > 30);
    // near T = 0 the slower node starts closer to the threshold and the sign flips
    let far: Vec<_> = rep.samples.iter().filter(|s| s.big_t >= 0.5).collect();
    assert!(far.len() > 20);
    assert!(far.iter().all(|s| s.d < 0.0));
}

#[test]
fn eta_budget_must_be_nonnegative() {
    let input = Signal::pulse(0.0, 2.0).unwrap();
    let err = deviation_analysis(&input, &input, &reference(), 0.9).unwrap_err();
    assert!(
        matches!(
            err,
            WaveformError::EtaBudgetInvalid { .. } | WaveformError::Analysis(_)
        ),
        "{err}"
    );
}

#[test]
fn deviation_csv_header() {
    let p = RcSurrogateParams::from_exp(&ref_params());
    let input = Signal::pulse(0.0, 2.0).unwrap();
    let actual = synth_crossings(&p, &input, 20.0)
        .unwrap()
        .output_signal()
        .unwrap();
    let rep = deviation_analysis(&input, &actual, &reference(), 0.01).unwrap();
    let mut buf = Vec::new();
    write_deviation_csv(&mut buf, &rep.samples).unwrap();
    let text = String::from_utf8(buf).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some("edge,T,D,covered"));
    assert!(lines.next().unwrap().starts_with("rising,inf,"));
}

#[test]
fn self_fit_recovers_reference() {
    let p = RcSurrogateParams::from_exp(&ref_params());
    let rows = pulse_width_samples(&p, &widths()).unwrap();
    let fit = fit_exp_channel(&rows).unwrap();
    let r = ref_params();
    for (a, b) in [
        (fit.params.tau, r.tau),
        (fit.params.t_p, r.t_p),
        (fit.params.vth, r.vth),
    ] {
        assert!(((a - b) / b).abs() < 1e-4, "{:?}", fit.params);
    }
    assert!(fit.rms_residual < 1e-8);
}

#[test]
fn noisy_fit_stays_close() {
    let df = reference();
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let rows: Vec<DelaySample> = (0..120)
        .map(|k| {
            let t = -0.3 + 0.05 * k as f64;
            DelaySample {
                t,
                delta_up: Some(df.up(t) + rng.gen_range(-1e-3..1e-3)),
                delta_down: Some(df.down(t) + rng.gen_range(-1e-3..1e-3)),
            }
        })
        .collect();
    let fit = fit_exp_channel(&rows).unwrap();
    assert!(fit.rms_residual <= 2e-3);
    let r = ref_params();
    for (a, b) in [
        (fit.params.tau, r.tau),
        (fit.params.t_p, r.t_p),
        (fit.params.vth, r.vth),
    ] {
        assert!(((a - b) / b).abs() < 1e-2, "{:?}", fit.params);
    }
}

#[test]
fn fit_is_scale_equivariant() {
    let p = RcSurrogateParams::from_exp(&ref_params());
    let rows = pulse_width_samples(&p, &widths()).unwrap();
    let k = 1e-11;
    let scaled: Vec<DelaySample> = rows
        .iter()
        .map(|r| DelaySample {
            t: r.t * k,
            delta_up: r.delta_up.map(|d| d * k),
            delta_down: r.delta_down.map(|d| d * k),
        })
        .collect();
    let a = fit_exp_channel(&rows).unwrap().params;
    let b = fit_exp_channel(&scaled).unwrap().params;
    assert!((b.tau / k / a.tau - 1.0).abs() < 1e-6);
    assert!((b.t_p / k / a.t_p - 1.0).abs() < 1e-6);
    assert!((b.vth - a.vth).abs() < 1e-6);
}

#[test]
fn non_exp_target_misfit_is_reported() {
    let h = HyperbolicDelay::new(1.2, 0.5, 1.0).unwrap();
    let rows: Vec<DelaySample> = (0..200)
        .map(|k| {
            let t = -0.2 + 0.05 * k as f64;
            DelaySample {
                t,
                delta_up: Some(h.up(t)),
                delta_down: Some(h.down(t)),
            }
        })
        .collect();
    let fit = fit_exp_channel(&rows).unwrap();
    assert!(fit.rms_residual > 1e-3 && fit.rms_residual < 0.1);
    let res = fit_residuals(&fit.params, &rows);
    let worst = res
        .iter()
        .max_by(|a, b| a.residual.abs().total_cmp(&b.residual.abs()))
        .unwrap();
    // the exp shape misses the hyperbolic curvature at the domain edge first
    assert!(worst.t < 0.5, "{worst:?}");
}

#[test]
fn disturbance_coverage_by_t_bin() {
    let base = RcSurrogateParams::from_exp(&ref_params());
    let df = reference();
    let eta_plus = 0.02 * df.delta_min().unwrap();
    let mut samples = Vec::new();
    for (i, w) in widths().iter().enumerate() {
        let p = base
            .with_disturbance(VddDisturbance::sine(0.01, 2.0, i as u64))
            .unwrap();
        for initial in [false, true] {
            let input = Signal::new(
                initial,
                vec![Transition::new(0.0, !initial), Transition::new(*w, initial)],
            )
            .unwrap();
            let actual = synth_crossings(&p, &input, w + 60.0)
                .unwrap()
                .output_signal()
                .unwrap();
            samples.extend(
                deviation_analysis(&input, &actual, &df, eta_plus)
                    .unwrap()
                    .samples,
            );
        }
    }
    let bins = involution_core::waveform_lab::coverage_by_bins(&samples, 4);
    assert_eq!(bins.len(), 4);
    assert_eq!(bins[0].fraction(), 1.0);
    for w in bins.windows(2) {
        assert!(w[1].fraction() <= w[0].fraction());
    }
    let max_d = |b: &involution_core::waveform_lab::CoverageBin| {
        samples
            .iter()
            .filter(|s| s.big_t >= b.t_lo && s.big_t <= b.t_hi)
            .map(|s| s.d.abs())
            .fold(0.0, f64::max)
    };
    assert!(max_d(&bins[3]) > max_d(&bins[0]));
}
