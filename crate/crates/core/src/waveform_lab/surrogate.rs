use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::WaveformError;
use crate::delay_model::{DelaySample, Edge, ExpChannelParams};
use crate::rootfind::Bisection;
use crate::signals::{Signal, Transition};
use crate::Time;

/// Largest supply disturbance accepted, as a fraction of the supply.
pub const MAX_AMPLITUDE_FRACTION: f64 = 0.2;

const CROSSING_TOL: f64 = 1e-14;
const SCAN_STEPS_PER_PERIOD: f64 = 64.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case")]
pub enum DisturbancePhase {
    Fixed {
        radians: f64,
    },
    /// Uniform in [0, 2π), one draw per high input segment.
    Random {
        seed: u64,
    },
}

/// Sinusoidal ripple on the rail the node charges toward.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VddDisturbance {
    pub amplitude_fraction: f64,
    pub period: Time,
    pub phase: DisturbancePhase,
}

impl VddDisturbance {
    pub fn none() -> Self {
        Self {
            amplitude_fraction: 0.0,
            period: 1.0,
            phase: DisturbancePhase::Fixed { radians: 0.0 },
        }
    }

    pub fn sine(amplitude_fraction: f64, period: Time, seed: u64) -> Self {
        Self {
            amplitude_fraction,
            period,
            phase: DisturbancePhase::Random { seed },
        }
    }

    pub fn is_active(&self) -> bool {
        self.amplitude_fraction != 0.0
    }
}

impl Default for VddDisturbance {
    fn default() -> Self {
        Self::none()
    }
}

/// First-order RC stage with a threshold detector and a pure output delay.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RcSurrogateParams {
    pub tau_rc: Time,
    pub vth_norm: f64,
    #[serde(default)]
    pub vdd_disturbance: VddDisturbance,
    pub pure_delay: Time,
}

impl RcSurrogateParams {
    pub fn new(tau_rc: Time, vth_norm: f64, pure_delay: Time) -> Result<Self, WaveformError> {
        let p = Self {
            tau_rc,
            vth_norm,
            vdd_disturbance: VddDisturbance::none(),
            pure_delay,
        };
        p.validate()?;
        Ok(p)
    }

    /// Surrogate whose undisturbed behavior is exactly the given exp-channel.
    pub fn from_exp(p: &ExpChannelParams) -> Self {
        Self {
            tau_rc: p.tau,
            vth_norm: p.vth,
            vdd_disturbance: VddDisturbance::none(),
            pure_delay: p.t_p,
        }
    }

    pub fn with_disturbance(mut self, d: VddDisturbance) -> Result<Self, WaveformError> {
        self.vdd_disturbance = d;
        self.validate()?;
        Ok(self)
    }

    pub fn exp_params(&self) -> Result<ExpChannelParams, WaveformError> {
        ExpChannelParams::new(self.tau_rc, self.pure_delay, self.vth_norm)
            .map_err(|e| WaveformError::InvalidParams(e.to_string()))
    }

    pub fn validate(&self) -> Result<(), WaveformError> {
        let d = &self.vdd_disturbance;
        let bad = |m: String| Err(WaveformError::InvalidParams(m));
        if !(self.tau_rc > 0.0 && self.tau_rc.is_finite()) {
            return bad(format!(
                "tau_rc must be positive and finite (got {})",
                self.tau_rc
            ));
        }
        if !(self.vth_norm > 0.0 && self.vth_norm < 1.0) {
            return bad(format!(
                "vth_norm must lie in (0, 1) (got {})",
                self.vth_norm
            ));
        }
        if !(self.pure_delay >= 0.0 && self.pure_delay.is_finite()) {
            return bad(format!(
                "pure_delay must be non-negative (got {})",
                self.pure_delay
            ));
        }
        if !(0.0..=MAX_AMPLITUDE_FRACTION).contains(&d.amplitude_fraction) {
            return bad(format!(
                "amplitude_fraction must lie in [0, {MAX_AMPLITUDE_FRACTION}] (got {})",
                d.amplitude_fraction
            ));
        }
        if d.is_active() && !(d.period > 0.0 && d.period.is_finite()) {
            return bad(format!(
                "disturbance period must be positive (got {})",
                d.period
            ));
        }
        if let DisturbancePhase::Fixed { radians } = d.phase {
            if !radians.is_finite() {
                return bad("disturbance phase must be finite".into());
            }
        }
        Ok(())
    }
}

/// A threshold crossing, reported at the output (crossing time plus pure delay).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Crossing {
    pub time: Time,
    pub edge: Edge,
    /// Index of the input transition that started the segment; `None` for
    /// the segment before the first input transition.
    pub cause: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SynthRun {
    pub initial: bool,
    pub crossings: Vec<Crossing>,
    /// Disturbance phase used for each high input segment, in order.
    pub phases: Vec<f64>,
}

impl SynthRun {
    pub fn output_signal(&self) -> Result<Signal, WaveformError> {
        let tr = self
            .crossings
            .iter()
            .map(|c| Transition::new(c.time, c.edge == Edge::Rising))
            .collect();
        Signal::new(self.initial, tr).map_err(|e| WaveformError::InvalidParams(e.to_string()))
    }

    /// `(T, δ)` pairs of crossings whose predecessor crossing was caused by
    /// the immediately preceding input transition.
    pub fn delay_samples(&self, input: &Signal) -> Vec<(Edge, Time, Time)> {
        let tr = input.transitions();
        self.crossings
            .windows(2)
            .filter_map(|w| {
                let (prev, cur) = (w[0], w[1]);
                let c = cur.cause?;
                if c == 0 || prev.cause != Some(c - 1) {
                    return None;
                }
                let t_in = tr[c].time;
                Some((cur.edge, t_in - prev.time, cur.time - t_in))
            })
            .collect()
    }
}

/// Node voltage on one input segment, normalized to the nominal supply.
#[derive(Debug, Clone, Copy)]
struct Segment {
    start: Time,
    v0: f64,
    high: bool,
    phase: f64,
    tau: f64,
    amp: f64,
    omega: f64,
}

impl Segment {
    /// Steady-state (particular) response to the rippled rail.
    fn particular(&self, t: Time) -> f64 {
        let wt = self.omega * self.tau;
        let th = self.omega * (t - self.start) + self.phase;
        1.0 + self.amp * (th.sin() - wt * th.cos()) / (1.0 + wt * wt)
    }

    fn voltage(&self, t: Time) -> f64 {
        let u = t - self.start;
        let decay = (-u / self.tau).exp();
        if !self.high {
            return self.v0 * decay;
        }
        if self.amp == 0.0 {
            return 1.0 - (1.0 - self.v0) * decay;
        }
        let vp0 = self.particular(self.start);
        self.particular(t) + (self.v0 - vp0) * decay
    }

    fn monotone(&self) -> bool {
        !self.high || self.amp == 0.0
    }
}

/// Integrates the node voltage across the input's segments and reports
/// every threshold crossing whose output time lies before `horizon`.
pub fn synth_crossings(
    params: &RcSurrogateParams,
    input: &Signal,
    horizon: Time,
) -> Result<SynthRun, WaveformError> {
    params.validate()?;
    let d = params.vdd_disturbance;
    let amp = d.amplitude_fraction;
    let omega = if d.is_active() {
        2.0 * std::f64::consts::PI / d.period
    } else {
        0.0
    };
    let mut rng = match d.phase {
        DisturbancePhase::Random { seed } => Some(ChaCha8Rng::seed_from_u64(seed)),
        DisturbancePhase::Fixed { .. } => None,
    };
    let mut next_phase = || match (&mut rng, d.phase) {
        (Some(r), _) => r.gen_range(0.0..std::f64::consts::TAU),
        (None, DisturbancePhase::Fixed { radians }) => radians,
        (None, _) => 0.0,
    };

    let vth = params.vth_norm;
    let end_of_node = horizon - params.pure_delay;
    let tr = input.transitions();
    let mut phases = Vec::new();
    let mut crossings = Vec::new();

    let high = input.initial();
    let phase = if high { next_phase() } else { 0.0 };
    if high {
        phases.push(phase);
    }
    let mut seg = Segment {
        start: 0.0,
        v0: 0.0,
        high,
        phase,
        tau: params.tau_rc,
        amp,
        omega,
    };
    if high {
        seg.v0 = seg.particular(0.0);
    }
    let mut above = seg.v0 > vth;
    let initial = above;

    let mut cause = None;
    for k in 0..=tr.len() {
        let stop = tr.get(k).map_or(end_of_node, |t| t.time.min(end_of_node));
        if stop > seg.start {
            scan_segment(&seg, stop, vth, &mut above, |t, edge| {
                crossings.push(Crossing {
                    time: t + params.pure_delay,
                    edge,
                    cause,
                });
            })?;
        }
        let Some(next) = tr.get(k) else { break };
        if next.time >= end_of_node {
            break;
        }
        let v = seg.voltage(next.time);
        let phase = if next.value { next_phase() } else { 0.0 };
        if next.value {
            phases.push(phase);
        }
        seg = Segment {
            start: next.time,
            v0: v,
            high: next.value,
            phase,
            ..seg
        };
        cause = Some(k);
    }
    crossings.retain(|c| c.time < horizon);
    Ok(SynthRun {
        initial,
        crossings,
        phases,
    })
}

fn scan_segment<F: FnMut(Time, Edge)>(
    seg: &Segment,
    stop: Time,
    vth: f64,
    above: &mut bool,
    mut emit: F,
) -> Result<(), WaveformError> {
    let bis = Bisection::with_tol(CROSSING_TOL);
    let g = |t: Time| seg.voltage(t) - vth;
    let mut solve = |a: Time, b: Time, above: &mut bool| -> Result<(), WaveformError> {
        let (ga, gb) = (g(a), g(b));
        let crosses = if *above {
            ga > 0.0 && gb <= 0.0
        } else {
            ga <= 0.0 && gb > 0.0
        };
        if crosses {
            let t = bis.solve(g, a, b)?;
            *above = !*above;
            emit(t, if *above { Edge::Rising } else { Edge::Falling });
        }
        Ok(())
    };
    if seg.monotone() {
        return solve(seg.start, stop, above);
    }
    let h = seg.tau.min(2.0 * std::f64::consts::PI / seg.omega) / SCAN_STEPS_PER_PERIOD;
    let n = ((stop - seg.start) / h).ceil().max(1.0) as usize;
    let mut a = seg.start;
    for i in 1..=n {
        let b = if i == n {
            stop
        } else {
            seg.start + h * i as f64
        };
        solve(a, b, above)?;
        a = b;
    }
    Ok(())
}

/// Delay samples from isolated pulses: high pulses of each width yield
/// `δ↓(T)`, low pulses yield `δ↑(T)`; canceled pulses contribute nothing.
pub fn pulse_width_samples(
    params: &RcSurrogateParams,
    widths: &[Time],
) -> Result<Vec<DelaySample>, WaveformError> {
    params.validate()?;
    let settle = params.pure_delay + 60.0 * params.tau_rc;
    let mut rows = Vec::new();
    for &w in widths {
        if !(w > 0.0 && w.is_finite()) {
            return Err(WaveformError::InvalidParams(format!(
                "pulse width must be positive (got {w})"
            )));
        }
        for initial in [false, true] {
            let input = Signal::new(
                initial,
                vec![Transition::new(0.0, !initial), Transition::new(w, initial)],
            )
            .map_err(|e| WaveformError::InvalidParams(e.to_string()))?;
            let run = synth_crossings(params, &input, w + settle)?;
            for (edge, t, delta) in run.delay_samples(&input) {
                rows.push(match edge {
                    Edge::Rising => DelaySample {
                        t,
                        delta_up: Some(delta),
                        delta_down: None,
                    },
                    Edge::Falling => DelaySample {
                        t,
                        delta_up: None,
                        delta_down: Some(delta),
                    },
                });
            }
        }
    }
    rows.sort_by(|a, b| a.t.total_cmp(&b.t));
    Ok(rows)
}
