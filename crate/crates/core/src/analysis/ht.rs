use super::AnalysisError;
use crate::channel::{apply_channel, ChannelSpec};
use crate::delay_model::{exp_channel, ExpChannelParams};
use crate::signals::{Signal, Transition};
use crate::Time;

/// Upper limit on the number of RC-constant doublings tried.
pub const HT_MAX_DOUBLINGS: usize = 40;

const TRAIN_SPAN_TAUS: f64 = 10.0;
const MAX_TRAIN_PULSES: usize = 200_000;

/// Finds a high-threshold exp-channel that maps every pulse train with
/// pulse lengths at most `theta` and duty cycle at most `gamma_cap` to the
/// zero signal, as verified on a family of probe trains.
pub fn dimension_ht_buffer(theta: Time, gamma_cap: f64) -> Result<ExpChannelParams, AnalysisError> {
    if !(theta > 0.0 && theta.is_finite()) || !(0.0..1.0).contains(&gamma_cap) {
        return Err(AnalysisError::SearchFailed(format!(
            "need theta > 0 and 0 <= gamma_cap < 1 (got theta={theta}, gamma_cap={gamma_cap})"
        )));
    }
    let vth = (1.0 + gamma_cap) / 2.0;
    let t_p = theta / 10.0;
    // smallest RC constant that swallows a single θ pulse
    let mut tau = theta / -(1.0 - vth).ln();
    for _ in 0..=HT_MAX_DOUBLINGS {
        let p = ExpChannelParams::new(tau, t_p, vth)?;
        if verify_ht_buffer(&p, theta, gamma_cap)? {
            return Ok(p);
        }
        tau *= 2.0;
    }
    Err(AnalysisError::SearchFailed(format!(
        "no RC constant up to {tau} filtered all probe trains for theta={theta}, gamma_cap={gamma_cap}"
    )))
}

/// Runs the probe trains through the channel; true when all map to zero
/// and a step still passes.
pub fn verify_ht_buffer(
    p: &ExpChannelParams,
    theta: Time,
    gamma_cap: f64,
) -> Result<bool, AnalysisError> {
    let spec = ChannelSpec::Involution {
        df: exp_channel(*p)?,
    };
    let zero = |s: &Signal| -> Result<bool, AnalysisError> {
        Ok(apply_channel(&spec, s)?.output.is_zero())
    };
    if !zero(&Signal::pulse(0.0, theta).expect("theta > 0"))? {
        return Ok(false);
    }
    if apply_channel(&spec, &Signal::step(0.0).expect("valid"))?
        .output
        .len()
        != 1
    {
        return Ok(false);
    }
    if gamma_cap == 0.0 {
        return Ok(true);
    }
    let mut ups = vec![theta, theta * gamma_cap];
    ups.extend((1..=6).map(|k| theta / f64::from(1u32 << k)));
    let span = TRAIN_SPAN_TAUS * p.tau;
    for u in ups {
        if !zero(&probe_train(theta, u, u / gamma_cap, span))? {
            return Ok(false);
        }
    }
    Ok(true)
}

/// A θ pulse at time 0 followed by pulses of up-time `up` and period
/// `period`, until `span` has elapsed.
fn probe_train(theta: Time, up: Time, period: Time, span: Time) -> Signal {
    let down = period - up;
    let mut tr = vec![Transition::new(0.0, true), Transition::new(theta, false)];
    let mut t = theta;
    while t < span && tr.len() < 2 * MAX_TRAIN_PULSES {
        t += down;
        tr.push(Transition::new(t, true));
        t += up;
        tr.push(Transition::new(t, false));
    }
    Signal::new(false, tr).expect("probe train is alternating and increasing")
}
