use serde::{Deserialize, Serialize};

use crate::signals::Signal;
use crate::Time;

/// An output interval between two transitions shorter than ε.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct F4Witness {
    /// Index of the offending output in the checked list.
    pub run: usize,
    pub start: Time,
    pub end: Time,
    /// Level held during the interval.
    pub level: bool,
}

/// Verdict on the short-pulse-filtration conditions F2–F4.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpfVerdict {
    pub epsilon: Time,
    /// Zero input produced zero output.
    pub f2: bool,
    /// Some output of the sweep is not the zero signal.
    pub f3: bool,
    /// No output contains an up- or down-interval shorter than ε.
    pub f4: bool,
    pub witnesses: Vec<F4Witness>,
}

impl SpfVerdict {
    pub fn passed(&self) -> bool {
        self.f2 && self.f3 && self.f4
    }
}

/// Checks the outputs of a sweep; `zero_response` is the output for the
/// zero input signal.
pub fn spf_check(zero_response: &Signal, outputs: &[Signal], epsilon: Time) -> SpfVerdict {
    let mut witnesses = Vec::new();
    for (run, s) in outputs
        .iter()
        .chain(std::iter::once(zero_response))
        .enumerate()
    {
        for w in s.transitions().windows(2) {
            if w[1].time - w[0].time < epsilon {
                witnesses.push(F4Witness {
                    run,
                    start: w[0].time,
                    end: w[1].time,
                    level: w[0].value,
                });
            }
        }
    }
    SpfVerdict {
        epsilon,
        f2: zero_response.is_zero(),
        f3: outputs.iter().any(|s| !s.is_zero()),
        f4: witnesses.is_empty(),
        witnesses,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn planted_short_pulse_is_found() {
        let eps = 0.2;
        let good = Signal::step(3.0).unwrap();
        let bad = Signal::pulse(5.0, eps / 10.0).unwrap();
        let v = spf_check(&Signal::zero(), &[good.clone(), bad], eps);
        assert!(v.f2 && v.f3 && !v.f4);
        assert_eq!(v.witnesses.len(), 1);
        assert_eq!(v.witnesses[0].run, 1);
        assert_eq!(v.witnesses[0].start, 5.0);
        assert!(v.witnesses[0].level);

        let v = spf_check(&Signal::zero(), &[good], eps);
        assert!(v.passed());
        let v = spf_check(&Signal::step(1.0).unwrap(), &[Signal::zero()], eps);
        assert!(!v.f2 && !v.f3);
    }
}
