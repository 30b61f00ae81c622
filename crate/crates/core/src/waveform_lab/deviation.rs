use std::io::Write;

use serde::{Deserialize, Serialize};

use super::WaveformError;
use crate::analysis::eta_minus_for;
use crate::channel::{apply_channel, ChannelSpec};
use crate::delay_model::{DelayFunction, Edge};
use crate::signals::{Signal, Transition};
use crate::Time;

/// Deviation of one model prediction from the matched actual crossing.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DeviationSample {
    pub edge: Edge,
    /// Previous-output-to-input delay of the predicted transition.
    #[serde(rename = "T")]
    pub big_t: Time,
    /// Predicted minus actual output time.
    #[serde(rename = "D")]
    pub d: Time,
    pub covered: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DeviationReport {
    pub samples: Vec<DeviationSample>,
    pub eta_plus: Time,
    pub eta_minus: Time,
    /// Fraction of paired samples inside the η band.
    pub coverage: f64,
    pub unpaired_predicted: Vec<Transition>,
    pub unpaired_actual: Vec<Transition>,
}

impl DeviationReport {
    pub fn max_abs_deviation(&self) -> f64 {
        self.samples.iter().map(|s| s.d.abs()).fold(0.0, f64::max)
    }

    pub fn bins(&self, n: usize) -> Vec<CoverageBin> {
        coverage_by_bins(&self.samples, n)
    }
}

/// Coverage of one equal-count slice of the samples ordered by `T`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CoverageBin {
    pub t_lo: Time,
    pub t_hi: Time,
    pub count: usize,
    pub covered: usize,
}

impl CoverageBin {
    pub fn fraction(&self) -> f64 {
        if self.count == 0 {
            1.0
        } else {
            self.covered as f64 / self.count as f64
        }
    }
}

/// The realized shift is actual − predicted = −D and must lie in [−η⁻, η⁺].
pub fn is_covered(d: Time, eta_minus: Time, eta_plus: Time) -> bool {
    -d >= -eta_minus && -d <= eta_plus
}

/// Pairs the model prediction for `stimulus` with the actual output
/// transitions and reports `D`, the derived η⁻ and the coverage.
///
/// Transitions are paired with the nearest unpaired actual transition of the
/// same edge within δ_min/2.
pub fn deviation_analysis(
    stimulus: &Signal,
    actual: &Signal,
    df: &DelayFunction,
    eta_plus: Time,
) -> Result<DeviationReport, WaveformError> {
    let eta_minus = eta_minus_for(df, eta_plus)?;
    if eta_minus < 0.0 {
        return Err(WaveformError::EtaBudgetInvalid {
            eta_plus,
            eta_minus,
        });
    }
    let window = df.delta_min()? / 2.0;
    let run = apply_channel(&ChannelSpec::Involution { df: df.clone() }, stimulus)?;

    let predicted: Vec<(Transition, Time)> = run
        .output
        .transitions()
        .iter()
        .map(|tr| {
            let big_t = run
                .log
                .iter()
                .find(|e| !e.canceled && e.value == tr.value && e.output_time() == tr.time)
                .and_then(|e| e.big_t)
                .unwrap_or(f64::INFINITY);
            (*tr, big_t)
        })
        .collect();

    let act = actual.transitions();
    let mut used = vec![false; act.len()];
    let mut samples = Vec::new();
    let mut unpaired_predicted = Vec::new();
    for (tr, big_t) in predicted {
        let best = act
            .iter()
            .enumerate()
            .filter(|(i, a)| !used[*i] && a.value == tr.value && (a.time - tr.time).abs() <= window)
            .min_by(|(_, a), (_, b)| {
                (a.time - tr.time)
                    .abs()
                    .total_cmp(&(b.time - tr.time).abs())
            });
        match best {
            Some((i, a)) => {
                used[i] = true;
                let d = tr.time - a.time;
                samples.push(DeviationSample {
                    edge: Edge::to_value(tr.value),
                    big_t,
                    d,
                    covered: is_covered(d, eta_minus, eta_plus),
                });
            }
            None => unpaired_predicted.push(tr),
        }
    }
    let unpaired_actual = act
        .iter()
        .zip(&used)
        .filter(|(_, u)| !**u)
        .map(|(a, _)| *a)
        .collect();
    let coverage = if samples.is_empty() {
        1.0
    } else {
        samples.iter().filter(|s| s.covered).count() as f64 / samples.len() as f64
    };
    Ok(DeviationReport {
        samples,
        eta_plus,
        eta_minus,
        coverage,
        unpaired_predicted,
        unpaired_actual,
    })
}

/// Splits samples into `n` equal-count bins by ascending finite `T`.
pub fn coverage_by_bins(samples: &[DeviationSample], n: usize) -> Vec<CoverageBin> {
    let mut s: Vec<&DeviationSample> = samples.iter().filter(|s| s.big_t.is_finite()).collect();
    s.sort_by(|a, b| a.big_t.total_cmp(&b.big_t));
    if n == 0 || s.is_empty() {
        return Vec::new();
    }
    (0..n)
        .filter_map(|k| {
            let lo = k * s.len() / n;
            let hi = (k + 1) * s.len() / n;
            let chunk = &s[lo..hi];
            Some(CoverageBin {
                t_lo: chunk.first()?.big_t,
                t_hi: chunk.last()?.big_t,
                count: chunk.len(),
                covered: chunk.iter().filter(|x| x.covered).count(),
            })
        })
        .collect()
}

/// Writes `edge,T,D,covered`.
pub fn write_deviation_csv<W: Write>(
    out: W,
    samples: &[DeviationSample],
) -> Result<(), WaveformError> {
    let mut w = csv::Writer::from_writer(out);
    for s in samples {
        w.serialize(s)?;
    }
    w.flush()?;
    Ok(())
}
