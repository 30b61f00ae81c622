use std::io::{Read, Write};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::ChannelError;
use crate::delay_model::Edge;
use crate::scalar::Real;
use crate::Time;

/// Admissible perturbation interval [−η⁻, η⁺].
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct EtaBounds<T = f64> {
    pub eta_minus: T,
    pub eta_plus: T,
}

impl<T: Real> EtaBounds<T> {
    pub fn new(eta_minus: T, eta_plus: T) -> Result<Self, ChannelError> {
        let b = Self {
            eta_minus,
            eta_plus,
        };
        b.validate()?;
        Ok(b)
    }

    pub fn zero() -> Self {
        Self {
            eta_minus: T::zero(),
            eta_plus: T::zero(),
        }
    }

    pub fn validate(&self) -> Result<(), ChannelError> {
        let ok = |x: T| x >= T::zero() && x.is_finite();
        if ok(self.eta_minus) && ok(self.eta_plus) {
            Ok(())
        } else {
            Err(ChannelError::InvalidSpec(format!(
                "eta bounds must be finite and non-negative (got minus={}, plus={})",
                self.eta_minus, self.eta_plus
            )))
        }
    }

    pub fn contains(&self, eta: T) -> bool {
        eta >= -self.eta_minus && eta <= self.eta_plus
    }

    pub fn map_scalar<U: Real>(&self) -> EtaBounds<U> {
        EtaBounds {
            eta_minus: U::lit(self.eta_minus.to_f64_lossy()),
            eta_plus: U::lit(self.eta_plus.to_f64_lossy()),
        }
    }
}

/// Adversary choosing the perturbation of each input transition.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "variant", rename_all = "snake_case")]
pub enum AdversaryStrategy {
    Zero,
    WorstCaseShrink,
    UniformRandom {
        seed: u64,
    },
    FixedSequence {
        values: Vec<Time>,
        #[serde(default)]
        strict: bool,
    },
}

impl AdversaryStrategy {
    pub fn name(&self) -> &'static str {
        match self {
            AdversaryStrategy::Zero => "zero",
            AdversaryStrategy::WorstCaseShrink => "worst_case_shrink",
            AdversaryStrategy::UniformRandom { .. } => "uniform_random",
            AdversaryStrategy::FixedSequence { .. } => "fixed_sequence",
        }
    }

    pub fn seed(&self) -> Option<u64> {
        match self {
            AdversaryStrategy::UniformRandom { seed } => Some(*seed),
            _ => None,
        }
    }
}

/// Rising edges η⁺ late, falling edges η⁻ early.
pub fn worst_case_eta<T: Real>(edge: Edge, bounds: EtaBounds<T>) -> T {
    match edge {
        Edge::Rising => bounds.eta_plus,
        Edge::Falling => -bounds.eta_minus,
    }
}

/// Running instance of a strategy. Not meant to be shared between runs.
#[derive(Debug, Clone)]
pub struct EtaSource {
    bounds: EtaBounds,
    kind: SourceKind,
    drawn: usize,
}

#[derive(Debug, Clone)]
enum SourceKind {
    Zero,
    Worst,
    Random(Box<ChaCha8Rng>),
    Fixed { values: Vec<Time>, strict: bool },
}

impl EtaSource {
    pub fn new(strategy: &AdversaryStrategy, bounds: EtaBounds) -> Result<Self, ChannelError> {
        bounds.validate()?;
        let kind = match strategy {
            AdversaryStrategy::Zero => SourceKind::Zero,
            AdversaryStrategy::WorstCaseShrink => SourceKind::Worst,
            AdversaryStrategy::UniformRandom { seed } => {
                SourceKind::Random(Box::new(ChaCha8Rng::seed_from_u64(*seed)))
            }
            AdversaryStrategy::FixedSequence { values, strict } => {
                if let Some((index, &eta)) = values
                    .iter()
                    .enumerate()
                    .find(|(_, &v)| !bounds.contains(v))
                {
                    return Err(ChannelError::EtaOutOfBounds { index, eta, bounds });
                }
                SourceKind::Fixed {
                    values: values.clone(),
                    strict: *strict,
                }
            }
        };
        Ok(Self {
            bounds,
            kind,
            drawn: 0,
        })
    }

    pub fn bounds(&self) -> EtaBounds {
        self.bounds
    }

    /// Number of values produced so far.
    pub fn drawn(&self) -> usize {
        self.drawn
    }

    /// Perturbation for the next input transition, which has direction `edge`.
    pub fn next_eta(&mut self, edge: Edge) -> Result<Time, ChannelError> {
        let index = self.drawn;
        let eta = match &mut self.kind {
            SourceKind::Zero => 0.0,
            SourceKind::Worst => worst_case_eta(edge, self.bounds),
            SourceKind::Random(rng) => {
                let (lo, hi) = (-self.bounds.eta_minus, self.bounds.eta_plus);
                if lo < hi {
                    rng.gen_range(lo..=hi)
                } else {
                    0.0
                }
            }
            SourceKind::Fixed { values, strict } => match values.get(index) {
                Some(&v) => v,
                None if *strict => return Err(ChannelError::StrategyExhausted { index }),
                None => 0.0,
            },
        };
        self.drawn += 1;
        Ok(eta)
    }
}

#[derive(Debug, Deserialize)]
struct EtaRow {
    n: usize,
    eta: Time,
}

/// Reads an `n,eta` CSV; indices must be consecutive, starting at 0 or 1.
pub fn read_eta_sequence<R: Read>(input: R) -> Result<Vec<Time>, ChannelError> {
    let mut rdr = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_reader(input);
    let bad = |msg: String| ChannelError::EtaFile(msg);
    let headers = rdr.headers().map_err(|e| bad(e.to_string()))?;
    if headers.iter().collect::<Vec<_>>() != ["n", "eta"] {
        return Err(bad("expected header `n,eta`".into()));
    }
    let mut out = Vec::new();
    let mut expect: Option<usize> = None;
    for row in rdr.deserialize::<EtaRow>() {
        let row = row.map_err(|e| bad(e.to_string()))?;
        let want = expect.unwrap_or(if row.n == 0 { 0 } else { 1 });
        if row.n != want {
            return Err(bad(format!("expected index {want}, found {}", row.n)));
        }
        if !row.eta.is_finite() {
            return Err(bad(format!("non-finite eta at index {}", row.n)));
        }
        out.push(row.eta);
        expect = Some(want + 1);
    }
    Ok(out)
}

/// Writes an `n,eta` CSV with 1-based indices.
pub fn write_eta_sequence<W: Write>(out: W, values: &[Time]) -> Result<(), ChannelError> {
    let mut w = csv::Writer::from_writer(out);
    let err = |e: csv::Error| ChannelError::EtaFile(e.to_string());
    w.write_record(["n", "eta"]).map_err(err)?;
    for (i, v) in values.iter().enumerate() {
        w.write_record([(i + 1).to_string(), format!("{v}")])
            .map_err(err)?;
    }
    w.flush().map_err(|e| ChannelError::EtaFile(e.to_string()))
}
