//! Value types parsed from the command line.

use std::fmt;
use std::path::PathBuf;
use std::str::FromStr;

use clap::ValueEnum;
use involution_core::delay_model::{
    exp_channel, load_delay_table, DelayFunction, ExpChannelParams, HyperbolicDelay,
};
use involution_core::AdversaryStrategy;
use serde::{Deserialize, Serialize};

use crate::error::CliError;
use crate::manifest::{absolute, RunManifest};

/// `exp:TAU,T_P,VTH`, `hyperbolic:A,C,D` or `table:PATH`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum DelaySpec {
    Exp { tau: f64, t_p: f64, vth: f64 },
    Hyperbolic { a: f64, c: f64, d: f64 },
    Table { path: PathBuf },
}

fn three(kind: &str, body: &str) -> Result<[f64; 3], String> {
    let v: Vec<f64> = body
        .split(',')
        .map(|s| {
            s.trim()
                .parse::<f64>()
                .map_err(|e| format!("{kind}: `{s}`: {e}"))
        })
        .collect::<Result<_, _>>()?;
    v.try_into().map_err(|v: Vec<f64>| {
        format!(
            "{kind} takes three comma-separated numbers, got {}",
            v.len()
        )
    })
}

impl FromStr for DelaySpec {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        let (kind, body) = s
            .split_once(':')
            .ok_or_else(|| format!("expected KIND:VALUES, got `{s}`"))?;
        match kind {
            "exp" => {
                let [tau, t_p, vth] = three(kind, body)?;
                Ok(DelaySpec::Exp { tau, t_p, vth })
            }
            "hyperbolic" => {
                let [a, c, d] = three(kind, body)?;
                Ok(DelaySpec::Hyperbolic { a, c, d })
            }
            "table" if !body.is_empty() => Ok(DelaySpec::Table { path: body.into() }),
            _ => Err(format!(
                "unknown delay kind `{kind}` (exp, hyperbolic, table)"
            )),
        }
    }
}

impl fmt::Display for DelaySpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            DelaySpec::Exp { tau, t_p, vth } => write!(f, "exp:{tau},{t_p},{vth}"),
            DelaySpec::Hyperbolic { a, c, d } => write!(f, "hyperbolic:{a},{c},{d}"),
            DelaySpec::Table { path } => write!(f, "table:{}", path.display()),
        }
    }
}

impl DelaySpec {
    /// Table paths become absolute so a manifest can be replayed elsewhere.
    pub fn absolutized(&self) -> Result<Self, CliError> {
        Ok(match self {
            DelaySpec::Table { path } => DelaySpec::Table {
                path: absolute(path)?,
            },
            other => other.clone(),
        })
    }

    pub fn build(&self, manifest: &mut RunManifest) -> Result<DelayFunction, CliError> {
        match self {
            DelaySpec::Exp { tau, t_p, vth } => {
                Ok(exp_channel(ExpChannelParams::new(*tau, *t_p, *vth)?)?)
            }
            DelaySpec::Hyperbolic { a, c, d } => {
                Ok(DelayFunction::Hyperbolic(HyperbolicDelay::new(*a, *c, *d)?))
            }
            DelaySpec::Table { path } => {
                manifest.read_input(path)?;
                Ok(load_delay_table(path)?)
            }
        }
    }

    pub fn exp_params(&self) -> Option<ExpChannelParams> {
        match self {
            DelaySpec::Exp { tau, t_p, vth } => Some(ExpChannelParams {
                tau: *tau,
                t_p: *t_p,
                vth: *vth,
            }),
            _ => None,
        }
    }
}

/// `LO:STEP:HI` (inclusive) or a comma-separated list.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Grid(pub Vec<f64>);

impl FromStr for Grid {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        let num = |x: &str| x.trim().parse::<f64>().map_err(|e| format!("`{x}`: {e}"));
        let parts: Vec<&str> = s.split(':').collect();
        let values = match parts.as_slice() {
            [lo, step, hi] => {
                let (lo, step, hi) = (num(lo)?, num(step)?, num(hi)?);
                if !(step > 0.0 && hi >= lo && lo.is_finite() && hi.is_finite()) {
                    return Err(format!("grid `{s}` needs STEP > 0 and HI >= LO"));
                }
                let n = ((hi - lo) / step + 1e-9).floor() as usize;
                (0..=n).map(|k| lo + step * k as f64).collect()
            }
            [list] => list.split(',').map(num).collect::<Result<Vec<_>, _>>()?,
            _ => return Err(format!("grid `{s}` is neither LO:STEP:HI nor a list")),
        };
        if values.is_empty() || values.iter().any(|v| !v.is_finite()) {
            return Err(format!("grid `{s}` is empty or not finite"));
        }
        Ok(Grid(values))
    }
}

impl fmt::Display for Grid {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s: Vec<String> = self.0.iter().map(|v| v.to_string()).collect();
        f.write_str(&s.join(","))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StrategyName {
    #[value(name = "zero")]
    Zero,
    #[value(name = "worst_case_shrink")]
    WorstCaseShrink,
    #[value(name = "uniform_random")]
    UniformRandom,
}

/// One strategy per deterministic name, `runs` seeds from `seed` on for
/// uniform_random.
pub fn expand_strategies(names: &[StrategyName], seed: u64, runs: usize) -> Vec<AdversaryStrategy> {
    let mut out = Vec::new();
    for n in names {
        match n {
            StrategyName::Zero => out.push(AdversaryStrategy::Zero),
            StrategyName::WorstCaseShrink => out.push(AdversaryStrategy::WorstCaseShrink),
            StrategyName::UniformRandom => {
                out.extend((0..runs as u64).map(|k| AdversaryStrategy::UniformRandom {
                    seed: seed.wrapping_add(k),
                }))
            }
        }
    }
    out
}
