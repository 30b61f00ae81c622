use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::{ChannelDecl, Circuit, CircuitError, Gate, GateFunction, Sink, Source, Violation};
use crate::channel::{read_eta_sequence, AdversaryStrategy, ChannelSpec, EtaBounds};
use crate::delay_model::{load_delay_table, DelayFunction, ExpChannelParams, HyperbolicDelay};
use crate::Time;

/// JSON netlist document. See `docs/netlist-schema.md`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NetlistDocument {
    pub ports: Vec<PortDoc>,
    #[serde(default)]
    pub gates: Vec<GateDoc>,
    pub channels: Vec<ChannelDoc>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Direction {
    Input,
    Output,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PortDoc {
    pub name: String,
    pub direction: Direction,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GateDoc {
    pub name: String,
    pub function: String,
    pub arity: usize,
    #[serde(default)]
    pub initial: Bit,
}

/// A bit written as `0`/`1` or `false`/`true`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct Bit(pub bool);

impl Serialize for Bit {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_u8(self.0 as u8)
    }
}

impl<'de> Deserialize<'de> for Bit {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Raw {
            B(bool),
            N(u64),
        }
        match Raw::deserialize(d)? {
            Raw::B(b) => Ok(Bit(b)),
            Raw::N(0) => Ok(Bit(false)),
            Raw::N(1) => Ok(Bit(true)),
            Raw::N(n) => Err(serde::de::Error::custom(format!(
                "bit must be 0 or 1, got {n}"
            ))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum KindDoc {
    Pure,
    Inertial,
    Involution,
    EtaInvolution,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ChannelDoc {
    pub name: String,
    pub from: String,
    pub to: String,
    pub kind: KindDoc,
    #[serde(default)]
    pub params: ParamsDoc,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub eta: Option<EtaDoc>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub strategy: Option<StrategyDoc>,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ParamsDoc {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub d: Option<Time>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub window: Option<Time>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub exp: Option<ExpDoc>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub table: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub closed_form: Option<ClosedFormDoc>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExpDoc {
    pub tau: Time,
    pub t_p: Time,
    pub vth: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ClosedFormDoc {
    pub a: Time,
    pub c: Time,
    pub d: Time,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EtaDoc {
    pub plus: Time,
    pub minus: Time,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StrategyDoc {
    pub variant: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub file: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub values: Option<Vec<Time>>,
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    pub strict: bool,
}

/// Parses and validates a JSON netlist. Relative file references resolve
/// against `base_dir` when given.
pub fn parse_circuit(document: &str, base_dir: Option<&Path>) -> Result<Circuit, CircuitError> {
    let doc: NetlistDocument = serde_json::from_str(document)?;
    doc.into_circuit(base_dir)
}

pub fn parse_circuit_file(path: &Path) -> Result<Circuit, CircuitError> {
    let text = std::fs::read_to_string(path).map_err(|source| CircuitError::Io {
        path: path.display().to_string(),
        source,
    })?;
    parse_circuit(&text, path.parent())
}

impl NetlistDocument {
    pub fn into_circuit(self, base_dir: Option<&Path>) -> Result<Circuit, CircuitError> {
        let mut pre = Vec::new();
        let mut inputs = Vec::new();
        let mut outputs = Vec::new();
        for p in self.ports {
            match p.direction {
                Direction::Input => inputs.push(p.name),
                Direction::Output => outputs.push(p.name),
            }
        }
        let gates = self
            .gates
            .into_iter()
            .map(|g| {
                let function = GateFunction::parse(&g.function).unwrap_or_else(|| {
                    pre.push(Violation::UnknownFunction {
                        gate: g.name.clone(),
                        function: g.function.clone(),
                    });
                    match g.arity {
                        0 => GateFunction::Const0,
                        1 => GateFunction::Buf,
                        _ => GateFunction::Or,
                    }
                });
                Gate {
                    name: g.name,
                    function,
                    arity: g.arity,
                    initial: g.initial.0,
                }
            })
            .collect();
        let channels = self
            .channels
            .into_iter()
            .map(|c| {
                let spec = channel_spec(&c, base_dir).unwrap_or_else(|detail| {
                    pre.push(Violation::InvalidChannel {
                        channel: c.name.clone(),
                        detail,
                    });
                    ChannelSpec::Pure { d: 1.0 }
                });
                ChannelDecl {
                    name: c.name,
                    from: c.from,
                    to: c.to,
                    spec,
                }
            })
            .collect();
        match Circuit::new(inputs, outputs, gates, channels) {
            Ok(c) if pre.is_empty() => Ok(c),
            Ok(_) => Err(CircuitError::Invalid(pre)),
            Err(CircuitError::Invalid(v)) => {
                pre.extend(v);
                Err(CircuitError::Invalid(pre))
            }
            Err(e) => Err(e),
        }
    }

    /// Netlist describing `circuit`. Tabulated delay functions have no file to
    /// point at, so circuits using them yield `None`.
    pub fn from_circuit(circuit: &Circuit) -> Option<Self> {
        let mut ports: Vec<PortDoc> = circuit
            .inputs()
            .iter()
            .map(|n| PortDoc {
                name: n.clone(),
                direction: Direction::Input,
            })
            .collect();
        ports.extend(circuit.outputs().iter().map(|n| PortDoc {
            name: n.clone(),
            direction: Direction::Output,
        }));
        let gates = circuit
            .gates()
            .iter()
            .map(|g| GateDoc {
                name: g.name.clone(),
                function: g.function.to_string(),
                arity: g.arity,
                initial: Bit(g.initial),
            })
            .collect();
        let mut channels = Vec::new();
        for c in circuit.channels() {
            let from = match c.from {
                Source::Input(_) | Source::Gate(_) => circuit.source_name(c.from).to_string(),
            };
            let to = match c.to {
                Sink::Pin { .. } | Sink::Output(_) => circuit.sink_name(c.to),
            };
            let mut doc = ChannelDoc {
                name: c.name.clone(),
                from,
                to,
                kind: KindDoc::Pure,
                params: ParamsDoc::default(),
                eta: None,
                strategy: None,
            };
            match &c.spec {
                ChannelSpec::Pure { d } => doc.params.d = Some(*d),
                ChannelSpec::Inertial { d, window } => {
                    doc.kind = KindDoc::Inertial;
                    doc.params.d = Some(*d);
                    doc.params.window = Some(*window);
                }
                ChannelSpec::Involution { df } => {
                    doc.kind = KindDoc::Involution;
                    df_params(df, &mut doc.params)?;
                }
                ChannelSpec::EtaInvolution {
                    df,
                    bounds,
                    strategy,
                } => {
                    doc.kind = KindDoc::EtaInvolution;
                    df_params(df, &mut doc.params)?;
                    doc.eta = Some(EtaDoc {
                        plus: bounds.eta_plus,
                        minus: bounds.eta_minus,
                    });
                    doc.strategy = Some(strategy_doc(strategy));
                }
            }
            channels.push(doc);
        }
        Some(NetlistDocument {
            ports,
            gates,
            channels,
        })
    }
}

fn df_params(df: &DelayFunction, p: &mut ParamsDoc) -> Option<()> {
    match df {
        DelayFunction::Exp(e) => {
            p.exp = Some(ExpDoc {
                tau: e.tau,
                t_p: e.t_p,
                vth: e.vth,
            })
        }
        DelayFunction::Hyperbolic(h) => {
            p.closed_form = Some(ClosedFormDoc {
                a: h.a,
                c: h.c,
                d: h.d,
            })
        }
        DelayFunction::Tabulated(_) => return None,
    }
    Some(())
}

fn strategy_doc(s: &AdversaryStrategy) -> StrategyDoc {
    let mut doc = StrategyDoc {
        variant: s.name().into(),
        seed: s.seed(),
        file: None,
        values: None,
        strict: false,
    };
    if let AdversaryStrategy::FixedSequence { values, strict } = s {
        doc.values = Some(values.clone());
        doc.strict = *strict;
    }
    doc
}

fn resolve(base: Option<&Path>, file: &str) -> PathBuf {
    match base {
        Some(b) if Path::new(file).is_relative() => b.join(file),
        _ => PathBuf::from(file),
    }
}

fn channel_spec(c: &ChannelDoc, base: Option<&Path>) -> Result<ChannelSpec, String> {
    let p = &c.params;
    let unexpected = |what: &str| Err(format!("`{what}` is not used by kind {:?}", c.kind));
    match c.kind {
        KindDoc::Pure | KindDoc::Inertial => {
            if p.exp.is_some() || p.table.is_some() || p.closed_form.is_some() {
                return unexpected("delay function parameters");
            }
            if c.eta.is_some() || c.strategy.is_some() {
                return unexpected("eta/strategy");
            }
            let d = p.d.ok_or("missing params.d")?;
            if c.kind == KindDoc::Pure {
                if p.window.is_some() {
                    return unexpected("params.window");
                }
                Ok(ChannelSpec::Pure { d })
            } else {
                let window = p.window.ok_or("missing params.window")?;
                Ok(ChannelSpec::Inertial { d, window })
            }
        }
        KindDoc::Involution | KindDoc::EtaInvolution => {
            if p.d.is_some() || p.window.is_some() {
                return unexpected("params.d/params.window");
            }
            let df =
                match (&p.exp, &p.table, &p.closed_form) {
                    (Some(e), None, None) => DelayFunction::Exp(
                        ExpChannelParams::new(e.tau, e.t_p, e.vth).map_err(|e| e.to_string())?,
                    ),
                    (None, Some(t), None) => load_delay_table(&resolve(base, t))
                        .map_err(|e| format!("table `{t}`: {e}"))?,
                    (None, None, Some(h)) => DelayFunction::Hyperbolic(
                        HyperbolicDelay::new(h.a, h.c, h.d).map_err(|e| e.to_string())?,
                    ),
                    _ => return Err(
                        "exactly one of params.exp, params.table, params.closed_form is required"
                            .into(),
                    ),
                };
            if c.kind == KindDoc::Involution {
                if c.eta.is_some() || c.strategy.is_some() {
                    return unexpected("eta/strategy");
                }
                return Ok(ChannelSpec::Involution { df });
            }
            let eta = c.eta.ok_or("missing eta bounds")?;
            let bounds = EtaBounds::new(eta.minus, eta.plus).map_err(|e| e.to_string())?;
            let strategy = match &c.strategy {
                None => AdversaryStrategy::Zero,
                Some(s) => strategy_from_doc(s, base)?,
            };
            Ok(ChannelSpec::EtaInvolution {
                df,
                bounds,
                strategy,
            })
        }
    }
}

fn strategy_from_doc(s: &StrategyDoc, base: Option<&Path>) -> Result<AdversaryStrategy, String> {
    let only = |ok: bool, v: &str| {
        if ok {
            Ok(())
        } else {
            Err(format!("strategy `{v}` takes no seed/file/values/strict"))
        }
    };
    match s.variant.as_str() {
        "zero" => only(
            s.seed.is_none() && s.file.is_none() && s.values.is_none() && !s.strict,
            "zero",
        )
        .map(|_| AdversaryStrategy::Zero),
        "worst_case_shrink" => only(
            s.seed.is_none() && s.file.is_none() && s.values.is_none() && !s.strict,
            "worst_case_shrink",
        )
        .map(|_| AdversaryStrategy::WorstCaseShrink),
        "uniform_random" => {
            if s.file.is_some() || s.values.is_some() || s.strict {
                return Err("uniform_random takes only `seed`".into());
            }
            Ok(AdversaryStrategy::UniformRandom {
                seed: s.seed.ok_or("uniform_random needs `seed`")?,
            })
        }
        "fixed_sequence" => {
            if s.seed.is_some() {
                return Err("fixed_sequence takes no seed".into());
            }
            let values = match (&s.values, &s.file) {
                (Some(v), None) => v.clone(),
                (None, Some(f)) => {
                    let path = resolve(base, f);
                    let file =
                        std::fs::File::open(&path).map_err(|e| format!("eta file `{f}`: {e}"))?;
                    read_eta_sequence(file).map_err(|e| format!("eta file `{f}`: {e}"))?
                }
                _ => return Err("fixed_sequence needs exactly one of `values` or `file`".into()),
            };
            Ok(AdversaryStrategy::FixedSequence {
                values,
                strict: s.strict,
            })
        }
        other => Err(format!("unknown strategy variant `{other}`")),
    }
}
