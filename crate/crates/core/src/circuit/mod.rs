//! Circuits of zero-time gates connected by channels, netlist parsing, and
//! the discrete-event execution engine.

mod engine;
mod netlist;
mod storage_loop;
mod verify;

use std::collections::HashMap;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::channel::ChannelSpec;

pub use engine::{
    commit_window, execute, execute_with, ChannelTrace, CommitRecord, EngineError, EventRecord,
    ExecuteOptions, Execution, RunRecord, DEFAULT_EVENT_BUDGET,
};
pub use netlist::{parse_circuit, parse_circuit_file, NetlistDocument};
pub use storage_loop::{storage_loop_circuit, StorageLoopNames};
pub use verify::{verify_execution, Mismatch, VerifyReport};

/// Boolean function of a gate.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum GateFunction {
    Not,
    Buf,
    Or,
    Nor,
    And,
    Nand,
    Xor,
    Const0,
    Const1,
}

impl GateFunction {
    pub fn parse(name: &str) -> Option<Self> {
        Some(match name.to_ascii_uppercase().as_str() {
            "NOT" => GateFunction::Not,
            "BUF" => GateFunction::Buf,
            "OR" => GateFunction::Or,
            "NOR" => GateFunction::Nor,
            "AND" => GateFunction::And,
            "NAND" => GateFunction::Nand,
            "XOR" => GateFunction::Xor,
            "CONST0" => GateFunction::Const0,
            "CONST1" => GateFunction::Const1,
            _ => return None,
        })
    }

    pub fn accepts_arity(self, arity: usize) -> bool {
        match self {
            GateFunction::Not | GateFunction::Buf => arity == 1,
            GateFunction::Const0 | GateFunction::Const1 => arity == 0,
            _ => arity >= 2,
        }
    }

    pub fn eval(self, inputs: &[bool]) -> bool {
        match self {
            GateFunction::Not => !inputs[0],
            GateFunction::Buf => inputs[0],
            GateFunction::Or => inputs.iter().any(|&b| b),
            GateFunction::Nor => !inputs.iter().any(|&b| b),
            GateFunction::And => inputs.iter().all(|&b| b),
            GateFunction::Nand => !inputs.iter().all(|&b| b),
            GateFunction::Xor => inputs.iter().filter(|&&b| b).count() % 2 == 1,
            GateFunction::Const0 => false,
            GateFunction::Const1 => true,
        }
    }
}

impl fmt::Display for GateFunction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = serde_json::to_value(self).ok();
        f.write_str(s.as_ref().and_then(|v| v.as_str()).unwrap_or("?"))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Gate {
    pub name: String,
    pub function: GateFunction,
    pub arity: usize,
    pub initial: bool,
}

/// Where a channel takes its input from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Source {
    Input(usize),
    Gate(usize),
}

/// Where a channel delivers its output.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Sink {
    Pin { gate: usize, pin: usize },
    Output(usize),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Channel {
    pub name: String,
    pub from: Source,
    pub to: Sink,
    pub spec: ChannelSpec,
}

/// Channel declaration with unresolved endpoint names: `from` names an
/// input port or gate, `to` names `gate.pin` or an output port.
#[derive(Debug, Clone, PartialEq)]
pub struct ChannelDecl {
    pub name: String,
    pub from: String,
    pub to: String,
    pub spec: ChannelSpec,
}

/// One structural problem found while validating a circuit.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Violation {
    #[error("duplicate name `{0}`")]
    DuplicateName(String),
    #[error("gate `{gate}`: unknown function `{function}`")]
    UnknownFunction { gate: String, function: String },
    #[error("gate `{gate}`: function {function} does not take {arity} inputs")]
    ArityMismatch {
        gate: String,
        function: GateFunction,
        arity: usize,
    },
    #[error("channel `{channel}`: unknown endpoint `{endpoint}`")]
    UnknownEndpoint { channel: String, endpoint: String },
    #[error("channel `{channel}`: {detail}")]
    AlternationViolation { channel: String, detail: String },
    #[error("channel `{channel}`: gate `{gate}` has no input pin {pin}")]
    PinOutOfRange {
        channel: String,
        gate: String,
        pin: usize,
    },
    #[error("`{sink}` is driven by several channels: {}", .channels.join(", "))]
    MultipleDrivers { sink: String, channels: Vec<String> },
    #[error("`{0}` is not driven by any channel")]
    DanglingPin(String),
    #[error("channel `{channel}`: {detail}")]
    InvalidChannel { channel: String, detail: String },
}

#[derive(Debug, thiserror::Error)]
pub enum CircuitError {
    #[error("netlist is not valid JSON for the schema: {0}")]
    Parse(#[from] serde_json::Error),
    #[error("cannot read {path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
    #[error("circuit has {} problem(s):\n{}", .0.len(), .0.iter().map(|v| format!("  - {v}")).collect::<Vec<_>>().join("\n"))]
    Invalid(Vec<Violation>),
}

impl CircuitError {
    pub fn violations(&self) -> &[Violation] {
        match self {
            CircuitError::Invalid(v) => v,
            _ => &[],
        }
    }
}

/// A validated circuit.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Circuit {
    inputs: Vec<String>,
    outputs: Vec<String>,
    gates: Vec<Gate>,
    channels: Vec<Channel>,
    /// Driving channel per gate input pin.
    #[serde(skip)]
    pin_drivers: Vec<Vec<usize>>,
    #[serde(skip)]
    output_drivers: Vec<usize>,
    #[serde(skip)]
    fanout: Vec<Vec<usize>>,
    #[serde(skip)]
    input_fanout: Vec<Vec<usize>>,
}

impl Circuit {
    /// Validates a circuit description, collecting every violation.
    pub fn new(
        inputs: Vec<String>,
        outputs: Vec<String>,
        gates: Vec<Gate>,
        channels: Vec<ChannelDecl>,
    ) -> Result<Self, CircuitError> {
        let mut v = Vec::new();
        let mut names: HashMap<&str, ()> = HashMap::new();
        for n in inputs
            .iter()
            .chain(&outputs)
            .chain(gates.iter().map(|g| &g.name))
            .chain(channels.iter().map(|c| &c.name))
        {
            if names.insert(n.as_str(), ()).is_some() {
                v.push(Violation::DuplicateName(n.clone()));
            }
        }
        for g in &gates {
            if !g.function.accepts_arity(g.arity) {
                v.push(Violation::ArityMismatch {
                    gate: g.name.clone(),
                    function: g.function,
                    arity: g.arity,
                });
            }
        }
        let input_ix: HashMap<&str, usize> = inputs
            .iter()
            .enumerate()
            .map(|(i, n)| (n.as_str(), i))
            .collect();
        let output_ix: HashMap<&str, usize> = outputs
            .iter()
            .enumerate()
            .map(|(i, n)| (n.as_str(), i))
            .collect();
        let gate_ix: HashMap<&str, usize> = gates
            .iter()
            .enumerate()
            .map(|(i, g)| (g.name.as_str(), i))
            .collect();

        let mut resolved = Vec::with_capacity(channels.len());
        for c in &channels {
            let from = if let Some(&i) = input_ix.get(c.from.as_str()) {
                Some(Source::Input(i))
            } else if let Some(&g) = gate_ix.get(c.from.as_str()) {
                Some(Source::Gate(g))
            } else if output_ix.contains_key(c.from.as_str()) {
                v.push(Violation::AlternationViolation {
                    channel: c.name.clone(),
                    detail: format!("cannot start at output port `{}`", c.from),
                });
                None
            } else if split_pin(&c.from).is_some_and(|(g, _)| gate_ix.contains_key(g)) {
                v.push(Violation::AlternationViolation {
                    channel: c.name.clone(),
                    detail: format!("cannot start at gate input pin `{}`", c.from),
                });
                None
            } else {
                v.push(Violation::UnknownEndpoint {
                    channel: c.name.clone(),
                    endpoint: c.from.clone(),
                });
                None
            };
            let to = if let Some(&o) = output_ix.get(c.to.as_str()) {
                Some(Sink::Output(o))
            } else if let Some((g, pin)) =
                split_pin(&c.to).and_then(|(g, p)| Some((*gate_ix.get(g)?, p)))
            {
                match pin {
                    Some(pin) if pin < gates[g].arity => Some(Sink::Pin { gate: g, pin }),
                    _ => {
                        v.push(Violation::PinOutOfRange {
                            channel: c.name.clone(),
                            gate: gates[g].name.clone(),
                            pin: pin.unwrap_or(usize::MAX),
                        });
                        None
                    }
                }
            } else if input_ix.contains_key(c.to.as_str()) {
                v.push(Violation::AlternationViolation {
                    channel: c.name.clone(),
                    detail: format!("cannot end at input port `{}`", c.to),
                });
                None
            } else if gate_ix.contains_key(c.to.as_str()) {
                v.push(Violation::AlternationViolation {
                    channel: c.name.clone(),
                    detail: format!(
                        "must end at an input pin of gate `{}` (use `{}.<pin>`)",
                        c.to, c.to
                    ),
                });
                None
            } else {
                v.push(Violation::UnknownEndpoint {
                    channel: c.name.clone(),
                    endpoint: c.to.clone(),
                });
                None
            };
            let port_adjacent =
                matches!(from, Some(Source::Input(_))) || matches!(to, Some(Sink::Output(_)));
            if let Err(e) = c.spec.validate_with(port_adjacent) {
                v.push(Violation::InvalidChannel {
                    channel: c.name.clone(),
                    detail: e.to_string(),
                });
            }
            if let ChannelSpec::Inertial { d, window } = c.spec {
                if window > d {
                    v.push(Violation::InvalidChannel {
                        channel: c.name.clone(),
                        detail: format!("inertial window {window} exceeds delay {d}; the engine cannot decide such transitions causally"),
                    });
                }
            }
            if let (Some(from), Some(to)) = (from, to) {
                resolved.push(Channel {
                    name: c.name.clone(),
                    from,
                    to,
                    spec: c.spec.clone(),
                });
            }
        }

        let mut pin_drivers: Vec<Vec<Vec<usize>>> =
            gates.iter().map(|g| vec![Vec::new(); g.arity]).collect();
        let mut output_drivers: Vec<Vec<usize>> = vec![Vec::new(); outputs.len()];
        for (ci, c) in resolved.iter().enumerate() {
            match c.to {
                Sink::Pin { gate, pin } => pin_drivers[gate][pin].push(ci),
                Sink::Output(o) => output_drivers[o].push(ci),
            }
        }
        let chan_names = |ix: &[usize]| {
            ix.iter()
                .map(|&i| resolved[i].name.clone())
                .collect::<Vec<_>>()
        };
        for (g, pins) in pin_drivers.iter().enumerate() {
            for (p, d) in pins.iter().enumerate() {
                let sink = format!("{}.{}", gates[g].name, p);
                match d.len() {
                    0 => v.push(Violation::DanglingPin(sink)),
                    1 => {}
                    _ => v.push(Violation::MultipleDrivers {
                        sink,
                        channels: chan_names(d),
                    }),
                }
            }
        }
        for (o, d) in output_drivers.iter().enumerate() {
            match d.len() {
                0 => v.push(Violation::DanglingPin(outputs[o].clone())),
                1 => {}
                _ => v.push(Violation::MultipleDrivers {
                    sink: outputs[o].clone(),
                    channels: chan_names(d),
                }),
            }
        }
        if !v.is_empty() {
            return Err(CircuitError::Invalid(v));
        }
        let mut c = Circuit {
            inputs,
            outputs,
            gates,
            channels: resolved,
            pin_drivers: Vec::new(),
            output_drivers: Vec::new(),
            fanout: Vec::new(),
            input_fanout: Vec::new(),
        };
        c.index();
        Ok(c)
    }

    fn index(&mut self) {
        self.pin_drivers = self
            .gates
            .iter()
            .map(|g| vec![usize::MAX; g.arity])
            .collect();
        self.output_drivers = vec![usize::MAX; self.outputs.len()];
        self.fanout = vec![Vec::new(); self.gates.len()];
        self.input_fanout = vec![Vec::new(); self.inputs.len()];
        for (ci, c) in self.channels.iter().enumerate() {
            match c.to {
                Sink::Pin { gate, pin } => self.pin_drivers[gate][pin] = ci,
                Sink::Output(o) => self.output_drivers[o] = ci,
            }
            match c.from {
                Source::Input(i) => self.input_fanout[i].push(ci),
                Source::Gate(g) => self.fanout[g].push(ci),
            }
        }
    }

    pub fn inputs(&self) -> &[String] {
        &self.inputs
    }

    pub fn outputs(&self) -> &[String] {
        &self.outputs
    }

    pub fn gates(&self) -> &[Gate] {
        &self.gates
    }

    pub fn channels(&self) -> &[Channel] {
        &self.channels
    }

    pub fn channel_index(&self, name: &str) -> Option<usize> {
        self.channels.iter().position(|c| c.name == name)
    }

    pub fn gate_index(&self, name: &str) -> Option<usize> {
        self.gates.iter().position(|g| g.name == name)
    }

    /// Channel driving input `pin` of gate `gate`.
    pub fn pin_driver(&self, gate: usize, pin: usize) -> usize {
        self.pin_drivers[gate][pin]
    }

    pub fn output_driver(&self, output: usize) -> usize {
        self.output_drivers[output]
    }

    pub fn gate_fanout(&self, gate: usize) -> &[usize] {
        &self.fanout[gate]
    }

    pub fn input_fanout(&self, input: usize) -> &[usize] {
        &self.input_fanout[input]
    }

    pub fn source_name(&self, s: Source) -> &str {
        match s {
            Source::Input(i) => &self.inputs[i],
            Source::Gate(g) => &self.gates[g].name,
        }
    }

    pub fn sink_name(&self, s: Sink) -> String {
        match s {
            Sink::Pin { gate, pin } => format!("{}.{}", self.gates[gate].name, pin),
            Sink::Output(o) => self.outputs[o].clone(),
        }
    }

    /// Replaces the delay model of channel `index`, revalidating it.
    pub fn with_channel_spec(
        &self,
        index: usize,
        spec: ChannelSpec,
    ) -> Result<Circuit, CircuitError> {
        let mut decls = self.decls();
        decls[index].spec = spec;
        Circuit::new(
            self.inputs.clone(),
            self.outputs.clone(),
            self.gates.clone(),
            decls,
        )
    }

    pub fn decls(&self) -> Vec<ChannelDecl> {
        self.channels
            .iter()
            .map(|c| ChannelDecl {
                name: c.name.clone(),
                from: self.source_name(c.from).to_string(),
                to: self.sink_name(c.to),
                spec: c.spec.clone(),
            })
            .collect()
    }

    /// True when no path through gates and channels closes a loop.
    pub fn is_acyclic(&self) -> bool {
        self.topological_gates().is_some()
    }

    /// Gate indices in dependency order, or `None` for cyclic circuits.
    pub fn topological_gates(&self) -> Option<Vec<usize>> {
        let n = self.gates.len();
        let mut indeg = vec![0usize; n];
        for c in &self.channels {
            if let (Source::Gate(_), Sink::Pin { gate, .. }) = (c.from, c.to) {
                indeg[gate] += 1;
            }
        }
        let mut ready: Vec<usize> = (0..n).filter(|&g| indeg[g] == 0).collect();
        let mut order = Vec::with_capacity(n);
        while let Some(g) = ready.pop() {
            order.push(g);
            for &ci in &self.fanout[g] {
                if let Sink::Pin { gate, .. } = self.channels[ci].to {
                    indeg[gate] -= 1;
                    if indeg[gate] == 0 {
                        ready.push(gate);
                    }
                }
            }
        }
        (order.len() == n).then_some(order)
    }
}

fn split_pin(s: &str) -> Option<(&str, Option<usize>)> {
    let (g, p) = s.rsplit_once('.')?;
    Some((g, p.parse().ok()))
}
