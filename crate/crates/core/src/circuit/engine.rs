use std::cmp::Ordering;
use std::collections::{BTreeMap, BinaryHeap, VecDeque};
use std::io::Write;

use serde::{Deserialize, Serialize};

use super::{Circuit, Sink, Source};
use crate::channel::{
    AdversaryStrategy, ChannelError, ChannelSpec, ChannelState, Emission, EtaBounds, LogEntry,
};
use crate::delay_model::{DelayFunction, Edge};
use crate::rootfind::Bisection;
use crate::signals::{write_traces, Signal, TraceError, Transition};
use crate::Time;

pub const DEFAULT_EVENT_BUDGET: usize = 1_000_000;
const EVENT_TAIL: usize = 100;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EventRecord {
    pub time: Time,
    pub what: String,
}

#[derive(Debug, thiserror::Error)]
pub enum EngineError {
    #[error("no signal given for input port `{0}`")]
    MissingInput(String),
    #[error("signal given for unknown input port `{0}`")]
    UnknownInput(String),
    #[error("strategy given for `{0}`, which is not an eta-involution channel of the circuit")]
    UnknownChannel(String),
    #[error("horizon must be positive and finite, got {0}")]
    InvalidHorizon(Time),
    #[error("channel `{channel}`: {source}")]
    Channel {
        channel: String,
        source: ChannelError,
    },
    #[error("event budget of {budget} exhausted at t = {time}: {diagnosis}")]
    HorizonExceeded {
        budget: usize,
        time: Time,
        diagnosis: String,
        last_events: Vec<EventRecord>,
    },
    #[error("causality fault at t = {time}: {detail}")]
    CausalityFault { time: Time, detail: String },
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExecuteOptions {
    pub horizon: Time,
    pub events_max: usize,
    /// Window before the horizon that must be free of output transitions for
    /// an output to count as resolved; defaults to 10·δ∞↑ of the slowest channel.
    pub stabilization_guard: Option<Time>,
    /// Per-channel replacement strategies for eta-involution channels.
    pub strategies: BTreeMap<String, AdversaryStrategy>,
}

impl ExecuteOptions {
    pub fn new(horizon: Time) -> Self {
        Self {
            horizon,
            events_max: DEFAULT_EVENT_BUDGET,
            stabilization_guard: None,
            strategies: BTreeMap::new(),
        }
    }
}

/// Release of one channel output transition, with the speculation bound.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CommitRecord {
    pub channel: usize,
    pub id: usize,
    pub time: Time,
    pub value: bool,
    /// Input had to be known up to `time + window` for the release to be safe.
    pub window: Time,
}

impl CommitRecord {
    /// True when time-ordered release already had the input up to the bound.
    pub fn sound(&self) -> bool {
        self.window <= 0.0
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ChannelTrace {
    pub name: String,
    pub output: Signal,
    pub log: Vec<LogEntry>,
    pub strategy: Option<AdversaryStrategy>,
    /// Scheduled transitions beyond the horizon.
    pub pending_at_horizon: usize,
}

impl ChannelTrace {
    pub fn etas(&self) -> Vec<Time> {
        self.log.iter().filter_map(|e| e.eta).collect()
    }
}

/// Signals assigned to every vertex and channel of a circuit.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Execution {
    pub horizon: Time,
    pub events: usize,
    pub guard: Time,
    pub inputs: BTreeMap<String, Signal>,
    pub gates: BTreeMap<String, Signal>,
    pub outputs: BTreeMap<String, Signal>,
    pub channels: Vec<ChannelTrace>,
    /// Per output port: no transition within `guard` before the horizon.
    pub stabilized: BTreeMap<String, bool>,
    pub audit: Vec<CommitRecord>,
}

/// Reproducibility record of one execution.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub horizon: Time,
    pub events: usize,
    pub stabilization_guard: Time,
    pub strategies: BTreeMap<String, String>,
    pub seeds: BTreeMap<String, u64>,
    pub eta_sequences: BTreeMap<String, Vec<Time>>,
    pub stabilized: BTreeMap<String, bool>,
}

impl Execution {
    pub fn channel(&self, name: &str) -> Option<&ChannelTrace> {
        self.channels.iter().find(|c| c.name == name)
    }

    /// Signal of a port, gate or channel by name.
    pub fn signal(&self, name: &str) -> Option<&Signal> {
        self.inputs
            .get(name)
            .or_else(|| self.gates.get(name))
            .or_else(|| self.outputs.get(name))
            .or_else(|| self.channel(name).map(|c| &c.output))
    }

    /// True when every recorded release was covered by the commit bound.
    pub fn audit_ok(&self) -> bool {
        self.audit.iter().all(CommitRecord::sound)
    }

    pub fn run_record(&self) -> RunRecord {
        let mut strategies = BTreeMap::new();
        let mut seeds = BTreeMap::new();
        let mut eta_sequences = BTreeMap::new();
        for c in &self.channels {
            if let Some(s) = &c.strategy {
                strategies.insert(c.name.clone(), s.name().to_string());
                if let Some(seed) = s.seed() {
                    seeds.insert(c.name.clone(), seed);
                }
                eta_sequences.insert(c.name.clone(), c.etas());
            }
        }
        RunRecord {
            horizon: self.horizon,
            events: self.events,
            stabilization_guard: self.guard,
            strategies,
            seeds,
            eta_sequences,
            stabilized: self.stabilized.clone(),
        }
    }

    /// Writes every port, gate and channel signal as one trace CSV.
    pub fn write_traces<W: Write>(&self, out: W) -> Result<(), TraceError> {
        let mut all: Vec<(&str, &Signal)> = Vec::new();
        all.extend(self.inputs.iter().map(|(k, v)| (k.as_str(), v)));
        all.extend(self.gates.iter().map(|(k, v)| (k.as_str(), v)));
        all.extend(self.outputs.iter().map(|(k, v)| (k.as_str(), v)));
        all.extend(self.channels.iter().map(|c| (c.name.as_str(), &c.output)));
        write_traces(out, &all)
    }
}

/// Root w of S + δ(S) = η⁻, maximized over both edges: an input arriving
/// later than `u + w` cannot cancel a pending output at `u`.
pub fn commit_window(df: &DelayFunction, bounds: EtaBounds) -> Time {
    let em = bounds.eta_minus;
    [Edge::Rising, Edge::Falling]
        .into_iter()
        .map(|e| {
            let lo = df.domain_start(e);
            Bisection::default()
                .solve(|s| s + df.eval(e, s) - em, lo, em.max(0.0))
                .unwrap_or(Time::INFINITY)
        })
        .fold(Time::NEG_INFINITY, Time::max)
}

#[derive(Debug, Clone, Copy)]
enum Ev {
    Init,
    Input { port: usize, value: bool },
    Release { channel: usize, id: usize },
}

#[derive(Debug)]
struct Item {
    time: Time,
    seq: u64,
    ev: Ev,
}

impl PartialEq for Item {
    fn eq(&self, o: &Self) -> bool {
        self.cmp(o) == Ordering::Equal
    }
}
impl Eq for Item {}
impl PartialOrd for Item {
    fn partial_cmp(&self, o: &Self) -> Option<Ordering> {
        Some(self.cmp(o))
    }
}
impl Ord for Item {
    fn cmp(&self, o: &Self) -> Ordering {
        // reversed: BinaryHeap is a max-heap
        o.time.total_cmp(&self.time).then(o.seq.cmp(&self.seq))
    }
}

#[derive(Clone, Copy, PartialEq, Eq)]
enum Status {
    Waiting,
    Canceled,
    Released,
}

struct ChanRt {
    state: ChannelState,
    status: Vec<Status>,
    output: Vec<Transition>,
    zero_delay: bool,
    window: Time,
    releases: usize,
}

struct GateRt {
    value: bool,
    output: Vec<Transition>,
    dirty: bool,
}

struct Engine<'a> {
    circuit: &'a Circuit,
    heap: BinaryHeap<Item>,
    seq: u64,
    now: Time,
    events: usize,
    budget: usize,
    tail: VecDeque<EventRecord>,
    chans: Vec<ChanRt>,
    gates: Vec<GateRt>,
    audit: Vec<CommitRecord>,
}

/// Runs the circuit with each eta-involution channel's own strategy, or the
/// replacement given in `strategies`.
pub fn execute(
    circuit: &Circuit,
    inputs: &BTreeMap<String, Signal>,
    horizon: Time,
    strategies: &BTreeMap<String, AdversaryStrategy>,
) -> Result<Execution, EngineError> {
    let mut opts = ExecuteOptions::new(horizon);
    opts.strategies = strategies.clone();
    execute_with(circuit, inputs, &opts)
}

pub fn execute_with(
    circuit: &Circuit,
    inputs: &BTreeMap<String, Signal>,
    opts: &ExecuteOptions,
) -> Result<Execution, EngineError> {
    let horizon = opts.horizon;
    if !(horizon.is_finite() && horizon > 0.0) {
        return Err(EngineError::InvalidHorizon(horizon));
    }
    for k in inputs.keys() {
        if !circuit.inputs().contains(k) {
            return Err(EngineError::UnknownInput(k.clone()));
        }
    }
    let port_signals: Vec<Signal> = circuit
        .inputs()
        .iter()
        .map(|p| {
            inputs
                .get(p)
                .map(|s| s.truncated(horizon))
                .ok_or_else(|| EngineError::MissingInput(p.clone()))
        })
        .collect::<Result<_, _>>()?;
    for name in opts.strategies.keys() {
        let ok = circuit.channel_index(name).is_some_and(|i| {
            matches!(
                circuit.channels()[i].spec,
                ChannelSpec::EtaInvolution { .. }
            )
        });
        if !ok {
            return Err(EngineError::UnknownChannel(name.clone()));
        }
    }

    let mut chans = Vec::with_capacity(circuit.channels().len());
    for ch in circuit.channels() {
        let mut spec = ch.spec.clone();
        if let (ChannelSpec::EtaInvolution { strategy, .. }, Some(s)) =
            (&mut spec, opts.strategies.get(&ch.name))
        {
            *strategy = s.clone();
        }
        let window = match &spec {
            ChannelSpec::EtaInvolution { df, bounds, .. } => commit_window(df, *bounds),
            ChannelSpec::Involution { df } => commit_window(df, EtaBounds::zero()),
            ChannelSpec::Pure { .. } => Time::NEG_INFINITY,
            ChannelSpec::Inertial { d, window } => window - d,
        };
        let initial = match ch.from {
            Source::Input(i) => port_signals[i].initial(),
            Source::Gate(g) => circuit.gates()[g].initial,
        };
        let zero_delay = matches!(spec, ChannelSpec::Pure { d } if d == 0.0);
        let state = ChannelState::new(spec, initial).map_err(|source| EngineError::Channel {
            channel: ch.name.clone(),
            source,
        })?;
        chans.push(ChanRt {
            state,
            status: Vec::new(),
            output: Vec::new(),
            zero_delay,
            window,
            releases: 0,
        });
    }
    let gates = circuit
        .gates()
        .iter()
        .map(|g| GateRt {
            value: g.initial,
            output: Vec::new(),
            dirty: false,
        })
        .collect();
    let mut eng = Engine {
        circuit,
        heap: BinaryHeap::new(),
        seq: 0,
        now: Time::NEG_INFINITY,
        events: 0,
        budget: opts.events_max,
        tail: VecDeque::with_capacity(EVENT_TAIL),
        chans,
        gates,
        audit: Vec::new(),
    };
    eng.push(0.0, Ev::Init);
    for (port, s) in port_signals.iter().enumerate() {
        for tr in s.transitions() {
            eng.push(
                tr.time,
                Ev::Input {
                    port,
                    value: tr.value,
                },
            );
        }
    }
    eng.run(horizon)?;
    eng.finish(port_signals, opts)
}

impl<'a> Engine<'a> {
    fn push(&mut self, time: Time, ev: Ev) {
        self.seq += 1;
        self.heap.push(Item {
            time,
            seq: self.seq,
            ev,
        });
    }

    fn fault(&self, detail: String) -> EngineError {
        EngineError::CausalityFault {
            time: self.now,
            detail,
        }
    }

    fn note(&mut self, what: impl FnOnce() -> String) {
        if self.tail.len() == EVENT_TAIL {
            self.tail.pop_front();
        }
        self.tail.push_back(EventRecord {
            time: self.now,
            what: what(),
        });
    }

    fn run(&mut self, horizon: Time) -> Result<(), EngineError> {
        while let Some(top) = self.heap.peek() {
            let t = top.time;
            if t >= horizon {
                break;
            }
            if t < self.now {
                return Err(self.fault(format!("event at {t} surfaced after time advanced")));
            }
            self.now = t;
            let mut changed_at_t: Vec<bool> = vec![false; self.gates.len()];
            loop {
                while self.heap.peek().is_some_and(|i| i.time == t) {
                    let item = self.heap.pop().expect("peeked");
                    self.events += 1;
                    if self.events > self.budget {
                        return Err(self.exhausted());
                    }
                    self.process(item.ev)?;
                }
                let mut any = false;
                for g in 0..self.gates.len() {
                    if !self.gates[g].dirty {
                        continue;
                    }
                    self.gates[g].dirty = false;
                    let gate = &self.circuit.gates()[g];
                    let ins: Vec<bool> = (0..gate.arity)
                        .map(|p| {
                            self.chans[self.circuit.pin_driver(g, p)]
                                .state
                                .output_value()
                        })
                        .collect();
                    let v = gate.function.eval(&ins);
                    if v == self.gates[g].value {
                        continue;
                    }
                    if changed_at_t[g] {
                        return Err(self.fault(format!(
                            "gate `{}` would switch twice at the same instant",
                            gate.name
                        )));
                    }
                    changed_at_t[g] = true;
                    self.gates[g].value = v;
                    self.gates[g].output.push(Transition::new(t, v));
                    self.note(|| format!("gate {} -> {}", gate.name, v as u8));
                    for &ci in self.circuit.gate_fanout(g) {
                        self.feed(ci, t, v)?;
                    }
                    any = true;
                }
                let more = self.heap.peek().is_some_and(|i| i.time == t);
                if !any && !more {
                    break;
                }
            }
        }
        Ok(())
    }

    fn process(&mut self, ev: Ev) -> Result<(), EngineError> {
        let t = self.now;
        match ev {
            Ev::Init => {
                for g in &mut self.gates {
                    g.dirty = true;
                }
            }
            Ev::Input { port, value } => {
                let c = self.circuit;
                self.note(|| format!("input {} -> {}", c.inputs()[port], value as u8));
                for &ci in c.input_fanout(port) {
                    self.feed(ci, t, value)?;
                }
            }
            Ev::Release { channel, id } => {
                let rt = &mut self.chans[channel];
                if rt.status[id] == Status::Canceled {
                    return Ok(());
                }
                rt.status[id] = Status::Released;
                if let Emission::Change(v) = rt.state.emit(id) {
                    rt.output.push(Transition::new(t, v));
                    rt.releases += 1;
                    let window = rt.window;
                    self.audit.push(CommitRecord {
                        channel,
                        id,
                        time: t,
                        value: v,
                        window,
                    });
                    let c = self.circuit;
                    self.note(|| format!("channel {} -> {}", c.channels()[channel].name, v as u8));
                    if let Sink::Pin { gate, .. } = c.channels()[channel].to {
                        self.gates[gate].dirty = true;
                    }
                }
            }
        }
        Ok(())
    }

    fn feed(&mut self, ci: usize, t: Time, v: bool) -> Result<(), EngineError> {
        let name = &self.circuit.channels()[ci].name;
        let rt = &mut self.chans[ci];
        let out = rt.state.push(t, v).map_err(|source| EngineError::Channel {
            channel: name.clone(),
            source,
        })?;
        rt.status.resize(rt.state.log().len(), Status::Waiting);
        if let Some(id) = out.cancel {
            if rt.status[id] == Status::Released {
                let at = rt.state.log()[id].output_time();
                return Err(self.fault(format!(
                    "input at {t} on channel `{name}` cancels an output transition already released at {at}"
                )));
            }
            rt.status[id] = Status::Canceled;
        }
        if let Some(s) = out.schedule {
            let past = if rt.zero_delay {
                s.time < t
            } else {
                s.time < self.now
            };
            if past {
                return Err(self.fault(format!(
                    "channel `{name}` scheduled an output at {} before the current time",
                    s.time
                )));
            }
            self.push(
                s.time,
                Ev::Release {
                    channel: ci,
                    id: s.id,
                },
            );
        }
        Ok(())
    }

    fn exhausted(&self) -> EngineError {
        let busiest = self
            .chans
            .iter()
            .enumerate()
            .max_by_key(|(_, c)| c.releases)
            .map(|(i, c)| (self.circuit.channels()[i].name.clone(), c.releases));
        let diagnosis = match busiest {
            Some((name, n)) if n > 0 => format!(
                "channel `{name}` released {n} transitions so far; the circuit keeps oscillating (a pulse train that has not resolved)"
            ),
            _ => "no channel activity recorded".to_string(),
        };
        EngineError::HorizonExceeded {
            budget: self.budget,
            time: self.now,
            diagnosis,
            last_events: self.tail.iter().cloned().collect(),
        }
    }

    fn finish(
        self,
        port_signals: Vec<Signal>,
        opts: &ExecuteOptions,
    ) -> Result<Execution, EngineError> {
        let c = self.circuit;
        let horizon = opts.horizon;
        let guard = opts.stabilization_guard.unwrap_or_else(|| default_guard(c));
        let bad = |e: crate::signals::SignalError| EngineError::CausalityFault {
            time: horizon,
            detail: format!("engine produced an invalid signal: {e}"),
        };
        let inputs: BTreeMap<String, Signal> = c
            .inputs()
            .iter()
            .cloned()
            .zip(port_signals.iter().cloned())
            .collect();
        let mut gates = BTreeMap::new();
        for (g, rt) in c.gates().iter().zip(self.gates) {
            gates.insert(
                g.name.clone(),
                Signal::new(g.initial, rt.output).map_err(bad)?,
            );
        }
        let mut channels = Vec::with_capacity(self.chans.len());
        for (ch, rt) in c.channels().iter().zip(self.chans) {
            let initial = match ch.from {
                Source::Input(i) => port_signals[i].initial(),
                Source::Gate(g) => c.gates()[g].initial,
            };
            let pending_at_horizon = rt.status.iter().filter(|s| **s == Status::Waiting).count();
            let strategy = match rt.state.spec() {
                ChannelSpec::EtaInvolution { strategy, .. } => Some(strategy.clone()),
                _ => None,
            };
            channels.push(ChannelTrace {
                name: ch.name.clone(),
                output: Signal::new(initial, rt.output).map_err(bad)?,
                log: rt.state.into_log(),
                strategy,
                pending_at_horizon,
            });
        }
        let mut outputs = BTreeMap::new();
        let mut stabilized = BTreeMap::new();
        for (o, name) in c.outputs().iter().enumerate() {
            let s = channels[c.output_driver(o)].output.clone();
            stabilized.insert(name.clone(), !s.active_near(horizon, guard));
            outputs.insert(name.clone(), s);
        }
        Ok(Execution {
            horizon,
            events: self.events,
            guard,
            inputs,
            gates,
            outputs,
            channels,
            stabilized,
            audit: self.audit,
        })
    }
}

fn default_guard(c: &Circuit) -> Time {
    let slowest = c
        .channels()
        .iter()
        .map(|ch| match &ch.spec {
            ChannelSpec::Pure { d } | ChannelSpec::Inertial { d, .. } => *d,
            ChannelSpec::Involution { df } | ChannelSpec::EtaInvolution { df, .. } => df.inf_up(),
        })
        .fold(0.0, Time::max);
    10.0 * slowest
}
