use std::collections::BTreeMap;
use std::io::Write;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{
    characterize, classify_pulse, dimension_ht_buffer, spf_check, AnalysisError,
    PulseTrainCharacterization, SpfVerdict,
};
use crate::channel::{AdversaryStrategy, ChannelSpec, EtaBounds};
use crate::circuit::{
    execute_with, storage_loop_circuit, Circuit, ExecuteOptions, Execution, StorageLoopNames,
    DEFAULT_EVENT_BUDGET,
};
use crate::delay_model::{exp_channel, DelayFunction, ExpChannelParams};
use crate::signals::Signal;
use crate::Time;

pub const SWEEP_CSV_HEADER: [&str; 7] = [
    "delta0",
    "regime",
    "pulses_observed",
    "resolved_to",
    "stabilization_time",
    "strategy",
    "seed",
];

/// Storage loop with a given feedback channel and HT stage.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LoopSetup {
    pub df: DelayFunction,
    pub bounds: EtaBounds,
    pub ht: ExpChannelParams,
    pub horizon: Time,
    pub events_max: usize,
    /// Quiet window before the horizon for a signal to count as resolved;
    /// defaults to 10·δ∞↑ of the loop channel.
    pub guard: Option<Time>,
}

impl LoopSetup {
    pub fn new(df: DelayFunction, bounds: EtaBounds, ht: ExpChannelParams, horizon: Time) -> Self {
        Self {
            df,
            bounds,
            ht,
            horizon,
            events_max: DEFAULT_EVENT_BUDGET,
            guard: None,
        }
    }

    /// Uses an HT stage dimensioned for pulses up to max(3τ, δ∞↑ + η⁺) with
    /// duty cycle at most γ of the worst-case train.
    pub fn dimensioned(
        df: DelayFunction,
        bounds: EtaBounds,
        horizon: Time,
    ) -> Result<Self, AnalysisError> {
        let ch = characterize(&df, bounds)?;
        let theta = (3.0 * ch.tau_star).max(ch.lock_above);
        let ht = dimension_ht_buffer(theta, ch.duty)?;
        Ok(Self::new(df, bounds, ht, horizon))
    }

    pub fn guard(&self) -> Time {
        self.guard.unwrap_or(10.0 * self.df.inf_up())
    }

    pub fn circuit(&self, strategy: &AdversaryStrategy) -> Result<Circuit, AnalysisError> {
        let spec = ChannelSpec::EtaInvolution {
            df: self.df.clone(),
            bounds: self.bounds,
            strategy: strategy.clone(),
        };
        Ok(storage_loop_circuit(spec, exp_channel(self.ht)?)?)
    }
}

/// Result of driving the loop with one input pulse.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LoopRun {
    pub delta0: Time,
    pub strategy: AdversaryStrategy,
    /// OR-gate output, i.e. the loop signal.
    pub or_signal: Signal,
    /// Circuit output behind the HT stage.
    pub output: Signal,
    pub pulses_observed: usize,
    /// Final loop value when the loop went quiet before the horizon.
    pub resolved_to: Option<bool>,
    /// Time of the last loop transition when resolved.
    pub stabilization_time: Option<Time>,
    pub output_resolved: bool,
    pub events: usize,
    #[serde(skip)]
    pub execution: Execution,
}

/// Runs the loop with an input pulse of width `delta0` at time 0; a
/// non-positive width means the zero input.
pub fn run_loop(
    setup: &LoopSetup,
    delta0: Time,
    strategy: &AdversaryStrategy,
) -> Result<LoopRun, AnalysisError> {
    let circuit = setup.circuit(strategy)?;
    let input = if delta0 > 0.0 {
        Signal::pulse(0.0, delta0).map_err(|e| AnalysisError::InvariantViolated(e.to_string()))?
    } else {
        Signal::zero()
    };
    let mut opts = ExecuteOptions::new(setup.horizon);
    opts.events_max = setup.events_max;
    opts.stabilization_guard = Some(setup.guard());
    let e = execute_with(
        &circuit,
        &BTreeMap::from([(StorageLoopNames::INPUT.to_string(), input)]),
        &opts,
    )?;
    let or_signal = e.gates[StorageLoopNames::OR].clone();
    let output = e.outputs[StorageLoopNames::OUTPUT].clone();
    let quiet = !or_signal.active_near(setup.horizon, setup.guard());
    let resolved_to = quiet.then(|| or_signal.final_value());
    let stabilization_time = if quiet {
        Some(or_signal.last_time().unwrap_or(0.0))
    } else {
        None
    };
    Ok(LoopRun {
        delta0,
        strategy: strategy.clone(),
        pulses_observed: or_signal.decompose_pulses(setup.horizon).len(),
        resolved_to,
        stabilization_time,
        output_resolved: e.stabilized[StorageLoopNames::OUTPUT],
        events: e.events,
        or_signal,
        output,
        execution: e,
    })
}

/// One line of the sweep table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub delta0: Time,
    pub regime: String,
    pub pulses_observed: usize,
    /// `0`, `1` or `unresolved`.
    pub resolved_to: String,
    pub stabilization_time: Option<Time>,
    pub strategy: String,
    pub seed: Option<u64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepResult {
    pub characterization: PulseTrainCharacterization,
    pub rows: Vec<SweepRow>,
    pub verdict: SpfVerdict,
}

/// Runs every grid width under every strategy, then checks F2–F4 on the
/// circuit outputs with the given ε. `workers = None` uses all cores.
pub fn spf_sweep(
    setup: &LoopSetup,
    grid: &[Time],
    strategies: &[AdversaryStrategy],
    epsilon: Time,
    workers: Option<usize>,
) -> Result<SweepResult, AnalysisError> {
    let ch = characterize(&setup.df, setup.bounds)?;
    let jobs: Vec<(Time, &AdversaryStrategy)> = strategies
        .iter()
        .flat_map(|s| grid.iter().map(move |&d| (d, s)))
        .collect();
    let work = || -> Result<Vec<LoopRun>, AnalysisError> {
        jobs.par_iter()
            .map(|(d, s)| run_loop(setup, *d, s))
            .collect()
    };
    let runs = match workers {
        Some(n) => rayon::ThreadPoolBuilder::new()
            .num_threads(n.max(1))
            .build()
            .map_err(|e| AnalysisError::InvariantViolated(format!("worker pool: {e}")))?
            .install(work)?,
        None => work()?,
    };
    let zero = run_loop(
        setup,
        0.0,
        strategies.first().unwrap_or(&AdversaryStrategy::Zero),
    )?;
    let outputs: Vec<Signal> = runs.iter().map(|r| r.output.clone()).collect();
    let verdict = spf_check(&zero.output, &outputs, epsilon);
    let rows = runs
        .iter()
        .map(|r| SweepRow {
            delta0: r.delta0,
            regime: classify_pulse(&ch, r.delta0).name().to_string(),
            pulses_observed: r.pulses_observed,
            resolved_to: match r.resolved_to {
                Some(true) => "1".into(),
                Some(false) => "0".into(),
                None => "unresolved".into(),
            },
            stabilization_time: r.stabilization_time,
            strategy: r.strategy.name().to_string(),
            seed: r.strategy.seed(),
        })
        .collect();
    Ok(SweepResult {
        characterization: ch,
        rows,
        verdict,
    })
}

pub fn write_sweep_csv<W: Write>(out: W, rows: &[SweepRow]) -> Result<(), csv::Error> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(SWEEP_CSV_HEADER)?;
    for r in rows {
        w.write_record([
            format!("{}", r.delta0),
            r.regime.clone(),
            r.pulses_observed.to_string(),
            r.resolved_to.clone(),
            r.stabilization_time
                .map(|t| format!("{t}"))
                .unwrap_or_default(),
            r.strategy.clone(),
            r.seed.map(|s| s.to_string()).unwrap_or_default(),
        ])?;
    }
    w.flush()?;
    Ok(())
}
