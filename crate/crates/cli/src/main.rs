//! `invsim`: simulate circuits of involution channels, characterize delay
//! functions, sweep the storage loop for short-pulse filtration, and run the
//! analog surrogate.

mod args;
mod commands;
mod error;
mod manifest;

use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use involution_core::circuit::DEFAULT_EVENT_BUDGET;
use serde::{Deserialize, Serialize};

use args::{DelaySpec, Grid, StrategyName};

#[derive(Debug, Parser)]
#[command(
    name = "invsim",
    version,
    about = "Involution delay-model toolkit. All times are in seconds."
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Clone, PartialEq, Subcommand, Serialize, Deserialize)]
#[serde(tag = "command", rename_all = "kebab-case")]
pub enum Command {
    /// Execute a netlist on a stimulus trace.
    Simulate(SimulateArgs),
    /// Characterize a delay function and η bounds.
    Analyze(AnalyzeArgs),
    /// Sweep input pulse widths through the storage loop and check filtration.
    SpfSweep(SweepArgs),
    /// Drive the RC surrogate with pulses, compare it to the model, fit an exp-channel.
    Waveform(WaveformArgs),
    /// Run a command again from its manifest and compare outputs.
    Replay(ReplayArgs),
}

impl Command {
    pub fn name(&self) -> &'static str {
        match self {
            Command::Simulate(_) => "simulate",
            Command::Analyze(_) => "analyze",
            Command::SpfSweep(_) => "spf-sweep",
            Command::Waveform(_) => "waveform",
            Command::Replay(_) => "replay",
        }
    }

    fn set_out(&mut self, dir: PathBuf) {
        match self {
            Command::Simulate(a) => a.out = dir,
            Command::Analyze(a) => a.out = dir,
            Command::SpfSweep(a) => a.out = dir,
            Command::Waveform(a) => a.out = dir,
            Command::Replay(a) => a.out = Some(dir),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Args, Serialize, Deserialize)]
pub struct SimulateArgs {
    /// JSON netlist.
    #[arg(long)]
    pub netlist: PathBuf,
    /// Trace CSV (`signal,time,value`) with one signal per input port.
    #[arg(long)]
    pub stimulus: PathBuf,
    #[arg(long, default_value_t = 100.0)]
    pub horizon: f64,
    #[arg(long, default_value_t = DEFAULT_EVENT_BUDGET)]
    pub events_max: usize,
    /// Reseeds every uniform_random channel: channel i gets SEED + i.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Quiet window before the horizon for outputs to count as stable
    /// [default: 10 x the slowest channel's δ∞↑].
    #[arg(long)]
    pub guard: Option<f64>,
    #[arg(long, default_value = "out")]
    pub out: PathBuf,
}

#[derive(Debug, Clone, PartialEq, Args, Serialize, Deserialize)]
pub struct AnalyzeArgs {
    /// exp:TAU,T_P,VTH | hyperbolic:A,C,D | table:PATH
    #[arg(long, default_value = "exp:1,0.5,0.5")]
    pub delay: DelaySpec,
    #[arg(long, default_value_t = 0.0)]
    pub eta_plus: f64,
    #[arg(long, default_value_t = 0.0)]
    pub eta_minus: f64,
    /// Tolerance of the involution check.
    #[arg(long, default_value_t = 1e-9)]
    pub tol: f64,
    #[arg(long, default_value = "out")]
    pub out: PathBuf,
}

#[derive(Debug, Clone, PartialEq, Args, Serialize, Deserialize)]
pub struct SweepArgs {
    #[arg(long, default_value = "exp:1,0.5,0.5")]
    pub delay: DelaySpec,
    #[arg(long, default_value_t = 0.0)]
    pub eta_plus: f64,
    #[arg(long, default_value_t = 0.0)]
    pub eta_minus: f64,
    /// Input pulse widths: LO:STEP:HI or a list.
    #[arg(long, default_value = "0.1:0.05:1.5")]
    pub grid: Grid,
    #[arg(
        long,
        value_enum,
        value_delimiter = ',',
        default_value = "zero,worst_case_shrink,uniform_random"
    )]
    pub strategies: Vec<StrategyName>,
    /// First seed of the uniform_random runs.
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Number of uniform_random runs per width.
    #[arg(long, default_value_t = 4)]
    pub random_runs: usize,
    /// Shortest admissible output pulse [default: Δ/2].
    #[arg(long)]
    pub epsilon: Option<f64>,
    #[arg(long, default_value_t = 60.0)]
    pub horizon: f64,
    #[arg(long, default_value_t = DEFAULT_EVENT_BUDGET)]
    pub events_max: usize,
    /// Worker threads [default: all cores].
    #[arg(long)]
    pub workers: Option<usize>,
    #[arg(long, default_value = "out")]
    pub out: PathBuf,
}

#[derive(Debug, Clone, PartialEq, Args, Serialize, Deserialize)]
pub struct WaveformArgs {
    /// Reference exp-channel; the surrogate is built from it.
    #[arg(long, default_value = "exp:1,0.5,0.5")]
    pub delay: DelaySpec,
    /// Input pulse widths, each applied as a high and as a low pulse.
    #[arg(long, default_value = "0.5:0.05:4.45")]
    pub widths: Grid,
    /// Supply ripple amplitude as a fraction of VDD.
    #[arg(long, default_value_t = 0.0)]
    pub amplitude: f64,
    #[arg(long, default_value_t = 2.0)]
    pub period: f64,
    /// Pulse k draws its ripple phase from SEED + k; also seeds the fit.
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// η⁺ of the deviation analysis [default: 0.02 δmin].
    #[arg(long)]
    pub eta_plus: Option<f64>,
    /// Equal-count T bins of the coverage table.
    #[arg(long, default_value_t = 4)]
    pub bins: usize,
    #[arg(long)]
    pub no_fit: bool,
    #[arg(long)]
    pub workers: Option<usize>,
    #[arg(long, default_value = "out")]
    pub out: PathBuf,
}

#[derive(Debug, Clone, PartialEq, Args, Serialize, Deserialize)]
pub struct ReplayArgs {
    pub manifest: PathBuf,
    /// [default: `replay/` next to the manifest]
    #[arg(long)]
    pub out: Option<PathBuf>,
}

fn print(value: &serde_json::Value) {
    let text = serde_json::to_string_pretty(value).unwrap_or_default();
    // a closed pipe on stdout is not an error of the run
    let _ = writeln!(std::io::stdout().lock(), "{text}");
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match commands::run(cli.command) {
        Ok(summary) => {
            print(&summary);
            ExitCode::SUCCESS
        }
        Err((summary, e)) => {
            if let Some(s) = summary {
                print(&s);
            }
            eprintln!("{}", e.to_json());
            ExitCode::from(e.code as u8)
        }
    }
}
