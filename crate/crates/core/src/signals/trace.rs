//! Trace CSV: `signal,time,value`, one row per transition, the initial value
//! as a row with time `-inf`, rows sorted by signal name then time.

use std::collections::BTreeMap;
use std::io::{Read, Write};

use thiserror::Error;

use super::{Signal, SignalError, Transition};

#[derive(Debug, Error)]
pub enum TraceError {
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
    #[error("line {line}: {msg}")]
    Format { line: u64, msg: String },
    #[error("signal `{name}`: {source}")]
    Invalid { name: String, source: SignalError },
    #[error("signal `{0}` has no initial-value row")]
    MissingInitial(String),
}

fn bit(v: bool) -> &'static str {
    if v {
        "1"
    } else {
        "0"
    }
}

/// Writes named signals; names are emitted in sorted order.
pub fn write_traces<W: Write>(out: W, signals: &[(&str, &Signal)]) -> Result<(), TraceError> {
    let mut sorted: Vec<_> = signals.to_vec();
    sorted.sort_by(|a, b| a.0.cmp(b.0));
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["signal", "time", "value"])?;
    for (name, sig) in sorted {
        w.write_record([name, "-inf", bit(sig.initial())])?;
        for tr in sig.transitions() {
            w.write_record([name, &format!("{}", tr.time), bit(tr.value)])?;
        }
    }
    w.flush()?;
    Ok(())
}

/// Reads a trace file into validated signals keyed by name.
pub fn read_traces<R: Read>(input: R) -> Result<BTreeMap<String, Signal>, TraceError> {
    let mut rdr = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_reader(input);
    let headers = rdr.headers()?.clone();
    if headers.iter().collect::<Vec<_>>() != ["signal", "time", "value"] {
        return Err(TraceError::Format {
            line: 1,
            msg: format!(
                "expected header `signal,time,value`, got `{}`",
                headers.iter().collect::<Vec<_>>().join(",")
            ),
        });
    }
    let mut raw: BTreeMap<String, (Option<bool>, Vec<Transition>)> = BTreeMap::new();
    for rec in rdr.records() {
        let rec = rec?;
        let line = rec.position().map_or(0, |p| p.line());
        let fmt_err = |msg: String| TraceError::Format { line, msg };
        if rec.len() != 3 {
            return Err(fmt_err(format!("expected 3 fields, got {}", rec.len())));
        }
        let name = rec[0].to_string();
        let value = match &rec[2] {
            "0" => false,
            "1" => true,
            other => return Err(fmt_err(format!("value must be 0 or 1, got `{other}`"))),
        };
        let entry = raw.entry(name).or_default();
        if &rec[1] == "-inf" {
            if entry.0.is_some() || !entry.1.is_empty() {
                return Err(fmt_err(
                    "initial-value row must come first and only once".into(),
                ));
            }
            entry.0 = Some(value);
        } else {
            let time: f64 = rec[1]
                .parse()
                .map_err(|_| fmt_err(format!("bad time `{}`", &rec[1])))?;
            entry.1.push(Transition::new(time, value));
        }
    }
    raw.into_iter()
        .map(|(name, (initial, trs))| {
            let initial = initial.ok_or_else(|| TraceError::MissingInitial(name.clone()))?;
            let sig = Signal::new(initial, trs).map_err(|source| TraceError::Invalid {
                name: name.clone(),
                source,
            })?;
            Ok((name, sig))
        })
        .collect()
}
