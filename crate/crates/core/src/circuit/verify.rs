use serde::Serialize;

use super::{Circuit, Execution, Source};
use crate::channel::{apply_channel, AdversaryStrategy, ChannelSpec};
use crate::signals::{Signal, Transition};
use crate::Time;

/// One inconsistency between an execution and the circuit semantics.
#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Mismatch {
    Channel {
        name: String,
        detail: String,
        max_deviation: Time,
    },
    Gate {
        name: String,
        detail: String,
    },
    Output {
        name: String,
        detail: String,
    },
    Missing {
        name: String,
    },
}

#[derive(Debug, Clone, PartialEq, Default, Serialize)]
pub struct VerifyReport {
    pub channels_checked: usize,
    pub gates_checked: usize,
    pub mismatches: Vec<Mismatch>,
}

impl VerifyReport {
    pub fn ok(&self) -> bool {
        self.mismatches.is_empty()
    }
}

/// Re-applies every channel function to its recorded input and perturbations
/// and re-evaluates every gate, reporting any disagreement.
pub fn verify_execution(circuit: &Circuit, e: &Execution) -> VerifyReport {
    let mut r = VerifyReport::default();
    for (ci, ch) in circuit.channels().iter().enumerate() {
        let src_name = circuit.source_name(ch.from);
        let src = match ch.from {
            Source::Input(_) => e.inputs.get(src_name),
            Source::Gate(_) => e.gates.get(src_name),
        };
        let (Some(src), Some(trace)) = (src, e.channels.get(ci).filter(|t| t.name == ch.name))
        else {
            r.mismatches.push(Mismatch::Missing {
                name: ch.name.clone(),
            });
            continue;
        };
        r.channels_checked += 1;
        let spec = match &ch.spec {
            ChannelSpec::EtaInvolution { df, bounds, .. } => ChannelSpec::EtaInvolution {
                df: df.clone(),
                bounds: *bounds,
                strategy: AdversaryStrategy::FixedSequence {
                    values: trace.etas(),
                    strict: true,
                },
            },
            other => other.clone(),
        };
        match apply_channel(&spec, src) {
            Ok(run) => {
                let expect = run.output.truncated(e.horizon);
                if expect != trace.output {
                    r.mismatches.push(Mismatch::Channel {
                        name: ch.name.clone(),
                        detail: format!(
                            "recomputed output has {} transitions, recorded {}",
                            expect.len(),
                            trace.output.len()
                        ),
                        max_deviation: deviation(&expect, &trace.output),
                    });
                }
            }
            Err(err) => r.mismatches.push(Mismatch::Channel {
                name: ch.name.clone(),
                detail: format!("channel function failed on recorded input: {err}"),
                max_deviation: Time::INFINITY,
            }),
        }
    }
    for (g, gate) in circuit.gates().iter().enumerate() {
        let Some(actual) = e.gates.get(&gate.name) else {
            r.mismatches.push(Mismatch::Missing {
                name: gate.name.clone(),
            });
            continue;
        };
        r.gates_checked += 1;
        let pins: Vec<&Signal> = (0..gate.arity)
            .filter_map(|p| e.channels.get(circuit.pin_driver(g, p)).map(|t| &t.output))
            .collect();
        if pins.len() != gate.arity {
            r.mismatches.push(Mismatch::Missing {
                name: gate.name.clone(),
            });
            continue;
        }
        let mut times: Vec<Time> = vec![0.0];
        times.extend(
            pins.iter()
                .flat_map(|s| s.transitions().iter().map(|t| t.time)),
        );
        times.sort_by(Time::total_cmp);
        times.dedup();
        let mut value = gate.initial;
        let mut expect = Vec::new();
        for t in times {
            let ins: Vec<bool> = pins.iter().map(|s| s.value_at(t)).collect();
            let v = gate.function.eval(&ins);
            if v != value {
                expect.push(Transition::new(t, v));
                value = v;
            }
        }
        match Signal::new(gate.initial, expect) {
            Ok(s) if &s == actual => {}
            Ok(s) => r.mismatches.push(Mismatch::Gate {
                name: gate.name.clone(),
                detail: format!(
                    "Boolean function of the inputs gives {} transitions, recorded {} (max deviation {})",
                    s.len(),
                    actual.len(),
                    deviation(&s, actual)
                ),
            }),
            Err(err) => r.mismatches.push(Mismatch::Gate { name: gate.name.clone(), detail: err.to_string() }),
        }
    }
    for (o, name) in circuit.outputs().iter().enumerate() {
        let drv = e.channels.get(circuit.output_driver(o)).map(|t| &t.output);
        if e.outputs.get(name) != drv {
            r.mismatches.push(Mismatch::Output {
                name: name.clone(),
                detail: "output port differs from its driving channel".into(),
            });
        }
    }
    r
}

fn deviation(a: &Signal, b: &Signal) -> Time {
    if a.len() != b.len() || a.initial() != b.initial() {
        return Time::INFINITY;
    }
    a.transitions()
        .iter()
        .zip(b.transitions())
        .map(|(x, y)| {
            if x.value == y.value {
                (x.time - y.time).abs()
            } else {
                Time::INFINITY
            }
        })
        .fold(0.0, Time::max)
}
