use super::{ChannelDecl, Circuit, CircuitError, Gate, GateFunction};
use crate::channel::ChannelSpec;
use crate::delay_model::DelayFunction;

/// Names used by [`storage_loop_circuit`].
pub struct StorageLoopNames;

impl StorageLoopNames {
    pub const INPUT: &'static str = "i";
    pub const OUTPUT: &'static str = "o";
    pub const OR: &'static str = "or";
    pub const HT: &'static str = "ht";
    pub const IN_CHANNEL: &'static str = "in";
    pub const LOOP: &'static str = "c";
    pub const HT_CHANNEL: &'static str = "ht_rc";
    pub const OUT_CHANNEL: &'static str = "out";
}

/// OR gate (initially 0) fed by the input port and by its own output through
/// `loop_channel`; the OR output also drives a high-threshold buffer, modeled
/// as an involution channel `ht` into a BUF, which drives the output port.
pub fn storage_loop_circuit(
    loop_channel: ChannelSpec,
    ht: DelayFunction,
) -> Result<Circuit, CircuitError> {
    let gates = vec![
        Gate {
            name: StorageLoopNames::OR.into(),
            function: GateFunction::Or,
            arity: 2,
            initial: false,
        },
        Gate {
            name: StorageLoopNames::HT.into(),
            function: GateFunction::Buf,
            arity: 1,
            initial: false,
        },
    ];
    let decl = |name: &str, from: &str, to: String, spec: ChannelSpec| ChannelDecl {
        name: name.into(),
        from: from.into(),
        to,
        spec,
    };
    let channels = vec![
        decl(
            StorageLoopNames::IN_CHANNEL,
            StorageLoopNames::INPUT,
            format!("{}.0", StorageLoopNames::OR),
            ChannelSpec::Pure { d: 0.0 },
        ),
        decl(
            StorageLoopNames::LOOP,
            StorageLoopNames::OR,
            format!("{}.1", StorageLoopNames::OR),
            loop_channel,
        ),
        decl(
            StorageLoopNames::HT_CHANNEL,
            StorageLoopNames::OR,
            format!("{}.0", StorageLoopNames::HT),
            ChannelSpec::Involution { df: ht },
        ),
        decl(
            StorageLoopNames::OUT_CHANNEL,
            StorageLoopNames::HT,
            StorageLoopNames::OUTPUT.into(),
            ChannelSpec::Pure { d: 0.0 },
        ),
    ];
    Circuit::new(
        vec![StorageLoopNames::INPUT.into()],
        vec![StorageLoopNames::OUTPUT.into()],
        gates,
        channels,
    )
}
