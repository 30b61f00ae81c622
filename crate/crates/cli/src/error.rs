use std::fmt;

use involution_core::analysis::AnalysisError;
use involution_core::circuit::{CircuitError, EngineError};
use involution_core::delay_model::DelayError;
use involution_core::signals::TraceError;
use involution_core::waveform_lab::WaveformError;
use serde::Serialize;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum ErrorKind {
    Usage,
    Parse,
    ModelConstraint,
    Engine,
    Io,
}

impl ErrorKind {
    pub fn exit_code(self) -> i32 {
        match self {
            ErrorKind::Usage => 2,
            ErrorKind::Parse => 3,
            ErrorKind::ModelConstraint => 4,
            ErrorKind::Engine => 5,
            ErrorKind::Io => 6,
        }
    }
}

/// Error reported on stderr as one JSON object.
#[derive(Debug, Serialize)]
pub struct CliError {
    pub kind: ErrorKind,
    pub code: i32,
    pub message: String,
}

impl CliError {
    pub fn new(kind: ErrorKind, message: impl Into<String>) -> Self {
        Self {
            kind,
            code: kind.exit_code(),
            message: message.into(),
        }
    }

    pub fn usage(message: impl Into<String>) -> Self {
        Self::new(ErrorKind::Usage, message)
    }

    pub fn parse(message: impl Into<String>) -> Self {
        Self::new(ErrorKind::Parse, message)
    }

    pub fn io(message: impl Into<String>) -> Self {
        Self::new(ErrorKind::Io, message)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).unwrap_or_else(|_| {
            format!(
                "{{\"code\":{},\"message\":\"{}\"}}",
                self.code, self.message
            )
        })
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.message)
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::io(e.to_string())
    }
}

impl From<serde_json::Error> for CliError {
    fn from(e: serde_json::Error) -> Self {
        if e.is_io() {
            CliError::io(e.to_string())
        } else {
            CliError::parse(e.to_string())
        }
    }
}

impl From<DelayError> for CliError {
    fn from(e: DelayError) -> Self {
        let kind = match e {
            DelayError::Io(_) => ErrorKind::Io,
            DelayError::InvalidTable(_) => ErrorKind::Parse,
            DelayError::InvalidParams(_)
            | DelayError::DomainViolation { .. }
            | DelayError::NoBracket(_) => ErrorKind::ModelConstraint,
        };
        CliError::new(kind, e.to_string())
    }
}

impl From<CircuitError> for CliError {
    fn from(e: CircuitError) -> Self {
        let kind = match e {
            CircuitError::Io { .. } => ErrorKind::Io,
            CircuitError::Parse(_) | CircuitError::Invalid(_) => ErrorKind::Parse,
        };
        CliError::new(kind, e.to_string())
    }
}

impl From<TraceError> for CliError {
    fn from(e: TraceError) -> Self {
        let kind = match e {
            TraceError::Io(_) => ErrorKind::Io,
            _ => ErrorKind::Parse,
        };
        CliError::new(kind, format!("stimulus: {e}"))
    }
}

impl From<EngineError> for CliError {
    fn from(e: EngineError) -> Self {
        let kind = match e {
            EngineError::MissingInput(_)
            | EngineError::UnknownInput(_)
            | EngineError::UnknownChannel(_) => ErrorKind::Parse,
            EngineError::InvalidHorizon(_) => ErrorKind::Usage,
            _ => ErrorKind::Engine,
        };
        CliError::new(kind, e.to_string())
    }
}

impl From<AnalysisError> for CliError {
    fn from(e: AnalysisError) -> Self {
        match e {
            AnalysisError::ConstraintCViolated { .. } => {
                CliError::new(ErrorKind::ModelConstraint, e.to_string())
            }
            AnalysisError::Delay(d) => d.into(),
            AnalysisError::Circuit(c) => c.into(),
            AnalysisError::Engine(g) => g.into(),
            _ => CliError::new(ErrorKind::Engine, e.to_string()),
        }
    }
}

impl From<WaveformError> for CliError {
    fn from(e: WaveformError) -> Self {
        let kind = match e {
            WaveformError::InvalidParams(_)
            | WaveformError::EtaBudgetInvalid { .. }
            | WaveformError::InsufficientSamples { .. } => ErrorKind::ModelConstraint,
            WaveformError::Delay(d) => return d.into(),
            WaveformError::Analysis(a) => return a.into(),
            WaveformError::Csv(_) | WaveformError::Io(_) => ErrorKind::Io,
            _ => ErrorKind::Engine,
        };
        CliError::new(kind, e.to_string())
    }
}

impl From<involution_core::channel::ChannelError> for CliError {
    fn from(e: involution_core::channel::ChannelError) -> Self {
        use involution_core::channel::ChannelError;
        let kind = match e {
            ChannelError::InvalidSpec(_) => ErrorKind::ModelConstraint,
            ChannelError::EtaFile(_) => ErrorKind::Parse,
            _ => ErrorKind::Engine,
        };
        CliError::new(kind, e.to_string())
    }
}
