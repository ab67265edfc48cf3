use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

/// Errors raised across the crate.
///
/// Variants are grouped so that callers (the CLI in particular) can map them
/// onto configuration versus numeric failures via [`Error::is_numeric`].
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("invalid lattice: {0}")]
    InvalidLattice(String),

    #[error("topology error: {0}")]
    Topology(String),

    #[error("pole at omega = {omega} rad/s")]
    Pole { omega: f64 },

    #[error("near-resonance solve at omega = {omega} rad/s (condition estimate {condition:.3e})")]
    NearResonance { omega: f64, condition: f64 },

    #[error("sample rate mismatch: signal at {signal_rate} Hz, simulation expects {expected_rate} Hz")]
    RateMismatch { signal_rate: f64, expected_rate: f64 },

    #[error("time step {dt:e} s exceeds the stability limit {limit:e} s")]
    UnstableTimeStep { dt: f64, limit: f64 },

    #[error("simulation blew up at step {step}: |u| = {magnitude:e}")]
    BlowUp { step: usize, magnitude: f64 },

    #[error("non-finite state at step {step}")]
    NonFinite { step: usize },

    #[error("classification undecidable: all output energies are zero")]
    Undecidable,

    #[error("Nyquist violation: {freq} Hz at sample rate {rate} Hz")]
    Nyquist { freq: f64, rate: f64 },

    #[error("signal has zero power")]
    ZeroPower,

    #[error("window of {window} samples is longer than the signal ({len} samples)")]
    WindowTooLong { window: usize, len: usize },

    #[error("{path}:{line}: {msg}")]
    Parse { path: PathBuf, line: usize, msg: String },

    #[error("non-uniform time column at line {line}")]
    NonUniformSpacing { line: usize },

    #[error("training diverged at epoch {epoch}: {msg}")]
    Diverged { epoch: usize, msg: String },

    #[error("sample {sample}")]
    Sample {
        sample: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("io error on {path}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidParameter(msg.into())
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// The message followed by every underlying cause.
    pub fn detail(&self) -> String {
        let mut out = self.to_string();
        let mut cause = std::error::Error::source(self);
        while let Some(c) = cause {
            out.push_str(": ");
            out.push_str(&c.to_string());
            cause = c.source();
        }
        out
    }

    /// True for failures of the numerics (as opposed to bad inputs or IO).
    pub fn is_numeric(&self) -> bool {
        match self {
            Error::Pole { .. }
            | Error::NearResonance { .. }
            | Error::UnstableTimeStep { .. }
            | Error::BlowUp { .. }
            | Error::NonFinite { .. }
            | Error::Undecidable
            | Error::Diverged { .. } => true,
            Error::Sample { source, .. } => source.is_numeric(),
            _ => false,
        }
    }
}
