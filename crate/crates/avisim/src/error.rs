//! Error type shared by the whole crate.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum SimError {
    /// An event was popped with a time stamp behind the global clock.
    #[error("clock regression: event at t={event_t} is behind the global clock T_g={t_g}")]
    ClockRegression { event_t: f64, t_g: f64 },

    /// A position, velocity or gradient stopped being a finite number.
    #[error("non-finite {what} at t={t}")]
    NonFinite { what: &'static str, t: f64 },

    /// Two bodies are too close for a direction between them to exist.
    #[error("degenerate geometry between bodies {a} and {b}: separation below 1e-12")]
    DegenerateGeometry { a: usize, b: usize },

    /// Contact between this combination of body kinds is not defined.
    #[error("unsupported contact pair between bodies {a} and {b}")]
    UnsupportedPair { a: usize, b: usize },

    /// The event queue drained before the scene duration was reached.
    #[error("event queue empty at t={t} before duration {duration}")]
    QueueEmpty { t: f64, duration: f64 },

    /// The initial configuration already intersects the first penalty layer.
    #[error("bodies {a} and {b} start inside the first penalty layer (surface gap {gap})")]
    PenetratingStart { a: usize, b: usize, gap: f64 },

    /// Contact failed: a pair reached zero separation, so no separating
    /// slab exists at any layer depth.
    #[error("penetration between bodies {a} and {b} at t={t}")]
    Penetration { a: usize, b: usize, t: f64 },

    /// Statistics that need a minimum number of samples.
    #[error("need at least {need} samples, have {have}")]
    TooFewSamples { need: usize, have: usize },

    /// Scene text that could not be parsed. Carries the 1-based line number.
    #[error("line {line}: {msg}")]
    Parse { line: usize, msg: String },

    /// A structurally valid scene with inconsistent contents.
    #[error("invalid scene: {msg}")]
    Invalid { msg: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, SimError>;
