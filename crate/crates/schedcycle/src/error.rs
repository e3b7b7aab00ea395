use crate::task::{Diagnostic, TaskId, Tick};

/// Errors surfaced by the library.
///
/// Arithmetic on ticks is checked everywhere; anything that would wrap
/// reports [`Error::Overflow`] with the offending computation spelled out
/// rather than silently saturating.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    /// A tick computation exceeded the 64-bit tick range.
    #[error("arithmetic overflow in {context}")]
    Overflow { context: String },

    /// The task system failed structural validation.
    #[error("invalid task system: {}", Diagnostic::join(.0))]
    InvalidSystem(Vec<Diagnostic>),

    /// A scheduler configuration cannot be applied to this system.
    #[error("scheduler configuration error: {0}")]
    SchedulerConfig(String),

    /// A scheduling decision broke a validity rule at `tick`.
    #[error("invalid decision at tick {tick}: {rule}")]
    InvalidDecision { tick: Tick, rule: String },

    /// A decision table maps one state to two different decisions.
    #[error(
        "conflicting decisions for one state: tick {first_tick} chose {first:?}, \
         tick {second_tick} chose {second:?}"
    )]
    ConflictingDecision {
        first_tick: Tick,
        second_tick: Tick,
        first: Vec<TaskId>,
        second: Vec<TaskId>,
    },

    /// A trace replay referenced a job that is not eligible or present.
    #[error("trace is inconsistent at tick {tick}: {reason}")]
    InconsistentTrace { tick: Tick, reason: String },

    /// Exhaustive exploration hit the configured vertex cap.
    #[error("schedule graph exceeded the vertex cap of {cap}")]
    VertexCapExceeded { cap: usize },

    /// An exhaustive path search gave up. Extremal cycles and bound checks
    /// solve longest-path questions exactly, which is exponential on
    /// unfavorable graphs.
    #[error("exhaustive path search exceeded its budget of {budget} steps")]
    SearchBudgetExceeded { budget: u64 },

    /// A bookkeeping identity that must hold by construction failed.
    #[error("internal invariant violated: {0}")]
    InvariantViolated(String),

    /// Malformed input document (task system, table, trace, or report).
    #[error("input error: {0}")]
    Input(String),

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn overflow(context: impl Into<String>) -> Self {
        Error::Overflow {
            context: context.into(),
        }
    }

    /// Input error with a free-form message.
    pub fn input(message: impl Into<String>) -> Self {
        Error::Input(message.into())
    }
}
