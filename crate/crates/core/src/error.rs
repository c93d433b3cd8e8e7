// SPDX-License-Identifier: Apache-2.0

use thiserror::Error;

/// Errors produced by the numerical routines in this crate.
#[derive(Debug, Clone, Error, PartialEq)]
pub enum Error {
    /// An exhaustive loop would exceed the configured work budget.
    #[error("{what}: needs {needed} units of work but the budget is {budget}{}", hint_suffix(.hint))]
    BudgetExceeded {
        what: &'static str,
        needed: u64,
        budget: u64,
        hint: Option<String>,
    },

    #[error("invalid input: {0}")]
    InvalidInput(String),

    /// A potential whose per-symbol supremum is not negative.
    #[error("invalid potential: {0}")]
    InvalidPotential(String),

    #[error("potential matrix is not primitive: {0}")]
    NonPrimitive(String),

    #[error("no fixed point: {0}")]
    NoFixedPoint(String),

    #[error("solver failed: {0}")]
    Solver(String),

    #[error("unsupported: {0}")]
    Unsupported(String),

    #[error("atom of positive mass at the boundary point {0}")]
    BoundaryAtom(f64),

    #[error("atom positions must be strictly increasing (offending position {0})")]
    UnsortedAtoms(f64),

    #[error("atom at cut point {0}; assign it to one side explicitly")]
    AtomAtCut(f64),

    #[error("insufficient data: {0}")]
    InsufficientData(String),

    /// The sup-Birkhoff value is not yet negative at this level.
    #[error("pressure at level {level} is not decreasing (max exponent {max_exponent}); increase the level")]
    IncreaseLevel { level: usize, max_exponent: f64 },
}

fn hint_suffix(hint: &Option<String>) -> String {
    match hint {
        Some(h) => format!(" ({h})"),
        None => String::new(),
    }
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn budget(what: &'static str, needed: u64, budget: u64) -> Self {
        Error::BudgetExceeded {
            what,
            needed,
            budget,
            hint: None,
        }
    }

    pub(crate) fn with_hint(self, text: impl Into<String>) -> Self {
        match self {
            Error::BudgetExceeded {
                what,
                needed,
                budget,
                ..
            } => Error::BudgetExceeded {
                what,
                needed,
                budget,
                hint: Some(text.into()),
            },
            other => other,
        }
    }

    pub fn is_budget(&self) -> bool {
        matches!(self, Error::BudgetExceeded { .. })
    }
}
