// SPDX-License-Identifier: Apache-2.0

use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("config: {0}")]
    Config(String),

    #[error(transparent)]
    Numeric(#[from] kfspec_core::Error),

    #[error("output: {0}")]
    Output(String),
}

/// Process exit codes.
pub mod exit {
    pub const PASS: i32 = 0;
    pub const CHECK_FAILED: i32 = 1;
    pub const CONFIG: i32 = 2;
    pub const BUDGET: i32 = 3;
    pub const NUMERICAL: i32 = 4;
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        use kfspec_core::Error as E;
        match self {
            CliError::Config(_) => exit::CONFIG,
            CliError::Numeric(e) => match e {
                E::BudgetExceeded { .. } => exit::BUDGET,
                E::InvalidInput(_)
                | E::InvalidPotential(_)
                | E::NonPrimitive(_)
                | E::Unsupported(_)
                | E::BoundaryAtom(_)
                | E::UnsortedAtoms(_)
                | E::AtomAtCut(_) => exit::CONFIG,
                E::NoFixedPoint(_) | E::Solver(_) | E::InsufficientData(_) | E::IncreaseLevel { .. } => {
                    exit::NUMERICAL
                }
            },
            CliError::Output(_) => exit::NUMERICAL,
        }
    }
}
