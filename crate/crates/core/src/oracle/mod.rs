//! Exact laws with known answers, used as ground truth by the tests and the
//! `check` command.

mod check;
mod examples;
mod missing;

pub use check::{run_checks, CheckReport, CheckResult, CHECK_TOLERANCE, POINTWISE_TOLERANCE};
pub use examples::{mnar_example, random_coarsened_law};
pub use missing::{CovariateStratum, MissingOutcomeCoordinates, MissingOutcomeLaw, OutcomeCell, TableNuisance};
