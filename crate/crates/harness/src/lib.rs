//! Experiment harness: builds synthetic datasets, trains model variants over
//! several seeds, evaluates every train/test pairing and checks the expected
//! orderings between them.

mod error;
pub mod experiment;
pub mod gradsuite;
pub mod orderings;

pub use error::{HarnessError, Result};
pub use experiment::{run_experiment, Aggregate, Cell, ExperimentSpec, ModelSpec, OrderingSpec, RunReport, Variant};
pub use orderings::{assert_orderings, OrderingOutcome};
