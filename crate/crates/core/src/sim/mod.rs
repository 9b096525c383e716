//! Simulation studies: data-generating processes, Monte Carlo truths and the
//! replication driver.

pub mod dgp;
pub mod study;

pub use dgp::{generate, generate_with, true_psi, DgpName, DgpSpec, FullData, SpreadReading, TruthEstimate};
pub use study::{aggregate, run_study, MetricsRow, RawRow, StudyConfig, StudyOutput};
