//! Scenario-driven front end for the simulator: runs the full record
//! sharing workflow, renders artifacts and re-verifies them offline.

pub mod artifacts;
pub mod error;
pub mod inspect;
pub mod run;
pub mod scenario;
pub mod verify;

use std::path::Path;

pub use error::CliError;
pub use inspect::{inspect, InspectWhat};
pub use run::{run_scenario, tamper_dump, RunOptions, RunOutcome, SharingResult};
pub use scenario::{Profile, Scenario};
pub use verify::{load_membership, verify_dir, VerifyReport};

/// Runs a scenario file and writes its artifacts to `out`. Artifacts are
/// written even when an invariant check fails, so the failure can be
/// inspected.
pub fn run(scenario: &Path, opts: RunOptions, out: &Path) -> Result<RunOutcome, CliError> {
    let s = Scenario::load(scenario)?;
    let outcome = run_scenario(&s, opts)?;
    outcome.artifacts.write_to(out)?;
    if let Some(v) = outcome.violations.first() {
        return Err(CliError::Invariant(v.clone()));
    }
    Ok(outcome)
}
