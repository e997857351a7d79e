//! Scenario files, experiment orchestration and output writing for the
//! `raidrel` command line tool.

mod error;
pub mod output;
pub mod run;
pub mod scenario;

pub use error::CliError;
pub use run::{run_scenario, run_sweep, CurveRecord, Mode, ScenarioRun, SchemeRun, SweepAxis, SweepRow, SweepRun};
pub use scenario::{builtin_scenarios, load_scenarios, parse_scenarios, ParitySpec, ScenarioSpec, SchemeSpec};
