//! Named experiment suites and their artifacts.
//!
//! Every suite writes `config.json` (the resolved configuration),
//! `summary.json` (checks and headline numbers) and one or more CSV files.
//! Artifacts depend only on the configuration, never on timing or on the
//! number of worker threads.

mod config;
mod output;
mod suites;

pub use config::{ExperimentConfig, Preset, RunOptions, Suite};
pub use output::{fmt_float, write_csv, write_json};
pub use suites::{
    oracle_gap, pooled_tail, q_learn_check, resolve_mv_config, run_suite, verify_bpi_instance,
    BpiInstanceResult, Check, OracleGap, QLearnCheck, SuiteReport, ARTIFACT_REVISION,
};
