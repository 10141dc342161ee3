//! Batch command-line surface of the deepsupp library: detection,
//! evaluation, method comparison and inspection dumps over a directory of
//! per-ticker CSV files.

pub mod commands;
pub mod config;
pub mod output;

pub use commands::{
    cmd_compare, cmd_corr_dump, cmd_detect, cmd_dump_attention, cmd_evaluate, cmd_features_dump, cmd_synth, Failure,
    RunSummary, FAILURES_FILE, MANIFEST_FILE,
};
pub use config::{ConfigError, RunConfig, KEYS};
pub use output::OutputDir;

/// Exit status of a failed run: 2 for configuration problems, 1 otherwise.
pub fn error_exit_code(err: &anyhow::Error) -> i32 {
    let config = err.chain().any(|e| {
        e.downcast_ref::<ConfigError>().is_some()
            || matches!(
                e.downcast_ref::<deepsupp::Error>(),
                Some(deepsupp::Error::Config(_) | deepsupp::Error::UnknownDetector { .. })
            )
    });
    if config {
        2
    } else {
        1
    }
}
