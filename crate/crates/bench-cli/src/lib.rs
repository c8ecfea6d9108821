//! Command-line front end for `stiffkit`: method verification and
//! derivation, stability data, single runs and work-precision sweeps with
//! CSV and SVG output.

pub mod bench;
pub mod commands;
pub mod error;
pub mod plot;

pub use bench::{run_bench, BenchConfig, BenchReport, BenchRow, CellStatus, HSweep};
pub use commands::run_cli;
pub use error::{CliError, CliResult};

/// Seed for randomized harnesses: `STIFFKIT_SEED` when set and numeric.
pub fn seed_from_env(default: u64) -> u64 {
    std::env::var("STIFFKIT_SEED")
        .ok()
        .and_then(|s| s.trim().parse().ok())
        .unwrap_or(default)
}
