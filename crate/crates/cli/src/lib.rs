//! Configuration, sweeps and CSV output for the `uwbbounds` command.

pub mod config;
pub mod error;
pub mod figure;
pub mod oracle_suite;
pub mod sweep;

pub use config::{load_config, parse_config, BoundSelection, Sweep, SweepSpec, SweepVar};
pub use error::CliError;
pub use figure::{emit_figure_data, FigureRow};
pub use sweep::{run_sweep, write_csv, ResultRow, RunOptions, SweepFailure};
