//! Configuration, trace and report file formats plus the command layer.

pub mod commands;
pub mod config;
pub mod report;
pub mod trace_io;

pub use commands::{run, EXIT_INVALID, EXIT_OK, EXIT_SOLVER};
pub use config::{parse_config, serialize_config, ResolvedSpec, SimulationSpec};
pub use report::{write_report, ReportDocument};
pub use trace_io::{read_trace, write_trace};
