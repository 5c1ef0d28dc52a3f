//! Configuration, result tables and the command implementations behind the
//! `lieham` binary.

pub mod commands;
pub mod config;
pub mod table;

pub use commands::{run_command, Command, CommandOutput};
pub use config::{
    parse_config, Duration, EvolveSettings, FrameChoice, ModelConfig, RunConfig, RunSettings,
};
pub use table::{format_value, parse_table, read_table, write_table, ResultTable};
