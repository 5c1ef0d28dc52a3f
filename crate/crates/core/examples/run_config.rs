//! Drives the command layer from an in-memory TOML config and prints the
//! result table the CLI would write.
//!
//! cargo run --example run_config

use lieham::cli::{parse_config, run_command, Command};

const CONFIG: &str = r#"
[model]
kind = "cascade"
levels = 3
atoms = 1
g = [1.0, 1.0]
detunings = [0.0, 20.0, 0.0]

[run]
seed = 3
"#;

fn main() -> lieham::Result<()> {
    let cfg = parse_config(CONFIG)?;
    for cmd in [Command::Verify, Command::Spectrum] {
        let out = run_command(&cfg, cmd)?;
        print!("{}", out.report);
        print!("{}", out.table.to_csv_string()?);
        println!("success: {}\n", out.success);
    }
    Ok(())
}
