//! Drives the scenario pipelines from code, the same way the command-line tool does.
//!
//! ```text
//! cargo run --example scenario_run -- scenarios/grid16_mixed.toml verify
//! ```

use std::path::PathBuf;

use renormlab::run::{run, CheckStatus, RunOptions};
use renormlab::scenario::{Command, Scenario};

fn main() -> anyhow::Result<()> {
    let mut args = std::env::args().skip(1);
    let path = PathBuf::from(args.next().unwrap_or_else(|| concat!(env!("CARGO_MANIFEST_DIR"), "/scenarios/p3_dirac.toml").into()));
    let commands: Vec<Command> = match args.next() {
        Some(name) => vec![<Command as clap::ValueEnum>::from_str(&name, true).map_err(anyhow::Error::msg)?],
        None => vec![Command::Solve, Command::Verify, Command::Structure],
    };
    let scenario = Scenario::load(&path)?;
    let out = std::env::temp_dir().join(format!("renormlab-{}", scenario.name));
    let opts = RunOptions { out_dir: out.clone(), seed: None, dump_form: false };
    for command in commands {
        let report = run(&scenario, command, &opts)?;
        let failed: Vec<&str> = report.checks.iter().filter(|c| c.status == CheckStatus::Fail).map(|c| c.name.as_str()).collect();
        println!("{}: {} checks, exit {}, failing {:?}", command.name(), report.checks.len(), report.exit_code, failed);
    }
    println!("reports in {}", out.display());
    Ok(())
}
