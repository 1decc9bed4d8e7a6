use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::Context;
use clap::Parser;
use renormlab::run::{config_error_report, run, CheckStatus, RunOptions};
use renormlab::scenario::{Command, Scenario};

/// Run a scenario pipeline and write a JSON report.
#[derive(Debug, Parser)]
#[command(name = "renormlab", version, about)]
struct Cli {
    #[arg(value_enum)]
    command: Command,
    /// Scenario file (TOML).
    #[arg(long)]
    scenario: PathBuf,
    /// Output directory for reports and tables.
    #[arg(long, env = "RENORMLAB_OUT")]
    out: PathBuf,
    /// Overrides the scenario seed.
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long, env = "RENORMLAB_THREADS")]
    threads: Option<usize>,
    /// Also write the assembled form to form.json.
    #[arg(long)]
    dump_form: bool,
}

fn main() -> ExitCode {
    match real_main() {
        Ok(code) => ExitCode::from(code as u8),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}

fn real_main() -> anyhow::Result<i32> {
    let cli = Cli::parse();
    if let Some(n) = cli.threads {
        rayon::ThreadPoolBuilder::new().num_threads(n).build_global().context("thread pool")?;
    }
    let scenario = match Scenario::load(&cli.scenario) {
        Ok(s) => s,
        Err(e) => {
            eprintln!("error: {e}");
            let report = config_error_report(cli.command, &e, &cli.out).context("writing report")?;
            return Ok(report.exit_code);
        }
    };
    let opts = RunOptions { out_dir: cli.out.clone(), seed: cli.seed, dump_form: cli.dump_form };
    let report = run(&scenario, cli.command, &opts).context("writing report")?;
    for c in &report.checks {
        let status = match c.status {
            CheckStatus::Pass => "pass",
            CheckStatus::Fail => "FAIL",
            CheckStatus::InsufficientPaths => "insufficient paths",
            CheckStatus::Info => "info",
        };
        println!("{status:>18}  {}", c.name);
    }
    if let Some(e) = &report.error {
        eprintln!("error ({}): {}", e.kind, e.message);
    }
    println!("{}: exit {} ({})", report.command, report.exit_code, cli.out.join(format!("{}.json", report.command)).display());
    Ok(report.exit_code)
}
