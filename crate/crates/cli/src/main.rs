use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use soficlab_cli::{pipeline, suite, ExperimentConfig};

#[derive(Parser)]
#[command(
    name = "soficlab",
    version,
    about = "Finite-scale experiments with approximate homomorphisms"
)]
struct Cli {
    /// Worker threads; results do not depend on this.
    #[arg(long, global = true, env = "SOFICLAB_THREADS")]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the pipelines of a config and write the report.
    Run {
        config: PathBuf,
        /// Overrides the config's output directory.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Summarize a config without running it.
    Describe { config: PathBuf },
    /// Run the acceptance catalog.
    Suite {
        /// Only these criteria (1-11).
        #[arg(long, value_delimiter = ',')]
        only: Vec<usize>,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Some(n) = cli.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
        {
            eprintln!("warning: thread pool: {e}");
        }
    }
    match execute(cli.command) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}

fn execute(command: Command) -> soficlab_cli::Result<bool> {
    match command {
        Command::Run { config, out } => {
            let mut cfg = ExperimentConfig::load(&config)?;
            if let Some(out) = out {
                cfg.output = out;
                cfg.base_dir = None;
            }
            let report = pipeline::run(&cfg)?;
            let dir = cfg.output_dir();
            report.write(&dir)?;
            for s in &report.stages {
                let at = s.size.map(|n| format!(" @ {n}")).unwrap_or_default();
                println!(
                    "{}{at}: {}",
                    s.pipeline,
                    if s.pass { "pass" } else { "FAIL" }
                );
            }
            for f in report.failed_checks() {
                println!("  failed: {f}");
            }
            println!("report written to {}", dir.display());
            Ok(report.pass)
        }
        Command::Describe { config } => {
            let cfg = ExperimentConfig::load(&config)?;
            print!("{}", pipeline::describe(&cfg)?);
            Ok(true)
        }
        Command::Suite { only } => {
            let ids = if only.is_empty() {
                (1..=11).collect()
            } else {
                only
            };
            let mut pass = true;
            for id in ids {
                let c = suite::run_one(id);
                println!(
                    "criterion {:>2} {:<34} {} ({:.2}s) {}",
                    c.id,
                    c.name,
                    if c.pass { "PASS" } else { "FAIL" },
                    c.seconds,
                    c.detail
                );
                pass &= c.pass;
            }
            Ok(pass)
        }
    }
}
