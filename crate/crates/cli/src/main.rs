use std::fs::File;
use std::io::{self, BufWriter};
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use qkd_cli::{run, ConfigError, FlagOverrides, RunError, ScenarioFile};

#[derive(Parser)]
#[command(name = "qkd", version, about = "Key-rate sweeps for passive MDI-QKD and conference key agreement")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Run a scenario and write one CSV row per sweep point.
    Run {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
        /// Integration points per estimate.
        #[arg(long)]
        samples: Option<usize>,
        /// Worker threads; 0 uses all cores.
        #[arg(long)]
        threads: Option<usize>,
        /// Output file; standard output if absent.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn execute(cli: Cli) -> Result<(), RunError> {
    let Cmd::Run { config, seed, samples, threads, out } = cli.cmd;
    let text =
        std::fs::read_to_string(&config).map_err(|e| ConfigError(format!("cannot read {}: {e}", config.display())))?;
    let scenario = ScenarioFile::parse(&text)?.resolve(FlagOverrides { seed, samples, threads })?;
    match out {
        Some(path) => {
            let f = File::create(&path).map_err(RunError::Io)?;
            run(&scenario, BufWriter::new(f))
        }
        None => run(&scenario, io::stdout().lock()),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    match execute(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("qkd: {}", e.to_string().replace('\n', " "));
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
