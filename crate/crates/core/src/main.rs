use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use npss_core::harness::{cmd_calibrate, cmd_complexity, cmd_detect, cmd_energy, cmd_gen, cmd_latency, Config};

#[derive(Parser)]
#[command(name = "npss", version, about = "NB-IoT NPSS timing acquisition experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// Flat `key = value` config file; defaults apply for missing keys
    #[arg(long)]
    config: Option<PathBuf>,
    /// Overrides the config's `seed`
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long, default_value = "out")]
    out: PathBuf,
}

#[derive(Subcommand)]
enum Command {
    /// Export the NPSS waveform, reference and a simulated stream
    Gen(Common),
    /// Calibrate per-depth detection thresholds on signal-free input
    Calibrate(Common),
    /// Detection-latency Monte Carlo
    Latency(Common),
    /// Energy savings sweep over RF power
    Energy(Common),
    /// Analytic operation counts of the correlator
    Complexity(Common),
    /// Run a detector on an I/Q file
    Detect(Common),
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let (run, common): (fn(Config, Option<u64>, &std::path::Path) -> npss_core::Result<Vec<PathBuf>>, Common) =
        match cli.command {
            Command::Gen(c) => (cmd_gen, c),
            Command::Calibrate(c) => (cmd_calibrate, c),
            Command::Latency(c) => (cmd_latency, c),
            Command::Energy(c) => (cmd_energy, c),
            Command::Complexity(c) => (cmd_complexity, c),
            Command::Detect(c) => (cmd_detect, c),
        };
    let result = common
        .config
        .as_deref()
        .map_or_else(|| Ok(Config::empty()), Config::load)
        .and_then(|cfg| run(cfg, common.seed, &common.out));
    match result {
        Ok(files) => {
            for f in files {
                println!("{}", f.display());
            }
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
