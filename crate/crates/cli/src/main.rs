use std::path::PathBuf;
use std::process::ExitCode;

use ait_sim::config::parse_engine;
use ait_sim::{load_config, resolve_config_path, run_command, Command, Overrides};
use clap::Parser;

/// Simulate and fit acoustically induced transparency spectra.
#[derive(Parser, Debug)]
#[command(name = "ait-sim", version)]
struct Cli {
    /// design | simulate | sweep | stark | fit | compare | emit-config
    #[arg(value_parser = |s: &str| s.parse::<Command>())]
    command: Command,
    #[arg(long)]
    config: PathBuf,
    /// section.key=value, applied after the file
    #[arg(long = "set", value_name = "SECTION.KEY=VALUE")]
    set: Vec<String>,
    #[arg(long)]
    out: Option<PathBuf>,
    /// me | mf
    #[arg(long, value_parser = |s: &str| parse_engine(s).ok_or_else(|| format!("expected me or mf, got `{s}`")))]
    engine: Option<ait_core::spectroscopy::Engine>,
    #[arg(long)]
    threads: Option<usize>,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let path = resolve_config_path(&cli.config);
    let text = match std::fs::read_to_string(&path) {
        Ok(t) => t,
        Err(e) => {
            eprintln!("error: reading {}: {e}", path.display());
            return ExitCode::from(2);
        }
    };
    let overrides = Overrides {
        set: cli.set,
        out: cli.out,
        engine: cli.engine,
        threads: cli.threads,
    };
    let config = match load_config(&text, &overrides) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("error: {}: {e}", path.display());
            return ExitCode::from(2);
        }
    };
    match run_command(cli.command, &config) {
        Ok(report) => {
            print!("{}", report.stdout);
            for f in &report.files {
                eprintln!("wrote {}", f.display());
            }
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
