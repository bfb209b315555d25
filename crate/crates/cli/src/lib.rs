//! Batch front end for the AIT simulator: config loading, subcommands and
//! file outputs.

pub mod commands;
pub mod config;
pub mod output;

use std::path::{Path, PathBuf};

use ait_core::spectroscopy::Engine;

pub use commands::{compare_engines, run_command, Command, Comparison, Report};
pub use config::{parse_config, ConfigError, RawConfig, RunConfig};

/// Optional directory searched for relative config paths that do not exist
/// in the working directory.
pub const CONFIG_DIR_VAR: &str = "AIT_SIM_CONFIG_DIR";

/// Command-line adjustments applied on top of the config file.
#[derive(Clone, Debug, Default)]
pub struct Overrides {
    pub set: Vec<String>,
    pub out: Option<PathBuf>,
    pub engine: Option<Engine>,
    pub threads: Option<usize>,
}

pub fn resolve_config_path(path: &Path) -> PathBuf {
    if path.is_relative() && !path.exists() {
        if let Some(dir) = std::env::var_os(CONFIG_DIR_VAR) {
            let candidate = Path::new(&dir).join(path);
            if candidate.exists() {
                return candidate;
            }
        }
    }
    path.to_path_buf()
}

/// Parses `text`, applies `--set` assignments, then the flag overrides.
pub fn load_config(text: &str, overrides: &Overrides) -> Result<RunConfig, ConfigError> {
    let mut raw = RawConfig::parse(text)?;
    for s in &overrides.set {
        raw.set(s)?;
    }
    let mut config = RunConfig::from_raw(raw)?;
    if let Some(dir) = &overrides.out {
        config.output.dir = dir.clone();
    }
    if let Some(e) = overrides.engine {
        config.run.engine = e;
    }
    if let Some(n) = overrides.threads {
        config.run.threads = n;
    }
    Ok(config)
}
