//! Library side of the `kpcacam` command: configuration, report schema and
//! the four subcommands.

pub mod args;
pub mod compare;
pub mod config;
pub mod overlay;
pub mod report;
pub mod run;

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use args::{Cli, Command};
use config::RunConfig;

pub const EXIT_PARTIAL: u8 = 1;
pub const EXIT_CONFIG: u8 = 2;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error("input error: {0}")]
    Input(String),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error(transparent)]
    Core(#[from] kpcacam::Error),
}

impl CliError {
    pub(crate) fn io(path: &Path, source: std::io::Error) -> Self {
        CliError::Io {
            path: path.to_path_buf(),
            source,
        }
    }
}

/// Runs a parsed command. Exit code 0 on success, 1 when some images
/// failed, 2 when the run could not start.
pub fn run(cli: Cli) -> ExitCode {
    let outcome = match cli.command {
        Command::Report(a) => compare::cmd_report(&a.inputs, &a.out).map(|text| {
            print!("{text}");
            0
        }),
        Command::Cam(a) => RunConfig::from_args(&a).and_then(|c| run::cmd_cam(&c)),
        Command::Localize(a) => RunConfig::from_args(&a).and_then(|c| run::cmd_localize(&c)),
        Command::Road(a) => RunConfig::from_args(&a).and_then(|c| run::cmd_road(&c)),
    };
    match outcome {
        Ok(0) => ExitCode::SUCCESS,
        Ok(failed) => {
            log::error!("{failed} image(s) failed; see errors in the report");
            ExitCode::from(EXIT_PARTIAL)
        }
        Err(e) => {
            log::error!("{e}");
            eprintln!("error: {e}");
            ExitCode::from(EXIT_CONFIG)
        }
    }
}
