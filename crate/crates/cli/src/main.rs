use std::ffi::OsString;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::Parser;

mod commands;
mod config;

use config::Command;

/// Long options handled by clap; any other `--key=value` is a config override.
const FLAGS: &[&str] = &["config", "jobs", "help", "version"];

#[derive(Debug, Parser)]
#[command(
    name = "qkernel",
    version,
    about = "Quantum-kernel SVM experiments on tabular data",
    after_help = "Any other --key=value sets a configuration field by its dotted path, \
                  e.g. --seed=7 --kernel.gamma=0.1 --kernel.feature_map=RotX --grid.C=[1,10]. \
                  Values are parsed as JSON, falling back to a plain string."
)]
struct Cli {
    /// Experiment to run; may instead be set with the "command" config key.
    command: Option<Command>,

    /// JSON configuration file.
    #[arg(long)]
    config: Option<PathBuf>,

    /// Maximum worker threads.
    #[arg(long)]
    jobs: Option<usize>,
}

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error(transparent)]
    Core(#[from] qkernel::Error),
    #[error("cannot write {path}: {source}")]
    Output {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("{0} validation check(s) failed")]
    ChecksFailed(usize),
}

impl CliError {
    fn exit_code(&self) -> u8 {
        use qkernel::Error as E;
        match self {
            CliError::Config(_) => 2,
            CliError::Core(e) => match e.root() {
                E::Config(_) => 2,
                E::Ingestion(_) | E::DegenerateData(_) => 3,
                E::Convergence { .. } | E::DegenerateModel(_) => 4,
                _ => 5,
            },
            CliError::Output { .. } | CliError::ChecksFailed(_) => 5,
        }
    }
}

/// Separates `--key=value` overrides from the arguments clap understands.
fn split_args(args: impl IntoIterator<Item = OsString>) -> (Vec<OsString>, Vec<String>) {
    let mut passed = Vec::new();
    let mut overrides = Vec::new();
    for arg in args {
        match arg.to_str().and_then(|s| s.strip_prefix("--")) {
            Some(rest)
                if rest.contains('=') && !FLAGS.contains(&rest.split('=').next().unwrap_or("")) =>
            {
                overrides.push(rest.to_string());
            }
            _ => passed.push(arg),
        }
    }
    (passed, overrides)
}

fn run(cli: Cli, overrides: Vec<String>) -> Result<(), CliError> {
    let mut cfg = config::resolve(cli.config.as_deref(), &overrides)?;
    if cli.command.is_some() {
        cfg.command = cli.command;
    }
    if cli.jobs.is_some() {
        cfg.jobs = cli.jobs;
    }
    cfg.validate()?;
    if let Some(jobs) = cfg.jobs {
        rayon::ThreadPoolBuilder::new()
            .num_threads(jobs)
            .build_global()
            .map_err(|e| CliError::Config(format!("jobs: {e}")))?;
    }
    commands::run(&cfg)
}

fn main() -> ExitCode {
    let (args, overrides) = split_args(std::env::args_os());
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(2)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    match run(cli, overrides) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn overrides_are_split_from_flags() {
        let args = [
            "qkernel",
            "cv",
            "--config=c.json",
            "--seed=7",
            "--jobs",
            "2",
            "--kernel.gamma=0.1",
        ]
        .map(OsString::from);
        let (passed, overrides) = split_args(args);
        assert_eq!(
            passed,
            ["qkernel", "cv", "--config=c.json", "--jobs", "2"].map(OsString::from)
        );
        assert_eq!(overrides, ["seed=7", "kernel.gamma=0.1"]);
    }

    #[test]
    fn exit_codes_by_category() {
        use qkernel::Error as E;
        assert_eq!(CliError::Config(String::new()).exit_code(), 2);
        assert_eq!(CliError::Core(E::Ingestion(String::new())).exit_code(), 3);
        let fold = E::Fold {
            fold: 2,
            source: Box::new(E::DegenerateData(String::new())),
        };
        assert_eq!(CliError::Core(fold).exit_code(), 3);
        assert_eq!(CliError::Core(E::Usage(String::new())).exit_code(), 5);
        assert_eq!(CliError::ChecksFailed(1).exit_code(), 5);
    }
}
