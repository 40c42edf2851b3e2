//! `ner`: one subcommand per pipeline operation.
//!
//! Exit codes: 0 success, 1 usage error, 2 data or validation error,
//! 3 internal error. Failures print one JSON line to stderr followed by a
//! human-readable message.

mod args;
mod commands;

use std::process::ExitCode;

use clap::{CommandFactory, FromArgMatches};

use args::Cli;

/// Why a command failed; decides the exit code.
#[derive(Debug)]
pub enum Failure {
    Usage(String),
    Core(wsner::Error),
    Review(wsner_review::ReviewError),
}

impl From<wsner::Error> for Failure {
    fn from(e: wsner::Error) -> Self {
        Failure::Core(e)
    }
}

impl From<wsner_review::ReviewError> for Failure {
    fn from(e: wsner_review::ReviewError) -> Self {
        match e {
            wsner_review::ReviewError::Core(e) => Failure::Core(e),
            other => Failure::Review(other),
        }
    }
}

/// A missing input file is a data error; other I/O failures are internal.
fn core_code(e: &wsner::Error) -> u8 {
    match e {
        wsner::Error::File { source, .. } if source.kind() == std::io::ErrorKind::NotFound => 2,
        e if e.is_data_error() => 2,
        _ => 3,
    }
}

/// Variant name of an error's `Debug` form, e.g. `Overlap`.
fn kind_of(debug: &str) -> String {
    debug
        .split(|c: char| !c.is_alphanumeric())
        .next()
        .unwrap_or("Error")
        .to_owned()
}

impl Failure {
    fn code(&self) -> u8 {
        match self {
            Failure::Usage(_) => 1,
            Failure::Core(e) => core_code(e),
            Failure::Review(wsner_review::ReviewError::MissingEnv(_)) => 1,
            Failure::Review(_) => 3,
        }
    }

    fn kind(&self) -> String {
        match self {
            Failure::Usage(_) => "Usage".to_owned(),
            Failure::Core(e) => kind_of(&format!("{e:?}")),
            Failure::Review(e) => kind_of(&format!("{e:?}")),
        }
    }

    fn message(&self) -> String {
        match self {
            Failure::Usage(m) => m.clone(),
            Failure::Core(e) => e.to_string(),
            Failure::Review(e) => e.to_string(),
        }
    }
}

fn long_version() -> String {
    format!(
        "{}\nmodel format: {}",
        env!("CARGO_PKG_VERSION"),
        wsner::crf::FORMAT_VERSION
    )
}

fn main() -> ExitCode {
    let command = Cli::command().long_version(long_version());
    let cli = match command
        .try_get_matches()
        .and_then(|m| Cli::from_arg_matches(&m))
    {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(1)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    let level = match cli.verbose {
        0 => log::LevelFilter::Warn,
        1 => log::LevelFilter::Info,
        _ => log::LevelFilter::Debug,
    };
    env_logger::Builder::new()
        .filter_level(level)
        .parse_default_env()
        .init();

    match commands::run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            let record = serde_json::json!({
                "error": {"kind": f.kind(), "code": f.code(), "message": f.message()}
            });
            eprintln!("{record}");
            eprintln!("error: {}", f.message());
            ExitCode::from(f.code())
        }
    }
}
