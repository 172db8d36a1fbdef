//! Library side of the `ppsynth` command: dataset loading, the eval, synth
//! and diagnose pipelines, and report writing.
//!
//! Exit codes: 0 reliable result, 1 failure, 2 fitted but unreliable,
//! 3 no reliable model within the budget, 64 bad command line.

use std::ffi::OsString;
use std::fmt;
use std::io::Write;

use clap::Parser;

pub mod args;
pub mod commands;
pub mod dataset;
pub mod report;

pub use args::{Cli, Command};
pub use commands::{cmd_diagnose, cmd_eval, cmd_grammar, cmd_synth, evaluate_source, EvalOutput};
pub use dataset::{load_dataset, DatasetFile};
pub use report::ReportFile;

pub const EXIT_OK: i32 = 0;
pub const EXIT_FAILURE: i32 = 1;
pub const EXIT_UNRELIABLE: i32 = 2;
pub const EXIT_NO_VALID_MODEL: i32 = 3;
pub const EXIT_USAGE: i32 = 64;

/// The pipeline stage a failure belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FailureKind {
    Input,
    Syntax,
    Semantic,
    Bind,
    Init,
    Sampler,
    Generator,
    Io,
}

impl fmt::Display for FailureKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            FailureKind::Input => "input",
            FailureKind::Syntax => "syntax",
            FailureKind::Semantic => "semantic",
            FailureKind::Bind => "bind",
            FailureKind::Init => "init",
            FailureKind::Sampler => "sampler",
            FailureKind::Generator => "generator",
            FailureKind::Io => "io",
        })
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
#[error("error[{kind}]: {message}")]
pub struct CliError {
    pub kind: FailureKind,
    pub message: String,
    /// Source excerpt pointing at the offending tokens.
    pub excerpt: Option<String>,
}

impl CliError {
    pub fn new(kind: FailureKind, message: impl Into<String>) -> CliError {
        CliError { kind, message: message.into(), excerpt: None }
    }

    pub fn input(message: impl Into<String>) -> CliError {
        CliError::new(FailureKind::Input, message)
    }

    pub fn io(what: impl fmt::Display, e: std::io::Error) -> CliError {
        CliError::new(FailureKind::Io, format!("{what}: {e}"))
    }
}

/// Parses the command line and runs it. Returns the process exit code.
pub fn main_with_args<I, T>(argv: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    match Cli::try_parse_from(argv) {
        Ok(cli) => run(cli, out, err),
        Err(e) if e.use_stderr() => {
            let _ = write!(err, "{}", e.render());
            EXIT_USAGE
        }
        Err(e) => {
            let _ = write!(out, "{}", e.render());
            EXIT_OK
        }
    }
}

pub fn run(cli: Cli, out: &mut dyn Write, err: &mut dyn Write) -> i32 {
    let result = match &cli.command {
        Command::Eval(a) => cmd_eval(a, out, err),
        Command::Synth(a) => cmd_synth(a, out, err),
        Command::Diagnose(a) => cmd_diagnose(a, out, err),
        Command::Grammar => cmd_grammar(out),
        Command::Dataset { source } => commands::cmd_dataset(source, out),
    };
    match result {
        Ok(code) => code,
        Err(e) => {
            let _ = writeln!(err, "{e}");
            if let Some(x) = &e.excerpt {
                let _ = write!(err, "{x}");
            }
            EXIT_FAILURE
        }
    }
}
