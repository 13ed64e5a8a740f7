//! Command-line pipeline: each subcommand reads its inputs, writes its
//! artifacts atomically into `--out-dir`, and records a `run.json` manifest
//! from which `replay` reproduces the outputs.

pub mod args;
pub mod manifest;
mod pipeline;

use std::ffi::OsString;
use std::fs;
use std::io;
use std::path::{Path, PathBuf};

use clap::Parser;
use ocanomaly::aggregate::AggregateError;
use ocanomaly::detect::DetectError;
use ocanomaly::features::FeatureError;
use ocanomaly::ocel::OcelError;
use ocanomaly::oracle::OracleError;
use ocanomaly::reduce::ReduceError;
use ocanomaly::synthgen::SynthError;
use thiserror::Error;

pub use args::{Cli, Command};
pub use manifest::{FileDigest, RunManifest, MANIFEST_FILE};

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Validation(String),
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: io::Error },
    #[error("{0}")]
    Network(String),
}

impl CliError {
    pub fn io(path: &Path, source: io::Error) -> Self {
        CliError::Io {
            path: path.to_path_buf(),
            source,
        }
    }

    /// 1 for invalid input or configuration, 2 for file and network failures.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Validation(_) => 1,
            CliError::Io { .. } | CliError::Network(_) => 2,
        }
    }
}

macro_rules! validation_from {
    ($($t:ty),*) => {$(
        impl From<$t> for CliError {
            fn from(e: $t) -> Self {
                CliError::Validation(e.to_string())
            }
        }
    )*};
}

validation_from!(OcelError, FeatureError, ReduceError, DetectError, AggregateError, SynthError);

impl From<OracleError> for CliError {
    fn from(e: OracleError) -> Self {
        match e {
            OracleError::Timeout | OracleError::HttpError(_) | OracleError::Transport(_) => {
                CliError::Network(e.to_string())
            }
            other => CliError::Validation(other.to_string()),
        }
    }
}

/// Parse arguments, run, report errors on stderr and return the exit code.
pub fn run_from_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    match run(cli.command) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

pub fn run(command: Command) -> Result<(), CliError> {
    match command {
        Command::Replay(a) => {
            let report = replay(&a.manifest, a.out_dir.as_deref())?;
            println!("{report}");
            Ok(())
        }
        other => {
            let manifest = execute(other)?;
            println!(
                "{}: wrote {} files",
                manifest.command.name(),
                manifest.outputs.len() + 1
            );
            Ok(())
        }
    }
}

fn absolute(path: &Path) -> Result<PathBuf, CliError> {
    std::path::absolute(path).map_err(|e| CliError::io(path, e))
}

/// Run a non-replay command and write its manifest next to its outputs.
pub fn execute(mut command: Command) -> Result<RunManifest, CliError> {
    if matches!(command, Command::Replay(_)) {
        return Err(CliError::Validation("replay cannot be recorded".into()));
    }
    for p in command.inputs_mut() {
        *p = absolute(p)?;
    }
    let out = absolute(command.out_dir_mut())?;
    *command.out_dir_mut() = out.clone();

    let mut inputs = Vec::new();
    let mut digests = Vec::new();
    for path in command.inputs() {
        let bytes = fs::read(&path).map_err(|e| CliError::io(&path, e))?;
        digests.push(FileDigest {
            path: path.display().to_string(),
            sha256: manifest::sha256_hex(&bytes),
        });
        inputs.push(bytes);
    }

    let mut dir = manifest::OutputDir::new(&out)?;
    pipeline::dispatch(&command, &inputs, &mut dir)?;
    let manifest = RunManifest {
        tool: env!("CARGO_PKG_NAME").to_string(),
        version: env!("CARGO_PKG_VERSION").to_string(),
        seed: command.seed(),
        command,
        inputs: digests,
        outputs: dir.finish(),
    };
    manifest::write_atomic(&out.join(MANIFEST_FILE), manifest.to_json().as_bytes())?;
    Ok(manifest)
}

/// Rerun the command in `manifest_path` into `out_dir` (a temporary
/// directory when `None`) and check every output digest.
pub fn replay(manifest_path: &Path, out_dir: Option<&Path>) -> Result<String, CliError> {
    let recorded = RunManifest::read(manifest_path)?;
    if recorded.version != env!("CARGO_PKG_VERSION") {
        log::warn!(
            "manifest written by version {}, replaying with {}",
            recorded.version,
            env!("CARGO_PKG_VERSION")
        );
    }
    for input in &recorded.inputs {
        let path = Path::new(&input.path);
        let bytes = fs::read(path).map_err(|e| CliError::io(path, e))?;
        if manifest::sha256_hex(&bytes) != input.sha256 {
            return Err(CliError::Validation(format!(
                "input {} changed since the recorded run",
                input.path
            )));
        }
    }

    let scratch;
    let target = match out_dir {
        Some(p) => p.to_path_buf(),
        None => {
            scratch = tempfile::tempdir().map_err(|e| CliError::io(Path::new("."), e))?;
            scratch.path().to_path_buf()
        }
    };
    let mut command = recorded.command.clone();
    *command.out_dir_mut() = target;
    let rerun = execute(command)?;

    let mut differing: Vec<&str> = Vec::new();
    for want in &recorded.outputs {
        match rerun.outputs.iter().find(|g| g.path == want.path) {
            Some(got) if got.sha256 == want.sha256 => {}
            _ => differing.push(&want.path),
        }
    }
    for got in &rerun.outputs {
        if !recorded.outputs.iter().any(|w| w.path == got.path) {
            differing.push(&got.path);
        }
    }
    if differing.is_empty() {
        Ok(format!(
            "replay of {}: {} outputs identical",
            recorded.command.name(),
            recorded.outputs.len()
        ))
    } else {
        Err(CliError::Validation(format!(
            "replay of {} differs in: {}",
            recorded.command.name(),
            differing.join(", ")
        )))
    }
}
