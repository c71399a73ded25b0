//! Command-line front end for perspective crop experiments.
//!
//! [`run`] parses an argument vector, executes one subcommand and returns the
//! process exit code: 0 on success, 1 when the command line or an input file
//! is invalid, 2 when the computation itself fails. Every command that writes
//! files also writes `<primary output>.manifest.json`, from which `pcl rerun`
//! can reproduce and verify the outputs.

use std::path::PathBuf;

use clap::Parser;

pub mod args;
mod commands;
pub mod manifest;
mod table;

use args::{Cli, Command, RerunArgs};
use manifest::{
    config_hash, manifest_path, now_unix_ms, read_manifest, write_manifest, FileDigest, RunManifest,
};

pub const EXIT_OK: i32 = 0;
pub const EXIT_INVALID: i32 = 1;
pub const EXIT_FAILED: i32 = 2;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Invalid(String),
    #[error("{0}")]
    Failed(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Invalid(_) => EXIT_INVALID,
            CliError::Failed(_) => EXIT_FAILED,
        }
    }
}

impl From<pcl_core::Error> for CliError {
    fn from(e: pcl_core::Error) -> Self {
        use pcl_core::Error as E;
        match e {
            E::InvalidInput(_) | E::InvalidCamera(_) | E::Format { .. } | E::DegenerateBoundingBox { .. } => {
                CliError::Invalid(e.to_string())
            }
            _ => CliError::Failed(e.to_string()),
        }
    }
}

/// Any failure while reading an input counts as invalid input.
pub(crate) fn invalid(e: pcl_core::Error) -> CliError {
    CliError::Invalid(e.to_string())
}

pub type CliResult<T> = std::result::Result<T, CliError>;

/// Runs one command line and returns the exit code.
pub fn run<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let argv: Vec<std::ffi::OsString> = argv.into_iter().map(Into::into).collect();
    let cli = match Cli::try_parse_from(&argv) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_INVALID } else { EXIT_OK };
            let _ = e.print();
            return code;
        }
    };
    let argv: Vec<String> = argv.iter().map(|a| a.to_string_lossy().into_owned()).collect();
    let result = match cli.command {
        Command::Rerun(r) => rerun(&r, &argv),
        cmd => execute(cmd, &argv).map(|_| ()),
    };
    match result {
        Ok(()) => EXIT_OK,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

/// Hashes the inputs, runs the command and writes its manifest.
fn execute(cmd: Command, argv: &[String]) -> CliResult<Vec<FileDigest>> {
    let started = now_unix_ms();
    let inputs = cmd
        .inputs()
        .iter()
        .map(|p| FileDigest::of(p))
        .collect::<pcl_core::Result<Vec<_>>>()
        .map_err(invalid)?;
    let hash = config_hash(&cmd, &inputs).map_err(invalid)?;
    let commands::Outcome { written, seed } = commands::dispatch(&cmd)?;
    let Some(primary) = written.first() else {
        return Ok(Vec::new());
    };
    let outputs = written
        .iter()
        .map(|p| FileDigest::of(p))
        .collect::<pcl_core::Result<Vec<_>>>()?;
    let m = RunManifest {
        tool: env!("CARGO_PKG_NAME").into(),
        version: env!("CARGO_PKG_VERSION").into(),
        config_hash: hash,
        seed,
        argv: argv.to_vec(),
        command: cmd.clone(),
        inputs,
        outputs: outputs.clone(),
        started_unix_ms: started,
        finished_unix_ms: now_unix_ms(),
    };
    write_manifest(&manifest_path(primary), &m)?;
    Ok(outputs)
}

fn rerun(args: &RerunArgs, argv: &[String]) -> CliResult<()> {
    let m = read_manifest(&args.manifest).map_err(invalid)?;
    let inputs = m
        .command
        .inputs()
        .iter()
        .map(|p| FileDigest::of(p))
        .collect::<pcl_core::Result<Vec<_>>>()
        .map_err(invalid)?;
    let hash = config_hash(&m.command, &inputs).map_err(invalid)?;
    if hash != m.config_hash {
        return Err(CliError::Invalid(format!(
            "{}: config hash mismatch (inputs or command changed since the recorded run)",
            args.manifest.display()
        )));
    }
    let mut cmd = m.command.clone();
    if let Some(dir) = &args.out_dir {
        std::fs::create_dir_all(dir).map_err(|e| CliError::Failed(format!("{}: {e}", dir.display())))?;
        for out in cmd.outputs_mut() {
            let name = out
                .file_name()
                .ok_or_else(|| CliError::Invalid(format!("output {} has no file name", out.display())))?;
            *out = dir.join(name);
        }
    }
    let outputs = execute(cmd, argv)?;
    let mismatches = compare_outputs(&m.outputs, &outputs);
    if mismatches.is_empty() {
        println!("reproduced {} output file(s) byte for byte", outputs.len());
        Ok(())
    } else {
        Err(CliError::Failed(format!("outputs differ from the manifest:\n  {}", mismatches.join("\n  "))))
    }
}

fn compare_outputs(expected: &[FileDigest], actual: &[FileDigest]) -> Vec<String> {
    let mut out = Vec::new();
    if expected.len() != actual.len() {
        out.push(format!("expected {} outputs, got {}", expected.len(), actual.len()));
    }
    for (e, a) in expected.iter().zip(actual) {
        if e.sha256 != a.sha256 || file_name(&e.path) != file_name(&a.path) {
            out.push(format!("{} vs {}", e.path.display(), a.path.display()));
        }
    }
    out
}

fn file_name(p: &std::path::Path) -> Option<PathBuf> {
    p.file_name().map(PathBuf::from)
}
