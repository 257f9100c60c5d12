mod args;
mod config;
mod error;
mod manifest;
mod run;
mod spec;

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::error::ErrorKind;
use clap::Parser;
use serde_json::json;

use args::{expand_aliases, Cli, Command};
use config::{load_file_config, resolve, FileConfig, PROVIDER_ENV};
use error::{CliError, CliResult};
use manifest::{write_run, Manifest};
use spec::Resolved;

const DEFAULT_OUT_DIR: &str = "toedit-out";

fn main() -> ExitCode {
    let argv = expand_aliases(std::env::args().collect());
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) => {
            let _ = e.print();
            return ExitCode::SUCCESS;
        }
        Err(e) => return fail(CliError::config(e.render().to_string().trim_end())),
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => fail(e),
    }
}

fn fail(e: CliError) -> ExitCode {
    eprintln!("{}", e.to_json());
    ExitCode::from(e.exit_code() as u8)
}

fn run(cli: Cli) -> CliResult<()> {
    let file = match &cli.config {
        Some(path) => load_file_config(path)?,
        None => FileConfig::default(),
    };
    if let Some(jobs) = cli.jobs.or(file.jobs) {
        if jobs == 0 {
            return Err(CliError::config("jobs must be at least 1"));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(jobs)
            .build_global()
            .map_err(|e| CliError::config(format!("cannot start {jobs} workers: {e}")))?;
    }
    let out_dir = cli.out_dir.clone().or(file.out_dir.clone());

    if let Command::Replay(r) = &cli.command {
        let dir =
            out_dir.unwrap_or_else(|| r.manifest.parent().unwrap_or(Path::new(".")).join("replay"));
        return replay(&r.manifest, &dir);
    }

    let seed = cli.seed.or(file.seed).unwrap_or(0);
    let env_url = std::env::var(PROVIDER_ENV)
        .ok()
        .filter(|s| !s.trim().is_empty());
    let resolved = resolve(&cli.command, seed, &file, env_url.as_deref())?;
    let dir = out_dir.unwrap_or_else(|| PathBuf::from(DEFAULT_OUT_DIR));
    let (_, failure) = execute_into(resolved, &dir)?;
    failure.map_or(Ok(()), Err)
}

/// Runs `cmd`, writes its outputs and manifest into `dir` and reports them
/// on stdout.
fn execute_into(cmd: Resolved, dir: &Path) -> CliResult<(Manifest, Option<CliError>)> {
    let outcome = run::execute(&cmd)?;
    let manifest = Manifest::new(cmd, &outcome.outputs);
    write_run(dir, &outcome.outputs, &manifest)?;
    println!(
        "{}",
        json!({
            "command": manifest.command.name(),
            "out_dir": dir,
            "outputs": manifest.outputs,
        })
    );
    Ok((manifest, outcome.failure))
}

fn replay(path: &Path, dir: &Path) -> CliResult<()> {
    let recorded = Manifest::load(path)?;
    let (fresh, failure) = execute_into(recorded.command.clone(), dir)?;
    let mismatches = recorded.mismatches(&fresh);
    if !mismatches.is_empty() {
        return Err(CliError::Replay(mismatches));
    }
    failure.map_or(Ok(()), Err)
}
