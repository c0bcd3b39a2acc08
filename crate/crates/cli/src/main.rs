//! `fkdv`: runs evolution, ground-state, scenario and linear jobs from TOML
//! configs and writes their artifacts plus a `manifest.json` to `--out`.
//!
//! Exit codes: 0 success, 1 configuration error or failed job, 2 blow-up.

mod jobs;
mod manifest;

use std::path::PathBuf;
use std::process::ExitCode;
use std::time::Instant;

use clap::{Args, Parser, Subcommand};

use manifest::{Manifest, Outcome};

#[derive(Parser)]
#[command(name = "fkdv", version, about = "Pseudospectral laboratory for the fractional KdV equation")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct Common {
    /// TOML configuration file.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output directory, created if missing.
    #[arg(long, default_value = "fkdv-out")]
    out: PathBuf,
    /// Only report errors.
    #[arg(long)]
    quiet: bool,
}

#[derive(Subcommand)]
enum Command {
    /// Integrate the nonlinear equation.
    Evolve(Common),
    /// Compute a traveling-wave profile by Petviashvili iteration.
    Groundstate(Common),
    /// Run a named scenario; the config file, if any, overrides its defaults.
    Scenario {
        name: String,
        #[command(flatten)]
        common: Common,
    },
    /// Apply the linear group at a list of times.
    Linear(Common),
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let (label, scenario, common) = match &cli.command {
        Command::Evolve(c) => ("evolve", None, c),
        Command::Groundstate(c) => ("groundstate", None, c),
        Command::Scenario { name, common } => ("scenario", Some(name.clone()), common),
        Command::Linear(c) => ("linear", None, c),
    };
    env_logger::Builder::new()
        .filter_level(if common.quiet {
            log::LevelFilter::Error
        } else {
            log::LevelFilter::Warn
        })
        .parse_env("FKDV_LOG")
        .init();

    if let Err(e) = std::fs::create_dir_all(&common.out) {
        eprintln!("error: cannot create {}: {e}", common.out.display());
        return ExitCode::from(1);
    }
    let start = Instant::now();
    let mut manifest = Manifest::new(label, scenario.clone(), common.config.as_deref(), &common.out);
    let mut ctx = jobs::Context::new(common.out.clone(), common.quiet);

    let outcome = match read_config(common.config.as_ref(), label != "scenario") {
        Err(msg) => Outcome::ConfigError(msg),
        Ok(bytes) => {
            manifest.set_config_bytes(bytes.as_deref());
            let text = bytes.map(|b| String::from_utf8(b).map_err(|_| "config is not UTF-8".to_string()));
            match text.transpose() {
                Err(msg) => Outcome::ConfigError(msg),
                Ok(text) => match fkdv::scenarios::thread_pool() {
                    Err(e) => Outcome::from_error(e),
                    Ok(pool) => pool.install(|| {
                        let text = text.as_deref();
                        let res = match &cli.command {
                            Command::Evolve(_) => jobs::evolve(&mut ctx, text.unwrap_or_default()),
                            Command::Groundstate(_) => jobs::groundstate(&mut ctx, text.unwrap_or_default()),
                            Command::Scenario { name, .. } => jobs::scenario(&mut ctx, name, text),
                            Command::Linear(_) => jobs::linear(&mut ctx, text.unwrap_or_default()),
                        };
                        res.unwrap_or_else(Outcome::from_error)
                    }),
                },
            }
        }
    };

    manifest.finish(&outcome, ctx.artifacts(), start.elapsed().as_secs_f64());
    if let Err(e) = manifest.write(&common.out) {
        eprintln!("error: cannot write manifest: {e}");
        return ExitCode::from(1);
    }
    if let Some(msg) = outcome.message() {
        eprintln!("{}: {msg}", outcome.status().replace('_', " "));
    }
    ExitCode::from(outcome.exit_code())
}

fn read_config(path: Option<&PathBuf>, required: bool) -> Result<Option<Vec<u8>>, String> {
    match path {
        None if required => Err("--config is required for this command".into()),
        None => Ok(None),
        Some(p) => std::fs::read(p)
            .map(Some)
            .map_err(|e| format!("cannot read {}: {e}", p.display())),
    }
}
