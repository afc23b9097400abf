//! Command-line driver: binds a config file to the experiments and writes
//! reproducible data files.

pub mod commands;
pub mod config;
pub mod output;

use std::ffi::OsString;
use std::io::Write;
use std::path::PathBuf;

use clap::{Parser, Subcommand};

use crate::Error;
use commands::CheckRow;
use config::LoadedConfig;
use output::{Header, Writer};

#[derive(Debug, Parser)]
#[command(name = "holonomic", version, about = "Holonomic gate simulation and tomography pipeline")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
    /// Experiment config (TOML, or JSON); built-in defaults when absent.
    #[arg(long, global = true, value_name = "PATH")]
    pub config: Option<PathBuf>,
    /// Overrides the config seed.
    #[arg(long, global = true, value_name = "N")]
    pub seed: Option<u64>,
    /// Infinite-shot readout.
    #[arg(long, global = true)]
    pub exact: bool,
    /// Overrides the config output directory.
    #[arg(long, global = true, value_name = "DIR")]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Subcommand)]
pub enum Command {
    /// Propagated and connection holonomy of the configured gate.
    Gate,
    /// Four-input process tomography of the configured gate.
    Qpt,
    /// Register CNOT on the test inputs, with state tomography.
    Cnot,
    /// Fidelity decay under gate concatenation and the per-gate error fit.
    Decay,
    /// Rabi-error scan comparing the geometric and the dynamic NOT.
    Sweep,
    /// Runs the invariant suite; exit status 0 iff every check passes.
    Check,
}

impl Command {
    fn name(self) -> &'static str {
        match self {
            Command::Gate => "gate",
            Command::Qpt => "qpt",
            Command::Cnot => "cnot",
            Command::Decay => "decay",
            Command::Sweep => "sweep",
            Command::Check => "check",
        }
    }
}

/// Parses `args` (program name first), runs the command and returns the
/// process exit code: 0 success, 1 validation, 2 numerical failure.
pub fn run<I, T>(args: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let text = e.render().to_string();
            let _ = if code == 0 { write!(out, "{text}") } else { write!(err, "{text}") };
            return code;
        }
    };
    match execute(&cli, out) {
        Ok(code) => code,
        Err(e) => {
            let _ = writeln!(err, "error: {e}");
            e.exit_code()
        }
    }
}

fn execute(cli: &Cli, out: &mut dyn Write) -> crate::Result<i32> {
    if cli.command == Command::Check {
        return Ok(check(cli, out));
    }
    let loaded = LoadedConfig::load(cli.config.as_deref())?;
    let resolved = loaded.config.resolve(cli.seed, cli.exact)?;
    let dir = cli.out.clone().unwrap_or_else(|| loaded.config.output_dir.clone());
    let mut w = Writer::new(&dir, Header::new(cli.command.name(), &loaded.sha256, resolved.seed))?;
    match cli.command {
        Command::Gate => commands::cmd_gate(&resolved, &mut w)?,
        Command::Qpt => commands::cmd_qpt(&resolved, &mut w)?,
        Command::Cnot => commands::cmd_cnot(&resolved, &mut w)?,
        Command::Decay => {
            let d = &loaded.config.decay;
            commands::cmd_decay(&resolved, d.n_max, &d.initial, d.injected_epsilon, &mut w)?
        }
        Command::Sweep => commands::cmd_sweep(&resolved, &loaded.config.sweep.rabi_error_fractions, &mut w)?,
        Command::Check => unreachable!("handled above"),
    }
    for path in w.written() {
        let _ = writeln!(out, "wrote {}", path.display());
    }
    Ok(0)
}

/// The check table, also written to `check.json` when `--out` is given.
/// Config problems are listed as failures with exit code 1;
/// failed invariants give exit code 2.
fn check(cli: &Cli, out: &mut dyn Write) -> i32 {
    let resolved = LoadedConfig::load(cli.config.as_deref()).and_then(|l| {
        let r = l.config.resolve(cli.seed, cli.exact)?;
        Ok((l, r))
    });
    let (rows, code) = match resolved {
        Err(e) => (vec![CheckRow::failed("config validation", e.to_string())], e.exit_code()),
        Ok((loaded, r)) => {
            let mut rows = vec![CheckRow {
                name: "config validation".into(),
                value: None,
                tolerance: r.tolerance,
                passed: true,
                message: None,
            }];
            rows.extend(commands::invariant_suite(&r));
            let code = if rows.iter().all(|row| row.passed) { 0 } else { 2 };
            if let Some(dir) = &cli.out {
                let written = Writer::new(dir, Header::new("check", &loaded.sha256, r.seed)).and_then(|mut w| {
                    w.json("check.json", &rows)?;
                    Ok(w.written().to_vec())
                });
                if let Err(e) = written {
                    let _ = writeln!(out, "could not write check.json: {e}");
                    return Error::Io(e.to_string()).exit_code();
                }
            }
            (rows, code)
        }
    };
    let width = rows.iter().map(|r| r.name.len()).max().unwrap_or(0);
    for row in &rows {
        let status = if row.passed { "PASS" } else { "FAIL" };
        let detail = match (&row.value, &row.message) {
            (_, Some(m)) => m.clone(),
            (Some(v), None) => format!("{v:.3e} (tolerance {:.1e})", row.tolerance),
            (None, None) => String::new(),
        };
        let _ = writeln!(out, "{status}  {:width$}  {detail}", row.name);
    }
    let failed = rows.iter().filter(|r| !r.passed).count();
    let _ = writeln!(out, "{} checks, {failed} failed", rows.len());
    code
}
