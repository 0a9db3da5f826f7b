//! Command-line front end of the release gate: `collect`, `check`, `append`
//! and `report`, with exit codes meant to be consumed by a CI job.

use std::ffi::OsString;
use std::io::Write;
use std::panic::{self, AssertUnwindSafe};
use std::path::PathBuf;

use anyhow::{bail, Result};
use chrono::NaiveDate;
use clap::error::ErrorKind;
use clap::{Parser, Subcommand, ValueEnum};

use release_gate_core::dataset::METRIC_NAMES;

pub mod commands;
pub mod config;
pub mod notify;

use commands::{ReportMode, ReportOptions};
use config::{ToolConfig, DEFAULT_CONFIG_PATH};

pub mod exit {
    /// Pass or insufficient history: the release proceeds.
    pub const PROCEED: i32 = 0;
    /// Release suspended.
    pub const ANOMALY: i32 = 1;
    /// Needs human attention.
    pub const REVIEW: i32 = 2;
    /// Bad input, unreadable files, unreachable sources, etc.
    pub const OPERATIONAL: i32 = 3;
}

#[derive(Debug, Parser)]
#[command(name = "release-gate", version, about = "Anomaly gate for software releases")]
struct Cli {
    /// Tool configuration file.
    #[arg(long, global = true, default_value = DEFAULT_CONFIG_PATH)]
    config: PathBuf,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Collect metrics for the window ending at DATE and stage a candidate.
    Collect {
        #[arg(long, value_name = "YYYY-MM-DD")]
        date: NaiveDate,
    },
    /// Run the gate on the staged candidate.
    Check,
    /// Append the checked candidate to the dataset.
    Append,
    /// Write per-release scores or decision-boundary grids as CSV.
    Report {
        #[arg(long, value_enum)]
        mode: Mode,
        /// Feature on the x axis (P1..P6 or 1..6).
        #[arg(long, default_value = "P1", value_parser = parse_feature)]
        fx: usize,
        /// Feature on the y axis (P1..P6 or 1..6).
        #[arg(long, default_value = "P4", value_parser = parse_feature)]
        fy: usize,
        #[arg(long, default_value_t = 100)]
        resolution: usize,
        /// Directory for the CSV files. Without it, scores go to stdout and
        /// boundary grids to the current directory.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum Mode {
    Scores,
    Boundaries,
}

fn parse_feature(s: &str) -> Result<usize, String> {
    let digits = s.strip_prefix(['P', 'p']).unwrap_or(s);
    match digits.parse::<usize>() {
        Ok(n) if (1..=METRIC_NAMES.len()).contains(&n) => Ok(n - 1),
        _ => Err(format!("expected one of P1..P6, got `{s}`")),
    }
}

/// Parses `args` (program name first), runs the command, and returns the
/// process exit code. Results go to `out`, diagnostics to stderr.
pub fn run<I, T>(args: I, out: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => exit::PROCEED,
                _ => exit::OPERATIONAL,
            };
        }
    };
    // A panic must still end in one of the documented exit codes.
    match panic::catch_unwind(AssertUnwindSafe(|| execute(cli, out))) {
        Ok(Ok(code)) => code,
        Ok(Err(e)) => {
            eprintln!("error: {e:#}");
            exit::OPERATIONAL
        }
        Err(_) => exit::OPERATIONAL,
    }
}

fn execute(cli: Cli, out: &mut dyn Write) -> Result<i32> {
    let config = ToolConfig::load(&cli.config)?;
    match cli.command {
        Command::Collect { date } => {
            let record = commands::collect(&config, date)?;
            writeln!(out, "{}", serde_json::to_string_pretty(&record)?)?;
            Ok(exit::PROCEED)
        }
        Command::Check => {
            let report = commands::check(&config)?;
            writeln!(out, "{}", serde_json::to_string_pretty(&report)?)?;
            Ok(commands::verdict_exit_code(report.decision.verdict))
        }
        Command::Append => {
            let dataset = commands::append(&config)?;
            let last = dataset.last().expect("append leaves a nonempty dataset");
            writeln!(
                out,
                "appended release {} ({}) flag={:?}; dataset has {} releases",
                last.id,
                last.date,
                last.flag,
                dataset.len()
            )?;
            Ok(exit::PROCEED)
        }
        Command::Report {
            mode,
            fx,
            fy,
            resolution,
            out: out_dir,
        } => {
            if fx == fy {
                bail!("--fx and --fy must name different features");
            }
            let mode = match mode {
                Mode::Scores => ReportMode::Scores,
                Mode::Boundaries => ReportMode::Boundaries,
            };
            let out_dir = match (mode, out_dir) {
                (ReportMode::Boundaries, None) => Some(PathBuf::from(".")),
                (_, dir) => dir,
            };
            let options = ReportOptions {
                mode,
                feature_x: fx,
                feature_y: fy,
                resolution,
                out_dir: out_dir.clone(),
            };
            let files = commands::report(&config, &options)?;
            match out_dir {
                Some(dir) => {
                    for (name, _) in &files {
                        writeln!(out, "{}", dir.join(name).display())?;
                    }
                }
                None => {
                    for (_, body) in &files {
                        out.write_all(body.as_bytes())?;
                    }
                }
            }
            Ok(exit::PROCEED)
        }
    }
}
