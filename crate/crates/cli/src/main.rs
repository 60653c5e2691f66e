//! `chronorules`: generate cohorts, learn triage rules and replay them.

mod commands;
mod error;
mod settings;

use clap::{Args, Parser, Subcommand};
use error::CliError;
use settings::{Grid, Overrides};
use std::path::PathBuf;
use std::process::ExitCode;

#[derive(Debug, Parser)]
#[command(name = "chronorules", version, about = "Rule learning for chronic shelter use")]
struct Cli {
    #[command(subcommand)]
    command: Command,
    #[command(flatten)]
    common: Common,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Write a synthetic event CSV.
    Gen,
    /// Write the attribute summary table for one window.
    Tabulate,
    /// Learn a rule set on the full table and write it as JSON.
    Learn,
    /// Stratified k-fold estimate of precision and recall.
    Crossval,
    /// Replay monthly triage meetings with a learned rule set.
    Replay,
    /// Cross-validate every point of a parameter grid.
    Sweep(SweepArgs),
    /// Per-class access statistics.
    Describe,
}

#[derive(Debug, Args)]
struct Common {
    /// Flat TOML file; flags override its values.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[arg(long, global = true)]
    events: Option<PathBuf>,
    #[arg(long, global = true)]
    rules: Option<PathBuf>,
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Window size in days: 30, 60, 90 or 120.
    #[arg(long, global = true)]
    window: Option<u32>,
    #[arg(long, global = true)]
    beta2: Option<f64>,
    #[arg(long, global = true)]
    max_rule_len: Option<usize>,
    #[arg(long, global = true)]
    max_set_size: Option<usize>,
    /// core, extended, all, or a comma-separated attribute list.
    #[arg(long, global = true)]
    attrs: Option<String>,
    #[arg(long, global = true)]
    folds: Option<usize>,
    #[arg(long, global = true)]
    seed: Option<u64>,
}

#[derive(Debug, Args)]
struct SweepArgs {
    #[arg(long, value_delimiter = ',', num_args = 0..)]
    windows: Option<Vec<u32>>,
    #[arg(long, value_delimiter = ',', num_args = 0..)]
    beta2_grid: Option<Vec<f64>>,
    /// Attribute selectors separated by `;`.
    #[arg(long, value_delimiter = ';', num_args = 0..)]
    attrs_grid: Option<Vec<String>>,
    #[arg(long, value_delimiter = ',', num_args = 0..)]
    max_rule_len_grid: Option<Vec<usize>>,
    #[arg(long, value_delimiter = ',', num_args = 0..)]
    max_set_size_grid: Option<Vec<usize>>,
}

/// Drops the empty strings produced by `--flag ""` so it reads as an empty grid.
fn nonempty<T>(v: Option<Vec<T>>, empty: impl Fn(&T) -> bool) -> Option<Vec<T>> {
    v.map(|v| v.into_iter().filter(|x| !empty(x)).collect())
}

fn run(cli: Cli) -> Result<(), CliError> {
    let c = cli.common;
    let grid = match &cli.command {
        Command::Sweep(g) => Grid {
            windows: g.windows.clone(),
            beta2: g.beta2_grid.clone(),
            attrs: nonempty(g.attrs_grid.clone(), |s| s.trim().is_empty()),
            max_rule_len: g.max_rule_len_grid.clone(),
            max_set_size: g.max_set_size_grid.clone(),
        },
        _ => Grid::default(),
    };
    let s = settings::resolve(Overrides {
        config: c.config,
        events: c.events,
        rules: c.rules,
        out: c.out,
        window: c.window,
        beta2: c.beta2,
        max_rule_len: c.max_rule_len,
        max_set_size: c.max_set_size,
        attrs: c.attrs,
        folds: c.folds,
        seed: c.seed,
        grid,
    })?;
    match cli.command {
        Command::Gen => commands::gen(&s),
        Command::Tabulate => commands::tabulate(&s),
        Command::Learn => commands::learn(&s),
        Command::Crossval => commands::crossval(&s),
        Command::Replay => commands::replay_cmd(&s),
        Command::Sweep(_) => commands::sweep(&s),
        Command::Describe => commands::describe(&s),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 1 } else { 0 });
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
