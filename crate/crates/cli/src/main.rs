use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand};
use tubetree_cli::commands::{self, write_json, ExportOptions, SynthOptions};
use tubetree_cli::config::Scenario;

#[derive(Parser)]
#[command(name = "tubetree", version, about = "Robust STL satisfiability checks and control synthesis on grids")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// Scenario file (TOML).
    #[arg(long, short)]
    config: PathBuf,
    /// Directory for persisting computed tubes between runs.
    #[arg(long)]
    cache: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Check whether x0 can robustly satisfy the formula and each branch.
    Check {
        #[command(flatten)]
        common: Common,
        /// Also write check.json and timing.json here.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run seeded closed-loop realizations and write trajectories and verdicts.
    Synthesize {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        realizations: Option<usize>,
        #[arg(long)]
        out: Option<PathBuf>,
        /// Synthesize even when the check fails.
        #[arg(long)]
        force: bool,
        /// Synthesize for a named branch instead of the scenario formula.
        #[arg(long)]
        branch: Option<String>,
    },
    /// Evaluate a trajectory CSV against the formula.
    Monitor {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        trajectory: PathBuf,
        /// Formula text overriding the scenario formula.
        #[arg(long, conflicts_with = "branch")]
        formula: Option<String>,
        #[arg(long)]
        branch: Option<String>,
    },
    /// Write the tree's nodes, edges and tube slices.
    ExportTree {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        branch: Option<String>,
        /// Write every slice where a tube changes, not only t0.
        #[arg(long)]
        all_slices: bool,
        /// Also write cell centers of the exported slices as CSV.
        #[arg(long)]
        centers: bool,
    },
}

fn load(common: &Common) -> Result<Scenario> {
    Scenario::load(&common.config).with_context(|| format!("loading {}", common.config.display()))
}

fn out_dir(s: &Scenario, flag: Option<PathBuf>, default: &str) -> PathBuf {
    flag.or_else(|| s.config.output.dir.as_ref().map(|d| s.base.join(d))).unwrap_or_else(|| PathBuf::from(default))
}

fn print(value: &impl serde::Serialize) {
    println!("{}", serde_json::to_string_pretty(value).expect("reports serialize"));
}

fn run(cli: Cli) -> Result<ExitCode> {
    match cli.command {
        Command::Check { common, out } => {
            let s = load(&common)?;
            let engine = s.engine(common.cache)?;
            let (report, timing) = commands::check(&s, &engine)?;
            if let Some(dir) = out {
                std::fs::create_dir_all(&dir).with_context(|| format!("creating {}", dir.display()))?;
                write_json(&dir.join("check.json"), &report)?;
                write_json(&dir.join("timing.json"), &timing)?;
            }
            print(&report);
            Ok(if report.pass { ExitCode::SUCCESS } else { ExitCode::from(2) })
        }
        Command::Synthesize { common, seed, realizations, out, force, branch } => {
            let s = load(&common)?;
            let engine = s.engine(common.cache.clone())?;
            let opts = SynthOptions {
                seed: seed.unwrap_or(s.config.disturbance.seed),
                realizations: realizations.unwrap_or(s.config.disturbance.realizations),
                out: out_dir(&s, out, "out"),
                force,
                branch,
            };
            let (summary, _) = commands::synthesize(&s, &engine, &opts)?;
            print(&summary);
            Ok(ExitCode::SUCCESS)
        }
        Command::Monitor { common, trajectory, formula, branch } => {
            let s = load(&common)?;
            let report = commands::monitor(&s, &trajectory, formula.as_deref(), branch.as_deref())?;
            print(&report);
            Ok(if report.verdict.satisfied == Some(true) { ExitCode::SUCCESS } else { ExitCode::from(2) })
        }
        Command::ExportTree { common, out, branch, all_slices, centers } => {
            let s = load(&common)?;
            let engine = s.engine(common.cache)?;
            let opts = ExportOptions { out: out_dir(&s, out, "tree"), branch, all_slices, centers };
            let manifest = commands::export_tree(&s, &engine, &opts)?;
            eprintln!("{} tube nodes written to {}", manifest.tube_nodes, opts.out.display());
            Ok(ExitCode::SUCCESS)
        }
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
