use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::Context;
use clap::{Parser, ValueEnum};
use terrainav::config::ScenarioFile;
use terrainav::experiment::{run_experiment, ExperimentSpec};
use terrainav::sim::Mode;

#[derive(Clone, Copy, Debug, ValueEnum)]
enum ModeArg {
    Baseline,
    Replan,
    Both,
}

impl ModeArg {
    fn modes(self) -> Vec<Mode> {
        match self {
            ModeArg::Baseline => vec![Mode::Baseline],
            ModeArg::Replan => vec![Mode::Replan],
            ModeArg::Both => vec![Mode::Baseline, Mode::Replan],
        }
    }
}

/// Runs rover navigation scenarios and summarizes them per planning mode.
#[derive(Debug, Parser)]
#[command(name = "terrainav", version)]
struct Args {
    /// Scenario TOML file.
    #[arg(long)]
    scenario: PathBuf,
    #[arg(long, value_enum, default_value = "both")]
    mode: ModeArg,
    /// Runs per mode.
    #[arg(long, default_value_t = 3, value_parser = clap::value_parser!(u64).range(1..))]
    runs: u64,
    /// First seed; runs use consecutive seeds from here.
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Output directory for metrics, traces and the summary.
    #[arg(long, default_value = "out")]
    out: PathBuf,
    /// Also write the global costmap of every cycle as CSV.
    #[arg(long)]
    dump_costmaps: bool,
}

fn run(args: Args) -> anyhow::Result<()> {
    let scenario =
        ScenarioFile::load(&args.scenario).with_context(|| format!("loading scenario {}", args.scenario.display()))?;
    let spec = ExperimentSpec {
        scenario,
        modes: args.mode.modes(),
        n_runs: args.runs as usize,
        seed_base: args.seed,
        out_dir: args.out.clone(),
        dump_costmaps: args.dump_costmaps,
    };
    let result = run_experiment(&spec)?;
    print!("{}", result.summary.table());
    println!("wrote {}", args.out.join("summary.toml").display());
    Ok(())
}

fn main() -> ExitCode {
    match run(Args::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
