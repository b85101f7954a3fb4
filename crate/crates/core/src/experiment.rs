//! Batches of scenario runs across seeds and modes.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::config::ScenarioFile;
use crate::sim::{run_scenario_with, save_trace_csv, Mode, RunMetrics, RunOptions};
use crate::{NavError, Result};

#[derive(Clone, Debug, PartialEq)]
pub struct ExperimentSpec {
    pub scenario: ScenarioFile,
    pub modes: Vec<Mode>,
    pub n_runs: usize,
    /// Runs use seeds `seed_base .. seed_base + n_runs`.
    pub seed_base: u64,
    pub out_dir: PathBuf,
    pub dump_costmaps: bool,
}

/// Per-mode means over all runs.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModeSummary {
    pub mode: Mode,
    pub runs: usize,
    pub reached: usize,
    pub mean_total_path_cost: f64,
    pub mean_n_collisions: f64,
    pub mean_total_time: f64,
    pub mean_total_distance: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub modes: Vec<ModeSummary>,
}

impl Summary {
    pub fn from_runs(runs: &[RunMetrics], modes: &[Mode]) -> Self {
        let modes = modes
            .iter()
            .map(|&mode| {
                let rs: Vec<&RunMetrics> = runs.iter().filter(|r| r.mode == mode).collect();
                let n = rs.len().max(1) as f64;
                let mean = |f: &dyn Fn(&RunMetrics) -> f64| rs.iter().map(|r| f(r)).sum::<f64>() / n;
                ModeSummary {
                    mode,
                    runs: rs.len(),
                    reached: rs.iter().filter(|r| r.outcome == crate::sim::Outcome::Reached).count(),
                    mean_total_path_cost: mean(&|r| r.total_path_cost),
                    mean_n_collisions: mean(&|r| r.n_collisions as f64),
                    mean_total_time: mean(&|r| r.total_time),
                    mean_total_distance: mean(&|r| r.total_distance),
                }
            })
            .collect();
        Summary { modes }
    }

    pub fn get(&self, mode: Mode) -> Option<&ModeSummary> {
        self.modes.iter().find(|m| m.mode == mode)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("summaries always serialize")
    }

    /// Fixed-width table for terminals.
    pub fn table(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(
            s,
            "{:<10} {:>5} {:>8} {:>12} {:>11} {:>10} {:>13}",
            "mode", "runs", "reached", "path_cost", "collisions", "time_s", "distance_m"
        );
        for m in &self.modes {
            let _ = writeln!(
                s,
                "{:<10} {:>5} {:>8} {:>12.3} {:>11.2} {:>10.2} {:>13.2}",
                m.mode.as_str(),
                m.runs,
                m.reached,
                m.mean_total_path_cost,
                m.mean_n_collisions,
                m.mean_total_time,
                m.mean_total_distance
            );
        }
        s
    }
}

#[derive(Clone, Debug)]
pub struct ExperimentResult {
    pub runs: Vec<RunMetrics>,
    pub summary: Summary,
}

fn run_stem(mode: Mode, seed: u64) -> String {
    format!("{}_seed{seed}", mode.as_str())
}

pub fn metrics_path(dir: &Path, mode: Mode, seed: u64) -> PathBuf {
    dir.join(format!("{}_metrics.toml", run_stem(mode, seed)))
}

pub fn trace_path(dir: &Path, mode: Mode, seed: u64) -> PathBuf {
    dir.join(format!("{}_trace.csv", run_stem(mode, seed)))
}

/// Runs every (mode, seed) pair, writes per-run files and `summary.toml` into the output
/// directory. With `dump_costmaps`, each cycle's global costmap and path also go to
/// `costmaps/`. Runs execute in parallel; results keep (mode, seed) order.
pub fn run_experiment(e: &ExperimentSpec) -> Result<ExperimentResult> {
    if e.n_runs == 0 {
        return Err(NavError::config("an experiment needs at least one run"));
    }
    if e.modes.is_empty() {
        return Err(NavError::config("an experiment needs at least one mode"));
    }
    std::fs::create_dir_all(&e.out_dir).map_err(|err| NavError::io(&e.out_dir, err))?;
    let costmap_dir = e.out_dir.join("costmaps");
    if e.dump_costmaps {
        std::fs::create_dir_all(&costmap_dir).map_err(|err| NavError::io(&costmap_dir, err))?;
    }
    let jobs: Vec<(Mode, u64)> = e
        .modes
        .iter()
        .flat_map(|&m| (0..e.n_runs as u64).map(move |k| (m, e.seed_base + k)))
        .collect();
    let opts = RunOptions {
        record_costmaps: e.dump_costmaps,
    };
    let results: Vec<Result<RunMetrics>> = jobs
        .par_iter()
        .map(|&(mode, seed)| {
            let mut spec = e.scenario.scenario.clone();
            spec.seed = seed;
            let out = run_scenario_with(&spec, mode, &e.scenario.sim, opts)?;
            out.metrics.save(metrics_path(&e.out_dir, mode, seed))?;
            save_trace_csv(&out.trace, trace_path(&e.out_dir, mode, seed))?;
            for (cycle, map) in out.costmaps.iter().enumerate() {
                map.save_csv(costmap_dir.join(format!("{}_cycle{cycle:04}.csv", run_stem(mode, seed))))?;
            }
            if e.dump_costmaps {
                for (cycle, path) in out.paths.iter().enumerate() {
                    path.save_csv(costmap_dir.join(format!("{}_cycle{cycle:04}_path.csv", run_stem(mode, seed))))?;
                }
            }
            Ok(out.metrics)
        })
        .collect();
    let runs = results.into_iter().collect::<Result<Vec<_>>>()?;
    let summary = Summary::from_runs(&runs, &e.modes);
    let path = e.out_dir.join("summary.toml");
    std::fs::write(&path, summary.to_toml()).map_err(|err| NavError::io(&path, err))?;
    Ok(ExperimentResult { runs, summary })
}
