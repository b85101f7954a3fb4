//! Closed-loop scenario runs.
//!
//! Every cycle the rover senses, builds a local costmap, optionally fuses it into the global
//! costmap and replans, picks an arc toward its target and drives it for one cycle in fixed
//! kinematic substeps. Rock contacts are checked along each substep's swept segment.

use std::collections::BTreeSet;
use std::fmt;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::clustering::cluster_regions;
use crate::config::{SimConfig, TargetMode};
use crate::features::{render_topdown, CellFeatures};
use crate::fusion::{collect_cost_samples, init_global_costmap, GlobalCostMap, GlobalFusion};
use crate::geom::{normalize_angle, segment_distance_sq};
use crate::global_planner::{plan_global_with, GlobalPath};
use crate::local_planner::{evaluate_arcs, generate_arcs, lookahead_target, select_arc, unicycle_pose};
use crate::sensor::{build_local_costmap, project_point_cloud, render_depth_image};
use crate::terrain::{generate_terrain, RockClass, ScenarioSpec, TerrainModel};
use crate::{NavError, Point2, Result};

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct RoverState {
    pub position: Point2,
    /// Radians, in `(-pi, pi]`.
    pub heading: f64,
    pub time: f64,
}

impl RoverState {
    pub fn new(position: Point2, heading: f64, time: f64) -> Self {
        RoverState {
            position,
            heading: normalize_angle(heading),
            time,
        }
    }
}

/// Exact unicycle motion for `dt` seconds, clamped to `[0, w] x [0, h]`. The flag reports
/// whether clamping happened.
pub fn step_rover(s: &RoverState, v: f64, omega: f64, dt: f64, extent: (f64, f64)) -> Result<(RoverState, bool)> {
    if !(dt >= 0.0 && dt.is_finite()) {
        return Err(NavError::config(format!("time step must be nonnegative, got {dt}")));
    }
    if dt == 0.0 {
        return Ok((*s, false));
    }
    let local = unicycle_pose(v, omega, dt);
    let raw = s.position + local.point().rotated(s.heading);
    let clamped = Point2::new(raw.x.clamp(0.0, extent.0), raw.y.clamp(0.0, extent.1));
    Ok((
        RoverState {
            position: clamped,
            heading: normalize_angle(s.heading + local.theta),
            time: s.time + dt,
        },
        clamped != raw,
    ))
}

/// Rocks touched by the rover, split by whether they stop it.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct CollisionReport {
    /// Small rocks in contact; driving continues.
    pub small: Vec<usize>,
    /// Medium rocks in contact; the rover cannot pass.
    pub blocking: Vec<usize>,
}

impl CollisionReport {
    pub fn is_empty(&self) -> bool {
        self.small.is_empty() && self.blocking.is_empty()
    }
}

/// Contacts at a single pose: rocks taller than `clearance` whose footprint holds the
/// rover center.
pub fn check_collision(s: &RoverState, t: &TerrainModel, clearance: f64) -> CollisionReport {
    check_swept_collision(s.position, s.position, t, clearance)
}

/// Contacts anywhere along the segment from `a` to `b`.
pub fn check_swept_collision(a: Point2, b: Point2, t: &TerrainModel, clearance: f64) -> CollisionReport {
    let mid = (a + b) * 0.5;
    let mut report = CollisionReport::default();
    for k in t.rocks_near(mid, a.distance(b) / 2.0) {
        let rock = &t.rocks()[k];
        if rock.height <= clearance {
            continue;
        }
        if segment_distance_sq(rock.center, a, b) < rock.radius * rock.radius {
            match rock.class {
                RockClass::Small => report.small.push(k),
                RockClass::Medium => report.blocking.push(k),
            }
        }
    }
    report.small.sort_unstable();
    report.blocking.sort_unstable();
    report
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    /// One global plan at the start, local replanning only.
    Baseline,
    /// Fusion and global replanning every cycle.
    Replan,
}

impl Mode {
    pub fn as_str(self) -> &'static str {
        match self {
            Mode::Baseline => "baseline",
            Mode::Replan => "replan",
        }
    }
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Outcome {
    Reached,
    Stuck,
    Timeout,
}

impl Outcome {
    pub fn as_str(self) -> &'static str {
        match self {
            Outcome::Reached => "reached",
            Outcome::Stuck => "stuck",
            Outcome::Timeout => "timeout",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunMetrics {
    pub seed: u64,
    pub mode: Mode,
    pub outcome: Outcome,
    pub total_path_cost: f64,
    pub n_collisions: u64,
    pub total_time: f64,
    pub total_distance: f64,
    /// Substeps ending in contact with a medium rock.
    pub n_blocking: u64,
    pub cycles: u64,
    /// Cycles whose global replan failed and kept the previous path.
    pub replan_failures: u64,
}

impl RunMetrics {
    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("metrics always serialize")
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.to_toml()).map_err(|e| NavError::io(path, e))
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TraceRow {
    pub t: f64,
    pub x: f64,
    pub y: f64,
    pub theta: f64,
    pub cycle_id: u64,
    pub step_cost: f64,
    pub collision: bool,
}

pub fn write_trace_csv(rows: &[TraceRow], w: &mut impl Write) -> std::io::Result<()> {
    writeln!(w, "t,x,y,theta,cycle_id,step_cost,collision_flag")?;
    for r in rows {
        writeln!(
            w,
            "{},{},{},{},{},{},{}",
            r.t,
            r.x,
            r.y,
            r.theta,
            r.cycle_id,
            r.step_cost,
            u8::from(r.collision)
        )?;
    }
    Ok(())
}

pub fn save_trace_csv(rows: &[TraceRow], path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let mut f = std::io::BufWriter::new(std::fs::File::create(path).map_err(|e| NavError::io(path, e))?);
    write_trace_csv(rows, &mut f)
        .and_then(|_| f.flush())
        .map_err(|e| NavError::io(path, e))
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct RunOptions {
    /// Keep the global costmap of every cycle.
    pub record_costmaps: bool,
}

#[derive(Clone, Debug)]
pub struct RunOutput {
    pub metrics: RunMetrics,
    /// One row per substep, plus the initial pose at cycle 0.
    pub trace: Vec<TraceRow>,
    /// Global costmap after each cycle's update, indexed by cycle, when requested.
    pub costmaps: Vec<GlobalCostMap>,
    /// Global path in force during each cycle.
    pub paths: Vec<GlobalPath>,
}

/// The fixed parts of a run that depend only on the scenario.
pub struct World {
    pub terrain: TerrainModel,
    pub initial_costmap: GlobalCostMap,
    pub fusion: Option<GlobalFusion>,
}

impl World {
    pub fn build(spec: &ScenarioSpec, mode: Mode, cfg: &SimConfig) -> Result<Self> {
        let terrain = generate_terrain(spec)?;
        let img = render_topdown(&terrain, cfg.topdown_m_per_px)?;
        let map = init_global_costmap(&img, cfg.prior, 1.0)?;
        let fusion = match mode {
            Mode::Baseline => None,
            Mode::Replan => {
                let clusters = cluster_regions(
                    &img,
                    &crate::clustering::ClusterConfig {
                        cell_m: map.cell_m,
                        ..cfg.clustering
                    },
                )?;
                let features = CellFeatures::extract(&terrain, map.width, map.height, map.cell_m, &cfg.features)?;
                Some(GlobalFusion::new(map.clone(), clusters, features, cfg.fusion)?)
            }
        };
        Ok(World {
            terrain,
            initial_costmap: map,
            fusion,
        })
    }
}

/// Runs one scenario to completion.
pub fn run_scenario(spec: &ScenarioSpec, mode: Mode, cfg: &SimConfig) -> Result<RunOutput> {
    run_scenario_with(spec, mode, cfg, RunOptions::default())
}

pub fn run_scenario_with(spec: &ScenarioSpec, mode: Mode, cfg: &SimConfig, opts: RunOptions) -> Result<RunOutput> {
    spec.validate()?;
    cfg.validate()?;
    let World {
        terrain,
        initial_costmap,
        mut fusion,
    } = World::build(spec, mode, cfg)?;
    let extent = terrain.extent();
    let inner = (extent.0 - 1e-9, extent.1 - 1e-9);
    let arcs = generate_arcs(cfg.speed, cfg.omega_max, cfg.n_arcs, cfg.cycle_s, cfg.n_arc_samples)?;

    let mut path = plan_global_with(&initial_costmap, spec.start, spec.goal, cfg.c_base)?.path;
    let goal = spec.goal;
    let to_goal = goal - spec.start;
    let mut state = RoverState::new(spec.start, to_goal.y.atan2(to_goal.x), 0.0);

    let mut metrics = RunMetrics {
        seed: spec.seed,
        mode,
        outcome: Outcome::Timeout,
        total_path_cost: 0.0,
        n_collisions: 0,
        total_time: 0.0,
        total_distance: 0.0,
        n_blocking: 0,
        cycles: 0,
        replan_failures: 0,
    };
    let mut trace = vec![TraceRow {
        t: 0.0,
        x: state.position.x,
        y: state.position.y,
        theta: state.heading,
        cycle_id: 0,
        step_cost: 0.0,
        collision: false,
    }];
    let mut costmaps = Vec::new();
    let mut paths = Vec::new();
    let mut history: Vec<(f64, Point2)> = Vec::new();
    let mut in_contact: BTreeSet<usize> = BTreeSet::new();
    let substeps = cfg.substeps_per_cycle();
    let dt = cfg.cycle_s / substeps as f64;

    let outcome = 'run: loop {
        if state.position.distance(goal) <= cfg.goal_radius_m {
            break Outcome::Reached;
        }
        if state.time >= cfg.timeout_s {
            break Outcome::Timeout;
        }
        let window_start = state.time - cfg.stuck_window_s;
        if window_start >= -1e-9 {
            if let Some(&(_, p)) = history.iter().rev().find(|(t, _)| *t <= window_start + 1e-9) {
                if p.distance(state.position) < cfg.stuck_displacement_m {
                    break Outcome::Stuck;
                }
            }
        }
        history.push((state.time, state.position));
        let cycle_id = metrics.cycles;
        metrics.cycles += 1;

        let depth = render_depth_image(&terrain, &state, &cfg.camera)?;
        let cloud = project_point_cloud(&depth, &cfg.camera)?;
        let lcm = build_local_costmap(&cloud, &state, cfg.cost_weights, cfg.d_thresh_m)?;

        if let Some(f) = fusion.as_mut() {
            let samples = collect_cost_samples(&lcm, &terrain, &cfg.features, extent)?;
            f.ingest(samples)?;
            match plan_global_with(f.map(), state.position, goal, cfg.c_base) {
                Ok(t) => path = t.path,
                Err(NavError::Unreachable | NavError::GoalBlocked) => metrics.replan_failures += 1,
                Err(e) => return Err(e),
            }
            if opts.record_costmaps {
                costmaps.push(f.map().clone());
            }
        } else if opts.record_costmaps {
            costmaps.push(initial_costmap.clone());
        }
        paths.push(path.clone());

        let target_world = match cfg.target_mode {
            TargetMode::Lookahead => lookahead_target(&path, state.position, cfg.lookahead_m),
            TargetMode::FinalGoal => goal,
        };
        let target = lcm.world_to_local(target_world);
        let scored = evaluate_arcs(&arcs, &lcm, target, cfg.arc_weights, cfg.c_unobs);
        let (mut v, omega) = match select_arc(&scored) {
            Ok(a) => (a.v, a.omega),
            Err(NavError::NoFeasibleArc(_)) => (0.0, 0.0),
            Err(e) => return Err(e),
        };

        for _ in 0..substeps {
            let (mut next, _) = step_rover(&state, v, omega, dt, inner)?;
            let contacts = check_swept_collision(state.position, next.position, &terrain, cfg.clearance_m);
            if !contacts.blocking.is_empty() {
                metrics.n_blocking += 1;
                next.position = state.position;
                next.heading = state.heading;
                v = 0.0;
            }
            let touching: BTreeSet<usize> = contacts.small.iter().copied().collect();
            let fresh = touching.difference(&in_contact).count() as u64;
            metrics.n_collisions += fresh;
            in_contact = touching;

            let step = state.position.distance(next.position);
            let step_cost = lcm.cost_at_world(next.position).unwrap_or(0.0);
            metrics.total_distance += step;
            metrics.total_path_cost += step_cost;
            state = next;
            trace.push(TraceRow {
                t: state.time,
                x: state.position.x,
                y: state.position.y,
                theta: state.heading,
                cycle_id,
                step_cost,
                collision: fresh > 0 || !contacts.blocking.is_empty(),
            });
            if state.position.distance(goal) <= cfg.goal_radius_m {
                break 'run Outcome::Reached;
            }
            if state.time >= cfg.timeout_s - 1e-9 {
                break 'run Outcome::Timeout;
            }
        }
    };
    metrics.outcome = outcome;
    metrics.total_time = state.time;
    Ok(RunOutput {
        metrics,
        trace,
        costmaps,
        paths,
    })
}
