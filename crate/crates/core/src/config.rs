//! Run configuration and scenario files.
//!
//! A scenario file is the [`ScenarioSpec`] fields at top level plus an optional `[sim]`
//! table overriding any [`SimConfig`] default:
//!
//! ```toml
//! seed = 7
//! extent_m = [60.0, 40.0]
//! start = [5.0, 20.0]
//! goal = [55.0, 20.0]
//!
//! [sim]
//! timeout_s = 300.0
//!
//! [sim.camera]
//! cols = 96
//! ```

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::clustering::ClusterConfig;
use crate::features::FeatureConfig;
use crate::fusion::{FusionParams, PriorParams};
use crate::local_planner::ArcWeights;
use crate::sensor::{CameraModel, CostWeights};
use crate::terrain::ScenarioSpec;
use crate::{NavError, Result};

/// What the local planner steers toward.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TargetMode {
    /// A point a fixed distance ahead along the current global path.
    #[default]
    Lookahead,
    /// The scenario goal itself.
    FinalGoal,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimConfig {
    pub speed: f64,
    pub omega_max: f64,
    pub n_arcs: usize,
    pub n_arc_samples: usize,
    pub cycle_s: f64,
    pub substep_s: f64,
    pub goal_radius_m: f64,
    pub stuck_window_s: f64,
    pub stuck_displacement_m: f64,
    pub timeout_s: f64,
    pub clearance_m: f64,
    pub lookahead_m: f64,
    pub target_mode: TargetMode,
    pub c_unobs: f64,
    pub c_base: f64,
    /// Range of the local costmap.
    pub d_thresh_m: f64,
    pub topdown_m_per_px: f64,
    pub arc_weights: ArcWeights,
    pub camera: CameraModel,
    pub cost_weights: CostWeights,
    pub features: FeatureConfig,
    pub clustering: ClusterConfig,
    pub prior: PriorParams,
    pub fusion: FusionParams,
}

impl Default for SimConfig {
    fn default() -> Self {
        SimConfig {
            speed: 3.5,
            omega_max: 0.3,
            n_arcs: 15,
            n_arc_samples: 20,
            cycle_s: 5.0,
            substep_s: 0.25,
            goal_radius_m: 10.0,
            stuck_window_s: 30.0,
            stuck_displacement_m: 0.5,
            timeout_s: 1000.0,
            clearance_m: 0.15,
            lookahead_m: 15.0,
            target_mode: TargetMode::Lookahead,
            c_unobs: 0.5,
            c_base: 1.0,
            d_thresh_m: 20.0,
            topdown_m_per_px: 0.25,
            arc_weights: ArcWeights::default(),
            camera: CameraModel::default(),
            cost_weights: CostWeights::default(),
            features: FeatureConfig::default(),
            clustering: ClusterConfig::default(),
            prior: PriorParams::default(),
            fusion: FusionParams::default(),
        }
    }
}

impl SimConfig {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("speed", self.speed),
            ("cycle_s", self.cycle_s),
            ("substep_s", self.substep_s),
            ("stuck_window_s", self.stuck_window_s),
            ("timeout_s", self.timeout_s),
            ("d_thresh_m", self.d_thresh_m),
            ("topdown_m_per_px", self.topdown_m_per_px),
            ("c_base", self.c_base),
            ("fusion.lambda", self.fusion.lambda),
        ];
        for (name, v) in positive {
            if !(v > 0.0 && v.is_finite()) {
                return Err(NavError::config(format!("{name} must be positive, got {v}")));
            }
        }
        let nonneg = [
            ("omega_max", self.omega_max),
            ("goal_radius_m", self.goal_radius_m),
            ("stuck_displacement_m", self.stuck_displacement_m),
            ("clearance_m", self.clearance_m),
            ("lookahead_m", self.lookahead_m),
            ("c_unobs", self.c_unobs),
            ("arc_weights.alpha", self.arc_weights.alpha),
            ("arc_weights.beta", self.arc_weights.beta),
            ("arc_weights.gamma", self.arc_weights.gamma),
        ];
        for (name, v) in nonneg {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(NavError::config(format!("{name} must be nonnegative, got {v}")));
            }
        }
        if self.substep_s > self.cycle_s {
            return Err(NavError::config("substep_s may not exceed cycle_s"));
        }
        self.camera.validate()?;
        self.features.side()?;
        Ok(())
    }

    /// Kinematic substeps per replan cycle.
    pub fn substeps_per_cycle(&self) -> usize {
        (self.cycle_s / self.substep_s).round().max(1.0) as usize
    }
}

/// A scenario with its run configuration.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScenarioFile {
    #[serde(flatten)]
    pub scenario: ScenarioSpec,
    #[serde(default)]
    pub sim: SimConfig,
}

impl ScenarioFile {
    pub fn parse(text: &str, path: &Path) -> Result<Self> {
        let f: ScenarioFile = toml::from_str(text).map_err(|e| NavError::Parse {
            path: path.display().to_string(),
            message: e.to_string(),
        })?;
        f.scenario.validate()?;
        f.sim.validate()?;
        Ok(f)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| NavError::io(path, e))?;
        Self::parse(&text, path)
    }
}
