//! Constant-speed, constant-turn-rate arc candidates scored against the local costmap.

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::geom::normalize_angle;
use crate::global_planner::GlobalPath;
use crate::sensor::LocalCostMap;
use crate::{NavError, Point2, Result, C_MAX};

/// Pose relative to the arc's start: x forward, y left.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ArcPose {
    pub x: f64,
    pub y: f64,
    pub theta: f64,
}

impl ArcPose {
    pub fn point(&self) -> Point2 {
        Point2::new(self.x, self.y)
    }
}

/// Closed-form unicycle pose after time `t` from the origin facing +x.
pub fn unicycle_pose(v: f64, omega: f64, t: f64) -> ArcPose {
    if omega == 0.0 {
        ArcPose {
            x: v * t,
            y: 0.0,
            theta: 0.0,
        }
    } else {
        let a = omega * t;
        ArcPose {
            x: v / omega * a.sin(),
            y: v / omega * (1.0 - a.cos()),
            theta: a,
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct ArcCosts {
    pub steering: f64,
    pub traversability: f64,
    pub goal: f64,
    pub total: f64,
    /// Whether any sample landed on an untraversable cell.
    pub blocked: bool,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Arc {
    pub v: f64,
    pub omega: f64,
    pub duration: f64,
    /// Poses at `k * duration / n` for `k = 1..=n`.
    pub samples: Vec<ArcPose>,
    pub costs: Option<ArcCosts>,
}

impl Arc {
    pub fn endpoint(&self) -> ArcPose {
        *self.samples.last().expect("arcs have at least one sample")
    }

    pub fn total(&self) -> f64 {
        self.costs.map_or(f64::INFINITY, |c| c.total)
    }

    pub fn is_feasible(&self) -> bool {
        self.costs.is_some_and(|c| !c.blocked)
    }
}

/// Weights of the steering, traversability and goal terms.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ArcWeights {
    pub alpha: f64,
    pub beta: f64,
    pub gamma: f64,
}

impl Default for ArcWeights {
    fn default() -> Self {
        ArcWeights {
            alpha: 1.0,
            beta: 1.0,
            gamma: 0.1,
        }
    }
}

impl ArcWeights {
    pub fn scaled(self, k: f64) -> Self {
        ArcWeights {
            alpha: self.alpha * k,
            beta: self.beta * k,
            gamma: self.gamma * k,
        }
    }
}

/// `n_arcs` arcs with turn rates evenly spaced over `[-omega_max, omega_max]`; the middle
/// arc has a turn rate of exactly zero.
pub fn generate_arcs(v: f64, omega_max: f64, n_arcs: usize, duration: f64, n_samples: usize) -> Result<Vec<Arc>> {
    if n_arcs < 3 || n_arcs.is_multiple_of(2) {
        return Err(NavError::config(format!(
            "arc count must be odd and at least 3, got {n_arcs}"
        )));
    }
    if n_samples == 0 {
        return Err(NavError::config("arcs need at least one sample"));
    }
    if !(v > 0.0
        && v.is_finite()
        && omega_max >= 0.0
        && omega_max.is_finite()
        && duration > 0.0
        && duration.is_finite())
    {
        return Err(NavError::config(
            "arc speed, turn limit and duration must be positive and finite",
        ));
    }
    let half = (n_arcs - 1) as f64 / 2.0;
    Ok((0..n_arcs)
        .map(|k| {
            let omega = omega_max * (k as f64 - half) / half;
            let samples = (1..=n_samples)
                .map(|s| unicycle_pose(v, omega, duration * s as f64 / n_samples as f64))
                .collect();
            Arc {
                v,
                omega,
                duration,
                samples,
                costs: None,
            }
        })
        .collect())
}

/// Scores one arc. Samples outside the costmap read its nearest border cell; unobserved
/// cells cost `c_unobs`.
pub fn evaluate_arc(a: &Arc, lcm: &LocalCostMap, target: Point2, weights: ArcWeights, c_unobs: f64) -> Arc {
    let mut traversability = 0.0;
    let mut blocked = false;
    for s in &a.samples {
        let (r, c) = lcm.clamped_cell_of(s.point());
        let cost = lcm.cell(r, c).unwrap_or(c_unobs);
        if cost >= C_MAX {
            blocked = true;
        }
        traversability += cost;
    }
    let steering = a.omega.abs();
    let goal = a.endpoint().point().distance(target);
    let mut out = a.clone();
    out.costs = Some(ArcCosts {
        steering,
        traversability,
        goal,
        total: weights.alpha * steering + weights.beta * traversability + weights.gamma * goal,
        blocked,
    });
    out
}

/// Scores every arc.
pub fn evaluate_arcs(arcs: &[Arc], lcm: &LocalCostMap, target: Point2, weights: ArcWeights, c_unobs: f64) -> Vec<Arc> {
    arcs.iter()
        .map(|a| evaluate_arc(a, lcm, target, weights, c_unobs))
        .collect()
}

fn better(a: &Arc, b: &Arc) -> bool {
    let (ta, tb) = (a.total(), b.total());
    if ta != tb {
        return ta < tb;
    }
    let (wa, wb) = (a.omega.abs(), b.omega.abs());
    if wa != wb {
        return wa < wb;
    }
    a.omega > b.omega
}

/// Index of the cheapest feasible arc; ties go to the smaller turn rate magnitude, then to
/// the left-turning arc.
pub fn select_arc_index(arcs: &[Arc]) -> Result<usize> {
    if arcs.is_empty() {
        return Err(NavError::config("no arcs to select from"));
    }
    let mut best: Option<usize> = None;
    for (k, a) in arcs.iter().enumerate() {
        if !a.is_feasible() {
            continue;
        }
        if best.is_none_or(|b| better(a, &arcs[b])) {
            best = Some(k);
        }
    }
    best.ok_or(NavError::NoFeasibleArc(arcs.len()))
}

pub fn select_arc(arcs: &[Arc]) -> Result<Arc> {
    select_arc_index(arcs).map(|k| arcs[k].clone())
}

/// Point `lookahead` meters along `path` past the waypoint nearest to `from`; the last
/// waypoint when the path is shorter than that.
pub fn lookahead_target(path: &GlobalPath, from: Point2, lookahead: f64) -> Point2 {
    let wps = &path.waypoints;
    let Some(&last) = wps.last() else {
        return from;
    };
    let nearest = wps
        .iter()
        .enumerate()
        .min_by(|a, b| a.1.distance(from).total_cmp(&b.1.distance(from)))
        .map(|(k, _)| k)
        .unwrap_or(0);
    let mut left = lookahead;
    for w in wps[nearest..].windows(2) {
        let seg = w[0].distance(w[1]);
        if seg >= left && seg > 0.0 {
            return w[0] + (w[1] - w[0]) * (left / seg);
        }
        left -= seg;
    }
    last
}

/// CSV of scored arcs with header `omega,steering,traversability,goal,total,feasible,end_x,end_y`.
pub fn write_arcs_csv(arcs: &[Arc], w: &mut impl Write) -> std::io::Result<()> {
    writeln!(w, "omega,steering,traversability,goal,total,feasible,end_x,end_y")?;
    for a in arcs {
        let c = a.costs.unwrap_or_default();
        let e = a.endpoint();
        writeln!(
            w,
            "{},{},{},{},{},{},{},{}",
            a.omega,
            c.steering,
            c.traversability,
            c.goal,
            c.total,
            a.is_feasible(),
            e.x,
            e.y
        )?;
    }
    Ok(())
}

/// Heading-normalized final pose of an arc started from a world pose.
pub fn arc_end_in_world(a: &Arc, origin: Point2, heading: f64) -> (Point2, f64) {
    let e = a.endpoint();
    (origin + e.point().rotated(heading), normalize_angle(heading + e.theta))
}
