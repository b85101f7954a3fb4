//! Rover navigation on synthetic terrain.
//!
//! The crate covers the whole planning loop of a small planetary-style rover:
//!
//! * [`terrain`] generates a deterministic ground-truth world (elevation, albedo, rocks).
//! * [`sensor`] ray-casts depth images, projects them to point clouds and grids them into
//!   a rover-centric traversability costmap.
//! * [`features`] samples per-ray color and depth around a point to form terrain feature
//!   vectors, and renders the top-down image used at initialization.
//! * [`clustering`] splits the top-down image into regions of similar appearance.
//! * [`fusion`] turns local observations into world-frame samples and regresses them over
//!   each region with ridge regression to update the global costmap.
//! * [`global_planner`] runs 4-connected A* on the global costmap.
//! * [`local_planner`] generates and scores constant-curvature arcs.
//! * [`sim`] ties everything together in a closed-loop scenario run, and [`experiment`]
//!   batches runs into summary tables.

// Negated comparisons are how NaN inputs get rejected alongside out-of-range ones.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod clustering;
pub mod config;
pub mod error;
pub mod experiment;
pub mod features;
pub mod fusion;
pub mod geom;
pub mod global_planner;
pub mod local_planner;
pub mod sensor;
pub mod sim;
pub mod terrain;

pub use error::{NavError, Result};
pub use geom::Point2;

/// Cost assigned to untraversable cells. Finite so it can take part in arithmetic, but
/// large enough to dominate any accumulated path cost.
pub const C_MAX: f64 = 1e6;
