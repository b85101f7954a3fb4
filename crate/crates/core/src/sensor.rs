//! Simulated depth sensing and the rover-centric traversability costmap.
//!
//! Frames: the rover-local frame has x forward, y left, z up, with the origin on the
//! terrain surface directly below the rover. The camera sits at `(0, 0, height_above_ground)`
//! looking along +x, pitched by `pitch` (negative looks down).
//!
//! Depth values are planar depths along the optical axis, so a pixel with depth `d` maps to
//! camera coordinates `(d, -u d / f, -v d / f)` where `(u, v)` is the pixel offset from the
//! image center and `f` the focal length in pixels.

use std::f64::consts::FRAC_PI_2;
use std::io::Write;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::sim::RoverState;
use crate::terrain::TerrainModel;
use crate::{NavError, Point2, Result, C_MAX};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CameraModel {
    pub height_above_ground: f64,
    /// Radians, negative = downward.
    pub pitch: f64,
    /// Horizontal field of view in radians.
    pub hfov: f64,
    pub rows: usize,
    pub cols: usize,
    /// `d_thresh`: depths beyond this are dropped, and it sizes the local costmap.
    pub max_depth: f64,
    /// Ray-marching step in meters of travel along the ray.
    pub march_step: f64,
}

impl Default for CameraModel {
    fn default() -> Self {
        CameraModel {
            height_above_ground: 1.5,
            pitch: -30f64.to_radians(),
            hfov: FRAC_PI_2,
            rows: 48,
            cols: 64,
            max_depth: 20.0,
            march_step: 0.05,
        }
    }
}

impl CameraModel {
    pub fn validate(&self) -> Result<()> {
        if !(self.hfov > 0.0 && self.hfov < std::f64::consts::PI) {
            return Err(NavError::config("camera hfov must lie in (0, pi)"));
        }
        if self.rows < 2 || self.cols < 2 {
            return Err(NavError::config("camera image must be at least 2x2"));
        }
        if !(self.max_depth > 0.0 && self.max_depth.is_finite()) {
            return Err(NavError::config("camera max depth must be positive"));
        }
        if !(self.march_step > 0.0) {
            return Err(NavError::config("march step must be positive"));
        }
        if !self.pitch.is_finite() || !self.height_above_ground.is_finite() {
            return Err(NavError::NonFinite("camera pose"));
        }
        Ok(())
    }

    pub fn focal_px(&self) -> f64 {
        (self.cols as f64 / 2.0) / (self.hfov / 2.0).tan()
    }

    /// Ray through pixel `(row, col)` in the rover-local frame, scaled so that its
    /// optical-axis component is 1 (multiplying by a planar depth gives the offset).
    pub fn pixel_ray(&self, row: usize, col: usize) -> [f64; 3] {
        let f = self.focal_px();
        let u = col as f64 + 0.5 - self.cols as f64 / 2.0;
        let v = row as f64 + 0.5 - self.rows as f64 / 2.0;
        let (left, up) = (-u / f, -v / f);
        let (sp, cp) = self.pitch.sin_cos();
        [cp - up * sp, left, sp + up * cp]
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct DepthImage {
    pub rows: usize,
    pub cols: usize,
    /// Row-major planar depths; `None` marks filtered or missed rays.
    pub depth: Vec<Option<f64>>,
}

impl DepthImage {
    pub fn get(&self, row: usize, col: usize) -> Option<f64> {
        self.depth[row * self.cols + col]
    }

    pub fn valid_count(&self) -> usize {
        self.depth.iter().filter(|d| d.is_some()).count()
    }
}

/// Ray-casts the terrain from the rover's camera.
///
/// Each ray is marched in fixed steps of `cam.march_step` meters and the first crossing
/// below the surface is refined by bisection. Rays that leave the extent or pass
/// `cam.max_depth` produce the invalid marker.
pub fn render_depth_image(t: &TerrainModel, pose: &RoverState, cam: &CameraModel) -> Result<DepthImage> {
    cam.validate()?;
    let ground = t.height_at(pose.position)?;
    let cam_z = ground + cam.height_above_ground;
    if !(cam.height_above_ground > 0.0) {
        return Err(NavError::CameraBelowTerrain {
            camera_z: cam_z,
            ground_z: ground,
        });
    }
    let (s, c) = pose.heading.sin_cos();
    let origin = [pose.position.x, pose.position.y, cam_z];

    let depth = (0..cam.rows * cam.cols)
        .into_par_iter()
        .map(|i| {
            let r = cam.pixel_ray(i / cam.cols, i % cam.cols);
            let dir = [c * r[0] - s * r[1], s * r[0] + c * r[1], r[2]];
            cast_ray(t, origin, dir, cam.max_depth, cam.march_step)
        })
        .collect();
    Ok(DepthImage {
        rows: cam.rows,
        cols: cam.cols,
        depth,
    })
}

/// Marches `origin + s * dir` for `s` in `(0, max_param]` and returns the parameter of the
/// first surface crossing.
fn cast_ray(t: &TerrainModel, origin: [f64; 3], dir: [f64; 3], max_param: f64, step: f64) -> Option<f64> {
    let len = (dir[0] * dir[0] + dir[1] * dir[1] + dir[2] * dir[2]).sqrt();
    let ds = step / len;
    let at = |s: f64| {
        (
            Point2::new(origin[0] + s * dir[0], origin[1] + s * dir[1]),
            origin[2] + s * dir[2],
        )
    };
    let below = |s: f64| -> Option<bool> {
        let (p, z) = at(s);
        if !t.contains(p) {
            return None;
        }
        Some(z <= t.height_unchecked(p))
    };

    let mut prev = 0.0;
    let mut k = 1usize;
    loop {
        let s = (k as f64 * ds).min(max_param);
        if below(s)? {
            let (mut lo, mut hi) = (prev, s);
            for _ in 0..48 {
                let mid = 0.5 * (lo + hi);
                match below(mid) {
                    Some(true) => hi = mid,
                    _ => lo = mid,
                }
            }
            return Some(hi);
        }
        if s >= max_param {
            return None;
        }
        prev = s;
        k += 1;
    }
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct PointCloud {
    /// `(x, y, z)` in the rover-local frame.
    pub points: Vec<[f64; 3]>,
}

impl PointCloud {
    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }
}

/// Back-projects every valid pixel into the rover-local frame.
pub fn project_point_cloud(d: &DepthImage, cam: &CameraModel) -> Result<PointCloud> {
    if d.rows != cam.rows || d.cols != cam.cols || d.depth.len() != d.rows * d.cols {
        return Err(NavError::GridMismatch(format!(
            "depth image {}x{} vs camera {}x{}",
            d.rows, d.cols, cam.rows, cam.cols
        )));
    }
    let mut points = Vec::with_capacity(d.valid_count());
    for row in 0..d.rows {
        for col in 0..d.cols {
            if let Some(depth) = d.get(row, col) {
                if !depth.is_finite() {
                    return Err(NavError::NonFinite("depth image"));
                }
                let r = cam.pixel_ray(row, col);
                points.push([depth * r[0], depth * r[1], cam.height_above_ground + depth * r[2]]);
            }
        }
    }
    Ok(PointCloud { points })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CostWeights {
    pub w_grad: f64,
    pub w_var: f64,
}

impl Default for CostWeights {
    fn default() -> Self {
        CostWeights {
            w_grad: 1.0,
            w_var: 10.0,
        }
    }
}

/// Rover-centric grid of 1 m cells: `size` rows forward (x in `[0, size)`) by `2 size`
/// columns lateral (y in `[-size, size)`, column 0 on the right).
#[derive(Clone, Debug, PartialEq)]
pub struct LocalCostMap {
    size: usize,
    costs: Vec<f64>,
    observed: Vec<bool>,
    pose: RoverState,
}

impl LocalCostMap {
    pub const CELL_M: f64 = 1.0;

    /// An all-unobserved map for a given `d_thresh` (rounded up to whole cells).
    pub fn unobserved(d_thresh: f64, pose: RoverState) -> Self {
        let size = d_thresh.ceil().max(1.0) as usize;
        LocalCostMap {
            size,
            costs: vec![0.0; size * 2 * size],
            observed: vec![false; size * 2 * size],
            pose,
        }
    }

    pub fn rows(&self) -> usize {
        self.size
    }

    pub fn cols(&self) -> usize {
        2 * self.size
    }

    pub fn pose(&self) -> &RoverState {
        &self.pose
    }

    /// Cell containing a rover-local point, if inside the map.
    pub fn cell_of(&self, local: Point2) -> Option<(usize, usize)> {
        let i = local.x.floor();
        let j = (local.y + self.size as f64).floor();
        if i >= 0.0 && j >= 0.0 && (i as usize) < self.rows() && (j as usize) < self.cols() {
            Some((i as usize, j as usize))
        } else {
            None
        }
    }

    /// Like [`cell_of`](Self::cell_of) but clamps points outside the map to its border.
    pub fn clamped_cell_of(&self, local: Point2) -> (usize, usize) {
        let i = local.x.floor().clamp(0.0, (self.rows() - 1) as f64);
        let j = (local.y + self.size as f64)
            .floor()
            .clamp(0.0, (self.cols() - 1) as f64);
        (i as usize, j as usize)
    }

    pub fn cell_center(&self, row: usize, col: usize) -> Point2 {
        Point2::new(row as f64 + 0.5, col as f64 + 0.5 - self.size as f64)
    }

    /// `Some(cost)` for observed cells, `None` for unobserved ones.
    pub fn cell(&self, row: usize, col: usize) -> Option<f64> {
        let k = row * self.cols() + col;
        self.observed[k].then_some(self.costs[k])
    }

    pub fn set_cell(&mut self, row: usize, col: usize, cost: f64) {
        let k = row * self.cols() + col;
        self.costs[k] = cost;
        self.observed[k] = true;
    }

    pub fn cost_at_local(&self, local: Point2) -> Option<f64> {
        self.cell_of(local).and_then(|(i, j)| self.cell(i, j))
    }

    pub fn world_to_local(&self, p: Point2) -> Point2 {
        (p - self.pose.position).rotated(-self.pose.heading)
    }

    pub fn local_to_world(&self, p: Point2) -> Point2 {
        p.rotated(self.pose.heading) + self.pose.position
    }

    pub fn cost_at_world(&self, p: Point2) -> Option<f64> {
        self.cost_at_local(self.world_to_local(p))
    }

    /// Observed cells as `(row, col, cost)`, row-major.
    pub fn observed_cells(&self) -> impl Iterator<Item = (usize, usize, f64)> + '_ {
        let cols = self.cols();
        self.observed
            .iter()
            .enumerate()
            .filter(|(_, &o)| o)
            .map(move |(k, _)| (k / cols, k % cols, self.costs[k]))
    }

    pub fn observed_count(&self) -> usize {
        self.observed.iter().filter(|&&o| o).count()
    }

    /// Row-major CSV, one map row per line, unobserved cells written as `nan`.
    pub fn write_csv(&self, w: &mut impl Write) -> std::io::Result<()> {
        for row in 0..self.rows() {
            let line: Vec<String> = (0..self.cols())
                .map(|col| match self.cell(row, col) {
                    Some(c) => c.to_string(),
                    None => "nan".to_string(),
                })
                .collect();
            writeln!(w, "{}", line.join(","))?;
        }
        Ok(())
    }

    pub fn save_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let mut f = std::io::BufWriter::new(std::fs::File::create(path).map_err(|e| NavError::io(path, e))?);
        self.write_csv(&mut f).map_err(|e| NavError::io(path, e))
    }
}

const STRIP_RATIO: f64 = 0.1;

/// Per-cell slope and roughness summary of a set of points.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CellStats {
    pub count: usize,
    /// Population variance of z.
    pub variance: f64,
    /// Magnitude of the least-squares plane slope (0 for fewer than 3 points).
    pub gradient: f64,
}

/// Fits `z = a x + b y + c` by least squares and returns population variance of z and
/// `|(a, b)|`. When the x-y scatter is a thin strip (minor-axis spread under a tenth of the
/// major-axis spread) the slope is taken along its principal direction instead.
pub fn cell_stats(points: &[[f64; 3]]) -> CellStats {
    let n = points.len();
    if n == 0 {
        return CellStats {
            count: 0,
            variance: 0.0,
            gradient: 0.0,
        };
    }
    let nf = n as f64;
    let mean = points
        .iter()
        .fold([0.0; 3], |acc, p| [acc[0] + p[0], acc[1] + p[1], acc[2] + p[2]]);
    let mean = mean.map(|m| m / nf);
    let (mut sxx, mut sxy, mut syy, mut sxz, mut syz, mut szz) = (0.0, 0.0, 0.0, 0.0, 0.0, 0.0);
    for p in points {
        let (dx, dy, dz) = (p[0] - mean[0], p[1] - mean[1], p[2] - mean[2]);
        sxx += dx * dx;
        sxy += dx * dy;
        syy += dy * dy;
        sxz += dx * dz;
        syz += dy * dz;
        szz += dz * dz;
    }
    let variance = szz / nf;
    if n < 3 {
        return CellStats {
            count: n,
            variance,
            gradient: 0.0,
        };
    }
    let trace = sxx + syy;
    let det = sxx * syy - sxy * sxy;
    let spread = (0.5 * (sxx - syy)).hypot(sxy);
    let (major, minor) = (0.5 * trace + spread, 0.5 * trace - spread);
    let gradient = if trace <= 1e-12 {
        0.0
    } else if minor > STRIP_RATIO * STRIP_RATIO * major {
        let a = (syy * sxz - sxy * syz) / det;
        let b = (sxx * syz - sxy * sxz) / det;
        a.hypot(b)
    } else {
        // Principal axis of the x-y scatter.
        let (ex, ey) = if sxy.abs() > 1e-15 {
            (major - syy, sxy)
        } else if sxx >= syy {
            (1.0, 0.0)
        } else {
            (0.0, 1.0)
        };
        let norm = ex.hypot(ey);
        let (ex, ey) = (ex / norm, ey / norm);
        let s_tt = ex * ex * sxx + 2.0 * ex * ey * sxy + ey * ey * syy;
        let s_tz = ex * sxz + ey * syz;
        if s_tt > 1e-12 {
            (s_tz / s_tt).abs()
        } else {
            0.0
        }
    };
    CellStats {
        count: n,
        variance,
        gradient,
    }
}

/// Grids the cloud into 1 m cells and scores each occupied cell as
/// `w_grad * gradient + w_var * variance`.
pub fn build_local_costmap(
    p: &PointCloud,
    pose: &RoverState,
    weights: CostWeights,
    d_thresh: f64,
) -> Result<LocalCostMap> {
    if !(weights.w_grad >= 0.0 && weights.w_var >= 0.0) {
        return Err(NavError::config("costmap weights must be nonnegative"));
    }
    let mut map = LocalCostMap::unobserved(d_thresh, *pose);
    let mut buckets: Vec<Vec<[f64; 3]>> = vec![Vec::new(); map.rows() * map.cols()];
    for pt in &p.points {
        if !pt.iter().all(|v| v.is_finite()) {
            return Err(NavError::NonFinite("point cloud"));
        }
        if let Some((i, j)) = map.cell_of(Point2::new(pt[0], pt[1])) {
            buckets[i * map.cols() + j].push(*pt);
        }
    }
    let cols = map.cols();
    for (k, pts) in buckets.iter().enumerate() {
        if pts.is_empty() {
            continue;
        }
        let stats = cell_stats(pts);
        let cost = (weights.w_grad * stats.gradient + weights.w_var * stats.variance).min(C_MAX);
        map.set_cell(k / cols, k % cols, cost);
    }
    Ok(map)
}
