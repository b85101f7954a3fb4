//! Synthetic ground-truth terrain.
//!
//! A [`TerrainModel`] is a pair of aligned rasters (elevation in meters and RGB albedo)
//! plus the list of rocks stamped into them. Raster cell `(row, col)` covers
//! `[col * res, (col + 1) * res) x [row * res, (row + 1) * res)` in world meters, with its
//! sample taken at the cell center. Rows run along +y, columns along +x.
//!
//! [`generate_terrain`] builds one from a [`ScenarioSpec`]:
//!
//! * base relief is two octaves of seeded value noise on fixed lattices
//!   ([`NOISE_WAVELENGTHS_M`]) scaled by the `roughness` amplitude,
//! * craters subtract a tapered depression `depth * cos^2(pi d / 2r)`,
//! * rocks add the same bump shape with their own height and radius,
//! * albedo is a mid gray with faint seeded texture, darkened inside craters, tinted over
//!   the rock field rectangle and lightened again on rock footprints.

use std::f64::consts::PI;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::{NavError, Point2, Result, C_MAX};

pub const DEFAULT_RES_M: f64 = 0.5;
pub const MAX_ROCKS: usize = 1_000_000;

/// Lattice spacing of the two value-noise octaves, and their relative amplitudes.
pub const NOISE_WAVELENGTHS_M: [f64; 2] = [16.0, 5.0];
const NOISE_AMPLITUDES: [f64; 2] = [1.0, 0.35];

pub const BASE_ALBEDO: f64 = 0.42;
const ALBEDO_TEXTURE: f64 = 0.03;
const ALBEDO_TEXTURE_WAVELENGTH_M: f64 = 3.0;
const CRATER_DARKENING: f64 = 0.35;
const ROCK_LIGHTENING: f64 = 0.25;
const DEFAULT_FIELD_TINT: f64 = 0.2;

/// Weight on slope magnitude in [`true_cost_at`].
pub const DEFAULT_SLOPE_WEIGHT: f64 = 1.0;
/// Added by [`true_cost_at`] for each small rock overlapping the query point.
pub const SMALL_ROCK_PENALTY: f64 = 1.0;

const ROCK_STREAM: u64 = 0x524f_434b_5f46_4c44;
const ALBEDO_STREAM: u64 = 0x414c_4245_444f_5f54;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RockClass {
    Small,
    Medium,
}

impl RockClass {
    /// Footprint radius range in meters (diameters 0.1-0.2 m and 0.2-0.4 m).
    pub fn radius_range(self) -> (f64, f64) {
        match self {
            RockClass::Small => (0.05, 0.1),
            RockClass::Medium => (0.1, 0.2),
        }
    }

    /// Default height range. Both classes stand taller than the default rover clearance.
    pub fn default_height_range(self) -> (f64, f64) {
        match self {
            RockClass::Small => (0.16, 0.25),
            RockClass::Medium => (0.3, 0.5),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RockInstance {
    pub center: Point2,
    pub radius: f64,
    pub height: f64,
    pub class: RockClass,
}

impl RockInstance {
    /// Height of this rock's bump at distance `d` from its center.
    pub fn bump_at(&self, d: f64) -> f64 {
        tapered_bump(self.height, self.radius, d)
    }
}

/// `h * cos^2(pi d / 2r)` for `d <= r`, zero outside.
pub fn tapered_bump(h: f64, r: f64, d: f64) -> f64 {
    if d > r {
        0.0
    } else {
        let c = (PI * d / (2.0 * r)).cos();
        h * c * c
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Crater {
    pub center: Point2,
    pub radius: f64,
    pub depth: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RockField {
    /// `[x_min, y_min, x_max, y_max]` in meters.
    pub rect: [f64; 4],
    pub class: RockClass,
    /// Rocks per square meter.
    pub density: f64,
    /// Overrides the class default `[min, max]` rock height.
    #[serde(default)]
    pub height_range: Option<[f64; 2]>,
    /// Albedo added over the whole rectangle.
    #[serde(default = "default_field_tint")]
    pub tint: f64,
}

fn default_field_tint() -> f64 {
    DEFAULT_FIELD_TINT
}

impl RockField {
    pub fn contains(&self, p: Point2) -> bool {
        let [x0, y0, x1, y1] = self.rect;
        p.x >= x0 && p.x <= x1 && p.y >= y0 && p.y <= y1
    }

    pub fn area(&self) -> f64 {
        let [x0, y0, x1, y1] = self.rect;
        (x1 - x0).max(0.0) * (y1 - y0).max(0.0)
    }

    pub fn rock_count(&self) -> f64 {
        (self.density * self.area()).round()
    }

    fn height_range(&self) -> (f64, f64) {
        match self.height_range {
            Some([lo, hi]) => (lo, hi),
            None => self.class.default_height_range(),
        }
    }
}

fn default_res() -> f64 {
    DEFAULT_RES_M
}

/// Everything needed to build one world.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScenarioSpec {
    pub seed: u64,
    /// `[width, height]` in meters.
    pub extent_m: [f64; 2],
    #[serde(default = "default_res")]
    pub res_m: f64,
    pub start: Point2,
    pub goal: Point2,
    #[serde(default)]
    pub rock_field: Option<RockField>,
    #[serde(default)]
    pub craters: Vec<Crater>,
    /// Amplitude of the base relief in meters.
    #[serde(default)]
    pub roughness: f64,
}

impl ScenarioSpec {
    /// A rock-free, crater-free, perfectly flat world.
    pub fn flat(seed: u64, extent_m: [f64; 2], start: Point2, goal: Point2) -> Self {
        ScenarioSpec {
            seed,
            extent_m,
            res_m: DEFAULT_RES_M,
            start,
            goal,
            rock_field: None,
            craters: Vec::new(),
            roughness: 0.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let [w, h] = self.extent_m;
        if !(w.is_finite() && h.is_finite() && w > 0.0 && h > 0.0) {
            return Err(NavError::config(format!("extent must be positive, got {w} x {h}")));
        }
        if !(self.res_m.is_finite() && self.res_m > 0.0) {
            return Err(NavError::config(format!(
                "resolution must be positive, got {}",
                self.res_m
            )));
        }
        if !(self.roughness.is_finite() && self.roughness >= 0.0) {
            return Err(NavError::config("roughness must be finite and nonnegative"));
        }
        let inside = |p: Point2| p.x >= 0.0 && p.x <= w && p.y >= 0.0 && p.y <= h;
        if !inside(self.start) {
            return Err(NavError::config("start lies outside the extent"));
        }
        if !inside(self.goal) {
            return Err(NavError::config("goal lies outside the extent"));
        }
        if let Some(field) = &self.rock_field {
            let [x0, y0, x1, y1] = field.rect;
            if !(x0 < x1 && y0 < y1) || !inside(Point2::new(x0, y0)) || !inside(Point2::new(x1, y1)) {
                return Err(NavError::config(
                    "rock field rectangle must be nonempty and inside the extent",
                ));
            }
            if !(field.density.is_finite() && field.density >= 0.0) {
                return Err(NavError::config("rock density must be finite and nonnegative"));
            }
            if field.rock_count() > MAX_ROCKS as f64 {
                return Err(NavError::config(format!(
                    "rock field would hold {} rocks (limit {MAX_ROCKS})",
                    field.rock_count()
                )));
            }
            let (lo, hi) = field.height_range();
            if !(lo > 0.0 && lo <= hi && hi.is_finite()) {
                return Err(NavError::config("rock height range must satisfy 0 < min <= max"));
            }
            if field.contains(self.start) {
                return Err(NavError::config("start lies inside the rock field"));
            }
        }
        for c in &self.craters {
            if !(c.radius > 0.0 && c.depth >= 0.0 && c.center.is_finite() && c.depth.is_finite()) {
                return Err(NavError::config("craters need positive radius and nonnegative depth"));
            }
        }
        Ok(())
    }
}

/// Reads a [`ScenarioSpec`] from a TOML file.
pub fn load_scenario(path: impl AsRef<Path>) -> Result<ScenarioSpec> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| NavError::io(path, e))?;
    let spec: ScenarioSpec = toml::from_str(&text).map_err(|e| NavError::Parse {
        path: path.display().to_string(),
        message: e.to_string(),
    })?;
    spec.validate()?;
    Ok(spec)
}

/// Immutable ground-truth world.
#[derive(Clone, Debug)]
pub struct TerrainModel {
    res_m: f64,
    rows: usize,
    cols: usize,
    elevation: Vec<f64>,
    albedo: Vec<[f64; 3]>,
    rocks: Vec<RockInstance>,
    rock_index: RockIndex,
}

impl TerrainModel {
    /// Assembles a model from raw row-major rasters, checking every invariant.
    pub fn from_grids(
        res_m: f64,
        rows: usize,
        cols: usize,
        elevation: Vec<f64>,
        albedo: Vec<[f64; 3]>,
        rocks: Vec<RockInstance>,
    ) -> Result<Self> {
        if !(res_m.is_finite() && res_m > 0.0) {
            return Err(NavError::config("resolution must be positive"));
        }
        if rows == 0 || cols == 0 {
            return Err(NavError::config("terrain grid must be nonempty"));
        }
        let n = rows * cols;
        if elevation.len() != n || albedo.len() != n {
            return Err(NavError::GridMismatch(format!(
                "expected {n} cells, got elevation {} and albedo {}",
                elevation.len(),
                albedo.len()
            )));
        }
        if elevation.iter().any(|z| !z.is_finite()) {
            return Err(NavError::NonFinite("elevation grid"));
        }
        if albedo.iter().flatten().any(|c| !(0.0..=1.0).contains(c)) {
            return Err(NavError::config("albedo components must lie in [0, 1]"));
        }
        let (w, h) = (cols as f64 * res_m, rows as f64 * res_m);
        for r in &rocks {
            let c = r.center;
            if !(c.x >= 0.0 && c.x <= w && c.y >= 0.0 && c.y <= h) {
                return Err(NavError::config("rock center outside the extent"));
            }
            if !(r.radius > 0.0 && r.height > 0.0) {
                return Err(NavError::config("rock radius and height must be positive"));
            }
        }
        let rock_index = RockIndex::build(&rocks, w, h);
        Ok(TerrainModel {
            res_m,
            rows,
            cols,
            elevation,
            albedo,
            rocks,
            rock_index,
        })
    }

    /// Flat terrain of constant elevation and albedo, without rocks.
    pub fn uniform(res_m: f64, rows: usize, cols: usize, elevation: f64, albedo: [f64; 3]) -> Result<Self> {
        let n = rows * cols;
        Self::from_grids(res_m, rows, cols, vec![elevation; n], vec![albedo; n], Vec::new())
    }

    pub fn res_m(&self) -> f64 {
        self.res_m
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    /// `(width_m, height_m)`.
    pub fn extent(&self) -> (f64, f64) {
        (self.cols as f64 * self.res_m, self.rows as f64 * self.res_m)
    }

    pub fn contains(&self, p: Point2) -> bool {
        let (w, h) = self.extent();
        p.x >= 0.0 && p.x <= w && p.y >= 0.0 && p.y <= h
    }

    pub fn elevation_grid(&self) -> &[f64] {
        &self.elevation
    }

    pub fn albedo_grid(&self) -> &[[f64; 3]] {
        &self.albedo
    }

    pub fn rocks(&self) -> &[RockInstance] {
        &self.rocks
    }

    /// World position of a raster cell's center.
    pub fn cell_center(&self, row: usize, col: usize) -> Point2 {
        Point2::new((col as f64 + 0.5) * self.res_m, (row as f64 + 0.5) * self.res_m)
    }

    /// Indices of rocks whose footprint may reach within `margin` of `p`.
    pub fn rocks_near(&self, p: Point2, margin: f64) -> impl Iterator<Item = usize> + '_ {
        self.rock_index.query(p, margin)
    }

    fn check(&self, p: Point2) -> Result<()> {
        if p.is_finite() && self.contains(p) {
            Ok(())
        } else {
            Err(NavError::OutOfBounds { x: p.x, y: p.y })
        }
    }

    /// Bilinear weights between neighbouring cell centers, clamped at the border.
    fn stencil(&self, p: Point2) -> [(usize, f64); 4] {
        let axis = |v: f64, n: usize| {
            let f = v / self.res_m - 0.5;
            if f <= 0.0 {
                (0, 0, 0.0)
            } else if f >= (n - 1) as f64 {
                (n - 1, n - 1, 0.0)
            } else {
                let i0 = f.floor() as usize;
                (i0, i0 + 1, f - i0 as f64)
            }
        };
        let (c0, c1, tx) = axis(p.x, self.cols);
        let (r0, r1, ty) = axis(p.y, self.rows);
        [
            (r0 * self.cols + c0, (1.0 - tx) * (1.0 - ty)),
            (r0 * self.cols + c1, tx * (1.0 - ty)),
            (r1 * self.cols + c0, (1.0 - tx) * ty),
            (r1 * self.cols + c1, tx * ty),
        ]
    }

    /// Bilinear elevation at a world point.
    pub fn height_at(&self, p: Point2) -> Result<f64> {
        self.check(p)?;
        Ok(self.height_unchecked(p))
    }

    /// Same as [`height_at`](Self::height_at) for callers that already know `p` is inside.
    pub(crate) fn height_unchecked(&self, p: Point2) -> f64 {
        self.stencil(p).iter().map(|&(i, w)| w * self.elevation[i]).sum()
    }

    /// Per-channel bilinear albedo, clamped to `[0, 1]`.
    pub fn albedo_at(&self, p: Point2) -> Result<[f64; 3]> {
        self.check(p)?;
        let mut rgb = [0.0; 3];
        for (i, w) in self.stencil(p) {
            for (acc, v) in rgb.iter_mut().zip(self.albedo[i]) {
                *acc += w * v;
            }
        }
        Ok(rgb.map(|c| c.clamp(0.0, 1.0)))
    }

    /// Slope magnitude of the interpolated surface by central differences one cell wide,
    /// falling back to one-sided differences at the border.
    pub fn slope_at(&self, p: Point2) -> Result<f64> {
        self.check(p)?;
        let (w, h) = self.extent();
        let d = self.res_m;
        let diff = |lo: Point2, hi: Point2, span: f64| {
            if span > 0.0 {
                (self.height_unchecked(hi) - self.height_unchecked(lo)) / span
            } else {
                0.0
            }
        };
        let (x0, x1) = ((p.x - d).max(0.0), (p.x + d).min(w));
        let (y0, y1) = ((p.y - d).max(0.0), (p.y + d).min(h));
        let gx = diff(Point2::new(x0, p.y), Point2::new(x1, p.y), x1 - x0);
        let gy = diff(Point2::new(p.x, y0), Point2::new(p.x, y1), y1 - y0);
        Ok(gx.hypot(gy))
    }
}

/// Evaluation-only ground-truth cost: slope term plus rock penalties.
///
/// Medium-rock footprints are untraversable and return [`C_MAX`]. The planner never calls
/// this; it only sees costs derived from simulated sensing.
pub fn true_cost_at(t: &TerrainModel, p: Point2, w_slope: f64) -> Result<f64> {
    let mut cost = w_slope * t.slope_at(p)?;
    for i in t.rocks_near(p, 0.0) {
        let rock = &t.rocks[i];
        if rock.center.distance(p) <= rock.radius {
            match rock.class {
                RockClass::Medium => return Ok(C_MAX),
                RockClass::Small => cost += SMALL_ROCK_PENALTY,
            }
        }
    }
    Ok(cost.min(C_MAX))
}

/// Bucket grid over rock centers, 1 m buckets.
#[derive(Clone, Debug)]
struct RockIndex {
    cols: usize,
    rows: usize,
    max_radius: f64,
    buckets: Vec<Vec<usize>>,
}

impl RockIndex {
    const BUCKET_M: f64 = 1.0;

    fn build(rocks: &[RockInstance], w: f64, h: f64) -> Self {
        let cols = (w / Self::BUCKET_M).ceil().max(1.0) as usize;
        let rows = (h / Self::BUCKET_M).ceil().max(1.0) as usize;
        let mut buckets = vec![Vec::new(); cols * rows];
        let mut max_radius: f64 = 0.0;
        for (i, r) in rocks.iter().enumerate() {
            let c = ((r.center.x / Self::BUCKET_M) as usize).min(cols - 1);
            let rr = ((r.center.y / Self::BUCKET_M) as usize).min(rows - 1);
            buckets[rr * cols + c].push(i);
            max_radius = max_radius.max(r.radius);
        }
        RockIndex {
            cols,
            rows,
            max_radius,
            buckets,
        }
    }

    fn query(&self, p: Point2, margin: f64) -> impl Iterator<Item = usize> + '_ {
        let reach = self.max_radius + margin.max(0.0);
        let span = |v: f64, n: usize| {
            let lo = ((v - reach) / Self::BUCKET_M).floor().max(0.0) as usize;
            let hi = (((v + reach) / Self::BUCKET_M).floor().max(0.0) as usize).min(n - 1);
            (lo.min(n - 1), hi)
        };
        let (c0, c1) = span(p.x, self.cols);
        let (r0, r1) = span(p.y, self.rows);
        (r0..=r1).flat_map(move |r| (c0..=c1).flat_map(move |c| self.buckets[r * self.cols + c].iter().copied()))
    }
}

/// Builds the world for `spec`. Pure function of the spec.
pub fn generate_terrain(spec: &ScenarioSpec) -> Result<TerrainModel> {
    spec.validate()?;
    let res = spec.res_m;
    let cols = ((spec.extent_m[0] / res).round() as usize).max(1);
    let rows = ((spec.extent_m[1] / res).round() as usize).max(1);
    if rows.saturating_mul(cols) > 200_000_000 {
        return Err(NavError::config("terrain raster too large"));
    }

    let rocks = place_rocks(spec, cols as f64 * res, rows as f64 * res);

    let mut elevation = Vec::with_capacity(rows * cols);
    let mut albedo = Vec::with_capacity(rows * cols);
    for row in 0..rows {
        for col in 0..cols {
            let p = Point2::new((col as f64 + 0.5) * res, (row as f64 + 0.5) * res);
            let mut z = spec.roughness * relief_noise(spec.seed, p);
            let mut gray =
                BASE_ALBEDO + ALBEDO_TEXTURE * value_noise(spec.seed ^ ALBEDO_STREAM, p, ALBEDO_TEXTURE_WAVELENGTH_M);
            for c in &spec.craters {
                let profile = tapered_bump(1.0, c.radius, c.center.distance(p));
                z -= c.depth * profile;
                gray *= 1.0 - CRATER_DARKENING * profile;
            }
            if let Some(field) = &spec.rock_field {
                if field.contains(p) {
                    gray += field.tint;
                }
            }
            elevation.push(z);
            albedo.push(gray);
        }
    }

    for rock in &rocks {
        let c0 = (((rock.center.x - rock.radius) / res).floor().max(0.0)) as usize;
        let c1 = (((rock.center.x + rock.radius) / res).ceil() as usize).min(cols - 1);
        let r0 = (((rock.center.y - rock.radius) / res).floor().max(0.0)) as usize;
        let r1 = (((rock.center.y + rock.radius) / res).ceil() as usize).min(rows - 1);
        for row in r0..=r1 {
            for col in c0..=c1 {
                let p = Point2::new((col as f64 + 0.5) * res, (row as f64 + 0.5) * res);
                let d = rock.center.distance(p);
                if d <= rock.radius {
                    elevation[row * cols + col] += rock.bump_at(d);
                    albedo[row * cols + col] += ROCK_LIGHTENING;
                }
            }
        }
    }

    let albedo = albedo.into_iter().map(|g| [g.clamp(0.0, 1.0); 3]).collect();
    TerrainModel::from_grids(res, rows, cols, elevation, albedo, rocks)
}

fn place_rocks(spec: &ScenarioSpec, w: f64, h: f64) -> Vec<RockInstance> {
    let Some(field) = &spec.rock_field else {
        return Vec::new();
    };
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed ^ ROCK_STREAM);
    let [x0, y0, x1, y1] = field.rect;
    let (r_lo, r_hi) = field.class.radius_range();
    let (h_lo, h_hi) = field.height_range();
    let n = field.rock_count() as usize;
    (0..n)
        .map(|_| {
            let x: f64 = rng.gen_range(x0..=x1);
            let y: f64 = rng.gen_range(y0..=y1);
            RockInstance {
                center: Point2::new(x.clamp(0.0, w), y.clamp(0.0, h)),
                radius: rng.gen_range(r_lo..=r_hi),
                height: rng.gen_range(h_lo..=h_hi),
                class: field.class,
            }
        })
        .collect()
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Lattice value in [-1, 1] for integer node `(ix, iy)`.
fn lattice_value(seed: u64, ix: i64, iy: i64) -> f64 {
    let h = splitmix64(seed ^ splitmix64((ix as u64).wrapping_mul(0x9e37_79b9) ^ (iy as u64).rotate_left(32)));
    (h >> 11) as f64 / (1u64 << 53) as f64 * 2.0 - 1.0
}

fn smoothstep(t: f64) -> f64 {
    t * t * (3.0 - 2.0 * t)
}

/// Smoothly interpolated lattice noise in [-1, 1] with nodes every `wavelength` meters.
fn value_noise(seed: u64, p: Point2, wavelength: f64) -> f64 {
    let fx = p.x / wavelength;
    let fy = p.y / wavelength;
    let (ix, iy) = (fx.floor(), fy.floor());
    let (tx, ty) = (smoothstep(fx - ix), smoothstep(fy - iy));
    let (ix, iy) = (ix as i64, iy as i64);
    let v00 = lattice_value(seed, ix, iy);
    let v10 = lattice_value(seed, ix + 1, iy);
    let v01 = lattice_value(seed, ix, iy + 1);
    let v11 = lattice_value(seed, ix + 1, iy + 1);
    let a = v00 + (v10 - v00) * tx;
    let b = v01 + (v11 - v01) * tx;
    a + (b - a) * ty
}

/// Normalized two-octave relief in [-1, 1].
fn relief_noise(seed: u64, p: Point2) -> f64 {
    let total: f64 = NOISE_AMPLITUDES.iter().sum();
    NOISE_WAVELENGTHS_M
        .iter()
        .zip(NOISE_AMPLITUDES)
        .enumerate()
        .map(|(octave, (&wl, amp))| amp * value_noise(seed.wrapping_add(octave as u64), p, wl))
        .sum::<f64>()
        / total
}
