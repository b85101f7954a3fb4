//! Terrain feature vectors and top-down rendering.
//!
//! A feature vector describes the terrain patch around a point by casting a square lattice
//! of downward rays over it and concatenating, per ray, the surface color and the distance
//! the ray travelled before reaching the surface. The raster backend samples the terrain
//! exactly; a learned scene representation can stand in behind [`FeatureSource`].

use std::io::Write;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::terrain::TerrainModel;
use crate::{NavError, Point2, Result};

/// Largest top-down image [`render_topdown`] will allocate.
pub const MAX_TOPDOWN_PIXELS: usize = 100_000_000;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FeatureConfig {
    /// Must be a perfect square.
    pub n_rays: usize,
    pub patch_size_m: f64,
    pub ray_height_m: f64,
}

impl Default for FeatureConfig {
    fn default() -> Self {
        FeatureConfig {
            n_rays: 16,
            patch_size_m: 4.0,
            ray_height_m: 50.0,
        }
    }
}

impl FeatureConfig {
    /// Rays per lattice side.
    pub fn side(&self) -> Result<usize> {
        let side = (self.n_rays as f64).sqrt().round() as usize;
        if self.n_rays == 0 || side * side != self.n_rays {
            return Err(NavError::config(format!(
                "n_rays = {} is not a perfect square",
                self.n_rays
            )));
        }
        Ok(side)
    }

    pub fn dim(&self) -> usize {
        4 * self.n_rays
    }

    /// Offsets of the ray lattice from the patch center, row-major (rows along +y).
    pub fn lattice(&self) -> Result<Vec<Point2>> {
        let side = self.side()?;
        if !(self.patch_size_m > 0.0 && self.patch_size_m.is_finite()) {
            return Err(NavError::config("patch size must be positive"));
        }
        let step = self.patch_size_m / side as f64;
        let half = self.patch_size_m / 2.0;
        let coord = |k: usize| (k as f64 + 0.5) * step - half;
        Ok((0..side)
            .flat_map(|r| (0..side).map(move |c| Point2::new(coord(c), coord(r))))
            .collect())
    }
}

/// `[R_1, G_1, B_1, d_1, R_2, ...]` for the lattice around `position`.
#[derive(Clone, Debug, PartialEq)]
pub struct FeatureVector {
    pub position: Point2,
    pub values: Vec<f64>,
}

impl FeatureVector {
    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn distance(&self, other: &FeatureVector) -> f64 {
        self.values
            .iter()
            .zip(&other.values)
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<f64>()
            .sqrt()
    }
}

/// Anything that can describe the terrain around a world point.
pub trait FeatureSource: Sync {
    fn feature(&self, x: Point2, cfg: &FeatureConfig) -> Result<FeatureVector>;
}

impl FeatureSource for TerrainModel {
    fn feature(&self, x: Point2, cfg: &FeatureConfig) -> Result<FeatureVector> {
        extract_feature(self, x, cfg)
    }
}

/// Samples color and downward-ray depth on a `sqrt(n_rays)`-sided lattice spanning the
/// square patch of side `patch_size_m` centered at `x`.
pub fn extract_feature(t: &TerrainModel, x: Point2, cfg: &FeatureConfig) -> Result<FeatureVector> {
    let lattice = cfg.lattice()?;
    let half = cfg.patch_size_m / 2.0;
    let (w, h) = t.extent();
    if !x.is_finite() || x.x - half < 0.0 || x.x + half > w || x.y - half < 0.0 || x.y + half > h {
        return Err(NavError::OutOfBounds { x: x.x, y: x.y });
    }
    let mut values = Vec::with_capacity(cfg.dim());
    for offset in lattice {
        let p = x + offset;
        let rgb = t.albedo_at(p)?;
        let ground = t.height_at(p)?;
        let depth = cfg.ray_height_m - ground;
        if !(depth > 0.0) {
            return Err(NavError::RayBelowTerrain {
                ray_height: cfg.ray_height_m,
                ground_z: ground,
            });
        }
        values.extend_from_slice(&rgb);
        values.push(depth);
    }
    Ok(FeatureVector { position: x, values })
}

/// Orthographic nadir render of the terrain. Pixel `(row, col)` samples the world point
/// `origin + ((col + 0.5) m, (row + 0.5) m)` where `m` is meters per pixel; row 0 is the
/// southern edge.
#[derive(Clone, Debug, PartialEq)]
pub struct TopDownImage {
    pub width: usize,
    pub height: usize,
    pub m_per_px: f64,
    pub origin: Point2,
    pub rgb: Vec<[f64; 3]>,
    pub elevation: Vec<f64>,
}

/// Rec. 601 luma.
pub fn luminance(rgb: [f64; 3]) -> f64 {
    0.299 * rgb[0] + 0.587 * rgb[1] + 0.114 * rgb[2]
}

impl TopDownImage {
    pub fn pixel_center(&self, row: usize, col: usize) -> Point2 {
        self.origin + Point2::new((col as f64 + 0.5) * self.m_per_px, (row as f64 + 0.5) * self.m_per_px)
    }

    pub fn rgb_at(&self, row: usize, col: usize) -> [f64; 3] {
        self.rgb[row * self.width + col]
    }

    pub fn luminance_at(&self, row: usize, col: usize) -> f64 {
        luminance(self.rgb_at(row, col))
    }

    /// `(width_m, height_m)` covered by the image.
    pub fn extent(&self) -> (f64, f64) {
        (self.width as f64 * self.m_per_px, self.height as f64 * self.m_per_px)
    }

    /// Writes an 8-bit RGB PNG (north up) plus `<path>.georef` holding the origin and
    /// meters per pixel.
    pub fn save_png(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let mut img = image::RgbImage::new(self.width as u32, self.height as u32);
        for row in 0..self.height {
            for col in 0..self.width {
                let px = self.rgb_at(row, col).map(|c| (c.clamp(0.0, 1.0) * 255.0).round() as u8);
                img.put_pixel(col as u32, (self.height - 1 - row) as u32, image::Rgb(px));
            }
        }
        img.save(path)?;
        let georef = georef_path(path);
        let mut f = std::fs::File::create(&georef).map_err(|e| NavError::io(&georef, e))?;
        write!(
            f,
            "origin_x = {}\norigin_y = {}\nm_per_px = {}\nwidth = {}\nheight = {}\n",
            self.origin.x, self.origin.y, self.m_per_px, self.width, self.height
        )
        .map_err(|e| NavError::io(&georef, e))
    }
}

pub(crate) fn georef_path(path: &Path) -> std::path::PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(".georef");
    s.into()
}

/// Renders albedo and elevation at every pixel center over the full terrain extent.
pub fn render_topdown(t: &TerrainModel, m_per_px: f64) -> Result<TopDownImage> {
    if !(m_per_px > 0.0 && m_per_px.is_finite()) {
        return Err(NavError::config("meters per pixel must be positive"));
    }
    let (w, h) = t.extent();
    let width = (w / m_per_px + 1e-9).floor();
    let height = (h / m_per_px + 1e-9).floor();
    if width * height > MAX_TOPDOWN_PIXELS as f64 {
        return Err(NavError::config(format!(
            "top-down image of {width} x {height} pixels exceeds the limit"
        )));
    }
    let (width, height) = (width as usize, height as usize);
    if width == 0 || height == 0 {
        return Err(NavError::config("top-down image would be empty"));
    }
    let centers: Vec<Point2> = (0..height)
        .flat_map(|r| (0..width).map(move |c| Point2::new((c as f64 + 0.5) * m_per_px, (r as f64 + 0.5) * m_per_px)))
        .collect();
    let rgb = centers.iter().map(|&p| t.albedo_at(p)).collect::<Result<Vec<_>>>()?;
    let elevation = centers.iter().map(|&p| t.height_at(p)).collect::<Result<Vec<_>>>()?;
    Ok(TopDownImage {
        width,
        height,
        m_per_px,
        origin: Point2::new(0.0, 0.0),
        rgb,
        elevation,
    })
}

/// Features at the centers of a regular grid of square cells, `None` where the patch would
/// leave the terrain.
#[derive(Clone, Debug)]
pub struct CellFeatures {
    pub width: usize,
    pub height: usize,
    pub cell_m: f64,
    pub features: Vec<Option<FeatureVector>>,
}

impl CellFeatures {
    pub fn extract(
        source: &impl FeatureSource,
        width: usize,
        height: usize,
        cell_m: f64,
        cfg: &FeatureConfig,
    ) -> Result<Self> {
        cfg.side()?;
        let features = (0..width * height)
            .into_par_iter()
            .map(|k| {
                let p = Point2::new(((k % width) as f64 + 0.5) * cell_m, ((k / width) as f64 + 0.5) * cell_m);
                match source.feature(p, cfg) {
                    Ok(f) => Ok(Some(f)),
                    Err(NavError::OutOfBounds { .. }) => Ok(None),
                    Err(e) => Err(e),
                }
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(CellFeatures {
            width,
            height,
            cell_m,
            features,
        })
    }

    pub fn get(&self, cell: usize) -> Option<&FeatureVector> {
        self.features.get(cell).and_then(|f| f.as_ref())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn two_tone() -> TerrainModel {
        // 20 x 10 m at 0.5 m: west half black, east half white.
        let (rows, cols) = (20, 40);
        let albedo = (0..rows * cols)
            .map(|k| if k % cols < cols / 2 { [0.0; 3] } else { [1.0; 3] })
            .collect();
        TerrainModel::from_grids(0.5, rows, cols, vec![0.0; rows * cols], albedo, vec![]).unwrap()
    }

    #[test]
    fn uniform_terrain_features_repeat() {
        let t = TerrainModel::uniform(0.5, 40, 40, 1.25, [0.4, 0.5, 0.6]).unwrap();
        let cfg = FeatureConfig::default();
        let f = extract_feature(&t, Point2::new(10.0, 10.0), &cfg).unwrap();
        assert_eq!(f.len(), 64);
        for block in f.values.chunks(4) {
            for (v, e) in block.iter().zip([0.4, 0.5, 0.6, 50.0 - 1.25]) {
                assert_relative_eq!(*v, e, epsilon = 1e-12);
            }
        }
        let g = extract_feature(&t, Point2::new(7.3, 12.9), &cfg).unwrap();
        assert!(f.distance(&g) < 1e-12);
    }

    #[test]
    fn output_length_tracks_ray_count() {
        let t = TerrainModel::uniform(0.5, 40, 40, 0.0, [0.5; 3]).unwrap();
        for n in [1, 4, 9, 25, 64] {
            let cfg = FeatureConfig {
                n_rays: n,
                ..FeatureConfig::default()
            };
            assert_eq!(extract_feature(&t, Point2::new(10.0, 10.0), &cfg).unwrap().len(), 4 * n);
        }
        let bad = FeatureConfig {
            n_rays: 10,
            ..FeatureConfig::default()
        };
        assert!(extract_feature(&t, Point2::new(10.0, 10.0), &bad).is_err());
    }

    #[test]
    fn lattice_is_row_major() {
        let cfg = FeatureConfig {
            n_rays: 4,
            patch_size_m: 2.0,
            ray_height_m: 10.0,
        };
        let l = cfg.lattice().unwrap();
        assert_eq!(
            l,
            vec![
                Point2::new(-0.5, -0.5),
                Point2::new(0.5, -0.5),
                Point2::new(-0.5, 0.5),
                Point2::new(0.5, 0.5)
            ]
        );
        // West/east ray ordering shows up in the colors.
        let f = extract_feature(&two_tone(), Point2::new(10.0, 5.0), &cfg).unwrap();
        let reds: Vec<f64> = f.values.chunks(4).map(|b| b[0]).collect();
        assert_eq!(reds, vec![0.0, 1.0, 0.0, 1.0]);
    }

    #[test]
    fn patch_must_fit() {
        let t = TerrainModel::uniform(0.5, 40, 40, 0.0, [0.5; 3]).unwrap();
        let cfg = FeatureConfig::default();
        assert!(matches!(
            extract_feature(&t, Point2::new(1.9, 10.0), &cfg),
            Err(NavError::OutOfBounds { .. })
        ));
        assert!(extract_feature(&t, Point2::new(2.0, 18.0), &cfg).is_ok());
    }

    #[test]
    fn ray_altitude_must_clear_ground() {
        let t = TerrainModel::uniform(0.5, 40, 40, 60.0, [0.5; 3]).unwrap();
        assert!(matches!(
            extract_feature(&t, Point2::new(10.0, 10.0), &FeatureConfig::default()),
            Err(NavError::RayBelowTerrain { .. })
        ));
    }

    #[test]
    fn depth_shifts_with_elevation_offset() {
        let base = crate::terrain::generate_terrain(&crate::terrain::ScenarioSpec {
            roughness: 0.8,
            ..crate::terrain::ScenarioSpec::flat(5, [30.0, 30.0], Point2::new(1.0, 1.0), Point2::new(2.0, 2.0))
        })
        .unwrap();
        let delta = 0.75;
        let raised = TerrainModel::from_grids(
            base.res_m(),
            base.rows(),
            base.cols(),
            base.elevation_grid().iter().map(|z| z + delta).collect(),
            base.albedo_grid().to_vec(),
            vec![],
        )
        .unwrap();
        let cfg = FeatureConfig::default();
        let a = extract_feature(&base, Point2::new(12.3, 17.1), &cfg).unwrap();
        let b = extract_feature(&raised, Point2::new(12.3, 17.1), &cfg).unwrap();
        for (k, (x, y)) in a.values.iter().zip(&b.values).enumerate() {
            if k % 4 == 3 {
                assert_relative_eq!(x - y, delta, epsilon = 1e-9);
            } else {
                assert_eq!(x, y);
            }
        }
    }

    #[test]
    fn topdown_samples_albedo_at_pixel_centers() {
        let uniform = TerrainModel::uniform(0.5, 10, 20, 0.0, [0.3; 3]).unwrap();
        let img = render_topdown(&uniform, 1.0).unwrap();
        assert_eq!((img.width, img.height), (10, 5));
        assert!(img.rgb.iter().all(|&c| c == [0.3; 3]));

        let t = two_tone();
        let img = render_topdown(&t, 0.7).unwrap();
        for row in 0..img.height {
            for col in 0..img.width {
                assert_eq!(img.rgb_at(row, col), t.albedo_at(img.pixel_center(row, col)).unwrap());
            }
        }
        // Boundary at x = 10 m: every pixel whose footprint is entirely on one side shows
        // that side's tone.
        let img = render_topdown(&t, 1.0).unwrap();
        for row in 0..img.height {
            for col in 0..img.width {
                let l = img.luminance_at(row, col);
                if col + 1 < 10 {
                    assert!(l < 0.5);
                } else if col > 10 {
                    assert!(l > 0.5);
                }
            }
        }
    }

    #[test]
    fn topdown_rejects_bad_resolution() {
        let t = TerrainModel::uniform(0.5, 10, 20, 0.0, [0.3; 3]).unwrap();
        assert!(render_topdown(&t, 0.0).is_err());
        assert!(render_topdown(&t, 1e-4).is_err());
    }

    #[test]
    fn png_export_writes_sidecar() {
        let dir = tempfile::tempdir().unwrap();
        let img = render_topdown(&two_tone(), 0.5).unwrap();
        let path = dir.path().join("top.png");
        img.save_png(&path).unwrap();
        let back = image::open(&path).unwrap().to_rgb8();
        assert_eq!(back.dimensions(), (40, 20));
        assert_eq!(back.get_pixel(0, 0).0, [0, 0, 0]);
        assert_eq!(back.get_pixel(39, 0).0, [255, 255, 255]);
        let side = std::fs::read_to_string(dir.path().join("top.png.georef")).unwrap();
        assert!(side.contains("m_per_px = 0.5"));
    }

    #[test]
    fn cell_features_skip_border() {
        let t = TerrainModel::uniform(0.5, 20, 20, 0.0, [0.5; 3]).unwrap();
        let cf = CellFeatures::extract(&t, 10, 10, 1.0, &FeatureConfig::default()).unwrap();
        assert!(cf.get(0).is_none());
        assert!(cf.get(5 * 10 + 5).is_some());
        assert_eq!(cf.features.iter().filter(|f| f.is_some()).count(), 6 * 6);
    }
}
