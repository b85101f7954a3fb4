//! Appearance clusters over the top-down image.
//!
//! Pixels are binned by luminance, equal-bin 4-connected components become regions, small
//! regions are absorbed into their largest neighbour, and the result is resampled to the
//! global costmap grid by majority vote. Cluster ids are finally renumbered as 4-connected
//! components on the cell grid in scan order, so every id is one connected region.

use std::cmp::Reverse;
use std::collections::{BTreeSet, BinaryHeap, VecDeque};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::features::{luminance, TopDownImage};
use crate::{NavError, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ClusterConfig {
    pub n_levels: usize,
    pub min_region_px: usize,
    /// Cell size of the output grid in meters.
    pub cell_m: f64,
}

impl Default for ClusterConfig {
    fn default() -> Self {
        ClusterConfig {
            n_levels: 6,
            min_region_px: 25,
            cell_m: 1.0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ClusterMap {
    pub width: usize,
    pub height: usize,
    /// Row-major cluster id per cell, each in `0..count`.
    pub labels: Vec<usize>,
    pub count: usize,
}

impl ClusterMap {
    pub fn label(&self, row: usize, col: usize) -> usize {
        self.labels[row * self.width + col]
    }

    /// Cell indices of each cluster, in row-major order.
    pub fn members(&self) -> Vec<Vec<usize>> {
        let mut out = vec![Vec::new(); self.count];
        for (k, &l) in self.labels.iter().enumerate() {
            out[l].push(k);
        }
        out
    }

    /// Writes an 8-bit indexed PNG (north up) with a fixed pseudo-random palette.
    pub fn save_png(&self, path: impl AsRef<Path>) -> Result<()> {
        let mut img = image::RgbImage::new(self.width as u32, self.height as u32);
        for row in 0..self.height {
            for col in 0..self.width {
                let l = self.label(row, col) as u32;
                let h = l.wrapping_mul(2_654_435_761);
                let px = [(h >> 24) as u8, (h >> 16) as u8, (h >> 8) as u8];
                img.put_pixel(col as u32, (self.height - 1 - row) as u32, image::Rgb(px));
            }
        }
        img.save(path.as_ref())?;
        Ok(())
    }
}

/// Something that partitions a top-down image into clusters on the costmap grid.
pub trait Clusterer {
    fn cluster(&self, img: &TopDownImage) -> Result<ClusterMap>;
}

/// Luminance-quantized connected components.
#[derive(Clone, Debug, Default)]
pub struct LuminanceClusterer {
    pub cfg: ClusterConfig,
}

impl Clusterer for LuminanceClusterer {
    fn cluster(&self, img: &TopDownImage) -> Result<ClusterMap> {
        cluster_regions(img, &self.cfg)
    }
}

pub fn cluster_regions(img: &TopDownImage, cfg: &ClusterConfig) -> Result<ClusterMap> {
    if cfg.n_levels < 2 {
        return Err(NavError::config("clustering needs at least 2 luminance levels"));
    }
    if img.width == 0 || img.height == 0 || img.rgb.len() != img.width * img.height {
        return Err(NavError::config("top-down image is empty or malformed"));
    }
    if !(cfg.cell_m > 0.0) {
        return Err(NavError::config("cluster cell size must be positive"));
    }
    let levels = cfg.n_levels as f64;
    let bins: Vec<usize> = img
        .rgb
        .iter()
        .map(|&c| ((luminance(c).clamp(0.0, 1.0) * levels) as usize).min(cfg.n_levels - 1))
        .collect();
    let (mut pixel_labels, sizes) = connected_components(&bins, img.width, img.height);
    merge_small_regions(&mut pixel_labels, sizes, img.width, img.height, cfg.min_region_px);
    let coarse = resample_majority(&pixel_labels, img, cfg.cell_m);
    let (w, h) = grid_dims(img, cfg.cell_m);
    let (labels, sizes) = connected_components(&coarse, w, h);
    Ok(ClusterMap {
        width: w,
        height: h,
        labels,
        count: sizes.len(),
    })
}

/// Output grid dimensions: whole cells covering the image extent.
pub fn grid_dims(img: &TopDownImage, cell_m: f64) -> (usize, usize) {
    let (w, h) = img.extent();
    (
        ((w / cell_m + 1e-9).floor() as usize).max(1),
        ((h / cell_m + 1e-9).floor() as usize).max(1),
    )
}

/// Labels 4-connected runs of equal values, numbering components in scan order of their
/// first pixel. Returns the labels and component sizes.
pub fn connected_components<T: PartialEq>(values: &[T], width: usize, height: usize) -> (Vec<usize>, Vec<usize>) {
    const UNSET: usize = usize::MAX;
    let mut labels = vec![UNSET; values.len()];
    let mut sizes = Vec::new();
    let mut queue = VecDeque::new();
    for seed in 0..values.len() {
        if labels[seed] != UNSET {
            continue;
        }
        let id = sizes.len();
        labels[seed] = id;
        queue.push_back(seed);
        let mut size = 0;
        while let Some(k) = queue.pop_front() {
            size += 1;
            for n in neighbours(k, width, height) {
                if labels[n] == UNSET && values[n] == values[k] {
                    labels[n] = id;
                    queue.push_back(n);
                }
            }
        }
        sizes.push(size);
    }
    (labels, sizes)
}

fn neighbours(k: usize, width: usize, height: usize) -> impl Iterator<Item = usize> {
    let (r, c) = (k / width, k % width);
    let up = (r + 1 < height).then(|| k + width);
    let down = (r > 0).then(|| k - width);
    let right = (c + 1 < width).then(|| k + 1);
    let left = (c > 0).then(|| k - 1);
    [down, left, right, up].into_iter().flatten()
}

/// Repeatedly folds the smallest region below `min_size` into its largest neighbour
/// (ties to the lower id) until none remain or only one region is left.
fn merge_small_regions(labels: &mut [usize], mut sizes: Vec<usize>, width: usize, height: usize, min_size: usize) {
    let n = sizes.len();
    if n <= 1 || min_size <= 1 {
        return;
    }
    let mut adjacency: Vec<BTreeSet<usize>> = vec![BTreeSet::new(); n];
    for k in 0..labels.len() {
        for m in neighbours(k, width, height) {
            let (a, b) = (labels[k], labels[m]);
            if a != b {
                adjacency[a].insert(b);
            }
        }
    }
    let mut parent: Vec<usize> = (0..n).collect();
    let mut alive = n;
    let mut heap: BinaryHeap<Reverse<(usize, usize)>> = (0..n)
        .filter(|&i| sizes[i] < min_size)
        .map(|i| Reverse((sizes[i], i)))
        .collect();

    while let Some(Reverse((size, id))) = heap.pop() {
        if alive <= 1 {
            break;
        }
        if parent[id] != id || sizes[id] != size || size >= min_size {
            continue;
        }
        let Some(&target) = adjacency[id]
            .iter()
            .max_by(|&&a, &&b| sizes[a].cmp(&sizes[b]).then(b.cmp(&a)))
        else {
            continue;
        };
        let moved = std::mem::take(&mut adjacency[id]);
        for &other in &moved {
            adjacency[other].remove(&id);
            if other != target {
                adjacency[other].insert(target);
                adjacency[target].insert(other);
            }
        }
        parent[id] = target;
        sizes[target] += sizes[id];
        sizes[id] = 0;
        alive -= 1;
        if sizes[target] < min_size {
            heap.push(Reverse((sizes[target], target)));
        }
    }

    let find = |mut i: usize| {
        while parent[i] != i {
            i = parent[i];
        }
        i
    };
    for l in labels.iter_mut() {
        *l = find(*l);
    }
}

/// Majority vote of pixel labels inside each output cell (ties to the smaller label).
/// Cells containing no pixel center take the pixel under their own center.
fn resample_majority(labels: &[usize], img: &TopDownImage, cell_m: f64) -> Vec<usize> {
    let (w, h) = grid_dims(img, cell_m);
    let mut votes: Vec<std::collections::BTreeMap<usize, usize>> = vec![Default::default(); w * h];
    for row in 0..img.height {
        for col in 0..img.width {
            let p = img.pixel_center(row, col) - img.origin;
            let (cc, cr) = ((p.x / cell_m).floor() as usize, (p.y / cell_m).floor() as usize);
            if cc < w && cr < h {
                *votes[cr * w + cc].entry(labels[row * img.width + col]).or_default() += 1;
            }
        }
    }
    votes
        .iter()
        .enumerate()
        .map(|(k, v)| {
            if let Some((&label, _)) = v.iter().max_by(|a, b| a.1.cmp(b.1).then(b.0.cmp(a.0))) {
                label
            } else {
                let (cr, cc) = (k / w, k % w);
                let px = (((cc as f64 + 0.5) * cell_m / img.m_per_px) as usize).min(img.width - 1);
                let py = (((cr as f64 + 0.5) * cell_m / img.m_per_px) as usize).min(img.height - 1);
                labels[py * img.width + px]
            }
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::Point2;

    fn image_from(lum: &[f64], width: usize, m_per_px: f64) -> TopDownImage {
        TopDownImage {
            width,
            height: lum.len() / width,
            m_per_px,
            origin: Point2::new(0.0, 0.0),
            rgb: lum.iter().map(|&l| [l; 3]).collect(),
            elevation: vec![0.0; lum.len()],
        }
    }

    #[test]
    fn uniform_image_is_one_cluster() {
        let img = image_from(&vec![0.4; 200], 20, 0.5);
        let c = cluster_regions(&img, &ClusterConfig::default()).unwrap();
        assert_eq!((c.width, c.height, c.count), (10, 5, 1));
        assert!(c.labels.iter().all(|&l| l == 0));
    }

    #[test]
    fn two_halves_split_on_the_boundary() {
        let (w, h) = (30, 20);
        let lum: Vec<f64> = (0..w * h).map(|k| if k % w < 12 { 0.1 } else { 0.9 }).collect();
        let img = image_from(&lum, w, 1.0);
        let c = cluster_regions(&img, &ClusterConfig::default()).unwrap();
        assert_eq!(c.count, 2);
        for row in 0..h {
            for col in 0..w {
                assert_eq!(c.label(row, col), usize::from(col >= 12));
            }
        }
    }

    #[test]
    fn small_specks_merge_into_surroundings() {
        let (w, h) = (20, 20);
        let mut lum = vec![0.4; w * h];
        lum[5 * w + 5] = 0.95;
        lum[12 * w + 7] = 0.05;
        lum[12 * w + 8] = 0.05;
        let c = cluster_regions(&image_from(&lum, w, 1.0), &ClusterConfig::default()).unwrap();
        assert_eq!(c.count, 1);

        let keep = ClusterConfig {
            min_region_px: 1,
            ..ClusterConfig::default()
        };
        assert_eq!(cluster_regions(&image_from(&lum, w, 1.0), &keep).unwrap().count, 3);
    }

    #[test]
    fn rejects_too_few_levels() {
        let img = image_from(&[0.5; 4], 2, 1.0);
        let cfg = ClusterConfig {
            n_levels: 1,
            ..ClusterConfig::default()
        };
        assert!(cluster_regions(&img, &cfg).is_err());
    }

    #[test]
    fn majority_vote_resampling() {
        // 4x4 pixels at 0.5 m -> 2x2 cells; the top-right cell has a 3:1 majority of bright.
        #[rustfmt::skip]
        let lum = [
            0.1, 0.1, 0.9, 0.9,
            0.1, 0.1, 0.1, 0.9,
            0.1, 0.1, 0.1, 0.1,
            0.1, 0.1, 0.1, 0.1,
        ];
        let cfg = ClusterConfig {
            min_region_px: 1,
            ..ClusterConfig::default()
        };
        let c = cluster_regions(&image_from(&lum, 4, 0.5), &cfg).unwrap();
        assert_eq!(c.labels, vec![0, 1, 0, 0]);
    }

    #[test]
    fn members_partition_the_grid() {
        let lum: Vec<f64> = (0..400).map(|k| ((k * 7919) % 13) as f64 / 13.0).collect();
        let c = cluster_regions(&image_from(&lum, 20, 1.0), &ClusterConfig::default()).unwrap();
        let members = c.members();
        assert_eq!(members.iter().map(Vec::len).sum::<usize>(), 400);
        assert!(members.iter().all(|m| !m.is_empty()));
    }
}
