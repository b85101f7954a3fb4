//! Independent reference implementations shared by the oracle tests and the acceptance
//! suite.
#![allow(dead_code)]

use rand::seq::SliceRandom;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use terrainav::clustering::ClusterMap;
use terrainav::features::{CellFeatures, FeatureVector};
use terrainav::fusion::{CostSample, GlobalCostMap};
use terrainav::local_planner::{Arc, ArcWeights};
use terrainav::sensor::LocalCostMap;
use terrainav::sim::RoverState;
use terrainav::{Point2, C_MAX};

pub const DIM: usize = 64;
pub const SIDE: usize = 50;
pub const C_UNOBS: f64 = 0.5;

/// Dense Gaussian elimination with partial pivoting.
pub fn gauss_solve(mut a: Vec<Vec<f64>>, mut b: Vec<f64>) -> Vec<f64> {
    let n = b.len();
    for col in 0..n {
        let piv = (col..n)
            .max_by(|&i, &j| a[i][col].abs().total_cmp(&a[j][col].abs()))
            .unwrap();
        a.swap(col, piv);
        b.swap(col, piv);
        let pivot = a[col].clone();
        for r in col + 1..n {
            let f = a[r][col] / pivot[col];
            if f == 0.0 {
                continue;
            }
            for (x, p) in a[r][col..].iter_mut().zip(&pivot[col..]) {
                *x -= f * p;
            }
            b[r] -= f * b[col];
        }
    }
    let mut x = vec![0.0; n];
    for r in (0..n).rev() {
        let s: f64 = (r + 1..n).map(|c| a[r][c] * x[c]).sum();
        x[r] = (b[r] - s) / a[r][r];
    }
    x
}

/// Solves with a couple of rounds of residual correction.
pub fn refined_solve(a: &[Vec<f64>], b: &[f64]) -> Vec<f64> {
    let mut x = gauss_solve(a.to_vec(), b.to_vec());
    for _ in 0..3 {
        let r: Vec<f64> = a
            .iter()
            .zip(b)
            .map(|(row, bi)| bi - row.iter().zip(&x).map(|(p, q)| p * q).sum::<f64>())
            .collect();
        let dx = gauss_solve(a.to_vec(), r);
        x.iter_mut().zip(dx).for_each(|(v, d)| *v += d);
    }
    x
}

/// Standardized ridge with an appended unit column, solved from the normal equations.
pub struct Oracle {
    mean: Vec<f64>,
    scale: Vec<f64>,
    w: Vec<f64>,
}

impl Oracle {
    pub fn fit(rows: &[Vec<f64>], y: &[f64], lambda: f64) -> Self {
        let n = rows.len() as f64;
        let d = rows[0].len();
        let mean: Vec<f64> = (0..d).map(|j| rows.iter().map(|r| r[j]).sum::<f64>() / n).collect();
        let scale: Vec<f64> = (0..d)
            .map(|j| {
                let sd = (rows.iter().map(|r| (r[j] - mean[j]).powi(2)).sum::<f64>() / n).sqrt();
                if sd > 1e-12 * (1.0 + mean[j].abs()) {
                    sd
                } else {
                    1.0
                }
            })
            .collect();
        let design: Vec<Vec<f64>> = rows
            .iter()
            .map(|r| {
                let mut z: Vec<f64> = (0..d).map(|j| (r[j] - mean[j]) / scale[j]).collect();
                z.push(1.0);
                z
            })
            .collect();
        let cols = d + 1;
        let mut a = vec![vec![0.0; cols]; cols];
        let mut b = vec![0.0; cols];
        for (z, yi) in design.iter().zip(y) {
            for i in 0..cols {
                b[i] += z[i] * yi;
                for j in 0..cols {
                    a[i][j] += z[i] * z[j];
                }
            }
        }
        for (i, row) in a.iter_mut().enumerate() {
            row[i] += lambda;
        }
        Oracle {
            w: refined_solve(&a, &b),
            mean,
            scale,
        }
    }

    pub fn predict(&self, x: &[f64]) -> f64 {
        let d = self.mean.len();
        (0..d)
            .map(|j| self.w[j] * (x[j] - self.mean[j]) / self.scale[j])
            .sum::<f64>()
            + self.w[d]
    }
}

pub fn problem(rng: &mut ChaCha8Rng, n: usize) -> (Vec<Vec<f64>>, Vec<f64>) {
    let truth: Vec<f64> = (0..DIM).map(|_| rng.gen_range(-1.0..1.0)).collect();
    let rows: Vec<Vec<f64>> = (0..n)
        .map(|_| (0..DIM).map(|_| rng.gen_range(0.0..1.0)).collect())
        .collect();
    let y = rows
        .iter()
        .map(|r| r.iter().zip(&truth).map(|(a, b)| a * b).sum::<f64>() + rng.gen_range(-0.1..0.1))
        .collect();
    (rows, y)
}

/// Plain O(V^2) Dijkstra over the same 4-connected cost model. Returns the distance from
/// `start` to every cell.
pub fn dijkstra(g: &GlobalCostMap, start: usize, c_base: f64) -> Vec<f64> {
    let (w, h) = (g.width, g.height);
    let mut dist = vec![f64::INFINITY; w * h];
    let mut done = vec![false; w * h];
    dist[start] = 0.0;
    loop {
        let mut best = None;
        for k in 0..w * h {
            if !done[k] && dist[k].is_finite() && best.is_none_or(|b: usize| dist[k] < dist[b]) {
                best = Some(k);
            }
        }
        let Some(u) = best else { break };
        done[u] = true;
        let (r, c) = (u / w, u % w);
        let mut nb = Vec::new();
        if r > 0 {
            nb.push(u - w);
        }
        if r + 1 < h {
            nb.push(u + w);
        }
        if c > 0 {
            nb.push(u - 1);
        }
        if c + 1 < w {
            nb.push(u + 1);
        }
        for v in nb {
            if g.costs[v] >= C_MAX {
                continue;
            }
            let nd = dist[u] + g.cell_m * (c_base + g.costs[v]);
            if nd < dist[v] {
                dist[v] = nd;
            }
        }
    }
    dist
}

pub fn random_grid(rng: &mut ChaCha8Rng) -> GlobalCostMap {
    let wall_p = rng.gen_range(0.0..0.35);
    let costs = (0..SIDE * SIDE)
        .map(|_| {
            if rng.gen_bool(wall_p) {
                C_MAX
            } else {
                rng.gen_range(0..10) as f64
            }
        })
        .collect();
    GlobalCostMap::from_costs(SIDE, SIDE, 1.0, costs).unwrap()
}

pub fn open_cell(rng: &mut ChaCha8Rng, g: &GlobalCostMap) -> usize {
    loop {
        let k = rng.gen_range(0..SIDE * SIDE);
        if g.costs[k] < C_MAX {
            return k;
        }
    }
}

pub fn random_map(rng: &mut ChaCha8Rng) -> LocalCostMap {
    let mut m = LocalCostMap::unobserved(20.0, RoverState::default());
    let observed_p = rng.gen_range(0.3..1.0);
    let wall_p = rng.gen_range(0.0..0.05);
    for r in 0..m.rows() {
        for c in 0..m.cols() {
            if rng.gen_bool(observed_p) {
                let cost = if rng.gen_bool(wall_p) {
                    C_MAX
                } else {
                    rng.gen_range(0.0..3.0)
                };
                m.set_cell(r, c, cost);
            }
        }
    }
    m
}

/// Recomputes every arc total from its samples and picks the minimum by a linear scan.
pub fn brute_force(arcs: &[Arc], m: &LocalCostMap, target: Point2, w: ArcWeights) -> Option<usize> {
    let mut scored = Vec::new();
    for (k, a) in arcs.iter().enumerate() {
        let mut trav = 0.0;
        let mut blocked = false;
        for s in &a.samples {
            let r = (s.x.floor().max(0.0) as usize).min(m.rows() - 1);
            let c = ((s.y + m.rows() as f64).floor().max(0.0) as usize).min(m.cols() - 1);
            let cost = m.cell(r, c).unwrap_or(C_UNOBS);
            blocked |= cost >= C_MAX;
            trav += cost;
        }
        let end = a.samples.last().unwrap();
        let goal = Point2::new(end.x, end.y).distance(target);
        let total = w.alpha * a.omega.abs() + w.beta * trav + w.gamma * goal;
        if !blocked {
            scored.push((total, a.omega.abs(), -a.omega, k));
        }
    }
    scored
        .into_iter()
        .min_by(|a, b| a.0.total_cmp(&b.0).then(a.1.total_cmp(&b.1)).then(a.2.total_cmp(&b.2)))
        .map(|s| s.3)
}

pub const W: usize = 12;
pub const H: usize = 9;
pub const FEATURE_DIM: usize = 8;

pub struct Fixture {
    pub map: GlobalCostMap,
    pub clusters: ClusterMap,
    pub features: CellFeatures,
}

/// Three vertical bands of clusters, random prior costs, and a feature for every cell but
/// the last column.
pub fn fixture(rng: &mut ChaCha8Rng) -> Fixture {
    let costs = (0..W * H).map(|_| rng.gen_range(0.0..2.0)).collect();
    let map = GlobalCostMap::from_costs(W, H, 1.0, costs).unwrap();
    let labels = (0..W * H).map(|k| (k % W) * 3 / W).collect();
    let clusters = ClusterMap {
        width: W,
        height: H,
        labels,
        count: 3,
    };
    let features = (0..W * H)
        .map(|k| {
            (k % W != W - 1).then(|| FeatureVector {
                position: map.cell_center(k),
                values: (0..FEATURE_DIM).map(|_| rng.gen_range(0.0..1.0)).collect(),
            })
        })
        .collect();
    Fixture {
        map,
        clusters,
        features: CellFeatures {
            width: W,
            height: H,
            cell_m: 1.0,
            features,
        },
    }
}

pub fn samples_in(rng: &mut ChaCha8Rng, f: &Fixture, cluster: usize, n: usize, cost_hi: f64) -> Vec<CostSample> {
    let cells: Vec<usize> = (0..W * H).filter(|&k| f.clusters.labels[k] == cluster).collect();
    cells
        .choose_multiple(rng, n)
        .enumerate()
        .map(|(t, &k)| CostSample {
            position: f.map.cell_center(k),
            cost: rng.gen_range(0.0..cost_hi),
            feature: f.features.get(k).cloned().unwrap_or(FeatureVector {
                position: f.map.cell_center(k),
                values: vec![0.5; FEATURE_DIM],
            }),
            timestamp: t as f64,
        })
        .collect()
}
