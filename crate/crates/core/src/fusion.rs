//! Local-to-global cost fusion.
//!
//! Observed local costmap cells become world-frame [`CostSample`]s carrying the terrain
//! feature vector at their position. Within each appearance cluster that has gathered
//! enough samples, a ridge regression with a linear kernel maps features to cost, and the
//! fitted model re-costs every cell of that cluster. Cells that were observed directly
//! keep their observed cost.
//!
//! # Regression
//!
//! The model minimizes `1/2 sum_i (c_i - w^T x_i)^2 + 1/2 lambda |w|^2`.
//!
//! With standardization on (the default for fusion), each feature dimension is centered and
//! divided by its fit-time standard deviation (dimensions with zero spread keep scale 1),
//! and a constant column of ones is appended. Its weight is the model's `bias` and is
//! penalized like every other weight, so a cluster whose features are all identical
//! predicts `c_mean * n / (n + lambda)`.
//!
//! The solve uses the dual form `w = X^T (X X^T + lambda I)^-1 c` when there are fewer
//! samples than columns, and the primal normal equations `(X^T X + lambda I) w = X^T c`
//! otherwise. Both go through a Cholesky factorization.

use std::collections::BTreeMap;
use std::io::Write;
use std::path::Path;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::clustering::ClusterMap;
use crate::features::{luminance, CellFeatures, FeatureConfig, FeatureSource, FeatureVector, TopDownImage};
use crate::sensor::LocalCostMap;
use crate::{NavError, Point2, Result, C_MAX};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Provenance {
    Prior,
    Observed,
    Interpolated,
}

impl Provenance {
    pub fn as_str(self) -> &'static str {
        match self {
            Provenance::Prior => "prior",
            Provenance::Observed => "observed",
            Provenance::Interpolated => "interpolated",
        }
    }
}

/// World-frame cost grid with square cells; cell `(row, col)` spans
/// `[col * cell_m, (col + 1) * cell_m) x [row * cell_m, (row + 1) * cell_m)`.
#[derive(Clone, Debug, PartialEq)]
pub struct GlobalCostMap {
    pub width: usize,
    pub height: usize,
    pub cell_m: f64,
    pub costs: Vec<f64>,
    pub provenance: Vec<Provenance>,
}

impl GlobalCostMap {
    /// All cells flagged [`Provenance::Prior`].
    pub fn from_costs(width: usize, height: usize, cell_m: f64, costs: Vec<f64>) -> Result<Self> {
        if costs.len() != width * height || width == 0 || height == 0 {
            return Err(NavError::GridMismatch(format!(
                "{} costs for a {width}x{height} grid",
                costs.len()
            )));
        }
        if costs.iter().any(|c| !c.is_finite() || *c < 0.0) {
            return Err(NavError::config("costmap costs must be finite and nonnegative"));
        }
        Ok(GlobalCostMap {
            width,
            height,
            cell_m,
            provenance: vec![Provenance::Prior; costs.len()],
            costs,
        })
    }

    pub fn len(&self) -> usize {
        self.costs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.costs.is_empty()
    }

    pub fn cost(&self, row: usize, col: usize) -> f64 {
        self.costs[row * self.width + col]
    }

    /// Row-major index of the cell containing `p`, if any.
    pub fn cell_index(&self, p: Point2) -> Option<usize> {
        if !p.is_finite() || p.x < 0.0 || p.y < 0.0 {
            return None;
        }
        let (c, r) = (
            (p.x / self.cell_m).floor() as usize,
            (p.y / self.cell_m).floor() as usize,
        );
        (c < self.width && r < self.height).then(|| r * self.width + c)
    }

    pub fn cell_center(&self, index: usize) -> Point2 {
        let (r, c) = (index / self.width, index % self.width);
        Point2::new((c as f64 + 0.5) * self.cell_m, (r as f64 + 0.5) * self.cell_m)
    }

    /// CSV with header `row,col,cost,provenance`, one line per cell.
    pub fn write_csv(&self, w: &mut impl Write) -> std::io::Result<()> {
        writeln!(w, "row,col,cost,provenance")?;
        for (k, (c, p)) in self.costs.iter().zip(&self.provenance).enumerate() {
            writeln!(w, "{},{},{},{}", k / self.width, k % self.width, c, p.as_str())?;
        }
        Ok(())
    }

    pub fn save_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let mut f = std::io::BufWriter::new(std::fs::File::create(path).map_err(|e| NavError::io(path, e))?);
        self.write_csv(&mut f).map_err(|e| NavError::io(path, e))
    }
}

/// Affine map from top-down luminance to prior cost: `a * L + b`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PriorParams {
    pub a: f64,
    pub b: f64,
}

impl Default for PriorParams {
    fn default() -> Self {
        PriorParams { a: 0.5, b: 0.0 }
    }
}

/// Initializes the global costmap from image luminance, averaged over the pixels whose
/// centers fall in each cell.
pub fn init_global_costmap(img: &TopDownImage, prior: PriorParams, cell_m: f64) -> Result<GlobalCostMap> {
    if !(prior.a >= 0.0 && prior.b >= 0.0) {
        return Err(NavError::config("prior coefficients must be nonnegative"));
    }
    let (w, h) = crate::clustering::grid_dims(img, cell_m);
    let mut sum = vec![0.0; w * h];
    let mut count = vec![0usize; w * h];
    for row in 0..img.height {
        for col in 0..img.width {
            let p = img.pixel_center(row, col) - img.origin;
            let (cc, cr) = ((p.x / cell_m).floor() as usize, (p.y / cell_m).floor() as usize);
            if cc < w && cr < h {
                sum[cr * w + cc] += img.luminance_at(row, col);
                count[cr * w + cc] += 1;
            }
        }
    }
    let costs = (0..w * h)
        .map(|k| {
            let l = if count[k] > 0 {
                sum[k] / count[k] as f64
            } else {
                let px = ((((k % w) as f64 + 0.5) * cell_m / img.m_per_px) as usize).min(img.width - 1);
                let py = ((((k / w) as f64 + 0.5) * cell_m / img.m_per_px) as usize).min(img.height - 1);
                luminance(img.rgb_at(py, px))
            };
            (prior.a * l + prior.b).min(C_MAX)
        })
        .collect();
    GlobalCostMap::from_costs(w, h, cell_m, costs)
}

#[derive(Clone, Debug, PartialEq)]
pub struct CostSample {
    pub position: Point2,
    pub cost: f64,
    pub feature: FeatureVector,
    pub timestamp: f64,
}

/// Converts every observed local cell into a world-frame sample with its feature. Cells
/// whose center leaves the region, or whose feature patch does, are dropped.
pub fn collect_cost_samples(
    lcm: &LocalCostMap,
    source: &impl FeatureSource,
    cfg: &FeatureConfig,
    region: (f64, f64),
) -> Result<Vec<CostSample>> {
    let mut out = Vec::new();
    for (row, col, cost) in lcm.observed_cells() {
        let p = lcm.local_to_world(lcm.cell_center(row, col));
        if !(p.x >= 0.0 && p.x < region.0 && p.y >= 0.0 && p.y < region.1) {
            continue;
        }
        let feature = match source.feature(p, cfg) {
            Ok(f) => f,
            Err(NavError::OutOfBounds { .. }) => continue,
            Err(e) => return Err(e),
        };
        out.push(CostSample {
            position: p,
            cost,
            feature,
            timestamp: lcm.pose().time,
        });
    }
    Ok(out)
}

/// A fitted linear cost model over (optionally standardized) features.
#[derive(Clone, Debug, PartialEq)]
pub struct RegressionModel {
    /// One weight per raw feature dimension.
    pub weights: Vec<f64>,
    /// Weight of the appended unit column; zero without standardization.
    pub bias: f64,
    pub lambda: f64,
    /// Per-dimension centering applied before the weights (zeros without standardization).
    pub offsets: Vec<f64>,
    /// Per-dimension divisors (ones without standardization).
    pub scales: Vec<f64>,
    pub standardized: bool,
    pub cluster: Option<usize>,
}

impl RegressionModel {
    pub fn dim(&self) -> usize {
        self.weights.len()
    }

    pub fn predict(&self, x: &[f64]) -> f64 {
        debug_assert_eq!(x.len(), self.weights.len());
        let mut acc = self.bias;
        for (((v, w), o), s) in x.iter().zip(&self.weights).zip(&self.offsets).zip(&self.scales) {
            acc += w * (v - o) / s;
        }
        acc
    }

    /// The design row this model sees for a raw feature vector.
    pub fn transform(&self, x: &[f64]) -> Vec<f64> {
        let mut row: Vec<f64> = x
            .iter()
            .zip(&self.offsets)
            .zip(&self.scales)
            .map(|((v, o), s)| (v - o) / s)
            .collect();
        if self.standardized {
            row.push(1.0);
        }
        row
    }
}

/// Which side of the kernel identity the solver used.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SolveForm {
    Dual,
    Primal,
}

/// Solver choice for a problem of `n` samples and `cols` design columns.
pub fn solve_form(n: usize, cols: usize) -> SolveForm {
    if n < cols {
        SolveForm::Dual
    } else {
        SolveForm::Primal
    }
}

/// Fits a ridge model to raw feature rows.
pub fn fit_ridge(rows: &[&[f64]], targets: &[f64], lambda: f64, standardize: bool) -> Result<RegressionModel> {
    if !(lambda > 0.0 && lambda.is_finite()) {
        return Err(NavError::config(format!("ridge lambda must be positive, got {lambda}")));
    }
    let n = rows.len();
    if n == 0 || targets.len() != n {
        return Err(NavError::config(
            "ridge fit needs at least one sample and one target per row",
        ));
    }
    let d = rows[0].len();
    if rows.iter().any(|r| r.len() != d) {
        return Err(NavError::GridMismatch("feature rows differ in length".into()));
    }
    if rows.iter().flat_map(|r| r.iter()).any(|v| !v.is_finite()) {
        return Err(NavError::NonFinite("features"));
    }
    if targets.iter().any(|v| !v.is_finite()) {
        return Err(NavError::NonFinite("costs"));
    }

    let (offsets, scales) = if standardize {
        let nf = n as f64;
        let mut mean = vec![0.0; d];
        for r in rows {
            for (m, v) in mean.iter_mut().zip(r.iter()) {
                *m += v;
            }
        }
        mean.iter_mut().for_each(|m| *m /= nf);
        let mut var = vec![0.0; d];
        for r in rows {
            for ((s, v), m) in var.iter_mut().zip(r.iter()).zip(&mean) {
                *s += (v - m) * (v - m);
            }
        }
        let scales = var
            .iter()
            .zip(&mean)
            .map(|(s, m)| {
                let sd = (s / nf).sqrt();
                if sd > 1e-12 * (1.0 + m.abs()) {
                    sd
                } else {
                    1.0
                }
            })
            .collect();
        (mean, scales)
    } else {
        (vec![0.0; d], vec![1.0; d])
    };

    let cols = d + usize::from(standardize);
    let x = DMatrix::from_fn(n, cols, |i, j| {
        if j < d {
            (rows[i][j] - offsets[j]) / scales[j]
        } else {
            1.0
        }
    });
    let c = DVector::from_column_slice(targets);

    let w = match solve_form(n, cols) {
        SolveForm::Dual => {
            let mut k = &x * x.transpose();
            for i in 0..n {
                k[(i, i)] += lambda;
            }
            let chol = k
                .cholesky()
                .ok_or_else(|| NavError::Numerical("dual system is not positive definite".into()))?;
            x.transpose() * chol.solve(&c)
        }
        SolveForm::Primal => {
            let mut a = x.transpose() * &x;
            for i in 0..cols {
                a[(i, i)] += lambda;
            }
            let chol = a
                .cholesky()
                .ok_or_else(|| NavError::Numerical("normal equations are not positive definite".into()))?;
            chol.solve(&(x.transpose() * c))
        }
    };
    if w.iter().any(|v| !v.is_finite()) {
        return Err(NavError::Numerical("ridge weights are not finite".into()));
    }
    Ok(RegressionModel {
        weights: w.iter().take(d).copied().collect(),
        bias: if standardize { w[d] } else { 0.0 },
        lambda,
        offsets,
        scales,
        standardized: standardize,
        cluster: None,
    })
}

/// Fits the standardized ridge model to cost samples.
pub fn fit_krr(samples: &[CostSample], lambda: f64) -> Result<RegressionModel> {
    let rows: Vec<&[f64]> = samples.iter().map(|s| s.feature.values.as_slice()).collect();
    let targets: Vec<f64> = samples.iter().map(|s| s.cost).collect();
    fit_ridge(&rows, &targets, lambda, true)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FusionParams {
    pub lambda: f64,
    /// Samples a cluster needs before it is interpolated.
    pub k_min: usize,
}

impl Default for FusionParams {
    fn default() -> Self {
        FusionParams { lambda: 1e-3, k_min: 5 }
    }
}

/// Applies one round of fusion to `g`.
///
/// Samples are grouped by the cluster of the cell containing them. Every cluster with at
/// least `k_min` samples gets a fresh model; its cells that have a feature and have never
/// been observed take the clamped prediction. Afterwards each sample writes its own cost
/// into its cell (later timestamps win) and marks it observed.
pub fn update_global_costmap(
    g: &GlobalCostMap,
    clusters: &ClusterMap,
    cell_features: &CellFeatures,
    samples: &[CostSample],
    params: FusionParams,
) -> Result<GlobalCostMap> {
    if clusters.width != g.width || clusters.height != g.height {
        return Err(NavError::GridMismatch(format!(
            "costmap {}x{} vs clusters {}x{}",
            g.width, g.height, clusters.width, clusters.height
        )));
    }
    if cell_features.width != g.width || cell_features.height != g.height {
        return Err(NavError::GridMismatch("cell features do not match the costmap".into()));
    }
    let mut out = g.clone();
    if samples.is_empty() {
        return Ok(out);
    }

    let mut by_cluster: BTreeMap<usize, Vec<&CostSample>> = BTreeMap::new();
    let mut located = Vec::with_capacity(samples.len());
    for s in samples {
        if let Some(cell) = g.cell_index(s.position) {
            by_cluster.entry(clusters.labels[cell]).or_default().push(s);
            located.push((cell, s));
        }
    }

    let members = clusters.members();
    for (&cluster, group) in &by_cluster {
        if group.len() < params.k_min.max(1) {
            continue;
        }
        let rows: Vec<&[f64]> = group.iter().map(|s| s.feature.values.as_slice()).collect();
        let targets: Vec<f64> = group.iter().map(|s| s.cost).collect();
        let mut model = fit_ridge(&rows, &targets, params.lambda, true)?;
        model.cluster = Some(cluster);
        for &cell in &members[cluster] {
            if out.provenance[cell] == Provenance::Observed {
                continue;
            }
            if let Some(f) = cell_features.get(cell) {
                let pred = model.predict(&f.values);
                out.costs[cell] = if pred.is_finite() {
                    pred.clamp(0.0, C_MAX)
                } else {
                    C_MAX
                };
                out.provenance[cell] = Provenance::Interpolated;
            }
        }
    }

    located.sort_by(|a, b| a.1.timestamp.total_cmp(&b.1.timestamp));
    for (cell, s) in located {
        out.costs[cell] = s.cost.clamp(0.0, C_MAX);
        out.provenance[cell] = Provenance::Observed;
    }
    Ok(out)
}

/// Running fusion state for one scenario: the current map plus every sample seen so far.
#[derive(Clone, Debug)]
pub struct GlobalFusion {
    map: GlobalCostMap,
    clusters: ClusterMap,
    cell_features: CellFeatures,
    samples: Vec<CostSample>,
    params: FusionParams,
}

impl GlobalFusion {
    pub fn new(
        map: GlobalCostMap,
        clusters: ClusterMap,
        cell_features: CellFeatures,
        params: FusionParams,
    ) -> Result<Self> {
        if clusters.width != map.width || clusters.height != map.height {
            return Err(NavError::GridMismatch("clusters do not match the costmap".into()));
        }
        Ok(GlobalFusion {
            map,
            clusters,
            cell_features,
            samples: Vec::new(),
            params,
        })
    }

    pub fn map(&self) -> &GlobalCostMap {
        &self.map
    }

    pub fn clusters(&self) -> &ClusterMap {
        &self.clusters
    }

    pub fn sample_count(&self) -> usize {
        self.samples.len()
    }

    /// Adds new samples and refits every cluster on the accumulated set.
    pub fn ingest(&mut self, samples: Vec<CostSample>) -> Result<()> {
        if samples.is_empty() {
            return Ok(());
        }
        self.samples.extend(samples);
        self.map = update_global_costmap(
            &self.map,
            &self.clusters,
            &self.cell_features,
            &self.samples,
            self.params,
        )?;
        Ok(())
    }
}
