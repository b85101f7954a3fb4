//! 4-connected A* over the global costmap.
//!
//! Moving into a cell costs `cell_m * (c_base + cost(destination))`. The heuristic is the
//! straight-line distance times `c_base`, which never overestimates because every cell cost
//! is nonnegative. Cells at [`C_MAX`] are walls.

use std::cmp::Ordering;
use std::collections::BinaryHeap;
use std::io::Write;
use std::path::Path;

use crate::fusion::GlobalCostMap;
use crate::{NavError, Point2, Result, C_MAX};

pub const DEFAULT_C_BASE: f64 = 1.0;

#[derive(Clone, Debug, PartialEq)]
pub struct GlobalPath {
    /// Cell centers, start first.
    pub waypoints: Vec<Point2>,
    /// Row-major cell indices matching `waypoints`.
    pub cells: Vec<usize>,
    pub cost: f64,
}

impl GlobalPath {
    /// Euclidean length of the polyline.
    pub fn length(&self) -> f64 {
        self.waypoints.windows(2).map(|w| w[0].distance(w[1])).sum()
    }

    /// CSV with header `index,x,y,cell`.
    pub fn write_csv(&self, w: &mut impl Write) -> std::io::Result<()> {
        writeln!(w, "index,x,y,cell")?;
        for (k, (p, c)) in self.waypoints.iter().zip(&self.cells).enumerate() {
            writeln!(w, "{k},{},{},{c}", p.x, p.y)?;
        }
        Ok(())
    }

    pub fn save_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let mut f = std::io::BufWriter::new(std::fs::File::create(path).map_err(|e| NavError::io(path, e))?);
        self.write_csv(&mut f).map_err(|e| NavError::io(path, e))
    }
}

#[derive(Clone, Copy, Debug)]
struct Entry {
    f: f64,
    g: f64,
    cell: usize,
}

impl PartialEq for Entry {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}

impl Eq for Entry {}

impl PartialOrd for Entry {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

// Reversed so the max-heap pops the lowest f, then the lowest cell index.
impl Ord for Entry {
    fn cmp(&self, other: &Self) -> Ordering {
        other.f.total_cmp(&self.f).then_with(|| other.cell.cmp(&self.cell))
    }
}

/// Everything a search produced, including its expansion order.
#[derive(Clone, Debug)]
pub struct SearchTrace {
    pub path: GlobalPath,
    /// Cells in the order they were closed.
    pub expanded: Vec<usize>,
    /// Heuristic value of each expanded cell.
    pub heuristic: Vec<f64>,
}

fn neighbors(cell: usize, w: usize, h: usize) -> impl Iterator<Item = usize> {
    let (r, c) = (cell / w, cell % w);
    let up = (r + 1 < h).then(|| cell + w);
    let down = (r > 0).then(|| cell - w);
    let right = (c + 1 < w).then(|| cell + 1);
    let left = (c > 0).then(|| cell - 1);
    [down, left, right, up].into_iter().flatten()
}

/// Plans from `start` to `goal` with `c_base = 1`.
pub fn plan_global(g: &GlobalCostMap, start: Point2, goal: Point2) -> Result<GlobalPath> {
    plan_global_with(g, start, goal, DEFAULT_C_BASE).map(|t| t.path)
}

/// Plans between world points, recording the expansion order.
pub fn plan_global_with(g: &GlobalCostMap, start: Point2, goal: Point2, c_base: f64) -> Result<SearchTrace> {
    let s = g
        .cell_index(start)
        .ok_or(NavError::OutOfBounds { x: start.x, y: start.y })?;
    let t = g
        .cell_index(goal)
        .ok_or(NavError::OutOfBounds { x: goal.x, y: goal.y })?;
    plan_cells(g, s, t, c_base)
}

/// Plans between cell indices.
pub fn plan_cells(g: &GlobalCostMap, start: usize, goal: usize, c_base: f64) -> Result<SearchTrace> {
    if !(c_base > 0.0 && c_base.is_finite()) {
        return Err(NavError::config("c_base must be positive"));
    }
    let (w, h) = (g.width, g.height);
    if start >= w * h || goal >= w * h {
        return Err(NavError::GridMismatch("cell index outside the costmap".into()));
    }
    if g.costs[goal] >= C_MAX {
        return Err(NavError::GoalBlocked);
    }
    let center = |k: usize| g.cell_center(k);
    let goal_p = center(goal);
    let heuristic = |k: usize| center(k).distance(goal_p) * c_base;

    let mut dist = vec![f64::INFINITY; w * h];
    let mut parent = vec![usize::MAX; w * h];
    let mut closed = vec![false; w * h];
    let mut open = BinaryHeap::new();
    let mut expanded = Vec::new();
    let mut hs = Vec::new();
    dist[start] = 0.0;
    open.push(Entry {
        f: heuristic(start),
        g: 0.0,
        cell: start,
    });
    while let Some(Entry { g: gc, cell, .. }) = open.pop() {
        if closed[cell] || gc > dist[cell] {
            continue;
        }
        closed[cell] = true;
        expanded.push(cell);
        hs.push(heuristic(cell));
        if cell == goal {
            break;
        }
        for n in neighbors(cell, w, h) {
            if closed[n] || g.costs[n] >= C_MAX {
                continue;
            }
            let nd = gc + g.cell_m * (c_base + g.costs[n]);
            if nd < dist[n] || (nd == dist[n] && cell < parent[n]) {
                dist[n] = nd;
                parent[n] = cell;
                open.push(Entry {
                    f: nd + heuristic(n),
                    g: nd,
                    cell: n,
                });
            }
        }
    }
    if !closed[goal] {
        return Err(NavError::Unreachable);
    }
    let mut cells = vec![goal];
    while *cells.last().unwrap() != start {
        cells.push(parent[*cells.last().unwrap()]);
    }
    cells.reverse();
    Ok(SearchTrace {
        path: GlobalPath {
            waypoints: cells.iter().map(|&k| center(k)).collect(),
            cells,
            cost: dist[goal],
        },
        expanded,
        heuristic: hs,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn grid(w: usize, h: usize, costs: Vec<f64>) -> GlobalCostMap {
        GlobalCostMap::from_costs(w, h, 1.0, costs).unwrap()
    }

    #[test]
    fn straight_line_on_empty_grid() {
        let g = grid(10, 10, vec![0.0; 100]);
        let p = plan_global(&g, Point2::new(0.5, 0.5), Point2::new(0.5, 9.5)).unwrap();
        assert_eq!(p.waypoints.len(), 10);
        assert_eq!(p.cost, 9.0);
        assert!(p.waypoints.iter().all(|w| w.x == 0.5));
    }

    #[test]
    fn start_equals_goal() {
        let g = grid(3, 3, vec![2.0; 9]);
        let p = plan_global(&g, Point2::new(1.2, 1.7), Point2::new(1.9, 1.1)).unwrap();
        assert_eq!(p.cells, vec![4]);
        assert_eq!(p.cost, 0.0);
    }

    #[test]
    fn walls_and_blocked_goal() {
        let mut costs = vec![0.0; 25];
        for r in 0..5 {
            costs[r * 5 + 2] = C_MAX;
        }
        let g = grid(5, 5, costs.clone());
        assert!(matches!(
            plan_global(&g, Point2::new(0.5, 0.5), Point2::new(4.5, 4.5)),
            Err(NavError::Unreachable)
        ));
        costs[24] = C_MAX;
        let g = grid(5, 5, costs.clone());
        assert!(matches!(
            plan_global(&g, Point2::new(0.5, 0.5), Point2::new(4.5, 4.5)),
            Err(NavError::GoalBlocked)
        ));
        costs[24] = 0.0;
        costs[22] = 0.0;
        let g = grid(5, 5, costs);
        let p = plan_global(&g, Point2::new(0.5, 0.5), Point2::new(4.5, 4.5)).unwrap();
        assert!(p.cells.contains(&22));
        assert_eq!(p.cost, 8.0);
    }

    #[test]
    fn detours_around_expensive_cells() {
        // Going straight through the middle costs 3 extra; the detour costs 2 extra steps.
        let mut costs = vec![0.0; 15];
        costs[7] = 3.0;
        let g = grid(5, 3, costs);
        let p = plan_global(&g, Point2::new(0.5, 1.5), Point2::new(4.5, 1.5)).unwrap();
        assert!(!p.cells.contains(&7));
        assert_eq!(p.cost, 6.0);
    }

    #[test]
    fn consecutive_waypoints_are_adjacent() {
        let costs = (0..400).map(|k| ((k * 37) % 11) as f64).collect();
        let g = grid(20, 20, costs);
        let p = plan_global(&g, Point2::new(0.5, 0.5), Point2::new(19.5, 13.5)).unwrap();
        for w in p.cells.windows(2) {
            let (a, b) = (w[0] as i64, w[1] as i64);
            let d = ((a / 20 - b / 20).abs(), (a % 20 - b % 20).abs());
            assert!(d == (0, 1) || d == (1, 0));
        }
        let summed: f64 = p.cells[1..].iter().map(|&c| 1.0 + g.costs[c]).sum();
        assert_eq!(summed, p.cost);
    }

    #[test]
    fn out_of_grid_endpoints() {
        let g = grid(3, 3, vec![0.0; 9]);
        assert!(plan_global(&g, Point2::new(-1.0, 0.5), Point2::new(1.0, 1.0)).is_err());
        assert!(plan_global(&g, Point2::new(0.5, 0.5), Point2::new(3.0, 1.0)).is_err());
    }
}
