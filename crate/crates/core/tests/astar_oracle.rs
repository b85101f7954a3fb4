mod common;

use common::{dijkstra, open_cell, random_grid, SIDE};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use terrainav::fusion::GlobalCostMap;
use terrainav::global_planner::plan_cells;
use terrainav::{NavError, C_MAX};

#[test]
fn astar_cost_equals_dijkstra() {
    let mut rng = ChaCha8Rng::seed_from_u64(21);
    let mut reached = 0;
    for k in 0..100 {
        let g = random_grid(&mut rng);
        let (s, t) = (open_cell(&mut rng, &g), open_cell(&mut rng, &g));
        let oracle = dijkstra(&g, s, 1.0)[t];
        match plan_cells(&g, s, t, 1.0) {
            Ok(trace) => {
                reached += 1;
                assert_eq!(trace.path.cost, oracle, "grid {k}");
                let cells = &trace.path.cells;
                assert_eq!((cells[0], *cells.last().unwrap()), (s, t));
                let mut along = 0.0;
                for w in cells.windows(2) {
                    let (a, b) = (w[0] as i64, w[1] as i64);
                    assert!([1, SIDE as i64].contains(&(a - b).abs()), "grid {k}: path jumps");
                    assert!(g.costs[w[1]] < C_MAX);
                    along += 1.0 + g.costs[w[1]];
                }
                assert_eq!(along, trace.path.cost);
            }
            Err(NavError::Unreachable) => assert!(oracle.is_infinite(), "grid {k}: oracle found {oracle}"),
            Err(e) => panic!("grid {k}: {e}"),
        }
    }
    assert!(reached > 50, "too few reachable instances: {reached}");
}

#[test]
fn heuristic_never_overestimates() {
    let mut rng = ChaCha8Rng::seed_from_u64(22);
    for _ in 0..20 {
        let g = random_grid(&mut rng);
        let (s, t) = (open_cell(&mut rng, &g), open_cell(&mut rng, &g));
        let to_goal = dijkstra(&g, t, 1.0);
        let Ok(trace) = plan_cells(&g, s, t, 1.0) else { continue };
        for (&cell, &h) in trace.expanded.iter().zip(&trace.heuristic) {
            // Entering a cell pays its cost, so the reverse search
            // from the goal counts the cell itself instead of the goal.
            let lower = to_goal[cell] - g.costs[cell] + g.costs[t];
            assert!(h <= lower + 1e-9, "h = {h} exceeds {lower}");
        }
    }
}

#[test]
fn path_is_invariant_to_power_of_two_scaling() {
    let mut rng = ChaCha8Rng::seed_from_u64(23);
    for _ in 0..20 {
        let g = random_grid(&mut rng);
        let (s, t) = (open_cell(&mut rng, &g), open_cell(&mut rng, &g));
        let Ok(base) = plan_cells(&g, s, t, 1.0) else { continue };
        for k in [0.25, 2.0, 64.0] {
            let costs = g
                .costs
                .iter()
                .map(|&c| if c >= C_MAX { C_MAX } else { c * k })
                .collect();
            let scaled = GlobalCostMap::from_costs(SIDE, SIDE, 1.0, costs).unwrap();
            let trace = plan_cells(&scaled, s, t, k).unwrap();
            assert_eq!(trace.path.cells, base.path.cells);
            assert_eq!(trace.path.cost, base.path.cost * k);
        }
    }
}
