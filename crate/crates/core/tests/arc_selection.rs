mod common;

use common::{brute_force, random_map, C_UNOBS};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use terrainav::local_planner::{evaluate_arcs, generate_arcs, select_arc, Arc, ArcWeights};
use terrainav::sensor::LocalCostMap;
use terrainav::sim::RoverState;
use terrainav::{NavError, Point2};

#[test]
fn selection_matches_exhaustive_argmin() {
    let mut rng = ChaCha8Rng::seed_from_u64(31);
    let arcs = generate_arcs(3.5, 0.3, 15, 5.0, 20).unwrap();
    let mut picked_turning = 0;
    for k in 0..50 {
        let m = random_map(&mut rng);
        let target = Point2::new(rng.gen_range(-10.0..30.0), rng.gen_range(-25.0..25.0));
        let w = ArcWeights {
            alpha: rng.gen_range(0.0..5.0),
            beta: rng.gen_range(0.0..2.0),
            gamma: rng.gen_range(0.0..1.0),
        };
        let scored = evaluate_arcs(&arcs, &m, target, w, C_UNOBS);
        let expected = brute_force(&arcs, &m, target, w);
        let got = select_arc(&scored);
        match expected {
            Some(e) => {
                let a = got.unwrap_or_else(|err| panic!("case {k}: {err}"));
                assert_eq!(a.omega, arcs[e].omega, "case {k}");
                picked_turning += usize::from(a.omega != 0.0);
                for s in [0.1, 7.0, 1000.0] {
                    let rescored = evaluate_arcs(&arcs, &m, target, w.scaled(s), C_UNOBS);
                    assert_eq!(select_arc(&rescored).unwrap().omega, a.omega, "case {k}, scale {s}");
                }
            }
            None => assert!(matches!(got, Err(NavError::NoFeasibleArc(15))), "case {k}"),
        }
    }
    assert!(picked_turning > 10, "selection should not be trivially straight");
}

#[test]
fn symmetric_ties_prefer_straight_then_left() {
    let mut m = LocalCostMap::unobserved(20.0, RoverState::default());
    for r in 0..m.rows() {
        for c in 0..m.cols() {
            m.set_cell(r, c, 1.0);
        }
    }
    let arcs = generate_arcs(3.5, 0.3, 5, 5.0, 10).unwrap();
    let w = ArcWeights {
        alpha: 0.0,
        beta: 1.0,
        gamma: 0.0,
    };
    let scored = evaluate_arcs(&arcs, &m, Point2::new(10.0, 0.0), w, C_UNOBS);
    assert_eq!(select_arc(&scored).unwrap().omega, 0.0);

    let blocked: Vec<Arc> = scored
        .into_iter()
        .map(|mut a| {
            if a.omega == 0.0 {
                a.costs.as_mut().unwrap().blocked = true;
            }
            a
        })
        .collect();
    assert!(select_arc(&blocked).unwrap().omega > 0.0);
}
