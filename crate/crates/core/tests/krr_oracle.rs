mod common;

use common::{problem, Oracle, DIM};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use terrainav::fusion::{fit_ridge, solve_form, SolveForm};

#[test]
fn predictions_match_normal_equation_oracle() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let mut forms = [0usize; 2];
    for k in 0..100 {
        let n = if k < 3 { [1, 64, 65][k] } else { rng.gen_range(1..=200) };
        let lambda = [1e-3, 1.0, 1e3][k % 3];
        let (rows, y) = problem(&mut rng, n);
        let refs: Vec<&[f64]> = rows.iter().map(|r| r.as_slice()).collect();
        let model = fit_ridge(&refs, &y, lambda, true).unwrap();
        let oracle = Oracle::fit(&rows, &y, lambda);
        forms[usize::from(solve_form(n, DIM + 1) == SolveForm::Primal)] += 1;

        let scale = y.iter().fold(1.0f64, |m, v| m.max(v.abs()));
        let queries: Vec<Vec<f64>> = (0..20)
            .map(|_| (0..DIM).map(|_| rng.gen_range(0.0..1.0)).collect())
            .collect();
        for q in rows.iter().take(20).chain(&queries) {
            let (got, want) = (model.predict(q), oracle.predict(q));
            assert!(
                (got - want).abs() <= 1e-8 * scale.max(want.abs()),
                "problem {k} (n = {n}, lambda = {lambda}): {got} vs {want}"
            );
        }
    }
    assert!(
        forms[0] > 0 && forms[1] > 0,
        "both solver forms should be exercised: {forms:?}"
    );
}

#[test]
fn tiny_lambda_interpolates_training_targets() {
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    for k in 0..30 {
        let n = rng.gen_range(1..=60);
        let (rows, y) = problem(&mut rng, n);
        let refs: Vec<&[f64]> = rows.iter().map(|r| r.as_slice()).collect();
        let model = fit_ridge(&refs, &y, 1e-8, true).unwrap();
        for (r, t) in rows.iter().zip(&y) {
            let p = model.predict(r);
            assert!((p - t).abs() <= 1e-4 * t.abs().max(1e-3), "problem {k}: {p} vs {t}");
        }
    }
}

#[test]
fn one_dimensional_fit_without_standardization() {
    // y = 2x through the origin: w = sum(xy) / (sum(x^2) + lambda).
    let xs = [1.0, 2.0, 3.0];
    let rows: Vec<&[f64]> = xs.iter().map(std::slice::from_ref).collect();
    let y: Vec<f64> = xs.iter().map(|x| 2.0 * x).collect();
    let m = fit_ridge(&rows, &y, 1.0, false).unwrap();
    assert!((m.weights[0] - 28.0 / 15.0).abs() < 1e-12);
    assert_eq!(m.bias, 0.0);
}
