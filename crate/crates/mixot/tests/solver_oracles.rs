//! Discrete solvers against independent oracles and LP certificates.

use mixot::discrete::{
    brute_force_transport, solve_multimarginal, solve_transport, DiscretePlan,
};
use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn random_simplex(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    let mut w: Vec<f64> = (0..n).map(|_| rng.random_range(0.05..1.0)).collect();
    let total: f64 = w.iter().sum();
    w.iter_mut().for_each(|x| *x /= total);
    w
}

fn check_transport_duality(plan: &DiscretePlan, cost: &DMatrix<f64>) {
    let duals = plan.duals.as_ref().expect("simplex reports duals");
    for j in 0..plan.shape[0] {
        for k in 0..plan.shape[1] {
            let reduced = cost[(j, k)] - duals[0][j] - duals[1][k];
            assert!(reduced >= -1e-9, "dual infeasibility {reduced} at ({j},{k})");
            let w = plan.weight(&[j, k]);
            assert!(
                w * reduced.abs() <= 1e-9,
                "complementary slackness {w}·{reduced} at ({j},{k})"
            );
        }
    }
}

#[test]
fn simplex_matches_vertex_enumeration() {
    let mut rng = ChaCha8Rng::seed_from_u64(23);
    for trial in 0..300 {
        let nj = rng.random_range(1..=3);
        let nk = rng.random_range(1..=3);
        let a = random_simplex(&mut rng, nj);
        let b = random_simplex(&mut rng, nk);
        let cost = DMatrix::from_fn(nj, nk, |_, _| rng.random_range(0.0..2.0));
        let fast = solve_transport(&a, &b, &cost).unwrap();
        let oracle = brute_force_transport(&a, &b, &cost).unwrap();
        assert!(
            (fast.value - oracle.value).abs() <= 1e-10,
            "trial {trial}: {} vs {}",
            fast.value,
            oracle.value
        );
        check_transport_duality(&fast, &cost);
        assert!(fast.nonzero_count() <= nj + nk - 1);
    }
}

#[test]
fn simplex_handles_degenerate_weights() {
    // equal marginal blocks force degenerate pivots
    let mut rng = ChaCha8Rng::seed_from_u64(29);
    for _ in 0..100 {
        let a = vec![0.25, 0.25, 0.25, 0.25];
        let b = vec![0.5, 0.25, 0.25];
        let cost = DMatrix::from_fn(4, 3, |_, _| rng.random_range(0.0..1.0));
        let fast = solve_transport(&a, &b, &cost).unwrap();
        let oracle = brute_force_transport(&a, &b, &cost).unwrap();
        assert!((fast.value - oracle.value).abs() <= 1e-10);
        for (axis, want) in [(0, &a), (1, &b)] {
            for (k, &m) in fast.marginal(axis).iter().enumerate() {
                assert!((m - want[k]).abs() <= 1e-12);
            }
        }
    }
}

#[test]
fn multimarginal_agrees_with_transport_for_two_marginals() {
    let mut rng = ChaCha8Rng::seed_from_u64(31);
    for _ in 0..100 {
        let nj = rng.random_range(2..=3);
        let nk = rng.random_range(2..=3);
        let a = random_simplex(&mut rng, nj);
        let b = random_simplex(&mut rng, nk);
        let cost = DMatrix::from_fn(nj, nk, |_, _| rng.random_range(0.0..3.0));
        let flat: Vec<f64> = (0..nj)
            .flat_map(|j| (0..nk).map(move |k| (j, k)))
            .map(|(j, k)| cost[(j, k)])
            .collect();
        let two = solve_transport(&a, &b, &cost).unwrap();
        let multi = solve_multimarginal(&[a, b], &flat).unwrap();
        assert!(
            (two.value - multi.value).abs() <= 1e-12,
            "{} vs {}",
            two.value,
            multi.value
        );
    }
}

#[test]
fn multimarginal_duality_certificate() {
    let mut rng = ChaCha8Rng::seed_from_u64(37);
    for _ in 0..50 {
        let q = rng.random_range(3..=4);
        let shape: Vec<usize> = (0..q).map(|_| rng.random_range(2..=3)).collect();
        let lambdas: Vec<Vec<f64>> = shape.iter().map(|&k| random_simplex(&mut rng, k)).collect();
        let n: usize = shape.iter().product();
        let cost: Vec<f64> = (0..n).map(|_| rng.random_range(0.0..1.0)).collect();
        let plan = solve_multimarginal(&lambdas, &cost).unwrap();
        let duals = plan.duals.as_ref().unwrap();

        // reduced costs over all tuples certify optimality
        let mut tuple = vec![0usize; q];
        for flat in 0..n {
            let mut idx = flat;
            for ax in (0..q).rev() {
                tuple[ax] = idx % shape[ax];
                idx /= shape[ax];
            }
            let mut reduced = cost[flat];
            for ax in 0..q {
                reduced -= duals[ax][tuple[ax]];
            }
            assert!(reduced >= -1e-9, "dual infeasibility {reduced}");
            let w = plan.weight(&tuple);
            assert!(w * reduced.abs() <= 1e-9);
        }
        let bound: usize = shape.iter().sum::<usize>() - q + 1;
        assert!(plan.nonzero_count() <= bound);
        for (ax, l) in lambdas.iter().enumerate() {
            for (k, &want) in l.iter().enumerate() {
                assert!((plan.marginal(ax)[k] - want).abs() <= 1e-10);
            }
        }
    }
}

#[test]
fn objective_invariant_under_relabeling() {
    // permuting rows/columns of cost and weights preserves the optimum;
    // dyadic data keeps every pivot exact, so equality holds bitwise
    let a = [0.25, 0.5, 0.25];
    let b = [0.5, 0.25, 0.25];
    let cost = DMatrix::from_row_slice(
        3,
        3,
        &[0.5, 1.25, 2.0, 0.75, 0.25, 1.5, 1.0, 0.5, 0.125],
    );
    let base = solve_transport(&a, &b, &cost).unwrap().value;
    let perm_rows = [2usize, 0, 1];
    let perm_cols = [1usize, 2, 0];
    let pa: Vec<f64> = perm_rows.iter().map(|&j| a[j]).collect();
    let pb: Vec<f64> = perm_cols.iter().map(|&k| b[k]).collect();
    let pcost = DMatrix::from_fn(3, 3, |j, k| cost[(perm_rows[j], perm_cols[k])]);
    let permuted = solve_transport(&pa, &pb, &pcost).unwrap().value;
    assert_eq!(base, permuted);
}

#[test]
fn deterministic_plans_across_runs() {
    let mut rng = ChaCha8Rng::seed_from_u64(41);
    let a = random_simplex(&mut rng, 3);
    let b = random_simplex(&mut rng, 3);
    let cost = DMatrix::from_fn(3, 3, |_, _| rng.random_range(0.0..1.0));
    let p1 = solve_transport(&a, &b, &cost).unwrap();
    let p2 = solve_transport(&a, &b, &cost).unwrap();
    assert_eq!(p1.entries, p2.entries);
    assert_eq!(p1.value, p2.value);
}
