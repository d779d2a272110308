mod common;

use bec_core::lp::{self, LinearProgram, LpStatus};
use common::vertex_enumeration;
use proptest::prelude::*;

fn program(c: &[f64], a: &[Vec<f64>], b: &[f64]) -> LinearProgram {
    let mut lp = LinearProgram::new(c.len()).maximize(c.to_vec());
    for (row, &bi) in a.iter().zip(b) {
        lp = lp.le(row.clone(), bi);
    }
    lp
}

#[test]
fn degenerate_vertex_with_many_tight_rows() {
    // four constraints meet at (1, 1)
    let c = [1.0, 1.0];
    let a = vec![vec![1.0, 0.0], vec![0.0, 1.0], vec![1.0, 1.0], vec![2.0, 1.0]];
    let b = [1.0, 1.0, 2.0, 3.0];
    let sol = lp::solve(&program(&c, &a, &b)).unwrap();
    assert_eq!(sol.status, LpStatus::Optimal);
    assert!((sol.value - 2.0).abs() < 1e-12);
    assert_eq!(sol.tight, vec![0, 1, 2, 3]);
}

#[test]
fn equality_rows_and_shifted_bounds() {
    // max x + 2y, x + y = 3, 1 ≤ x ≤ 4, 0.5 ≤ y ≤ 1.5
    let lp = LinearProgram::new(2)
        .maximize(vec![1.0, 2.0])
        .eq(vec![1.0, 1.0], 3.0)
        .with_bounds(0, 1.0, 4.0)
        .with_bounds(1, 0.5, 1.5);
    let sol = lp::solve(&lp).unwrap();
    assert!((sol.value - 4.5).abs() < 1e-12);
    assert!((sol.point[0] - 1.5).abs() < 1e-12);
}

#[test]
fn unbounded_and_infeasible_are_reported() {
    let lp = LinearProgram::new(2).maximize(vec![1.0, 0.0]).le(vec![0.0, 1.0], 1.0);
    assert_eq!(lp::solve(&lp).unwrap().status, LpStatus::Unbounded);
    let lp = LinearProgram::new(1).le(vec![1.0], -1.0);
    assert_eq!(lp::solve(&lp).unwrap().status, LpStatus::Infeasible);
}

fn instance() -> impl Strategy<Value = (Vec<f64>, Vec<Vec<f64>>, Vec<f64>)> {
    (2usize..=4, 1usize..=5).prop_flat_map(|(n, m)| {
        (
            prop::collection::vec(-1.0..1.0f64, n),
            prop::collection::vec(prop::collection::vec(-1.0..1.0f64, n), m),
            prop::collection::vec(-0.5..1.0f64, m),
        )
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(300))]

    #[test]
    fn matches_vertex_enumeration((c, mut a, mut b) in instance()) {
        a.push(vec![1.0; c.len()]);
        b.push(3.0);
        let sol = lp::solve(&program(&c, &a, &b)).unwrap();
        match vertex_enumeration(&c, &a, &b) {
            None => prop_assert_eq!(sol.status, LpStatus::Infeasible),
            Some(v) => {
                prop_assert_eq!(sol.status, LpStatus::Optimal);
                prop_assert!((sol.value - v).abs() < 1e-7, "{} vs {}", sol.value, v);
                let lp = program(&c, &a, &b);
                prop_assert!(lp.max_violation(&sol.point) < 1e-8);
            }
        }
    }

    #[test]
    fn integer_data_degenerate_programs((n, rows) in (2usize..=3, 2usize..=6), seed in any::<u64>()) {
        // small integer coefficients produce many ties and degenerate vertices
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let c: Vec<f64> = (0..n).map(|_| rng.random_range(-2..=2) as f64).collect();
        let mut a: Vec<Vec<f64>> = (0..rows).map(|_| (0..n).map(|_| rng.random_range(-2..=2) as f64).collect()).collect();
        let mut b: Vec<f64> = (0..rows).map(|_| rng.random_range(0..=2) as f64).collect();
        a.push(vec![1.0; n]);
        b.push(4.0);
        let sol = lp::solve(&program(&c, &a, &b)).unwrap();
        let v = vertex_enumeration(&c, &a, &b).expect("origin is feasible");
        prop_assert_eq!(sol.status, LpStatus::Optimal);
        prop_assert!((sol.value - v).abs() < 1e-9);
    }
}
