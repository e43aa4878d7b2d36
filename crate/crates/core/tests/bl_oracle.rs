mod common;

use common::bl_grid::{clouds, grid_oracle, random_instance, Instance, POINT_DIM};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use sfde::bl::{bl_distance_lp, bl_distance_points, bl_distance_weighted, WeightedCloud, SUPPORT_CAP};

#[test]
fn lp_matches_grid_oracle_on_small_supports() {
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let mut worst = 0.0f64;
    for _ in 0..200 {
        let inst = random_instance(&mut rng);
        let expected = grid_oracle(&inst);
        let (pp, pc, qp, qc) = clouds(&inst);
        let p = WeightedCloud {
            points: &pp,
            point_dim: POINT_DIM,
            counts: Some(&pc),
            dim: 1,
        };
        let q = WeightedCloud {
            points: &qp,
            point_dim: POINT_DIM,
            counts: Some(&qc),
            dim: 1,
        };
        let lp = bl_distance_lp(&p, &q).unwrap();
        let transport = bl_distance_weighted(&p, &q, SUPPORT_CAP).unwrap();
        worst = worst.max((lp - expected).abs()).max((transport - expected).abs());
        assert!((lp - expected).abs() <= 2e-3, "lp {lp} vs grid {expected}");
        assert!((transport - expected).abs() <= 2e-3, "transport {transport} vs grid {expected}");
    }
    // lattice data make the grid search exact
    assert!(worst < 1e-9, "worst deviation {worst}");
}

#[test]
fn weighted_example_three_points() {
    // (1/3, 1/3, 1/3) against (1/2, 1/2, 0) on 0, 1, 3 (scalar points)
    let pts = [0.0, 1.0, 3.0];
    let p = WeightedCloud {
        points: &pts,
        point_dim: 1,
        counts: Some(&[1, 1, 1]),
        dim: 1,
    };
    let q = WeightedCloud {
        points: &pts,
        point_dim: 1,
        counts: Some(&[1, 1, 0]),
        dim: 1,
    };
    let inst = Instance {
        points: vec![[0, 0], [1000, 1000], [3000, 3000]],
        p_counts: vec![1, 1, 1],
        q_counts: vec![1, 1, 0],
    };
    let expected = grid_oracle(&inst);
    // move 1/6 from 3 to 0 and 1/6 from 3 to 1, each at capped cost 2
    assert!((expected - 2.0 / 3.0).abs() < 1e-12, "{expected}");
    assert!((bl_distance_lp(&p, &q).unwrap() - expected).abs() < 1e-9);
    assert!((bl_distance_weighted(&p, &q, SUPPORT_CAP).unwrap() - expected).abs() < 1e-9);
}

fn cloud(max_points: usize) -> impl Strategy<Value = Vec<f64>> {
    (1..=max_points).prop_flat_map(|n| prop::collection::vec(-2.0..2.0f64, n * 3))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(100))]

    #[test]
    fn metric_axioms(p in cloud(12), q in cloud(12), r in cloud(12)) {
        let d = |a: &[f64], b: &[f64]| bl_distance_points(a, b, 3, 1).unwrap();
        let pq = d(&p, &q);
        let qr = d(&q, &r);
        let pr = d(&p, &r);
        prop_assert_eq!(d(&p, &p), 0.0);
        prop_assert!((pq - d(&q, &p)).abs() <= 1e-12);
        prop_assert!(pr <= pq + qr + 1e-9);
        prop_assert!((0.0..=2.0).contains(&pq));
    }

    #[test]
    fn invariant_under_relabeling(p in cloud(15), q in cloud(15), seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut order: Vec<usize> = (0..p.len() / 3).collect();
        for i in (1..order.len()).rev() {
            order.swap(i, rng.random_range(0..=i));
        }
        let shuffled: Vec<f64> = order.iter().flat_map(|&i| p[3 * i..3 * i + 3].to_vec()).collect();
        let a = bl_distance_points(&p, &q, 3, 1).unwrap();
        let b = bl_distance_points(&shuffled, &q, 3, 1).unwrap();
        prop_assert!((a - b).abs() <= 1e-12);
    }

    #[test]
    fn dirac_closed_form(x in prop::collection::vec(-3.0..3.0f64, 4), y in prop::collection::vec(-3.0..3.0f64, 4)) {
        // two grid points of dimension 2
        let sup = (0..2)
            .map(|k| ((x[2 * k] - y[2 * k]).powi(2) + (x[2 * k + 1] - y[2 * k + 1]).powi(2)).sqrt())
            .fold(0.0, f64::max);
        let d = bl_distance_points(&x, &y, 4, 2).unwrap();
        prop_assert!((d - sup.min(2.0)).abs() <= 1e-12);
    }

    #[test]
    fn routes_agree(p in cloud(8), q in cloud(8)) {
        let a = bl_distance_points(&p, &q, 3, 1).unwrap();
        let b = bl_distance_lp(&WeightedCloud::uniform(&p, 3, 1), &WeightedCloud::uniform(&q, 3, 1)).unwrap();
        prop_assert!((a - b).abs() <= 1e-9, "{} vs {}", a, b);
    }
}
