use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use semirank::llt::SmoothedObjective;
use semirank::objective::{EvalStrategy, ObjectiveContext, PairTable, PerturbationWeights};
use semirank::sphere::{
    draw_starts, maximize_from, multistart_maximize, polar_to_rect, Angles, MultistartConfig,
    SphereObjective,
};

#[test]
fn polar_map_has_unit_norm() {
    let mut rng = ChaCha8Rng::seed_from_u64(10);
    for _ in 0..10_000 {
        let q = rng.random_range(1..8);
        let theta: Vec<f64> = (0..q).map(|_| rng.random_range(-10.0..10.0)).collect();
        let b = polar_to_rect(&theta);
        assert_eq!(b.len(), q + 1);
        let norm = b.iter().map(|v| v * v).sum::<f64>().sqrt();
        assert!((norm - 1.0).abs() < 1e-12);
    }
}

fn small_context(rng: &mut ChaCha8Rng, p: usize) -> ObjectiveContext {
    let n = rng.random_range(3..9);
    let subj: Vec<usize> = (0..n)
        .flat_map(|i| std::iter::repeat_n(i, 1 + (i % 2)))
        .collect();
    let big_n = subj.len();
    let y = (0..big_n).map(|_| rng.random::<f64>()).collect();
    let x = (0..big_n * p)
        .map(|_| rng.random::<f64>() * 2.0 - 1.0)
        .collect();
    ObjectiveContext::new(y, x, p, subj, n).unwrap()
}

#[test]
fn multistart_never_ends_below_a_start() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let cfg = MultistartConfig::default();
    for k in 0..20 {
        let p = 2 + k % 3;
        let ctx = small_context(&mut rng, p);
        let table = PairTable::new(
            &ctx,
            &PerturbationWeights::ones(ctx.n_subjects()),
            EvalStrategy::Auto,
        )
        .unwrap();
        let obj = SmoothedObjective {
            table: &table,
            h: 0.3,
        };
        let starts = draw_starts(&cfg, p - 1, &mut rng);
        let m = maximize_from(&obj, &cfg, &starts).unwrap();
        for s in &starts {
            assert!(m.value >= obj.value(&s.to_unit()) - 1e-15);
        }
        let norm = m.beta.iter().map(|v| v * v).sum::<f64>().sqrt();
        assert!((norm - 1.0).abs() < 1e-8);
    }
}

#[test]
fn smooth_maximum_matches_grid_search() {
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    for _ in 0..10 {
        let ctx = small_context(&mut rng, 2);
        let table = PairTable::new(
            &ctx,
            &PerturbationWeights::ones(ctx.n_subjects()),
            EvalStrategy::Auto,
        )
        .unwrap();
        let obj = SmoothedObjective {
            table: &table,
            h: 0.5,
        };
        let m = multistart_maximize(&obj, &MultistartConfig::default(), &mut rng).unwrap();
        let grid = (0..6284)
            .map(|i| obj.value(&polar_to_rect(&[-std::f64::consts::PI + i as f64 * 0.001])))
            .fold(f64::NEG_INFINITY, f64::max);
        assert!(m.value >= grid - 1e-6, "{} < {}", m.value, grid);
    }
}

#[test]
fn angle_canonicalization_keeps_point() {
    let a = Angles(vec![7.0, -9.5, 3.2]);
    let c = a.canonical();
    for (u, v) in a.to_unit().iter().zip(c.to_unit()) {
        assert!((u - v).abs() < 1e-12);
    }
    assert!(c
        .0
        .iter()
        .all(|t| *t > -std::f64::consts::PI && *t <= std::f64::consts::PI));
}

proptest! {
    #[test]
    fn polar_norm_property(theta in prop::collection::vec(-50.0f64..50.0, 1..10)) {
        let b = polar_to_rect(&theta);
        let norm = b.iter().map(|v| v * v).sum::<f64>().sqrt();
        prop_assert!((norm - 1.0).abs() < 1e-12);
    }
}
