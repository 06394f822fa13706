use proptest::prelude::*;

use orlicz_indiff::indifference;
use orlicz_indiff::random;
use orlicz_indiff::utility::UtilityFunction;
use orlicz_indiff::{dual, oracle, primal};

fn utilities() -> Vec<UtilityFunction> {
    vec![UtilityFunction::exponential(0.8).unwrap(), UtilityFunction::log_quadratic().unwrap(), UtilityFunction::exp_sum(&[(1.0, 1.0), (0.5, 3.0)]).unwrap()]
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn price_lies_within_its_bounds(seed in 0u64..10_000, which in 0usize..3) {
        let mut rng = random::rng(seed);
        let m = random::random_sized_market(&mut rng, 5, 2).unwrap();
        let claim = random::random_claim(&mut rng, m.n_states(), 1.5);
        let u = &utilities()[which];
        let p = indifference::price(&m, u, &claim, 0.2).unwrap();
        let b = indifference::price_bounds(&m, u, &claim, 0.2).unwrap();
        prop_assert!(b.contains(p, 1e-9), "{b:?} {p}");
    }

    #[test]
    fn argmax_measures_satisfy_the_variational_inequality(seed in 0u64..10_000, which in 0usize..3) {
        let mut rng = random::rng(seed);
        let m = random::random_sized_market(&mut rng, 5, 2).unwrap();
        let claim = random::random_claim(&mut rng, m.n_states(), 1.0);
        let u = &utilities()[which];
        let d = indifference::dual_price_representation(&m, u, &claim, 0.0, 4, &mut rng).unwrap();
        for q in &d.maximizers {
            let lam = dual::lambda_foc(u, &q.density(m.probs()), m.probs(), d.price - q.expect(&claim)).unwrap();
            prop_assert!(dual::variational_residual(&m, u, &claim, lam, q.q()).unwrap() <= 1e-7);
        }
    }

    #[test]
    fn penalty_is_nonnegative_and_dominates(seed in 0u64..10_000) {
        let mut rng = random::rng(seed);
        let m = random::random_market(&mut rng, 4, 1).unwrap();
        let u = UtilityFunction::log_quadratic().unwrap();
        let q = orlicz_indiff::finite_market::MartingaleMeasure::new(&m, m.polytope().random_point(&mut rng, 20)).unwrap();
        let a = indifference::penalty(&m, &u, &q, 0.0).unwrap();
        prop_assert!(a.to_f64() >= -1e-10);
        for _ in 0..5 {
            let b = random::random_claim(&mut rng, 4, 2.0);
            let p = indifference::price(&m, &u, &b, 0.0).unwrap();
            prop_assert!(a.to_f64() >= q.expect(&b) - p - 1e-6);
        }
    }

    #[test]
    fn solver_beats_the_grid_and_stays_below_the_dual(seed in 0u64..10_000) {
        let mut rng = random::rng(seed);
        let m = random::random_market(&mut rng, 3, 1).unwrap();
        let claim = random::random_claim(&mut rng, 3, 1.0);
        let u = UtilityFunction::exponential(1.0).unwrap();
        let spec = oracle::GridSpec { final_step: 1e-3, ..oracle::GridSpec::default() };
        let s = primal::maximize(&m, &u, &claim, 0.0).unwrap();
        let g = oracle::grid_primal(&m, &u, &claim, 0.0, &spec).unwrap();
        let d = oracle::grid_dual(&m, &u, &claim, 0.0, &spec).unwrap();
        prop_assert!(s.value >= g.value - 1e-12);
        prop_assert!(d.value >= s.value - 1e-9);
    }

    #[test]
    fn volume_price_is_convex(seed in 0u64..10_000) {
        let mut rng = random::rng(seed);
        let m = random::random_sized_market(&mut rng, 4, 1).unwrap();
        let claim = random::random_claim(&mut rng, m.n_states(), 1.0);
        let u = UtilityFunction::exponential(1.5).unwrap();
        let ps: Vec<f64> = (0..8).map(|k| {
            let c: Vec<f64> = claim.iter().map(|v| v * k as f64 * 0.75).collect();
            indifference::price(&m, &u, &c, 0.0).unwrap()
        }).collect();
        for w in ps.windows(3) {
            prop_assert!(w[2] - 2.0 * w[1] + w[0] >= -1e-8);
        }
    }
}
