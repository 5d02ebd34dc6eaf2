use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use cbwk::dual_strategy::{dual_update, ilog, select_action, upsilon};
use cbwk::fairness::{build_fairness_cost, court_cost, CourtEnvironment, GroupSpec};
use cbwk::finite::FiniteInstance;
use cbwk::harness::fmt6;
use cbwk::oracles::{brute_force_instance, DualSample};
use cbwk::primal::{xi, DEFAULT_XI_CONSTANT};
use cbwk::{ActionId, DualVector};

fn vec_in(d: usize, lo: f64, hi: f64) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(lo..hi, d)
}

fn dist(a: &DualVector, b: &DualVector) -> f64 {
    a.as_slice()
        .iter()
        .zip(b.as_slice())
        .map(|(x, y)| (x - y).powi(2))
        .sum::<f64>()
        .sqrt()
}

proptest! {
    #[test]
    fn dual_update_stays_nonnegative(
        (lam, lcb, target) in (1usize..8).prop_flat_map(|d| (vec_in(d, 0.0, 5.0), vec_in(d, -1.0, 1.0), vec_in(d, -1.0, 1.0))),
        gamma in 1e-4f64..10.0,
    ) {
        let next = dual_update(&DualVector::project(lam), &lcb, &target, gamma);
        prop_assert!(next.as_slice().iter().all(|v| *v >= 0.0));
    }

    #[test]
    fn dual_update_is_nonexpansive(
        (l1, l2, lcb, target) in (1usize..8).prop_flat_map(|d| (vec_in(d, 0.0, 5.0), vec_in(d, 0.0, 5.0), vec_in(d, -1.0, 1.0), vec_in(d, -1.0, 1.0))),
        gamma in 1e-4f64..10.0,
    ) {
        let (a, b) = (DualVector::project(l1), DualVector::project(l2));
        let (na, nb) = (dual_update(&a, &lcb, &target, gamma), dual_update(&b, &lcb, &target, gamma));
        prop_assert!(dist(&na, &nb) <= dist(&a, &b) + 1e-12);
    }

    #[test]
    fn dual_step_is_bounded_by_gamma_times_range(
        (lam, lcb, target) in (1usize..8).prop_flat_map(|d| (vec_in(d, 0.0, 5.0), vec_in(d, -1.0, 1.0), vec_in(d, -1.0, 1.0))),
        gamma in 1e-4f64..1.0,
    ) {
        let before = DualVector::project(lam);
        let after = dual_update(&before, &lcb, &target, gamma);
        prop_assert!(after.l1_norm() - before.l1_norm() <= 2.0 * gamma * lcb.len() as f64 + 1e-12);
    }

    #[test]
    fn selected_action_maximizes_the_lagrangian(
        (ucb, lcb, target, lam) in (1usize..4, 1usize..6).prop_flat_map(|(d, k)| (
            vec_in(k, 0.0, 1.0),
            prop::collection::vec(vec_in(d, -1.0, 1.0), k),
            vec_in(d, 0.0, 1.0),
            vec_in(d, 0.0, 3.0),
        )),
    ) {
        let lam = DualVector::project(lam);
        let score = |a: usize| ucb[a] - lcb[a].iter().zip(&target).zip(lam.as_slice()).map(|((c, b), w)| (c - b) * w).sum::<f64>();
        let ActionId(best) = select_action(&ucb, &lcb, &target, &lam).unwrap();
        for a in 0..ucb.len() {
            prop_assert!(score(a) <= score(best));
            if a < best {
                prop_assert!(score(a) < score(best));
            }
        }
    }

    #[test]
    fn ties_go_to_the_lowest_index(k in 1usize..6, u in 0.0f64..1.0) {
        let ucb = vec![u; k];
        let lcb = vec![vec![0.3]; k];
        prop_assert_eq!(select_action(&ucb, &lcb, &[0.1], &DualVector::zeros(1)).unwrap(), ActionId(0));
    }

    #[test]
    fn ilog_brackets_its_argument(x in 1.0f64..1e9) {
        let k = ilog(x).unwrap() as i32;
        prop_assert!(2f64.powi(k) >= x);
        prop_assert!(k == 0 || 2f64.powi(k - 1) < x);
    }

    #[test]
    fn upsilon_dominates_beta_and_grows_with_horizon(t in 1usize..100_000, d in 1usize..12, delta in 0.001f64..0.5, beta in 0.0f64..1e4) {
        let u = upsilon(t, delta, d, beta);
        prop_assert!(u >= beta);
        prop_assert!(upsilon(t + 1, delta, d, beta) >= u);
    }

    #[test]
    fn xi_is_capped_and_decreasing(t in 1usize..1_000_000, n in 1usize..50, delta in 0.001f64..0.5) {
        let a = xi(t, delta, n, DEFAULT_XI_CONSTANT);
        prop_assert!(a > 0.0 && a <= 1.0);
        prop_assert!(xi(t + 1, delta, n, DEFAULT_XI_CONSTANT) <= a);
    }

    #[test]
    fn fairness_components_cancel_per_group(
        props in prop::collection::vec(0.05f64..1.0, 1..5),
        c in -1.0f64..1.0,
        pick in 0usize..8,
    ) {
        let total: f64 = props.iter().sum();
        let spec = GroupSpec::new(props.iter().map(|p| p / total).collect()).unwrap();
        let group = pick % props.len();
        let v = build_fairness_cost(c, group, &spec).unwrap();
        prop_assert_eq!(v.len(), 1 + 2 * props.len());
        prop_assert_eq!(v[0], c);
        for g in 0..props.len() {
            prop_assert_eq!(v[1 + 2 * g], -v[2 + 2 * g]);
        }
    }

    #[test]
    fn court_fairness_series_are_negatives(seed in any::<u64>(), a in 0usize..3) {
        use cbwk::Environment;
        let env = CourtEnvironment::new(0.025).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let x = env.sample_context(&mut rng);
        let c = court_cost(&x, ActionId(a));
        prop_assert_eq!(c.len(), 10);
        for i in 0..4 {
            prop_assert_eq!(c[2 + i], -c[6 + i]);
        }
        prop_assert!(c.iter().all(|v| [-1.0, 0.0, 1.0].contains(v)));
    }

    #[test]
    fn fmt6_round_trips_to_six_digits(x in -1e7f64..1e7) {
        prop_assume!(x.abs() > 1e-12);
        let back: f64 = fmt6(x).parse().unwrap();
        prop_assert!(((back - x) / x).abs() <= 5e-6);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn subgradient_inequality_holds(seed in any::<u64>(), l1 in vec_in(3, 0.0, 4.0), l2 in vec_in(3, 0.0, 4.0)) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let inst = FiniteInstance::random(&mut rng, 4, 3, 3, false);
        let s = DualSample::from_instance(&inst).unwrap();
        let (g1, grad) = s.value_and_subgradient(&l1);
        let (g2, _) = s.value_and_subgradient(&l2);
        let lin: f64 = grad.iter().zip(&l2).zip(&l1).map(|((g, b), a)| g * (b - a)).sum();
        prop_assert!(g2 - g1 - lin >= -1e-9);
    }

    #[test]
    fn opt_is_monotone_in_the_budget(seed in any::<u64>(), bump in 0.0f64..0.3, which in 0usize..2) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let inst = FiniteInstance::random(&mut rng, 3, 3, 2, true);
        let base = brute_force_instance(&inst, &inst.budget).unwrap().value;
        let mut bigger = inst.budget.clone();
        bigger[which] += bump;
        let more = brute_force_instance(&inst, &bigger).unwrap().value;
        prop_assert!(more >= base - 1e-9);
    }

    #[test]
    fn dual_value_bounds_opt_from_above(seed in any::<u64>(), lam in vec_in(2, 0.0, 5.0)) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let inst = FiniteInstance::random(&mut rng, 3, 3, 2, true);
        let exact = brute_force_instance(&inst, &inst.budget).unwrap().value;
        let (g, _) = DualSample::from_instance(&inst).unwrap().value_and_subgradient(&lam);
        prop_assert!(g >= exact - 1e-9);
    }
}
