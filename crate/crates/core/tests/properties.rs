mod common;

use common::{random_ls, random_table};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use shuffle_vr::diagnostics::pi_norm_sq;
use shuffle_vr::finito::{apply_spi, apply_tpi, epoch_step};
use shuffle_vr::reference::{
    brute_force_best_order, expected_contraction, expected_damped_contraction, solve_reference, zstar_table,
    DEFAULT_TOL,
};
use shuffle_vr::sampling::{epoch_order, optimal_cyclic_order, seeded_permutation, ImportanceVector};
use shuffle_vr::{MemoryState, Regime, Regularizer, SamplingPlan};

fn regularizer() -> impl Strategy<Value = Regularizer> {
    prop_oneof![
        Just(Regularizer::None),
        (0.0..0.3f64).prop_map(Regularizer::L1),
        (0.0..0.3f64).prop_map(Regularizer::L2Sq),
    ]
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn tpi_is_nonexpansive_in_pi_norm(
        seed in any::<u64>(), n in 1usize..8, d in 1usize..5, reg in regularizer(), step in 0.05..2.0f64,
    ) {
        let p = random_ls(seed, n, d, 0.0, reg);
        let alpha = step / p.l_smooth();
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 1);
        let u = random_table(&mut rng, n, d, 3.0);
        let v = random_table(&mut rng, n, d, 3.0);
        let pi = seeded_permutation(n, &mut rng);
        let before = pi_norm_sq(&u.checked_sub(&v).unwrap(), &pi).unwrap();
        let tu = apply_tpi(&p, &pi, &u, alpha).unwrap();
        let tv = apply_tpi(&p, &pi, &v, alpha).unwrap();
        let after = pi_norm_sq(&tu.checked_sub(&tv).unwrap(), &pi).unwrap();
        prop_assert!(after <= before * (1.0 + 1e-10) + 1e-300, "{after} > {before}");
    }

    #[test]
    fn spi_contracts_for_strongly_convex_components(
        seed in any::<u64>(), n in 1usize..7, d in 1usize..4, mu in 0.05..0.5f64, theta in 0.1..=1.0f64,
        step in 0.1..=1.0f64,
    ) {
        let p = random_ls(seed, n, d, mu, Regularizer::None);
        let (l, mu) = (p.l_smooth(), p.mu());
        let alpha = step * 2.0 / (mu + l);
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 2);
        let u = random_table(&mut rng, n, d, 3.0);
        let v = random_table(&mut rng, n, d, 3.0);
        let pi = seeded_permutation(n, &mut rng);
        let before = pi_norm_sq(&u.checked_sub(&v).unwrap(), &pi).unwrap();
        let su = apply_spi(&p, &pi, &u, alpha, theta).unwrap();
        let sv = apply_spi(&p, &pi, &v, alpha, theta).unwrap();
        let after = pi_norm_sq(&su.checked_sub(&sv).unwrap(), &pi).unwrap();
        let factor = 1.0 - 2.0 * theta * alpha * mu * l / (mu + l);
        prop_assert!(after <= factor * before * (1.0 + 1e-10), "{after} > {factor} * {before}");
    }

    #[test]
    fn expectation_over_orders_is_nonexpansive(
        seed in any::<u64>(), n in 1usize..6, d in 1usize..3, step in 0.1..2.0f64,
    ) {
        let p = random_ls(seed, n, d, 0.0, Regularizer::L1(0.05));
        let alpha = step / p.l_smooth();
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 3);
        let u = random_table(&mut rng, n, d, 2.0);
        let v = random_table(&mut rng, n, d, 2.0);
        let e = expected_contraction(&p, &u, &v, alpha).unwrap();
        let before = u.checked_sub(&v).unwrap().norm_sq();
        prop_assert!(e <= before * (1.0 + 1e-10));
    }

    #[test]
    fn expectation_contracts_when_strongly_convex(
        seed in any::<u64>(), n in 1usize..5, mu in 0.05..0.5f64, theta in 0.2..=1.0f64,
    ) {
        let p = random_ls(seed, n, 2, mu, Regularizer::None);
        let (l, mu) = (p.l_smooth(), p.mu());
        let alpha = 2.0 / (mu + l);
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 4);
        let u = random_table(&mut rng, n, 2, 2.0);
        let v = random_table(&mut rng, n, 2, 2.0);
        let e = expected_damped_contraction(&p, &u, &v, alpha, theta).unwrap();
        let before = u.checked_sub(&v).unwrap().norm_sq();
        let factor = 1.0 - 2.0 * theta * alpha * mu * l / (mu + l);
        prop_assert!(e <= factor * before * (1.0 + 1e-10));
    }

    #[test]
    fn epoch_step_is_the_damped_operator(
        seed in any::<u64>(), n in 1usize..9, d in 1usize..4, reg in regularizer(), theta in 0.01..=1.0f64,
        reshuffle in any::<bool>(),
    ) {
        let p = random_ls(seed, n, d, 0.0, reg);
        let alpha = 1.0 / p.l_smooth();
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 5);
        let z = random_table(&mut rng, n, d, 2.0);
        let regime = if reshuffle { Regime::Reshuffle { seed } } else { Regime::ShuffleOnce { seed } };
        let plan = SamplingPlan::new(regime, n).unwrap();
        let order = epoch_order(&plan, 3, None).unwrap();
        let pi = order.as_permutation().unwrap();
        let s = MemoryState::new(z.clone(), alpha, theta).unwrap();
        let out = epoch_step(&p, &s, pi.as_slice()).unwrap();
        let want = apply_spi(&p, pi, &z, alpha, theta).unwrap();
        prop_assert!(out.z.max_abs_diff(&want) <= 1e-12);
        prop_assert!((&out.zbar - out.z.mean()).amax() == 0.0);
    }

    #[test]
    fn optimal_order_matches_enumeration(scores in proptest::collection::vec(0.0..10.0f64, 1..=7)) {
        let w = ImportanceVector::new(scores).unwrap();
        let fast = optimal_cyclic_order(&w).unwrap();
        let (best, value) = brute_force_best_order(&w).unwrap();
        let n = w.len() as f64;
        let eval = |pi: &[usize]| pi.iter().enumerate().map(|(k, &j)| (k + 1) as f64 / n * w.as_slice()[j]).sum::<f64>();
        prop_assert!((eval(fast.as_slice()) - value).abs() <= 1e-12 * (1.0 + value));
        prop_assert!((eval(best.as_slice()) - value).abs() <= 1e-12 * (1.0 + value));
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn epoch_residual_decreases_sublinearly(seed in any::<u64>(), n in 2usize..8, theta in 0.2..0.9f64) {
        let p = random_ls(seed, n, 3, 0.0, Regularizer::L1(0.05));
        let alpha = 2.0 / p.l_smooth();
        let xstar = solve_reference(&p, DEFAULT_TOL).unwrap();
        let zstar = zstar_table(&p, &xstar, alpha).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 6);
        let z0 = random_table(&mut rng, n, 3, 2.0);
        let pi = seeded_permutation(n, &mut rng);
        let init = pi_norm_sq(&z0.checked_sub(&zstar).unwrap(), &pi).unwrap();
        let mut s = MemoryState::new(z0, alpha, theta).unwrap();
        let mut prev = f64::INFINITY;
        for k in 0..60u32 {
            let next = epoch_step(&p, &s, pi.as_slice()).unwrap();
            let res = pi_norm_sq(&next.z.checked_sub(&s.z).unwrap(), &pi).unwrap();
            let bound = theta / (f64::from(k + 1) * (1.0 - theta)) * init;
            prop_assert!(res <= bound * (1.0 + 1e-8) + 1e-24, "k={k}: {res} > {bound}");
            prop_assert!(res <= prev * (1.0 + 1e-8) + 1e-24, "k={k}: {res} > {prev}");
            prev = res;
            s = next;
        }
    }
}
