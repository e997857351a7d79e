use proptest::prelude::*;
use raidrel_core::solver::uniformized_product;
use raidrel_core::{
    aging_profile, solve, truncated_normal_parity, uniformized_interval, ArrayConfig, GeneratorMatrix,
    Scheme, SolverSettings, StateVector,
};

fn chain() -> impl Strategy<Value = GeneratorMatrix> {
    (2usize..60, 0.0f64..0.05, 0.0f64..3.0, any::<bool>(), 0usize..60).prop_map(
        |(stripes, sigma, mu, truncate, cap)| {
            let cap = (truncate && stripes > 2).then(|| 1 + cap % (stripes - 1));
            GeneratorMatrix::new(stripes, sigma, mu, cap).unwrap()
        },
    )
}

proptest! {
    #[test]
    fn generator_rows_sum_to_zero(q in chain()) {
        for row in q.to_dense() {
            prop_assert!(row.iter().sum::<f64>().abs() <= 1e-12);
        }
    }

    #[test]
    fn uniformized_matrix_is_stochastic(q in chain(), slack in 1.0f64..3.0) {
        let lambda = q.max_exit_rate().max(1e-9) * slack;
        let dim = q.dimension();
        for i in 0..dim {
            let mut e = vec![0.0; dim];
            e[i] = 1.0;
            let mut row = vec![0.0; dim];
            uniformized_product(&q, lambda, &e, &mut row);
            prop_assert!(row.iter().all(|&x| x >= 0.0));
            prop_assert!((row.iter().sum::<f64>() - 1.0).abs() <= 1e-12);
        }
    }

    #[test]
    fn intervals_preserve_distributions(q in chain(), duration in 0.0f64..20.0, budget in 1e-12f64..1e-3) {
        let lambda = q.max_exit_rate();
        let mut state = StateVector::initial(&q);
        for _ in 0..3 {
            let (next, _) = uniformized_interval(&state, &q, lambda, duration, budget, None).unwrap();
            prop_assert!(next.probabilities.iter().all(|&p| p >= 0.0));
            prop_assert!((next.mass() + next.unassigned - 1.0).abs() <= 1e-9);
            prop_assert!(next.reliability() <= state.reliability() + 1e-15);
            state = next;
        }
    }

    #[test]
    fn even_parity_has_uniform_profile(n in 1usize..20) {
        let cfg = ArrayConfig::desk_scale(Scheme::TraditionalRaid, ArrayConfig::raid5_parity(n), 1e-5);
        let cfg = ArrayConfig { n, ..cfg };
        let profile = aging_profile(&cfg).unwrap();
        let drives = (n + 1) as f64;
        for (pos, &drive) in profile.order.iter().enumerate() {
            prop_assert!((profile.erase_probabilities[drive] - 1.0 / drives).abs() <= 1e-12);
            prop_assert!((profile.remaining_fractions[drive] - (drives - pos as f64) / drives).abs() <= 1e-12);
        }
    }

    #[test]
    fn truncated_normal_parity_is_a_distribution(n in 1usize..40, sigma in 0.05f64..50.0) {
        let p = truncated_normal_parity(n, sigma).unwrap();
        prop_assert_eq!(p.len(), n + 1);
        prop_assert!((p.iter().sum::<f64>() - 1.0).abs() <= 1e-12);
        prop_assert!(p.windows(2).all(|w| w[0] <= w[1]));
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn reliability_is_non_increasing(c in 0.0f64..6e-5, diff in any::<bool>(), stripes in 2u64..40) {
        let (scheme, parity) = if diff {
            (Scheme::DiffRaid, vec![0.1, 0.1, 0.1, 0.7])
        } else {
            (Scheme::TraditionalRaid, ArrayConfig::raid5_parity(3))
        };
        let mut cfg = ArrayConfig::desk_scale(scheme, parity, c);
        cfg.stripes = stripes;
        let curve = solve(&cfg, SolverSettings::for_config(&cfg), 40_000, 1).unwrap();
        for w in curve.samples.windows(2) {
            prop_assert!(w[1].reliability <= w[0].reliability + 1e-15);
        }
    }
}
