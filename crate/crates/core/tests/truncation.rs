use raidrel_core::solver::Solver;
use raidrel_core::{solve, truncated_solve, ArrayConfig, Scheme, SolverSettings, StateVector, Truncation};

fn fifty_stripes(scheme: Scheme, c: f64) -> ArrayConfig {
    let parity = match scheme {
        Scheme::DiffRaid => vec![0.1, 0.1, 0.1, 0.7],
        Scheme::TraditionalRaid => ArrayConfig::raid5_parity(3),
    };
    let mut cfg = ArrayConfig::desk_scale(scheme, parity, c);
    cfg.stripes = 50;
    cfg
}

fn states(cfg: &ArrayConfig, truncation: Truncation, horizon: u64) -> Vec<StateVector> {
    let settings = SolverSettings::for_config(cfg).with_truncation(truncation);
    let mut out = Vec::new();
    Solver::new(cfg, settings)
        .unwrap()
        .run_with(horizon, 1, |s, _| out.push(s.clone()))
        .unwrap();
    out
}

/// Largest deviation over the kept states and the loss state.
fn deviation(truncated: &StateVector, full: &StateVector) -> f64 {
    let cap = truncated.top();
    let kept = (0..=cap)
        .map(|i| (truncated.probabilities[i] - full.probabilities[i]).abs())
        .fold(0.0, f64::max);
    kept.max((truncated.loss() - full.loss()).abs())
}

#[test]
fn truncation_error_is_bounded_by_overflow() {
    for scheme in [Scheme::DiffRaid, Scheme::TraditionalRaid] {
        let cfg = fifty_stripes(scheme, 4.296875e-5);
        let full = states(&cfg, Truncation::Full, 32_000);
        for cap in [2, 5, 10, 20] {
            let truncated = states(&cfg, Truncation::Fixed(cap), 32_000);
            for (t, f) in truncated.iter().zip(&full) {
                let dev = deviation(t, f);
                assert!(dev <= t.overflow() + 1e-15, "E={cap} age {}: {dev:e} > {:e}", t.system_age, t.overflow());
            }
        }
    }
}

#[test]
fn overflow_shrinks_with_larger_cap() {
    let cfg = fifty_stripes(Scheme::DiffRaid, 1.5625e-5);
    let runs: Vec<Vec<StateVector>> = [2, 5, 10, 20]
        .into_iter()
        .map(|cap| states(&cfg, Truncation::Fixed(cap), 16_000))
        .collect();
    for pair in runs.windows(2) {
        for (small, large) in pair[0].iter().zip(&pair[1]) {
            assert!(large.overflow() <= small.overflow() + 1e-18);
        }
    }
}

#[test]
fn cap_just_below_stripes_agrees_with_full_chain() {
    let cfg = fifty_stripes(Scheme::TraditionalRaid, 4.296875e-5);
    let settings = SolverSettings::for_config(&cfg);
    let full = solve(&cfg, settings, 32_000, 1).unwrap();
    let truncated = truncated_solve(&cfg, settings.with_truncation(Truncation::Fixed(49)), 32_000, 1).unwrap();
    for (t, f) in truncated.samples.iter().zip(&full.samples) {
        let overflow = t.bound - f.bound;
        assert!((t.reliability - f.reliability).abs() <= overflow.max(0.0) + 1e-15);
    }
}

#[test]
fn reported_bound_brackets_full_reliability() {
    let cfg = fifty_stripes(Scheme::DiffRaid, 4.296875e-5);
    let settings = SolverSettings::for_config(&cfg);
    let full = solve(&cfg, settings, 32_000, 1).unwrap();
    let truncated = truncated_solve(&cfg, settings.with_truncation(Truncation::Fixed(5)), 32_000, 1).unwrap();
    for (t, f) in truncated.samples.iter().zip(&full.samples) {
        let overflow = t.bound - f.bound;
        assert!(t.reliability <= f.reliability + 1e-15);
        assert!(f.reliability <= t.reliability + overflow + 1e-15);
    }
}
