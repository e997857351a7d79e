//! Transient analysis of the non-homogeneous stripe-error chain.
//!
//! Consecutive erase periods are grouped into intervals of `step_size`
//! periods. Each interval is replaced by a homogeneous chain whose generator
//! is the average of the per-period generators, and that chain is solved by
//! uniformization with a truncated Poisson series. The dropped Poisson mass
//! of every interval is accumulated into the reported error bound.

mod generator;
mod kernel;
mod poisson;

use std::time::Instant;

use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::model::{ArrayConfig, RateSchedule};

pub use generator::{average_generator, build_generator, GeneratorMatrix};
pub use kernel::{uniformized_interval, uniformized_product, IntervalReport, StateVector};
pub use poisson::PoissonWeights;

/// Initial state cap for adaptive truncation.
pub const ADAPTIVE_START_CAP: usize = 8;

/// Which chain the solver runs on.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub enum Truncation {
    /// All `S + 2` states.
    Full,
    /// States above the cap collapsed into one absorbing overflow state.
    Fixed(usize),
    /// Start at a cap of 8 and double it whenever the overflow mass grows
    /// faster than `threshold / 2` spread evenly over the horizon, or exceeds
    /// `threshold / 2` outright. The interval is then recomputed.
    Adaptive { threshold: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SolverSettings {
    /// Erase periods combined into one homogeneous interval.
    pub step_size: u64,
    /// Total Poisson truncation error allowed over the horizon.
    pub max_error: f64,
    pub truncation: Truncation,
    /// Hard limit on Poisson terms per interval; `None` means `10 x + 100`
    /// for Poisson mean `x`.
    pub term_ceiling: Option<usize>,
}

impl SolverSettings {
    /// Step size `B*M/20`, error `1e-3`, full chain.
    pub fn for_config(cfg: &ArrayConfig) -> Self {
        Self {
            step_size: (cfg.blocks_per_ssd * cfg.erasure_limit / 20).max(1),
            max_error: 1e-3,
            truncation: Truncation::Full,
            term_ceiling: None,
        }
    }

    pub fn with_step_size(mut self, step_size: u64) -> Self {
        self.step_size = step_size;
        self
    }

    pub fn with_max_error(mut self, max_error: f64) -> Self {
        self.max_error = max_error;
        self
    }

    pub fn with_truncation(mut self, truncation: Truncation) -> Self {
        self.truncation = truncation;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.step_size < 1 {
            return Err(Error::InvalidSettings("step size must be at least 1".into()));
        }
        if !(self.max_error > 0.0 && self.max_error < 1.0) {
            return Err(Error::InvalidSettings(format!(
                "max error must lie in (0, 1), got {}",
                self.max_error
            )));
        }
        match self.truncation {
            Truncation::Fixed(0) => {
                Err(Error::InvalidSettings("state cap must be at least 1".into()))
            }
            Truncation::Adaptive { threshold } if !(threshold > 0.0 && threshold < 1.0) => {
                Err(Error::InvalidSettings(format!(
                    "adaptive threshold must lie in (0, 1), got {threshold}"
                )))
            }
            _ => Ok(()),
        }
    }
}

/// One point of a reliability curve.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CurveSample {
    pub system_age: u64,
    pub reliability: f64,
    /// Error bound on `reliability`.
    pub bound: f64,
}

impl CurveSample {
    pub fn lower(&self) -> f64 {
        (self.reliability - self.bound).max(0.0)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CurveMeta {
    pub settings: SolverSettings,
    pub config_digest: String,
    pub horizon: u64,
    pub intervals: usize,
    pub poisson_terms: u64,
    /// State cap in use at the end of the run; `None` for the full chain.
    pub final_state_cap: Option<usize>,
    /// False when the shape is not 2: the averaged generator is then sampled
    /// and the bound only covers Poisson truncation.
    pub exact_mean_rate: bool,
    pub bound_exceeds_max_error: bool,
    pub wall_seconds: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ReliabilityCurve {
    pub samples: Vec<CurveSample>,
    pub meta: CurveMeta,
}

impl ReliabilityCurve {
    /// Sample at exactly `age`, if one was emitted.
    pub fn at(&self, age: u64) -> Option<&CurveSample> {
        self.samples
            .binary_search_by_key(&age, |s| s.system_age)
            .ok()
            .map(|i| &self.samples[i])
    }

    pub fn final_bound(&self) -> f64 {
        self.samples.last().map_or(0.0, |s| s.bound)
    }
}

/// Short hex digest of a configuration, for run manifests.
pub fn config_digest(cfg: &ArrayConfig) -> String {
    let json = serde_json::to_vec(cfg).expect("configuration serializes");
    Sha256::digest(&json)
        .iter()
        .take(8)
        .map(|b| format!("{b:02x}"))
        .collect()
}

/// Transient solver for one array configuration.
#[derive(Debug, Clone)]
pub struct Solver {
    cfg: ArrayConfig,
    schedule: RateSchedule,
    settings: SolverSettings,
    probes: Vec<u64>,
}

impl Solver {
    pub fn new(cfg: &ArrayConfig, settings: SolverSettings) -> Result<Self> {
        settings.validate()?;
        let schedule = RateSchedule::new(cfg)?;
        if let Truncation::Fixed(cap) = settings.truncation {
            if cap as u64 >= cfg.stripes {
                return Err(Error::InvalidSettings(format!(
                    "state cap {cap} must be below the stripe count {}",
                    cfg.stripes
                )));
            }
        }
        Ok(Self {
            cfg: cfg.clone(),
            schedule,
            settings,
            probes: Vec::new(),
        })
    }

    /// Extra ages at which a sample is emitted; intervals are split there.
    pub fn with_probes(mut self, ages: impl IntoIterator<Item = u64>) -> Self {
        self.probes.extend(ages);
        self.probes.sort_unstable();
        self.probes.dedup();
        self
    }

    pub fn schedule(&self) -> &RateSchedule {
        &self.schedule
    }

    pub fn settings(&self) -> &SolverSettings {
        &self.settings
    }

    fn stripes(&self) -> usize {
        self.cfg.stripes as usize
    }

    fn initial_cap(&self) -> Option<usize> {
        match self.settings.truncation {
            Truncation::Full => None,
            Truncation::Fixed(cap) => Some(cap),
            Truncation::Adaptive { .. } => {
                (ADAPTIVE_START_CAP < self.stripes()).then_some(ADAPTIVE_START_CAP)
            }
        }
    }

    fn wider_cap(&self, cap: Option<usize>) -> Option<Option<usize>> {
        let cap = cap?;
        let next = cap * 2;
        Some((next < self.stripes()).then_some(next))
    }

    /// Reliability curve up to `horizon`, sampled at age 0, every
    /// `sample_stride` full intervals, every probe age and the horizon.
    pub fn run(&self, horizon: u64, sample_stride: u64) -> Result<ReliabilityCurve> {
        self.run_with(horizon, sample_stride, |_, _| {})
    }

    /// Like [`Solver::run`], calling `observer` after every interval.
    pub fn run_with<F>(&self, horizon: u64, sample_stride: u64, mut observer: F) -> Result<ReliabilityCurve>
    where
        F: FnMut(&StateVector, &IntervalReport),
    {
        if sample_stride < 1 {
            return Err(Error::InvalidSettings("sample stride must be at least 1".into()));
        }
        let started = Instant::now();
        let step = self.settings.step_size;
        let stripes = self.stripes();
        let mut cap = self.initial_cap();
        let mut state = StateVector::initial(&GeneratorMatrix::new(
            stripes,
            0.0,
            self.cfg.recovery_rate,
            cap,
        )?);
        let mut samples = vec![CurveSample {
            system_age: 0,
            reliability: 1.0,
            bound: 0.0,
        }];
        let mut intervals = 0;
        let mut poisson_terms = 0u64;
        let mut probes = self.probes.iter().copied().filter(|&p| p > 0 && p < horizon).peekable();

        let mut start = 0u64;
        while start < horizon {
            let regular = (start / step + 1) * step;
            while probes.peek().is_some_and(|&p| p <= start) {
                probes.next();
            }
            let probe = probes.peek().copied().unwrap_or(u64::MAX);
            let end = regular.min(probe).min(horizon);

            let mean_sigma = self.schedule.mean_sigma(start, end);
            // The max can round below the closed-form mean.
            let lambda = self
                .schedule
                .exit_rate_bound(start, end)
                .max(stripes as f64 * mean_sigma + self.cfg.recovery_rate);
            let duration = (end - start) as f64 * self.cfg.erase_interval;
            let budget = (end - start) as f64 * self.settings.max_error / horizon as f64;

            let (next, weights) = loop {
                let chain = GeneratorMatrix::new(stripes, mean_sigma, self.cfg.recovery_rate, cap)?;
                let (next, weights) = uniformized_interval(
                    &state,
                    &chain,
                    lambda,
                    duration,
                    budget,
                    self.settings.term_ceiling,
                )?;
                poisson_terms += weights.weights().len() as u64;
                if let Truncation::Adaptive { threshold } = self.settings.truncation {
                    let half = threshold / 2.0;
                    let gained = next.overflow() - state.overflow();
                    let allowance = half * (end - start) as f64 / horizon as f64;
                    if next.overflow() > half || gained > allowance {
                        if let Some(wider) = self.wider_cap(cap) {
                            log::debug!("age {start}: widening state cap {cap:?} -> {wider:?}");
                            cap = wider;
                            state = state.widen(cap, stripes);
                            continue;
                        }
                    }
                }
                break (next, weights);
            };
            state = next;
            state.system_age = end;
            intervals += 1;

            let report = IntervalReport {
                start_age: start,
                end_age: end,
                mean_sigma,
                uniformization_rate: lambda,
                truncation_point: weights.truncation_point(),
                tail: weights.tail(),
            };
            observer(&state, &report);

            let on_stride = end.is_multiple_of(step) && (end / step).is_multiple_of(sample_stride);
            if end == horizon || end == probe || on_stride {
                samples.push(CurveSample {
                    system_age: end,
                    reliability: state.reliability().clamp(0.0, 1.0),
                    bound: state.reported_bound(),
                });
            }
            start = end;
        }

        let final_bound = samples.last().map_or(0.0, |s| s.bound);
        let bound_exceeds_max_error = state.accumulated_bound > self.settings.max_error;
        if bound_exceeds_max_error {
            log::warn!(
                "accumulated bound {:.3e} exceeds the requested maximum error {:.3e}",
                state.accumulated_bound,
                self.settings.max_error
            );
        }
        log::debug!("solved to age {horizon} in {intervals} intervals, bound {final_bound:.3e}");
        Ok(ReliabilityCurve {
            samples,
            meta: CurveMeta {
                settings: self.settings,
                config_digest: config_digest(&self.cfg),
                horizon,
                intervals,
                poisson_terms,
                final_state_cap: cap,
                exact_mean_rate: self.schedule.has_closed_form(),
                bound_exceeds_max_error,
                wall_seconds: started.elapsed().as_secs_f64(),
            },
        })
    }
}

/// Reliability curve of `cfg` up to `horizon` system age.
pub fn solve(
    cfg: &ArrayConfig,
    settings: SolverSettings,
    horizon: u64,
    sample_stride: u64,
) -> Result<ReliabilityCurve> {
    Solver::new(cfg, settings)?.run(horizon, sample_stride)
}

/// [`solve`] on the state-truncated chain. The settings must select a fixed
/// cap below the stripe count or adaptive truncation.
pub fn truncated_solve(
    cfg: &ArrayConfig,
    settings: SolverSettings,
    horizon: u64,
    sample_stride: u64,
) -> Result<ReliabilityCurve> {
    if settings.truncation == Truncation::Full {
        return Err(Error::InvalidSettings(
            "truncated solve needs a state cap or adaptive truncation".into(),
        ));
    }
    solve(cfg, settings, horizon, sample_stride)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::Scheme;

    fn small(scheme: Scheme, c: f64) -> ArrayConfig {
        let parity = match scheme {
            Scheme::DiffRaid => vec![0.1, 0.1, 0.1, 0.7],
            Scheme::TraditionalRaid => ArrayConfig::raid5_parity(3),
        };
        let mut cfg = ArrayConfig::desk_scale(scheme, parity, c);
        cfg.stripes = 10;
        cfg
    }

    #[test]
    fn no_errors_means_full_reliability() {
        let cfg = small(Scheme::DiffRaid, 0.0);
        let curve = solve(&cfg, SolverSettings::for_config(&cfg), 32_000, 1).unwrap();
        // Only the dropped Poisson tails separate the result from 1.
        for s in &curve.samples {
            assert!(s.reliability <= 1.0 && s.reliability + s.bound >= 1.0 - 1e-12, "{s:?}");
        }
    }

    #[test]
    fn horizon_zero_gives_single_sample() {
        let cfg = small(Scheme::DiffRaid, 1e-5);
        let curve = solve(&cfg, SolverSettings::for_config(&cfg), 0, 1).unwrap();
        assert_eq!(curve.samples.len(), 1);
        assert_eq!(curve.samples[0].reliability, 1.0);
    }

    #[test]
    fn samples_follow_stride_probes_and_horizon() {
        let cfg = small(Scheme::TraditionalRaid, 1e-5);
        let settings = SolverSettings::for_config(&cfg); // step 400
        let curve = Solver::new(&cfg, settings)
            .unwrap()
            .with_probes([1_000, 50_000])
            .run(4_100, 5)
            .unwrap();
        let ages: Vec<u64> = curve.samples.iter().map(|s| s.system_age).collect();
        assert_eq!(ages, vec![0, 1_000, 2_000, 4_000, 4_100]);
        assert!(curve.at(1_000).is_some());
        assert!(curve.at(1_200).is_none());
    }

    #[test]
    fn reliability_is_non_increasing_and_bounded() {
        for scheme in [Scheme::DiffRaid, Scheme::TraditionalRaid] {
            let cfg = small(scheme, 4e-5);
            let curve = solve(&cfg, SolverSettings::for_config(&cfg), 64_000, 1).unwrap();
            for w in curve.samples.windows(2) {
                assert!(w[1].reliability <= w[0].reliability + 1e-15);
                assert!(w[1].bound >= w[0].bound);
            }
            assert!(curve.final_bound() <= 1e-3 * (1.0 + 1e-9));
            assert!(!curve.meta.bound_exceeds_max_error);
        }
    }

    #[test]
    fn states_remain_distributions() {
        let cfg = small(Scheme::DiffRaid, 4e-5);
        let mut checked = 0;
        Solver::new(&cfg, SolverSettings::for_config(&cfg))
            .unwrap()
            .run_with(32_000, 1, |state, _| {
                assert!(state.probabilities.iter().all(|&p| (0.0..=1.0).contains(&p)));
                assert!((state.mass() + state.unassigned - 1.0).abs() < 1e-9);
                assert!(state.unassigned <= state.accumulated_bound + 1e-15);
                checked += 1;
            })
            .unwrap();
        assert_eq!(checked, 80);
    }

    #[test]
    fn settings_validation() {
        let cfg = small(Scheme::DiffRaid, 1e-5);
        let base = SolverSettings::for_config(&cfg);
        assert_eq!(base.step_size, 400);
        assert!(base.with_step_size(0).validate().is_err());
        assert!(base.with_max_error(0.0).validate().is_err());
        assert!(base.with_max_error(1.0).validate().is_err());
        assert!(base.with_truncation(Truncation::Fixed(0)).validate().is_err());
        assert!(Solver::new(&cfg, base.with_truncation(Truncation::Fixed(10))).is_err());
        assert!(truncated_solve(&cfg, base, 100, 1).is_err());
        assert!(solve(&cfg, base, 100, 0).is_err());
    }

    #[test]
    fn term_ceiling_surfaces_as_error() {
        let cfg = small(Scheme::DiffRaid, 1e-5);
        let mut settings = SolverSettings::for_config(&cfg);
        settings.term_ceiling = Some(3);
        let err = solve(&cfg, settings, 4_000, 1).unwrap_err();
        assert!(matches!(err, Error::TermCeiling { .. }));
    }

    #[test]
    fn other_shapes_are_flagged() {
        let mut cfg = small(Scheme::DiffRaid, 1e-7);
        cfg.shape = 2.5;
        let curve = solve(&cfg, SolverSettings::for_config(&cfg), 8_000, 1).unwrap();
        assert!(!curve.meta.exact_mean_rate);
        assert!(curve.samples.last().unwrap().reliability < 1.0);
    }

    #[test]
    fn adaptive_cap_grows_under_pressure() {
        let mut cfg = small(Scheme::TraditionalRaid, 4e-4);
        cfg.stripes = 200;
        let settings = SolverSettings::for_config(&cfg)
            .with_truncation(Truncation::Adaptive { threshold: 1e-8 });
        let curve = truncated_solve(&cfg, settings, 32_000, 1).unwrap();
        let cap = curve.meta.final_state_cap;
        assert!(cap.is_none_or(|c| c > ADAPTIVE_START_CAP), "{cap:?}");
        let full = solve(&cfg, SolverSettings::for_config(&cfg), 32_000, 1).unwrap();
        for (a, b) in curve.samples.iter().zip(&full.samples) {
            assert!((a.reliability - b.reliability).abs() <= 1e-8);
        }
    }

    #[test]
    fn digest_is_stable() {
        let cfg = small(Scheme::DiffRaid, 1e-5);
        assert_eq!(config_digest(&cfg), config_digest(&cfg.clone()));
        assert_eq!(config_digest(&cfg).len(), 16);
        assert_ne!(config_digest(&cfg), config_digest(&small(Scheme::TraditionalRaid, 1e-5)));
    }
}
