//! Event-driven Monte Carlo simulation of the stripe-error process.
//!
//! Times are measured in erase periods: period `k` covers `[k, k + 1)` and
//! lasts `T` units of real time. During period `k` every stripe collects a new
//! erroneous chunk at rate `Sigma(k)`, so the whole array sees errors at rate
//! `S Sigma(k)` regardless of its state. An error landing on a stripe that
//! already holds one loses data; otherwise the stripe becomes flagged and is
//! repaired after an exponential time with rate `mu`.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::Exp1;
use rayon::prelude::*;
use serde::Serialize;
use statrs::distribution::{ContinuousCDF, Normal};

use crate::error::{Error, Result};
use crate::model::{ArrayConfig, RateSchedule};

/// Confidence level of the reported intervals.
pub const CONFIDENCE: f64 = 0.99;

/// Identifies the random stream layout in run manifests.
pub const RNG_DESCRIPTION: &str = "ChaCha8Rng, seed_from_u64(seed), stream = run index";

/// Position of one simulated array.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SimState {
    /// Time in erase periods.
    pub time: f64,
    /// Stripes holding one erroneous chunk.
    pub flagged: u64,
}

impl SimState {
    pub fn period(&self) -> u64 {
        self.time as u64
    }

    /// Total event rate in real time; equals the diagonal magnitude of the
    /// generator row for this state.
    pub fn exit_rate(&self, schedule: &RateSchedule) -> f64 {
        let errors = schedule.stripes() as f64 * schedule.sigma(self.period());
        if self.flagged > 0 {
            errors + schedule.recovery_rate()
        } else {
            errors
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub enum RunOutcome {
    Survived,
    /// Data lost at the given time in erase periods.
    Lost { time: f64 },
}

impl RunOutcome {
    /// Whether the array still holds all data at system age `age`.
    pub fn alive_at(&self, age: u64) -> bool {
        match *self {
            RunOutcome::Survived => true,
            RunOutcome::Lost { time } => time >= age as f64,
        }
    }
}

/// How error arrivals are drawn.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum SimMethod {
    /// Invert the cumulative error hazard; needs the closed-form rate sums.
    Hazard,
    /// Competing exponentials, period by period.
    Stepwise,
}

/// Horizons up to this many periods get a tabulated hazard.
const TABLE_MAX_PERIODS: u64 = 1 << 20;

/// Cumulative error hazard `H(u) = S T int_0^u Sigma`, piecewise linear in
/// `u` with breakpoints at whole periods.
struct Hazard<'a> {
    schedule: &'a RateSchedule,
    horizon: u64,
    /// `H(k)` for `k = 0..=horizon`, when short enough to store.
    table: Option<Vec<f64>>,
    end: f64,
}

impl<'a> Hazard<'a> {
    fn new(schedule: &'a RateSchedule, horizon: u64) -> Option<Self> {
        let end = schedule.cumulative_hazard(horizon)?;
        let scale = schedule.stripes() as f64 * schedule.erase_interval();
        let table = (horizon <= TABLE_MAX_PERIODS).then(|| {
            let mut acc = 0.0;
            let mut table = Vec::with_capacity(horizon as usize + 1);
            table.push(0.0);
            for k in 0..horizon {
                acc += scale * schedule.sigma(k);
                table.push(acc);
            }
            table
        });
        let end = table.as_ref().map_or(end, |t| t[horizon as usize]);
        Some(Self {
            schedule,
            horizon,
            table,
            end,
        })
    }

    fn at_period(&self, k: u64) -> f64 {
        match &self.table {
            Some(t) => t[k as usize],
            None => self.schedule.cumulative_hazard(k).expect("closed form"),
        }
    }

    fn at(&self, u: f64) -> f64 {
        let k = (u as u64).min(self.horizon);
        if k == self.horizon {
            return self.end;
        }
        let base = self.at_period(k);
        base + (u - k as f64) * (self.at_period(k + 1) - base)
    }

    /// Earliest time at or after `from` where the hazard reaches `target`, if
    /// before the horizon.
    fn invert(&self, from: f64, target: f64) -> Option<f64> {
        if target >= self.end {
            return None;
        }
        // Smallest k with H(k + 1) > target.
        let first = from as u64;
        let lo = match &self.table {
            Some(t) => {
                first + t[first as usize + 1..].partition_point(|&h| h <= target) as u64
            }
            None => {
                let (mut lo, mut hi) = (first, self.horizon - 1);
                while lo < hi {
                    let mid = lo + (hi - lo) / 2;
                    if self.at_period(mid + 1) > target {
                        hi = mid;
                    } else {
                        lo = mid + 1;
                    }
                }
                lo
            }
        };
        let base = self.at_period(lo);
        let rate = self.at_period(lo + 1) - base;
        let frac = if rate > 0.0 {
            ((target - base) / rate).clamp(0.0, 1.0)
        } else {
            0.0
        };
        Some((lo as f64 + frac).max(from))
    }
}

fn exp1<R: Rng>(rng: &mut R) -> f64 {
    rng.sample(Exp1)
}

/// Error hitting an array with `flagged` flagged stripes: `true` if it loses
/// data.
fn error_loses<R: Rng>(rng: &mut R, flagged: u64, stripes: u64) -> bool {
    flagged > 0 && rng.random_range(0..stripes) < flagged
}

fn simulate_hazard<R: Rng>(hazard: &Hazard<'_>, rng: &mut R) -> RunOutcome {
    let schedule = hazard.schedule;
    let stripes = schedule.stripes();
    // Repair rate per erase period.
    let repair = schedule.recovery_rate() * schedule.erase_interval();
    let horizon = hazard.horizon as f64;
    let mut state = SimState { time: 0.0, flagged: 0 };
    loop {
        let error_at = hazard
            .invert(state.time, hazard.at(state.time) + exp1(rng))
            .unwrap_or(f64::INFINITY);
        let repair_at = if state.flagged > 0 && repair > 0.0 {
            state.time + exp1(rng) / repair
        } else {
            f64::INFINITY
        };
        if error_at.min(repair_at) >= horizon {
            return RunOutcome::Survived;
        }
        if error_at <= repair_at {
            state.time = error_at;
            if error_loses(rng, state.flagged, stripes) {
                return RunOutcome::Lost { time: state.time };
            }
            state.flagged += 1;
        } else {
            state.time = repair_at;
            state.flagged -= 1;
        }
    }
}

fn simulate_stepwise<R: Rng>(schedule: &RateSchedule, horizon: u64, rng: &mut R) -> RunOutcome {
    let stripes = schedule.stripes();
    let period = schedule.erase_interval();
    let mut state = SimState { time: 0.0, flagged: 0 };
    for k in 0..horizon {
        let errors = stripes as f64 * schedule.sigma(k);
        let mut elapsed = 0.0;
        loop {
            let repair = if state.flagged > 0 { schedule.recovery_rate() } else { 0.0 };
            let total = errors + repair;
            if total <= 0.0 {
                break;
            }
            elapsed += exp1(rng) / total;
            if elapsed >= period {
                break;
            }
            state.time = k as f64 + elapsed / period;
            if rng.random::<f64>() * total < errors {
                if error_loses(rng, state.flagged, stripes) {
                    return RunOutcome::Lost { time: state.time };
                }
                state.flagged += 1;
            } else {
                state.flagged -= 1;
            }
        }
    }
    RunOutcome::Survived
}

/// One trajectory up to `horizon` erase periods.
///
/// Uses hazard inversion when the rate sums have a closed form and the
/// period-by-period method otherwise.
pub fn simulate_run<R: Rng>(schedule: &RateSchedule, horizon: u64, rng: &mut R) -> RunOutcome {
    let method = if schedule.has_closed_form() {
        SimMethod::Hazard
    } else {
        SimMethod::Stepwise
    };
    simulate_run_with(schedule, horizon, method, rng)
}

pub fn simulate_run_with<R: Rng>(
    schedule: &RateSchedule,
    horizon: u64,
    method: SimMethod,
    rng: &mut R,
) -> RunOutcome {
    Simulator::new(schedule, horizon, method).run(rng)
}

/// Shared per-schedule state for many runs to the same horizon.
struct Simulator<'a> {
    schedule: &'a RateSchedule,
    horizon: u64,
    hazard: Option<Hazard<'a>>,
}

impl<'a> Simulator<'a> {
    fn new(schedule: &'a RateSchedule, horizon: u64, method: SimMethod) -> Self {
        let hazard = match method {
            SimMethod::Hazard if horizon > 0 => Hazard::new(schedule, horizon),
            _ => None,
        };
        Self {
            schedule,
            horizon,
            hazard,
        }
    }

    fn run<R: Rng>(&self, rng: &mut R) -> RunOutcome {
        if self.horizon == 0 {
            return RunOutcome::Survived;
        }
        match &self.hazard {
            Some(hazard) => simulate_hazard(hazard, rng),
            None => simulate_stepwise(self.schedule, self.horizon, rng),
        }
    }
}

/// Reliability estimate at one system age.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct McEstimate {
    pub system_age: u64,
    pub survivors: u64,
    pub reliability: f64,
    pub ci_low: f64,
    pub ci_high: f64,
}

impl McEstimate {
    pub fn contains(&self, value: f64) -> bool {
        self.ci_low <= value && value <= self.ci_high
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SimResult {
    pub runs: u64,
    pub seed: u64,
    pub rng: &'static str,
    pub method: SimMethod,
    pub confidence: f64,
    pub estimates: Vec<McEstimate>,
}

/// Wilson score interval for `successes` out of `trials`.
pub fn wilson_interval(successes: u64, trials: u64, confidence: f64) -> (f64, f64) {
    assert!(trials > 0 && successes <= trials);
    let z = Normal::standard().inverse_cdf(0.5 + confidence / 2.0);
    let n = trials as f64;
    let p = successes as f64 / n;
    let z2 = z * z;
    let centre = (p + z2 / (2.0 * n)) / (1.0 + z2 / n);
    let half = z / (1.0 + z2 / n) * (p * (1.0 - p) / n + z2 / (4.0 * n * n)).sqrt();
    ((centre - half).max(0.0), (centre + half).min(1.0))
}

/// Monte Carlo reliability at each of `ages` from `runs` independent
/// trajectories. Run `i` uses stream `i` of a generator seeded with `seed`,
/// so results do not depend on the thread count.
pub fn estimate_reliability(cfg: &ArrayConfig, ages: &[u64], runs: u64, seed: u64) -> Result<SimResult> {
    let schedule = RateSchedule::new(cfg)?;
    let method = if schedule.has_closed_form() {
        SimMethod::Hazard
    } else {
        SimMethod::Stepwise
    };
    estimate_with(&schedule, ages, runs, seed, method)
}

pub fn estimate_with(
    schedule: &RateSchedule,
    ages: &[u64],
    runs: u64,
    seed: u64,
    method: SimMethod,
) -> Result<SimResult> {
    if runs == 0 {
        return Err(Error::InvalidArgument("at least one run is needed".into()));
    }
    let horizon = ages.iter().copied().max().unwrap_or(0);
    let simulator = Simulator::new(schedule, horizon, method);
    let outcomes: Vec<RunOutcome> = (0..runs)
        .into_par_iter()
        .map(|i| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(i);
            simulator.run(&mut rng)
        })
        .collect();
    let estimates = ages
        .iter()
        .map(|&age| {
            let survivors = outcomes.iter().filter(|o| o.alive_at(age)).count() as u64;
            let (ci_low, ci_high) = wilson_interval(survivors, runs, CONFIDENCE);
            McEstimate {
                system_age: age,
                survivors,
                reliability: survivors as f64 / runs as f64,
                ci_low,
                ci_high,
            }
        })
        .collect();
    Ok(SimResult {
        runs,
        seed,
        rng: RNG_DESCRIPTION,
        method,
        confidence: CONFIDENCE,
        estimates,
    })
}
