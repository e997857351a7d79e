//! Array configuration, drive aging and the per-chunk error-rate law.

mod clock;
mod parity;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use clock::DriveClock;

pub use parity::truncated_normal_parity;

/// Tolerance on the parity fractions summing to one.
pub const PARITY_SUM_TOLERANCE: f64 = 1e-12;

/// Parity placement policy of the array.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Scheme {
    /// Parity stays where it was placed; a worn-out drive is swapped for a
    /// new one without moving parity (RAID-4/RAID-5 style).
    TraditionalRaid,
    /// Parity is redistributed at every replacement so the oldest drive
    /// always holds the largest share and drive ages stay staggered.
    DiffRaid,
}

/// Static description of an SSD RAID array with `n + 1` drives.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArrayConfig {
    /// Number of data drives; the array has `n + 1` SSDs.
    pub n: usize,
    pub blocks_per_ssd: u64,
    /// Stripes in the array, one chunk per drive each.
    pub stripes: u64,
    /// Erase cycles a block sustains.
    pub erasure_limit: u64,
    /// Fraction of parity chunks held by each drive.
    pub parity_fractions: Vec<f64>,
    /// Scale `c` of the Weibull error-rate law.
    pub rate_constant: f64,
    /// Weibull shape `alpha`, must exceed 1.
    pub shape: f64,
    /// Stripe reconstruction rate per second.
    pub recovery_rate: f64,
    /// Mean seconds between consecutive erasures on the array.
    pub erase_interval: f64,
    pub scheme: Scheme,
}

impl ArrayConfig {
    /// Even parity placement over `n + 1` drives.
    pub fn raid5_parity(n: usize) -> Vec<f64> {
        vec![1.0 / (n + 1) as f64; n + 1]
    }

    /// Small array used for quick validation runs: 3+1 drives, 80 blocks and
    /// stripes, erasure limit 100, unit recovery rate.
    pub fn desk_scale(scheme: Scheme, parity_fractions: Vec<f64>, rate_constant: f64) -> Self {
        Self {
            n: 3,
            blocks_per_ssd: 80,
            stripes: 80,
            erasure_limit: 100,
            parity_fractions,
            rate_constant,
            shape: 2.0,
            recovery_rate: 1.0,
            erase_interval: 1e-2,
            scheme,
        }
    }

    /// 32GB drives with 131072 blocks, one stripe per block, 10K erase
    /// cycles and a recovery rate of 1e-3 per second.
    pub fn full_scale(
        n: usize,
        scheme: Scheme,
        parity_fractions: Vec<f64>,
        rate_constant: f64,
    ) -> Self {
        Self {
            n,
            blocks_per_ssd: 131_072,
            stripes: 131_072,
            erasure_limit: 10_000,
            parity_fractions,
            rate_constant,
            shape: 2.0,
            recovery_rate: 1e-3,
            erase_interval: 1e-2,
            scheme,
        }
    }

    pub fn drives(&self) -> usize {
        self.n + 1
    }

    pub fn validate(&self) -> Result<()> {
        let fail = |msg: String| Err(Error::InvalidConfig(msg));
        if self.n < 1 {
            return fail("n must be at least 1".into());
        }
        if self.blocks_per_ssd < 1 || self.stripes < 1 || self.erasure_limit < 1 {
            return fail("blocks, stripes and erasure limit must be at least 1".into());
        }
        if self.parity_fractions.len() != self.n + 1 {
            return fail(format!(
                "expected {} parity fractions, got {}",
                self.n + 1,
                self.parity_fractions.len()
            ));
        }
        if let Some(p) = self
            .parity_fractions
            .iter()
            .find(|p| !(0.0..=1.0).contains(*p))
        {
            return fail(format!("parity fraction {p} outside [0, 1]"));
        }
        let sum: f64 = self.parity_fractions.iter().sum();
        if (sum - 1.0).abs() > PARITY_SUM_TOLERANCE {
            return fail(format!("parity fractions sum to {sum}, expected 1"));
        }
        if !(self.rate_constant >= 0.0 && self.rate_constant.is_finite()) {
            return fail(format!(
                "rate constant must be finite and >= 0, got {}",
                self.rate_constant
            ));
        }
        if !(self.shape > 1.0 && self.shape.is_finite()) {
            return fail(format!("shape must exceed 1, got {}", self.shape));
        }
        if !(self.recovery_rate >= 0.0 && self.recovery_rate.is_finite()) {
            return fail(format!(
                "recovery rate must be finite and >= 0, got {}",
                self.recovery_rate
            ));
        }
        if !(self.erase_interval > 0.0 && self.erase_interval.is_finite()) {
            return fail(format!(
                "erase interval must be positive, got {}",
                self.erase_interval
            ));
        }
        Ok(())
    }

    /// System age at which a drive with all-even parity wears out, `B*M*(N+1)`.
    pub fn even_lifetime(&self) -> u64 {
        self.blocks_per_ssd * self.erasure_limit * self.drives() as u64
    }
}

/// Relative aging speed of every drive and the convergent age distribution.
///
/// Vectors are indexed by the drive order of the configuration. `order`
/// lists drives by descending remaining fraction, i.e. from the youngest
/// position to the one that wears out first.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AgingProfile {
    pub aging_rates: Vec<f64>,
    pub erase_probabilities: Vec<f64>,
    pub remaining_fractions: Vec<f64>,
    pub order: Vec<usize>,
}

/// Aging rates `p_i N + (1 - p_i)`, erase probabilities and the convergent
/// remaining-erasure fractions of a configuration.
pub fn aging_profile(cfg: &ArrayConfig) -> Result<AgingProfile> {
    cfg.validate()?;
    let n = cfg.n as f64;
    let aging_rates: Vec<f64> = cfg
        .parity_fractions
        .iter()
        .map(|p| p * n + (1.0 - p))
        .collect();
    let total: f64 = aging_rates.iter().sum();
    let erase_probabilities = aging_rates.iter().map(|r| r / total).collect();

    // Slowest-aging drive first; it was replaced most recently.
    let mut order: Vec<usize> = (0..aging_rates.len()).collect();
    order.sort_by(|&a, &b| aging_rates[a].total_cmp(&aging_rates[b]));
    let mut remaining_fractions = vec![0.0; aging_rates.len()];
    let mut suffix = 0.0;
    for &drive in order.iter().rev() {
        suffix += aging_rates[drive];
        remaining_fractions[drive] = suffix / total;
    }
    remaining_fractions[order[0]] = 1.0;

    Ok(AgingProfile {
        aging_rates,
        erase_probabilities,
        remaining_fractions,
        order,
    })
}

/// Per-drive ages at a given system age.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AgeState {
    pub system_age: u64,
    pub drive_ages: Vec<f64>,
}

fn drive_clocks(cfg: &ArrayConfig, profile: &AgingProfile) -> Vec<DriveClock> {
    let b = cfg.blocks_per_ssd as f64;
    let m = cfg.erasure_limit as f64;
    profile
        .erase_probabilities
        .iter()
        .zip(&profile.remaining_fractions)
        .map(|(&q, &a)| match cfg.scheme {
            // (k q / B) mod (M q) + M (1 - A): every position wraps each B*M erasures.
            Scheme::DiffRaid => DriveClock::new(b * m, m * q, m * (1.0 - a)),
            // (k q / B) mod M
            Scheme::TraditionalRaid => DriveClock::new(b * m / q, m, 0.0),
        })
        .collect()
}

/// Age of every drive once the array has performed `system_age` erasures.
pub fn drive_ages(cfg: &ArrayConfig, profile: &AgingProfile, system_age: u64) -> AgeState {
    let m = cfg.erasure_limit as f64;
    AgeState {
        system_age,
        drive_ages: drive_clocks(cfg, profile)
            .iter()
            .map(|c| c.age(system_age).clamp(0.0, m))
            .collect(),
    }
}

/// Error rate of one chunk on `drive`, `c * alpha * k_i^(alpha - 1)`.
pub fn chunk_error_rate(cfg: &ArrayConfig, age: &AgeState, drive: usize) -> f64 {
    weibull_rate(cfg.rate_constant, cfg.shape, age.drive_ages[drive])
}

#[inline]
fn weibull_rate(c: f64, shape: f64, age: f64) -> f64 {
    if shape == 2.0 {
        2.0 * c * age
    } else {
        c * shape * age.powf(shape - 1.0)
    }
}

/// Points sampled per interval when the aggregate rate has no closed-form
/// mean (shape other than 2).
pub const RATE_SAMPLES: u64 = 4096;

/// Aggregate per-stripe error rate `Sigma(k) = sum_i lambda_i(k)` of an array
/// as a function of system age, with interval sums and maxima.
#[derive(Debug, Clone)]
pub struct RateSchedule {
    clocks: Vec<DriveClock>,
    rate_constant: f64,
    shape: f64,
    erasure_limit: f64,
    stripes: u64,
    recovery_rate: f64,
    erase_interval: f64,
}

impl RateSchedule {
    pub fn new(cfg: &ArrayConfig) -> Result<Self> {
        let profile = aging_profile(cfg)?;
        Ok(Self {
            clocks: drive_clocks(cfg, &profile),
            rate_constant: cfg.rate_constant,
            shape: cfg.shape,
            erasure_limit: cfg.erasure_limit as f64,
            stripes: cfg.stripes,
            recovery_rate: cfg.recovery_rate,
            erase_interval: cfg.erase_interval,
        })
    }

    pub fn stripes(&self) -> u64 {
        self.stripes
    }

    pub fn recovery_rate(&self) -> f64 {
        self.recovery_rate
    }

    pub fn erase_interval(&self) -> f64 {
        self.erase_interval
    }

    /// Whether interval means are exact (shape 2, rates affine in age).
    pub fn has_closed_form(&self) -> bool {
        self.shape == 2.0
    }

    /// `Sigma` during the period following the `k`-th erasure.
    pub fn sigma(&self, k: u64) -> f64 {
        self.clocks
            .iter()
            .map(|c| {
                let age = c.age(k).clamp(0.0, self.erasure_limit);
                weibull_rate(self.rate_constant, self.shape, age)
            })
            .sum()
    }

    /// `sum_{m=a}^{b-1} Sigma(m)` in closed form; `None` unless the shape is 2.
    pub fn sigma_sum(&self, a: u64, b: u64) -> Option<f64> {
        if !self.has_closed_form() {
            return None;
        }
        if b <= a {
            return Some(0.0);
        }
        let ages: f64 = self.clocks.iter().map(|c| c.age_sum(a, b)).sum();
        Some(2.0 * self.rate_constant * ages)
    }

    /// Mean of `Sigma` over the periods `a..b`.
    ///
    /// Exact for shape 2. Otherwise the mean of `min(b - a, RATE_SAMPLES)`
    /// evenly spaced periods.
    pub fn mean_sigma(&self, a: u64, b: u64) -> f64 {
        assert!(b > a, "empty interval {a}..{b}");
        let len = b - a;
        if let Some(sum) = self.sigma_sum(a, b) {
            return sum / len as f64;
        }
        let samples = len.min(RATE_SAMPLES);
        let total: f64 = (0..samples)
            .map(|j| self.sigma(a + (j as u128 * len as u128 / samples as u128) as u64))
            .sum();
        total / samples as f64
    }

    /// Largest `Sigma(m)` for `a <= m < b`.
    ///
    /// Every drive age is non-decreasing between replacement epochs, so the
    /// maximum sits at the last period of the interval or right before an
    /// epoch. Epochs and the periods after them are also checked.
    pub fn max_sigma(&self, a: u64, b: u64) -> f64 {
        assert!(b > a, "empty interval {a}..{b}");
        let mut best = self.sigma(a).max(self.sigma(b - 1));
        for epoch in self.replacement_epochs(a, b) {
            best = best.max(self.sigma(epoch - 1)).max(self.sigma(epoch));
        }
        best
    }

    /// System ages strictly inside `(a, b)` at which some drive is replaced.
    pub fn replacement_epochs(&self, a: u64, b: u64) -> Vec<u64> {
        let mut epochs: Vec<u64> = self
            .clocks
            .iter()
            .flat_map(|c| c.wraps_between(a, b))
            .collect();
        epochs.sort_unstable();
        epochs.dedup();
        epochs
    }

    /// Upper bound on the total exit rate of any transient state over `a..b`.
    pub fn exit_rate_bound(&self, a: u64, b: u64) -> f64 {
        self.recovery_rate + self.stripes as f64 * self.max_sigma(a, b)
    }

    /// Cumulative error hazard of the whole array, `S T sum_{m<k} Sigma(m)`.
    pub fn cumulative_hazard(&self, k: u64) -> Option<f64> {
        self.sigma_sum(0, k)
            .map(|s| s * self.stripes as f64 * self.erase_interval)
    }
}


#[cfg(test)]
mod proptests {
    use super::*;
    use proptest::prelude::*;

    fn parity(n: usize) -> impl Strategy<Value = Vec<f64>> {
        prop::collection::vec(0.01f64..1.0, n + 1).prop_map(|w| {
            let total: f64 = w.iter().sum();
            let mut p: Vec<f64> = w.iter().map(|x| x / total).collect();
            let rest: f64 = p[..p.len() - 1].iter().sum();
            *p.last_mut().unwrap() = 1.0 - rest;
            p
        })
    }

    proptest! {
        #[test]
        fn ages_stay_within_limit(
            p in (1usize..8).prop_flat_map(parity),
            diff in any::<bool>(),
            k in 0u64..5_000_000,
        ) {
            let n = p.len() - 1;
            let scheme = if diff { Scheme::DiffRaid } else { Scheme::TraditionalRaid };
            let mut cfg = ArrayConfig::desk_scale(scheme, p, 1e-5);
            cfg.n = n;
            let profile = aging_profile(&cfg).unwrap();
            let ages = drive_ages(&cfg, &profile, k);
            for &age in &ages.drive_ages {
                prop_assert!((0.0..=100.0).contains(&age));
            }
        }

        #[test]
        fn erase_probabilities_ignore_rate_scale(p in (1usize..8).prop_flat_map(parity), scale in 0.1f64..10.0) {
            let n = p.len() - 1;
            let rates: Vec<f64> = p.iter().map(|pi| pi * n as f64 + 1.0 - pi).collect();
            let total: f64 = rates.iter().sum();
            let scaled_total: f64 = rates.iter().map(|r| r * scale).sum();
            for r in &rates {
                prop_assert!((r / total - r * scale / scaled_total).abs() < 1e-14);
            }
            let mut cfg = ArrayConfig::desk_scale(Scheme::DiffRaid, p, 1e-5);
            cfg.n = n;
            let profile = aging_profile(&cfg).unwrap();
            prop_assert!((profile.erase_probabilities.iter().sum::<f64>() - 1.0).abs() < 1e-12);
            let sorted: Vec<f64> = profile.order.iter().map(|&d| profile.remaining_fractions[d]).collect();
            prop_assert_eq!(sorted[0], 1.0);
            prop_assert!(sorted.windows(2).all(|w| w[0] >= w[1]));
        }

        #[test]
        fn even_traditional_ages_are_equal(n in 1usize..12, k in 0u64..10_000_000) {
            let mut cfg = ArrayConfig::desk_scale(Scheme::TraditionalRaid, ArrayConfig::raid5_parity(n), 1e-5);
            cfg.n = n;
            let profile = aging_profile(&cfg).unwrap();
            let ages = drive_ages(&cfg, &profile, k);
            prop_assert!(ages.drive_ages.iter().all(|a| (a - ages.drive_ages[0]).abs() < 1e-9));
        }

        #[test]
        fn oldest_position_resets_at_epochs(epoch in 0u64..20, offset in 1u64..8_000) {
            let cfg = ArrayConfig::desk_scale(Scheme::DiffRaid, vec![0.1, 0.1, 0.1, 0.7], 1e-5);
            let profile = aging_profile(&cfg).unwrap();
            let base = epoch * 8_000;
            let at = drive_ages(&cfg, &profile, base).drive_ages[3];
            prop_assert!((at - 60.0).abs() < 1e-12);
            // Affine increase between epochs: 0.4 / 80 per array erasure.
            let later = drive_ages(&cfg, &profile, base + offset).drive_ages[3];
            prop_assert!((later - (60.0 + offset as f64 * 0.005)).abs() < 1e-9);
        }

        #[test]
        fn rate_is_monotone_in_age(shape in 1.01f64..4.0, a in 0.0f64..1e4, b in 0.0f64..1e4) {
            let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
            prop_assert!(weibull_rate(1e-12, shape, lo) <= weibull_rate(1e-12, shape, hi));
        }
    }
}
