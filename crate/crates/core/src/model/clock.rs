//! Piecewise-affine drive age as a function of system age.
//!
//! Between two replacement epochs the age of a drive grows linearly with the
//! number of erasures performed by the array. At an epoch it drops back to its
//! initial value. Everything here is expressed through the phase of the
//! drive within its replacement cycle so that pointwise ages, interval sums
//! and epoch locations agree with each other.

/// Phases this close to 1 are treated as a completed cycle.
const WRAP_SNAP: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq)]
pub(crate) struct DriveClock {
    /// Array erasures per replacement cycle of this drive.
    cycle_periods: f64,
    /// Same as `cycle_periods` when it is an exact integer.
    integral_cycle: Option<u64>,
    /// Age gained by the drive over one cycle.
    span: f64,
    /// Age right after a replacement.
    offset: f64,
}

impl DriveClock {
    pub(crate) fn new(cycle_periods: f64, span: f64, offset: f64) -> Self {
        debug_assert!(cycle_periods > 0.0 && cycle_periods.is_finite());
        let rounded = cycle_periods.round();
        let integral_cycle = ((cycle_periods - rounded).abs() <= 1e-9 * cycle_periods
            && (1.0..9.0e15).contains(&rounded))
            .then_some(rounded as u64);
        Self {
            cycle_periods,
            integral_cycle,
            span,
            offset,
        }
    }

    /// Completed cycles and position in the current one, in `[0, 1)`.
    pub(crate) fn cycle_position(&self, k: u64) -> (u64, f64) {
        match self.integral_cycle {
            Some(len) => (k / len, (k % len) as f64 / len as f64),
            None => {
                let x = k as f64 / self.cycle_periods;
                let w = x.floor();
                let phase = x - w;
                if phase >= 1.0 - WRAP_SNAP {
                    (w as u64 + 1, 0.0)
                } else {
                    (w as u64, phase.max(0.0))
                }
            }
        }
    }

    pub(crate) fn age(&self, k: u64) -> f64 {
        let (_, phase) = self.cycle_position(k);
        self.offset + self.span * phase
    }

    /// First system age after `k` at which the drive is replaced.
    pub(crate) fn next_wrap(&self, k: u64) -> u64 {
        let (w, _) = self.cycle_position(k);
        match self.integral_cycle {
            Some(len) => (w + 1) * len,
            None => {
                let mut m = (((w + 1) as f64) * self.cycle_periods).ceil().max(k as f64 + 1.0) as u64;
                while m > k + 1 && self.cycle_position(m - 1).0 > w {
                    m -= 1;
                }
                while self.cycle_position(m).0 <= w {
                    m += 1;
                }
                m
            }
        }
    }

    /// Sum of `age(m)` over `a <= m < b`, split at replacement epochs.
    pub(crate) fn age_sum(&self, a: u64, b: u64) -> f64 {
        let mut total = 0.0;
        let mut start = a;
        while start < b {
            let end = self.next_wrap(start).min(b);
            let (_, phase) = self.cycle_position(start);
            let count = (end - start) as f64;
            let phase_sum = count * phase + count * (count - 1.0) / (2.0 * self.cycle_periods);
            total += self.offset * count + self.span * phase_sum;
            start = end;
        }
        total
    }

    /// Replacement epochs `m` with `a < m < b`.
    pub(crate) fn wraps_between(&self, a: u64, b: u64) -> impl Iterator<Item = u64> + '_ {
        let mut m = a;
        std::iter::from_fn(move || {
            if m >= b {
                return None;
            }
            m = self.next_wrap(m);
            (m < b).then_some(m)
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn integral_cycle_wraps_exactly() {
        let clock = DriveClock::new(8000.0, 40.0, 60.0);
        assert_eq!(clock.age(0), 60.0);
        assert_eq!(clock.age(4000), 80.0);
        assert_eq!(clock.age(8000), 60.0);
        assert_eq!(clock.next_wrap(0), 8000);
        assert_eq!(clock.next_wrap(7999), 8000);
        assert_eq!(clock.next_wrap(8000), 16000);
    }

    #[test]
    fn fractional_cycle_is_consistent() {
        let clock = DriveClock::new(1000.0 / 3.0, 100.0, 0.0);
        for k in 0..5000u64 {
            let wrap = clock.next_wrap(k);
            assert!(wrap > k);
            assert!(clock.cycle_position(wrap).0 > clock.cycle_position(k).0);
            assert_eq!(clock.cycle_position(wrap - 1).0, clock.cycle_position(k).0);
        }
    }

    #[test]
    fn age_sum_matches_pointwise_sum() {
        for clock in [
            DriveClock::new(8000.0, 40.0, 60.0),
            DriveClock::new(1000.0 / 3.0, 100.0, 0.0),
            DriveClock::new(7.0, 3.5, 1.0),
        ] {
            for (a, b) in [(0u64, 1u64), (0, 20_000), (123, 9_876), (7_999, 8_001)] {
                let brute: f64 = (a..b).map(|m| clock.age(m)).sum();
                let closed = clock.age_sum(a, b);
                assert!(
                    (brute - closed).abs() <= 1e-9 * brute.abs().max(1.0),
                    "{a}..{b}: {brute} vs {closed}"
                );
            }
        }
    }

    #[test]
    fn wraps_between_lists_epochs() {
        let clock = DriveClock::new(100.0, 1.0, 0.0);
        let wraps: Vec<u64> = clock.wraps_between(50, 350).collect();
        assert_eq!(wraps, vec![100, 200, 300]);
        assert_eq!(clock.wraps_between(100, 200).count(), 0);
    }
}
