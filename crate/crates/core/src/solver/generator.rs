use serde::Serialize;

use crate::error::{Error, Result};
use crate::model::{chunk_error_rate, AgeState, ArrayConfig};

/// Generator of the stripe-error chain during one homogeneous period.
///
/// States `0..=top` count stripes holding exactly one erroneous chunk. The
/// full chain has `top = S` followed by the data-loss state. A truncated
/// chain has `top = E`, then an absorbing overflow state standing for "more
/// than E" and the loss state. The matrix is never stored: every transient
/// state has at most three outgoing transitions.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct GeneratorMatrix {
    stripes: usize,
    sigma: f64,
    recovery_rate: f64,
    truncation: Option<usize>,
}

impl GeneratorMatrix {
    pub fn new(
        stripes: usize,
        sigma: f64,
        recovery_rate: f64,
        truncation: Option<usize>,
    ) -> Result<Self> {
        if stripes == 0 {
            return Err(Error::InvalidArgument("chain needs at least one stripe".into()));
        }
        if let Some(cap) = truncation {
            if cap == 0 || cap >= stripes {
                return Err(Error::InvalidArgument(format!(
                    "state cap {cap} must satisfy 1 <= E < S = {stripes}; use the full chain instead"
                )));
            }
        }
        if !(sigma >= 0.0 && sigma.is_finite()) || !(recovery_rate >= 0.0 && recovery_rate.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "rates must be finite and >= 0 (sigma {sigma}, mu {recovery_rate})"
            )));
        }
        Ok(Self {
            stripes,
            sigma,
            recovery_rate,
            truncation,
        })
    }

    pub fn stripes(&self) -> usize {
        self.stripes
    }

    /// Aggregate per-stripe error rate `Sigma`.
    pub fn sigma(&self) -> f64 {
        self.sigma
    }

    pub fn recovery_rate(&self) -> f64 {
        self.recovery_rate
    }

    pub fn truncation(&self) -> Option<usize> {
        self.truncation
    }

    /// Highest transient state.
    pub fn top(&self) -> usize {
        self.truncation.unwrap_or(self.stripes)
    }

    pub fn dimension(&self) -> usize {
        match self.truncation {
            Some(cap) => cap + 3,
            None => self.stripes + 2,
        }
    }

    pub fn overflow_state(&self) -> Option<usize> {
        self.truncation.map(|cap| cap + 1)
    }

    pub fn loss_state(&self) -> usize {
        self.dimension() - 1
    }

    pub fn is_absorbing(&self, state: usize) -> bool {
        state > self.top()
    }

    /// Total rate out of `state`.
    pub fn exit_rate(&self, state: usize) -> f64 {
        match state {
            0 => self.stripes as f64 * self.sigma,
            s if s <= self.top() => self.stripes as f64 * self.sigma + self.recovery_rate,
            _ => 0.0,
        }
    }

    /// Largest exit rate over all states.
    pub fn max_exit_rate(&self) -> f64 {
        self.exit_rate(1)
    }

    /// Off-diagonal transitions out of `state` as `(target, rate)` pairs.
    pub fn transitions(&self, state: usize) -> Vec<(usize, f64)> {
        let top = self.top();
        if state > top {
            return Vec::new();
        }
        let s = self.stripes as f64;
        let j = state as f64;
        let mut out = Vec::with_capacity(3);
        if state > 0 {
            out.push((state - 1, self.recovery_rate));
        }
        if state < self.stripes {
            // From the cap this feeds the overflow state, which sits at top + 1.
            out.push((state + 1, (s - j) * self.sigma));
        }
        if state > 0 {
            out.push((self.loss_state(), j * self.sigma));
        }
        out
    }

    /// Element `q_{i,j}`.
    pub fn rate(&self, from: usize, to: usize) -> f64 {
        if from == to {
            return -self.exit_rate(from);
        }
        self.transitions(from)
            .into_iter()
            .filter(|&(t, _)| t == to)
            .map(|(_, r)| r)
            .sum()
    }

    /// Dense row-major copy; only sensible for small chains.
    pub fn to_dense(&self) -> Vec<Vec<f64>> {
        let dim = self.dimension();
        (0..dim)
            .map(|i| (0..dim).map(|j| self.rate(i, j)).collect())
            .collect()
    }

    /// Same chain with the aggregate error rate replaced.
    pub fn with_sigma(&self, sigma: f64) -> Self {
        Self { sigma, ..*self }
    }
}

/// Generator for the period in which the drives have the given ages.
///
/// `truncation` selects the chain with states above `E` collapsed into one
/// absorbing overflow state.
pub fn build_generator(
    cfg: &ArrayConfig,
    age: &AgeState,
    truncation: Option<usize>,
) -> Result<GeneratorMatrix> {
    cfg.validate()?;
    if age.drive_ages.len() != cfg.drives() {
        return Err(Error::InvalidArgument(format!(
            "age state has {} drives, configuration has {}",
            age.drive_ages.len(),
            cfg.drives()
        )));
    }
    let sigma = (0..cfg.drives())
        .map(|d| chunk_error_rate(cfg, age, d))
        .sum();
    GeneratorMatrix::new(
        usize::try_from(cfg.stripes).map_err(|_| Error::InvalidArgument("too many stripes".into()))?,
        sigma,
        cfg.recovery_rate,
        truncation,
    )
}

/// Average of the generators of consecutive periods.
///
/// Every generator is affine in `Sigma`, so the average is the generator of
/// the mean `Sigma`. All inputs must share stripes, recovery rate and
/// truncation.
pub fn average_generator(generators: &[GeneratorMatrix]) -> Result<GeneratorMatrix> {
    let first = generators
        .first()
        .ok_or_else(|| Error::InvalidArgument("no generators to average".into()))?;
    if generators.iter().any(|g| {
        g.stripes != first.stripes
            || g.recovery_rate != first.recovery_rate
            || g.truncation != first.truncation
    }) {
        return Err(Error::InvalidArgument(
            "generators differ in structure; only Sigma may vary".into(),
        ));
    }
    let mean = generators.iter().map(|g| g.sigma).sum::<f64>() / generators.len() as f64;
    Ok(first.with_sigma(mean))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::Scheme;

    #[test]
    fn small_chain_by_hand() {
        let q = GeneratorMatrix::new(2, 0.1, 1.0, None).unwrap();
        let expected = [
            [-0.2, 0.2, 0.0, 0.0],
            [1.0, -1.2, 0.1, 0.1],
            [0.0, 1.0, -1.2, 0.2],
            [0.0, 0.0, 0.0, 0.0],
        ];
        let dense = q.to_dense();
        for (row, want) in dense.iter().zip(expected) {
            for (x, y) in row.iter().zip(want) {
                assert!((x - y).abs() < 1e-15, "{dense:?}");
            }
        }
    }

    #[test]
    fn rows_sum_to_zero() {
        for truncation in [None, Some(1), Some(4), Some(9)] {
            let q = GeneratorMatrix::new(10, 0.037, 0.8, truncation).unwrap();
            for (i, row) in q.to_dense().iter().enumerate() {
                let sum: f64 = row.iter().sum();
                assert!(sum.abs() < 1e-12, "row {i}: {sum}");
                for (j, &x) in row.iter().enumerate() {
                    if i == j {
                        assert!(x <= 0.0);
                    } else {
                        assert!(x >= 0.0);
                    }
                }
            }
        }
    }

    #[test]
    fn clean_array_cannot_lose_data() {
        let q = GeneratorMatrix::new(5, 0.3, 1.0, None).unwrap();
        assert_eq!(q.rate(0, q.loss_state()), 0.0);
        assert!(q.rate(1, q.loss_state()) > 0.0);
    }

    #[test]
    fn truncated_chain_layout() {
        let q = GeneratorMatrix::new(50, 0.01, 1.0, Some(5)).unwrap();
        assert_eq!(q.dimension(), 8);
        assert_eq!(q.overflow_state(), Some(6));
        assert_eq!(q.loss_state(), 7);
        assert!((q.rate(5, 6) - 45.0 * 0.01).abs() < 1e-15);
        assert!((q.rate(5, 7) - 5.0 * 0.01).abs() < 1e-15);
        assert!(q.to_dense()[6].iter().all(|&x| x == 0.0));
        assert!(q.to_dense()[7].iter().all(|&x| x == 0.0));
    }

    #[test]
    fn rejects_oversized_cap() {
        assert!(GeneratorMatrix::new(10, 0.1, 1.0, Some(10)).is_err());
        assert!(GeneratorMatrix::new(10, 0.1, 1.0, Some(0)).is_err());
        assert!(GeneratorMatrix::new(10, 0.1, 1.0, Some(9)).is_ok());
    }

    #[test]
    fn generator_from_ages() {
        let mut cfg = ArrayConfig::desk_scale(Scheme::DiffRaid, vec![0.1, 0.1, 0.1, 0.7], 1e-3);
        cfg.stripes = 2;
        let age = AgeState {
            system_age: 0,
            drive_ages: vec![0.0, 10.0, 20.0, 20.0],
        };
        let q = build_generator(&cfg, &age, None).unwrap();
        assert!((q.sigma() - 0.1).abs() < 1e-15);
        assert!(build_generator(&cfg, &age, Some(2)).is_err());
    }

    #[test]
    fn averaging_is_affine_in_sigma() {
        let a = GeneratorMatrix::new(2, 0.1, 1.0, None).unwrap();
        let b = a.with_sigma(0.3);
        let avg = average_generator(&[a, b]).unwrap();
        let direct = GeneratorMatrix::new(2, 0.2, 1.0, None).unwrap();
        for (r1, r2) in avg.to_dense().iter().zip(direct.to_dense()) {
            for (x, y) in r1.iter().zip(r2) {
                assert!((x - y).abs() < 1e-15);
            }
        }
        assert!((average_generator(&[a, a, a]).unwrap().sigma() - a.sigma()).abs() < 1e-16);
        let other = GeneratorMatrix::new(3, 0.1, 1.0, None).unwrap();
        assert!(average_generator(&[a, other]).is_err());
        assert!(average_generator(&[]).is_err());
    }
}
