use statrs::function::gamma::ln_gamma;

use crate::error::{Error, Result};

/// Weights below this are treated as zero when extending the right tail.
const NEGLIGIBLE: f64 = 1e-300;

/// Truncated Poisson weights `e^{-x} x^n / n!` for `n = 0..=U`.
///
/// `U` is the smallest index whose right tail `sum_{n > U}` does not exceed
/// the error budget. Weights are built outward from the mode with the ratio
/// recurrence and normalized by their total, so nothing overflows and the
/// far-left terms simply underflow to zero for large `x`.
#[derive(Debug, Clone, PartialEq)]
pub struct PoissonWeights {
    weights: Vec<f64>,
    tail: f64,
    rate_time: f64,
}

impl PoissonWeights {
    /// Default ceiling on the truncation point, `10 x + 100`.
    pub fn default_ceiling(rate_time: f64) -> usize {
        (10.0 * rate_time + 100.0).ceil() as usize
    }

    pub fn new(rate_time: f64, budget: f64, ceiling: Option<usize>) -> Result<Self> {
        if !(rate_time >= 0.0 && rate_time.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "Poisson mean must be finite and >= 0, got {rate_time}"
            )));
        }
        if !(budget > 0.0 && budget < 1.0) {
            return Err(Error::InvalidArgument(format!(
                "error budget must lie in (0, 1), got {budget}"
            )));
        }
        if rate_time == 0.0 {
            return Ok(Self {
                weights: vec![1.0],
                tail: 0.0,
                rate_time,
            });
        }
        let ceiling = ceiling.unwrap_or_else(|| Self::default_ceiling(rate_time));

        let mode = rate_time.floor() as usize;
        let log_mode = -rate_time + mode as f64 * rate_time.ln() - ln_gamma(mode as f64 + 1.0);
        let peak = log_mode.exp();

        let mut weights = vec![0.0; mode + 1];
        weights[mode] = peak;
        for n in (0..mode).rev() {
            weights[n] = weights[n + 1] * (n + 1) as f64 / rate_time;
        }
        let mut w = peak;
        let mut n = mode;
        loop {
            w *= rate_time / (n + 1) as f64;
            n += 1;
            if w < NEGLIGIBLE * peak {
                break;
            }
            weights.push(w);
        }

        // Sum smallest-first for the normalizer.
        let total: f64 = {
            let (left, right) = weights.split_at(mode);
            left.iter().sum::<f64>() + right.iter().rev().sum::<f64>()
        };
        for w in &mut weights {
            *w /= total;
        }

        // Right tails, accumulated from the far end.
        let mut tails = vec![0.0; weights.len()];
        let mut acc = 0.0;
        for i in (0..weights.len()).rev() {
            tails[i] = acc;
            acc += weights[i];
        }
        let cut = tails
            .iter()
            .position(|&t| t <= budget)
            .unwrap_or(weights.len() - 1);
        if cut > ceiling {
            return Err(Error::TermCeiling {
                needed: cut,
                ceiling,
                rate_time,
            });
        }
        let tail = tails[cut];
        weights.truncate(cut + 1);
        Ok(Self {
            weights,
            tail,
            rate_time,
        })
    }

    /// Weights for `n = 0..=U`.
    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    /// Truncation point `U`.
    pub fn truncation_point(&self) -> usize {
        self.weights.len() - 1
    }

    /// Probability mass beyond `U`.
    pub fn tail(&self) -> f64 {
        self.tail
    }

    pub fn rate_time(&self) -> f64 {
        self.rate_time
    }
}
