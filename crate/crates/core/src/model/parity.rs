use statrs::function::erf::erfc;

use crate::error::{Error, Result};

/// Standard normal CDF, accurate in the lower tail.
fn normal_cdf(x: f64) -> f64 {
    0.5 * erfc(-x / std::f64::consts::SQRT_2)
}

/// Parity fractions for `n + 1` drives taken from a normal density with mean
/// `n + 1` and standard deviation `sigma`, truncated to `[0, n + 1]`.
///
/// Drive `i` receives the mass of `[i, i + 1]`, so the last drive holds the
/// largest share. Smaller `sigma` gives a more skewed placement.
pub fn truncated_normal_parity(n: usize, sigma: f64) -> Result<Vec<f64>> {
    if !(sigma > 0.0 && sigma.is_finite()) {
        return Err(Error::InvalidArgument(format!(
            "sigma must be positive and finite, got {sigma}"
        )));
    }
    if n == 0 {
        return Err(Error::InvalidArgument("n must be at least 1".into()));
    }
    let mean = (n + 1) as f64;
    let cdf = |x: f64| normal_cdf((x - mean) / sigma);
    let masses: Vec<f64> = (0..=n)
        .map(|i| cdf(i as f64 + 1.0) - cdf(i as f64))
        .collect();
    // The numerators telescope to the truncation mass.
    let total: f64 = masses.iter().sum();
    Ok(masses.into_iter().map(|m| m / total).collect())
}
