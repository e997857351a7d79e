//! Uniformized step `v <- v (I + Q / Lambda)` and the Poisson mixture over
//! one homogeneous interval.

use rayon::prelude::*;
use serde::Serialize;

use super::generator::GeneratorMatrix;
use super::poisson::PoissonWeights;
use crate::error::{Error, Result};

/// Chains with at least this many transient states are split across threads.
const PARALLEL_MIN_STATES: usize = 1 << 15;
/// Fixed chunk length; loss contributions are reduced chunk by chunk in
/// index order so results do not depend on the thread count.
const CHUNK: usize = 1 << 13;

/// Probability vector over chain states with its running error bound.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StateVector {
    pub probabilities: Vec<f64>,
    /// Accumulated Poisson truncation bound (plus overflow carried out of a
    /// truncated chain when it was widened to the full chain).
    pub accumulated_bound: f64,
    /// Mass dropped with the Poisson tails; `sum + unassigned = 1`.
    pub unassigned: f64,
    pub system_age: u64,
    pub truncation: Option<usize>,
}

impl StateVector {
    /// Array with no erroneous chunk: all mass in state 0.
    pub fn initial(chain: &GeneratorMatrix) -> Self {
        let mut probabilities = vec![0.0; chain.dimension()];
        probabilities[0] = 1.0;
        Self {
            probabilities,
            accumulated_bound: 0.0,
            unassigned: 0.0,
            system_age: 0,
            truncation: chain.truncation(),
        }
    }

    /// Highest transient state.
    pub fn top(&self) -> usize {
        match self.truncation {
            Some(cap) => cap,
            None => self.probabilities.len() - 2,
        }
    }

    /// Probability that no stripe has lost data, `sum_{j <= top} pi_j`.
    pub fn reliability(&self) -> f64 {
        self.probabilities[..=self.top()].iter().sum()
    }

    pub fn loss(&self) -> f64 {
        *self.probabilities.last().unwrap()
    }

    /// Mass in the overflow state of a truncated chain.
    pub fn overflow(&self) -> f64 {
        match self.truncation {
            Some(cap) => self.probabilities[cap + 1],
            None => 0.0,
        }
    }

    pub fn mass(&self) -> f64 {
        self.probabilities.iter().sum()
    }

    /// Error bound to report with the reliability: the accumulated
    /// uniformization bound plus the overflow mass of a truncated chain.
    pub fn reported_bound(&self) -> f64 {
        self.accumulated_bound + self.overflow()
    }

    /// Re-embed the vector into a chain with a larger cap, or into the full
    /// chain with `None`. New states start empty. Overflow mass cannot be
    /// placed in the full chain and moves into the bound.
    pub fn widen(&self, truncation: Option<usize>, stripes: usize) -> Self {
        let top = self.top();
        let dim = truncation.map_or(stripes + 2, |cap| cap + 3);
        let mut probabilities = vec![0.0; dim];
        probabilities[..=top].copy_from_slice(&self.probabilities[..=top]);
        probabilities[dim - 1] = self.loss();
        let mut accumulated_bound = self.accumulated_bound;
        let mut unassigned = self.unassigned;
        match truncation {
            Some(cap) => {
                assert!(cap >= top, "cannot shrink a chain");
                probabilities[cap + 1] = self.overflow();
            }
            None => {
                accumulated_bound += self.overflow();
                unassigned += self.overflow();
            }
        }
        Self {
            probabilities,
            accumulated_bound,
            unassigned,
            system_age: self.system_age,
            truncation,
        }
    }
}

/// Diagnostics for one uniformized interval.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct IntervalReport {
    pub start_age: u64,
    pub end_age: u64,
    pub mean_sigma: f64,
    /// Uniformization rate `Lambda`.
    pub uniformization_rate: f64,
    /// Number of kept Poisson terms minus one, `U`.
    pub truncation_point: usize,
    /// Dropped Poisson mass.
    pub tail: f64,
}

/// One step of the uniformized chain, `dst = src (I + Q / lambda)`.
pub fn uniformized_product(chain: &GeneratorMatrix, lambda: f64, src: &[f64], dst: &mut [f64]) {
    let dim = chain.dimension();
    assert_eq!(src.len(), dim);
    assert_eq!(dst.len(), dim);
    let top = chain.top();
    let s = chain.stripes() as f64;
    let error = chain.sigma() / lambda;
    let repair = chain.recovery_rate() / lambda;
    // Clamped: lambda may equal the largest exit rate exactly.
    let stay_clean = (1.0 - s * error).max(0.0);
    let stay = (1.0 - s * error - repair).max(0.0);

    let cell = |j: usize| -> f64 {
        let own = src[j] * if j == 0 { stay_clean } else { stay };
        let from_below = if j > 0 {
            src[j - 1] * (s - (j - 1) as f64) * error
        } else {
            0.0
        };
        let from_above = if j < top { src[j + 1] * repair } else { 0.0 };
        own + from_below + from_above
    };
    let loss_inflow = |range: std::ops::Range<usize>| -> f64 {
        range.map(|j| src[j] * j as f64 * error).sum()
    };

    let (transient, absorbing) = dst.split_at_mut(top + 1);
    let loss_gain = if top + 1 >= PARALLEL_MIN_STATES {
        let partials: Vec<f64> = transient
            .par_chunks_mut(CHUNK)
            .enumerate()
            .map(|(c, out)| {
                let base = c * CHUNK;
                for (i, slot) in out.iter_mut().enumerate() {
                    *slot = cell(base + i);
                }
                loss_inflow(base..base + out.len())
            })
            .collect();
        partials.iter().sum()
    } else {
        for (j, slot) in transient.iter_mut().enumerate() {
            *slot = cell(j);
        }
        loss_inflow(0..top + 1)
    };

    if let Some(overflow) = chain.overflow_state() {
        absorbing[0] = src[overflow] + src[top] * (s - top as f64) * error;
    }
    let loss = chain.loss_state();
    *absorbing.last_mut().unwrap() = src[loss] + loss_gain;
}

/// Advance `state` through one homogeneous interval of `duration` seconds
/// with generator `chain`, uniformized at rate `lambda`.
///
/// The Poisson series is cut at the first index whose tail fits in
/// `error_budget`; the tail is added to the accumulated bound. `lambda`
/// must dominate every exit rate seen during the interval.
pub fn uniformized_interval(
    state: &StateVector,
    chain: &GeneratorMatrix,
    lambda: f64,
    duration: f64,
    error_budget: f64,
    term_ceiling: Option<usize>,
) -> Result<(StateVector, PoissonWeights)> {
    if state.probabilities.len() != chain.dimension() || state.truncation != chain.truncation() {
        return Err(Error::InvalidArgument(format!(
            "state has {} entries, chain has {}",
            state.probabilities.len(),
            chain.dimension()
        )));
    }
    if !(lambda >= chain.max_exit_rate() && lambda.is_finite()) {
        return Err(Error::InvalidArgument(format!(
            "uniformization rate {lambda} below the largest exit rate {}",
            chain.max_exit_rate()
        )));
    }
    if !(duration >= 0.0 && duration.is_finite()) {
        return Err(Error::InvalidArgument(format!("bad interval length {duration}")));
    }

    let weights = PoissonWeights::new(lambda * duration, error_budget, term_ceiling)?;
    let dim = chain.dimension();
    let mut result = vec![0.0; dim];
    let mut current = state.probabilities.clone();
    let mut next = vec![0.0; dim];
    let terms = weights.weights();
    for (n, &w) in terms.iter().enumerate() {
        if w > 0.0 {
            for (r, v) in result.iter_mut().zip(&current) {
                *r += w * v;
            }
        }
        if n + 1 < terms.len() {
            uniformized_product(chain, lambda, &current, &mut next);
            std::mem::swap(&mut current, &mut next);
        }
    }

    let mass = state.mass();
    let advanced = StateVector {
        probabilities: result,
        accumulated_bound: state.accumulated_bound + weights.tail(),
        unassigned: state.unassigned + mass * weights.tail(),
        system_age: state.system_age,
        truncation: state.truncation,
    };
    Ok((advanced, weights))
}
