//! Reference computations that share no code with the library beyond the
//! configuration struct: drive ages straight from their defining formulas,
//! dense generators, per-period matrix exponentials and RK4.
#![allow(dead_code)]

use nalgebra::{DMatrix, DVector};
use raidrel_core::{ArrayConfig, Scheme};

/// Per-drive ages at system age `k`, computed naively.
pub fn ages(cfg: &ArrayConfig, k: u64) -> Vec<f64> {
    let n = cfg.n as f64;
    let r: Vec<f64> = cfg
        .parity_fractions
        .iter()
        .map(|p| p * n + (1.0 - p))
        .collect();
    let total: f64 = r.iter().sum();
    let m = cfg.erasure_limit as f64;
    let b = cfg.blocks_per_ssd as f64;
    let k = k as f64;
    (0..r.len())
        .map(|i| {
            let q = r[i] / total;
            match cfg.scheme {
                Scheme::TraditionalRaid => (k * q / b) % m,
                Scheme::DiffRaid => {
                    // Remaining fraction: drives with a smaller or equal rate
                    // sort after this one; ties by index.
                    let rest: f64 = (0..r.len())
                        .filter(|&j| r[j] > r[i] || (r[j] == r[i] && j >= i))
                        .map(|j| r[j])
                        .sum();
                    let a = rest / total;
                    // (k q / B) mod (M q), reduced in integers first so
                    // wraps land exactly.
                    ((k as u64 % (cfg.blocks_per_ssd * cfg.erasure_limit)) as f64) * q / b
                        + m * (1.0 - a)
                }
            }
        })
        .collect()
}

pub fn sigma(cfg: &ArrayConfig, k: u64) -> f64 {
    ages(cfg, k)
        .iter()
        .map(|&x| cfg.rate_constant * cfg.shape * x.powf(cfg.shape - 1.0))
        .sum()
}

/// Dense generator of the full chain, `S + 2` states, loss last.
pub fn dense_generator(stripes: usize, sigma: f64, mu: f64) -> DMatrix<f64> {
    let dim = stripes + 2;
    let loss = dim - 1;
    let s = stripes as f64;
    let mut q = DMatrix::zeros(dim, dim);
    for j in 0..=stripes {
        let jf = j as f64;
        if j < stripes {
            q[(j, j + 1)] = (s - jf) * sigma;
        }
        if j > 0 {
            q[(j, j - 1)] = mu;
            q[(j, loss)] = jf * sigma;
        }
        let out: f64 = (0..dim).filter(|&c| c != j).map(|c| q[(j, c)]).sum();
        q[(j, j)] = -out;
    }
    q
}

/// Dense generator of the chain truncated at `cap`: overflow `cap + 1`, loss
/// `cap + 2`.
pub fn dense_truncated(stripes: usize, cap: usize, sigma: f64, mu: f64) -> DMatrix<f64> {
    let dim = cap + 3;
    let s = stripes as f64;
    let mut q = DMatrix::zeros(dim, dim);
    for j in 0..=cap {
        let jf = j as f64;
        q[(j, j + 1)] = (s - jf) * sigma;
        if j > 0 {
            q[(j, j - 1)] = mu;
            q[(j, cap + 2)] = jf * sigma;
        }
        let out: f64 = (0..dim).filter(|&c| c != j).map(|c| q[(j, c)]).sum();
        q[(j, j)] = -out;
    }
    q
}

fn initial(dim: usize) -> DVector<f64> {
    let mut v = DVector::zeros(dim);
    v[0] = 1.0;
    v
}

/// Exact transient distribution obtained by chaining `exp(Q_k T)` for every
/// period `k`. Returns the distribution at each of `checkpoints` (sorted).
pub fn expm_chain(cfg: &ArrayConfig, checkpoints: &[u64]) -> Vec<DVector<f64>> {
    let stripes = cfg.stripes as usize;
    let mut v = initial(stripes + 2);
    let mut out = Vec::with_capacity(checkpoints.len());
    let mut k = 0u64;
    for &stop in checkpoints {
        while k < stop {
            let q = dense_generator(stripes, sigma(cfg, k), cfg.recovery_rate);
            let p = (q * cfg.erase_interval).exp();
            v = p.transpose() * v;
            k += 1;
        }
        out.push(v.clone());
    }
    out
}

/// Same as [`expm_chain`] with `substeps` classical RK4 steps per period on
/// `d pi / dt = pi Q_k`.
pub fn rk4_chain(cfg: &ArrayConfig, checkpoints: &[u64], substeps: usize) -> Vec<DVector<f64>> {
    let stripes = cfg.stripes as usize;
    let mut v = initial(stripes + 2);
    let mut out = Vec::with_capacity(checkpoints.len());
    let h = cfg.erase_interval / substeps as f64;
    let mut k = 0u64;
    for &stop in checkpoints {
        while k < stop {
            let qt = dense_generator(stripes, sigma(cfg, k), cfg.recovery_rate).transpose();
            for _ in 0..substeps {
                let k1 = &qt * &v;
                let k2 = &qt * (&v + &k1 * (h / 2.0));
                let k3 = &qt * (&v + &k2 * (h / 2.0));
                let k4 = &qt * (&v + &k3 * h);
                v += (k1 + k2 * 2.0 + k3 * 2.0 + k4) * (h / 6.0);
            }
            k += 1;
        }
        out.push(v.clone());
    }
    out
}

/// Reliability of a full-chain distribution: everything except loss.
pub fn reliability(v: &DVector<f64>) -> f64 {
    v.iter().take(v.len() - 1).sum()
}

pub fn l1(a: &[f64], b: &[f64]) -> f64 {
    assert_eq!(a.len(), b.len());
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).sum()
}
