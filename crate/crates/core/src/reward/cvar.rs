//! Conditional value-at-risk in Rockafellar–Uryasev form.

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum CvarError {
    #[error("no samples")]
    Empty,
    #[error("alpha must lie in (0, 1), got {0}")]
    Alpha(f64),
    #[error("non-finite sample")]
    NonFinite,
}

/// Discounted return of one episode-agent pair.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ReturnSample {
    pub episode: u64,
    pub seed: u64,
    pub value: f64,
}

pub fn discounted_return(rewards: &[f64], gamma: f64) -> f64 {
    rewards.iter().rev().fold(0.0, |acc, r| r + gamma * acc)
}

/// Upper-tail CVaR: `min_η η + E[(X − η)+]/(1 − α)`. Returns `(value, η*)`.
///
/// The objective is piecewise linear and convex in η with kinks at the
/// samples, so the minimum is attained at an order statistic; every one is
/// evaluated using suffix sums.
pub fn cvar_ru(samples: &[f64], alpha: f64) -> Result<(f64, f64), CvarError> {
    if samples.is_empty() {
        return Err(CvarError::Empty);
    }
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(CvarError::Alpha(alpha));
    }
    if samples.iter().any(|x| !x.is_finite()) {
        return Err(CvarError::NonFinite);
    }
    let mut xs = samples.to_vec();
    xs.sort_by(f64::total_cmp);
    let n = xs.len();
    let scale = 1.0 / ((1.0 - alpha) * n as f64);
    let mut suffix = 0.0;
    let mut best = (f64::INFINITY, xs[n - 1]);
    // walk from the largest sample down; `suffix` holds the sum above index k
    for k in (0..n).rev() {
        let eta = xs[k];
        let above = n - 1 - k;
        let value = eta + scale * (suffix - above as f64 * eta);
        if value <= best.0 {
            best = (value, eta);
        }
        suffix += xs[k];
    }
    Ok(best)
}

/// Lower-tail CVaR of returns, `−cvar_ru(−G, α)`: the mean of the worst
/// `1 − α` share of outcomes.
pub fn lower_tail_cvar(returns: &[f64], alpha: f64) -> Result<f64, CvarError> {
    let neg: Vec<f64> = returns.iter().map(|g| -g).collect();
    cvar_ru(&neg, alpha).map(|(v, _)| -v)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn examples() {
        assert_eq!(cvar_ru(&[2.5; 7], 0.9).unwrap().0, 2.5);
        assert!((cvar_ru(&[1.0, 2.0, 3.0, 4.0], 0.75).unwrap().0 - 4.0).abs() < 1e-12);
        assert!((cvar_ru(&[1.0, 2.0, 3.0, 4.0], 0.5).unwrap().0 - 3.5).abs() < 1e-12);
        let r: Vec<f64> = (0..10).map(f64::from).collect();
        assert!(lower_tail_cvar(&r, 0.9).unwrap().abs() < 1e-12);
        assert_eq!(lower_tail_cvar(&[-3.0; 4], 0.5).unwrap(), -3.0);
    }

    #[test]
    fn rejects_bad_input() {
        assert_eq!(cvar_ru(&[], 0.5), Err(CvarError::Empty));
        assert_eq!(cvar_ru(&[1.0], 1.0), Err(CvarError::Alpha(1.0)));
        assert_eq!(cvar_ru(&[f64::NAN], 0.5), Err(CvarError::NonFinite));
    }

    #[test]
    fn catastrophe_lowers_tail() {
        let mut r = vec![0.0; 99];
        let before = lower_tail_cvar(&r, 0.99).unwrap();
        r.push(-100.0);
        assert!(lower_tail_cvar(&r, 0.99).unwrap() < before);
    }

    #[test]
    fn discounting() {
        assert!((discounted_return(&[1.0, 1.0, 1.0], 0.5) - 1.75).abs() < 1e-12);
    }
}
