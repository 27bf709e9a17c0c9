//! Generalized advantage estimation over finite, possibly truncated, rollouts.

use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum GaeError {
    #[error("input arrays have mismatched lengths")]
    Length,
    #[error("non-finite input at index {0}")]
    NonFinite(usize),
}

/// Advantages for one contiguous trajectory slice.
///
/// `bootstrap` is the critic value after the last step; it is ignored when
/// the last step is terminal. A `done` flag cuts the recursion so no credit
/// crosses an episode boundary.
pub fn gae(
    rewards: &[f64],
    values: &[f64],
    dones: &[bool],
    bootstrap: f64,
    gamma: f64,
    lambda: f64,
) -> Result<Vec<f64>, GaeError> {
    let n = rewards.len();
    if values.len() != n || dones.len() != n {
        return Err(GaeError::Length);
    }
    let next_values: Vec<f64> = (0..n).map(|t| if t + 1 < n { values[t + 1] } else { bootstrap }).collect();
    gae_with_next(rewards, values, &next_values, dones, gamma, lambda)
}

/// As [`gae`], with the successor value of every step supplied explicitly.
pub fn gae_with_next(
    rewards: &[f64],
    values: &[f64],
    next_values: &[f64],
    dones: &[bool],
    gamma: f64,
    lambda: f64,
) -> Result<Vec<f64>, GaeError> {
    let n = rewards.len();
    if values.len() != n || next_values.len() != n || dones.len() != n {
        return Err(GaeError::Length);
    }
    for t in 0..n {
        if !(rewards[t].is_finite() && values[t].is_finite() && next_values[t].is_finite()) {
            return Err(GaeError::NonFinite(t));
        }
    }
    if !(gamma.is_finite() && lambda.is_finite()) {
        return Err(GaeError::NonFinite(n));
    }
    let mut adv = vec![0.0; n];
    let mut acc = 0.0;
    for t in (0..n).rev() {
        let live = if dones[t] { 0.0 } else { 1.0 };
        let delta = rewards[t] + gamma * next_values[t] * live - values[t];
        acc = delta + gamma * lambda * live * acc;
        adv[t] = acc;
    }
    Ok(adv)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_rewards_and_values_give_zero() {
        let a = gae(&[0.0; 4], &[0.0; 4], &[false; 4], 0.0, 0.99, 0.95).unwrap();
        assert!(a.iter().all(|x| *x == 0.0));
    }

    #[test]
    fn single_terminal_step() {
        assert_eq!(gae(&[1.0], &[0.0], &[true], 5.0, 1.0, 0.95).unwrap(), vec![1.0]);
    }

    #[test]
    fn rejects_nan_and_length_mismatch() {
        assert_eq!(gae(&[f64::NAN], &[0.0], &[false], 0.0, 0.9, 0.9), Err(GaeError::NonFinite(0)));
        assert_eq!(gae(&[0.0, 1.0], &[0.0], &[false], 0.0, 0.9, 0.9), Err(GaeError::Length));
    }

    #[test]
    fn done_cuts_credit_assignment() {
        let a = gae(&[0.0, 10.0], &[0.0, 0.0], &[true, false], 0.0, 0.9, 0.9).unwrap();
        assert_eq!(a[0], 0.0);
    }
}
