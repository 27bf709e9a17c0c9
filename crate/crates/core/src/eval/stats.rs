//! Paired-seed comparison statistics.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum PairError {
    #[error("seed sets differ")]
    SeedMismatch,
    #[error("no paired seeds")]
    Empty,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairedStats {
    pub seeds: Vec<u64>,
    /// `b − a` per seed.
    pub deltas: Vec<f64>,
    pub mean_delta: f64,
    pub std_error: f64,
    /// Paired t statistic; `None` when the deltas have zero variance.
    pub t_statistic: Option<f64>,
    /// Mean delta over the delta standard deviation; 0 when both are 0.
    pub cohens_d: f64,
    pub zero_variance: bool,
}

/// Compares per-seed values of two runs on identical seed sets.
pub fn paired_compare(a: &BTreeMap<u64, f64>, b: &BTreeMap<u64, f64>) -> Result<PairedStats, PairError> {
    if a.keys().ne(b.keys()) {
        return Err(PairError::SeedMismatch);
    }
    if a.is_empty() {
        return Err(PairError::Empty);
    }
    let seeds: Vec<u64> = a.keys().copied().collect();
    let deltas: Vec<f64> = seeds.iter().map(|s| b[s] - a[s]).collect();
    Ok(stats_from_deltas(seeds, deltas))
}

pub fn stats_from_deltas(seeds: Vec<u64>, deltas: Vec<f64>) -> PairedStats {
    let n = deltas.len() as f64;
    let mean = deltas.iter().sum::<f64>() / n;
    let var = if deltas.len() > 1 { deltas.iter().map(|d| (d - mean).powi(2)).sum::<f64>() / (n - 1.0) } else { 0.0 };
    let sd = var.sqrt();
    let zero_variance = sd <= 1e-12 * (1.0 + mean.abs());
    let se = sd / n.sqrt();
    PairedStats {
        seeds,
        deltas,
        mean_delta: mean,
        std_error: se,
        t_statistic: (!zero_variance).then(|| mean / se),
        cohens_d: if zero_variance { 0.0 } else { mean / sd },
        zero_variance,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identical_runs() {
        let a: BTreeMap<u64, f64> = [(1, 0.5), (2, 0.7)].into();
        let s = paired_compare(&a, &a).unwrap();
        assert!(s.deltas.iter().all(|d| *d == 0.0));
        assert_eq!(s.cohens_d, 0.0);
    }

    #[test]
    fn constant_shift_is_flagged() {
        let a: BTreeMap<u64, f64> = [(1, 0.5), (2, 0.7), (3, 0.1)].into();
        let b: BTreeMap<u64, f64> = a.iter().map(|(k, v)| (*k, v + 0.25)).collect();
        let s = paired_compare(&a, &b).unwrap();
        assert!((s.mean_delta - 0.25).abs() < 1e-12);
        assert!(s.zero_variance);
        assert_eq!(s.t_statistic, None);
    }

    #[test]
    fn unpaired_rejected() {
        let a: BTreeMap<u64, f64> = [(1, 0.5)].into();
        let b: BTreeMap<u64, f64> = [(2, 0.5)].into();
        assert_eq!(paired_compare(&a, &b), Err(PairError::SeedMismatch));
    }
}
