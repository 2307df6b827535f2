use rayon::prelude::*;
use serde::Serialize;

use super::likelihood::estimate_joint;
use super::sieve::EigenSieve;
use crate::array_model::SensorArray;
use crate::error::{Result, SimlError};
use crate::field_sim::SampleCovariance;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BicEntry {
    #[serde(rename = "M")]
    pub m: usize,
    /// Per-snapshot log-likelihood ℓ̂_M at the joint estimate.
    pub log_likelihood: Option<f64>,
    pub bic: Option<f64>,
    pub sigma_hat: Option<f64>,
    /// Why this candidate was skipped, if it was.
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BicScan {
    pub entries: Vec<BicEntry>,
    pub selected_m: usize,
}

impl BicScan {
    pub fn selected(&self) -> &BicEntry {
        self.entries.iter().find(|e| e.m == self.selected_m).expect("selected entry exists")
    }
}

/// BIC(M) = −2·N·ℓ̂_M + 2M²·ln L.
///
/// ℓ̂_M is the per-snapshot likelihood; the Wishart log-likelihood of N
/// snapshots is N times that.
pub fn bic_value(log_likelihood: f64, m: usize, l: usize, n_snapshots: usize) -> f64 {
    -2.0 * n_snapshots as f64 * log_likelihood + 2.0 * (m * m) as f64 * (l as f64).ln()
}

/// Candidate dimensions {2, 2+stride, …, min(L − 1, N)}; the upper end is
/// always included.
pub fn default_bic_range(l: usize, n_snapshots: usize, stride: usize) -> Vec<usize> {
    let upper = (l.saturating_sub(1)).min(n_snapshots);
    if upper == 0 {
        return Vec::new();
    }
    if upper < 2 {
        return vec![1];
    }
    stepped_range(2, upper, stride)
}

/// {lo, lo+stride, …} ∩ [lo, hi], plus `hi` itself.
pub fn stepped_range(lo: usize, hi: usize, stride: usize) -> Vec<usize> {
    if lo > hi {
        return Vec::new();
    }
    let mut values: Vec<usize> = (lo..=hi).step_by(stride.max(1)).collect();
    if values.last() != Some(&hi) {
        values.push(hi);
    }
    values
}

/// Fits the joint estimator at every candidate M and picks the BIC minimizer,
/// breaking ties towards the smallest M.
pub fn bic_scan(sample: &SampleCovariance, array: &SensorArray, m_values: &[usize]) -> Result<BicScan> {
    let sieve = EigenSieve::new(sample, array)?;
    bic_scan_with_sieve(sample, &sieve, m_values)
}

pub fn bic_scan_with_sieve(sample: &SampleCovariance, sieve: &EigenSieve, m_values: &[usize]) -> Result<BicScan> {
    if m_values.is_empty() {
        return Err(SimlError::InvalidArgument("BIC scan needs at least one candidate M".into()));
    }
    let l = sample.dim();
    let n = sample.n_snapshots();
    let entries: Vec<BicEntry> = m_values
        .par_iter()
        .map(|&m| {
            let fitted = if m == 0 || m >= l {
                Err(SimlError::Identifiability { m, l })
            } else {
                sieve.basis(m).and_then(|basis| estimate_joint(sample, &basis))
            };
            match fitted {
                Ok(est) => match est.log_likelihood {
                    Some(ll) => BicEntry {
                        m,
                        log_likelihood: Some(ll),
                        bic: Some(bic_value(ll, m, l, n)),
                        sigma_hat: Some(est.sigma_hat),
                        error: None,
                    },
                    None => BicEntry {
                        m,
                        log_likelihood: None,
                        bic: None,
                        sigma_hat: Some(est.sigma_hat),
                        error: Some("model covariance not positive definite".into()),
                    },
                },
                Err(e) => BicEntry { m, log_likelihood: None, bic: None, sigma_hat: None, error: Some(e.to_string()) },
            }
        })
        .collect();

    let selected_m = entries
        .iter()
        .filter_map(|e| e.bic.map(|b| (e.m, b)))
        .min_by(|a, b| a.1.total_cmp(&b.1).then(a.0.cmp(&b.0)))
        .map(|(m, _)| m)
        .ok_or(SimlError::ScanFailure)?;
    Ok(BicScan { entries, selected_m })
}
