//! Rank-normalized split R-hat and bulk effective sample size.
//!
//! Follows the rank-normalization scheme of Vehtari et al. (2021): pooled
//! draws are replaced by normal scores of their ranks, chains are split in
//! half, and the classic potential scale reduction and Geyer-truncated
//! autocorrelation ESS are computed on the result.

use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};
use thiserror::Error;

use crate::laplace::SampleSet;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum DiagnosticsError {
    #[error("R-hat needs at least two chains, found {0}")]
    TooFewChains(usize),
    #[error("chains need at least 4 draws each, shortest has {0}")]
    TooFewDraws(usize),
}

/// Convergence summary for one coordinate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoordinateDiagnostics {
    pub name: String,
    /// `None` when the draws have zero variance and R-hat is undefined.
    pub rhat: Option<f64>,
    pub ess_bulk: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConvergenceDiagnostics {
    pub coordinates: Vec<CoordinateDiagnostics>,
}

impl ConvergenceDiagnostics {
    /// Largest defined R-hat across coordinates.
    pub fn max_rhat(&self) -> Option<f64> {
        self.coordinates
            .iter()
            .filter_map(|c| c.rhat)
            .fold(None, |acc, r| Some(acc.map_or(r, |a: f64| a.max(r))))
    }

    /// Coordinates whose R-hat could not be computed.
    pub fn undefined(&self) -> Vec<&str> {
        self.coordinates
            .iter()
            .filter(|c| c.rhat.is_none())
            .map(|c| c.name.as_str())
            .collect()
    }

    /// True if every defined R-hat is at most `threshold`.
    pub fn all_rhat_below(&self, threshold: f64) -> bool {
        self.coordinates
            .iter()
            .all(|c| c.rhat.is_none_or(|r| r <= threshold))
    }
}

/// Diagnostics for every `(lambda_i, tau)` coordinate of a multi-chain sample set.
pub fn diagnostics(samples: &SampleSet) -> Result<ConvergenceDiagnostics, DiagnosticsError> {
    let mut names: Vec<String> = samples.teams.iter().map(|t| format!("lambda_{t}")).collect();
    names.push("tau".to_string());
    let mut coordinates = Vec::with_capacity(names.len());
    for (c, name) in names.into_iter().enumerate() {
        let chains = samples.column_by_chain(c);
        coordinates.push(CoordinateDiagnostics {
            name,
            rhat: rank_normalized_rhat(&chains)?,
            ess_bulk: ess_bulk(&chains)?,
        });
    }
    Ok(ConvergenceDiagnostics { coordinates })
}

fn check_chains(chains: &[Vec<f64>]) -> Result<usize, DiagnosticsError> {
    if chains.len() < 2 {
        return Err(DiagnosticsError::TooFewChains(chains.len()));
    }
    let n = chains.iter().map(Vec::len).min().unwrap_or(0);
    if n < 4 {
        return Err(DiagnosticsError::TooFewDraws(n));
    }
    Ok(n)
}

/// Halves each chain (dropping the middle draw of odd-length chains).
fn split_chains(chains: &[Vec<f64>], n: usize) -> Vec<Vec<f64>> {
    let half = n / 2;
    let mut out = Vec::with_capacity(chains.len() * 2);
    for c in chains {
        out.push(c[..half].to_vec());
        out.push(c[n - half..n].to_vec());
    }
    out
}

fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

fn sample_var(v: &[f64]) -> f64 {
    let m = mean(v);
    v.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (v.len() as f64 - 1.0)
}

/// Classic potential scale reduction on already split chains of equal length.
fn psrf(chains: &[Vec<f64>]) -> Option<f64> {
    let n = chains[0].len() as f64;
    let means: Vec<f64> = chains.iter().map(|c| mean(c)).collect();
    let within = mean(&chains.iter().map(|c| sample_var(c)).collect::<Vec<_>>());
    if !(within > 0.0) || !within.is_finite() {
        return None;
    }
    let between = n * sample_var(&means);
    Some((((n - 1.0) / n * within + between / n) / within).sqrt())
}

/// Split R-hat on the raw draws.
pub fn split_rhat(chains: &[Vec<f64>]) -> Result<Option<f64>, DiagnosticsError> {
    let n = check_chains(chains)?;
    Ok(psrf(&split_chains(chains, n)))
}

/// Normal scores of the pooled fractional ranks, reshaped like the input.
fn rank_normalize(chains: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let mut pooled: Vec<(f64, usize, usize)> = Vec::new();
    for (c, chain) in chains.iter().enumerate() {
        for (k, &v) in chain.iter().enumerate() {
            pooled.push((v, c, k));
        }
    }
    pooled.sort_by(|a, b| a.0.total_cmp(&b.0));
    let s = pooled.len() as f64;
    let normal = Normal::standard();
    let mut out: Vec<Vec<f64>> = chains.iter().map(|c| vec![0.0; c.len()]).collect();
    let mut start = 0;
    while start < pooled.len() {
        let mut end = start + 1;
        while end < pooled.len() && pooled[end].0 == pooled[start].0 {
            end += 1;
        }
        // average 1-based rank of the tie block
        let rank = (start + end + 1) as f64 / 2.0;
        let z = normal.inverse_cdf((rank - 0.375) / (s + 0.25));
        for &(_, c, k) in &pooled[start..end] {
            out[c][k] = z;
        }
        start = end;
    }
    out
}

/// Rank-normalized split R-hat: the larger of the bulk and folded versions.
pub fn rank_normalized_rhat(chains: &[Vec<f64>]) -> Result<Option<f64>, DiagnosticsError> {
    let n = check_chains(chains)?;
    let trimmed: Vec<Vec<f64>> = chains.iter().map(|c| c[..n].to_vec()).collect();
    if psrf(&split_chains(&trimmed, n)).is_none() {
        return Ok(None);
    }
    let bulk = psrf(&split_chains(&rank_normalize(&trimmed), n));
    let mut pooled: Vec<f64> = trimmed.iter().flatten().copied().collect();
    pooled.sort_by(f64::total_cmp);
    let median = crate::laplace::quantile_sorted(&pooled, 0.5);
    let folded: Vec<Vec<f64>> = trimmed
        .iter()
        .map(|c| c.iter().map(|v| (v - median).abs()).collect())
        .collect();
    let tail = psrf(&split_chains(&rank_normalize(&folded), n));
    Ok(match (bulk, tail) {
        (Some(b), Some(t)) => Some(b.max(t)),
        (b, t) => b.or(t),
    })
}

/// Bulk effective sample size (rank-normalized, split chains).
pub fn ess_bulk(chains: &[Vec<f64>]) -> Result<Option<f64>, DiagnosticsError> {
    let n = check_chains(chains)?;
    let trimmed: Vec<Vec<f64>> = chains.iter().map(|c| c[..n].to_vec()).collect();
    if psrf(&split_chains(&trimmed, n)).is_none() {
        return Ok(None);
    }
    Ok(effective_sample_size(&split_chains(&rank_normalize(&trimmed), n)))
}

/// Biased autocovariance of one chain at lags `0..n`.
fn autocovariance(chain: &[f64]) -> Vec<f64> {
    let n = chain.len();
    let m = mean(chain);
    let centered: Vec<f64> = chain.iter().map(|v| v - m).collect();
    (0..n)
        .map(|lag| {
            centered[..n - lag]
                .iter()
                .zip(&centered[lag..])
                .map(|(a, b)| a * b)
                .sum::<f64>()
                / n as f64
        })
        .collect()
}

/// Multi-chain ESS with Geyer's initial monotone sequence truncation.
pub fn effective_sample_size(chains: &[Vec<f64>]) -> Option<f64> {
    let m = chains.len();
    let n = chains.iter().map(Vec::len).min()?;
    if m == 0 || n < 4 {
        return None;
    }
    let acov: Vec<Vec<f64>> = chains.iter().map(|c| autocovariance(&c[..n])).collect();
    let chain_means: Vec<f64> = chains.iter().map(|c| mean(&c[..n])).collect();
    let nf = n as f64;
    let mean_var = acov.iter().map(|a| a[0] * nf / (nf - 1.0)).sum::<f64>() / m as f64;
    let mut var_plus = mean_var * (nf - 1.0) / nf;
    if m > 1 {
        var_plus += sample_var(&chain_means);
    }
    if !(var_plus > 0.0) {
        return None;
    }
    let acov_mean = |lag: usize| acov.iter().map(|a| a[lag]).sum::<f64>() / m as f64;

    let mut rho = vec![0.0; n];
    rho[0] = 1.0;
    let mut rho_even = 1.0;
    let mut rho_odd = 1.0 - (mean_var - acov_mean(1)) / var_plus;
    rho[1] = rho_odd;
    let mut s = 1;
    while s < n - 4 && rho_even + rho_odd > 0.0 {
        rho_even = 1.0 - (mean_var - acov_mean(s + 1)) / var_plus;
        rho_odd = 1.0 - (mean_var - acov_mean(s + 2)) / var_plus;
        if rho_even + rho_odd >= 0.0 {
            rho[s + 1] = rho_even;
            rho[s + 2] = rho_odd;
        }
        s += 2;
    }
    let max_s = s;
    if rho[max_s] > 0.0 && max_s + 1 < n {
        rho[max_s + 1] = rho[max_s];
    }
    let mut k = 1;
    while k + 3 <= max_s {
        if rho[k + 1] + rho[k + 2] > rho[k - 1] + rho[k] {
            let avg = (rho[k - 1] + rho[k]) / 2.0;
            rho[k + 1] = avg;
            rho[k + 2] = avg;
        }
        k += 2;
    }
    let total = (m * n) as f64;
    let next = if max_s + 1 < n { rho[max_s + 1] } else { 0.0 };
    let tau = (-1.0 + 2.0 * rho[..max_s].iter().sum::<f64>() + next).max(1.0 / total.log10());
    Some(total / tau)
}
