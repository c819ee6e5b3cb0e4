//! Exact-posterior sampling with Hamiltonian Monte Carlo.
//!
//! The flat prior leaves `sum_i lambda_i` unconstrained, so the sampler works
//! in the reduced coordinates `omega_k = lambda_k - lambda_{k+1}`
//! (`k = 1..t-1`) plus `tau`. Every pairwise difference is a partial sum,
//! `gamma_ij = omega_i + ... + omega_{j-1}`. Draws are mapped back to
//! `lambda` with `sum_i lambda_i = 0`.
//!
//! For systems without overtime outcomes `tau` does not enter the likelihood;
//! a standard normal log-density on `tau` keeps the chain proper.

mod diagnostics;
mod sampler;

pub use diagnostics::{
    diagnostics, effective_sample_size, ess_bulk, rank_normalized_rhat, split_rhat, ConvergenceDiagnostics,
    CoordinateDiagnostics, DiagnosticsError,
};
pub use sampler::{leapfrog_energy_error, LogDensity};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::counts::CountsMatrix;
use crate::laplace::{SampleSet, SampleSource};
use crate::mle::{check_identifiable, DegenerateData};
use crate::model::{self, ModelError, ModelParams, OutcomeSystem};
use sampler::{run_chain, ChainSettings};

/// Split R-hat above which a run is flagged as not converged.
pub const RHAT_THRESHOLD: f64 = 1.05;

const LN_SQRT_2PI: f64 = 0.918_938_533_204_672_8;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum HmcError {
    #[error(transparent)]
    Degenerate(#[from] DegenerateData),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Diagnostics(#[from] DiagnosticsError),
    #[error("invalid HMC configuration: {0}")]
    Config(&'static str),
    #[error("need at least two teams to sample, found {0}")]
    TooFewTeams(usize),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HmcConfig {
    pub chains: usize,
    pub warmup: usize,
    pub draws_per_chain: usize,
    pub leapfrog_steps: usize,
    pub target_accept: f64,
    pub seed: u64,
}

impl Default for HmcConfig {
    fn default() -> Self {
        Self {
            chains: 4,
            warmup: 1000,
            draws_per_chain: 1000,
            leapfrog_steps: 32,
            target_accept: 0.8,
            seed: 0,
        }
    }
}

impl HmcConfig {
    pub fn with_seed(seed: u64) -> Self {
        Self {
            seed,
            ..Self::default()
        }
    }

    fn validate(&self) -> Result<(), HmcError> {
        if self.chains == 0 || self.warmup == 0 || self.draws_per_chain == 0 || self.leapfrog_steps == 0 {
            return Err(HmcError::Config("chains, warmup, draws and leapfrog steps must all be >= 1"));
        }
        if !(self.target_accept > 0.0 && self.target_accept < 1.0) {
            return Err(HmcError::Config("target_accept must lie in (0, 1)"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HmcDiagnostics {
    pub accept_rate: Vec<f64>,
    pub step_size: Vec<f64>,
    /// Adapted diagonal inverse metric of each chain, in `(omega, tau)` coordinates.
    pub inv_metric: Vec<Vec<f64>>,
    pub divergences: usize,
    /// Per-coordinate R-hat and ESS; `None` when fewer than two chains ran.
    pub convergence: Option<ConvergenceDiagnostics>,
    /// Set when some R-hat exceeds [`RHAT_THRESHOLD`] or is undefined.
    pub non_convergence: bool,
}

/// The posterior in reduced coordinates `(omega_1, ..., omega_{t-1}, tau)`.
#[derive(Debug, Clone, Copy)]
pub struct ReducedPosterior<'a> {
    system: &'a OutcomeSystem,
    counts: &'a CountsMatrix,
}

impl<'a> ReducedPosterior<'a> {
    pub fn new(system: &'a OutcomeSystem, counts: &'a CountsMatrix) -> Result<Self, HmcError> {
        model::check_dims(system, counts, &ModelParams::zeros(counts.n_teams()))?;
        if counts.n_teams() < 2 {
            return Err(HmcError::TooFewTeams(counts.n_teams()));
        }
        Ok(Self { system, counts })
    }

    fn evaluate(&self, x: &[f64], grad: &mut [f64]) -> Result<f64, ModelError> {
        let t = self.counts.n_teams();
        let (omega, tau) = (&x[..t - 1], x[t - 1]);
        let params = ModelParams::new(lambda_from_omega(omega), tau);
        let mut logp = model::log_likelihood(self.system, self.counts, &params)?;
        let g = model::grad_log_likelihood(self.system, self.counts, &params)?;
        // lambda_i depends on omega_k with coefficient -1 for i > k.
        let mut tail = 0.0;
        for k in (0..t - 1).rev() {
            tail += g.dlambda[k + 1];
            grad[k] = -tail;
        }
        grad[t - 1] = g.dtau;
        if !self.system.has_overtime() {
            logp += -0.5 * tau * tau - LN_SQRT_2PI;
            grad[t - 1] -= tau;
        }
        Ok(logp)
    }
}

impl LogDensity for ReducedPosterior<'_> {
    fn dim(&self) -> usize {
        self.counts.n_teams()
    }

    fn log_density_and_grad(&self, x: &[f64], grad: &mut [f64]) -> f64 {
        self.evaluate(x, grad).unwrap_or(f64::NEG_INFINITY)
    }
}

/// `lambda` with `lambda_1 = 0` shifted to sum to zero.
pub fn lambda_from_omega(omega: &[f64]) -> Vec<f64> {
    let mut lambda = Vec::with_capacity(omega.len() + 1);
    let mut acc = 0.0;
    lambda.push(acc);
    for w in omega {
        acc -= w;
        lambda.push(acc);
    }
    let mean = lambda.iter().sum::<f64>() / lambda.len() as f64;
    lambda.iter().map(|l| l - mean).collect()
}

pub fn omega_from_lambda(lambda: &[f64]) -> Vec<f64> {
    lambda.windows(2).map(|w| w[0] - w[1]).collect()
}

/// Log posterior density and gradient in `(omega, tau)`.
pub fn log_posterior_reduced(
    system: &OutcomeSystem,
    counts: &CountsMatrix,
    omega: &[f64],
    tau: f64,
) -> Result<(f64, Vec<f64>), HmcError> {
    let target = ReducedPosterior::new(system, counts)?;
    if omega.len() + 1 != counts.n_teams() {
        return Err(ModelError::DimensionMismatch {
            what: "omega length",
            expected: counts.n_teams() - 1,
            found: omega.len(),
        }
        .into());
    }
    let mut x = omega.to_vec();
    x.push(tau);
    let mut grad = vec![0.0; x.len()];
    let logp = target.evaluate(&x, &mut grad)?;
    Ok((logp, grad))
}

/// Raw per-chain draws from any [`LogDensity`], in its own coordinates.
#[derive(Debug, Clone)]
pub struct ChainDraws {
    pub chains: Vec<Vec<Vec<f64>>>,
    pub accept_rate: Vec<f64>,
    pub step_size: Vec<f64>,
    pub inv_metric: Vec<Vec<f64>>,
    pub divergences: usize,
}

/// Runs `config.chains` independent chains on `target`.
///
/// Chain `c` draws from a ChaCha stream keyed by `(config.seed, c)` and starts
/// uniformly in `[-2, 2]^d`, so output is reproducible regardless of how the
/// chains are scheduled.
pub fn sample_target<T: LogDensity + Sync + ?Sized>(
    target: &T,
    config: &HmcConfig,
) -> Result<ChainDraws, HmcError> {
    config.validate()?;
    let settings = ChainSettings {
        warmup: config.warmup,
        draws: config.draws_per_chain,
        steps: config.leapfrog_steps,
        target_accept: config.target_accept,
    };
    let results: Vec<_> = (0..config.chains)
        .into_par_iter()
        .map(|c| {
            let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
            rng.set_stream(c as u64);
            let start: Vec<f64> = (0..target.dim()).map(|_| rng.random_range(-2.0..2.0)).collect();
            run_chain(target, start, settings, &mut rng)
        })
        .collect();
    Ok(ChainDraws {
        accept_rate: results.iter().map(|r| r.accept_rate).collect(),
        step_size: results.iter().map(|r| r.step_size).collect(),
        inv_metric: results.iter().map(|r| r.inv_mass.clone()).collect(),
        divergences: results.iter().map(|r| r.divergences).sum(),
        chains: results.into_iter().map(|r| r.draws).collect(),
    })
}

/// Samples the exact posterior of `(lambda, tau)`.
///
/// Data without a proper posterior are rejected up front. A run whose R-hat
/// exceeds [`RHAT_THRESHOLD`] still returns its draws, with
/// `non_convergence` set in the diagnostics.
pub fn hmc_sample(
    system: &OutcomeSystem,
    counts: &CountsMatrix,
    config: &HmcConfig,
) -> Result<(SampleSet, HmcDiagnostics), HmcError> {
    config.validate()?;
    let target = ReducedPosterior::new(system, counts)?;
    check_identifiable(counts)?;
    let raw = sample_target(&target, config)?;

    let t = counts.n_teams();
    let mut draws = Vec::with_capacity(config.chains * config.draws_per_chain * (t + 1));
    let mut chain_ids = Vec::with_capacity(config.chains * config.draws_per_chain);
    for (c, chain) in raw.chains.iter().enumerate() {
        for x in chain {
            draws.extend(lambda_from_omega(&x[..t - 1]));
            draws.push(x[t - 1]);
            chain_ids.push(c as u32);
        }
    }
    let samples = SampleSet {
        teams: counts.teams().to_vec(),
        draws,
        chain_ids,
        source: SampleSource::Hmc,
        seed: config.seed,
    };
    let convergence = if config.chains >= 2 {
        Some(diagnostics(&samples)?)
    } else {
        None
    };
    let non_convergence = convergence
        .as_ref()
        .is_some_and(|c| !c.all_rhat_below(RHAT_THRESHOLD) || !c.undefined().is_empty());
    Ok((
        samples,
        HmcDiagnostics {
            accept_rate: raw.accept_rate,
            step_size: raw.step_size,
            inv_metric: raw.inv_metric,
            divergences: raw.divergences,
            convergence,
            non_convergence,
        },
    ))
}
