//! Gaussian approximation to the posterior and posterior sample sets.
//!
//! With a prior that is flat in `(lambda, tau)` the posterior is proportional
//! to the likelihood, so the mode is the ML estimate and the covariance of the
//! quadratic expansion is the pseudo-inverse of the observed information. The
//! pseudo-inverse drops the translation null direction, which pins
//! `sum_i lambda_i = 0` for the mean, the covariance and every draw.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::counts::CountsMatrix;
use crate::mle::MleFit;
use crate::model::{hessian, ModelError, OutcomeSystem};

/// Relative eigenvalue cutoff below which a mode is treated as null.
pub const DEFAULT_RANK_TOL: f64 = 1e-9;

/// Two-sided 90% standard normal quantile.
const Z90: f64 = 1.644_853_626_951_472_2;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum LaplaceError {
    #[error("matrix is not symmetric (max asymmetry {0:e})")]
    NotSymmetric(f64),
    #[error("matrix is not square ({0} x {1})")]
    NotSquare(usize, usize),
    #[error("the maximum-likelihood fit did not converge")]
    NotConverged,
    #[error("team index {0} cannot be compared with itself")]
    SameTeam(usize),
    #[error("team index {index} out of range for {teams} teams")]
    TeamOutOfRange { index: usize, teams: usize },
    #[error(transparent)]
    Model(#[from] ModelError),
}

/// Moore-Penrose pseudo-inverse of a symmetric matrix via its eigendecomposition.
///
/// Eigenvalues with `|e| <= rank_tol * max|e|` are treated as zero; the rest
/// are replaced by their reciprocals.
pub fn pseudo_inverse(h: &DMatrix<f64>, rank_tol: f64) -> Result<DMatrix<f64>, LaplaceError> {
    let eig = symmetric_eigen(h)?;
    let cutoff = rank_tol * eig.eigenvalues.amax();
    let n = h.nrows();
    let mut out = DMatrix::zeros(n, n);
    for (k, &e) in eig.eigenvalues.iter().enumerate() {
        if e.abs() <= cutoff || e == 0.0 {
            continue;
        }
        let v = eig.eigenvectors.column(k);
        out += (v * v.transpose()) / e;
    }
    Ok(symmetrize(out))
}

fn symmetric_eigen(h: &DMatrix<f64>) -> Result<SymmetricEigen<f64, nalgebra::Dyn>, LaplaceError> {
    if h.nrows() != h.ncols() {
        return Err(LaplaceError::NotSquare(h.nrows(), h.ncols()));
    }
    let asym = (h - h.transpose()).amax();
    if asym > 1e-10 * h.amax().max(1.0) {
        return Err(LaplaceError::NotSymmetric(asym));
    }
    Ok(SymmetricEigen::new(symmetrize(h.clone())))
}

fn symmetrize(m: DMatrix<f64>) -> DMatrix<f64> {
    (&m + m.transpose()) * 0.5
}

/// Largest absolute entry of each of the four Penrose residuals:
/// `A X A - A`, `X A X - X`, `(A X)^T - A X`, `(X A)^T - X A`.
pub fn penrose_residuals(a: &DMatrix<f64>, x: &DMatrix<f64>) -> [f64; 4] {
    let ax = a * x;
    let xa = x * a;
    [
        (&ax * a - a).amax(),
        (&xa * x - x).amax(),
        (ax.transpose() - &ax).amax(),
        (xa.transpose() - &xa).amax(),
    ]
}

/// Mean, spread and central 90% interval of a scalar marginal.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MarginalSummary {
    pub mean: f64,
    pub sd: f64,
    pub lower90: f64,
    pub upper90: f64,
}

/// Correlation matrix with entries involving zero-variance coordinates set to 0.
#[derive(Debug, Clone, PartialEq)]
pub struct Correlation {
    pub matrix: DMatrix<f64>,
    /// Coordinates whose variance is zero (e.g. `tau` for win/loss systems).
    pub zero_variance: Vec<bool>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GaussianPosterior {
    pub teams: Vec<String>,
    /// `(lambda_1, ..., lambda_t, tau)`
    pub mean: DVector<f64>,
    /// Pseudo-inverse of the observed information, same coordinate order.
    pub covariance: DMatrix<f64>,
    /// Whether `tau` is a live parameter of the system.
    pub has_tau: bool,
}

/// Builds the Gaussian approximation about a converged ML fit.
pub fn gaussian_approximation(
    system: &OutcomeSystem,
    counts: &CountsMatrix,
    fit: &MleFit,
) -> Result<GaussianPosterior, LaplaceError> {
    if !fit.converged {
        return Err(LaplaceError::NotConverged);
    }
    let h = hessian(system, counts, &fit.params)?;
    let covariance = pseudo_inverse(&h, DEFAULT_RANK_TOL)?;
    let mut mean: Vec<f64> = fit.params.lambda.clone();
    mean.push(fit.params.tau);
    Ok(GaussianPosterior {
        teams: counts.teams().to_vec(),
        mean: DVector::from_vec(mean),
        covariance,
        has_tau: system.has_overtime(),
    })
}

impl GaussianPosterior {
    pub fn n_teams(&self) -> usize {
        self.teams.len()
    }

    /// `sqrt(Sigma_ii)` for every coordinate.
    pub fn sd(&self) -> Vec<f64> {
        self.covariance
            .diagonal()
            .iter()
            .map(|v| v.max(0.0).sqrt())
            .collect()
    }

    pub fn correlation(&self) -> Correlation {
        let n = self.covariance.nrows();
        let sd = self.sd();
        let scale = self.covariance.diagonal().amax().max(f64::MIN_POSITIVE);
        let zero_variance: Vec<bool> = self
            .covariance
            .diagonal()
            .iter()
            .map(|v| *v <= 1e-14 * scale)
            .collect();
        let matrix = DMatrix::from_fn(n, n, |i, j| {
            if zero_variance[i] || zero_variance[j] {
                0.0
            } else if i == j {
                1.0
            } else {
                self.covariance[(i, j)] / (sd[i] * sd[j])
            }
        });
        Correlation {
            matrix,
            zero_variance,
        }
    }

    /// Closed-form marginal of `gamma_ij = lambda_i - lambda_j`.
    pub fn marginal_gamma(&self, i: usize, j: usize) -> Result<MarginalSummary, LaplaceError> {
        check_pair(self.n_teams(), i, j)?;
        let mean = self.mean[i] - self.mean[j];
        let c = &self.covariance;
        let var = c[(i, i)] + c[(j, j)] - 2.0 * c[(i, j)];
        let sd = var.max(0.0).sqrt();
        Ok(MarginalSummary {
            mean,
            sd,
            lower90: mean - Z90 * sd,
            upper90: mean + Z90 * sd,
        })
    }

    /// Closed-form marginal of `tau`.
    pub fn marginal_tau(&self) -> MarginalSummary {
        let t = self.n_teams();
        let mean = self.mean[t];
        let sd = self.covariance[(t, t)].max(0.0).sqrt();
        MarginalSummary {
            mean,
            sd,
            lower90: mean - Z90 * sd,
            upper90: mean + Z90 * sd,
        }
    }

    /// Draws `n` samples from `N(mean, covariance)`.
    ///
    /// The factor is built from the eigenvectors of the covariance with
    /// non-null eigenvalues, so the draws stay inside the constrained subspace.
    pub fn sample(&self, n: usize, seed: u64) -> SampleSet {
        sample_gaussian(self, n, seed)
    }
}

fn check_pair(teams: usize, i: usize, j: usize) -> Result<(), LaplaceError> {
    for index in [i, j] {
        if index >= teams {
            return Err(LaplaceError::TeamOutOfRange { index, teams });
        }
    }
    if i == j {
        return Err(LaplaceError::SameTeam(i));
    }
    Ok(())
}

/// See [`GaussianPosterior::sample`].
pub fn sample_gaussian(post: &GaussianPosterior, n: usize, seed: u64) -> SampleSet {
    let dim = post.mean.len();
    let eig = SymmetricEigen::new(symmetrize(post.covariance.clone()));
    let cutoff = DEFAULT_RANK_TOL * eig.eigenvalues.amax();
    let factors: Vec<(DVector<f64>, f64)> = eig
        .eigenvalues
        .iter()
        .enumerate()
        .filter(|(_, &e)| e > cutoff && e > 0.0)
        .map(|(k, &e)| (eig.eigenvectors.column(k).into_owned(), e.sqrt()))
        .collect();

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut draws = Vec::with_capacity(n * dim);
    let mut x = DVector::zeros(dim);
    for _ in 0..n {
        x.copy_from(&post.mean);
        for (v, s) in &factors {
            let z: f64 = StandardNormal.sample(&mut rng);
            x.axpy(z * s, v, 1.0);
        }
        draws.extend(x.iter());
    }
    SampleSet {
        teams: post.teams.clone(),
        draws,
        chain_ids: vec![0; n],
        source: SampleSource::Gaussian,
        seed,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SampleSource {
    Gaussian,
    Hmc,
}

/// Posterior draws in `(lambda_1, ..., lambda_t, tau)` coordinates.
#[derive(Debug, Clone, PartialEq)]
pub struct SampleSet {
    pub teams: Vec<String>,
    /// Row-major, `t + 1` values per draw.
    pub draws: Vec<f64>,
    pub chain_ids: Vec<u32>,
    pub source: SampleSource,
    pub seed: u64,
}

impl SampleSet {
    pub fn n_teams(&self) -> usize {
        self.teams.len()
    }

    pub fn width(&self) -> usize {
        self.teams.len() + 1
    }

    pub fn len(&self) -> usize {
        self.chain_ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.chain_ids.is_empty()
    }

    pub fn draw(&self, k: usize) -> &[f64] {
        let w = self.width();
        &self.draws[k * w..(k + 1) * w]
    }

    pub fn iter(&self) -> impl Iterator<Item = &[f64]> {
        self.draws.chunks_exact(self.width())
    }

    /// One coordinate across all draws.
    pub fn column(&self, c: usize) -> Vec<f64> {
        self.iter().map(|d| d[c]).collect()
    }

    pub fn tau(&self) -> Vec<f64> {
        self.column(self.n_teams())
    }

    pub fn gamma(&self, i: usize, j: usize) -> Vec<f64> {
        self.iter().map(|d| d[i] - d[j]).collect()
    }

    /// Distinct chain ids in first-seen order.
    pub fn chain_labels(&self) -> Vec<u32> {
        let mut seen = Vec::new();
        for &c in &self.chain_ids {
            if !seen.contains(&c) {
                seen.push(c);
            }
        }
        seen
    }

    /// Values of one coordinate split by chain, in [`Self::chain_labels`] order.
    pub fn column_by_chain(&self, c: usize) -> Vec<Vec<f64>> {
        self.chain_labels()
            .into_iter()
            .map(|label| {
                self.iter()
                    .zip(&self.chain_ids)
                    .filter(|(_, &id)| id == label)
                    .map(|(d, _)| d[c])
                    .collect()
            })
            .collect()
    }

    /// Sample marginal of `gamma_ij`.
    pub fn marginal_gamma(&self, i: usize, j: usize) -> Result<MarginalSummary, LaplaceError> {
        check_pair(self.n_teams(), i, j)?;
        Ok(summarize(&self.gamma(i, j)))
    }
}

/// Sample mean, standard deviation and empirical 5%/95% quantiles.
pub fn summarize(values: &[f64]) -> MarginalSummary {
    let n = values.len();
    if n == 0 {
        return MarginalSummary {
            mean: f64::NAN,
            sd: f64::NAN,
            lower90: f64::NAN,
            upper90: f64::NAN,
        };
    }
    let mean = values.iter().sum::<f64>() / n as f64;
    let var = if n > 1 {
        values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64
    } else {
        0.0
    };
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    MarginalSummary {
        mean,
        sd: var.sqrt(),
        lower90: quantile_sorted(&sorted, 0.05),
        upper90: quantile_sorted(&sorted, 0.95),
    }
}

/// Linear-interpolation quantile of already sorted data.
pub fn quantile_sorted(sorted: &[f64], q: f64) -> f64 {
    let n = sorted.len();
    if n == 1 {
        return sorted[0];
    }
    let h = q * (n - 1) as f64;
    let lo = h.floor() as usize;
    let hi = (lo + 1).min(n - 1);
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}
