//! Generalized Bradley-Terry ratings for games with several possible
//! outcomes: wins and losses, ties, overtime results, or any point system.
//!
//! Strengths are fitted by maximum likelihood ([`fit_mle`]), with a Gaussian
//! approximation to the posterior ([`gaussian_approximation`]) and an exact
//! Hamiltonian Monte Carlo sampler ([`hmc_sample`]).

pub mod counts;
pub mod fixtures;
pub mod hmc;
pub mod ingest;
pub mod laplace;
pub mod mle;
pub mod model;
pub mod report;

pub use counts::{CountsError, CountsMatrix};
pub use hmc::{hmc_sample, ConvergenceDiagnostics, HmcConfig, HmcDiagnostics, HmcError};
pub use ingest::{aggregate, collapse, parse_games_csv, CollapseMap, GameRecord, IngestError};
pub use laplace::{
    gaussian_approximation, penrose_residuals, pseudo_inverse, sample_gaussian, GaussianPosterior, LaplaceError,
    MarginalSummary, SampleSet, SampleSource,
};
pub use mle::{check_identifiable, fit_mle, fit_mle_from, DegenerateData, FitError, FitOptions, MleFit};
pub use model::{
    even_match_overtime_prob, grad_log_likelihood, hessian, log_likelihood, outcome_probs, playoff_win_prob,
    GradVector, ModelError, ModelParams, OutcomeSpec, OutcomeSystem, ProbVector, SystemError,
};
pub use report::{FittedModel, ReportBundle, ReportError};
