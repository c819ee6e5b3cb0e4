//! Fitted-model JSON and samples CSV.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;

use super::ReportError;
use crate::counts::CountsMatrix;
use crate::ingest::SystemRef;
use crate::laplace::{GaussianPosterior, SampleSet, SampleSource};
use crate::mle::MleFit;
use crate::model::{self, ModelParams, OutcomeSystem};

/// A fit as written by `multibt fit --out`.
///
/// For systems without overtime outcomes `tau` is `null` and the covariance
/// covers the team strengths only.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FittedModel {
    pub system: SystemRef,
    pub teams: Vec<String>,
    pub lambda: Vec<f64>,
    pub tau: Option<f64>,
    pub covariance: Vec<Vec<f64>>,
    pub converged: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sd: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub correlation: Option<Vec<Vec<f64>>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub log_likelihood: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub iterations: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub max_residual: Option<f64>,
    /// `theta[label][i][j]`, `null` on the diagonal.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub theta: Option<BTreeMap<String, Vec<Vec<Option<f64>>>>>,
}

impl FittedModel {
    pub fn new(system: &OutcomeSystem, counts: &CountsMatrix, fit: &MleFit, post: Option<&GaussianPosterior>) -> Self {
        let t = counts.n_teams();
        let has_tau = system.has_overtime();
        let width = if has_tau { t + 1 } else { t };
        let (covariance, sd, correlation) = match post {
            Some(post) => {
                let corr = post.correlation();
                let cov: Vec<Vec<f64>> = (0..width)
                    .map(|r| (0..width).map(|c| post.covariance[(r, c)]).collect())
                    .collect();
                let rho: Vec<Vec<f64>> = (0..width)
                    .map(|r| (0..width).map(|c| corr.matrix[(r, c)]).collect())
                    .collect();
                (cov, Some(post.sd()[..width].to_vec()), Some(rho))
            }
            None => (Vec::new(), None, None),
        };
        Self {
            system: SystemRef::of(system),
            teams: counts.teams().to_vec(),
            lambda: fit.params.lambda.clone(),
            tau: has_tau.then_some(fit.params.tau),
            covariance,
            converged: fit.converged,
            sd,
            correlation,
            log_likelihood: Some(fit.log_likelihood_at_mle),
            iterations: Some(fit.iterations),
            max_residual: Some(fit.max_residual),
            theta: Some(theta_matrices(system, &fit.params)),
        }
    }

    pub fn outcome_system(&self) -> Result<OutcomeSystem, ReportError> {
        Ok(self.system.resolve()?)
    }

    pub fn params(&self) -> ModelParams {
        ModelParams::new(self.lambda.clone(), self.tau.unwrap_or(0.0))
    }

    /// Rebuilds the Gaussian approximation from the stored covariance.
    pub fn gaussian_posterior(&self) -> Result<GaussianPosterior, ReportError> {
        let t = self.teams.len();
        let width = if self.tau.is_some() { t + 1 } else { t };
        if self.covariance.len() != width || self.covariance.iter().any(|r| r.len() != width) {
            return Err(ReportError::Schema(format!(
                "fitted model has no {width}x{width} covariance; was the fit converged?"
            )));
        }
        let mut covariance = DMatrix::zeros(t + 1, t + 1);
        for (r, row) in self.covariance.iter().enumerate() {
            for (c, v) in row.iter().enumerate() {
                covariance[(r, c)] = *v;
            }
        }
        let mut mean = self.lambda.clone();
        mean.push(self.tau.unwrap_or(0.0));
        Ok(GaussianPosterior {
            teams: self.teams.clone(),
            mean: DVector::from_vec(mean),
            covariance,
            has_tau: self.tau.is_some(),
        })
    }

    pub fn team_index(&self, name: &str) -> Option<usize> {
        self.teams.iter().position(|t| t == name)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("fitted model serializes")
    }

    pub fn from_json(text: &str) -> Result<Self, ReportError> {
        let model: Self = serde_json::from_str(text).map_err(|e| ReportError::Schema(e.to_string()))?;
        if model.lambda.len() != model.teams.len() {
            return Err(ReportError::Schema(format!(
                "{} teams but {} strengths",
                model.teams.len(),
                model.lambda.len()
            )));
        }
        let system = model.outcome_system()?;
        if system.has_overtime() && model.tau.is_none() {
            return Err(ReportError::Schema("system has overtime outcomes but tau is null".into()));
        }
        Ok(model)
    }
}

/// `theta[label][i][j]` at the given parameters, `None` on the diagonal.
pub fn theta_matrices(system: &OutcomeSystem, params: &ModelParams) -> BTreeMap<String, Vec<Vec<Option<f64>>>> {
    let t = params.n_teams();
    let mut out: BTreeMap<String, Vec<Vec<Option<f64>>>> = system
        .labels()
        .map(|l| (l.to_string(), vec![vec![None; t]; t]))
        .collect();
    for i in 0..t {
        for j in 0..t {
            if i == j {
                continue;
            }
            let theta = model::outcome_probs(system, params, i, j).expect("indices in range");
            for (label, p) in system.labels().zip(theta.iter()) {
                out.get_mut(label).expect("label present")[i][j] = Some(*p);
            }
        }
    }
    out
}

/// Samples as CSV: `chain,draw,lambda_<team>...,tau`, draws numbered from 0
/// within each chain. Values use the shortest round-trip representation, so
/// output is byte-stable.
pub fn write_samples_csv(samples: &SampleSet) -> String {
    let mut out = String::from("chain,draw");
    for team in &samples.teams {
        out.push_str(",lambda_");
        out.push_str(team);
    }
    out.push_str(",tau\n");
    let mut per_chain: BTreeMap<u32, usize> = BTreeMap::new();
    for (draw, &chain) in samples.iter().zip(&samples.chain_ids) {
        let k = per_chain.entry(chain).or_insert(0);
        out.push_str(&format!("{chain},{k}"));
        *k += 1;
        for v in draw {
            out.push_str(&format!(",{v}"));
        }
        out.push('\n');
    }
    out
}

/// Parses [`write_samples_csv`] output. Files with more than one chain are
/// taken to be sampler output; the seed is not recorded and reads as 0.
pub fn read_samples_csv(text: &str) -> Result<SampleSet, ReportError> {
    let mut reader = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_reader(text.as_bytes());
    let header: Vec<String> = reader
        .headers()
        .map_err(|e| ReportError::Schema(e.to_string()))?
        .iter()
        .map(str::to_string)
        .collect();
    let n = header.len();
    let ok = n >= 4
        && header[0] == "chain"
        && header[1] == "draw"
        && header[n - 1] == "tau"
        && header[2..n - 1].iter().all(|h| h.starts_with("lambda_"));
    if !ok {
        return Err(ReportError::Schema(format!(
            "bad samples header `{}`: expected `chain,draw,lambda_<team>...,tau`",
            header.join(",")
        )));
    }
    let teams: Vec<String> = header[2..n - 1]
        .iter()
        .map(|h| h["lambda_".len()..].to_string())
        .collect();
    let mut draws = Vec::new();
    let mut chain_ids = Vec::new();
    for (row_no, row) in reader.records().enumerate() {
        let row = row.map_err(|e| ReportError::Schema(e.to_string()))?;
        let bad = |what: &str| ReportError::Schema(format!("samples row {}: bad {what}", row_no + 1));
        chain_ids.push(row[0].parse::<u32>().map_err(|_| bad("chain"))?);
        for v in row.iter().skip(2) {
            draws.push(v.parse::<f64>().map_err(|_| bad("value"))?);
        }
    }
    if chain_ids.is_empty() {
        return Err(ReportError::MissingSamples);
    }
    let source = if chain_ids.iter().any(|&c| c != chain_ids[0]) {
        SampleSource::Hmc
    } else {
        SampleSource::Gaussian
    };
    Ok(SampleSet {
        teams,
        draws,
        chain_ids,
        source,
        seed: 0,
    })
}
