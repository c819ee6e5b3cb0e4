//! Outcome systems and the generalized Bradley-Terry probability model.
//!
//! A game between teams `i` and `j` ends in outcome `I` with probability
//!
//! ```text
//! theta^I_ij = softmax_I( p_I * (lambda_i - lambda_j) + o_I * tau )
//! ```
//!
//! where `p_I` is the share of the points awarded to team `i` for outcome
//! `I`, and `o_I` flags outcomes that only occur in tied or overtime games.
//! Standard Bradley-Terry, the Davidson tie model and the four-outcome
//! regulation/overtime model are all special cases.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};
use std::collections::HashMap;
use std::fmt;
use std::ops::Deref;
use thiserror::Error;

use crate::counts::CountsMatrix;

/// Tolerance used when comparing exponents such as `p_{-I} = 1 - p_I`.
const EXPONENT_TOL: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SystemError {
    #[error("duplicate outcome label `{0}`")]
    DuplicateLabel(String),
    #[error("outcome `{label}` names opposite `{opposite}` which is not in the system")]
    MissingOpposite { label: String, opposite: String },
    #[error("outcome `{label}` has exponent p = {p} outside [0, 1]")]
    BadExponent { label: String, p: f64 },
    #[error("outcome `{label}` has overtime flag o = {o}; expected 0 or 1")]
    BadOvertimeFlag { label: String, o: u8 },
    #[error("outcomes `{label}` and `{opposite}` are not a consistent opposite pair")]
    BadPairing { label: String, opposite: String },
    #[error("outcome `{label}` is its own opposite but has p = {p} (must be 1/2)")]
    SelfOppositeNotHalf { label: String, p: f64 },
    #[error("an outcome system needs at least two outcomes")]
    TooFewOutcomes,
    #[error("an outcome system needs a full win (p = 1) and its opposite (p = 0)")]
    NoFullWin,
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ModelError {
    #[error("team index {0} cannot play itself")]
    SameTeam(usize),
    #[error("team index {index} out of range for {teams} teams")]
    TeamOutOfRange { index: usize, teams: usize },
    #[error("dimension mismatch in {what}: expected {expected}, found {found}")]
    DimensionMismatch {
        what: &'static str,
        expected: usize,
        found: usize,
    },
    #[error("counts were built for outcome system `{counts}` but `{system}` was supplied")]
    SystemMismatch { counts: String, system: String },
}

/// One possible game result, seen from the first team's perspective.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OutcomeSpec {
    pub label: String,
    /// Share of the points earned by the first team.
    pub p: f64,
    /// 1 if the outcome only happens in a tied or overtime game.
    pub o: u8,
    /// Label of the same result seen from the other team's side.
    pub opposite: String,
}

impl OutcomeSpec {
    pub fn new(label: &str, p: f64, o: u8, opposite: &str) -> Self {
        Self {
            label: label.to_string(),
            p,
            o,
            opposite: opposite.to_string(),
        }
    }
}

/// A validated, ordered set of outcomes.
///
/// The outcome order fixes the component order of every [`ProbVector`] and of
/// the per-outcome count matrices. Results do not depend on the order chosen.
#[derive(Debug, Clone, PartialEq)]
pub struct OutcomeSystem {
    name: String,
    outcomes: Vec<OutcomeSpec>,
    opposite: Vec<usize>,
}

impl OutcomeSystem {
    /// Validates a raw outcome list.
    pub fn new(name: &str, raw: Vec<OutcomeSpec>) -> Result<Self, SystemError> {
        if raw.len() < 2 {
            return Err(SystemError::TooFewOutcomes);
        }
        let mut index = HashMap::new();
        for (k, spec) in raw.iter().enumerate() {
            if index.insert(spec.label.as_str(), k).is_some() {
                return Err(SystemError::DuplicateLabel(spec.label.clone()));
            }
            if !(0.0..=1.0).contains(&spec.p) || !spec.p.is_finite() {
                return Err(SystemError::BadExponent {
                    label: spec.label.clone(),
                    p: spec.p,
                });
            }
            if spec.o > 1 {
                return Err(SystemError::BadOvertimeFlag {
                    label: spec.label.clone(),
                    o: spec.o,
                });
            }
        }
        let mut opposite = Vec::with_capacity(raw.len());
        for spec in &raw {
            let Some(&k) = index.get(spec.opposite.as_str()) else {
                return Err(SystemError::MissingOpposite {
                    label: spec.label.clone(),
                    opposite: spec.opposite.clone(),
                });
            };
            opposite.push(k);
        }
        for (k, spec) in raw.iter().enumerate() {
            let m = opposite[k];
            let other = &raw[m];
            if m == k {
                if (spec.p - 0.5).abs() > EXPONENT_TOL {
                    return Err(SystemError::SelfOppositeNotHalf {
                        label: spec.label.clone(),
                        p: spec.p,
                    });
                }
                continue;
            }
            let involution = opposite[m] == k;
            let exponents = (other.p - (1.0 - spec.p)).abs() <= EXPONENT_TOL && other.o == spec.o;
            if !involution || !exponents {
                return Err(SystemError::BadPairing {
                    label: spec.label.clone(),
                    opposite: other.label.clone(),
                });
            }
        }
        let has_full_win = raw
            .iter()
            .enumerate()
            .any(|(k, s)| s.p == 1.0 && raw[opposite[k]].p == 0.0);
        if !has_full_win {
            return Err(SystemError::NoFullWin);
        }
        Ok(Self {
            name: name.to_string(),
            outcomes: raw,
            opposite,
        })
    }

    /// Standard Bradley-Terry: win or loss.
    pub fn bradley_terry() -> Self {
        Self::new(
            "bt",
            vec![OutcomeSpec::new("W", 1.0, 0, "L"), OutcomeSpec::new("L", 0.0, 0, "W")],
        )
        .expect("built-in system is valid")
    }

    /// Davidson's extension with ties.
    pub fn davidson() -> Self {
        Self::new(
            "davidson",
            vec![
                OutcomeSpec::new("W", 1.0, 0, "L"),
                OutcomeSpec::new("T", 0.5, 1, "T"),
                OutcomeSpec::new("L", 0.0, 0, "W"),
            ],
        )
        .expect("built-in system is valid")
    }

    /// Regulation and overtime/shootout wins and losses, 3-2-1-0 points.
    pub fn four_outcome() -> Self {
        Self::new(
            "four-outcome",
            vec![
                OutcomeSpec::new("RW", 1.0, 0, "RL"),
                OutcomeSpec::new("OW", 2.0 / 3.0, 1, "OL"),
                OutcomeSpec::new("OL", 1.0 / 3.0, 1, "OW"),
                OutcomeSpec::new("RL", 0.0, 0, "RW"),
            ],
        )
        .expect("built-in system is valid")
    }

    /// 5-3-2-0 shootout point system.
    pub fn ccha() -> Self {
        Self::new(
            "ccha",
            vec![
                OutcomeSpec::new("W", 1.0, 0, "L"),
                OutcomeSpec::new("SW", 3.0 / 5.0, 1, "SL"),
                OutcomeSpec::new("SL", 2.0 / 5.0, 1, "SW"),
                OutcomeSpec::new("L", 0.0, 0, "W"),
            ],
        )
        .expect("built-in system is valid")
    }

    /// Looks up a built-in system by the name used on the command line and in files.
    pub fn builtin(name: &str) -> Option<Self> {
        match name {
            "bt" => Some(Self::bradley_terry()),
            "davidson" => Some(Self::davidson()),
            "four-outcome" => Some(Self::four_outcome()),
            "ccha" => Some(Self::ccha()),
            _ => None,
        }
    }

    /// True if this is structurally identical to the built-in of the same name.
    pub fn is_builtin(&self) -> bool {
        Self::builtin(&self.name).is_some_and(|b| b.outcomes == self.outcomes)
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn outcomes(&self) -> &[OutcomeSpec] {
        &self.outcomes
    }

    pub fn len(&self) -> usize {
        self.outcomes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.outcomes.is_empty()
    }

    pub fn labels(&self) -> impl Iterator<Item = &str> {
        self.outcomes.iter().map(|s| s.label.as_str())
    }

    pub fn index_of(&self, label: &str) -> Option<usize> {
        self.outcomes.iter().position(|s| s.label == label)
    }

    pub fn p(&self, k: usize) -> f64 {
        self.outcomes[k].p
    }

    pub fn o(&self, k: usize) -> f64 {
        f64::from(self.outcomes[k].o)
    }

    /// Index of the opposite outcome `-I`.
    pub fn opposite(&self, k: usize) -> usize {
        self.opposite[k]
    }

    /// Whether the overtime parameter `tau` enters the likelihood at all.
    pub fn has_overtime(&self) -> bool {
        self.outcomes.iter().any(|s| s.o == 1)
    }

    /// Number of outcomes with `o = 1`.
    pub fn overtime_outcomes(&self) -> usize {
        self.outcomes.iter().filter(|s| s.o == 1).count()
    }

    /// Number of outcomes with `o = 0`.
    pub fn regulation_outcomes(&self) -> usize {
        self.len() - self.overtime_outcomes()
    }
}

impl fmt::Display for OutcomeSystem {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} {{", self.name)?;
        for (k, s) in self.outcomes.iter().enumerate() {
            if k > 0 {
                write!(f, ",")?;
            }
            write!(f, " {}:(p={:.4}, o={})", s.label, s.p, s.o)?;
        }
        write!(f, " }}")
    }
}

/// Team log-strengths `lambda_i = ln pi_i` and the log-overtime parameter `tau = ln nu`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelParams {
    pub lambda: Vec<f64>,
    pub tau: f64,
}

impl ModelParams {
    pub fn new(lambda: Vec<f64>, tau: f64) -> Self {
        Self { lambda, tau }
    }

    pub fn zeros(teams: usize) -> Self {
        Self {
            lambda: vec![0.0; teams],
            tau: 0.0,
        }
    }

    pub fn n_teams(&self) -> usize {
        self.lambda.len()
    }

    /// Log-strength difference `gamma_ij = lambda_i - lambda_j`.
    pub fn gamma(&self, i: usize, j: usize) -> f64 {
        self.lambda[i] - self.lambda[j]
    }

    pub fn is_finite(&self) -> bool {
        self.tau.is_finite() && self.lambda.iter().all(|l| l.is_finite())
    }

    /// Shifts the log-strengths so that they sum to zero.
    pub fn center(&mut self) {
        if self.lambda.is_empty() {
            return;
        }
        let mean = self.lambda.iter().sum::<f64>() / self.lambda.len() as f64;
        for l in &mut self.lambda {
            *l -= mean;
        }
    }
}

/// Outcome probabilities for one ordered pair of teams, in system order.
#[derive(Debug, Clone, PartialEq)]
pub struct ProbVector(Vec<f64>);

impl ProbVector {
    pub fn into_inner(self) -> Vec<f64> {
        self.0
    }
}

impl Deref for ProbVector {
    type Target = [f64];

    fn deref(&self) -> &[f64] {
        &self.0
    }
}

/// Gradient of the log-likelihood with respect to `(lambda, tau)`.
#[derive(Debug, Clone, PartialEq)]
pub struct GradVector {
    pub dlambda: Vec<f64>,
    pub dtau: f64,
}

impl GradVector {
    /// Flattens to `(dlambda_1, ..., dlambda_t, dtau)`.
    pub fn to_vec(&self) -> Vec<f64> {
        let mut v = self.dlambda.clone();
        v.push(self.dtau);
        v
    }
}

/// Softmax over the outcome logits `p_I * gamma + o_I * tau`, with the log of
/// the normalizer returned alongside.
pub(crate) fn softmax(system: &OutcomeSystem, gamma: f64, tau: f64, out: &mut [f64]) -> f64 {
    let mut max = f64::NEG_INFINITY;
    for (k, slot) in out.iter_mut().enumerate() {
        *slot = system.p(k) * gamma + system.o(k) * tau;
        max = max.max(*slot);
    }
    let mut sum = 0.0;
    for slot in out.iter_mut() {
        *slot = (*slot - max).exp();
        sum += *slot;
    }
    for slot in out.iter_mut() {
        *slot /= sum;
    }
    max + sum.ln()
}

/// Per-pair moments of the outcome distribution used by the gradient and Hessian.
pub(crate) struct PairMoments {
    /// `sum_I p_I theta^I`
    pub mean_p: f64,
    /// `sum_I o_I theta^I`
    pub mean_o: f64,
    /// `sum_I theta^I (p_I - mean_p)^2`
    pub var_p: f64,
    /// `sum_I o_I theta^I (p_I - mean_p)`
    pub cov_op: f64,
}

pub(crate) fn pair_moments(system: &OutcomeSystem, theta: &[f64]) -> PairMoments {
    let mut mean_p = 0.0;
    let mut mean_o = 0.0;
    for (k, &th) in theta.iter().enumerate() {
        mean_p += system.p(k) * th;
        mean_o += system.o(k) * th;
    }
    let mut var_p = 0.0;
    let mut cov_op = 0.0;
    for (k, &th) in theta.iter().enumerate() {
        let dp = system.p(k) - mean_p;
        var_p += th * dp * dp;
        cov_op += system.o(k) * th * dp;
    }
    PairMoments {
        mean_p,
        mean_o,
        var_p,
        cov_op,
    }
}

fn check_pair(n_teams: usize, i: usize, j: usize) -> Result<(), ModelError> {
    for index in [i, j] {
        if index >= n_teams {
            return Err(ModelError::TeamOutOfRange {
                index,
                teams: n_teams,
            });
        }
    }
    if i == j {
        return Err(ModelError::SameTeam(i));
    }
    Ok(())
}

pub(crate) fn check_dims(
    system: &OutcomeSystem,
    counts: &CountsMatrix,
    params: &ModelParams,
) -> Result<(), ModelError> {
    if counts.system().labels().ne(system.labels()) {
        return Err(ModelError::SystemMismatch {
            counts: counts.system().name().to_string(),
            system: system.name().to_string(),
        });
    }
    if params.n_teams() != counts.n_teams() {
        return Err(ModelError::DimensionMismatch {
            what: "team count",
            expected: counts.n_teams(),
            found: params.n_teams(),
        });
    }
    Ok(())
}

/// Probability of each outcome in a game between teams `i` and `j`.
pub fn outcome_probs(
    system: &OutcomeSystem,
    params: &ModelParams,
    i: usize,
    j: usize,
) -> Result<ProbVector, ModelError> {
    check_pair(params.n_teams(), i, j)?;
    let mut theta = vec![0.0; system.len()];
    softmax(system, params.gamma(i, j), params.tau, &mut theta);
    Ok(ProbVector(theta))
}

/// `ln P(D | lambda, tau)`.
///
/// Each unordered pair is visited once: thanks to the mirror invariant on the
/// counts, the two ordered terms of the symmetric double sum are equal and the
/// one-half prefactor cancels one of them.
pub fn log_likelihood(
    system: &OutcomeSystem,
    counts: &CountsMatrix,
    params: &ModelParams,
) -> Result<f64, ModelError> {
    check_dims(system, counts, params)?;
    let t = counts.n_teams();
    let mut theta = vec![0.0; system.len()];
    let mut total = 0.0;
    for i in 0..t {
        for j in (i + 1)..t {
            if counts.games(i, j) == 0 {
                continue;
            }
            let gamma = params.gamma(i, j);
            let log_norm = softmax(system, gamma, params.tau, &mut theta);
            for k in 0..system.len() {
                let n = counts.get(i, j, k);
                if n > 0 {
                    let logit = system.p(k) * gamma + system.o(k) * params.tau;
                    total += f64::from(n) * (logit - log_norm);
                }
            }
        }
    }
    Ok(total)
}

/// Analytic gradient of [`log_likelihood`].
pub fn grad_log_likelihood(
    system: &OutcomeSystem,
    counts: &CountsMatrix,
    params: &ModelParams,
) -> Result<GradVector, ModelError> {
    check_dims(system, counts, params)?;
    let t = counts.n_teams();
    let mut theta = vec![0.0; system.len()];
    let mut dlambda = vec![0.0; t];
    let mut dtau = 0.0;
    for i in 0..t {
        for j in (i + 1)..t {
            let n_ij = counts.games(i, j);
            if n_ij == 0 {
                continue;
            }
            softmax(system, params.gamma(i, j), params.tau, &mut theta);
            let m = pair_moments(system, &theta);
            let n_ij = f64::from(n_ij);
            let mut points = 0.0;
            let mut overtime = 0.0;
            for k in 0..system.len() {
                let n = f64::from(counts.get(i, j, k));
                points += n * system.p(k);
                overtime += n * system.o(k);
            }
            let d = points - n_ij * m.mean_p;
            dlambda[i] += d;
            dlambda[j] -= d;
            dtau += overtime - n_ij * m.mean_o;
        }
    }
    Ok(GradVector { dlambda, dtau })
}

/// Observed information: the negative second-derivative matrix of the
/// log-likelihood over `(lambda_1, ..., lambda_t, tau)`.
///
/// The all-ones `lambda` direction is always a null vector.
pub fn hessian(
    system: &OutcomeSystem,
    counts: &CountsMatrix,
    params: &ModelParams,
) -> Result<DMatrix<f64>, ModelError> {
    check_dims(system, counts, params)?;
    let t = counts.n_teams();
    let tau_ix = t;
    let mut h = DMatrix::zeros(t + 1, t + 1);
    let mut theta = vec![0.0; system.len()];
    for i in 0..t {
        for j in (i + 1)..t {
            let n_ij = counts.games(i, j);
            if n_ij == 0 {
                continue;
            }
            softmax(system, params.gamma(i, j), params.tau, &mut theta);
            let m = pair_moments(system, &theta);
            let n = f64::from(n_ij);
            let w = n * m.var_p;
            h[(i, i)] += w;
            h[(j, j)] += w;
            h[(i, j)] -= w;
            h[(j, i)] -= w;
            let c = n * m.cov_op;
            h[(tau_ix, i)] += c;
            h[(i, tau_ix)] += c;
            h[(tau_ix, j)] -= c;
            h[(j, tau_ix)] -= c;
            h[(tau_ix, tau_ix)] += n * m.mean_o * (1.0 - m.mean_o);
        }
    }
    Ok(h)
}

/// Probability that a game between two equally strong teams ends in an
/// outcome with `o = 1`: `m_o nu / (m_r + m_o nu)`.
pub fn even_match_overtime_prob(system: &OutcomeSystem, tau: f64) -> f64 {
    let m_o = system.overtime_outcomes() as f64;
    let m_r = system.regulation_outcomes() as f64;
    if m_o == 0.0 {
        return 0.0;
    }
    if m_r == 0.0 {
        return 1.0;
    }
    1.0 / (1.0 + (m_r / m_o) * (-tau).exp())
}

/// Conditional probability that team `i` beats team `j` in a game that is
/// played to a decision, `pi_i / (pi_i + pi_j)`.
pub fn playoff_win_prob(params: &ModelParams, i: usize, j: usize) -> Result<f64, ModelError> {
    check_pair(params.n_teams(), i, j)?;
    Ok(logistic(params.gamma(i, j)))
}

pub fn logistic(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}
