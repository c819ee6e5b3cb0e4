//! Maximum-likelihood fits by fixed-point iteration.
//!
//! The ML equations set each team's expected points equal to its actual
//! points `p_k`, and the expected number of overtime games equal to `n^o`.
//! Written as multiplicative updates they become
//!
//! ```text
//! nu    <- nu    * n^o / E[n^o]
//! pi_k  <- pi_k  * p_k / E[p_k]
//! ```
//!
//! which we apply in log space: `nu` first, then each team in turn using the
//! latest values, then a rescale so that `sum_k lambda_k = 0`.

use petgraph::algo::{connected_components, kosaraju_scc};
use petgraph::graph::{DiGraph, NodeIndex, UnGraph};
use std::fmt;
use thiserror::Error;

use crate::counts::CountsMatrix;
use crate::model::{self, check_dims, pair_moments, softmax, ModelError, ModelParams, OutcomeSystem};

/// Why a data set has no finite maximum-likelihood estimate.
#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum DegenerateData {
    #[error("the data set contains no games")]
    NoGames,
    #[error("the schedule splits into groups that never play each other: {}", fmt_groups(.groups))]
    Disconnected { groups: Vec<Vec<String>> },
    #[error(
        "undefeated: {} never gave up points to the rest of the field; winless: {} never earned any",
        fmt_names(.undefeated), fmt_names(.winless)
    )]
    Undefeated {
        undefeated: Vec<String>,
        winless: Vec<String>,
    },
    #[error("no game ended in an overtime outcome; the overtime parameter diverges")]
    NoOvertimeGames,
    #[error("every game ended in an overtime outcome; the overtime parameter diverges")]
    AllOvertimeGames,
}

fn fmt_names(names: &[String]) -> String {
    names.join(", ")
}

fn fmt_groups(groups: &[Vec<String>]) -> String {
    groups
        .iter()
        .map(|g| format!("[{}]", g.join(", ")))
        .collect::<Vec<_>>()
        .join(" ")
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum FitError {
    #[error(transparent)]
    Degenerate(#[from] DegenerateData),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error("invalid fit options: {0}")]
    Options(&'static str),
    #[error("fixed-point iteration did not converge after {iterations} iterations (max residual {max_residual:e})")]
    NotConverged { iterations: usize, max_residual: f64 },
}

/// Checks that the data admit a finite maximum-likelihood estimate.
///
/// The "earned points against" graph has an edge `i -> j` whenever team `i`
/// took a positive share of the points in some game against `j`. Finite
/// strengths require that graph to be strongly connected. Systems with an
/// overtime parameter additionally need at least one overtime game and at
/// least one regulation game.
pub fn check_identifiable(counts: &CountsMatrix) -> Result<(), DegenerateData> {
    let t = counts.n_teams();
    if counts.total_games() == 0 {
        return Err(DegenerateData::NoGames);
    }
    let mut undirected = UnGraph::<usize, ()>::with_capacity(t, 0);
    let mut directed = DiGraph::<usize, ()>::with_capacity(t, 0);
    let nodes: Vec<NodeIndex> = (0..t).map(|i| undirected.add_node(i)).collect();
    for i in 0..t {
        directed.add_node(i);
    }
    for i in 0..t {
        for j in 0..t {
            if i == j {
                continue;
            }
            if i < j && counts.games(i, j) > 0 {
                undirected.add_edge(nodes[i], nodes[j], ());
            }
            if counts.pair_points(i, j) > 0.0 {
                directed.add_edge(nodes[i], nodes[j], ());
            }
        }
    }
    let names = |members: &[NodeIndex]| -> Vec<String> {
        let mut ix: Vec<usize> = members.iter().map(|n| n.index()).collect();
        ix.sort_unstable();
        ix.into_iter().map(|i| counts.teams()[i].clone()).collect()
    };

    if connected_components(&undirected) > 1 {
        let mut component = vec![usize::MAX; t];
        let mut groups: Vec<Vec<NodeIndex>> = Vec::new();
        for start in 0..t {
            if component[start] != usize::MAX {
                continue;
            }
            let id = groups.len();
            let mut stack = vec![nodes[start]];
            let mut members = Vec::new();
            component[start] = id;
            while let Some(n) = stack.pop() {
                members.push(n);
                for m in undirected.neighbors(n) {
                    if component[m.index()] == usize::MAX {
                        component[m.index()] = id;
                        stack.push(m);
                    }
                }
            }
            groups.push(members);
        }
        return Err(DegenerateData::Disconnected {
            groups: groups.iter().map(|g| names(g)).collect(),
        });
    }

    let sccs = kosaraju_scc(&directed);
    if sccs.len() > 1 {
        let mut scc_of = vec![0usize; t];
        for (c, members) in sccs.iter().enumerate() {
            for n in members {
                scc_of[n.index()] = c;
            }
        }
        let mut has_in = vec![false; sccs.len()];
        let mut has_out = vec![false; sccs.len()];
        for e in directed.raw_edges() {
            let (a, b) = (scc_of[e.source().index()], scc_of[e.target().index()]);
            if a != b {
                has_out[a] = true;
                has_in[b] = true;
            }
        }
        let collect = |flags: &[bool]| -> Vec<String> {
            let members: Vec<NodeIndex> = sccs
                .iter()
                .enumerate()
                .filter(|(c, _)| !flags[*c])
                .flat_map(|(_, m)| m.iter().copied())
                .collect();
            names(&members)
        };
        return Err(DegenerateData::Undefeated {
            undefeated: collect(&has_in),
            winless: collect(&has_out),
        });
    }

    if counts.system().has_overtime() {
        let n_o = counts.overtime_count();
        if n_o == 0.0 {
            return Err(DegenerateData::NoOvertimeGames);
        }
        if n_o == counts.total_games() as f64 {
            return Err(DegenerateData::AllOvertimeGames);
        }
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FitOptions {
    /// Convergence threshold on the ML-equation residuals and on the
    /// per-iteration change of every log-parameter.
    pub tol: f64,
    pub max_iter: usize,
    /// Step scale in log space applied once parameter changes start flipping
    /// sign. `1.0` leaves the iteration undamped.
    pub damping: f64,
}

impl Default for FitOptions {
    fn default() -> Self {
        Self {
            tol: 1e-10,
            max_iter: 10_000,
            damping: 1.0,
        }
    }
}

impl FitOptions {
    fn validate(&self) -> Result<(), FitError> {
        if !(self.tol > 0.0) {
            return Err(FitError::Options("tol must be positive"));
        }
        if self.max_iter == 0 {
            return Err(FitError::Options("max_iter must be at least 1"));
        }
        if !(self.damping > 0.0 && self.damping <= 1.0) {
            return Err(FitError::Options("damping must lie in (0, 1]"));
        }
        Ok(())
    }
}

/// Residuals of the ML equations: actual minus expected.
#[derive(Debug, Clone, PartialEq)]
pub struct MlResiduals {
    /// `p_k - sum_i n_ki sum_I p_I theta^I_ki` per team.
    pub points: Vec<f64>,
    /// `n^o - 1/2 sum_ij n_ij theta^o_ij`.
    pub overtime: f64,
}

impl MlResiduals {
    pub fn max_abs(&self) -> f64 {
        self.points
            .iter()
            .fold(self.overtime.abs(), |acc, r| acc.max(r.abs()))
    }
}

impl fmt::Display for MlResiduals {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "points {:?}, overtime {:e}", self.points, self.overtime)
    }
}

/// Evaluates the ML equations at `params`.
pub fn ml_equation_residuals(
    system: &OutcomeSystem,
    counts: &CountsMatrix,
    params: &ModelParams,
) -> Result<MlResiduals, ModelError> {
    check_dims(system, counts, params)?;
    let t = counts.n_teams();
    let mut points: Vec<f64> = (0..t).map(|k| counts.points(k)).collect();
    let mut overtime = counts.overtime_count();
    let mut theta = vec![0.0; system.len()];
    for i in 0..t {
        for j in (i + 1)..t {
            let n = counts.games(i, j);
            if n == 0 {
                continue;
            }
            let n = f64::from(n);
            softmax(system, params.gamma(i, j), params.tau, &mut theta);
            let m = pair_moments(system, &theta);
            points[i] -= n * m.mean_p;
            // sum_I p_I theta^I_ji = 1 - mean_p
            points[j] -= n * (1.0 - m.mean_p);
            overtime -= n * m.mean_o;
        }
    }
    Ok(MlResiduals { points, overtime })
}

#[derive(Debug, Clone, PartialEq)]
pub struct MleFit {
    /// Estimates with `sum_k lambda_k = 0`. `tau` stays 0 for systems without
    /// overtime outcomes.
    pub params: ModelParams,
    pub iterations: usize,
    pub converged: bool,
    pub max_residual: f64,
    pub log_likelihood_at_mle: f64,
    /// Log-likelihood at the starting point, kept as a diagnostic.
    pub initial_log_likelihood: f64,
}

impl MleFit {
    pub fn require_converged(&self) -> Result<&Self, FitError> {
        if self.converged {
            Ok(self)
        } else {
            Err(FitError::NotConverged {
                iterations: self.iterations,
                max_residual: self.max_residual,
            })
        }
    }
}

/// Fits `(lambda, tau)` starting from `lambda = 0`, `tau = 0`.
///
/// Running out of iterations is not an error: the fit comes back with
/// `converged == false`.
pub fn fit_mle(
    system: &OutcomeSystem,
    counts: &CountsMatrix,
    opts: &FitOptions,
) -> Result<MleFit, FitError> {
    fit_mle_from(system, counts, ModelParams::zeros(counts.n_teams()), opts)
}

/// As [`fit_mle`], from a caller-supplied starting point.
pub fn fit_mle_from(
    system: &OutcomeSystem,
    counts: &CountsMatrix,
    start: ModelParams,
    opts: &FitOptions,
) -> Result<MleFit, FitError> {
    opts.validate()?;
    check_dims(system, counts, &start)?;
    check_identifiable(counts)?;

    let t = counts.n_teams();
    let has_overtime = system.has_overtime();
    let log_points: Vec<f64> = (0..t).map(|k| counts.points(k).ln()).collect();
    let log_overtime = counts.overtime_count().ln();

    let mut params = start;
    if !has_overtime {
        params.tau = 0.0;
    }
    params.center();
    let initial_log_likelihood = model::log_likelihood(system, counts, &params)?;

    let mut theta = vec![0.0; system.len()];
    let mut last_step = vec![0.0; t + 1];
    let mut damped = false;
    let mut iterations = 0;
    let mut converged = false;
    let mut max_residual = f64::INFINITY;

    while iterations < opts.max_iter {
        iterations += 1;
        let previous = params.clone();
        let scale = if damped { opts.damping } else { 1.0 };

        if has_overtime {
            let mut expected = 0.0;
            for i in 0..t {
                for j in (i + 1)..t {
                    let n = counts.games(i, j);
                    if n > 0 {
                        softmax(system, params.gamma(i, j), params.tau, &mut theta);
                        expected += f64::from(n) * pair_moments(system, &theta).mean_o;
                    }
                }
            }
            params.tau += scale * (log_overtime - expected.ln());
        }

        for k in 0..t {
            let mut expected = 0.0;
            for i in 0..t {
                let n = counts.games(k, i);
                if n > 0 {
                    softmax(system, params.gamma(k, i), params.tau, &mut theta);
                    expected += f64::from(n) * pair_moments(system, &theta).mean_p;
                }
            }
            params.lambda[k] += scale * (log_points[k] - expected.ln());
        }
        params.center();

        if !params.is_finite() {
            break;
        }

        let mut change: f64 = 0.0;
        let mut flipped = false;
        for (k, (new, old)) in params.lambda.iter().zip(&previous.lambda).enumerate() {
            let step = new - old;
            flipped |= step * last_step[k] < 0.0;
            last_step[k] = step;
            change = change.max(step.abs());
        }
        let tau_step = params.tau - previous.tau;
        flipped |= tau_step * last_step[t] < 0.0;
        last_step[t] = tau_step;
        change = change.max(tau_step.abs());
        if flipped && opts.damping < 1.0 {
            damped = true;
        }

        if change < opts.tol {
            max_residual = ml_equation_residuals(system, counts, &params)?.max_abs();
            if max_residual < opts.tol {
                converged = true;
                break;
            }
        }
    }

    if !converged && params.is_finite() {
        max_residual = ml_equation_residuals(system, counts, &params)?.max_abs();
    }
    let log_likelihood_at_mle = model::log_likelihood(system, counts, &params)?;
    Ok(MleFit {
        params,
        iterations,
        converged,
        max_residual,
        log_likelihood_at_mle,
        initial_log_likelihood,
    })
}
