//! Prediction tables, posterior summaries and density grids.

pub mod io;
pub mod kde;

use serde::Serialize;
use std::collections::BTreeMap;
use thiserror::Error;

use crate::ingest::IngestError;
use crate::laplace::{summarize, MarginalSummary, SampleSet};
use crate::model::{self, ModelError, ModelParams, OutcomeSystem};
pub use io::{read_samples_csv, theta_matrices, write_samples_csv, FittedModel};
pub use kde::{kde_1d, kde_1d_bounded, kde_2d, silverman_bandwidth, Grid1d, Grid2d};

#[derive(Debug, Error)]
pub enum ReportError {
    #[error("no posterior samples")]
    MissingSamples,
    #[error("unknown team `{0}`")]
    UnknownTeam(String),
    #[error("bad pair selection `{0}`: expected `all` or `<team>,<team>`")]
    BadPairs(String),
    #[error("samples cover teams {samples:?} but the fit has {fit:?}")]
    TeamMismatch { samples: Vec<String>, fit: Vec<String> },
    #[error("{0}")]
    Schema(String),
    #[error("({w}, {o}) is not attainable by any outcome distribution")]
    Unattainable { w: f64, o: f64 },
    #[error(transparent)]
    Ingest(#[from] IngestError),
    #[error(transparent)]
    Model(#[from] ModelError),
}

/// Which pairs to tabulate.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum PairSelection {
    All,
    One(String, String),
}

impl PairSelection {
    pub fn parse(text: &str) -> Result<Self, ReportError> {
        let text = text.trim();
        if text == "all" {
            return Ok(Self::All);
        }
        match text.split_once(',') {
            Some((a, b)) if !a.trim().is_empty() && !b.trim().is_empty() => {
                Ok(Self::One(a.trim().to_string(), b.trim().to_string()))
            }
            _ => Err(ReportError::BadPairs(text.to_string())),
        }
    }

    /// Ordered index pairs; `All` lists every `i != j`.
    pub fn resolve(&self, teams: &[String]) -> Result<Vec<(usize, usize)>, ReportError> {
        let find = |name: &str| {
            teams
                .iter()
                .position(|t| t == name)
                .ok_or_else(|| ReportError::UnknownTeam(name.to_string()))
        };
        match self {
            Self::All => Ok((0..teams.len())
                .flat_map(|i| (0..teams.len()).filter(move |&j| j != i).map(move |j| (i, j)))
                .collect()),
            Self::One(a, b) => {
                let (i, j) = (find(a)?, find(b)?);
                if i == j {
                    return Err(ReportError::BadPairs(format!("{a},{b}")));
                }
                Ok(vec![(i, j)])
            }
        }
    }
}

/// Outcome probabilities for one ordered pair.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PairPrediction {
    pub team_i: String,
    pub team_j: String,
    pub labels: Vec<String>,
    pub probs: Vec<f64>,
}

fn playoff_labels() -> Vec<String> {
    vec!["W".to_string(), "L".to_string()]
}

/// Probabilities at fixed parameters. With `playoff`, the conditional
/// probability of winning a game played to a decision.
pub fn predict_at(
    system: &OutcomeSystem,
    teams: &[String],
    params: &ModelParams,
    pairs: &[(usize, usize)],
    playoff: bool,
) -> Result<Vec<PairPrediction>, ReportError> {
    pairs
        .iter()
        .map(|&(i, j)| {
            let (labels, probs) = if playoff {
                let w = model::playoff_win_prob(params, i, j)?;
                (playoff_labels(), vec![w, 1.0 - w])
            } else {
                let theta = model::outcome_probs(system, params, i, j)?;
                (system.labels().map(str::to_string).collect(), theta.into_inner())
            };
            Ok(PairPrediction {
                team_i: teams[i].clone(),
                team_j: teams[j].clone(),
                labels,
                probs,
            })
        })
        .collect()
}

/// Posterior-mean probabilities over all draws.
pub fn predict_posterior(
    system: &OutcomeSystem,
    samples: &SampleSet,
    pairs: &[(usize, usize)],
    playoff: bool,
) -> Result<Vec<PairPrediction>, ReportError> {
    if samples.is_empty() {
        return Err(ReportError::MissingSamples);
    }
    let t = samples.n_teams();
    let n = samples.len() as f64;
    let mut out = Vec::with_capacity(pairs.len());
    for &(i, j) in pairs {
        let mut acc: Vec<f64> = Vec::new();
        for draw in samples.iter() {
            let params = ModelParams::new(draw[..t].to_vec(), draw[t]);
            let p = predict_at(system, &samples.teams, &params, &[(i, j)], playoff)?.remove(0);
            if acc.is_empty() {
                acc = vec![0.0; p.probs.len()];
            }
            for (a, v) in acc.iter_mut().zip(&p.probs) {
                *a += v / n;
            }
        }
        out.push(PairPrediction {
            team_i: samples.teams[i].clone(),
            team_j: samples.teams[j].clone(),
            labels: if playoff {
                playoff_labels()
            } else {
                system.labels().map(str::to_string).collect()
            },
            probs: acc,
        });
    }
    Ok(out)
}

/// Ternary-plot coordinates of a (win, tie, loss) distribution: loss at the
/// origin, win at `(1, 0)`, tie at the apex.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TernaryPoint {
    pub w: f64,
    pub t: f64,
    pub l: f64,
    pub x: f64,
    pub y: f64,
}

impl TernaryPoint {
    pub fn new(w: f64, t: f64, l: f64) -> Self {
        Self {
            w,
            t,
            l,
            x: w + 0.5 * t,
            y: t * 3f64.sqrt() / 2.0,
        }
    }
}

/// Indices of the win, tie and loss outcomes of a three-outcome system with
/// a single self-opposite overtime outcome.
fn tie_layout(system: &OutcomeSystem) -> Option<[usize; 3]> {
    if system.len() != 3 || system.overtime_outcomes() != 1 {
        return None;
    }
    let tie = (0..3).find(|&k| system.o(k) == 1.0 && system.opposite(k) == k)?;
    let win = (0..3).find(|&k| k != tie && system.p(k) > 0.5)?;
    Some([win, tie, system.opposite(win)])
}

/// Indices `[regulation win, overtime win, overtime loss, regulation loss]`
/// for systems shaped like the four-outcome hockey system.
fn overtime_layout(system: &OutcomeSystem) -> Option<[usize; 4]> {
    if system.len() != 4 || system.overtime_outcomes() != 2 {
        return None;
    }
    let rw = (0..4).find(|&k| system.o(k) == 0.0 && system.p(k) > 0.5)?;
    let ow = (0..4).find(|&k| system.o(k) == 1.0 && system.p(k) > 0.5)?;
    Some([rw, ow, system.opposite(ow), system.opposite(rw)])
}

/// `(theta^W, theta^O)`: probability of any win and of any overtime game.
pub fn win_overtime(system: &OutcomeSystem, theta: &[f64]) -> Option<(f64, f64)> {
    let [rw, ow, ol, _] = overtime_layout(system)?;
    Some((theta[rw] + theta[ow], theta[ow] + theta[ol]))
}

/// Recovers the four outcome probabilities (in system order) from
/// `(theta^W, theta^O)`.
///
/// Under the model `theta^OW / theta^OL = (theta^RW / theta^RL)^r` with
/// `r = (p_OW - p_OL) / (p_RW - p_RL)`; with the two sums fixed this leaves a
/// single unknown, `theta^OW`, solved by safeguarded Newton iteration.
pub fn four_from_win_overtime(system: &OutcomeSystem, w: f64, o: f64) -> Result<Vec<f64>, ReportError> {
    let [rw, ow, ol, rl] = overtime_layout(system).ok_or_else(|| {
        ReportError::Schema(format!("system `{}` has no win/overtime decomposition", system.name()))
    })?;
    let r = (system.p(ow) - system.p(ol)) / (system.p(rw) - system.p(rl));
    // theta^OW = x, theta^RW = w - x, theta^OL = o - x, theta^RL = 1 - w - o + x.
    let lo = 0f64.max(w + o - 1.0);
    let hi = w.min(o);
    if !(lo < hi) || !(0.0..=1.0).contains(&w) || !(0.0..=1.0).contains(&o) {
        return Err(ReportError::Unattainable { w, o });
    }
    let f = |x: f64| (x.ln() - (o - x).ln()) - r * ((w - x).ln() - (1.0 - w - o + x).ln());
    let df = |x: f64| 1.0 / x + 1.0 / (o - x) + r * (1.0 / (w - x) + 1.0 / (1.0 - w - o + x));
    let (mut a, mut b) = (lo, hi);
    let mut x = 0.5 * (a + b);
    for _ in 0..200 {
        let fx = f(x);
        if fx.abs() < 1e-15 {
            break;
        }
        if fx > 0.0 {
            b = x;
        } else {
            a = x;
        }
        let newton = x - fx / df(x);
        x = if newton > a && newton < b { newton } else { 0.5 * (a + b) };
        if b - a < 1e-17 {
            break;
        }
    }
    let mut theta = vec![0.0; 4];
    theta[rw] = w - x;
    theta[ow] = x;
    theta[ol] = o - x;
    theta[rl] = 1.0 - w - o + x;
    Ok(theta)
}

/// Model parameters `(gamma, tau)` that produce the given four-outcome
/// probabilities.
pub fn gamma_tau_from_four(system: &OutcomeSystem, theta: &[f64]) -> Option<(f64, f64)> {
    let [rw, ow, _, rl] = overtime_layout(system)?;
    let gamma = (theta[rw] / theta[rl]).ln() / (system.p(rw) - system.p(rl));
    let tau = (theta[ow] / theta[rl]).ln() - system.p(ow) * gamma + system.p(rl) * gamma;
    Some((gamma, tau))
}

/// Maximum-likelihood table.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MleTable {
    pub teams: Vec<String>,
    pub lambda: Vec<f64>,
    pub tau: Option<f64>,
    pub even_match_overtime: Option<f64>,
    pub theta: BTreeMap<String, Vec<Vec<Option<f64>>>>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GaussianTable {
    pub sd: Vec<f64>,
    pub correlation: Vec<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct NamedSummary {
    pub name: String,
    #[serde(flatten)]
    pub summary: MarginalSummary,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PairGrids {
    pub team_i: String,
    pub team_j: String,
    pub gamma: Grid1d,
    pub gamma_tau: Option<Grid2d>,
    pub win_overtime: Option<Grid2d>,
    pub ternary: Option<Vec<TernaryPoint>>,
}

/// Everything `multibt report` writes.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ReportBundle {
    pub system: String,
    pub mle: MleTable,
    pub gaussian: Option<GaussianTable>,
    pub summaries: Vec<NamedSummary>,
    pub tau: Option<Grid1d>,
    /// Density of the even-match overtime (or tie) probability.
    pub overtime_prob: Option<Grid1d>,
    pub pairs: Vec<PairGrids>,
}

/// Grid resolution used by [`build_report`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GridSize {
    pub points_1d: usize,
    pub points_2d: usize,
}

impl Default for GridSize {
    fn default() -> Self {
        Self {
            points_1d: 512,
            points_2d: 64,
        }
    }
}

pub fn build_report(
    fit: &FittedModel,
    samples: &SampleSet,
    pairs: &[(usize, usize)],
    grid: GridSize,
) -> Result<ReportBundle, ReportError> {
    if samples.is_empty() {
        return Err(ReportError::MissingSamples);
    }
    if samples.teams != fit.teams {
        return Err(ReportError::TeamMismatch {
            samples: samples.teams.clone(),
            fit: fit.teams.clone(),
        });
    }
    let system = fit.outcome_system()?;
    let params = fit.params();
    let t = fit.teams.len();
    let has_tau = system.has_overtime();

    let mle = MleTable {
        teams: fit.teams.clone(),
        lambda: params.lambda.clone(),
        tau: fit.tau,
        even_match_overtime: has_tau.then(|| model::even_match_overtime_prob(&system, params.tau)),
        theta: theta_matrices(&system, &params),
    };
    let gaussian = match (&fit.sd, &fit.correlation) {
        (Some(sd), Some(rho)) => Some(GaussianTable {
            sd: sd.clone(),
            correlation: rho.clone(),
        }),
        _ => None,
    };

    let mut summaries: Vec<NamedSummary> = (0..t)
        .map(|k| NamedSummary {
            name: format!("lambda_{}", fit.teams[k]),
            summary: summarize(&samples.column(k)),
        })
        .collect();
    let tau_draws = samples.tau();
    if has_tau {
        summaries.push(NamedSummary {
            name: "tau".to_string(),
            summary: summarize(&tau_draws),
        });
    }

    let (tau, overtime_prob) = if has_tau {
        let transformed: Vec<f64> = tau_draws
            .iter()
            .map(|&v| model::even_match_overtime_prob(&system, v))
            .collect();
        (
            Some(kde_1d(&tau_draws, grid.points_1d)),
            Some(kde_1d_bounded(&transformed, grid.points_1d, 0.0, 1.0)),
        )
    } else {
        (None, None)
    };

    let mut pair_grids = Vec::with_capacity(pairs.len());
    for &(i, j) in pairs {
        if i >= t || j >= t || i == j {
            return Err(ModelError::TeamOutOfRange { index: i.max(j), teams: t }.into());
        }
        let gamma = samples.gamma(i, j);
        summaries.push(NamedSummary {
            name: format!("gamma_{}_{}", fit.teams[i], fit.teams[j]),
            summary: summarize(&gamma),
        });
        let thetas: Vec<Vec<f64>> = samples
            .iter()
            .map(|d| {
                let p = ModelParams::new(d[..t].to_vec(), d[t]);
                model::outcome_probs(&system, &p, i, j).map(|th| th.into_inner())
            })
            .collect::<Result<_, _>>()?;
        let gamma_tau = has_tau.then(|| kde_2d(&gamma, &tau_draws, grid.points_2d, None, None));
        let win_overtime = overtime_layout(&system).map(|_| {
            let (w, o): (Vec<f64>, Vec<f64>) = thetas
                .iter()
                .map(|th| win_overtime(&system, th).expect("layout checked"))
                .unzip();
            kde_2d(&w, &o, grid.points_2d, Some((0.0, 1.0)), Some((0.0, 1.0)))
        });
        let ternary = tie_layout(&system).map(|[w, tie, l]| {
            thetas
                .iter()
                .map(|th| TernaryPoint::new(th[w], th[tie], th[l]))
                .collect()
        });
        pair_grids.push(PairGrids {
            team_i: fit.teams[i].clone(),
            team_j: fit.teams[j].clone(),
            gamma: kde_1d(&gamma, grid.points_1d),
            gamma_tau,
            win_overtime,
            ternary,
        });
    }

    Ok(ReportBundle {
        system: system.name().to_string(),
        mle,
        gaussian,
        summaries,
        tau,
        overtime_prob,
        pairs: pair_grids,
    })
}

/// Team name reduced to characters that are safe in file names.
fn file_stem(name: &str) -> String {
    name.chars()
        .map(|c| if c.is_ascii_alphanumeric() || c == '-' { c } else { '_' })
        .collect()
}

impl ReportBundle {
    /// `(file name, contents)` for every output file.
    pub fn files(&self) -> Vec<(String, String)> {
        #[derive(Serialize)]
        struct Summary<'a> {
            system: &'a str,
            mle: &'a MleTable,
            gaussian: &'a Option<GaussianTable>,
            summaries: &'a [NamedSummary],
        }
        let summary = Summary {
            system: &self.system,
            mle: &self.mle,
            gaussian: &self.gaussian,
            summaries: &self.summaries,
        };
        let mut files = vec![(
            "summary.json".to_string(),
            serde_json::to_string_pretty(&summary).expect("summary serializes") + "\n",
        )];
        if let Some(g) = &self.tau {
            files.push(("tau_density.csv".to_string(), g.to_csv("tau")));
        }
        if let Some(g) = &self.overtime_prob {
            files.push(("overtime_prob_density.csv".to_string(), g.to_csv("prob")));
        }
        for p in &self.pairs {
            let tag = format!("{}_{}", file_stem(&p.team_i), file_stem(&p.team_j));
            files.push((format!("gamma_{tag}.csv"), p.gamma.to_csv("gamma")));
            if let Some(g) = &p.gamma_tau {
                files.push((format!("gamma_tau_{tag}.csv"), g.to_csv("gamma", "tau")));
            }
            if let Some(g) = &p.win_overtime {
                files.push((format!("win_overtime_{tag}.csv"), g.to_csv("theta_w", "theta_o")));
            }
            if let Some(points) = &p.ternary {
                let mut out = String::from("theta_w,theta_t,theta_l,x,y\n");
                for q in points {
                    out.push_str(&format!("{},{},{},{},{}\n", q.w, q.t, q.l, q.x, q.y));
                }
                files.push((format!("ternary_{tag}.csv"), out));
            }
        }
        files
    }
}
