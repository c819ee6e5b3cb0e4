//! Reading game results and count files, and collapsing between outcome systems.

use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use thiserror::Error;

use crate::counts::{CountsError, CountsMatrix};
use crate::model::{OutcomeSpec, OutcomeSystem, SystemError};

#[derive(Debug, Error)]
pub enum IngestError {
    #[error("input is empty")]
    EmptyFile,
    #[error("bad header `{0}`: expected `team_i,team_j,outcome[,date]`")]
    BadHeader(String),
    #[error("row {row}: unknown outcome `{label}`")]
    UnknownOutcome { row: usize, label: String },
    #[error("row {row}: `{team}` cannot play itself")]
    SelfGame { row: usize, team: String },
    #[error("row {row}: {message}")]
    BadRow { row: usize, message: String },
    #[error("team `{0}` is not in the supplied team list")]
    UnknownTeam(String),
    #[error("collapse map is incompatible with the outcome systems: {0}")]
    IncompatibleMap(String),
    #[error("schema error: {0}")]
    SchemaError(String),
    #[error(transparent)]
    InconsistentMirror(CountsError),
    #[error(transparent)]
    Counts(CountsError),
    #[error(transparent)]
    System(#[from] SystemError),
    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl From<CountsError> for IngestError {
    fn from(e: CountsError) -> Self {
        match e {
            CountsError::InconsistentMirror { .. } => Self::InconsistentMirror(e),
            CountsError::NonZeroDiagonal { .. } | CountsError::Shape { .. } | CountsError::DuplicateTeam(_) => {
                Self::SchemaError(e.to_string())
            }
            other => Self::Counts(other),
        }
    }
}

/// One game, with the outcome recorded from `team_i`'s side.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GameRecord {
    pub team_i: String,
    pub team_j: String,
    pub outcome: String,
    /// ISO-8601 date, carried through but not used by inference.
    pub date: Option<String>,
}

/// Parses a `team_i,team_j,outcome[,date]` CSV file.
///
/// Rows are numbered from 1 for the first data row. Duplicate rows are
/// distinct games.
pub fn parse_games_csv(text: &str, system: &OutcomeSystem) -> Result<Vec<GameRecord>, IngestError> {
    if text.trim().is_empty() {
        return Err(IngestError::EmptyFile);
    }
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(text.as_bytes());
    let header: Vec<String> = reader.headers()?.iter().map(str::to_string).collect();
    let ok_header = matches!(
        header.iter().map(String::as_str).collect::<Vec<_>>().as_slice(),
        ["team_i", "team_j", "outcome"] | ["team_i", "team_j", "outcome", "date"]
    );
    if !ok_header {
        return Err(IngestError::BadHeader(header.join(",")));
    }
    let has_date = header.len() == 4;

    let mut records = Vec::new();
    for (n, row) in reader.records().enumerate() {
        let row_no = n + 1;
        let row = row?;
        if row.iter().all(str::is_empty) {
            continue;
        }
        if row.len() != header.len() {
            return Err(IngestError::BadRow {
                row: row_no,
                message: format!("expected {} fields, found {}", header.len(), row.len()),
            });
        }
        let team_i = row[0].to_string();
        let team_j = row[1].to_string();
        let outcome = row[2].to_string();
        if team_i.is_empty() || team_j.is_empty() {
            return Err(IngestError::BadRow {
                row: row_no,
                message: "empty team name".to_string(),
            });
        }
        if team_i == team_j {
            return Err(IngestError::SelfGame { row: row_no, team: team_i });
        }
        if system.index_of(&outcome).is_none() {
            return Err(IngestError::UnknownOutcome {
                row: row_no,
                label: outcome,
            });
        }
        let date = if has_date && !row[3].is_empty() {
            Some(row[3].to_string())
        } else {
            None
        };
        records.push(GameRecord {
            team_i,
            team_j,
            outcome,
            date,
        });
    }
    Ok(records)
}

/// Accumulates game records into counts.
///
/// Teams are indexed in `teams` order when given, otherwise in order of first
/// appearance in the records.
pub fn aggregate(
    records: &[GameRecord],
    system: &OutcomeSystem,
    teams: Option<&[String]>,
) -> Result<CountsMatrix, IngestError> {
    let team_list: Vec<String> = match teams {
        Some(list) => list.to_vec(),
        None => {
            let mut seen: Vec<String> = Vec::new();
            for r in records {
                for name in [&r.team_i, &r.team_j] {
                    if !seen.contains(name) {
                        seen.push(name.clone());
                    }
                }
            }
            seen
        }
    };
    let mut counts = CountsMatrix::zeros(system.clone(), team_list)?;
    for (n, r) in records.iter().enumerate() {
        let i = counts
            .team_index(&r.team_i)
            .ok_or_else(|| IngestError::UnknownTeam(r.team_i.clone()))?;
        let j = counts
            .team_index(&r.team_j)
            .ok_or_else(|| IngestError::UnknownTeam(r.team_j.clone()))?;
        let k = system.index_of(&r.outcome).ok_or_else(|| IngestError::UnknownOutcome {
            row: n + 1,
            label: r.outcome.clone(),
        })?;
        if i == j {
            return Err(IngestError::SelfGame {
                row: n + 1,
                team: r.team_i.clone(),
            });
        }
        counts.add_game(i, j, k)?;
    }
    Ok(counts)
}

/// Maps each source outcome label onto a target outcome label.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CollapseMap {
    pairs: Vec<(String, String)>,
}

impl CollapseMap {
    pub fn new<S: Into<String>>(pairs: impl IntoIterator<Item = (S, S)>) -> Self {
        Self {
            pairs: pairs.into_iter().map(|(a, b)| (a.into(), b.into())).collect(),
        }
    }

    /// Four outcomes onto win/loss: every win is a win.
    pub fn four_to_win_loss() -> Self {
        Self::new([("RW", "W"), ("OW", "W"), ("OL", "L"), ("RL", "L")])
    }

    /// Four outcomes onto win/tie/loss: every overtime game is a tie.
    pub fn four_to_win_tie_loss() -> Self {
        Self::new([("RW", "W"), ("OW", "T"), ("OL", "T"), ("RL", "L")])
    }

    pub fn identity(system: &OutcomeSystem) -> Self {
        Self::new(system.labels().map(|l| (l.to_string(), l.to_string())))
    }

    pub fn target_of(&self, label: &str) -> Option<&str> {
        self.pairs
            .iter()
            .find(|(s, _)| s == label)
            .map(|(_, t)| t.as_str())
    }

    /// Resolves the map to target indices, checking totality and that it
    /// commutes with taking opposites.
    fn resolve(&self, source: &OutcomeSystem, target: &OutcomeSystem) -> Result<Vec<usize>, IngestError> {
        let mut out = Vec::with_capacity(source.len());
        for label in source.labels() {
            let dest = self
                .target_of(label)
                .ok_or_else(|| IngestError::IncompatibleMap(format!("source outcome `{label}` is not mapped")))?;
            let k = target
                .index_of(dest)
                .ok_or_else(|| IngestError::IncompatibleMap(format!("target outcome `{dest}` does not exist")))?;
            out.push(k);
        }
        for (s, &k) in out.iter().enumerate() {
            if out[source.opposite(s)] != target.opposite(k) {
                return Err(IngestError::IncompatibleMap(format!(
                    "mapping of `{}` does not commute with opposites",
                    source.outcomes()[s].label
                )));
            }
        }
        Ok(out)
    }
}

/// Sums source counts into the target system's outcomes.
pub fn collapse(counts: &CountsMatrix, map: &CollapseMap, target: &OutcomeSystem) -> Result<CountsMatrix, IngestError> {
    let source = counts.system();
    let dest = map.resolve(source, target)?;
    let t = counts.n_teams();
    let mut matrices = vec![vec![vec![0u32; t]; t]; target.len()];
    for i in 0..t {
        for j in 0..t {
            for (s, &k) in dest.iter().enumerate() {
                matrices[k][i][j] += counts.get(i, j, s);
            }
        }
    }
    Ok(CountsMatrix::from_outcome_matrices(
        target.clone(),
        counts.teams().to_vec(),
        &matrices,
    )?)
}

/// The `system` field of counts and fitted-model files: a built-in name or
/// an inline outcome list.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum SystemRef {
    Name(String),
    Inline(Vec<OutcomeSpec>),
}

impl SystemRef {
    pub fn of(system: &OutcomeSystem) -> Self {
        if system.is_builtin() {
            Self::Name(system.name().to_string())
        } else {
            Self::Inline(system.outcomes().to_vec())
        }
    }

    pub fn resolve(&self) -> Result<OutcomeSystem, IngestError> {
        match self {
            Self::Name(name) => OutcomeSystem::builtin(name)
                .ok_or_else(|| IngestError::SchemaError(format!("unknown outcome system `{name}`"))),
            Self::Inline(specs) => Ok(OutcomeSystem::new("custom", specs.clone())?),
        }
    }
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct CountsFile {
    system: SystemRef,
    teams: Vec<String>,
    counts: BTreeMap<String, Vec<Vec<u32>>>,
}

/// Parses an outcome-system file: `[{"label", "p", "o", "opposite"}, ...]`.
pub fn load_system_json(text: &str, name: &str) -> Result<OutcomeSystem, IngestError> {
    let specs: Vec<OutcomeSpec> =
        serde_json::from_str(text).map_err(|e| IngestError::SchemaError(e.to_string()))?;
    Ok(OutcomeSystem::new(name, specs)?)
}

pub fn load_counts_json(text: &str) -> Result<CountsMatrix, IngestError> {
    let file: CountsFile = serde_json::from_str(text).map_err(|e| IngestError::SchemaError(e.to_string()))?;
    let system = file.system.resolve()?;
    let mut matrices = Vec::with_capacity(system.len());
    for label in system.labels() {
        let m = file
            .counts
            .get(label)
            .ok_or_else(|| IngestError::SchemaError(format!("missing counts for outcome `{label}`")))?;
        matrices.push(m.clone());
    }
    if let Some(extra) = file.counts.keys().find(|k| system.index_of(k).is_none()) {
        return Err(IngestError::SchemaError(format!("counts for unknown outcome `{extra}`")));
    }
    Ok(CountsMatrix::from_outcome_matrices(system, file.teams, &matrices)?)
}

pub fn save_counts_json(counts: &CountsMatrix) -> String {
    let system = counts.system();
    let file = CountsFile {
        system: SystemRef::of(system),
        teams: counts.teams().to_vec(),
        counts: system
            .labels()
            .enumerate()
            .map(|(k, l)| (l.to_string(), counts.outcome_matrix(k)))
            .collect(),
    };
    serde_json::to_string_pretty(&file).expect("counts serialize")
}
