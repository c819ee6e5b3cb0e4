//! Per-pair outcome counts `n^I_ij`.

use thiserror::Error;

use crate::model::OutcomeSystem;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum CountsError {
    #[error("team `{0}` cannot play itself")]
    SelfGame(String),
    #[error("team index {index} out of range for {teams} teams")]
    TeamOutOfRange { index: usize, teams: usize },
    #[error("outcome index {0} is not part of the outcome system")]
    UnknownOutcome(usize),
    #[error("duplicate team name `{0}`")]
    DuplicateTeam(String),
    #[error("diagonal entry for team `{team}` and outcome `{label}` is {value}, expected 0")]
    NonZeroDiagonal {
        team: String,
        label: String,
        value: u32,
    },
    #[error(
        "n[{label}]({team_i}, {team_j}) = {count} but its mirror n[{opposite}]({team_j}, {team_i}) = {mirror}"
    )]
    InconsistentMirror {
        label: String,
        opposite: String,
        team_i: String,
        team_j: String,
        count: u32,
        mirror: u32,
    },
    #[error("expected {expected} entries, found {found}")]
    Shape { expected: usize, found: usize },
}

/// Outcome counts for every ordered pair of teams.
///
/// Both bookkeeping perspectives are stored: a game that team `i` wins with
/// outcome `I` against `j` shows up as `n^I_ij` and as `n^{-I}_ji`. Every
/// constructor checks that the two agree.
#[derive(Debug, Clone, PartialEq)]
pub struct CountsMatrix {
    system: OutcomeSystem,
    teams: Vec<String>,
    data: Vec<u32>,
}

impl CountsMatrix {
    /// An all-zero matrix for the given teams.
    pub fn zeros(system: OutcomeSystem, teams: Vec<String>) -> Result<Self, CountsError> {
        check_unique(&teams)?;
        let len = teams.len() * teams.len() * system.len();
        Ok(Self {
            system,
            teams,
            data: vec![0; len],
        })
    }

    /// Builds counts from one `t x t` matrix per outcome, in system order.
    pub fn from_outcome_matrices(
        system: OutcomeSystem,
        teams: Vec<String>,
        matrices: &[Vec<Vec<u32>>],
    ) -> Result<Self, CountsError> {
        let mut counts = Self::zeros(system, teams)?;
        let t = counts.n_teams();
        let m = counts.system.len();
        if matrices.len() != m {
            return Err(CountsError::Shape {
                expected: m,
                found: matrices.len(),
            });
        }
        for (k, matrix) in matrices.iter().enumerate() {
            if matrix.len() != t {
                return Err(CountsError::Shape {
                    expected: t,
                    found: matrix.len(),
                });
            }
            for (i, row) in matrix.iter().enumerate() {
                if row.len() != t {
                    return Err(CountsError::Shape {
                        expected: t,
                        found: row.len(),
                    });
                }
                for (j, &n) in row.iter().enumerate() {
                    let ix = counts.index(i, j, k);
                    counts.data[ix] = n;
                }
            }
        }
        counts.validate()?;
        Ok(counts)
    }

    #[inline]
    fn index(&self, i: usize, j: usize, k: usize) -> usize {
        (i * self.teams.len() + j) * self.system.len() + k
    }

    /// Checks the zero diagonal and the mirror invariant.
    pub fn validate(&self) -> Result<(), CountsError> {
        let t = self.n_teams();
        for i in 0..t {
            for k in 0..self.system.len() {
                let value = self.get(i, i, k);
                if value != 0 {
                    return Err(CountsError::NonZeroDiagonal {
                        team: self.teams[i].clone(),
                        label: self.system.outcomes()[k].label.clone(),
                        value,
                    });
                }
            }
        }
        for i in 0..t {
            for j in 0..t {
                for k in 0..self.system.len() {
                    let opp = self.system.opposite(k);
                    let count = self.get(i, j, k);
                    let mirror = self.get(j, i, opp);
                    if count != mirror {
                        return Err(CountsError::InconsistentMirror {
                            label: self.system.outcomes()[k].label.clone(),
                            opposite: self.system.outcomes()[opp].label.clone(),
                            team_i: self.teams[i].clone(),
                            team_j: self.teams[j].clone(),
                            count,
                            mirror,
                        });
                    }
                }
            }
        }
        Ok(())
    }

    /// Records one game that team `i` finished with `outcome` against team `j`.
    pub fn add_game(&mut self, i: usize, j: usize, outcome: usize) -> Result<(), CountsError> {
        let t = self.n_teams();
        for index in [i, j] {
            if index >= t {
                return Err(CountsError::TeamOutOfRange { index, teams: t });
            }
        }
        if i == j {
            return Err(CountsError::SelfGame(self.teams[i].clone()));
        }
        if outcome >= self.system.len() {
            return Err(CountsError::UnknownOutcome(outcome));
        }
        let a = self.index(i, j, outcome);
        let b = self.index(j, i, self.system.opposite(outcome));
        self.data[a] += 1;
        self.data[b] += 1;
        Ok(())
    }

    pub fn system(&self) -> &OutcomeSystem {
        &self.system
    }

    pub fn teams(&self) -> &[String] {
        &self.teams
    }

    pub fn n_teams(&self) -> usize {
        self.teams.len()
    }

    pub fn team_index(&self, name: &str) -> Option<usize> {
        self.teams.iter().position(|t| t == name)
    }

    /// `n^I_ij`
    #[inline]
    pub fn get(&self, i: usize, j: usize, outcome: usize) -> u32 {
        self.data[self.index(i, j, outcome)]
    }

    /// `n_ij`, the number of games between `i` and `j`.
    pub fn games(&self, i: usize, j: usize) -> u32 {
        let start = self.index(i, j, 0);
        self.data[start..start + self.system.len()].iter().sum()
    }

    /// Total number of games in the data set.
    pub fn total_games(&self) -> u64 {
        let t = self.n_teams();
        let mut total = 0u64;
        for i in 0..t {
            for j in (i + 1)..t {
                total += u64::from(self.games(i, j));
            }
        }
        total
    }

    /// Number of games played by team `k`.
    pub fn games_played(&self, k: usize) -> u32 {
        (0..self.n_teams()).map(|i| self.games(k, i)).sum()
    }

    /// `n^o`: the number of games that ended in an `o = 1` outcome.
    pub fn overtime_count(&self) -> f64 {
        let t = self.n_teams();
        let mut total = 0.0;
        for i in 0..t {
            for j in (i + 1)..t {
                for k in 0..self.system.len() {
                    total += self.system.o(k) * f64::from(self.get(i, j, k));
                }
            }
        }
        total
    }

    /// `p_k`: the points share earned by team `k` over all of its games.
    pub fn points(&self, k: usize) -> f64 {
        let mut total = 0.0;
        for i in 0..self.n_teams() {
            for o in 0..self.system.len() {
                total += self.system.p(o) * f64::from(self.get(k, i, o));
            }
        }
        total
    }

    /// Points earned by team `i` in its games against team `j`.
    pub fn pair_points(&self, i: usize, j: usize) -> f64 {
        (0..self.system.len())
            .map(|k| self.system.p(k) * f64::from(self.get(i, j, k)))
            .sum()
    }

    /// `n^I_i = sum_j n^I_ij` for each outcome, in system order.
    pub fn outcome_totals(&self, i: usize) -> Vec<u32> {
        (0..self.system.len())
            .map(|k| (0..self.n_teams()).map(|j| self.get(i, j, k)).sum())
            .collect()
    }

    /// The `t x t` matrix for one outcome.
    pub fn outcome_matrix(&self, outcome: usize) -> Vec<Vec<u32>> {
        let t = self.n_teams();
        (0..t)
            .map(|i| (0..t).map(|j| self.get(i, j, outcome)).collect())
            .collect()
    }

    /// Reorders teams so that new team `a` is old team `order[a]`.
    pub fn permuted(&self, order: &[usize]) -> Result<Self, CountsError> {
        let t = self.n_teams();
        if order.len() != t {
            return Err(CountsError::Shape {
                expected: t,
                found: order.len(),
            });
        }
        let teams = order.iter().map(|&o| self.teams[o].clone()).collect();
        let mut out = Self::zeros(self.system.clone(), teams)?;
        for a in 0..t {
            for b in 0..t {
                for k in 0..self.system.len() {
                    let ix = out.index(a, b, k);
                    out.data[ix] = self.get(order[a], order[b], k);
                }
            }
        }
        Ok(out)
    }
}

fn check_unique(teams: &[String]) -> Result<(), CountsError> {
    let mut seen = std::collections::HashSet::new();
    for t in teams {
        if !seen.insert(t.as_str()) {
            return Err(CountsError::DuplicateTeam(t.clone()));
        }
    }
    Ok(())
}
