//! The 2020-21 ECAC Hockey season (four teams, 32 games), bundled for tests,
//! examples and benchmarks.

use crate::counts::CountsMatrix;
use crate::ingest::{self, CollapseMap};
use crate::model::OutcomeSystem;

/// One game per row, each recorded from the winner's side.
pub const ECAC_GAMES_CSV: &str = include_str!("../data/ecac_2020_21_games.csv");

/// The same season as four-outcome count matrices.
pub const ECAC_COUNTS_JSON: &str = include_str!("../data/ecac_2020_21_counts.json");

/// Four-outcome counts in the order Colgate, Clarkson, Quinnipiac, St. Lawrence.
pub fn ecac_four_outcome() -> CountsMatrix {
    ingest::load_counts_json(ECAC_COUNTS_JSON).expect("bundled counts are valid")
}

/// Overtime results counted as plain wins and losses.
pub fn ecac_win_loss() -> CountsMatrix {
    ingest::collapse(
        &ecac_four_outcome(),
        &CollapseMap::four_to_win_loss(),
        &OutcomeSystem::bradley_terry(),
    )
    .expect("collapse map is valid")
}

/// Overtime results counted as ties.
pub fn ecac_win_tie_loss() -> CountsMatrix {
    ingest::collapse(
        &ecac_four_outcome(),
        &CollapseMap::four_to_win_tie_loss(),
        &OutcomeSystem::davidson(),
    )
    .expect("collapse map is valid")
}
