mod common;

use multibt::fixtures::{ecac_four_outcome, ECAC_COUNTS_JSON, ECAC_GAMES_CSV};
use multibt::ingest::{load_counts_json, load_system_json, save_counts_json, IngestError};
use multibt::{aggregate, collapse, parse_games_csv, CollapseMap, GameRecord, OutcomeSystem};
use proptest::prelude::*;

#[test]
fn games_file_matches_counts_file() {
    let sys = OutcomeSystem::four_outcome();
    let records = parse_games_csv(ECAC_GAMES_CSV, &sys).unwrap();
    assert_eq!(records.len(), 32);
    let counts = aggregate(&records, &sys, None).unwrap();
    assert_eq!(counts, load_counts_json(ECAC_COUNTS_JSON).unwrap());
    assert_eq!(counts.teams(), ["Colgate", "Clarkson", "Quinnipiac", "St. Lawrence"]);
}

#[test]
fn season_totals() {
    let counts = ecac_four_outcome();
    // (RW, OW, OL, RL) per team.
    let expected = [[4, 2, 3, 9], [5, 3, 4, 2], [9, 4, 2, 3], [3, 2, 2, 7]];
    for (k, row) in expected.iter().enumerate() {
        assert_eq!(counts.outcome_totals(k), row.to_vec(), "{}", counts.teams()[k]);
    }
    assert_eq!(counts.total_games(), 32);
    assert_eq!(counts.games(1, 3), 2);
    assert_eq!(counts.games(0, 2), 6);
    assert_eq!(counts.overtime_count(), 11.0);
}

#[test]
fn collapsed_totals() {
    let counts = ecac_four_outcome();
    let wl = collapse(&counts, &CollapseMap::four_to_win_loss(), &OutcomeSystem::bradley_terry()).unwrap();
    assert_eq!(wl.outcome_totals(0), vec![6, 12]);
    let wtl = collapse(&counts, &CollapseMap::four_to_win_tie_loss(), &OutcomeSystem::davidson()).unwrap();
    assert_eq!(wtl.outcome_totals(0), vec![4, 5, 9]);
    assert_eq!(wtl.total_games(), 32);
}

#[test]
fn counts_json_round_trip() {
    let counts = ecac_four_outcome();
    assert_eq!(load_counts_json(&save_counts_json(&counts)).unwrap(), counts);
}

#[test]
fn broken_mirror_is_reported() {
    let text = ECAC_COUNTS_JSON.replacen("\"RL\": [[0, 3,", "\"RL\": [[0, 2,", 1);
    assert_ne!(text, ECAC_COUNTS_JSON);
    assert!(matches!(load_counts_json(&text), Err(IngestError::InconsistentMirror(_))));
}

#[test]
fn custom_system_file() {
    let text = r#"[
        {"label": "W", "p": 1.0, "o": 0, "opposite": "L"},
        {"label": "SW", "p": 0.6, "o": 1, "opposite": "SL"},
        {"label": "SL", "p": 0.4, "o": 1, "opposite": "SW"},
        {"label": "L", "p": 0.0, "o": 0, "opposite": "W"}
    ]"#;
    let sys = load_system_json(text, "ccha-file").unwrap();
    assert_eq!(sys.outcomes(), OutcomeSystem::ccha().outcomes());
    let bad = r#"[{"label": "W", "p": 1.0, "o": 0, "opposite": "L"}, {"label": "L", "p": 0.2, "o": 0, "opposite": "W"}]"#;
    assert!(matches!(load_system_json(bad, "x"), Err(IngestError::System(_))));
}

proptest! {
    #[test]
    fn collapsing_commutes_with_aggregation(
        games in prop::collection::vec((0usize..4, 1usize..4, 0usize..4), 0..60),
        wtl in any::<bool>(),
    ) {
        let four = OutcomeSystem::four_outcome();
        let names = common::team_names(4);
        let (map, target) = if wtl {
            (CollapseMap::four_to_win_tie_loss(), OutcomeSystem::davidson())
        } else {
            (CollapseMap::four_to_win_loss(), OutcomeSystem::bradley_terry())
        };
        let records: Vec<GameRecord> = games
            .iter()
            .map(|&(i, d, k)| GameRecord {
                team_i: names[i].clone(),
                team_j: names[(i + d) % 4].clone(),
                outcome: four.outcomes()[k].label.clone(),
                date: None,
            })
            .collect();
        let mapped: Vec<GameRecord> = records
            .iter()
            .map(|r| GameRecord { outcome: map.target_of(&r.outcome).unwrap().to_string(), ..r.clone() })
            .collect();
        let a = collapse(&aggregate(&records, &four, Some(&names)).unwrap(), &map, &target).unwrap();
        let b = aggregate(&mapped, &target, Some(&names)).unwrap();
        prop_assert_eq!(a, b);
    }
}
