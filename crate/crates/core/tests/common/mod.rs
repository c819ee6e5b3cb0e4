#![allow(dead_code)]

use multibt::{CountsMatrix, ModelParams, OutcomeSpec, OutcomeSystem};
use proptest::prelude::*;

/// A random valid outcome system: a full win/loss pair, plus optional
/// partial-win pairs and an optional self-opposite draw.
pub fn arb_system() -> impl Strategy<Value = OutcomeSystem> {
    let builtin = prop_oneof![
        Just(OutcomeSystem::bradley_terry()),
        Just(OutcomeSystem::davidson()),
        Just(OutcomeSystem::four_outcome()),
        Just(OutcomeSystem::ccha()),
    ];
    let custom = (
        prop::collection::vec((0.5f64..1.0, 0u8..=1), 0..3),
        prop::option::of(0u8..=1),
    )
        .prop_map(|(partials, tie)| {
            let mut specs = vec![OutcomeSpec::new("W", 1.0, 0, "L"), OutcomeSpec::new("L", 0.0, 0, "W")];
            for (k, (p, o)) in partials.into_iter().enumerate() {
                let (a, b) = (format!("A{k}"), format!("B{k}"));
                specs.push(OutcomeSpec::new(&a, p, o, &b));
                specs.push(OutcomeSpec::new(&b, 1.0 - p, o, &a));
            }
            if let Some(o) = tie {
                specs.push(OutcomeSpec::new("D", 0.5, o, "D"));
            }
            OutcomeSystem::new("custom", specs).unwrap()
        });
    prop_oneof![builtin, custom]
}

pub fn team_names(t: usize) -> Vec<String> {
    (0..t).map(|k| format!("T{k}")).collect()
}

/// Random games `(i, j, outcome)` among `t` teams.
pub fn arb_games(t: usize, m: usize, max_games: usize) -> impl Strategy<Value = Vec<(usize, usize, usize)>> {
    prop::collection::vec((0..t, 1..t, 0..m), 0..=max_games)
        .prop_map(move |g| g.into_iter().map(|(i, d, k)| (i, (i + d) % t, k)).collect())
}

pub fn counts_from_games(system: &OutcomeSystem, t: usize, games: &[(usize, usize, usize)]) -> CountsMatrix {
    let mut counts = CountsMatrix::zeros(system.clone(), team_names(t)).unwrap();
    for &(i, j, k) in games {
        counts.add_game(i, j, k).unwrap();
    }
    counts
}

/// `(system, counts, params)` with `2 <= t <= 5`.
pub fn arb_instance() -> impl Strategy<Value = (OutcomeSystem, CountsMatrix, ModelParams)> {
    (arb_system(), 2usize..=5).prop_flat_map(|(system, t)| {
        let m = system.len();
        (
            Just(system),
            arb_games(t, m, 40),
            prop::collection::vec(-2.5f64..2.5, t),
            -2.0f64..2.0,
        )
            .prop_map(move |(system, games, lambda, tau)| {
                let counts = counts_from_games(&system, t, &games);
                (system, counts, ModelParams::new(lambda, tau))
            })
    })
}

/// `|a - b| / max(1, |a|, |b|)`.
pub fn rel_err(a: f64, b: f64) -> f64 {
    (a - b).abs() / 1f64.max(a.abs()).max(b.abs())
}
