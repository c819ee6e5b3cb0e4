mod common;

use common::{counts_from_games, team_names};
use multibt::fixtures::{ecac_four_outcome, ecac_win_loss, ecac_win_tie_loss};
use multibt::mle::ml_equation_residuals;
use multibt::{
    check_identifiable, fit_mle, fit_mle_from, CountsMatrix, DegenerateData, FitError, FitOptions, ModelParams,
    OutcomeSystem,
};
use proptest::prelude::*;

fn undefeated_season() -> CountsMatrix {
    // A beats everyone; B, C and D split their games.
    let sys = OutcomeSystem::bradley_terry();
    counts_from_games(
        &sys,
        4,
        &[(0, 1, 0), (0, 2, 0), (0, 3, 0), (1, 2, 0), (2, 3, 0), (3, 1, 0), (2, 1, 0)],
    )
}

#[test]
fn two_team_win_loss_has_closed_form() {
    let sys = OutcomeSystem::bradley_terry();
    let counts = counts_from_games(&sys, 2, &[(0, 1, 0), (0, 1, 0), (0, 1, 0), (1, 0, 0)]);
    let fit = fit_mle(&sys, &counts, &FitOptions::default()).unwrap();
    assert!((fit.params.gamma(0, 1) - 3f64.ln()).abs() < 1e-9);
}

#[test]
fn two_team_ties_have_closed_form() {
    // Two teams and three outcomes: the model is saturated, so the fitted
    // probabilities are the observed frequencies 3/6, 2/6, 1/6.
    let sys = OutcomeSystem::davidson();
    let games = [(0, 1, 0), (0, 1, 0), (0, 1, 0), (0, 1, 1), (0, 1, 1), (0, 1, 2)];
    let counts = counts_from_games(&sys, 2, &games);
    let fit = fit_mle(&sys, &counts, &FitOptions::default()).unwrap();
    assert!((fit.params.gamma(0, 1) - 3f64.ln()).abs() < 1e-8);
    let th = multibt::outcome_probs(&sys, &fit.params, 0, 1).unwrap();
    assert!((th[1] - 2.0 / 6.0).abs() < 1e-9);
}

#[test]
fn undefeated_team_is_named() {
    let counts = undefeated_season();
    let err = fit_mle(&OutcomeSystem::bradley_terry(), &counts, &FitOptions::default()).unwrap_err();
    match err {
        FitError::Degenerate(DegenerateData::Undefeated { undefeated, winless }) => {
            assert_eq!(undefeated, vec!["T0".to_string()]);
            assert!(winless.is_empty() || !winless.contains(&"T0".to_string()));
        }
        other => panic!("unexpected {other:?}"),
    }
}

#[test]
fn winless_team_is_named() {
    let sys = OutcomeSystem::bradley_terry();
    let counts = counts_from_games(&sys, 3, &[(0, 1, 0), (1, 0, 0), (0, 2, 0), (1, 2, 0)]);
    match check_identifiable(&counts) {
        Err(DegenerateData::Undefeated { winless, .. }) => assert_eq!(winless, vec!["T2".to_string()]),
        other => panic!("unexpected {other:?}"),
    }
}

#[test]
fn other_degenerate_shapes() {
    let sys = OutcomeSystem::bradley_terry();
    let empty = CountsMatrix::zeros(sys.clone(), team_names(3)).unwrap();
    assert_eq!(check_identifiable(&empty), Err(DegenerateData::NoGames));

    let split = counts_from_games(&sys, 4, &[(0, 1, 0), (1, 0, 0), (2, 3, 0), (3, 2, 0)]);
    assert!(matches!(check_identifiable(&split), Err(DegenerateData::Disconnected { groups }) if groups.len() == 2));

    let dav = OutcomeSystem::davidson();
    let no_ties = counts_from_games(&dav, 2, &[(0, 1, 0), (1, 0, 0)]);
    assert_eq!(check_identifiable(&no_ties), Err(DegenerateData::NoOvertimeGames));
    let all_ties = counts_from_games(&dav, 2, &[(0, 1, 1), (1, 0, 1)]);
    assert_eq!(check_identifiable(&all_ties), Err(DegenerateData::AllOvertimeGames));
}

#[test]
fn iteration_cap_reports_non_convergence() {
    let sys = OutcomeSystem::four_outcome();
    let counts = ecac_four_outcome();
    let opts = FitOptions {
        max_iter: 3,
        ..FitOptions::default()
    };
    let fit = fit_mle(&sys, &counts, &opts).unwrap();
    assert!(!fit.converged);
    assert_eq!(fit.iterations, 3);
    assert!(matches!(fit.require_converged(), Err(FitError::NotConverged { .. })));
}

#[test]
fn bad_options_are_rejected() {
    let sys = OutcomeSystem::bradley_terry();
    let counts = ecac_win_loss();
    for opts in [
        FitOptions { tol: 0.0, ..FitOptions::default() },
        FitOptions { max_iter: 0, ..FitOptions::default() },
        FitOptions { damping: 1.5, ..FitOptions::default() },
    ] {
        assert!(matches!(fit_mle(&sys, &counts, &opts), Err(FitError::Options(_))));
    }
}

#[test]
fn damping_reaches_the_same_estimate() {
    let sys = OutcomeSystem::davidson();
    let counts = ecac_win_tie_loss();
    let plain = fit_mle(&sys, &counts, &FitOptions::default()).unwrap();
    let damped = fit_mle(
        &sys,
        &counts,
        &FitOptions {
            damping: 0.5,
            ..FitOptions::default()
        },
    )
    .unwrap();
    assert!(damped.converged);
    for (a, b) in plain.params.lambda.iter().zip(&damped.params.lambda) {
        assert!((a - b).abs() < 1e-8);
    }
}

#[test]
fn relabelling_teams_permutes_the_estimate() {
    let sys = OutcomeSystem::four_outcome();
    let counts = ecac_four_outcome();
    let base = fit_mle(&sys, &counts, &FitOptions::default()).unwrap();
    let order = [2, 0, 3, 1];
    let permuted = counts.permuted(&order).unwrap();
    let fit = fit_mle(&sys, &permuted, &FitOptions::default()).unwrap();
    for (new, &old) in order.iter().enumerate() {
        assert!((fit.params.lambda[new] - base.params.lambda[old]).abs() < 1e-9);
    }
    assert!((fit.params.tau - base.params.tau).abs() < 1e-9);
}

#[test]
fn reordering_outcomes_changes_nothing() {
    let reordered = OutcomeSystem::new(
        "four-outcome-reordered",
        OutcomeSystem::four_outcome().outcomes().iter().rev().cloned().collect(),
    )
    .unwrap();
    let src = ecac_four_outcome();
    let mut counts = CountsMatrix::zeros(reordered.clone(), src.teams().to_vec()).unwrap();
    let m = reordered.len();
    for i in 0..4 {
        for j in 0..4 {
            for k in 0..m {
                let original = m - 1 - k;
                for _ in 0..src.get(i, j, original) {
                    if reordered.p(k) >= 0.5 {
                        counts.add_game(i, j, k).unwrap();
                    }
                }
            }
        }
    }
    assert_eq!(counts.total_games(), src.total_games());
    let a = fit_mle(&OutcomeSystem::four_outcome(), &src, &FitOptions::default()).unwrap();
    let b = fit_mle(&reordered, &counts, &FitOptions::default()).unwrap();
    for (x, y) in a.params.lambda.iter().zip(&b.params.lambda) {
        assert!((x - y).abs() < 1e-9);
    }
    assert!((a.params.tau - b.params.tau).abs() < 1e-9);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn any_start_reaches_the_same_estimate(
        lambda in prop::collection::vec(-3.0f64..3.0, 4),
        tau in -3.0f64..3.0,
    ) {
        let sys = OutcomeSystem::four_outcome();
        let counts = ecac_four_outcome();
        let base = fit_mle(&sys, &counts, &FitOptions::default()).unwrap();
        let fit = fit_mle_from(&sys, &counts, ModelParams::new(lambda, tau), &FitOptions::default()).unwrap();
        prop_assert!(fit.converged);
        for (a, b) in fit.params.lambda.iter().zip(&base.params.lambda) {
            prop_assert!((a - b).abs() < 1e-8);
        }
        prop_assert!((fit.params.tau - base.params.tau).abs() < 1e-8);
    }

    #[test]
    fn converged_fits_solve_the_ml_equations(
        (system, t, games) in (common::arb_system(), 2usize..=5).prop_flat_map(|(s, t)| {
            let m = s.len();
            (Just(s), Just(t), common::arb_games(t, m, 60))
        })
    ) {
        let counts = counts_from_games(&system, t, &games);
        prop_assume!(check_identifiable(&counts).is_ok());
        let fit = fit_mle(&system, &counts, &FitOptions::default()).unwrap();
        if fit.converged {
            let r = ml_equation_residuals(&system, &counts, &fit.params).unwrap();
            prop_assert!(r.max_abs() < 1e-8, "{}", r);
            prop_assert!(fit.log_likelihood_at_mle >= fit.initial_log_likelihood - 1e-9);
        }
    }
}
