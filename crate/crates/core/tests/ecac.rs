//! Fits to the bundled 2020-21 ECAC season against the published tables.

use multibt::fixtures::{ecac_four_outcome, ecac_win_loss, ecac_win_tie_loss};
use multibt::mle::ml_equation_residuals;
use multibt::{
    even_match_overtime_prob, fit_mle, gaussian_approximation, outcome_probs, CountsMatrix, FitOptions, MleFit,
    OutcomeSystem,
};

const CG: usize = 0;
const CK: usize = 1;
const QN: usize = 2;
const SL: usize = 3;

fn converged_fit(system: &OutcomeSystem, counts: &CountsMatrix) -> MleFit {
    let fit = fit_mle(system, counts, &FitOptions::default()).unwrap();
    assert!(fit.converged);
    fit
}

fn close(actual: f64, published: f64, tol: f64, what: &str) {
    assert!(
        (actual - published).abs() <= tol + 1e-12,
        "{what}: {actual:.4} vs published {published:.2}"
    );
}

fn check_matrix(
    system: &OutcomeSystem,
    fit: &MleFit,
    outcome: &str,
    published: [[f64; 4]; 4],
) {
    let k = system.index_of(outcome).unwrap();
    for i in 0..4 {
        for j in 0..4 {
            if i != j {
                let theta = outcome_probs(system, &fit.params, i, j).unwrap();
                close(theta[k], published[i][j], 0.005, &format!("theta^{outcome}({i},{j})"));
            }
        }
    }
}

fn check_corr(actual: &nalgebra::DMatrix<f64>, published: &[&[f64]], tol: f64) {
    for (r, row) in published.iter().enumerate() {
        for (c, &v) in row.iter().enumerate() {
            close(actual[(r, c)], v, tol, &format!("rho({r},{c})"));
        }
    }
}

#[test]
fn win_loss_table() {
    let sys = OutcomeSystem::bradley_terry();
    let counts = ecac_win_loss();
    let fit = converged_fit(&sys, &counts);
    for (k, l) in [-0.55, 0.32, 0.74, -0.51].iter().enumerate() {
        close(fit.params.lambda[k], *l, 0.005, "lambda");
    }
    let post = gaussian_approximation(&sys, &counts, &fit).unwrap();
    for (k, s) in [0.39, 0.43, 0.40, 0.45].iter().enumerate() {
        close(post.sd()[k], *s, 0.005, "sd");
    }
    check_corr(
        &post.correlation().matrix,
        &[
            &[1.0, -0.31, -0.39, -0.21],
            &[-0.31, 1.0, -0.22, -0.50],
            &[-0.39, -0.22, 1.0, -0.35],
            &[-0.21, -0.50, -0.35, 1.0],
        ],
        0.005,
    );
    check_matrix(
        &sys,
        &fit,
        "W",
        [
            [0.0, 0.29, 0.22, 0.49],
            [0.71, 0.0, 0.40, 0.70],
            [0.78, 0.60, 0.0, 0.78],
            [0.51, 0.30, 0.22, 0.0],
        ],
    );
}

#[test]
fn win_tie_loss_table() {
    let sys = OutcomeSystem::davidson();
    let counts = ecac_win_tie_loss();
    let fit = converged_fit(&sys, &counts);
    for (k, l) in [-0.73, 0.70, 0.89, -0.85].iter().enumerate() {
        close(fit.params.lambda[k], *l, 0.005, "lambda");
    }
    close(fit.params.tau, 0.23, 0.005, "tau");
    close(even_match_overtime_prob(&sys, fit.params.tau), 0.39, 0.005, "even-match tie");
    check_matrix(
        &sys,
        &fit,
        "W",
        [
            [0.0, 0.13, 0.11, 0.33],
            [0.54, 0.0, 0.28, 0.56],
            [0.57, 0.34, 0.0, 0.59],
            [0.29, 0.12, 0.10, 0.0],
        ],
    );
    check_matrix(
        &sys,
        &fit,
        "T",
        [
            [0.0, 0.33, 0.32, 0.38],
            [0.33, 0.0, 0.38, 0.32],
            [0.32, 0.38, 0.0, 0.31],
            [0.38, 0.32, 0.31, 0.0],
        ],
    );
    let post = gaussian_approximation(&sys, &counts, &fit).unwrap();
    for (k, s) in [0.50, 0.57, 0.51, 0.58, 0.40].iter().enumerate() {
        close(post.sd()[k], *s, 0.005, "sd");
    }
    check_corr(
        &post.correlation().matrix,
        &[
            &[1.0, -0.35, -0.40, -0.16, -0.22],
            &[-0.35, 1.0, -0.16, -0.53, 0.19],
            &[-0.40, -0.16, 1.0, -0.38, 0.26],
            &[-0.16, -0.53, -0.38, 1.0, -0.22],
        ],
        0.01,
    );
}

#[test]
fn four_outcome_table() {
    let sys = OutcomeSystem::four_outcome();
    let counts = ecac_four_outcome();
    let fit = converged_fit(&sys, &counts);
    for (k, l) in [-0.74, 0.60, 0.93, -0.79].iter().enumerate() {
        close(fit.params.lambda[k], *l, 0.005, "lambda");
    }
    close(fit.params.tau, -0.49, 0.005, "tau");
    close(even_match_overtime_prob(&sys, fit.params.tau), 0.38, 0.005, "even-match overtime");
    check_matrix(
        &sys,
        &fit,
        "RW",
        [
            [0.0, 0.14, 0.11, 0.32],
            [0.53, 0.0, 0.26, 0.53],
            [0.57, 0.36, 0.0, 0.58],
            [0.30, 0.13, 0.10, 0.0],
        ],
    );
    check_matrix(
        &sys,
        &fit,
        "OW",
        [
            [0.0, 0.13, 0.12, 0.19],
            [0.21, 0.0, 0.18, 0.20],
            [0.20, 0.20, 0.0, 0.20],
            [0.19, 0.13, 0.11, 0.0],
        ],
    );
    let post = gaussian_approximation(&sys, &counts, &fit).unwrap();
    for (k, s) in [0.48, 0.54, 0.50, 0.56, 0.39].iter().enumerate() {
        close(post.sd()[k], *s, 0.005, "sd");
    }
    check_corr(
        &post.correlation().matrix,
        &[
            &[1.0, -0.34, -0.41, -0.17, -0.19],
            &[-0.34, 1.0, -0.17, -0.52, 0.14],
            &[-0.41, -0.17, 1.0, -0.38, 0.23],
            &[-0.17, -0.52, -0.38, 1.0, -0.18],
        ],
        0.01,
    );
}

#[test]
fn ml_equations_hold_at_every_fit() {
    for (sys, counts) in [
        (OutcomeSystem::bradley_terry(), ecac_win_loss()),
        (OutcomeSystem::davidson(), ecac_win_tie_loss()),
        (OutcomeSystem::four_outcome(), ecac_four_outcome()),
    ] {
        let fit = converged_fit(&sys, &counts);
        let r = ml_equation_residuals(&sys, &counts, &fit.params).unwrap();
        assert!(r.max_abs() < 1e-8, "{}: {:?}", sys.name(), r);
        assert!(fit.params.lambda.iter().sum::<f64>().abs() < 1e-12);
        assert!(fit.log_likelihood_at_mle >= fit.initial_log_likelihood);
    }
}

#[test]
fn quoted_pairs() {
    let sys = OutcomeSystem::davidson();
    let fit = converged_fit(&sys, &ecac_win_tie_loss());
    let theta = outcome_probs(&sys, &fit.params, QN, CK).unwrap();
    close(theta[0], 0.34, 0.005, "W(Qn,Ck)");
    close(theta[1], 0.38, 0.005, "T(Qn,Ck)");

    let sys = OutcomeSystem::four_outcome();
    let fit = converged_fit(&sys, &ecac_four_outcome());
    let theta = outcome_probs(&sys, &fit.params, SL, QN).unwrap();
    close(theta[0], 0.10, 0.005, "RW(SL,Qn)");
    close(theta[1], 0.11, 0.005, "OW(SL,Qn)");

    let sys = OutcomeSystem::bradley_terry();
    let fit = converged_fit(&sys, &ecac_win_loss());
    close(fit.params.gamma(QN, CG), 1.29, 0.01, "gamma(Qn,Cg)");
}
