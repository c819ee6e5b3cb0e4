use multibt::fixtures::{ecac_four_outcome, ecac_win_loss, ecac_win_tie_loss};
use multibt::hmc::{
    lambda_from_omega, leapfrog_energy_error, log_posterior_reduced, omega_from_lambda, sample_target, LogDensity,
    ReducedPosterior, RHAT_THRESHOLD,
};
use multibt::{
    even_match_overtime_prob, fit_mle, gaussian_approximation, hmc_sample, CountsMatrix, FitOptions, HmcConfig,
    HmcError, OutcomeSystem,
};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use nalgebra::{DMatrix, DVector};
use rand_distr::{ChiSquared, Distribution, StandardNormal};

/// Two teams, `wins` and `losses` between them, standard normal prior on gamma.
struct TwoTeam {
    wins: f64,
    losses: f64,
}

impl TwoTeam {
    fn log_density(&self, g: f64) -> f64 {
        let log_sig = |x: f64| -(1.0 + (-x).exp()).ln();
        self.wins * log_sig(g) + self.losses * log_sig(-g) - 0.5 * g * g
    }
}

impl LogDensity for TwoTeam {
    fn dim(&self) -> usize {
        1
    }

    fn log_density_and_grad(&self, x: &[f64], grad: &mut [f64]) -> f64 {
        let g = x[0];
        let s = 1.0 / (1.0 + (-g).exp());
        grad[0] = self.wins * (1.0 - s) - self.losses * s - g;
        self.log_density(g)
    }
}

#[test]
fn matches_quadrature_on_a_one_dimensional_posterior() {
    let target = TwoTeam { wins: 3.0, losses: 1.0 };
    // Trapezoid quadrature on a wide grid.
    let (lo, hi, n) = (-10.0, 10.0, 20_001);
    let step = (hi - lo) / (n - 1) as f64;
    let mut z = 0.0;
    let mut m1 = 0.0;
    let mut m2 = 0.0;
    for k in 0..n {
        let g = lo + step * k as f64;
        let w = if k == 0 || k == n - 1 { 0.5 } else { 1.0 } * target.log_density(g).exp();
        z += w;
        m1 += w * g;
        m2 += w * g * g;
    }
    let mean = m1 / z;
    let var = m2 / z - mean * mean;

    let config = HmcConfig {
        draws_per_chain: 5000,
        leapfrog_steps: 8,
        ..HmcConfig::with_seed(19)
    };
    let raw = sample_target(&target, &config).unwrap();
    let draws: Vec<f64> = raw.chains.iter().flatten().map(|x| x[0]).collect();
    let n = draws.len() as f64;
    let m = draws.iter().sum::<f64>() / n;
    let v = draws.iter().map(|d| (d - m).powi(2)).sum::<f64>() / (n - 1.0);
    assert!((m - mean).abs() < 0.04, "mean {m} vs {mean}");
    assert!((v / var - 1.0).abs() < 0.05, "var {v} vs {var}");
    assert_eq!(raw.divergences, 0);
}

#[test]
fn energy_error_shrinks_quadratically_with_step_size() {
    let sys = OutcomeSystem::four_outcome();
    let counts = ecac_four_outcome();
    let target = ReducedPosterior::new(&sys, &counts).unwrap();
    let fit = fit_mle(&sys, &counts, &FitOptions::default()).unwrap();
    let mut x = omega_from_lambda(&fit.params.lambda);
    x.push(fit.params.tau);
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let unit = vec![1.0; x.len()];
    let (mut coarse, mut fine) = (0.0, 0.0);
    for _ in 0..20 {
        let p: Vec<f64> = (0..x.len()).map(|_| StandardNormal.sample(&mut rng)).collect();
        coarse += leapfrog_energy_error(&target, &x, &p, 0.2, 10, &unit).abs();
        fine += leapfrog_energy_error(&target, &x, &p, 0.02, 100, &unit).abs();
    }
    assert!(coarse / fine >= 50.0, "ratio {}", coarse / fine);
}

#[test]
fn reduced_gradient_matches_finite_differences() {
    let sys = OutcomeSystem::davidson();
    let counts = ecac_win_tie_loss();
    let omega = [0.3, -1.2, 0.8];
    let tau = 0.4;
    let (_, grad) = log_posterior_reduced(&sys, &counts, &omega, tau).unwrap();
    let h = 1e-5;
    for c in 0..4 {
        let shifted = |d: f64| {
            let mut o = omega.to_vec();
            let mut t = tau;
            if c < 3 {
                o[c] += d;
            } else {
                t += d;
            }
            log_posterior_reduced(&sys, &counts, &o, t).unwrap().0
        };
        let fd = (shifted(h) - shifted(-h)) / (2.0 * h);
        assert!((fd - grad[c]).abs() < 1e-6 * fd.abs().max(1.0), "coord {c}: {fd} vs {}", grad[c]);
    }
}

#[test]
fn omega_coordinates_cover_every_difference() {
    let omega = [0.5, -0.25, 1.0];
    let lambda = lambda_from_omega(&omega);
    assert!(lambda.iter().sum::<f64>().abs() < 1e-15);
    for k in 0..3 {
        assert!((lambda[k] - lambda[k + 1] - omega[k]).abs() < 1e-15);
    }
}

/// Self-normalized importance sampling of the exact posterior mean of
/// `gamma_ij`, with a multivariate-t proposal built from the Gaussian
/// approximation in `(omega, tau)` coordinates.
fn importance_mean(sys: &OutcomeSystem, counts: &CountsMatrix, pairs: &[(usize, usize)], n: usize) -> Vec<f64> {
    let fit = fit_mle(sys, counts, &FitOptions::default()).unwrap();
    let post = gaussian_approximation(sys, counts, &fit).unwrap();
    let t = counts.n_teams();
    // omega_k = lambda_k - lambda_{k+1}; tau passes through.
    let a = DMatrix::from_fn(t, t + 1, |r, c| match (r, c) {
        (r, c) if r == t - 1 => f64::from(c == t),
        (r, c) if c == r => 1.0,
        (r, c) if c == r + 1 => -1.0,
        _ => 0.0,
    });
    let cov = &a * &post.covariance * a.transpose();
    let chol = cov.clone().cholesky().unwrap();
    let l = chol.l();
    let prec = chol.inverse();
    let mut mode = omega_from_lambda(&fit.params.lambda);
    mode.push(fit.params.tau);
    let mode = DVector::from_vec(mode);
    let nu = 4.0;
    let chi = ChiSquared::new(nu).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(77);
    let target = ReducedPosterior::new(sys, counts).unwrap();
    let mut grad = vec![0.0; t];
    let mut log_w = Vec::with_capacity(n);
    let mut gammas = Vec::with_capacity(n);
    for _ in 0..n {
        let z = DVector::from_fn(t, |_, _| StandardNormal.sample(&mut rng));
        let w: f64 = chi.sample(&mut rng) / nu;
        let d = &l * z / w.sqrt();
        let x = &mode + &d;
        let q = (d.transpose() * &prec * &d)[(0, 0)];
        let log_q = -(nu + t as f64) / 2.0 * (1.0 + q / nu).ln();
        log_w.push(target.log_density_and_grad(x.as_slice(), &mut grad) - log_q);
        let lambda = lambda_from_omega(&x.as_slice()[..t - 1]);
        gammas.push(pairs.iter().map(|&(i, j)| lambda[i] - lambda[j]).collect::<Vec<_>>());
    }
    let max = log_w.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let weights: Vec<f64> = log_w.iter().map(|v| (v - max).exp()).collect();
    let total: f64 = weights.iter().sum();
    (0..pairs.len())
        .map(|p| weights.iter().zip(&gammas).map(|(w, g)| w * g[p]).sum::<f64>() / total)
        .collect()
}

#[test]
fn four_outcome_posterior_matches_importance_sampling() {
    let sys = OutcomeSystem::four_outcome();
    let counts = ecac_four_outcome();
    let (samples, diag) = hmc_sample(&sys, &counts, &HmcConfig::with_seed(42)).unwrap();
    assert_eq!(samples.len(), 4000);
    let conv = diag.convergence.as_ref().unwrap();
    assert!(conv.all_rhat_below(RHAT_THRESHOLD), "{conv:?}");
    assert!(!diag.non_convergence);
    for d in samples.iter() {
        assert!(d[..4].iter().sum::<f64>().abs() < 1e-10);
    }
    let pairs = [(2, 0), (2, 1)];
    let reference = importance_mean(&sys, &counts, &pairs, 200_000);
    for (&(i, j), r) in pairs.iter().zip(&reference) {
        let g = samples.marginal_gamma(i, j).unwrap();
        let ess = conv.coordinates.iter().filter_map(|c| c.ess_bulk).fold(f64::INFINITY, f64::min);
        let se = g.sd / ess.sqrt();
        assert!((g.mean - r).abs() < 4.0 * se + 0.01, "gamma({i},{j}): {} vs {r} (se {se})", g.mean);
        let reverse = samples.marginal_gamma(j, i).unwrap().mean;
        assert!((g.mean + reverse).abs() < 1e-12);
    }
}

#[test]
fn tie_probability_posterior_is_plausible() {
    let sys = OutcomeSystem::davidson();
    let counts = ecac_win_tie_loss();
    let config = HmcConfig {
        draws_per_chain: 500,
        warmup: 500,
        ..HmcConfig::with_seed(8)
    };
    let (samples, _) = hmc_sample(&sys, &counts, &config).unwrap();
    let probs: Vec<f64> = samples.tau().iter().map(|&t| even_match_overtime_prob(&sys, t)).collect();
    let mean = probs.iter().sum::<f64>() / probs.len() as f64;
    assert!(mean > 0.30 && mean < 0.48, "{mean}");
}

#[test]
fn undefeated_team_is_rejected() {
    let sys = OutcomeSystem::bradley_terry();
    let mut counts = CountsMatrix::zeros(sys.clone(), vec!["A".into(), "B".into(), "C".into()]).unwrap();
    for (i, j) in [(0, 1), (0, 2), (1, 2), (2, 1)] {
        counts.add_game(i, j, 0).unwrap();
    }
    assert!(matches!(
        hmc_sample(&sys, &counts, &HmcConfig::with_seed(1)),
        Err(HmcError::Degenerate(_))
    ));
}

#[test]
fn runs_are_reproducible_and_seed_dependent() {
    let sys = OutcomeSystem::bradley_terry();
    let counts = ecac_win_loss();
    let config = HmcConfig {
        chains: 2,
        warmup: 200,
        draws_per_chain: 100,
        ..HmcConfig::with_seed(3)
    };
    let (a, _) = hmc_sample(&sys, &counts, &config).unwrap();
    let (b, _) = hmc_sample(&sys, &counts, &config).unwrap();
    assert_eq!(a, b);
    let (c, _) = hmc_sample(&sys, &counts, &HmcConfig { seed: 4, ..config }).unwrap();
    assert_ne!(a.draws, c.draws);
}

#[test]
fn single_chain_skips_convergence_diagnostics() {
    let sys = OutcomeSystem::bradley_terry();
    let counts = ecac_win_loss();
    let config = HmcConfig {
        chains: 1,
        warmup: 100,
        draws_per_chain: 50,
        ..HmcConfig::with_seed(3)
    };
    let (samples, diag) = hmc_sample(&sys, &counts, &config).unwrap();
    assert_eq!(samples.len(), 50);
    assert!(diag.convergence.is_none());
}
