//! Static-path Hamiltonian Monte Carlo with a diagonal metric and
//! dual-averaging step-size adaptation.

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

/// A differentiable log density on `R^d`.
pub trait LogDensity {
    fn dim(&self) -> usize;

    /// Returns `log p(x)` and writes its gradient into `grad`.
    fn log_density_and_grad(&self, x: &[f64], grad: &mut [f64]) -> f64;
}

/// Energy error above which a trajectory counts as divergent.
const MAX_ENERGY_ERROR: f64 = 1000.0;

/// Relative jitter applied to the step size after warmup.
const STEP_JITTER: f64 = 0.1;

#[derive(Debug, Clone)]
pub(crate) struct Point {
    pub x: Vec<f64>,
    pub grad: Vec<f64>,
    pub logp: f64,
}

impl Point {
    pub fn new<T: LogDensity + ?Sized>(target: &T, x: Vec<f64>) -> Self {
        let mut grad = vec![0.0; x.len()];
        let logp = target.log_density_and_grad(&x, &mut grad);
        Self { x, grad, logp }
    }
}

fn kinetic(p: &[f64], inv_mass: &[f64]) -> f64 {
    0.5 * p.iter().zip(inv_mass).map(|(p, m)| p * p * m).sum::<f64>()
}

/// Integrates `steps` leapfrog steps of size `eps`, updating `point` and `p`
/// in place. Returns false if the density became non-finite along the way.
fn leapfrog<T: LogDensity + ?Sized>(
    target: &T,
    point: &mut Point,
    p: &mut [f64],
    eps: f64,
    steps: usize,
    inv_mass: &[f64],
) -> bool {
    for _ in 0..steps {
        for (pk, g) in p.iter_mut().zip(&point.grad) {
            *pk += 0.5 * eps * g;
        }
        for ((xk, pk), m) in point.x.iter_mut().zip(p.iter()).zip(inv_mass) {
            *xk += eps * m * pk;
        }
        point.logp = target.log_density_and_grad(&point.x, &mut point.grad);
        if !point.logp.is_finite() {
            return false;
        }
        for (pk, g) in p.iter_mut().zip(&point.grad) {
            *pk += 0.5 * eps * g;
        }
    }
    true
}

/// Change in the Hamiltonian over one leapfrog trajectory started at
/// `(x, momentum)`; zero for an exact integrator.
pub fn leapfrog_energy_error<T: LogDensity + ?Sized>(
    target: &T,
    x: &[f64],
    momentum: &[f64],
    eps: f64,
    steps: usize,
    inv_mass: &[f64],
) -> f64 {
    let mut point = Point::new(target, x.to_vec());
    let mut p = momentum.to_vec();
    let h0 = -point.logp + kinetic(&p, inv_mass);
    if !leapfrog(target, &mut point, &mut p, eps, steps, inv_mass) {
        return f64::INFINITY;
    }
    -point.logp + kinetic(&p, inv_mass) - h0
}

pub(crate) struct Transition {
    pub accept_prob: f64,
    pub accepted: bool,
    pub divergent: bool,
}

/// One HMC transition from `current`.
pub(crate) fn transition<T: LogDensity + ?Sized, R: Rng>(
    target: &T,
    current: &mut Point,
    eps: f64,
    steps: usize,
    inv_mass: &[f64],
    rng: &mut R,
) -> Transition {
    let p0: Vec<f64> = inv_mass
        .iter()
        .map(|m| {
            let z: f64 = StandardNormal.sample(rng);
            z / m.sqrt()
        })
        .collect();
    let h0 = -current.logp + kinetic(&p0, inv_mass);
    let mut proposal = current.clone();
    let mut p = p0;
    let finite = leapfrog(target, &mut proposal, &mut p, eps, steps, inv_mass);
    let energy_error = if finite {
        -proposal.logp + kinetic(&p, inv_mass) - h0
    } else {
        f64::INFINITY
    };
    let divergent = !energy_error.is_finite() || energy_error > MAX_ENERGY_ERROR;
    let accept_prob = if divergent {
        0.0
    } else {
        (-energy_error).exp().min(1.0)
    };
    let u: f64 = rng.random();
    let accepted = u < accept_prob;
    if accepted {
        *current = proposal;
    }
    Transition {
        accept_prob,
        accepted,
        divergent,
    }
}

/// Step-size adaptation by dual averaging towards a target acceptance rate.
#[derive(Debug, Clone)]
pub(crate) struct DualAverage {
    target: f64,
    mu: f64,
    h_bar: f64,
    log_eps: f64,
    log_eps_bar: f64,
    count: f64,
}

impl DualAverage {
    const GAMMA: f64 = 0.05;
    const T0: f64 = 10.0;
    const KAPPA: f64 = 0.75;

    pub fn new(initial_eps: f64, target: f64) -> Self {
        Self {
            target,
            mu: (10.0 * initial_eps).ln(),
            h_bar: 0.0,
            log_eps: initial_eps.ln(),
            log_eps_bar: 0.0,
            count: 0.0,
        }
    }

    pub fn step_size(&self) -> f64 {
        self.log_eps.exp()
    }

    pub fn final_step_size(&self) -> f64 {
        self.log_eps_bar.exp()
    }

    pub fn update(&mut self, accept_prob: f64) {
        self.count += 1.0;
        let eta = 1.0 / (self.count + Self::T0);
        self.h_bar = (1.0 - eta) * self.h_bar + eta * (self.target - accept_prob);
        self.log_eps = self.mu - self.count.sqrt() / Self::GAMMA * self.h_bar;
        let w = self.count.powf(-Self::KAPPA);
        self.log_eps_bar = w * self.log_eps + (1.0 - w) * self.log_eps_bar;
    }
}

/// Doubles or halves a trial step size until a single leapfrog step's
/// acceptance probability crosses 1/2.
pub(crate) fn initial_step_size<T: LogDensity + ?Sized, R: Rng>(
    target: &T,
    start: &Point,
    inv_mass: &[f64],
    rng: &mut R,
) -> f64 {
    let p0: Vec<f64> = inv_mass
        .iter()
        .map(|m| {
            let z: f64 = StandardNormal.sample(rng);
            z / m.sqrt()
        })
        .collect();
    let log_accept = |eps: f64| -> f64 {
        let de = leapfrog_energy_error(target, &start.x, &p0, eps, 1, inv_mass);
        if de.is_finite() {
            -de
        } else {
            f64::NEG_INFINITY
        }
    };
    let mut eps = 1.0;
    let half = 0.5f64.ln();
    let going_up = log_accept(eps) > half;
    for _ in 0..50 {
        let next = if going_up { eps * 2.0 } else { eps * 0.5 };
        let crossed = if going_up {
            log_accept(next) <= half
        } else {
            log_accept(next) > half
        };
        eps = next;
        if crossed {
            break;
        }
    }
    eps
}

#[derive(Debug, Clone)]
pub(crate) struct ChainResult {
    pub draws: Vec<Vec<f64>>,
    pub accept_rate: f64,
    pub divergences: usize,
    pub step_size: f64,
    pub inv_mass: Vec<f64>,
}

#[derive(Debug, Clone, Copy)]
pub(crate) struct ChainSettings {
    pub warmup: usize,
    pub draws: usize,
    pub steps: usize,
    pub target_accept: f64,
}

/// Runs one chain: warmup with step-size and metric adaptation, then sampling.
///
/// Warmup is split into three windows. The first half adapts the step size
/// under a unit metric; draws from the next 40% estimate per-coordinate
/// variances which become the diagonal inverse metric; the last 10% re-adapts
/// the step size under that metric.
pub(crate) fn run_chain<T: LogDensity + ?Sized, R: Rng>(
    target: &T,
    start: Vec<f64>,
    settings: ChainSettings,
    rng: &mut R,
) -> ChainResult {
    let dim = target.dim();
    let mut inv_mass = vec![1.0; dim];
    let mut current = Point::new(target, start);

    let metric_start = settings.warmup / 2;
    let metric_end = settings.warmup - settings.warmup / 10;
    let mut adapt = DualAverage::new(
        initial_step_size(target, &current, &inv_mass, rng),
        settings.target_accept,
    );
    let mut window: Vec<Vec<f64>> = Vec::new();

    for it in 0..settings.warmup {
        let tr = transition(target, &mut current, adapt.step_size(), settings.steps, &inv_mass, rng);
        adapt.update(tr.accept_prob);
        if it >= metric_start && it < metric_end {
            window.push(current.x.clone());
        }
        if it + 1 == metric_end && window.len() >= 10 {
            inv_mass = regularized_variances(&window);
            let eps = initial_step_size(target, &current, &inv_mass, rng);
            adapt = DualAverage::new(eps, settings.target_accept);
        }
    }
    let step_size = if settings.warmup > 0 {
        adapt.final_step_size()
    } else {
        adapt.step_size()
    };

    let mut draws = Vec::with_capacity(settings.draws);
    let mut accepted = 0usize;
    let mut divergences = 0usize;
    for _ in 0..settings.draws {
        let jitter: f64 = rng.random_range(-STEP_JITTER..STEP_JITTER);
        let eps = step_size * (1.0 + jitter);
        let tr = transition(target, &mut current, eps, settings.steps, &inv_mass, rng);
        accepted += usize::from(tr.accepted);
        divergences += usize::from(tr.divergent);
        draws.push(current.x.clone());
    }
    let accept_rate = if settings.draws > 0 {
        accepted as f64 / settings.draws as f64
    } else {
        0.0
    };
    ChainResult {
        draws,
        accept_rate,
        divergences,
        step_size,
        inv_mass,
    }
}

/// Sample variances shrunk towards a small constant, as in Stan's windowed
/// metric adaptation.
fn regularized_variances(window: &[Vec<f64>]) -> Vec<f64> {
    let n = window.len() as f64;
    let dim = window[0].len();
    (0..dim)
        .map(|c| {
            let mean = window.iter().map(|x| x[c]).sum::<f64>() / n;
            let var = window.iter().map(|x| (x[c] - mean).powi(2)).sum::<f64>() / (n - 1.0);
            (n / (n + 5.0)) * var + 1e-3 * (5.0 / (n + 5.0))
        })
        .collect()
}
