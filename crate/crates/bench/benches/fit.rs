use std::hint::black_box;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use multibt::fixtures::{ecac_four_outcome, ecac_win_loss, ecac_win_tie_loss};
use multibt::{fit_mle, gaussian_approximation, hessian, CountsMatrix, FitOptions, OutcomeSystem};

/// A round-robin league of `t` teams with deterministic, non-degenerate results.
fn league(system: &OutcomeSystem, t: usize) -> CountsMatrix {
    let teams = (0..t).map(|k| format!("T{k}")).collect();
    let mut counts = CountsMatrix::zeros(system.clone(), teams).unwrap();
    let m = system.len();
    for i in 0..t {
        for j in 0..t {
            if i != j {
                counts.add_game(i, j, (i * 7 + j * 3) % m).unwrap();
                counts.add_game(i, j, (i + 2 * j + 1) % m).unwrap();
            }
        }
    }
    counts
}

fn ecac(c: &mut Criterion) {
    let mut group = c.benchmark_group("ecac_fit");
    for (system, counts) in [
        (OutcomeSystem::bradley_terry(), ecac_win_loss()),
        (OutcomeSystem::davidson(), ecac_win_tie_loss()),
        (OutcomeSystem::four_outcome(), ecac_four_outcome()),
    ] {
        group.bench_function(system.name().to_string(), |b| {
            b.iter(|| {
                let fit = fit_mle(&system, black_box(&counts), &FitOptions::default()).unwrap();
                gaussian_approximation(&system, &counts, &fit).unwrap()
            })
        });
    }
    group.finish();
}

fn league_size(c: &mut Criterion) {
    let system = OutcomeSystem::four_outcome();
    let mut group = c.benchmark_group("four_outcome_league");
    for t in [8, 16, 32, 60] {
        let counts = league(&system, t);
        group.bench_with_input(BenchmarkId::new("fit", t), &counts, |b, counts| {
            b.iter(|| fit_mle(&system, black_box(counts), &FitOptions::default()).unwrap())
        });
        let fit = fit_mle(&system, &counts, &FitOptions::default()).unwrap();
        group.bench_with_input(BenchmarkId::new("hessian", t), &counts, |b, counts| {
            b.iter(|| hessian(&system, black_box(counts), &fit.params).unwrap())
        });
    }
    group.finish();
}

criterion_group!(benches, ecac, league_size);
criterion_main!(benches);
