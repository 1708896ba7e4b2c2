use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use g2inst::cone_dynamics::{family_sweep, ShootOptions};
use g2inst::metric_profiles::{scan_beta, tuned_ac_profile, MetricParams, TuneOptions};
use g2inst::Exec;

fn beta_scan(c: &mut Criterion) {
    let params = MetricParams::new(1, 1, 1.0, 1.0);
    let grid: Vec<f64> = (0..16).map(|i| 1.2 + 0.02 * i as f64).collect();
    let opts = TuneOptions::default();
    let mut g = c.benchmark_group("beta_scan");
    g.sample_size(10);
    for exec in [Exec::Sequential, Exec::Parallel] {
        g.bench_with_input(BenchmarkId::from_parameter(format!("{exec:?}")), &exec, |b, &e| {
            b.iter(|| scan_beta(params, &grid, &opts, e))
        });
    }
    g.finish();
}

fn sweep(c: &mut Criterion) {
    let ac = tuned_ac_profile(MetricParams::new(1, 1, 1.0, 1.0), 1e-15).unwrap();
    let grid = [0.05, 0.1, 0.15, 0.2];
    // coarse bisection keeps one iteration within a few seconds
    let opts = ShootOptions { h0_tol: 1e-6, ..Default::default() };
    let mut g = c.benchmark_group("family_sweep");
    g.sample_size(10);
    for exec in [Exec::Sequential, Exec::Parallel] {
        g.bench_with_input(BenchmarkId::from_parameter(format!("{exec:?}")), &exec, |b, &e| {
            b.iter(|| family_sweep(&grid, &ac, &opts, e))
        });
    }
    g.finish();
}

criterion_group!(benches, beta_scan, sweep);
criterion_main!(benches);
