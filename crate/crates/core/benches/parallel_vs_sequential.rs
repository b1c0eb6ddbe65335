use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use fdrp::campaign::{run_campaign_with, Algorithm, CampaignConfig, Sweep};
use fdrp::exec::{self, Mode};
use fdrp::model::SystemConfig;
use fdrp::oracle::OrthogonalPattern;

fn micro() -> SystemConfig {
    let mut c = SystemConfig::default_scenario().with_users(2).with_power_dbm(-100.0);
    c.num_subcarriers = 2;
    c.num_tx_antennas = 2;
    c.horizon_cap = 2;
    c.slot_weights = vec![0.01, 10.0];
    c
}

fn campaign(c: &mut Criterion) {
    let mut cfg = CampaignConfig::new(micro(), (1..=8).collect(), vec![Algorithm::Fdrp, Algorithm::Grp, Algorithm::Oracle]);
    cfg.sweep = Sweep::PowerDbm(vec![-100.0, -40.0]);
    let mut group = c.benchmark_group("micro_campaign");
    group.sample_size(10);
    for (name, mode) in [("sequential", Mode::Sequential), ("parallel", Mode::Parallel(0))] {
        group.bench_with_input(BenchmarkId::from_parameter(name), &mode, |b, &mode| {
            b.iter(|| run_campaign_with(&cfg, mode))
        });
    }
    group.finish();
}

fn pattern_decode(c: &mut Criterion) {
    let indices: Vec<usize> = (0..100_000).collect();
    let mut group = c.benchmark_group("pattern_completion_times");
    for (name, mode) in [("sequential", Mode::Sequential), ("parallel", Mode::Parallel(0))] {
        group.bench_with_input(BenchmarkId::from_parameter(name), &mode, |b, &mode| {
            b.iter(|| exec::map(mode, &indices, |&i| OrthogonalPattern::decode(i, 3, 4, 2).completion_times(3)))
        });
    }
    group.finish();
}

criterion_group!(benches, campaign, pattern_decode);
criterion_main!(benches);
