use std::collections::BTreeMap;

use fdrp::campaign::{
    mean_stderr, read_trials, run_campaign_with, run_point, trial_channels, write_results, Algorithm, CampaignConfig,
    Sweep, AGGREGATE_FILE, AGGREGATE_HEADER, CONVERGENCE_FILE, CONVERGENCE_HEADER, HEATMAP_FILE, MULTIPLEX_FILE,
    TRIALS_FILE,
};
use fdrp::exec::Mode;
use fdrp::model::SystemConfig;

fn small() -> SystemConfig {
    let mut c = SystemConfig::default_scenario().with_users(3);
    c.num_subcarriers = 2;
    c.num_tx_antennas = 3;
    c
}

#[test]
fn empty_records_give_header_only_files() {
    let dir = tempfile::tempdir().unwrap();
    write_results(&[], dir.path()).unwrap();
    assert_eq!(std::fs::read_to_string(dir.path().join(TRIALS_FILE)).unwrap(), "");
    for f in [AGGREGATE_FILE, CONVERGENCE_FILE, HEATMAP_FILE, MULTIPLEX_FILE] {
        let text = std::fs::read_to_string(dir.path().join(f)).unwrap();
        assert_eq!(text.lines().count(), 1, "{f}");
    }
}

#[test]
fn one_seed_one_algorithm_one_record() {
    let c = CampaignConfig::new(small(), vec![5], vec![Algorithm::Urp]);
    let recs = run_campaign_with(&c, Mode::Sequential);
    assert_eq!(recs.len(), 1);
    assert!(recs[0].succeeded());
    assert_eq!(recs[0].per_user_rates.len(), 3);
}

#[test]
fn algorithms_share_the_channel_draw() {
    let c = CampaignConfig::new(small(), vec![2], vec![Algorithm::Urp, Algorithm::Grp]);
    let (_, a) = trial_channels(&c, 2, 0).unwrap();
    let (_, b) = trial_channels(&c, 2, 0).unwrap();
    assert_eq!(a, b);
    let recs = run_point(&c, 2, 0);
    assert_eq!(recs.iter().map(|r| r.algorithm).collect::<Vec<_>>(), vec![Algorithm::Urp, Algorithm::Grp]);
    assert!(recs.iter().all(|r| r.seed == 2));
}

#[test]
fn trace_table_has_one_row_per_trace_entry() {
    let c = CampaignConfig::new(small(), vec![1], vec![Algorithm::Fdrp]);
    let recs = run_campaign_with(&c, Mode::Sequential);
    let r = &recs[0];
    assert!(r.succeeded(), "{:?}", r.error);
    assert_eq!(r.gamma_trace.len(), r.iterations + 1);
    let dir = tempfile::tempdir().unwrap();
    write_results(&recs, dir.path()).unwrap();
    let text = std::fs::read_to_string(dir.path().join(CONVERGENCE_FILE)).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some(CONVERGENCE_HEADER));
    assert_eq!(lines.count(), r.gamma_trace.len());
    let cdf = &r.multiplex_cdf;
    assert!(cdf.windows(2).all(|w| w[0] <= w[1]));
    assert!((cdf.last().unwrap() - 1.0).abs() < 1e-12);
}

#[test]
fn aggregate_matches_raw_log() {
    let mut c = CampaignConfig::new(small(), (1..=20).collect(), vec![Algorithm::Grp]);
    c.sweep = Sweep::PowerDbm(vec![-60.0, -50.0]);
    let dir = tempfile::tempdir().unwrap();
    write_results(&run_campaign_with(&c, Mode::Parallel(0)), dir.path()).unwrap();

    let raw = read_trials(&dir.path().join(TRIALS_FILE)).unwrap();
    assert_eq!(raw.len(), 40);
    let mut groups: BTreeMap<i64, Vec<f64>> = BTreeMap::new();
    for r in &raw {
        if let Some(v) = r.min_experience_rate {
            groups.entry(r.sweep_value.unwrap() as i64).or_default().push(v);
        }
    }
    let text = std::fs::read_to_string(dir.path().join(AGGREGATE_FILE)).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some(AGGREGATE_HEADER));
    let rows: Vec<Vec<String>> = lines.map(|l| l.split(',').map(str::to_string).collect()).collect();
    assert_eq!(rows.len(), 2);
    for row in rows {
        let key: f64 = row[1].parse().unwrap();
        let values = &groups[&(key as i64)];
        let (mean, se) = mean_stderr(values);
        let direct = values.iter().sum::<f64>() / values.len() as f64;
        let got_mean: f64 = row[4].parse().unwrap();
        let got_se: f64 = row[5].parse().unwrap();
        assert!((got_mean - direct).abs() <= 1e-12 * direct);
        assert_eq!(got_mean, mean);
        assert_eq!(got_se, se);
        assert_eq!(row[3].parse::<usize>().unwrap(), values.len());
    }
}

#[test]
fn fdrp_min_rate_grows_with_power() {
    let mut c = CampaignConfig::new(small(), vec![1, 2], vec![Algorithm::Fdrp]);
    c.sweep = Sweep::PowerDbm(vec![-60.0, -50.0, -40.0]);
    let recs = run_campaign_with(&c, Mode::Sequential);
    for seed in [1, 2] {
        let rates: Vec<f64> = recs
            .iter()
            .filter(|r| r.seed == seed)
            .map(|r| r.min_experience_rate.unwrap_or(0.0))
            .collect();
        assert!(rates.windows(2).all(|w| w[0] <= w[1]), "seed {seed}: {rates:?}");
    }
}

#[test]
fn failures_are_recorded_not_fatal() {
    let mut cfg = small().with_power_dbm(-150.0);
    cfg.horizon_cap = 2;
    cfg.slot_weights.truncate(2);
    let c = CampaignConfig::new(cfg, vec![1], vec![Algorithm::Fdrp, Algorithm::Grp]);
    let recs = run_campaign_with(&c, Mode::Sequential);
    assert_eq!(recs.len(), 2);
    assert!(recs.iter().all(|r| !r.succeeded() && r.error.is_some()));
}
