//! Monte Carlo campaigns: config files, paired trials across algorithms and
//! plot-ready result tables.

mod config;
mod output;
mod run;

pub use config::{load_config, parse_config, validate_campaign, Algorithm, CampaignConfig, Sweep};
pub use output::{
    aggregate, mean_stderr, read_trials, strip_wall_time, write_results, AggregateRow, AGGREGATE_FILE,
    AGGREGATE_HEADER, CONVERGENCE_FILE, CONVERGENCE_HEADER, HEATMAP_FILE, HEATMAP_HEADER, MULTIPLEX_FILE,
    MULTIPLEX_HEADER, TRIALS_FILE,
};
pub use run::{
    oracle_horizon, run_algorithm, run_campaign, run_campaign_with, run_point, trial_channels, TrialRecord,
    TrialStatus,
};
