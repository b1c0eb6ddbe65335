use std::time::Instant;

use serde::{Deserialize, Serialize};

use super::config::{Algorithm, CampaignConfig};
use crate::baselines::{run_grp, run_urp};
use crate::channel::generate_channels;
use crate::exec::{self, Mode};
use crate::fdrp::run_fdrp;
use crate::metrics::{delivered_bits_per_subcarrier, experience_rates, multiplex_histogram};
use crate::model::{ChannelTensor, IterationTrace, SolveStatus, SolveSummary, SystemConfig};
use crate::oracle::brute_force_orthogonal;
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TrialStatus {
    Converged,
    MaxIters,
    Infeasible,
    Failed,
}

impl From<SolveStatus> for TrialStatus {
    fn from(s: SolveStatus) -> Self {
        match s {
            SolveStatus::Converged => TrialStatus::Converged,
            SolveStatus::MaxIters => TrialStatus::MaxIters,
            SolveStatus::Infeasible => TrialStatus::Infeasible,
        }
    }
}

/// One (seed, sweep point, algorithm) outcome. Rates are in bits/s, powers
/// in W, times in s.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialRecord {
    pub seed: u64,
    pub sweep_value: Option<f64>,
    pub algorithm: Algorithm,
    pub status: TrialStatus,
    pub error: Option<String>,
    pub min_experience_rate: Option<f64>,
    pub min_weighted_experience_rate: Option<f64>,
    pub mean_experience_rate: Option<f64>,
    pub per_user_rates: Vec<f64>,
    pub completion_times: Vec<usize>,
    pub horizon: usize,
    pub iterations: usize,
    pub gamma_trace: Vec<f64>,
    pub trace: Vec<IterationTrace>,
    pub per_slot_power: Vec<f64>,
    /// Users per (subcarrier, slot).
    pub multiplex_counts: Vec<Vec<usize>>,
    /// Fraction of cells with at most `c` users, `c = 0..=K`.
    pub multiplex_cdf: Vec<f64>,
    /// Bits per (user, subcarrier), summed over slots.
    pub delivered_bits: Vec<Vec<f64>>,
    pub wall_time: f64,
}

impl TrialRecord {
    fn failed(seed: u64, sweep_value: Option<f64>, algorithm: Algorithm, err: &Error, wall_time: f64) -> Self {
        TrialRecord {
            seed,
            sweep_value,
            algorithm,
            status: match err {
                Error::HorizonExhausted { .. } => TrialStatus::Infeasible,
                _ => TrialStatus::Failed,
            },
            error: Some(err.to_string()),
            min_experience_rate: None,
            min_weighted_experience_rate: None,
            mean_experience_rate: None,
            per_user_rates: Vec::new(),
            completion_times: Vec::new(),
            horizon: 0,
            iterations: 0,
            gamma_trace: Vec::new(),
            trace: Vec::new(),
            per_slot_power: Vec::new(),
            multiplex_counts: Vec::new(),
            multiplex_cdf: Vec::new(),
            delivered_bits: Vec::new(),
            wall_time,
        }
    }

    fn from_summary(
        seed: u64,
        sweep_value: Option<f64>,
        algorithm: Algorithm,
        s: &SolveSummary,
        h: &ChannelTensor,
        cfg: &SystemConfig,
        wall_time: f64,
    ) -> Self {
        let mux = multiplex_histogram(&s.allocation);
        TrialRecord {
            seed,
            sweep_value,
            algorithm,
            status: s.status.into(),
            error: None,
            min_experience_rate: Some(s.min_experience_rate()),
            min_weighted_experience_rate: Some(s.min_weighted_experience_rate(&cfg.user_weights)),
            mean_experience_rate: Some(s.mean_experience_rate()),
            per_user_rates: s.experience_rates.clone(),
            completion_times: s.completion_times.clone(),
            horizon: s.horizon,
            iterations: s.iterations,
            gamma_trace: s.gamma_trace.clone(),
            trace: s.trace.clone(),
            per_slot_power: s.per_slot_power.clone(),
            multiplex_counts: mux.counts,
            multiplex_cdf: mux.cdf,
            delivered_bits: (0..cfg.num_users)
                .map(|k| delivered_bits_per_subcarrier(h, &s.precoders, cfg, k))
                .collect(),
            wall_time,
        }
    }

    pub fn succeeded(&self) -> bool {
        self.error.is_none()
    }
}

/// Oracle horizon: the configured one, or the largest within the pattern
/// cap and the scenario's horizon cap.
pub fn oracle_horizon(campaign: &CampaignConfig, cfg: &SystemConfig) -> usize {
    campaign.oracle_horizon.unwrap_or_else(|| {
        let per_slot = ((cfg.num_users + 1) as f64).powf(cfg.num_subcarriers as f64);
        let mut t = 1;
        while t < cfg.horizon_cap && per_slot.powf((t + 1) as f64) <= campaign.oracle_pattern_cap as f64 {
            t += 1;
        }
        t
    })
}

fn run_oracle(campaign: &CampaignConfig, h: &ChannelTensor, cfg: &SystemConfig) -> Result<SolveSummary> {
    let horizon = oracle_horizon(campaign, cfg);
    let out = brute_force_orthogonal(h, cfg, horizon, campaign.oracle_pattern_cap)?;
    let best = out.best.ok_or(Error::HorizonExhausted { cap: horizon })?;
    let rates = experience_rates(&cfg.payloads, &best.completion_times, cfg.slot_len_s)?;
    let allocation = crate::metrics::recover_allocation(&best.precoders, 0.0);
    Ok(SolveSummary {
        gamma_trace: Vec::new(),
        per_slot_power: best.precoders.per_slot_power(),
        precoders: best.precoders,
        allocation,
        completion_times: best.completion_times,
        experience_rates: rates,
        horizon,
        iterations: 0,
        status: SolveStatus::Converged,
        trace: Vec::new(),
    })
}

/// Runs one algorithm on one channel draw.
pub fn run_algorithm(
    algorithm: Algorithm,
    campaign: &CampaignConfig,
    h: &ChannelTensor,
    cfg: &SystemConfig,
) -> Result<SolveSummary> {
    match algorithm {
        Algorithm::Fdrp => run_fdrp(h, cfg),
        Algorithm::Urp => run_urp(h, cfg),
        Algorithm::Grp => run_grp(h, cfg),
        Algorithm::Oracle => run_oracle(campaign, h, cfg),
    }
}

/// Channel draw shared by every algorithm at one (seed, sweep point).
pub fn trial_channels(campaign: &CampaignConfig, seed: u64, sweep_index: usize) -> Result<(SystemConfig, ChannelTensor)> {
    let cfg = campaign.sweep.apply(&campaign.base, sweep_index);
    let h = generate_channels(&campaign.channel_spec(seed), &cfg, cfg.horizon_cap)?;
    Ok((cfg, h))
}

/// Records for every algorithm at one (seed, sweep point), in the
/// configured algorithm order.
pub fn run_point(campaign: &CampaignConfig, seed: u64, sweep_index: usize) -> Vec<TrialRecord> {
    let sweep_value = campaign.sweep.values()[sweep_index];
    let start = Instant::now();
    let (cfg, h) = match trial_channels(campaign, seed, sweep_index) {
        Ok(v) => v,
        Err(e) => {
            let dt = start.elapsed().as_secs_f64();
            return campaign
                .algorithms
                .iter()
                .map(|&a| TrialRecord::failed(seed, sweep_value, a, &e, dt))
                .collect();
        }
    };
    campaign
        .algorithms
        .iter()
        .map(|&a| {
            let start = Instant::now();
            let out = run_algorithm(a, campaign, &h, &cfg);
            let dt = start.elapsed().as_secs_f64();
            match out {
                Ok(s) => TrialRecord::from_summary(seed, sweep_value, a, &s, &h, &cfg, dt),
                Err(e) => TrialRecord::failed(seed, sweep_value, a, &e, dt),
            }
        })
        .collect()
}

/// Every (seed, sweep point, algorithm) trial, ordered by seed, then sweep
/// point, then algorithm. (Seed, sweep point) groups run concurrently.
pub fn run_campaign(campaign: &CampaignConfig) -> Vec<TrialRecord> {
    run_campaign_with(campaign, Mode::from_env())
}

pub fn run_campaign_with(campaign: &CampaignConfig, mode: Mode) -> Vec<TrialRecord> {
    let points: Vec<(u64, usize)> = campaign
        .seeds
        .iter()
        .flat_map(|&s| (0..campaign.sweep.len()).map(move |i| (s, i)))
        .collect();
    exec::map(mode, &points, |&(seed, i)| run_point(campaign, seed, i))
        .into_iter()
        .flatten()
        .collect()
}
