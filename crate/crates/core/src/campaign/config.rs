//! Campaign files: TOML with physical quantities in the units named by each
//! key. Every key except `seeds` is optional and falls back to the default
//! scenario.
//!
//! ```toml
//! K = 6                  # users
//! N = 4                  # subcarriers
//! Nt = 5                 # transmit antennas
//! B_hz = 30e3            # bandwidth per subcarrier
//! slot_s = 0.5e-3        # slot length
//! N0_dbm_per_hz = -174.0
//! P_dbm = -40.0          # per-slot power budget
//! Q_bits = 200.0         # scalar or one value per user
//! eta = 1.0              # user weights, scalar or list
//! T_max = 8
//! lambda = [0.01, 10.0]  # slot weights, at least T_max entries
//! seeds = [1, 2, 3]
//! algorithms = ["fdrp", "urp", "grp", "oracle"]
//! output_dir = "results"
//! serve_order = "index"        # or "descending_payload"
//! sparsity_norm = "entry_l1"   # or "column_l2"
//!
//! [sweep]
//! power_dbm = [-50.0, -45.0, -40.0]   # or num_tx_antennas = [2, 3, 4]
//!
//! [tolerances]
//! conv_tol = 1e-5
//! solver_tol = 1e-7
//! max_sca_iters = 30
//! zero_threshold = 1e-9
//!
//! [channel]
//! coherent = true
//! variance = 1.0
//!
//! [oracle]
//! horizon = 1          # default: largest horizon within the pattern cap
//! pattern_cap = 100000
//! ```

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::channel::ChannelSpec;
use crate::model::{
    dbm_to_watt, default_slot_weights, validate_config, ServeOrder, SparsityNorm, SystemConfig,
};
use crate::oracle::DEFAULT_PATTERN_CAP;
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Algorithm {
    Fdrp,
    Urp,
    Grp,
    Oracle,
}

impl Algorithm {
    pub fn name(self) -> &'static str {
        match self {
            Algorithm::Fdrp => "fdrp",
            Algorithm::Urp => "urp",
            Algorithm::Grp => "grp",
            Algorithm::Oracle => "oracle",
        }
    }

    pub fn parse(s: &str) -> Option<Algorithm> {
        [Algorithm::Fdrp, Algorithm::Urp, Algorithm::Grp, Algorithm::Oracle]
            .into_iter()
            .find(|a| a.name() == s)
    }
}

/// Parameter varied across trials.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Sweep {
    #[default]
    None,
    PowerDbm(Vec<f64>),
    NumTxAntennas(Vec<usize>),
}

impl Sweep {
    /// Sweep values as numbers, or a single `None` when nothing is swept.
    pub fn values(&self) -> Vec<Option<f64>> {
        match self {
            Sweep::None => vec![None],
            Sweep::PowerDbm(v) => v.iter().map(|&x| Some(x)).collect(),
            Sweep::NumTxAntennas(v) => v.iter().map(|&x| Some(x as f64)).collect(),
        }
    }

    /// `base` with sweep point `i` applied.
    pub fn apply(&self, base: &SystemConfig, i: usize) -> SystemConfig {
        let mut cfg = base.clone();
        match self {
            Sweep::None => {}
            Sweep::PowerDbm(v) => cfg.power_budget = dbm_to_watt(v[i]),
            Sweep::NumTxAntennas(v) => cfg.num_tx_antennas = v[i],
        }
        cfg
    }

    pub fn len(&self) -> usize {
        match self {
            Sweep::None => 1,
            Sweep::PowerDbm(v) => v.len(),
            Sweep::NumTxAntennas(v) => v.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CampaignConfig {
    pub base: SystemConfig,
    pub sweep: Sweep,
    pub seeds: Vec<u64>,
    pub algorithms: Vec<Algorithm>,
    pub output_dir: PathBuf,
    pub coherent: bool,
    pub channel_variance: f64,
    /// `None` picks the largest horizon within `oracle_pattern_cap`.
    pub oracle_horizon: Option<usize>,
    pub oracle_pattern_cap: usize,
}

impl CampaignConfig {
    /// Default scenario with the given seeds and algorithms, no sweep.
    pub fn new(base: SystemConfig, seeds: Vec<u64>, algorithms: Vec<Algorithm>) -> Self {
        CampaignConfig {
            base,
            sweep: Sweep::None,
            seeds,
            algorithms,
            output_dir: PathBuf::from("results"),
            coherent: true,
            channel_variance: 1.0,
            oracle_horizon: None,
            oracle_pattern_cap: DEFAULT_PATTERN_CAP,
        }
    }

    pub fn channel_spec(&self, seed: u64) -> ChannelSpec {
        ChannelSpec {
            seed,
            coherent: self.coherent,
            variance: self.channel_variance,
        }
    }
}

#[derive(Debug, Deserialize)]
#[serde(untagged)]
enum ScalarOrList {
    Scalar(f64),
    List(Vec<f64>),
}

impl ScalarOrList {
    fn expand(self, k: usize) -> Vec<f64> {
        match self {
            ScalarOrList::Scalar(x) => vec![x; k],
            ScalarOrList::List(v) => v,
        }
    }
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawSweep {
    power_dbm: Option<Vec<f64>>,
    num_tx_antennas: Option<Vec<usize>>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawTolerances {
    conv_tol: Option<f64>,
    solver_tol: Option<f64>,
    max_sca_iters: Option<usize>,
    zero_threshold: Option<f64>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawChannel {
    coherent: Option<bool>,
    variance: Option<f64>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawOracle {
    horizon: Option<usize>,
    pattern_cap: Option<usize>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
#[allow(non_snake_case)]
struct RawConfig {
    K: Option<usize>,
    N: Option<usize>,
    Nt: Option<usize>,
    B_hz: Option<f64>,
    slot_s: Option<f64>,
    N0_dbm_per_hz: Option<f64>,
    P_dbm: Option<f64>,
    Q_bits: Option<ScalarOrList>,
    eta: Option<ScalarOrList>,
    lambda: Option<Vec<f64>>,
    T_max: Option<usize>,
    seeds: Vec<u64>,
    sweep: Option<RawSweep>,
    algorithms: Option<Vec<Algorithm>>,
    output_dir: Option<PathBuf>,
    serve_order: Option<ServeOrder>,
    sparsity_norm: Option<SparsityNorm>,
    #[serde(default)]
    tolerances: RawTolerances,
    #[serde(default)]
    channel: RawChannel,
    #[serde(default)]
    oracle: RawOracle,
}

/// Reads and validates a campaign file. Syntax and schema problems become
/// [`Error::Parse`]; violated scenario invariants become [`Error::Config`].
pub fn load_config(path: &Path) -> Result<CampaignConfig> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_config(&text, path)
}

/// [`load_config`] on text already in memory; `path` is used in messages.
pub fn parse_config(text: &str, path: &Path) -> Result<CampaignConfig> {
    let raw: RawConfig = toml::from_str(text).map_err(|e| Error::Parse {
        path: path.to_path_buf(),
        message: e.to_string(),
    })?;
    let mut base = SystemConfig::default_scenario();
    let k = raw.K.unwrap_or(base.num_users);
    base = base.with_users(k);
    if let Some(n) = raw.N {
        base.num_subcarriers = n;
    }
    if let Some(nt) = raw.Nt {
        base.num_tx_antennas = nt;
    }
    if let Some(b) = raw.B_hz {
        base.bandwidth_hz = b;
    }
    if let Some(s) = raw.slot_s {
        base.slot_len_s = s;
    }
    if let Some(n0) = raw.N0_dbm_per_hz {
        base.noise_psd = dbm_to_watt(n0);
    }
    if let Some(p) = raw.P_dbm {
        base.power_budget = dbm_to_watt(p);
    }
    if let Some(q) = raw.Q_bits {
        base.payloads = q.expand(k);
    }
    if let Some(e) = raw.eta {
        base.user_weights = e.expand(k);
    }
    if let Some(t) = raw.T_max {
        base.horizon_cap = t;
        base.slot_weights = default_slot_weights(t);
    }
    if let Some(l) = raw.lambda {
        base.slot_weights = l;
    }
    if let Some(o) = raw.serve_order {
        base.serve_order = o;
    }
    if let Some(s) = raw.sparsity_norm {
        base.sparsity_norm = s;
    }
    let tol = raw.tolerances;
    if let Some(v) = tol.conv_tol {
        base.conv_tol = v;
    }
    if let Some(v) = tol.solver_tol {
        base.solver_tol = v;
    }
    if let Some(v) = tol.max_sca_iters {
        base.max_sca_iters = v;
    }
    if let Some(v) = tol.zero_threshold {
        base.zero_threshold = v;
    }

    let mut issues = Vec::new();
    let sweep = match raw.sweep {
        None => Sweep::None,
        Some(RawSweep {
            power_dbm: Some(p),
            num_tx_antennas: None,
        }) => Sweep::PowerDbm(p),
        Some(RawSweep {
            power_dbm: None,
            num_tx_antennas: Some(a),
        }) => Sweep::NumTxAntennas(a),
        Some(RawSweep {
            power_dbm: None,
            num_tx_antennas: None,
        }) => Sweep::None,
        Some(_) => {
            issues.push("sweep must name exactly one of power_dbm, num_tx_antennas".to_string());
            Sweep::None
        }
    };
    let cfg = CampaignConfig {
        base,
        sweep,
        seeds: raw.seeds,
        algorithms: raw
            .algorithms
            .unwrap_or_else(|| vec![Algorithm::Fdrp, Algorithm::Urp, Algorithm::Grp]),
        output_dir: raw.output_dir.unwrap_or_else(|| PathBuf::from("results")),
        coherent: raw.channel.coherent.unwrap_or(true),
        channel_variance: raw.channel.variance.unwrap_or(1.0),
        oracle_horizon: raw.oracle.horizon,
        oracle_pattern_cap: raw.oracle.pattern_cap.unwrap_or(DEFAULT_PATTERN_CAP),
    };
    issues.extend(validate_campaign(&cfg));
    if issues.is_empty() {
        Ok(cfg)
    } else {
        Err(Error::Config(issues))
    }
}

/// Invariants of a campaign, including every swept scenario.
pub fn validate_campaign(cfg: &CampaignConfig) -> Vec<String> {
    let mut issues = Vec::new();
    if cfg.seeds.is_empty() {
        issues.push("seeds must be nonempty".to_string());
    }
    if cfg.algorithms.is_empty() {
        issues.push("algorithms must be nonempty".to_string());
    }
    if cfg.sweep.is_empty() {
        issues.push("sweep list must be nonempty".to_string());
    }
    if !(cfg.channel_variance > 0.0 && cfg.channel_variance.is_finite()) {
        issues.push("channel variance must be positive".to_string());
    }
    for i in 0..cfg.sweep.len() {
        if let Err(errs) = validate_config(&cfg.sweep.apply(&cfg.base, i)) {
            for e in errs {
                let msg = match cfg.sweep.values()[i] {
                    Some(v) => format!("sweep value {v}: {e}"),
                    None => e,
                };
                if !issues.contains(&msg) {
                    issues.push(msg);
                }
            }
        }
    }
    issues
}
