//! Scenario and result data types shared by every other module.
//!
//! All physics is stored in linear units (W, Hz, s). dBm values only appear
//! at the config-file boundary and are converted with [`dbm_to_watt`].

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// Converts a power level in dBm to watts.
pub fn dbm_to_watt(level_dbm: f64) -> f64 {
    10f64.powf((level_dbm - 30.0) / 10.0)
}

/// Converts a power in watts to dBm.
pub fn watt_to_dbm(watt: f64) -> f64 {
    10.0 * watt.log10() + 30.0
}

/// Default slot weights: `0.01 * 1000^(t-1)`, which gives `(0.01, 10)` for two slots.
pub fn default_slot_weights(horizon_cap: usize) -> Vec<f64> {
    (0..horizon_cap)
        .map(|t| 0.01 * 1000f64.powi(t as i32))
        .collect()
}

/// Norm used inside the structural sparsity surrogate.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum SparsityNorm {
    /// Sum of the moduli of every complex entry of a slot column.
    #[default]
    EntryL1,
    /// Euclidean norm of each slot column (group lasso).
    ColumnL2,
}

/// Order in which the greedy baseline serves users.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum ServeOrder {
    #[default]
    Index,
    DescendingPayload,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SystemConfig {
    pub num_users: usize,
    pub num_subcarriers: usize,
    pub num_tx_antennas: usize,
    /// Per-subcarrier bandwidth in Hz.
    pub bandwidth_hz: f64,
    /// Slot length in seconds.
    pub slot_len_s: f64,
    /// Noise power spectral density in W/Hz.
    pub noise_psd: f64,
    /// Per-slot transmit power budget in W.
    pub power_budget: f64,
    /// Payload per user in bits.
    pub payloads: Vec<f64>,
    pub user_weights: Vec<f64>,
    /// Slot weights of the sparsity surrogate, stored up to `horizon_cap`.
    pub slot_weights: Vec<f64>,
    pub horizon_cap: usize,
    /// Precoder blocks with norm at most `zero_threshold * sqrt(P)` count as zero.
    pub zero_threshold: f64,
    pub conv_tol: f64,
    pub max_sca_iters: usize,
    pub solver_tol: f64,
    #[serde(default)]
    pub sparsity_norm: SparsityNorm,
    #[serde(default)]
    pub serve_order: ServeOrder,
}

impl SystemConfig {
    /// Default scenario: K=6, N=4, N_t=5, 30 kHz, 0.5 ms slots, -174 dBm/Hz,
    /// P=-40 dBm, 200-bit payloads and unit user weights.
    pub fn default_scenario() -> Self {
        let horizon_cap = 8;
        SystemConfig {
            num_users: 6,
            num_subcarriers: 4,
            num_tx_antennas: 5,
            bandwidth_hz: 30e3,
            slot_len_s: 0.5e-3,
            noise_psd: dbm_to_watt(-174.0),
            power_budget: dbm_to_watt(-40.0),
            payloads: vec![200.0; 6],
            user_weights: vec![1.0; 6],
            slot_weights: default_slot_weights(horizon_cap),
            horizon_cap,
            zero_threshold: 1e-9,
            conv_tol: 1e-5,
            max_sca_iters: 30,
            solver_tol: 1e-7,
            sparsity_norm: SparsityNorm::EntryL1,
            serve_order: ServeOrder::Index,
        }
    }

    /// Noise power per subcarrier, `B * N_0`, in W.
    pub fn noise_power(&self) -> f64 {
        self.bandwidth_hz * self.noise_psd
    }

    /// Resizes per-user vectors to `k` users, repeating the first entry.
    pub fn with_users(mut self, k: usize) -> Self {
        let q = self.payloads.first().copied().unwrap_or(1.0);
        let eta = self.user_weights.first().copied().unwrap_or(1.0);
        self.num_users = k;
        self.payloads = vec![q; k];
        self.user_weights = vec![eta; k];
        self
    }

    pub fn with_uniform_payload(mut self, bits: f64) -> Self {
        self.payloads = vec![bits; self.num_users];
        self
    }

    pub fn with_power_dbm(mut self, level: f64) -> Self {
        self.power_budget = dbm_to_watt(level);
        self
    }

    /// Slot weights truncated to the active horizon.
    pub fn slot_weights_for(&self, horizon: usize) -> &[f64] {
        &self.slot_weights[..horizon.min(self.slot_weights.len())]
    }

    /// Amplitude below which a precoder block is treated as zero, in sqrt(W).
    pub fn zero_amplitude(&self) -> f64 {
        self.zero_threshold * self.power_budget.sqrt()
    }
}

/// Returns every violated invariant by name; `Ok` iff all hold.
pub fn validate_config(cfg: &SystemConfig) -> std::result::Result<(), Vec<String>> {
    let mut issues = Vec::new();
    let mut need = |ok: bool, msg: &str| {
        if !ok {
            issues.push(msg.to_string());
        }
    };
    need(cfg.num_users >= 1, "num_users must be at least 1");
    need(cfg.num_subcarriers >= 1, "num_subcarriers must be at least 1");
    need(cfg.num_tx_antennas >= 1, "num_tx_antennas must be at least 1");
    need(cfg.horizon_cap >= 1, "horizon_cap must be at least 1");
    need(
        cfg.bandwidth_hz > 0.0 && cfg.bandwidth_hz.is_finite(),
        "bandwidth must be positive",
    );
    need(
        cfg.slot_len_s > 0.0 && cfg.slot_len_s.is_finite(),
        "slot_len must be positive",
    );
    need(
        cfg.noise_psd > 0.0 && cfg.noise_psd.is_finite(),
        "noise_psd must be positive",
    );
    need(
        cfg.power_budget >= 0.0 && cfg.power_budget.is_finite(),
        "power_budget must be nonnegative",
    );
    need(
        cfg.payloads.len() == cfg.num_users,
        "payloads length must equal num_users",
    );
    need(
        cfg.payloads.iter().all(|&q| q > 0.0 && q.is_finite()),
        "payloads must be positive",
    );
    need(
        cfg.user_weights.len() == cfg.num_users,
        "user_weights length must equal num_users",
    );
    need(
        cfg.user_weights.iter().all(|&e| e > 0.0 && e.is_finite()),
        "user_weights must be positive",
    );
    need(
        cfg.slot_weights.len() >= cfg.horizon_cap,
        "slot_weights must cover horizon_cap",
    );
    need(
        cfg.slot_weights.iter().all(|&l| l > 0.0 && l.is_finite()),
        "slot_weights must be positive",
    );
    need(
        cfg.slot_weights.windows(2).all(|w| w[0] <= w[1]),
        "slot_weights not non-decreasing",
    );
    need(
        cfg.zero_threshold > 0.0 && cfg.zero_threshold < 1.0,
        "zero_threshold must lie in (0, 1)",
    );
    need(cfg.conv_tol > 0.0, "conv_tol must be positive");
    need(cfg.solver_tol > 0.0, "solver_tol must be positive");
    need(cfg.max_sca_iters >= 1, "max_sca_iters must be at least 1");
    if issues.is_empty() {
        Ok(())
    } else {
        Err(issues)
    }
}

/// Dense complex tensor indexed by (user, subcarrier, slot, antenna).
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor4 {
    users: usize,
    subcarriers: usize,
    slots: usize,
    antennas: usize,
    data: Vec<Complex64>,
}

impl Tensor4 {
    pub fn zeros(users: usize, subcarriers: usize, slots: usize, antennas: usize) -> Self {
        Tensor4 {
            users,
            subcarriers,
            slots,
            antennas,
            data: vec![Complex64::new(0.0, 0.0); users * subcarriers * slots * antennas],
        }
    }

    pub fn from_fn(
        users: usize,
        subcarriers: usize,
        slots: usize,
        antennas: usize,
        mut f: impl FnMut(usize, usize, usize, usize) -> Complex64,
    ) -> Self {
        let mut out = Self::zeros(users, subcarriers, slots, antennas);
        for k in 0..users {
            for n in 0..subcarriers {
                for t in 0..slots {
                    for a in 0..antennas {
                        let i = out.offset(k, n, t) + a;
                        out.data[i] = f(k, n, t, a);
                    }
                }
            }
        }
        out
    }

    pub fn users(&self) -> usize {
        self.users
    }
    pub fn subcarriers(&self) -> usize {
        self.subcarriers
    }
    pub fn slots(&self) -> usize {
        self.slots
    }
    pub fn antennas(&self) -> usize {
        self.antennas
    }

    #[inline]
    fn offset(&self, k: usize, n: usize, t: usize) -> usize {
        debug_assert!(k < self.users && n < self.subcarriers && t < self.slots);
        ((k * self.subcarriers + n) * self.slots + t) * self.antennas
    }

    #[inline]
    pub fn block(&self, k: usize, n: usize, t: usize) -> &[Complex64] {
        let o = self.offset(k, n, t);
        &self.data[o..o + self.antennas]
    }

    #[inline]
    pub fn block_mut(&mut self, k: usize, n: usize, t: usize) -> &mut [Complex64] {
        let o = self.offset(k, n, t);
        &mut self.data[o..o + self.antennas]
    }

    pub fn as_slice(&self) -> &[Complex64] {
        &self.data
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|z| z.re.is_finite() && z.im.is_finite())
    }
}

/// Channel vectors `h[k][n][t]` in linear amplitude units.
#[derive(Debug, Clone, PartialEq)]
pub struct ChannelTensor {
    pub entries: Tensor4,
    /// Set when `h` is constant across slots.
    pub coherent: bool,
}

impl ChannelTensor {
    pub fn h(&self, k: usize, n: usize, t: usize) -> &[Complex64] {
        self.entries.block(k, n, t)
    }
    pub fn users(&self) -> usize {
        self.entries.users()
    }
    pub fn subcarriers(&self) -> usize {
        self.entries.subcarriers()
    }
    pub fn slots(&self) -> usize {
        self.entries.slots()
    }
    pub fn antennas(&self) -> usize {
        self.entries.antennas()
    }

    /// Restricts (or keeps) the first `horizon` slots.
    pub fn truncated(&self, horizon: usize) -> ChannelTensor {
        let e = &self.entries;
        ChannelTensor {
            entries: Tensor4::from_fn(e.users(), e.subcarriers(), horizon, e.antennas(), |k, n, t, a| {
                e.block(k, n, t)[a]
            }),
            coherent: self.coherent,
        }
    }
}

/// Merged precoders `w̄[k][n][t]` in sqrt(W).
#[derive(Debug, Clone, PartialEq)]
pub struct PrecoderTensor {
    pub entries: Tensor4,
}

impl PrecoderTensor {
    pub fn zeros(users: usize, subcarriers: usize, slots: usize, antennas: usize) -> Self {
        PrecoderTensor {
            entries: Tensor4::zeros(users, subcarriers, slots, antennas),
        }
    }
    pub fn w(&self, k: usize, n: usize, t: usize) -> &[Complex64] {
        self.entries.block(k, n, t)
    }
    pub fn w_mut(&mut self, k: usize, n: usize, t: usize) -> &mut [Complex64] {
        self.entries.block_mut(k, n, t)
    }
    pub fn users(&self) -> usize {
        self.entries.users()
    }
    pub fn subcarriers(&self) -> usize {
        self.entries.subcarriers()
    }
    pub fn slots(&self) -> usize {
        self.entries.slots()
    }
    pub fn antennas(&self) -> usize {
        self.entries.antennas()
    }

    /// Squared 2-norm of one block.
    pub fn block_energy(&self, k: usize, n: usize, t: usize) -> f64 {
        self.w(k, n, t).iter().map(|z| z.norm_sqr()).sum()
    }

    /// Transmit power in slot `t`, summed over users and subcarriers.
    pub fn slot_power(&self, t: usize) -> f64 {
        let mut p = 0.0;
        for k in 0..self.users() {
            for n in 0..self.subcarriers() {
                p += self.block_energy(k, n, t);
            }
        }
        p
    }

    pub fn per_slot_power(&self) -> Vec<f64> {
        (0..self.slots()).map(|t| self.slot_power(t)).collect()
    }

    pub fn scaled(&self, factor: f64) -> PrecoderTensor {
        let e = &self.entries;
        PrecoderTensor {
            entries: Tensor4::from_fn(e.users(), e.subcarriers(), e.slots(), e.antennas(), |k, n, t, a| {
                e.block(k, n, t)[a] * factor
            }),
        }
    }
}

/// Binary subcarrier (`beta`) and slot (`alpha`) indicators.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Allocation {
    users: usize,
    subcarriers: usize,
    slots: usize,
    beta: Vec<bool>,
    alpha: Vec<bool>,
}

impl Allocation {
    /// Builds an allocation from `beta(k, n, t)`; `alpha` is its OR over `n`.
    pub fn from_beta(
        users: usize,
        subcarriers: usize,
        slots: usize,
        mut beta: impl FnMut(usize, usize, usize) -> bool,
    ) -> Self {
        let mut b = vec![false; users * subcarriers * slots];
        let mut a = vec![false; users * slots];
        for k in 0..users {
            for n in 0..subcarriers {
                for t in 0..slots {
                    let on = beta(k, n, t);
                    b[(k * subcarriers + n) * slots + t] = on;
                    a[k * slots + t] |= on;
                }
            }
        }
        Allocation {
            users,
            subcarriers,
            slots,
            beta: b,
            alpha: a,
        }
    }

    pub fn beta(&self, k: usize, n: usize, t: usize) -> bool {
        self.beta[(k * self.subcarriers + n) * self.slots + t]
    }
    pub fn alpha(&self, k: usize, t: usize) -> bool {
        self.alpha[k * self.slots + t]
    }
    pub fn users(&self) -> usize {
        self.users
    }
    pub fn subcarriers(&self) -> usize {
        self.subcarriers
    }
    pub fn slots(&self) -> usize {
        self.slots
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SolveStatus {
    Converged,
    MaxIters,
    Infeasible,
}

/// One record of the per-iteration trace.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IterationTrace {
    pub iteration: usize,
    pub gamma: f64,
    pub per_slot_power: Vec<f64>,
    pub max_residual: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SolveSummary {
    pub gamma_trace: Vec<f64>,
    pub precoders: PrecoderTensor,
    pub allocation: Allocation,
    /// Completion slot per user (1-based count, 0 means never scheduled).
    pub completion_times: Vec<usize>,
    /// Experience rate per user in bits/s.
    pub experience_rates: Vec<f64>,
    pub per_slot_power: Vec<f64>,
    pub horizon: usize,
    pub iterations: usize,
    pub status: SolveStatus,
    pub trace: Vec<IterationTrace>,
}

impl SolveSummary {
    pub fn min_experience_rate(&self) -> f64 {
        self.experience_rates
            .iter()
            .copied()
            .fold(f64::INFINITY, f64::min)
    }

    pub fn min_weighted_experience_rate(&self, weights: &[f64]) -> f64 {
        self.experience_rates
            .iter()
            .zip(weights)
            .map(|(r, e)| r * e)
            .fold(f64::INFINITY, f64::min)
    }

    pub fn mean_experience_rate(&self) -> f64 {
        self.experience_rates.iter().sum::<f64>() / self.experience_rates.len().max(1) as f64
    }
}

pub(crate) fn check_horizon(horizon: usize, cfg: &SystemConfig) -> Result<()> {
    if horizon > cfg.horizon_cap {
        return Err(Error::Horizon {
            requested: horizon,
            cap: cfg.horizon_cap,
        });
    }
    Ok(())
}
