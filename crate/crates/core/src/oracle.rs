//! Exhaustive optimum over orthogonal allocations on micro instances, and
//! the merged-precoder / indicator equivalence check.

use serde::{Deserialize, Serialize};

use crate::conic::{self, AffineExpr, ConeTag, ConicProgram, SolveStatus as ConicStatus};
use crate::exec::{self, Mode};
use crate::metrics::{completion_times, recover_allocation, sinr, sinr_gated};
use crate::model::{validate_config, ChannelTensor, PrecoderTensor, SystemConfig};
use crate::{Error, Result};

/// Default bound on the number of enumerated patterns.
pub const DEFAULT_PATTERN_CAP: usize = 100_000;

/// One owner (or none) per (subcarrier, slot).
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct OrthogonalPattern {
    pub subcarriers: usize,
    pub slots: usize,
    /// Row-major over (n, t).
    pub owner: Vec<Option<usize>>,
}

impl OrthogonalPattern {
    /// Decodes a base-(K+1) pattern index; cell (0, 0) is the most
    /// significant digit and digit 0 means idle, so index order is
    /// lexicographic order with idle first.
    pub fn decode(index: usize, users: usize, subcarriers: usize, slots: usize) -> Self {
        let cells = subcarriers * slots;
        let mut owner = vec![None; cells];
        let mut rest = index;
        for c in (0..cells).rev() {
            let d = rest % (users + 1);
            rest /= users + 1;
            owner[c] = d.checked_sub(1);
        }
        OrthogonalPattern { subcarriers, slots, owner }
    }

    pub fn owner(&self, n: usize, t: usize) -> Option<usize> {
        self.owner[n * self.slots + t]
    }

    /// Last owned slot per user (1-based), 0 if the user owns nothing.
    pub fn completion_times(&self, users: usize) -> Vec<usize> {
        let mut tk = vec![0; users];
        for n in 0..self.subcarriers {
            for t in 0..self.slots {
                if let Some(k) = self.owner(n, t) {
                    tk[k] = tk[k].max(t + 1);
                }
            }
        }
        tk
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct OracleOptimum {
    pub pattern: OrthogonalPattern,
    /// Min weighted experience rate in bits/s.
    pub value: f64,
    pub completion_times: Vec<usize>,
    /// Transmit power per (n, t) in W, row-major.
    pub powers: Vec<f64>,
    /// MRT precoders carrying `powers`.
    pub precoders: PrecoderTensor,
    /// Optimal delivery slack `s` of `delivered_k >= Q_k (1 + s)`.
    pub slack: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct OracleOutcome {
    /// `None` when no pattern is feasible.
    pub best: Option<OracleOptimum>,
    pub patterns: usize,
    pub solves: usize,
}

impl OracleOutcome {
    pub fn value(&self) -> Option<f64> {
        self.best.as_ref().map(|b| b.value)
    }
}

fn pattern_value(tk: &[usize], cfg: &SystemConfig) -> Option<f64> {
    tk.iter()
        .enumerate()
        .map(|(k, &t)| (t > 0).then(|| cfg.user_weights[k] * cfg.payloads[k] / (t as f64 * cfg.slot_len_s)))
        .try_fold(f64::INFINITY, |acc, v| v.map(|v| acc.min(v)))
}

/// Per-cell MRT gains `||h_knt||^2 P / (B N_0)` at full power.
fn full_power_snr(h: &ChannelTensor, cfg: &SystemConfig, k: usize, n: usize, t: usize) -> f64 {
    h.h(k, n, t).iter().map(|z| z.norm_sqr()).sum::<f64>() * cfg.power_budget / cfg.noise_power()
}

struct PatternCheck {
    slack: f64,
    fractions: Vec<f64>,
}

/// Maximizes the common delivery slack of one pattern over per-cell power
/// fractions `u` (`sum_n u_nt <= 1` per slot). Rates `ln(1 + a u)` are
/// exponential cones; `x = [u..., r'..., s]` over owned cells.
fn check_pattern(h: &ChannelTensor, cfg: &SystemConfig, pat: &OrthogonalPattern) -> Result<Option<PatternCheck>> {
    let cells: Vec<(usize, usize, usize)> = (0..pat.subcarriers)
        .flat_map(|n| (0..pat.slots).map(move |t| (n, t)))
        .filter_map(|(n, t)| pat.owner(n, t).map(|k| (k, n, t)))
        .collect();
    let m = cells.len();
    let nat_per_bit = std::f64::consts::LN_2 / (cfg.slot_len_s * cfg.bandwidth_hz);
    let snr: Vec<f64> = cells.iter().map(|&(k, n, t)| full_power_snr(h, cfg, k, n, t)).collect();

    // Full power on every owned cell is an upper bound on each user's rate.
    let slack_floor = -10.0 * cfg.solver_tol;
    for k in 0..cfg.num_users {
        let bound: f64 = cells.iter().zip(&snr).filter(|(c, _)| c.0 == k).map(|(_, a)| a.ln_1p()).sum();
        if bound < cfg.payloads[k] * nat_per_bit * (1.0 + slack_floor) {
            return Ok(None);
        }
    }

    let s = 2 * m;
    let mut p = ConicProgram::new(2 * m + 1);
    p.objective[s] = -1.0;
    for i in 0..m {
        p.add_nonneg("fraction", AffineExpr::var(i));
    }
    for t in 0..pat.slots {
        let mut row = AffineExpr::constant(1.0);
        for (i, c) in cells.iter().enumerate() {
            if c.2 == t {
                row.add_term(i, -1.0);
            }
        }
        p.add_nonneg("slot_power", row);
    }
    // Shifted by ln a so the cone sees `u + 1/a` rather than `1 + a u`,
    // which spans many decades at realistic SNR: `r' <= ln(1/a + u)`.
    let shift: Vec<f64> = snr.iter().map(|&a| if a > 0.0 { a.ln() } else { 0.0 }).collect();
    for (i, &a) in snr.iter().enumerate() {
        let w = if a > 0.0 {
            let mut w = AffineExpr::var(i);
            w.add_constant(1.0 / a);
            w
        } else {
            AffineExpr::constant(1.0)
        };
        p.add(ConeTag::Exp, "rate", vec![AffineExpr::var(m + i), AffineExpr::constant(1.0), w]);
    }
    for k in 0..cfg.num_users {
        let need = cfg.payloads[k] * nat_per_bit;
        let mut row = AffineExpr::constant(-need);
        for (i, c) in cells.iter().enumerate() {
            if c.0 == k {
                row.add_term(m + i, 1.0);
                row.add_constant(shift[i]);
            }
        }
        row.add_term(s, -need);
        p.add_nonneg("delivery", row);
    }
    let sol = conic::solve(&p, cfg.solver_tol)?;
    if sol.status != ConicStatus::Optimal {
        return Err(Error::Domain(format!("orthogonal power check ended {:?}", sol.status)));
    }
    let slack = sol.x[s];
    if slack < slack_floor {
        return Ok(None);
    }
    Ok(Some(PatternCheck {
        slack,
        fractions: sol.x[..m].iter().map(|u| u.max(0.0)).collect(),
    }))
}

/// Best orthogonal pattern at horizon `horizon` by min weighted experience
/// rate. Each pattern fixes every `T_k`, so patterns are visited in
/// decreasing order of their value and the first value level with a
/// feasible pattern wins; within it, the lexicographically smallest
/// feasible pattern is returned.
pub fn brute_force_orthogonal(
    h: &ChannelTensor,
    cfg: &SystemConfig,
    horizon: usize,
    cap: usize,
) -> Result<OracleOutcome> {
    validate_config(cfg).map_err(Error::Config)?;
    if horizon == 0 || horizon > h.slots() {
        return Err(Error::Domain(format!("oracle horizon {horizon} outside 1..={}", h.slots())));
    }
    let (k_users, n_sub) = (cfg.num_users, cfg.num_subcarriers);
    let count = ((k_users + 1) as f64).powf((n_sub * horizon) as f64);
    if count > cap as f64 {
        return Err(Error::EnumerationCap { patterns: count, cap });
    }
    let total = count as usize;
    let mut ranked: Vec<(f64, usize)> = (0..total)
        .filter_map(|i| {
            let pat = OrthogonalPattern::decode(i, k_users, n_sub, horizon);
            pattern_value(&pat.completion_times(k_users), cfg).map(|v| (v, i))
        })
        .collect();
    ranked.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)));

    let mode = Mode::from_env();
    let mut solves = 0;
    let mut start = 0;
    while start < ranked.len() {
        let value = ranked[start].0;
        let end = start + ranked[start..].iter().take_while(|r| r.0 == value).count();
        let group: Vec<usize> = ranked[start..end].iter().map(|r| r.1).collect();
        let results = exec::map(mode, &group, |&i| {
            let pat = OrthogonalPattern::decode(i, k_users, n_sub, horizon);
            check_pattern(h, cfg, &pat).map(|c| (pat, c))
        });
        solves += group.len();
        // `group` is in index order, so the first feasible entry is the
        // lexicographically smallest.
        for r in results {
            let (pat, check) = r?;
            if let Some(c) = check {
                return Ok(OracleOutcome {
                    best: Some(build_optimum(h, cfg, pat, value, c)),
                    patterns: total,
                    solves,
                });
            }
        }
        start = end;
    }
    Ok(OracleOutcome {
        best: None,
        patterns: total,
        solves,
    })
}

fn build_optimum(
    h: &ChannelTensor,
    cfg: &SystemConfig,
    pattern: OrthogonalPattern,
    value: f64,
    check: PatternCheck,
) -> OracleOptimum {
    let (n_sub, slots) = (pattern.subcarriers, pattern.slots);
    let mut powers = vec![0.0; n_sub * slots];
    let mut w = PrecoderTensor::zeros(cfg.num_users, n_sub, slots, cfg.num_tx_antennas);
    let mut i = 0;
    for n in 0..n_sub {
        for t in 0..slots {
            if let Some(k) = pattern.owner(n, t) {
                let p = check.fractions[i] * cfg.power_budget;
                powers[n * slots + t] = p;
                let hk = h.h(k, n, t);
                let norm = hk.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
                if norm > 0.0 {
                    let amp = p.sqrt() / norm;
                    for (dst, z) in w.w_mut(k, n, t).iter_mut().zip(hk) {
                        *dst = z * amp;
                    }
                }
                i += 1;
            }
        }
    }
    OracleOptimum {
        completion_times: pattern.completion_times(cfg.num_users),
        pattern,
        value,
        powers,
        precoders: w,
        slack: check.slack,
    }
}

/// One disagreement between the merged form and its indicator mapping.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MappingViolation {
    pub sample: usize,
    pub quantity: String,
    pub merged: f64,
    pub mapped: f64,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct MappingReport {
    pub samples: usize,
    pub comparisons: usize,
    pub violations: Vec<MappingViolation>,
}

/// Relative tolerance of [`check_indicator_mapping`].
pub const MAPPING_TOL: f64 = 1e-12;

fn agree(a: f64, b: f64) -> bool {
    a == b || (a - b).abs() <= MAPPING_TOL * a.abs().max(b.abs())
}

/// Maps every merged precoder tensor to indicators plus unmerged precoders
/// (`beta = 1` iff the block norm exceeds the zero threshold, `w = w̄`) and
/// compares SINR, per-slot power and completion slots between the two
/// forms.
pub fn check_indicator_mapping(samples: &[PrecoderTensor], h: &ChannelTensor, cfg: &SystemConfig) -> MappingReport {
    let zero = cfg.zero_amplitude();
    let mut report = MappingReport {
        samples: samples.len(),
        ..Default::default()
    };
    for (i, wbar) in samples.iter().enumerate() {
        let alloc = recover_allocation(wbar, zero);
        let mut compare = |quantity: String, merged: f64, mapped: f64| {
            report.comparisons += 1;
            if !agree(merged, mapped) {
                report.violations.push(MappingViolation {
                    sample: i,
                    quantity,
                    merged,
                    mapped,
                });
            }
        };
        for t in 0..wbar.slots() {
            for n in 0..wbar.subcarriers() {
                for k in 0..wbar.users() {
                    compare(
                        format!("sinr[{k}][{n}][{t}]"),
                        sinr(h, wbar, cfg, k, n, t),
                        sinr_gated(h, wbar, &alloc, cfg, k, n, t),
                    );
                }
            }
            let mut gated_power = 0.0;
            for k in 0..wbar.users() {
                for n in 0..wbar.subcarriers() {
                    if alloc.alpha(k, t) && alloc.beta(k, n, t) {
                        gated_power += wbar.block_energy(k, n, t);
                    }
                }
            }
            compare(format!("power[{t}]"), wbar.slot_power(t), gated_power);
        }
        let merged_tk = completion_times(wbar, zero);
        for k in 0..wbar.users() {
            let mapped = (0..wbar.slots()).rev().find(|&t| alloc.alpha(k, t)).map_or(0, |t| t + 1);
            compare(format!("completion[{k}]"), merged_tk[k] as f64, mapped as f64);
        }
    }
    report
}

#[cfg(test)]
mod tests {
    use super::*;
    use num_complex::Complex64;
    use crate::channel::{generate_channels, ChannelSpec};
    use crate::model::Tensor4;

    fn zero_precoders(cfg: &SystemConfig) -> PrecoderTensor {
        PrecoderTensor::zeros(cfg.num_users, cfg.num_subcarriers, 1, cfg.num_tx_antennas)
    }

    fn unit(re: f64) -> Complex64 {
        Complex64::new(re, 0.0)
    }

    fn micro(k: usize, n: usize, nt: usize) -> SystemConfig {
        let mut c = SystemConfig::default_scenario().with_users(k);
        c.num_subcarriers = n;
        c.num_tx_antennas = nt;
        c
    }

    #[test]
    fn decode_is_lexicographic() {
        let a = OrthogonalPattern::decode(0, 2, 2, 1);
        assert_eq!(a.owner, vec![None, None]);
        let b = OrthogonalPattern::decode(1, 2, 2, 1);
        assert_eq!(b.owner, vec![None, Some(0)]);
        let c = OrthogonalPattern::decode(3, 2, 2, 1);
        assert_eq!(c.owner, vec![Some(0), None]);
        assert_eq!(OrthogonalPattern::decode(8, 2, 2, 1).owner, vec![Some(1), Some(1)]);
    }

    #[test]
    fn single_cell_closed_form() {
        let base = micro(1, 1, 2);
        let h = generate_channels(&ChannelSpec::new(9), &base, 1).unwrap();
        let g: f64 = h.h(0, 0, 0).iter().map(|z| z.norm_sqr()).sum();
        for dbm in [-90.0, -60.0, -40.0] {
            let cfg = base.clone().with_power_dbm(dbm);
            let cap_bits = cfg.slot_len_s * cfg.bandwidth_hz * (cfg.power_budget * g / cfg.noise_power()).ln_1p()
                / std::f64::consts::LN_2;
            let out = brute_force_orthogonal(&h, &cfg, 1, DEFAULT_PATTERN_CAP).unwrap();
            if cap_bits >= cfg.payloads[0] * 1.001 {
                assert!((out.value().unwrap() - cfg.payloads[0] / cfg.slot_len_s).abs() < 1e-6);
            } else if cap_bits < cfg.payloads[0] * 0.999 {
                assert!(out.best.is_none());
            }
        }
    }

    #[test]
    fn orthogonal_channels_split_subcarriers() {
        let cfg = micro(2, 2, 2).with_power_dbm(0.0);
        let e = |a: usize| Complex64::new(if a == 0 { 1.0 } else { 0.0 }, 0.0);
        let f = |a: usize| Complex64::new(if a == 1 { 1.0 } else { 0.0 }, 0.0);
        let h = ChannelTensor {
            entries: Tensor4::from_fn(2, 2, 1, 2, |k, _, _, a| if k == 0 { e(a) } else { f(a) }),
            coherent: true,
        };
        let out = brute_force_orthogonal(&h, &cfg, 1, DEFAULT_PATTERN_CAP).unwrap();
        let best = out.best.unwrap();
        assert_eq!(out.patterns, 9);
        assert_eq!(best.completion_times, vec![1, 1]);
        assert_eq!(best.pattern.owner, vec![Some(0), Some(1)]);
        assert!(best.slack >= 0.0);
    }

    #[test]
    fn cap_is_enforced() {
        let cfg = micro(6, 4, 5);
        let h = generate_channels(&ChannelSpec::new(1), &cfg, 2).unwrap();
        match brute_force_orthogonal(&h, &cfg, 2, DEFAULT_PATTERN_CAP) {
            Err(Error::EnumerationCap { cap, .. }) => assert_eq!(cap, DEFAULT_PATTERN_CAP),
            other => panic!("expected cap error, got {other:?}"),
        }
    }

    #[test]
    fn zero_precoder_maps_to_nothing() {
        let cfg = micro(2, 2, 2);
        let h = generate_channels(&ChannelSpec::new(1), &cfg, 1).unwrap();
        let w = zero_precoders(&cfg);
        let r = check_indicator_mapping(std::slice::from_ref(&w), &h, &cfg);
        assert!(r.violations.is_empty());
        assert!(completion_times(&w, cfg.zero_amplitude()).iter().all(|&t| t == 0));
    }

    #[test]
    fn block_at_threshold_counts_as_zero() {
        let cfg = micro(2, 1, 1);
        let h = generate_channels(&ChannelSpec::new(1), &cfg, 1).unwrap();
        let mut w = zero_precoders(&cfg);
        w.w_mut(0, 0, 0)[0] = unit(cfg.zero_amplitude());
        w.w_mut(1, 0, 0)[0] = unit(cfg.power_budget.sqrt() / 2.0);
        let alloc = recover_allocation(&w, cfg.zero_amplitude());
        assert!(!alloc.beta(0, 0, 0));
        assert!(alloc.beta(1, 0, 0));
        let r = check_indicator_mapping(&[w], &h, &cfg);
        assert_eq!(r.comparisons, 2 + 1 + 2);
    }
}
