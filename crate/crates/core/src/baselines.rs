//! Comparison schedulers: uniform resource programming (every user spread
//! over every subcarrier and slot of the minimal horizon) and greedy
//! sequential programming (one user at a time, MRT plus water-filling).

use num_complex::Complex64;

use crate::fdrp::find_min_horizon;
use crate::metrics::{experience_rates, multiplex_histogram, recover_allocation};
use crate::model::{
    validate_config, Allocation, ChannelTensor, PrecoderTensor, ServeOrder, SolveStatus, SolveSummary, SystemConfig,
};
use crate::{Error, Result};

/// Uniform scheduler: the initializer's solution at the minimal horizon,
/// with every user occupying every slot.
pub fn run_urp(h: &ChannelTensor, cfg: &SystemConfig) -> Result<SolveSummary> {
    let (horizon, w) = find_min_horizon(h, cfg)?;
    let completion = vec![horizon; cfg.num_users];
    let rates = experience_rates(&cfg.payloads, &completion, cfg.slot_len_s)?;
    Ok(SolveSummary {
        gamma_trace: Vec::new(),
        per_slot_power: w.per_slot_power(),
        allocation: Allocation::from_beta(cfg.num_users, cfg.num_subcarriers, horizon, |_, _, _| true),
        precoders: w,
        completion_times: completion,
        experience_rates: rates,
        horizon,
        iterations: 0,
        status: SolveStatus::Converged,
        trace: Vec::new(),
    })
}

/// Powers maximizing `sum_n log2(1 + p_n g_n / noise)` under `sum_n p_n <= budget`.
///
/// Water level over the strongest `m` gains, with `m` the largest count whose
/// weakest member still gets positive power.
pub fn waterfill(gains: &[f64], budget: f64, noise: f64) -> Vec<f64> {
    let mut out = vec![0.0; gains.len()];
    if !(budget > 0.0) {
        return out;
    }
    let mut order: Vec<usize> = (0..gains.len()).filter(|&i| gains[i] > 0.0).collect();
    order.sort_by(|&a, &b| gains[b].total_cmp(&gains[a]).then(a.cmp(&b)));
    let mut floor_sum = 0.0;
    let mut level = 0.0;
    let mut active = 0;
    for (m, &i) in order.iter().enumerate() {
        let floor = noise / gains[i];
        let candidate = (budget + floor_sum + floor) / (m + 1) as f64;
        if candidate <= floor {
            break;
        }
        floor_sum += floor;
        level = candidate;
        active = m + 1;
    }
    for &i in &order[..active] {
        out[i] = (level - noise / gains[i]).max(0.0);
    }
    out
}

fn serve_sequence(cfg: &SystemConfig) -> Vec<usize> {
    let mut users: Vec<usize> = (0..cfg.num_users).collect();
    if cfg.serve_order == ServeOrder::DescendingPayload {
        users.sort_by(|&a, &b| cfg.payloads[b].total_cmp(&cfg.payloads[a]).then(a.cmp(&b)));
    }
    users
}

/// Greedy scheduler: users are served one after another, each alone in its
/// slots with MRT directions and water-filled subcarrier powers, until its
/// payload is delivered. Bits over-delivered in a user's last slot are lost.
pub fn run_grp(h: &ChannelTensor, cfg: &SystemConfig) -> Result<SolveSummary> {
    validate_config(cfg).map_err(Error::Config)?;
    let cap = cfg.horizon_cap.min(h.slots());
    let noise = cfg.noise_power();
    let bits_per_nat = cfg.slot_len_s * cfg.bandwidth_hz / std::f64::consts::LN_2;
    let mut blocks: Vec<(usize, usize, usize, Vec<Complex64>)> = Vec::new();
    let mut completion = vec![0; cfg.num_users];
    let mut slot = 0;
    for k in serve_sequence(cfg) {
        let mut delivered = 0.0;
        while delivered < cfg.payloads[k] {
            if slot >= cap {
                return Err(Error::HorizonExhausted { cap: cfg.horizon_cap });
            }
            let gains: Vec<f64> = (0..cfg.num_subcarriers)
                .map(|n| h.h(k, n, slot).iter().map(|z| z.norm_sqr()).sum())
                .collect();
            let powers = waterfill(&gains, cfg.power_budget, noise);
            for n in 0..cfg.num_subcarriers {
                if powers[n] > 0.0 {
                    delivered += bits_per_nat * (powers[n] * gains[n] / noise).ln_1p();
                    let amp = (powers[n] / gains[n]).sqrt();
                    blocks.push((k, n, slot, h.h(k, n, slot).iter().map(|z| z * amp).collect()));
                }
            }
            slot += 1;
        }
        completion[k] = slot;
    }
    let horizon = slot;
    let mut w = PrecoderTensor::zeros(cfg.num_users, cfg.num_subcarriers, horizon, cfg.num_tx_antennas);
    for (k, n, t, v) in blocks {
        w.w_mut(k, n, t).copy_from_slice(&v);
    }
    let rates = experience_rates(&cfg.payloads, &completion, cfg.slot_len_s)?;
    let allocation = recover_allocation(&w, 0.0);
    debug_assert!(multiplex_histogram(&allocation).max_count() <= 1);
    Ok(SolveSummary {
        gamma_trace: Vec::new(),
        per_slot_power: w.per_slot_power(),
        precoders: w,
        allocation,
        completion_times: completion,
        experience_rates: rates,
        horizon,
        iterations: 0,
        status: SolveStatus::Converged,
        trace: Vec::new(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::channel::{generate_channels, ChannelSpec};
    use crate::metrics::delivered_bits;
    use proptest::prelude::*;

    fn objective(p: &[f64], g: &[f64], noise: f64) -> f64 {
        p.iter().zip(g).map(|(p, g)| (p * g / noise).ln_1p()).sum()
    }

    #[test]
    fn single_subcarrier_takes_everything() {
        assert!((waterfill(&[0.3], 2.0, 1.0)[0] - 2.0).abs() < 1e-15);
    }

    #[test]
    fn equal_gains_split_evenly() {
        let p = waterfill(&[2.0, 2.0], 1.0, 0.1);
        assert!((p[0] - 0.5).abs() < 1e-15 && (p[1] - 0.5).abs() < 1e-15);
    }

    #[test]
    fn weak_gain_is_cut_off() {
        let p = waterfill(&[1.0, 1e-9], 0.01, 1.0);
        assert!((p[0] - 0.01).abs() < 1e-15);
        assert_eq!(p[1], 0.0);
    }

    #[test]
    fn zero_gains_get_nothing() {
        assert_eq!(waterfill(&[0.0, 0.0], 1.0, 1.0), vec![0.0, 0.0]);
        assert_eq!(waterfill(&[0.0, 1.0], 1.0, 1.0), vec![0.0, 1.0]);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(32))]
        #[test]
        fn beats_grid_search(g1 in 0.01f64..10.0, g2 in 0.01f64..10.0, budget in 0.01f64..5.0) {
            let g = [g1, g2];
            let p = waterfill(&g, budget, 1.0);
            prop_assert!((p[0] + p[1] - budget).abs() <= 1e-12 * budget);
            let best = objective(&p, &g, 1.0);
            let grid = (0..=10_000)
                .map(|i| {
                    let a = budget * i as f64 / 10_000.0;
                    objective(&[a, budget - a], &g, 1.0)
                })
                .fold(f64::NEG_INFINITY, f64::max);
            prop_assert!(best >= grid * (1.0 - 1e-3));
            prop_assert!(best >= grid - 1e-12);
        }
    }

    #[test]
    fn identical_users_queue_up() {
        let mut cfg = SystemConfig::default_scenario().with_users(2).with_power_dbm(0.0);
        cfg.num_subcarriers = 2;
        cfg.num_tx_antennas = 2;
        let h1 = generate_channels(&ChannelSpec::new(4), &cfg.clone().with_users(1), cfg.horizon_cap).unwrap();
        // user 1 gets user 0's channel
        let h = crate::model::ChannelTensor {
            entries: crate::model::Tensor4::from_fn(2, 2, cfg.horizon_cap, 2, |_, n, t, a| h1.h(0, n, t)[a]),
            coherent: true,
        };
        let s = run_grp(&h, &cfg).unwrap();
        assert_eq!(s.completion_times, vec![1, 2]);
        assert!((s.experience_rates[1] - s.experience_rates[0] / 2.0).abs() < 1e-9);
        for k in 0..2 {
            assert!(delivered_bits(&h, &s.precoders, &cfg, k) >= cfg.payloads[k] * (1.0 - 1e-9));
        }
        assert!(s.per_slot_power.iter().all(|&p| p <= cfg.power_budget * (1.0 + 1e-12)));
    }

    #[test]
    fn grp_rate_is_flat_once_one_slot_suffices() {
        let cfg = SystemConfig::default_scenario().with_power_dbm(-10.0);
        let h = generate_channels(&ChannelSpec::new(2), &cfg, cfg.horizon_cap).unwrap();
        let lo = run_grp(&h, &cfg).unwrap();
        let hi = run_grp(&h, &cfg.clone().with_power_dbm(10.0)).unwrap();
        assert_eq!(lo.completion_times, (1..=6).collect::<Vec<_>>());
        assert_eq!(lo.experience_rates, hi.experience_rates);
    }

    #[test]
    fn descending_payload_order() {
        let mut cfg = SystemConfig::default_scenario().with_users(3).with_power_dbm(0.0);
        cfg.payloads = vec![100.0, 300.0, 200.0];
        cfg.serve_order = ServeOrder::DescendingPayload;
        assert_eq!(serve_sequence(&cfg), vec![1, 2, 0]);
        let h = generate_channels(&ChannelSpec::new(1), &cfg, cfg.horizon_cap).unwrap();
        let s = run_grp(&h, &cfg).unwrap();
        assert_eq!(s.completion_times, vec![3, 1, 2]);
    }

    #[test]
    fn urp_rates_follow_horizon() {
        let cfg = SystemConfig::default_scenario();
        let h = generate_channels(&ChannelSpec::new(3), &cfg, cfg.horizon_cap).unwrap();
        let s = run_urp(&h, &cfg).unwrap();
        for r in &s.experience_rates {
            assert!((r - 200.0 / (s.horizon as f64 * 0.5e-3)).abs() < 1e-9);
        }
        assert!(s.per_slot_power.iter().all(|&p| p <= cfg.power_budget * (1.0 + 1e-6)));
    }
}
