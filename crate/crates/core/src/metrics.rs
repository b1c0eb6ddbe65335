//! Closed-form performance formulas: SINR, throughput, delivered bits,
//! completion times, experience rates, the sparsity surrogate, allocation
//! recovery, multiplexing statistics and interior-point complexity estimates.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::model::{Allocation, ChannelTensor, PrecoderTensor, SparsityNorm, SystemConfig};
use crate::{Error, Result};

/// `h^H w`.
#[inline]
pub fn inner(h: &[Complex64], w: &[Complex64]) -> Complex64 {
    h.iter().zip(w).map(|(a, b)| a.conj() * b).sum()
}

/// SINR of the merged-precoder form with an explicit noise power.
pub fn sinr_with_noise(
    h: &ChannelTensor,
    w: &PrecoderTensor,
    noise: f64,
    k: usize,
    n: usize,
    t: usize,
) -> f64 {
    let hk = h.h(k, n, t);
    let signal = inner(hk, w.w(k, n, t)).norm_sqr();
    let mut interference = 0.0;
    for j in 0..w.users() {
        if j != k {
            interference += inner(hk, w.w(j, n, t)).norm_sqr();
        }
    }
    signal / (interference + noise)
}

/// SINR of user `k` on subcarrier `n` in slot `t` with merged precoders.
pub fn sinr(h: &ChannelTensor, w: &PrecoderTensor, cfg: &SystemConfig, k: usize, n: usize, t: usize) -> f64 {
    sinr_with_noise(h, w, cfg.noise_power(), k, n, t)
}

/// SINR with explicit binary indicators and unmerged precoders.
pub fn sinr_gated(
    h: &ChannelTensor,
    w: &PrecoderTensor,
    alloc: &Allocation,
    cfg: &SystemConfig,
    k: usize,
    n: usize,
    t: usize,
) -> f64 {
    let gate = |j: usize| alloc.alpha(j, t) && alloc.beta(j, n, t);
    let hk = h.h(k, n, t);
    let signal = if gate(k) {
        inner(hk, w.w(k, n, t)).norm_sqr()
    } else {
        0.0
    };
    let mut interference = 0.0;
    for j in 0..w.users() {
        if j != k && gate(j) {
            interference += inner(hk, w.w(j, n, t)).norm_sqr();
        }
    }
    signal / (interference + cfg.noise_power())
}

/// `B log2(1 + sinr)` in bits/s.
pub fn throughput(sinr_value: f64, cfg: &SystemConfig) -> Result<f64> {
    if !(sinr_value >= 0.0) {
        return Err(Error::Domain(format!("negative SINR {sinr_value}")));
    }
    Ok(cfg.bandwidth_hz * sinr_value.ln_1p() / std::f64::consts::LN_2)
}

fn bits_in_cell(h: &ChannelTensor, w: &PrecoderTensor, cfg: &SystemConfig, k: usize, n: usize, t: usize) -> f64 {
    let s = sinr(h, w, cfg, k, n, t);
    cfg.slot_len_s * cfg.bandwidth_hz * s.ln_1p() / std::f64::consts::LN_2
}

/// Bits delivered to user `k` over the whole horizon.
pub fn delivered_bits(h: &ChannelTensor, w: &PrecoderTensor, cfg: &SystemConfig, k: usize) -> f64 {
    let mut total = 0.0;
    for t in 0..w.slots() {
        for n in 0..w.subcarriers() {
            total += bits_in_cell(h, w, cfg, k, n, t);
        }
    }
    total
}

/// Bits delivered to user `k` on each subcarrier, summed over slots.
pub fn delivered_bits_per_subcarrier(
    h: &ChannelTensor,
    w: &PrecoderTensor,
    cfg: &SystemConfig,
    k: usize,
) -> Vec<f64> {
    (0..w.subcarriers())
        .map(|n| (0..w.slots()).map(|t| bits_in_cell(h, w, cfg, k, n, t)).sum())
        .collect()
}

fn block_active(w: &PrecoderTensor, k: usize, n: usize, t: usize, zero_amplitude: f64) -> bool {
    w.block_energy(k, n, t).sqrt() > zero_amplitude
}

/// Highest active slot per user (1-based), or 0 when every block is below
/// `zero_amplitude`. A slot is active when any of its subcarrier blocks is.
pub fn completion_times(w: &PrecoderTensor, zero_amplitude: f64) -> Vec<usize> {
    (0..w.users())
        .map(|k| {
            (0..w.slots())
                .rev()
                .find(|&t| (0..w.subcarriers()).any(|n| block_active(w, k, n, t, zero_amplitude)))
                .map_or(0, |t| t + 1)
        })
        .collect()
}

/// `Q_k / (T_k * slot_len)` in bits/s.
pub fn experience_rates(payloads: &[f64], completion: &[usize], slot_len_s: f64) -> Result<Vec<f64>> {
    payloads
        .iter()
        .zip(completion)
        .enumerate()
        .map(|(k, (&q, &tk))| {
            if tk == 0 {
                Err(Error::IncompleteDelivery { user: k })
            } else {
                Ok(q / (tk as f64 * slot_len_s))
            }
        })
        .collect()
}

/// `beta = 1` iff the block norm exceeds `zero_amplitude`; `alpha` is the OR over subcarriers.
pub fn recover_allocation(w: &PrecoderTensor, zero_amplitude: f64) -> Allocation {
    Allocation::from_beta(w.users(), w.subcarriers(), w.slots(), |k, n, t| {
        block_active(w, k, n, t, zero_amplitude)
    })
}

/// Copy of `w` with every sub-threshold block set to zero.
pub fn threshold_precoders(w: &PrecoderTensor, zero_amplitude: f64) -> PrecoderTensor {
    let mut out = w.clone();
    for k in 0..w.users() {
        for n in 0..w.subcarriers() {
            for t in 0..w.slots() {
                if !block_active(w, k, n, t, zero_amplitude) {
                    out.w_mut(k, n, t).fill(Complex64::new(0.0, 0.0));
                }
            }
        }
    }
    out
}

/// Weighted structural sparsity of user `k`: `sum_t lambda_t * ||column_t||`.
pub fn sparsity_surrogate(w: &PrecoderTensor, slot_weights: &[f64], k: usize, norm: SparsityNorm) -> f64 {
    assert!(slot_weights.len() >= w.slots(), "slot weights shorter than horizon");
    (0..w.slots())
        .map(|t| {
            let col = match norm {
                SparsityNorm::EntryL1 => (0..w.subcarriers())
                    .flat_map(|n| w.w(k, n, t).iter())
                    .map(|z| z.norm())
                    .sum::<f64>(),
                SparsityNorm::ColumnL2 => (0..w.subcarriers())
                    .map(|n| w.block_energy(k, n, t))
                    .sum::<f64>()
                    .sqrt(),
            };
            slot_weights[t] * col
        })
        .sum()
}

/// Users per (subcarrier, slot) and the empirical CDF of those counts.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MultiplexStats {
    /// `counts[n][t]`.
    pub counts: Vec<Vec<usize>>,
    /// `cdf[c]` is the fraction of cells with at most `c` users, `c = 0..=K`.
    pub cdf: Vec<f64>,
}

impl MultiplexStats {
    pub fn max_count(&self) -> usize {
        self.counts.iter().flatten().copied().max().unwrap_or(0)
    }
}

pub fn multiplex_histogram(alloc: &Allocation) -> MultiplexStats {
    let counts: Vec<Vec<usize>> = (0..alloc.subcarriers())
        .map(|n| {
            (0..alloc.slots())
                .map(|t| (0..alloc.users()).filter(|&k| alloc.beta(k, n, t)).count())
                .collect()
        })
        .collect();
    let cells = (alloc.subcarriers() * alloc.slots()).max(1) as f64;
    let mut hist = vec![0usize; alloc.users() + 1];
    for &c in counts.iter().flatten() {
        hist[c] += 1;
    }
    let mut acc = 0usize;
    let cdf = hist
        .iter()
        .map(|&h| {
            acc += h;
            acc as f64 / cells
        })
        .collect();
    MultiplexStats { counts, cdf }
}

/// Interior-point operation counts for the initializer and one subproblem.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ComplexityEstimate {
    pub initializer: f64,
    pub subproblem_per_iter: f64,
}

/// Evaluates both estimates with `o = K*N*T*N_t` (big-O constant 1).
pub fn complexity_estimate(k: usize, n: usize, t: usize, nt: usize, eps: f64) -> ComplexityEstimate {
    let (k, n, t, nt) = (k as f64, n as f64, t as f64, nt as f64);
    let o = k * n * t * nt;
    let knt = k * n * t;
    let per_cone = (k - 1.0) * nt + 1.0;
    let log_term = (1.0 / eps).ln();

    let barrier = 2.0 * t + 3.0 * knt;
    let forming = o * t + o * o * t + o * t * (k * n * nt).powi(2) + o * knt * per_cone * per_cone;
    let initializer = log_term * barrier.sqrt() * (forming + o.powi(3));

    let barrier6 = 2.0 * k + knt + 2.0 * t;
    let body6 = o * (2.0 * k + knt) + o * o * (knt + 2.0 * k) + o * t * (k * n * nt).powi(2) + o.powi(3);
    let subproblem_per_iter = log_term * barrier6.sqrt() * body6;

    ComplexityEstimate {
        initializer,
        subproblem_per_iter,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::channel::{generate_channels, ChannelSpec};
    use crate::model::Tensor4;
    use approx::assert_relative_eq;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    fn small_cfg(k: usize, n: usize, nt: usize) -> SystemConfig {
        let mut cfg = SystemConfig::default_scenario().with_users(k);
        cfg.num_subcarriers = n;
        cfg.num_tx_antennas = nt;
        cfg
    }

    #[test]
    fn sinr_zero_precoders() {
        let cfg = small_cfg(2, 1, 2);
        let h = generate_channels(&ChannelSpec::new(1), &cfg, 1).unwrap();
        let w = PrecoderTensor::zeros(2, 1, 1, 2);
        assert_eq!(sinr(&h, &w, &cfg, 0, 0, 0), 0.0);
    }

    #[test]
    fn sinr_matched_filter_single_user() {
        let cfg = small_cfg(1, 1, 3);
        let h = generate_channels(&ChannelSpec::new(5), &cfg, 1).unwrap();
        let hv = h.h(0, 0, 0);
        let norm = hv.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
        let amp = 2.5e-7;
        let mut w = PrecoderTensor::zeros(1, 1, 1, 3);
        for (dst, src) in w.w_mut(0, 0, 0).iter_mut().zip(hv) {
            *dst = src * (amp / norm);
        }
        let expected = amp * amp * norm * norm / cfg.noise_power();
        assert_relative_eq!(sinr(&h, &w, &cfg, 0, 0, 0), expected, max_relative = 1e-12);
    }

    #[test]
    fn sinr_orthogonal_two_user() {
        let cfg = small_cfg(2, 1, 2);
        let h = ChannelTensor {
            entries: Tensor4::from_fn(2, 1, 1, 2, |k, _, _, a| if k == a { c(1.0, 0.0) } else { c(0.0, 0.0) }),
            coherent: true,
        };
        let mut w = PrecoderTensor::zeros(2, 1, 1, 2);
        w.w_mut(0, 0, 0).copy_from_slice(&[c(1.0, 0.0), c(0.5, 0.0)]);
        w.w_mut(1, 0, 0).copy_from_slice(&[c(0.0, 0.0), c(1.0, 0.0)]);
        // user 1 sees h1^H w2 = 0 interference
        assert_relative_eq!(sinr(&h, &w, &cfg, 0, 0, 0), 1.0 / cfg.noise_power(), max_relative = 1e-12);
    }

    #[test]
    fn throughput_values() {
        let cfg = SystemConfig::default_scenario();
        assert_eq!(throughput(0.0, &cfg).unwrap(), 0.0);
        assert_relative_eq!(throughput(1.0, &cfg).unwrap(), 30_000.0, max_relative = 1e-12);
        assert_relative_eq!(throughput(3.0, &cfg).unwrap(), 60_000.0, max_relative = 1e-12);
        assert!(matches!(throughput(-0.1, &cfg), Err(Error::Domain(_))));
    }

    fn single_cell_sinr_one() -> (SystemConfig, ChannelTensor, PrecoderTensor) {
        let cfg = small_cfg(1, 1, 1);
        let h = ChannelTensor {
            entries: Tensor4::from_fn(1, 1, 2, 1, |_, _, _, _| c(1.0, 0.0)),
            coherent: true,
        };
        let mut w = PrecoderTensor::zeros(1, 1, 2, 1);
        w.w_mut(0, 0, 0)[0] = c(cfg.noise_power().sqrt(), 0.0);
        (cfg, h, w)
    }

    #[test]
    fn delivered_bits_single_cell() {
        let (cfg, h, w) = single_cell_sinr_one();
        assert_relative_eq!(delivered_bits(&h, &w, &cfg, 0), 15.0, max_relative = 1e-12);
        let zero = PrecoderTensor::zeros(1, 1, 2, 1);
        assert_eq!(delivered_bits(&h, &zero, &cfg, 0), 0.0);
        let mut both = w.clone();
        both.w_mut(0, 0, 1)[0] = w.w(0, 0, 0)[0];
        assert_relative_eq!(delivered_bits(&h, &both, &cfg, 0), 30.0, max_relative = 1e-12);
    }

    #[test]
    fn completion_time_cases() {
        let mut w = PrecoderTensor::zeros(3, 2, 3, 1);
        w.w_mut(1, 0, 0)[0] = c(1.0, 0.0);
        w.w_mut(2, 1, 0)[0] = c(1.0, 0.0);
        w.w_mut(2, 0, 2)[0] = c(0.0, 1.0);
        assert_eq!(completion_times(&w, 1e-6), vec![0, 1, 3]);
    }

    #[test]
    fn experience_rate_values() {
        let r = experience_rates(&[200.0, 100.0, 200.0], &[1, 1, 2], 0.5e-3).unwrap();
        assert_relative_eq!(r[0], 4e5, max_relative = 1e-12);
        assert_relative_eq!(r[1], 2e5, max_relative = 1e-12);
        assert_relative_eq!(r[2], 2e5, max_relative = 1e-12);
        assert!(matches!(
            experience_rates(&[1.0], &[0], 0.5e-3),
            Err(Error::IncompleteDelivery { user: 0 })
        ));
    }

    #[test]
    fn recover_single_block() {
        let mut w = PrecoderTensor::zeros(2, 3, 2, 2);
        let zero = recover_allocation(&w, 1e-9);
        assert!((0..2).all(|k| (0..2).all(|t| !zero.alpha(k, t))));
        w.w_mut(0, 1, 0)[1] = c(0.3, -0.1);
        let a = recover_allocation(&w, 1e-9);
        let ones = (0..2)
            .flat_map(|k| (0..3).flat_map(move |n| (0..2).map(move |t| (k, n, t))))
            .filter(|&(k, n, t)| a.beta(k, n, t))
            .count();
        assert_eq!(ones, 1);
        assert!(a.alpha(0, 0));
        assert!(!a.alpha(0, 1));
    }

    #[test]
    fn surrogate_values() {
        let mut w = PrecoderTensor::zeros(1, 1, 2, 1);
        let lambda = [0.01, 10.0];
        assert_eq!(sparsity_surrogate(&w, &lambda, 0, SparsityNorm::EntryL1), 0.0);
        w.w_mut(0, 0, 1)[0] = c(0.0, 2.0);
        assert_relative_eq!(sparsity_surrogate(&w, &lambda, 0, SparsityNorm::EntryL1), 20.0);
        let mut moved = PrecoderTensor::zeros(1, 1, 2, 1);
        moved.w_mut(0, 0, 0)[0] = c(0.0, 2.0);
        assert_relative_eq!(sparsity_surrogate(&moved, &lambda, 0, SparsityNorm::EntryL1), 0.02);
    }

    #[test]
    fn surrogate_l1_vs_l2_column() {
        let mut w = PrecoderTensor::zeros(1, 2, 1, 1);
        w.w_mut(0, 0, 0)[0] = c(3.0, 0.0);
        w.w_mut(0, 1, 0)[0] = c(0.0, 4.0);
        assert_relative_eq!(sparsity_surrogate(&w, &[1.0], 0, SparsityNorm::EntryL1), 7.0);
        assert_relative_eq!(sparsity_surrogate(&w, &[1.0], 0, SparsityNorm::ColumnL2), 5.0);
    }

    #[test]
    fn multiplex_counts() {
        let zero = Allocation::from_beta(3, 2, 1, |_, _, _| false);
        let s = multiplex_histogram(&zero);
        assert!(s.counts.iter().flatten().all(|&c| c == 0));
        assert_eq!(s.cdf[0], 1.0);
        let three = Allocation::from_beta(3, 2, 1, |_, n, _| n == 0);
        let s = multiplex_histogram(&three);
        assert_eq!(s.counts[0][0], 3);
        assert_eq!(s.counts[1][0], 0);
        assert_eq!(s.cdf, vec![0.5, 0.5, 0.5, 1.0]);
    }

    #[test]
    fn complexity_unit_case() {
        let e = complexity_estimate(1, 1, 1, 1, (-1.0f64).exp());
        assert_relative_eq!(e.initializer, 5.0 * 5f64.sqrt(), max_relative = 1e-12);
        let one = complexity_estimate(3, 2, 2, 4, 1.0);
        assert_eq!(one.initializer, 0.0);
        assert_eq!(one.subproblem_per_iter, 0.0);
        let a = complexity_estimate(3, 2, 2, 4, 0.01);
        let b = complexity_estimate(3, 2, 2, 4, 1e-4);
        assert_relative_eq!(b.initializer, 2.0 * a.initializer, max_relative = 1e-12);
        assert_relative_eq!(b.subproblem_per_iter, 2.0 * a.subproblem_per_iter, max_relative = 1e-12);
    }
}
