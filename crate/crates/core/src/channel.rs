//! Seeded Rayleigh-fading channel generation.

use std::io::Write;
use std::path::Path;

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha12Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::model::{check_horizon, ChannelTensor, SystemConfig, Tensor4};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ChannelSpec {
    pub seed: u64,
    /// Channels stay constant across slots (coherence time covers the horizon).
    pub coherent: bool,
    /// Variance of each complex entry.
    pub variance: f64,
}

impl ChannelSpec {
    pub fn new(seed: u64) -> Self {
        ChannelSpec {
            seed,
            coherent: true,
            variance: 1.0,
        }
    }
}

/// Draws i.i.d. circularly-symmetric Gaussian entries.
///
/// Every (user, subcarrier) pair owns its own RNG stream, filled slot by slot,
/// so a longer horizon extends a shorter one without changing earlier entries.
pub fn generate_channels(spec: &ChannelSpec, cfg: &SystemConfig, horizon: usize) -> Result<ChannelTensor> {
    check_horizon(horizon, cfg)?;
    if !(spec.variance > 0.0 && spec.variance.is_finite()) {
        return Err(Error::Domain(format!(
            "channel variance must be positive, got {}",
            spec.variance
        )));
    }
    let (k_users, n_sub, n_ant) = (cfg.num_users, cfg.num_subcarriers, cfg.num_tx_antennas);
    let scale = (spec.variance / 2.0).sqrt();
    let mut entries = Tensor4::zeros(k_users, n_sub, horizon, n_ant);
    for k in 0..k_users {
        for n in 0..n_sub {
            let mut rng = ChaCha12Rng::seed_from_u64(spec.seed);
            rng.set_stream((k * n_sub + n) as u64);
            let draw = |rng: &mut ChaCha12Rng| {
                let re: f64 = rng.sample(StandardNormal);
                let im: f64 = rng.sample(StandardNormal);
                Complex64::new(re * scale, im * scale)
            };
            if spec.coherent {
                let h: Vec<Complex64> = (0..n_ant).map(|_| draw(&mut rng)).collect();
                for t in 0..horizon {
                    entries.block_mut(k, n, t).copy_from_slice(&h);
                }
            } else {
                for t in 0..horizon {
                    for a in 0..n_ant {
                        entries.block_mut(k, n, t)[a] = draw(&mut rng);
                    }
                }
            }
        }
    }
    Ok(ChannelTensor {
        entries,
        coherent: spec.coherent,
    })
}

/// Writes one CSV record per (k, n, t): `k,n,t,re_0,im_0,...,re_{Nt-1},im_{Nt-1}`.
/// Indices are 0-based.
pub fn write_channel_dump(h: &ChannelTensor, path: &Path) -> Result<()> {
    let mut out = String::new();
    out.push_str("k,n,t");
    for a in 0..h.antennas() {
        out.push_str(&format!(",re_{a},im_{a}"));
    }
    out.push('\n');
    for k in 0..h.users() {
        for n in 0..h.subcarriers() {
            for t in 0..h.slots() {
                out.push_str(&format!("{k},{n},{t}"));
                for z in h.h(k, n, t) {
                    out.push_str(&format!(",{:e},{:e}", z.re, z.im));
                }
                out.push('\n');
            }
        }
    }
    let mut f = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    f.write_all(out.as_bytes()).map_err(|e| Error::io(path, e))
}
