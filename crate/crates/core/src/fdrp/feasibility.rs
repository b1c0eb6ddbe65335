//! Uniform-rate initializer: a feasibility SOCP with one SINR target per
//! (user, subcarrier, slot) and one power cone per slot.

use num_complex::Complex64;

use crate::conic::{inner_product_forms, AffineExpr, ComplexLayout, ConeTag, ConicProgram};
use crate::model::{ChannelTensor, PrecoderTensor, SystemConfig};
use crate::{Error, Result};

/// Index arithmetic for lifted precoders `w[k][n][t][a]`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Dims {
    pub users: usize,
    pub subcarriers: usize,
    pub slots: usize,
    pub antennas: usize,
}

impl Dims {
    pub fn new(cfg: &SystemConfig, horizon: usize) -> Self {
        Dims {
            users: cfg.num_users,
            subcarriers: cfg.num_subcarriers,
            slots: horizon,
            antennas: cfg.num_tx_antennas,
        }
    }

    /// Number of (k, n, t) cells.
    pub fn cells(&self) -> usize {
        self.users * self.subcarriers * self.slots
    }

    pub fn cell(&self, k: usize, n: usize, t: usize) -> usize {
        (k * self.subcarriers + n) * self.slots + t
    }

    /// Complex precoder entries.
    pub fn entries(&self) -> usize {
        self.cells() * self.antennas
    }

    pub fn entry(&self, k: usize, n: usize, t: usize, a: usize) -> usize {
        self.cell(k, n, t) * self.antennas + a
    }

    pub(crate) fn check_channel(&self, h: &ChannelTensor) -> Result<()> {
        if h.users() != self.users
            || h.subcarriers() != self.subcarriers
            || h.antennas() != self.antennas
            || h.slots() < self.slots
        {
            return Err(Error::Domain(format!(
                "channel tensor {}x{}x{}x{} does not cover K={} N={} T={} Nt={}",
                h.users(),
                h.subcarriers(),
                h.slots(),
                h.antennas(),
                self.users,
                self.subcarriers,
                self.slots,
                self.antennas
            )));
        }
        Ok(())
    }
}

/// Per-subcarrier SINR target `2^{Q / (N T B iota)} - 1` that spreads a
/// payload evenly over all subcarriers and slots.
pub fn sinr_target(payload_bits: f64, cfg: &SystemConfig, horizon: usize) -> f64 {
    let per_cell = payload_bits / (cfg.num_subcarriers as f64 * horizon as f64 * cfg.bandwidth_hz * cfg.slot_len_s);
    (per_cell * std::f64::consts::LN_2).exp_m1()
}

/// Builds the initializer. Precoders are scaled by `1/sqrt(B N_0)` so the
/// noise term equals one; see [`precoders_from_feasibility`].
pub fn build_feasibility(h: &ChannelTensor, cfg: &SystemConfig, horizon: usize) -> Result<ConicProgram> {
    if horizon == 0 {
        return Err(Error::Domain("horizon must be at least 1".into()));
    }
    let d = Dims::new(cfg, horizon);
    d.check_channel(h)?;
    let layout = ComplexLayout::new(0, d.entries());
    let mut p = ConicProgram::new(layout.real_len());
    let p_norm = cfg.power_budget / cfg.noise_power();

    for t in 0..horizon {
        let mut rows = vec![AffineExpr::constant(p_norm.sqrt())];
        for k in 0..d.users {
            for n in 0..d.subcarriers {
                for a in 0..d.antennas {
                    let e = d.entry(k, n, t, a);
                    rows.push(AffineExpr::var(layout.re(e)));
                    rows.push(AffineExpr::var(layout.im(e)));
                }
            }
        }
        p.add(ConeTag::Soc, "power", rows);
    }

    for k in 0..d.users {
        let gamma = sinr_target(cfg.payloads[k], cfg, horizon);
        let inv_sqrt = 1.0 / gamma.sqrt();
        for n in 0..d.subcarriers {
            for t in 0..horizon {
                let hk: &[Complex64] = h.h(k, n, t);
                let (re, _) = inner_product_forms(hk, &layout, |a| d.entry(k, n, t, a));
                let mut rows = vec![re.scaled(inv_sqrt), AffineExpr::constant(1.0)];
                for j in (0..d.users).filter(|&j| j != k) {
                    let (ire, iim) = inner_product_forms(hk, &layout, |a| d.entry(j, n, t, a));
                    rows.push(ire);
                    rows.push(iim);
                }
                p.add(ConeTag::Soc, "sinr", rows);
            }
        }
    }
    Ok(p)
}

/// [`build_feasibility`] with an objective: minimum total normalized power
/// `sum_t ||w_t||^2`, through one epigraph variable per slot appended after
/// the precoders. Its optimum is the unique least-power point of the
/// initializer's feasible set.
pub fn build_least_power(h: &ChannelTensor, cfg: &SystemConfig, horizon: usize) -> Result<ConicProgram> {
    let base = build_feasibility(h, cfg, horizon)?;
    let d = Dims::new(cfg, horizon);
    let layout = ComplexLayout::new(0, d.entries());
    let n0 = base.num_vars;
    let mut p = ConicProgram::new(n0 + horizon);
    for mut b in base.blocks {
        b.cols = p.num_vars;
        p.blocks.push(b);
    }
    for t in 0..horizon {
        let e = n0 + t;
        p.objective[e] = 1.0;
        // ||w_t||^2 <= e  via  ||(2 w_t, e - 1)|| <= e + 1
        let mut top = AffineExpr::var(e);
        top.add_constant(1.0);
        let mut rows = vec![top];
        for k in 0..d.users {
            for n in 0..d.subcarriers {
                for a in 0..d.antennas {
                    let i = d.entry(k, n, t, a);
                    rows.push(AffineExpr::term(layout.re(i), 2.0));
                    rows.push(AffineExpr::term(layout.im(i), 2.0));
                }
            }
        }
        let mut bottom = AffineExpr::var(e);
        bottom.add_constant(-1.0);
        rows.push(bottom);
        p.add(ConeTag::Soc, "power_epigraph", rows);
    }
    Ok(p)
}

/// Reads lifted, noise-normalized precoders back in physical units.
pub(crate) fn precoders_from_lifted(x: &[f64], d: &Dims, noise_power: f64) -> PrecoderTensor {
    let layout = ComplexLayout::new(0, d.entries());
    let scale = noise_power.sqrt();
    let mut w = PrecoderTensor::zeros(d.users, d.subcarriers, d.slots, d.antennas);
    for k in 0..d.users {
        for n in 0..d.subcarriers {
            for t in 0..d.slots {
                let block = w.w_mut(k, n, t);
                for (a, z) in block.iter_mut().enumerate() {
                    *z = layout.read(x, d.entry(k, n, t, a)) * scale;
                }
            }
        }
    }
    w
}

/// Precoders in W^(1/2) from a solution vector of [`build_feasibility`].
pub fn precoders_from_feasibility(x: &[f64], cfg: &SystemConfig, horizon: usize) -> PrecoderTensor {
    precoders_from_lifted(x, &Dims::new(cfg, horizon), cfg.noise_power())
}
