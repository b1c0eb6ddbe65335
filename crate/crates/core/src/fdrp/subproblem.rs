//! Per-iteration convex subproblem: min-max sparsity objective with the
//! log-rate delivery constraints and a convex inner approximation of the
//! SINR-vs-auxiliary coupling.

use num_complex::Complex64;

use super::feasibility::{precoders_from_lifted, Dims};
use crate::conic::{inner_product_forms, real_inner_form, AffineExpr, ComplexLayout, ConeTag, ConicProgram};
use crate::metrics::{inner, sinr_with_noise, sparsity_surrogate};
use crate::model::{ChannelTensor, PrecoderTensor, SparsityNorm, SystemConfig};
use crate::{Error, Result};

/// Expansion point of one SCA iteration. Precoders are in physical units.
#[derive(Debug, Clone, PartialEq)]
pub struct SubproblemState {
    pub precoders: PrecoderTensor,
    /// `zeta[(k*N + n)*T + t]`, all at least one.
    pub zeta: Vec<f64>,
    /// Objective value of `precoders`, for noise-normalized precoders.
    pub gamma: f64,
    pub iteration: usize,
}

impl SubproblemState {
    /// State with `zeta = 1 + SINR(w)` and `gamma` evaluated at `w`.
    pub fn from_precoders(h: &ChannelTensor, w: PrecoderTensor, cfg: &SystemConfig, iteration: usize) -> Self {
        let noise = cfg.noise_power();
        let (k_, n_, t_) = (w.users(), w.subcarriers(), w.slots());
        let mut zeta = Vec::with_capacity(k_ * n_ * t_);
        for k in 0..k_ {
            for n in 0..n_ {
                for t in 0..t_ {
                    zeta.push(1.0 + sinr_with_noise(h, &w, noise, k, n, t));
                }
            }
        }
        let gamma = normalized_gamma(&w, cfg);
        SubproblemState {
            precoders: w,
            zeta,
            gamma,
            iteration,
        }
    }

    pub fn zeta_at(&self, k: usize, n: usize, t: usize) -> f64 {
        let (nn, tt) = (self.precoders.subcarriers(), self.precoders.slots());
        self.zeta[(k * nn + n) * tt + t]
    }
}

/// `max_k sum_t lambda_t ||w_k,t|| / (eta_k Q_k)` for precoders scaled by
/// `1/sqrt(B N_0)`.
pub fn normalized_gamma(w: &PrecoderTensor, cfg: &SystemConfig) -> f64 {
    let scale = 1.0 / cfg.noise_power().sqrt();
    (0..w.users())
        .map(|k| {
            scale * sparsity_surrogate(w, cfg.slot_weights_for(w.slots()), k, cfg.sparsity_norm)
                / (cfg.user_weights[k] * cfg.payloads[k])
        })
        .fold(0.0, f64::max)
}

/// First-order model of `b = (sum_j |h^H w_j|^2 + noise) / zeta` around an
/// expansion point.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearizationTerms {
    pub constant: f64,
    /// One gradient vector per user `j`, in the sense `Re(g_j^H dw_j)`.
    pub grad_w: Vec<Vec<Complex64>>,
    pub grad_zeta: f64,
}

impl LinearizationTerms {
    /// Model value at `(w, zeta)` for the cell `(n, t)`, expanded at `(w0, zeta0)`.
    pub fn evaluate(&self, w: &PrecoderTensor, zeta: f64, w0: &PrecoderTensor, zeta0: f64, n: usize, t: usize) -> f64 {
        let mut v = self.constant + self.grad_zeta * (zeta - zeta0);
        for (j, g) in self.grad_w.iter().enumerate() {
            let a = w.w(j, n, t);
            let b = w0.w(j, n, t);
            for i in 0..g.len() {
                v += (g[i].conj() * (a[i] - b[i])).re;
            }
        }
        v
    }
}

/// Exact `b` for user `k` on `(n, t)`.
pub fn b_value(h: &ChannelTensor, w: &PrecoderTensor, zeta: f64, noise: f64, k: usize, n: usize, t: usize) -> f64 {
    let hk = h.h(k, n, t);
    let total: f64 = (0..w.users()).map(|j| inner(hk, w.w(j, n, t)).norm_sqr()).sum();
    (total + noise) / zeta
}

fn linearize_with_noise(
    h: &ChannelTensor,
    w: &PrecoderTensor,
    zeta: f64,
    noise: f64,
    k: usize,
    n: usize,
    t: usize,
) -> LinearizationTerms {
    let hk = h.h(k, n, t);
    let mut total = noise;
    let grad_w = (0..w.users())
        .map(|j| {
            let s = inner(hk, w.w(j, n, t));
            total += s.norm_sqr();
            hk.iter().map(|&ha| ha * s * (2.0 / zeta)).collect()
        })
        .collect();
    LinearizationTerms {
        constant: total / zeta,
        grad_w,
        grad_zeta: -total / (zeta * zeta),
    }
}

/// Linearization of `b` for user `k` on `(n, t)` at `state`, in physical units.
pub fn linearize_b(
    h: &ChannelTensor,
    state: &SubproblemState,
    cfg: &SystemConfig,
    k: usize,
    n: usize,
    t: usize,
) -> Result<LinearizationTerms> {
    let zeta = state.zeta_at(k, n, t);
    if !(zeta >= 1.0) {
        return Err(Error::Domain(format!("zeta({k},{n},{t}) = {zeta} is below one")));
    }
    Ok(linearize_with_noise(h, &state.precoders, zeta, cfg.noise_power(), k, n, t))
}

/// Variable layout of the subproblem.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SubproblemLayout {
    pub dims: Dims,
    pub norm: SparsityNorm,
    pub w: ComplexLayout,
    pub modulus: usize,
    pub zeta: usize,
    pub u: usize,
    pub s: usize,
    pub gamma: usize,
    pub num_vars: usize,
}

impl SubproblemLayout {
    pub fn new(cfg: &SystemConfig, horizon: usize) -> Self {
        let dims = Dims::new(cfg, horizon);
        let w = ComplexLayout::new(0, dims.entries());
        let modulus = w.end();
        let m_len = match cfg.sparsity_norm {
            SparsityNorm::EntryL1 => dims.entries(),
            SparsityNorm::ColumnL2 => dims.users * dims.slots,
        };
        let zeta = modulus + m_len;
        let u = zeta + dims.cells();
        let s = u + dims.cells();
        let gamma = s + dims.cells();
        SubproblemLayout {
            dims,
            norm: cfg.sparsity_norm,
            w,
            modulus,
            zeta,
            u,
            s,
            gamma,
            num_vars: gamma + 1,
        }
    }

    fn m_index(&self, k: usize, n: usize, t: usize, a: usize) -> usize {
        match self.norm {
            SparsityNorm::EntryL1 => self.modulus + self.dims.entry(k, n, t, a),
            SparsityNorm::ColumnL2 => self.modulus + k * self.dims.slots + t,
        }
    }

    /// Physical precoders from a solution vector.
    pub fn precoders(&self, x: &[f64], cfg: &SystemConfig) -> PrecoderTensor {
        precoders_from_lifted(x, &self.dims, cfg.noise_power())
    }

    /// Lifts `state` into a point of the subproblem with every auxiliary at
    /// its tightest value. The point is feasible (up to rounding) whenever
    /// the state's precoders meet the power and delivery constraints.
    pub fn lift_state(&self, state: &SubproblemState, h: &ChannelTensor, cfg: &SystemConfig) -> Vec<f64> {
        let d = &self.dims;
        let scale = 1.0 / cfg.noise_power().sqrt();
        let w = state.precoders.scaled(scale);
        let w0 = &w;
        let mut x = vec![0.0; self.num_vars];
        for k in 0..d.users {
            for n in 0..d.subcarriers {
                for t in 0..d.slots {
                    let c = d.cell(k, n, t);
                    let blk = w.w(k, n, t);
                    for (a, &z) in blk.iter().enumerate() {
                        self.w.write(&mut x, d.entry(k, n, t, a), z);
                    }
                    let zeta = state.zeta_at(k, n, t);
                    x[self.zeta + c] = zeta;
                    x[self.u + c] = zeta.ln();
                    x[self.s + c] = interference(h, &w, k, n, t) / lift_scale(h, w0, k, n, t);
                }
            }
        }
        match self.norm {
            SparsityNorm::EntryL1 => {
                for i in 0..d.entries() {
                    x[self.modulus + i] = self.w.read(&x, i).norm();
                }
            }
            SparsityNorm::ColumnL2 => {
                for k in 0..d.users {
                    for t in 0..d.slots {
                        let e: f64 = (0..d.subcarriers).map(|n| w.block_energy(k, n, t)).sum();
                        x[self.modulus + k * d.slots + t] = e.sqrt();
                    }
                }
            }
        }
        x[self.gamma] = normalized_gamma(&state.precoders, cfg) / gamma_scale(state);
        x
    }

    /// Objective value `gamma` of a solution vector built around `state`.
    pub fn gamma(&self, x: &[f64], state: &SubproblemState) -> f64 {
        x[self.gamma] * gamma_scale(state)
    }
}

/// The subproblem's variable is `gamma / gamma_scale`, so the solver works
/// with an objective of order one whatever the magnitude of `gamma`.
fn gamma_scale(state: &SubproblemState) -> f64 {
    if state.gamma.is_finite() && state.gamma > 0.0 {
        state.gamma
    } else {
        1.0
    }
}

/// Normalized interference `sum_{j != k} |h_k^H w_j|^2` on `(n, t)`.
fn interference(h: &ChannelTensor, w: &PrecoderTensor, k: usize, n: usize, t: usize) -> f64 {
    let hk = h.h(k, n, t);
    (0..w.users())
        .filter(|&j| j != k)
        .map(|j| inner(hk, w.w(j, n, t)).norm_sqr())
        .sum()
}

/// Scale `c` of the lifting `||(2y, s - c)|| <= s + c`, i.e. `||y||^2 <= c s`,
/// chosen so the lifted variable is of order one at the expansion point.
fn lift_scale(h: &ChannelTensor, w0: &PrecoderTensor, k: usize, n: usize, t: usize) -> f64 {
    interference(h, w0, k, n, t).max(1.0)
}

/// Lower bound on each subproblem's `zeta`. A cell that should fall silent
/// needs `zeta < 1` in the convexified coupling constraint (at `zeta = 1` the
/// tangent only admits about half the previous amplitude), so the bound is
/// kept small; it still keeps `zeta` and the exp-cone argument positive.
pub const ZETA_FLOOR: f64 = 1e-6;

/// Builds the subproblem around `state` (physical precoders, `zeta >= 1`).
pub fn build_subproblem(
    h: &ChannelTensor,
    cfg: &SystemConfig,
    horizon: usize,
    state: &SubproblemState,
) -> Result<(ConicProgram, SubproblemLayout)> {
    let lay = SubproblemLayout::new(cfg, horizon);
    let d = lay.dims;
    d.check_channel(h)?;
    let w0 = &state.precoders;
    if w0.users() != d.users || w0.subcarriers() != d.subcarriers || w0.slots() != d.slots || w0.antennas() != d.antennas
    {
        return Err(Error::Domain("state precoders do not match (cfg, T)".into()));
    }
    if state.zeta.len() != d.cells() || state.zeta.iter().any(|&z| !(z >= 1.0)) {
        return Err(Error::Domain("state zeta must have K*N*T entries, all at least one".into()));
    }
    let scale = 1.0 / cfg.noise_power().sqrt();
    let w0 = w0.scaled(scale);
    let p_norm = cfg.power_budget * scale * scale;
    let wl = lay.w;
    let mut p = ConicProgram::new(lay.num_vars);
    p.objective[lay.gamma] = 1.0;

    for t in 0..d.slots {
        let mut rows = vec![AffineExpr::constant(p_norm.sqrt())];
        for k in 0..d.users {
            for n in 0..d.subcarriers {
                for a in 0..d.antennas {
                    let e = d.entry(k, n, t, a);
                    rows.push(AffineExpr::var(wl.re(e)));
                    rows.push(AffineExpr::var(wl.im(e)));
                }
            }
        }
        p.add(ConeTag::Soc, "power", rows);
    }

    let ln2 = std::f64::consts::LN_2;
    for k in 0..d.users {
        let mut delivery = AffineExpr::constant(-cfg.payloads[k] / (cfg.slot_len_s * cfg.bandwidth_hz));
        for n in 0..d.subcarriers {
            for t in 0..d.slots {
                let c = d.cell(k, n, t);
                p.add(
                    ConeTag::Exp,
                    "exp",
                    vec![
                        AffineExpr::var(lay.u + c),
                        AffineExpr::constant(1.0),
                        AffineExpr::var(lay.zeta + c),
                    ],
                );
                delivery.add_term(lay.u + c, 1.0 / ln2);
            }
        }
        p.add_nonneg("delivery", delivery);
    }

    for k in 0..d.users {
        for n in 0..d.subcarriers {
            for t in 0..d.slots {
                let c = d.cell(k, n, t);
                let hk = h.h(k, n, t);
                let s = lay.s + c;
                let scale_c = lift_scale(h, &w0, k, n, t);
                let mut top = AffineExpr::var(s);
                top.add_constant(scale_c);
                let mut rows = vec![top];
                for j in (0..d.users).filter(|&j| j != k) {
                    let (re, im) = inner_product_forms(hk, &wl, |a| d.entry(j, n, t, a));
                    rows.push(re.scaled(2.0));
                    rows.push(im.scaled(2.0));
                }
                let mut bottom = AffineExpr::var(s);
                bottom.add_constant(-scale_c);
                rows.push(bottom);
                p.add(ConeTag::Soc, "quad_lift", rows);

                let zeta0 = state.zeta[c];
                let lin = linearize_with_noise(h, &w0, zeta0, 1.0, k, n, t);
                let mut row = AffineExpr::constant(lin.constant - 1.0 - lin.grad_zeta * zeta0);
                row.add_term(lay.zeta + c, lin.grad_zeta);
                row.add_term(s, -scale_c);
                for (j, g) in lin.grad_w.iter().enumerate() {
                    let form = real_inner_form(g, &wl, |a| d.entry(j, n, t, a));
                    let at_w0: f64 = g.iter().zip(w0.w(j, n, t)).map(|(gi, wi)| (gi.conj() * wi).re).sum();
                    row.add_scaled(&form, 1.0);
                    row.add_constant(-at_w0);
                }
                p.add_nonneg("quad_row", row);

                let mut lb = AffineExpr::var(lay.zeta + c);
                lb.add_constant(-ZETA_FLOOR);
                p.add_nonneg("zeta_lb", lb);
            }
        }
    }

    let weights = cfg.slot_weights_for(d.slots);
    match lay.norm {
        SparsityNorm::EntryL1 => {
            for k in 0..d.users {
                for n in 0..d.subcarriers {
                    for t in 0..d.slots {
                        for a in 0..d.antennas {
                            let e = d.entry(k, n, t, a);
                            p.add(
                                ConeTag::Soc,
                                "modulus",
                                vec![
                                    AffineExpr::var(lay.m_index(k, n, t, a)),
                                    AffineExpr::var(wl.re(e)),
                                    AffineExpr::var(wl.im(e)),
                                ],
                            );
                        }
                    }
                }
            }
        }
        SparsityNorm::ColumnL2 => {
            for k in 0..d.users {
                for t in 0..d.slots {
                    let mut rows = vec![AffineExpr::var(lay.m_index(k, 0, t, 0))];
                    for n in 0..d.subcarriers {
                        for a in 0..d.antennas {
                            let e = d.entry(k, n, t, a);
                            rows.push(AffineExpr::var(wl.re(e)));
                            rows.push(AffineExpr::var(wl.im(e)));
                        }
                    }
                    p.add(ConeTag::Soc, "modulus", rows);
                }
            }
        }
    }
    for k in 0..d.users {
        let denom = cfg.user_weights[k] * cfg.payloads[k];
        let mut row = AffineExpr::term(lay.gamma, gamma_scale(state));
        for t in 0..d.slots {
            let coef = -weights[t] / denom;
            match lay.norm {
                SparsityNorm::EntryL1 => {
                    for n in 0..d.subcarriers {
                        for a in 0..d.antennas {
                            row.add_term(lay.m_index(k, n, t, a), coef);
                        }
                    }
                }
                SparsityNorm::ColumnL2 => {
                    row.add_term(lay.m_index(k, 0, t, 0), coef);
                }
            }
        }
        p.add_nonneg("norm", row);
    }
    Ok((p, lay))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::channel::{generate_channels, ChannelSpec};
    use crate::conic::{self, residual_of, validate};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn cfg(k: usize, n: usize, nt: usize) -> SystemConfig {
        let mut c = SystemConfig::default_scenario().with_users(k);
        c.num_subcarriers = n;
        c.num_tx_antennas = nt;
        c
    }

    fn random_precoders(rng: &mut ChaCha8Rng, c: &SystemConfig, t: usize, amp: f64) -> PrecoderTensor {
        let mut w = PrecoderTensor::zeros(c.num_users, c.num_subcarriers, t, c.num_tx_antennas);
        for k in 0..c.num_users {
            for n in 0..c.num_subcarriers {
                for s in 0..t {
                    for z in w.w_mut(k, n, s) {
                        *z = Complex64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)) * amp;
                    }
                }
            }
        }
        w
    }

    #[test]
    fn zero_expansion_point() {
        let c = cfg(2, 2, 2);
        let h = generate_channels(&ChannelSpec::new(2), &c, 1).unwrap();
        let st = SubproblemState {
            precoders: PrecoderTensor::zeros(2, 2, 1, 2),
            zeta: vec![1.0; 4],
            gamma: 0.0,
            iteration: 0,
        };
        let lin = linearize_b(&h, &st, &c, 0, 1, 0).unwrap();
        let bn0 = c.noise_power();
        assert!((lin.constant - bn0).abs() <= 1e-12 * bn0);
        assert!((lin.grad_zeta + bn0).abs() <= 1e-12 * bn0);
        assert!(lin.grad_w.iter().flatten().all(|g| g.norm() == 0.0));
    }

    #[test]
    fn majorization_is_a_lower_model() {
        let c = cfg(3, 2, 2);
        let h = generate_channels(&ChannelSpec::new(9), &c, 1).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let amp = c.noise_power().sqrt() * 3.0;
        let w0 = random_precoders(&mut rng, &c, 1, amp);
        let mut st = SubproblemState::from_precoders(&h, w0.clone(), &c, 0);
        let noise = c.noise_power();
        for (k, n) in [(0, 0), (1, 1), (2, 0)] {
            let z0 = st.zeta_at(k, n, 0);
            let lin = linearize_b(&h, &st, &c, k, n, 0).unwrap();
            assert!(lin.constant > 0.0 && lin.grad_zeta < 0.0);
            let exact = lin.evaluate(&w0, z0, &w0, z0, n, 0);
            assert!((exact - b_value(&h, &w0, z0, noise, k, n, 0)).abs() <= 1e-12 * exact);
            for _ in 0..1000 {
                let w = random_precoders(&mut rng, &c, 1, amp * 2.0);
                let z = 1.0 + rng.random_range(0.0..20.0);
                let model = lin.evaluate(&w, z, &w0, z0, n, 0);
                let truth = b_value(&h, &w, z, noise, k, n, 0);
                assert!(truth >= model - 1e-12 * truth.abs().max(model.abs()));
            }
        }
        st.zeta[0] = 0.5;
        assert!(linearize_b(&h, &st, &c, 0, 0, 0).is_err());
    }

    #[test]
    fn census_small() {
        let c = cfg(2, 2, 2);
        let h = generate_channels(&ChannelSpec::new(1), &c, 2).unwrap();
        let st = SubproblemState::from_precoders(&h, PrecoderTensor::zeros(2, 2, 2, 2), &c, 0);
        let (p, _) = build_subproblem(&h, &c, 2, &st).unwrap();
        assert!(validate(&p).is_ok());
        assert_eq!(p.census(ConeTag::Soc, "power"), 2);
        assert_eq!(p.census(ConeTag::Exp, "exp"), 8);
        assert_eq!(p.census(ConeTag::Soc, "quad_lift"), 8);
        assert_eq!(p.census(ConeTag::Nonneg, "quad_row"), 8);
        assert_eq!(p.census(ConeTag::Soc, "modulus"), 16);
        assert_eq!(p.census(ConeTag::Nonneg, "delivery"), 2);
        assert_eq!(p.census(ConeTag::Nonneg, "norm"), 2);
        assert_eq!(p.census(ConeTag::Nonneg, "zeta_lb"), 8);
    }

    #[test]
    fn previous_iterate_is_feasible() {
        let c = cfg(2, 2, 2).with_uniform_payload(60.0);
        let h = generate_channels(&ChannelSpec::new(7), &c, 2).unwrap();
        let feas_prog = super::super::build_feasibility(&h, &c, 2).unwrap();
        let s = conic::solve(&feas_prog, c.solver_tol).unwrap();
        let w = super::super::precoders_from_feasibility(&s.x, &c, 2);
        let st = SubproblemState::from_precoders(&h, w, &c, 0);
        let (p, lay) = build_subproblem(&h, &c, 2, &st).unwrap();
        let x = lay.lift_state(&st, &h, &c);
        // quad rows are tight up to rounding at the expansion point
        assert!(residual_of(&p, &x) <= 1e-8, "residual {}", residual_of(&p, &x));
        assert!((lay.gamma(&x, &st) - st.gamma).abs() <= 1e-12 * st.gamma);
        assert!((p.objective_value(&x) - 1.0).abs() <= 1e-12);
    }
}
