//! Logarithmic barriers for the supported cones.
//!
//! All functions take the block slack `z = A x + b`.

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) enum Cone {
    Nonneg,
    Soc,
    Exp,
}

impl Cone {
    pub(crate) fn degree(self) -> f64 {
        match self {
            Cone::Nonneg => 1.0,
            Cone::Soc => 2.0,
            Cone::Exp => 3.0,
        }
    }
}

fn norm_tail(z: &[f64]) -> f64 {
    z[1..].iter().map(|v| v * v).sum::<f64>().sqrt()
}

/// `t^2 - ||v||^2`, computed as a product to limit cancellation.
pub(crate) fn soc_gap(z: &[f64]) -> f64 {
    let nv = norm_tail(z);
    (z[0] - nv) * (z[0] + nv)
}

pub(crate) fn exp_psi(z: &[f64]) -> f64 {
    let (u, v, w) = (z[0], z[1], z[2]);
    v * (w.ln() - v.ln()) - u
}

pub(crate) fn is_interior(cone: Cone, z: &[f64]) -> bool {
    match cone {
        Cone::Nonneg => z[0] > 0.0,
        Cone::Soc => z[0] > 0.0 && z[0] - norm_tail(z) > 0.0 && soc_gap(z) > 0.0,
        Cone::Exp => z[1] > 0.0 && z[2] > 0.0 && exp_psi(z) > 0.0,
    }
}

/// Barrier value; callers must check `is_interior` first.
pub(crate) fn barrier(cone: Cone, z: &[f64]) -> f64 {
    match cone {
        Cone::Nonneg => -z[0].ln(),
        Cone::Soc => -soc_gap(z).ln(),
        Cone::Exp => -exp_psi(z).ln() - z[1].ln() - z[2].ln(),
    }
}

/// `barrier(zt) - barrier(z)` through logs of ratios, which keeps full
/// relative precision when the two points are close. Both must be interior.
pub(crate) fn barrier_change(cone: Cone, z: &[f64], zt: &[f64]) -> f64 {
    match cone {
        Cone::Nonneg => -(zt[0] / z[0]).ln(),
        Cone::Soc => -(soc_gap(zt) / soc_gap(z)).ln(),
        Cone::Exp => -(exp_psi(zt) / exp_psi(z)).ln() - (zt[1] / z[1]).ln() - (zt[2] / z[2]).ln(),
    }
}

/// Gradient of the barrier.
pub(crate) fn gradient(cone: Cone, z: &[f64], g: &mut [f64]) {
    match cone {
        Cone::Nonneg => g[0] = -1.0 / z[0],
        Cone::Soc => {
            let q = soc_gap(z);
            g[0] = -2.0 * z[0] / q;
            for i in 1..z.len() {
                g[i] = 2.0 * z[i] / q;
            }
        }
        Cone::Exp => {
            let (v, w) = (z[1], z[2]);
            let psi = exp_psi(z);
            let dpsi = [-1.0, w.ln() - v.ln() - 1.0, v / w];
            g[0] = -dpsi[0] / psi;
            g[1] = -dpsi[1] / psi - 1.0 / v;
            g[2] = -dpsi[2] / psi - 1.0 / w;
        }
    }
}

/// Dense 3x3 Hessian of the exponential-cone barrier, row-major.
pub(crate) fn exp_hessian(z: &[f64]) -> [f64; 9] {
    let (v, w) = (z[1], z[2]);
    let psi = exp_psi(z);
    let d = [-1.0, w.ln() - v.ln() - 1.0, v / w];
    let mut h = [0.0; 9];
    for i in 0..3 {
        for j in 0..3 {
            h[3 * i + j] = d[i] * d[j] / (psi * psi);
        }
    }
    // second derivatives of psi: psi_vv = -1/v, psi_vw = 1/w, psi_ww = -v/w^2
    h[4] += 1.0 / (v * psi) + 1.0 / (v * v);
    h[5] -= 1.0 / (w * psi);
    h[7] -= 1.0 / (w * psi);
    h[8] += v / (w * w * psi) + 1.0 / (w * w);
    h
}

/// Largest `a` (possibly infinite) with `z + a dz` in the closed cone, for the
/// cones with a closed form. Exponential cones return infinity and are handled
/// by backtracking.
pub(crate) fn max_step(cone: Cone, z: &[f64], dz: &[f64]) -> f64 {
    match cone {
        Cone::Nonneg => {
            if dz[0] < 0.0 {
                -z[0] / dz[0]
            } else {
                f64::INFINITY
            }
        }
        Cone::Soc => {
            let mut amax = f64::INFINITY;
            if dz[0] < 0.0 {
                amax = -z[0] / dz[0];
            }
            let a = dz[0] * dz[0] - dz[1..].iter().map(|v| v * v).sum::<f64>();
            let b = 2.0 * (z[0] * dz[0] - z[1..].iter().zip(&dz[1..]).map(|(p, q)| p * q).sum::<f64>());
            let c = soc_gap(z);
            let root = smallest_positive_root(a, b, c);
            amax.min(root)
        }
        Cone::Exp => f64::INFINITY,
    }
}

fn smallest_positive_root(a: f64, b: f64, c: f64) -> f64 {
    let scale = a.abs().max(b.abs()).max(c.abs());
    if scale == 0.0 {
        return f64::INFINITY;
    }
    if a.abs() <= 1e-14 * scale {
        return if b < 0.0 { -c / b } else { f64::INFINITY };
    }
    let disc = b * b - 4.0 * a * c;
    if disc < 0.0 {
        return f64::INFINITY;
    }
    let sq = disc.sqrt();
    let q = -0.5 * (b + b.signum() * sq);
    let mut best = f64::INFINITY;
    for r in [q / a, if q != 0.0 { c / q } else { f64::INFINITY }] {
        if r > 0.0 && r < best {
            best = r;
        }
    }
    best
}

/// Direction `e` with `z + s e` interior for all large enough `s`.
pub(crate) fn relax_direction(cone: Cone, dim: usize) -> Vec<f64> {
    match cone {
        Cone::Nonneg => vec![1.0],
        Cone::Soc => {
            let mut e = vec![0.0; dim];
            e[0] = 1.0;
            e
        }
        Cone::Exp => vec![-1.0, 1.0, 1.0],
    }
}

/// Smallest `s` (up to a small margin) such that `z + s e` is interior.
pub(crate) fn required_shift(cone: Cone, z: &[f64]) -> f64 {
    match cone {
        Cone::Nonneg => -z[0],
        Cone::Soc => norm_tail(z) - z[0],
        Cone::Exp => {
            let e = relax_direction(cone, 3);
            let shifted = |s: f64| [z[0] + s * e[0], z[1] + s * e[1], z[2] + s * e[2]];
            let inside = |s: f64| is_interior(cone, &shifted(s));
            let scale = 1.0 + z.iter().map(|v| v.abs()).fold(0.0, f64::max);
            let mut hi = scale;
            while !inside(hi) {
                hi *= 2.0;
            }
            let mut lo = -scale;
            if inside(lo) {
                return lo;
            }
            for _ in 0..80 {
                let mid = 0.5 * (lo + hi);
                if inside(mid) {
                    hi = mid;
                } else {
                    lo = mid;
                }
            }
            hi
        }
    }
}

/// Distance-like measure of how far `z` is outside the closed cone (0 inside).
pub(crate) fn violation(cone: Cone, z: &[f64]) -> f64 {
    match cone {
        Cone::Nonneg => (-z[0]).max(0.0),
        Cone::Soc => (norm_tail(z) - z[0]).max(0.0),
        Cone::Exp => {
            let (u, v, w) = (z[0], z[1], z[2]);
            let mut viol = (-v).max(0.0).max((-w).max(0.0));
            if v > 0.0 && w > 0.0 {
                viol = viol.max(u - v * (w.ln() - v.ln()));
            } else {
                viol = viol.max(u.max(0.0));
            }
            viol.max(0.0)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn numeric_grad(cone: Cone, z: &[f64]) -> Vec<f64> {
        (0..z.len())
            .map(|i| {
                let h = 1e-6 * (1.0 + z[i].abs());
                let mut p = z.to_vec();
                let mut m = z.to_vec();
                p[i] += h;
                m[i] -= h;
                (barrier(cone, &p) - barrier(cone, &m)) / (2.0 * h)
            })
            .collect()
    }

    #[test]
    fn exp_gradient_and_hessian_match_finite_differences() {
        let z = [0.3, 1.2, 2.5];
        assert!(is_interior(Cone::Exp, &z));
        let mut g = [0.0; 3];
        gradient(Cone::Exp, &z, &mut g);
        let ng = numeric_grad(Cone::Exp, &z);
        for i in 0..3 {
            assert!((g[i] - ng[i]).abs() < 1e-6, "{g:?} vs {ng:?}");
        }
        let h = exp_hessian(&z);
        for j in 0..3 {
            let step = 1e-6;
            let mut p = z;
            let mut m = z;
            p[j] += step;
            m[j] -= step;
            let mut gp = [0.0; 3];
            let mut gm = [0.0; 3];
            gradient(Cone::Exp, &p, &mut gp);
            gradient(Cone::Exp, &m, &mut gm);
            for i in 0..3 {
                let fd = (gp[i] - gm[i]) / (2.0 * step);
                assert!((h[3 * i + j] - fd).abs() < 1e-5 * (1.0 + fd.abs()));
            }
        }
    }

    #[test]
    fn soc_gradient_matches_finite_differences() {
        let z = [3.0, 1.0, -0.5, 2.0];
        let mut g = [0.0; 4];
        gradient(Cone::Soc, &z, &mut g);
        let ng = numeric_grad(Cone::Soc, &z);
        for i in 0..4 {
            assert!((g[i] - ng[i]).abs() < 1e-6);
        }
    }

    #[test]
    fn soc_step_hits_boundary() {
        let z = [2.0, 0.0];
        let dz = [0.0, 1.0];
        assert!((max_step(Cone::Soc, &z, &dz) - 2.0).abs() < 1e-12);
    }

    #[test]
    fn exp_shift_lands_on_boundary() {
        let z = [1.0, 1.0, 1.0];
        let s = required_shift(Cone::Exp, &z);
        let e = relax_direction(Cone::Exp, 3);
        let zs: Vec<f64> = (0..3).map(|i| z[i] + s * e[i]).collect();
        assert!(is_interior(Cone::Exp, &zs));
        assert!(exp_psi(&zs) < 1e-9);
    }

    #[test]
    fn barrier_change_matches_difference() {
        for (cone, z, zt) in [
            (Cone::Nonneg, vec![2.0], vec![2.5]),
            (Cone::Soc, vec![3.0, 1.0, -0.5], vec![3.1, 0.9, -0.4]),
            (Cone::Exp, vec![0.3, 1.2, 2.5], vec![0.2, 1.3, 2.4]),
        ] {
            let d = barrier_change(cone, &z, &zt);
            assert!((d - (barrier(cone, &zt) - barrier(cone, &z))).abs() < 1e-12);
        }
    }

    #[test]
    fn violations() {
        assert_eq!(violation(Cone::Nonneg, &[-2.0]), 2.0);
        assert_eq!(violation(Cone::Soc, &[1.0, 3.0, 4.0]), 4.0);
        assert_eq!(violation(Cone::Exp, &[0.0, 1.0, 1.0]), 0.0);
        assert!(violation(Cone::Exp, &[1.0, 1.0, 1.0]) > 0.9);
    }
}
