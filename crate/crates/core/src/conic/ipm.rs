//! Primal log-barrier method with a Phase I feasibility search.
//!
//! Newton systems are solved through a sparse quasidefinite augmented matrix:
//! dense blocks contribute `A^T (grad^2 phi) A` directly, while wide
//! nonnegative rows and second-order cones with a constant axis are expanded
//! with one auxiliary node carrying their rank-one part.

use nalgebra::{DMatrix, DVector};

use super::cones::{self, Cone};
use super::kkt::Kkt;
use super::program::{validate, AffineExpr, ConeTag, ConicProgram};
use super::{ConicSolver, Solution, SolveStatus};
use crate::{Error, Result};

const LOWRANK_MIN: usize = 8;
const STATIC_REG: f64 = 1e-11;
const DYN_EPS: f64 = 1e-15;
const DYN_DELTA: f64 = 1e-9;
const UNBOUNDED_LEVEL: f64 = -1e15;
const MAX_BACKOFFS: usize = 6;

/// Tuning knobs of the barrier method.
#[derive(Debug, Clone)]
pub struct BarrierSolver {
    /// Barrier parameter growth factor between centering phases.
    pub mu: f64,
    /// Newton steps allowed per centering phase.
    pub max_center_steps: usize,
    /// Total Newton steps allowed per solve (both phases).
    pub max_newton_steps: usize,
}

impl Default for BarrierSolver {
    fn default() -> Self {
        BarrierSolver {
            mu: 20.0,
            max_center_steps: 60,
            max_newton_steps: 1500,
        }
    }
}

#[derive(Debug)]
enum Kind {
    Dense {
        pos: Vec<usize>,
    },
    LowRank {
        pos_xz: Vec<usize>,
        pos_zz: usize,
        /// Per non-axis row: positions of its (i <= j) term pairs.
        row_pos: Vec<Vec<usize>>,
    },
}

#[derive(Debug)]
struct Blk {
    cone: Cone,
    support: Vec<usize>,
    rows: Vec<Vec<(usize, f64)>>,
    b: Vec<f64>,
    zoff: usize,
    kind: Kind,
}

#[derive(Debug)]
struct EqRow {
    terms: Vec<(usize, f64)>,
    b: f64,
    node: usize,
    pos: Vec<usize>,
}

#[derive(Debug)]
struct Compiled {
    n: usize,
    c: Vec<f64>,
    blocks: Vec<Blk>,
    eqs: Vec<EqRow>,
    zlen: usize,
    kkt: Kkt,
    diag_pos: Vec<usize>,
    nu: f64,
}

/// Rows of a block as `(cone, rows)` after splitting nonnegative blocks and
/// dropping constant rows that are trivially satisfied.
enum Prepared {
    Cone(Cone, Vec<AffineExpr>),
    Eq(AffineExpr),
}

fn prepare(p: &ConicProgram, tol: f64) -> std::result::Result<Vec<Prepared>, ()> {
    let mut out = Vec::new();
    for block in &p.blocks {
        match block.cone {
            ConeTag::Zero => {
                for row in &block.rows {
                    let terms = row.canonical_terms();
                    if terms.is_empty() {
                        if row.constant.abs() > tol {
                            return Err(());
                        }
                    } else {
                        out.push(Prepared::Eq(AffineExpr {
                            terms,
                            constant: row.constant,
                        }));
                    }
                }
            }
            ConeTag::Nonneg => {
                for row in &block.rows {
                    let terms = row.canonical_terms();
                    if terms.is_empty() {
                        if row.constant < -tol {
                            return Err(());
                        }
                    } else {
                        out.push(Prepared::Cone(
                            Cone::Nonneg,
                            vec![AffineExpr {
                                terms,
                                constant: row.constant,
                            }],
                        ));
                    }
                }
            }
            ConeTag::Soc | ConeTag::Exp => {
                let rows: Vec<AffineExpr> = block
                    .rows
                    .iter()
                    .map(|r| AffineExpr {
                        terms: r.canonical_terms(),
                        constant: r.constant,
                    })
                    .collect();
                let cone = if block.cone == ConeTag::Soc { Cone::Soc } else { Cone::Exp };
                if rows.iter().all(|r| r.terms.is_empty()) {
                    let z: Vec<f64> = rows.iter().map(|r| r.constant).collect();
                    if cones::violation(cone, &z) > tol {
                        return Err(());
                    }
                    continue;
                }
                out.push(Prepared::Cone(cone, rows));
            }
        }
    }
    Ok(out)
}

impl Compiled {
    fn new(p: &ConicProgram, tol: f64) -> std::result::Result<Compiled, ()> {
        let n = p.num_vars;
        let prepared = prepare(p, tol)?;

        struct Draft {
            cone: Cone,
            support: Vec<usize>,
            rows: Vec<Vec<(usize, f64)>>,
            b: Vec<f64>,
            lowrank: bool,
        }
        let mut drafts = Vec::new();
        let mut eq_rows = Vec::new();
        for item in prepared {
            match item {
                Prepared::Eq(row) => eq_rows.push(row),
                Prepared::Cone(cone, rows) => {
                    let mut support: Vec<usize> = rows.iter().flat_map(|r| r.terms.iter().map(|t| t.0)).collect();
                    support.sort_unstable();
                    support.dedup();
                    let local = |c: usize| support.binary_search(&c).unwrap();
                    let lrows: Vec<Vec<(usize, f64)>> = rows
                        .iter()
                        .map(|r| r.terms.iter().map(|&(c, v)| (local(c), v)).collect())
                        .collect();
                    let lowrank = support.len() >= LOWRANK_MIN
                        && match cone {
                            Cone::Nonneg => true,
                            Cone::Soc => lrows[0].is_empty(),
                            Cone::Exp => false,
                        };
                    drafts.push(Draft {
                        cone,
                        b: rows.iter().map(|r| r.constant).collect(),
                        support,
                        rows: lrows,
                        lowrank,
                    });
                }
            }
        }
        // Variables without curvature from any dense block would give zero
        // pivots; pull their low-rank blocks back to dense form.
        let mut covered = vec![false; n];
        for d in drafts.iter().filter(|d| !d.lowrank) {
            for &c in &d.support {
                covered[c] = true;
            }
        }
        for d in drafts.iter_mut().filter(|d| d.lowrank) {
            if d.cone == Cone::Soc {
                // non-axis rows of a low-rank SOC keep their own curvature
                for row in &d.rows[1..] {
                    for &(l, _) in row {
                        covered[d.support[l]] = true;
                    }
                }
            }
        }
        for d in drafts.iter_mut().filter(|d| d.lowrank) {
            if d.support.iter().any(|&c| !covered[c]) {
                d.lowrank = false;
                for &c in &d.support {
                    covered[c] = true;
                }
            }
        }

        let mut next_node = n;
        let mut edges: Vec<(usize, usize)> = Vec::new();
        let mut nodes = Vec::with_capacity(drafts.len());
        for d in &drafts {
            if d.lowrank {
                let node = next_node;
                next_node += 1;
                for &c in &d.support {
                    edges.push((c, node));
                }
                for row in d.rows.iter().skip(if d.cone == Cone::Soc { 1 } else { d.rows.len() }) {
                    for (i, &(a, _)) in row.iter().enumerate() {
                        for &(b, _) in &row[i + 1..] {
                            edges.push((d.support[a], d.support[b]));
                        }
                    }
                }
                nodes.push(Some(node));
            } else {
                for (i, &a) in d.support.iter().enumerate() {
                    for &b in &d.support[i + 1..] {
                        edges.push((a, b));
                    }
                }
                nodes.push(None);
            }
        }
        let mut eq_nodes = Vec::with_capacity(eq_rows.len());
        for row in &eq_rows {
            let node = next_node;
            next_node += 1;
            for &(c, _) in &row.terms {
                edges.push((c, node));
            }
            eq_nodes.push(node);
        }
        let mut signs = vec![1.0; next_node];
        for s in signs.iter_mut().skip(n) {
            *s = -1.0;
        }
        let kkt = Kkt::new(next_node, &edges, &signs);

        let mut blocks = Vec::with_capacity(drafts.len());
        let mut zoff = 0;
        let mut nu = 0.0;
        for (d, node) in drafts.into_iter().zip(nodes) {
            let m = d.support.len();
            let kind = match node {
                Some(node) => {
                    let row_pos = if d.cone == Cone::Soc {
                        d.rows[1..]
                            .iter()
                            .map(|row| {
                                let mut v = Vec::new();
                                for (i, &(a, _)) in row.iter().enumerate() {
                                    for &(b, _) in &row[i..] {
                                        v.push(kkt.pos(d.support[a], d.support[b]));
                                    }
                                }
                                v
                            })
                            .collect()
                    } else {
                        Vec::new()
                    };
                    Kind::LowRank {
                        pos_xz: d.support.iter().map(|&c| kkt.pos(c, node)).collect(),
                        pos_zz: kkt.pos(node, node),
                        row_pos,
                    }
                }
                None => {
                    let mut pos = vec![usize::MAX; m * m];
                    for a in 0..m {
                        for b in a..m {
                            pos[a * m + b] = kkt.pos(d.support[a], d.support[b]);
                        }
                    }
                    Kind::Dense { pos }
                }
            };
            nu += match d.cone {
                Cone::Nonneg => d.rows.len() as f64,
                c => c.degree(),
            };
            let dim = d.rows.len();
            blocks.push(Blk {
                cone: d.cone,
                support: d.support,
                rows: d.rows,
                b: d.b,
                zoff,
                kind,
            });
            zoff += dim;
        }
        let eqs = eq_rows
            .into_iter()
            .zip(eq_nodes)
            .map(|(row, node)| {
                let mut pos: Vec<usize> = row.terms.iter().map(|&(c, _)| kkt.pos(c, node)).collect();
                pos.push(kkt.pos(node, node));
                EqRow {
                    terms: row.terms,
                    b: row.constant,
                    node,
                    pos,
                }
            })
            .collect();
        let diag_pos = (0..next_node).map(|i| kkt.pos(i, i)).collect();
        Ok(Compiled {
            n,
            c: p.objective.clone(),
            blocks,
            eqs,
            zlen: zoff,
            kkt,
            diag_pos,
            nu,
        })
    }

    fn slacks(&self, x: &[f64], z: &mut [f64], with_offset: bool) {
        for blk in &self.blocks {
            for (r, row) in blk.rows.iter().enumerate() {
                let mut s = if with_offset { blk.b[r] } else { 0.0 };
                for &(l, v) in row {
                    s += v * x[blk.support[l]];
                }
                z[blk.zoff + r] = s;
            }
        }
    }

    fn barrier(&self, z: &[f64]) -> Option<f64> {
        let mut total = 0.0;
        for blk in &self.blocks {
            let zb = &z[blk.zoff..blk.zoff + blk.rows.len()];
            if !cones::is_interior(blk.cone, zb) {
                return None;
            }
            total += cones::barrier(blk.cone, zb);
        }
        Some(total)
    }

    /// `phi(zt) - phi(z)`, or `None` if `zt` leaves some cone.
    fn barrier_change(&self, z: &[f64], zt: &[f64]) -> Option<f64> {
        let mut total = 0.0;
        for blk in &self.blocks {
            let r = blk.zoff..blk.zoff + blk.rows.len();
            if !cones::is_interior(blk.cone, &zt[r.clone()]) {
                return None;
            }
            total += cones::barrier_change(blk.cone, &z[r.clone()], &zt[r]);
        }
        Some(total)
    }

    fn max_step(&self, z: &[f64], dz: &[f64]) -> f64 {
        let mut amax = f64::INFINITY;
        for blk in &self.blocks {
            let r = blk.zoff..blk.zoff + blk.rows.len();
            amax = amax.min(cones::max_step(blk.cone, &z[r.clone()], &dz[r]));
        }
        amax
    }

    fn objective(&self, x: &[f64]) -> f64 {
        self.c.iter().zip(x).map(|(c, v)| c * v).sum()
    }

    /// Fills the augmented matrix values and the barrier gradient `t c + grad phi`.
    fn assemble(&self, z: &[f64], t: f64, ax: &mut [f64], grad: &mut [f64]) {
        ax.iter_mut().for_each(|v| *v = 0.0);
        for (g, c) in grad.iter_mut().zip(&self.c) {
            *g = t * c;
        }
        let mut gz = vec![0.0; 16];
        let mut local = Vec::new();
        let mut gloc = Vec::new();
        for blk in &self.blocks {
            let dim = blk.rows.len();
            let zb = &z[blk.zoff..blk.zoff + dim];
            if gz.len() < dim {
                gz.resize(dim, 0.0);
            }
            cones::gradient(blk.cone, zb, &mut gz[..dim]);
            for (r, row) in blk.rows.iter().enumerate() {
                for &(l, v) in row {
                    grad[blk.support[l]] += v * gz[r];
                }
            }
            let m = blk.support.len();
            match &blk.kind {
                Kind::Dense { pos } => {
                    local.clear();
                    local.resize(m * m, 0.0);
                    match blk.cone {
                        Cone::Nonneg => {
                            let w = 1.0 / (zb[0] * zb[0]);
                            outer(&mut local, m, &blk.rows[0], &blk.rows[0], w);
                        }
                        Cone::Soc => {
                            let q = cones::soc_gap(zb);
                            gloc.clear();
                            gloc.resize(m, 0.0);
                            for (r, row) in blk.rows.iter().enumerate() {
                                let (s, jz) = if r == 0 { (-1.0, zb[0]) } else { (1.0, -zb[r]) };
                                outer(&mut local, m, row, row, s * 2.0 / q);
                                for &(l, v) in row {
                                    gloc[l] += v * jz;
                                }
                            }
                            let f = 4.0 / (q * q);
                            for a in 0..m {
                                for b in a..m {
                                    local[a * m + b] += f * gloc[a] * gloc[b];
                                }
                            }
                        }
                        Cone::Exp => {
                            let h = cones::exp_hessian(zb);
                            for r in 0..3 {
                                for s in 0..3 {
                                    outer(&mut local, m, &blk.rows[r], &blk.rows[s], h[3 * r + s]);
                                }
                            }
                        }
                    }
                    for a in 0..m {
                        for b in a..m {
                            ax[pos[a * m + b]] += local[a * m + b];
                        }
                    }
                }
                Kind::LowRank {
                    pos_xz,
                    pos_zz,
                    row_pos,
                    ..
                } => {
                    gloc.clear();
                    gloc.resize(m, 0.0);
                    match blk.cone {
                        Cone::Nonneg => {
                            for &(l, v) in &blk.rows[0] {
                                gloc[l] = v / zb[0];
                            }
                        }
                        Cone::Soc => {
                            let q = cones::soc_gap(zb);
                            for (r, row) in blk.rows.iter().enumerate().skip(1) {
                                let poss = &row_pos[r - 1];
                                let mut k = 0;
                                for (i, &(_, vi)) in row.iter().enumerate() {
                                    for &(_, vj) in &row[i..] {
                                        ax[poss[k]] += 2.0 / q * vi * vj;
                                        k += 1;
                                    }
                                }
                                for &(l, v) in row {
                                    gloc[l] -= v * zb[r];
                                }
                            }
                            for g in gloc.iter_mut() {
                                *g *= 2.0 / q;
                            }
                        }
                        Cone::Exp => unreachable!("exponential cones are always dense"),
                    }
                    for (l, &p) in pos_xz.iter().enumerate() {
                        ax[p] += gloc[l];
                    }
                    ax[*pos_zz] -= 1.0;
                }
            }
        }
        for eq in &self.eqs {
            for (k, &(_, v)) in eq.terms.iter().enumerate() {
                ax[eq.pos[k]] += v;
            }
        }
    }

    /// Diagonal scaling giving unit diagonal on variable nodes and unit-norm
    /// equality rows.
    fn equilibrate(&self, ax: &[f64]) -> Vec<f64> {
        let dim = self.kkt.dim();
        let mut s = vec![1.0; dim];
        let mut dmax: f64 = 0.0;
        for i in 0..self.n {
            dmax = dmax.max(ax[self.diag_pos[i]]);
        }
        let floor = if dmax > 0.0 { dmax * 1e-20 } else { 1.0 };
        for i in 0..self.n {
            let d = ax[self.diag_pos[i]];
            s[i] = 1.0 / d.max(floor).sqrt();
        }
        for eq in &self.eqs {
            let node = eq.node;
            let norm = eq
                .terms
                .iter()
                .map(|&(c, v)| (v * s[c]).powi(2))
                .sum::<f64>()
                .sqrt();
            if norm > 0.0 {
                s[node] = 1.0 / norm;
            }
        }
        s
    }

    fn max_residual(&self, x: &[f64]) -> f64 {
        let mut z = vec![0.0; self.zlen];
        self.slacks(x, &mut z, true);
        let mut worst: f64 = 0.0;
        for blk in &self.blocks {
            worst = worst.max(cones::violation(blk.cone, &z[blk.zoff..blk.zoff + blk.rows.len()]));
        }
        for eq in &self.eqs {
            let v = eq.b + eq.terms.iter().map(|&(c, a)| a * x[c]).sum::<f64>();
            worst = worst.max(v.abs());
        }
        worst
    }
}

/// `local += w * a b^T` for sparse local rows `a`, `b`.
fn outer(local: &mut [f64], m: usize, a: &[(usize, f64)], b: &[(usize, f64)], w: f64) {
    if w == 0.0 {
        return;
    }
    for &(i, vi) in a {
        for &(j, vj) in b {
            local[i * m + j] += w * vi * vj;
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum Outcome {
    Converged,
    Stopped,
    Stalled,
    Unbounded,
    Limit,
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum Control {
    Continue,
    Stop,
}

struct Runner<'a> {
    solver: &'a BarrierSolver,
    cp: &'a Compiled,
    newton_steps: usize,
}

impl Runner<'_> {
    /// Solves with the assembled matrix `ax` for each right-hand side (x-part
    /// only); returns the x-parts, i.e. `P r` with `P` the Hessian inverse
    /// restricted to the equality null space.
    fn factor_solve(&self, mut ax: Vec<f64>, rhs: &[Vec<f64>]) -> Vec<Vec<f64>> {
        let cp = self.cp;
        let n = cp.n;
        let s = cp.equilibrate(&ax);
        cp.kkt.scale(&mut ax, &s);
        let f = cp.kkt.factor(&ax, STATIC_REG, DYN_EPS, DYN_DELTA);
        rhs.iter()
            .map(|r| {
                let mut b = vec![0.0; cp.kkt.dim()];
                for i in 0..n {
                    b[i] = r[i] * s[i];
                }
                let mut sol = cp.kkt.solve_refined(&f, &ax, &b, 10);
                sol.truncate(n);
                for (v, si) in sol.iter_mut().zip(&s) {
                    *v *= si;
                }
                sol
            })
            .collect()
    }

    /// Barrier weight for which `x` is closest to central in the local norm,
    /// `argmin_t ||t c + grad phi||_P`.
    fn central_weight(&self, x: &[f64]) -> Option<f64> {
        let cp = self.cp;
        let mut z = vec![0.0; cp.zlen];
        cp.slacks(x, &mut z, true);
        cp.barrier(&z)?;
        let mut ax = vec![0.0; cp.kkt.nnz()];
        let mut g = vec![0.0; cp.n];
        cp.assemble(&z, 0.0, &mut ax, &mut g);
        let sols = self.factor_solve(ax, std::slice::from_ref(&cp.c));
        let pc = &sols[0];
        let cpc: f64 = cp.c.iter().zip(pc).map(|(a, b)| a * b).sum();
        let gpc: f64 = g.iter().zip(pc).map(|(a, b)| a * b).sum();
        let t = -gpc / cpc;
        (cpc > 0.0 && t.is_finite() && t > 0.0).then_some(t)
    }

    /// One damped Newton step at barrier weight `t`; returns the squared
    /// Newton decrement, or `None` when the step could not make progress.
    fn newton_step(&mut self, x: &mut [f64], t: f64) -> Option<f64> {
        let cp = self.cp;
        let n = cp.n;
        let mut z = vec![0.0; cp.zlen];
        cp.slacks(x, &mut z, true);
        cp.barrier(&z)?;
        let mut ax = vec![0.0; cp.kkt.nnz()];
        let mut grad = vec![0.0; n];
        cp.assemble(&z, t, &mut ax, &mut grad);
        let neg: Vec<f64> = grad.iter().map(|g| -g).collect();
        let mut sols = self.factor_solve(ax, &[neg]);
        let sol = sols.pop().expect("one solve");
        let dx = &sol[..n];
        let lam2 = -grad.iter().zip(dx).map(|(g, d)| g * d).sum::<f64>();
        self.newton_steps += 1;
        if !lam2.is_finite() {
            return None;
        }
        if lam2 <= 0.0 {
            return Some(0.0);
        }
        let mut dz = vec![0.0; cp.zlen];
        cp.slacks(dx, &mut dz, false);
        let amax = cp.max_step(&z, &dz);
        let mut alpha = if amax.is_finite() { (0.99 * amax).min(1.0) } else { 1.0 };
        let slope = -lam2;
        let cdx = cp.objective(dx);
        let mut xt = vec![0.0; n];
        let mut zt = vec![0.0; cp.zlen];
        let ftol = 1e-14 * cp.blocks.len() as f64;
        for _ in 0..80 {
            for i in 0..n {
                xt[i] = x[i] + alpha * dx[i];
            }
            for i in 0..cp.zlen {
                zt[i] = z[i] + alpha * dz[i];
            }
            if let Some(dphi) = cp.barrier_change(&z, &zt) {
                let df = t * alpha * cdx + dphi;
                if df <= 0.01 * alpha * slope + ftol {
                    x.copy_from_slice(&xt);
                    return Some(lam2);
                }
            }
            alpha *= 0.5;
        }
        None
    }

    fn run(
        &mut self,
        x: &mut [f64],
        t0: f64,
        gap_target: impl Fn(f64) -> f64,
        mut monitor: impl FnMut(&[f64], Option<f64>) -> Control,
    ) -> (Outcome, f64) {
        let mut t = t0;
        let mut backoffs = 0;
        loop {
            let mut centered = false;
            for _ in 0..self.solver.max_center_steps {
                if self.newton_steps >= self.solver.max_newton_steps {
                    return (Outcome::Limit, t);
                }
                let r = self.newton_step(x, t);
                match r {
                    None => return (Outcome::Stalled, t),
                    Some(lam2) => {
                        if monitor(x, None) == Control::Stop {
                            return (Outcome::Stopped, t);
                        }
                        if self.cp.objective(x) < UNBOUNDED_LEVEL {
                            return (Outcome::Unbounded, t);
                        }
                        if lam2 * 0.5 <= 1e-9 {
                            centered = true;
                            break;
                        }
                    }
                }
            }
            if !centered {
                // Too far from the central path for this weight: an aggressive
                // starting weight can make centering take thousands of damped
                // steps, so retreat along the path instead of giving up.
                if backoffs < MAX_BACKOFFS {
                    backoffs += 1;
                    t /= self.solver.mu;
                    continue;
                }
                return (Outcome::Stalled, t);
            }
            if monitor(x, Some(self.cp.nu / t)) == Control::Stop {
                return (Outcome::Stopped, t);
            }
            if self.cp.nu / t <= gap_target(self.cp.objective(x)) {
                return (Outcome::Converged, t);
            }
            t *= self.solver.mu;
        }
    }
}

fn relax_dir(tag: ConeTag, dim: usize) -> Vec<f64> {
    match tag {
        ConeTag::Nonneg => vec![1.0; dim],
        ConeTag::Soc => cones::relax_direction(Cone::Soc, dim),
        ConeTag::Exp => cones::relax_direction(Cone::Exp, 3),
        ConeTag::Zero => vec![0.0; dim],
    }
}

/// Shift along the relax direction needed to make the block interior.
fn block_shift(tag: ConeTag, z: &[f64]) -> f64 {
    match tag {
        ConeTag::Nonneg => z.iter().map(|v| -v).fold(f64::NEG_INFINITY, f64::max),
        ConeTag::Soc => cones::required_shift(Cone::Soc, z),
        ConeTag::Exp => cones::required_shift(Cone::Exp, z),
        ConeTag::Zero => f64::NEG_INFINITY,
    }
}

fn project_equalities(p: &ConicProgram, x: &mut [f64]) {
    let rows: Vec<&AffineExpr> = p
        .blocks
        .iter()
        .filter(|b| b.cone == ConeTag::Zero)
        .flat_map(|b| b.rows.iter())
        .collect();
    if rows.is_empty() {
        return;
    }
    let n = p.num_vars;
    let mut e = DMatrix::<f64>::zeros(rows.len(), n);
    let mut r = DVector::<f64>::zeros(rows.len());
    for (i, row) in rows.iter().enumerate() {
        for &(c, v) in &row.terms {
            e[(i, c)] += v;
        }
        r[i] = row.eval(x);
    }
    if let Ok(pinv) = e.clone().pseudo_inverse(1e-12) {
        let dx = pinv * r;
        for i in 0..n {
            x[i] -= dx[i];
        }
    }
}

impl BarrierSolver {
    fn solve_valid(&self, p: &ConicProgram, tol: f64, start: Option<&[f64]>) -> Solution {
        let n = p.num_vars;
        let mut x: Vec<f64> = match start {
            Some(s) if s.len() == n && s.iter().all(|v| v.is_finite()) => s.to_vec(),
            _ => vec![0.0; n],
        };
        let cp = match Compiled::new(p, tol) {
            Ok(cp) => cp,
            Err(()) => return Solution::with_status(SolveStatus::Infeasible, x, p),
        };
        project_equalities(p, &mut x);
        if cp.max_residual(&x) > tol && !cp.eqs.is_empty() {
            let eq_only: f64 = cp
                .eqs
                .iter()
                .map(|eq| (eq.b + eq.terms.iter().map(|&(c, a)| a * x[c]).sum::<f64>()).abs())
                .fold(0.0, f64::max);
            if eq_only > tol.sqrt() {
                return Solution::with_status(SolveStatus::Infeasible, x, p);
            }
        }
        let mut steps = 0;
        let anchor = x.clone();

        // Phase I: relax blocks that are not comfortably interior.
        let mut relaxed = Vec::new();
        let mut shift_max = f64::NEG_INFINITY;
        for (bi, b) in p.blocks.iter().enumerate() {
            if b.cone == ConeTag::Zero {
                continue;
            }
            let z: Vec<f64> = b.rows.iter().map(|r| r.eval(&x)).collect();
            let scale = 1.0 + z.iter().fold(0.0f64, |m, v| m.max(v.abs()));
            let s = block_shift(b.cone, &z);
            if s > -1e-6 * scale {
                relaxed.push(bi);
                shift_max = shift_max.max(s);
            }
        }
        if !relaxed.is_empty() {
            let sigma0 = shift_max + 0.1 * (1.0 + shift_max.abs());
            let floor = sigma0.max(1.0);
            let mut p1 = ConicProgram::new(n + 1);
            p1.objective[n] = 1.0;
            let mut is_relaxed = vec![false; p.blocks.len()];
            for &bi in &relaxed {
                is_relaxed[bi] = true;
            }
            for (bi, b) in p.blocks.iter().enumerate() {
                let mut rows = b.rows.clone();
                if is_relaxed[bi] {
                    for (row, e) in rows.iter_mut().zip(relax_dir(b.cone, b.dim())) {
                        row.add_term(n, e);
                    }
                }
                p1.add(b.cone, b.label, rows);
            }
            let mut bound = AffineExpr::var(n);
            bound.add_constant(floor);
            p1.add_nonneg("phase1_bound", bound);
            // The relaxed problem only minimizes the shift, so directions that
            // every constraint tolerates would otherwise run off to infinity.
            let radius = 1e3 * (1.0 + x.iter().map(|v| v * v).sum::<f64>().sqrt());
            let mut ball = vec![AffineExpr::constant(radius)];
            for (i, &xi) in x.iter().enumerate() {
                let mut r = AffineExpr::var(i);
                r.add_constant(-xi);
                ball.push(r);
            }
            p1.add(ConeTag::Soc, "phase1_ball", ball);
            let cp1 = match Compiled::new(&p1, tol) {
                Ok(c) => c,
                Err(()) => return Solution::with_status(SolveStatus::Infeasible, x, p),
            };
            let mut x1 = x.clone();
            x1.push(sigma0);
            let mut runner = Runner {
                solver: self,
                cp: &cp1,
                newton_steps: 0,
            };
            let t0 = cp1.nu / (sigma0 + floor);
            let mut infeasible = false;
            let (outcome, t_end) = runner.run(
                &mut x1,
                t0,
                |_| tol * 1e-3,
                |xx, gap| {
                    let sigma = xx[n];
                    match gap {
                        _ if sigma < 0.0 => Control::Stop,
                        Some(g) if sigma - g > tol => {
                            infeasible = true;
                            Control::Stop
                        }
                        _ => Control::Continue,
                    }
                },
            );
            steps += runner.newton_steps;
            let sigma = x1[n];
            x.copy_from_slice(&x1[..n]);
            if infeasible {
                return Solution::with_status(SolveStatus::Infeasible, x, p).steps(steps);
            }
            if sigma >= 0.0 {
                let status = match outcome {
                    Outcome::Converged if sigma > tol => SolveStatus::Infeasible,
                    Outcome::Converged if sigma - cp1.nu / t_end > 0.0 => SolveStatus::Infeasible,
                    _ => SolveStatus::NumericalFailure,
                };
                return Solution::with_status(status, x, p).steps(steps);
            }
            // Phase I only cares about the shift, so its end point may have
            // wandered far from the start; pull it back towards the start
            // while staying interior.
            let mut z = vec![0.0; cp.zlen];
            let mut theta = 1.0 / 64.0;
            while theta < 1.0 {
                let trial: Vec<f64> = anchor.iter().zip(&x).map(|(a, b)| a + theta * (b - a)).collect();
                cp.slacks(&trial, &mut z, true);
                if cp.barrier(&z).is_some() {
                    x = trial;
                    break;
                }
                theta *= 2.0;
            }
        }

        if cp.c.iter().all(|&c| c == 0.0) {
            return Solution::finish(SolveStatus::Optimal, x, p, &cp).steps(steps);
        }

        // Phase II
        let mut runner = Runner {
            solver: self,
            cp: &cp,
            newton_steps: 0,
        };
        let t0 = runner
            .central_weight(&x)
            .unwrap_or_else(|| cp.nu / cp.objective(&x).abs().max(1e-6));
        let target = |obj: f64| tol * obj.abs().max(tol);
        let (outcome, t_end) = runner.run(&mut x, t0, target, |_, _| Control::Continue);
        steps += runner.newton_steps;
        let gap = cp.nu / t_end;
        let status = match outcome {
            Outcome::Converged => SolveStatus::Optimal,
            Outcome::Unbounded => SolveStatus::Unbounded,
            Outcome::Stalled | Outcome::Limit | Outcome::Stopped => {
                // accept a slightly looser gap when progress stalls near the end
                if gap <= 1e3 * target(cp.objective(&x)) {
                    SolveStatus::Optimal
                } else {
                    SolveStatus::NumericalFailure
                }
            }
        };
        Solution::finish(status, x, p, &cp).steps(steps)
    }
}

impl Solution {
    fn with_status(status: SolveStatus, x: Vec<f64>, p: &ConicProgram) -> Solution {
        let objective = p.objective_value(&x);
        Solution {
            status,
            max_residual: residual_of(p, &x),
            x,
            objective,
            newton_steps: 0,
        }
    }

    fn finish(status: SolveStatus, x: Vec<f64>, p: &ConicProgram, cp: &Compiled) -> Solution {
        let objective = p.objective_value(&x);
        let max_residual = cp.max_residual(&x).max(residual_of(p, &x));
        let status = if !x.iter().all(|v| v.is_finite()) {
            SolveStatus::NumericalFailure
        } else {
            status
        };
        Solution {
            status,
            x,
            objective,
            max_residual,
            newton_steps: 0,
        }
    }

    fn steps(mut self, steps: usize) -> Solution {
        self.newton_steps = steps;
        self
    }
}

/// Largest cone violation of `x` over every block of `p`.
pub fn residual_of(p: &ConicProgram, x: &[f64]) -> f64 {
    let mut worst: f64 = 0.0;
    for b in &p.blocks {
        let z: Vec<f64> = b.rows.iter().map(|r| r.eval(x)).collect();
        let v = match b.cone {
            ConeTag::Zero => z.iter().fold(0.0f64, |m, v| m.max(v.abs())),
            ConeTag::Nonneg => z.iter().fold(0.0f64, |m, v| m.max(-v)),
            ConeTag::Soc => cones::violation(Cone::Soc, &z),
            ConeTag::Exp => cones::violation(Cone::Exp, &z),
        };
        worst = worst.max(v);
    }
    worst
}

/// Like [`residual_of`], with each block's violation divided by
/// `1 + max |b_i|` over its constants.
pub fn scaled_residual_of(p: &ConicProgram, x: &[f64]) -> f64 {
    let mut worst: f64 = 0.0;
    for b in &p.blocks {
        let z: Vec<f64> = b.rows.iter().map(|r| r.eval(x)).collect();
        let v = match b.cone {
            ConeTag::Zero => z.iter().fold(0.0f64, |m, v| m.max(v.abs())),
            ConeTag::Nonneg => z.iter().fold(0.0f64, |m, v| m.max(-v)),
            ConeTag::Soc => cones::violation(Cone::Soc, &z),
            ConeTag::Exp => cones::violation(Cone::Exp, &z),
        };
        let scale = 1.0 + b.rows.iter().fold(0.0f64, |m, r| m.max(r.constant.abs()));
        worst = worst.max(v / scale);
    }
    worst
}

impl ConicSolver for BarrierSolver {
    fn solve(&self, program: &ConicProgram, tol: f64, start: Option<&[f64]>) -> Result<Solution> {
        validate(program).map_err(Error::InvalidProgram)?;
        if !(tol > 0.0 && tol < 1.0) {
            return Err(Error::Domain(format!("solver tolerance must lie in (0, 1), got {tol}")));
        }
        Ok(self.solve_valid(program, tol, start))
    }
}

#[doc(hidden)]
pub fn kkt_stats(p: &ConicProgram) -> Option<(usize, usize, usize)> {
    let cp = Compiled::new(p, 1e-9).ok()?;
    Some((cp.kkt.dim(), cp.kkt.nnz(), cp.kkt.factor_nnz()))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn solve(p: &ConicProgram) -> Solution {
        BarrierSolver::default().solve(p, 1e-8, None).unwrap()
    }

    #[test]
    fn lp_with_box() {
        // min -x - y s.t. x + 2y <= 4, 3x + y <= 6, x, y >= 0 -> (1.6, 1.2)
        let mut p = ConicProgram::new(2);
        p.objective = vec![-1.0, -1.0];
        let mut r1 = AffineExpr::constant(4.0);
        r1.add_term(0, -1.0).add_term(1, -2.0);
        let mut r2 = AffineExpr::constant(6.0);
        r2.add_term(0, -3.0).add_term(1, -1.0);
        p.add(ConeTag::Nonneg, "rows", vec![r1, r2, AffineExpr::var(0), AffineExpr::var(1)]);
        let s = solve(&p);
        assert_eq!(s.status, SolveStatus::Optimal);
        assert!((s.x[0] - 1.6).abs() < 1e-6 && (s.x[1] - 1.2).abs() < 1e-6, "{:?}", s.x);
    }

    #[test]
    fn equality_constrained() {
        // min x + y s.t. x - y = 1, (x, 1) in SOC, y >= -5
        let mut p = ConicProgram::new(2);
        p.objective = vec![1.0, 1.0];
        let mut e = AffineExpr::var(0);
        e.add_term(1, -1.0).add_constant(-1.0);
        p.add(ConeTag::Zero, "eq", vec![e]);
        p.add(ConeTag::Soc, "abs", vec![AffineExpr::var(0), AffineExpr::constant(1.0)]);
        let mut lb = AffineExpr::var(1);
        lb.add_constant(5.0);
        p.add_nonneg("lb", lb);
        let s = solve(&p);
        assert_eq!(s.status, SolveStatus::Optimal);
        assert!((s.x[0] - 1.0).abs() < 1e-6 && s.x[1].abs() < 1e-6, "{:?}", s.x);
    }

    #[test]
    fn unbounded_lp() {
        let mut p = ConicProgram::new(1);
        p.objective = vec![-1.0];
        p.add_nonneg("x", AffineExpr::var(0));
        assert_eq!(solve(&p).status, SolveStatus::Unbounded);
    }

    #[test]
    fn wide_rows_use_low_rank_nodes() {
        // min sum x s.t. sum x >= 10, x >= 0 with 20 variables
        let n = 20;
        let mut p = ConicProgram::new(n);
        p.objective = vec![1.0; n];
        let mut row = AffineExpr::constant(-10.0);
        for i in 0..n {
            row.add_term(i, 1.0);
            p.add_nonneg("x", AffineExpr::var(i));
        }
        p.add_nonneg("sum", row);
        let s = solve(&p);
        assert_eq!(s.status, SolveStatus::Optimal);
        assert!((s.objective - 10.0).abs() < 1e-6);
        let (dim, _, _) = kkt_stats(&p).unwrap();
        assert_eq!(dim, n + 1);
    }

    #[test]
    fn invalid_program_is_an_error() {
        let mut p = ConicProgram::new(1);
        p.add(ConeTag::Exp, "e", vec![AffineExpr::var(0)]);
        assert!(matches!(
            BarrierSolver::default().solve(&p, 1e-8, None),
            Err(Error::InvalidProgram(_))
        ));
    }
}
