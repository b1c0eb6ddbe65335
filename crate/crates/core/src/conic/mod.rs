//! Conic program representation, a Clarabel adapter (the default backend)
//! and an embedded primal barrier backend.

mod clarabel_backend;
mod cones;
mod ipm;
mod kkt;
pub mod lift;
pub mod program;

use serde::{Deserialize, Serialize};

pub use clarabel_backend::ClarabelSolver;
pub use ipm::{kkt_stats, residual_of, scaled_residual_of, BarrierSolver};
pub use lift::{inner_product_forms, real_inner_form, ComplexLayout};
pub use program::{validate, AffineExpr, ConeBlock, ConeTag, ConicProgram};

use crate::Result;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SolveStatus {
    Optimal,
    Infeasible,
    Unbounded,
    NumericalFailure,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Solution {
    pub status: SolveStatus,
    pub x: Vec<f64>,
    pub objective: f64,
    /// Largest cone violation of `x`, per block relative to `1 + max |b|`.
    pub max_residual: f64,
    pub newton_steps: usize,
}

/// Backend interface. Implementations must report `Optimal` only for points
/// whose scaled cone violation ([`scaled_residual_of`]) stays within `tol`.
pub trait ConicSolver {
    fn solve(&self, program: &ConicProgram, tol: f64, start: Option<&[f64]>) -> Result<Solution>;
}

/// Solves with the default backend from the origin.
pub fn solve(program: &ConicProgram, tol: f64) -> Result<Solution> {
    ClarabelSolver::default().solve(program, tol, None)
}

/// Solves with the default backend from a warm start.
/// Backends without warm-start support ignore `start`.
pub fn solve_from(program: &ConicProgram, tol: f64, start: &[f64]) -> Result<Solution> {
    ClarabelSolver::default().solve(program, tol, Some(start))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SelfTestCase {
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
}

/// Known-answer checks for the backend: an SOC, an exponential cone, an
/// infeasible pair of rows and a two-user beamforming feasibility problem.
pub fn self_test(tol: f64) -> Vec<SelfTestCase> {
    let mut out = Vec::new();
    let check = |name: &'static str, r: Result<Solution>, ok: &dyn Fn(&Solution) -> bool| match r {
        Ok(s) => SelfTestCase {
            name,
            passed: ok(&s),
            detail: format!("status={:?} objective={:.9} residual={:.2e}", s.status, s.objective, s.max_residual),
        },
        Err(e) => SelfTestCase {
            name,
            passed: false,
            detail: e.to_string(),
        },
    };

    // min x s.t. (x, 1, 1) in SOC
    let mut p = ConicProgram::new(1);
    p.objective[0] = 1.0;
    p.add(
        ConeTag::Soc,
        "soc",
        vec![AffineExpr::var(0), AffineExpr::constant(1.0), AffineExpr::constant(1.0)],
    );
    let tol_obj = 1e3 * tol;
    out.push(check("soc_norm", solve(&p, tol), &|s| {
        s.status == SolveStatus::Optimal && (s.objective - 2f64.sqrt()).abs() <= tol_obj
    }));

    // max t s.t. (t, 1, e) in K_exp
    let mut p = ConicProgram::new(1);
    p.objective[0] = -1.0;
    p.add(
        ConeTag::Exp,
        "exp",
        vec![
            AffineExpr::var(0),
            AffineExpr::constant(1.0),
            AffineExpr::constant(std::f64::consts::E),
        ],
    );
    out.push(check("exp_log", solve(&p, tol), &|s| {
        s.status == SolveStatus::Optimal && (s.x[0] - 1.0).abs() <= tol_obj
    }));

    // x >= 1 and -x >= 0
    let mut p = ConicProgram::new(1);
    let mut r = AffineExpr::var(0);
    r.add_constant(-1.0);
    p.add_nonneg("lb", r);
    p.add_nonneg("ub", AffineExpr::term(0, -1.0));
    out.push(check("infeasible_rows", solve(&p, tol), &|s| s.status == SolveStatus::Infeasible));

    out.push(check("two_user_sinr", two_user_sinr(tol), &|s| {
        s.status == SolveStatus::Optimal && s.max_residual <= tol
    }));
    out
}

/// Minimum-power beamforming for two users on orthogonal real channels with
/// SINR target 1 and unit noise: optimum total power 2.
fn two_user_sinr(tol: f64) -> Result<Solution> {
    use num_complex::Complex64;
    let layout = ComplexLayout::new(0, 4);
    let var = |user: usize| move |a: usize| 2 * user + a;
    let h = [
        vec![Complex64::new(1.0, 0.0), Complex64::new(0.0, 0.0)],
        vec![Complex64::new(0.0, 0.0), Complex64::new(1.0, 0.0)],
    ];
    // variables: 8 reals for w, then power epigraph p at index 8
    let mut prog = ConicProgram::new(9);
    prog.objective[8] = 1.0;
    for k in 0..2 {
        let (re, _) = inner_product_forms(&h[k], &layout, var(k));
        let (ire, iim) = inner_product_forms(&h[k], &layout, var(1 - k));
        prog.add(ConeTag::Soc, "sinr", vec![re, AffineExpr::constant(1.0), ire, iim]);
    }
    // ||w||^2 <= p  via  ||(2w, p - 1)|| <= p + 1
    let mut rows = vec![];
    let mut top = AffineExpr::var(8);
    top.add_constant(1.0);
    rows.push(top);
    for i in 0..8 {
        rows.push(AffineExpr::term(i, 2.0));
    }
    let mut bottom = AffineExpr::var(8);
    bottom.add_constant(-1.0);
    rows.push(bottom);
    prog.add(ConeTag::Soc, "power", rows);
    let s = solve(&prog, tol)?;
    if (s.objective - 2.0).abs() > 1e3 * tol {
        return Ok(Solution {
            status: SolveStatus::NumericalFailure,
            ..s
        });
    }
    Ok(s)
}
