//! The embedded barrier backend and the Clarabel adapter agree on small
//! programs.

use fdrp::channel::{generate_channels, ChannelSpec};
use fdrp::conic::{
    scaled_residual_of, AffineExpr, BarrierSolver, ClarabelSolver, ConeTag, ConicProgram, ConicSolver, SolveStatus,
};
use fdrp::fdrp::build_least_power;
use fdrp::model::SystemConfig;

fn both(p: &ConicProgram, tol: f64) -> [fdrp::conic::Solution; 2] {
    [
        BarrierSolver::default().solve(p, tol, None).unwrap(),
        ClarabelSolver::default().solve(p, tol, None).unwrap(),
    ]
}

#[test]
fn exp_cone_entropy_like_program() {
    // max x + y  s.t.  x <= ln(1 + 3u), y <= ln(1 + v), u + v <= 1, u, v >= 0
    let mut p = ConicProgram::new(4);
    p.objective = vec![0.0, 0.0, -1.0, -1.0];
    let mut w = AffineExpr::term(0, 3.0);
    w.add_constant(1.0);
    p.add(ConeTag::Exp, "r0", vec![AffineExpr::var(2), AffineExpr::constant(1.0), w]);
    let mut w = AffineExpr::var(1);
    w.add_constant(1.0);
    p.add(ConeTag::Exp, "r1", vec![AffineExpr::var(3), AffineExpr::constant(1.0), w]);
    p.add_nonneg("u", AffineExpr::var(0));
    p.add_nonneg("v", AffineExpr::var(1));
    let mut budget = AffineExpr::constant(1.0);
    budget.add_term(0, -1.0).add_term(1, -1.0);
    p.add_nonneg("budget", budget);
    // water level: 1/3 + u = 1 + v, u + v = 1  ->  u = 5/6
    let want = -((1.0f64 + 2.5).ln() + (1.0f64 + 1.0 / 6.0).ln());
    for (i, s) in both(&p, 1e-8).into_iter().enumerate() {
        assert_eq!(s.status, SolveStatus::Optimal, "backend {i}: {s:?}");
        assert!((s.objective - want).abs() < 1e-6, "{} vs {want}", s.objective);
    }
}

#[test]
fn least_power_initializer_matches() {
    let mut cfg = SystemConfig::default_scenario().with_users(2).with_uniform_payload(60.0);
    cfg.num_subcarriers = 2;
    cfg.num_tx_antennas = 2;
    let h = generate_channels(&ChannelSpec::new(3), &cfg, 1).unwrap();
    let p = build_least_power(&h, &cfg, 1).unwrap();
    let [a, b] = both(&p, 1e-7);
    assert_eq!(a.status, SolveStatus::Optimal);
    assert_eq!(b.status, SolveStatus::Optimal);
    assert!(scaled_residual_of(&p, &a.x) <= 1e-7);
    assert!(scaled_residual_of(&p, &b.x) <= 1e-7);
    assert!((a.objective - b.objective).abs() <= 1e-4 * b.objective.abs().max(1.0));
}

#[test]
fn both_detect_infeasibility() {
    let mut p = ConicProgram::new(2);
    p.add(ConeTag::Soc, "ball", vec![AffineExpr::constant(1.0), AffineExpr::var(0), AffineExpr::var(1)]);
    let mut r = AffineExpr::var(0);
    r.add_constant(-2.0);
    p.add_nonneg("far", r);
    for s in both(&p, 1e-8) {
        assert_eq!(s.status, SolveStatus::Infeasible);
    }
}
