//! Sparsity-driven joint scheduling: horizon search on the uniform-rate
//! initializer, then successive convex approximation of the min-max
//! structural sparsity problem at that horizon.

mod subproblem;
mod feasibility;

use std::io::Write;
use std::path::Path;

pub use subproblem::{
    b_value, build_subproblem, linearize_b, normalized_gamma, LinearizationTerms, SubproblemLayout, SubproblemState,
};
pub use feasibility::{build_feasibility, build_least_power, precoders_from_feasibility, sinr_target, Dims};

use crate::conic::{self, SolveStatus as ConicStatus};
use crate::metrics::{
    completion_times, delivered_bits, experience_rates, recover_allocation, threshold_precoders,
};
use crate::model::{
    validate_config, Allocation, ChannelTensor, IterationTrace, PrecoderTensor, SolveStatus, SolveSummary,
    SystemConfig,
};
use crate::{Error, Result};

/// Smallest horizon `T <= min(T_max, slots(H))` whose initializer is
/// solvable, with precoders in physical units.
///
/// The initializer is a pure feasibility problem, so any feasible point
/// solves it; the one returned is its least-power point, which does not
/// depend on the backend.
pub fn find_min_horizon(h: &ChannelTensor, cfg: &SystemConfig) -> Result<(usize, PrecoderTensor)> {
    validate_config(cfg).map_err(Error::Config)?;
    let cap = cfg.horizon_cap.min(h.slots());
    if cfg.power_budget > 0.0 {
        for t in 1..=cap {
            let prog = build_feasibility(h, cfg, t)?;
            let sol = conic::solve(&prog, cfg.solver_tol)?;
            if sol.status != ConicStatus::Optimal {
                continue;
            }
            let least = conic::solve(&build_least_power(h, cfg, t)?, cfg.solver_tol)?;
            let x = if least.status == ConicStatus::Optimal { &least.x } else { &sol.x };
            return Ok((t, precoders_from_feasibility(x, cfg, t)));
        }
    }
    Err(Error::HorizonExhausted { cap: cfg.horizon_cap })
}

/// Thresholded precoders, allocation and completion slots. Fails when
/// zeroing sub-threshold blocks moves any user's delivered bits by
/// `10 * solver_tol` (relative) or more.
pub fn threshold_allocation(
    h: &ChannelTensor,
    w: &PrecoderTensor,
    cfg: &SystemConfig,
) -> Result<(PrecoderTensor, Allocation, Vec<usize>)> {
    let zero = cfg.zero_amplitude();
    let clean = threshold_precoders(w, zero);
    for k in 0..w.users() {
        let before = delivered_bits(h, w, cfg, k);
        let after = delivered_bits(h, &clean, cfg, k);
        let rel = (after - before).abs() / before.abs().max(f64::MIN_POSITIVE);
        if before > 0.0 && rel >= 10.0 * cfg.solver_tol {
            return Err(Error::DegradedDelivery {
                user: k,
                relative_change: rel,
            });
        }
    }
    let alloc = recover_allocation(&clean, zero);
    let tk = completion_times(&clean, zero);
    Ok((clean, alloc, tk))
}

/// Runs the full algorithm.
pub fn run_fdrp(h: &ChannelTensor, cfg: &SystemConfig) -> Result<SolveSummary> {
    run_fdrp_traced(h, cfg, None)
}

/// [`run_fdrp`] that also writes one JSON record per iteration to `trace`.
pub fn run_fdrp_traced(h: &ChannelTensor, cfg: &SystemConfig, trace: Option<&Path>) -> Result<SolveSummary> {
    let (horizon, w0) = find_min_horizon(h, cfg)?;
    let mut state = SubproblemState::from_precoders(h, w0, cfg, 0);
    let mut records = vec![IterationTrace {
        iteration: 0,
        gamma: state.gamma,
        per_slot_power: state.precoders.per_slot_power(),
        max_residual: 0.0,
    }];
    let mut status = SolveStatus::MaxIters;
    for it in 1..=cfg.max_sca_iters {
        let (prog, lay) = build_subproblem(h, cfg, horizon, &state)?;
        let start = lay.lift_state(&state, h, cfg);
        let sol = conic::solve_from(&prog, cfg.solver_tol, &start)?;
        if sol.status != ConicStatus::Optimal {
            break;
        }
        let w = lay.precoders(&sol.x, cfg);
        let next = SubproblemState::from_precoders(h, w, cfg, it);
        if next.gamma > state.gamma {
            // No descent at solver accuracy: the previous iterate stands.
            status = SolveStatus::Converged;
            break;
        }
        let change = state.gamma - next.gamma;
        records.push(IterationTrace {
            iteration: it,
            gamma: next.gamma,
            per_slot_power: next.precoders.per_slot_power(),
            max_residual: sol.max_residual,
        });
        state = next;
        if change <= cfg.conv_tol * state.gamma.abs().max(1.0) {
            status = SolveStatus::Converged;
            break;
        }
    }
    if let Some(path) = trace {
        write_trace(&records, path)?;
    }
    let (precoders, allocation, completion) = threshold_allocation(h, &state.precoders, cfg)?;
    let rates = experience_rates(&cfg.payloads, &completion, cfg.slot_len_s)?;
    Ok(SolveSummary {
        gamma_trace: records.iter().map(|r| r.gamma).collect(),
        per_slot_power: precoders.per_slot_power(),
        precoders,
        allocation,
        completion_times: completion,
        experience_rates: rates,
        horizon,
        iterations: records.len() - 1,
        status,
        trace: records,
    })
}

/// One JSON object per line.
pub fn write_trace(records: &[IterationTrace], path: &Path) -> Result<()> {
    let mut f = std::io::BufWriter::new(std::fs::File::create(path).map_err(|e| Error::io(path, e))?);
    for r in records {
        let line = serde_json::to_string(r).expect("trace record serializes");
        writeln!(f, "{line}").map_err(|e| Error::io(path, e))?;
    }
    f.flush().map_err(|e| Error::io(path, e))
}
