//! Unlimited edge cloud.
//!
//! Without a capacity limit the cloud finishes instantly, shares only need
//! `Σ τ ≤ T`, and the problem in offloads, airtimes, received energies
//! `q = p τ` and `T` is convex (the rate constraint is the perspective of a
//! concave function). It is solved in one conic step. The optimum uses the
//! whole slot for transmission, `Σ τ = T`: any idle time could be given to
//! a transmitting group to lower its power.

use std::time::Instant;

use super::conic::{self, Coupling};
use super::{complete, evaluate_objective, initial_feasible, Allocation, Shares, SolveReport, Termination};
use crate::error::{Error, Result};
use crate::noma_phy;
use crate::scenario::Scenario;

/// Solve with an unlimited cloud. Rejects `ω = 0`, whose infimum is only
/// approached as `T` grows without bound.
pub fn solve_infinite_capacity(scenario: &Scenario) -> Result<SolveReport> {
    scenario.validate()?;
    if !scenario.cloud_capacity.is_infinite() {
        return Err(Error::Unsupported(
            "the unlimited-cloud solver needs cloud_capacity_F = \"infinite\"".into(),
        ));
    }
    if scenario.fixed_shares().is_some() {
        return Err(Error::Unsupported("the unlimited-cloud solver needs time-shared groups".into()));
    }
    let Some(t_limit) = conic::completion_time_bound(scenario) else {
        return Err(Error::field(
            "omega",
            "must be positive with an unlimited cloud: energy keeps falling as the completion time grows",
        ));
    };
    let started = Instant::now();
    let start = initial_feasible(scenario);
    let start_value = evaluate_objective(scenario, &start).weighted;
    let step = conic::joint_step(scenario, &Coupling::Unlimited, t_limit)
        .ok_or_else(|| Error::infeasible("conic solve failed", f64::NAN))?;
    let completed = complete(scenario, &Shares::Free, step.d, &step.tau)
        .ok_or_else(|| Error::infeasible("conic solution could not be repaired", f64::NAN))?;
    let alloc = fill_slot(scenario, completed);
    let mut best = alloc;
    if evaluate_objective(scenario, &best).weighted > start_value {
        best = fill_slot(scenario, start);
    }
    let value = evaluate_objective(scenario, &best).weighted;
    Ok(SolveReport::finish(
        scenario,
        best,
        vec![start_value, value],
        1,
        Termination::Converged,
        started,
    ))
}

/// Stretch airtimes so that `Σ τ = T`, re-derive powers, and set
/// `x = τ / T` (every group transmits for the whole slot).
fn fill_slot(scenario: &Scenario, alloc: Allocation) -> Allocation {
    let t_done = alloc.completion_time;
    let n = scenario.group_count();
    let link = scenario.link();
    let used: f64 = alloc.tau.iter().sum();
    let tau: Vec<f64> = if used > 0.0 {
        alloc.tau.iter().map(|t| t * t_done / used).collect()
    } else {
        vec![t_done / n as f64; n]
    };
    let mut p = Vec::with_capacity(n);
    for (i, dg) in alloc.d.iter().enumerate() {
        let pg = noma_phy::min_powers_with_caps(dg, tau[i], &scenario.gains(i), &scenario.power_caps(i), link)
            // stretching only lowers the required powers
            .unwrap_or_else(|| alloc.p[i].clone());
        p.push(pg);
    }
    let x: Vec<f64> = tau.iter().map(|t| t / t_done).collect();
    let f = alloc
        .d
        .iter()
        .map(|dg| dg.iter().map(|&v| if v > 0.0 { f64::INFINITY } else { 0.0 }).collect())
        .collect();
    Allocation::new(alloc.d, x, tau, f, p, t_done)
}
