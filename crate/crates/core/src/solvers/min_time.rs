//! Completion-time minimisation.
//!
//! For a target `T` the least demanding choice is to offload exactly
//! `D_ij(T)`. A target is reachable iff the groups fit their minimal
//! airtimes into the slot and the cloud can finish the offloaded cycles in
//! the remaining time. Reachability is monotone in `T`, so the smallest
//! reachable `T` is found by bisection.

use std::time::Instant;

use log::debug;
use serde::{Deserialize, Serialize};

use super::{windows, Allocation, Shares, SolveReport, Termination};
use crate::error::{Error, Result};
use crate::noma_phy;
use crate::scenario::{CloudCapacity, Scenario};
use crate::time_alloc;

/// Default relative width at which bisection stops.
pub const DEFAULT_EPSILON: f64 = 1e-4;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeasibilityCheck {
    pub feasible: bool,
    /// Minimal airtime per group to carry the least offloads (s).
    pub t_bar: Vec<f64>,
    /// Least offloads per user (bits).
    pub d: Vec<Vec<f64>>,
}

/// Whether completion time `T` is reachable.
///
/// With free shares the conditions are `Σ T̄_i ≤ T` and
/// `(Σ_i sqrt(T̄_i Σ_j C D))² / (T (T − Σ T̄)) + Σ C D / T ≤ F`; the second
/// is skipped when nothing must be offloaded. With imposed shares `x̄` each
/// window `T̄_i/x̄_i` must fit and `Σ_i Σ_j C D / (T − T̄_i/x̄_i) ≤ F`.
pub fn check_feasibility_conditions(scenario: &Scenario, deadline: f64) -> FeasibilityCheck {
    check_with(scenario, &Shares::for_scenario(scenario, false), deadline)
}

pub(crate) fn check_with(scenario: &Scenario, shares: &Shares, deadline: f64) -> FeasibilityCheck {
    let d = scenario.min_offloads(deadline);
    let link = scenario.link();
    let t_bar: Vec<f64> = (0..scenario.group_count())
        .map(|i| noma_phy::group_min_airtime(&d[i], &scenario.power_caps(i), &scenario.gains(i), link))
        .collect();
    let feasible = deadline > 0.0 && reachable(scenario, shares, deadline, &t_bar, &d);
    FeasibilityCheck { feasible, t_bar, d }
}

fn reachable(scenario: &Scenario, shares: &Shares, deadline: f64, t_bar: &[f64], d: &[Vec<f64>]) -> bool {
    if t_bar.iter().any(|t| !t.is_finite()) {
        return false;
    }
    let cycles = time_alloc::group_cycles(scenario, d);
    let total: f64 = cycles.iter().sum();
    match shares {
        Shares::Free => {
            let airtime: f64 = t_bar.iter().sum();
            if airtime > deadline {
                return false;
            }
            if total <= 0.0 {
                return true;
            }
            let cap = match scenario.cloud_capacity {
                CloudCapacity::Infinite => return true,
                CloudCapacity::Finite(f) => f,
            };
            let k: f64 = cycles.iter().zip(t_bar).map(|(c, t)| (c * t).sqrt()).sum();
            let slack = deadline - airtime;
            if slack <= 0.0 {
                return k <= 0.0 && total / deadline <= cap;
            }
            k * k / (deadline * slack) + total / deadline <= cap
        }
        Shares::Fixed(x) => {
            let w = windows(t_bar, x);
            let mut load = 0.0;
            for (&c, &wi) in cycles.iter().zip(&w) {
                if wi > deadline {
                    return false;
                }
                if c > 0.0 {
                    if wi >= deadline {
                        return false;
                    }
                    load += c / (deadline - wi);
                }
            }
            match scenario.cloud_capacity {
                CloudCapacity::Infinite => true,
                CloudCapacity::Finite(f) => load <= f,
            }
        }
    }
}

/// Allocation reaching `T` from the outputs of the feasibility check.
///
/// Shares `x_i = (T̄_i + sqrt(T̄_i Σ_j C D / α)) / T` with
/// `sqrt(α) = Σ_i sqrt(T̄_i Σ_j C D) / (T − Σ T̄)` (uniform when nothing is
/// offloaded), cloud speeds `C D x / (T x − T̄)`, airtime `τ = T̄` and the
/// least-energy powers within the caps.
pub fn recover_feasible_point(scenario: &Scenario, deadline: f64, t_bar: &[f64], d: &[Vec<f64>]) -> Result<Allocation> {
    recover_with(scenario, &Shares::for_scenario(scenario, false), deadline, t_bar, d)
}

pub(crate) fn recover_with(
    scenario: &Scenario,
    shares: &Shares,
    deadline: f64,
    t_bar: &[f64],
    d: &[Vec<f64>],
) -> Result<Allocation> {
    if !reachable(scenario, shares, deadline, t_bar, d) {
        return Err(Error::infeasible(format!("completion time {deadline:.6e} s is not reachable"), f64::INFINITY));
    }
    let link = scenario.link();
    let cycles = time_alloc::group_cycles(scenario, d);
    let x = match shares {
        Shares::Free => {
            if cycles.iter().sum::<f64>() <= 0.0 {
                vec![1.0 / scenario.group_count() as f64; scenario.group_count()]
            } else {
                time_alloc::optimal_shares(&cycles, t_bar, deadline)
            }
        }
        Shares::Fixed(x) => x.clone(),
    };
    let mut p = Vec::with_capacity(scenario.group_count());
    for (i, dg) in d.iter().enumerate() {
        let pg = noma_phy::min_powers_with_caps(dg, t_bar[i], &scenario.gains(i), &scenario.power_caps(i), link)
            .ok_or_else(|| Error::infeasible(format!("group {i} cannot meet its rates within the caps"), f64::INFINITY))?;
        p.push(pg);
    }
    let w = windows(t_bar, &x);
    let f = time_alloc::cloud_speeds(scenario, d, &w, deadline);
    Ok(Allocation::new(d.to_vec(), x, t_bar.to_vec(), f, p, deadline))
}

/// Smallest completion time, by bisection on `(0, max C R / F_ij]`.
///
/// The upper end is always reachable (nothing offloaded). On an unreachable
/// midpoint the lower end moves up; the loop stops when
/// `(T_max − T_min)/T_max ≤ epsilon`, and the allocation is recovered at
/// `T_max`. The objective trace holds the successive `T_max` values.
pub fn solve_alg2_min_time(scenario: &Scenario, epsilon: f64) -> Result<SolveReport> {
    solve_min_time_with(scenario, &Shares::for_scenario(scenario, false), epsilon)
}

pub(crate) fn solve_min_time_with(scenario: &Scenario, shares: &Shares, epsilon: f64) -> Result<SolveReport> {
    scenario.validate()?;
    if !(epsilon > 0.0 && epsilon < 1.0) {
        return Err(Error::field("epsilon", format!("must lie in (0, 1), got {epsilon}")));
    }
    let started = Instant::now();
    let mut t_max = scenario.local_only_time();
    let mut t_min = 0.0;
    let mut trace = vec![t_max];
    let mut iterations = 0;
    while (t_max - t_min) / t_max > epsilon {
        iterations += 1;
        let mid = 0.5 * (t_min + t_max);
        if check_with(scenario, shares, mid).feasible {
            t_max = mid;
        } else {
            t_min = mid;
        }
        trace.push(t_max);
    }
    debug!("bisection: T in [{t_min:.9e}, {t_max:.9e}] after {iterations} steps");
    let check = check_with(scenario, shares, t_max);
    let alloc = recover_with(scenario, shares, t_max, &check.t_bar, &check.d)?;
    Ok(SolveReport::finish(
        scenario,
        alloc,
        trace,
        iterations,
        Termination::Converged,
        started,
    ))
}
