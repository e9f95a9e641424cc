//! Top-level solvers.
//!
//! - [`solve_alg1`]: alternating solver over the airtime/cloud block, the
//!   offload/share/power block and a joint convex-majorisation step
//! - [`solve_alg2_min_time`]: completion-time minimisation by bisection
//! - [`solve_infinite_capacity`]: convex solve for an unlimited edge cloud
//! - [`solve_multistart`]: best of several alternating runs
//! - [`brute_force_oracle`]: grid search for tiny instances
//!
//! Allocations use the substituted variables: `tau_i = x_i t_i` is the
//! effective airtime of group `i` and `t_i` its transmission window.

mod alternating;
mod conic;
mod infinite;
mod min_time;
mod oracle;

use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::noma_phy;
use crate::scenario::{CloudCapacity, Scenario};
use crate::time_alloc;

pub use alternating::{initial_feasible, solve_alg1, solve_multistart, Alg1Options};
pub use infinite::solve_infinite_capacity;
pub use min_time::{
    check_feasibility_conditions, recover_feasible_point, solve_alg2_min_time, FeasibilityCheck, DEFAULT_EPSILON,
};
pub use oracle::{brute_force_oracle, oracle_point, OracleGrid, MAX_ORACLE_GRID, MAX_ORACLE_USERS};

/// Relative tolerance of the feasibility audit.
pub const AUDIT_REL_TOL: f64 = 1e-6;
/// Absolute floor of the feasibility audit.
pub const AUDIT_ABS_TOL: f64 = 1e-12;

/// Full decision tuple.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Allocation {
    /// Offloaded bits per user.
    pub d: Vec<Vec<f64>>,
    /// Time-sharing factor per group.
    pub x: Vec<f64>,
    /// Effective airtime per group (s).
    pub tau: Vec<f64>,
    /// Cloud speed per user (cycles/s); infinite on an unlimited cloud.
    pub f: Vec<Vec<f64>>,
    /// Transmit power per user (W).
    pub p: Vec<Vec<f64>>,
    #[serde(rename = "T")]
    pub completion_time: f64,
    /// Transmission window per group, `tau / x` (0 when silent).
    pub t: Vec<f64>,
}

impl Allocation {
    pub fn new(
        d: Vec<Vec<f64>>,
        x: Vec<f64>,
        tau: Vec<f64>,
        f: Vec<Vec<f64>>,
        p: Vec<Vec<f64>>,
        completion_time: f64,
    ) -> Self {
        let t = windows(&tau, &x);
        Allocation {
            d,
            x,
            tau,
            f,
            p,
            completion_time,
            t,
        }
    }
}

fn windows(tau: &[f64], x: &[f64]) -> Vec<f64> {
    tau.iter()
        .zip(x)
        .map(|(&t, &xi)| if t <= 0.0 { 0.0 } else { t / xi })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ObjectiveBreakdown {
    #[serde(rename = "T")]
    pub completion_time: f64,
    /// `Σ p τ`
    pub offload_energy: f64,
    /// `Σ C Q (R − d)`
    pub local_energy: f64,
    /// `ω T + (1 − ω)(offload + local)`
    pub weighted: f64,
}

impl ObjectiveBreakdown {
    pub fn total_energy(&self) -> f64 {
        self.offload_energy + self.local_energy
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Termination {
    Converged,
    Budget,
    Infeasible,
}

impl std::fmt::Display for Termination {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Termination::Converged => "converged",
            Termination::Budget => "budget",
            Termination::Infeasible => "infeasible",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolveReport {
    pub allocation: Allocation,
    pub breakdown: ObjectiveBreakdown,
    /// Objective after initialisation and after every outer iteration.
    pub objective_trace: Vec<f64>,
    pub iterations: usize,
    pub termination: Termination,
    /// seconds
    pub wall_time: f64,
}

impl SolveReport {
    fn finish(
        scenario: &Scenario,
        allocation: Allocation,
        objective_trace: Vec<f64>,
        iterations: usize,
        termination: Termination,
        started: Instant,
    ) -> Self {
        SolveReport {
            breakdown: evaluate_objective(scenario, &allocation),
            allocation,
            objective_trace,
            iterations,
            termination,
            wall_time: started.elapsed().as_secs_f64(),
        }
    }

    /// Objective trace as CSV with header `iteration,objective`.
    pub fn trace_csv(&self) -> String {
        let mut out = String::from("iteration,objective\n");
        for (k, v) in self.objective_trace.iter().enumerate() {
            out.push_str(&format!("{k},{v:.11e}\n"));
        }
        out
    }
}

/// Weighted objective `ω T + (1 − ω)(Σ p τ + Σ C Q (R − d))`.
pub fn evaluate_objective(scenario: &Scenario, alloc: &Allocation) -> ObjectiveBreakdown {
    let offload_energy: f64 = alloc
        .p
        .iter()
        .zip(&alloc.tau)
        .map(|(pg, &t)| if t > 0.0 { t * pg.iter().sum::<f64>() } else { 0.0 })
        .sum();
    let local_energy: f64 = scenario
        .groups
        .iter()
        .zip(&alloc.d)
        .flat_map(|(g, dg)| g.iter().zip(dg))
        .map(|(u, &d)| u.local_energy(d))
        .sum();
    let w = scenario.omega;
    ObjectiveBreakdown {
        completion_time: alloc.completion_time,
        offload_energy,
        local_energy,
        weighted: w * alloc.completion_time + (1.0 - w) * (offload_energy + local_energy),
    }
}

/// Outcome of [`audit`].
#[derive(Debug, Clone, PartialEq)]
pub struct AuditReport {
    /// Largest relative violation over all constraints (0 when none).
    pub worst_residual: f64,
    /// Constraints that fail the tolerance.
    pub violations: Vec<String>,
}

impl AuditReport {
    pub fn is_feasible(&self) -> bool {
        self.violations.is_empty()
    }
}

struct Auditor {
    report: AuditReport,
}

impl Auditor {
    /// Record `lhs ≤ rhs`.
    fn le(&mut self, what: impl FnOnce() -> String, lhs: f64, rhs: f64) {
        let scale = lhs.abs().max(rhs.abs());
        let excess = lhs - rhs;
        if excess.is_nan() {
            self.report.worst_residual = f64::INFINITY;
            self.report.violations.push(format!("{}: not a number", what()));
            return;
        }
        if excess <= 0.0 {
            return;
        }
        let rel = if scale.is_finite() && scale > 0.0 { excess / scale } else { f64::INFINITY };
        self.report.worst_residual = self.report.worst_residual.max(rel);
        if excess > AUDIT_REL_TOL * scale + AUDIT_ABS_TOL || !excess.is_finite() {
            self.report.violations.push(format!("{}: {lhs:.9e} > {rhs:.9e}", what()));
        }
    }
}

/// Check every constraint of the substituted problem at relative
/// tolerance [`AUDIT_REL_TOL`] with absolute floor [`AUDIT_ABS_TOL`].
///
/// Rates use the suffix form `B τ log2(1 + Σ_{l≥j} p h / σ²B) ≥ Σ_{l≥j} d`.
/// Shares must sum to at most one, or equal the imposed shares when the
/// scenario fixes them.
pub fn audit(scenario: &Scenario, alloc: &Allocation) -> AuditReport {
    let mut a = Auditor {
        report: AuditReport {
            worst_residual: 0.0,
            violations: Vec::new(),
        },
    };
    let n = scenario.group_count();
    let shapes_ok = alloc.d.len() == n
        && alloc.p.len() == n
        && alloc.f.len() == n
        && alloc.x.len() == n
        && alloc.tau.len() == n
        && scenario
            .groups
            .iter()
            .enumerate()
            .all(|(i, g)| alloc.d[i].len() == g.len() && alloc.p[i].len() == g.len() && alloc.f[i].len() == g.len());
    if !shapes_ok {
        a.report.worst_residual = f64::INFINITY;
        a.report.violations.push("allocation shape does not match the scenario".into());
        return a.report;
    }
    let t_done = alloc.completion_time;
    let link = scenario.link();
    match scenario.fixed_shares() {
        Some(fixed) => {
            for i in 0..n {
                a.le(|| format!("x[{i}] fixed"), (alloc.x[i] - fixed[i]).abs(), 0.0);
            }
        }
        None => {
            a.le(|| "sum x <= 1".into(), alloc.x.iter().sum(), 1.0);
            for i in 0..n {
                a.le(|| format!("x[{i}] >= 0"), -alloc.x[i], 0.0);
            }
        }
    }
    let mut f_total = 0.0;
    for (i, g) in scenario.groups.iter().enumerate() {
        let tau = alloc.tau[i];
        a.le(|| format!("tau[{i}] >= 0"), -tau, 0.0);
        let window = if tau > 0.0 { tau / alloc.x[i] } else { 0.0 };
        let gains = scenario.gains(i);
        for (j, u) in g.iter().enumerate() {
            let (d, p, f) = (alloc.d[i][j], alloc.p[i][j], alloc.f[i][j]);
            a.le(|| format!("d[{i}][{j}] >= 0"), -d, 0.0);
            a.le(|| format!("d[{i}][{j}] <= R"), d, u.data_size);
            a.le(|| format!("p[{i}][{j}] >= 0"), -p, 0.0);
            a.le(|| format!("p[{i}][{j}] <= P"), p, u.max_power);
            a.le(|| format!("f[{i}][{j}] >= 0"), -f, 0.0);
            a.le(|| format!("local time of user ({i},{j})"), u.local_time(d), t_done);
            if d > 0.0 {
                let cloud = if f.is_infinite() {
                    0.0
                } else if f > 0.0 {
                    u.cycles_per_bit * d / f
                } else {
                    f64::INFINITY
                };
                a.le(|| format!("offload time of user ({i},{j})"), window + cloud, t_done);
            }
            if f.is_finite() {
                f_total += f;
            }
            let bits: f64 = alloc.d[i][j..].iter().sum();
            let rate = noma_phy::sum_rate_from_j(&alloc.p[i], &gains, link, j).unwrap_or(0.0);
            a.le(|| format!("rate of users ({i},{j}..)"), bits, tau.max(0.0) * rate);
        }
    }
    if let CloudCapacity::Finite(cap) = scenario.cloud_capacity {
        a.le(|| "sum f <= F".into(), f_total, cap);
    }
    a.report
}

/// How the time-sharing factors are handled by a solve.
#[derive(Debug, Clone, PartialEq)]
pub(crate) enum Shares {
    Free,
    Fixed(Vec<f64>),
}

impl Shares {
    pub(crate) fn for_scenario(scenario: &Scenario, equal_time: bool) -> Shares {
        match scenario.fixed_shares() {
            Some(x) => Shares::Fixed(x),
            None if equal_time => Shares::Fixed(vec![1.0 / scenario.group_count() as f64; scenario.group_count()]),
            None => Shares::Free,
        }
    }

    pub(crate) fn fixed(&self) -> Option<&[f64]> {
        match self {
            Shares::Free => None,
            Shares::Fixed(x) => Some(x),
        }
    }
}

/// Cheapest feasible allocation for given offloads and airtimes.
///
/// Airtimes are raised to the group floor if needed, powers are the least
/// energy powers within the caps, the completion time is the smallest one
/// the cloud and the local CPUs allow, and shares and cloud speeds follow
/// in closed form.
pub(crate) fn complete(scenario: &Scenario, shares: &Shares, d: Vec<Vec<f64>>, tau: &[f64]) -> Option<Allocation> {
    let link = scenario.link();
    let n = scenario.group_count();
    let mut tau_out = Vec::with_capacity(n);
    let mut p = Vec::with_capacity(n);
    for (i, g) in scenario.groups.iter().enumerate() {
        let gains = scenario.gains(i);
        let caps = scenario.power_caps(i);
        let floor = noma_phy::group_min_airtime(&d[i], &caps, &gains, link);
        if !floor.is_finite() {
            return None;
        }
        let mut t = if d[i].iter().any(|&v| v > 0.0) { tau[i].max(floor) } else { 0.0 };
        let mut powers = None;
        for _ in 0..50 {
            powers = noma_phy::min_powers_with_caps(&d[i], t, &gains, &caps, link);
            if powers.is_some() {
                break;
            }
            t *= 1.0 + 1e-12;
        }
        let powers = powers?;
        debug_assert_eq!(powers.len(), g.len());
        tau_out.push(t);
        p.push(powers);
    }
    let cycles = time_alloc::group_cycles(scenario, &d);
    let local = time_alloc::local_time_floor(scenario, &d);
    let (x, deadline) = match shares {
        Shares::Free => {
            let cloud = time_alloc::free_share_deadline(&cycles, &tau_out, scenario.cloud_capacity);
            let deadline = cloud.max(local);
            if !(deadline > 0.0) {
                return None;
            }
            (time_alloc::optimal_shares(&cycles, &tau_out, deadline), deadline)
        }
        Shares::Fixed(x) => {
            let w = windows(&tau_out, x);
            let cloud = time_alloc::fixed_share_deadline(&cycles, &w, scenario.cloud_capacity);
            let silent_max = w.iter().copied().fold(0.0, f64::max);
            (x.clone(), cloud.max(local).max(silent_max))
        }
    };
    let w = windows(&tau_out, &x);
    let f = time_alloc::cloud_speeds(scenario, &d, &w, deadline);
    Some(Allocation::new(d, x, tau_out, f, p, deadline))
}
