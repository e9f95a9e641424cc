//! Brute-force grid oracle for tiny instances.
//!
//! The outer search runs over the completion time `T`, the time-sharing
//! factors `x` and a split `s` of the cloud capacity between the groups.
//! Once these are fixed every group is on its own. Its window for the
//! cloud is `C·d / (F s_i)`, so its airtime is at most
//! `x_i (T − Σ_j C d_ij / (F s_i))`, and using all of it is best. The
//! least transmit energy is jointly convex in offloads and airtime, and
//! this airtime is affine in the offloads. So each group's energy is a
//! convex function of its own offloads on the box `[D_ij(T), R_ij]`, and
//! nested golden-section searches minimise it.
//!
//! The outer coordinates live in the unit box: `T` on a log scale between
//! the smallest reachable completion time and an upper bound on the
//! optimal one, and `x` and `s` by stick breaking (`x_1 = z_1`,
//! `x_2 = (1 − z_1) z_2`, ...). A uniform grid is scanned first. Pattern
//! refinement then runs from the best few grid points: each round rescans
//! `center ± h` in every dimension, and `h` halves whenever the center
//! survives a round. Every point visited is feasible, so the result is an
//! upper bound on the optimum.

use argmin::core::{CostFunction, Executor, State};
use argmin::solver::neldermead::NelderMead;
use serde::{Deserialize, Serialize};

use super::conic;
use super::{evaluate_objective, windows, Allocation, ObjectiveBreakdown};
use crate::error::{Error, Result};
use crate::noma_phy;
use crate::scenario::{Scenario, UserParams};
use crate::time_alloc;

pub const MAX_ORACLE_USERS: usize = 4;
pub const MAX_ORACLE_GRID: usize = 20;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OracleGrid {
    /// Points per dimension of the first, uniform scan (2..=20).
    pub points: usize,
    /// Pattern-refinement rounds per start after the uniform scan.
    pub refinements: usize,
}

impl Default for OracleGrid {
    fn default() -> Self {
        OracleGrid {
            points: 6,
            refinements: 20,
        }
    }
}

/// Grid points the pattern refinement starts from.
const STARTS: usize = 6;
/// Golden-section and bisection stop at this fraction of `R`.
const LINE_TOL: f64 = 1e-8;

/// Best feasible objective over the grid.
pub fn brute_force_oracle(scenario: &Scenario, grid: OracleGrid) -> Result<ObjectiveBreakdown> {
    Ok(evaluate_objective(scenario, &oracle_point(scenario, grid)?))
}

/// Best feasible allocation over the grid.
pub fn oracle_point(scenario: &Scenario, grid: OracleGrid) -> Result<Allocation> {
    scenario.validate()?;
    if scenario.user_count() > MAX_ORACLE_USERS {
        return Err(Error::TooLarge(format!(
            "the grid oracle handles at most {MAX_ORACLE_USERS} users, got {}",
            scenario.user_count()
        )));
    }
    if !(2..=MAX_ORACLE_GRID).contains(&grid.points) {
        return Err(Error::TooLarge(format!(
            "the grid oracle uses 2 to {MAX_ORACLE_GRID} points per dimension, got {}",
            grid.points
        )));
    }
    if scenario.cloud_capacity.is_infinite() {
        return Err(Error::Unsupported("the grid oracle needs a finite cloud capacity".into()));
    }
    let fixed = scenario.fixed_shares();
    let n = scenario.group_count();
    let share_dims = if fixed.is_some() { 0 } else { n - 1 };
    let cap = scenario.cloud_capacity.value();
    let t_hi = conic::completion_time_bound(scenario).unwrap_or(10.0 * scenario.local_only_time());
    let t_lo = smallest_deadline(scenario).min(t_hi);

    // outer point → (T, x, per-group capacity)
    let decode = |z: &[f64]| -> (f64, Vec<f64>, Vec<f64>) {
        let deadline = t_lo + (t_hi - t_lo) * z[0].powi(3);
        let x = fixed.clone().unwrap_or_else(|| stick(&z[1..1 + share_dims]));
        let split = stick(&z[1 + share_dims..]);
        (deadline, x, split.iter().map(|s| s * cap).collect())
    };
    let plan = |z: &[f64]| -> Option<(f64, Vec<Vec<f64>>)> {
        let (deadline, x, caps) = decode(z);
        let mut energy = 0.0;
        let mut d = Vec::with_capacity(n);
        for i in 0..n {
            let g = GroupProblem::new(scenario, i, deadline, x[i], caps[i]);
            let (e, dg) = g.minimise()?;
            energy += e;
            d.push(dg);
        }
        let w = scenario.omega;
        Some((w * deadline + (1.0 - w) * energy, d))
    };
    let dims = 1 + share_dims + (n - 1);
    let (_, z) = minimize_box(dims, grid.points, grid.refinements, STARTS, |z| plan(z).map(|r| r.0))
        .ok_or_else(|| Error::infeasible("no feasible grid point", f64::INFINITY))?;
    let (_, d) = plan(&z).expect("the incumbent is feasible");
    let (deadline, x, caps) = decode(&z);
    let mut tau = Vec::with_capacity(n);
    let mut p = Vec::with_capacity(n);
    for i in 0..n {
        let g = GroupProblem::new(scenario, i, deadline, x[i], caps[i]);
        let t = g.airtime(&d[i]);
        p.push(g.powers(&d[i], t).expect("the incumbent is feasible"));
        tau.push(t);
    }
    let f = time_alloc::cloud_speeds(scenario, &d, &windows(&tau, &x), deadline);
    Ok(Allocation::new(d, x, tau, f, p, deadline))
}

/// Smallest completion time at which the least offloads fit, by bisection
/// on `(0, max C R / F_ij]`. Uses the capacity the least offloads need at
/// their minimal airtimes, with the best shares when they are free.
fn smallest_deadline(scenario: &Scenario) -> f64 {
    let link = scenario.link();
    let cap = scenario.cloud_capacity.value();
    let fixed = scenario.fixed_shares();
    let fits = |deadline: f64| {
        let d = scenario.min_offloads(deadline);
        let floors: Vec<f64> = (0..scenario.group_count())
            .map(|i| noma_phy::group_min_airtime(&d[i], &scenario.power_caps(i), &scenario.gains(i), link))
            .collect();
        if floors.iter().any(|t| !t.is_finite()) {
            return false;
        }
        let cycles = time_alloc::group_cycles(scenario, &d);
        let total: f64 = cycles.iter().sum();
        match &fixed {
            Some(x) => {
                let mut load = 0.0;
                for ((&c, &t), &xi) in cycles.iter().zip(&floors).zip(x) {
                    let window = if t > 0.0 { t / xi } else { 0.0 };
                    if window > deadline || (c > 0.0 && window >= deadline) {
                        return false;
                    }
                    if c > 0.0 {
                        load += c / (deadline - window);
                    }
                }
                load <= cap
            }
            None => {
                let slack = deadline - floors.iter().sum::<f64>();
                if slack < 0.0 {
                    return false;
                }
                if total <= 0.0 {
                    return true;
                }
                if slack == 0.0 {
                    return false;
                }
                let k: f64 = cycles.iter().zip(&floors).map(|(c, t)| (c * t).sqrt()).sum();
                k * k / (deadline * slack) + total / deadline <= cap
            }
        }
    };
    let (mut lo, mut hi) = (0.0, scenario.local_only_time());
    for _ in 0..200 {
        if hi - lo <= 1e-15 * hi {
            break;
        }
        let mid = 0.5 * (lo + hi);
        if fits(mid) {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    hi
}

/// One group with `T`, its share and its cloud capacity fixed.
struct GroupProblem<'a> {
    scenario: &'a Scenario,
    users: &'a [UserParams],
    group: usize,
    deadline: f64,
    share: f64,
    cloud: f64,
    lower: Vec<f64>,
}

impl<'a> GroupProblem<'a> {
    fn new(scenario: &'a Scenario, group: usize, deadline: f64, share: f64, cloud: f64) -> Self {
        let users = &scenario.groups[group][..];
        GroupProblem {
            scenario,
            users,
            group,
            deadline,
            share,
            cloud,
            lower: users.iter().map(|u| u.min_offload(deadline)).collect(),
        }
    }

    /// Longest airtime that leaves the cloud enough time.
    fn airtime(&self, d: &[f64]) -> f64 {
        let cycles: f64 = self.users.iter().zip(d).map(|(u, v)| u.cycles_per_bit * v).sum();
        if cycles <= 0.0 {
            return self.share * self.deadline;
        }
        self.share * (self.deadline - cycles / self.cloud)
    }

    fn powers(&self, d: &[f64], airtime: f64) -> Option<Vec<f64>> {
        let sc = self.scenario;
        noma_phy::min_powers_with_caps(d, airtime, &sc.gains(self.group), &sc.power_caps(self.group), sc.link())
    }

    /// Transmit plus local energy; `None` outside the feasible set.
    fn energy(&self, d: &[f64]) -> Option<f64> {
        let local: f64 = self.users.iter().zip(d).map(|(u, &v)| u.local_energy(v)).sum();
        if d.iter().all(|&v| v <= 0.0) {
            return Some(local);
        }
        let t = self.airtime(d);
        if !(t > 0.0) {
            return None;
        }
        let p = self.powers(d, t)?;
        Some(t * p.iter().sum::<f64>() + local)
    }

    fn minimise(&self) -> Option<(f64, Vec<f64>)> {
        let mut d = self.lower.clone();
        self.energy(&d)?;
        Some(self.descend(0, &mut d))
    }

    /// Minimise over coordinates `k..` with the earlier ones fixed in `d`
    /// and the later ones at their floors. The feasible set is convex and
    /// shrinks as offloads grow, so coordinate `k` ranges over an interval
    /// starting at its floor.
    fn descend(&self, k: usize, d: &mut Vec<f64>) -> (f64, Vec<f64>) {
        if k == d.len() {
            return (self.energy(d).expect("feasible by construction"), d.clone());
        }
        let lo = self.lower[k];
        let tol = LINE_TOL * self.users[k].data_size.max(1.0);
        let feasible_at = |v: f64, d: &mut Vec<f64>| {
            d[k] = v;
            self.energy(d).is_some()
        };
        let mut hi = self.users[k].data_size;
        if !feasible_at(hi, d) {
            let mut ok = lo;
            while hi - ok > tol {
                let mid = 0.5 * (ok + hi);
                if feasible_at(mid, d) {
                    ok = mid;
                } else {
                    hi = mid;
                }
            }
            hi = ok;
        }
        let mut eval = |v: f64| {
            d[k] = v;
            let r = self.descend(k + 1, d);
            for j in k + 1..d.len() {
                d[j] = self.lower[j];
            }
            r
        };
        let mut best = eval(lo);
        let at_hi = eval(hi);
        if at_hi.0 < best.0 {
            best = at_hi;
        }
        // golden section on the convex partial minimum
        let r = 0.5 * (5f64.sqrt() - 1.0);
        let (mut a, mut b) = (lo, hi);
        let mut c = b - r * (b - a);
        let mut e = a + r * (b - a);
        let mut fc = eval(c);
        let mut fe = eval(e);
        while b - a > tol {
            if fc.0 <= fe.0 {
                b = e;
                e = c;
                fe = fc;
                c = b - r * (b - a);
                fc = eval(c);
            } else {
                a = c;
                c = e;
                fc = fe;
                e = a + r * (b - a);
                fe = eval(e);
            }
        }
        for cand in [fc, fe] {
            if cand.0 < best.0 {
                best = cand;
            }
        }
        d[k] = lo;
        best
    }
}

/// Stick-breaking map from `n − 1` numbers in `[0, 1]` to the simplex.
fn stick(z: &[f64]) -> Vec<f64> {
    let mut rest = 1.0;
    let mut out = Vec::with_capacity(z.len() + 1);
    for s in z {
        out.push(rest * s);
        rest *= 1.0 - s;
    }
    out.push(rest);
    out
}

/// Minimise `f` over `[0, 1]^dims`: a uniform scan, then pattern refinement
/// from the `starts` best scan points. Returns the best value and point.
fn minimize_box(
    dims: usize,
    points: usize,
    rounds: usize,
    starts: usize,
    f: impl Fn(&[f64]) -> Option<f64>,
) -> Option<(f64, Vec<f64>)> {
    if dims == 0 {
        return f(&[]).map(|v| (v, Vec::new()));
    }
    let uniform: Vec<f64> = (0..points).map(|m| m as f64 / (points - 1) as f64).collect();
    let mut scanned: Vec<(f64, Vec<f64>)> = Vec::new();
    scan(dims, |_| uniform.clone(), |z| {
        if let Some(v) = f(z) {
            scanned.push((v, z.to_vec()));
        }
    });
    // stable sort keeps scan order among ties
    scanned.sort_by(|a, b| a.0.total_cmp(&b.0));
    let mut best: Option<(f64, Vec<f64>)> = None;
    for (v0, z0) in scanned.into_iter().take(starts) {
        let mut inc = (v0, z0);
        let mut h = 1.0 / (points - 1) as f64;
        for _ in 0..rounds {
            if h < 1e-10 {
                break;
            }
            let center = inc.1.clone();
            scan(
                dims,
                |k| {
                    let mut ax = vec![center[k]];
                    for v in [center[k] - h, center[k] + h] {
                        if (0.0..=1.0).contains(&v) {
                            ax.push(v);
                        }
                    }
                    ax
                },
                |z| {
                    if let Some(v) = f(z) {
                        if v < inc.0 {
                            inc = (v, z.to_vec());
                        }
                    }
                },
            );
            if inc.1 == center {
                h *= 0.5;
            }
        }
        if dims > 1 {
            inc = polish(dims, inc, &f);
        }
        if best.as_ref().is_none_or(|b| inc.0 < b.0) {
            best = Some(inc);
        }
    }
    best
}

struct BoxCost<'f, F> {
    f: &'f F,
}

impl<F: Fn(&[f64]) -> Option<f64>> CostFunction for BoxCost<'_, F> {
    type Param = Vec<f64>;
    type Output = f64;

    fn cost(&self, z: &Vec<f64>) -> std::result::Result<f64, argmin::core::Error> {
        if z.iter().any(|v| !(0.0..=1.0).contains(v)) {
            return Ok(f64::MAX);
        }
        Ok((self.f)(z).unwrap_or(f64::MAX))
    }
}

/// Nelder–Mead restarts from the incumbent with shrinking simplices. Pattern
/// moves along the axes stall on ridges that a simplex can follow.
fn polish(dims: usize, mut inc: (f64, Vec<f64>), f: &impl Fn(&[f64]) -> Option<f64>) -> (f64, Vec<f64>) {
    for size in [0.05, 0.01, 1e-3] {
        let mut simplex = vec![inc.1.clone()];
        for k in 0..dims {
            let mut v = inc.1.clone();
            v[k] += if v[k] + size <= 1.0 { size } else { -size };
            simplex.push(v);
        }
        let Ok(solver) = NelderMead::new(simplex).with_sd_tolerance(1e-15) else {
            continue;
        };
        let run = Executor::new(BoxCost { f }, solver).configure(|s| s.max_iters(400)).run();
        if let Ok(res) = run {
            let state = res.state();
            if let Some(z) = state.get_best_param() {
                if state.get_best_cost() < inc.0 {
                    inc = (state.get_best_cost(), z.clone());
                }
            }
        }
    }
    inc
}

/// Visit every point of the product grid with axes `axis(k)`.
fn scan(dims: usize, axis: impl Fn(usize) -> Vec<f64>, mut visit: impl FnMut(&[f64])) {
    let axes: Vec<Vec<f64>> = (0..dims).map(axis).collect();
    let mut idx = vec![0usize; dims];
    let mut z = vec![0.0; dims];
    loop {
        for k in 0..dims {
            z[k] = axes[k][idx[k]];
        }
        visit(&z);
        // odometer increment
        let mut k = 0;
        while k < dims {
            idx[k] += 1;
            if idx[k] < axes[k].len() {
                break;
            }
            idx[k] = 0;
            k += 1;
        }
        if k == dims {
            break;
        }
    }
}

