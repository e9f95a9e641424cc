//! Airtime, cloud-share and completion-time block.
//!
//! With offloaded data, time-sharing factors and powers fixed, the best
//! airtime of each group is its rate-floor time, and the completion time is
//! the larger of the local-execution floor and the root of
//! `Σ_ij C d x / (T x − τ) = F`. Cloud speeds follow in closed form.
//!
//! The module also hosts the share-optimal variants used by the
//! feasibility test and by the solvers: for fixed airtimes and offloaded
//! cycles, the best time-sharing factors and the smallest completion time
//! have closed forms as well.

use crate::error::{Error, Result};
use crate::noma_phy;
use crate::scenario::{CloudCapacity, Scenario};

/// Floor applied to time-sharing factors before dividing by them.
pub const MIN_SHARE: f64 = 1e-9;

/// Time needed by group `i` to deliver `d` at fixed powers `p`:
/// `max_j Σ_{l≥j} d_l / (B log2(1 + Σ_{l≥j} p_l h_l / σ²B))`.
pub fn rate_floor_time(scenario: &Scenario, group: usize, d: &[f64], p: &[f64]) -> f64 {
    noma_phy::group_min_airtime(d, p, &scenario.gains(group), scenario.link())
}

/// Local execution floor `max_ij C (R − d) / F_ij`.
pub fn local_time_floor(scenario: &Scenario, d: &[Vec<f64>]) -> f64 {
    scenario
        .groups
        .iter()
        .zip(d)
        .flat_map(|(g, dg)| g.iter().zip(dg))
        .map(|(u, &dij)| u.local_time(dij).max(0.0))
        .fold(0.0, f64::max)
}

/// Cycles offloaded per group, `Σ_j C_ij d_ij`.
pub fn group_cycles(scenario: &Scenario, d: &[Vec<f64>]) -> Vec<f64> {
    scenario
        .groups
        .iter()
        .zip(d)
        .map(|(g, dg)| g.iter().zip(dg).map(|(u, &dij)| u.cycles_per_bit * dij).sum())
        .collect()
}

/// Smallest `T` with `Σ_i c_i / (T − u_i) ≤ F` over groups with `c_i > 0`,
/// where `u_i` is the transmission window of group `i`.
///
/// The left side decreases strictly on `T > max u_i`, and at
/// `T = max u_i + Σc/F` every term is at most `c_i F / Σc`, so the root lies
/// in that bracket. Bisection runs on the offset from the pole so that
/// relative precision holds even when the root hugs it. The feasible end of
/// the final bracket is returned.
pub fn fixed_share_deadline(cycles: &[f64], windows: &[f64], capacity: CloudCapacity) -> f64 {
    let active: Vec<(f64, f64)> = cycles
        .iter()
        .zip(windows)
        .filter(|(c, _)| **c > 0.0)
        .map(|(&c, &u)| (c, u))
        .collect();
    if active.is_empty() {
        return 0.0;
    }
    let pole = active.iter().map(|&(_, u)| u).fold(0.0, f64::max);
    let cap = match capacity {
        CloudCapacity::Infinite => return pole,
        CloudCapacity::Finite(f) => f,
    };
    let total: f64 = active.iter().map(|&(c, _)| c).sum();
    let load = |s: f64| -> f64 { active.iter().map(|&(c, u)| c / (pole + s - u)).sum() };
    let (mut lo, mut hi) = (0.0, total / cap);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if load(mid) > cap {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    pole + hi
}

/// Smallest `T` for which some time-sharing factors summing to one let
/// every group finish: the larger root of
/// `F T (T − S) = Σc (T − S) + (Σ_i sqrt(c_i τ_i))²` with `S = Στ`.
///
/// Returns `S` (or `Σc/F` if larger) when no group both transmits and
/// offloads cycles, and `S` for unlimited capacity.
pub fn free_share_deadline(cycles: &[f64], airtime: &[f64], capacity: CloudCapacity) -> f64 {
    let s: f64 = airtime.iter().sum();
    let total: f64 = cycles.iter().sum();
    let k: f64 = cycles.iter().zip(airtime).map(|(c, t)| (c * t).sqrt()).sum();
    let f = match capacity {
        CloudCapacity::Infinite => return s,
        CloudCapacity::Finite(f) => f,
    };
    if k <= 0.0 {
        return s.max(total / f);
    }
    // F T² − (F S + Σc) T + (Σc S − K²) = 0, larger root
    let b = f * s + total;
    let disc = (f * s - total).powi(2) + 4.0 * f * k * k;
    (b + disc.sqrt()) / (2.0 * f)
}

/// Time-sharing factors that minimise the cloud load `Σ c_i/(T − τ_i/x_i)`
/// at deadline `T`, `x_i = (τ_i + sqrt(τ_i c_i / α)) / T` with
/// `sqrt(α) = Σ sqrt(c τ) / (T − S)`. Requires `T > S`; leftover share is
/// spread evenly when no group both transmits and offloads.
pub fn optimal_shares(cycles: &[f64], airtime: &[f64], deadline: f64) -> Vec<f64> {
    let n = airtime.len();
    let s: f64 = airtime.iter().sum();
    let k: f64 = cycles.iter().zip(airtime).map(|(c, t)| (c * t).sqrt()).sum();
    let slack = (deadline - s).max(0.0);
    if k <= 0.0 {
        let extra = slack / deadline / n as f64;
        return airtime.iter().map(|t| t / deadline + extra).collect();
    }
    cycles
        .iter()
        .zip(airtime)
        .map(|(c, t)| (t + (c * t).sqrt() * slack / k) / deadline)
        .collect()
}

#[derive(Debug, Clone, Copy)]
pub struct TimeSubproblemInput<'a> {
    pub d: &'a [Vec<f64>],
    pub x: &'a [f64],
    pub p: &'a [Vec<f64>],
}

#[derive(Debug, Clone, PartialEq)]
pub struct TimeSubproblemSolution {
    pub tau: Vec<f64>,
    pub f: Vec<Vec<f64>>,
    pub completion_time: f64,
    /// `ω T + (1 − ω) Σ p τ`
    pub objective: f64,
}

/// Closed-form best airtime, cloud speeds and completion time for fixed
/// offloading, time-sharing factors and powers.
pub fn solve_time_subproblem(scenario: &Scenario, input: TimeSubproblemInput<'_>) -> Result<TimeSubproblemSolution> {
    let n = scenario.group_count();
    let mut tau = Vec::with_capacity(n);
    for i in 0..n {
        let t = rate_floor_time(scenario, i, &input.d[i], &input.p[i]);
        if !t.is_finite() {
            return Err(Error::infeasible(
                format!("group {i} has data to send but no transmit power"),
                f64::INFINITY,
            ));
        }
        tau.push(t);
    }
    let x: Vec<f64> = input.x.iter().map(|&v| v.max(MIN_SHARE)).collect();
    let cycles = group_cycles(scenario, input.d);
    let windows: Vec<f64> = tau.iter().zip(&x).map(|(t, xi)| t / xi).collect();
    let cloud = fixed_share_deadline(&cycles, &windows, scenario.cloud_capacity);
    let t_star = cloud.max(local_time_floor(scenario, input.d));
    let f = cloud_speeds(scenario, input.d, &windows, t_star);
    let tx_energy: f64 = input.p.iter().zip(&tau).map(|(pg, t)| pg.iter().sum::<f64>() * t).sum();
    Ok(TimeSubproblemSolution {
        tau,
        f,
        completion_time: t_star,
        objective: scenario.omega * t_star + (1.0 - scenario.omega) * tx_energy,
    })
}

/// Cloud speeds `C d / (T − window)` that finish every user's offloaded work
/// exactly at `deadline`; zero for users that offload nothing.
pub fn cloud_speeds(scenario: &Scenario, d: &[Vec<f64>], windows: &[f64], deadline: f64) -> Vec<Vec<f64>> {
    scenario
        .groups
        .iter()
        .zip(d)
        .zip(windows)
        .map(|((g, dg), &u)| {
            g.iter()
                .zip(dg)
                .map(|(user, &dij)| {
                    if dij <= 0.0 {
                        0.0
                    } else if scenario.cloud_capacity.is_infinite() {
                        f64::INFINITY
                    } else {
                        user.cycles_per_bit * dij / (deadline - u)
                    }
                })
                .collect()
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scenario::{Multiplexing, UserParams};

    fn one_user(c: f64, r: f64, f_local: f64, cloud: f64) -> Scenario {
        Scenario {
            groups: vec![vec![UserParams {
                data_size: r,
                cycles_per_bit: c,
                local_capacity: f_local,
                energy_per_cycle: 1.0,
                max_power: 10.0,
                channel_gain: 1.0,
            }]],
            bandwidth: 1.0,
            noise_psd: 1.0,
            cloud_capacity: CloudCapacity::Finite(cloud),
            omega: 0.5,
            multiplexing: Multiplexing::TimeShared,
        }
    }

    fn pair() -> Scenario {
        let u = |h| UserParams {
            data_size: 2.0,
            cycles_per_bit: 2.0,
            local_capacity: 1.0,
            energy_per_cycle: 1.0,
            max_power: 10.0,
            channel_gain: h,
        };
        Scenario {
            groups: vec![vec![u(1.0), u(1.0)]],
            bandwidth: 1.0,
            noise_psd: 1.0,
            cloud_capacity: CloudCapacity::Finite(1.0),
            omega: 0.5,
            multiplexing: Multiplexing::TimeShared,
        }
    }

    #[test]
    fn rate_floor_examples() {
        let s = pair();
        assert_eq!(rate_floor_time(&s, 0, &[0.0, 0.0], &[1.0, 1.0]), 0.0);
        // p·h = (2, 1): max(2/log2 4, 1/log2 2) = 1
        assert!((rate_floor_time(&s, 0, &[1.0, 1.0], &[2.0, 1.0]) - 1.0).abs() < 1e-15);
        let single = one_user(1.0, 1.0, 1.0, 1.0);
        assert!((rate_floor_time(&single, 0, &[1.0], &[1.0]) - 1.0).abs() < 1e-15);
        assert_eq!(rate_floor_time(&s, 0, &[0.0, 1.0], &[1.0, 0.0]), f64::INFINITY);
    }

    #[test]
    fn local_floor_examples() {
        let s = one_user(2.0, 2.0, 1.0, 1.0);
        assert_eq!(local_time_floor(&s, &[vec![2.0]]), 0.0);
        assert_eq!(local_time_floor(&s, &[vec![0.0]]), 4.0);
        assert_eq!(local_time_floor(&s, &[vec![1.0]]), 2.0);
    }

    #[test]
    fn single_user_closed_form() {
        let s = one_user(2.0, 2.0, 1.0, 1.0);
        let sol = solve_time_subproblem(
            &s,
            TimeSubproblemInput {
                d: &[vec![1.0]],
                x: &[1.0],
                p: &[vec![1.0]],
            },
        )
        .unwrap();
        assert!((sol.tau[0] - 1.0).abs() < 1e-15);
        assert!((sol.completion_time - 3.0).abs() < 1e-12);
        assert!((sol.f[0][0] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn no_offload_is_local_only() {
        let s = pair();
        let sol = solve_time_subproblem(
            &s,
            TimeSubproblemInput {
                d: &[vec![0.0, 0.0]],
                x: &[1.0],
                p: &[vec![0.0, 0.0]],
            },
        )
        .unwrap();
        assert_eq!(sol.completion_time, 4.0);
        assert_eq!(sol.tau, vec![0.0]);
        assert_eq!(sol.f, vec![vec![0.0, 0.0]]);
    }

    #[test]
    fn free_share_deadline_matches_fixed_share_at_optimal_shares() {
        let c = [3.0, 1.0, 0.5];
        let tau = [0.2, 0.5, 0.1];
        let t = free_share_deadline(&c, &tau, CloudCapacity::Finite(4.0));
        let x = optimal_shares(&c, &tau, t);
        assert!((x.iter().sum::<f64>() - 1.0).abs() < 1e-14);
        let windows: Vec<f64> = tau.iter().zip(&x).map(|(a, b)| a / b).collect();
        let t2 = fixed_share_deadline(&c, &windows, CloudCapacity::Finite(4.0));
        assert!((t - t2).abs() < 1e-10 * t, "{t} vs {t2}");
    }

    #[test]
    fn unlimited_capacity_deadline_is_airtime() {
        assert_eq!(free_share_deadline(&[1.0, 2.0], &[0.3, 0.4], CloudCapacity::Infinite), 0.7);
        assert_eq!(fixed_share_deadline(&[1.0, 0.0], &[0.3, 0.9], CloudCapacity::Infinite), 0.3);
    }
}
