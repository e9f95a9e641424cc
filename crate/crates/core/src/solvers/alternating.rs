//! Alternating solver and its multi-start wrapper.

use std::time::Instant;

use log::debug;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp1};
use rayon::prelude::*;

use super::conic::{self, Coupling};
use super::{complete, evaluate_objective, Allocation, Shares, SolveReport, Termination};
use crate::energy_alloc::{self, EnergyOptions, EnergyPrimal, EnergySubproblemInput};
use crate::error::{Error, Result};
use crate::noma_phy;
use crate::scenario::Scenario;
use crate::time_alloc::{self, TimeSubproblemInput};

#[derive(Debug, Clone, PartialEq)]
pub struct Alg1Options {
    /// Stop when one outer iteration improves the objective by less than
    /// this fraction.
    pub tol: f64,
    pub max_outer: usize,
    /// Pin every time-sharing factor to `1/N` (equal time sharing).
    pub equal_time: bool,
    /// Run the joint majorisation step after the two blocks.
    pub joint_step: bool,
    pub energy: EnergyOptions,
}

impl Default for Alg1Options {
    fn default() -> Self {
        Alg1Options {
            tol: 1e-6,
            max_outer: 200,
            equal_time: false,
            joint_step: true,
            // the outer loop revisits the block anyway
            energy: EnergyOptions {
                max_iters: 300,
                ..EnergyOptions::default()
            },
        }
    }
}

/// Nothing offloaded, nothing transmitted: `d = 0`, `p = 0`, `τ = 0`,
/// `f = 0`, `T = max C R / F_ij`, shares `1/N` (or the imposed shares).
pub fn initial_feasible(scenario: &Scenario) -> Allocation {
    let n = scenario.group_count();
    let zeros: Vec<Vec<f64>> = scenario.groups.iter().map(|g| vec![0.0; g.len()]).collect();
    let x = scenario.fixed_shares().unwrap_or_else(|| vec![1.0 / n as f64; n]);
    Allocation::new(
        zeros.clone(),
        x,
        vec![0.0; n],
        zeros.clone(),
        zeros,
        scenario.local_only_time(),
    )
}

fn check_scenario(scenario: &Scenario) -> Result<()> {
    scenario.validate()?;
    if scenario.cloud_capacity.is_infinite() {
        return Err(Error::Unsupported(
            "the alternating solver needs a finite cloud capacity; use the unlimited-cloud solver".into(),
        ));
    }
    Ok(())
}

/// Alternating minimisation from [`initial_feasible`].
///
/// Each outer iteration runs three blocks and keeps a block's result only if
/// it lowers the objective, so the trace never increases:
/// 1. airtimes, cloud speeds and completion time in closed form;
/// 2. offloads, shares and powers by the dual method;
/// 3. a joint convex step on offloads, airtimes and completion time with
///    the cloud constraint majorised at the current point.
///
/// The first two blocks alone stall at the starting point: with no airtime
/// nothing can be offloaded, and with nothing offloaded no airtime is
/// needed. The third block breaks that tie and, being a majorise-minimise
/// step, drives the iterates to a stationary point.
pub fn solve_alg1(scenario: &Scenario, options: &Alg1Options) -> Result<SolveReport> {
    check_scenario(scenario)?;
    let start = initial_feasible(scenario);
    let start = if options.equal_time {
        Allocation::new(
            start.d.clone(),
            Shares::for_scenario(scenario, true).fixed().map(<[f64]>::to_vec).unwrap_or(start.x),
            start.tau,
            start.f,
            start.p,
            start.completion_time,
        )
    } else {
        start
    };
    run_from(scenario, start, options)
}

fn run_from(scenario: &Scenario, start: Allocation, options: &Alg1Options) -> Result<SolveReport> {
    let started = Instant::now();
    let shares = Shares::for_scenario(scenario, options.equal_time);
    let objective = |a: &Allocation| evaluate_objective(scenario, a).weighted;
    let mut current = start;
    let mut value = objective(&current);
    let mut trace = vec![value];
    let mut termination = Termination::Budget;
    let mut iterations = 0;
    // with ω = 0 the joint step may raise T at most this factor per iteration
    let t_growth = 4.0;

    for outer in 1..=options.max_outer {
        iterations = outer;
        let before = value;
        let accept = |cand: Option<Allocation>, current: &mut Allocation, value: &mut f64, block: &str| {
            if let Some(c) = cand {
                let v = objective(&c);
                if v < *value {
                    debug!("outer {outer}: {block} {:.12e} -> {v:.12e}", *value);
                    *value = v;
                    *current = c;
                } else {
                    debug!("outer {outer}: {block} rejected {v:.12e}");
                }
            } else {
                debug!("outer {outer}: {block} failed");
            }
        };

        let time = time_block(scenario, &current);
        accept(time, &mut current, &mut value, "time");
        let energy = energy_block(scenario, &shares, &current, options.energy);
        accept(energy, &mut current, &mut value, "energy");
        if options.joint_step {
            let joint = joint_block(scenario, &shares, &current, t_growth);
            accept(joint, &mut current, &mut value, "joint");
        }

        trace.push(value);
        if before - value <= options.tol * before.abs().max(f64::MIN_POSITIVE) {
            termination = Termination::Converged;
            break;
        }
    }
    Ok(SolveReport::finish(scenario, current, trace, iterations, termination, started))
}

fn time_block(scenario: &Scenario, current: &Allocation) -> Option<Allocation> {
    let sol = time_alloc::solve_time_subproblem(
        scenario,
        TimeSubproblemInput {
            d: &current.d,
            x: &current.x,
            p: &current.p,
        },
    )
    .ok()?;
    Some(Allocation::new(
        current.d.clone(),
        current.x.clone(),
        sol.tau,
        sol.f,
        current.p.clone(),
        sol.completion_time,
    ))
}

fn energy_block(scenario: &Scenario, shares: &Shares, current: &Allocation, options: EnergyOptions) -> Option<Allocation> {
    let incoming = EnergyPrimal {
        d: current.d.clone(),
        x: current.x.clone(),
        p: current.p.clone(),
    };
    let sol = energy_alloc::solve_energy_subproblem(
        scenario,
        EnergySubproblemInput {
            tau: &current.tau,
            f: &current.f,
            completion_time: current.completion_time,
            fixed_shares: shares.fixed(),
        },
        Some(&incoming),
        options,
        None,
    )
    .ok()?;
    Some(Allocation::new(
        sol.d,
        sol.x,
        current.tau.clone(),
        current.f.clone(),
        sol.p,
        current.completion_time,
    ))
}

fn joint_block(scenario: &Scenario, shares: &Shares, current: &Allocation, t_growth: f64) -> Option<Allocation> {
    let coupling = match shares {
        Shares::Free => Coupling::FreeShares {
            alpha: conic::free_weights(scenario, &current.d, &current.tau),
        },
        Shares::Fixed(x) => Coupling::FixedShares {
            shares: x.clone(),
            theta: conic::fixed_weights(scenario, &current.d),
        },
    };
    let limit = conic::completion_time_bound(scenario)
        .unwrap_or(t_growth * current.completion_time.max(scenario.local_only_time()));
    let step = conic::joint_step(scenario, &coupling, limit)?;
    complete(scenario, shares, step.d, &step.tau)
}

/// Random feasible start: offloads uniform in `[0, R]`, shares uniform on
/// the simplex, airtimes between one and four times the group floor, least
/// energy powers, then the closed-form airtime/cloud block.
fn random_start(scenario: &Scenario, shares: &Shares, rng: &mut ChaCha8Rng) -> Option<Allocation> {
    let link = scenario.link();
    let d: Vec<Vec<f64>> = scenario
        .groups
        .iter()
        .map(|g| g.iter().map(|u| rng.random::<f64>() * u.data_size).collect())
        .collect();
    let x = match shares {
        Shares::Fixed(x) => x.clone(),
        Shares::Free => {
            let w: Vec<f64> = (0..scenario.group_count()).map(|_| Exp1.sample(rng)).collect();
            let total: f64 = w.iter().sum();
            w.iter().map(|v| v / total).collect()
        }
    };
    let mut p = Vec::with_capacity(scenario.group_count());
    let mut d_ok = Vec::with_capacity(scenario.group_count());
    for (i, dg) in d.into_iter().enumerate() {
        let gains = scenario.gains(i);
        let caps = scenario.power_caps(i);
        let floor = noma_phy::group_min_airtime(&dg, &caps, &gains, link);
        let dg = if floor.is_finite() { dg } else { vec![0.0; dg.len()] };
        let airtime = floor * rng.random_range(1.0..4.0);
        let pg = noma_phy::min_powers_with_caps(&dg, airtime, &gains, &caps, link)?;
        p.push(pg);
        d_ok.push(dg);
    }
    let sol = time_alloc::solve_time_subproblem(
        scenario,
        TimeSubproblemInput {
            d: &d_ok,
            x: &x,
            p: &p,
        },
    )
    .ok()?;
    Some(Allocation::new(d_ok, x, sol.tau, sol.f, p, sol.completion_time))
}

/// Best of `starts` alternating runs: one from [`initial_feasible`] and the
/// rest from random feasible points drawn from `seed`. Runs are independent
/// and may execute in parallel; ties go to the lower start index.
pub fn solve_multistart(scenario: &Scenario, starts: usize, seed: u64, base: &Alg1Options) -> Result<SolveReport> {
    check_scenario(scenario)?;
    if starts == 0 {
        return Err(Error::field("starts", "must be at least 1"));
    }
    let started = Instant::now();
    let shares = Shares::for_scenario(scenario, base.equal_time);
    let runs: Vec<Result<SolveReport>> = (0..starts)
        .into_par_iter()
        .map(|k| {
            if k == 0 {
                return solve_alg1(scenario, base);
            }
            let mut rng = ChaCha8Rng::seed_from_u64(seed ^ (k as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15));
            match random_start(scenario, &shares, &mut rng) {
                Some(start) => run_from(scenario, start, base),
                None => solve_alg1(scenario, base),
            }
        })
        .collect();
    let mut best: Option<SolveReport> = None;
    let mut total_iterations = 0;
    for run in runs {
        let report = run?;
        total_iterations += report.iterations;
        if best
            .as_ref()
            .is_none_or(|b| report.breakdown.weighted < b.breakdown.weighted)
        {
            best = Some(report);
        }
    }
    let mut best = best.expect("at least one start");
    best.iterations = total_iterations;
    best.wall_time = started.elapsed().as_secs_f64();
    Ok(best)
}
