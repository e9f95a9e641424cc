//! Independent reference computations shared by the integration tests.
//!
//! Nothing here calls the library's rate, power or allocation code; only
//! the scenario types and the generator are reused.
#![allow(dead_code)]

use noma_mec::scenario::{generate_scenario, GlobalParams, RandomModel};
use noma_mec::{CloudCapacity, Multiplexing, PairingMethod, Scenario};

pub const GOLDEN_ITERS: usize = 200;

/// Drop of `users` users with the default model, grouped by `pairing`.
pub fn drop_scenario(seed: u64, users: usize, omega: f64, pairing: Option<PairingMethod>) -> Scenario {
    let model = RandomModel {
        user_count: users,
        seed,
        ..RandomModel::default()
    };
    let global = GlobalParams {
        omega,
        ..GlobalParams::default()
    };
    let sc = generate_scenario(&model, &global).expect("default model is valid");
    match pairing {
        Some(p) => sc.regroup(p).expect("pairing applies"),
        None => sc,
    }
}

pub fn band(sc: &Scenario) -> f64 {
    match sc.multiplexing {
        Multiplexing::TimeShared => sc.bandwidth,
        Multiplexing::FrequencyShared => sc.bandwidth / sc.groups.len() as f64,
    }
}

pub fn capacity(sc: &Scenario) -> f64 {
    match sc.cloud_capacity {
        CloudCapacity::Finite(f) => f,
        CloudCapacity::Infinite => f64::INFINITY,
    }
}

/// `B log2(1 + Σ_{l≥k} p_l h_l / σ²B)` by direct summation.
pub fn suffix_rate(sc: &Scenario, group: usize, p: &[f64], k: usize) -> f64 {
    let b = band(sc);
    let rx: f64 = sc.groups[group][k..].iter().zip(&p[k..]).map(|(u, p)| u.channel_gain * p).sum();
    b * (1.0 + rx / (sc.noise_psd * b)).log2()
}

/// Shortest airtime that carries `d` at fixed powers `p`.
pub fn rate_floor(sc: &Scenario, group: usize, d: &[f64], p: &[f64]) -> f64 {
    let mut worst = 0.0f64;
    for k in 0..d.len() {
        let bits: f64 = d[k..].iter().sum();
        if bits > 0.0 {
            worst = worst.max(bits / suffix_rate(sc, group, p, k));
        }
    }
    worst
}

/// Shortest airtime that carries `d` with every user at full power.
pub fn cap_airtime(sc: &Scenario, group: usize, d: &[f64]) -> f64 {
    let p: Vec<f64> = sc.groups[group].iter().map(|u| u.max_power).collect();
    rate_floor(sc, group, d, &p)
}

/// Least offloads that let local execution finish by `t`.
pub fn least_offloads(sc: &Scenario, t: f64) -> Vec<Vec<f64>> {
    sc.groups
        .iter()
        .map(|g| {
            g.iter()
                .map(|u| (u.data_size - t * u.local_capacity / u.cycles_per_bit).max(0.0))
                .collect()
        })
        .collect()
}

pub fn local_only_time(sc: &Scenario) -> f64 {
    sc.groups
        .iter()
        .flatten()
        .map(|u| u.cycles_per_bit * u.data_size / u.local_capacity)
        .fold(0.0, f64::max)
}

/// Minimiser of a unimodal `f` on `[lo, hi]`; returns `(x, f(x))`.
pub fn golden(lo: f64, hi: f64, f: impl Fn(f64) -> f64) -> (f64, f64) {
    let r = (5f64.sqrt() - 1.0) / 2.0;
    let (mut a, mut b) = (lo, hi);
    let mut c = b - r * (b - a);
    let mut d = a + r * (b - a);
    let (mut fc, mut fd) = (f(c), f(d));
    for _ in 0..GOLDEN_ITERS {
        if b - a <= 1e-15 * (a.abs() + b.abs()) {
            break;
        }
        if fc <= fd {
            b = d;
            d = c;
            fd = fc;
            c = b - r * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + r * (b - a);
            fd = f(d);
        }
    }
    let candidates = [(a, f(a)), (b, f(b)), (c, fc), (d, fd)];
    candidates.into_iter().fold((f64::NAN, f64::INFINITY), |best, (x, v)| if v < best.1 { (x, v) } else { best })
}

/// Time block by 1-D search over the completion time.
///
/// With `d`, `x`, `p` fixed the airtimes sit at their rate floors, and the
/// cloud can finish by `T` iff `Σ C d / (T − τ/x) ≤ F`. The objective
/// `ω T + (1 − ω) Σ p τ` plus an exact penalty on the capacity and local
/// deadlines is unimodal in `T`, so golden-section search finds the least
/// feasible deadline. Returns `(T, airtimes, objective)`.
pub fn time_oracle(sc: &Scenario, d: &[Vec<f64>], x: &[f64], p: &[Vec<f64>]) -> (f64, Vec<f64>, f64) {
    let tau: Vec<f64> = (0..sc.groups.len()).map(|i| rate_floor(sc, i, &d[i], &p[i])).collect();
    let energy: f64 = p.iter().zip(&tau).map(|(pg, t)| pg.iter().sum::<f64>() * t).sum();
    let f_cap = capacity(sc);
    let local = sc
        .groups
        .iter()
        .zip(d)
        .flat_map(|(g, dg)| g.iter().zip(dg))
        .map(|(u, &di)| u.cycles_per_bit * (u.data_size - di) / u.local_capacity)
        .fold(0.0, f64::max);
    let load = |t: f64| -> f64 {
        let mut total = 0.0;
        for (i, g) in sc.groups.iter().enumerate() {
            for (j, u) in g.iter().enumerate() {
                if d[i][j] > 0.0 {
                    let room = t - tau[i] / x[i];
                    if room <= 0.0 {
                        return f64::INFINITY;
                    }
                    total += u.cycles_per_bit * d[i][j] / room;
                }
            }
        }
        total
    };
    // below the longest transmission window nothing can finish
    let pole = (0..sc.groups.len())
        .filter(|&i| d[i].iter().any(|&v| v > 0.0))
        .map(|i| tau[i] / x[i])
        .fold(0.0, f64::max);
    let lo = pole.max(local);
    let hi = 2.0 * (local_only_time(sc) + lo) + 1.0;
    let penalty = 1e12 * hi;
    let (t, _) = golden(lo, hi, |t| t + penalty * (load(t) / f_cap - 1.0).max(0.0));
    // golden section may stop a hair inside the infeasible side
    let mut t = t.max(local);
    while load(t) > f_cap * (1.0 + 1e-12) {
        t *= 1.0 + 1e-12;
    }
    (t, tau.clone(), sc.omega * t + (1.0 - sc.omega) * energy)
}

/// Least power sum carrying `d` at airtime `tau` in one group, via the
/// suffix aggregates `A_k = σ²B (2^{S_k/(τB)} − 1)`.
pub fn group_tx_power(sc: &Scenario, group: usize, d: &[f64], tau: f64) -> (f64, Vec<f64>) {
    let b = band(sc);
    let noise = sc.noise_psd * b;
    let m = d.len();
    let mut a = vec![0.0; m + 1];
    let mut s = 0.0;
    for k in (0..m).rev() {
        s += d[k];
        a[k] = noise * ((s / (tau * b)).exp2() - 1.0);
    }
    let p: Vec<f64> = (0..m).map(|k| (a[k] - a[k + 1]) / sc.groups[group][k].channel_gain).collect();
    (p.iter().sum(), p)
}

/// Energy of one group at airtime `tau` with offloads `d`, and its gradient.
fn group_energy(sc: &Scenario, group: usize, d: &[f64], tau: f64) -> (f64, Vec<f64>) {
    let g = &sc.groups[group];
    let b = band(sc);
    let noise = sc.noise_psd * b;
    let (psum, _) = group_tx_power(sc, group, d, tau);
    let local: f64 = g.iter().zip(d).map(|(u, di)| u.cycles_per_bit * u.energy_per_cycle * (u.data_size - di)).sum();
    // ∂A_k/∂d_j = A'_k for j ≥ k; Σp = Σ_k w_k A_k with w_k = 1/h_k − 1/h_{k−1}
    let m = d.len();
    let mut slope = vec![0.0; m];
    let mut s = 0.0;
    for k in (0..m).rev() {
        s += d[k];
        slope[k] = noise * std::f64::consts::LN_2 / (tau * b) * (s / (tau * b)).exp2();
    }
    let grad = (0..m)
        .map(|j| {
            let tx: f64 = (0..=j)
                .map(|k| {
                    let w = 1.0 / g[k].channel_gain - if k > 0 { 1.0 / g[k - 1].channel_gain } else { 0.0 };
                    w * slope[k]
                })
                .sum();
            tau * tx - g[j].cycles_per_bit * g[j].energy_per_cycle
        })
        .collect();
    (tau * psum + local, grad)
}

/// Projected gradient with backtracking on a box.
fn box_descent(lo: &[f64], hi: &[f64], f: impl Fn(&[f64]) -> (f64, Vec<f64>)) -> (f64, Vec<f64>) {
    let mut x: Vec<f64> = lo.iter().zip(hi).map(|(l, h)| 0.5 * (l + h)).collect();
    let (mut fx, mut gx) = f(&x);
    let scale: f64 = lo.iter().zip(hi).map(|(l, h)| h - l).fold(0.0, f64::max).max(1e-300);
    let mut step = scale;
    for _ in 0..5000 {
        let mut accepted = false;
        for _ in 0..80 {
            let cand: Vec<f64> = x
                .iter()
                .zip(&gx)
                .zip(lo.iter().zip(hi))
                .map(|((xi, gi), (l, h))| (xi - step * gi).clamp(*l, *h))
                .collect();
            let (fc, gc) = f(&cand);
            let moved: f64 = cand.iter().zip(&x).zip(&gx).map(|((c, xi), gi)| gi * (xi - c)).sum();
            if fc <= fx - 1e-4 * moved && fc.is_finite() {
                let change = cand.iter().zip(&x).map(|(c, xi)| (c - xi).abs()).fold(0.0, f64::max);
                x = cand;
                fx = fc;
                gx = gc;
                step *= 2.0;
                accepted = change > 1e-13 * scale;
                break;
            }
            step *= 0.5;
        }
        if !accepted {
            break;
        }
    }
    (fx, x)
}

/// Energy block for two time-shared groups: golden section over the share
/// of group 0, projected gradient over the offloads of each group.
///
/// Transmit powers are left uncapped, so instances must use caps that do
/// not bind. Returns `None` when no share split meets the deadlines.
pub fn energy_oracle(sc: &Scenario, tau: &[f64], f: &[Vec<f64>], t: f64) -> Option<f64> {
    assert_eq!(sc.groups.len(), 2, "oracle handles two groups");
    let lower = least_offloads(sc, t);
    // smallest share that leaves room for the least offloads
    let floor = |i: usize| -> f64 {
        sc.groups[i]
            .iter()
            .enumerate()
            .map(|(j, u)| tau[i] / (t - u.cycles_per_bit * lower[i][j] / f[i][j]))
            .fold(0.0, f64::max)
    };
    let (f0, f1) = (floor(0), floor(1));
    if f0 < 0.0 || f1 < 0.0 || f0 + f1 > 1.0 {
        return None;
    }
    let group = |i: usize, x: f64| -> f64 {
        let window = tau[i] / x;
        let hi: Vec<f64> = sc.groups[i]
            .iter()
            .enumerate()
            .map(|(j, u)| (f[i][j] * (t - window) / u.cycles_per_bit).min(u.data_size).max(lower[i][j]))
            .collect();
        box_descent(&lower[i], &hi, |d| group_energy(sc, i, d, tau[i])).0
    };
    let (_, e) = golden(f0, 1.0 - f1, |x0| group(0, x0) + group(1, 1.0 - x0));
    Some(e)
}

/// Cloud load `Σ c_i / (T − a_i / x_i)` minimised over the share simplex
/// by nested golden section (up to three groups).
fn min_cloud_load(cycles: &[f64], airtime: &[f64], t: f64) -> f64 {
    let n = cycles.len();
    let floor: Vec<f64> = airtime.iter().map(|a| a / t).collect();
    if floor.iter().sum::<f64>() > 1.0 {
        return f64::INFINITY;
    }
    let term = |i: usize, x: f64| -> f64 {
        if cycles[i] <= 0.0 {
            return if x >= floor[i] { 0.0 } else { f64::INFINITY };
        }
        let room = t - airtime[i] / x;
        if room <= 0.0 {
            f64::INFINITY
        } else {
            cycles[i] / room
        }
    };
    match n {
        1 => term(0, 1.0),
        2 => golden(floor[0], 1.0 - floor[1], |x0| term(0, x0) + term(1, 1.0 - x0)).1,
        3 => {
            golden(floor[0], 1.0 - floor[1] - floor[2], |x0| {
                let rest = 1.0 - x0;
                term(0, x0) + golden(floor[1], rest - floor[2], |x1| term(1, x1) + term(2, rest - x1)).1
            })
            .1
        }
        _ => panic!("feasibility oracle handles at most three groups"),
    }
}

/// Whether some allocation of a time-shared scenario finishes by `t`.
///
/// Offloading more than the least amount only adds airtime and cloud
/// cycles, so it is enough to check the least offloads at full power
/// against the best share split.
pub fn feasible_direct(sc: &Scenario, t: f64) -> bool {
    if !(t > 0.0) {
        return false;
    }
    let d = least_offloads(sc, t);
    let mut cycles = Vec::new();
    let mut airtime = Vec::new();
    for (i, g) in sc.groups.iter().enumerate() {
        let a = cap_airtime(sc, i, &d[i]);
        if !a.is_finite() {
            return false;
        }
        airtime.push(a);
        cycles.push(g.iter().zip(&d[i]).map(|(u, di)| u.cycles_per_bit * di).sum::<f64>());
    }
    if airtime.iter().sum::<f64>() > t {
        return false;
    }
    min_cloud_load(&cycles, &airtime, t) <= capacity(sc)
}

/// Least feasible completion time by a linear scan of `points` deadlines up
/// to the local-only time, repeated once inside the bracketing cell.
pub fn scan_min_time(sc: &Scenario, points: usize) -> f64 {
    let top = local_only_time(sc);
    let first = |lo: f64, hi: f64| -> f64 {
        (1..=points)
            .map(|k| lo + (hi - lo) * k as f64 / points as f64)
            .find(|&t| feasible_direct(sc, t))
            .unwrap_or(hi)
    };
    let coarse = first(0.0, top);
    let cell = top / points as f64;
    first((coarse - cell).max(0.0), coarse)
}

// ---- randomized cases shared by the oracle tests and the acceptance run ----

use noma_mec::energy_alloc::{solve_energy_subproblem, EnergyOptions, EnergySubproblemInput};
use noma_mec::solvers::{
    audit, check_feasibility_conditions, recover_feasible_point, solve_alg2_min_time, solve_infinite_capacity,
};
use noma_mec::time_alloc::{solve_time_subproblem, TimeSubproblemInput};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(tag: u64, seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(tag.wrapping_mul(0x9E37_79B9_7F4A_7C15) ^ seed)
}

fn simplex(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    let w: Vec<f64> = (0..n).map(|_| -rng.random::<f64>().max(1e-12).ln()).collect();
    let s: f64 = w.iter().sum();
    w.iter().map(|v| v / s).collect()
}

pub struct TimeCase {
    pub objective_rel: f64,
    pub airtime_rel: f64,
}

/// Closed-form time block against [`time_oracle`] at random `(d, x, p)`.
pub fn time_case(seed: u64) -> TimeCase {
    let mut r = rng(3, seed);
    let users = 2 * r.random_range(1..=3);
    let omega = r.random_range(0.1..0.9);
    let sc = drop_scenario(seed, users, omega, Some(PairingMethod::SS));
    let d: Vec<Vec<f64>> = sc
        .groups
        .iter()
        .map(|g| g.iter().map(|u| r.random::<f64>() * u.data_size).collect())
        .collect();
    let p: Vec<Vec<f64>> = sc
        .groups
        .iter()
        .map(|g| g.iter().map(|u| r.random_range(0.05..1.0) * u.max_power).collect())
        .collect();
    let x = simplex(&mut r, sc.groups.len());
    let sol = solve_time_subproblem(&sc, TimeSubproblemInput { d: &d, x: &x, p: &p }).unwrap();
    let (_, tau, objective) = time_oracle(&sc, &d, &x, &p);
    let airtime_rel = sol
        .tau
        .iter()
        .zip(&tau)
        .map(|(a, b)| (a - b).abs() / b.max(f64::MIN_POSITIVE))
        .fold(0.0, f64::max);
    TimeCase {
        objective_rel: (sol.objective - objective).abs() / objective.abs(),
        airtime_rel,
    }
}

pub struct EnergyCase {
    pub rel: f64,
    pub kkt: f64,
}

/// Dual energy block against [`energy_oracle`] on two groups of two users
/// with non-binding power caps.
pub fn energy_case(seed: u64) -> EnergyCase {
    let mut r = rng(4, seed);
    for attempt in 0.. {
        let omega = r.random_range(0.1..0.9);
        let sc = drop_scenario(seed * 1000 + attempt, 4, omega, Some(PairingMethod::SS)).with_max_power(1e3);
        let t = r.random_range(0.3..0.9) * local_only_time(&sc);
        let tau: Vec<f64> = (0..2).map(|_| r.random_range(0.05..0.3) * t).collect();
        let cap = capacity(&sc);
        let f: Vec<Vec<f64>> = sc.groups.iter().map(|g| g.iter().map(|_| r.random_range(0.1..0.25) * cap).collect()).collect();
        let Some(oracle) = energy_oracle(&sc, &tau, &f, t) else { continue };
        let sol = solve_energy_subproblem(
            &sc,
            EnergySubproblemInput {
                tau: &tau,
                f: &f,
                completion_time: t,
                fixed_shares: None,
            },
            None,
            EnergyOptions::default(),
            None,
        )
        .unwrap();
        return EnergyCase {
            rel: (sol.energy - oracle).abs() / oracle,
            kkt: sol.kkt_residual,
        };
    }
    unreachable!()
}

pub struct FeasibilityCase {
    pub agree: bool,
    /// Recovered point passes the audit and meets the deadline; `None` when
    /// the deadline is unreachable.
    pub recovered_ok: Option<bool>,
}

/// Closed-form feasibility test against [`feasible_direct`].
pub fn feasibility_case(seed: u64) -> FeasibilityCase {
    let mut r = rng(7, seed);
    let users = 2 * r.random_range(1..=3);
    let sc = drop_scenario(seed, users, 0.5, Some(PairingMethod::SS));
    // half the deadlines land near the threshold, where the verdict flips
    let t = if seed % 2 == 0 {
        let threshold = solve_alg2_min_time(&sc, 1e-6).unwrap().breakdown.completion_time;
        threshold * r.random_range(0.9..1.1)
    } else {
        local_only_time(&sc) * 10f64.powf(r.random_range(-2.0..0.0))
    };
    let check = check_feasibility_conditions(&sc, t);
    let direct = feasible_direct(&sc, t);
    let recovered_ok = check.feasible.then(|| match recover_feasible_point(&sc, t, &check.t_bar, &check.d) {
        Ok(alloc) => audit(&sc, &alloc).is_feasible() && alloc.completion_time <= t * (1.0 + 1e-12),
        Err(_) => false,
    });
    FeasibilityCase {
        agree: check.feasible == direct,
        recovered_ok,
    }
}

/// Relative distance between the bisection result and the scanned least
/// completion time.
pub fn min_time_case(seed: u64, points: usize) -> f64 {
    let mut r = rng(8, seed);
    let users = 2 * r.random_range(1..=3);
    let sc = drop_scenario(seed, users, 1.0, Some(PairingMethod::SS));
    let report = solve_alg2_min_time(&sc, 1e-4).unwrap();
    let scanned = scan_min_time(&sc, points);
    (report.breakdown.completion_time - scanned).abs() / scanned
}

/// `|Σ τ − T| / T` of the unlimited-cloud solution.
pub fn infinite_slot_case(seed: u64, omega: f64) -> f64 {
    let mut r = rng(9, seed);
    let users = 2 * r.random_range(1..=4);
    let sc = drop_scenario(seed, users, omega, Some(PairingMethod::SS)).with_cloud_capacity(CloudCapacity::Infinite);
    let rep = solve_infinite_capacity(&sc).unwrap();
    let a = &rep.allocation;
    (a.tau.iter().sum::<f64>() - a.completion_time).abs() / a.completion_time
}

/// Unlimited-cloud completion time at `ω = 1` against bisection with a huge
/// finite capacity.
pub fn infinite_vs_bisection(seed: u64) -> f64 {
    let mut r = rng(10, seed);
    let users = 2 * r.random_range(1..=4);
    let sc = drop_scenario(seed, users, 1.0, Some(PairingMethod::SS));
    let inf = solve_infinite_capacity(&sc.with_cloud_capacity(CloudCapacity::Infinite)).unwrap();
    let fin = solve_alg2_min_time(&sc.with_cloud_capacity(CloudCapacity::Finite(1e30)), 1e-6).unwrap();
    let (a, b) = (inf.breakdown.completion_time, fin.breakdown.completion_time);
    (a - b).abs() / b
}
