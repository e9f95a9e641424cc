//! Offloaded data, time-sharing factors and powers for fixed airtime, cloud
//! speeds and completion time.
//!
//! The block is convex, and is solved by a Lagrangian dual method. The
//! Lagrangian is minimised in closed form for `d` and `x` and by exact
//! coordinate descent for `p`. The multipliers then take projected
//! subgradient steps. Dual iterates are rarely primal feasible, so every
//! iterate is also repaired into a feasible point and the best repaired point
//! is kept. The gap between that point and the best dual value is a
//! certificate of accuracy and is reported as the KKT residual.

use std::f64::consts::LN_2;

use crate::error::{Error, Result};
use crate::noma_phy::{self, Link};
use crate::scenario::Scenario;

const LEVEL_PATIENCE: usize = 200;

/// Lagrange multipliers of the energy block, one entry per user unless noted.
#[derive(Debug, Clone, PartialEq)]
pub struct DualState {
    /// Offload deadline `τ/x + C d/f ≤ T`.
    pub beta: Vec<Vec<f64>>,
    /// Suffix rate constraint starting at user `j`.
    pub lambda: Vec<Vec<f64>>,
    /// `p ≥ 0`.
    pub zeta: Vec<Vec<f64>>,
    /// `p ≤ P`.
    pub eta: Vec<Vec<f64>>,
    /// `d ≥ D`.
    pub theta: Vec<Vec<f64>>,
    /// `d² ≤ R²`.
    pub nu: Vec<Vec<f64>>,
    /// Share budget `Σ x = 1`; recomputed from `beta`.
    pub mu: f64,
    pub step_scale_delta0: f64,
    pub iteration: usize,
}

impl DualState {
    pub fn zeros(scenario: &Scenario) -> Self {
        let shape: Vec<Vec<f64>> = scenario.groups.iter().map(|g| vec![0.0; g.len()]).collect();
        DualState {
            beta: shape.clone(),
            lambda: shape.clone(),
            zeta: shape.clone(),
            eta: shape.clone(),
            theta: shape.clone(),
            nu: shape,
            mu: 0.0,
            step_scale_delta0: 0.1,
            iteration: 0,
        }
    }
}

#[derive(Debug, Clone, Copy)]
pub struct EnergySubproblemInput<'a> {
    pub tau: &'a [f64],
    /// Cloud speed per user; `f64::INFINITY` when capacity is unlimited.
    pub f: &'a [Vec<f64>],
    pub completion_time: f64,
    /// Pinned time-sharing factors (frequency sharing, equal-time NOMA).
    /// `None` means the factors are free on the simplex.
    pub fixed_shares: Option<&'a [f64]>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EnergyPrimal {
    pub d: Vec<Vec<f64>>,
    pub x: Vec<f64>,
    pub p: Vec<Vec<f64>>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EnergyOptions {
    pub max_iters: usize,
    /// Target relative duality gap.
    pub tol: f64,
    /// Stop after this many iterations without improvement of either bound.
    pub stall_window: usize,
}

impl Default for EnergyOptions {
    fn default() -> Self {
        EnergyOptions {
            max_iters: 20_000,
            tol: 1e-6,
            stall_window: 20_000,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EnergySubproblemSolution {
    pub d: Vec<Vec<f64>>,
    pub x: Vec<f64>,
    pub p: Vec<Vec<f64>>,
    /// `Σ τ p + Σ C Q (R − d)`.
    pub energy: f64,
    /// Relative gap between `energy` and the best dual bound.
    pub kkt_residual: f64,
    pub dual_value: f64,
    pub iterations: usize,
    pub multipliers: DualState,
}

/// One line of the optional diagnostic trace.
#[derive(Debug, Clone, Copy)]
pub struct DualTrace {
    pub iteration: usize,
    pub dual_value: f64,
    pub best_primal: f64,
    /// Largest scaled constraint violation of the Lagrangian minimiser.
    pub max_residual: f64,
    pub step: f64,
}

/// Data every user must offload to meet the deadline locally,
/// `max{(C R − T F)/C, 0}`.
pub fn lower_offload_bound(scenario: &Scenario, deadline: f64) -> Vec<Vec<f64>> {
    scenario.min_offloads(deadline)
}

// Fixed per-solve data shared by the updates.
struct Ctx<'a> {
    sc: &'a Scenario,
    input: EnergySubproblemInput<'a>,
    link: Link,
    lower: Vec<Vec<f64>>,
    gains: Vec<Vec<f64>>,
    caps: Vec<Vec<f64>>,
}

impl<'a> Ctx<'a> {
    fn new(sc: &'a Scenario, input: EnergySubproblemInput<'a>) -> Self {
        Ctx {
            sc,
            input,
            link: sc.link(),
            lower: lower_offload_bound(sc, input.completion_time),
            gains: (0..sc.group_count()).map(|i| sc.gains(i)).collect(),
            caps: (0..sc.group_count()).map(|i| sc.power_caps(i)).collect(),
        }
    }

    /// `C/f`; zero for unlimited speed. Users without cloud speed are
    /// pinned to their lower bound instead (see `d_box`).
    fn cloud_time_per_bit(&self, i: usize, j: usize) -> f64 {
        let f = self.input.f[i][j];
        if f.is_infinite() || f <= 0.0 {
            0.0
        } else {
            self.sc.groups[i][j].cycles_per_bit / f
        }
    }

    fn d_box(&self, i: usize, j: usize) -> (f64, f64) {
        let lo = self.lower[i][j];
        let pinned = self.input.f[i][j] <= 0.0 || self.input.tau[i] <= 0.0;
        if pinned {
            (lo, lo)
        } else {
            (lo, self.sc.groups[i][j].data_size)
        }
    }

    /// Smallest share each group can live with, `max_j τ / (T − C D/f)`;
    /// `None` when some group cannot meet the deadline with any share.
    fn share_floors(&self) -> Option<Vec<f64>> {
        let t = self.input.completion_time;
        let mut need = vec![0.0; self.sc.group_count()];
        for (i, nd) in need.iter_mut().enumerate() {
            let tau = self.input.tau[i];
            if tau <= 0.0 {
                continue;
            }
            for j in 0..self.sc.groups[i].len() {
                let room = t - self.cloud_time_per_bit(i, j) * self.lower[i][j];
                if room <= 0.0 {
                    return None;
                }
                *nd = f64::max(*nd, tau / room);
            }
        }
        Some(need)
    }

    fn energy(&self, d: &[Vec<f64>], p: &[Vec<f64>]) -> f64 {
        let mut e = 0.0;
        for (i, g) in self.sc.groups.iter().enumerate() {
            e += self.input.tau[i] * p[i].iter().sum::<f64>();
            for (j, u) in g.iter().enumerate() {
                e += u.local_energy(d[i][j]);
            }
        }
        e
    }
}

/// Offloaded data minimising the Lagrangian.
///
/// With `ν > 0` the stationarity condition has the interior solution
/// `d = [f C Q − β C − f Σ_{l≤j} λ_l + f θ] / (2 f ν)`. With `ν = 0` the
/// Lagrangian is linear in `d`, so `d` sits at `D` when the slope is positive
/// (ties included) and at `R` otherwise. Users without cloud speed or
/// airtime are pinned to `D`.
pub fn update_primal_d(scenario: &Scenario, state: &DualState, input: EnergySubproblemInput<'_>) -> Vec<Vec<f64>> {
    let ctx = Ctx::new(scenario, input);
    primal_d(&ctx, state)
}

fn primal_d(ctx: &Ctx<'_>, state: &DualState) -> Vec<Vec<f64>> {
    ctx.sc
        .groups
        .iter()
        .enumerate()
        .map(|(i, g)| {
            let mut prefix_lambda = 0.0;
            g.iter()
                .enumerate()
                .map(|(j, u)| {
                    prefix_lambda += state.lambda[i][j];
                    let (lo, hi) = ctx.d_box(i, j);
                    if lo == hi {
                        return lo;
                    }
                    let cq = u.cycles_per_bit * u.energy_per_cycle;
                    let slope_free =
                        -cq + state.beta[i][j] * ctx.cloud_time_per_bit(i, j) + prefix_lambda - state.theta[i][j];
                    let nu = state.nu[i][j];
                    if nu > 0.0 {
                        (-slope_free / (2.0 * nu)).clamp(lo, hi)
                    } else if slope_free >= 0.0 {
                        lo
                    } else {
                        hi
                    }
                })
                .collect()
        })
        .collect()
}

/// Time-sharing factors minimising the Lagrangian on the simplex,
/// `x_i = sqrt(b_i / μ)` with `b_i = τ_i Σ_j β_ij` and `μ = (Σ sqrt(b))²`.
///
/// Each group also needs `x_i ≥ τ_i / (T − C D/f)` to meet its deadline at
/// all. Floors that bind are enforced by water-filling over the remaining
/// groups; when none binds the formula above is exact. Equal shares are
/// used when every `b_i` is zero, and pinned factors are returned
/// unchanged.
pub fn update_primal_x(scenario: &Scenario, state: &DualState, input: EnergySubproblemInput<'_>) -> Vec<f64> {
    let ctx = Ctx::new(scenario, input);
    primal_x(&ctx, state)
}

fn primal_x(ctx: &Ctx<'_>, state: &DualState) -> Vec<f64> {
    if let Some(x) = ctx.input.fixed_shares {
        return x.to_vec();
    }
    let roots: Vec<f64> = state
        .beta
        .iter()
        .zip(ctx.input.tau)
        .map(|(b, &t)| (t * b.iter().sum::<f64>()).max(0.0).sqrt())
        .collect();
    let floors = ctx.share_floors().unwrap_or_else(|| vec![0.0; roots.len()]);
    water_fill(&roots, &floors)
}

// x_i = max(floor_i, s·root_i) with s chosen so that Σx = 1.
fn water_fill(roots: &[f64], floors: &[f64]) -> Vec<f64> {
    let n = roots.len();
    let floor_sum: f64 = floors.iter().sum();
    let root_sum: f64 = roots.iter().sum();
    if floor_sum >= 1.0 {
        return floors.iter().map(|f| f / floor_sum).collect();
    }
    if root_sum <= 0.0 {
        let extra = (1.0 - floor_sum) / n as f64;
        return floors.iter().map(|f| f + extra).collect();
    }
    let total = |s: f64| -> f64 { roots.iter().zip(floors).map(|(r, f)| f.max(s * r)).sum() };
    let s0 = 1.0 / root_sum;
    if floors.iter().zip(roots).all(|(f, r)| *f <= s0 * r) {
        return roots.iter().map(|r| r * s0).collect();
    }
    let (mut lo, mut hi) = (0.0, s0);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if total(mid) > 1.0 {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    let x: Vec<f64> = roots.iter().zip(floors).map(|(r, f)| f.max(lo * r)).collect();
    // put the bisection remainder on the unconstrained groups
    let sum: f64 = x.iter().sum();
    let free: f64 = x.iter().zip(floors).filter(|(v, f)| *v > *f).map(|(v, _)| *v).sum();
    if free > 0.0 {
        let k = 1.0 + (1.0 - sum) / free;
        x.iter().zip(floors).map(|(v, f)| if v > f { v * k } else { *v }).collect()
    } else {
        x
    }
}

fn share_multiplier(state: &DualState, tau: &[f64]) -> f64 {
    let root_sum: f64 = state
        .beta
        .iter()
        .zip(tau)
        .map(|(b, &t)| (t * b.iter().sum::<f64>()).max(0.0).sqrt())
        .sum();
    root_sum * root_sum
}

/// Powers minimising the Lagrangian, group by group.
///
/// After dividing by `τ` the power part of the Lagrangian is
/// `Σ p − (B/ln2) Σ_k λ_k ln(1 + A_k/σ²B)` with suffix aggregates
/// `A_k = Σ_{l≥k} p_l h_l`, which is convex with box constraints only.
/// Coordinates are swept from the weakest user to the strongest, solving
/// `1 = (B/ln2) h_j Σ_{k≤j} λ_k/(σ²B + A_k)` for `p_j` and clamping to
/// `[0, P_j]`, until the sweep stops moving. A single-user group gets
/// `p = (B λ h/ln2 − σ²B)/h` directly.
pub fn update_primal_p(scenario: &Scenario, state: &DualState, input: EnergySubproblemInput<'_>) -> Vec<Vec<f64>> {
    let ctx = Ctx::new(scenario, input);
    let mut p: Vec<Vec<f64>> = scenario.groups.iter().map(|g| vec![0.0; g.len()]).collect();
    primal_p(&ctx, state, &mut p);
    p
}

fn primal_p(ctx: &Ctx<'_>, state: &DualState, p: &mut [Vec<f64>]) {
    let b = ctx.link.bandwidth;
    let noise = ctx.link.noise_power();
    for i in 0..p.len() {
        let lam = &state.lambda[i];
        let h = &ctx.gains[i];
        let cap = &ctx.caps[i];
        let m = lam.len();
        if ctx.input.tau[i] <= 0.0 || lam.iter().all(|&l| l <= 0.0) {
            p[i].iter_mut().for_each(|v| *v = 0.0);
            continue;
        }
        let pg = &mut p[i];
        for _sweep in 0..200 {
            let mut moved = 0.0f64;
            for j in (0..m).rev() {
                // A_k minus user j's own term, for every k ≤ j
                let weaker: f64 = (j + 1..m).map(|l| pg[l] * h[l]).sum();
                let mut others = vec![weaker; j + 1];
                for k in (0..j).rev() {
                    others[k] = others[k + 1] + pg[k] * h[k];
                }
                let marginal = |pj: f64| -> f64 {
                    (b / LN_2) * h[j] * (0..=j).map(|k| lam[k] / (noise + others[k] + pj * h[j])).sum::<f64>()
                };
                let active: Vec<usize> = (0..=j).filter(|&k| lam[k] > 0.0).collect();
                let new = if marginal(0.0) <= 1.0 {
                    0.0
                } else if marginal(cap[j]) >= 1.0 {
                    cap[j]
                } else if active.len() == 1 {
                    let k = active[0];
                    ((b * lam[k] * h[j] / LN_2 - noise - others[k]) / h[j]).clamp(0.0, cap[j])
                } else {
                    let (mut lo, mut hi) = (0.0, cap[j]);
                    for _ in 0..200 {
                        let mid = 0.5 * (lo + hi);
                        if mid <= lo || mid >= hi {
                            break;
                        }
                        if marginal(mid) > 1.0 {
                            lo = mid;
                        } else {
                            hi = mid;
                        }
                    }
                    0.5 * (lo + hi)
                };
                moved = moved.max((new - pg[j]).abs() / cap[j].max(f64::MIN_POSITIVE));
                pg[j] = new;
            }
            if moved < 1e-13 {
                break;
            }
        }
    }
}

/// Scaled constraint residuals of a primal point, in the multiplier layout.
struct Residuals {
    beta: Vec<Vec<f64>>,
    lambda: Vec<Vec<f64>>,
}

fn residuals(ctx: &Ctx<'_>, primal: &EnergyPrimal) -> Residuals {
    let t = ctx.input.completion_time;
    let mut beta = Vec::new();
    let mut lambda = Vec::new();
    for (i, g) in ctx.sc.groups.iter().enumerate() {
        let tau = ctx.input.tau[i];
        let window = if tau > 0.0 { tau / primal.x[i] } else { 0.0 };
        beta.push(
            (0..g.len())
                .map(|j| window + ctx.cloud_time_per_bit(i, j) * primal.d[i][j] - t)
                .collect(),
        );
        let mut bits = 0.0;
        let mut rx = 0.0;
        let mut lam = vec![0.0; g.len()];
        for j in (0..g.len()).rev() {
            bits += primal.d[i][j];
            rx += primal.p[i][j] * ctx.gains[i][j];
            lam[j] = bits - tau * ctx.link.rate(rx / ctx.link.noise_power());
        }
        lambda.push(lam);
    }
    Residuals { beta, lambda }
}

/// Projected subgradient step on every multiplier, `m ← [m + δ·residual]⁺`,
/// followed by `μ` from the updated `β`.
///
/// `step` holds the per-family step sizes `(β, λ, ζ/η, θ, ν)` already
/// multiplied by their constraint scales.
pub fn update_multipliers(
    scenario: &Scenario,
    state: &DualState,
    primal: &EnergyPrimal,
    input: EnergySubproblemInput<'_>,
    step: [f64; 5],
) -> DualState {
    let ctx = Ctx::new(scenario, input);
    let res = residuals(&ctx, primal);
    let mut next = state.clone();
    for (i, g) in scenario.groups.iter().enumerate() {
        for (j, u) in g.iter().enumerate() {
            let d = primal.d[i][j];
            let p = primal.p[i][j];
            next.beta[i][j] = (state.beta[i][j] + step[0] * res.beta[i][j]).max(0.0);
            next.lambda[i][j] = (state.lambda[i][j] + step[1] * res.lambda[i][j]).max(0.0);
            next.zeta[i][j] = (state.zeta[i][j] - step[2] * p).max(0.0);
            next.eta[i][j] = (state.eta[i][j] + step[2] * (p - u.max_power)).max(0.0);
            next.theta[i][j] = (state.theta[i][j] + step[3] * (ctx.lower[i][j] - d)).max(0.0);
            next.nu[i][j] = (state.nu[i][j] + step[4] * (d * d - u.data_size * u.data_size)).max(0.0);
        }
    }
    next.mu = share_multiplier(&next, input.tau);
    next.iteration = state.iteration + 1;
    next
}

// Lagrangian value at the given minimiser; only β and λ carry weight since
// the boxes on d and p and the simplex on x are kept as explicit domains
// (θ and ν stay at zero under that convention).
fn lagrangian(ctx: &Ctx<'_>, state: &DualState, primal: &EnergyPrimal) -> f64 {
    let res = residuals(ctx, primal);
    let mut value = ctx.energy(&primal.d, &primal.p);
    for i in 0..res.beta.len() {
        for j in 0..res.beta[i].len() {
            if state.beta[i][j] > 0.0 {
                value += state.beta[i][j] * res.beta[i][j];
            }
            if state.lambda[i][j] > 0.0 {
                value += state.lambda[i][j] * res.lambda[i][j];
            }
        }
    }
    value
}

/// Repairs `(x, d)` into a feasible point: shares are lifted to the minimum
/// each group needs at `d = D` (keeping the rest of the raw split), `d` is
/// clipped into its window, then scaled toward `D` until the power caps can
/// carry it, and powers are the least-energy powers for the result.
fn restore(ctx: &Ctx<'_>, x_raw: &[f64], d_raw: &[Vec<f64>]) -> Option<EnergyPrimal> {
    let sc = ctx.sc;
    let t = ctx.input.completion_time;
    let n = sc.group_count();
    let x: Vec<f64> = match ctx.input.fixed_shares {
        Some(x) => x.to_vec(),
        None => {
            let need = ctx.share_floors()?;
            let used: f64 = need.iter().sum();
            if used > 1.0 + 1e-12 {
                return None;
            }
            let spare: Vec<f64> = x_raw.iter().zip(&need).map(|(a, b)| (a - b).max(0.0)).collect();
            let spare_sum: f64 = spare.iter().sum();
            let left = (1.0 - used).max(0.0);
            need.iter()
                .zip(&spare)
                .map(|(nd, s)| {
                    if spare_sum > 0.0 {
                        nd + left * s / spare_sum
                    } else {
                        nd + left / n as f64
                    }
                })
                .collect()
        }
    };
    let mut d = Vec::with_capacity(n);
    let mut p = Vec::with_capacity(n);
    for i in 0..n {
        let tau = ctx.input.tau[i];
        let window = if tau > 0.0 { tau / x[i] } else { 0.0 };
        let lower = &ctx.lower[i];
        let mut dg: Vec<f64> = (0..sc.groups[i].len())
            .map(|j| {
                let (lo, hi) = ctx.d_box(i, j);
                let per_bit = ctx.cloud_time_per_bit(i, j);
                let room = if per_bit > 0.0 { (t - window) / per_bit } else if t >= window { hi } else { lo };
                d_raw[i][j].min(room).min(hi).max(lo)
            })
            .collect();
        let mut pg = noma_phy::min_powers_with_caps(&dg, tau, &ctx.gains[i], &ctx.caps[i], ctx.link);
        if pg.is_none() {
            let scale = cap_scale(ctx, i, lower, &dg);
            dg = lower.iter().zip(&dg).map(|(lo, v)| lo + scale * (v - lo)).collect();
            pg = noma_phy::min_powers_with_caps(&dg, tau, &ctx.gains[i], &ctx.caps[i], ctx.link);
        }
        p.push(pg?);
        d.push(dg);
    }
    Some(EnergyPrimal { d, x, p })
}

// Data the powers can carry at the group airtime when every suffix rate
// constraint is tight: d_j = τ (r_j − r_{j+1}) with suffix rates r.
fn rate_implied_demands(ctx: &Ctx<'_>, p: &[Vec<f64>]) -> Vec<Vec<f64>> {
    p.iter()
        .enumerate()
        .map(|(i, pg)| {
            let tau = ctx.input.tau[i];
            let m = pg.len();
            let mut suffix = vec![0.0; m + 1];
            let mut rx = 0.0;
            for j in (0..m).rev() {
                rx += pg[j] * ctx.gains[i][j];
                suffix[j] = tau * ctx.link.rate(rx / ctx.link.noise_power());
            }
            (0..m).map(|j| (suffix[j] - suffix[j + 1]).max(0.0)).collect()
        })
        .collect()
}

// Largest s ∈ [0, 1] with the suffix sums of D + s (d − D) within the
// all-caps suffix capacity at airtime τ.
fn cap_scale(ctx: &Ctx<'_>, i: usize, lower: &[f64], d: &[f64]) -> f64 {
    let tau = ctx.input.tau[i];
    let mut s = 1.0f64;
    let (mut lo_sum, mut d_sum, mut rx) = (0.0, 0.0, 0.0);
    for j in (0..d.len()).rev() {
        lo_sum += lower[j];
        d_sum += d[j];
        rx += ctx.caps[i][j] * ctx.gains[i][j];
        let capacity = tau * ctx.link.rate(rx / ctx.link.noise_power());
        if d_sum > capacity && d_sum > lo_sum {
            s = s.min(((capacity - lo_sum) / (d_sum - lo_sum)).max(0.0));
        }
    }
    s * (1.0 - 1e-12)
}

// ---------------------------------------------------------------------------
// Share-multiplier refinement.
//
// With x eliminated through the group windows `w_i = τ_i / x_i`, the only
// constraint linking groups is `Σ τ_i / w_i ≤ 1`. Its multiplier μ is the
// share multiplier of the full Lagrangian. For fixed μ each group solves
// `min_w H_i(w) + μ τ_i / w`, where `H_i(w)` is the least group energy when
// every user must finish its cloud work inside `T − w`. Both levels are
// convex, and `H_i` has an exact solution for groups of one or two users.

fn rx_for_bits(link: Link, bits: f64, airtime: f64) -> f64 {
    link.noise_power() * (bits * LN_2 / (link.bandwidth * airtime)).exp_m1()
}

fn bits_for_rx(link: Link, rx: f64, airtime: f64) -> f64 {
    airtime * link.rate(rx / link.noise_power())
}

// Golden-section search on a convex function; endpoints are checked too.
fn golden_min(f: &mut dyn FnMut(f64) -> f64, lo: f64, hi: f64, iters: usize) -> (f64, f64) {
    let (fa, fb) = (f(lo), f(hi));
    let mut best = if fa <= fb { (lo, fa) } else { (hi, fb) };
    if !(hi > lo) {
        return best;
    }
    let r = 0.5 * (5f64.sqrt() - 1.0);
    let (mut a, mut b) = (lo, hi);
    let mut c = b - r * (b - a);
    let mut d = a + r * (b - a);
    let (mut fc, mut fd) = (f(c), f(d));
    for _ in 0..iters {
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
        if b - a <= 1e-15 * b.abs().max(a.abs()) {
            break;
        }
    }
    for (x, fx) in [(c, fc), (d, fd)] {
        if fx < best.1 {
            best = (x, fx);
        }
    }
    best
}

impl Ctx<'_> {
    /// Least-power energy of group `i` at offloads `d`: `τ Σp + Σ C Q (R − d)`.
    fn group_energy(&self, i: usize, d: &[f64]) -> Option<(Vec<f64>, f64)> {
        let tau = self.input.tau[i];
        let p = noma_phy::min_powers_with_caps(d, tau, &self.gains[i], &self.caps[i], self.link)?;
        let local: f64 = self.sc.groups[i].iter().zip(d).map(|(u, &v)| u.local_energy(v)).sum();
        Some((p.clone(), tau * p.iter().sum::<f64>() + local))
    }

    /// Upper offload bounds of group `i` when its transmission window is `w`.
    fn window_bounds(&self, i: usize, w: f64) -> Vec<f64> {
        let t = self.input.completion_time;
        (0..self.sc.groups[i].len())
            .map(|j| {
                let (lo, hi) = self.d_box(i, j);
                let per_bit = self.cloud_time_per_bit(i, j);
                let room = if per_bit > 0.0 { (t - w) / per_bit } else { hi };
                room.min(hi).max(lo)
            })
            .collect()
    }

    /// Least group energy over `D ≤ d ≤ upper` within the power caps.
    fn group_box_optimum(&self, i: usize, upper: &[f64]) -> Option<(Vec<f64>, Vec<f64>, f64)> {
        let tau = self.input.tau[i];
        let lower = &self.lower[i];
        if tau <= 0.0 || lower.iter().zip(upper).all(|(l, u)| u <= l) {
            return self.group_energy(i, lower).map(|(p, e)| (lower.clone(), p, e));
        }
        let d = match upper.len() {
            1 => self.single_box(i, upper[0])?,
            2 => self.pair_box(i, upper)?,
            _ => self.descend_box(i, upper)?,
        };
        // guard against the caps being hit by rounding
        let mut d = d;
        for _ in 0..60 {
            if let Some((p, e)) = self.group_energy(i, &d) {
                return Some((d, p, e));
            }
            d = d.iter().zip(lower).map(|(v, l)| l + (v - l) * (1.0 - 1e-12)).collect();
        }
        None
    }

    fn single_box(&self, i: usize, upper: f64) -> Option<Vec<f64>> {
        let tau = self.input.tau[i];
        let u = &self.sc.groups[i][0];
        let h = self.gains[i][0];
        let lo = self.lower[i][0];
        let hi = upper.min(bits_for_rx(self.link, self.caps[i][0] * h, tau));
        if hi < lo * (1.0 - 1e-12) {
            return None;
        }
        // τ φ'(d)/h = C Q  ⇔  d = Bτ log2(C Q B h / (σ²B ln2))
        let cq = u.cycles_per_bit * u.energy_per_cycle;
        let arg = cq * self.link.bandwidth * h / (self.link.noise_power() * LN_2);
        let stationary = if arg > 1.0 { self.link.bandwidth * tau * arg.log2() } else { 0.0 };
        Some(vec![stationary.min(hi).max(lo)])
    }

    // Two users, strong first. With S = d₀ + d₁ the powers follow from the
    // aggregates a₀ = φ(S) and a₁ = max(φ(d₁), a₀ − P₀h₀), so for fixed S the
    // best d₁ is an endpoint, the kink, or the stationary point of a convex
    // one-dimensional function; S itself is found by golden section.
    fn pair_box(&self, i: usize, upper: &[f64]) -> Option<Vec<f64>> {
        let tau = self.input.tau[i];
        let link = self.link;
        let g = &self.sc.groups[i];
        let (h0, h1) = (self.gains[i][0], self.gains[i][1]);
        let (cap0, cap1) = (self.caps[i][0] * h0, self.caps[i][1] * h1);
        let (lo0, lo1) = (self.lower[i][0], self.lower[i][1]);
        let cq0 = g[0].cycles_per_bit * g[0].energy_per_cycle;
        let cq1 = g[1].cycles_per_bit * g[1].energy_per_cycle;
        let w1 = (1.0 / h1 - 1.0 / h0).max(0.0);
        let k0 = bits_for_rx(link, cap0 + cap1, tau);
        let k1 = bits_for_rx(link, cap1, tau);
        let up1 = upper[1].min(k1);
        let s_lo = lo0 + lo1;
        let s_hi = (upper[0] + up1).min(k0);
        if up1 < lo1 * (1.0 - 1e-12) || s_hi < s_lo * (1.0 - 1e-12) {
            return None;
        }
        let s_hi = s_hi.max(s_lo);
        let delta = cq0 - cq1;
        let noise = link.noise_power();
        let phi = |bits: f64| rx_for_bits(link, bits, tau);
        let inner = |s: f64| -> (f64, f64) {
            let lo = lo1.max(s - upper[0]);
            let hi = up1.min(s - lo0).max(lo);
            let c = phi(s) - cap0;
            let f = |d1: f64| tau * w1 * phi(d1).max(c) + delta * d1;
            let kink = if c > 0.0 { bits_for_rx(link, c, tau) } else { f64::NEG_INFINITY };
            let mut cands = vec![lo, hi, kink.clamp(lo, hi)];
            if delta < 0.0 && w1 > 0.0 {
                let arg = -delta * link.bandwidth / (w1 * noise * LN_2);
                if arg > 1.0 {
                    let st = link.bandwidth * tau * arg.log2();
                    cands.push(st.clamp(lo.max(kink.min(hi)), hi));
                }
            }
            cands
                .into_iter()
                .map(|d1| (d1, f(d1)))
                .fold((lo, f64::INFINITY), |a, b| if b.1 < a.1 { b } else { a })
        };
        let mut outer = |s: f64| tau * phi(s) / h0 - cq0 * s + inner(s).1;
        let (s, _) = golden_min(&mut outer, s_lo, s_hi, 90);
        let d1 = inner(s).0;
        Some(vec![(s - d1).max(lo0), d1])
    }

    // Larger groups: start from the greedy most-valuable-first fill, then
    // improve by exact line searches along single coordinates and along
    // pairwise transfers until nothing moves. Not certified optimal.
    fn descend_box(&self, i: usize, upper: &[f64]) -> Option<Vec<f64>> {
        let tau = self.input.tau[i];
        let m = upper.len();
        let lower = &self.lower[i];
        let g = &self.sc.groups[i];
        let mut suffix_cap = vec![0.0; m];
        let mut rx = 0.0;
        for j in (0..m).rev() {
            rx += self.caps[i][j] * self.gains[i][j];
            suffix_cap[j] = bits_for_rx(self.link, rx, tau);
        }
        let suffix = |d: &[f64]| -> Vec<f64> {
            let mut s = vec![0.0; m];
            let mut acc = 0.0;
            for j in (0..m).rev() {
                acc += d[j];
                s[j] = acc;
            }
            s
        };
        let mut d = lower.clone();
        if suffix(&d).iter().zip(&suffix_cap).any(|(s, k)| *s > k * (1.0 + 1e-12)) {
            return None;
        }
        let mut order: Vec<usize> = (0..m).collect();
        order.sort_by(|&a, &b| {
            let va = g[a].cycles_per_bit * g[a].energy_per_cycle;
            let vb = g[b].cycles_per_bit * g[b].energy_per_cycle;
            vb.total_cmp(&va)
        });
        for &j in &order {
            let s = suffix(&d);
            let room = (0..=j).map(|k| suffix_cap[k] - s[k]).fold(f64::INFINITY, f64::min);
            d[j] = (d[j] + room.max(0.0)).min(upper[j]);
        }
        let energy = |d: &[f64]| self.group_energy(i, d).map_or(f64::INFINITY, |(_, e)| e);
        let mut current = energy(&d);
        for _sweep in 0..100 {
            let start = current;
            for j in 0..m {
                let s = suffix(&d);
                let room = (0..=j).map(|k| suffix_cap[k] - s[k]).fold(f64::INFINITY, f64::min);
                let hi = (d[j] + room.max(0.0)).min(upper[j]);
                let mut trial = d.clone();
                let mut f = |v: f64| {
                    trial[j] = v;
                    energy(&trial)
                };
                let (v, e) = golden_min(&mut f, lower[j], hi.max(lower[j]), 80);
                if e < current {
                    d[j] = v;
                    current = e;
                }
            }
            for j in 0..m {
                for l in j + 1..m {
                    // move s bits from l to j: suffixes j < k ≤ l lose s
                    let s = suffix(&d);
                    let slack = (j + 1..=l).map(|k| suffix_cap[k] - s[k]).fold(f64::INFINITY, f64::min);
                    let s_hi = (upper[j] - d[j]).min(d[l] - lower[l]);
                    let s_lo = -(d[j] - lower[j]).min(upper[l] - d[l]).min(slack.max(0.0));
                    if !(s_hi > s_lo) {
                        continue;
                    }
                    let base = d.clone();
                    let mut trial = d.clone();
                    let mut f = |v: f64| {
                        trial[j] = base[j] + v;
                        trial[l] = base[l] - v;
                        energy(&trial)
                    };
                    let (v, e) = golden_min(&mut f, s_lo, s_hi, 80);
                    if e < current {
                        d[j] = base[j] + v;
                        d[l] = base[l] - v;
                        current = e;
                    }
                }
            }
            if start - current <= 1e-15 * start.abs() {
                break;
            }
        }
        Some(d)
    }

    /// Best window of group `i` for share price `mu`:
    /// `(w, d, p, H(w))`, minimising `H(w) + μ τ / w`.
    fn group_window(&self, i: usize, mu: f64) -> Option<(f64, Vec<f64>, Vec<f64>, f64)> {
        let tau = self.input.tau[i];
        if tau <= 0.0 {
            let (d, p, e) = self.group_box_optimum(i, &self.lower[i])?;
            return Some((f64::INFINITY, d, p, e));
        }
        let t = self.input.completion_time;
        let w_hi = (0..self.sc.groups[i].len())
            .map(|j| t - self.cloud_time_per_bit(i, j) * self.lower[i][j])
            .fold(t, f64::min);
        if w_hi < tau {
            return None;
        }
        let mut f = |w: f64| match self.group_box_optimum(i, &self.window_bounds(i, w)) {
            Some((_, _, e)) => e + mu * tau / w,
            None => f64::INFINITY,
        };
        let (w, _) = golden_min(&mut f, tau, w_hi, 70);
        let (d, p, e) = self.group_box_optimum(i, &self.window_bounds(i, w))?;
        Some((w, d, p, e))
    }
}

struct Refined {
    primal: EnergyPrimal,
    /// Valid lower bound when every inner group solve is exact.
    lower_bound: Option<f64>,
}

fn refine_by_share_price(ctx: &Ctx<'_>, sink: &mut Option<&mut dyn FnMut(&DualTrace)>) -> Option<Refined> {
    let n = ctx.sc.group_count();
    let exact = ctx.sc.groups.iter().all(|g| g.len() <= 2);
    if let Some(x) = ctx.input.fixed_shares {
        let mut d = Vec::with_capacity(n);
        let mut p = Vec::with_capacity(n);
        let mut energy = 0.0;
        for i in 0..n {
            let tau = ctx.input.tau[i];
            let w = if tau > 0.0 { tau / x[i] } else { 0.0 };
            let (dg, pg, e) = ctx.group_box_optimum(i, &ctx.window_bounds(i, w))?;
            d.push(dg);
            p.push(pg);
            energy += e;
        }
        return Some(Refined {
            primal: EnergyPrimal { d, x: x.to_vec(), p },
            lower_bound: exact.then_some(energy),
        });
    }

    type Sol = (Vec<f64>, Vec<Vec<f64>>, Vec<Vec<f64>>, f64, f64);
    // (x, d, p, Σ H, dual value)
    let eval = |mu: f64| -> Option<Sol> {
        let mut x = Vec::with_capacity(n);
        let mut d = Vec::with_capacity(n);
        let mut p = Vec::with_capacity(n);
        let mut energy = 0.0;
        let mut share = 0.0;
        for i in 0..n {
            let (w, dg, pg, e) = ctx.group_window(i, mu)?;
            let xi = if w.is_finite() { ctx.input.tau[i] / w } else { 0.0 };
            share += xi;
            energy += e;
            x.push(xi);
            d.push(dg);
            p.push(pg);
        }
        Some((x, d, p, energy, energy + mu * (share - 1.0)))
    };
    let share_sum = |s: &Sol| s.0.iter().sum::<f64>();

    let at_zero = eval(0.0)?;
    let energy_scale = ctx.sc.local_only_energy().max(f64::MIN_POSITIVE);
    let (lo, hi, lower_bound) = if share_sum(&at_zero) <= 1.0 {
        let lb = at_zero.4;
        (at_zero.clone(), at_zero, lb)
    } else {
        let mut mu_lo = 0.0;
        let mut sol_lo = at_zero;
        let mut mu_hi = energy_scale;
        let mut sol_hi = eval(mu_hi)?;
        let mut guard = 0;
        while share_sum(&sol_hi) > 1.0 {
            mu_lo = mu_hi;
            sol_lo = sol_hi;
            mu_hi *= 4.0;
            sol_hi = eval(mu_hi)?;
            guard += 1;
            if guard > 200 {
                return None;
            }
        }
        let mut best_dual = sol_lo.4.max(sol_hi.4);
        for step in 0..80 {
            let mid = if mu_lo > 0.0 { (mu_lo * mu_hi).sqrt() } else { 0.5 * mu_hi };
            let sol = eval(mid)?;
            best_dual = best_dual.max(sol.4);
            let excess = share_sum(&sol) - 1.0;
            if let Some(f) = sink.as_deref_mut() {
                f(&DualTrace {
                    iteration: step + 1,
                    dual_value: sol.4,
                    best_primal: f64::NAN,
                    max_residual: excess,
                    step: mid,
                });
            }
            if excess > 0.0 {
                mu_lo = mid;
                sol_lo = sol;
            } else {
                mu_hi = mid;
                sol_hi = sol;
            }
            if mu_hi - mu_lo <= 1e-13 * mu_hi {
                break;
            }
        }
        (sol_lo, sol_hi, best_dual)
    };

    // blend the two sides of the share budget so that Σx = 1
    let (s_lo, s_hi) = (share_sum(&lo), share_sum(&hi));
    let theta = if s_lo - s_hi > 0.0 { ((1.0 - s_hi) / (s_lo - s_hi)).clamp(0.0, 1.0) } else { 0.0 };
    let mut x: Vec<f64> = lo.0.iter().zip(&hi.0).map(|(a, b)| theta * a + (1.0 - theta) * b).collect();
    let d: Vec<Vec<f64>> = lo
        .1
        .iter()
        .zip(&hi.1)
        .map(|(a, b)| a.iter().zip(b).map(|(u, v)| theta * u + (1.0 - theta) * v).collect())
        .collect();
    let total: f64 = x.iter().sum();
    if total < 1.0 {
        // spare share only shortens windows
        let spare = (1.0 - total) / n as f64;
        x.iter_mut().for_each(|v| *v += spare);
    } else if total > 1.0 {
        x.iter_mut().for_each(|v| *v /= total);
    }
    let mut p = Vec::with_capacity(n);
    let mut energy = 0.0;
    let mut d_out = Vec::with_capacity(n);
    for (i, dg) in d.into_iter().enumerate() {
        // the blend is feasible by convexity; shave rounding off against the caps
        let mut dg = dg;
        let mut found = None;
        for _ in 0..60 {
            if let Some(r) = ctx.group_energy(i, &dg) {
                found = Some(r);
                break;
            }
            dg = dg.iter().zip(&ctx.lower[i]).map(|(v, l)| l + (v - l) * (1.0 - 1e-12)).collect();
        }
        let (pg, e) = found?;
        p.push(pg);
        energy += e;
        d_out.push(dg);
    }
    let _ = energy;
    Some(Refined {
        primal: EnergyPrimal { d: d_out, x, p },
        lower_bound: exact.then_some(lower_bound),
    })
}

fn check_input(scenario: &Scenario, input: &EnergySubproblemInput<'_>) -> Result<()> {
    let n = scenario.group_count();
    if input.tau.len() != n || input.f.len() != n {
        return Err(Error::field("tau", "one airtime per group expected"));
    }
    if !(input.completion_time > 0.0) {
        return Err(Error::field("T", "completion time must be positive"));
    }
    if input.tau.iter().any(|&t| !(t >= 0.0) || !t.is_finite()) {
        return Err(Error::field("tau", "airtime must be finite and nonnegative"));
    }
    for (g, fg) in scenario.groups.iter().zip(input.f) {
        if fg.len() != g.len() || fg.iter().any(|&v| !(v >= 0.0)) {
            return Err(Error::field("f", "one nonnegative cloud speed per user expected"));
        }
    }
    if let Some(x) = input.fixed_shares {
        if x.len() != n || x.iter().any(|&v| !(v > 0.0)) {
            return Err(Error::field("x", "pinned shares must be positive, one per group"));
        }
    }
    Ok(())
}

/// Dual method for the energy block.
///
/// The first stage prices the share budget. For a share price μ every
/// group picks its window and offloads independently, and bisection on μ
/// balances `Σx = 1`. The dual value at the final price is a lower bound,
/// and it is exact for groups of at most two users.
///
/// If that bound leaves a gap above `options.tol`, the full multiplier
/// iteration runs: closed-form `d`, `x` and `p` updates, then projected
/// Polyak steps on `β` and `λ` aimed at a target level above the best dual
/// value. The level is halved whenever it stops paying off.
///
/// Every candidate is repaired into a feasible point and the best is
/// returned. The incoming iterate seeds the candidates, so the result never
/// does worse than it. `kkt_residual` is the relative gap between the
/// returned energy and the best lower bound.
pub fn solve_energy_subproblem(
    scenario: &Scenario,
    input: EnergySubproblemInput<'_>,
    incoming: Option<&EnergyPrimal>,
    options: EnergyOptions,
    mut sink: Option<&mut dyn FnMut(&DualTrace)>,
) -> Result<EnergySubproblemSolution> {
    check_input(scenario, &input)?;
    let ctx = Ctx::new(scenario, input);
    let n = scenario.group_count();

    // constraint scales: seconds for β, bits for λ, energy for the objective
    let t_scale = input.completion_time;
    let energy_scale: f64 = scenario.local_only_energy().max(f64::MIN_POSITIVE);
    let bit_scale: Vec<f64> = scenario
        .groups
        .iter()
        .map(|g| g.iter().map(|u| u.data_size).sum::<f64>())
        .collect();

    let mut best: Option<EnergyPrimal> = None;
    let mut best_energy = f64::INFINITY;
    let consider = |cand: Option<EnergyPrimal>, best: &mut Option<EnergyPrimal>, best_energy: &mut f64| {
        if let Some(c) = cand {
            let e = ctx.energy(&c.d, &c.p);
            if e < *best_energy {
                *best_energy = e;
                *best = Some(c);
            }
        }
    };
    if let Some(inc) = incoming {
        consider(restore(&ctx, &inc.x, &inc.d), &mut best, &mut best_energy);
    }
    // everything at the lower bound is the least demanding point
    consider(
        restore(&ctx, &primal_x(&ctx, &DualState::zeros(scenario)), &ctx.lower),
        &mut best,
        &mut best_energy,
    );

    // the share-price refinement is exact for groups of up to two users; the
    // full multiplier iteration only runs when it leaves a gap
    let mut certified = f64::NEG_INFINITY;
    if let Some(r) = refine_by_share_price(&ctx, &mut sink) {
        if let Some(lb) = r.lower_bound {
            certified = lb;
        }
        consider(Some(r.primal), &mut best, &mut best_energy);
    }
    let rel_gap = |ub: f64, lb: f64| ((ub - lb) / ub.abs().max(1e-9 * energy_scale)).max(0.0);
    let mut gap = rel_gap(best_energy, certified);
    let max_iters = if gap <= options.tol { 0 } else { options.max_iters };

    let mut state = DualState::zeros(scenario);
    let mut best_state = state.clone();
    let mut best_dual = f64::NEG_INFINITY;
    let mut p_work: Vec<Vec<f64>> = scenario.groups.iter().map(|g| vec![0.0; g.len()]).collect();
    let mut avg_x = vec![0.0; n];
    let mut avg_d: Vec<Vec<f64>> = p_work.clone();
    let mut avg_weight = 0.0;
    let mut last_progress = 0usize;
    // variable target level: steps aim at best_dual + level
    let mut level = f64::INFINITY;
    let mut last_dual_gain = 0usize;
    let mut iterations = 0usize;

    for it in 1..=max_iters {
        iterations = it;
        let d = primal_d(&ctx, &state);
        let x = primal_x(&ctx, &state);
        primal_p(&ctx, &state, &mut p_work);
        let primal = EnergyPrimal { d, x, p: p_work.clone() };
        let dual = lagrangian(&ctx, &state, &primal);

        if dual > best_dual {
            if dual >= best_dual + 0.5 * level || best_dual == f64::NEG_INFINITY {
                last_dual_gain = it;
            }
            best_dual = dual;
            best_state = state.clone();
        }
        if level == f64::INFINITY {
            level = (best_energy - best_dual).max(f64::MIN_POSITIVE);
        }
        if it - last_dual_gain > LEVEL_PATIENCE {
            // target was too ambitious: lower it and restart from the best multipliers
            level *= 0.5;
            last_dual_gain = it;
            state = best_state.clone();
            continue;
        }

        let before = best_energy;
        consider(restore(&ctx, &primal.x, &primal.d), &mut best, &mut best_energy);
        let w = 1.0 / (it as f64).sqrt();
        avg_weight += w;
        for i in 0..n {
            avg_x[i] += w * (primal.x[i] - avg_x[i]) / avg_weight;
            for j in 0..avg_d[i].len() {
                avg_d[i][j] += w * (primal.d[i][j] - avg_d[i][j]) / avg_weight;
            }
        }
        consider(restore(&ctx, &avg_x, &avg_d), &mut best, &mut best_energy);
        let carried = rate_implied_demands(&ctx, &primal.p);
        consider(restore(&ctx, &primal.x, &carried), &mut best, &mut best_energy);
        if best_energy < before - 1e-12 * energy_scale {
            last_progress = it;
        }

        gap = rel_gap(best_energy, best_dual.max(certified));
        let res = residuals(&ctx, &primal);
        let max_residual = res
            .beta
            .iter()
            .flatten()
            .map(|r| r / t_scale)
            .chain(
                res.lambda
                    .iter()
                    .zip(&bit_scale)
                    .flat_map(|(l, s)| l.iter().map(move |r| r / s.max(1.0))),
            )
            .fold(0.0, f64::max);
        if gap <= options.tol || it - last_progress > options.stall_window || level < 1e-3 * options.tol * best_energy.abs() {
            break;
        }

        // Polyak step toward the best feasible value, in scaled coordinates
        // where β carries seconds of violation and λ bits of violation
        let mut norm2 = 0.0;
        for i in 0..n {
            for j in 0..state.beta[i].len() {
                let rb = res.beta[i][j] / t_scale;
                let rl = res.lambda[i][j] / bit_scale[i].max(1.0);
                if state.beta[i][j] > 0.0 || rb > 0.0 {
                    norm2 += rb * rb;
                }
                if state.lambda[i][j] > 0.0 || rl > 0.0 {
                    norm2 += rl * rl;
                }
            }
        }
        if norm2 <= 0.0 {
            break;
        }
        let target = best_energy.min(best_dual + level);
        let delta = (target - dual).max(0.0) / energy_scale / norm2;
        if let Some(f) = sink.as_deref_mut() {
            f(&DualTrace {
                iteration: it,
                dual_value: dual,
                best_primal: best_energy,
                max_residual,
                step: delta,
            });
        }
        log::trace!("energy dual it={it} dual={dual:.9e} primal={best_energy:.9e} gap={gap:.2e} step={delta:.2e}");
        let mut next = state.clone();
        for i in 0..n {
            for j in 0..state.beta[i].len() {
                let sb = delta * energy_scale / (t_scale * t_scale);
                let sl = delta * energy_scale / (bit_scale[i] * bit_scale[i]).max(1.0);
                next.beta[i][j] = (state.beta[i][j] + sb * res.beta[i][j]).max(0.0);
                next.lambda[i][j] = (state.lambda[i][j] + sl * res.lambda[i][j]).max(0.0);
            }
        }
        next.mu = share_multiplier(&next, input.tau);
        next.iteration = it;
        next.step_scale_delta0 = level / energy_scale;
        state = next;
    }

    let best = best.ok_or_else(|| {
        Error::infeasible("no feasible offloading for the fixed airtime and deadline", f64::INFINITY)
    })?;
    let mut multipliers = best_state;
    fill_box_multipliers(&ctx, &mut multipliers, &best);
    Ok(EnergySubproblemSolution {
        energy: best_energy,
        kkt_residual: gap,
        dual_value: best_dual.max(certified),
        iterations,
        d: best.d,
        x: best.x,
        p: best.p,
        multipliers,
    })
}

// ζ and η are never iterated; report the values complementary slackness
// implies at the returned powers from the stationarity residual in p.
fn fill_box_multipliers(ctx: &Ctx<'_>, state: &mut DualState, primal: &EnergyPrimal) {
    let b = ctx.link.bandwidth;
    let noise = ctx.link.noise_power();
    for i in 0..primal.p.len() {
        let tau = ctx.input.tau[i];
        let h = &ctx.gains[i];
        let m = h.len();
        let mut agg = vec![0.0; m + 1];
        for j in (0..m).rev() {
            agg[j] = agg[j + 1] + primal.p[i][j] * h[j];
        }
        for j in 0..m {
            let pull: f64 = (0..=j)
                .map(|k| b * tau * state.lambda[i][k] * h[j] / (LN_2 * (noise + agg[k])))
                .sum();
            let grad = tau - pull;
            state.zeta[i][j] = if primal.p[i][j] <= 0.0 { grad.max(0.0) } else { 0.0 };
            state.eta[i][j] = if primal.p[i][j] >= ctx.caps[i][j] { (-grad).max(0.0) } else { 0.0 };
        }
    }
}
