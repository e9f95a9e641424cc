//! Joint convex step over offloads, airtimes, received energies and the
//! completion time.
//!
//! With cloud speeds eliminated, the only nonconvex pieces left are the
//! cloud-capacity terms. With free shares the condition is
//! `Σc + (Σ_i sqrt(c_i τ_i))² / (T − Στ) ≤ F T`; the concave `sqrt(c τ)`
//! is bounded by `(c/α + α τ)/2`, tight at `α = sqrt(c/τ)`. With imposed
//! shares the condition is `Σ_i c_i / (T − τ_i/x_i) ≤ F`, and each `c/y`
//! is bounded by `(c² + θ²)/(2 θ y)`, tight at `θ = c`. Rates become
//! exponential cones through the perspective
//! `τ ln(1 + Σ q h / (σ²B τ)) ≥ ln2 Σd / B`, with `q = p τ`.
//!
//! Units are rescaled: time by the local-only completion time, bits by
//! `R`, cycles by `F` times that time, and received energy by the noise.

use std::f64::consts::{LN_2, SQRT_2};

use clarabel::algebra::CscMatrix;
use clarabel::solver::{
    DefaultSettings, DefaultSolver, IPSolver, SolverStatus, SupportedConeT,
    SupportedConeT::{ExponentialConeT, NonnegativeConeT, SecondOrderConeT},
};

use crate::scenario::Scenario;

/// Majorisation of the cloud-capacity constraint.
#[derive(Debug, Clone)]
pub(crate) enum Coupling {
    /// Shares eliminated; one `α` per group.
    FreeShares { alpha: Vec<f64> },
    /// Shares imposed; one `θ` (scaled cycles) per group.
    FixedShares { shares: Vec<f64>, theta: Vec<f64> },
    /// Unlimited cloud: only `Στ ≤ T`. The step is then exact.
    Unlimited,
}

/// Raw step result in SI units.
#[derive(Debug, Clone)]
pub(crate) struct Step {
    pub d: Vec<Vec<f64>>,
    pub tau: Vec<f64>,
}

type Term = (usize, f64);

/// Affine expression `Σ a_k v_k + c`.
#[derive(Debug, Clone, Default)]
struct Affine {
    terms: Vec<Term>,
    constant: f64,
}

impl Affine {
    fn var(k: usize, a: f64) -> Self {
        Affine {
            terms: vec![(k, a)],
            constant: 0.0,
        }
    }

    fn constant(c: f64) -> Self {
        Affine {
            terms: Vec::new(),
            constant: c,
        }
    }

    fn add(mut self, other: &Affine, scale: f64) -> Self {
        self.terms.extend(other.terms.iter().map(|&(k, a)| (k, a * scale)));
        self.constant += other.constant * scale;
        self
    }
}

/// Rows of `s = b − A v` with the cones they belong to.
struct Program {
    vars: usize,
    rows: usize,
    ai: Vec<usize>,
    aj: Vec<usize>,
    av: Vec<f64>,
    b: Vec<f64>,
    cones: Vec<SupportedConeT<f64>>,
}

impl Program {
    fn new(vars: usize) -> Self {
        Program {
            vars,
            rows: 0,
            ai: Vec::new(),
            aj: Vec::new(),
            av: Vec::new(),
            b: Vec::new(),
            cones: Vec::new(),
        }
    }

    fn push(&mut self, e: &Affine) {
        for &(k, a) in &e.terms {
            if a != 0.0 {
                self.ai.push(self.rows);
                self.aj.push(k);
                self.av.push(-a);
            }
        }
        self.b.push(e.constant);
        self.rows += 1;
    }

    fn nonneg(&mut self, e: Affine) {
        self.push(&e);
        match self.cones.last_mut() {
            Some(NonnegativeConeT(n)) => *n += 1,
            _ => self.cones.push(NonnegativeConeT(1)),
        }
    }

    fn cone(&mut self, es: &[Affine], cone: SupportedConeT<f64>) {
        for e in es {
            self.push(e);
        }
        self.cones.push(cone);
    }

    fn solve(self, cost: Vec<f64>) -> Option<Vec<f64>> {
        let p = CscMatrix::zeros((self.vars, self.vars));
        let a = CscMatrix::new_from_triplets(self.rows, self.vars, self.ai, self.aj, self.av);
        let settings = DefaultSettings {
            verbose: false,
            max_iter: 400,
            ..DefaultSettings::default()
        };
        let mut solver = DefaultSolver::new(&p, &cost, &a, &self.b, &self.cones, settings).ok()?;
        solver.solve();
        match solver.solution.status {
            SolverStatus::Solved | SolverStatus::AlmostSolved => Some(solver.solution.x.clone()),
            // a stalled iterate is still a usable candidate: the caller
            // repairs it and keeps it only if the objective improves
            SolverStatus::InsufficientProgress | SolverStatus::MaxIterations | SolverStatus::NumericalError => {
                log::debug!("joint step: solver status {:?}", solver.solution.status);
                Some(solver.solution.x.clone())
            }
            status => {
                log::debug!("joint step: solver status {status:?}");
                None
            }
        }
    }
}

/// Time scale of the rescaled program.
pub(crate) fn time_scale(scenario: &Scenario) -> f64 {
    scenario.local_only_time().max(f64::MIN_POSITIVE)
}

/// Cycle scale of the rescaled program (`F` times the time scale).
pub(crate) fn cycle_scale(scenario: &Scenario) -> f64 {
    scenario.cloud_capacity.value() * time_scale(scenario)
}

/// Solve the majorised joint problem. `t_limit` (seconds) bounds the
/// completion time to keep the step bounded when `ω` is small.
pub(crate) fn joint_step(scenario: &Scenario, coupling: &Coupling, t_limit: f64) -> Option<Step> {
    let n = scenario.group_count();
    let users = scenario.user_count();
    let ts = time_scale(scenario);
    let link = scenario.link();
    let noise = link.noise_power();
    let omega = scenario.omega;

    // variable layout
    let d0 = 0;
    let v0 = users;
    let tau0 = 2 * users;
    let t_var = 2 * users + n;
    let aux0 = t_var + 1;
    let vars = aux0 + if matches!(coupling, Coupling::FixedShares { .. }) { n } else { 0 };

    let obj_scale = (omega * ts + (1.0 - omega) * scenario.local_only_energy()).max(f64::MIN_POSITIVE);
    let mut cost = vec![0.0; vars];
    cost[t_var] = omega * ts / obj_scale;

    let mut prog = Program::new(vars);
    let t_hat = Affine::var(t_var, 1.0);
    let mut cycles_hat: Vec<Affine> = Vec::with_capacity(n);
    let mut k = 0;
    for (i, g) in scenario.groups.iter().enumerate() {
        let tau = Affine::var(tau0 + i, 1.0);
        prog.nonneg(tau.clone());
        let mut c_hat = Affine::default();
        let first = k;
        for u in g {
            let d = Affine::var(d0 + k, 1.0);
            prog.nonneg(d.clone());
            prog.nonneg(Affine::constant(1.0).add(&d, -1.0));
            // local execution within T
            let local = u.total_cycles() / (u.local_capacity * ts);
            prog.nonneg(t_hat.clone().add(&Affine::constant(-local), 1.0).add(&d, local));
            // received energy over noise, capped by P h τ / σ²B
            let snr_cap = u.max_power * u.channel_gain / noise;
            let v = Affine::var(v0 + k, 1.0);
            prog.nonneg(v.clone());
            if snr_cap > 0.0 {
                prog.nonneg(tau.clone().add(&v, -1.0 / snr_cap));
            } else {
                prog.nonneg(Affine::var(v0 + k, -1.0));
            }
            cost[v0 + k] = (1.0 - omega) * noise * ts / u.channel_gain / obj_scale;
            cost[d0 + k] = -(1.0 - omega) * u.cycles_per_bit * u.energy_per_cycle * u.data_size / obj_scale;
            if !scenario.cloud_capacity.is_infinite() {
                c_hat = c_hat.add(&d, u.total_cycles() / cycle_scale(scenario));
            }
            k += 1;
        }
        // suffix rate cones
        for j in 0..g.len() {
            let mut bits = Affine::default();
            let mut rx = tau.clone();
            for (l, u) in g.iter().enumerate().skip(j) {
                bits = bits.add(&Affine::var(d0 + first + l, 1.0), LN_2 * u.data_size / (link.bandwidth * ts));
                rx = rx.add(&Affine::var(v0 + first + l, 1.0), 1.0);
            }
            prog.cone(&[bits, tau.clone(), rx], ExponentialConeT());
        }
        cycles_hat.push(c_hat);
    }
    prog.nonneg(Affine::constant(t_limit / ts).add(&t_hat, -1.0));

    let airtime_sum = (0..n).fold(Affine::default(), |acc, i| acc.add(&Affine::var(tau0 + i, 1.0), 1.0));
    match coupling {
        Coupling::Unlimited => prog.nonneg(t_hat.clone().add(&airtime_sum, -1.0)),
        Coupling::FreeShares { alpha } => {
            let u = t_hat.clone().add(&airtime_sum, -1.0);
            let mut v = t_hat.clone();
            let mut lin = Affine::default();
            for i in 0..n {
                v = v.add(&cycles_hat[i], -1.0);
                lin = lin
                    .add(&cycles_hat[i], 0.5 / alpha[i])
                    .add(&Affine::var(tau0 + i, 1.0), 0.5 * alpha[i]);
            }
            let sum = u.clone().add(&v, 1.0);
            let diff = u.add(&v, -1.0);
            prog.cone(&[sum, diff, Affine::default().add(&lin, 2.0)], SecondOrderConeT(3));
        }
        Coupling::FixedShares { shares, theta } => {
            let mut budget = Affine::constant(1.0);
            for i in 0..n {
                let y = t_hat.clone().add(&Affine::var(tau0 + i, 1.0), -1.0 / shares[i]);
                let a = Affine::var(aux0 + i, theta[i]);
                let sum = a.clone().add(&y, 1.0);
                let diff = a.add(&y, -1.0);
                let c = Affine::default().add(&cycles_hat[i], SQRT_2);
                let th = Affine::constant(SQRT_2 * theta[i]);
                prog.cone(&[sum, diff, c, th], SecondOrderConeT(4));
                budget = budget.add(&Affine::var(aux0 + i, 1.0), -1.0);
            }
            prog.nonneg(budget);
        }
    }

    let sol = prog.solve(cost)?;
    if sol.iter().any(|v| !v.is_finite()) {
        return None;
    }
    let mut d = Vec::with_capacity(n);
    let mut k = 0;
    for g in &scenario.groups {
        let mut dg = Vec::with_capacity(g.len());
        for u in g {
            dg.push((sol[d0 + k] * u.data_size).clamp(0.0, u.data_size));
            k += 1;
        }
        d.push(dg);
    }
    let tau = (0..n).map(|i| (sol[tau0 + i] * ts).max(0.0)).collect();
    Some(Step { d, tau })
}

/// AM-GM weights tight at the current offloads and airtimes.
pub(crate) fn free_weights(scenario: &Scenario, d: &[Vec<f64>], tau: &[f64]) -> Vec<f64> {
    let cs = cycle_scale(scenario);
    let ts = time_scale(scenario);
    let floor = 1e-9;
    crate::time_alloc::group_cycles(scenario, d)
        .iter()
        .zip(tau)
        .map(|(&c, &t)| {
            let (c, t) = (c / cs, t / ts);
            if c > floor && t > floor {
                (c / t).sqrt()
            } else {
                (c.max(floor) / t.max(floor)).sqrt().clamp(1e-3, 1e3)
            }
        })
        .collect()
}

/// Quadratic-over-linear weights tight at the current offloads.
pub(crate) fn fixed_weights(scenario: &Scenario, d: &[Vec<f64>]) -> Vec<f64> {
    let cs = cycle_scale(scenario);
    crate::time_alloc::group_cycles(scenario, d)
        .iter()
        .map(|&c| (c / cs).max(1e-6))
        .collect()
}

/// Upper bound on the optimal completion time: no point with a larger `T`
/// beats the local-only point, since `ω T` alone would exceed its
/// objective. `None` when `ω = 0`.
pub(crate) fn completion_time_bound(scenario: &Scenario) -> Option<f64> {
    let w = scenario.omega;
    (w > 0.0).then(|| scenario.local_only_time() + (1.0 - w) / w * scenario.local_only_energy())
}
