//! Acceptance run: one PASS/FAIL line per criterion.
//!
//! Runs as a plain binary so the verdicts show up in `cargo test` output.
//! Numeric arguments select criteria, e.g. `cargo test --test system_acceptance -- 3 7`.

mod common;

use std::collections::BTreeMap;
use std::time::Instant;

use common::*;
use noma_mec::cli::{run_sweep, ResultRow, SweepSpec, SweptParameter};
use noma_mec::noma_phy::{powers_from_demands, shannon_rates, sum_rate_from_j, Link};
use noma_mec::scenario::{dbm_to_watt, GlobalParams, RandomModel};
use noma_mec::solvers::{audit, oracle_point, evaluate_objective, solve_alg1, solve_alg2_min_time, Alg1Options, OracleGrid};
use noma_mec::{PairingMethod, Termination};
use rand::Rng;

struct Verdict {
    pass: bool,
    detail: String,
}

fn verdict(pass: bool, detail: impl Into<String>) -> Verdict {
    Verdict {
        pass,
        detail: detail.into(),
    }
}

fn random_group(r: &mut impl Rng) -> (Vec<f64>, Vec<f64>, f64, Link) {
    let m = r.random_range(1..=4);
    let d: Vec<f64> = (0..m).map(|_| r.random_range(0.0..2e5)).collect();
    let mut h: Vec<f64> = (0..m).map(|_| 10f64.powf(-r.random_range(8.0..14.0))).collect();
    h.sort_by(|a, b| b.total_cmp(a));
    let t = 10f64.powf(r.random_range(-3.0..-1.0));
    (d, h, t, Link::new(10e6, dbm_to_watt(-169.0)))
}

fn c1() -> Verdict {
    let start = Instant::now();
    let mut r = rng(1, 0);
    let mut worst = 0.0f64;
    for _ in 0..1000 {
        let (d, h, t, link) = random_group(&mut r);
        let p = powers_from_demands(&d, t, &h, link).unwrap();
        for (rate, dj) in shannon_rates(&p, &h, link).iter().zip(&d) {
            worst = worst.max((rate * t - dj).abs() / dj.max(1.0));
        }
    }
    let secs = start.elapsed().as_secs_f64();
    verdict(worst <= 1e-9 && secs < 1.0, format!("worst rel {worst:.2e} over 1000 tuples in {secs:.3} s"))
}

fn c2() -> Verdict {
    let mut r = rng(2, 0);
    let mut worst = 0.0f64;
    for _ in 0..1000 {
        let (d, h, t, link) = random_group(&mut r);
        let p = powers_from_demands(&d, t, &h, link).unwrap();
        let rates = shannon_rates(&p, &h, link);
        for j in 0..d.len() {
            let sum: f64 = rates[j..].iter().sum();
            let closed = sum_rate_from_j(&p, &h, link, j).unwrap();
            // and against a direct evaluation of the aggregate
            let rx: f64 = p[j..].iter().zip(&h[j..]).map(|(p, h)| p * h).sum();
            let direct = link.bandwidth * (1.0 + rx / link.noise_power()).log2();
            if direct > 0.0 {
                worst = worst.max((sum - closed).abs() / closed).max((sum - direct).abs() / direct);
            }
        }
    }
    verdict(worst <= 1e-12, format!("worst rel {worst:.2e} over 1000 groups"))
}

fn c3() -> Verdict {
    let (mut obj, mut tight) = (0.0f64, 0.0f64);
    for seed in 0..200 {
        let c = time_case(seed);
        obj = obj.max(c.objective_rel);
        tight = tight.max(c.airtime_rel);
    }
    verdict(
        obj <= 1e-6 && tight <= 1e-8,
        format!("worst objective rel {obj:.2e}, worst airtime rel {tight:.2e} over 200 instances"),
    )
}

fn c4() -> Verdict {
    let start = Instant::now();
    let (mut rel, mut kkt) = (0.0f64, 0.0f64);
    for seed in 0..100 {
        let c = energy_case(seed);
        rel = rel.max(c.rel);
        kkt = kkt.max(c.kkt);
    }
    let secs = start.elapsed().as_secs_f64();
    verdict(
        rel <= 0.01 && kkt <= 1e-4 && secs < 300.0,
        format!("worst rel {rel:.2e}, worst KKT residual {kkt:.2e} over 100 instances in {secs:.1} s"),
    )
}

fn c5() -> Verdict {
    let mut r = rng(5, 0);
    let mut rises = 0;
    let mut rejected = 0;
    let mut worst_rise = 0.0f64;
    let pairings = [PairingMethod::SS, PairingMethod::SW, PairingMethod::SM];
    for seed in 0..100 {
        let omega = r.random_range(0.05..0.95);
        let sc = drop_scenario(seed, 30, omega, Some(pairings[seed as usize % 3]));
        let rep = solve_alg1(&sc, &Alg1Options::default()).unwrap();
        for w in rep.objective_trace.windows(2) {
            if w[1] > w[0] + 1e-9 {
                rises += 1;
                worst_rise = worst_rise.max(w[1] - w[0]);
            }
        }
        if !audit(&sc, &rep.allocation).is_feasible() {
            rejected += 1;
        }
    }
    verdict(
        rises == 0 && rejected == 0,
        format!("{rises} trace increases (largest {worst_rise:.2e}), {rejected} audit failures over 100 scenarios"),
    )
}

fn c6() -> Verdict {
    let mut r = rng(6, 0);
    let mut above = 0.0f64;
    let mut below = 0.0f64;
    let mut oracle_rejected = 0;
    let pairings = [PairingMethod::SS, PairingMethod::SW, PairingMethod::OneGroup, PairingMethod::Singletons];
    for seed in 0..50 {
        let pairing = pairings[seed as usize % 4];
        // the oracle nests one line search per user of a group
        let users = match pairing {
            PairingMethod::OneGroup => r.random_range(2..=3usize),
            PairingMethod::Singletons => r.random_range(1..=4usize),
            _ => 2 * r.random_range(1..=2usize),
        };
        let omega = r.random_range(0.05..0.95);
        let sc = drop_scenario(seed, users, omega, Some(pairing));
        let solver = solve_alg1(&sc, &Alg1Options::default()).unwrap().breakdown.weighted;
        let point = oracle_point(&sc, OracleGrid::default()).unwrap();
        if !audit(&sc, &point).is_feasible() {
            oracle_rejected += 1;
        }
        let oracle = evaluate_objective(&sc, &point).weighted;
        above = above.max(solver - oracle);
        below = below.max((oracle - solver) / oracle);
    }
    verdict(
        above <= 1e-6 && below <= 0.02 && oracle_rejected == 0,
        format!(
            "largest excess over oracle {above:.2e}, largest shortfall {:.3}% over 50 instances",
            100.0 * below
        ),
    )
}

fn c7() -> Verdict {
    let mut disagree = 0;
    let mut feasible = 0;
    let mut bad_points = 0;
    for seed in 0..200 {
        let c = feasibility_case(seed);
        disagree += usize::from(!c.agree);
        if let Some(ok) = c.recovered_ok {
            feasible += 1;
            bad_points += usize::from(!ok);
        }
    }
    verdict(
        disagree == 0 && bad_points == 0,
        format!("{disagree} disagreements over 200 pairs; {bad_points} of {feasible} recovered points rejected"),
    )
}

fn c8() -> Verdict {
    let mut worst = 0.0f64;
    for seed in 0..50 {
        worst = worst.max(min_time_case(seed, 10_000));
    }
    let mut inexact = 0;
    for seed in 0..20 {
        let sc = drop_scenario(seed, 4, 1.0, Some(PairingMethod::SS)).with_max_power(0.0);
        let t = solve_alg2_min_time(&sc, 1e-4).unwrap().breakdown.completion_time;
        inexact += usize::from(t != local_only_time(&sc));
    }
    verdict(
        worst <= 1e-4 && inexact == 0,
        format!("worst rel {worst:.2e} over 50 instances; {inexact} of 20 zero-power cases off the local time"),
    )
}

fn c9() -> Verdict {
    let mut slot = 0.0f64;
    let mut count = 0;
    for seed in 0..34 {
        for omega in [0.1, 0.5, 0.9] {
            slot = slot.max(infinite_slot_case(seed, omega));
            count += 1;
        }
    }
    let mut agree = 0.0f64;
    for seed in 0..20 {
        agree = agree.max(infinite_vs_bisection(seed));
    }
    verdict(
        slot <= 1e-6 && agree <= 1e-3,
        format!("worst |Στ − T|/T {slot:.2e} over {count} instances; worst gap to bisection at ω = 1 {agree:.2e}"),
    )
}

// ---- trends ----

const SEEDS: u64 = 20;
const TREND_BUDGET: f64 = 600.0;

fn sweep(parameter: SweptParameter, values: &[f64], schemes: &[&str], pairings: &[PairingMethod], global: GlobalParams, min_time: bool) -> Vec<ResultRow> {
    let spec = SweepSpec {
        parameter,
        values: values.to_vec(),
        schemes: schemes.iter().map(|s| s.to_string()).collect(),
        pairings: pairings.to_vec(),
        seeds: (0..SEEDS).collect(),
        model: RandomModel::default(),
        global,
        starts: 1,
        tol: 1e-6,
        max_iters: 200,
        min_time,
    };
    run_sweep(&spec).expect("valid sweep")
}

/// Seed averages per (scheme, pairing, swept value), in value order.
fn averages(rows: &[ResultRow], pick: impl Fn(&ResultRow) -> f64) -> BTreeMap<(String, String), Vec<(f64, f64)>> {
    let mut acc: BTreeMap<(String, String), BTreeMap<u64, (f64, f64, usize)>> = BTreeMap::new();
    for r in rows {
        let v = r.swept_value.unwrap();
        let e = acc
            .entry((r.scheme.clone(), r.pairing.clone()))
            .or_default()
            .entry(v.to_bits())
            .or_insert((v, 0.0, 0));
        e.1 += pick(r);
        e.2 += 1;
    }
    acc.into_iter()
        .map(|(k, m)| {
            let mut pts: Vec<(f64, f64)> = m.into_values().map(|(v, s, n)| (v, s / n as f64)).collect();
            pts.sort_by(|a, b| a.0.total_cmp(&b.0));
            (k, pts)
        })
        .collect()
}

fn failures(rows: &[ResultRow]) -> usize {
    rows.iter().filter(|r| r.termination == Termination::Infeasible).count()
}

fn c10() -> Verdict {
    let mut parts = Vec::new();
    let mut all = true;
    let mut report = |name: &str, pass: bool, secs: f64, detail: String| {
        let pass = pass && secs < TREND_BUDGET;
        all &= pass;
        parts.push(format!("  ({name}) {} {detail} [{secs:.0} s]", if pass { "PASS" } else { "FAIL" }));
    };
    let omegas: Vec<f64> = (1..=9).map(|k| k as f64 / 10.0).collect();
    let capacities = [0.4e10, 0.8e10, 1.2e10, 1.6e10, 2.0e10];
    let schemes = ["noma", "tdma", "fdma"];

    // (a) tradeoff shape
    let start = Instant::now();
    let tradeoff = sweep(SweptParameter::Omega, &omegas, &schemes, &[PairingMethod::SS], GlobalParams::default(), false);
    let t_avg = averages(&tradeoff, |r| r.completion_time);
    let e_avg = averages(&tradeoff, |r| r.energy_total);
    let mut broken = Vec::new();
    for (key, ts) in &t_avg {
        let es = &e_avg[key];
        for k in 1..ts.len() {
            if ts[k].1 > ts[k - 1].1 * (1.0 + 1e-9) || es[k].1 < es[k - 1].1 * (1.0 - 1e-9) {
                broken.push(format!("{} at ω {}", key.0, ts[k].0));
            }
        }
    }
    let failed = failures(&tradeoff);
    report(
        "a",
        broken.is_empty() && failed == 0,
        start.elapsed().as_secs_f64(),
        format!("T falls and energy rises with ω for every scheme; violations: {broken:?}, failed points {failed}"),
    );

    // (b) energy ordering against the orthogonal baselines
    let start = Instant::now();
    let global = GlobalParams {
        omega: 0.9,
        ..GlobalParams::default()
    };
    let by_capacity = sweep(SweptParameter::CloudCapacity, &capacities, &schemes, &[PairingMethod::SS], global.clone(), false);
    let e_avg = averages(&by_capacity, |r| r.energy_total);
    let series = |s: &str| &e_avg[&(s.to_string(), "ss".to_string())];
    let mut lines = Vec::new();
    let mut ordered = true;
    for k in 0..capacities.len() {
        let (n, t, f) = (series("noma")[k].1, series("tdma")[k].1, series("fdma")[k].1);
        ordered &= n <= t && n <= f;
        lines.push(format!("F {:.1e}: noma {n:.4e} tdma {t:.4e} fdma {f:.4e}", capacities[k]));
    }
    let failed = failures(&by_capacity);
    report(
        "b",
        ordered && failed == 0,
        start.elapsed().as_secs_f64(),
        format!("mean energy (J) at ω 0.9: {}; failed points {failed}", lines.join("; ")),
    );

    // (c) completion time against capacity and power
    let start = Instant::now();
    let full = GlobalParams {
        omega: 1.0,
        ..GlobalParams::default()
    };
    let powers: Vec<f64> = [-4.0, -2.0, 0.0, 1.0, 2.0, 4.0].iter().map(|&dbm| dbm_to_watt(dbm)).collect();
    let by_f = sweep(SweptParameter::CloudCapacity, &capacities, &schemes, &[PairingMethod::SS], full.clone(), true);
    let by_p = sweep(SweptParameter::MaxPower, &powers, &schemes, &[PairingMethod::SS], full, true);
    let mut rising = Vec::new();
    for (axis, rows) in [("F", &by_f), ("P", &by_p)] {
        for (key, pts) in averages(rows, |r| r.completion_time) {
            for w in pts.windows(2) {
                if w[1].1 > w[0].1 {
                    rising.push(format!("{} in {axis} at {:.3e}", key.0, w[1].0));
                }
            }
        }
    }
    let failed = failures(&by_f) + failures(&by_p);
    report(
        "c",
        rising.is_empty() && failed == 0,
        start.elapsed().as_secs_f64(),
        format!("minimum completion time nonincreasing in F and P; violations: {rising:?}, failed points {failed}"),
    );

    // (d) pairing order
    let start = Instant::now();
    let by_pairing = sweep(
        SweptParameter::Omega,
        &omegas,
        &["noma"],
        &[PairingMethod::SS, PairingMethod::SM, PairingMethod::SW, PairingMethod::OneGroup],
        GlobalParams::default(),
        false,
    );
    let obj = averages(&by_pairing, |r| r.objective);
    let series = |p: &str| &obj[&("noma".to_string(), p.to_string())];
    let mut out_of_order = Vec::new();
    for (k, &w) in omegas.iter().enumerate() {
        let (ss, sm, sw, one) = (series("ss")[k].1, series("sm")[k].1, series("sw")[k].1, series("one-group")[k].1);
        if !(ss <= sm && sm <= sw) {
            out_of_order.push(format!("ω {w}: ss {ss:.5e} sm {sm:.5e} sw {sw:.5e}"));
        }
        if one > ss {
            out_of_order.push(format!("ω {w}: one-group {one:.5e} > ss {ss:.5e}"));
        }
    }
    let failed = failures(&by_pairing);
    report(
        "d",
        out_of_order.is_empty() && failed == 0,
        start.elapsed().as_secs_f64(),
        format!("SS ≤ SM ≤ SW and one group ≤ SS at every ω; violations: {out_of_order:?}, failed points {failed}"),
    );

    verdict(all, format!("trends over {SEEDS} seeds of 30 users\n{}", parts.join("\n")))
}

fn main() {
    let criteria: [(usize, &str, fn() -> Verdict); 10] = [
        (1, "demand/power round trip", c1),
        (2, "telescoping sum rate", c2),
        (3, "time block vs 1-D search", c3),
        (4, "energy block vs projected gradient", c4),
        (5, "alternating solver monotone and feasible", c5),
        (6, "alternating solver vs brute-force oracle", c6),
        (7, "feasibility conditions vs direct check", c7),
        (8, "bisection vs linear scan", c8),
        (9, "unlimited cloud", c9),
        (10, "trend reproduction", c10),
    ];
    let selected: Vec<usize> = std::env::args().skip(1).filter_map(|a| a.parse().ok()).collect();
    let mut failed = Vec::new();
    for (n, name, run) in criteria {
        if !selected.is_empty() && !selected.contains(&n) {
            continue;
        }
        let start = Instant::now();
        let v = run();
        let status = if v.pass { "PASS" } else { "FAIL" };
        println!("criterion {n:>2} {status}: {name} — {} ({:.1} s)", v.detail, start.elapsed().as_secs_f64());
        if !v.pass {
            failed.push(n);
        }
    }
    if !failed.is_empty() {
        println!("acceptance: failed criteria {failed:?}");
        std::process::exit(1);
    }
}
