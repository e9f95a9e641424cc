//! Experiment harness behind the `noma-mec` binary: scenario generation,
//! single solves, parameter sweeps and oracle cross-checks.
//!
//! Exit codes: 0 success, 2 infeasible, 3 invalid input, 4 verification
//! gap exceeded.

use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::Error;
use crate::scenario::{
    derive_baseline, generate_scenario, CloudCapacity, GlobalParams, PairingMethod, RandomModel, Scenario,
    SchemeConfig,
};
use crate::solvers::{
    audit, brute_force_oracle, solve_alg1, solve_alg2_min_time, solve_infinite_capacity, solve_multistart,
    Alg1Options, OracleGrid, SolveReport, Termination, DEFAULT_EPSILON,
};

pub const EXIT_OK: i32 = 0;
pub const EXIT_INFEASIBLE: i32 = 2;
pub const EXIT_INVALID: i32 = 3;
pub const EXIT_GAP: i32 = 4;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error(transparent)]
    Core(#[from] Error),
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: io::Error },
    #[error("{path}: {reason}")]
    Parse { path: PathBuf, reason: String },
    #[error("gap {gap:.3e} exceeds the tolerance {tol:.3e}")]
    GapExceeded { gap: f64, tol: f64 },
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Core(Error::Infeasible { .. }) => EXIT_INFEASIBLE,
            CliError::GapExceeded { .. } => EXIT_GAP,
            _ => EXIT_INVALID,
        }
    }
}

type CliResult<T> = std::result::Result<T, CliError>;

#[derive(Debug, Parser)]
#[command(name = "noma-mec", version, about = "Resource allocation for uplink NOMA mobile-edge computing")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Draw a random scenario and write it as JSON.
    Generate(GenerateArgs),
    /// Solve one scenario and print the objective breakdown.
    Solve(SolveArgs),
    /// Run a parameter sweep and write one CSV row per point.
    Sweep(SweepArgs),
    /// Compare the alternating solver with the brute-force oracle.
    Verify(VerifyArgs),
}

#[derive(Debug, Args)]
pub struct GenerateArgs {
    /// JSON file with `model` and `global` sections (defaults otherwise).
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub omega: Option<f64>,
    /// Group the users; without it all users form one list.
    #[arg(long)]
    pub pairing: Option<PairingMethod>,
    /// Output file; standard output when absent.
    #[arg(long)]
    pub output: Option<PathBuf>,
}

#[derive(Debug, Args, Clone)]
pub struct SolverFlags {
    /// noma, noma-et, noma-exh, tdma or fdma.
    #[arg(long, default_value = "noma")]
    pub scheme: String,
    /// Regroup the users first: ss, sw, sm, one-group or singletons.
    #[arg(long)]
    pub pairing: Option<PairingMethod>,
    /// Override the scenario's weight ω.
    #[arg(long)]
    pub omega: Option<f64>,
    /// Relative objective change at which the alternating solver stops.
    #[arg(long, default_value_t = 1e-6)]
    pub tol: f64,
    /// Outer iteration budget of the alternating solver.
    #[arg(long, default_value_t = 200)]
    pub max_iters: usize,
    /// Starts of the multi-start schemes.
    #[arg(long, default_value_t = 50)]
    pub starts: usize,
    /// Seed of the random starts.
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

#[derive(Debug, Args)]
pub struct SolveArgs {
    pub scenario: PathBuf,
    #[command(flatten)]
    pub flags: SolverFlags,
    /// Minimise the completion time instead of the weighted objective.
    #[arg(long)]
    pub min_time: bool,
    /// Write the result as a one-row CSV.
    #[arg(long)]
    pub output: Option<PathBuf>,
    /// Write the full report (allocation and trace) as JSON.
    #[arg(long)]
    pub report: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct SweepArgs {
    /// JSON sweep description.
    pub spec: PathBuf,
    #[arg(long)]
    pub output: PathBuf,
    /// Points solved concurrently (all cores when absent).
    #[arg(long)]
    pub jobs: Option<usize>,
}

#[derive(Debug, Args)]
pub struct VerifyArgs {
    pub scenario: PathBuf,
    #[arg(long)]
    pub pairing: Option<PairingMethod>,
    #[arg(long)]
    pub omega: Option<f64>,
    #[arg(long, default_value_t = 1e-6)]
    pub tol: f64,
    #[arg(long, default_value_t = 200)]
    pub max_iters: usize,
    /// Points per dimension of the oracle's first scan.
    #[arg(long, default_value_t = OracleGrid::default().points)]
    pub grid_points: usize,
    /// Pattern-refinement rounds of the oracle.
    #[arg(long, default_value_t = OracleGrid::default().refinements)]
    pub refinements: usize,
    /// Largest accepted relative excess of the solver over the oracle.
    #[arg(long, default_value_t = 0.02)]
    pub gap_tol: f64,
}

/// Parse the arguments, run the command and return the exit code.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_INVALID } else { EXIT_OK };
        }
    };
    match run(cli.command) {
        Ok(()) => EXIT_OK,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

pub fn run(command: Command) -> CliResult<()> {
    match command {
        Command::Generate(a) => cmd_generate(&a),
        Command::Solve(a) => cmd_solve(&a),
        Command::Sweep(a) => cmd_sweep(&a),
        Command::Verify(a) => cmd_verify(&a),
    }
}

/// Random-model and global sections of a generator config.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GeneratorConfig {
    pub model: RandomModel,
    pub global: GlobalParams,
}

fn read(path: &Path) -> CliResult<String> {
    fs::read_to_string(path).map_err(|source| CliError::Io {
        path: path.to_path_buf(),
        source,
    })
}

fn write(path: &Path, contents: &[u8]) -> CliResult<()> {
    fs::write(path, contents).map_err(|source| CliError::Io {
        path: path.to_path_buf(),
        source,
    })
}

fn parse_json<T: for<'de> Deserialize<'de>>(path: &Path) -> CliResult<T> {
    serde_json::from_str(&read(path)?).map_err(|e| CliError::Parse {
        path: path.to_path_buf(),
        reason: e.to_string(),
    })
}

pub fn load_scenario(path: &Path) -> CliResult<Scenario> {
    let scenario: Scenario = parse_json(path)?;
    scenario.validate()?;
    Ok(scenario)
}

pub fn scenario_json(scenario: &Scenario) -> String {
    let mut s = serde_json::to_string_pretty(scenario).expect("scenarios serialise");
    s.push('\n');
    s
}

fn emit(output: Option<&Path>, text: &str) -> CliResult<()> {
    match output {
        Some(path) => write(path, text.as_bytes()),
        None => {
            let mut out = io::stdout().lock();
            out.write_all(text.as_bytes()).map_err(|source| CliError::Io {
                path: PathBuf::from("<stdout>"),
                source,
            })
        }
    }
}

pub fn cmd_generate(args: &GenerateArgs) -> CliResult<()> {
    let mut config = match &args.config {
        Some(path) => parse_json::<GeneratorConfig>(path)?,
        None => GeneratorConfig::default(),
    };
    config.model.seed = args.seed;
    if let Some(w) = args.omega {
        config.global.omega = w;
    }
    let mut scenario = generate_scenario(&config.model, &config.global)?;
    if let Some(method) = args.pairing {
        scenario = scenario.regroup(method)?;
    }
    emit(args.output.as_deref(), &scenario_json(&scenario))
}

/// Solver settings shared by `solve` and `sweep`.
#[derive(Debug, Clone, PartialEq)]
pub struct RunOptions {
    pub scheme: SchemeConfig,
    pub min_time: bool,
    pub tol: f64,
    pub max_iters: usize,
    pub seed: u64,
}

impl RunOptions {
    fn alg1(&self, equal_time: bool) -> Alg1Options {
        Alg1Options {
            tol: self.tol,
            max_outer: self.max_iters,
            equal_time,
            ..Alg1Options::default()
        }
    }
}

/// Scenario a scheme is solved on: optional regrouping, then the baseline
/// transformation.
pub fn prepare(scenario: &Scenario, scheme: SchemeConfig, pairing: Option<PairingMethod>) -> crate::Result<Scenario> {
    let grouped = match (scheme, pairing) {
        (SchemeConfig::Tdma | SchemeConfig::Fdma, _) | (_, None) => scenario.clone(),
        (_, Some(method)) => scenario.regroup(method)?,
    };
    Ok(derive_baseline(&grouped, scheme))
}

/// Run the solver matching the scheme on a prepared scenario.
///
/// `min_time` selects the bisection solver; an unlimited cloud selects the
/// convex solver; everything else runs the alternating solver (multi-start
/// for the exhaustive and equal-time schemes). The result must pass the
/// feasibility audit.
pub fn run_scheme(scenario: &Scenario, options: &RunOptions) -> crate::Result<SolveReport> {
    options.scheme.validate()?;
    let scheme = options.scheme;
    let report = if options.min_time {
        if matches!(scheme, SchemeConfig::NomaEqualTime { .. }) {
            return Err(Error::Unsupported(
                "completion-time minimisation always optimises the time sharing".into(),
            ));
        }
        solve_alg2_min_time(scenario, DEFAULT_EPSILON)?
    } else if scenario.cloud_capacity.is_infinite() {
        if matches!(scheme, SchemeConfig::NomaEqualTime { .. }) {
            return Err(Error::Unsupported(
                "the unlimited-cloud solver always optimises the time sharing".into(),
            ));
        }
        solve_infinite_capacity(scenario)?
    } else {
        match scheme {
            SchemeConfig::Noma | SchemeConfig::Tdma | SchemeConfig::Fdma => {
                solve_alg1(scenario, &options.alg1(false))?
            }
            SchemeConfig::NomaEqualTime { start_count } => {
                solve_multistart(scenario, start_count, options.seed, &options.alg1(true))?
            }
            SchemeConfig::NomaExhaustive { start_count } => {
                solve_multistart(scenario, start_count, options.seed, &options.alg1(false))?
            }
        }
    };
    let check = audit(scenario, &report.allocation);
    if !check.is_feasible() {
        return Err(Error::infeasible(
            format!("solution fails the audit: {}", check.violations.join("; ")),
            check.worst_residual,
        ));
    }
    Ok(report)
}

/// Swept scenario parameter.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum SweptParameter {
    #[serde(rename = "omega")]
    Omega,
    /// cycles/s
    #[serde(rename = "cloud_capacity_F")]
    CloudCapacity,
    /// watt, applied to every user
    #[serde(rename = "max_power_P")]
    MaxPower,
}

impl SweptParameter {
    pub fn name(self) -> &'static str {
        match self {
            SweptParameter::Omega => "omega",
            SweptParameter::CloudCapacity => "cloud_capacity_F",
            SweptParameter::MaxPower => "max_power_P",
        }
    }

    pub fn apply(self, scenario: &Scenario, value: f64) -> Scenario {
        match self {
            SweptParameter::Omega => scenario.with_omega(value),
            SweptParameter::CloudCapacity => scenario.with_cloud_capacity(CloudCapacity::Finite(value)),
            SweptParameter::MaxPower => scenario.with_max_power(value),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepSpec {
    pub parameter: SweptParameter,
    pub values: Vec<f64>,
    /// Scheme names as accepted by `--scheme`.
    pub schemes: Vec<String>,
    pub pairings: Vec<PairingMethod>,
    /// One random scenario per seed.
    pub seeds: Vec<u64>,
    #[serde(default)]
    pub model: RandomModel,
    #[serde(default)]
    pub global: GlobalParams,
    #[serde(default = "default_starts")]
    pub starts: usize,
    #[serde(default = "default_tol")]
    pub tol: f64,
    #[serde(default = "default_max_iters")]
    pub max_iters: usize,
    #[serde(default)]
    pub min_time: bool,
}

fn default_starts() -> usize {
    50
}

fn default_tol() -> f64 {
    1e-6
}

fn default_max_iters() -> usize {
    200
}

impl SweepSpec {
    pub fn validate(&self) -> crate::Result<()> {
        for (name, empty) in [
            ("values", self.values.is_empty()),
            ("schemes", self.schemes.is_empty()),
            ("pairings", self.pairings.is_empty()),
            ("seeds", self.seeds.is_empty()),
        ] {
            if empty {
                return Err(Error::field(name, "must not be empty"));
            }
        }
        if let Some(v) = self.values.iter().find(|v| !v.is_finite()) {
            return Err(Error::field("values", format!("must be finite, got {v}")));
        }
        for s in &self.schemes {
            SchemeConfig::parse(s, self.starts)?;
        }
        self.model.validate()
    }
}

/// One CSV row.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ResultRow {
    pub seed: u64,
    pub scheme: String,
    pub pairing: String,
    pub omega: f64,
    pub swept_parameter: String,
    pub swept_value: Option<f64>,
    pub objective: f64,
    #[serde(rename = "T_seconds")]
    pub completion_time: f64,
    #[serde(rename = "energy_total_J")]
    pub energy_total: f64,
    #[serde(rename = "energy_offload_J")]
    pub energy_offload: f64,
    #[serde(rename = "energy_local_J")]
    pub energy_local: f64,
    pub iterations: usize,
    pub termination: Termination,
}

pub const CSV_HEADER: [&str; 13] = [
    "seed",
    "scheme",
    "pairing",
    "omega",
    "swept_parameter",
    "swept_value",
    "objective",
    "T_seconds",
    "energy_total_J",
    "energy_offload_J",
    "energy_local_J",
    "iterations",
    "termination",
];

/// 12 significant digits.
pub fn format_number(v: f64) -> String {
    if v.is_finite() {
        format!("{v:.11e}")
    } else {
        v.to_string()
    }
}

impl ResultRow {
    fn solved(seed: u64, scheme: &str, pairing: &str, omega: f64, swept: Option<(SweptParameter, f64)>, r: &SolveReport) -> Self {
        let b = &r.breakdown;
        ResultRow {
            seed,
            scheme: scheme.to_string(),
            pairing: pairing.to_string(),
            omega,
            swept_parameter: swept.map_or("none", |s| s.0.name()).to_string(),
            swept_value: swept.map(|s| s.1),
            objective: b.weighted,
            completion_time: b.completion_time,
            energy_total: b.total_energy(),
            energy_offload: b.offload_energy,
            energy_local: b.local_energy,
            iterations: r.iterations,
            termination: r.termination,
        }
    }

    fn failed(seed: u64, scheme: &str, pairing: &str, omega: f64, swept: Option<(SweptParameter, f64)>) -> Self {
        ResultRow {
            seed,
            scheme: scheme.to_string(),
            pairing: pairing.to_string(),
            omega,
            swept_parameter: swept.map_or("none", |s| s.0.name()).to_string(),
            swept_value: swept.map(|s| s.1),
            objective: f64::NAN,
            completion_time: f64::NAN,
            energy_total: f64::NAN,
            energy_offload: f64::NAN,
            energy_local: f64::NAN,
            iterations: 0,
            termination: Termination::Infeasible,
        }
    }

    fn record(&self) -> Vec<String> {
        vec![
            self.seed.to_string(),
            self.scheme.clone(),
            self.pairing.clone(),
            format_number(self.omega),
            self.swept_parameter.clone(),
            self.swept_value.map(format_number).unwrap_or_default(),
            format_number(self.objective),
            format_number(self.completion_time),
            format_number(self.energy_total),
            format_number(self.energy_offload),
            format_number(self.energy_local),
            self.iterations.to_string(),
            self.termination.to_string(),
        ]
    }
}

pub fn rows_to_csv(rows: &[ResultRow]) -> String {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(CSV_HEADER).expect("in-memory write");
    for row in rows {
        w.write_record(row.record()).expect("in-memory write");
    }
    String::from_utf8(w.into_inner().expect("in-memory flush")).expect("ascii output")
}

pub fn cmd_solve(args: &SolveArgs) -> CliResult<()> {
    let mut scenario = load_scenario(&args.scenario)?;
    if let Some(w) = args.flags.omega {
        scenario = scenario.with_omega(w);
        scenario.validate()?;
    }
    let scheme = SchemeConfig::parse(&args.flags.scheme, args.flags.starts)?;
    let prepared = prepare(&scenario, scheme, args.flags.pairing)?;
    let options = RunOptions {
        scheme,
        min_time: args.min_time,
        tol: args.flags.tol,
        max_iters: args.flags.max_iters,
        seed: args.flags.seed,
    };
    let report = run_scheme(&prepared, &options)?;
    let b = &report.breakdown;
    let pairing = args.flags.pairing.map_or("as-given".to_string(), |p| p.to_string());
    println!("scheme          {scheme}");
    println!("pairing         {pairing}");
    println!("groups          {}", prepared.group_count());
    println!("termination     {}", report.termination);
    println!("iterations      {}", report.iterations);
    println!("T               {} s", format_number(b.completion_time));
    println!("offload_energy  {} J", format_number(b.offload_energy));
    println!("local_energy    {} J", format_number(b.local_energy));
    println!("total_energy    {} J", format_number(b.total_energy()));
    println!("objective       {}", format_number(b.weighted));
    println!("wall_time       {:.3} s", report.wall_time);
    if let Some(path) = &args.output {
        let row = ResultRow::solved(args.flags.seed, scheme.name(), &pairing, prepared.omega, None, &report);
        write(path, rows_to_csv(&[row]).as_bytes())?;
    }
    if let Some(path) = &args.report {
        let json = serde_json::to_string_pretty(&report).expect("reports serialise");
        write(path, json.as_bytes())?;
    }
    Ok(())
}

/// All rows of a sweep, sorted by (value, scheme, pairing, seed).
pub fn run_sweep(spec: &SweepSpec) -> crate::Result<Vec<ResultRow>> {
    spec.validate()?;
    let mut points = Vec::new();
    for &value in &spec.values {
        for name in &spec.schemes {
            for &pairing in &spec.pairings {
                for &seed in &spec.seeds {
                    points.push((value, name.as_str(), pairing, seed));
                }
            }
        }
    }
    let mut rows: Vec<ResultRow> = points
        .into_par_iter()
        .map(|(value, name, pairing, seed)| {
            let scheme = SchemeConfig::parse(name, spec.starts).expect("validated");
            let swept = Some((spec.parameter, value));
            let model = RandomModel {
                seed,
                ..spec.model.clone()
            };
            let solve = || -> crate::Result<(f64, SolveReport)> {
                let base = generate_scenario(&model, &spec.global)?;
                let scenario = spec.parameter.apply(&base, value);
                scenario.validate()?;
                let prepared = prepare(&scenario, scheme, Some(pairing))?;
                let options = RunOptions {
                    scheme,
                    min_time: spec.min_time,
                    tol: spec.tol,
                    max_iters: spec.max_iters,
                    seed,
                };
                Ok((prepared.omega, run_scheme(&prepared, &options)?))
            };
            match solve() {
                Ok((omega, r)) => ResultRow::solved(seed, scheme.name(), &pairing.to_string(), omega, swept, &r),
                Err(e) => {
                    log::warn!("{name}/{pairing} seed {seed} at {value}: {e}");
                    let omega = match spec.parameter {
                        SweptParameter::Omega => value,
                        _ => spec.global.omega,
                    };
                    ResultRow::failed(seed, scheme.name(), &pairing.to_string(), omega, swept)
                }
            }
        })
        .collect();
    rows.sort_by(|a, b| {
        let va = a.swept_value.unwrap_or(f64::NAN);
        let vb = b.swept_value.unwrap_or(f64::NAN);
        va.total_cmp(&vb)
            .then_with(|| a.scheme.cmp(&b.scheme))
            .then_with(|| a.pairing.cmp(&b.pairing))
            .then_with(|| a.seed.cmp(&b.seed))
    });
    Ok(rows)
}

pub fn cmd_sweep(args: &SweepArgs) -> CliResult<()> {
    let spec: SweepSpec = parse_json(&args.spec)?;
    let rows = match args.jobs {
        Some(0) => return Err(Error::field("jobs", "must be at least 1").into()),
        Some(jobs) => rayon::ThreadPoolBuilder::new()
            .num_threads(jobs)
            .build()
            .map_err(|e| Error::field("jobs", e.to_string()))?
            .install(|| run_sweep(&spec))?,
        None => run_sweep(&spec)?,
    };
    write(&args.output, rows_to_csv(&rows).as_bytes())?;
    let failed = rows.iter().filter(|r| r.termination == Termination::Infeasible).count();
    println!("{} rows written to {} ({failed} infeasible)", rows.len(), args.output.display());
    Ok(())
}

/// Outcome of [`verify`].
#[derive(Debug, Clone, PartialEq)]
pub struct Verification {
    pub solver: f64,
    pub oracle: f64,
    /// `(solver − oracle) / |oracle|`; negative when the solver is better.
    pub gap: f64,
}

pub fn verify(scenario: &Scenario, options: &Alg1Options, grid: OracleGrid) -> crate::Result<Verification> {
    // refuse before spending time in the solver
    if scenario.user_count() > crate::solvers::MAX_ORACLE_USERS {
        return Err(Error::TooLarge(format!(
            "verification handles at most {} users and {} grid points per dimension, got {} users",
            crate::solvers::MAX_ORACLE_USERS,
            crate::solvers::MAX_ORACLE_GRID,
            scenario.user_count()
        )));
    }
    let oracle = brute_force_oracle(scenario, grid)?.weighted;
    let solver = solve_alg1(scenario, options)?.breakdown.weighted;
    let gap = if oracle == 0.0 { solver } else { (solver - oracle) / oracle.abs() };
    Ok(Verification { solver, oracle, gap })
}

pub fn cmd_verify(args: &VerifyArgs) -> CliResult<()> {
    let mut scenario = load_scenario(&args.scenario)?;
    if let Some(w) = args.omega {
        scenario = scenario.with_omega(w);
        scenario.validate()?;
    }
    if let Some(method) = args.pairing {
        scenario = scenario.regroup(method)?;
    }
    let options = Alg1Options {
        tol: args.tol,
        max_outer: args.max_iters,
        ..Alg1Options::default()
    };
    let grid = OracleGrid {
        points: args.grid_points,
        refinements: args.refinements,
    };
    let v = verify(&scenario, &options, grid)?;
    println!("solver   {}", format_number(v.solver));
    println!("oracle   {}", format_number(v.oracle));
    println!("gap      {:+.3e}", v.gap);
    if v.gap > args.gap_tol {
        return Err(CliError::GapExceeded {
            gap: v.gap,
            tol: args.gap_tol,
        });
    }
    println!("pass (gap-tol {:.3e})", args.gap_tol);
    Ok(())
}
