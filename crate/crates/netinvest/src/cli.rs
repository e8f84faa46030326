//! Command-line surface: one subcommand per analysis, JSON reports on
//! stdout, CSV for parameter sweeps, and a randomized self-verification
//! battery.
//!
//! Exit codes: 0 success, 1 a verification check was falsified, 2 unusable
//! input (bad flags, malformed files, empty grids), 3 semantically invalid
//! input (values out of range, unknown edge ids, unsupported analysis for
//! the reservation class).

use std::path::PathBuf;

use clap::error::ErrorKind;
use clap::{Parser, Subcommand};
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::equilibria::{inefficiency, spne, InefficiencyReport};
use crate::instance::{load_instance, load_investments, Instance, LoadError};
use crate::market::{
    embed_scalar_on_shortest_paths, profit, reduced_profit, reduced_social_welfare,
    social_welfare, MarketError,
};
use crate::verify::{
    beckmann_oracle, best_response_gap, check_shortest_path_theorem, instance_hash, path_cost,
    SearchConfig, VerifyError, ORACLE_PATH_CAP,
};
use crate::wardrop::{wardrop_outcome, Reservation};

pub const EXIT_OK: i32 = 0;
pub const EXIT_FALSIFIED: i32 = 1;
pub const EXIT_PARSE: i32 = 2;
pub const EXIT_SEMANTIC: i32 = 3;

#[derive(Parser)]
#[command(
    name = "netinvest",
    version,
    about = "Two-stage network investment games on series-parallel graphs"
)]
pub struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Route users through a fixed investment profile and report the outcome.
    Wardrop {
        /// Instance file (graph, provider count, reservation curve).
        #[arg(long)]
        instance: PathBuf,
        /// Investments file: {"providers": [{edge: amount, ...}, ...]}.
        #[arg(long)]
        investments: PathBuf,
    },
    /// Compute the closed-form investment equilibrium of an instance.
    Spne {
        #[arg(long)]
        instance: PathBuf,
    },
    /// Compute welfare and profit inefficiency ratios of an instance.
    Poa {
        #[arg(long)]
        instance: PathBuf,
    },
    /// Sweep parameters, one CSV row of inefficiency data per grid point.
    Sweep {
        #[arg(long)]
        instance: PathBuf,
        /// Axis spec `name=start..end[:step]` or `name=value`; names: n,
        /// alpha, value, population. Repeat for a cartesian product (the
        /// last axis varies fastest).
        #[arg(long = "grid")]
        grids: Vec<String>,
        /// Write CSV here instead of stdout.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run randomized self-checks of the instance against independent
    /// oracles; exits 1 if any check is falsified.
    Verify {
        #[arg(long)]
        instance: PathBuf,
        /// Trials per randomized check.
        #[arg(long, default_value_t = 100)]
        trials: usize,
        /// Master seed; all randomness derives from it.
        #[arg(long, default_value_t = 42)]
        seed: u64,
        /// Best-response gap tolerance at equilibrium points.
        #[arg(long, default_value_t = 1e-6)]
        eps: f64,
        /// Write the JSON trial report here instead of stdout.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

/// Everything that terminates a subcommand early, tagged with its exit code.
#[derive(Debug)]
struct Failure {
    code: i32,
    message: String,
}

impl Failure {
    fn parse(message: impl Into<String>) -> Self {
        Failure { code: EXIT_PARSE, message: message.into() }
    }

    fn semantic(message: impl Into<String>) -> Self {
        Failure { code: EXIT_SEMANTIC, message: message.into() }
    }
}

impl From<LoadError> for Failure {
    fn from(e: LoadError) -> Self {
        match e {
            LoadError::Parse(_) => Failure { code: EXIT_PARSE, message: e.to_string() },
            LoadError::Semantic(_) => Failure { code: EXIT_SEMANTIC, message: e.to_string() },
        }
    }
}

impl From<MarketError> for Failure {
    fn from(e: MarketError) -> Self {
        Failure::semantic(e.to_string())
    }
}

/// Parses `args` (including the program name) and runs the chosen
/// subcommand, returning the process exit code.
pub fn run<I, S>(args: I) -> i32
where
    I: IntoIterator<Item = S>,
    S: Into<std::ffi::OsString> + Clone,
{
    init_thread_pool();
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) => {
            print!("{e}");
            return EXIT_OK;
        }
        Err(e) => {
            eprint!("{e}");
            return EXIT_PARSE;
        }
    };
    let result = match cli.command {
        Command::Wardrop { instance, investments } => cmd_wardrop(&instance, &investments),
        Command::Spne { instance } => cmd_spne(&instance),
        Command::Poa { instance } => cmd_poa(&instance),
        Command::Sweep { instance, grids, out } => cmd_sweep(&instance, &grids, out.as_deref()),
        Command::Verify { instance, trials, seed, eps, out } => {
            cmd_verify(&instance, trials, seed, eps, out.as_deref())
        }
    };
    match result {
        Ok(code) => code,
        Err(f) => {
            eprintln!("error: {}", f.message);
            f.code
        }
    }
}

/// Caps rayon's worker count to NIG_THREADS when set. Safe to call more
/// than once; only the first initialization wins.
fn init_thread_pool() {
    if let Ok(v) = std::env::var("NIG_THREADS") {
        if let Ok(n) = v.parse::<usize>() {
            if n >= 1 {
                let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
            }
        }
    }
}

fn cmd_wardrop(instance: &std::path::Path, investments: &std::path::Path) -> Result<i32, Failure> {
    let inst = load_instance(instance)?;
    let matrix = load_investments(investments, &inst)?;
    let outcome = wardrop_outcome(&inst.graph, &matrix.edge_totals(), &inst.reservation);
    println!("{}", serde_json::to_string_pretty(&outcome).expect("report serializes"));
    Ok(EXIT_OK)
}

fn cmd_spne(instance: &std::path::Path) -> Result<i32, Failure> {
    let inst = load_instance(instance)?;
    let report = spne(inst.graph.shortest_path_length(), inst.providers, &inst.reservation)?;
    println!("{}", serde_json::to_string_pretty(&report).expect("report serializes"));
    Ok(EXIT_OK)
}

fn cmd_poa(instance: &std::path::Path) -> Result<i32, Failure> {
    let inst = load_instance(instance)?;
    let report = inefficiency(inst.graph.shortest_path_length(), inst.providers, &inst.reservation)?;
    println!("{}", serde_json::to_string_pretty(&report).expect("report serializes"));
    Ok(EXIT_OK)
}

/// One sweep axis: a parameter name and its grid values.
struct GridAxis {
    name: String,
    values: Vec<f64>,
}

const GRID_NAMES: [&str; 4] = ["n", "alpha", "value", "population"];

fn parse_grid_axis(spec: &str) -> Result<GridAxis, Failure> {
    let (name, rest) = spec
        .split_once('=')
        .ok_or_else(|| Failure::parse(format!("grid spec '{spec}' must look like name=start..end[:step]")))?;
    let name = name.trim();
    if !GRID_NAMES.contains(&name) {
        return Err(Failure::parse(format!(
            "unknown grid parameter '{name}'; expected one of {GRID_NAMES:?}"
        )));
    }
    let (range, step) = match rest.split_once(':') {
        Some((range, step)) => {
            let step: f64 = step
                .trim()
                .parse()
                .map_err(|_| Failure::parse(format!("bad step in grid spec '{spec}'")))?;
            (range, step)
        }
        None => (rest, 1.0),
    };
    if !(step.is_finite() && step > 0.0) {
        return Err(Failure::parse(format!("grid step must be positive in '{spec}'")));
    }
    let parse_num = |s: &str| -> Result<f64, Failure> {
        s.trim()
            .parse::<f64>()
            .map_err(|_| Failure::parse(format!("bad number '{s}' in grid spec '{spec}'")))
    };
    let values = match range.split_once("..") {
        Some((lo, hi)) => {
            let (lo, hi) = (parse_num(lo)?, parse_num(hi)?);
            if hi < lo {
                return Err(Failure::parse(format!("empty grid in '{spec}': {hi} < {lo}")));
            }
            let count = ((hi - lo) / step + 1e-9).floor() as usize + 1;
            (0..count).map(|i| lo + i as f64 * step).collect()
        }
        None => vec![parse_num(range)?],
    };
    if name == "n" {
        for v in &values {
            if v.fract() != 0.0 || *v < 1.0 {
                return Err(Failure::parse(format!(
                    "grid for n must contain positive integers, got {v}"
                )));
            }
        }
    }
    Ok(GridAxis { name: name.to_string(), values })
}

fn apply_grid_point(
    base: &Instance,
    axes: &[GridAxis],
    point: &[f64],
) -> Result<(usize, Reservation), Failure> {
    let mut n = base.providers;
    let mut res = base.reservation.clone();
    for (axis, &v) in axes.iter().zip(point) {
        match (axis.name.as_str(), &res) {
            ("n", _) => n = v as usize,
            ("alpha", Reservation::PowerLaw { .. }) => {
                res = Reservation::power_law(v).map_err(|e| Failure::semantic(e.to_string()))?;
            }
            ("value", Reservation::Homogeneous { population, .. }) => {
                res = Reservation::homogeneous(v, *population)
                    .map_err(|e| Failure::semantic(e.to_string()))?;
            }
            ("population", Reservation::Homogeneous { value, .. }) => {
                res = Reservation::homogeneous(*value, v)
                    .map_err(|e| Failure::semantic(e.to_string()))?;
            }
            (name, _) => {
                return Err(Failure::semantic(format!(
                    "grid parameter '{name}' does not apply to this reservation type"
                )));
            }
        }
    }
    Ok((n, res))
}

pub const SWEEP_HEADER: &str = "n,alpha,value,population,poa,pos,ppoa,ppos,optimal_welfare,equilibrium_welfare,optimal_profit,equilibrium_profit";

fn csv_cell(v: Option<f64>) -> String {
    match v {
        Some(x) => format!("{x}"),
        None => String::new(),
    }
}

fn sweep_row(n: usize, res: &Reservation, report: &InefficiencyReport) -> String {
    let (alpha, value, population) = match res {
        Reservation::Homogeneous { value, population } => (None, Some(*value), Some(*population)),
        Reservation::PowerLaw { alpha } => (Some(*alpha), None, None),
        Reservation::Piecewise(_) => (None, None, None),
    };
    format!(
        "{n},{},{},{},{},{},{},{},{},{},{},{}",
        csv_cell(alpha),
        csv_cell(value),
        csv_cell(population),
        csv_cell(report.poa),
        csv_cell(report.pos),
        csv_cell(Some(report.ppoa)),
        csv_cell(Some(report.ppos)),
        csv_cell(report.optimal_welfare),
        csv_cell(report.equilibrium_welfare),
        csv_cell(Some(report.optimal_profit)),
        csv_cell(report.equilibrium_profit),
    )
}

fn cmd_sweep(
    instance: &std::path::Path,
    grids: &[String],
    out: Option<&std::path::Path>,
) -> Result<i32, Failure> {
    let inst = load_instance(instance)?;
    if grids.is_empty() {
        return Err(Failure::parse("no --grid axes given: the sweep grid is empty"));
    }
    let axes: Vec<GridAxis> = grids.iter().map(|g| parse_grid_axis(g)).collect::<Result<_, _>>()?;
    for (i, a) in axes.iter().enumerate() {
        if axes[..i].iter().any(|b| b.name == a.name) {
            return Err(Failure::parse(format!("duplicate grid parameter '{}'", a.name)));
        }
    }

    // Cartesian product in row-major order: the last axis varies fastest.
    let total: usize = axes.iter().map(|a| a.values.len()).product();
    let mut points = Vec::with_capacity(total);
    for mut idx in 0..total {
        let mut point = vec![0.0; axes.len()];
        for (d, axis) in axes.iter().enumerate().rev() {
            point[d] = axis.values[idx % axis.values.len()];
            idx /= axis.values.len();
        }
        points.push(point);
    }

    let k = inst.graph.shortest_path_length();
    let rows: Vec<Result<String, Failure>> = points
        .par_iter()
        .map(|point| {
            let (n, res) = apply_grid_point(&inst, &axes, point)?;
            let report = inefficiency(k, n, &res)?;
            Ok(sweep_row(n, &res, &report))
        })
        .collect();

    let mut csv = String::from(SWEEP_HEADER);
    csv.push('\n');
    for row in rows {
        csv.push_str(&row?);
        csv.push('\n');
    }
    match out {
        Some(path) => std::fs::write(path, csv)
            .map_err(|e| Failure::parse(format!("cannot write {}: {e}", path.display())))?,
        None => print!("{csv}"),
    }
    Ok(EXIT_OK)
}

/// One record of the verification battery; the report is a JSON array of
/// these, ordered by check then trial.
#[derive(Clone, Debug, Serialize)]
pub struct VerifyRecord {
    pub check: String,
    pub trial: usize,
    pub seed: u64,
    pub instance: String,
    /// Check-specific magnitude: a deviation gap, a maximum discrepancy
    /// against an oracle, or 0 where only a predicate is tested.
    #[serde(with = "crate::instance::ext_real")]
    pub gap: f64,
    pub pass: bool,
    pub skipped: bool,
    pub note: String,
}

struct Battery {
    records: Vec<VerifyRecord>,
    seed: u64,
    hash: String,
}

impl Battery {
    fn push(&mut self, check: &str, trial: usize, gap: f64, pass: bool, note: String) {
        self.records.push(VerifyRecord {
            check: check.into(),
            trial,
            seed: self.seed,
            instance: self.hash.clone(),
            gap,
            pass,
            skipped: false,
            note,
        });
    }

    fn skip(&mut self, check: &str, note: &str) {
        self.records.push(VerifyRecord {
            check: check.into(),
            trial: 0,
            seed: self.seed,
            instance: self.hash.clone(),
            gap: 0.0,
            pass: true,
            skipped: true,
            note: note.into(),
        });
    }
}

fn trial_rng(seed: u64, salt: u64, trial: usize) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(
        seed ^ salt.wrapping_mul(0xd6e8_feb8_6659_fd93)
            ^ (trial as u64).wrapping_mul(0x9e37_79b9_7f4a_7c15),
    )
}

/// Random investments that always leave at least one fully funded s-t path,
/// so the network is alive and the oracle applicable.
fn random_live_investments(
    inst: &Instance,
    rng: &mut ChaCha8Rng,
) -> crate::market::InvestmentMatrix {
    let mut m = crate::verify::random_investments(rng, &inst.graph, inst.providers, 0.7);
    let paths = inst.graph.enumerate_paths(crate::sp_graph::DEFAULT_PATH_CAP).paths;
    let spine = &paths[rng.gen_range(0..paths.len())];
    let mut row = m.row(0).clone();
    for e in spine {
        *row.entry(e.clone()).or_insert(0.0) += rng.gen_range(0.3..1.2);
    }
    m.set_row(0, row);
    m
}

fn cmd_verify(
    instance: &std::path::Path,
    trials: usize,
    seed: u64,
    eps: f64,
    out: Option<&std::path::Path>,
) -> Result<i32, Failure> {
    let inst = load_instance(instance)?;
    let mut battery = Battery {
        records: Vec::new(),
        seed,
        hash: instance_hash(&inst.graph),
    };

    verify_flows_against_oracle(&inst, trials, seed, &mut battery);
    verify_budget_identity(&inst, trials, seed, &mut battery);
    verify_embedding_invariance(&inst, trials, seed, &mut battery);
    verify_reduced_vs_full(&inst, trials, seed, &mut battery);
    verify_spne_best_response(&inst, eps, &mut battery);
    verify_theorem_deviations(&inst, trials, seed, &mut battery);
    verify_welfare_closed_form(&inst, &mut battery);

    let failures = battery.records.iter().filter(|r| !r.pass).count();
    let json =
        serde_json::to_string_pretty(&battery.records).expect("records serialize");
    match out {
        Some(path) => std::fs::write(path, json)
            .map_err(|e| Failure::parse(format!("cannot write {}: {e}", path.display())))?,
        None => println!("{json}"),
    }
    eprintln!(
        "verify: {} records, {} failures, {} skipped",
        battery.records.len(),
        failures,
        battery.records.iter().filter(|r| r.skipped).count()
    );
    Ok(if failures > 0 { EXIT_FALSIFIED } else { EXIT_OK })
}

/// Compositional flows vs potential minimization, and the equal-cost
/// property of used paths.
fn verify_flows_against_oracle(inst: &Instance, trials: usize, seed: u64, battery: &mut Battery) {
    if inst.graph.path_count() > ORACLE_PATH_CAP as u64 {
        battery.skip(
            "flows-vs-potential-oracle",
            "graph has more paths than the oracle cap; oracle not applicable",
        );
        return;
    }
    let paths = inst.graph.enumerate_paths(ORACLE_PATH_CAP).paths;
    for trial in 0..trials {
        let mut rng = trial_rng(seed, 1, trial);
        let m = random_live_investments(inst, &mut rng);
        let totals = m.edge_totals();
        let outcome = wardrop_outcome(&inst.graph, &totals, &inst.reservation);
        match beckmann_oracle(&inst.graph, &totals, outcome.demand) {
            Ok(oracle_flows) => {
                let gap = outcome
                    .edge_flows
                    .iter()
                    .map(|(e, f)| (f - oracle_flows.get(e).copied().unwrap_or(0.0)).abs())
                    .fold(0.0f64, f64::max);
                battery.push(
                    "flows-vs-potential-oracle",
                    trial,
                    gap,
                    gap <= 1e-6,
                    format!("demand {}", outcome.demand),
                );
                let used_costs: Vec<f64> = paths
                    .iter()
                    .filter(|p| {
                        p.iter().all(|e| totals.get(e).copied().unwrap_or(0.0) > 0.0)
                    })
                    .map(|p| path_cost(p, &outcome.edge_flows, &totals))
                    .collect();
                let spread = if used_costs.len() > 1 && outcome.demand > 0.0 {
                    let lo = used_costs.iter().cloned().fold(f64::INFINITY, f64::min);
                    let hi = used_costs.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
                    hi - lo
                } else {
                    0.0
                };
                battery.push(
                    "equal-path-costs",
                    trial,
                    spread,
                    spread <= 1e-9,
                    format!("{} funded paths", used_costs.len()),
                );
            }
            Err(VerifyError::NoUsablePath { .. }) => {
                battery.push(
                    "flows-vs-potential-oracle",
                    trial,
                    0.0,
                    outcome.demand == 0.0,
                    "no funded path; demand must be zero".into(),
                );
            }
            Err(e) => battery.push("flows-vs-potential-oracle", trial, f64::INFINITY, false, e.to_string()),
        }
    }
}

/// Total profit must equal demand times per-user cost minus total
/// investment, by construction of the payment flows.
fn verify_budget_identity(inst: &Instance, trials: usize, seed: u64, battery: &mut Battery) {
    for trial in 0..trials {
        let mut rng = trial_rng(seed, 2, trial);
        let m = random_live_investments(inst, &mut rng);
        let outcome = wardrop_outcome(&inst.graph, &m.edge_totals(), &inst.reservation);
        let report = profit(&inst.graph, &m, &inst.reservation);
        let spent: f64 = m
            .rows()
            .iter()
            .flat_map(|r| r.values())
            .sum();
        let revenue = if outcome.demand > 0.0 {
            outcome.demand * outcome.per_user_cost
        } else {
            0.0
        };
        let gap = (report.total_profit + spent - revenue).abs();
        let scale = 1.0f64.max(revenue.abs()).max(spent);
        battery.push(
            "budget-identity",
            trial,
            gap,
            gap <= 1e-9 * scale,
            format!("revenue {revenue}, spent {spent}"),
        );
    }
}

/// Two different shortest-path embeddings of the same scalars must induce
/// identical demand and profits.
fn verify_embedding_invariance(inst: &Instance, trials: usize, seed: u64, battery: &mut Battery) {
    for trial in 0..trials {
        let mut rng = trial_rng(seed, 3, trial);
        let scalars: Vec<f64> =
            (0..inst.providers).map(|_| rng.gen_range(0.1..2.0)).collect();
        let a = embed_scalar_on_shortest_paths(&inst.graph, &scalars, rng.gen()).to_matrix();
        let b = embed_scalar_on_shortest_paths(&inst.graph, &scalars, rng.gen()).to_matrix();
        let out_a = wardrop_outcome(&inst.graph, &a.edge_totals(), &inst.reservation);
        let out_b = wardrop_outcome(&inst.graph, &b.edge_totals(), &inst.reservation);
        let pa = profit(&inst.graph, &a, &inst.reservation);
        let pb = profit(&inst.graph, &b, &inst.reservation);
        let gap = pa
            .profits()
            .iter()
            .zip(pb.profits())
            .map(|(x, y)| (x - y).abs())
            .fold(0.0f64, f64::max);
        let demand_gap = (out_a.demand - out_b.demand).abs();
        battery.push(
            "embedding-invariance",
            trial,
            gap,
            gap <= 1e-9 && demand_gap <= 1e-12,
            format!("demand gap {demand_gap:e}"),
        );
    }
}

/// Full profit and welfare on an embedded profile vs their reduced scalar
/// forms.
fn verify_reduced_vs_full(inst: &Instance, trials: usize, seed: u64, battery: &mut Battery) {
    let k = inst.graph.shortest_path_length();
    for trial in 0..trials {
        let mut rng = trial_rng(seed, 4, trial);
        let scalars: Vec<f64> =
            (0..inst.providers).map(|_| rng.gen_range(0.1..2.0)).collect();
        let m = embed_scalar_on_shortest_paths(&inst.graph, &scalars, rng.gen()).to_matrix();
        let full = profit(&inst.graph, &m, &inst.reservation);
        let mut gap = 0.0f64;
        let mut note = String::new();
        match reduced_profit(k, &scalars, &inst.reservation) {
            Ok(reduced) => {
                gap = full
                    .profits()
                    .iter()
                    .zip(reduced.profits())
                    .map(|(x, y)| (x - y).abs())
                    .fold(0.0f64, f64::max);
            }
            Err(MarketError::Unsupported(_)) => {
                note.push_str("profit comparison skipped for this reservation; ");
            }
            Err(e) => {
                battery.push("reduced-vs-full", trial, f64::INFINITY, false, e.to_string());
                continue;
            }
        }
        let total: f64 = scalars.iter().sum();
        match (
            social_welfare(&inst.graph, &m, &inst.reservation),
            reduced_social_welfare(k, total, &inst.reservation),
        ) {
            (Ok(full_sw), Ok(reduced_sw)) => {
                gap = gap.max((full_sw - reduced_sw).abs());
                note.push_str(&format!("welfare {full_sw}"));
            }
            _ => note.push_str("welfare divergent for this reservation"),
        }
        battery.push("reduced-vs-full", trial, gap, gap <= 1e-9, note);
    }
}

/// At the closed-form equilibrium point no provider should find an
/// improving deviation above `eps`.
fn verify_spne_best_response(inst: &Instance, eps: f64, battery: &mut Battery) {
    let k = inst.graph.shortest_path_length();
    let report = match spne(k, inst.providers, &inst.reservation) {
        Ok(r) => r,
        Err(MarketError::Unsupported(msg)) => {
            battery.skip("spne-best-response", &msg);
            return;
        }
        Err(e) => {
            battery.push("spne-best-response", 0, f64::INFINITY, false, e.to_string());
            return;
        }
    };
    let Some(investments) = report.investments else {
        battery.skip(
            "spne-best-response",
            &format!("no equilibrium exists (case {})", report.case),
        );
        return;
    };
    let m = crate::market::embed_scalar_uniform(&inst.graph, &investments).to_matrix();
    let cfg = SearchConfig::default();
    for i in 0..inst.providers {
        let result = best_response_gap(&inst.graph, &m, &inst.reservation, i, &cfg);
        battery.push(
            "spne-best-response",
            i,
            result.gap,
            result.gap <= eps,
            format!("case {}, provider profit {}", report.case, result.original_profit),
        );
    }
}

/// Constructive demand-preserving deviations against off-shortest-path and
/// imbalanced profiles.
fn verify_theorem_deviations(inst: &Instance, trials: usize, seed: u64, battery: &mut Battery) {
    let report = check_shortest_path_theorem(&inst.graph, &inst.reservation, trials, seed);
    for r in report.records {
        if r.mode == "skipped" {
            battery.skip("shortest-path-deviations", &r.note);
            continue;
        }
        battery.push(
            "shortest-path-deviations",
            r.trial,
            r.recomputed_gain,
            r.pass,
            format!(
                "{} provider {} predicted {} demand-preserving {} {}",
                r.mode, r.provider, r.predicted_gain, r.demand_preserving, r.note
            ),
        );
    }
}

/// The closed-form social optimum against a direct numeric re-evaluation of
/// welfare at its reported optimizer.
fn verify_welfare_closed_form(inst: &Instance, battery: &mut Battery) {
    let k = inst.graph.shortest_path_length();
    match crate::equilibria::social_optimum(k, &inst.reservation) {
        Ok(opt) => {
            let recomputed = reduced_social_welfare(k, opt.total_investment, &inst.reservation)
                .expect("optimum exists only when welfare converges");
            let gap = (opt.welfare - recomputed).abs();
            battery.push(
                "welfare-closed-form",
                0,
                gap,
                gap <= 1e-9 * 1.0f64.max(opt.welfare.abs()),
                format!("optimal total {}", opt.total_investment),
            );
        }
        Err(MarketError::Unsupported(msg)) => battery.skip("welfare-closed-form", &msg),
        Err(MarketError::DivergentWelfare { .. }) => battery.skip(
            "welfare-closed-form",
            "welfare diverges for this reservation; no finite optimum",
        ),
        Err(e) => battery.push("welfare-closed-form", 0, f64::INFINITY, false, e.to_string()),
    }
}
