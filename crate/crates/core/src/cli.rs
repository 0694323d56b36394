//! Command-line interface.
//!
//! Exit codes: 0 success, 1 other failure or oracle mismatch, 2 infeasible or
//! no LOIS, 3 limit reached, 4 input error.

use crate::cng::{self, CngInstance, GenConfig, JointOptima, Leader};
use crate::conditions::{build_conditions, render_conditions};
use crate::encoding::assemble;
use crate::equilibrium::{
    brute_force_sets, enumerate_lois, is_pure_nash, select_lois, solve_lois, solve_stackelberg,
    utilitarian_welfare, EquilibriumReport, Outcome, RunStats, BRUTE_FORCE_CAP,
};
use crate::model::{IpgInstance, QuadraticPayoff};
use crate::rational::{parse_rational, to_f64, Rational};
use crate::solver::{stream_solutions, SolveStatus, SolverConfig};
use clap::{Args, Parser, Subcommand, ValueEnum};
use rayon::prelude::*;
use serde::Serialize;
use std::ffi::OsString;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::Duration;

pub const EXIT_OK: i32 = 0;
pub const EXIT_FAILURE: i32 = 1;
pub const EXIT_NO_SOLUTION: i32 = 2;
pub const EXIT_LIMIT: i32 = 3;
pub const EXIT_INPUT: i32 = 4;

pub const CSV_VERSION: &str = "lois-experiment-csv v1";
pub const CSV_COLUMNS: [&str; 13] = [
    "size", "method", "time_s", "ics", "f_a", "f_d", "pos", "pos_lo", "pos_hi", "poa", "poa_lo", "poa_hi", "status",
];

#[derive(Parser, Debug)]
#[command(name = "lois", version, about = "Locally optimal integer solutions for integer programming games")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Write seeded game instances as JSON files.
    Generate(GenerateArgs),
    /// Solve, enumerate or select LOIS points, or solve a Stackelberg game.
    Solve(SolveArgs),
    /// Compare the solver's full LOIS set with brute force.
    Check(CheckArgs),
    /// Print the optimality conditions of every player.
    Conditions(InstanceArgs),
    /// Export the encoded system in LP format.
    Encode(EncodeArgs),
    /// Run an experiment suite and write a CSV table.
    Experiment(ExperimentArgs),
}

#[derive(Clone, Copy, Debug, ValueEnum)]
pub enum Game {
    Cng,
}

#[derive(Args, Debug)]
pub struct GenerateArgs {
    #[arg(long, value_enum, default_value = "cng")]
    pub game: Game,
    #[arg(long)]
    pub nodes: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = 1)]
    pub count: usize,
    #[arg(long)]
    pub out: PathBuf,
    /// Defense budget ratio as `p/q`.
    #[arg(long)]
    pub rho_d: Option<String>,
    /// Attack budget ratio as `p/q`.
    #[arg(long)]
    pub rho_a: Option<String>,
}

#[derive(Args, Debug, Clone)]
pub struct SolverArgs {
    #[arg(long, default_value_t = 100.0)]
    pub time_limit_s: f64,
    #[arg(long)]
    pub node_limit: Option<u64>,
    /// Permutes branching tie-breaks.
    #[arg(long)]
    pub seed: Option<u64>,
}

impl SolverArgs {
    fn config(&self) -> Result<SolverConfig, CliError> {
        if !(self.time_limit_s > 0.0) || self.node_limit == Some(0) {
            return Err(CliError::Input("limits must be positive".into()));
        }
        Ok(SolverConfig {
            time_limit: Some(Duration::from_secs_f64(self.time_limit_s)),
            node_limit: self.node_limit,
            seed: self.seed,
        })
    }
}

#[derive(Args, Debug)]
pub struct InstanceArgs {
    #[arg(long)]
    pub instance: PathBuf,
    #[arg(long, default_value_t = 1)]
    pub order: i64,
}

#[derive(Args, Debug)]
pub struct SolveArgs {
    #[command(flatten)]
    pub input: InstanceArgs,
    /// `fa`, `fd` (CNG), `p<i>` (payoff of player i) or `sum`.
    #[arg(long)]
    pub welfare: Option<String>,
    /// Enumerate up to K points.
    #[arg(long, value_name = "K")]
    pub enumerate: Option<usize>,
    /// CNG only: solve the sequential game with this leader.
    #[arg(long, value_enum)]
    pub stackelberg: Option<LeaderArg>,
    #[command(flatten)]
    pub solver: SolverArgs,
    /// Run a best-response check on every reported point.
    #[arg(long)]
    pub verify_nash: bool,
    /// Omit wall-clock fields so reruns are byte-identical.
    #[arg(long)]
    pub no_timing: bool,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
pub enum LeaderArg {
    Defender,
    Attacker,
}

#[derive(Args, Debug)]
pub struct CheckArgs {
    #[command(flatten)]
    pub input: InstanceArgs,
    #[arg(long, default_value_t = BRUTE_FORCE_CAP)]
    pub cap: u128,
    /// Test hook: cut one brute-force point out of the encoded system.
    #[arg(long, hide = true)]
    pub corrupt_encoding: bool,
    #[command(flatten)]
    pub solver: SolverArgs,
}

#[derive(Args, Debug)]
pub struct EncodeArgs {
    #[command(flatten)]
    pub input: InstanceArgs,
    #[arg(long)]
    pub welfare: Option<String>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum Suite {
    Intrinsic,
    Extrinsic,
    Stackelberg,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum WelfareChoice {
    Fd,
    Fa,
    Both,
}

#[derive(Args, Debug)]
pub struct ExperimentArgs {
    #[arg(long, value_enum)]
    pub suite: Suite,
    #[arg(long, value_delimiter = ',', required = true)]
    pub sizes: Vec<usize>,
    #[arg(long, default_value_t = 20)]
    pub count: usize,
    /// Instance i of each size uses seed `instance-seed + i`.
    #[arg(long, default_value_t = 0)]
    pub instance_seed: u64,
    #[arg(long)]
    pub out: PathBuf,
    /// Directory for per-instance JSON artifacts.
    #[arg(long)]
    pub artifacts: Option<PathBuf>,
    #[arg(long, value_enum, default_value = "both")]
    pub welfare: WelfareChoice,
    #[arg(long, default_value_t = 1)]
    pub jobs: usize,
    #[command(flatten)]
    pub solver: SolverArgs,
    #[arg(long)]
    pub no_timing: bool,
}

#[derive(Debug)]
pub enum CliError {
    Input(String),
    Failure(String),
}

impl CliError {
    fn code(&self) -> i32 {
        match self {
            CliError::Input(_) => EXIT_INPUT,
            CliError::Failure(_) => EXIT_FAILURE,
        }
    }

    fn message(&self) -> &str {
        match self {
            CliError::Input(m) | CliError::Failure(m) => m,
        }
    }
}

fn fail(e: impl std::fmt::Display) -> CliError {
    CliError::Failure(e.to_string())
}

/// Parses `args` (including the program name) and runs the command.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_INPUT } else { EXIT_OK };
            let _ = e.print();
            return code;
        }
    };
    let stdout = std::io::stdout();
    let mut out = stdout.lock();
    match dispatch(cli.command, &mut out) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {}", e.message());
            e.code()
        }
    }
}

fn dispatch(cmd: Command, out: &mut dyn Write) -> Result<i32, CliError> {
    match cmd {
        Command::Generate(a) => cmd_generate(&a, out),
        Command::Solve(a) => cmd_solve(&a, out),
        Command::Check(a) => cmd_check(&a, out),
        Command::Conditions(a) => cmd_conditions(&a, out),
        Command::Encode(a) => cmd_encode(&a, out),
        Command::Experiment(a) => cmd_experiment(&a, out),
    }
}

/// An instance file: an IPG (has `players`) or a CNG (has `V`).
pub enum Loaded {
    Ipg(IpgInstance),
    Cng(CngInstance, IpgInstance),
}

impl Loaded {
    pub fn ipg(&self) -> &IpgInstance {
        match self {
            Loaded::Ipg(g) | Loaded::Cng(_, g) => g,
        }
    }
}

pub fn load_instance(path: &Path) -> Result<Loaded, CliError> {
    let text = std::fs::read_to_string(path).map_err(|e| CliError::Input(format!("{}: {e}", path.display())))?;
    let value: serde_json::Value =
        serde_json::from_str(&text).map_err(|e| CliError::Input(format!("{}: {e}", path.display())))?;
    let bad = |e: String| CliError::Input(format!("{}: {e}", path.display()));
    if value.get("players").is_some() {
        let g = IpgInstance::from_json(&text).map_err(|e| bad(e.to_string()))?;
        let g = g.validated().map_err(|e| match e {
            crate::model::ModelError::Invalid(d) => bad(d.iter().map(|d| d.to_string()).collect::<Vec<_>>().join("; ")),
            other => bad(other.to_string()),
        })?;
        Ok(Loaded::Ipg(g))
    } else if value.get("V").is_some() {
        let c = CngInstance::from_json(&text).map_err(|e| bad(e.to_string()))?;
        let g = cng::to_ipg(&c);
        Ok(Loaded::Cng(c, g))
    } else {
        Err(bad("neither an IPG (\"players\") nor a CNG (\"V\") instance".into()))
    }
}

fn parse_welfare(spec: &str, loaded: &Loaded) -> Result<QuadraticPayoff, CliError> {
    let g = loaded.ipg();
    let player = match (spec, loaded) {
        ("fa", Loaded::Cng(..)) => Some(cng::ATTACKER),
        ("fd", Loaded::Cng(..)) => Some(cng::DEFENDER),
        ("sum", _) => None,
        (s, _) if s.starts_with('p') => Some(
            s[1..]
                .parse::<usize>()
                .ok()
                .filter(|&i| i < g.players.len())
                .ok_or_else(|| CliError::Input(format!("unknown welfare {s:?}")))?,
        ),
        (s, _) => return Err(CliError::Input(format!("unknown welfare {s:?}"))),
    };
    Ok(match player {
        Some(p) => g.players[p].payoff.clone(),
        None => utilitarian_welfare(g),
    })
}

fn check_order(m: i64) -> Result<(), CliError> {
    if m < 1 {
        return Err(CliError::Input(format!("order must be at least 1, got {m}")));
    }
    Ok(())
}

fn write_output(path: Option<&Path>, text: &str, out: &mut dyn Write) -> Result<(), CliError> {
    // `-` is stdout.
    match path.filter(|p| p.as_os_str() != "-") {
        Some(p) => {
            if let Some(dir) = p.parent().filter(|d| !d.as_os_str().is_empty()) {
                std::fs::create_dir_all(dir).map_err(|e| fail(format!("{}: {e}", dir.display())))?;
            }
            std::fs::write(p, text).map_err(|e| fail(format!("{}: {e}", p.display())))
        }
        None => out.write_all(text.as_bytes()).map_err(fail),
    }
}

fn cmd_generate(a: &GenerateArgs, out: &mut dyn Write) -> Result<i32, CliError> {
    let Game::Cng = a.game;
    let mut cfg = GenConfig::default();
    let ratio_arg = |s: &Option<String>, default: &Rational| match s {
        Some(t) => parse_rational(t).ok_or_else(|| CliError::Input(format!("bad ratio {t:?}"))),
        None => Ok(default.clone()),
    };
    cfg.rho_d = ratio_arg(&a.rho_d, &cfg.rho_d)?;
    cfg.rho_a = ratio_arg(&a.rho_a, &cfg.rho_a)?;
    if a.count == 0 {
        return Ok(EXIT_OK);
    }
    std::fs::create_dir_all(&a.out).map_err(|e| fail(format!("{}: {e}", a.out.display())))?;
    for i in 0..a.count {
        let seed = a.seed + i as u64;
        let inst = cng::generate_instance(seed, a.nodes, &cfg).map_err(|e| CliError::Input(e.to_string()))?;
        let path = a.out.join(format!("cng-v{}-s{}.json", a.nodes, seed));
        std::fs::write(&path, inst.to_json() + "\n").map_err(|e| fail(format!("{}: {e}", path.display())))?;
        writeln!(out, "{}", path.display()).map_err(fail)?;
    }
    Ok(EXIT_OK)
}

#[derive(Serialize)]
struct PriceJson {
    #[serde(with = "crate::rational")]
    f_a: Rational,
    #[serde(with = "crate::rational")]
    f_d: Rational,
    #[serde(with = "crate::rational::opt")]
    pos: Option<Rational>,
    #[serde(with = "crate::rational::opt")]
    poa: Option<Rational>,
}

#[derive(Serialize)]
struct ReportJson {
    #[serde(flatten)]
    report: EquilibriumReport,
    #[serde(skip_serializing_if = "Option::is_none")]
    nash: Option<bool>,
    #[serde(skip_serializing_if = "Option::is_none")]
    metrics: Option<PriceJson>,
}

#[derive(Serialize)]
struct SolveJson {
    schema_version: u32,
    mode: &'static str,
    order: i64,
    status: SolveStatus,
    #[serde(skip_serializing_if = "Option::is_none")]
    welfare: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    leader: Option<Leader>,
    reports: Vec<ReportJson>,
    stats: RunStats,
}

fn status_code(status: SolveStatus, found: bool) -> i32 {
    match status {
        SolveStatus::LimitReached => EXIT_LIMIT,
        _ if found => EXIT_OK,
        _ => EXIT_NO_SOLUTION,
    }
}

fn cmd_solve(a: &SolveArgs, out: &mut dyn Write) -> Result<i32, CliError> {
    check_order(a.input.order)?;
    let loaded = load_instance(&a.input.instance)?;
    let cfg = a.solver.config()?;
    let m = a.input.order;
    let g = loaded.ipg();
    let fail_eq = |e: crate::equilibrium::EquilibriumError| fail(e);
    let (mode, status, reports, mut stats, leader) = if let Some(leader) = a.stackelberg {
        let Loaded::Cng(c, _) = &loaded else {
            return Err(CliError::Input("--stackelberg needs a CNG instance".into()));
        };
        if a.welfare.is_some() || a.enumerate.is_some() {
            return Err(CliError::Input("--stackelberg optimizes the leader payoff; drop --welfare/--enumerate".into()));
        }
        let leader = match leader {
            LeaderArg::Defender => Leader::Defender,
            LeaderArg::Attacker => Leader::Attacker,
        };
        let (l, f) = cng::to_stackelberg(c, leader);
        let Outcome { status, report, stats } = solve_stackelberg(&l, &f, m, &cfg).map_err(fail_eq)?;
        ("stackelberg", status, report.into_iter().collect::<Vec<_>>(), stats, Some(leader))
    } else if let Some(k) = a.enumerate {
        if a.welfare.is_some() {
            return Err(CliError::Input("--enumerate and --welfare are exclusive".into()));
        }
        let e = enumerate_lois(g, m, k, &cfg).map_err(fail_eq)?;
        ("enumerate", e.status, e.reports, e.stats, None)
    } else if let Some(w) = &a.welfare {
        let welfare = parse_welfare(w, &loaded)?;
        let Outcome { status, report, stats } = select_lois(g, m, &welfare, &cfg).map_err(fail_eq)?;
        ("select", status, report.into_iter().collect(), stats, None)
    } else {
        let Outcome { status, report, stats } = solve_lois(g, m, &cfg).map_err(fail_eq)?;
        ("lois", status, report.into_iter().collect(), stats, None)
    };
    let optima = match &loaded {
        Loaded::Cng(c, _) if !reports.is_empty() => Some(cng::joint_optima(c, &cfg).map_err(fail)?),
        _ => None,
    };
    let mut out_reports = Vec::new();
    for mut r in reports {
        let nash = if a.verify_nash && leader.is_none() {
            let ok = is_pure_nash(g, &r.point, &cfg).map_err(fail_eq)?;
            if ok {
                r.mark_nash();
            }
            Some(ok)
        } else {
            None
        };
        let metrics = match (&loaded, &optima) {
            (Loaded::Cng(c, _), Some(o)) => Some(price_json(c, &r.point, o)?),
            _ => None,
        };
        out_reports.push(ReportJson { report: r, nash, metrics });
    }
    if a.no_timing {
        stats.strip_timing();
    }
    let found = !out_reports.is_empty();
    let doc = SolveJson {
        schema_version: crate::equilibrium::REPORT_SCHEMA_VERSION,
        mode,
        order: m,
        status,
        welfare: a.welfare.clone(),
        leader,
        reports: out_reports,
        stats,
    };
    let text = serde_json::to_string_pretty(&doc).map_err(fail)? + "\n";
    write_output(a.out.as_deref(), &text, out)?;
    Ok(status_code(status, found))
}

fn price_json(c: &CngInstance, point: &[i64], optima: &JointOptima) -> Result<PriceJson, CliError> {
    let pm = cng::price_metrics_from(c, point, optima).map_err(fail)?;
    Ok(PriceJson {
        f_a: pm.attacker_at_point,
        f_d: pm.defender_at_point,
        pos: pm.pos,
        poa: pm.poa,
    })
}

fn format_set(points: &[Vec<i64>]) -> String {
    let inner: Vec<String> = points.iter().map(|p| crate::model::JointPoint(p.clone()).to_string()).collect();
    format!("{{{}}}", inner.join(", "))
}

fn cmd_check(a: &CheckArgs, out: &mut dyn Write) -> Result<i32, CliError> {
    check_order(a.input.order)?;
    let loaded = load_instance(&a.input.instance)?;
    let g = loaded.ipg();
    let cfg = a.solver.config()?;
    let brute = match brute_force_sets(g, a.input.order, a.cap) {
        Ok(b) => b,
        Err(crate::equilibrium::EquilibriumError::CapExceeded { size, cap }) => {
            writeln!(out, "refused: joint box has {size} points, cap is {cap}").map_err(fail)?;
            return Ok(EXIT_INPUT);
        }
        Err(e) => return Err(fail(e)),
    };
    let mut sys = assemble(g, a.input.order, None).map_err(fail)?;
    if a.corrupt_encoding {
        if let Some(p) = brute.lois.first() {
            sys.add_exclusion_cut(p).map_err(fail)?;
        } else {
            sys.constraints.truncate(g.players[0].effective_constraints().len());
        }
    }
    let n = sys.original_count;
    let mut stream = stream_solutions(sys, &cfg);
    let mut solver_set: Vec<Vec<i64>> = stream.by_ref().filter_map(|r| r.point.map(|p| p[..n].to_vec())).collect();
    if stream.last_status == Some(SolveStatus::LimitReached) {
        writeln!(out, "limit: enumeration stopped after {} points", solver_set.len()).map_err(fail)?;
        return Ok(EXIT_LIMIT);
    }
    solver_set.sort();
    let nash_in_lois = brute.nash.iter().all(|p| brute.lois.contains(p));
    if solver_set == brute.lois {
        writeln!(
            out,
            "match: {} LOIS-{} points, {} pure Nash points",
            solver_set.len(),
            a.input.order,
            brute.nash.len()
        )
        .map_err(fail)?;
        writeln!(out, "lois set: {}", format_set(&solver_set)).map_err(fail)?;
        writeln!(out, "nash set: {}", format_set(&brute.nash)).map_err(fail)?;
        if !nash_in_lois {
            writeln!(out, "warning: a pure Nash point is not in the LOIS set").map_err(fail)?;
            return Ok(EXIT_FAILURE);
        }
        return Ok(EXIT_OK);
    }
    let missing = brute.lois.iter().find(|p| !solver_set.contains(p));
    let extra = solver_set.iter().find(|p| !brute.lois.contains(p));
    writeln!(
        out,
        "mismatch: solver {} points, brute force {} points",
        solver_set.len(),
        brute.lois.len()
    )
    .map_err(fail)?;
    if let Some(p) = missing {
        writeln!(out, "witness {} found by brute force only", crate::model::JointPoint(p.clone())).map_err(fail)?;
    }
    if let Some(p) = extra {
        writeln!(out, "witness {} found by the solver only", crate::model::JointPoint(p.clone())).map_err(fail)?;
    }
    Ok(EXIT_FAILURE)
}

fn cmd_conditions(a: &InstanceArgs, out: &mut dyn Write) -> Result<i32, CliError> {
    check_order(a.order)?;
    let loaded = load_instance(&a.instance)?;
    let g = loaded.ipg();
    for p in 0..g.players.len() {
        let set = build_conditions(g, p, a.order).map_err(fail)?;
        out.write_all(render_conditions(g, &set).as_bytes()).map_err(fail)?;
    }
    Ok(EXIT_OK)
}

fn cmd_encode(a: &EncodeArgs, out: &mut dyn Write) -> Result<i32, CliError> {
    check_order(a.input.order)?;
    let loaded = load_instance(&a.input.instance)?;
    let welfare = a.welfare.as_deref().map(|w| parse_welfare(w, &loaded)).transpose()?;
    let sys = assemble(loaded.ipg(), a.input.order, welfare.as_ref()).map_err(fail)?;
    write_output(a.out.as_deref(), &sys.to_lp(), out)?;
    Ok(EXIT_OK)
}

// ---- experiments ----

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum Method {
    Lois(i64),
    Select(i64, usize),
    Stackelberg(i64),
}

impl Method {
    fn tag(&self) -> String {
        match self {
            Method::Lois(m) => format!("lois-{m}"),
            Method::Select(m, p) => format!("lois-{m}-{}", if *p == cng::DEFENDER { "fd" } else { "fa" }),
            Method::Stackelberg(m) => format!("stackelberg-lois-{m}"),
        }
    }
}

fn suite_methods(suite: Suite, welfare: WelfareChoice) -> Vec<Method> {
    match suite {
        Suite::Intrinsic => vec![Method::Lois(1), Method::Lois(2)],
        Suite::Extrinsic => match welfare {
            WelfareChoice::Fd => vec![Method::Select(1, cng::DEFENDER)],
            WelfareChoice::Fa => vec![Method::Select(1, cng::ATTACKER)],
            WelfareChoice::Both => vec![Method::Select(1, cng::DEFENDER), Method::Select(1, cng::ATTACKER)],
        },
        Suite::Stackelberg => vec![Method::Stackelberg(1)],
    }
}

/// One solve of one instance; also the per-instance JSON artifact.
#[derive(Clone, Debug, Serialize)]
pub struct RunRecord {
    pub schema_version: u32,
    pub size: usize,
    pub seed: u64,
    pub method: String,
    /// `solved`, `no_lois`, `limit` or `error`.
    pub outcome: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub time_s: Option<f64>,
    pub ics: usize,
    pub point: Option<Vec<i64>>,
    #[serde(with = "crate::rational::opt")]
    pub f_a: Option<Rational>,
    #[serde(with = "crate::rational::opt")]
    pub f_d: Option<Rational>,
    #[serde(with = "crate::rational::opt")]
    pub pos: Option<Rational>,
    #[serde(with = "crate::rational::opt")]
    pub poa: Option<Rational>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

fn run_one(size: usize, seed: u64, method: Method, cfg: &SolverConfig) -> RunRecord {
    let mut rec = RunRecord {
        schema_version: 1,
        size,
        seed,
        method: method.tag(),
        outcome: "error".into(),
        time_s: None,
        ics: 0,
        point: None,
        f_a: None,
        f_d: None,
        pos: None,
        poa: None,
        error: None,
    };
    let result = (|| -> Result<(), String> {
        let c = cng::generate_instance(seed, size, &GenConfig::default()).map_err(|e| e.to_string())?;
        let g = cng::to_ipg(&c);
        let outcome = match method {
            Method::Lois(m) => solve_lois(&g, m, cfg),
            Method::Select(m, p) => select_lois(&g, m, &g.players[p].payoff, cfg),
            Method::Stackelberg(m) => {
                let (l, f) = cng::to_stackelberg(&c, Leader::Defender);
                solve_stackelberg(&l, &f, m, cfg)
            }
        }
        .map_err(|e| e.to_string())?;
        rec.ics = outcome.stats.ic_count;
        rec.time_s = Some(outcome.stats.encode_time_s.unwrap_or(0.0) + outcome.stats.solve_time_s.unwrap_or(0.0));
        rec.outcome = match (outcome.status, &outcome.report) {
            (SolveStatus::LimitReached, _) => "limit",
            (_, Some(_)) => "solved",
            (_, None) => "no_lois",
        }
        .into();
        if let Some(r) = outcome.report {
            let optima = cng::joint_optima(&c, cfg).map_err(|e| e.to_string())?;
            let pm = cng::price_metrics_from(&c, &r.point, &optima).map_err(|e| e.to_string())?;
            rec.f_a = Some(pm.attacker_at_point);
            rec.f_d = Some(pm.defender_at_point);
            rec.pos = pm.pos;
            rec.poa = pm.poa;
            rec.point = Some(r.point);
        }
        Ok(())
    })();
    if let Err(e) = result {
        rec.outcome = "error".into();
        rec.error = Some(e);
    }
    rec
}

fn fmt_f64(v: Option<f64>) -> String {
    v.map(|x| format!("{x:.6}")).unwrap_or_default()
}

fn mean(values: &[Rational]) -> Option<f64> {
    if values.is_empty() {
        return None;
    }
    let total: Rational = values.iter().sum();
    Some(to_f64(&(total / Rational::from_integer((values.len() as i64).into()))))
}

/// One CSV row per (size, method): means over instances with a point,
/// PoS/PoA also as [min, max].
pub fn aggregate_row(size: usize, method: &str, records: &[&RunRecord], timing: bool) -> Vec<String> {
    let solved: Vec<&&RunRecord> = records.iter().filter(|r| r.point.is_some()).collect();
    let collect = |f: fn(&RunRecord) -> Option<Rational>| -> Vec<Rational> { solved.iter().filter_map(|r| f(r)).collect() };
    let f_a = collect(|r| r.f_a.clone());
    let f_d = collect(|r| r.f_d.clone());
    let pos = collect(|r| r.pos.clone());
    let poa = collect(|r| r.poa.clone());
    let lo = |v: &[Rational]| v.iter().min().map(to_f64);
    let hi = |v: &[Rational]| v.iter().max().map(to_f64);
    let time = if timing && !records.is_empty() {
        let t: f64 = records.iter().filter_map(|r| r.time_s).sum();
        Some(t / records.len() as f64)
    } else {
        None
    };
    let count = |tag: &str| records.iter().filter(|r| r.outcome == tag).count();
    let ics = records.iter().map(|r| r.ics).max().unwrap_or(0);
    vec![
        size.to_string(),
        method.to_string(),
        fmt_f64(time),
        ics.to_string(),
        fmt_f64(mean(&f_a)),
        fmt_f64(mean(&f_d)),
        fmt_f64(mean(&pos)),
        fmt_f64(lo(&pos)),
        fmt_f64(hi(&pos)),
        fmt_f64(mean(&poa)),
        fmt_f64(lo(&poa)),
        fmt_f64(hi(&poa)),
        format!(
            "solved={};no_lois={};limit={};error={}",
            count("solved"),
            count("no_lois"),
            count("limit"),
            count("error")
        ),
    ]
}

fn cmd_experiment(a: &ExperimentArgs, out: &mut dyn Write) -> Result<i32, CliError> {
    let cfg = a.solver.config()?;
    if a.sizes.contains(&0) {
        return Err(CliError::Input("sizes must be positive".into()));
    }
    let methods = suite_methods(a.suite, a.welfare);
    let jobs: Vec<(usize, u64, Method)> = a
        .sizes
        .iter()
        .flat_map(|&size| {
            let methods = methods.clone();
            (0..a.count).flat_map(move |i| methods.clone().into_iter().map(move |m| (size, a.instance_seed + i as u64, m)))
        })
        .collect();
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(a.jobs.max(1))
        .build()
        .map_err(fail)?;
    let mut records: Vec<RunRecord> = pool.install(|| jobs.par_iter().map(|&(size, seed, m)| run_one(size, seed, m, &cfg)).collect());
    if a.no_timing {
        for r in &mut records {
            r.time_s = None;
        }
    }
    if let Some(dir) = &a.artifacts {
        std::fs::create_dir_all(dir).map_err(|e| fail(format!("{}: {e}", dir.display())))?;
        for r in &records {
            let path = dir.join(format!("{}-v{}-s{}.json", r.method, r.size, r.seed));
            let text = serde_json::to_string_pretty(r).map_err(fail)? + "\n";
            std::fs::write(&path, text).map_err(|e| fail(format!("{}: {e}", path.display())))?;
        }
    }
    let mut body = Vec::new();
    {
        let mut w = csv::Writer::from_writer(&mut body);
        w.write_record(CSV_COLUMNS).map_err(fail)?;
        for &size in &a.sizes {
            for m in &methods {
                let tag = m.tag();
                let rows: Vec<&RunRecord> = records.iter().filter(|r| r.size == size && r.method == tag).collect();
                w.write_record(aggregate_row(size, &tag, &rows, !a.no_timing)).map_err(fail)?;
            }
        }
        w.flush().map_err(fail)?;
    }
    let suite = format!("{:?}", a.suite).to_lowercase();
    let mut text = format!("# {CSV_VERSION} suite={suite}\n");
    text.push_str(&String::from_utf8(body).map_err(fail)?);
    write_output(Some(&a.out), &text, out)?;
    for r in records.iter().filter(|r| r.outcome == "error") {
        eprintln!("instance v{} s{} {}: {}", r.size, r.seed, r.method, r.error.as_deref().unwrap_or(""));
    }
    if a.out.as_os_str() != "-" {
        writeln!(out, "wrote {} rows to {}", a.sizes.len() * methods.len(), a.out.display()).map_err(fail)?;
    }
    Ok(EXIT_OK)
}
