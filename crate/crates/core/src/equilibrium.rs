//! Game-level operations: LOIS solve, enumeration and welfare selection,
//! pure Nash checks, Stackelberg solves and brute-force oracles.

use crate::conditions::{build_conditions, build_player_conditions, check_point_locally_optimal};
use crate::encoding::{assemble, EncodedSystem, EncodingError};
use crate::model::{IpgInstance, ModelError, PlayerProgram, QuadraticPayoff, VarBlock};
use crate::rational::Rational;
use crate::solver::{optimize, stream_solutions, SolveStats, SolveStatus, SolverConfig, SolverError};
use num_traits::Zero;
use serde::Serialize;
use std::collections::BTreeMap;
use std::time::Instant;

pub const REPORT_SCHEMA_VERSION: u32 = 1;

/// Default cap on joint box points for the exhaustive oracles.
pub const BRUTE_FORCE_CAP: u128 = 1_000_000;

#[derive(Debug, thiserror::Error)]
pub enum EquilibriumError {
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Conditions(#[from] crate::conditions::ConditionError),
    #[error(transparent)]
    Encoding(#[from] EncodingError),
    #[error(transparent)]
    Solver(#[from] SolverError),
    #[error("box has {size} points, above the cap of {cap}")]
    CapExceeded { size: u128, cap: u128 },
    #[error("best response for player {0} stopped at a limit")]
    BestResponseLimit(usize),
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct RunStats {
    pub ic_count: usize,
    pub variables: usize,
    pub constraints: usize,
    pub nodes: u64,
    pub propagations: u64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub encode_time_s: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub solve_time_s: Option<f64>,
}

impl RunStats {
    fn new(sys: &EncodedSystem, solve: &SolveStats, encode_s: f64) -> Self {
        RunStats {
            ic_count: sys.ic_count,
            variables: sys.vars.len(),
            constraints: sys.constraints.len(),
            nodes: solve.nodes,
            propagations: solve.propagations,
            encode_time_s: Some(encode_s),
            solve_time_s: Some(solve.wall_time.as_secs_f64()),
        }
    }

    pub fn strip_timing(&mut self) {
        self.encode_time_s = None;
        self.solve_time_s = None;
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct EquilibriumReport {
    pub schema_version: u32,
    /// `lois-<m>` or `pure-nash-verified`.
    pub kind: String,
    pub order: i64,
    pub point: Vec<i64>,
    #[serde(with = "crate::rational::vec")]
    pub payoffs: Vec<Rational>,
    #[serde(with = "crate::rational::opt", skip_serializing_if = "Option::is_none")]
    pub welfare: Option<Rational>,
}

impl EquilibriumReport {
    fn lois(instance: &IpgInstance, m: i64, point: Vec<i64>, welfare: Option<&QuadraticPayoff>) -> Self {
        let payoffs = instance.players.iter().map(|p| p.payoff.eval(&point)).collect();
        EquilibriumReport {
            schema_version: REPORT_SCHEMA_VERSION,
            kind: format!("lois-{m}"),
            order: m,
            welfare: welfare.map(|w| w.eval(&point)),
            point,
            payoffs,
        }
    }

    /// Upgrades the kind after a successful Nash check.
    pub fn mark_nash(&mut self) {
        self.kind = "pure-nash-verified".into();
    }
}

/// Result of a solve: `report` is set iff `status` is feasible or optimal,
/// or a limit stopped the search after an incumbent was found.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Outcome {
    pub status: SolveStatus,
    pub report: Option<EquilibriumReport>,
    pub stats: RunStats,
}

fn check_instance(instance: &IpgInstance) -> Result<(), EquilibriumError> {
    let diags = instance.validate();
    if diags.is_empty() {
        Ok(())
    } else {
        Err(ModelError::Invalid(diags).into())
    }
}

fn run(instance: &IpgInstance, m: i64, welfare: Option<&QuadraticPayoff>, config: &SolverConfig) -> Result<Outcome, EquilibriumError> {
    check_instance(instance)?;
    let t = Instant::now();
    let sys = assemble(instance, m, welfare)?;
    let encode_s = t.elapsed().as_secs_f64();
    let res = optimize(&sys, config)?;
    let report = res
        .originals(&sys)
        .map(|p| EquilibriumReport::lois(instance, m, p, welfare));
    Ok(Outcome {
        status: res.status,
        report,
        stats: RunStats::new(&sys, &res.stats, encode_s),
    })
}

/// Any point satisfying every player's LOIS-m conditions.
pub fn solve_lois(instance: &IpgInstance, m: i64, config: &SolverConfig) -> Result<Outcome, EquilibriumError> {
    run(instance, m, None, config)
}

/// A LOIS-m point optimizing `welfare` in its own sense.
pub fn select_lois(instance: &IpgInstance, m: i64, welfare: &QuadraticPayoff, config: &SolverConfig) -> Result<Outcome, EquilibriumError> {
    run(instance, m, Some(welfare), config)
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Enumeration {
    pub reports: Vec<EquilibriumReport>,
    /// `infeasible` when the set was exhausted, `limit_reached` when a solve
    /// stopped, `feasible` when `k` points were produced first.
    pub status: SolveStatus,
    pub stats: RunStats,
}

/// Up to `k` distinct LOIS-m points.
pub fn enumerate_lois(instance: &IpgInstance, m: i64, k: usize, config: &SolverConfig) -> Result<Enumeration, EquilibriumError> {
    check_instance(instance)?;
    let t = Instant::now();
    let sys = assemble(instance, m, None)?;
    let encode_s = t.elapsed().as_secs_f64();
    let base = RunStats::new(&sys, &SolveStats::default(), encode_s);
    let mut stream = stream_solutions(sys, config);
    let mut reports = Vec::new();
    let mut status = SolveStatus::Feasible;
    if k > 0 {
        let n = instance.num_vars();
        for res in stream.by_ref() {
            if let Some(p) = &res.point {
                reports.push(EquilibriumReport::lois(instance, m, p[..n].to_vec(), None));
            }
            if res.status == SolveStatus::LimitReached {
                break;
            }
            if reports.len() == k {
                break;
            }
        }
        status = match stream.last_status {
            Some(SolveStatus::LimitReached) => SolveStatus::LimitReached,
            Some(SolveStatus::Infeasible) => SolveStatus::Infeasible,
            _ => SolveStatus::Feasible,
        };
    }
    let mut stats = base;
    stats.nodes = stream.stats.nodes;
    stats.propagations = stream.stats.propagations;
    stats.solve_time_s = Some(stream.stats.wall_time.as_secs_f64());
    Ok(Enumeration { reports, status, stats })
}

/// The payoff of `player` with every other variable fixed at `point`.
fn restricted_payoff(program: &PlayerProgram, point: &[i64]) -> QuadraticPayoff {
    let own = &program.own_block;
    let f = &program.payoff;
    let mut out = QuadraticPayoff::zero(f.dim, f.sense);
    out.constant = f.constant.clone();
    for (i, c) in f.linear.iter().enumerate() {
        if own.contains(i) {
            out.add_linear(i, c.clone());
        } else {
            out.constant += c * Rational::from_integer(point[i].into());
        }
    }
    for (&(i, j), c) in &f.quad {
        let val = |k: usize| Rational::from_integer(point[k].into());
        match (own.contains(i), own.contains(j)) {
            (true, true) => out.add_quad(i, j, c.clone()),
            (true, false) => out.add_linear(i, c * val(j)),
            (false, true) => out.add_linear(j, c * val(i)),
            (false, false) => out.constant += c * val(i) * val(j),
        }
    }
    out
}

fn own_box_size(block: &VarBlock) -> u128 {
    block
        .lower
        .iter()
        .zip(&block.upper)
        .fold(1u128, |acc, (lo, hi)| acc.saturating_mul((hi - lo + 1).max(0) as u128))
}

/// Best response value of `player` against `point`: `None` when the
/// player has no feasible strategy.
pub fn best_response_value(instance: &IpgInstance, player: usize, point: &[i64], config: &SolverConfig) -> Result<Option<Rational>, EquilibriumError> {
    let program = instance.players.get(player).ok_or(ModelError::NoSuchPlayer(player))?;
    let payoff = restricted_payoff(program, point);
    let own = &program.own_block;
    let engine_ok = payoff.quad.keys().all(|&(i, j)| {
        let bin = |k: usize| own.bounds_of(k) == (0, 1);
        bin(i) && bin(j)
    });
    if engine_ok {
        let mut bounds = instance.bounds();
        for (k, b) in bounds.iter_mut().enumerate() {
            if !own.contains(k) {
                *b = (point[k], point[k]);
            }
        }
        let mut sys = EncodedSystem::with_originals(&bounds, |i| instance.var_name(i));
        for c in &program.constraints {
            for g in c.ge_forms() {
                sys.add_ge(&g)?;
            }
        }
        sys.set_quadratic_objective(&payoff)?;
        let res = optimize(&sys, config)?;
        return match res.status {
            SolveStatus::Optimal => Ok(res.originals(&sys).map(|p| payoff.eval(&p))),
            SolveStatus::Infeasible => Ok(None),
            _ => Err(EquilibriumError::BestResponseLimit(player)),
        };
    }
    let size = own_box_size(own);
    if size > BRUTE_FORCE_CAP {
        return Err(EquilibriumError::CapExceeded { size, cap: BRUTE_FORCE_CAP });
    }
    let mut best: Option<Rational> = None;
    for_each_box_point(&own.lower, &own.upper, |v| {
        let mut trial = point.to_vec();
        trial[own.start..own.start + v.len()].copy_from_slice(v);
        if program.is_feasible(&trial) {
            let f = payoff.eval(&trial);
            if best.as_ref().is_none_or(|b| payoff.better(&f, b)) {
                best = Some(f);
            }
        }
    });
    Ok(best)
}

/// Feasible for everyone and no player has any strictly improving feasible
/// deviation in their own box.
pub fn is_pure_nash(instance: &IpgInstance, point: &[i64], config: &SolverConfig) -> Result<bool, EquilibriumError> {
    for p in 0..instance.players.len() {
        if !instance.is_player_feasible(p, point)? {
            return Ok(false);
        }
    }
    for (p, program) in instance.players.iter().enumerate() {
        let here = program.payoff.eval(point);
        match best_response_value(instance, p, point, config)? {
            Some(best) if program.payoff.better(&best, &here) => return Ok(false),
            _ => {}
        }
    }
    Ok(true)
}

fn for_each_box_point(lower: &[i64], upper: &[i64], mut f: impl FnMut(&[i64])) {
    if lower.iter().zip(upper).any(|(l, h)| l > h) {
        return;
    }
    let mut x = lower.to_vec();
    loop {
        f(&x);
        let mut k = 0;
        while k < x.len() && x[k] == upper[k] {
            x[k] = lower[k];
            k += 1;
        }
        if k == x.len() {
            return;
        }
        x[k] += 1;
    }
}

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct BruteSets {
    pub lois: Vec<Vec<i64>>,
    pub nash: Vec<Vec<i64>>,
}

/// Exhaustive LOIS-m and pure Nash sets, in lexicographic order. Nash
/// membership is decided by its own scan of each player's box, independent
/// of the neighborhood check.
pub fn brute_force_sets(instance: &IpgInstance, m: i64, cap: u128) -> Result<BruteSets, EquilibriumError> {
    let size = instance.box_size();
    if size > cap {
        return Err(EquilibriumError::CapExceeded { size, cap });
    }
    let bounds = instance.bounds();
    let (lo, hi): (Vec<i64>, Vec<i64>) = bounds.into_iter().unzip();
    let mut out = BruteSets::default();
    let mut err = None;
    for_each_box_point(&lo, &hi, |x| {
        if err.is_some() {
            return;
        }
        let step = || -> Result<(bool, bool), ModelError> {
            let feasible = (0..instance.players.len()).try_fold(true, |acc, p| Ok::<_, ModelError>(acc && instance.is_player_feasible(p, x)?))?;
            if !feasible {
                return Ok((false, false));
            }
            let lois = (0..instance.players.len()).try_fold(true, |acc, p| Ok::<_, ModelError>(acc && check_point_locally_optimal(instance, p, x, m)?))?;
            let nash = instance.players.iter().all(|prog| no_improving_deviation(prog, x));
            Ok((lois, nash))
        };
        match step() {
            Ok((lois, nash)) => {
                if lois {
                    out.lois.push(x.to_vec());
                }
                if nash {
                    out.nash.push(x.to_vec());
                }
            }
            Err(e) => err = Some(e),
        }
    });
    if let Some(e) = err {
        return Err(e.into());
    }
    out.lois.sort();
    out.nash.sort();
    Ok(out)
}

fn no_improving_deviation(program: &PlayerProgram, point: &[i64]) -> bool {
    let own = &program.own_block;
    let here = program.payoff.eval(point);
    let mut trial = point.to_vec();
    let mut improving = false;
    for_each_box_point(&own.lower, &own.upper, |v| {
        if improving {
            return;
        }
        trial[own.start..own.start + v.len()].copy_from_slice(v);
        if program.is_feasible(&trial) && program.payoff.better(&program.payoff.eval(&trial), &here) {
            improving = true;
        }
    });
    !improving
}

/// The leader and followers as one instance, leader first, with block
/// owners renumbered to match.
pub fn stackelberg_instance(leader: &PlayerProgram, followers: &[PlayerProgram]) -> IpgInstance {
    let players: Vec<PlayerProgram> = std::iter::once(leader)
        .chain(followers)
        .enumerate()
        .map(|(i, p)| {
            let mut p = p.clone();
            p.own_block.owner = i;
            p
        })
        .collect();
    IpgInstance::from_players(players)
}

/// Optimizes the leader's payoff over points that are feasible for the
/// leader and satisfy every follower's LOIS-m conditions. Ties among
/// follower responses go to the leader (optimistic).
pub fn solve_stackelberg(leader: &PlayerProgram, followers: &[PlayerProgram], m: i64, config: &SolverConfig) -> Result<Outcome, EquilibriumError> {
    let joint = stackelberg_instance(leader, followers);
    let diags: Vec<_> = joint
        .validate()
        .into_iter()
        .filter(|d| d.kind != crate::model::DiagnosticKind::CouplingFlag)
        .collect();
    if !diags.is_empty() {
        return Err(ModelError::Invalid(diags).into());
    }
    let t = Instant::now();
    let mut sys = EncodedSystem::with_originals(&joint.bounds(), |i| joint.var_name(i));
    for c in &leader.constraints {
        for g in c.ge_forms() {
            sys.add_ge(&g)?;
        }
    }
    for (k, f) in followers.iter().enumerate() {
        let set = build_player_conditions(f, k + 1, m)?;
        sys.add_condition_set(&set, Default::default())?;
    }
    sys.set_quadratic_objective(&leader.payoff)?;
    let encode_s = t.elapsed().as_secs_f64();
    let res = optimize(&sys, config)?;
    let report = res.originals(&sys).map(|p| {
        let mut r = EquilibriumReport::lois(&joint, m, p, Some(&leader.payoff));
        r.kind = format!("stackelberg-lois-{m}");
        r
    });
    Ok(Outcome {
        status: res.status,
        report,
        stats: RunStats::new(&sys, &res.stats, encode_s),
    })
}

/// IC counts per player of the LOIS-m system.
pub fn ic_counts(instance: &IpgInstance, m: i64) -> Result<BTreeMap<usize, usize>, EquilibriumError> {
    (0..instance.players.len())
        .map(|p| Ok((p, build_conditions(instance, p, m)?.implications.len())))
        .collect()
}

/// Sum of all player payoffs.
pub fn utilitarian_welfare(instance: &IpgInstance) -> QuadraticPayoff {
    let n = instance.num_vars();
    let mut w = QuadraticPayoff::zero(n, crate::model::Sense::Maximize);
    for p in &instance.players {
        let sign = if p.payoff.sense == crate::model::Sense::Maximize {
            Rational::from_integer(1.into())
        } else {
            Rational::from_integer((-1).into())
        };
        w.constant += &p.payoff.constant * &sign;
        for (i, c) in p.payoff.linear.iter().enumerate() {
            if !c.is_zero() {
                w.add_linear(i, c * &sign);
            }
        }
        for (&(i, j), c) in &p.payoff.quad {
            w.add_quad(i, j, c * &sign);
        }
    }
    w
}
