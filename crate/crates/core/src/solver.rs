//! Exact branch-and-bound over bounded integer boxes for systems of rows
//! `Σ a·x ≥ b` with integer coefficients.
//!
//! Depth-first search with bound propagation: each row keeps its maximum
//! activity over the current box, and a row whose slack shrinks tightens the
//! bounds of its variables. Bound changes go on a trail and are undone on
//! backtrack. Objectives are handled with a cutoff row `c·x ≥ best + 1` whose
//! right-hand side rises with every incumbent.

use crate::encoding::EncodedSystem;
use crate::model::{LinExpr, Sense};
use crate::rational::{denominator_lcm, Rational};
use num_bigint::BigInt;
use num_traits::ToPrimitive;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use std::time::{Duration, Instant};

#[derive(Clone, Debug)]
pub struct SolverConfig {
    pub time_limit: Option<Duration>,
    pub node_limit: Option<u64>,
    /// Permutes branching tie-breaks. `None` keeps index order.
    pub seed: Option<u64>,
}

impl Default for SolverConfig {
    fn default() -> Self {
        SolverConfig {
            time_limit: Some(Duration::from_secs(100)),
            node_limit: None,
            seed: None,
        }
    }
}

impl SolverConfig {
    pub fn unlimited() -> Self {
        SolverConfig {
            time_limit: None,
            node_limit: None,
            seed: None,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum SolveStatus {
    /// A point was found (feasibility mode).
    Feasible,
    /// Proven optimal incumbent.
    Optimal,
    Infeasible,
    /// Stopped by a limit; an incumbent may exist.
    LimitReached,
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize)]
pub struct SolveStats {
    pub nodes: u64,
    pub propagations: u64,
    pub solutions: u64,
    #[serde(skip)]
    pub wall_time: Duration,
}

impl SolveStats {
    pub fn absorb(&mut self, other: &SolveStats) {
        self.nodes += other.nodes;
        self.propagations += other.propagations;
        self.solutions += other.solutions;
        self.wall_time += other.wall_time;
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SolveResult {
    pub status: SolveStatus,
    /// Full system point (originals first).
    pub point: Option<Vec<i64>>,
    pub objective: Option<Rational>,
    pub stats: SolveStats,
}

impl SolveResult {
    pub fn originals(&self, sys: &EncodedSystem) -> Option<Vec<i64>> {
        self.point.as_ref().map(|p| p[..sys.original_count].to_vec())
    }
}

#[derive(Debug, thiserror::Error, PartialEq, Eq)]
pub enum SolverError {
    #[error("coefficient does not fit in 64 bits")]
    Overflow,
}

struct Row {
    terms: Vec<(usize, i64)>,
    rhs: i128,
}

/// Objective as `(Σ c·x + c0) / scale`, normalized to maximization.
struct IntObjective {
    coeffs: Vec<i64>,
    row: usize,
}

struct Search {
    lo: Vec<i64>,
    hi: Vec<i64>,
    rows: Vec<Row>,
    occ: Vec<Vec<(usize, i64)>>,
    maxact: Vec<i128>,
    queue: Vec<usize>,
    queued: Vec<bool>,
    trail: Vec<(usize, i64, i64)>,
    priority: Vec<usize>,
    objective: Option<IntObjective>,
    incumbent: Option<Vec<i64>>,
    stats: SolveStats,
    start: Instant,
    config: SolverConfig,
    stopped: bool,
    infeasible_root: bool,
    original_count: usize,
}

enum Flow {
    Continue,
    Stop,
}

impl Search {
    fn new(sys: &EncodedSystem, objective: Option<Vec<i64>>, config: &SolverConfig) -> Self {
        let n = sys.vars.len();
        let mut rows: Vec<Row> = sys
            .constraints
            .iter()
            .map(|r| Row {
                terms: r.terms.clone(),
                rhs: -(r.constant as i128),
            })
            .collect();
        let objective = objective.map(|coeffs| {
            rows.push(Row {
                terms: coeffs
                    .iter()
                    .enumerate()
                    .filter(|&(_, &c)| c != 0)
                    .map(|(i, &c)| (i, c))
                    .collect(),
                rhs: i128::MIN / 4,
            });
            IntObjective {
                coeffs,
                row: rows.len() - 1,
            }
        });
        let mut occ = vec![Vec::new(); n];
        for (r, row) in rows.iter().enumerate() {
            for &(j, a) in &row.terms {
                occ[j].push((r, a));
            }
        }
        let lo: Vec<i64> = sys.vars.iter().map(|v| v.lower).collect();
        let hi: Vec<i64> = sys.vars.iter().map(|v| v.upper).collect();
        let maxact = rows
            .iter()
            .map(|row| {
                row.terms
                    .iter()
                    .map(|&(j, a)| a as i128 * if a > 0 { hi[j] } else { lo[j] } as i128)
                    .sum()
            })
            .collect();
        let mut priority: Vec<usize> = (0..n).collect();
        if let Some(seed) = config.seed {
            priority.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
        }
        let m = rows.len();
        Search {
            lo,
            hi,
            rows,
            occ,
            maxact,
            queue: (0..m).collect(),
            queued: vec![true; m],
            trail: Vec::new(),
            priority,
            objective,
            incumbent: None,
            stats: SolveStats::default(),
            start: Instant::now(),
            config: config.clone(),
            stopped: false,
            infeasible_root: sys.vars.iter().any(|v| v.lower > v.upper),
            original_count: sys.original_count,
        }
    }

    fn enqueue(&mut self, r: usize) {
        if !self.queued[r] {
            self.queued[r] = true;
            self.queue.push(r);
        }
    }

    fn set_lo(&mut self, j: usize, v: i64) {
        let old = self.lo[j];
        self.trail.push((j, old, self.hi[j]));
        self.lo[j] = v;
        for k in 0..self.occ[j].len() {
            let (r, a) = self.occ[j][k];
            if a < 0 {
                self.maxact[r] += a as i128 * (v - old) as i128;
                self.enqueue(r);
            }
        }
    }

    fn set_hi(&mut self, j: usize, v: i64) {
        let old = self.hi[j];
        self.trail.push((j, self.lo[j], old));
        self.hi[j] = v;
        for k in 0..self.occ[j].len() {
            let (r, a) = self.occ[j][k];
            if a > 0 {
                self.maxact[r] += a as i128 * (v - old) as i128;
                self.enqueue(r);
            }
        }
    }

    fn undo(&mut self, mark: usize) {
        while self.trail.len() > mark {
            let (j, old_lo, old_hi) = self.trail.pop().unwrap();
            let (cur_lo, cur_hi) = (self.lo[j], self.hi[j]);
            for &(r, a) in &self.occ[j] {
                if a > 0 {
                    self.maxact[r] += a as i128 * (old_hi - cur_hi) as i128;
                } else {
                    self.maxact[r] += a as i128 * (old_lo - cur_lo) as i128;
                }
            }
            self.lo[j] = old_lo;
            self.hi[j] = old_hi;
        }
    }

    fn clear_queue(&mut self) {
        for r in self.queue.drain(..) {
            self.queued[r] = false;
        }
    }

    fn propagate(&mut self) -> bool {
        while let Some(r) = self.queue.pop() {
            self.queued[r] = false;
            self.stats.propagations += 1;
            let slack = self.maxact[r] - self.rows[r].rhs;
            if slack < 0 {
                self.clear_queue();
                return false;
            }
            for k in 0..self.rows[r].terms.len() {
                let (j, a) = self.rows[r].terms[k];
                let (lo, hi) = (self.lo[j], self.hi[j]);
                if lo == hi {
                    continue;
                }
                let a128 = a as i128;
                let span = a128.abs() * (hi - lo) as i128;
                if span <= slack {
                    continue;
                }
                let step = (slack / a128.abs()) as i64;
                if a > 0 {
                    self.set_lo(j, hi - step);
                } else {
                    self.set_hi(j, lo + step);
                }
            }
        }
        true
    }

    fn limit_hit(&mut self) -> bool {
        if self.stopped {
            return true;
        }
        if let Some(limit) = self.config.node_limit {
            if self.stats.nodes >= limit {
                self.stopped = true;
            }
        }
        if self.stats.nodes.is_multiple_of(1024) {
            if let Some(t) = self.config.time_limit {
                if self.start.elapsed() >= t {
                    self.stopped = true;
                }
            }
        }
        self.stopped
    }

    /// Original variables first, then narrowest domain.
    fn pick(&self) -> Option<usize> {
        let mut best: Option<(bool, i64, usize, usize)> = None;
        for j in 0..self.lo.len() {
            let width = self.hi[j] - self.lo[j];
            if width == 0 {
                continue;
            }
            let key = (j >= self.original_count, width, self.priority[j], j);
            if best.is_none_or(|b| key < b) {
                best = Some(key);
            }
        }
        best.map(|b| b.3)
    }

    fn record_leaf(&mut self) -> Flow {
        let point = self.lo.clone();
        self.stats.solutions += 1;
        match &self.objective {
            None => {
                self.incumbent = Some(point);
                Flow::Stop
            }
            Some(obj) => {
                let value: i128 = obj
                    .coeffs
                    .iter()
                    .zip(&point)
                    .map(|(&c, &x)| c as i128 * x as i128)
                    .sum();
                let row = obj.row;
                self.rows[row].rhs = value + 1;
                self.incumbent = Some(point);
                Flow::Continue
            }
        }
    }

    fn dfs(&mut self) -> Flow {
        self.stats.nodes += 1;
        if self.limit_hit() {
            return Flow::Stop;
        }
        let Some(j) = self.pick() else {
            return self.record_leaf();
        };
        let (lo, hi) = (self.lo[j], self.hi[j]);
        let high_first = self
            .objective
            .as_ref()
            .is_some_and(|o| o.coeffs[j] > 0);
        // Fix to the preferred end, then the rest of the domain.
        let branches: [(i64, i64); 2] = if high_first {
            [(hi, hi), (lo, hi - 1)]
        } else {
            [(lo, lo), (lo + 1, hi)]
        };
        for (b_lo, b_hi) in branches {
            let mark = self.trail.len();
            if b_lo > self.lo[j] {
                self.set_lo(j, b_lo);
            }
            if b_hi < self.hi[j] {
                self.set_hi(j, b_hi);
            }
            if let Some(obj) = &self.objective {
                let row = obj.row;
                self.enqueue(row);
            }
            if self.propagate() {
                if let Flow::Stop = self.dfs() {
                    self.undo(mark);
                    return Flow::Stop;
                }
            }
            self.undo(mark);
        }
        Flow::Continue
    }

    fn run(mut self) -> (Option<Vec<i64>>, bool, SolveStats) {
        if !self.infeasible_root && self.propagate() {
            let _ = self.dfs();
        }
        self.stats.wall_time = self.start.elapsed();
        (self.incumbent, self.stopped, self.stats)
    }
}

fn integer_objective(expr: &LinExpr, sense: Sense, n: usize) -> Result<Vec<i64>, SolverError> {
    let lcm = denominator_lcm(expr.coeffs.values());
    let scale = Rational::from_integer(lcm);
    let sign = if sense == Sense::Maximize { 1 } else { -1 };
    let mut out = vec![0i64; n];
    for (&i, c) in &expr.coeffs {
        let v: BigInt = (c * &scale).to_integer() * sign;
        out[i] = v.to_i64().ok_or(SolverError::Overflow)?;
    }
    Ok(out)
}

fn finish(sys: &EncodedSystem, point: Option<Vec<i64>>, stopped: bool, stats: SolveStats, optimizing: bool) -> SolveResult {
    if let Some(p) = &point {
        assert!(sys.verify_point(p).is_ok(), "solver returned a point violating the system");
    }
    let status = match (&point, stopped, optimizing) {
        (_, true, _) => SolveStatus::LimitReached,
        (Some(_), false, true) => SolveStatus::Optimal,
        (Some(_), false, false) => SolveStatus::Feasible,
        (None, false, _) => SolveStatus::Infeasible,
    };
    let objective = point.as_ref().and_then(|p| sys.objective_value(p));
    SolveResult {
        status,
        point,
        objective,
        stats,
    }
}

/// Any point satisfying every row, ignoring the objective.
pub fn find_feasible(sys: &EncodedSystem, config: &SolverConfig) -> SolveResult {
    let (point, stopped, stats) = Search::new(sys, None, config).run();
    finish(sys, point, stopped, stats, false)
}

/// Optimizes the system objective. Without an objective this is
/// [`find_feasible`].
pub fn optimize(sys: &EncodedSystem, config: &SolverConfig) -> Result<SolveResult, SolverError> {
    let Some(obj) = &sys.objective else {
        return Ok(find_feasible(sys, config));
    };
    let coeffs = integer_objective(&obj.expr, obj.sense, sys.vars.len())?;
    let (point, stopped, stats) = Search::new(sys, Some(coeffs), config).run();
    Ok(finish(sys, point, stopped, stats, true))
}

/// Distinct solutions (by original variables) in order of non-worsening
/// objective when one is present. Each step re-solves with an exclusion cut
/// on the previous point.
pub struct SolutionStream {
    system: EncodedSystem,
    config: SolverConfig,
    done: bool,
    pub last_status: Option<SolveStatus>,
    pub stats: SolveStats,
}

pub fn stream_solutions(system: EncodedSystem, config: &SolverConfig) -> SolutionStream {
    SolutionStream {
        system,
        config: config.clone(),
        done: false,
        last_status: None,
        stats: SolveStats::default(),
    }
}

impl SolutionStream {
    pub fn system(&self) -> &EncodedSystem {
        &self.system
    }
}

impl Iterator for SolutionStream {
    type Item = SolveResult;

    fn next(&mut self) -> Option<SolveResult> {
        if self.done {
            return None;
        }
        let res = match optimize(&self.system, &self.config) {
            Ok(r) => r,
            Err(_) => {
                self.done = true;
                return None;
            }
        };
        self.stats.absorb(&res.stats);
        self.last_status = Some(res.status);
        let Some(point) = res.point.clone() else {
            self.done = true;
            return None;
        };
        if res.status == SolveStatus::LimitReached {
            self.done = true;
        }
        let originals = point[..self.system.original_count].to_vec();
        if self.system.add_exclusion_cut(&originals).is_err() {
            self.done = true;
        }
        Some(res)
    }
}
