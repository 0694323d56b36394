//! Integer programming games with quadratic payoffs and linear constraints.
//!
//! A game is a list of [`PlayerProgram`]s over one joint integer vector. Each
//! player owns a contiguous [`VarBlock`] of that vector; payoffs may read any
//! joint variable, constraints only the own block unless the player is
//! flagged `coupled`.

use crate::rational::{self, int, Rational};
use num_traits::{Signed, Zero};
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::fmt;

/// Affine form `Σ coeff·x + constant` over joint variable indices.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct LinExpr {
    pub coeffs: BTreeMap<usize, Rational>,
    pub constant: Rational,
}

impl LinExpr {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn constant(c: Rational) -> Self {
        LinExpr {
            coeffs: BTreeMap::new(),
            constant: c,
        }
    }

    pub fn var(index: usize) -> Self {
        Self::new().with_term(index, int(1))
    }

    pub fn with_term(mut self, index: usize, coeff: Rational) -> Self {
        self.add_term(index, coeff);
        self
    }

    pub fn with_constant(mut self, c: Rational) -> Self {
        self.constant += c;
        self
    }

    pub fn add_term(&mut self, index: usize, coeff: Rational) {
        if coeff.is_zero() {
            return;
        }
        let entry = self.coeffs.entry(index).or_insert_with(Rational::zero);
        *entry += coeff;
        if entry.is_zero() {
            self.coeffs.remove(&index);
        }
    }

    pub fn coeff(&self, index: usize) -> Rational {
        self.coeffs.get(&index).cloned().unwrap_or_else(Rational::zero)
    }

    pub fn is_constant(&self) -> bool {
        self.coeffs.is_empty()
    }

    pub fn support(&self) -> impl Iterator<Item = usize> + '_ {
        self.coeffs.keys().copied()
    }

    pub fn eval(&self, point: &[i64]) -> Rational {
        let mut acc = self.constant.clone();
        for (&i, c) in &self.coeffs {
            acc += c * int(point[i]);
        }
        acc
    }

    pub fn scaled(&self, factor: &Rational) -> LinExpr {
        if factor.is_zero() {
            return LinExpr::new();
        }
        LinExpr {
            coeffs: self
                .coeffs
                .iter()
                .map(|(&i, c)| (i, c * factor))
                .collect(),
            constant: &self.constant * factor,
        }
    }

    pub fn negated(&self) -> LinExpr {
        self.scaled(&int(-1))
    }

    pub fn plus(&self, other: &LinExpr) -> LinExpr {
        let mut out = self.clone();
        for (&i, c) in &other.coeffs {
            out.add_term(i, c.clone());
        }
        out.constant += &other.constant;
        out
    }

    /// Substitutes `x_k ↦ x_k + shift_k`; only the constant changes.
    pub fn shifted(&self, shift: &BTreeMap<usize, i64>) -> LinExpr {
        let mut out = self.clone();
        for (&k, &s) in shift {
            if let Some(c) = self.coeffs.get(&k) {
                out.constant += c * int(s);
            }
        }
        out
    }

    /// Largest variable index referenced, if any.
    pub fn max_index(&self) -> Option<usize> {
        self.coeffs.keys().next_back().copied()
    }

    /// Renders with variable names supplied by `name`.
    pub fn render(&self, name: &dyn Fn(usize) -> String, with_constant: bool) -> String {
        let mut out = String::new();
        for (&i, c) in &self.coeffs {
            push_term(&mut out, c, Some(&name(i)));
        }
        if with_constant && (!self.constant.is_zero() || out.is_empty()) {
            push_term(&mut out, &self.constant, None);
        }
        out
    }
}

fn push_term(out: &mut String, c: &Rational, var: Option<&str>) {
    let neg = c.is_negative();
    let mag = c.abs();
    if out.is_empty() {
        if neg {
            out.push('-');
        }
    } else {
        out.push_str(if neg { " - " } else { " + " });
    }
    match var {
        Some(v) if mag == int(1) => out.push_str(v),
        Some(v) => {
            out.push_str(&rational::format_rational(&mag));
            out.push_str(v);
        }
        None => out.push_str(&rational::format_rational(&mag)),
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Relation {
    #[serde(rename = ">=")]
    Ge,
    #[serde(rename = "<=")]
    Le,
    #[serde(rename = "=")]
    Eq,
}

/// `expr rel 0`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct LinearConstraint {
    pub expr: LinExpr,
    pub rel: Relation,
}

impl LinearConstraint {
    pub fn new(expr: LinExpr, rel: Relation) -> Self {
        LinearConstraint { expr, rel }
    }

    pub fn holds(&self, point: &[i64]) -> bool {
        let v = self.expr.eval(point);
        match self.rel {
            Relation::Ge => !v.is_negative(),
            Relation::Le => !v.is_positive(),
            Relation::Eq => v.is_zero(),
        }
    }

    /// The constraint as a list of `g ≥ 0` forms; equalities split in two.
    pub fn ge_forms(&self) -> Vec<LinExpr> {
        match self.rel {
            Relation::Ge => vec![self.expr.clone()],
            Relation::Le => vec![self.expr.negated()],
            Relation::Eq => vec![self.expr.clone(), self.expr.negated()],
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Sense {
    #[serde(rename = "min")]
    Minimize,
    #[serde(rename = "max")]
    Maximize,
}

/// `f(x) = xᵀQx + qᵀx + r` over the joint vector of dimension `dim`.
///
/// `Q` is stored sparsely and need not be symmetric.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct QuadraticPayoff {
    pub dim: usize,
    pub quad: BTreeMap<(usize, usize), Rational>,
    pub linear: Vec<Rational>,
    pub constant: Rational,
    pub sense: Sense,
}

impl QuadraticPayoff {
    pub fn zero(dim: usize, sense: Sense) -> Self {
        QuadraticPayoff {
            dim,
            quad: BTreeMap::new(),
            linear: vec![Rational::zero(); dim],
            constant: Rational::zero(),
            sense,
        }
    }

    pub fn add_quad(&mut self, i: usize, j: usize, c: Rational) {
        if c.is_zero() {
            return;
        }
        let e = self.quad.entry((i, j)).or_insert_with(Rational::zero);
        *e += c;
        if e.is_zero() {
            self.quad.remove(&(i, j));
        }
    }

    pub fn add_linear(&mut self, i: usize, c: Rational) {
        self.linear[i] += c;
    }

    /// Value in the declared sense.
    pub fn eval(&self, x: &[i64]) -> Rational {
        let mut acc = self.constant.clone();
        for (&(i, j), c) in &self.quad {
            acc += c * int(x[i] * x[j]);
        }
        for (i, c) in self.linear.iter().enumerate() {
            if !c.is_zero() {
                acc += c * int(x[i]);
            }
        }
        acc
    }

    /// The payoff as a cost: `f` for minimizers, `-f` for maximizers.
    pub fn as_cost(&self) -> QuadraticPayoff {
        match self.sense {
            Sense::Minimize => self.clone(),
            Sense::Maximize => QuadraticPayoff {
                dim: self.dim,
                quad: self.quad.iter().map(|(&k, c)| (k, -c)).collect(),
                linear: self.linear.iter().map(|c| -c).collect(),
                constant: -&self.constant,
                sense: Sense::Minimize,
            },
        }
    }

    /// True when `a` is strictly better than `b` in the declared sense.
    pub fn better(&self, a: &Rational, b: &Rational) -> bool {
        match self.sense {
            Sense::Minimize => a < b,
            Sense::Maximize => a > b,
        }
    }

    pub fn is_linear(&self) -> bool {
        self.quad.is_empty()
    }

    /// Variables appearing with nonzero coefficient in any term.
    pub fn support(&self) -> Vec<usize> {
        let mut s: Vec<usize> = self
            .quad
            .keys()
            .flat_map(|&(i, j)| [i, j])
            .chain(
                self.linear
                    .iter()
                    .enumerate()
                    .filter(|(_, c)| !c.is_zero())
                    .map(|(i, _)| i),
            )
            .collect();
        s.sort_unstable();
        s.dedup();
        s
    }
}

/// A player's contiguous slice of the joint vector with finite box bounds.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct VarBlock {
    pub owner: usize,
    pub start: usize,
    pub lower: Vec<i64>,
    pub upper: Vec<i64>,
    pub names: Option<Vec<String>>,
}

impl VarBlock {
    pub fn new(owner: usize, start: usize, lower: Vec<i64>, upper: Vec<i64>) -> Self {
        VarBlock {
            owner,
            start,
            lower,
            upper,
            names: None,
        }
    }

    pub fn binary(owner: usize, start: usize, len: usize) -> Self {
        Self::new(owner, start, vec![0; len], vec![1; len])
    }

    pub fn len(&self) -> usize {
        self.lower.len()
    }

    pub fn is_empty(&self) -> bool {
        self.lower.is_empty()
    }

    pub fn indices(&self) -> std::ops::Range<usize> {
        self.start..self.start + self.len()
    }

    pub fn contains(&self, index: usize) -> bool {
        self.indices().contains(&index)
    }

    /// `(lower, upper)` of the joint variable `index`, which must be in the block.
    pub fn bounds_of(&self, index: usize) -> (i64, i64) {
        let k = index - self.start;
        (self.lower[k], self.upper[k])
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct PlayerProgram {
    pub payoff: QuadraticPayoff,
    pub constraints: Vec<LinearConstraint>,
    pub own_block: VarBlock,
    pub coupled: bool,
}

impl PlayerProgram {
    /// Constraints plus the block box, checked at `point`.
    pub fn is_feasible(&self, point: &[i64]) -> bool {
        self.own_block.indices().all(|i| {
            let (lo, hi) = self.own_block.bounds_of(i);
            (lo..=hi).contains(&point[i])
        }) && self.constraints.iter().all(|c| c.holds(point))
    }

    /// The player's constraint rows in `g ≥ 0` form as used by the optimality
    /// conditions: explicit constraints (equalities split) followed by the box
    /// sides of variables whose range is at least 2 and which no explicit
    /// single-variable constraint already implies. Box sides of variables with
    /// range ≤ 1 are handled as bound consequents instead.
    pub fn effective_constraints(&self) -> Vec<EffectiveConstraint> {
        let mut out = Vec::new();
        for (j, c) in self.constraints.iter().enumerate() {
            for g in c.ge_forms() {
                out.push(EffectiveConstraint {
                    expr: g,
                    origin: ConstraintOrigin::Explicit(j),
                });
            }
        }
        let explicit: Vec<LinExpr> = out.iter().map(|e| e.expr.clone()).collect();
        for i in self.own_block.indices() {
            let (lo, hi) = self.own_block.bounds_of(i);
            if hi - lo < 2 {
                continue;
            }
            if !explicit.iter().any(|g| implies_lower(g, i, lo)) {
                out.push(EffectiveConstraint {
                    expr: LinExpr::var(i).with_constant(int(-lo)),
                    origin: ConstraintOrigin::BoxLower(i),
                });
            }
            if !explicit.iter().any(|g| implies_upper(g, i, hi)) {
                out.push(EffectiveConstraint {
                    expr: LinExpr::new()
                        .with_term(i, int(-1))
                        .with_constant(int(hi)),
                    origin: ConstraintOrigin::BoxUpper(i),
                });
            }
        }
        out
    }
}

/// `g ≥ 0` single-variable in `i` with positive slope forcing `x_i ≥ L ≥ lo`.
fn implies_lower(g: &LinExpr, i: usize, lo: i64) -> bool {
    if g.coeffs.len() != 1 {
        return false;
    }
    match g.coeffs.get(&i) {
        Some(a) if a.is_positive() => {
            let bound = (-&g.constant / a).ceil();
            bound >= int(lo)
        }
        _ => false,
    }
}

fn implies_upper(g: &LinExpr, i: usize, hi: i64) -> bool {
    if g.coeffs.len() != 1 {
        return false;
    }
    match g.coeffs.get(&i) {
        Some(a) if a.is_negative() => {
            let bound = (-&g.constant / a).floor();
            bound <= int(hi)
        }
        _ => false,
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum ConstraintOrigin {
    Explicit(usize),
    BoxLower(usize),
    BoxUpper(usize),
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct EffectiveConstraint {
    pub expr: LinExpr,
    pub origin: ConstraintOrigin,
}

#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct JointPoint(pub Vec<i64>);

impl std::ops::Deref for JointPoint {
    type Target = [i64];
    fn deref(&self) -> &[i64] {
        &self.0
    }
}

impl From<Vec<i64>> for JointPoint {
    fn from(v: Vec<i64>) -> Self {
        JointPoint(v)
    }
}

impl fmt::Display for JointPoint {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "(")?;
        for (k, v) in self.0.iter().enumerate() {
            if k > 0 {
                write!(f, ", ")?;
            }
            write!(f, "{v}")?;
        }
        write!(f, ")")
    }
}

#[derive(Debug, thiserror::Error, PartialEq, Eq)]
pub enum ModelError {
    #[error("point has {got} entries, game has {expected} variables")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("player {0} does not exist")]
    NoSuchPlayer(usize),
    #[error("invalid instance: {}", .0.iter().map(|d| d.to_string()).collect::<Vec<_>>().join("; "))]
    Invalid(Vec<Diagnostic>),
    #[error("instance JSON: {0}")]
    Json(String),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum DiagnosticKind {
    BlockLayout,
    Dimension,
    Bounds,
    CouplingFlag,
    PlayerCount,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Diagnostic {
    pub kind: DiagnosticKind,
    pub message: String,
}

impl fmt::Display for Diagnostic {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:?}: {}", self.kind, self.message)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SizeEstimate {
    pub variables: usize,
    pub constraints: usize,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct IpgInstance {
    pub players: Vec<PlayerProgram>,
    pub blocks: Vec<VarBlock>,
}

impl IpgInstance {
    /// Builds an instance, taking each player's block from `own_block`.
    pub fn from_players(players: Vec<PlayerProgram>) -> Self {
        let mut blocks: Vec<VarBlock> = players.iter().map(|p| p.own_block.clone()).collect();
        blocks.sort_by_key(|b| b.start);
        IpgInstance { players, blocks }
    }

    pub fn num_vars(&self) -> usize {
        self.blocks.iter().map(|b| b.len()).sum()
    }

    pub fn bounds(&self) -> Vec<(i64, i64)> {
        let mut out = vec![(0, 0); self.num_vars()];
        for b in &self.blocks {
            for i in b.indices() {
                if i < out.len() {
                    out[i] = b.bounds_of(i);
                }
            }
        }
        out
    }

    pub fn var_name(&self, index: usize) -> String {
        for b in &self.blocks {
            if b.contains(index) {
                if let Some(names) = &b.names {
                    return names[index - b.start].clone();
                }
            }
        }
        format!("x{index}")
    }

    fn player(&self, player: usize) -> Result<&PlayerProgram, ModelError> {
        self.players.get(player).ok_or(ModelError::NoSuchPlayer(player))
    }

    fn check_dim(&self, point: &[i64]) -> Result<(), ModelError> {
        let n = self.num_vars();
        if point.len() != n {
            return Err(ModelError::DimensionMismatch {
                expected: n,
                got: point.len(),
            });
        }
        Ok(())
    }

    /// The player's payoff at `point`, in the player's declared sense.
    pub fn evaluate_payoff(&self, player: usize, point: &[i64]) -> Result<Rational, ModelError> {
        let p = self.player(player)?;
        self.check_dim(point)?;
        if p.payoff.dim != point.len() {
            return Err(ModelError::DimensionMismatch {
                expected: p.payoff.dim,
                got: point.len(),
            });
        }
        Ok(p.payoff.eval(point))
    }

    /// Explicit constraints and the own-block box of `player` hold at `point`.
    pub fn is_player_feasible(&self, player: usize, point: &[i64]) -> Result<bool, ModelError> {
        let p = self.player(player)?;
        self.check_dim(point)?;
        Ok(p.is_feasible(point))
    }

    /// Sizes of the LOIS-1 system: `Σ 2n(m+1) + n` variables and
    /// `Σ 2n(m+2) + m` constraints, with `m` the player's effective
    /// constraint count (see [`PlayerProgram::effective_constraints`]).
    /// Variables fixed by their box contribute no moves.
    pub fn size_estimate(&self) -> SizeEstimate {
        let mut est = SizeEstimate {
            variables: 0,
            constraints: 0,
        };
        // 2n unit moves per player, less the ones a fixed variable prunes.
        for p in &self.players {
            let n = p.own_block.len();
            let m = p.effective_constraints().len();
            let moves = 2 * p.own_block.indices().filter(|&i| {
                let (lo, hi) = p.own_block.bounds_of(i);
                hi > lo
            }).count();
            est.variables += moves * (m + 1) + n;
            est.constraints += moves * (m + 2) + m;
        }
        est
    }

    pub fn validate(&self) -> Vec<Diagnostic> {
        let mut diags = Vec::new();
        let mut push = |kind, message: String| diags.push(Diagnostic { kind, message });
        let n = self.num_vars();

        let mut blocks: Vec<&VarBlock> = self.blocks.iter().collect();
        blocks.sort_by_key(|b| b.start);
        let mut next = 0;
        for b in &blocks {
            if b.start != next {
                push(
                    DiagnosticKind::BlockLayout,
                    format!("block of player {} starts at {}, expected {}", b.owner, b.start, next),
                );
            }
            next = b.start + b.len();
            if b.lower.len() != b.upper.len() {
                push(
                    DiagnosticKind::Dimension,
                    format!("block of player {} has mismatched bound vectors", b.owner),
                );
            }
            if let Some(names) = &b.names {
                if names.len() != b.len() {
                    push(
                        DiagnosticKind::Dimension,
                        format!("block of player {} has {} names for {} variables", b.owner, names.len(), b.len()),
                    );
                }
            }
            for (k, (lo, hi)) in b.lower.iter().zip(&b.upper).enumerate() {
                if lo > hi {
                    push(
                        DiagnosticKind::Bounds,
                        format!("variable {} has lower {} > upper {}", b.start + k, lo, hi),
                    );
                }
            }
        }

        for (i, p) in self.players.iter().enumerate() {
            let owned = self.blocks.iter().filter(|b| b.owner == i).count();
            if owned != 1 {
                push(
                    DiagnosticKind::BlockLayout,
                    format!("player {i} owns {owned} blocks, expected 1"),
                );
            }
            if let Some(b) = self.blocks.iter().find(|b| b.owner == i) {
                if *b != p.own_block {
                    push(
                        DiagnosticKind::BlockLayout,
                        format!("player {i} block disagrees with the instance block list"),
                    );
                }
            }
            let q = &p.payoff;
            if q.dim != n || q.linear.len() != n {
                push(
                    DiagnosticKind::Dimension,
                    format!("player {i} payoff has dimension {} (q has {}), game has {n}", q.dim, q.linear.len()),
                );
            }
            else if q.quad.keys().any(|&(a, b)| a >= n || b >= n) {
                push(
                    DiagnosticKind::Dimension,
                    format!("player {i} Q references a variable outside 0..{n}"),
                );
            }
            for (j, c) in p.constraints.iter().enumerate() {
                if c.expr.max_index().is_some_and(|m| m >= n) {
                    push(
                        DiagnosticKind::Dimension,
                        format!("player {i} constraint {j} references a variable outside 0..{n}"),
                    );
                } else if !p.coupled && c.expr.support().any(|v| !p.own_block.contains(v)) {
                    push(
                        DiagnosticKind::CouplingFlag,
                        format!("player {i} constraint {j} references another player's variable but coupled=false"),
                    );
                }
            }
        }
        if self.blocks.iter().any(|b| b.owner >= self.players.len()) {
            push(
                DiagnosticKind::BlockLayout,
                "a block is owned by a player that does not exist".to_string(),
            );
        }
        if self.players.is_empty() {
            push(DiagnosticKind::PlayerCount, "instance has no players".to_string());
        }
        diags
    }

    pub fn validated(self) -> Result<Self, ModelError> {
        let d = self.validate();
        if d.is_empty() {
            Ok(self)
        } else {
            Err(ModelError::Invalid(d))
        }
    }

    /// Number of joint box points, saturating.
    pub fn box_size(&self) -> u128 {
        self.bounds()
            .iter()
            .fold(1u128, |acc, &(lo, hi)| acc.saturating_mul((hi - lo + 1).max(0) as u128))
    }
}

// ---- JSON schema ----

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct IpgFile {
    #[serde(default = "schema_version", skip_serializing_if = "Option::is_none")]
    pub schema_version: Option<u32>,
    pub players: Vec<PlayerFile>,
    pub blocks: Vec<BlockFile>,
}

fn schema_version() -> Option<u32> {
    None
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct PlayerFile {
    pub sense: Sense,
    #[serde(rename = "Q", with = "rational::matrix")]
    pub quad: Vec<Vec<Rational>>,
    #[serde(with = "rational::vec")]
    pub q: Vec<Rational>,
    #[serde(with = "rational")]
    pub r: Rational,
    #[serde(default)]
    pub constraints: Vec<ConstraintFile>,
    #[serde(default)]
    pub coupled: bool,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ConstraintFile {
    #[serde(with = "rational::map")]
    pub coeffs: BTreeMap<String, Rational>,
    #[serde(rename = "const", with = "rational")]
    pub constant: Rational,
    pub rel: Relation,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct BlockFile {
    pub owner: usize,
    pub lo: Vec<i64>,
    pub hi: Vec<i64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub names: Option<Vec<String>>,
}

impl IpgInstance {
    pub fn from_json(text: &str) -> Result<Self, ModelError> {
        let file: IpgFile = serde_json::from_str(text).map_err(|e| ModelError::Json(e.to_string()))?;
        Self::from_file(file)
    }

    pub fn from_file(file: IpgFile) -> Result<Self, ModelError> {
        let mut blocks = Vec::new();
        let mut start = 0;
        for b in &file.blocks {
            blocks.push(VarBlock {
                owner: b.owner,
                start,
                lower: b.lo.clone(),
                upper: b.hi.clone(),
                names: b.names.clone(),
            });
            start += b.lo.len();
        }
        let mut players = Vec::new();
        for (i, p) in file.players.iter().enumerate() {
            let own_block = blocks
                .iter()
                .find(|b| b.owner == i)
                .cloned()
                .ok_or_else(|| ModelError::Json(format!("player {i} owns no block")))?;
            // A non-square Q shows up as a dimension that validate() rejects.
            let dim = p
                .quad
                .iter()
                .map(|row| row.len())
                .chain([p.quad.len(), p.q.len()])
                .max()
                .unwrap_or(0);
            let mut payoff = QuadraticPayoff::zero(dim, p.sense);
            payoff.linear = p.q.clone();
            payoff.constant = p.r.clone();
            for (a, row) in p.quad.iter().enumerate() {
                for (b, c) in row.iter().enumerate() {
                    payoff.add_quad(a, b, c.clone());
                }
            }
            let mut constraints = Vec::new();
            for c in &p.constraints {
                let mut expr = LinExpr::constant(c.constant.clone());
                for (k, v) in &c.coeffs {
                    let idx: usize = k
                        .trim_start_matches('x')
                        .parse()
                        .map_err(|_| ModelError::Json(format!("bad variable key {k:?}")))?;
                    expr.add_term(idx, v.clone());
                }
                constraints.push(LinearConstraint::new(expr, c.rel));
            }
            players.push(PlayerProgram {
                payoff,
                constraints,
                own_block,
                coupled: p.coupled,
            });
        }
        Ok(IpgInstance { players, blocks })
    }

    pub fn to_file(&self) -> IpgFile {
        let n = self.num_vars();
        let players = self
            .players
            .iter()
            .map(|p| {
                let mut quad = vec![vec![Rational::zero(); n]; n];
                for (&(a, b), c) in &p.payoff.quad {
                    quad[a][b] = c.clone();
                }
                PlayerFile {
                    sense: p.payoff.sense,
                    quad,
                    q: p.payoff.linear.clone(),
                    r: p.payoff.constant.clone(),
                    constraints: p
                        .constraints
                        .iter()
                        .map(|c| ConstraintFile {
                            coeffs: c
                                .expr
                                .coeffs
                                .iter()
                                .map(|(k, v)| (k.to_string(), v.clone()))
                                .collect(),
                            constant: c.expr.constant.clone(),
                            rel: c.rel,
                        })
                        .collect(),
                    coupled: p.coupled,
                }
            })
            .collect();
        let mut blocks: Vec<&VarBlock> = self.blocks.iter().collect();
        blocks.sort_by_key(|b| b.start);
        IpgFile {
            schema_version: Some(1),
            players,
            blocks: blocks
                .into_iter()
                .map(|b| BlockFile {
                    owner: b.owner,
                    lo: b.lower.clone(),
                    hi: b.upper.clone(),
                    names: b.names.clone(),
                })
                .collect(),
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(&self.to_file()).expect("IPG serializes")
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures::two_player_example;
    use crate::rational::ratio;
    use proptest::prelude::*;

    #[test]
    fn example_payoffs() {
        let g = two_player_example();
        assert_eq!(g.evaluate_payoff(0, &[1, -1]).unwrap(), int(-1));
        assert_eq!(g.evaluate_payoff(1, &[1, -1]).unwrap(), int(0));
    }

    #[test]
    fn zero_payoff() {
        let p = QuadraticPayoff::zero(3, Sense::Minimize);
        assert_eq!(p.eval(&[4, -7, 9]), int(0));
    }

    #[test]
    fn dimension_mismatch() {
        let g = two_player_example();
        assert_eq!(
            g.evaluate_payoff(0, &[1]),
            Err(ModelError::DimensionMismatch { expected: 2, got: 1 })
        );
        assert!(g.is_player_feasible(0, &[1, 2, 3]).is_err());
        assert_eq!(g.evaluate_payoff(5, &[1, 1]), Err(ModelError::NoSuchPlayer(5)));
    }

    #[test]
    fn feasibility() {
        let g = two_player_example();
        assert!(g.is_player_feasible(0, &[1, 0]).unwrap());
        assert!(!g.is_player_feasible(1, &[1, 6]).unwrap());
        assert!(g.is_player_feasible(0, &[1, -1]).unwrap());
        assert!(g.is_player_feasible(1, &[1, -1]).unwrap());
        assert!(!g.is_player_feasible(0, &[0, -1]).unwrap());
    }

    #[test]
    fn size_formula_examples() {
        // Two players, ten binaries each, one budget row each.
        let n = 20;
        let mk = |owner: usize, start: usize| {
            let budget = (start..start + 10)
                .fold(LinExpr::constant(int(-3)), |e, i| e.with_term(i, int(1)));
            PlayerProgram {
                payoff: QuadraticPayoff::zero(n, Sense::Maximize),
                constraints: vec![LinearConstraint::new(budget, Relation::Le)],
                own_block: VarBlock::binary(owner, start, 10),
                coupled: false,
            }
        };
        let g = IpgInstance::from_players(vec![mk(0, 0), mk(1, 10)]);
        assert_eq!(g.size_estimate(), SizeEstimate { variables: 100, constraints: 122 });

        let single = IpgInstance::from_players(vec![PlayerProgram {
            payoff: QuadraticPayoff::zero(1, Sense::Minimize),
            constraints: vec![LinearConstraint::new(LinExpr::var(0), Relation::Ge)],
            own_block: VarBlock::binary(0, 0, 1),
            coupled: false,
        }]);
        assert_eq!(single.size_estimate(), SizeEstimate { variables: 5, constraints: 7 });
    }

    #[test]
    fn effective_constraints_dedupe_box() {
        let g = two_player_example();
        let p0 = g.players[0].effective_constraints();
        // x >= 1 explicit, x <= 10 from the box.
        assert_eq!(p0.len(), 2);
        assert_eq!(p0[1].origin, ConstraintOrigin::BoxUpper(0));
        let p1 = g.players[1].effective_constraints();
        assert_eq!(p1.len(), 2);
        assert!(p1.iter().all(|c| matches!(c.origin, ConstraintOrigin::Explicit(_))));
    }

    #[test]
    fn validate_diagnostics() {
        let g = two_player_example();
        assert!(g.validate().is_empty());

        let mut bad = g.clone();
        bad.players[0]
            .constraints
            .push(LinearConstraint::new(LinExpr::var(0).with_term(1, int(1)), Relation::Ge));
        let d = bad.validate();
        assert_eq!(d.len(), 1);
        assert_eq!(d[0].kind, DiagnosticKind::CouplingFlag);

        let mut bad = g.clone();
        bad.players[1].payoff.dim = 3;
        bad.players[1].payoff.linear.push(int(0));
        let d = bad.validate();
        assert_eq!(d.len(), 1);
        assert_eq!(d[0].kind, DiagnosticKind::Dimension);

        let mut bad = g;
        bad.players[1].coupled = true;
        bad.players[1]
            .constraints
            .push(LinearConstraint::new(LinExpr::var(0).with_term(1, int(1)), Relation::Ge));
        assert!(bad.validate().is_empty());
    }

    #[test]
    fn json_roundtrip() {
        let g = two_player_example();
        let back = IpgInstance::from_json(&g.to_json()).unwrap();
        assert_eq!(back, g);
    }

    #[test]
    fn json_wrong_q_dimension() {
        let text = r#"{"players":[{"sense":"min","Q":[[1,0,0]],"q":[0],"r":0}],
                       "blocks":[{"owner":0,"lo":[0],"hi":[3]}]}"#;
        let g = IpgInstance::from_json(text).unwrap();
        let d = g.validate();
        assert_eq!(d.len(), 1);
        assert_eq!(d[0].kind, DiagnosticKind::Dimension);
    }

    fn naive_eval(q: &[Vec<Rational>], lin: &[Rational], r: &Rational, x: &[i64]) -> Rational {
        let mut acc = r.clone();
        for i in 0..x.len() {
            for j in 0..x.len() {
                acc += &q[i][j] * int(x[i]) * int(x[j]);
            }
            acc += &lin[i] * int(x[i]);
        }
        acc
    }

    proptest! {
        #[test]
        fn payoff_matches_double_loop(
            data in prop::collection::vec((-6i64..6, 1i64..5), 9 + 3 + 1),
            x in prop::collection::vec(-9i64..9, 3),
        ) {
            let vals: Vec<Rational> = data.iter().map(|&(n, d)| ratio(n, d)).collect();
            let q: Vec<Vec<Rational>> = (0..3).map(|i| vals[i * 3..i * 3 + 3].to_vec()).collect();
            let lin = vals[9..12].to_vec();
            let r = vals[12].clone();
            let mut p = QuadraticPayoff::zero(3, Sense::Minimize);
            for i in 0..3 { for j in 0..3 { p.add_quad(i, j, q[i][j].clone()); } }
            p.linear = lin.clone();
            p.constant = r.clone();
            prop_assert_eq!(p.eval(&x), naive_eval(&q, &lin, &r, &x));
        }

        #[test]
        fn feasibility_monotone_under_removal(
            coefs in prop::collection::vec((-3i64..4, -3i64..4, -5i64..6), 1..5),
            drop in 0usize..5,
            x in (-3i64..4, -3i64..4),
        ) {
            let constraints: Vec<LinearConstraint> = coefs.iter().map(|&(a, b, c)| {
                LinearConstraint::new(LinExpr::constant(int(c)).with_term(0, int(a)).with_term(1, int(b)), Relation::Ge)
            }).collect();
            let mk = |cs: Vec<LinearConstraint>| IpgInstance::from_players(vec![PlayerProgram {
                payoff: QuadraticPayoff::zero(2, Sense::Minimize),
                constraints: cs,
                own_block: VarBlock::new(0, 0, vec![-3, -3], vec![3, 3]),
                coupled: false,
            }]);
            let full = mk(constraints.clone());
            let mut fewer = constraints;
            let k = drop % fewer.len();
            fewer.remove(k);
            let fewer = mk(fewer);
            let pt = [x.0, x.1];
            if full.is_player_feasible(0, &pt).unwrap() {
                prop_assert!(fewer.is_player_feasible(0, &pt).unwrap());
            }
        }
    }
}
