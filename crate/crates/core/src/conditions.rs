//! LOIS-m optimality conditions.
//!
//! A point is locally optimal for a player when it is feasible and every
//! improving move inside the neighborhood is infeasible. Per move `δ` this is
//! the implication
//!
//! ```text
//! f(x + δ) - f(x) < 0   ->   g_1(x + δ) < 0  or ... or  g_J(x + δ) < 0
//! ```
//!
//! For quadratic payoffs the antecedent is linear in `x`, so every condition
//! is a linear implication constraint.

use crate::model::{
    ConstraintOrigin, EffectiveConstraint, IpgInstance, LinExpr, ModelError, PlayerProgram,
    QuadraticPayoff, VarBlock,
};
use crate::neighborhood::{block_deltas, Delta, NeighborhoodError};
use crate::rational::{format_rational, int};
use num_traits::Signed;
use std::collections::BTreeMap;
use std::fmt::Write;

/// `expr > 0` when strict, `expr ≥ 0` otherwise.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Inequality {
    pub expr: LinExpr,
    pub strict: bool,
}

impl Inequality {
    pub fn strict(expr: LinExpr) -> Self {
        Inequality { expr, strict: true }
    }

    pub fn weak(expr: LinExpr) -> Self {
        Inequality { expr, strict: false }
    }

    /// `expr < 0`, stored as `-expr > 0`.
    pub fn less_than_zero(expr: &LinExpr) -> Self {
        Self::strict(expr.negated())
    }

    pub fn holds(&self, point: &[i64]) -> bool {
        let v = self.expr.eval(point);
        if self.strict {
            v.is_positive()
        } else {
            !v.is_negative()
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum ConsequentOrigin {
    /// Violation of one of the player's effective constraints.
    Constraint(ConstraintOrigin),
    /// The move leaves the box of a variable whose range is at most 1.
    Bound(usize),
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Consequent {
    pub ineq: Inequality,
    pub origin: ConsequentOrigin,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ImplicationConstraint {
    /// The move strictly improves the player's cost.
    pub antecedent: Inequality,
    /// At least one must hold whenever the antecedent does.
    pub consequents: Vec<Consequent>,
    pub player: usize,
    pub delta: Delta,
}

impl ImplicationConstraint {
    pub fn holds(&self, point: &[i64]) -> bool {
        !self.antecedent.holds(point) || self.consequents.iter().any(|c| c.ineq.holds(point))
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ConditionSet {
    pub player: usize,
    pub order: i64,
    pub feasibility: Vec<EffectiveConstraint>,
    pub implications: Vec<ImplicationConstraint>,
}

impl ConditionSet {
    /// Direct logical evaluation of every condition at `point`.
    pub fn is_satisfied(&self, point: &[i64]) -> bool {
        self.feasibility
            .iter()
            .all(|g| !g.expr.eval(point).is_negative())
            && self.implications.iter().all(|ic| ic.holds(point))
    }
}

#[derive(Debug, thiserror::Error, PartialEq, Eq)]
pub enum ConditionError {
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Neighborhood(#[from] NeighborhoodError),
}

/// `f(x+δ) - f(x) < 0` for a cost-form payoff, i.e.
/// `δᵀ(Q+Qᵀ)x + δᵀQδ + qᵀδ < 0`.
pub fn payoff_delta_inequality(payoff: &QuadraticPayoff, block: &VarBlock, delta: &Delta) -> Inequality {
    let step = delta.joint(block);
    let mut diff = LinExpr::new();
    for (&(i, j), c) in &payoff.quad {
        let si = step.get(&i).copied().unwrap_or(0);
        let sj = step.get(&j).copied().unwrap_or(0);
        // (x_i + s_i)(x_j + s_j) - x_i x_j = s_j x_i + s_i x_j + s_i s_j
        if sj != 0 {
            diff.add_term(i, c * int(sj));
        }
        if si != 0 {
            diff.add_term(j, c * int(si));
        }
        if si != 0 && sj != 0 {
            diff.constant += c * int(si * sj);
        }
    }
    for (&k, &s) in &step {
        diff.constant += &payoff.linear[k] * int(s);
    }
    Inequality::less_than_zero(&diff)
}

/// Ways the moved point `x+δ` can be infeasible for `player`: each effective
/// constraint violated after the shift, plus leaving the box of any moved
/// variable with range at most 1.
pub fn violated_constraint_disjunction(player: &PlayerProgram, delta: &Delta) -> Vec<Consequent> {
    let block = &player.own_block;
    let step = delta.joint(block);
    let mut out: Vec<Consequent> = player
        .effective_constraints()
        .into_iter()
        .map(|g| Consequent {
            ineq: Inequality::less_than_zero(&g.expr.shifted(&step)),
            origin: ConsequentOrigin::Constraint(g.origin),
        })
        .collect();
    for (&k, &s) in &step {
        let (lo, hi) = block.bounds_of(k);
        if hi - lo >= 2 {
            continue;
        }
        // x_k + s > hi  or  x_k + s < lo
        let expr = if s > 0 {
            LinExpr::var(k).with_constant(int(s - hi))
        } else {
            LinExpr::new().with_term(k, int(-1)).with_constant(int(lo - s))
        };
        out.push(Consequent {
            ineq: Inequality::strict(expr),
            origin: ConsequentOrigin::Bound(k),
        });
    }
    out
}

pub fn build_conditions(instance: &IpgInstance, player: usize, m: i64) -> Result<ConditionSet, ConditionError> {
    let program = instance
        .players
        .get(player)
        .ok_or(ModelError::NoSuchPlayer(player))?;
    build_player_conditions(program, player, m)
}

/// Conditions for a standalone program (used for Stackelberg followers).
pub fn build_player_conditions(program: &PlayerProgram, player: usize, m: i64) -> Result<ConditionSet, ConditionError> {
    let cost = program.payoff.as_cost();
    let deltas = block_deltas(&program.own_block, m)?;
    let implications = deltas
        .into_iter()
        .map(|delta| ImplicationConstraint {
            antecedent: payoff_delta_inequality(&cost, &program.own_block, &delta),
            consequents: violated_constraint_disjunction(program, &delta),
            player,
            delta,
        })
        .collect();
    Ok(ConditionSet {
        player,
        order: m,
        feasibility: program.effective_constraints(),
        implications,
    })
}

/// Semantic check straight from the definition: `point` is feasible for the
/// player and no feasible point within L1 distance `m` in the player's own
/// variables is strictly better.
pub fn check_point_locally_optimal(instance: &IpgInstance, player: usize, point: &[i64], m: i64) -> Result<bool, ModelError> {
    if !instance.is_player_feasible(player, point)? {
        return Ok(false);
    }
    let program = &instance.players[player];
    let here = program.payoff.eval(point);
    let block: Vec<usize> = program.own_block.indices().collect();
    let mut trial = point.to_vec();
    Ok(!improving_move_exists(program, &here, &block, 0, m, &mut trial, false))
}

fn improving_move_exists(
    program: &PlayerProgram,
    here: &crate::rational::Rational,
    block: &[usize],
    pos: usize,
    budget: i64,
    trial: &mut Vec<i64>,
    moved: bool,
) -> bool {
    if pos == block.len() {
        return moved
            && program.is_feasible(trial)
            && program.payoff.better(&program.payoff.eval(trial), here);
    }
    let k = block[pos];
    let base = trial[k];
    for s in -budget..=budget {
        trial[k] = base + s;
        let found = improving_move_exists(program, here, block, pos + 1, budget - s.abs(), trial, moved || s != 0);
        if found {
            trial[k] = base;
            return true;
        }
    }
    trial[k] = base;
    false
}

// ---- text dump ----

fn bound_text(expr: &LinExpr, op_pos: &str, op_neg: &str, name: &dyn Fn(usize) -> String) -> String {
    // Renders `expr op 0` with the constant moved to the right; a single
    // variable is normalized to coefficient 1.
    if expr.coeffs.len() == 1 {
        let (&k, a) = expr.coeffs.iter().next().expect("one term");
        let rhs = -&expr.constant / a;
        let op = if a.is_positive() { op_pos } else { op_neg };
        return format!("{} {} {}", name(k), op, format_rational(&rhs));
    }
    let lhs = LinExpr {
        coeffs: expr.coeffs.clone(),
        constant: Default::default(),
    };
    format!(
        "{} {} {}",
        lhs.render(name, true),
        op_pos,
        format_rational(&-&expr.constant)
    )
}

fn delta_label(delta: &Delta, block: &VarBlock, name: &dyn Fn(usize) -> String) -> String {
    let step: BTreeMap<usize, i64> = delta.joint(block);
    step.iter()
        .map(|(&k, &s)| format!("{}{:+}", name(k), s))
        .collect::<Vec<_>>()
        .join(",")
}

/// Human-readable listing of a condition set.
pub fn render_conditions(instance: &IpgInstance, set: &ConditionSet) -> String {
    let name = |i: usize| instance.var_name(i);
    let block = &instance.players[set.player].own_block;
    let mut out = String::new();
    let _ = writeln!(out, "player {} (LOIS-{})", set.player, set.order);
    let _ = writeln!(out, "  feasibility:");
    for g in &set.feasibility {
        let _ = writeln!(out, "    {}", bound_text(&g.expr, ">=", "<=", &name));
    }
    let _ = writeln!(out, "  implications:");
    for ic in &set.implications {
        let lhs = ic.antecedent.expr.negated();
        let cons: Vec<String> = ic
            .consequents
            .iter()
            .map(|c| {
                let e = c.ineq.expr.negated();
                if e.is_constant() {
                    format!("{} < 0", format_rational(&e.constant))
                } else {
                    bound_text(&e, "<", ">", &name)
                }
            })
            .collect();
        let _ = writeln!(
            out,
            "    [{}] {} < 0  ->  {}",
            delta_label(&ic.delta, block, &name),
            lhs.render(&name, true),
            if cons.is_empty() { "false".to_string() } else { cons.join(" | ") }
        );
    }
    out
}
