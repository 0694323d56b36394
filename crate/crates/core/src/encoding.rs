//! Big-M re-encoding of linear implication constraints into a pure
//! integer-linear system.
//!
//! Every row is stored as `Σ a·x + c ≥ 0` with integer coefficients. Strict
//! inequalities become `e - 1 ≥ 0` after clearing denominators, which is
//! exact over the integers.
//!
//! Box bounds are variable bounds, never rows. A consequent saying that a move
//! leaves the box of a variable with range ≤ 1 is absorbed into the selector
//! row as the literal `x - lo` or `hi - x`, so it costs neither an indicator
//! nor a row. With this convention a LOIS-1 system has exactly
//! `Σ 2n(m+1) + n` variables and `Σ 2n(m+2) + m` rows, `m` being the
//! player's effective constraint count.

use crate::conditions::{ConditionSet, ConsequentOrigin, ImplicationConstraint, Inequality};
use crate::model::{IpgInstance, LinExpr, QuadraticPayoff, Sense};
use crate::rational::{denominator_lcm, int, Rational};
use num_bigint::BigInt;
use num_integer::Integer;
use num_traits::{One, Signed, ToPrimitive, Zero};
use std::collections::BTreeMap;
use std::fmt::Write;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum VarKind {
    Original,
    Indicator,
    Auxiliary,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SystemVar {
    pub lower: i64,
    pub upper: i64,
    pub kind: VarKind,
    pub name: String,
}

impl SystemVar {
    fn binary(kind: VarKind, name: String) -> Self {
        SystemVar {
            lower: 0,
            upper: 1,
            kind,
            name,
        }
    }

    pub fn is_binary(&self) -> bool {
        self.lower == 0 && self.upper == 1
    }
}

/// `Σ a·x + constant ≥ 0`, terms sorted by variable and nonzero.
#[derive(Clone, Debug, PartialEq, Eq, Default)]
pub struct ScaledInequality {
    pub terms: Vec<(usize, i64)>,
    pub constant: i64,
}

impl ScaledInequality {
    fn from_map(map: BTreeMap<usize, i64>, constant: i64) -> Self {
        ScaledInequality {
            terms: map.into_iter().filter(|&(_, a)| a != 0).collect(),
            constant,
        }
    }

    pub fn activity(&self, point: &[i64]) -> i128 {
        self.terms
            .iter()
            .map(|&(i, a)| a as i128 * point[i] as i128)
            .sum::<i128>()
            + self.constant as i128
    }

    pub fn holds(&self, point: &[i64]) -> bool {
        self.activity(point) >= 0
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Objective {
    /// Linear over system variables.
    pub expr: LinExpr,
    pub sense: Sense,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct EncodedSystem {
    pub vars: Vec<SystemVar>,
    pub constraints: Vec<ScaledInequality>,
    pub objective: Option<Objective>,
    /// The first `original_count` variables are the game's joint vector.
    pub original_count: usize,
    pub ic_count: usize,
}

#[derive(Debug, thiserror::Error, PartialEq, Eq)]
pub enum EncodingError {
    #[error("variable {0} has no finite bounds")]
    UnboundedVariable(usize),
    #[error("coefficient or Big-M value does not fit in 64 bits")]
    Overflow,
    #[error("quadratic objective term on non-binary variable {0}")]
    NonBinaryProduct(usize),
    #[error("fixed Big-M {given} is below the required {required}")]
    BigMTooSmall { given: i64, required: i64 },
    #[error("point has {got} entries, expected {expected}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error(transparent)]
    Conditions(#[from] crate::conditions::ConditionError),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub enum BigMPolicy {
    /// Per-row value from interval arithmetic over the box.
    #[default]
    Local,
    /// One given value, checked against the per-row requirement.
    Fixed(i64),
}

fn to_i64(v: &BigInt) -> Result<i64, EncodingError> {
    v.to_i64().ok_or(EncodingError::Overflow)
}

/// Clears denominators of `e ≥ 0` (or `e > 0` when `strict`) and divides out
/// the common factor.
pub fn scale_inequality(ineq: &Inequality) -> Result<ScaledInequality, EncodingError> {
    let e = &ineq.expr;
    let lcm = denominator_lcm(e.coeffs.values().chain([&e.constant]));
    let scale = Rational::from_integer(lcm);
    let mut ints: Vec<(usize, BigInt)> = e
        .coeffs
        .iter()
        .map(|(&i, c)| (i, (c * &scale).to_integer()))
        .collect();
    let mut constant = (&e.constant * &scale).to_integer();
    let g = ints
        .iter()
        .fold(constant.abs(), |g, (_, a)| g.gcd(a));
    if !g.is_zero() && !g.is_one() {
        for (_, a) in ints.iter_mut() {
            *a = &*a / &g;
        }
        constant = &constant / &g;
    }
    if ineq.strict {
        constant -= 1;
    }
    let mut terms = Vec::with_capacity(ints.len());
    for (i, a) in ints {
        terms.push((i, to_i64(&a)?));
    }
    Ok(ScaledInequality {
        terms,
        constant: to_i64(&constant)?,
    })
}

fn bound_of(bounds: &[(i64, i64)], i: usize) -> Result<(i64, i64), EncodingError> {
    bounds.get(i).copied().ok_or(EncodingError::UnboundedVariable(i))
}

/// `Σ |a|·max(|lo|,|hi|) + |c| + 1`, an upper bound on `|expr| + 1` over the box.
pub fn compute_big_m(expr: &LinExpr, bounds: &[(i64, i64)]) -> Result<i64, EncodingError> {
    let mut acc = expr.constant.abs();
    for (&i, a) in &expr.coeffs {
        let (lo, hi) = bound_of(bounds, i)?;
        acc += a.abs() * int(lo.abs().max(hi.abs()));
    }
    to_i64(&(acc.ceil().to_integer() + 1))
}

fn row_big_m(row: &ScaledInequality, bounds: &[(i64, i64)]) -> Result<i64, EncodingError> {
    let mut acc: i128 = (row.constant as i128).abs() + 1;
    for &(i, a) in &row.terms {
        let (lo, hi) = bound_of(bounds, i)?;
        acc += (a as i128).abs() * (lo.abs().max(hi.abs()) as i128);
    }
    i64::try_from(acc).map_err(|_| EncodingError::Overflow)
}

fn choose_m(row: &ScaledInequality, bounds: &[(i64, i64)], policy: BigMPolicy) -> Result<i64, EncodingError> {
    let required = row_big_m(row, bounds)?;
    match policy {
        BigMPolicy::Local => Ok(required),
        BigMPolicy::Fixed(m) if m >= required => Ok(m),
        BigMPolicy::Fixed(m) => Err(EncodingError::BigMTooSmall { given: m, required }),
    }
}

/// `row + (1 - z)·M ≥ 0`: enforced when `z = 1`, slack when `z = 0`.
fn relax(row: &ScaledInequality, z: usize, m: i64) -> Result<ScaledInequality, EncodingError> {
    let mut map: BTreeMap<usize, i64> = row.terms.iter().copied().collect();
    *map.entry(z).or_insert(0) -= m;
    let constant = row.constant.checked_add(m).ok_or(EncodingError::Overflow)?;
    Ok(ScaledInequality::from_map(map, constant))
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct FragmentRow {
    pub ineq: ScaledInequality,
    /// The binary that switches this row on, if any.
    pub indicator: Option<usize>,
}

/// New variables and rows produced for one construct.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Fragment {
    pub first_var: usize,
    pub vars: Vec<SystemVar>,
    pub rows: Vec<FragmentRow>,
}

/// Encodes `antecedent -> c_1 or ... or c_r` with indicators `m_0..m_r`
/// numbered from `first_var`:
///
/// * `m_0 = 1` forces the antecedent false,
/// * `m_j = 1` forces consequent `j` true,
/// * `Σ m_j ≥ 1`.
pub fn encode_lic(
    ic: &ImplicationConstraint,
    bounds: &[(i64, i64)],
    first_var: usize,
    policy: BigMPolicy,
) -> Result<Fragment, EncodingError> {
    let mut frag = Fragment {
        first_var,
        vars: Vec::new(),
        rows: Vec::new(),
    };
    let tag = format!("p{}", ic.player);
    let mut selector: BTreeMap<usize, i64> = BTreeMap::new();
    let mut selector_const: i64 = -1;

    let negated = Inequality {
        expr: ic.antecedent.expr.negated(),
        strict: !ic.antecedent.strict,
    };
    let m0 = first_var;
    frag.vars.push(SystemVar::binary(VarKind::Indicator, format!("{tag}_ic{}_m0", first_var)));
    let row = scale_inequality(&negated)?;
    let big = choose_m(&row, bounds, policy)?;
    frag.rows.push(FragmentRow {
        ineq: relax(&row, m0, big)?,
        indicator: Some(m0),
    });
    *selector.entry(m0).or_insert(0) += 1;

    for c in &ic.consequents {
        let row = scale_inequality(&c.ineq)?;
        if let ConsequentOrigin::Bound(k) = c.origin {
            let (lo, hi) = bound_of(bounds, k)?;
            if hi - lo <= 1 {
                let at = |v: i64| {
                    let mut pt = vec![0; k + 1];
                    pt[k] = v;
                    row.holds(&pt)
                };
                let (t_lo, t_hi) = (at(lo), if hi > lo { at(hi) } else { at(lo) });
                match (t_lo, t_hi) {
                    (true, true) => selector_const += 1,
                    (false, true) => {
                        *selector.entry(k).or_insert(0) += 1;
                        selector_const -= lo;
                    }
                    (true, false) => {
                        *selector.entry(k).or_insert(0) -= 1;
                        selector_const += hi;
                    }
                    (false, false) => {}
                }
                continue;
            }
        }
        let z = first_var + frag.vars.len();
        frag.vars.push(SystemVar::binary(VarKind::Indicator, format!("{tag}_ic{}_m{}", first_var, frag.vars.len())));
        let big = choose_m(&row, bounds, policy)?;
        frag.rows.push(FragmentRow {
            ineq: relax(&row, z, big)?,
            indicator: Some(z),
        });
        *selector.entry(z).or_insert(0) += 1;
    }
    frag.rows.push(FragmentRow {
        ineq: ScaledInequality::from_map(selector, selector_const),
        indicator: None,
    });
    Ok(frag)
}

/// A cut removing exactly `point` (over the variables `0..point.len()`).
/// Coordinates with range ≤ 1 enter as literals; wider ones get two selectors
/// for `x ≥ p + 1` and `x ≤ p - 1`.
pub fn exclusion_cut(point: &[i64], bounds: &[(i64, i64)], first_var: usize) -> Result<Fragment, EncodingError> {
    let mut frag = Fragment {
        first_var,
        vars: Vec::new(),
        rows: Vec::new(),
    };
    let mut selector: BTreeMap<usize, i64> = BTreeMap::new();
    let mut constant: i64 = -1;
    for (i, &p) in point.iter().enumerate() {
        let (lo, hi) = bound_of(bounds, i)?;
        if hi - lo <= 1 {
            // Distance indicator |x - p| on a two-value domain.
            if hi == lo {
                continue;
            }
            if p == lo {
                *selector.entry(i).or_insert(0) += 1;
                constant -= lo;
            } else {
                *selector.entry(i).or_insert(0) -= 1;
                constant += hi;
            }
            continue;
        }
        // up: x - p - 1 ≥ 0, down: p - 1 - x ≥ 0
        let sides = [
            (p < hi, ScaledInequality { terms: vec![(i, 1)], constant: -p - 1 }),
            (p > lo, ScaledInequality { terms: vec![(i, -1)], constant: p - 1 }),
        ];
        for (possible, row) in sides {
            if !possible {
                continue;
            }
            let z = first_var + frag.vars.len();
            frag.vars.push(SystemVar::binary(VarKind::Auxiliary, format!("cut{first_var}_s{}", frag.vars.len())));
            let big = row_big_m(&row, bounds)?;
            frag.rows.push(FragmentRow {
                ineq: relax(&row, z, big)?,
                indicator: Some(z),
            });
            *selector.entry(z).or_insert(0) += 1;
        }
    }
    frag.rows.push(FragmentRow {
        ineq: ScaledInequality::from_map(selector, constant),
        indicator: None,
    });
    Ok(frag)
}

impl EncodedSystem {
    /// A system over the given original variables and no rows.
    pub fn with_originals(bounds: &[(i64, i64)], names: impl Fn(usize) -> String) -> Self {
        EncodedSystem {
            vars: bounds
                .iter()
                .enumerate()
                .map(|(i, &(lower, upper))| SystemVar {
                    lower,
                    upper,
                    kind: VarKind::Original,
                    name: names(i),
                })
                .collect(),
            constraints: Vec::new(),
            objective: None,
            original_count: bounds.len(),
            ic_count: 0,
        }
    }

    pub fn bounds(&self) -> Vec<(i64, i64)> {
        self.vars.iter().map(|v| (v.lower, v.upper)).collect()
    }

    pub fn push_fragment(&mut self, frag: Fragment) {
        debug_assert_eq!(frag.first_var, self.vars.len());
        self.vars.extend(frag.vars);
        self.constraints.extend(frag.rows.into_iter().map(|r| r.ineq));
    }

    /// Adds `expr ≥ 0`.
    pub fn add_ge(&mut self, expr: &LinExpr) -> Result<(), EncodingError> {
        let row = scale_inequality(&Inequality::weak(expr.clone()))?;
        self.constraints.push(row);
        Ok(())
    }

    pub fn add_condition_set(&mut self, set: &ConditionSet, policy: BigMPolicy) -> Result<(), EncodingError> {
        for g in &set.feasibility {
            self.add_ge(&g.expr)?;
        }
        self.add_implications(set, policy)
    }

    /// Only the implication constraints of `set`.
    pub fn add_implications(&mut self, set: &ConditionSet, policy: BigMPolicy) -> Result<(), EncodingError> {
        for ic in &set.implications {
            let frag = encode_lic(ic, &self.bounds(), self.vars.len(), policy)?;
            self.push_fragment(frag);
            self.ic_count += 1;
        }
        Ok(())
    }

    /// Excludes `point`, given over the original variables.
    pub fn add_exclusion_cut(&mut self, point: &[i64]) -> Result<(), EncodingError> {
        if point.len() != self.original_count {
            return Err(EncodingError::DimensionMismatch {
                expected: self.original_count,
                got: point.len(),
            });
        }
        let frag = exclusion_cut(point, &self.bounds(), self.vars.len())?;
        self.push_fragment(frag);
        Ok(())
    }

    /// Adds binary `z = x_i·x_j` with `z ≤ x_i`, `z ≤ x_j`, `z ≥ x_i + x_j - 1`.
    pub fn linearize_binary_product(&mut self, i: usize, j: usize) -> Result<usize, EncodingError> {
        for v in [i, j] {
            match self.vars.get(v) {
                Some(var) if var.is_binary() => {}
                Some(_) => return Err(EncodingError::NonBinaryProduct(v)),
                None => return Err(EncodingError::UnboundedVariable(v)),
            }
        }
        let z = self.vars.len();
        self.vars.push(SystemVar::binary(VarKind::Auxiliary, format!("prod_{}_{}", self.vars[i].name, self.vars[j].name)));
        let row = |terms: Vec<(usize, i64)>, constant| ScaledInequality::from_map(terms.into_iter().fold(BTreeMap::new(), |mut m, (k, a)| {
            *m.entry(k).or_insert(0) += a;
            m
        }), constant);
        self.constraints.push(row(vec![(i, 1), (z, -1)], 0));
        self.constraints.push(row(vec![(j, 1), (z, -1)], 0));
        self.constraints.push(row(vec![(z, 1), (i, -1), (j, -1)], 1));
        Ok(z)
    }

    /// Installs a quadratic objective over original variables, linearizing
    /// products (all of which must be binary).
    pub fn set_quadratic_objective(&mut self, payoff: &QuadraticPayoff) -> Result<(), EncodingError> {
        let mut expr = LinExpr::constant(payoff.constant.clone());
        for (i, c) in payoff.linear.iter().enumerate() {
            expr.add_term(i, c.clone());
        }
        let mut pairs: BTreeMap<(usize, usize), Rational> = BTreeMap::new();
        for (&(i, j), c) in &payoff.quad {
            let key = (i.min(j), i.max(j));
            *pairs.entry(key).or_insert_with(Rational::zero) += c;
        }
        for ((i, j), c) in pairs {
            if c.is_zero() {
                continue;
            }
            if i == j {
                if !self.vars[i].is_binary() {
                    return Err(EncodingError::NonBinaryProduct(i));
                }
                expr.add_term(i, c);
            } else {
                let z = self.linearize_binary_product(i, j)?;
                expr.add_term(z, c);
            }
        }
        self.objective = Some(Objective {
            expr,
            sense: payoff.sense,
        });
        Ok(())
    }

    pub fn objective_value(&self, point: &[i64]) -> Option<Rational> {
        self.objective.as_ref().map(|o| o.expr.eval(point))
    }

    /// Independent re-check of bounds and every row.
    pub fn verify_point(&self, point: &[i64]) -> Result<(), String> {
        if point.len() != self.vars.len() {
            return Err(format!("point has {} entries, system has {}", point.len(), self.vars.len()));
        }
        for (i, v) in self.vars.iter().enumerate() {
            if point[i] < v.lower || point[i] > v.upper {
                return Err(format!("{} = {} outside [{}, {}]", v.name, point[i], v.lower, v.upper));
            }
        }
        for (r, row) in self.constraints.iter().enumerate() {
            let mut acc = BigInt::from(row.constant);
            for &(i, a) in &row.terms {
                acc += BigInt::from(a) * BigInt::from(point[i]);
            }
            if acc.is_negative() {
                return Err(format!("row {r} violated"));
            }
        }
        Ok(())
    }

    /// CPLEX-LP style text. Rows are written as `terms >= -constant`.
    pub fn to_lp(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "\\ LOIS encoded system: {} variables, {} constraints", self.vars.len(), self.constraints.len());
        let term_list = |terms: &mut dyn Iterator<Item = (String, String)>| {
            let mut s = String::new();
            for (k, (coef, name)) in terms.enumerate() {
                let neg = coef.starts_with('-');
                let mag = coef.trim_start_matches('-');
                if k == 0 {
                    let _ = write!(s, "{}{} {}", if neg { "- " } else { "" }, mag, name);
                } else {
                    let _ = write!(s, " {} {} {}", if neg { '-' } else { '+' }, mag, name);
                }
            }
            if s.is_empty() {
                s.push_str("0 ");
                s.push_str(&self.vars.first().map(|v| v.name.clone()).unwrap_or_else(|| "x0".into()));
            }
            s
        };
        match &self.objective {
            Some(obj) => {
                let _ = writeln!(out, "{}", if obj.sense == Sense::Maximize { "Maximize" } else { "Minimize" });
                let lcm = denominator_lcm(obj.expr.coeffs.values());
                let scale = Rational::from_integer(lcm.clone());
                let mut it = obj.expr.coeffs.iter().map(|(&i, c)| ((c * &scale).to_integer().to_string(), self.vars[i].name.clone()));
                let _ = writeln!(out, " obj: {}", term_list(&mut it));
                if !lcm.is_one() {
                    let _ = writeln!(out, "\\ objective scaled by {lcm}");
                }
            }
            None => {
                let _ = writeln!(out, "Minimize");
                let mut it = std::iter::empty();
                let _ = writeln!(out, " obj: {}", term_list(&mut it));
            }
        }
        let _ = writeln!(out, "Subject To");
        for (r, row) in self.constraints.iter().enumerate() {
            let mut it = row.terms.iter().map(|&(i, a)| (a.to_string(), self.vars[i].name.clone()));
            let _ = writeln!(out, " c{r}: {} >= {}", term_list(&mut it), -(row.constant as i128));
        }
        let _ = writeln!(out, "Bounds");
        for v in &self.vars {
            if !v.is_binary() {
                let _ = writeln!(out, " {} <= {} <= {}", v.lower, v.name, v.upper);
            }
        }
        let generals: Vec<&str> = self.vars.iter().filter(|v| !v.is_binary()).map(|v| v.name.as_str()).collect();
        if !generals.is_empty() {
            let _ = writeln!(out, "Generals");
            let _ = writeln!(out, " {}", generals.join(" "));
        }
        let binaries: Vec<&str> = self.vars.iter().filter(|v| v.is_binary()).map(|v| v.name.as_str()).collect();
        if !binaries.is_empty() {
            let _ = writeln!(out, "Binaries");
            let _ = writeln!(out, " {}", binaries.join(" "));
        }
        let _ = writeln!(out, "End");
        out
    }
}

/// Feasibility rows and encoded conditions of every player, optionally with
/// a welfare objective (linear, or quadratic over binaries).
pub fn assemble(instance: &IpgInstance, m: i64, objective: Option<&QuadraticPayoff>) -> Result<EncodedSystem, EncodingError> {
    assemble_with(instance, m, objective, BigMPolicy::Local)
}

pub fn assemble_with(
    instance: &IpgInstance,
    m: i64,
    objective: Option<&QuadraticPayoff>,
    policy: BigMPolicy,
) -> Result<EncodedSystem, EncodingError> {
    let mut sys = EncodedSystem::with_originals(&instance.bounds(), |i| instance.var_name(i));
    let sets = (0..instance.players.len())
        .map(|p| crate::conditions::build_conditions(instance, p, m))
        .collect::<Result<Vec<_>, _>>()?;
    for set in &sets {
        for g in &set.feasibility {
            sys.add_ge(&g.expr)?;
        }
    }
    for set in &sets {
        sys.add_implications(set, policy)?;
    }
    if let Some(obj) = objective {
        sys.set_quadratic_objective(obj)?;
    }
    Ok(sys)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::conditions::{build_conditions, Consequent};
    use crate::fixtures::two_player_example;
    use crate::neighborhood::Delta;

    fn lin(terms: &[(usize, i64)], c: i64) -> LinExpr {
        terms
            .iter()
            .fold(LinExpr::constant(int(c)), |e, &(i, a)| e.with_term(i, int(a)))
    }

    fn enumerate_box(bounds: &[(i64, i64)], mut f: impl FnMut(&[i64])) {
        let mut x: Vec<i64> = bounds.iter().map(|b| b.0).collect();
        if bounds.iter().any(|b| b.0 > b.1) {
            return;
        }
        loop {
            f(&x);
            let mut k = 0;
            while k < x.len() && x[k] == bounds[k].1 {
                x[k] = bounds[k].0;
                k += 1;
            }
            if k == x.len() {
                return;
            }
            x[k] += 1;
        }
    }

    #[test]
    fn big_m_examples() {
        assert_eq!(compute_big_m(&lin(&[(0, 2), (1, 2)], 1), &[(0, 1), (0, 1)]).unwrap(), 6);
        assert_eq!(compute_big_m(&LinExpr::new(), &[]).unwrap(), 1);
        assert_eq!(compute_big_m(&lin(&[(0, 1)], -4), &[(-5, 5)]).unwrap(), 10);
        assert_eq!(
            compute_big_m(&lin(&[(3, 1)], 0), &[(0, 1)]),
            Err(EncodingError::UnboundedVariable(3))
        );
    }

    fn example_ic() -> ImplicationConstraint {
        // 2x + 2y + 1 < 0 -> x < 0
        ImplicationConstraint {
            antecedent: Inequality::less_than_zero(&lin(&[(0, 2), (1, 2)], 1)),
            consequents: vec![Consequent {
                ineq: Inequality::less_than_zero(&lin(&[(0, 1)], 0)),
                origin: ConsequentOrigin::Constraint(crate::model::ConstraintOrigin::Explicit(0)),
            }],
            player: 0,
            delta: Delta::new([(0, 1)]).unwrap(),
        }
    }

    #[test]
    fn fixed_m_fragment_matches_hand_encoding() {
        let bounds = [(-10, 10), (-10, 10)];
        let frag = encode_lic(&example_ic(), &bounds, 2, BigMPolicy::Fixed(100)).unwrap();
        assert_eq!(frag.vars.len(), 2);
        let rows: Vec<&ScaledInequality> = frag.rows.iter().map(|r| &r.ineq).collect();
        // 2x + 2y + 1 + (1 - m0)·100 ≥ 0
        assert_eq!(rows[0], &ScaledInequality { terms: vec![(0, 2), (1, 2), (2, -100)], constant: 101 });
        // x - (1 - m1)·100 ≤ -1  ⇔  -x - 1 + (1 - m1)·100 ≥ 0
        assert_eq!(rows[1], &ScaledInequality { terms: vec![(0, -1), (3, -100)], constant: 99 });
        // m0 + m1 ≥ 1
        assert_eq!(rows[2], &ScaledInequality { terms: vec![(2, 1), (3, 1)], constant: -1 });
        assert_eq!(
            encode_lic(&example_ic(), &bounds, 2, BigMPolicy::Fixed(5)),
            Err(EncodingError::BigMTooSmall { given: 5, required: 42 })
        );
    }

    /// Exhaustive over the box and all indicator assignments.
    fn fragment_projection_matches(ic: &ImplicationConstraint, bounds: &[(i64, i64)], policy: BigMPolicy) {
        let n = bounds.len();
        let frag = encode_lic(ic, bounds, n, policy).unwrap();
        let k = frag.vars.len();
        enumerate_box(bounds, |x| {
            let mut full = x.to_vec();
            full.resize(n + k, 0);
            let mut any = false;
            for code in 0..(1u32 << k) {
                for b in 0..k {
                    full[n + b] = ((code >> b) & 1) as i64;
                }
                let ok = frag.rows.iter().all(|r| r.ineq.holds(&full));
                any |= ok;
                // Slackness: a row whose indicator is 0 never cuts.
                for r in &frag.rows {
                    if let Some(z) = r.indicator {
                        if full[z] == 0 {
                            assert!(r.ineq.holds(&full), "indicator-off row binds at {x:?}");
                        }
                    }
                }
            }
            assert_eq!(any, ic.holds(x), "projection differs at {x:?}");
        });
    }

    #[test]
    fn example_fragment_projection() {
        let bounds = [(-10, 10), (-10, 10)];
        fragment_projection_matches(&example_ic(), &bounds, BigMPolicy::Fixed(100));
        fragment_projection_matches(&example_ic(), &bounds, BigMPolicy::Local);
    }

    #[test]
    fn vacuous_antecedent_is_always_satisfiable() {
        let ic = ImplicationConstraint {
            antecedent: Inequality::less_than_zero(&LinExpr::new()),
            consequents: vec![],
            player: 0,
            delta: Delta::new([(0, 1)]).unwrap(),
        };
        fragment_projection_matches(&ic, &[(0, 3)], BigMPolicy::Local);
        let frag = encode_lic(&ic, &[(0, 3)], 1, BigMPolicy::Local).unwrap();
        for x in 0..=3 {
            assert!(frag.rows.iter().all(|r| r.ineq.holds(&[x, 1])));
        }
    }

    #[test]
    fn example_player_two_fragment_size() {
        let g = two_player_example();
        let set = build_conditions(&g, 1, 1).unwrap();
        let ic = set.implications.iter().find(|ic| ic.delta.entries()[&0] == 1).unwrap();
        let frag = encode_lic(ic, &g.bounds(), 2, BigMPolicy::Local).unwrap();
        assert_eq!(frag.vars.len(), 3);
        assert_eq!(frag.rows.len(), 4);
        fragment_projection_matches(ic, &g.bounds(), BigMPolicy::Local);
    }

    #[test]
    fn scaling_antecedent_preserves_projection() {
        let mut ic = example_ic();
        ic.antecedent.expr = ic.antecedent.expr.scaled(&int(7));
        fragment_projection_matches(&ic, &[(-4, 4), (-4, 4)], BigMPolicy::Local);
        let mut ic = example_ic();
        ic.antecedent.expr = ic.antecedent.expr.scaled(&crate::rational::ratio(3, 5));
        fragment_projection_matches(&ic, &[(-4, 4), (-4, 4)], BigMPolicy::Local);
    }

    #[test]
    fn binary_exclusion_cut_closed_form() {
        let frag = exclusion_cut(&[1, 0, 1], &[(0, 1); 3], 3).unwrap();
        assert!(frag.vars.is_empty());
        assert_eq!(frag.rows.len(), 1);
        // (1 - x0) + x1 + (1 - x2) ≥ 1
        assert_eq!(frag.rows[0].ineq, ScaledInequality { terms: vec![(0, -1), (1, 1), (2, -1)], constant: 1 });
    }

    fn cut_survivors(cuts: &[[i64; 2]]) -> Vec<Vec<i64>> {
        let bounds = [(-5, 5), (-5, 5)];
        let mut sys = EncodedSystem::with_originals(&bounds, |i| format!("x{i}"));
        for c in cuts {
            sys.add_exclusion_cut(c).unwrap();
        }
        let extra = sys.vars.len() - 2;
        let mut out = Vec::new();
        enumerate_box(&bounds, |x| {
            let ok = (0..(1u32 << extra)).any(|code| {
                let mut full = x.to_vec();
                full.extend((0..extra).map(|b| ((code >> b) & 1) as i64));
                sys.constraints.iter().all(|r| r.holds(&full))
            });
            if ok {
                out.push(x.to_vec());
            }
        });
        out
    }

    #[test]
    fn general_exclusion_cut_removes_exactly_one_point() {
        let left = cut_survivors(&[[1, -1]]);
        assert_eq!(left.len(), 120);
        assert!(!left.contains(&vec![1, -1]));
        let left = cut_survivors(&[[1, -1], [-5, 5]]);
        assert_eq!(left.len(), 119);
        assert!(!left.contains(&vec![-5, 5]));
    }

    #[test]
    fn binary_product_is_exact() {
        let mut sys = EncodedSystem::with_originals(&[(0, 1), (0, 1)], |i| format!("b{i}"));
        let z = sys.linearize_binary_product(0, 1).unwrap();
        assert_eq!(sys.constraints.len(), 3);
        for a in 0..=1 {
            for b in 0..=1 {
                let feasible: Vec<i64> = (0..=1)
                    .filter(|&zv| sys.constraints.iter().all(|r| r.holds(&[a, b, zv])))
                    .collect();
                assert_eq!(feasible, vec![a * b], "({a},{b})");
            }
        }
        assert_eq!(z, 2);
        let mut wide = EncodedSystem::with_originals(&[(0, 2), (0, 1)], |i| format!("v{i}"));
        assert_eq!(wide.linearize_binary_product(0, 1), Err(EncodingError::NonBinaryProduct(0)));
    }

    #[test]
    fn assembled_example_projects_onto_brute_force_lois() {
        let g = two_player_example();
        let sys = assemble(&g, 1, None).unwrap();
        assert!(sys.objective.is_none());
        let est = g.size_estimate();
        assert_eq!((sys.vars.len(), sys.constraints.len()), (est.variables, est.constraints));
        for x in 1..=10 {
            for y in -5..=5 {
                let expected = (0..2).all(|p| crate::conditions::check_point_locally_optimal(&g, p, &[x, y], 1).unwrap());
                let extra = sys.vars.len() - 2;
                let any = (0..(1u32 << extra)).any(|code| {
                    let mut full = vec![x, y];
                    full.extend((0..extra).map(|b| ((code >> b) & 1) as i64));
                    sys.verify_point(&full).is_ok()
                });
                assert_eq!(any, expected, "({x},{y})");
            }
        }
    }

    #[test]
    fn quadratic_objective_needs_binaries() {
        let g = two_player_example();
        let err = assemble(&g, 1, Some(&g.players[0].payoff)).unwrap_err();
        assert_eq!(err, EncodingError::NonBinaryProduct(0));
    }

    #[test]
    fn verify_point_flags_violations() {
        let g = two_player_example();
        let sys = assemble(&g, 1, None).unwrap();
        let zeros = vec![0; sys.vars.len()];
        assert!(sys.verify_point(&zeros).is_err());
        assert!(sys.verify_point(&[1]).is_err());
    }
}
