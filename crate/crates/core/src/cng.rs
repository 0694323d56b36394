//! Critical node game: an attacker choosing `α ∈ {0,1}^V` and a defender
//! choosing `x ∈ {0,1}^V`, each under a knapsack budget.
//!
//! In the IPG form the attacker is player 0 and owns variables `0..V`, the
//! defender is player 1 and owns `V..2V`. Both maximize.

use crate::encoding::{EncodedSystem, EncodingError};
use crate::model::{
    IpgInstance, LinExpr, LinearConstraint, PlayerProgram, QuadraticPayoff, Relation, Sense,
    VarBlock,
};
use crate::rational::{int, ratio, round_half_away, Rational};
use crate::solver::{optimize, SolveStatus, SolverConfig};
use num_traits::{Signed, Zero};
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::path::Path;

pub const ATTACKER: usize = 0;
pub const DEFENDER: usize = 1;

/// Scenario weights. `mitigation` (δ) is the defender's share when an
/// undefended node is attacked, `defended_attack` (η) the share when a
/// defended node is attacked, `defense_cost` (ε) the share kept by defending
/// an unattacked node, and `opportunity` (γ) the attacker's loss on nodes
/// left alone.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct CngParams {
    #[serde(rename = "delta", with = "crate::rational")]
    pub mitigation: Rational,
    #[serde(rename = "eta", with = "crate::rational")]
    pub defended_attack: Rational,
    #[serde(rename = "epsilon", with = "crate::rational")]
    pub defense_cost: Rational,
    #[serde(rename = "gamma", with = "crate::rational")]
    pub opportunity: Rational,
}

impl Default for CngParams {
    fn default() -> Self {
        CngParams {
            mitigation: ratio(1, 10),
            defended_attack: ratio(1, 2),
            defense_cost: ratio(4, 5),
            opportunity: ratio(1, 20),
        }
    }
}

impl CngParams {
    pub fn validate(&self) -> Result<(), CngError> {
        let unit = |r: &Rational| !r.is_negative() && *r <= int(1);
        if ![&self.mitigation, &self.defended_attack, &self.defense_cost, &self.opportunity]
            .into_iter()
            .all(unit)
        {
            return Err(CngError::Invalid("parameters must lie in [0, 1]".into()));
        }
        if !(self.mitigation < self.defended_attack && self.defended_attack < self.defense_cost) {
            return Err(CngError::Invalid("need delta < eta < epsilon".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GenConfig {
    pub p_lo: i64,
    pub p_hi: i64,
    pub cost_lo: i64,
    pub cost_hi: i64,
    #[serde(with = "crate::rational")]
    pub rho_d: Rational,
    #[serde(with = "crate::rational")]
    pub rho_a: Rational,
    pub params: CngParams,
}

impl Default for GenConfig {
    fn default() -> Self {
        GenConfig {
            p_lo: 1,
            p_hi: 100,
            cost_lo: 1,
            cost_hi: 50,
            rho_d: ratio(3, 10),
            rho_a: ratio(3, 10),
            params: CngParams::default(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GenMeta {
    pub seed: u64,
    pub generator: String,
    pub config: GenConfig,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CngInstance {
    #[serde(rename = "V")]
    pub nodes: usize,
    pub p_d: Vec<i64>,
    pub p_a: Vec<i64>,
    #[serde(with = "crate::rational::vec")]
    pub d: Vec<Rational>,
    #[serde(with = "crate::rational::vec")]
    pub a: Vec<Rational>,
    #[serde(rename = "D", with = "crate::rational")]
    pub defense_budget: Rational,
    #[serde(rename = "A", with = "crate::rational")]
    pub attack_budget: Rational,
    pub params: CngParams,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gen: Option<GenMeta>,
}

#[derive(Debug, thiserror::Error, PartialEq, Eq)]
pub enum CngError {
    #[error("invalid CNG instance: {0}")]
    Invalid(String),
    #[error("point lies outside the joint budget space")]
    OutsideJointSpace,
    #[error(transparent)]
    Encoding(#[from] EncodingError),
    #[error("solver stopped before proving the maximum")]
    Limit,
    #[error("json: {0}")]
    Json(String),
}

impl CngInstance {
    pub fn validate(&self) -> Result<(), CngError> {
        let n = self.nodes;
        if n == 0 {
            return Err(CngError::Invalid("V must be positive".into()));
        }
        if [self.p_d.len(), self.p_a.len(), self.d.len(), self.a.len()] != [n; 4] {
            return Err(CngError::Invalid(format!("vectors must have length {n}")));
        }
        if self.p_d.iter().chain(&self.p_a).any(|&p| p <= 0) {
            return Err(CngError::Invalid("criticalities must be positive".into()));
        }
        if self.d.iter().chain(&self.a).any(|c| !c.is_positive()) {
            return Err(CngError::Invalid("costs must be positive".into()));
        }
        if self.defense_budget.is_negative() || self.attack_budget.is_negative() {
            return Err(CngError::Invalid("budgets must be non-negative".into()));
        }
        self.params.validate()
    }

    pub fn from_json(text: &str) -> Result<Self, CngError> {
        let inst: CngInstance = serde_json::from_str(text).map_err(|e| CngError::Json(e.to_string()))?;
        inst.validate()?;
        Ok(inst)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("CNG instances always serialize")
    }

    pub fn load(path: &Path) -> Result<Self, CngError> {
        let text = std::fs::read_to_string(path).map_err(|e| CngError::Json(format!("{}: {e}", path.display())))?;
        Self::from_json(&text)
    }

    /// Splits a joint point `(α, x)`.
    pub fn split<'a>(&self, point: &'a [i64]) -> (&'a [i64], &'a [i64]) {
        point.split_at(self.nodes)
    }

    pub fn in_joint_space(&self, point: &[i64]) -> bool {
        if point.len() != 2 * self.nodes || point.iter().any(|&v| v != 0 && v != 1) {
            return false;
        }
        let (alpha, x) = self.split(point);
        let spend = |c: &[Rational], v: &[i64]| -> Rational {
            c.iter().zip(v).filter(|(_, &b)| b == 1).map(|(c, _)| c.clone()).sum()
        };
        spend(&self.a, alpha) <= self.attack_budget && spend(&self.d, x) <= self.defense_budget
    }
}

/// Direct evaluation of the attacker's objective.
pub fn attacker_payoff(inst: &CngInstance, x: &[i64], alpha: &[i64]) -> Rational {
    let pr = &inst.params;
    let one = int(1);
    let mut total = Rational::zero();
    for i in 0..inst.nodes {
        let p = int(inst.p_a[i]);
        let (xi, ai) = (int(x[i]), int(alpha[i]));
        total += -&pr.opportunity * &p * (&one - &xi) * (&one - &ai);
        total += &p * (&one - &xi) * &ai;
        total += (&one - &pr.defended_attack) * &p * &xi * &ai;
    }
    total
}

/// Direct evaluation of the defender's objective.
pub fn defender_payoff(inst: &CngInstance, x: &[i64], alpha: &[i64]) -> Rational {
    let pr = &inst.params;
    let one = int(1);
    let mut total = Rational::zero();
    for i in 0..inst.nodes {
        let p = int(inst.p_d[i]);
        let (xi, ai) = (int(x[i]), int(alpha[i]));
        total += &p * (&one - &xi) * (&one - &ai);
        total += &pr.mitigation * &p * (&one - &xi) * &ai;
        total += &pr.defense_cost * &p * &xi * (&one - &ai);
        total += &pr.defended_attack * &p * &xi * &ai;
    }
    total
}

fn attacker_quadratic(inst: &CngInstance) -> QuadraticPayoff {
    let n = inst.nodes;
    let pr = &inst.params;
    let mut f = QuadraticPayoff::zero(2 * n, Sense::Maximize);
    for i in 0..n {
        let p = int(inst.p_a[i]);
        let g = &pr.opportunity * &p;
        f.constant -= &g;
        f.add_linear(n + i, g.clone());
        f.add_linear(i, &g + &p);
        f.add_quad(i, n + i, -(&p * (&pr.opportunity + &pr.defended_attack)));
    }
    f
}

fn defender_quadratic(inst: &CngInstance) -> QuadraticPayoff {
    let n = inst.nodes;
    let pr = &inst.params;
    let one = int(1);
    let mut f = QuadraticPayoff::zero(2 * n, Sense::Maximize);
    for i in 0..n {
        let p = int(inst.p_d[i]);
        f.constant += &p;
        f.add_linear(n + i, &p * (&pr.defense_cost - &one));
        f.add_linear(i, &p * (&pr.mitigation - &one));
        f.add_quad(i, n + i, &p * (&one - &pr.mitigation - &pr.defense_cost + &pr.defended_attack));
    }
    f
}

fn budget_row(costs: &[Rational], start: usize, budget: &Rational) -> LinearConstraint {
    let expr = costs
        .iter()
        .enumerate()
        .fold(LinExpr::constant(-budget.clone()), |e, (k, c)| e.with_term(start + k, c.clone()));
    LinearConstraint::new(expr, Relation::Le)
}

fn attacker_program(inst: &CngInstance) -> PlayerProgram {
    let n = inst.nodes;
    let mut block = VarBlock::binary(ATTACKER, 0, n);
    block.names = Some((0..n).map(|i| format!("alpha{i}")).collect());
    PlayerProgram {
        payoff: attacker_quadratic(inst),
        constraints: vec![budget_row(&inst.a, 0, &inst.attack_budget)],
        own_block: block,
        coupled: false,
    }
}

fn defender_program(inst: &CngInstance) -> PlayerProgram {
    let n = inst.nodes;
    let mut block = VarBlock::binary(DEFENDER, n, n);
    block.names = Some((0..n).map(|i| format!("x{i}")).collect());
    PlayerProgram {
        payoff: defender_quadratic(inst),
        constraints: vec![budget_row(&inst.d, n, &inst.defense_budget)],
        own_block: block,
        coupled: false,
    }
}

pub fn to_ipg(inst: &CngInstance) -> IpgInstance {
    IpgInstance::from_players(vec![attacker_program(inst), defender_program(inst)])
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Leader {
    Defender,
    Attacker,
}

/// The sequential game with `leader` moving first. Player programs keep
/// their joint-vector indices.
pub fn to_stackelberg(inst: &CngInstance, leader: Leader) -> (PlayerProgram, Vec<PlayerProgram>) {
    match leader {
        Leader::Defender => (defender_program(inst), vec![attacker_program(inst)]),
        Leader::Attacker => (attacker_program(inst), vec![defender_program(inst)]),
    }
}

/// Seeded synthetic instance. Criticalities and costs are uniform integers,
/// budgets are `round(ρ · Σ cost)`.
pub fn generate_instance(seed: u64, nodes: usize, cfg: &GenConfig) -> Result<CngInstance, CngError> {
    if nodes == 0 {
        return Err(CngError::Invalid("node count must be positive".into()));
    }
    if cfg.p_lo < 1 || cfg.p_lo > cfg.p_hi || cfg.cost_lo < 1 || cfg.cost_lo > cfg.cost_hi {
        return Err(CngError::Invalid("empty or non-positive generator range".into()));
    }
    if cfg.rho_d.is_negative() || cfg.rho_a.is_negative() {
        return Err(CngError::Invalid("budget ratios must be non-negative".into()));
    }
    cfg.params.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut draw = |lo: i64, hi: i64| (0..nodes).map(|_| rng.gen_range(lo..=hi)).collect::<Vec<i64>>();
    let p_d = draw(cfg.p_lo, cfg.p_hi);
    let p_a = draw(cfg.p_lo, cfg.p_hi);
    let d: Vec<Rational> = draw(cfg.cost_lo, cfg.cost_hi).into_iter().map(int).collect();
    let a: Vec<Rational> = draw(cfg.cost_lo, cfg.cost_hi).into_iter().map(int).collect();
    let budget = |rho: &Rational, c: &[Rational]| {
        Rational::from_integer(round_half_away(&(rho * c.iter().sum::<Rational>())))
    };
    let inst = CngInstance {
        nodes,
        p_d,
        p_a,
        defense_budget: budget(&cfg.rho_d, &d),
        attack_budget: budget(&cfg.rho_a, &a),
        d,
        a,
        params: cfg.params.clone(),
        gen: Some(GenMeta {
            seed,
            generator: "chacha8-uniform-v1".into(),
            config: cfg.clone(),
        }),
    };
    inst.validate()?;
    Ok(inst)
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct PriceMetrics {
    pub pos: Option<Rational>,
    pub poa: Option<Rational>,
    pub best_defender: Rational,
    pub best_attacker: Rational,
    pub defender_at_point: Rational,
    pub attacker_at_point: Rational,
}

/// Maximum of `payoff` over the joint budget space.
pub fn joint_maximum(inst: &CngInstance, player: usize, config: &SolverConfig) -> Result<(Rational, Vec<i64>), CngError> {
    let ipg = to_ipg(inst);
    let mut sys = EncodedSystem::with_originals(&ipg.bounds(), |i| ipg.var_name(i));
    for p in &ipg.players {
        for row in p.constraints.iter().flat_map(|c| c.ge_forms()) {
            sys.add_ge(&row)?;
        }
    }
    sys.set_quadratic_objective(&ipg.players[player].payoff)?;
    let res = optimize(&sys, config).map_err(|_| CngError::Limit)?;
    match res.status {
        SolveStatus::Optimal => Ok((res.objective.clone().unwrap(), res.originals(&sys).unwrap())),
        _ => Err(CngError::Limit),
    }
}

/// Maxima of both payoffs over the joint budget space.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct JointOptima {
    pub defender: Rational,
    pub attacker: Rational,
}

pub fn joint_optima(inst: &CngInstance, config: &SolverConfig) -> Result<JointOptima, CngError> {
    Ok(JointOptima {
        defender: joint_maximum(inst, DEFENDER, config)?.0,
        attacker: joint_maximum(inst, ATTACKER, config)?.0,
    })
}

/// PoS and PoA of a joint point `(α, x)`. A ratio is `None` when the
/// point's payoff is zero.
pub fn price_metrics(inst: &CngInstance, point: &[i64], config: &SolverConfig) -> Result<PriceMetrics, CngError> {
    if !inst.in_joint_space(point) {
        return Err(CngError::OutsideJointSpace);
    }
    price_metrics_from(inst, point, &joint_optima(inst, config)?)
}

/// As [`price_metrics`] with precomputed maxima.
pub fn price_metrics_from(inst: &CngInstance, point: &[i64], optima: &JointOptima) -> Result<PriceMetrics, CngError> {
    if !inst.in_joint_space(point) {
        return Err(CngError::OutsideJointSpace);
    }
    let (alpha, x) = inst.split(point);
    let fd = defender_payoff(inst, x, alpha);
    let fa = attacker_payoff(inst, x, alpha);
    let ratio_of = |best: &Rational, at: &Rational| (!at.is_zero()).then(|| best / at);
    Ok(PriceMetrics {
        pos: ratio_of(&optima.defender, &fd),
        poa: ratio_of(&optima.attacker, &fa),
        best_defender: optima.defender.clone(),
        best_attacker: optima.attacker.clone(),
        defender_at_point: fd,
        attacker_at_point: fa,
    })
}
