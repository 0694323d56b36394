//! Corpus generators and exhaustive oracles shared by integration tests.
//!
//! The oracles scale every payoff and constraint to integers and scan boxes
//! directly; they use nothing from the library beyond reading the instance
//! data.

#![allow(dead_code)]

use lois::cng::{generate_instance, CngInstance, GenConfig};
use lois::model::{LinExpr, LinearConstraint, PlayerProgram, QuadraticPayoff, Relation, Sense};
use lois::rational::{int, ratio, Rational};
use lois::{IpgInstance, VarBlock};
use num_bigint::BigInt;
use num_integer::Integer;
use num_traits::{One, Signed, ToPrimitive, Zero};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub const IPG_BOX_CAP: u128 = 3000;

pub fn for_each_point(lo: &[i64], hi: &[i64], mut f: impl FnMut(&[i64])) {
    if lo.iter().zip(hi).any(|(a, b)| a > b) {
        return;
    }
    let mut x = lo.to_vec();
    loop {
        f(&x);
        let mut k = 0;
        while k < x.len() && x[k] == hi[k] {
            x[k] = lo[k];
            k += 1;
        }
        if k == x.len() {
            return;
        }
        x[k] += 1;
    }
}

/// Random bounded IPG with 1-3 players, 1-3 variables each, boxes of width
/// at most 5, 0-2 explicit constraints per player (sometimes coupled) and
/// quadratic or linear payoffs.
pub fn random_ipg(seed: u64) -> IpgInstance {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    loop {
        let g = try_random_ipg(&mut rng);
        if g.box_size() <= IPG_BOX_CAP && g.validate().is_empty() {
            return g;
        }
    }
}

fn small_rational(rng: &mut ChaCha8Rng, mag: i64) -> Rational {
    let n = rng.gen_range(-mag..=mag);
    if rng.gen_bool(0.2) {
        ratio(n, 2)
    } else {
        int(n)
    }
}

fn try_random_ipg(rng: &mut ChaCha8Rng) -> IpgInstance {
    let k = rng.gen_range(1..=3usize);
    let sizes: Vec<usize> = (0..k).map(|_| rng.gen_range(1..=3)).collect();
    let n: usize = sizes.iter().sum();
    let mut blocks = Vec::new();
    let mut start = 0;
    for (p, &len) in sizes.iter().enumerate() {
        let mut lo = Vec::new();
        let mut hi = Vec::new();
        for _ in 0..len {
            let l = rng.gen_range(-3..=2);
            let w = if rng.gen_bool(0.1) { 0 } else { rng.gen_range(1..=5) };
            lo.push(l);
            hi.push(l + w);
        }
        blocks.push(VarBlock::new(p, start, lo, hi));
        start += len;
    }
    let bounds: Vec<(i64, i64)> = blocks
        .iter()
        .flat_map(|b| b.lower.iter().copied().zip(b.upper.iter().copied()))
        .collect();
    let mut players = Vec::new();
    for block in &blocks {
        let sense = if rng.gen_bool(0.5) { Sense::Minimize } else { Sense::Maximize };
        let mut f = QuadraticPayoff::zero(n, sense);
        let linear_only = rng.gen_bool(0.25);
        for i in 0..n {
            if rng.gen_bool(0.6) {
                f.add_linear(i, small_rational(rng, 4));
            }
            if linear_only {
                continue;
            }
            for j in 0..n {
                let touches_own = block.contains(i) || block.contains(j);
                if touches_own && rng.gen_bool(0.3) {
                    f.add_quad(i, j, small_rational(rng, 3));
                }
            }
        }
        f.constant = int(rng.gen_range(-3..=3));
        let mut constraints = Vec::new();
        let mut coupled = false;
        for _ in 0..rng.gen_range(0..=2) {
            let mut e = LinExpr::new();
            for i in block.indices() {
                if rng.gen_bool(0.7) {
                    let c = *[-2i64, -1, 1, 2].get(rng.gen_range(0..4)).unwrap();
                    e.add_term(i, int(c));
                }
            }
            if n > block.len() && rng.gen_bool(0.3) {
                let others: Vec<usize> = (0..n).filter(|i| !block.contains(*i)).collect();
                let o = others[rng.gen_range(0..others.len())];
                e.add_term(o, int(rng.gen_range(1..=2)));
                coupled = true;
            }
            if e.coeffs.is_empty() {
                e.add_term(block.start, int(1));
            }
            // Anchor at a random box point so the constraint is rarely empty.
            let anchor: Vec<i64> = bounds.iter().map(|&(l, h)| rng.gen_range(l..=h)).collect();
            let val = e.eval(&anchor);
            let slack = int(rng.gen_range(0..=2));
            let rel = match rng.gen_range(0..10) {
                0 => Relation::Eq,
                1..=5 => Relation::Ge,
                _ => Relation::Le,
            };
            e.constant = match rel {
                Relation::Eq => -val,
                Relation::Ge => -val + slack,
                Relation::Le => -val - slack,
            };
            constraints.push(LinearConstraint::new(e, rel));
        }
        players.push(PlayerProgram {
            payoff: f,
            constraints,
            own_block: block.clone(),
            coupled,
        });
    }
    IpgInstance::from_players(players)
}

/// CNG with 1-4 nodes and a budget ratio chosen by seed.
pub fn corpus_cng(seed: u64) -> CngInstance {
    let rhos = [ratio(1, 10), ratio(3, 10), ratio(1, 2), ratio(1, 1)];
    let cfg = GenConfig {
        rho_d: rhos[(seed / 4 % 4) as usize].clone(),
        rho_a: rhos[(seed / 16 % 4) as usize].clone(),
        ..GenConfig::default()
    };
    generate_instance(seed, 1 + (seed % 4) as usize, &cfg).unwrap()
}

fn lcm_of<'a>(values: impl IntoIterator<Item = &'a Rational>) -> BigInt {
    values.into_iter().fold(BigInt::one(), |a, v| a.lcm(v.denom()))
}

fn to_int(r: &Rational, scale: &BigInt) -> i128 {
    (r * Rational::from_integer(scale.clone())).to_integer().to_i128().unwrap()
}

/// A player's data scaled to integers, in maximization form.
pub struct IntPlayer {
    start: usize,
    lo: Vec<i64>,
    hi: Vec<i64>,
    quad: Vec<(usize, usize, i128)>,
    linear: Vec<(usize, i128)>,
    /// Each as `Σ a·x + c` with the relation.
    rows: Vec<(Vec<(usize, i128)>, i128, Relation)>,
}

impl IntPlayer {
    pub fn new(p: &PlayerProgram) -> Self {
        let f = &p.payoff;
        let scale = lcm_of(f.quad.values().chain(&f.linear).chain([&f.constant]));
        let sign: i128 = if f.sense == Sense::Maximize { 1 } else { -1 };
        let quad = f.quad.iter().map(|(&(i, j), c)| (i, j, sign * to_int(c, &scale))).collect();
        let linear = f
            .linear
            .iter()
            .enumerate()
            .filter(|(_, c)| !c.is_zero())
            .map(|(i, c)| (i, sign * to_int(c, &scale)))
            .collect();
        let rows = p
            .constraints
            .iter()
            .map(|c| {
                let s = lcm_of(c.expr.coeffs.values().chain([&c.expr.constant]));
                let terms = c.expr.coeffs.iter().map(|(&i, a)| (i, to_int(a, &s))).collect();
                (terms, to_int(&c.expr.constant, &s), c.rel)
            })
            .collect();
        IntPlayer {
            start: p.own_block.start,
            lo: p.own_block.lower.clone(),
            hi: p.own_block.upper.clone(),
            quad,
            linear,
            rows,
        }
    }

    /// Scaled payoff, larger is better.
    pub fn value(&self, x: &[i64]) -> i128 {
        let q: i128 = self.quad.iter().map(|&(i, j, c)| c * x[i] as i128 * x[j] as i128).sum();
        let l: i128 = self.linear.iter().map(|&(i, c)| c * x[i] as i128).sum();
        q + l
    }

    pub fn feasible(&self, x: &[i64]) -> bool {
        for k in 0..self.lo.len() {
            let v = x[self.start + k];
            if v < self.lo[k] || v > self.hi[k] {
                return false;
            }
        }
        self.rows.iter().all(|(terms, c, rel)| {
            let v: i128 = terms.iter().map(|&(i, a)| a * x[i] as i128).sum::<i128>() + c;
            match rel {
                Relation::Ge => v >= 0,
                Relation::Le => v <= 0,
                Relation::Eq => v == 0,
            }
        })
    }

    /// Smallest L1 distance of a strictly improving feasible own deviation,
    /// `None` if there is none.
    pub fn nearest_improvement(&self, x: &[i64]) -> Option<i64> {
        let here = self.value(x);
        let mut y = x.to_vec();
        let mut best: Option<i64> = None;
        for_each_point(&self.lo, &self.hi, |own| {
            y[self.start..self.start + own.len()].copy_from_slice(own);
            if self.feasible(&y) && self.value(&y) > here {
                let d: i64 = own.iter().zip(&x[self.start..]).map(|(a, b)| (a - b).abs()).sum();
                if best.is_none_or(|b| d < b) {
                    best = Some(d);
                }
            }
        });
        best
    }
}

/// Exhaustive scan. `lois[m-1]` is the LOIS-m set for `m = 1..=max_m`.
pub struct OracleSets {
    pub lois: Vec<Vec<Vec<i64>>>,
    pub nash: Vec<Vec<i64>>,
}

pub fn oracle_sets(g: &IpgInstance, max_m: i64) -> OracleSets {
    let players: Vec<IntPlayer> = g.players.iter().map(IntPlayer::new).collect();
    let (lo, hi): (Vec<i64>, Vec<i64>) = g.bounds().into_iter().unzip();
    let mut out = OracleSets {
        lois: vec![Vec::new(); max_m as usize],
        nash: Vec::new(),
    };
    for_each_point(&lo, &hi, |x| {
        if !players.iter().all(|p| p.feasible(x)) {
            return;
        }
        let nearest = players
            .iter()
            .filter_map(|p| p.nearest_improvement(x))
            .min();
        match nearest {
            None => {
                out.nash.push(x.to_vec());
                for set in &mut out.lois {
                    set.push(x.to_vec());
                }
            }
            Some(d) => {
                for m in 1..=max_m {
                    if d > m {
                        out.lois[(m - 1) as usize].push(x.to_vec());
                    }
                }
            }
        }
    });
    for s in &mut out.lois {
        s.sort();
    }
    out.nash.sort();
    out
}

/// Exact payoff of a program at `x` from its raw data.
pub fn raw_payoff(p: &PlayerProgram, x: &[i64]) -> Rational {
    let f = &p.payoff;
    let mut v = f.constant.clone();
    for (&(i, j), c) in &f.quad {
        v += c * int(x[i] * x[j]);
    }
    for (i, c) in f.linear.iter().enumerate() {
        v += c * int(x[i]);
    }
    v
}

pub fn is_positive(r: &Rational) -> bool {
    r.is_positive()
}
