//! Small reference games used by tests, docs and the CLI.

use crate::model::{IpgInstance, LinExpr, LinearConstraint, PlayerProgram, QuadraticPayoff, Relation, Sense, VarBlock};
use crate::rational::{int, ratio};

/// The two-player quadratic game
///
/// ```text
/// P1: min_x  x² + 2xy        s.t. x ≥ 1
/// P2: min_y  y² + 3xy + 2    s.t. -5 ≤ y ≤ 5
/// ```
///
/// with `x` boxed to `[1, 10]` so that every variable is bounded.
pub fn two_player_example() -> IpgInstance {
    let mut x_block = VarBlock::new(0, 0, vec![1], vec![10]);
    x_block.names = Some(vec!["x".into()]);
    let mut y_block = VarBlock::new(1, 1, vec![-5], vec![5]);
    y_block.names = Some(vec!["y".into()]);

    let mut f1 = QuadraticPayoff::zero(2, Sense::Minimize);
    f1.add_quad(0, 0, int(1));
    f1.add_quad(0, 1, int(1));
    f1.add_quad(1, 0, int(1));
    let mut f2 = QuadraticPayoff::zero(2, Sense::Minimize);
    f2.add_quad(1, 1, int(1));
    f2.add_quad(0, 1, ratio(3, 2));
    f2.add_quad(1, 0, ratio(3, 2));
    f2.constant = int(2);

    let p1 = PlayerProgram {
        payoff: f1,
        constraints: vec![LinearConstraint::new(LinExpr::var(0).with_constant(int(-1)), Relation::Ge)],
        own_block: x_block,
        coupled: false,
    };
    let p2 = PlayerProgram {
        payoff: f2,
        constraints: vec![
            LinearConstraint::new(LinExpr::var(1).with_constant(int(-5)), Relation::Le),
            LinearConstraint::new(LinExpr::var(1).with_constant(int(5)), Relation::Ge),
        ],
        own_block: y_block,
        coupled: false,
    };
    IpgInstance::from_players(vec![p1, p2])
}
