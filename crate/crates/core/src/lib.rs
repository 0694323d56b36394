//! Locally optimal integer solutions (LOIS) for integer programming games.
//!
//! The pipeline is: a game ([`model`]) yields per-player optimality
//! conditions over the L1 move set ([`neighborhood`], [`conditions`]); these
//! are Big-M encoded into a pure integer-linear system ([`encoding`]) that a
//! complete branch-and-bound engine solves ([`solver`]). [`equilibrium`]
//! exposes the game-level operations, [`cng`] the critical node game.

pub mod cli;
pub mod cng;
pub mod conditions;
pub mod encoding;
pub mod equilibrium;
pub mod fixtures;
pub mod model;
pub mod neighborhood;
pub mod rational;
pub mod solver;

pub use model::{IpgInstance, JointPoint, LinExpr, PlayerProgram, QuadraticPayoff, Sense, VarBlock};
pub use rational::Rational;
