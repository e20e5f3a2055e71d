//! Solvers for unconstrained, finite-horizon, N-player nonlinear dynamic
//! games.
//!
//! Two interchangeable second-order methods compute open-loop Nash
//! equilibria together with local affine feedback policies:
//!
//! * **stagewise Newton** — quadraticizes each player's total cost and the
//!   dynamics around the nominal trajectory, solves the resulting quadratic
//!   dynamic game by a backward recursion, and applies the step through the
//!   linearized dynamics; this reproduces the exact Newton step on the
//!   stacked first-order conditions in `O(T)` per iteration;
//! * **DDP** — quadraticizes the equilibrium Bellman recursion itself and
//!   rolls the policy through the true nonlinear dynamics.
//!
//! The two backward passes differ only in how the dynamics curvature is
//! weighted, and their updates agree to second order near a stationary
//! point. The [`oracle`] module provides brute-force references (dense
//! Newton steps, finite-difference gradients, best-response probes) used
//! throughout the test suite.
//!
//! See the `examples/` directory for runnable entry points; a thin `dyngame`
//! binary exposes the same functionality as `solve`, `verify`, `compare`
//! and `list-problems` subcommands.

pub mod backward;
pub mod cli;
pub mod derivatives;
mod error;
pub mod game;
pub mod oracle;
pub mod problems;
pub mod solver;

#[cfg(test)]
pub(crate) mod test_problems;

pub use error::{Error, Result};
pub use game::{GameProblem, PlayerCosts, Trajectory};
pub use solver::{Method, SolveOptions, SolveReport};
