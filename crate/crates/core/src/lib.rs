//! Matvec-metered solver for l1-l1 and l2-l1 matrix games built on a dyadic
//! prox multi-point outer loop, a cautious bisection search over the
//! regularization weight, and a smooth-until-proven-guilty inner solver that
//! learns rank-one matrix models along a telescoping path.
//!
//! Every product with the payoff matrix goes through a [`Meter`], which
//! charges it to one accounting [`Phase`].

// Negated comparisons deliberately reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod bench;
pub mod error;
pub mod geometry;
pub mod oracle;
pub mod outer;
pub mod path;
pub mod search;
pub mod supg;
pub mod trace;

pub use bench::baseline::mirror_prox_baseline;
pub use bench::generate::{generate, Generator, InstanceSpec};
pub use bench::sweep::{run_sweep, Solver, SweepRecord, SweepSpec};
pub use bench::verify::{verify, VerifyReport, VerifySpec};
pub use error::{MgameError, Result};
pub use geometry::{bregman, gap, CenterSet, Kind, Point, Setup, StabilityProfile};
pub use oracle::{CallCountingOracle, DenseMatrix, Ledger, MatvecOracle, Meter, Phase};
pub use outer::{solve_game, AuditReport, InvariantCheck, SolveConfig, SolveReport};
pub use path::{Anchor, MatrixApproxPath, RankOneModel};
pub use search::{cautious_bisection, mdmp_search, Flag, MdmpParams, SearchOracleResult};
pub use supg::{supg_solve, SupgConfig, Verdict};
pub use trace::Tracer;
