//! A small finite-domain constraint solver.
//!
//! Integer variables live in a trailed [`Store`]; propagators are posted on a
//! [`Model`] and run to a fixpoint through a priority queue. [`Model::solve`]
//! performs depth-first branch-and-bound with a caller-supplied [`Brancher`].

pub mod domain;
pub mod engine;
pub mod propagators;
pub mod search;
pub mod store;

pub use domain::Domain;
pub use engine::{Delta, Model, Priority, Propagator};
pub use search::{Brancher, Decision, Limits, SearchStats, Solution, SolveOutcome, SolveStatus};
pub use store::{Fail, PropResult, Store, VarId};
