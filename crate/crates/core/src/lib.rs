//! reachcore: interval reachability analysis for nonlinear systems in
//! feedback with neural-network controllers.
//!
//! The crate constructs inclusion functions for vector fields and networks
//! (natural, Jacobian-based cornered and mixed-cornered, IBP, CROWN-style
//! affine), combines them into closed-loop inclusion functions, and
//! integrates a single trajectory of the induced `2n`-dimensional embedding
//! system to over-approximate reachable sets. Reach tubes feed target/avoid
//! specification checks, with optional input partitioning and
//! redundant-variable refinement.

pub mod closed_loop;
pub mod error;
pub mod expr;
pub mod inclusion;
pub mod interval;
pub mod models;
pub mod nn;
pub mod reach;

pub use error::{
    ClosedLoopError, ExprError, InclusionError, IntervalError, ModelError, NnError, ReachError,
};
pub use expr::{ExprGraph, GraphBuilder, JacobianBounds, Jacobians, SystemDoc, VarGroup};
pub use interval::{
    interval_linear_map, metzler_split, pos_neg_split, Interval, IntervalMatrix, IntervalVector,
};
