//! Error types shared across the crate.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum IntervalError {
    #[error("interval bounds inverted: lo {lo} > hi {hi}")]
    InvertedBounds { lo: f64, hi: f64 },
    #[error("interval bound not finite: [{lo}, {hi}]")]
    NonFiniteBound { lo: f64, hi: f64 },
    #[error("division by interval containing zero: [{lo}, {hi}]")]
    DivisionByZeroInterval { lo: f64, hi: f64 },
    #[error("domain error in {op} over [{lo}, {hi}]")]
    DomainError { op: &'static str, lo: f64, hi: f64 },
    #[error("tan over an interval crossing a pole: [{lo}, {hi}]")]
    TanSingularity { lo: f64, hi: f64 },
    #[error("matrix not square: {rows}x{cols}")]
    NonSquare { rows: usize, cols: usize },
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
}

#[derive(Debug, Error)]
pub enum ExprError {
    #[error("parse error at {path}: {message}")]
    ParseError { path: String, message: String },
    #[error("unknown operation '{op}' at {path}")]
    UnknownOp { op: String, path: String },
    #[error("operation '{op}' expects {expected} operands, got {got} at {path}")]
    ArityError {
        op: String,
        expected: usize,
        got: usize,
        path: String,
    },
    #[error("operation '{op}' is not differentiable")]
    NonDifferentiableOp { op: &'static str },
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error(transparent)]
    Interval(#[from] IntervalError),
}

#[derive(Debug, Error)]
pub enum InclusionError {
    #[error("empty intersection in component {component}: lower {lo} > upper {hi} (unsound operand)")]
    EmptyResult { component: usize, lo: f64, hi: f64 },
    #[error("input box is not contained in the localization domain")]
    OutsideLocalization,
    #[error("decomposition property {property} violated at trial {trial}")]
    DecompositionPropertyViolation { property: &'static str, trial: usize },
    #[error("dimension {dim} too large for the brute force oracle (max {max})")]
    DimensionTooLarge { dim: usize, max: usize },
    #[error(transparent)]
    Expr(#[from] ExprError),
    #[error(transparent)]
    Interval(#[from] IntervalError),
}

#[derive(Debug, Error)]
pub enum NnError {
    #[error("weights schema error: {0}")]
    SchemaError(String),
    #[error("layer {layer}: weight matrix is {rows}x{cols} but previous layer has {expected} outputs")]
    DimChainError {
        layer: usize,
        rows: usize,
        cols: usize,
        expected: usize,
    },
    #[error("unsupported activation '{0}'")]
    UnsupportedActivation(String),
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("input box is not contained in the localization domain")]
    OutsideLocalization,
    #[error(transparent)]
    Interval(#[from] IntervalError),
}

#[derive(Debug, Error)]
pub enum ClosedLoopError {
    #[error("input box is not contained in the localization domain")]
    OutsideLocalization,
    #[error(transparent)]
    Nn(#[from] NnError),
    #[error(transparent)]
    Expr(#[from] ExprError),
    #[error(transparent)]
    Interval(#[from] IntervalError),
    #[error(transparent)]
    Inclusion(#[from] InclusionError),
}

#[derive(Debug, Error)]
pub enum ReachError {
    #[error("order violation at step {step} (t = {t}): lower bound exceeds upper bound in coordinate {coord}; reduce dt or enable partitioning")]
    OrderViolation { step: usize, t: f64, coord: usize },
    #[error("face substitution produced an inverted box in coordinate {coord}")]
    FaceOrderViolation { coord: usize },
    #[error("embedding bounds diverged (non-finite) at step {step} (t = {t}); the tube is unusable at this configuration")]
    Diverged { step: usize, t: f64 },
    #[error("branch count {count} exceeds the configured cap {cap}")]
    BranchExplosion { count: usize, cap: usize },
    #[error("inconsistent redundant-variable constraint: empty interval after propagation in coordinate {coord}")]
    InconsistentConstraint { coord: usize },
    #[error("tube horizon {tube_t} does not cover the specification horizon {spec_t}")]
    HorizonMismatch { tube_t: f64, spec_t: f64 },
    #[error("invalid integration config: {0}")]
    InvalidConfig(String),
    #[error(transparent)]
    ClosedLoop(#[from] ClosedLoopError),
    #[error(transparent)]
    Expr(#[from] ExprError),
    #[error(transparent)]
    Interval(#[from] IntervalError),
}

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("unknown benchmark '{0}'")]
    UnknownBenchmark(String),
    #[error(transparent)]
    ClosedLoop(#[from] ClosedLoopError),
    #[error(transparent)]
    Expr(#[from] ExprError),
    #[error(transparent)]
    Nn(#[from] NnError),
    #[error(transparent)]
    Interval(#[from] IntervalError),
}
