//! Expression graphs for vector fields `f(x, u, w)`.
//!
//! A graph is a hash-consed DAG over state/input/disturbance variables and
//! constants. It supports pointwise evaluation, natural interval evaluation
//! (yielding natural inclusion functions), and symbolic differentiation with
//! subexpression sharing preserved, so that interval Jacobian bounds lose
//! dependency information consistently with the function itself.

use std::collections::HashMap;
use std::sync::Arc;

use ndarray::Array2;
use serde_json::{json, Value};

use crate::error::ExprError;
use crate::interval::{Interval, IntervalMatrix, IntervalVector};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum VarGroup {
    State,
    Input,
    Disturbance,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum UnaryOp {
    Neg,
    Sq,
    /// Integer power with exponent >= 2, kept elementary so its range and
    /// derivative stay exact (odd powers are monotone).
    Pow(i32),
    Sqrt,
    Exp,
    Log,
    Sin,
    Cos,
    Tan,
    Atan,
    Tanh,
    Sigmoid,
    Abs,
    Relu,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum BinaryOp {
    Add,
    Sub,
    Mul,
    Div,
}

pub type NodeId = u32;

#[derive(Debug, Clone, PartialEq)]
pub enum Node {
    Var(VarGroup, usize),
    Const(f64),
    Unary(UnaryOp, NodeId),
    Binary(BinaryOp, NodeId, NodeId),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
enum NodeKey {
    Var(VarGroup, usize),
    Const(u64),
    Unary(UnaryOp, NodeId),
    Binary(BinaryOp, NodeId, NodeId),
}

/// Builder with hash-consing and exact constant folding.
pub struct GraphBuilder {
    nodes: Vec<Node>,
    cse: HashMap<NodeKey, NodeId>,
    n: usize,
    p: usize,
    q: usize,
}

impl GraphBuilder {
    pub fn new(n: usize, p: usize, q: usize) -> Self {
        Self {
            nodes: Vec::new(),
            cse: HashMap::new(),
            n,
            p,
            q,
        }
    }

    fn intern(&mut self, node: Node) -> NodeId {
        let key = match &node {
            Node::Var(g, i) => NodeKey::Var(*g, *i),
            Node::Const(v) => NodeKey::Const(v.to_bits()),
            Node::Unary(op, a) => NodeKey::Unary(*op, *a),
            Node::Binary(op, a, b) => NodeKey::Binary(*op, *a, *b),
        };
        if let Some(&id) = self.cse.get(&key) {
            return id;
        }
        let id = self.nodes.len() as NodeId;
        self.nodes.push(node);
        self.cse.insert(key, id);
        id
    }

    pub fn x(&mut self, i: usize) -> NodeId {
        assert!(i < self.n, "state index {i} out of range");
        self.intern(Node::Var(VarGroup::State, i))
    }

    pub fn u(&mut self, i: usize) -> NodeId {
        assert!(i < self.p, "input index {i} out of range");
        self.intern(Node::Var(VarGroup::Input, i))
    }

    pub fn w(&mut self, i: usize) -> NodeId {
        assert!(i < self.q, "disturbance index {i} out of range");
        self.intern(Node::Var(VarGroup::Disturbance, i))
    }

    pub fn c(&mut self, v: f64) -> NodeId {
        self.intern(Node::Const(v))
    }

    fn const_of(&self, id: NodeId) -> Option<f64> {
        match self.nodes[id as usize] {
            Node::Const(v) => Some(v),
            _ => None,
        }
    }

    pub fn add(&mut self, a: NodeId, b: NodeId) -> NodeId {
        match (self.const_of(a), self.const_of(b)) {
            (Some(x), Some(y)) => self.c(x + y),
            (Some(x), _) if x == 0.0 => b,
            (_, Some(y)) if y == 0.0 => a,
            _ => self.intern(Node::Binary(BinaryOp::Add, a, b)),
        }
    }

    pub fn sub(&mut self, a: NodeId, b: NodeId) -> NodeId {
        match (self.const_of(a), self.const_of(b)) {
            (Some(x), Some(y)) => self.c(x - y),
            (_, Some(y)) if y == 0.0 => a,
            (Some(x), _) if x == 0.0 => self.neg(b),
            _ => self.intern(Node::Binary(BinaryOp::Sub, a, b)),
        }
    }

    pub fn mul(&mut self, a: NodeId, b: NodeId) -> NodeId {
        match (self.const_of(a), self.const_of(b)) {
            (Some(x), Some(y)) => self.c(x * y),
            (Some(x), _) if x == 0.0 => self.c(0.0),
            (_, Some(y)) if y == 0.0 => self.c(0.0),
            (Some(x), _) if x == 1.0 => b,
            (_, Some(y)) if y == 1.0 => a,
            _ => self.intern(Node::Binary(BinaryOp::Mul, a, b)),
        }
    }

    pub fn div(&mut self, a: NodeId, b: NodeId) -> NodeId {
        match (self.const_of(a), self.const_of(b)) {
            (Some(x), Some(y)) if y != 0.0 => self.c(x / y),
            (_, Some(y)) if y == 1.0 => a,
            _ => self.intern(Node::Binary(BinaryOp::Div, a, b)),
        }
    }

    pub fn neg(&mut self, a: NodeId) -> NodeId {
        match self.nodes[a as usize] {
            Node::Const(v) => self.c(-v),
            Node::Unary(UnaryOp::Neg, inner) => inner,
            _ => self.intern(Node::Unary(UnaryOp::Neg, a)),
        }
    }

    pub fn unary(&mut self, op: UnaryOp, a: NodeId) -> NodeId {
        if op == UnaryOp::Neg {
            return self.neg(a);
        }
        if let Some(v) = self.const_of(a) {
            let folded = match op {
                UnaryOp::Sq => Some(v * v),
                UnaryOp::Exp => Some(v.exp()),
                UnaryOp::Sin => Some(v.sin()),
                UnaryOp::Cos => Some(v.cos()),
                UnaryOp::Atan => Some(v.atan()),
                UnaryOp::Tanh => Some(v.tanh()),
                UnaryOp::Abs => Some(v.abs()),
                UnaryOp::Relu => Some(v.max(0.0)),
                UnaryOp::Sigmoid => Some(crate::interval::sigmoid(v)),
                // sqrt/log/tan keep their domain checks at evaluation time
                _ => None,
            };
            if let Some(f) = folded {
                return self.c(f);
            }
        }
        self.intern(Node::Unary(op, a))
    }

    pub fn sq(&mut self, a: NodeId) -> NodeId {
        self.unary(UnaryOp::Sq, a)
    }

    pub fn sqrt(&mut self, a: NodeId) -> NodeId {
        self.unary(UnaryOp::Sqrt, a)
    }

    pub fn sin(&mut self, a: NodeId) -> NodeId {
        self.unary(UnaryOp::Sin, a)
    }

    pub fn cos(&mut self, a: NodeId) -> NodeId {
        self.unary(UnaryOp::Cos, a)
    }

    pub fn tan(&mut self, a: NodeId) -> NodeId {
        self.unary(UnaryOp::Tan, a)
    }

    pub fn atan(&mut self, a: NodeId) -> NodeId {
        self.unary(UnaryOp::Atan, a)
    }

    pub fn tanh(&mut self, a: NodeId) -> NodeId {
        self.unary(UnaryOp::Tanh, a)
    }

    /// Integer power as an elementary operation with an exact range.
    pub fn pow(&mut self, a: NodeId, k: i32) -> NodeId {
        if k < 0 {
            let one = self.c(1.0);
            let p = self.pow(a, -k);
            return self.div(one, p);
        }
        match k {
            0 => self.c(1.0),
            1 => a,
            2 => self.sq(a),
            _ => {
                if let Some(v) = self.const_of(a) {
                    return self.c(v.powi(k));
                }
                self.intern(Node::Unary(UnaryOp::Pow(k), a))
            }
        }
    }

    pub fn finish(self, outputs: Vec<NodeId>) -> ExprGraph {
        ExprGraph::assemble(self.nodes, outputs, self.n, self.p, self.q)
    }
}

/// Immutable expression DAG with one node list shared between sibling graphs
/// (a Jacobian graph reuses its primal's arena).
#[derive(Debug, Clone)]
pub struct ExprGraph {
    nodes: Arc<Vec<Node>>,
    outputs: Vec<NodeId>,
    n: usize,
    p: usize,
    q: usize,
    /// Per-output reachable node ids in ascending (topological) order.
    out_subgraphs: Arc<Vec<Vec<NodeId>>>,
    /// Union of the output subgraphs, ascending; evaluation walks only
    /// these nodes (sibling graphs share one arena).
    active: Arc<Vec<NodeId>>,
}

/// Reusable evaluation buffers, caller-owned for re-entrancy.
#[derive(Debug, Default, Clone)]
pub struct EvalScratch {
    ivals: Vec<Interval>,
    fvals: Vec<f64>,
}

/// Interval bounds on the three Jacobian blocks of `f` over a product box.
#[derive(Debug, Clone)]
pub struct JacobianBounds {
    pub jx: IntervalMatrix,
    pub ju: IntervalMatrix,
    pub jw: IntervalMatrix,
}

/// Symbolic Jacobians of a graph, sharing the primal arena.
#[derive(Debug, Clone)]
pub struct Jacobians {
    /// Outputs are the partial derivatives flattened row-major.
    pub wrt_x: ExprGraph,
    pub wrt_u: ExprGraph,
    pub wrt_w: ExprGraph,
    n_out: usize,
}

impl ExprGraph {
    fn assemble(nodes: Vec<Node>, outputs: Vec<NodeId>, n: usize, p: usize, q: usize) -> Self {
        let subgraphs: Vec<Vec<NodeId>> = outputs
            .iter()
            .map(|&o| reachable_sorted(&nodes, o))
            .collect();
        let active = union_sorted(&subgraphs, nodes.len());
        Self {
            nodes: Arc::new(nodes),
            outputs,
            n,
            p,
            q,
            out_subgraphs: Arc::new(subgraphs),
            active: Arc::new(active),
        }
    }

    fn with_outputs(&self, outputs: Vec<NodeId>) -> Self {
        let subgraphs: Vec<Vec<NodeId>> = outputs
            .iter()
            .map(|&o| reachable_sorted(&self.nodes, o))
            .collect();
        let active = union_sorted(&subgraphs, self.nodes.len());
        Self {
            nodes: Arc::clone(&self.nodes),
            outputs,
            n: self.n,
            p: self.p,
            q: self.q,
            out_subgraphs: Arc::new(subgraphs),
            active: Arc::new(active),
        }
    }

    pub fn dims(&self) -> (usize, usize, usize) {
        (self.n, self.p, self.q)
    }

    pub fn n_outputs(&self) -> usize {
        self.outputs.len()
    }

    pub fn node_count(&self) -> usize {
        self.nodes.len()
    }

    fn check_dims(
        &self,
        x: &IntervalVector,
        u: &IntervalVector,
        w: &IntervalVector,
    ) -> Result<(), ExprError> {
        if x.dim() != self.n {
            return Err(ExprError::DimensionMismatch {
                expected: self.n,
                got: x.dim(),
            });
        }
        if u.dim() != self.p {
            return Err(ExprError::DimensionMismatch {
                expected: self.p,
                got: u.dim(),
            });
        }
        if w.dim() != self.q {
            return Err(ExprError::DimensionMismatch {
                expected: self.q,
                got: w.dim(),
            });
        }
        Ok(())
    }

    fn eval_node_interval(
        &self,
        id: NodeId,
        vals: &[Interval],
        x: &IntervalVector,
        u: &IntervalVector,
        w: &IntervalVector,
    ) -> Result<Interval, ExprError> {
        Ok(match &self.nodes[id as usize] {
            Node::Var(VarGroup::State, i) => x[*i],
            Node::Var(VarGroup::Input, i) => u[*i],
            Node::Var(VarGroup::Disturbance, i) => w[*i],
            Node::Const(v) => Interval::point(*v),
            Node::Unary(op, a) => {
                let a = vals[*a as usize];
                match op {
                    UnaryOp::Neg => a.neg(),
                    UnaryOp::Sq => a.sq(),
                    UnaryOp::Pow(k) => a.powi(*k),
                    UnaryOp::Sqrt => a.sqrt()?,
                    UnaryOp::Exp => a.exp(),
                    UnaryOp::Log => a.ln()?,
                    UnaryOp::Sin => a.sin(),
                    UnaryOp::Cos => a.cos(),
                    UnaryOp::Tan => a.tan()?,
                    UnaryOp::Atan => a.atan(),
                    UnaryOp::Tanh => a.tanh(),
                    UnaryOp::Sigmoid => a.sigmoid(),
                    UnaryOp::Abs => a.abs(),
                    UnaryOp::Relu => a.relu(),
                }
            }
            Node::Binary(op, a, b) => {
                let a = vals[*a as usize];
                let b = vals[*b as usize];
                match op {
                    BinaryOp::Add => a.add(&b),
                    BinaryOp::Sub => a.sub(&b),
                    BinaryOp::Mul => a.mul(&b),
                    BinaryOp::Div => a.div(&b)?,
                }
            }
        })
    }

    /// Natural interval evaluation of all outputs over the product box.
    pub fn eval_interval(
        &self,
        x: &IntervalVector,
        u: &IntervalVector,
        w: &IntervalVector,
    ) -> Result<IntervalVector, ExprError> {
        let mut scratch = EvalScratch::default();
        self.eval_interval_with(x, u, w, &mut scratch)
    }

    pub fn eval_interval_with(
        &self,
        x: &IntervalVector,
        u: &IntervalVector,
        w: &IntervalVector,
        scratch: &mut EvalScratch,
    ) -> Result<IntervalVector, ExprError> {
        self.check_dims(x, u, w)?;
        scratch
            .ivals
            .resize(self.nodes.len(), Interval::point(0.0));
        for &id in self.active.iter() {
            let v = self.eval_node_interval(id, &scratch.ivals, x, u, w)?;
            scratch.ivals[id as usize] = v;
        }
        Ok(IntervalVector::new(
            self.outputs
                .iter()
                .map(|&o| scratch.ivals[o as usize])
                .collect(),
        ))
    }

    /// Evaluates a single output's subgraph only.
    pub fn eval_output_interval(
        &self,
        out: usize,
        x: &IntervalVector,
        u: &IntervalVector,
        w: &IntervalVector,
        scratch: &mut EvalScratch,
    ) -> Result<Interval, ExprError> {
        self.check_dims(x, u, w)?;
        scratch
            .ivals
            .resize(self.nodes.len(), Interval::point(0.0));
        for &id in &self.out_subgraphs[out] {
            let v = self.eval_node_interval(id, &scratch.ivals, x, u, w)?;
            scratch.ivals[id as usize] = v;
        }
        Ok(scratch.ivals[self.outputs[out] as usize])
    }

    pub fn eval_point(
        &self,
        x: &[f64],
        u: &[f64],
        w: &[f64],
    ) -> Result<Vec<f64>, ExprError> {
        let mut scratch = EvalScratch::default();
        self.eval_point_with(x, u, w, &mut scratch)
    }

    pub fn eval_point_with(
        &self,
        x: &[f64],
        u: &[f64],
        w: &[f64],
        scratch: &mut EvalScratch,
    ) -> Result<Vec<f64>, ExprError> {
        if x.len() != self.n || u.len() != self.p || w.len() != self.q {
            return Err(ExprError::DimensionMismatch {
                expected: self.n + self.p + self.q,
                got: x.len() + u.len() + w.len(),
            });
        }
        scratch.fvals.resize(self.nodes.len(), 0.0);
        for &id in self.active.iter() {
            scratch.fvals[id as usize] =
                self.eval_node_point(id, &scratch.fvals, x, u, w)?;
        }
        Ok(self
            .outputs
            .iter()
            .map(|&o| scratch.fvals[o as usize])
            .collect())
    }

    pub fn eval_output_point(
        &self,
        out: usize,
        x: &[f64],
        u: &[f64],
        w: &[f64],
        scratch: &mut EvalScratch,
    ) -> Result<f64, ExprError> {
        scratch.fvals.resize(self.nodes.len(), 0.0);
        for &id in &self.out_subgraphs[out] {
            scratch.fvals[id as usize] = self.eval_node_point(id, &scratch.fvals, x, u, w)?;
        }
        Ok(scratch.fvals[self.outputs[out] as usize])
    }

    fn eval_node_point(
        &self,
        id: NodeId,
        vals: &[f64],
        x: &[f64],
        u: &[f64],
        w: &[f64],
    ) -> Result<f64, ExprError> {
        Ok(match &self.nodes[id as usize] {
            Node::Var(VarGroup::State, i) => x[*i],
            Node::Var(VarGroup::Input, i) => u[*i],
            Node::Var(VarGroup::Disturbance, i) => w[*i],
            Node::Const(v) => *v,
            Node::Unary(op, a) => {
                let a = vals[*a as usize];
                match op {
                    UnaryOp::Neg => -a,
                    UnaryOp::Sq => a * a,
                    UnaryOp::Pow(k) => a.powi(*k),
                    UnaryOp::Sqrt => {
                        if a < 0.0 {
                            return Err(ExprError::Interval(
                                crate::error::IntervalError::DomainError {
                                    op: "sqrt",
                                    lo: a,
                                    hi: a,
                                },
                            ));
                        }
                        a.sqrt()
                    }
                    UnaryOp::Exp => a.exp(),
                    UnaryOp::Log => {
                        if a <= 0.0 {
                            return Err(ExprError::Interval(
                                crate::error::IntervalError::DomainError {
                                    op: "log",
                                    lo: a,
                                    hi: a,
                                },
                            ));
                        }
                        a.ln()
                    }
                    UnaryOp::Sin => a.sin(),
                    UnaryOp::Cos => a.cos(),
                    UnaryOp::Tan => a.tan(),
                    UnaryOp::Atan => a.atan(),
                    UnaryOp::Tanh => a.tanh(),
                    UnaryOp::Sigmoid => crate::interval::sigmoid(a),
                    UnaryOp::Abs => a.abs(),
                    UnaryOp::Relu => a.max(0.0),
                }
            }
            Node::Binary(op, a, b) => {
                let a = vals[*a as usize];
                let b = vals[*b as usize];
                match op {
                    BinaryOp::Add => a + b,
                    BinaryOp::Sub => a - b,
                    BinaryOp::Mul => a * b,
                    BinaryOp::Div => a / b,
                }
            }
        })
    }

    /// Symbolic Jacobians with respect to all three variable groups.
    ///
    /// Differentiation extends a copy of the arena, so common subexpressions
    /// stay shared between the function and its derivatives.
    pub fn jacobians(&self) -> Result<Jacobians, ExprError> {
        let mut d = Differentiator {
            builder: GraphBuilder {
                nodes: self.nodes.as_ref().clone(),
                cse: rebuild_cse(&self.nodes),
                n: self.n,
                p: self.p,
                q: self.q,
            },
            cache: HashMap::new(),
        };
        let mut outs_x = Vec::with_capacity(self.outputs.len() * self.n);
        let mut outs_u = Vec::with_capacity(self.outputs.len() * self.p);
        let mut outs_w = Vec::with_capacity(self.outputs.len() * self.q);
        for &o in &self.outputs {
            for j in 0..self.n {
                outs_x.push(d.diff(o, VarGroup::State, j)?);
            }
        }
        for &o in &self.outputs {
            for j in 0..self.p {
                outs_u.push(d.diff(o, VarGroup::Input, j)?);
            }
        }
        for &o in &self.outputs {
            for j in 0..self.q {
                outs_w.push(d.diff(o, VarGroup::Disturbance, j)?);
            }
        }
        let arena = Arc::new(d.builder.nodes);
        let mk = |outputs: Vec<NodeId>| {
            let subgraphs: Vec<Vec<NodeId>> = outputs
                .iter()
                .map(|&o| reachable_sorted(&arena, o))
                .collect();
            let active = union_sorted(&subgraphs, arena.len());
            ExprGraph {
                nodes: Arc::clone(&arena),
                outputs,
                n: self.n,
                p: self.p,
                q: self.q,
                out_subgraphs: Arc::new(subgraphs),
                active: Arc::new(active),
            }
        };
        Ok(Jacobians {
            wrt_x: mk(outs_x),
            wrt_u: mk(outs_u),
            wrt_w: mk(outs_w),
            n_out: self.outputs.len(),
        })
    }

    /// Interval Jacobian bounds by natural evaluation of the symbolic Jacobian.
    pub fn jacobian_bounds(
        &self,
        x: &IntervalVector,
        u: &IntervalVector,
        w: &IntervalVector,
    ) -> Result<JacobianBounds, ExprError> {
        self.jacobians()?.bounds(x, u, w)
    }

    /// Restriction of the graph to a subset of outputs.
    pub fn select_outputs(&self, idx: &[usize]) -> ExprGraph {
        self.with_outputs(idx.iter().map(|&i| self.outputs[i]).collect())
    }
}

impl Jacobians {
    pub fn n_out(&self) -> usize {
        self.n_out
    }

    /// Evaluates all three blocks over the product box.
    pub fn bounds(
        &self,
        x: &IntervalVector,
        u: &IntervalVector,
        w: &IntervalVector,
    ) -> Result<JacobianBounds, ExprError> {
        let mut scratch = EvalScratch::default();
        self.bounds_with(x, u, w, &mut scratch)
    }

    pub fn bounds_with(
        &self,
        x: &IntervalVector,
        u: &IntervalVector,
        w: &IntervalVector,
        scratch: &mut EvalScratch,
    ) -> Result<JacobianBounds, ExprError> {
        let (n, p, q) = self.wrt_x.dims();
        let jx = self.block(&self.wrt_x, n, x, u, w, scratch)?;
        let ju = self.block(&self.wrt_u, p, x, u, w, scratch)?;
        let jw = self.block(&self.wrt_w, q, x, u, w, scratch)?;
        Ok(JacobianBounds { jx, ju, jw })
    }

    fn block(
        &self,
        g: &ExprGraph,
        cols: usize,
        x: &IntervalVector,
        u: &IntervalVector,
        w: &IntervalVector,
        scratch: &mut EvalScratch,
    ) -> Result<IntervalMatrix, ExprError> {
        let vals = g.eval_interval_with(x, u, w, scratch)?;
        let mut lo = Array2::zeros((self.n_out, cols));
        let mut hi = Array2::zeros((self.n_out, cols));
        for i in 0..self.n_out {
            for j in 0..cols {
                let v = vals[i * cols + j];
                lo[(i, j)] = v.lo();
                hi[(i, j)] = v.hi();
            }
        }
        Ok(IntervalMatrix { lo, hi })
    }

    /// Single entry `(i, j)` of one Jacobian block over the given boxes.
    #[allow(clippy::too_many_arguments)]
    pub fn entry_bounds(
        &self,
        group: VarGroup,
        i: usize,
        j: usize,
        x: &IntervalVector,
        u: &IntervalVector,
        w: &IntervalVector,
        scratch: &mut EvalScratch,
    ) -> Result<Interval, ExprError> {
        let (n, p, q) = self.wrt_x.dims();
        let (g, cols) = match group {
            VarGroup::State => (&self.wrt_x, n),
            VarGroup::Input => (&self.wrt_u, p),
            VarGroup::Disturbance => (&self.wrt_w, q),
        };
        g.eval_output_interval(i * cols + j, x, u, w, scratch)
    }

    /// Column `j` of one Jacobian block over the given boxes.
    pub fn column_bounds(
        &self,
        group: VarGroup,
        j: usize,
        x: &IntervalVector,
        u: &IntervalVector,
        w: &IntervalVector,
        scratch: &mut EvalScratch,
    ) -> Result<Vec<Interval>, ExprError> {
        let (n, p, q) = self.wrt_x.dims();
        let (g, cols) = match group {
            VarGroup::State => (&self.wrt_x, n),
            VarGroup::Input => (&self.wrt_u, p),
            VarGroup::Disturbance => (&self.wrt_w, q),
        };
        (0..self.n_out)
            .map(|i| g.eval_output_interval(i * cols + j, x, u, w, scratch))
            .collect()
    }
}

fn rebuild_cse(nodes: &[Node]) -> HashMap<NodeKey, NodeId> {
    let mut map = HashMap::with_capacity(nodes.len());
    for (id, node) in nodes.iter().enumerate() {
        let key = match node {
            Node::Var(g, i) => NodeKey::Var(*g, *i),
            Node::Const(v) => NodeKey::Const(v.to_bits()),
            Node::Unary(op, a) => NodeKey::Unary(*op, *a),
            Node::Binary(op, a, b) => NodeKey::Binary(*op, *a, *b),
        };
        map.entry(key).or_insert(id as NodeId);
    }
    map
}

fn union_sorted(subgraphs: &[Vec<NodeId>], total: usize) -> Vec<NodeId> {
    let mut seen = vec![false; total];
    for sg in subgraphs {
        for &id in sg {
            seen[id as usize] = true;
        }
    }
    (0..total as NodeId).filter(|&i| seen[i as usize]).collect()
}

fn reachable_sorted(nodes: &[Node], root: NodeId) -> Vec<NodeId> {
    let mut seen = vec![false; nodes.len()];
    let mut stack = vec![root];
    while let Some(id) = stack.pop() {
        if seen[id as usize] {
            continue;
        }
        seen[id as usize] = true;
        match &nodes[id as usize] {
            Node::Unary(_, a) => stack.push(*a),
            Node::Binary(_, a, b) => {
                stack.push(*a);
                stack.push(*b);
            }
            _ => {}
        }
    }
    (0..nodes.len() as NodeId)
        .filter(|&i| seen[i as usize])
        .collect()
}

struct Differentiator {
    builder: GraphBuilder,
    cache: HashMap<(NodeId, VarGroup, usize), NodeId>,
}

impl Differentiator {
    fn diff(&mut self, id: NodeId, group: VarGroup, j: usize) -> Result<NodeId, ExprError> {
        if let Some(&d) = self.cache.get(&(id, group, j)) {
            return Ok(d);
        }
        let node = self.builder.nodes[id as usize].clone();
        let out = match node {
            Node::Var(g, i) => {
                if g == group && i == j {
                    self.builder.c(1.0)
                } else {
                    self.builder.c(0.0)
                }
            }
            Node::Const(_) => self.builder.c(0.0),
            Node::Unary(op, a) => {
                let da = self.diff(a, group, j)?;
                match op {
                    UnaryOp::Neg => self.builder.neg(da),
                    UnaryOp::Sq => {
                        let two = self.builder.c(2.0);
                        let ta = self.builder.mul(two, a);
                        self.builder.mul(ta, da)
                    }
                    UnaryOp::Pow(k) => {
                        let kk = self.builder.c(k as f64);
                        let pm1 = self.builder.pow(a, k - 1);
                        let t = self.builder.mul(kk, pm1);
                        self.builder.mul(t, da)
                    }
                    UnaryOp::Sqrt => {
                        let s = self.builder.sqrt(a);
                        let two = self.builder.c(2.0);
                        let den = self.builder.mul(two, s);
                        self.builder.div(da, den)
                    }
                    UnaryOp::Exp => {
                        let e = self.builder.unary(UnaryOp::Exp, a);
                        self.builder.mul(e, da)
                    }
                    UnaryOp::Log => self.builder.div(da, a),
                    UnaryOp::Sin => {
                        let c = self.builder.cos(a);
                        self.builder.mul(c, da)
                    }
                    UnaryOp::Cos => {
                        let s = self.builder.sin(a);
                        let ns = self.builder.neg(s);
                        self.builder.mul(ns, da)
                    }
                    UnaryOp::Tan => {
                        let t = self.builder.tan(a);
                        let t2 = self.builder.sq(t);
                        let one = self.builder.c(1.0);
                        let sec2 = self.builder.add(one, t2);
                        self.builder.mul(sec2, da)
                    }
                    UnaryOp::Atan => {
                        let a2 = self.builder.sq(a);
                        let one = self.builder.c(1.0);
                        let den = self.builder.add(one, a2);
                        self.builder.div(da, den)
                    }
                    UnaryOp::Tanh => {
                        let t = self.builder.tanh(a);
                        let t2 = self.builder.sq(t);
                        let one = self.builder.c(1.0);
                        let d = self.builder.sub(one, t2);
                        self.builder.mul(d, da)
                    }
                    UnaryOp::Sigmoid => {
                        let s = self.builder.unary(UnaryOp::Sigmoid, a);
                        let one = self.builder.c(1.0);
                        let oms = self.builder.sub(one, s);
                        let ds = self.builder.mul(s, oms);
                        self.builder.mul(ds, da)
                    }
                    UnaryOp::Abs => {
                        return Err(ExprError::NonDifferentiableOp { op: "abs" })
                    }
                    UnaryOp::Relu => {
                        return Err(ExprError::NonDifferentiableOp { op: "relu" })
                    }
                }
            }
            Node::Binary(op, a, b) => {
                let da = self.diff(a, group, j)?;
                let db = self.diff(b, group, j)?;
                match op {
                    BinaryOp::Add => self.builder.add(da, db),
                    BinaryOp::Sub => self.builder.sub(da, db),
                    BinaryOp::Mul => {
                        let t1 = self.builder.mul(da, b);
                        let t2 = self.builder.mul(a, db);
                        self.builder.add(t1, t2)
                    }
                    BinaryOp::Div => {
                        let t1 = self.builder.mul(da, b);
                        let t2 = self.builder.mul(a, db);
                        let num = self.builder.sub(t1, t2);
                        let den = self.builder.sq(b);
                        self.builder.div(num, den)
                    }
                }
            }
        };
        self.cache.insert((id, group, j), out);
        Ok(out)
    }
}

/// A parsed system document: a vector field plus variable names.
#[derive(Debug, Clone)]
pub struct SystemDoc {
    pub graph: ExprGraph,
    pub states: Vec<String>,
    pub inputs: Vec<String>,
    pub disturbances: Vec<String>,
}

impl SystemDoc {
    /// Parses the JSON system grammar:
    /// `{"n":…, "p":…, "q":…, "states":[…], "inputs":[…], "disturbances":[…], "f":[node…]}`
    /// with `node = [op, child…] | ["var", name] | ["const", number]`.
    pub fn parse(doc: &Value) -> Result<Self, ExprError> {
        let obj = doc.as_object().ok_or_else(|| ExprError::ParseError {
            path: String::new(),
            message: "system document must be a JSON object".into(),
        })?;
        let dim = |key: &str| -> Result<usize, ExprError> {
            obj.get(key)
                .and_then(Value::as_u64)
                .map(|v| v as usize)
                .ok_or_else(|| ExprError::ParseError {
                    path: key.into(),
                    message: format!("missing or non-integer '{key}'"),
                })
        };
        let n = dim("n")?;
        let p = dim("p")?;
        let q = dim("q")?;
        let names = |key: &str, len: usize| -> Result<Vec<String>, ExprError> {
            match obj.get(key) {
                None if len == 0 => Ok(Vec::new()),
                Some(Value::Array(a)) => {
                    if a.len() != len {
                        return Err(ExprError::ParseError {
                            path: key.into(),
                            message: format!("expected {len} names, got {}", a.len()),
                        });
                    }
                    a.iter()
                        .map(|v| {
                            v.as_str().map(str::to_owned).ok_or_else(|| {
                                ExprError::ParseError {
                                    path: key.into(),
                                    message: "names must be strings".into(),
                                }
                            })
                        })
                        .collect()
                }
                _ => Err(ExprError::ParseError {
                    path: key.into(),
                    message: "missing name list".into(),
                }),
            }
        };
        let states = names("states", n)?;
        let inputs = names("inputs", p)?;
        let disturbances = names("disturbances", q)?;

        let mut vars = HashMap::new();
        for (i, s) in states.iter().enumerate() {
            vars.insert(s.clone(), (VarGroup::State, i));
        }
        for (i, s) in inputs.iter().enumerate() {
            vars.insert(s.clone(), (VarGroup::Input, i));
        }
        for (i, s) in disturbances.iter().enumerate() {
            vars.insert(s.clone(), (VarGroup::Disturbance, i));
        }

        let f = obj
            .get("f")
            .and_then(Value::as_array)
            .ok_or_else(|| ExprError::ParseError {
                path: "f".into(),
                message: "missing output list 'f'".into(),
            })?;
        let mut b = GraphBuilder::new(n, p, q);
        let mut outputs = Vec::with_capacity(f.len());
        for (i, node) in f.iter().enumerate() {
            outputs.push(parse_node(&mut b, node, &vars, &format!("f[{i}]"))?);
        }
        Ok(Self {
            graph: b.finish(outputs),
            states,
            inputs,
            disturbances,
        })
    }

    /// Serializes back to the JSON grammar; shared subgraphs are expanded.
    pub fn to_json(&self) -> Value {
        let (n, p, q) = self.graph.dims();
        let f: Vec<Value> = (0..self.graph.n_outputs())
            .map(|i| node_to_json(&self.graph, self.graph.outputs[i], self))
            .collect();
        json!({
            "n": n, "p": p, "q": q,
            "states": self.states,
            "inputs": self.inputs,
            "disturbances": self.disturbances,
            "f": f,
        })
    }
}

fn parse_node(
    b: &mut GraphBuilder,
    v: &Value,
    vars: &HashMap<String, (VarGroup, usize)>,
    path: &str,
) -> Result<NodeId, ExprError> {
    let arr = v.as_array().ok_or_else(|| ExprError::ParseError {
        path: path.into(),
        message: "expression node must be an array".into(),
    })?;
    if arr.is_empty() {
        return Err(ExprError::ParseError {
            path: path.into(),
            message: "empty expression node".into(),
        });
    }
    let op = arr[0].as_str().ok_or_else(|| ExprError::ParseError {
        path: path.into(),
        message: "operation name must be a string".into(),
    })?;
    let arity = |expected: usize| -> Result<(), ExprError> {
        if arr.len() - 1 != expected {
            Err(ExprError::ArityError {
                op: op.into(),
                expected,
                got: arr.len() - 1,
                path: path.into(),
            })
        } else {
            Ok(())
        }
    };
    match op {
        "var" => {
            arity(1)?;
            let name = arr[1].as_str().ok_or_else(|| ExprError::ParseError {
                path: path.into(),
                message: "variable name must be a string".into(),
            })?;
            let &(g, i) = vars.get(name).ok_or_else(|| ExprError::ParseError {
                path: path.into(),
                message: format!("unknown variable '{name}'"),
            })?;
            Ok(match g {
                VarGroup::State => b.x(i),
                VarGroup::Input => b.u(i),
                VarGroup::Disturbance => b.w(i),
            })
        }
        "const" => {
            arity(1)?;
            let c = arr[1].as_f64().ok_or_else(|| ExprError::ParseError {
                path: path.into(),
                message: "constant must be a number".into(),
            })?;
            Ok(b.c(c))
        }
        "pow" => {
            arity(2)?;
            let base = parse_node(b, &arr[1], vars, &format!("{path}.0"))?;
            let exp_node = arr[2].as_array();
            let k = exp_node
                .filter(|a| a.len() == 2 && a[0].as_str() == Some("const"))
                .and_then(|a| a[1].as_f64())
                .ok_or_else(|| ExprError::ParseError {
                    path: format!("{path}.1"),
                    message: "pow exponent must be [\"const\", integer]".into(),
                })?;
            if k.fract() != 0.0 {
                return Err(ExprError::ParseError {
                    path: format!("{path}.1"),
                    message: format!("pow exponent must be an integer, got {k}"),
                });
            }
            Ok(b.pow(base, k as i32))
        }
        "add" | "sub" | "mul" | "div" => {
            arity(2)?;
            let a = parse_node(b, &arr[1], vars, &format!("{path}.0"))?;
            let c = parse_node(b, &arr[2], vars, &format!("{path}.1"))?;
            Ok(match op {
                "add" => b.add(a, c),
                "sub" => b.sub(a, c),
                "mul" => b.mul(a, c),
                _ => b.div(a, c),
            })
        }
        "neg" | "sq" | "sqrt" | "exp" | "log" | "sin" | "cos" | "tan" | "atan" | "arctan"
        | "tanh" | "sigmoid" | "abs" | "relu" => {
            arity(1)?;
            let a = parse_node(b, &arr[1], vars, &format!("{path}.0"))?;
            let uop = match op {
                "neg" => UnaryOp::Neg,
                "sq" => UnaryOp::Sq,
                "sqrt" => UnaryOp::Sqrt,
                "exp" => UnaryOp::Exp,
                "log" => UnaryOp::Log,
                "sin" => UnaryOp::Sin,
                "cos" => UnaryOp::Cos,
                "tan" => UnaryOp::Tan,
                "atan" | "arctan" => UnaryOp::Atan,
                "tanh" => UnaryOp::Tanh,
                "sigmoid" => UnaryOp::Sigmoid,
                "abs" => UnaryOp::Abs,
                "relu" => UnaryOp::Relu,
                _ => unreachable!(),
            };
            Ok(b.unary(uop, a))
        }
        other => Err(ExprError::UnknownOp {
            op: other.into(),
            path: path.into(),
        }),
    }
}

fn node_to_json(g: &ExprGraph, id: NodeId, doc: &SystemDoc) -> Value {
    match &g.nodes[id as usize] {
        Node::Var(VarGroup::State, i) => json!(["var", doc.states[*i]]),
        Node::Var(VarGroup::Input, i) => json!(["var", doc.inputs[*i]]),
        Node::Var(VarGroup::Disturbance, i) => json!(["var", doc.disturbances[*i]]),
        Node::Const(v) => json!(["const", v]),
        Node::Unary(UnaryOp::Pow(k), a) => {
            json!(["pow", node_to_json(g, *a, doc), ["const", k]])
        }
        Node::Unary(op, a) => {
            let name = match op {
                UnaryOp::Neg => "neg",
                UnaryOp::Sq => "sq",
                UnaryOp::Pow(_) => unreachable!("handled above"),
                UnaryOp::Sqrt => "sqrt",
                UnaryOp::Exp => "exp",
                UnaryOp::Log => "log",
                UnaryOp::Sin => "sin",
                UnaryOp::Cos => "cos",
                UnaryOp::Tan => "tan",
                UnaryOp::Atan => "atan",
                UnaryOp::Tanh => "tanh",
                UnaryOp::Sigmoid => "sigmoid",
                UnaryOp::Abs => "abs",
                UnaryOp::Relu => "relu",
            };
            json!([name, node_to_json(g, *a, doc)])
        }
        Node::Binary(op, a, b) => {
            let name = match op {
                BinaryOp::Add => "add",
                BinaryOp::Sub => "sub",
                BinaryOp::Mul => "mul",
                BinaryOp::Div => "div",
            };
            json!([name, node_to_json(g, *a, doc), node_to_json(g, *b, doc)])
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::interval::IntervalVector;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use serde_json::json;

    fn box1(lo: f64, hi: f64) -> IntervalVector {
        IntervalVector::from_bounds(&[lo], &[hi]).unwrap()
    }

    fn none() -> IntervalVector {
        IntervalVector::empty()
    }

    /// Table 1 example function: [(x1+x2)^2, x1+x2+2*x1*x2].
    pub(crate) fn table1_graph() -> ExprGraph {
        let mut b = GraphBuilder::new(2, 0, 0);
        let x1 = b.x(0);
        let x2 = b.x(1);
        let s = b.add(x1, x2);
        let g1 = b.sq(s);
        let x1x2 = b.mul(x1, x2);
        let two = b.c(2.0);
        let t = b.mul(two, x1x2);
        let g2 = b.add(s, t);
        b.finish(vec![g1, g2])
    }

    #[test]
    fn parse_bicycle_term() {
        let doc = json!({
            "n": 2, "p": 0, "q": 0,
            "states": ["v", "phi"],
            "f": [["mul", ["var", "v"], ["cos", ["add", ["var", "phi"], ["var", "phi"]]]]]
        });
        let sys = SystemDoc::parse(&doc).unwrap();
        let out = sys.graph.eval_point(&[2.0, 0.25], &[], &[]).unwrap();
        assert!((out[0] - 2.0 * (0.5f64).cos()).abs() < 1e-15);
    }

    #[test]
    fn parse_constant_zero() {
        let doc = json!({
            "n": 0, "p": 0, "q": 0,
            "f": [["const", 0]]
        });
        let sys = SystemDoc::parse(&doc).unwrap();
        assert_eq!(sys.graph.eval_point(&[], &[], &[]).unwrap(), vec![0.0]);
    }

    #[test]
    fn parse_unknown_op() {
        let doc = json!({
            "n": 1, "p": 0, "q": 0,
            "states": ["x"],
            "f": [["foo", ["var", "x"]]]
        });
        assert!(matches!(
            SystemDoc::parse(&doc),
            Err(ExprError::UnknownOp { .. })
        ));
    }

    #[test]
    fn parse_arity_error() {
        let doc = json!({
            "n": 1, "p": 0, "q": 0,
            "states": ["x"],
            "f": [["add", ["var", "x"]]]
        });
        assert!(matches!(
            SystemDoc::parse(&doc),
            Err(ExprError::ArityError { .. })
        ));
    }

    #[test]
    fn round_trip_serialization() {
        let doc = json!({
            "n": 2, "p": 1, "q": 0,
            "states": ["a", "b"],
            "inputs": ["u"],
            "f": [
                ["add", ["sq", ["add", ["var", "a"], ["var", "b"]]], ["var", "u"]],
                ["mul", ["var", "a"], ["sin", ["var", "b"]]]
            ]
        });
        let sys = SystemDoc::parse(&doc).unwrap();
        let re = SystemDoc::parse(&sys.to_json()).unwrap();
        let x = IntervalVector::from_bounds(&[-1.0, 0.5], &[2.0, 1.5]).unwrap();
        let u = box1(-0.5, 0.5);
        let a = sys.graph.eval_interval(&x, &u, &none()).unwrap();
        let b = re.graph.eval_interval(&x, &u, &none()).unwrap();
        assert_eq!(a, b);
        assert_eq!(sys.graph.node_count(), re.graph.node_count());
    }

    #[test]
    fn table1_natural_evaluation() {
        let g = table1_graph();
        let x = IntervalVector::from_bounds(&[-0.1, -0.1], &[0.1, 0.1]).unwrap();
        let out = g.eval_interval(&x, &none(), &none()).unwrap();
        assert!((out[0].lo() - 0.0).abs() < 1e-12);
        assert!((out[0].hi() - 0.04).abs() < 1e-12);
        assert!((out[1].lo() + 0.22).abs() < 1e-12);
        assert!((out[1].hi() - 0.22).abs() < 1e-12);
    }

    #[test]
    fn thin_on_degenerate_boxes() {
        let g = table1_graph();
        let x = IntervalVector::from_point(&[0.07, -0.03]);
        let out = g.eval_interval(&x, &none(), &none()).unwrap();
        let pt = g.eval_point(&[0.07, -0.03], &[], &[]).unwrap();
        for i in 0..2 {
            assert!((out[i].lo() - pt[i]).abs() < 1e-15);
            assert!((out[i].hi() - pt[i]).abs() < 1e-15);
        }
    }

    #[test]
    fn fig1_function_on_unit_box() {
        // g = [(x1+x2)^2, 4*sin((x1-x2)/4)] on [-1,1]^2
        let mut b = GraphBuilder::new(2, 0, 0);
        let x1 = b.x(0);
        let x2 = b.x(1);
        let s = b.add(x1, x2);
        let g1 = b.sq(s);
        let d = b.sub(x1, x2);
        let four = b.c(4.0);
        let quarter = b.div(d, four);
        let sn = b.sin(quarter);
        let g2 = b.mul(four, sn);
        let g = b.finish(vec![g1, g2]);
        let x = IntervalVector::from_bounds(&[-1.0, -1.0], &[1.0, 1.0]).unwrap();
        let out = g.eval_interval(&x, &none(), &none()).unwrap();
        assert!((out[0].lo() - 0.0).abs() < 1e-12 && (out[0].hi() - 4.0).abs() < 1e-12);
        let m = 4.0 * 0.5f64.sin();
        assert!((out[1].lo() + m).abs() < 1e-12 && (out[1].hi() - m).abs() < 1e-12);
    }

    #[test]
    fn product_rule_jacobian() {
        let mut b = GraphBuilder::new(2, 0, 0);
        let x1 = b.x(0);
        let x2 = b.x(1);
        let m = b.mul(x1, x2);
        let g = b.finish(vec![m]);
        let jac = g.jacobians().unwrap();
        let out = jac
            .wrt_x
            .eval_point(&[3.0, 5.0], &[], &[])
            .unwrap();
        assert_eq!(out, vec![5.0, 3.0]);
    }

    #[test]
    fn sin_jacobian() {
        let mut b = GraphBuilder::new(1, 0, 0);
        let x = b.x(0);
        let s = b.sin(x);
        let g = b.finish(vec![s]);
        let jac = g.jacobians().unwrap();
        let out = jac.wrt_x.eval_point(&[0.3], &[], &[]).unwrap();
        assert!((out[0] - 0.3f64.cos()).abs() < 1e-15);
    }

    #[test]
    fn relu_is_not_differentiable() {
        let mut b = GraphBuilder::new(1, 0, 0);
        let x = b.x(0);
        let r = b.unary(UnaryOp::Relu, x);
        let g = b.finish(vec![r]);
        assert!(matches!(
            g.jacobians(),
            Err(ExprError::NonDifferentiableOp { op: "relu" })
        ));
    }

    #[test]
    fn linear_graph_has_degenerate_jacobian() {
        // f = 2x - 3u + w
        let mut b = GraphBuilder::new(1, 1, 1);
        let x = b.x(0);
        let u = b.u(0);
        let w = b.w(0);
        let two = b.c(2.0);
        let three = b.c(3.0);
        let tx = b.mul(two, x);
        let tu = b.mul(three, u);
        let s = b.sub(tx, tu);
        let f = b.add(s, w);
        let g = b.finish(vec![f]);
        let jb = g
            .jacobian_bounds(&box1(-1.0, 1.0), &box1(-1.0, 1.0), &box1(-1.0, 1.0))
            .unwrap();
        assert_eq!(jb.jx.get(0, 0).lo(), 2.0);
        assert_eq!(jb.jx.get(0, 0).hi(), 2.0);
        assert_eq!(jb.ju.get(0, 0).lo(), -3.0);
        assert_eq!(jb.jw.get(0, 0).hi(), 1.0);
    }

    #[test]
    fn sq_jacobian_over_box() {
        let mut b = GraphBuilder::new(1, 0, 0);
        let x = b.x(0);
        let s = b.sq(x);
        let g = b.finish(vec![s]);
        let jb = g
            .jacobian_bounds(&box1(-1.0, 1.0), &none(), &none())
            .unwrap();
        assert_eq!((jb.jx.get(0, 0).lo(), jb.jx.get(0, 0).hi()), (-2.0, 2.0));
    }

    fn central_diff(
        g: &ExprGraph,
        x: &[f64],
        u: &[f64],
        w: &[f64],
        group: VarGroup,
        j: usize,
        out: usize,
    ) -> f64 {
        let h = 1e-6;
        let bump = |delta: f64| {
            let mut x = x.to_vec();
            let mut u = u.to_vec();
            let mut w = w.to_vec();
            match group {
                VarGroup::State => x[j] += delta,
                VarGroup::Input => u[j] += delta,
                VarGroup::Disturbance => w[j] += delta,
            }
            g.eval_point(&x, &u, &w).unwrap()[out]
        };
        (bump(h) - bump(-h)) / (2.0 * h)
    }

    #[test]
    fn jacobian_matches_finite_differences() {
        // nonlinear graph with all groups
        let mut b = GraphBuilder::new(2, 1, 1);
        let x1 = b.x(0);
        let x2 = b.x(1);
        let u = b.u(0);
        let w = b.w(0);
        let s = b.sin(x1);
        let m = b.mul(s, x2);
        let e = b.tanh(u);
        let sum = b.add(m, e);
        let f0 = b.add(sum, w);
        let c = b.cos(x2);
        let f1 = b.mul(c, u);
        let g = b.finish(vec![f0, f1]);
        let jac = g.jacobians().unwrap();

        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..50 {
            let x = [rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)];
            let u = [rng.gen_range(-1.0..1.0)];
            let w = [rng.gen_range(-1.0..1.0)];
            let jx = jac.wrt_x.eval_point(&x, &u, &w).unwrap();
            let ju = jac.wrt_u.eval_point(&x, &u, &w).unwrap();
            for out in 0..2 {
                for j in 0..2 {
                    let fd = central_diff(&g, &x, &u, &w, VarGroup::State, j, out);
                    assert!(
                        (jx[out * 2 + j] - fd).abs() < 1e-6 * (1.0 + fd.abs()),
                        "d f{out}/dx{j}: sym {} vs fd {fd}",
                        jx[out * 2 + j]
                    );
                }
                let fd = central_diff(&g, &x, &u, &w, VarGroup::Input, 0, out);
                assert!((ju[out] - fd).abs() < 1e-6 * (1.0 + fd.abs()));
            }
        }
    }

    #[test]
    fn jacobian_bounds_contain_sampled_jacobians() {
        let mut b = GraphBuilder::new(2, 0, 0);
        let x1 = b.x(0);
        let x2 = b.x(1);
        let s = b.sin(x1);
        let m = b.mul(s, x2);
        let q = b.sq(x2);
        let g = b.finish(vec![m, q]);
        let jac = g.jacobians().unwrap();
        let x = IntervalVector::from_bounds(&[-0.5, 0.2], &[0.4, 1.1]).unwrap();
        let jb = jac.bounds(&x, &none(), &none()).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..1000 {
            let pt = [
                rng.gen_range(-0.5..0.4),
                rng.gen_range(0.2..1.1),
            ];
            let vals = jac.wrt_x.eval_point(&pt, &[], &[]).unwrap();
            for i in 0..2 {
                for j in 0..2 {
                    assert!(jb.jx.get(i, j).contains(vals[i * 2 + j]));
                }
            }
        }
    }

    #[test]
    fn eval_soundness_random_graphs() {
        let mut rng = ChaCha8Rng::seed_from_u64(100);
        for trial in 0..100 {
            let g = crate::expr::synth::random_polynomial(&mut rng, 2, 3);
            let x = IntervalVector::from_bounds(&[-1.0, -1.0], &[1.0, 1.0]).unwrap();
            let out = g.eval_interval(&x, &none(), &none()).unwrap();
            for _ in 0..1000 {
                let pt = [rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)];
                let v = g.eval_point(&pt, &[], &[]).unwrap();
                for (i, &vi) in v.iter().enumerate() {
                    assert!(
                        out[i].contains(vi),
                        "trial {trial}: output {i} value {vi} escapes [{}, {}]",
                        out[i].lo(),
                        out[i].hi()
                    );
                }
            }
        }
    }

    #[test]
    fn eval_inclusion_monotonicity() {
        let mut rng = ChaCha8Rng::seed_from_u64(200);
        for _ in 0..100 {
            let g = crate::expr::synth::random_polynomial(&mut rng, 2, 3);
            let outer = IntervalVector::from_bounds(&[-1.0, -1.0], &[1.0, 1.0]).unwrap();
            let inner = IntervalVector::from_bounds(&[-0.5, -0.3], &[0.2, 0.9]).unwrap();
            let a = g.eval_interval(&outer, &none(), &none()).unwrap();
            let b = g.eval_interval(&inner, &none(), &none()).unwrap();
            for i in 0..a.dim() {
                assert!(a[i].contains_interval(&b[i]));
            }
        }
    }

    #[test]
    fn subgraph_evaluation_matches_full() {
        let mut rng = ChaCha8Rng::seed_from_u64(300);
        for _ in 0..50 {
            let g = crate::expr::synth::random_polynomial(&mut rng, 3, 3);
            let x = IntervalVector::from_bounds(&[-1.0, 0.0, 0.5], &[1.0, 2.0, 0.7]).unwrap();
            let full = g.eval_interval(&x, &none(), &none()).unwrap();
            let mut scratch = EvalScratch::default();
            for i in 0..g.n_outputs() {
                let v = g
                    .eval_output_interval(i, &x, &none(), &none(), &mut scratch)
                    .unwrap();
                assert_eq!(v, full[i]);
            }
        }
    }
}

pub mod synth {
    //! Seeded random graphs for stress tests and property checks.

    use super::*;
    use rand::Rng;

    /// Random polynomial vector field over `n` states: compositions of
    /// add/sub/mul with small integer powers and constants.
    pub fn random_polynomial(rng: &mut impl Rng, n: usize, depth: usize) -> ExprGraph {
        let mut b = GraphBuilder::new(n, 0, 0);
        let outputs = (0..n.max(1))
            .map(|_| random_poly_node(rng, &mut b, n, depth))
            .collect();
        b.finish(outputs)
    }

    fn random_poly_node(
        rng: &mut impl Rng,
        b: &mut GraphBuilder,
        n: usize,
        depth: usize,
    ) -> NodeId {
        if depth == 0 || rng.gen_bool(0.3) {
            return if rng.gen_bool(0.7) {
                let i = rng.gen_range(0..n);
                b.x(i)
            } else {
                let c = rng.gen_range(-2.0..2.0);
                b.c(c)
            };
        }
        match rng.gen_range(0..4) {
            0 => {
                let l = random_poly_node(rng, b, n, depth - 1);
                let r = random_poly_node(rng, b, n, depth - 1);
                b.add(l, r)
            }
            1 => {
                let l = random_poly_node(rng, b, n, depth - 1);
                let r = random_poly_node(rng, b, n, depth - 1);
                b.sub(l, r)
            }
            2 => {
                let l = random_poly_node(rng, b, n, depth - 1);
                let r = random_poly_node(rng, b, n, depth - 1);
                b.mul(l, r)
            }
            _ => {
                let a = random_poly_node(rng, b, n, depth - 1);
                let k = rng.gen_range(2..4);
                b.pow(a, k)
            }
        }
    }

    /// Random smooth (differentiable) vector field mixing polynomials with
    /// sin/cos/tanh wrappers.
    pub fn random_smooth(rng: &mut impl Rng, n: usize, depth: usize) -> ExprGraph {
        let mut b = GraphBuilder::new(n, 0, 0);
        let outputs = (0..n.max(1))
            .map(|_| {
                let base = random_poly_node(rng, &mut b, n, depth);
                match rng.gen_range(0..4) {
                    0 => b.sin(base),
                    1 => b.cos(base),
                    2 => b.tanh(base),
                    _ => base,
                }
            })
            .collect();
        b.finish(outputs)
    }
}
