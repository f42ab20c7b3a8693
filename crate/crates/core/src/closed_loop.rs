//! Closed-loop inclusion functions for `f(x, N(x), w)`.
//!
//! Two constructions are provided. The interconnection form substitutes the
//! network's localized output bounds into the open-loop inclusion function.
//! The interaction form combines interval Jacobian bounds of the open loop
//! with affine network bounds, anchored at a chosen corner of the state,
//! control, and disturbance boxes; columns may additionally be mixed
//! (evaluated over partially collapsed boxes). Linear open loops get the
//! closed-form specializations.

use std::sync::Arc;

use ndarray::{Array1, Array2};

use crate::error::ClosedLoopError;
use crate::expr::{EvalScratch, ExprGraph, Jacobians, VarGroup};
use crate::inclusion::{Corner, CornerSide};
use crate::interval::{interval_linear_map, pos_neg_split, Interval, IntervalVector};
use crate::nn::{nn_crown_with, nn_ibp, AffineBounds, CrownConfig, NeuralNetwork};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BoundSource {
    Ibp,
    Crown,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Method {
    /// Interconnection-based closed loop.
    Con,
    /// Interaction-based closed loop.
    Act,
    /// Per-step intersection of the two.
    Fused,
}

/// Which variable groups use mixed (column-wise collapsed) Jacobian bounds
/// in the interaction form.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum MixedMode {
    #[default]
    Off,
    States,
    StatesControl,
}

/// A corner of the (state, control, disturbance) product box.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GroupCorner {
    pub x: Corner,
    pub u: Corner,
    pub w: Corner,
}

impl GroupCorner {
    pub fn all_lo(n: usize, p: usize, q: usize) -> Self {
        GroupCorner {
            x: Corner::all_lo(n),
            u: Corner::all_lo(p),
            w: Corner::all_lo(q),
        }
    }

    /// Corner presets: 1 = all-lo; 2 = {(x,u),(xh,uh)}; 4 = the four
    /// state/control sign combinations. Disturbance corners stay at lo.
    pub fn preset(count: usize, n: usize, p: usize, q: usize) -> Vec<GroupCorner> {
        let lo = |d: usize| Corner::all_lo(d);
        let hi = |d: usize| Corner::all_hi(d);
        match count {
            1 => vec![GroupCorner::all_lo(n, p, q)],
            2 => vec![
                GroupCorner {
                    x: lo(n),
                    u: lo(p),
                    w: lo(q),
                },
                GroupCorner {
                    x: hi(n),
                    u: hi(p),
                    w: lo(q),
                },
            ],
            4 => vec![
                GroupCorner {
                    x: lo(n),
                    u: lo(p),
                    w: lo(q),
                },
                GroupCorner {
                    x: lo(n),
                    u: hi(p),
                    w: lo(q),
                },
                GroupCorner {
                    x: hi(n),
                    u: lo(p),
                    w: lo(q),
                },
                GroupCorner {
                    x: hi(n),
                    u: hi(p),
                    w: lo(q),
                },
            ],
            other => panic!("unsupported corner preset {other} (use 1, 2 or 4)"),
        }
    }
}

/// Affine feature map `z = F x + f0` applied to the state before the
/// network (identity when absent).
#[derive(Debug, Clone)]
pub struct FeatureMap {
    pub f: Array2<f64>,
    pub f0: Array1<f64>,
}

impl FeatureMap {
    /// Selector map picking a subset of state coordinates.
    pub fn select(indices: &[usize], n: usize) -> Self {
        let mut f = Array2::zeros((indices.len(), n));
        for (r, &i) in indices.iter().enumerate() {
            f[(r, i)] = 1.0;
        }
        FeatureMap {
            f,
            f0: Array1::zeros(indices.len()),
        }
    }

    /// Exact interval image of a state box.
    pub fn image(&self, x: &IntervalVector) -> IntervalVector {
        let z = interval_linear_map(&self.f, x).expect("feature map dims");
        IntervalVector::from_bounds(
            &z.lo_vec()
                .iter()
                .zip(&self.f0)
                .map(|(a, b)| a + b)
                .collect::<Vec<_>>(),
            &z.hi_vec()
                .iter()
                .zip(&self.f0)
                .map(|(a, b)| a + b)
                .collect::<Vec<_>>(),
        )
        .expect("feature map image")
    }

    pub fn apply(&self, x: &[f64]) -> Vec<f64> {
        (self.f.dot(&Array1::from_vec(x.to_vec())) + &self.f0).to_vec()
    }
}

/// The controller side of a closed loop.
#[derive(Clone)]
pub struct Controller {
    pub net: Arc<NeuralNetwork>,
    pub feature_map: Option<FeatureMap>,
    pub bound_source: BoundSource,
    pub crown_cfg: CrownConfig,
    /// Known structural output bounds of the network (for example a final
    /// scaled tanh). Intersected into every control box.
    pub u_limits: Option<IntervalVector>,
}

impl Controller {
    pub fn new(net: Arc<NeuralNetwork>) -> Self {
        Controller {
            net,
            feature_map: None,
            bound_source: BoundSource::Crown,
            crown_cfg: CrownConfig::default(),
            u_limits: None,
        }
    }

    pub fn output_at(&self, x: &[f64]) -> Vec<f64> {
        let z = match &self.feature_map {
            Some(m) => m.apply(x),
            None => x.to_vec(),
        };
        let mut u = self.net.forward(&z);
        if let Some(lims) = &self.u_limits {
            for (i, v) in u.iter_mut().enumerate() {
                *v = v.clamp(lims[i].lo(), lims[i].hi());
            }
        }
        u
    }
}

/// Network bounds refreshed on a state box.
#[derive(Debug, Clone)]
pub enum ControlBounds {
    /// Affine bounds in the network's own input space plus the concretized
    /// control box.
    Affine {
        ab_net: AffineBounds,
        u_box: IntervalVector,
    },
    /// A frozen interval (interval propagation, or a zero-order hold).
    Constant { u_box: IntervalVector },
}

impl ControlBounds {
    pub fn u_box(&self) -> &IntervalVector {
        match self {
            ControlBounds::Affine { u_box, .. } => u_box,
            ControlBounds::Constant { u_box } => u_box,
        }
    }

    /// Control bounds over a face of the state box: the affine form is
    /// re-evaluated on the face (capturing per-face feedback), the constant
    /// form is face-independent.
    pub fn on_face(
        &self,
        face_box: &IntervalVector,
        fmap: Option<&FeatureMap>,
        u_limits: Option<&IntervalVector>,
    ) -> IntervalVector {
        match self {
            ControlBounds::Constant { u_box } => u_box.clone(),
            ControlBounds::Affine { ab_net, .. } => {
                let z = match fmap {
                    Some(m) => m.image(face_box),
                    None => face_box.clone(),
                };
                let mut u = ab_net.bounds_on_unchecked(&z);
                if let Some(l) = u_limits {
                    if let Some(clamped) = u.intersect(l) {
                        u = clamped;
                    }
                }
                u
            }
        }
    }

    /// Freezes the current control box, as a zero-order hold does.
    pub fn frozen(&self) -> ControlBounds {
        ControlBounds::Constant {
            u_box: self.u_box().clone(),
        }
    }

    /// Affine bounds expressed in state space (`C` composed with the
    /// feature map; constant bounds get zero slopes).
    pub fn state_space_affine(
        &self,
        fmap: Option<&FeatureMap>,
        x_box: &IntervalVector,
    ) -> AffineBounds {
        match self {
            ControlBounds::Constant { u_box } => AffineBounds::constant(u_box, x_box.clone()),
            ControlBounds::Affine { ab_net, .. } => match fmap {
                Some(m) => ab_net.compose_feature_map(&m.f, &m.f0, x_box.clone()),
                None => {
                    let mut ab = ab_net.clone();
                    ab.domain = x_box.clone();
                    ab
                }
            },
        }
    }
}

/// The open-loop model.
#[derive(Clone)]
pub enum OpenLoopModel {
    Graph {
        graph: Arc<ExprGraph>,
        jacs: Option<Arc<Jacobians>>,
    },
    Linear {
        a: Array2<f64>,
        b: Array2<f64>,
        d: Array2<f64>,
    },
}

impl OpenLoopModel {
    pub fn graph(graph: Arc<ExprGraph>) -> Self {
        OpenLoopModel::Graph { graph, jacs: None }
    }

    /// Graph model with Jacobians pre-differentiated for the interaction form.
    pub fn graph_with_jacobians(graph: Arc<ExprGraph>) -> Result<Self, ClosedLoopError> {
        let jacs = Arc::new(graph.jacobians()?);
        Ok(OpenLoopModel::Graph {
            graph,
            jacs: Some(jacs),
        })
    }

    pub fn linear(a: Array2<f64>, b: Array2<f64>, d: Array2<f64>) -> Self {
        OpenLoopModel::Linear { a, b, d }
    }

    pub fn dims(&self) -> (usize, usize, usize) {
        match self {
            OpenLoopModel::Graph { graph, .. } => graph.dims(),
            OpenLoopModel::Linear { a, b, d } => (a.nrows(), b.ncols(), d.ncols()),
        }
    }

    pub fn f_point(&self, x: &[f64], u: &[f64], w: &[f64]) -> Result<Vec<f64>, ClosedLoopError> {
        match self {
            OpenLoopModel::Graph { graph, .. } => Ok(graph.eval_point(x, u, w)?),
            OpenLoopModel::Linear { a, b, d } => {
                let mut out = a.dot(&Array1::from_vec(x.to_vec()));
                if b.ncols() > 0 {
                    out = out + b.dot(&Array1::from_vec(u.to_vec()));
                }
                if d.ncols() > 0 {
                    out = out + d.dot(&Array1::from_vec(w.to_vec()));
                }
                Ok(out.to_vec())
            }
        }
    }
}

/// A plant in feedback with an optional network controller.
#[derive(Clone)]
pub struct ClosedLoopSystem {
    pub open: OpenLoopModel,
    pub controller: Option<Controller>,
}

/// Evaluation options shared by the reach layer.
#[derive(Clone)]
pub struct EvalOptions {
    pub method: Method,
    pub corners: Vec<GroupCorner>,
    pub mixed: MixedMode,
}

impl EvalOptions {
    pub fn con() -> Self {
        EvalOptions {
            method: Method::Con,
            corners: Vec::new(),
            mixed: MixedMode::Off,
        }
    }

    pub fn act(corners: Vec<GroupCorner>, mixed: MixedMode) -> Self {
        EvalOptions {
            method: Method::Act,
            corners,
            mixed,
        }
    }

    pub fn fused(corners: Vec<GroupCorner>, mixed: MixedMode) -> Self {
        EvalOptions {
            method: Method::Fused,
            corners,
            mixed,
        }
    }
}

impl ClosedLoopSystem {
    pub fn dims(&self) -> (usize, usize, usize) {
        self.open.dims()
    }

    /// The closed-loop vector field at a point.
    pub fn f_closed(&self, x: &[f64], w: &[f64]) -> Result<Vec<f64>, ClosedLoopError> {
        let u = match &self.controller {
            Some(c) => c.output_at(x),
            None => vec![0.0; self.dims().1],
        };
        self.open.f_point(x, &u, w)
    }

    /// Closed-loop vector field with an externally held control value.
    pub fn f_held(&self, x: &[f64], u: &[f64], w: &[f64]) -> Result<Vec<f64>, ClosedLoopError> {
        self.open.f_point(x, u, w)
    }

    /// Refreshes network bounds on a state box (per step, or at hold
    /// instants under a zero-order hold).
    pub fn control_bounds(&self, x_box: &IntervalVector) -> Result<ControlBounds, ClosedLoopError> {
        let (_, p, _) = self.dims();
        let Some(ctrl) = &self.controller else {
            return Ok(ControlBounds::Constant {
                u_box: IntervalVector::from_bounds(&vec![0.0; p], &vec![0.0; p])?,
            });
        };
        let z_box = match &ctrl.feature_map {
            Some(m) => m.image(x_box),
            None => x_box.clone(),
        };
        let clamp = |mut u: IntervalVector| -> IntervalVector {
            if let Some(l) = &ctrl.u_limits {
                if let Some(c) = u.intersect(l) {
                    u = c;
                }
            }
            u
        };
        match ctrl.bound_source {
            BoundSource::Ibp => {
                let u_box = clamp(nn_ibp(&ctrl.net, &z_box)?);
                Ok(ControlBounds::Constant { u_box })
            }
            BoundSource::Crown => {
                let ab = nn_crown_with(&ctrl.net, &z_box, ctrl.crown_cfg)?;
                let u_box = clamp(ab.concretize());
                Ok(ControlBounds::Affine { ab_net: ab, u_box })
            }
        }
    }

    /// Face-substituted embedding right-hand side on the current box:
    /// coordinate `i`'s lower rate comes from the face with `x_i` at its
    /// lower bound, the upper rate from the opposite face. Network bounds
    /// in `ctl` are shared across all `2n` face evaluations.
    pub fn embed_rhs(
        &self,
        opts: &EvalOptions,
        x_box: &IntervalVector,
        w_box: &IntervalVector,
        ctl: &ControlBounds,
    ) -> Result<(Vec<f64>, Vec<f64>), ClosedLoopError> {
        let n = self.dims().0;
        let mut dlo = vec![f64::NEG_INFINITY; n];
        let mut dhi = vec![f64::INFINITY; n];
        let run_con = matches!(opts.method, Method::Con | Method::Fused);
        let run_act = matches!(opts.method, Method::Act | Method::Fused);

        let mut scratch = EvalScratch::default();
        let lo_full = x_box.lo_vec();
        let hi_full = x_box.hi_vec();

        let act_ctx = if run_act {
            Some(self.act_context(opts, x_box, w_box, ctl)?)
        } else {
            None
        };

        for i in 0..n {
            // lower face: x_i collapsed to its lower bound
            let mut face = x_box.clone();
            face.set(i, Interval::point(lo_full[i]));
            let mut best_lo = f64::NEG_INFINITY;
            if run_con {
                let v = self.con_face_value(i, &face, w_box, ctl, false, &mut scratch)?;
                best_lo = best_lo.max(v);
            }
            if let Some(ctx) = &act_ctx {
                let v = ctx.face_value(self, i, &face, false, &mut scratch)?;
                best_lo = best_lo.max(v);
            }
            dlo[i] = best_lo;

            // upper face: x_i collapsed to its upper bound
            let mut face = x_box.clone();
            face.set(i, Interval::point(hi_full[i]));
            let mut best_hi = f64::INFINITY;
            if run_con {
                let v = self.con_face_value(i, &face, w_box, ctl, true, &mut scratch)?;
                best_hi = best_hi.min(v);
            }
            if let Some(ctx) = &act_ctx {
                let v = ctx.face_value(self, i, &face, true, &mut scratch)?;
                best_hi = best_hi.min(v);
            }
            dhi[i] = best_hi;
        }
        Ok((dlo, dhi))
    }

    /// One-step image of a whole box (discrete-time systems).
    pub fn step_box(
        &self,
        opts: &EvalOptions,
        x_box: &IntervalVector,
        w_box: &IntervalVector,
        ctl: &ControlBounds,
    ) -> Result<IntervalVector, ClosedLoopError> {
        let mut out: Option<IntervalVector> = None;
        if matches!(opts.method, Method::Con | Method::Fused) {
            let v = self.con_box(x_box, w_box, ctl)?;
            out = Some(v);
        }
        if matches!(opts.method, Method::Act | Method::Fused) {
            let ctx = self.act_context(opts, x_box, w_box, ctl)?;
            let v = ctx.full_box(self, x_box)?;
            out = Some(match out {
                None => v,
                Some(prev) => prev
                    .intersect(&v)
                    .ok_or(crate::error::InclusionError::EmptyResult {
                        component: 0,
                        lo: 0.0,
                        hi: 0.0,
                    })?,
            });
        }
        Ok(out.expect("at least one method"))
    }

    /// Interconnection evaluation over a full box.
    pub fn con_box(
        &self,
        x_box: &IntervalVector,
        w_box: &IntervalVector,
        ctl: &ControlBounds,
    ) -> Result<IntervalVector, ClosedLoopError> {
        match &self.open {
            OpenLoopModel::Graph { graph, .. } => {
                let fmap = self.controller.as_ref().and_then(|c| c.feature_map.as_ref());
                let lims = self.controller.as_ref().and_then(|c| c.u_limits.as_ref());
                let u = ctl.on_face(x_box, fmap, lims);
                Ok(graph.eval_interval(x_box, &u, w_box)?)
            }
            OpenLoopModel::Linear { a, b, d } => {
                let fmap = self.controller.as_ref().and_then(|c| c.feature_map.as_ref());
                let ab = ctl.state_space_affine(fmap, x_box);
                Ok(linear_con_ifn(a, b, d, &ab, x_box, w_box)?)
            }
        }
    }

    fn con_face_value(
        &self,
        i: usize,
        face: &IntervalVector,
        w_box: &IntervalVector,
        ctl: &ControlBounds,
        upper: bool,
        scratch: &mut EvalScratch,
    ) -> Result<f64, ClosedLoopError> {
        let fmap = self.controller.as_ref().and_then(|c| c.feature_map.as_ref());
        let lims = self.controller.as_ref().and_then(|c| c.u_limits.as_ref());
        match &self.open {
            OpenLoopModel::Graph { graph, .. } => {
                let u = ctl.on_face(face, fmap, lims);
                let v = graph.eval_output_interval(i, face, &u, w_box, scratch)?;
                Ok(if upper { v.hi() } else { v.lo() })
            }
            OpenLoopModel::Linear { a, b, d } => {
                let ab = ctl.state_space_affine(fmap, face);
                let v = linear_con_ifn(a, b, d, &ab, face, w_box)?;
                Ok(if upper { v[i].hi() } else { v[i].lo() })
            }
        }
    }

    fn act_context(
        &self,
        opts: &EvalOptions,
        x_box: &IntervalVector,
        w_box: &IntervalVector,
        ctl: &ControlBounds,
    ) -> Result<ActContext, ClosedLoopError> {
        let (n, p, q) = self.dims();
        let fmap = self.controller.as_ref().and_then(|c| c.feature_map.as_ref());
        let ab = ctl.state_space_affine(fmap, x_box);
        let u_box = ctl.u_box().clone();
        let corners = if opts.corners.is_empty() {
            vec![GroupCorner::all_lo(n, p, q)]
        } else {
            opts.corners.clone()
        };
        ActContext::build(
            self, &corners, opts.mixed, &ab, x_box, &u_box, w_box,
        )
    }
}

/// Interconnection-based closed-loop inclusion (full-box form): network
/// bounds on the state box substituted into the open-loop natural inclusion.
pub fn con_ifn(
    f: &ExprGraph,
    nn_bounds: &ControlBounds,
    fmap: Option<&FeatureMap>,
    x_box: &IntervalVector,
    w_box: &IntervalVector,
    localization: &IntervalVector,
) -> Result<IntervalVector, ClosedLoopError> {
    if !localization.contains_box(x_box) {
        return Err(ClosedLoopError::OutsideLocalization);
    }
    let u = nn_bounds.on_face(x_box, fmap, None);
    Ok(f.eval_interval(x_box, &u, w_box)?)
}

/// Interaction-based closed-loop inclusion (full-box form).
#[allow(clippy::too_many_arguments)]
pub fn act_ifn(
    f: &ExprGraph,
    jacs: &Jacobians,
    ab: &AffineBounds,
    corner: &GroupCorner,
    mixed: MixedMode,
    x_box: &IntervalVector,
    u_box: &IntervalVector,
    w_box: &IntervalVector,
) -> Result<IntervalVector, ClosedLoopError> {
    if !ab.domain.contains_box(x_box) {
        return Err(ClosedLoopError::OutsideLocalization);
    }
    let sys = ClosedLoopSystem {
        open: OpenLoopModel::Graph {
            graph: Arc::new(f.clone()),
            jacs: Some(Arc::new(jacs.clone())),
        },
        controller: None,
    };
    let ctx = ActContext::build(
        &sys,
        std::slice::from_ref(corner),
        mixed,
        ab,
        x_box,
        u_box,
        w_box,
    )?;
    ctx.full_box(&sys, x_box)
}

/// Per-corner matrices of the interaction form.
struct CornerData {
    corner: GroupCorner,
    /// H-lower and H-upper with their sign splits.
    h_lo_pos: Array2<f64>,
    h_lo_neg: Array2<f64>,
    h_hi_pos: Array2<f64>,
    h_hi_neg: Array2<f64>,
    /// Corner-selected state Jacobian columns (lower/upper roles).
    jsx: Array2<f64>,
    jssx: Array2<f64>,
    /// Face-independent constants (control, disturbance, bias terms).
    q_lo: Array1<f64>,
    q_hi: Array1<f64>,
    cu: Vec<f64>,
    cw: Vec<f64>,
}

struct ActContext {
    per_corner: Vec<CornerData>,
    mixed: MixedMode,
    u_box: IntervalVector,
    w_box: IntervalVector,
}

impl ActContext {
    #[allow(clippy::too_many_arguments)]
    fn build(
        sys: &ClosedLoopSystem,
        corners: &[GroupCorner],
        mixed: MixedMode,
        ab: &AffineBounds,
        x_box: &IntervalVector,
        u_box: &IntervalVector,
        w_box: &IntervalVector,
    ) -> Result<Self, ClosedLoopError> {
        let (n, p, q) = sys.dims();
        let mut scratch = EvalScratch::default();
        // Jacobian bounds over the full product box
        let (jx, ju, jw) = match &sys.open {
            OpenLoopModel::Linear { a, b, d } => (
                (a.clone(), a.clone()),
                (b.clone(), b.clone()),
                (d.clone(), d.clone()),
            ),
            OpenLoopModel::Graph { jacs, .. } => {
                let jacs = jacs
                    .as_ref()
                    .expect("interaction form requires pre-differentiated Jacobians");
                let jb = jacs.bounds(x_box, u_box, w_box)?;
                ((jb.jx.lo, jb.jx.hi), (jb.ju.lo, jb.ju.hi), (jb.jw.lo, jb.jw.hi))
            }
        };
        let mut per_corner = Vec::with_capacity(corners.len());
        for corner in corners {
            // column selections: the lower role takes the lower Jacobian
            // bound on lo-corner columns and the upper bound on hi-corner
            // columns; the upper role is the opposite
            let select = |lo: &Array2<f64>, hi: &Array2<f64>, c: &Corner| {
                let mut star = lo.clone();
                let mut ss = hi.clone();
                for j in 0..c.len() {
                    if c.side(j) == CornerSide::Hi {
                        for i in 0..lo.nrows() {
                            star[(i, j)] = hi[(i, j)];
                            ss[(i, j)] = lo[(i, j)];
                        }
                    }
                }
                (star, ss)
            };
            let (mut jsx, mut jssx) = select(&jx.0, &jx.1, &corner.x);
            let (mut jsu, mut jssu) = select(&ju.0, &ju.1, &corner.u);
            let (jsw, jssw) = select(&jw.0, &jw.1, &corner.w);

            // mixed refinement: column j re-evaluated over the box with the
            // group's coordinates after j collapsed onto the corner
            if let OpenLoopModel::Graph { jacs, .. } = &sys.open {
                let jacs = jacs.as_ref().unwrap();
                if mixed != MixedMode::Off {
                    for j in 0..n {
                        let mut pinned = x_box.clone();
                        for k in j + 1..n {
                            let v = match corner.x.side(k) {
                                CornerSide::Lo => x_box[k].lo(),
                                CornerSide::Hi => x_box[k].hi(),
                            };
                            pinned.set(k, Interval::point(v));
                        }
                        let col = jacs.column_bounds(
                            VarGroup::State,
                            j,
                            &pinned,
                            u_box,
                            w_box,
                            &mut scratch,
                        )?;
                        for i in 0..n {
                            let (a, b) = match corner.x.side(j) {
                                CornerSide::Lo => (col[i].lo(), col[i].hi()),
                                CornerSide::Hi => (col[i].hi(), col[i].lo()),
                            };
                            jsx[(i, j)] = a;
                            jssx[(i, j)] = b;
                        }
                    }
                }
                if mixed == MixedMode::StatesControl {
                    for j in 0..p {
                        let mut pinned = u_box.clone();
                        for k in j + 1..p {
                            let v = match corner.u.side(k) {
                                CornerSide::Lo => u_box[k].lo(),
                                CornerSide::Hi => u_box[k].hi(),
                            };
                            pinned.set(k, Interval::point(v));
                        }
                        let col = jacs.column_bounds(
                            VarGroup::Input,
                            j,
                            x_box,
                            &pinned,
                            w_box,
                            &mut scratch,
                        )?;
                        for i in 0..n {
                            let (a, b) = match corner.u.side(j) {
                                CornerSide::Lo => (col[i].lo(), col[i].hi()),
                                CornerSide::Hi => (col[i].hi(), col[i].lo()),
                            };
                            jsu[(i, j)] = a;
                            jssu[(i, j)] = b;
                        }
                    }
                }
            }

            let (jsu_p, jsu_n) = pos_neg_split(&jsu);
            let (jssu_p, jssu_n) = pos_neg_split(&jssu);
            let h_lo = &jsx + &jsu_p.dot(&ab.c_lo) + &jsu_n.dot(&ab.c_up);
            let h_hi = &jssx + &jssu_p.dot(&ab.c_up) + &jssu_n.dot(&ab.c_lo);
            let (h_lo_pos, h_lo_neg) = pos_neg_split(&h_lo);
            let (h_hi_pos, h_hi_neg) = pos_neg_split(&h_hi);

            let cu = corner.u.point_of(u_box);
            let cw = corner.w.point_of(w_box);
            let cu_arr = Array1::from_vec(cu.clone());
            let cw_arr = Array1::from_vec(cw.clone());

            // face-independent constants: control bias and disturbance terms
            let (jsw_p, jsw_n) = pos_neg_split(&jsw);
            let (jssw_p, jssw_n) = pos_neg_split(&jssw);
            let w_lo = w_box.lo();
            let w_hi = w_box.hi();
            let mut q_lo = jsu_p.dot(&ab.d_lo) + jsu_n.dot(&ab.d_up) - jsu.dot(&cu_arr);
            let mut q_hi = jssu_p.dot(&ab.d_up) + jssu_n.dot(&ab.d_lo) - jssu.dot(&cu_arr);
            if q > 0 {
                q_lo = q_lo + jsw_p.dot(&w_lo) + jsw_n.dot(&w_hi) - jsw.dot(&cw_arr);
                q_hi = q_hi + jssw_n.dot(&w_lo) + jssw_p.dot(&w_hi) - jssw.dot(&cw_arr);
            }

            per_corner.push(CornerData {
                corner: corner.clone(),
                h_lo_pos,
                h_lo_neg,
                h_hi_pos,
                h_hi_neg,
                jsx,
                jssx,
                q_lo,
                q_hi,
                cu,
                cw,
            });
        }
        Ok(ActContext {
            per_corner,
            mixed,
            u_box: u_box.clone(),
            w_box: w_box.clone(),
        })
    }

    /// Component `i` of the interaction bound on a face box.
    fn face_value(
        &self,
        sys: &ClosedLoopSystem,
        i: usize,
        face: &IntervalVector,
        upper: bool,
        scratch: &mut EvalScratch,
    ) -> Result<f64, ClosedLoopError> {
        let lo = face.lo_vec();
        let hi = face.hi_vec();
        let mut best = if upper { f64::INFINITY } else { f64::NEG_INFINITY };
        for cd in &self.per_corner {
            let cx = cd.corner.x.point_of(face);
            let fval = sys.open.f_output_point(i, &cx, &cd.cu, &cd.cw, scratch)?;
            let n = lo.len();
            let v = if self.mixed == MixedMode::Off || matches!(sys.open, OpenLoopModel::Linear { .. }) {
                if upper {
                    let mut acc = cd.q_hi[i] + fval;
                    for j in 0..n {
                        acc += cd.h_hi_neg[(i, j)] * lo[j] + cd.h_hi_pos[(i, j)] * hi[j]
                            - cd.jssx[(i, j)] * cx[j];
                    }
                    acc
                } else {
                    let mut acc = cd.q_lo[i] + fval;
                    for j in 0..n {
                        acc += cd.h_lo_pos[(i, j)] * lo[j] + cd.h_lo_neg[(i, j)] * hi[j]
                            - cd.jsx[(i, j)] * cx[j];
                    }
                    acc
                }
            } else {
                // mixed: re-evaluate the state Jacobian row over the face
                // with pinning anchored at the face corner
                self.mixed_face_row(sys, i, face, &cx, cd, upper, scratch)?
            };
            best = if upper { best.min(v) } else { best.max(v) };
        }
        Ok(best)
    }

    fn mixed_face_row(
        &self,
        sys: &ClosedLoopSystem,
        i: usize,
        face: &IntervalVector,
        cx: &[f64],
        cd: &CornerData,
        upper: bool,
        scratch: &mut EvalScratch,
    ) -> Result<f64, ClosedLoopError> {
        let OpenLoopModel::Graph { jacs, .. } = &sys.open else {
            unreachable!("mixed rows only for graph models");
        };
        let jacs = jacs.as_ref().unwrap();
        let n = face.dim();
        let lo = face.lo_vec();
        let hi = face.hi_vec();
        let fval = sys.open.f_output_point(i, cx, &cd.cu, &cd.cw, scratch)?;
        let mut acc = if upper { cd.q_hi[i] } else { cd.q_lo[i] } + fval;
        // the control part of H stays face-independent; recompute only the
        // state-column entries of the row
        for j in 0..n {
            let mut pinned = face.clone();
            for k in j + 1..n {
                pinned.set(k, Interval::point(cx[k]));
            }
            let entry = jacs.entry_bounds(
                VarGroup::State,
                i,
                j,
                &pinned,
                &self.u_box,
                &self.w_box,
                scratch,
            )?;
            let (jsx, jssx) = match cd.corner.x.side(j) {
                CornerSide::Lo => (entry.lo(), entry.hi()),
                CornerSide::Hi => (entry.hi(), entry.lo()),
            };
            // the control coupling of H is face-independent: recover it per
            // entry as H - J*x and re-attach the face-refined state entry
            if upper {
                let h = jssx + (cd.h_hi_pos[(i, j)] + cd.h_hi_neg[(i, j)] - cd.jssx[(i, j)]);
                acc += h.min(0.0) * lo[j] + h.max(0.0) * hi[j] - jssx * cx[j];
            } else {
                let h = jsx + (cd.h_lo_pos[(i, j)] + cd.h_lo_neg[(i, j)] - cd.jsx[(i, j)]);
                acc += h.max(0.0) * lo[j] + h.min(0.0) * hi[j] - jsx * cx[j];
            }
        }
        Ok(acc)
    }

    /// Full-box interaction bound (all corners intersected).
    fn full_box(
        &self,
        sys: &ClosedLoopSystem,
        x_box: &IntervalVector,
    ) -> Result<IntervalVector, ClosedLoopError> {
        let n = x_box.dim();
        let mut scratch = EvalScratch::default();
        let mut lo_out = vec![f64::NEG_INFINITY; n];
        let mut hi_out = vec![f64::INFINITY; n];
        for i in 0..n {
            lo_out[i] = self.face_value(sys, i, x_box, false, &mut scratch)?;
            hi_out[i] = self.face_value(sys, i, x_box, true, &mut scratch)?;
        }
        IntervalVector::from_bounds(&lo_out, &hi_out)
            .map_err(|e| ClosedLoopError::Interval(e))
    }
}

impl OpenLoopModel {
    fn f_output_point(
        &self,
        i: usize,
        x: &[f64],
        u: &[f64],
        w: &[f64],
        scratch: &mut EvalScratch,
    ) -> Result<f64, ClosedLoopError> {
        match self {
            OpenLoopModel::Graph { graph, .. } => {
                Ok(graph.eval_output_point(i, x, u, w, scratch)?)
            }
            other => Ok(other.f_point(x, u, w)?[i]),
        }
    }
}

/// Closed form of the interconnection inclusion for linear open loops:
/// `[[A]^+ + [B^+ C_lo + B^- C_up]^+ , ...]` applied to `[x; x_hat]` plus
/// disturbance and bias terms.
pub fn linear_con_ifn(
    a: &Array2<f64>,
    b: &Array2<f64>,
    d: &Array2<f64>,
    ab: &AffineBounds,
    x_box: &IntervalVector,
    w_box: &IntervalVector,
) -> Result<IntervalVector, ClosedLoopError> {
    if a.ncols() != x_box.dim() {
        return Err(ClosedLoopError::Interval(
            crate::error::IntervalError::DimensionMismatch {
                expected: a.ncols(),
                got: x_box.dim(),
            },
        ));
    }
    let (bp, bn) = pos_neg_split(b);
    let bc_lo = bp.dot(&ab.c_lo) + bn.dot(&ab.c_up);
    let bc_hi = bp.dot(&ab.c_up) + bn.dot(&ab.c_lo);
    let (ap, an) = pos_neg_split(a);
    let (bclp, bcln) = pos_neg_split(&bc_lo);
    let (bchp, bchn) = pos_neg_split(&bc_hi);
    let lo = x_box.lo();
    let hi = x_box.hi();
    let bias_lo = bp.dot(&ab.d_lo) + bn.dot(&ab.d_up);
    let bias_hi = bp.dot(&ab.d_up) + bn.dot(&ab.d_lo);
    let mut out_lo = (&ap + &bclp).dot(&lo) + (&an + &bcln).dot(&hi) + bias_lo;
    let mut out_hi = (&an + &bchn).dot(&lo) + (&ap + &bchp).dot(&hi) + bias_hi;
    if d.ncols() > 0 {
        let (dp, dn) = pos_neg_split(d);
        let w_lo = w_box.lo();
        let w_hi = w_box.hi();
        out_lo = out_lo + dp.dot(&w_lo) + dn.dot(&w_hi);
        out_hi = out_hi + dn.dot(&w_lo) + dp.dot(&w_hi);
    }
    Ok(IntervalVector::from_bounds(
        out_lo.as_slice().unwrap(),
        out_hi.as_slice().unwrap(),
    )?)
}

/// Closed form of the interaction inclusion for linear open loops:
/// `[[A + B^+ C_lo + B^- C_up]^+ , ...]`.
pub fn linear_act_ifn(
    a: &Array2<f64>,
    b: &Array2<f64>,
    d: &Array2<f64>,
    ab: &AffineBounds,
    x_box: &IntervalVector,
    w_box: &IntervalVector,
) -> Result<IntervalVector, ClosedLoopError> {
    if a.ncols() != x_box.dim() {
        return Err(ClosedLoopError::Interval(
            crate::error::IntervalError::DimensionMismatch {
                expected: a.ncols(),
                got: x_box.dim(),
            },
        ));
    }
    let (bp, bn) = pos_neg_split(b);
    let h_lo = a + &bp.dot(&ab.c_lo) + bn.dot(&ab.c_up);
    let h_hi = a + &bp.dot(&ab.c_up) + bn.dot(&ab.c_lo);
    let (hlp, hln) = pos_neg_split(&h_lo);
    let (hhp, hhn) = pos_neg_split(&h_hi);
    let lo = x_box.lo();
    let hi = x_box.hi();
    let bias_lo = bp.dot(&ab.d_lo) + bn.dot(&ab.d_up);
    let bias_hi = bp.dot(&ab.d_up) + bn.dot(&ab.d_lo);
    let mut out_lo = hlp.dot(&lo) + hln.dot(&hi) + bias_lo;
    let mut out_hi = hhn.dot(&lo) + hhp.dot(&hi) + bias_hi;
    if d.ncols() > 0 {
        let (dp, dn) = pos_neg_split(d);
        let w_lo = w_box.lo();
        let w_hi = w_box.hi();
        out_lo = out_lo + dp.dot(&w_lo) + dn.dot(&w_hi);
        out_hi = out_hi + dn.dot(&w_lo) + dp.dot(&w_hi);
    }
    Ok(IntervalVector::from_bounds(
        out_lo.as_slice().unwrap(),
        out_hi.as_slice().unwrap(),
    )?)
}
