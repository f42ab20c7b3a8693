//! Feedforward networks and their bound generators.
//!
//! Two generators are provided: interval bound propagation (a layerwise
//! forward pass) and a CROWN-style backward pass producing affine lower and
//! upper bounds `C_lo x + d_lo <= N(x) <= C_up x + d_up` on a box. Affine
//! bounds convert into localized inclusion functions via the sign-split
//! evaluation rule.

use std::sync::Arc;

use ndarray::{Array1, Array2};
use serde::Deserialize;

use crate::error::NnError;
use crate::inclusion::InclusionFn;
use crate::interval::{
    interval_linear_map, pos_neg_split, sigmoid, Interval, IntervalVector,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Activation {
    Relu,
    Tanh,
    Sigmoid,
    Identity,
}

impl Activation {
    fn apply(&self, x: f64) -> f64 {
        match self {
            Activation::Relu => x.max(0.0),
            Activation::Tanh => x.tanh(),
            Activation::Sigmoid => sigmoid(x),
            Activation::Identity => x,
        }
    }

    fn apply_interval(&self, x: Interval) -> Interval {
        match self {
            Activation::Relu => x.relu(),
            Activation::Tanh => x.tanh(),
            Activation::Sigmoid => x.sigmoid(),
            Activation::Identity => x,
        }
    }

    fn derivative(&self, x: f64) -> f64 {
        match self {
            Activation::Relu => {
                if x > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Activation::Tanh => 1.0 - x.tanh().powi(2),
            Activation::Sigmoid => {
                let s = sigmoid(x);
                s * (1.0 - s)
            }
            Activation::Identity => 1.0,
        }
    }
}

#[derive(Debug, Clone)]
pub struct Layer {
    pub weight: Array2<f64>,
    pub bias: Array1<f64>,
    pub act: Activation,
}

/// A feedforward network: affine layers each followed by a diagonal
/// activation, with the final layer's activation required to be identity
/// (activations act before the last affine map). All supported activations
/// have slopes in [0, 1]; sigmoid keeps its native [0, 1] co-domain.
#[derive(Debug, Clone)]
pub struct NeuralNetwork {
    layers: Vec<Layer>,
    input_dim: usize,
}

#[derive(Deserialize)]
struct LayerDoc {
    #[serde(rename = "W")]
    w: Vec<Vec<f64>>,
    b: Vec<f64>,
    act: String,
}

#[derive(Deserialize)]
struct WeightsDoc {
    input_dim: usize,
    layers: Vec<LayerDoc>,
    #[serde(default)]
    reference_io: Vec<ReferenceIo>,
}

#[derive(Deserialize, Clone)]
pub struct ReferenceIo {
    pub input: Vec<f64>,
    pub output: Vec<f64>,
}

impl NeuralNetwork {
    pub fn new(layers: Vec<Layer>, input_dim: usize) -> Result<Self, NnError> {
        let mut prev = input_dim;
        for (k, layer) in layers.iter().enumerate() {
            if layer.weight.ncols() != prev {
                return Err(NnError::DimChainError {
                    layer: k,
                    rows: layer.weight.nrows(),
                    cols: layer.weight.ncols(),
                    expected: prev,
                });
            }
            if layer.bias.len() != layer.weight.nrows() {
                return Err(NnError::DimChainError {
                    layer: k,
                    rows: layer.weight.nrows(),
                    cols: layer.bias.len(),
                    expected: layer.weight.nrows(),
                });
            }
            prev = layer.weight.nrows();
        }
        if let Some(last) = layers.last() {
            if last.act != Activation::Identity {
                return Err(NnError::SchemaError(
                    "final layer activation must be identity".into(),
                ));
            }
        }
        Ok(Self { layers, input_dim })
    }

    pub fn input_dim(&self) -> usize {
        self.input_dim
    }

    pub fn output_dim(&self) -> usize {
        self.layers.last().map_or(self.input_dim, |l| l.weight.nrows())
    }

    pub fn layers(&self) -> &[Layer] {
        &self.layers
    }

    pub fn forward(&self, x: &[f64]) -> Vec<f64> {
        let mut v = Array1::from_vec(x.to_vec());
        for layer in &self.layers {
            v = layer.weight.dot(&v) + &layer.bias;
            v.mapv_inplace(|z| layer.act.apply(z));
        }
        v.to_vec()
    }

    /// Loads the weights JSON schema
    /// `{"input_dim":…, "layers":[{"W":[[…]],"b":[…],"act":…}…]}` and
    /// checks the dimension chain and stored reference pairs.
    pub fn from_json(doc: &str) -> Result<Self, NnError> {
        let parsed: WeightsDoc =
            serde_json::from_str(doc).map_err(|e| NnError::SchemaError(e.to_string()))?;
        let mut layers = Vec::with_capacity(parsed.layers.len());
        for (k, l) in parsed.layers.iter().enumerate() {
            let act = match l.act.as_str() {
                "relu" => Activation::Relu,
                "tanh" => Activation::Tanh,
                "sigmoid" => Activation::Sigmoid,
                "identity" => Activation::Identity,
                other => return Err(NnError::UnsupportedActivation(other.into())),
            };
            let rows = l.w.len();
            if rows == 0 {
                return Err(NnError::SchemaError(format!("layer {k}: empty weight")));
            }
            let cols = l.w[0].len();
            if l.w.iter().any(|r| r.len() != cols) {
                return Err(NnError::SchemaError(format!(
                    "layer {k}: ragged weight matrix"
                )));
            }
            let flat: Vec<f64> = l.w.iter().flatten().copied().collect();
            let weight = Array2::from_shape_vec((rows, cols), flat)
                .map_err(|e| NnError::SchemaError(e.to_string()))?;
            layers.push(Layer {
                weight,
                bias: Array1::from_vec(l.b.clone()),
                act,
            });
        }
        let net = Self::new(layers, parsed.input_dim)?;
        for (k, re) in parsed.reference_io.iter().enumerate() {
            let out = net.forward(&re.input);
            let ok = out.len() == re.output.len()
                && out
                    .iter()
                    .zip(&re.output)
                    .all(|(a, b)| (a - b).abs() <= 1e-9 * (1.0 + b.abs()));
            if !ok {
                return Err(NnError::SchemaError(format!(
                    "reference pair {k} does not reproduce: got {out:?}"
                )));
            }
        }
        Ok(net)
    }
}

/// Affine bounds `C_lo x + d_lo <= N(x) <= C_up x + d_up` valid on `domain`.
#[derive(Debug, Clone)]
pub struct AffineBounds {
    pub c_lo: Array2<f64>,
    pub c_up: Array2<f64>,
    pub d_lo: Array1<f64>,
    pub d_up: Array1<f64>,
    pub domain: IntervalVector,
}

impl AffineBounds {
    /// Constant bounds (zero slopes), used to freeze a control box over a
    /// zero-order-hold period.
    pub fn constant(u: &IntervalVector, domain: IntervalVector) -> Self {
        let p = u.dim();
        let n = domain.dim();
        AffineBounds {
            c_lo: Array2::zeros((p, n)),
            c_up: Array2::zeros((p, n)),
            d_lo: u.lo(),
            d_up: u.hi(),
            domain,
        }
    }

    /// Exact affine bounds for a linear feedback `u = K x + k0`.
    pub fn exact_linear(k: &Array2<f64>, k0: &Array1<f64>, domain: IntervalVector) -> Self {
        AffineBounds {
            c_lo: k.clone(),
            c_up: k.clone(),
            d_lo: k0.clone(),
            d_up: k0.clone(),
            domain,
        }
    }

    /// Sign-split evaluation on a sub-box `[x, x_hat]` of the domain:
    /// lower is `[C_lo]^+ x + [C_lo]^- x_hat + d_lo`, upper swaps the roles.
    pub fn bounds_on(&self, x: &IntervalVector) -> Result<IntervalVector, NnError> {
        if !self.domain.contains_box(&x.inflate(1e-12)) && !self.domain.contains_box(x) {
            return Err(NnError::OutsideLocalization);
        }
        Ok(self.bounds_on_unchecked(x))
    }

    pub fn bounds_on_unchecked(&self, x: &IntervalVector) -> IntervalVector {
        let lo = x.lo();
        let hi = x.hi();
        let (clp, cln) = pos_neg_split(&self.c_lo);
        let (cup, cun) = pos_neg_split(&self.c_up);
        let out_lo = clp.dot(&lo) + cln.dot(&hi) + &self.d_lo;
        let out_hi = cup.dot(&hi) + cun.dot(&lo) + &self.d_up;
        IntervalVector::from_bounds(out_lo.as_slice().unwrap(), out_hi.as_slice().unwrap())
            .expect("affine bounds produced an inverted interval")
    }

    /// Concretization over the full generation domain.
    pub fn concretize(&self) -> IntervalVector {
        self.bounds_on_unchecked(&self.domain)
    }

    /// Composes with an affine feature map `z = F x + f0` applied before the
    /// network, re-expressing the bounds in `x`-space. The sign split happens
    /// at evaluation time, after composition.
    pub fn compose_feature_map(
        &self,
        f: &Array2<f64>,
        f0: &Array1<f64>,
        x_domain: IntervalVector,
    ) -> Self {
        AffineBounds {
            c_lo: self.c_lo.dot(f),
            c_up: self.c_up.dot(f),
            d_lo: &self.d_lo + &self.c_lo.dot(f0),
            d_up: &self.d_up + &self.c_up.dot(f0),
            domain: x_domain,
        }
    }
}

/// Interval bound propagation: a layerwise forward pass with exact affine
/// images and monotone activation images.
pub fn nn_ibp(net: &NeuralNetwork, x: &IntervalVector) -> Result<IntervalVector, NnError> {
    if x.dim() != net.input_dim {
        return Err(NnError::DimensionMismatch {
            expected: net.input_dim,
            got: x.dim(),
        });
    }
    let mut cur = x.clone();
    for layer in &net.layers {
        let pre = interval_linear_map(&layer.weight, &cur)?;
        let mut out = Vec::with_capacity(pre.dim());
        for i in 0..pre.dim() {
            let shifted = Interval::new(
                pre[i].lo() + layer.bias[i],
                pre[i].hi() + layer.bias[i],
            )?;
            out.push(layer.act.apply_interval(shifted));
        }
        cur = IntervalVector::new(out);
    }
    Ok(cur)
}

/// How pre-activation bounds are obtained during the backward pass.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum PreActivationMode {
    /// Full backward pass per intermediate layer (tighter, slower).
    #[default]
    Crown,
    /// Forward interval propagation (looser, faster).
    Ibp,
}

#[derive(Debug, Clone, Copy, Default)]
pub struct CrownConfig {
    pub pre_activation: PreActivationMode,
}

/// Per-neuron linear relaxation `a_l z + b_l <= act(z) <= a_u z + b_u`
/// on the pre-activation range `[l, u]`.
#[derive(Debug, Clone, Copy)]
struct Relaxation {
    a_l: f64,
    b_l: f64,
    a_u: f64,
    b_u: f64,
}

fn relax(act: Activation, l: f64, u: f64) -> Relaxation {
    debug_assert!(l <= u);
    match act {
        Activation::Identity => Relaxation {
            a_l: 1.0,
            b_l: 0.0,
            a_u: 1.0,
            b_u: 0.0,
        },
        Activation::Relu => {
            if l >= 0.0 {
                Relaxation {
                    a_l: 1.0,
                    b_l: 0.0,
                    a_u: 1.0,
                    b_u: 0.0,
                }
            } else if u <= 0.0 {
                Relaxation {
                    a_l: 0.0,
                    b_l: 0.0,
                    a_u: 0.0,
                    b_u: 0.0,
                }
            } else {
                // unstable: upper chord, adaptive lower slope
                let a_u = u / (u - l);
                let b_u = -l * u / (u - l);
                let a_l = if u.abs() >= l.abs() { 1.0 } else { 0.0 };
                Relaxation {
                    a_l,
                    b_l: 0.0,
                    a_u,
                    b_u,
                }
            }
        }
        Activation::Tanh | Activation::Sigmoid => s_shaped_relaxation(act, l, u),
    }
}

/// Sound relaxation of an s-shaped activation (convex below 0, concave
/// above). One-sided ranges use the chord on the convex/concave side and a
/// midpoint tangent on the other; ranges straddling the inflection use
/// binary-searched tangent lines anchored at each endpoint.
fn s_shaped_relaxation(act: Activation, l: f64, u: f64) -> Relaxation {
    let f = |z: f64| act.apply(z);
    let df = |z: f64| act.derivative(z);
    if (u - l).abs() < 1e-12 {
        let a = df(l);
        return Relaxation {
            a_l: a,
            b_l: f(l) - a * l,
            a_u: a,
            b_u: f(u) - a * u,
        };
    }
    let chord = (f(u) - f(l)) / (u - l);
    if u <= 0.0 {
        // convex region: chord above, midpoint tangent below
        let m = 0.5 * (l + u);
        let a_l = df(m);
        Relaxation {
            a_l,
            b_l: f(m) - a_l * m,
            a_u: chord,
            b_u: f(l) - chord * l,
        }
    } else if l >= 0.0 {
        // concave region: chord below, midpoint tangent above
        let m = 0.5 * (l + u);
        let a_u = df(m);
        Relaxation {
            a_l: chord,
            b_l: f(l) - chord * l,
            a_u,
            b_u: f(m) - a_u * m,
        }
    } else {
        // straddling the inflection point: the upper line is the tangent on
        // the concave branch passing through (l, f(l)); the lower line is
        // the tangent on the convex branch through (u, f(u)); either falls
        // back to the endpoint chord when the tangency leaves the range
        let (a_u, b_u) = match tangent_through(&f, &df, l, 0.0, u) {
            Some(d) => (df(d), f(l) - df(d) * l),
            None => (chord, f(l) - chord * l),
        };
        let (a_l, b_l) = match tangent_through(&f, &df, u, l, 0.0) {
            Some(d) => (df(d), f(u) - df(d) * u),
            None => (chord, f(l) - chord * l),
        };
        Relaxation { a_l, b_l, a_u, b_u }
    }
}

/// Binary search for `d` in `[lo, hi]` such that the tangent line at `d`
/// passes through `(anchor, f(anchor))`: solves
/// `r(d) = f(d) + f'(d)(anchor - d) - f(anchor) = 0`.
/// The residual is monotone in `d` over one branch of an s-shaped function;
/// returns `None` when no root lies in the range.
fn tangent_through(
    f: &impl Fn(f64) -> f64,
    df: &impl Fn(f64) -> f64,
    anchor: f64,
    mut lo: f64,
    mut hi: f64,
) -> Option<f64> {
    let resid = |d: f64| f(d) + df(d) * (anchor - d) - f(anchor);
    let (r_lo, r_hi) = (resid(lo), resid(hi));
    if r_lo == 0.0 {
        return Some(lo);
    }
    if r_hi == 0.0 {
        return Some(hi);
    }
    if r_lo.signum() == r_hi.signum() {
        return None;
    }
    for _ in 0..40 {
        let mid = 0.5 * (lo + hi);
        if (hi - lo).abs() < 1e-9 {
            break;
        }
        if resid(mid).signum() == r_lo.signum() {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Some(0.5 * (lo + hi))
}

/// CROWN-style backward linear relaxation over a box.
pub fn nn_crown(net: &NeuralNetwork, x: &IntervalVector) -> Result<AffineBounds, NnError> {
    nn_crown_with(net, x, CrownConfig::default())
}

pub fn nn_crown_with(
    net: &NeuralNetwork,
    x: &IntervalVector,
    cfg: CrownConfig,
) -> Result<AffineBounds, NnError> {
    if x.dim() != net.input_dim {
        return Err(NnError::DimensionMismatch {
            expected: net.input_dim,
            got: x.dim(),
        });
    }
    let k = net.layers.len();
    // pre-activation bounds per layer
    let mut pre: Vec<IntervalVector> = Vec::with_capacity(k);
    match cfg.pre_activation {
        PreActivationMode::Ibp => {
            let mut cur = x.clone();
            for layer in &net.layers {
                let lin = interval_linear_map(&layer.weight, &cur)?;
                let mut shifted = Vec::with_capacity(lin.dim());
                for i in 0..lin.dim() {
                    shifted.push(Interval::new(
                        lin[i].lo() + layer.bias[i],
                        lin[i].hi() + layer.bias[i],
                    )?);
                }
                let pre_box = IntervalVector::new(shifted);
                cur = IntervalVector::new(
                    (0..pre_box.dim())
                        .map(|i| layer.act.apply_interval(pre_box[i]))
                        .collect(),
                );
                pre.push(pre_box);
            }
        }
        PreActivationMode::Crown => {
            for j in 0..k {
                let (c_lo, c_up, d_lo, d_up) = backward_bounds(net, j, &pre, x)?;
                let ab = AffineBounds {
                    c_lo,
                    c_up,
                    d_lo,
                    d_up,
                    domain: x.clone(),
                };
                pre.push(ab.bounds_on_unchecked(x));
            }
        }
    }
    let (c_lo, c_up, d_lo, d_up) = backward_bounds(net, k, &pre, x)?;
    Ok(AffineBounds {
        c_lo,
        c_up,
        d_lo,
        d_up,
        domain: x.clone(),
    })
}

/// Backward pass expressing the pre-activation of layer `target` (or the
/// network output when `target == k`) as affine bounds in the input.
#[allow(clippy::type_complexity)]
fn backward_bounds(
    net: &NeuralNetwork,
    target: usize,
    pre: &[IntervalVector],
    _x: &IntervalVector,
) -> Result<(Array2<f64>, Array2<f64>, Array1<f64>, Array1<f64>), NnError> {
    // start from the affine map of layer `target` (its pre-activation), or
    // from the final layer when `target == k` (the network output, since the
    // last activation is the identity)
    let start = if target == net.layers.len() {
        target - 1
    } else {
        target
    };
    let layer = &net.layers[start];
    let mut c_lo = layer.weight.clone();
    let mut c_up = layer.weight.clone();
    let mut d_lo = layer.bias.clone();
    let mut d_up = layer.bias.clone();
    // walk back through layers start-1 .. 0, passing through activations
    for j in (0..start).rev() {
        let lj = &net.layers[j];
        let pj = &pre[j];
        let width = lj.weight.nrows();
        // relaxations for activation of layer j
        let relaxations: Vec<Relaxation> = (0..width)
            .map(|i| relax(lj.act, pj[i].lo(), pj[i].hi()))
            .collect();
        // compose: for the lower bound, positive coefficients take the lower
        // relaxation line, negative ones the upper line
        let rows = c_lo.nrows();
        let mut new_c_lo = Array2::zeros((rows, width));
        let mut new_c_up = Array2::zeros((rows, width));
        for r in 0..rows {
            for i in 0..width {
                let rel = relaxations[i];
                let cl = c_lo[(r, i)];
                if cl >= 0.0 {
                    new_c_lo[(r, i)] = cl * rel.a_l;
                    d_lo[r] += cl * rel.b_l;
                } else {
                    new_c_lo[(r, i)] = cl * rel.a_u;
                    d_lo[r] += cl * rel.b_u;
                }
                let cu = c_up[(r, i)];
                if cu >= 0.0 {
                    new_c_up[(r, i)] = cu * rel.a_u;
                    d_up[r] += cu * rel.b_u;
                } else {
                    new_c_up[(r, i)] = cu * rel.a_l;
                    d_up[r] += cu * rel.b_l;
                }
            }
        }
        // through the affine map of layer j
        c_lo = new_c_lo.dot(&lj.weight);
        c_up = new_c_up.dot(&lj.weight);
        d_lo = &d_lo + &new_c_lo.dot(&lj.bias);
        d_up = &d_up + &new_c_up.dot(&lj.bias);
    }
    Ok((c_lo, c_up, d_lo, d_up))
}

/// Localized inclusion function from affine bounds (the sign-split rule).
pub fn affine_to_ifn(ab: AffineBounds) -> InclusionFn {
    let domain = ab.domain.clone();
    let f = move |x: &IntervalVector| {
        ab.bounds_on(x)
            .map_err(|_| crate::error::InclusionError::OutsideLocalization)
    };
    InclusionFn::from_custom(Arc::new(f), Some(domain), false)
}

/// Loads a network from a weights document string.
pub fn load_network(doc: &str) -> Result<NeuralNetwork, NnError> {
    NeuralNetwork::from_json(doc)
}
