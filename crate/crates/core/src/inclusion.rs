//! Inclusion-function constructors and the brute-force minimal oracle.
//!
//! An inclusion function maps an input box to an output box guaranteed to
//! contain the image of the box. Constructors here cover the natural
//! interval extension, Jacobian-based cornered and mixed-cornered bounds
//! anchored at box corners, decomposition-based bounds, and intersections.

use std::cell::RefCell;
use std::sync::Arc;

use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::InclusionError;
use crate::expr::{EvalScratch, ExprGraph, Jacobians, VarGroup};
use crate::interval::{Interval, IntervalVector};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CornerSide {
    Lo,
    Hi,
}

/// A box corner: one side selector per coordinate.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Corner(pub Vec<CornerSide>);

impl Corner {
    pub fn all_lo(n: usize) -> Self {
        Corner(vec![CornerSide::Lo; n])
    }

    pub fn all_hi(n: usize) -> Self {
        Corner(vec![CornerSide::Hi; n])
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn side(&self, i: usize) -> CornerSide {
        self.0[i]
    }

    /// All `2^n` vertex corners (small `n` only).
    pub fn vertices(n: usize) -> Vec<Corner> {
        assert!(n <= 12, "vertex enumeration limited to n <= 12");
        (0..(1usize << n))
            .map(|mask| {
                Corner(
                    (0..n)
                        .map(|j| {
                            if mask >> j & 1 == 1 {
                                CornerSide::Hi
                            } else {
                                CornerSide::Lo
                            }
                        })
                        .collect(),
                )
            })
            .collect()
    }

    /// The corner point of a box.
    pub fn point_of(&self, x: &IntervalVector) -> Vec<f64> {
        (0..self.len())
            .map(|j| match self.side(j) {
                CornerSide::Lo => x[j].lo(),
                CornerSide::Hi => x[j].hi(),
            })
            .collect()
    }
}

type CustomEval =
    dyn Fn(&IntervalVector) -> Result<IntervalVector, InclusionError> + Send + Sync;

/// A decomposition function `d(x, x_hat)`, order-preserving in the first
/// argument and order-reversing in the second.
pub type DecompFn = dyn Fn(&[f64], &[f64]) -> Vec<f64> + Send + Sync;

enum Kind {
    Natural(Arc<ExprGraph>),
    JacCornered {
        graph: Arc<ExprGraph>,
        jacs: Arc<Jacobians>,
        corner: Corner,
        mixed: bool,
    },
    Decomposition {
        d: Arc<DecompFn>,
    },
    Intersection(Box<InclusionFn>, Box<InclusionFn>),
    Custom(Arc<CustomEval>),
}

/// An inclusion function over state boxes, with optional localization domain
/// and thin/monotone metadata tags.
pub struct InclusionFn {
    kind: Kind,
    localization: Option<IntervalVector>,
    thin: bool,
    monotone: bool,
}

impl InclusionFn {
    pub fn localization(&self) -> Option<&IntervalVector> {
        self.localization.as_ref()
    }

    pub fn is_thin(&self) -> bool {
        self.thin
    }

    pub fn is_monotone(&self) -> bool {
        self.monotone
    }

    pub fn eval(&self, x: &IntervalVector) -> Result<IntervalVector, InclusionError> {
        if let Some(dom) = &self.localization {
            if !dom.contains_box(x) {
                return Err(InclusionError::OutsideLocalization);
            }
        }
        match &self.kind {
            Kind::Natural(g) => Ok(g.eval_interval(
                x,
                &IntervalVector::empty(),
                &IntervalVector::empty(),
            )?),
            Kind::JacCornered {
                graph,
                jacs,
                corner,
                mixed,
            } => cornered_eval(graph, jacs, corner, *mixed, x),
            Kind::Decomposition { d } => {
                let lo = d(&x.lo_vec(), &x.hi_vec());
                let hi = d(&x.hi_vec(), &x.lo_vec());
                IntervalVector::from_bounds(&lo, &hi).map_err(Into::into)
            }
            Kind::Intersection(a, b) => {
                let ra = a.eval(x)?;
                let rb = b.eval(x)?;
                intersect_boxes(&ra, &rb)
            }
            Kind::Custom(f) => f(x),
        }
    }

    /// Wraps a custom evaluator (used for localized affine bounds).
    pub fn from_custom(
        f: Arc<CustomEval>,
        localization: Option<IntervalVector>,
        thin: bool,
    ) -> Self {
        InclusionFn {
            kind: Kind::Custom(f),
            localization,
            thin,
            monotone: false,
        }
    }
}

/// Natural inclusion function: interval evaluation of the expression graph.
pub fn natural_ifn(g: Arc<ExprGraph>) -> InclusionFn {
    InclusionFn {
        kind: Kind::Natural(g),
        localization: None,
        thin: true,
        monotone: true,
    }
}

/// Jacobian-based cornered inclusion function anchored at `corner`.
///
/// For the all-lo corner this is exactly
/// `[ -[Jlo]^- , [Jlo]^- ; -[Jhi]^+ , [Jhi]^+ ] [x; x_hat] + [g(x); g(x)]`,
/// generalized to other corners by column-wise swaps of the roles of the
/// lower and upper Jacobian bounds.
pub fn jac_cornered_ifn(g: Arc<ExprGraph>, corner: Corner) -> Result<InclusionFn, InclusionError> {
    let (n, p, q) = g.dims();
    assert_eq!(p + q, 0, "cornered inclusion functions take state-only graphs");
    assert_eq!(corner.len(), n, "corner length must equal state dimension");
    let jacs = Arc::new(g.jacobians()?);
    Ok(InclusionFn {
        kind: Kind::JacCornered {
            graph: g,
            jacs,
            corner,
            mixed: false,
        },
        localization: None,
        thin: true,
        monotone: false,
    })
}

/// Mixed Jacobian-based cornered inclusion function: the column for
/// coordinate `j` uses Jacobian bounds over the box with coordinates after
/// `j` collapsed onto the corner, which tightens the plain cornered bounds.
pub fn jac_mixed_cornered_ifn(
    g: Arc<ExprGraph>,
    corner: Corner,
) -> Result<InclusionFn, InclusionError> {
    let (n, p, q) = g.dims();
    assert_eq!(p + q, 0, "cornered inclusion functions take state-only graphs");
    assert_eq!(corner.len(), n, "corner length must equal state dimension");
    let jacs = Arc::new(g.jacobians()?);
    Ok(InclusionFn {
        kind: Kind::JacCornered {
            graph: g,
            jacs,
            corner,
            mixed: true,
        },
        localization: None,
        thin: true,
        monotone: false,
    })
}

/// Intersection of the corner family (plain or mixed) over the given corners.
pub fn jac_cornered_multi(
    g: Arc<ExprGraph>,
    corners: &[Corner],
    mixed: bool,
) -> Result<InclusionFn, InclusionError> {
    assert!(!corners.is_empty());
    let mut it = corners.iter();
    let first = it.next().unwrap().clone();
    let mut acc = if mixed {
        jac_mixed_cornered_ifn(Arc::clone(&g), first)?
    } else {
        jac_cornered_ifn(Arc::clone(&g), first)?
    };
    for c in it {
        let next = if mixed {
            jac_mixed_cornered_ifn(Arc::clone(&g), c.clone())?
        } else {
            jac_cornered_ifn(Arc::clone(&g), c.clone())?
        };
        acc = intersect_ifn(acc, next);
    }
    Ok(acc)
}

/// Componentwise intersection of two inclusion functions (lower bounds take
/// the max, upper bounds the min). An empty component is surfaced as an
/// error, never clamped.
pub fn intersect_ifn(a: InclusionFn, b: InclusionFn) -> InclusionFn {
    let localization = match (&a.localization, &b.localization) {
        (None, None) => None,
        (Some(d), None) | (None, Some(d)) => Some(d.clone()),
        (Some(da), Some(db)) => da.intersect(db),
    };
    let thin = a.thin && b.thin;
    InclusionFn {
        kind: Kind::Intersection(Box::new(a), Box::new(b)),
        localization,
        thin,
        monotone: false,
    }
}

fn intersect_boxes(
    a: &IntervalVector,
    b: &IntervalVector,
) -> Result<IntervalVector, InclusionError> {
    let mut out = Vec::with_capacity(a.dim());
    for i in 0..a.dim() {
        let lo = a[i].lo().max(b[i].lo());
        let hi = a[i].hi().min(b[i].hi());
        if lo > hi {
            return Err(InclusionError::EmptyResult {
                component: i,
                lo,
                hi,
            });
        }
        out.push(Interval::new(lo, hi)?);
    }
    Ok(IntervalVector::new(out))
}

/// Wraps a decomposition function into a thin monotone inclusion function,
/// spot-checking the order-preserving/order-reversing properties on seeded
/// random samples from `check_box` at registration.
pub fn decomposition_ifn(
    d: Arc<DecompFn>,
    check_box: &IntervalVector,
    seed: u64,
) -> Result<InclusionFn, InclusionError> {
    let n = check_box.dim();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let sample = |rng: &mut ChaCha8Rng| -> Vec<f64> {
        (0..n)
            .map(|i| rng.gen_range(check_box[i].lo()..=check_box[i].hi()))
            .collect()
    };
    let tol = 1e-9;
    for trial in 0..256 {
        let a = sample(&mut rng);
        let b = sample(&mut rng);
        let lo: Vec<f64> = a.iter().zip(&b).map(|(&x, &y)| x.min(y)).collect();
        let hi: Vec<f64> = a.iter().zip(&b).map(|(&x, &y)| x.max(y)).collect();
        let y = sample(&mut rng);
        // (b) order-preserving in the first argument
        let d_lo = d(&lo, &y);
        let d_hi = d(&hi, &y);
        if d_lo.iter().zip(&d_hi).any(|(&l, &h)| l > h + tol) {
            return Err(InclusionError::DecompositionPropertyViolation {
                property: "order-preserving in first argument",
                trial,
            });
        }
        // (c) order-reversing in the second argument
        let d_y_hi = d(&y, &hi);
        let d_y_lo = d(&y, &lo);
        if d_y_hi.iter().zip(&d_y_lo).any(|(&h, &l)| h > l + tol) {
            return Err(InclusionError::DecompositionPropertyViolation {
                property: "order-reversing in second argument",
                trial,
            });
        }
    }
    Ok(InclusionFn {
        kind: Kind::Decomposition { d },
        localization: None,
        thin: true,
        monotone: true,
    })
}

const BRUTE_FORCE_MAX_DIM: usize = 4;

/// Grid approximation of the minimal inclusion function; under-approximates
/// the true range and is used only as a test oracle.
pub fn brute_force_minimal(
    g: &ExprGraph,
    x: &IntervalVector,
    grid_density: usize,
) -> Result<IntervalVector, InclusionError> {
    Ok(brute_force_with_extremes(g, x, grid_density)?.range)
}

/// Oracle output plus the grid points attaining each output extreme.
pub struct OracleRange {
    pub range: IntervalVector,
    pub argmin: Vec<Vec<f64>>,
    pub argmax: Vec<Vec<f64>>,
}

pub fn brute_force_with_extremes(
    g: &ExprGraph,
    x: &IntervalVector,
    grid_density: usize,
) -> Result<OracleRange, InclusionError> {
    let (n, p, q) = g.dims();
    assert_eq!(p + q, 0, "oracle takes state-only graphs");
    if n > BRUTE_FORCE_MAX_DIM {
        return Err(InclusionError::DimensionTooLarge {
            dim: n,
            max: BRUTE_FORCE_MAX_DIM,
        });
    }
    let per_dim = ((grid_density as f64).powf(1.0 / n as f64).floor() as usize).max(2);
    let m = g.n_outputs();
    let mut lo = vec![f64::INFINITY; m];
    let mut hi = vec![f64::NEG_INFINITY; m];
    let mut argmin = vec![vec![0.0; n]; m];
    let mut argmax = vec![vec![0.0; n]; m];
    let mut idx = vec![0usize; n];
    let mut pt = vec![0.0; n];
    let mut scratch = EvalScratch::default();
    loop {
        for j in 0..n {
            let t = idx[j] as f64 / (per_dim - 1) as f64;
            pt[j] = x[j].lo() + t * x[j].width();
        }
        let vals = g.eval_point_with(&pt, &[], &[], &mut scratch)?;
        for k in 0..m {
            if vals[k] < lo[k] {
                lo[k] = vals[k];
                argmin[k].copy_from_slice(&pt);
            }
            if vals[k] > hi[k] {
                hi[k] = vals[k];
                argmax[k].copy_from_slice(&pt);
            }
        }
        // advance the multi-index
        let mut j = 0;
        loop {
            if j == n {
                return Ok(OracleRange {
                    range: IntervalVector::from_bounds(&lo, &hi)?,
                    argmin,
                    argmax,
                });
            }
            idx[j] += 1;
            if idx[j] < per_dim {
                break;
            }
            idx[j] = 0;
            j += 1;
        }
    }
}

/// Noise floor below which an excess width is treated as exactly minimal.
pub const EXCESS_NOISE_FLOOR: f64 = 1e-12;

/// Least-squares slope of `log(excess width)` against `log(box width)`,
/// where excess is the inclusion-function width minus the oracle range
/// width. Returns `+inf` when every excess sits at the noise floor
/// (the inclusion function is minimal on the sweep) and `NaN` when fewer
/// than two usable points remain.
pub fn estimate_convergence_order(
    ifn: &InclusionFn,
    g: &ExprGraph,
    center: &[f64],
    widths: &[f64],
) -> Result<f64, InclusionError> {
    assert!(
        widths.windows(2).all(|w| w[1] < w[0]) && widths.iter().all(|&w| w > 0.0),
        "widths must be positive and strictly decreasing"
    );
    let n = center.len();
    let mut points = Vec::new();
    let mut all_minimal = true;
    for &w in widths {
        let lo: Vec<f64> = center.iter().map(|c| c - 0.5 * w).collect();
        let hi: Vec<f64> = center.iter().map(|c| c + 0.5 * w).collect();
        let x = IntervalVector::from_bounds(&lo, &hi)?;
        let out = ifn.eval(&x)?;
        let oracle = brute_force_minimal(g, &x, 10_000usize.pow(n.min(2) as u32))?;
        let ifn_w = (0..out.dim()).map(|i| out[i].width()).fold(0.0, f64::max);
        let true_w = (0..oracle.dim())
            .map(|i| oracle[i].width())
            .fold(0.0, f64::max);
        let excess = ifn_w - true_w;
        if excess > EXCESS_NOISE_FLOOR {
            all_minimal = false;
            points.push((w.ln(), excess.ln()));
        }
    }
    if all_minimal {
        return Ok(f64::INFINITY);
    }
    if points.len() < 2 {
        return Ok(f64::NAN);
    }
    // least squares slope
    let n_pts = points.len() as f64;
    let sx: f64 = points.iter().map(|p| p.0).sum();
    let sy: f64 = points.iter().map(|p| p.1).sum();
    let sxx: f64 = points.iter().map(|p| p.0 * p.0).sum();
    let sxy: f64 = points.iter().map(|p| p.0 * p.1).sum();
    Ok((n_pts * sxy - sx * sy) / (n_pts * sxx - sx * sx))
}

thread_local! {
    static CORNERED_SCRATCH: RefCell<EvalScratch> = RefCell::new(EvalScratch::default());
}

/// Shared evaluation of the (mixed) cornered form.
fn cornered_eval(
    graph: &ExprGraph,
    jacs: &Jacobians,
    corner: &Corner,
    mixed: bool,
    x: &IntervalVector,
) -> Result<IntervalVector, InclusionError> {
    CORNERED_SCRATCH.with(|cell| {
        let mut scratch = cell.borrow_mut();
        cornered_eval_with(graph, jacs, corner, mixed, x, &mut scratch)
    })
}

fn cornered_eval_with(
    graph: &ExprGraph,
    jacs: &Jacobians,
    corner: &Corner,
    mixed: bool,
    x: &IntervalVector,
    scratch: &mut EvalScratch,
) -> Result<IntervalVector, InclusionError> {
    let n = x.dim();
    let m = graph.n_outputs();
    let empty = IntervalVector::empty();

    // Column-wise Jacobian bounds: the plain form evaluates every column over
    // the full box, the mixed form pins coordinates after j onto the corner.
    let mut jlo = Array2::<f64>::zeros((m, n));
    let mut jhi = Array2::<f64>::zeros((m, n));
    if mixed {
        for j in 0..n {
            let mut pinned = x.clone();
            for (k, side) in corner.0.iter().enumerate().skip(j + 1) {
                let v = match side {
                    CornerSide::Lo => x[k].lo(),
                    CornerSide::Hi => x[k].hi(),
                };
                pinned.set(k, Interval::point(v));
            }
            let col =
                jacs.column_bounds(VarGroup::State, j, &pinned, &empty, &empty, scratch)?;
            for i in 0..m {
                jlo[(i, j)] = col[i].lo();
                jhi[(i, j)] = col[i].hi();
            }
        }
    } else {
        let vals = jacs
            .wrt_x
            .eval_interval_with(x, &empty, &empty, scratch)?;
        for i in 0..m {
            for j in 0..n {
                let v = vals[i * n + j];
                jlo[(i, j)] = v.lo();
                jhi[(i, j)] = v.hi();
            }
        }
    }

    let c = corner.point_of(x);
    let gc = graph.eval_point_with(&c, &[], &[], scratch)?;

    let mut lo_out = vec![0.0; m];
    let mut hi_out = vec![0.0; m];
    for i in 0..m {
        let mut lo_acc = gc[i];
        let mut hi_acc = gc[i];
        for j in 0..n {
            // lower bound: take the Jacobian side that under-estimates the
            // increment from the corner; upper bound takes the opposite side
            let (j_star, j_ss) = match corner.side(j) {
                CornerSide::Lo => (jlo[(i, j)], jhi[(i, j)]),
                CornerSide::Hi => (jhi[(i, j)], jlo[(i, j)]),
            };
            lo_acc += j_star.max(0.0) * x[j].lo() + j_star.min(0.0) * x[j].hi() - j_star * c[j];
            hi_acc += j_ss.min(0.0) * x[j].lo() + j_ss.max(0.0) * x[j].hi() - j_ss * c[j];
        }
        lo_out[i] = lo_acc;
        hi_out[i] = hi_acc;
    }
    IntervalVector::from_bounds(&lo_out, &hi_out).map_err(Into::into)
}

pub mod comparison {
    //! Centered and mixed-centered baseline boxes, kept only for the
    //! inclusion-method comparison report; not first-class constructors.

    use super::*;

    /// Midpoint form `g(m) + J (box - m)` with an interval Jacobian.
    pub fn centered_box(
        g: &ExprGraph,
        jacs: &Jacobians,
        x: &IntervalVector,
    ) -> Result<IntervalVector, InclusionError> {
        let empty = IntervalVector::empty();
        let jb = jacs.bounds(x, &empty, &empty)?;
        anchored_box(g, &jb.jx.lo, &jb.jx.hi, x)
    }

    /// Midpoint form where the Jacobian column for coordinate `j` is
    /// evaluated with coordinates after `j` collapsed onto the midpoint.
    pub fn mixed_centered_box(
        g: &ExprGraph,
        jacs: &Jacobians,
        x: &IntervalVector,
    ) -> Result<IntervalVector, InclusionError> {
        let n = x.dim();
        let m = g.n_outputs();
        let empty = IntervalVector::empty();
        let mut scratch = EvalScratch::default();
        let mut jlo = Array2::<f64>::zeros((m, n));
        let mut jhi = Array2::<f64>::zeros((m, n));
        for j in 0..n {
            let mut pinned = x.clone();
            for k in j + 1..n {
                pinned.set(k, Interval::point(x[k].mid()));
            }
            let col =
                jacs.column_bounds(VarGroup::State, j, &pinned, &empty, &empty, &mut scratch)?;
            for i in 0..m {
                jlo[(i, j)] = col[i].lo();
                jhi[(i, j)] = col[i].hi();
            }
        }
        anchored_box(g, &jlo, &jhi, x)
    }

    fn anchored_box(
        g: &ExprGraph,
        jlo: &Array2<f64>,
        jhi: &Array2<f64>,
        x: &IntervalVector,
    ) -> Result<IntervalVector, InclusionError> {
        let mid = x.mid_vec();
        let gm = g.eval_point(&mid, &[], &[])?;
        let m = g.n_outputs();
        let mut lo = vec![0.0; m];
        let mut hi = vec![0.0; m];
        for i in 0..m {
            let mut acc = Interval::point(gm[i]);
            for j in 0..x.dim() {
                let jij = Interval::new(jlo[(i, j)], jhi[(i, j)])?;
                let dev = Interval::new(x[j].lo() - mid[j], x[j].hi() - mid[j])?;
                acc = acc.add(&jij.mul(&dev));
            }
            lo[i] = acc.lo();
            hi[i] = acc.hi();
        }
        IntervalVector::from_bounds(&lo, &hi).map_err(Into::into)
    }
}
