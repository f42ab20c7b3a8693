//! Interval arithmetic kernel and interval linear algebra.
//!
//! Every operation returns the exact range of the underlying map over its
//! interval arguments (minimal inclusion for the elementary operations), on
//! ordinary floats without directed rounding. An optional epsilon inflation
//! is available for callers that need slack against rounding.

use ndarray::{Array1, Array2};

use crate::error::IntervalError;

/// A closed real interval `[lo, hi]` with `lo <= hi`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Interval {
    lo: f64,
    hi: f64,
}

impl Interval {
    /// Creates `[lo, hi]`, rejecting `lo > hi` and non-finite endpoints.
    pub fn new(lo: f64, hi: f64) -> Result<Self, IntervalError> {
        if !lo.is_finite() || !hi.is_finite() {
            return Err(IntervalError::NonFiniteBound { lo, hi });
        }
        if lo > hi {
            return Err(IntervalError::InvertedBounds { lo, hi });
        }
        Ok(Self { lo, hi })
    }

    /// Degenerate interval `[x, x]`.
    pub fn point(x: f64) -> Self {
        Self { lo: x, hi: x }
    }

    /// Interval from two unordered endpoints.
    pub fn hull(a: f64, b: f64) -> Self {
        Self {
            lo: a.min(b),
            hi: a.max(b),
        }
    }

    pub fn lo(&self) -> f64 {
        self.lo
    }

    pub fn hi(&self) -> f64 {
        self.hi
    }

    pub fn width(&self) -> f64 {
        self.hi - self.lo
    }

    pub fn mid(&self) -> f64 {
        0.5 * (self.lo + self.hi)
    }

    pub fn contains(&self, x: f64) -> bool {
        self.lo <= x && x <= self.hi
    }

    pub fn contains_interval(&self, other: &Interval) -> bool {
        self.lo <= other.lo && other.hi <= self.hi
    }

    /// Intersection; `None` signals an empty result (never encoded as `lo > hi`).
    pub fn intersect(&self, other: &Interval) -> Option<Interval> {
        let lo = self.lo.max(other.lo);
        let hi = self.hi.min(other.hi);
        if lo <= hi {
            Some(Interval { lo, hi })
        } else {
            None
        }
    }

    /// Widens the interval to `1 + eps` times its width, centered at the midpoint.
    pub fn inflate(&self, eps: f64) -> Interval {
        let half = 0.5 * self.width() * (1.0 + eps);
        let m = self.mid();
        Interval {
            lo: m - half,
            hi: m + half,
        }
    }

    pub fn add(&self, rhs: &Interval) -> Interval {
        Interval {
            lo: self.lo + rhs.lo,
            hi: self.hi + rhs.hi,
        }
    }

    pub fn sub(&self, rhs: &Interval) -> Interval {
        Interval {
            lo: self.lo - rhs.hi,
            hi: self.hi - rhs.lo,
        }
    }

    pub fn neg(&self) -> Interval {
        Interval {
            lo: -self.hi,
            hi: -self.lo,
        }
    }

    pub fn mul(&self, rhs: &Interval) -> Interval {
        let cands = [
            self.lo * rhs.lo,
            self.lo * rhs.hi,
            self.hi * rhs.lo,
            self.hi * rhs.hi,
        ];
        Interval {
            lo: cands.iter().copied().fold(f64::INFINITY, f64::min),
            hi: cands.iter().copied().fold(f64::NEG_INFINITY, f64::max),
        }
    }

    pub fn scale(&self, c: f64) -> Interval {
        if c >= 0.0 {
            Interval {
                lo: c * self.lo,
                hi: c * self.hi,
            }
        } else {
            Interval {
                lo: c * self.hi,
                hi: c * self.lo,
            }
        }
    }

    pub fn div(&self, rhs: &Interval) -> Result<Interval, IntervalError> {
        if rhs.lo <= 0.0 && rhs.hi >= 0.0 {
            return Err(IntervalError::DivisionByZeroInterval {
                lo: rhs.lo,
                hi: rhs.hi,
            });
        }
        let recip = Interval {
            lo: 1.0 / rhs.hi,
            hi: 1.0 / rhs.lo,
        };
        Ok(self.mul(&recip))
    }

    /// Exact range of `x^k` for integer `k >= 0`.
    pub fn powi(&self, k: i32) -> Interval {
        debug_assert!(k >= 0);
        if k == 0 {
            return Interval::point(1.0);
        }
        if k % 2 == 1 {
            // odd powers are monotone
            return Interval {
                lo: self.lo.powi(k),
                hi: self.hi.powi(k),
            };
        }
        let a = self.lo.powi(k);
        let b = self.hi.powi(k);
        if self.lo >= 0.0 {
            Interval { lo: a, hi: b }
        } else if self.hi <= 0.0 {
            Interval { lo: b, hi: a }
        } else {
            Interval {
                lo: 0.0,
                hi: a.max(b),
            }
        }
    }

    /// Exact range of `x^2`.
    pub fn sq(&self) -> Interval {
        let a = self.lo * self.lo;
        let b = self.hi * self.hi;
        if self.lo >= 0.0 {
            Interval { lo: a, hi: b }
        } else if self.hi <= 0.0 {
            Interval { lo: b, hi: a }
        } else {
            Interval {
                lo: 0.0,
                hi: a.max(b),
            }
        }
    }

    pub fn sqrt(&self) -> Result<Interval, IntervalError> {
        if self.lo < 0.0 {
            return Err(IntervalError::DomainError {
                op: "sqrt",
                lo: self.lo,
                hi: self.hi,
            });
        }
        Ok(Interval {
            lo: self.lo.sqrt(),
            hi: self.hi.sqrt(),
        })
    }

    pub fn exp(&self) -> Interval {
        Interval {
            lo: self.lo.exp(),
            hi: self.hi.exp(),
        }
    }

    pub fn ln(&self) -> Result<Interval, IntervalError> {
        if self.lo <= 0.0 {
            return Err(IntervalError::DomainError {
                op: "log",
                lo: self.lo,
                hi: self.hi,
            });
        }
        Ok(Interval {
            lo: self.lo.ln(),
            hi: self.hi.ln(),
        })
    }

    /// Exact range of `sin` using the critical points `pi/2 + 2k*pi`.
    pub fn sin(&self) -> Interval {
        use std::f64::consts::{FRAC_PI_2, PI};
        if self.width() >= 2.0 * PI {
            return Interval { lo: -1.0, hi: 1.0 };
        }
        let (sa, sb) = (self.lo.sin(), self.hi.sin());
        let mut lo = sa.min(sb);
        let mut hi = sa.max(sb);
        // max of sin at pi/2 + 2k*pi inside the interval
        if contains_grid_point(self.lo, self.hi, FRAC_PI_2, 2.0 * PI) {
            hi = 1.0;
        }
        if contains_grid_point(self.lo, self.hi, -FRAC_PI_2, 2.0 * PI) {
            lo = -1.0;
        }
        Interval { lo, hi }
    }

    pub fn cos(&self) -> Interval {
        use std::f64::consts::PI;
        if self.width() >= 2.0 * PI {
            return Interval { lo: -1.0, hi: 1.0 };
        }
        let (ca, cb) = (self.lo.cos(), self.hi.cos());
        let mut lo = ca.min(cb);
        let mut hi = ca.max(cb);
        if contains_grid_point(self.lo, self.hi, 0.0, 2.0 * PI) {
            hi = 1.0;
        }
        if contains_grid_point(self.lo, self.hi, PI, 2.0 * PI) {
            lo = -1.0;
        }
        Interval { lo, hi }
    }

    /// Monotone `tan`; crossing a pole is an error rather than `[-inf, inf]`
    /// so that an unbounded result cannot silently poison an embedding run.
    pub fn tan(&self) -> Result<Interval, IntervalError> {
        use std::f64::consts::{FRAC_PI_2, PI};
        if contains_grid_point(self.lo, self.hi, FRAC_PI_2, PI) {
            return Err(IntervalError::TanSingularity {
                lo: self.lo,
                hi: self.hi,
            });
        }
        Ok(Interval {
            lo: self.lo.tan(),
            hi: self.hi.tan(),
        })
    }

    pub fn atan(&self) -> Interval {
        Interval {
            lo: self.lo.atan(),
            hi: self.hi.atan(),
        }
    }

    pub fn tanh(&self) -> Interval {
        Interval {
            lo: self.lo.tanh(),
            hi: self.hi.tanh(),
        }
    }

    pub fn sigmoid(&self) -> Interval {
        Interval {
            lo: sigmoid(self.lo),
            hi: sigmoid(self.hi),
        }
    }

    pub fn abs(&self) -> Interval {
        if self.lo >= 0.0 {
            *self
        } else if self.hi <= 0.0 {
            self.neg()
        } else {
            Interval {
                lo: 0.0,
                hi: (-self.lo).max(self.hi),
            }
        }
    }

    pub fn relu(&self) -> Interval {
        Interval {
            lo: self.lo.max(0.0),
            hi: self.hi.max(0.0),
        }
    }
}

pub fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

/// True when some `offset + k*period` lies inside `[lo, hi]`.
fn contains_grid_point(lo: f64, hi: f64, offset: f64, period: f64) -> bool {
    let k = ((lo - offset) / period).ceil();
    offset + k * period <= hi
}

/// A box in `R^n`: one interval per coordinate.
#[derive(Debug, Clone, PartialEq)]
pub struct IntervalVector {
    elems: Vec<Interval>,
}

impl IntervalVector {
    pub fn new(elems: Vec<Interval>) -> Self {
        Self { elems }
    }

    /// Builds a box from separate bound slices; errors on `lo > hi` anywhere.
    pub fn from_bounds(lo: &[f64], hi: &[f64]) -> Result<Self, IntervalError> {
        if lo.len() != hi.len() {
            return Err(IntervalError::DimensionMismatch {
                expected: lo.len(),
                got: hi.len(),
            });
        }
        let elems = lo
            .iter()
            .zip(hi)
            .map(|(&a, &b)| Interval::new(a, b))
            .collect::<Result<_, _>>()?;
        Ok(Self { elems })
    }

    /// Degenerate box at a point.
    pub fn from_point(x: &[f64]) -> Self {
        Self {
            elems: x.iter().map(|&v| Interval::point(v)).collect(),
        }
    }

    pub fn empty() -> Self {
        Self { elems: Vec::new() }
    }

    pub fn dim(&self) -> usize {
        self.elems.len()
    }

    pub fn get(&self, i: usize) -> Interval {
        self.elems[i]
    }

    pub fn set(&mut self, i: usize, v: Interval) {
        self.elems[i] = v;
    }

    pub fn iter(&self) -> impl Iterator<Item = &Interval> {
        self.elems.iter()
    }

    pub fn lo(&self) -> Array1<f64> {
        Array1::from_iter(self.elems.iter().map(|e| e.lo))
    }

    pub fn hi(&self) -> Array1<f64> {
        Array1::from_iter(self.elems.iter().map(|e| e.hi))
    }

    pub fn lo_vec(&self) -> Vec<f64> {
        self.elems.iter().map(|e| e.lo).collect()
    }

    pub fn hi_vec(&self) -> Vec<f64> {
        self.elems.iter().map(|e| e.hi).collect()
    }

    pub fn mid_vec(&self) -> Vec<f64> {
        self.elems.iter().map(|e| e.mid()).collect()
    }

    /// Max coordinate width.
    pub fn width(&self) -> f64 {
        self.elems.iter().map(|e| e.width()).fold(0.0, f64::max)
    }

    pub fn contains_point(&self, x: &[f64]) -> bool {
        self.dim() == x.len() && self.elems.iter().zip(x).all(|(e, &v)| e.contains(v))
    }

    pub fn contains_box(&self, other: &IntervalVector) -> bool {
        self.dim() == other.dim()
            && self
                .elems
                .iter()
                .zip(&other.elems)
                .all(|(a, b)| a.contains_interval(b))
    }

    pub fn intersect(&self, other: &IntervalVector) -> Option<IntervalVector> {
        if self.dim() != other.dim() {
            return None;
        }
        let elems = self
            .elems
            .iter()
            .zip(&other.elems)
            .map(|(a, b)| a.intersect(b))
            .collect::<Option<Vec<_>>>()?;
        Some(IntervalVector { elems })
    }

    pub fn inflate(&self, eps: f64) -> IntervalVector {
        IntervalVector {
            elems: self.elems.iter().map(|e| e.inflate(eps)).collect(),
        }
    }

    /// Replaces coordinate `i` by the corresponding coordinate of `src`,
    /// the face substitution used by embedding systems.
    pub fn with_coord_from(&self, i: usize, src: &IntervalVector) -> IntervalVector {
        let mut out = self.clone();
        out.elems[i] = src.elems[i];
        out
    }
}

impl std::ops::Index<usize> for IntervalVector {
    type Output = Interval;
    fn index(&self, i: usize) -> &Interval {
        &self.elems[i]
    }
}

/// Entrywise interval matrix, stored as endpoint matrices.
#[derive(Debug, Clone, PartialEq)]
pub struct IntervalMatrix {
    pub lo: Array2<f64>,
    pub hi: Array2<f64>,
}

impl IntervalMatrix {
    pub fn new(lo: Array2<f64>, hi: Array2<f64>) -> Result<Self, IntervalError> {
        if lo.dim() != hi.dim() {
            return Err(IntervalError::DimensionMismatch {
                expected: lo.len(),
                got: hi.len(),
            });
        }
        for (&a, &b) in lo.iter().zip(hi.iter()) {
            Interval::new(a, b)?;
        }
        Ok(Self { lo, hi })
    }

    pub fn rows(&self) -> usize {
        self.lo.nrows()
    }

    pub fn cols(&self) -> usize {
        self.lo.ncols()
    }

    pub fn get(&self, i: usize, j: usize) -> Interval {
        Interval {
            lo: self.lo[(i, j)],
            hi: self.hi[(i, j)],
        }
    }

    pub fn contains(&self, m: &Array2<f64>) -> bool {
        self.lo.dim() == m.dim()
            && self
                .lo
                .iter()
                .zip(self.hi.iter())
                .zip(m.iter())
                .all(|((&l, &h), &v)| l <= v && v <= h)
    }
}

/// Splits `A` into its nonnegative part `max(A, 0)` and nonpositive part `min(A, 0)`.
pub fn pos_neg_split(a: &Array2<f64>) -> (Array2<f64>, Array2<f64>) {
    (a.mapv(|v| v.max(0.0)), a.mapv(|v| v.min(0.0)))
}

pub fn pos_part(a: &Array2<f64>) -> Array2<f64> {
    a.mapv(|v| v.max(0.0))
}

pub fn neg_part(a: &Array2<f64>) -> Array2<f64> {
    a.mapv(|v| v.min(0.0))
}

/// Splits a square `A` into its Metzler part (diagonal plus nonnegative
/// off-diagonal entries) and the remainder.
pub fn metzler_split(a: &Array2<f64>) -> Result<(Array2<f64>, Array2<f64>), IntervalError> {
    if a.nrows() != a.ncols() {
        return Err(IntervalError::NonSquare {
            rows: a.nrows(),
            cols: a.ncols(),
        });
    }
    let mut m = Array2::zeros(a.raw_dim());
    for ((i, j), &v) in a.indexed_iter() {
        if i == j || v >= 0.0 {
            m[(i, j)] = v;
        }
    }
    let nm = a - &m;
    Ok((m, nm))
}

/// Exact range of `z -> A z` over a box: component `i` is
/// `[(A+ lo + A- hi)_i, (A- lo + A+ hi)_i]`.
pub fn interval_linear_map(
    a: &Array2<f64>,
    v: &IntervalVector,
) -> Result<IntervalVector, IntervalError> {
    if a.ncols() != v.dim() {
        return Err(IntervalError::DimensionMismatch {
            expected: a.ncols(),
            got: v.dim(),
        });
    }
    let (ap, an) = pos_neg_split(a);
    let lo = v.lo();
    let hi = v.hi();
    let out_lo = ap.dot(&lo) + an.dot(&hi);
    let out_hi = an.dot(&lo) + ap.dot(&hi);
    IntervalVector::from_bounds(out_lo.as_slice().unwrap(), out_hi.as_slice().unwrap())
}
