//! Embedding-system integration and reach tubes.
//!
//! A single trajectory of the `2n`-dimensional embedding system (face
//! substitution of a closed-loop inclusion function) over-approximates the
//! reachable sets of the original system. Fixed-step explicit integration
//! only; the integrated embedding trajectory itself is reported as the
//! over-approximation, with no extra discretization-error bloating, matching
//! the reference methodology. Optional uniform or width-triggered adaptive
//! partitioning and redundant-variable refinement tighten the tube.

use std::collections::VecDeque;
use std::sync::Arc;

use ndarray::{Array1, Array2};
use rayon::prelude::*;

use crate::closed_loop::{BoundSource, ClosedLoopSystem, ControlBounds, EvalOptions};
use crate::error::ReachError;
use crate::expr::ExprGraph;
use crate::interval::{Interval, IntervalVector};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Scheme {
    Euler,
    Rk4,
    Discrete,
}

impl Scheme {
    pub fn name(&self) -> &'static str {
        match self {
            Scheme::Euler => "euler",
            Scheme::Rk4 => "rk4",
            Scheme::Discrete => "discrete",
        }
    }
}

#[derive(Debug, Clone)]
pub struct IntegrationCfg {
    pub scheme: Scheme,
    pub dt: f64,
    pub t_final: f64,
    /// Zero-order hold period: network bounds are recomputed only at hold
    /// instants and frozen in between.
    pub zoh: Option<f64>,
}

impl IntegrationCfg {
    fn validate(&self) -> Result<usize, ReachError> {
        if !(self.dt > 0.0) {
            return Err(ReachError::InvalidConfig("dt must be positive".into()));
        }
        if !(self.t_final > 0.0) {
            return Err(ReachError::InvalidConfig("t_final must be positive".into()));
        }
        if let Some(z) = self.zoh {
            if self.scheme == Scheme::Discrete {
                return Err(ReachError::InvalidConfig(
                    "zero-order hold is implicit in discrete mode".into(),
                ));
            }
            let ratio = z / self.dt;
            if !(z > 0.0) || (ratio - ratio.round()).abs() > 1e-9 * ratio.max(1.0) {
                return Err(ReachError::InvalidConfig(
                    "dt must divide the zero-order hold period".into(),
                ));
            }
        }
        let steps = (self.t_final / self.dt).round() as usize;
        if steps == 0 {
            return Err(ReachError::InvalidConfig(
                "t_final shorter than one step".into(),
            ));
        }
        Ok(steps)
    }

    fn steps_per_hold(&self) -> usize {
        self.zoh
            .map(|z| (z / self.dt).round() as usize)
            .unwrap_or(1)
            .max(1)
    }
}

/// One stored instant of the embedding trajectory: `lo <= hi` coordinatewise.
#[derive(Debug, Clone)]
pub struct EmbeddingState {
    pub t: f64,
    pub lo: Vec<f64>,
    pub hi: Vec<f64>,
}

impl EmbeddingState {
    pub fn as_box(&self) -> IntervalVector {
        IntervalVector::from_bounds(&self.lo, &self.hi).expect("stored state is ordered")
    }

    pub fn max_width(&self) -> f64 {
        self.lo
            .iter()
            .zip(&self.hi)
            .map(|(l, h)| h - l)
            .fold(0.0, f64::max)
    }
}

#[derive(Debug, Clone)]
pub struct Branch {
    pub id: u64,
    pub samples: Vec<EmbeddingState>,
}

#[derive(Debug, Clone, Default)]
pub struct RunStats {
    pub steps: usize,
    pub nn_refreshes: usize,
    pub branches: usize,
    pub splits: usize,
}

#[derive(Debug, Clone)]
pub struct ReachTube {
    pub branches: Vec<Branch>,
    pub fingerprint: String,
    pub stats: RunStats,
    pub dt: f64,
    pub t_final: f64,
}

impl ReachTube {
    /// Union of branch boxes at the stored time nearest `t`.
    pub fn union_box_at(&self, t: f64) -> Option<IntervalVector> {
        let tol = 0.5 * self.dt;
        let mut acc: Option<(Vec<f64>, Vec<f64>)> = None;
        for b in &self.branches {
            if let Some(s) = b.samples.iter().find(|s| (s.t - t).abs() <= tol) {
                match &mut acc {
                    None => acc = Some((s.lo.clone(), s.hi.clone())),
                    Some((lo, hi)) => {
                        for i in 0..lo.len() {
                            lo[i] = lo[i].min(s.lo[i]);
                            hi[i] = hi[i].max(s.hi[i]);
                        }
                    }
                }
            }
        }
        acc.map(|(lo, hi)| IntervalVector::from_bounds(&lo, &hi).unwrap())
    }

    /// All stored times (sorted, deduplicated across branches).
    pub fn times(&self) -> Vec<f64> {
        let mut ts: Vec<f64> = self
            .branches
            .iter()
            .flat_map(|b| b.samples.iter().map(|s| s.t))
            .collect();
        ts.sort_by(|a, b| a.partial_cmp(b).unwrap());
        ts.dedup_by(|a, b| (*a - *b).abs() < 1e-12);
        ts
    }

    /// True when the point lies inside the union box at its time.
    pub fn contains(&self, t: f64, x: &[f64]) -> bool {
        self.union_box_at(t)
            .map(|b| b.contains_point(x))
            .unwrap_or(false)
    }

    /// Area of the union box at the final time projected on a coordinate
    /// pair.
    pub fn final_area(&self, dims: (usize, usize)) -> Option<f64> {
        let b = self.union_box_at(self.t_final)?;
        Some(b[dims.0].width() * b[dims.1].width())
    }
}

/// Redundant affine variables `y = A x + b` carried alongside the base
/// state; the augmented state is `(x, y)` with the constraint `-A x + y = b`.
#[derive(Debug, Clone)]
pub struct RedundantSpec {
    pub a: Array2<f64>,
    pub b: Array1<f64>,
}

impl RedundantSpec {
    pub fn base_dim(&self) -> usize {
        self.a.ncols()
    }

    pub fn extra_dim(&self) -> usize {
        self.a.nrows()
    }
}

/// Interval constraint propagation on the augmented box: each coordinate is
/// tightened through the affine constraints, iterated to a fixpoint. The
/// result is contained in the input and still contains every point of the
/// input satisfying the constraints.
pub fn refine_redundant(
    aug: &IntervalVector,
    spec: &RedundantSpec,
) -> Result<IntervalVector, ReachError> {
    let n = spec.base_dim();
    let m = spec.extra_dim();
    debug_assert_eq!(aug.dim(), n + m);
    let mut cur = aug.clone();
    for _sweep in 0..10 {
        let mut changed = 0.0f64;
        for r in 0..m {
            // forward: y_r tightened by A_r x + b_r
            let mut acc = Interval::point(spec.b[r]);
            for j in 0..n {
                acc = acc.add(&cur[j].scale(spec.a[(r, j)]));
            }
            let y = cur[n + r];
            let tightened = y
                .intersect(&acc)
                .ok_or(ReachError::InconsistentConstraint { coord: n + r })?;
            changed = changed.max((y.lo() - tightened.lo()).abs() + (y.hi() - tightened.hi()).abs());
            cur.set(n + r, tightened);
            // backward: each x_j with a nonzero coefficient tightened by
            // (y_r - b_r - sum_{k != j} A_rk x_k) / A_rj
            for j in 0..n {
                let a = spec.a[(r, j)];
                if a == 0.0 {
                    continue;
                }
                let mut rest = Interval::point(spec.b[r]);
                for k in 0..n {
                    if k != j {
                        rest = rest.add(&cur[k].scale(spec.a[(r, k)]));
                    }
                }
                let solved = cur[n + r].sub(&rest).scale(1.0 / a);
                let xj = cur[j];
                let tightened = xj
                    .intersect(&solved)
                    .ok_or(ReachError::InconsistentConstraint { coord: j })?;
                changed =
                    changed.max((xj.lo() - tightened.lo()).abs() + (xj.hi() - tightened.hi()).abs());
                cur.set(j, tightened);
            }
        }
        if changed < 1e-12 {
            break;
        }
    }
    Ok(cur)
}

/// Face-substituted embedding right-hand side at a state, exposed for
/// invariance certificates and diagnostics.
pub fn embed_rhs(
    sys: &ClosedLoopSystem,
    opts: &EvalOptions,
    state: &EmbeddingState,
    w_box: &IntervalVector,
) -> Result<(Vec<f64>, Vec<f64>), ReachError> {
    let x_box = state.as_box();
    let ctl = sys.control_bounds(&x_box)?;
    Ok(sys.embed_rhs(opts, &x_box, w_box, &ctl)?)
}

struct Stepper<'a> {
    sys: &'a ClosedLoopSystem,
    opts: &'a EvalOptions,
    cfg: &'a IntegrationCfg,
    w_box: &'a IntervalVector,
    redundant: Option<&'a RedundantSpec>,
    /// Degrade to interval network bounds (adaptive partitioning beyond the
    /// refresh depth).
    cheap_bounds: bool,
}

impl<'a> Stepper<'a> {
    fn refresh(&self, x_box: &IntervalVector, stats: &mut RunStats) -> Result<ControlBounds, ReachError> {
        stats.nn_refreshes += 1;
        if self.cheap_bounds {
            let mut sys = self.sys.clone();
            if let Some(c) = &mut sys.controller {
                c.bound_source = BoundSource::Ibp;
            }
            Ok(sys.control_bounds(x_box)?)
        } else {
            Ok(self.sys.control_bounds(x_box)?)
        }
    }

    /// One integration step from `(step_idx, box)`; the hold state carries
    /// frozen bounds between zero-order-hold instants.
    fn step(
        &self,
        step_idx: usize,
        x_box: &IntervalVector,
        hold: &mut Option<ControlBounds>,
        stats: &mut RunStats,
    ) -> Result<IntervalVector, ReachError> {
        let n = x_box.dim();
        let per_hold = self.cfg.steps_per_hold();
        let next = match self.cfg.scheme {
            Scheme::Discrete => {
                let ctl = self.refresh(x_box, stats)?;
                self.sys.step_box(self.opts, x_box, self.w_box, &ctl)?
            }
            Scheme::Euler => {
                let ctl = self.control_for(step_idx, per_hold, x_box, hold, stats)?;
                let (dlo, dhi) = self.sys.embed_rhs(self.opts, x_box, self.w_box, &ctl)?;
                let lo: Vec<f64> = (0..n)
                    .map(|i| x_box[i].lo() + self.cfg.dt * dlo[i])
                    .collect();
                let hi: Vec<f64> = (0..n)
                    .map(|i| x_box[i].hi() + self.cfg.dt * dhi[i])
                    .collect();
                ordered_box(&lo, &hi, step_idx, self.cfg.dt)?
            }
            Scheme::Rk4 => {
                let held = self.control_for(step_idx, per_hold, x_box, hold, stats)?;
                let zoh_mode = self.cfg.zoh.is_some();
                let eval = |b: &IntervalVector,
                            stats: &mut RunStats|
                 -> Result<(Vec<f64>, Vec<f64>), ReachError> {
                    let ctl = if zoh_mode {
                        held.clone()
                    } else {
                        // continuous mode refreshes per stage on the stage box
                        self.refresh(b, stats)?
                    };
                    Ok(self.sys.embed_rhs(self.opts, b, self.w_box, &ctl)?)
                };
                let dt = self.cfg.dt;
                let k1 = eval(x_box, stats)?;
                let b2 = shifted_box(x_box, &k1, 0.5 * dt, step_idx)?;
                let k2 = eval(&b2, stats)?;
                let b3 = shifted_box(x_box, &k2, 0.5 * dt, step_idx)?;
                let k3 = eval(&b3, stats)?;
                let b4 = shifted_box(x_box, &k3, dt, step_idx)?;
                let k4 = eval(&b4, stats)?;
                let lo: Vec<f64> = (0..n)
                    .map(|i| {
                        x_box[i].lo()
                            + dt / 6.0 * (k1.0[i] + 2.0 * k2.0[i] + 2.0 * k3.0[i] + k4.0[i])
                    })
                    .collect();
                let hi: Vec<f64> = (0..n)
                    .map(|i| {
                        x_box[i].hi()
                            + dt / 6.0 * (k1.1[i] + 2.0 * k2.1[i] + 2.0 * k3.1[i] + k4.1[i])
                    })
                    .collect();
                ordered_box(&lo, &hi, step_idx, self.cfg.dt)?
            }
        };
        stats.steps += 1;
        match self.redundant {
            Some(r) => Ok(refine_redundant(&next, r)?),
            None => Ok(next),
        }
    }

    fn control_for(
        &self,
        step_idx: usize,
        per_hold: usize,
        x_box: &IntervalVector,
        hold: &mut Option<ControlBounds>,
        stats: &mut RunStats,
    ) -> Result<ControlBounds, ReachError> {
        if self.cfg.zoh.is_some() {
            if step_idx % per_hold == 0 || hold.is_none() {
                let fresh = self.refresh(x_box, stats)?.frozen();
                *hold = Some(fresh);
            }
            Ok(hold.clone().unwrap())
        } else {
            self.refresh(x_box, stats)
        }
    }
}

fn ordered_box(
    lo: &[f64],
    hi: &[f64],
    step: usize,
    dt: f64,
) -> Result<IntervalVector, ReachError> {
    for (i, (l, h)) in lo.iter().zip(hi).enumerate() {
        if !l.is_finite() || !h.is_finite() {
            return Err(ReachError::Diverged {
                step,
                t: step as f64 * dt,
            });
        }
        if l > h {
            return Err(ReachError::OrderViolation {
                step,
                t: step as f64 * dt,
                coord: i,
            });
        }
    }
    Ok(IntervalVector::from_bounds(lo, hi).expect("ordered"))
}

fn shifted_box(
    x: &IntervalVector,
    k: &(Vec<f64>, Vec<f64>),
    h: f64,
    step: usize,
) -> Result<IntervalVector, ReachError> {
    let lo: Vec<f64> = (0..x.dim()).map(|i| x[i].lo() + h * k.0[i]).collect();
    let hi: Vec<f64> = (0..x.dim()).map(|i| x[i].hi() + h * k.1[i]).collect();
    ordered_box(&lo, &hi, step, h)
}

/// Integrates a single branch of the embedding system.
pub fn integrate(
    sys: &ClosedLoopSystem,
    opts: &EvalOptions,
    x0: &IntervalVector,
    w_box: &IntervalVector,
    cfg: &IntegrationCfg,
    redundant: Option<&RedundantSpec>,
) -> Result<ReachTube, ReachError> {
    let steps = cfg.validate()?;
    let stepper = Stepper {
        sys,
        opts,
        cfg,
        w_box,
        redundant,
        cheap_bounds: false,
    };
    let mut stats = RunStats {
        branches: 1,
        ..Default::default()
    };
    let start = match redundant {
        Some(r) => refine_redundant(x0, r)?,
        None => x0.clone(),
    };
    let mut samples = Vec::with_capacity(steps + 1);
    samples.push(EmbeddingState {
        t: 0.0,
        lo: start.lo_vec(),
        hi: start.hi_vec(),
    });
    let mut cur = start;
    let mut hold = None;
    for step in 0..steps {
        cur = stepper.step(step, &cur, &mut hold, &mut stats)?;
        samples.push(EmbeddingState {
            t: (step + 1) as f64 * cfg.dt,
            lo: cur.lo_vec(),
            hi: cur.hi_vec(),
        });
    }
    Ok(ReachTube {
        branches: vec![Branch { id: 0, samples }],
        fingerprint: String::new(),
        stats,
        dt: cfg.dt,
        t_final: cfg.t_final,
    })
}

#[derive(Debug, Clone)]
pub enum PartitionMode {
    /// `k` cuts per dimension: `k^n` independent branches.
    Uniform(usize),
    /// Width-triggered splitting: a branch splits along its widest
    /// coordinate whenever its max width grows by more than `eps` over a
    /// check interval, up to `depth_p` splits per lineage; branches deeper
    /// than `depth_n` degrade to interval network bounds.
    Adaptive { eps: f64, depth_p: u32, depth_n: u32 },
}

#[derive(Debug, Clone)]
pub struct PartitionCfg {
    pub mode: PartitionMode,
    pub branch_cap: usize,
}

impl Default for PartitionCfg {
    fn default() -> Self {
        PartitionCfg {
            mode: PartitionMode::Uniform(1),
            branch_cap: 4096,
        }
    }
}

fn split_uniform(x0: &IntervalVector, k: usize) -> Vec<IntervalVector> {
    let n = x0.dim();
    let total = k.pow(n as u32);
    let mut out = Vec::with_capacity(total);
    let mut idx = vec![0usize; n];
    loop {
        let mut cell = x0.clone();
        for j in 0..n {
            let w = x0[j].width() / k as f64;
            let lo = x0[j].lo() + idx[j] as f64 * w;
            cell.set(j, Interval::new(lo, lo + w).unwrap());
        }
        out.push(cell);
        let mut j = 0;
        loop {
            if j == n {
                return out;
            }
            idx[j] += 1;
            if idx[j] < k {
                break;
            }
            idx[j] = 0;
            j += 1;
        }
    }
}

struct AdaptiveBranch {
    id: u64,
    depth: u32,
    cur: IntervalVector,
    step: usize,
    samples: Vec<EmbeddingState>,
    hold: Option<ControlBounds>,
    width_at_last_check: f64,
    retried: bool,
}

/// Integrates a partitioned initial set; the union of branch tubes is the
/// reported over-approximation.
pub fn partition_integrate(
    sys: &ClosedLoopSystem,
    opts: &EvalOptions,
    x0: &IntervalVector,
    w_box: &IntervalVector,
    cfg: &IntegrationCfg,
    pcfg: &PartitionCfg,
    redundant: Option<&RedundantSpec>,
) -> Result<ReachTube, ReachError> {
    let steps = cfg.validate()?;
    match &pcfg.mode {
        PartitionMode::Uniform(k) => {
            let k = (*k).max(1);
            let n = x0.dim();
            let count = k.checked_pow(n as u32).unwrap_or(usize::MAX);
            if count > pcfg.branch_cap {
                return Err(ReachError::BranchExplosion {
                    count,
                    cap: pcfg.branch_cap,
                });
            }
            let cells = split_uniform(x0, k);
            let results: Vec<Result<ReachTube, ReachError>> = cells
                .par_iter()
                .map(|cell| integrate(sys, opts, cell, w_box, cfg, redundant))
                .collect();
            let mut branches = Vec::with_capacity(cells.len());
            let mut stats = RunStats::default();
            for (i, r) in results.into_iter().enumerate() {
                let tube = r?;
                stats.steps += tube.stats.steps;
                stats.nn_refreshes += tube.stats.nn_refreshes;
                let mut b = tube.branches.into_iter().next().unwrap();
                b.id = i as u64;
                branches.push(b);
            }
            stats.branches = branches.len();
            Ok(ReachTube {
                branches,
                fingerprint: String::new(),
                stats,
                dt: cfg.dt,
                t_final: cfg.t_final,
            })
        }
        PartitionMode::Adaptive {
            eps,
            depth_p,
            depth_n,
        } => {
            let mut stats = RunStats::default();
            let check_every = cfg.steps_per_hold().max(1);
            let start = match redundant {
                Some(r) => refine_redundant(x0, r)?,
                None => x0.clone(),
            };
            let mut next_id = 1u64;
            let mut queue = VecDeque::new();
            queue.push_back(AdaptiveBranch {
                id: 0,
                depth: 0,
                cur: start.clone(),
                step: 0,
                samples: vec![EmbeddingState {
                    t: 0.0,
                    lo: start.lo_vec(),
                    hi: start.hi_vec(),
                }],
                hold: None,
                width_at_last_check: start.width(),
                retried: false,
            });
            let mut done = Vec::new();
            while let Some(mut br) = queue.pop_front() {
                if done.len() + queue.len() + 1 > pcfg.branch_cap {
                    return Err(ReachError::BranchExplosion {
                        count: done.len() + queue.len() + 1,
                        cap: pcfg.branch_cap,
                    });
                }
                let stepper = Stepper {
                    sys,
                    opts,
                    cfg,
                    w_box,
                    redundant,
                    cheap_bounds: br.depth > *depth_n,
                };
                let mut split_request = None;
                while br.step < steps {
                    match stepper.step(br.step, &br.cur, &mut br.hold, &mut stats) {
                        Ok(next) => {
                            br.cur = next;
                            br.step += 1;
                            br.samples.push(EmbeddingState {
                                t: br.step as f64 * cfg.dt,
                                lo: br.cur.lo_vec(),
                                hi: br.cur.hi_vec(),
                            });
                            if br.step % check_every == 0 {
                                let w = br.cur.width();
                                if w - br.width_at_last_check > *eps && br.depth < *depth_p {
                                    split_request = Some(false);
                                    break;
                                }
                                br.width_at_last_check = w;
                            }
                        }
                        Err(ReachError::OrderViolation { step, t, coord }) => {
                            if br.retried || br.depth >= *depth_p {
                                return Err(ReachError::OrderViolation { step, t, coord });
                            }
                            split_request = Some(true);
                            break;
                        }
                        Err(e) => return Err(e),
                    }
                }
                match split_request {
                    None => done.push(Branch {
                        id: br.id,
                        samples: br.samples,
                    }),
                    Some(is_retry) => {
                        stats.splits += 1;
                        // split the current box along its widest coordinate
                        let widest = (0..br.cur.dim())
                            .max_by(|&a, &b| {
                                br.cur[a]
                                    .width()
                                    .partial_cmp(&br.cur[b].width())
                                    .unwrap()
                            })
                            .unwrap();
                        let mid = br.cur[widest].mid();
                        for half in 0..2 {
                            let mut cell = br.cur.clone();
                            let iv = if half == 0 {
                                Interval::new(cell[widest].lo(), mid).unwrap()
                            } else {
                                Interval::new(mid, cell[widest].hi()).unwrap()
                            };
                            cell.set(widest, iv);
                            let cell = match redundant {
                                Some(r) => refine_redundant(&cell, r)?,
                                None => cell,
                            };
                            queue.push_back(AdaptiveBranch {
                                id: next_id,
                                depth: br.depth + 1,
                                cur: cell.clone(),
                                step: br.step,
                                samples: vec![EmbeddingState {
                                    t: br.step as f64 * cfg.dt,
                                    lo: cell.lo_vec(),
                                    hi: cell.hi_vec(),
                                }],
                                hold: None,
                                width_at_last_check: cell.width(),
                                retried: is_retry,
                            });
                            next_id += 1;
                        }
                        // the parent's history up to the split stays in the tube
                        done.push(Branch {
                            id: br.id,
                            samples: br.samples,
                        });
                    }
                }
            }
            done.sort_by_key(|b| b.id);
            stats.branches = done.len();
            Ok(ReachTube {
                branches: done,
                fingerprint: String::new(),
                stats,
                dt: cfg.dt,
                t_final: cfg.t_final,
            })
        }
    }
}

/// Target, avoid, and margin constraints of a verification task.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TargetMode {
    /// Containment at the stated time.
    At,
    /// Containment at some stored time up to the stated time.
    Within,
}

#[derive(Debug, Clone)]
pub struct TargetSpec {
    pub lo: Vec<f64>,
    pub hi: Vec<f64>,
    /// Coordinates the target constrains (others are free).
    pub dims: Vec<usize>,
    pub time: f64,
    pub mode: TargetMode,
}

#[derive(Debug, Clone)]
pub enum AvoidRegion {
    Box { lo: Vec<f64>, hi: Vec<f64> },
    Circle { center: (f64, f64), radius: f64, dims: (usize, usize) },
}

/// A scalar margin expression over the state; verified when its natural
/// lower bound stays nonnegative along the tube.
#[derive(Clone)]
pub struct MarginSpec {
    pub name: String,
    pub graph: Arc<ExprGraph>,
}

impl std::fmt::Debug for MarginSpec {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "MarginSpec({})", self.name)
    }
}

#[derive(Debug, Clone, Default)]
pub struct SafetySpec {
    pub target: Option<TargetSpec>,
    pub avoid: Vec<AvoidRegion>,
    pub margins: Vec<MarginSpec>,
    pub horizon: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Verdict {
    Verified,
    ViolatedPossible,
    Inconclusive,
}

impl Verdict {
    pub fn name(&self) -> &'static str {
        match self {
            Verdict::Verified => "verified",
            Verdict::ViolatedPossible => "violated-possible",
            Verdict::Inconclusive => "inconclusive",
        }
    }
}

#[derive(Debug, Clone)]
pub struct ConstraintReport {
    pub name: String,
    pub verdict: Verdict,
    pub detail: String,
}

#[derive(Debug, Clone)]
pub struct SpecReport {
    pub verdict: Verdict,
    pub constraints: Vec<ConstraintReport>,
}

fn box_hits_region(b: &IntervalVector, region: &AvoidRegion) -> bool {
    match region {
        AvoidRegion::Box { lo, hi } => (0..lo.len()).all(|i| {
            let r = Interval::new(lo[i], hi[i]).unwrap();
            b[i].intersect(&r).is_some()
        }),
        AvoidRegion::Circle {
            center,
            radius,
            dims,
        } => {
            // exact distance from the box to the circle center
            let dx = (b[dims.0].lo().max(center.0).min(b[dims.0].hi())) - center.0;
            let dy = (b[dims.1].lo().max(center.1).min(b[dims.1].hi())) - center.1;
            dx * dx + dy * dy <= radius * radius
        }
    }
}

/// Checks a reach tube against a specification. A tube failing a constraint
/// yields `violated-possible` (an over-approximation cannot confirm a true
/// violation).
pub fn check_spec(tube: &ReachTube, spec: &SafetySpec) -> Result<SpecReport, ReachError> {
    if tube.t_final + 1e-9 < spec.horizon {
        return Err(ReachError::HorizonMismatch {
            tube_t: tube.t_final,
            spec_t: spec.horizon,
        });
    }
    let mut constraints = Vec::new();
    let times = tube.times();

    if let Some(target) = &spec.target {
        let inside_at = |t: f64| -> Option<bool> {
            let b = tube.union_box_at(t)?;
            Some(target.dims.iter().enumerate().all(|(k, &d)| {
                target.lo[k] <= b[d].lo() && b[d].hi() <= target.hi[k]
            }))
        };
        let (verdict, detail) = match target.mode {
            TargetMode::At => match inside_at(target.time) {
                Some(true) => (Verdict::Verified, format!("contained at t = {}", target.time)),
                Some(false) => (
                    Verdict::ViolatedPossible,
                    format!("union box not contained in the target at t = {}", target.time),
                ),
                None => (Verdict::Inconclusive, "no stored sample at the target time".into()),
            },
            TargetMode::Within => {
                let hit = times
                    .iter()
                    .filter(|&&t| t <= target.time + 1e-9)
                    .find(|&&t| inside_at(t) == Some(true));
                match hit {
                    Some(&t) => (Verdict::Verified, format!("contained at t = {t}")),
                    None => (
                        Verdict::ViolatedPossible,
                        "never contained within the horizon".into(),
                    ),
                }
            }
        };
        constraints.push(ConstraintReport {
            name: "target".into(),
            verdict,
            detail,
        });
    }

    for (k, region) in spec.avoid.iter().enumerate() {
        let mut hit = None;
        'outer: for b in &tube.branches {
            for s in &b.samples {
                if s.t > spec.horizon + 1e-9 {
                    continue;
                }
                if box_hits_region(&s.as_box(), region) {
                    hit = Some(s.t);
                    break 'outer;
                }
            }
        }
        constraints.push(match hit {
            None => ConstraintReport {
                name: format!("avoid[{k}]"),
                verdict: Verdict::Verified,
                detail: "disjoint at every stored time".into(),
            },
            Some(t) => ConstraintReport {
                name: format!("avoid[{k}]"),
                verdict: Verdict::ViolatedPossible,
                detail: format!("tube box touches the region at t = {t}"),
            },
        });
    }

    for margin in &spec.margins {
        let mut min_lower = f64::INFINITY;
        let mut at_t = 0.0;
        let mut failed_eval = false;
        for b in &tube.branches {
            for s in &b.samples {
                if s.t > spec.horizon + 1e-9 {
                    continue;
                }
                match margin
                    .graph
                    .eval_interval(&s.as_box(), &IntervalVector::empty(), &IntervalVector::empty())
                {
                    Ok(v) => {
                        if v[0].lo() < min_lower {
                            min_lower = v[0].lo();
                            at_t = s.t;
                        }
                    }
                    Err(_) => {
                        failed_eval = true;
                    }
                }
            }
        }
        let (verdict, detail) = if failed_eval {
            (
                Verdict::Inconclusive,
                "margin expression undefined on a tube box".into(),
            )
        } else if min_lower >= 0.0 {
            (
                Verdict::Verified,
                format!("minimum lower bound {min_lower:.6} at t = {at_t}"),
            )
        } else {
            (
                Verdict::ViolatedPossible,
                format!("lower bound {min_lower:.6} at t = {at_t}"),
            )
        };
        constraints.push(ConstraintReport {
            name: margin.name.clone(),
            verdict,
            detail,
        });
    }

    let verdict = if constraints.iter().any(|c| c.verdict == Verdict::Inconclusive) {
        Verdict::Inconclusive
    } else if constraints
        .iter()
        .any(|c| c.verdict == Verdict::ViolatedPossible)
    {
        Verdict::ViolatedPossible
    } else {
        Verdict::Verified
    };
    Ok(SpecReport {
        verdict,
        constraints,
    })
}

pub mod sim {
    //! Pointwise closed-loop simulation used by containment checks.

    use super::*;

    /// Simulates one trajectory with the same stepping and hold semantics as
    /// the embedding integrator; `w_at(step)` supplies the piecewise-constant
    /// disturbance for each step.
    pub fn simulate(
        sys: &ClosedLoopSystem,
        cfg: &IntegrationCfg,
        x0: &[f64],
        mut w_at: impl FnMut(usize) -> Vec<f64>,
    ) -> Result<Vec<(f64, Vec<f64>)>, ReachError> {
        let steps = cfg.validate()?;
        let per_hold = cfg.steps_per_hold();
        let mut x = x0.to_vec();
        let mut out = Vec::with_capacity(steps + 1);
        out.push((0.0, x.clone()));
        let mut held_u: Option<Vec<f64>> = None;
        for step in 0..steps {
            let w = w_at(step);
            match cfg.scheme {
                Scheme::Discrete => {
                    x = sys.f_closed(&x, &w)?;
                }
                Scheme::Euler => {
                    let u = control_value(sys, cfg, per_hold, step, &x, &mut held_u);
                    let dx = sys.f_held(&x, &u, &w)?;
                    for i in 0..x.len() {
                        x[i] += cfg.dt * dx[i];
                    }
                }
                Scheme::Rk4 => {
                    let u_held = control_value(sys, cfg, per_hold, step, &x, &mut held_u);
                    let f = |y: &[f64]| -> Result<Vec<f64>, ReachError> {
                        if cfg.zoh.is_some() {
                            Ok(sys.f_held(y, &u_held, &w)?)
                        } else {
                            Ok(sys.f_closed(y, &w)?)
                        }
                    };
                    let k1 = f(&x)?;
                    let y2: Vec<f64> =
                        x.iter().zip(&k1).map(|(a, b)| a + 0.5 * cfg.dt * b).collect();
                    let k2 = f(&y2)?;
                    let y3: Vec<f64> =
                        x.iter().zip(&k2).map(|(a, b)| a + 0.5 * cfg.dt * b).collect();
                    let k3 = f(&y3)?;
                    let y4: Vec<f64> = x.iter().zip(&k3).map(|(a, b)| a + cfg.dt * b).collect();
                    let k4 = f(&y4)?;
                    for i in 0..x.len() {
                        x[i] += cfg.dt / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
                    }
                }
            }
            out.push(((step + 1) as f64 * cfg.dt, x.clone()));
        }
        Ok(out)
    }

    fn control_value(
        sys: &ClosedLoopSystem,
        cfg: &IntegrationCfg,
        per_hold: usize,
        step: usize,
        x: &[f64],
        held: &mut Option<Vec<f64>>,
    ) -> Vec<f64> {
        let p = sys.dims().1;
        let fresh = || match &sys.controller {
            Some(c) => c.output_at(x),
            None => vec![0.0; p],
        };
        if cfg.zoh.is_some() {
            if step % per_hold == 0 || held.is_none() {
                *held = Some(fresh());
            }
            held.clone().unwrap()
        } else {
            fresh()
        }
    }
}


#[cfg(test)]
mod zoh_rk4_tests {
    use super::*;
    use crate::closed_loop::{Controller, EvalOptions, GroupCorner, MixedMode, OpenLoopModel};
    use crate::expr::GraphBuilder;
    use crate::nn::{Activation, Layer, NeuralNetwork};
    use ndarray::{Array1, Array2};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn rk4_with_hold_contains_simulated_trajectories() {
        let mut rng = ChaCha8Rng::seed_from_u64(14);
        let mut b = GraphBuilder::new(2, 1, 1);
        let x1 = b.x(0);
        let x2 = b.x(1);
        let u = b.u(0);
        let w = b.w(0);
        let nx2 = b.neg(x2);
        let f1 = b.add(nx2, w);
        let nx1 = b.neg(x1);
        let f2a = b.add(nx1, u);
        let graph = Arc::new(b.finish(vec![f1, f2a]));
        let net = Arc::new(
            NeuralNetwork::new(
                vec![
                    Layer {
                        weight: Array2::from_shape_fn((6, 2), |_| rng.gen_range(-0.4..0.4)),
                        bias: Array1::zeros(6),
                        act: Activation::Tanh,
                    },
                    Layer {
                        weight: Array2::from_shape_fn((1, 6), |_| rng.gen_range(-0.4..0.4)),
                        bias: Array1::zeros(1),
                        act: Activation::Identity,
                    },
                ],
                2,
            )
            .unwrap(),
        );
        let sys = ClosedLoopSystem {
            open: OpenLoopModel::graph_with_jacobians(graph).unwrap(),
            controller: Some(Controller::new(net)),
        };
        let x0 = IntervalVector::from_bounds(&[0.2, -0.1], &[0.4, 0.1]).unwrap();
        let w_box = IntervalVector::from_bounds(&[-0.02], &[0.02]).unwrap();
        let cfg = IntegrationCfg {
            scheme: Scheme::Rk4,
            dt: 0.025,
            t_final: 1.0,
            zoh: Some(0.1),
        };
        for opts in [
            EvalOptions::con(),
            EvalOptions::act(GroupCorner::preset(2, 2, 1, 1), MixedMode::States),
        ] {
            let tube = integrate(&sys, &opts, &x0, &w_box, &cfg, None).unwrap();
            let mut rng2 = ChaCha8Rng::seed_from_u64(15);
            for _ in 0..40 {
                let start = [rng2.gen_range(0.2..0.4), rng2.gen_range(-0.1..0.1)];
                let mut wr = ChaCha8Rng::seed_from_u64(rng2.gen());
                let traj = sim::simulate(&sys, &cfg, &start, move |_| {
                    vec![wr.gen_range(-0.02..0.02)]
                })
                .unwrap();
                for (t, x) in traj {
                    assert!(tube.contains(t, &x), "rk4 zoh escape at t = {t}");
                }
            }
        }
    }
}
