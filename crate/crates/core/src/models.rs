//! Built-in benchmark systems, fixture controllers, and the platoon
//! generator.
//!
//! Fixture networks are small MLPs trained offline by
//! `scripts/train_fixtures.py` to qualitatively match each benchmark's
//! described behavior; the weights ship as JSON with stored reference
//! input/output pairs. The ACC and docking plant equations follow the
//! ARCH-COMP AINNCS category report; constants not reprinted in our
//! reference are transcribed from that report and validated by containment
//! properties only.

use std::f64::consts::PI;
use std::sync::Arc;

use ndarray::{array, Array1, Array2};

use crate::closed_loop::{
    ClosedLoopSystem, Controller, EvalOptions, FeatureMap, GroupCorner, MixedMode, OpenLoopModel,
};
use crate::error::ModelError;
use crate::expr::{ExprGraph, GraphBuilder, NodeId};
use crate::interval::IntervalVector;
use crate::nn::{load_network, NeuralNetwork};
use crate::reach::{
    AvoidRegion, IntegrationCfg, MarginSpec, RedundantSpec, SafetySpec, Scheme, TargetMode,
    TargetSpec,
};

const DI_NET: &str = include_str!("../fixtures/di_relu.json");
const BICYCLE_NET: &str = include_str!("../fixtures/bicycle_relu.json");
const ACC_NET: &str = include_str!("../fixtures/acc_relu.json");
const TORA_NET: &str = include_str!("../fixtures/tora_relu_tanh.json");
const PLATOON_NET: &str = include_str!("../fixtures/platoon_relu.json");
const DOCKING_NET: &str = include_str!("../fixtures/docking_tanh.json");

/// A benchmark: system, defaults, and its safety specification.
pub struct BenchmarkDef {
    pub name: String,
    pub system: ClosedLoopSystem,
    pub x0: IntervalVector,
    pub w_box: IntervalVector,
    pub cfg: IntegrationCfg,
    pub opts_con: EvalOptions,
    pub opts_act: EvalOptions,
    pub redundant: Option<RedundantSpec>,
    pub spec: SafetySpec,
    pub plot_dims: (usize, usize),
}

pub fn fixture_net(name: &str) -> Result<Arc<NeuralNetwork>, ModelError> {
    let doc = match name {
        "di" => DI_NET,
        "bicycle" => BICYCLE_NET,
        "acc" => ACC_NET,
        "tora" => TORA_NET,
        "platoon" => PLATOON_NET,
        "docking" => DOCKING_NET,
        other => return Err(ModelError::UnknownBenchmark(other.into())),
    };
    Ok(Arc::new(load_network(doc)?))
}

/// The running example function `[(x1+x2)^2, x1+x2+2 x1 x2]` used by the
/// inclusion-method comparison report.
pub fn table1_function() -> Arc<ExprGraph> {
    let mut b = GraphBuilder::new(2, 0, 0);
    let x1 = b.x(0);
    let x2 = b.x(1);
    let s = b.add(x1, x2);
    let g1 = b.sq(s);
    let x1x2 = b.mul(x1, x2);
    let two = b.c(2.0);
    let t = b.mul(two, x1x2);
    let g2 = b.add(s, t);
    Arc::new(b.finish(vec![g1, g2]))
}

pub fn table1_box() -> IntervalVector {
    IntervalVector::from_bounds(&[-0.1, -0.1], &[0.1, 0.1]).unwrap()
}

/// Kinematic bicycle with slip angle `beta(u2) = arctan(tan(u2)/2)`
/// (`lf = lr = 1`): states `(px, py, phi, v)`, inputs `(u1, u2)`.
pub fn build_bicycle() -> Result<BenchmarkDef, ModelError> {
    let mut b = GraphBuilder::new(4, 2, 0);
    let phi = b.x(2);
    let v = b.x(3);
    let u1 = b.u(0);
    let u2 = b.u(1);
    let tan_u2 = b.tan(u2);
    let half = b.c(0.5);
    let half_tan = b.mul(half, tan_u2);
    let beta = b.atan(half_tan);
    let heading = b.add(phi, beta);
    let cos_h = b.cos(heading);
    let sin_h = b.sin(heading);
    let fx = b.mul(v, cos_h);
    let fy = b.mul(v, sin_h);
    let sin_b = b.sin(beta);
    let fphi = b.mul(v, sin_b);
    let graph = Arc::new(b.finish(vec![fx, fy, fphi, u1]));

    let net = fixture_net("bicycle")?;
    let system = ClosedLoopSystem {
        open: OpenLoopModel::graph_with_jacobians(graph)?,
        controller: Some(Controller::new(net)),
    };
    let x0 = IntervalVector::from_bounds(
        &[7.95, 6.95, -2.0 * PI / 3.0 - 0.01, 1.99],
        &[8.05, 7.05, -2.0 * PI / 3.0 + 0.01, 2.01],
    )?;
    Ok(BenchmarkDef {
        name: "bicycle".into(),
        system,
        x0,
        w_box: IntervalVector::empty(),
        cfg: IntegrationCfg {
            scheme: Scheme::Euler,
            dt: 0.125,
            t_final: 1.5,
            zoh: None,
        },
        opts_con: EvalOptions::con(),
        opts_act: EvalOptions::act(GroupCorner::preset(2, 4, 2, 0), MixedMode::StatesControl),
        redundant: None,
        spec: SafetySpec {
            target: None,
            avoid: vec![AvoidRegion::Circle {
                center: (4.0, 4.0),
                radius: 2.0,
                dims: (0, 1),
            }],
            margins: vec![],
            horizon: 1.5,
        },
        plot_dims: (0, 1),
    })
}

/// Discrete-time double integrator `x+ = [1 1; 0 1] x + [0.5; 1] u`.
pub fn build_double_integrator() -> Result<BenchmarkDef, ModelError> {
    let a = array![[1.0, 1.0], [0.0, 1.0]];
    let b = array![[0.5], [1.0]];
    let d = Array2::<f64>::zeros((2, 0));
    let net = fixture_net("di")?;
    let system = ClosedLoopSystem {
        open: OpenLoopModel::linear(a, b, d),
        controller: Some(Controller::new(net)),
    };
    let x0 = IntervalVector::from_bounds(&[2.5, -0.25], &[3.0, 0.25])?;
    Ok(BenchmarkDef {
        name: "double-integrator".into(),
        system,
        x0,
        w_box: IntervalVector::empty(),
        cfg: IntegrationCfg {
            scheme: Scheme::Discrete,
            dt: 1.0,
            t_final: 5.0,
            zoh: None,
        },
        opts_con: EvalOptions::con(),
        opts_act: EvalOptions::act(GroupCorner::preset(1, 2, 1, 0), MixedMode::Off),
        redundant: None,
        spec: SafetySpec {
            horizon: 5.0,
            ..SafetySpec::default()
        },
        plot_dims: (0, 1),
    })
}

/// Adaptive cruise control: lead and ego vehicles with first-order
/// acceleration lags; the lead decelerates at -2. States
/// `(x_l, v_l, g_l, x_e, v_e, g_e)`; the network sees the 5-feature vector
/// `(x_l - x_e, v_l - v_e, g_l - g_e, v_set, t_gap)`.
pub fn build_acc() -> Result<BenchmarkDef, ModelError> {
    let mu = 1e-4;
    let a_lead = -2.0;
    let mut b = GraphBuilder::new(6, 1, 0);
    let v_l = b.x(1);
    let g_l = b.x(2);
    let v_e = b.x(4);
    let g_e = b.x(5);
    let u = b.u(0);
    let two = b.c(2.0);
    let mu_c = b.c(mu);
    // lead: g' = 2 a_lead - 2 g - mu v^2
    let lead_drive = b.c(2.0 * a_lead);
    let tg_l = b.mul(two, g_l);
    let v_l2 = b.sq(v_l);
    let drag_l = b.mul(mu_c, v_l2);
    let g_l_dot_a = b.sub(lead_drive, tg_l);
    let g_l_dot = b.sub(g_l_dot_a, drag_l);
    // ego: g' = 2 u - 2 g - mu v^2
    let tu = b.mul(two, u);
    let tg_e = b.mul(two, g_e);
    let v_e2 = b.sq(v_e);
    let drag_e = b.mul(mu_c, v_e2);
    let g_e_dot_a = b.sub(tu, tg_e);
    let g_e_dot = b.sub(g_e_dot_a, drag_e);
    let graph = Arc::new(b.finish(vec![v_l, g_l, g_l_dot, v_e, g_e, g_e_dot]));

    let v_set = 30.0;
    let t_gap = 1.4;
    let mut f = Array2::zeros((5, 6));
    f[(0, 0)] = 1.0;
    f[(0, 3)] = -1.0;
    f[(1, 1)] = 1.0;
    f[(1, 4)] = -1.0;
    f[(2, 2)] = 1.0;
    f[(2, 5)] = -1.0;
    let f0 = array![0.0, 0.0, 0.0, v_set, t_gap];
    let mut controller = Controller::new(fixture_net("acc")?);
    controller.feature_map = Some(FeatureMap { f, f0 });

    let system = ClosedLoopSystem {
        open: OpenLoopModel::graph_with_jacobians(graph)?,
        controller: Some(controller),
    };
    let x0 = IntervalVector::from_bounds(
        &[90.0, 32.0, 0.0, 10.0, 30.0, 0.0],
        &[110.0, 32.2, 0.0, 11.0, 30.2, 0.0],
    )?;

    // margin: x_l - x_e - d_default - t_gap * v_e >= 0
    let mut mb = GraphBuilder::new(6, 0, 0);
    let xl = mb.x(0);
    let xe = mb.x(3);
    let ve = mb.x(4);
    let d_default = mb.c(10.0);
    let tg = mb.c(t_gap);
    let d_safe_dyn = mb.mul(tg, ve);
    let d_rel = mb.sub(xl, xe);
    let m1 = mb.sub(d_rel, d_default);
    let margin = mb.sub(m1, d_safe_dyn);
    let margin_graph = Arc::new(mb.finish(vec![margin]));

    Ok(BenchmarkDef {
        name: "acc".into(),
        system,
        x0,
        w_box: IntervalVector::empty(),
        cfg: IntegrationCfg {
            scheme: Scheme::Euler,
            dt: 0.01,
            t_final: 5.0,
            zoh: Some(0.1),
        },
        opts_con: EvalOptions::con(),
        opts_act: EvalOptions::act(GroupCorner::preset(2, 6, 1, 0), MixedMode::States),
        redundant: None,
        spec: SafetySpec {
            target: None,
            avoid: vec![],
            margins: vec![MarginSpec {
                name: "d_rel - d_safe".into(),
                graph: margin_graph,
            }],
            horizon: 5.0,
        },
        plot_dims: (0, 3),
    })
}

/// 2D spacecraft docking (Clohessy-Wiltshire relative dynamics): states
/// `(sx, sy, vx, vy)`, thrust inputs `(u1, u2)`; mean motion and mass from
/// the ARCH-COMP report.
pub fn build_docking() -> Result<BenchmarkDef, ModelError> {
    let n_mean = 0.001027;
    let mass = 12.0;
    let mut b = GraphBuilder::new(4, 2, 0);
    let sx = b.x(0);
    let vx = b.x(2);
    let vy = b.x(3);
    let u1 = b.u(0);
    let u2 = b.u(1);
    let two_n = b.c(2.0 * n_mean);
    let three_n2 = b.c(3.0 * n_mean * n_mean);
    let inv_m = b.c(1.0 / mass);
    let coriolis_x = b.mul(two_n, vy);
    let spring = b.mul(three_n2, sx);
    let thrust_x = b.mul(inv_m, u1);
    let ax_a = b.add(coriolis_x, spring);
    let ax = b.add(ax_a, thrust_x);
    let coriolis_y = b.mul(two_n, vx);
    let thrust_y = b.mul(inv_m, u2);
    let ay = b.sub(thrust_y, coriolis_y);
    let graph = Arc::new(b.finish(vec![vx, vy, ax, ay]));

    let system = ClosedLoopSystem {
        open: OpenLoopModel::graph_with_jacobians(graph)?,
        controller: Some(Controller::new(fixture_net("docking")?)),
    };
    let x0 = IntervalVector::from_bounds(&[87.0, 87.0, -0.01, -0.01], &[89.0, 89.0, 0.01, 0.01])?;

    // margin: 0.2 + 2 n sqrt(sx^2 + sy^2) - sqrt(vx^2 + vy^2) >= 0
    let mut mb = GraphBuilder::new(4, 0, 0);
    let sx = mb.x(0);
    let sy = mb.x(1);
    let vx = mb.x(2);
    let vy = mb.x(3);
    let sx2 = mb.sq(sx);
    let sy2 = mb.sq(sy);
    let s2 = mb.add(sx2, sy2);
    let s_norm = mb.sqrt(s2);
    let vx2 = mb.sq(vx);
    let vy2 = mb.sq(vy);
    let v2 = mb.add(vx2, vy2);
    let v_norm = mb.sqrt(v2);
    let c02 = mb.c(0.2);
    let two_n = mb.c(2.0 * n_mean);
    let allow = mb.mul(two_n, s_norm);
    let rhs = mb.add(c02, allow);
    let margin = mb.sub(rhs, v_norm);
    let margin_graph = Arc::new(mb.finish(vec![margin]));

    Ok(BenchmarkDef {
        name: "docking".into(),
        system,
        x0,
        w_box: IntervalVector::empty(),
        cfg: IntegrationCfg {
            scheme: Scheme::Euler,
            dt: 0.1,
            t_final: 40.0,
            zoh: Some(1.0),
        },
        opts_con: EvalOptions::con(),
        opts_act: EvalOptions::act(GroupCorner::preset(2, 4, 2, 0), MixedMode::States),
        redundant: None,
        spec: SafetySpec {
            target: None,
            avoid: vec![],
            margins: vec![MarginSpec {
                name: "docking envelope".into(),
                graph: margin_graph,
            }],
            horizon: 40.0,
        },
        plot_dims: (0, 1),
    })
}

/// TORA with the redundant variables `y1 = x1 + x2`, `y2 = x1 - x2`
/// carried as extra states; the controller sees `(x1..x4)` and its final
/// tanh stage is scaled by 11 (our documented choice).
pub fn build_tora() -> Result<BenchmarkDef, ModelError> {
    let mut b = GraphBuilder::new(6, 1, 0);
    let x1 = b.x(0);
    let x2 = b.x(1);
    let x3 = b.x(2);
    let x4 = b.x(3);
    let u = b.u(0);
    let eps = b.c(0.1);
    let sin3 = b.sin(x3);
    let coup = b.mul(eps, sin3);
    let nx1 = b.neg(x1);
    let f2 = b.add(nx1, coup);
    // y1' = x1' + x2', y2' = x1' - x2'
    let y1dot = b.add(x2, f2);
    let y2dot = b.sub(x2, f2);
    let graph = Arc::new(b.finish(vec![x2, f2, x4, u, y1dot, y2dot]));

    let mut controller = Controller::new(fixture_net("tora")?);
    controller.feature_map = Some(FeatureMap::select(&[0, 1, 2, 3], 6));
    // the final scaled-tanh stage structurally bounds the output
    controller.u_limits = Some(IntervalVector::from_bounds(&[-11.0], &[11.0])?);

    let system = ClosedLoopSystem {
        open: OpenLoopModel::graph_with_jacobians(graph)?,
        controller: Some(controller),
    };
    // state order: (x1, x2, x3, x4, y1, y2) with y1 = x1 + x2, y2 = x1 - x2
    let x_lo = [-0.77, -0.45, 0.51, -0.3];
    let x_hi = [-0.75, -0.43, 0.54, -0.28];
    let x0 = IntervalVector::from_bounds(
        &[
            x_lo[0],
            x_lo[1],
            x_lo[2],
            x_lo[3],
            x_lo[0] + x_lo[1],
            x_lo[0] - x_hi[1],
        ],
        &[
            x_hi[0],
            x_hi[1],
            x_hi[2],
            x_hi[3],
            x_hi[0] + x_hi[1],
            x_hi[0] - x_lo[1],
        ],
    )?;

    Ok(BenchmarkDef {
        name: "tora".into(),
        system,
        x0,
        w_box: IntervalVector::empty(),
        cfg: IntegrationCfg {
            scheme: Scheme::Euler,
            dt: 0.005,
            t_final: 5.0,
            zoh: Some(0.5),
        },
        opts_con: EvalOptions::con(),
        opts_act: EvalOptions::fused(GroupCorner::preset(4, 6, 1, 0), MixedMode::States),
        redundant: Some(RedundantSpec {
            a: array![[1.0, 1.0, 0.0, 0.0], [1.0, -1.0, 0.0, 0.0]],
            b: Array1::zeros(2),
        }),
        spec: SafetySpec {
            target: Some(TargetSpec {
                lo: vec![-0.1, -0.9],
                hi: vec![0.2, -0.6],
                dims: vec![0, 1],
                time: 5.0,
                mode: TargetMode::Within,
            }),
            avoid: vec![],
            margins: vec![],
            horizon: 5.0,
        },
        plot_dims: (0, 1),
    })
}

fn platoon_norm_guard(b: &mut GraphBuilder, vx: NodeId, vy: NodeId) -> NodeId {
    // sqrt(vx^2 + vy^2 + delta^2): guarded against the PD law's division
    // singularity at zero velocity
    let vx2 = b.sq(vx);
    let vy2 = b.sq(vy);
    let delta2 = b.c(1e-18);
    let s = b.add(vx2, vy2);
    let s = b.add(s, delta2);
    b.sqrt(s)
}

/// Platoon of `count` planar double integrators: the leader follows the
/// fixture network, followers apply the PD tracking law embedded in the
/// vector field; all accelerations saturate through `5 tanh(u/5)` and take
/// additive disturbances.
pub fn build_platoon(count: usize) -> Result<BenchmarkDef, ModelError> {
    assert!(count >= 1);
    let n = 4 * count;
    let q = 2 * count;
    let (kp, kv, r_gap, u_lim) = (5.0, 5.0, 0.5, 5.0);
    let mut b = GraphBuilder::new(n, 2, q);

    let sat = |b: &mut GraphBuilder, u: NodeId| {
        // 5 tanh(u / 5)
        let lim = b.c(u_lim);
        let scaled = b.div(u, lim);
        let t = b.tanh(scaled);
        b.mul(lim, t)
    };

    let mut outputs = Vec::with_capacity(n);
    for j in 0..count {
        let px = b.x(4 * j);
        let py = b.x(4 * j + 1);
        let vx = b.x(4 * j + 2);
        let vy = b.x(4 * j + 3);
        let wx = b.w(2 * j);
        let wy = b.w(2 * j + 1);
        let (ax_raw, ay_raw) = if j == 0 {
            (b.u(0), b.u(1))
        } else {
            let ppx = b.x(4 * (j - 1));
            let ppy = b.x(4 * (j - 1) + 1);
            let pvx = b.x(4 * (j - 1) + 2);
            let pvy = b.x(4 * (j - 1) + 3);
            let norm = platoon_norm_guard(&mut b, pvx, pvy);
            let kp_c = b.c(kp);
            let kv_c = b.c(kv);
            let r_c = b.c(r_gap);
            let pd = |d: NodeId, dp: NodeId, v: NodeId, vp: NodeId, b: &mut GraphBuilder| {
                // kp (p_prev - p - r v_prev / ||v_prev||) + kv (v_prev - v)
                let gap = b.sub(dp, d);
                let vhat = b.div(vp, norm);
                let off = b.mul(r_c, vhat);
                let err = b.sub(gap, off);
                let p_term = b.mul(kp_c, err);
                let dv = b.sub(vp, v);
                let v_term = b.mul(kv_c, dv);
                b.add(p_term, v_term)
            };
            let ux = pd(px, ppx, vx, pvx, &mut b);
            let uy = pd(py, ppy, vy, pvy, &mut b);
            (ux, uy)
        };
        let sx = sat(&mut b, ax_raw);
        let sy = sat(&mut b, ay_raw);
        let ax = b.add(sx, wx);
        let ay = b.add(sy, wy);
        outputs.extend_from_slice(&[vx, vy, ax, ay]);
    }
    let graph = Arc::new(b.finish(outputs));

    let mut controller = Controller::new(fixture_net("platoon")?);
    controller.feature_map = Some(FeatureMap::select(&[0, 1, 2, 3], n));
    let system = ClosedLoopSystem {
        open: OpenLoopModel::graph_with_jacobians(graph)?,
        controller: Some(controller),
    };

    let mut lo = Vec::with_capacity(n);
    let mut hi = Vec::with_capacity(n);
    for j in 0..count {
        let off = 0.5 * j as f64;
        lo.extend_from_slice(&[
            7.225 + off * (PI / 3.0).cos(),
            5.725 + off * (PI / 3.0).sin(),
            -0.5,
            -5.0,
        ]);
        hi.extend_from_slice(&[
            7.275 + off * (PI / 3.0).cos(),
            5.775 + off * (PI / 3.0).sin(),
            -0.5,
            -5.0,
        ]);
    }
    let x0 = IntervalVector::from_bounds(&lo, &hi)?;
    let w_box = IntervalVector::from_bounds(&vec![-0.001; q], &vec![0.001; q])?;

    Ok(BenchmarkDef {
        name: format!("platoon-{count}"),
        system,
        x0,
        w_box,
        cfg: IntegrationCfg {
            scheme: Scheme::Euler,
            dt: 0.0125,
            t_final: 1.5,
            zoh: None,
        },
        opts_con: EvalOptions::con(),
        // the pure interaction tube diverges for longer follower chains
        // (the PD gains enter the Jacobian bounds unsaturated), so the
        // interaction preset intersects with the interconnection bound
        // every step
        opts_act: EvalOptions::fused(GroupCorner::preset(4, n, 2, q), MixedMode::States),
        redundant: None,
        spec: SafetySpec {
            target: None,
            avoid: vec![AvoidRegion::Circle {
                center: (4.0, 4.0),
                radius: 2.25,
                dims: (0, 1),
            }],
            margins: vec![],
            horizon: 1.5,
        },
        plot_dims: (0, 1),
    })
}

/// Benchmarks addressable by name (`platoon-N` takes the unit count).
pub fn by_name(name: &str) -> Result<BenchmarkDef, ModelError> {
    match name {
        "bicycle" => build_bicycle(),
        "double-integrator" => build_double_integrator(),
        "acc" => build_acc(),
        "docking" => build_docking(),
        "tora" => build_tora(),
        other => {
            if let Some(count) = other.strip_prefix("platoon-") {
                let count: usize = count
                    .parse()
                    .map_err(|_| ModelError::UnknownBenchmark(other.into()))?;
                build_platoon(count)
            } else {
                Err(ModelError::UnknownBenchmark(other.into()))
            }
        }
    }
}

pub fn benchmark_names() -> Vec<&'static str> {
    vec![
        "bicycle",
        "double-integrator",
        "acc",
        "docking",
        "tora",
        "platoon-N",
    ]
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::expr::VarGroup;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn fixture_nets_load_and_reproduce_references() {
        for name in ["di", "bicycle", "acc", "tora", "platoon", "docking"] {
            let net = fixture_net(name).unwrap();
            assert!(net.input_dim() > 0, "{name}");
        }
    }

    #[test]
    fn bicycle_dynamics_at_a_point() {
        let def = build_bicycle().unwrap();
        let x = [8.0, 7.0, -2.0 * PI / 3.0, 2.0];
        let u = [0.0, 0.0];
        let f = def.system.open.f_point(&x, &u, &[]).unwrap();
        // beta(0) = 0
        assert!((f[0] - 2.0 * (-2.0 * PI / 3.0).cos()).abs() < 1e-12);
        assert!((f[1] - 2.0 * (-2.0 * PI / 3.0).sin()).abs() < 1e-12);
        assert!(f[2].abs() < 1e-12);
        assert!(f[3].abs() < 1e-12);
    }

    fn check_jacobian_fd(def: &BenchmarkDef, samples: usize, seed: u64) {
        let OpenLoopModel::Graph { graph, .. } = &def.system.open else {
            return;
        };
        let jacs = graph.jacobians().unwrap();
        let (n, p, q) = graph.dims();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let h = 1e-6;
        for _ in 0..samples {
            let x: Vec<f64> = (0..n)
                .map(|i| {
                    let iv = def.x0[i];
                    rng.gen_range(iv.lo() - 0.05..iv.hi() + 0.05)
                })
                .collect();
            let u: Vec<f64> = (0..p).map(|_| rng.gen_range(-0.5..0.5)).collect();
            let w: Vec<f64> = (0..q).map(|_| rng.gen_range(-0.001..0.001)).collect();
            let jx = jacs.wrt_x.eval_point(&x, &u, &w).unwrap();
            for out in 0..n {
                for j in 0..n {
                    let mut xp = x.clone();
                    let mut xm = x.clone();
                    xp[j] += h;
                    xm[j] -= h;
                    let fp = graph.eval_point(&xp, &u, &w).unwrap()[out];
                    let fm = graph.eval_point(&xm, &u, &w).unwrap()[out];
                    let fd = (fp - fm) / (2.0 * h);
                    let sym = jx[out * n + j];
                    assert!(
                        (sym - fd).abs() <= 1e-6 * (1.0 + fd.abs()),
                        "{}: d f{out}/dx{j} sym {sym} vs fd {fd}",
                        def.name
                    );
                }
            }
        }
        // spot-check one input column via the bounds API
        if p > 0 {
            let x0 = def.x0.clone();
            let ub = IntervalVector::from_bounds(&vec![-0.5; p], &vec![0.5; p]).unwrap();
            let wb = if q > 0 {
                IntervalVector::from_bounds(&vec![-0.001; q], &vec![0.001; q]).unwrap()
            } else {
                IntervalVector::empty()
            };
            let mut scratch = crate::expr::EvalScratch::default();
            let col = jacs
                .column_bounds(VarGroup::Input, 0, &x0, &ub, &wb, &mut scratch)
                .unwrap();
            assert_eq!(col.len(), n);
        }
    }

    #[test]
    fn benchmark_jacobians_match_finite_differences() {
        check_jacobian_fd(&build_bicycle().unwrap(), 30, 1);
        check_jacobian_fd(&build_acc().unwrap(), 20, 2);
        check_jacobian_fd(&build_tora().unwrap(), 20, 3);
        check_jacobian_fd(&build_docking().unwrap(), 20, 4);
        check_jacobian_fd(&build_platoon(2).unwrap(), 10, 5);
    }

    #[test]
    fn double_integrator_row_sums_and_one_step() {
        let def = build_double_integrator().unwrap();
        let OpenLoopModel::Linear { a, .. } = &def.system.open else {
            panic!("expected linear model");
        };
        assert_eq!(a.row(0).sum(), 2.0);
        assert_eq!(a.row(1).sum(), 1.0);
        let next = def.system.open.f_point(&[3.0, 0.0], &[-1.0], &[]).unwrap();
        assert_eq!(next, vec![2.5, -1.0]);
    }

    #[test]
    fn acc_feature_map_matches_definition() {
        let def = build_acc().unwrap();
        let ctrl = def.system.controller.as_ref().unwrap();
        let m = ctrl.feature_map.as_ref().unwrap();
        let x = [100.0, 32.0, -0.5, 15.0, 30.0, 0.3];
        let z = m.apply(&x);
        assert_eq!(z, vec![85.0, 2.0, -0.8, 30.0, 1.4]);
    }

    #[test]
    fn tora_initial_box_carries_consistent_redundant_coords() {
        let def = build_tora().unwrap();
        let r = def.redundant.as_ref().unwrap();
        // every corner of the base box satisfies the y-ranges
        for &x1 in &[-0.77, -0.75] {
            for &x2 in &[-0.45, -0.43] {
                let y1 = x1 + x2;
                let y2 = x1 - x2;
                assert!(def.x0[4].contains(y1));
                assert!(def.x0[5].contains(y2));
            }
        }
        assert_eq!(r.base_dim(), 4);
        assert_eq!(r.extra_dim(), 2);
    }

    #[test]
    fn platoon_reduces_and_scales() {
        let p1 = build_platoon(1).unwrap();
        assert_eq!(p1.system.dims(), (4, 2, 2));
        let p4 = build_platoon(4).unwrap();
        assert_eq!(p4.system.dims().0, 16);
    }

    #[test]
    fn platoon_follower_pd_at_zero_relative_error() {
        // with p_prev - p = r * v_prev/||v_prev|| and v_prev = v, the PD
        // term reduces to -kp * r * v_hat + ... = 0 only when the gap offset
        // matches; at zero relative error (equal positions and velocities)
        // the term is -kp * r * v_hat
        let def = build_platoon(2).unwrap();
        let v = (-0.5f64, -5.0f64);
        let norm = (v.0 * v.0 + v.1 * v.1).sqrt();
        let x = [1.0, 1.0, v.0, v.1, 1.0, 1.0, v.0, v.1];
        let w = [0.0; 4];
        let f = def.system.open.f_point(&x, &[0.0, 0.0], &w).unwrap();
        let expect_x = -5.0 * 0.5 * v.0 / norm;
        let expect_y = -5.0 * 0.5 * v.1 / norm;
        // follower accelerations pass through the saturation
        let sat = |u: f64| 5.0 * (u / 5.0).tanh();
        assert!((f[6] - sat(expect_x)).abs() < 1e-9);
        assert!((f[7] - sat(expect_y)).abs() < 1e-9);
    }

    #[test]
    fn fixture_forward_pass_reference() {
        // forward pass of the double-integrator fixture against its stored
        // reference pairs happens at load time; spot check the output range
        let net = fixture_net("di").unwrap();
        let u = net.forward(&[2.75, 0.0])[0];
        assert!(u.abs() < 5.0);
    }

    #[test]
    fn docking_tube_contains_sampled_trajectories() {
        let def = build_docking().unwrap();
        let tube = crate::reach::integrate(
            &def.system,
            &def.opts_con,
            &def.x0,
            &def.w_box,
            &def.cfg,
            None,
        )
        .unwrap();
        let report = crate::reach::check_spec(&tube, &def.spec).unwrap();
        // the envelope margin must at least evaluate; soundness is the hard
        // requirement here
        assert_ne!(report.constraints.len(), 0);
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        for _ in 0..10 {
            let x0: Vec<f64> = (0..4)
                .map(|i| {
                    let iv = def.x0[i];
                    rng.gen_range(iv.lo()..iv.hi())
                })
                .collect();
            let path = crate::reach::sim::simulate(&def.system, &def.cfg, &x0, |_| vec![])
                .unwrap();
            for (t, x) in path {
                assert!(tube.contains(t, &x), "docking escape at t = {t}");
            }
        }
    }

    #[test]
    fn by_name_resolves_all_benchmarks() {
        for name in ["bicycle", "double-integrator", "acc", "docking", "tora", "platoon-3"] {
            let def = by_name(name).unwrap();
            assert!(!def.name.is_empty());
        }
        assert!(by_name("nope").is_err());
    }
}

/// One row of the inclusion-method comparison report.
pub struct Table1Row {
    pub name: &'static str,
    pub interval: IntervalVector,
    pub seconds: f64,
}

/// Evaluates the five inclusion-method rows on the running example function
/// over [-0.1, 0.1]^2, timing each method over `evals` evaluations. The
/// cornered rows intersect the four vertex corners (the default multi-corner
/// set).
pub fn table1_report(evals: usize) -> Result<Vec<Table1Row>, ModelError> {
    use crate::inclusion::{self, comparison, Corner};
    use std::time::Instant;

    let g = table1_function();
    let x = table1_box();
    let jacs = Arc::new(
        g.jacobians()
            .map_err(crate::error::ClosedLoopError::from)?,
    );
    let corners = Corner::vertices(2);

    let natural = inclusion::natural_ifn(Arc::clone(&g));
    let cornered = inclusion::jac_cornered_multi(Arc::clone(&g), &corners, false)
        .map_err(crate::error::ClosedLoopError::from)?;
    let mixed_cornered = inclusion::jac_cornered_multi(Arc::clone(&g), &corners, true)
        .map_err(crate::error::ClosedLoopError::from)?;

    let time_it = |f: &dyn Fn() -> IntervalVector| -> (IntervalVector, f64) {
        let out = f();
        let t0 = Instant::now();
        for _ in 0..evals {
            std::hint::black_box(f());
        }
        (out, t0.elapsed().as_secs_f64() / evals.max(1) as f64)
    };

    let mut rows = Vec::new();
    let (iv, s) = time_it(&|| natural.eval(&x).unwrap());
    rows.push(Table1Row {
        name: "Natural",
        interval: iv,
        seconds: s,
    });
    let (iv, s) = time_it(&|| comparison::centered_box(&g, &jacs, &x).unwrap());
    rows.push(Table1Row {
        name: "Centered",
        interval: iv,
        seconds: s,
    });
    let (iv, s) = time_it(&|| comparison::mixed_centered_box(&g, &jacs, &x).unwrap());
    rows.push(Table1Row {
        name: "Mixed Centered",
        interval: iv,
        seconds: s,
    });
    let (iv, s) = time_it(&|| cornered.eval(&x).unwrap());
    rows.push(Table1Row {
        name: "Cornered",
        interval: iv,
        seconds: s,
    });
    let (iv, s) = time_it(&|| mixed_cornered.eval(&x).unwrap());
    rows.push(Table1Row {
        name: "Mixed Cornered",
        interval: iv,
        seconds: s,
    });
    Ok(rows)
}

/// Reference output intervals the comparison report checks against.
pub fn table1_reference() -> Vec<(&'static str, [f64; 4])> {
    vec![
        ("Natural", [0.0, 0.04, -0.22, 0.22]),
        ("Centered", [-0.08, 0.08, -0.24, 0.24]),
        ("Mixed Centered", [-0.06, 0.06, -0.22, 0.22]),
        ("Cornered", [-0.12, 0.16, -0.18, 0.22]),
        ("Mixed Cornered", [-0.08, 0.08, -0.18, 0.22]),
    ]
}
