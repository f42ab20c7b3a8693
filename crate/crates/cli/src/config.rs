//! Run configuration: benchmark defaults overlaid by a config file overlaid
//! by command-line flags.

use std::path::PathBuf;
use std::sync::Arc;

use serde::Deserialize;

use reachcore::closed_loop::{
    ClosedLoopSystem, Controller, EvalOptions, GroupCorner, Method, MixedMode, OpenLoopModel,
};
use reachcore::interval::IntervalVector;
use reachcore::models::BenchmarkDef;
use reachcore::nn::load_network;
use reachcore::reach::{
    IntegrationCfg, PartitionCfg, PartitionMode, RedundantSpec, SafetySpec, Scheme,
};
use reachcore::SystemDoc;

use crate::{CliError, RunArgs};

#[derive(Deserialize, Default)]
#[serde(deny_unknown_fields)]
struct FileConfig {
    system: Option<String>,
    method: Option<String>,
    corners: Option<usize>,
    mixed: Option<bool>,
    scheme: Option<String>,
    dt: Option<f64>,
    t_final: Option<f64>,
    zoh: Option<f64>,
    partition: Option<String>,
    x0: Option<String>,
    w: Option<String>,
    seed: Option<u64>,
    jobs: Option<usize>,
}

pub struct RunConfig {
    pub name: String,
    pub system: ClosedLoopSystem,
    pub x0: IntervalVector,
    pub w_box: IntervalVector,
    pub cfg: IntegrationCfg,
    pub methods: Vec<(String, EvalOptions)>,
    pub partition: PartitionCfg,
    pub redundant: Option<RedundantSpec>,
    pub spec: SafetySpec,
    pub seed: u64,
    pub repeat: usize,
    pub jobs: Option<usize>,
    pub out_dir: PathBuf,
    pub plot: Option<(usize, usize)>,
    pub fingerprint: String,
}

fn parse_box(text: &str) -> Result<IntervalVector, CliError> {
    let mut lo = Vec::new();
    let mut hi = Vec::new();
    for (i, pair) in text.split(';').enumerate() {
        let parts: Vec<&str> = pair.split(',').collect();
        if parts.len() != 2 {
            return Err(CliError::new(
                "config",
                format!("box coordinate {i}: expected 'lo,hi', got '{pair}'"),
            ));
        }
        let l: f64 = parts[0]
            .trim()
            .parse()
            .map_err(|e| CliError::new("config", format!("box coordinate {i}: {e}")))?;
        let h: f64 = parts[1]
            .trim()
            .parse()
            .map_err(|e| CliError::new("config", format!("box coordinate {i}: {e}")))?;
        lo.push(l);
        hi.push(h);
    }
    IntervalVector::from_bounds(&lo, &hi).map_err(|e| CliError::new("config", e))
}

fn parse_partition(text: &str) -> Result<PartitionMode, CliError> {
    if let Some(k) = text.strip_prefix("uniform:") {
        let k: usize = k
            .parse()
            .map_err(|e| CliError::new("config", format!("partition: {e}")))?;
        return Ok(PartitionMode::Uniform(k));
    }
    if let Some(rest) = text.strip_prefix("adaptive:") {
        let parts: Vec<&str> = rest.split(',').collect();
        if parts.len() != 3 {
            return Err(CliError::new(
                "config",
                "adaptive partition expects adaptive:EPS,DEPTH_P,DEPTH_N",
            ));
        }
        let eps: f64 = parts[0]
            .parse()
            .map_err(|e| CliError::new("config", format!("partition eps: {e}")))?;
        let depth_p: u32 = parts[1]
            .parse()
            .map_err(|e| CliError::new("config", format!("partition depth_p: {e}")))?;
        let depth_n: u32 = parts[2]
            .parse()
            .map_err(|e| CliError::new("config", format!("partition depth_n: {e}")))?;
        return Ok(PartitionMode::Adaptive {
            eps,
            depth_p,
            depth_n,
        });
    }
    Err(CliError::new(
        "config",
        format!("unknown partition mode '{text}'"),
    ))
}

fn parse_scheme(text: &str) -> Result<Scheme, CliError> {
    match text {
        "euler" => Ok(Scheme::Euler),
        "rk4" => Ok(Scheme::Rk4),
        "discrete" => Ok(Scheme::Discrete),
        other => Err(CliError::new("config", format!("unknown scheme '{other}'"))),
    }
}

impl RunConfig {
    pub fn assemble(args: &RunArgs) -> Result<Self, CliError> {
        let file: FileConfig = match &args.config {
            Some(path) => {
                let text = std::fs::read_to_string(path)
                    .map_err(|e| CliError::new("io", format!("{}: {e}", path.display())))?;
                serde_json::from_str(&text).map_err(|e| CliError::new("config", e))?
            }
            None => FileConfig::default(),
        };

        let system_name = args
            .system
            .clone()
            .or(file.system.clone())
            .filter(|_| args.custom_system.is_none());

        // benchmark defaults, or a custom system document
        let (name, def) = if let Some(path) = &args.custom_system {
            (
                path.display().to_string(),
                custom_benchmark(path, args.nn.as_deref())?,
            )
        } else {
            let name = system_name
                .ok_or_else(|| CliError::new("config", "--system or --custom-system required"))?;
            let def = reachcore::models::by_name(&name)
                .map_err(|e| CliError::new("system", e))?;
            (name, def)
        };

        let BenchmarkDef {
            system,
            x0,
            w_box,
            mut cfg,
            opts_con,
            opts_act,
            redundant,
            spec,
            plot_dims,
            ..
        } = def;

        // precedence: flags > config file > benchmark defaults
        if let Some(s) = args.scheme.as_deref().or(file.scheme.as_deref()) {
            cfg.scheme = parse_scheme(s)?;
        }
        if let Some(dt) = args.dt.or(file.dt) {
            cfg.dt = dt;
        }
        if let Some(t) = args.t_final.or(file.t_final) {
            cfg.t_final = t;
        }
        if let Some(z) = args.zoh.or(file.zoh) {
            cfg.zoh = if z > 0.0 { Some(z) } else { None };
        }
        let x0 = match args.x0.as_deref().or(file.x0.as_deref()) {
            Some(text) => parse_box(text)?,
            None => x0,
        };
        let w_box = match args.w.as_deref().or(file.w.as_deref()) {
            Some(text) => parse_box(text)?,
            None => w_box,
        };

        let (n, p, q) = system.dims();
        if x0.dim() != n {
            return Err(CliError::new(
                "config",
                format!("initial box has {} coordinates, system has {n}", x0.dim()),
            ));
        }
        if w_box.dim() != q {
            return Err(CliError::new(
                "config",
                format!("disturbance box has {} coordinates, system has {q}", w_box.dim()),
            ));
        }

        let corner_count = args.corners.or(file.corners);
        let mixed_flag = args.mixed || file.mixed.unwrap_or(false);
        let mk_act = |method: Method| -> EvalOptions {
            let mut opts = opts_act.clone();
            if let Some(k) = corner_count {
                opts.corners = GroupCorner::preset(k, n, p, q);
            }
            if args.mixed || file.mixed.is_some() {
                opts.mixed = if mixed_flag {
                    MixedMode::StatesControl
                } else {
                    MixedMode::Off
                };
            }
            opts.method = method;
            opts
        };

        let method_name = args
            .method
            .clone()
            .or(file.method.clone())
            .unwrap_or_else(|| "con".into());
        let methods: Vec<(String, EvalOptions)> = match method_name.as_str() {
            "con" => vec![("con".into(), opts_con)],
            "act" => vec![("act".into(), mk_act(Method::Act))],
            "intersect" => vec![("intersect".into(), mk_act(Method::Fused))],
            "both" => vec![
                ("con".into(), opts_con),
                ("act".into(), mk_act(Method::Act)),
            ],
            other => {
                return Err(CliError::new(
                    "config",
                    format!("unknown method '{other}' (con|act|both|intersect)"),
                ))
            }
        };

        let partition = PartitionCfg {
            mode: match args.partition.as_deref().or(file.partition.as_deref()) {
                Some(text) => parse_partition(text)?,
                None => PartitionMode::Uniform(1),
            },
            branch_cap: 4096,
        };

        let plot = match &args.plot {
            Some(text) => {
                let parts: Vec<&str> = text.split(',').collect();
                if parts.len() != 2 {
                    return Err(CliError::new("config", "--plot expects 'i,j'"));
                }
                Some((
                    parts[0]
                        .trim()
                        .parse()
                        .map_err(|e| CliError::new("config", format!("plot: {e}")))?,
                    parts[1]
                        .trim()
                        .parse()
                        .map_err(|e| CliError::new("config", format!("plot: {e}")))?,
                ))
            }
            None => Some(plot_dims),
        };

        let seed = args.seed.or(file.seed).unwrap_or(0);
        let jobs = args
            .jobs
            .or(file.jobs)
            .or_else(|| std::env::var("REACHCORE_JOBS").ok()?.parse().ok());

        let fingerprint = format!(
            "system={name} methods={} scheme={} dt={} t_final={} zoh={:?} partition={:?} seed={seed}",
            methods
                .iter()
                .map(|(m, _)| m.as_str())
                .collect::<Vec<_>>()
                .join("+"),
            cfg.scheme.name(),
            cfg.dt,
            cfg.t_final,
            cfg.zoh,
            partition.mode,
        );

        Ok(RunConfig {
            name,
            system,
            x0,
            w_box,
            cfg,
            methods,
            partition,
            redundant,
            spec,
            seed,
            repeat: args.repeat.max(1),
            jobs,
            out_dir: args.out_dir.clone(),
            plot,
            fingerprint,
        })
    }
}

fn custom_benchmark(
    path: &std::path::Path,
    nn: Option<&std::path::Path>,
) -> Result<BenchmarkDef, CliError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::new("io", format!("{}: {e}", path.display())))?;
    let doc: serde_json::Value =
        serde_json::from_str(&text).map_err(|e| CliError::new("parse", e))?;
    let sys = SystemDoc::parse(&doc).map_err(|e| CliError::new("parse", e))?;
    let graph = Arc::new(sys.graph);
    let (n, p, q) = graph.dims();
    let controller = match nn {
        Some(nn_path) => {
            let weights = std::fs::read_to_string(nn_path)
                .map_err(|e| CliError::new("io", format!("{}: {e}", nn_path.display())))?;
            let net = Arc::new(load_network(&weights).map_err(|e| CliError::new("nn", e))?);
            if net.input_dim() != n {
                return Err(CliError::new(
                    "nn",
                    format!(
                        "network input dim {} does not match state dim {n}",
                        net.input_dim()
                    ),
                ));
            }
            Some(Controller::new(net))
        }
        None => None,
    };
    let open = if controller.is_some() {
        OpenLoopModel::graph_with_jacobians(graph).map_err(|e| CliError::new("system", e))?
    } else {
        OpenLoopModel::graph(graph)
    };
    let system = ClosedLoopSystem { open, controller };
    Ok(BenchmarkDef {
        name: path.display().to_string(),
        system,
        x0: IntervalVector::from_bounds(&vec![0.0; n], &vec![0.0; n]).unwrap(),
        w_box: IntervalVector::from_bounds(&vec![0.0; q], &vec![0.0; q]).unwrap(),
        cfg: IntegrationCfg {
            scheme: Scheme::Euler,
            dt: 0.05,
            t_final: 1.0,
            zoh: None,
        },
        opts_con: EvalOptions::con(),
        opts_act: EvalOptions::act(
            GroupCorner::preset(1, n, p, q),
            MixedMode::Off,
        ),
        redundant: None,
        spec: SafetySpec::default(),
        plot_dims: (0, if n > 1 { 1 } else { 0 }),
    })
}
