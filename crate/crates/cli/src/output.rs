//! Tube emission: JSONL records, summary JSON, and gnuplot scripts.

use std::fs;
use std::io::Write;
use std::time::Instant;

use serde_json::json;

use reachcore::reach::{self, check_spec, ReachTube, Verdict};

use crate::config::RunConfig;

pub struct Outcome {
    pub verdict: Option<Verdict>,
}

pub type ExecError = (&'static str, String);

pub fn execute(cfg: &RunConfig) -> Result<Outcome, ExecError> {
    fs::create_dir_all(&cfg.out_dir).map_err(|e| ("io", e.to_string()))?;

    let mut tubes: Vec<(String, ReachTube, f64, f64)> = Vec::new();
    for (label, opts) in &cfg.methods {
        let mut runtimes = Vec::with_capacity(cfg.repeat);
        let mut tube = None;
        for _ in 0..cfg.repeat {
            let t0 = Instant::now();
            let run = reach::partition_integrate(
                &cfg.system,
                opts,
                &cfg.x0,
                &cfg.w_box,
                &cfg.cfg,
                &cfg.partition,
                cfg.redundant.as_ref(),
            )
            .map_err(|e| ("reach", e.to_string()))?;
            runtimes.push(t0.elapsed().as_secs_f64());
            tube = Some(run);
        }
        let mut tube = tube.unwrap();
        tube.fingerprint = cfg.fingerprint.clone();
        let mean = runtimes.iter().sum::<f64>() / runtimes.len() as f64;
        let std = (runtimes
            .iter()
            .map(|t| (t - mean) * (t - mean))
            .sum::<f64>()
            / runtimes.len() as f64)
            .sqrt();
        tubes.push((label.clone(), tube, mean, std));
    }

    // tube JSONL, one record per (branch, step)
    for (label, tube, _, _) in &tubes {
        let path = cfg.out_dir.join(format!("tube_{label}.jsonl"));
        let mut f = fs::File::create(&path).map_err(|e| ("io", e.to_string()))?;
        for b in &tube.branches {
            for s in &b.samples {
                let rec = json!({"branch": b.id, "t": s.t, "lo": s.lo, "hi": s.hi});
                writeln!(f, "{rec}").map_err(|e| ("io", e.to_string()))?;
            }
        }
    }

    // safety check on the first tube (all methods share one specification)
    let has_spec = cfg.spec.target.is_some()
        || !cfg.spec.avoid.is_empty()
        || !cfg.spec.margins.is_empty();
    let mut verdict = None;
    let mut verdict_json = json!(null);
    if has_spec {
        match check_spec(&tubes[0].1, &cfg.spec) {
            Ok(report) => {
                verdict = Some(report.verdict);
                verdict_json = json!({
                    "overall": report.verdict.name(),
                    "constraints": report.constraints.iter().map(|c| json!({
                        "name": c.name,
                        "verdict": c.verdict.name(),
                        "detail": c.detail,
                    })).collect::<Vec<_>>(),
                });
            }
            Err(reachcore::ReachError::HorizonMismatch { tube_t, spec_t }) => {
                verdict = Some(Verdict::Inconclusive);
                verdict_json = json!({
                    "overall": "inconclusive",
                    "reason": format!("tube horizon {tube_t} < spec horizon {spec_t}"),
                });
            }
            Err(e) => return Err(("spec", e.to_string())),
        }
    }

    // cross-containment report for method pairs
    let mut containment = json!(null);
    if tubes.len() == 2 {
        let (la, ta, _, _) = &tubes[0];
        let (lb, tb, _, _) = &tubes[1];
        let mut b_in_a = true;
        for t in tb.times() {
            if let (Some(ba), Some(bb)) = (ta.union_box_at(t), tb.union_box_at(t)) {
                for i in 0..ba.dim() {
                    if !(ba[i].lo() <= bb[i].lo() + 1e-12 && bb[i].hi() <= ba[i].hi() + 1e-12) {
                        b_in_a = false;
                    }
                }
            }
        }
        containment = json!({ format!("{lb} inside {la}"): b_in_a });
    }

    let summary = json!({
        "system": cfg.name,
        "fingerprint": cfg.fingerprint,
        "seed": cfg.seed,
        "methods": tubes.iter().map(|(label, tube, mean, std)| {
            let final_box = tube.union_box_at(cfg.cfg.t_final);
            let area = cfg.plot.and_then(|dims| tube.final_area(dims));
            json!({
                "method": label,
                "runtime": format!("{mean:.6}±{std:.6} seconds"),
                "runtime_mean_s": mean,
                "runtime_std_s": std,
                "branches": tube.branches.len(),
                "steps": tube.stats.steps,
                "nn_refreshes": tube.stats.nn_refreshes,
                "area": area,
                "final_lo": final_box.as_ref().map(|b| b.lo_vec()),
                "final_hi": final_box.as_ref().map(|b| b.hi_vec()),
                "max_width_per_step": tube.branches.first().map(|b| b.samples.iter()
                    .map(|s| s.max_width()).collect::<Vec<_>>()),
            })
        }).collect::<Vec<_>>(),
        "verdict": verdict_json,
        "containment": containment,
    });
    let spath = cfg.out_dir.join("summary.json");
    fs::write(&spath, serde_json::to_string_pretty(&summary).unwrap())
        .map_err(|e| ("io", e.to_string()))?;

    if let Some(dims) = cfg.plot {
        for (label, tube, _, _) in &tubes {
            write_gnuplot(cfg, label, tube, dims)?;
        }
    }

    println!(
        "{}: wrote {} tube(s) and summary to {}",
        cfg.name,
        tubes.len(),
        cfg.out_dir.display()
    );
    for (label, tube, mean, std) in &tubes {
        println!(
            "  {label}: {} branches, {} steps, runtime {mean:.3}±{std:.3} s",
            tube.branches.len(),
            tube.stats.steps
        );
    }
    if let Some(v) = verdict {
        println!("  verdict: {}", v.name());
    }
    Ok(Outcome { verdict })
}

fn write_gnuplot(
    cfg: &RunConfig,
    label: &str,
    tube: &ReachTube,
    dims: (usize, usize),
) -> Result<(), ExecError> {
    let data_path = cfg.out_dir.join(format!("tube_{label}_boxes.dat"));
    let mut f = fs::File::create(&data_path).map_err(|e| ("io", e.to_string()))?;
    for b in &tube.branches {
        for s in &b.samples {
            // corner trace of the rectangle, blank-line separated
            let (i, j) = dims;
            writeln!(
                f,
                "{} {}\n{} {}\n{} {}\n{} {}\n{} {}\n",
                s.lo[i], s.lo[j], s.hi[i], s.lo[j], s.hi[i], s.hi[j], s.lo[i], s.hi[j],
                s.lo[i], s.lo[j]
            )
            .map_err(|e| ("io", e.to_string()))?;
        }
    }
    let gp = format!(
        "set title 'reach tube: {name} ({label})'\n\
         set xlabel 'x{i}'\nset ylabel 'x{j}'\n\
         plot 'tube_{label}_boxes.dat' with lines lc rgb 'blue' notitle\n\
         pause -1\n",
        name = cfg.name,
        i = dims.0,
        j = dims.1,
    );
    fs::write(cfg.out_dir.join(format!("plot_{label}.gp")), gp)
        .map_err(|e| ("io", e.to_string()))?;
    Ok(())
}
