//! Command-line front end: reachability runs, specification checks, and the
//! inclusion-method comparison report.

mod config;
mod output;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use config::RunConfig;

#[derive(Parser)]
#[command(
    name = "reachcore",
    about = "Interval reachability for systems with neural-network controllers",
    version
)]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Integrate the embedding system and emit reach tubes.
    Run(RunArgs),
    /// Run reachability, then check the system's safety specification.
    /// Exit code: 0 verified, 2 violated-possible, 3 inconclusive.
    Verify(RunArgs),
    /// Reproduce the inclusion-method comparison on the running example.
    Table1(Table1Args),
}

#[derive(Args, Clone, Default)]
pub struct RunArgs {
    /// Built-in benchmark name (bicycle, double-integrator, acc, docking,
    /// tora, platoon-N).
    #[arg(long)]
    system: Option<String>,
    /// Custom system document (JSON expression grammar).
    #[arg(long, value_name = "PATH")]
    custom_system: Option<PathBuf>,
    /// Controller weights JSON for a custom system.
    #[arg(long, value_name = "PATH")]
    nn: Option<PathBuf>,
    /// con | act | both | intersect
    #[arg(long)]
    method: Option<String>,
    /// Corner preset for the interaction method: 1, 2 or 4.
    #[arg(long)]
    corners: Option<usize>,
    /// Use mixed Jacobian bounds in the interaction method.
    #[arg(long)]
    mixed: bool,
    /// euler | rk4 | discrete
    #[arg(long)]
    scheme: Option<String>,
    #[arg(long)]
    dt: Option<f64>,
    #[arg(long)]
    t_final: Option<f64>,
    /// Zero-order hold period (0 disables).
    #[arg(long)]
    zoh: Option<f64>,
    /// uniform:K or adaptive:EPS,DEPTH_P,DEPTH_N
    #[arg(long)]
    partition: Option<String>,
    /// Initial box override: "lo,hi;lo,hi;..." (one pair per coordinate).
    #[arg(long)]
    x0: Option<String>,
    /// Disturbance box override, same format.
    #[arg(long)]
    w: Option<String>,
    #[arg(long)]
    seed: Option<u64>,
    /// Repeat the run and report mean/std runtimes.
    #[arg(long, default_value_t = 1)]
    repeat: usize,
    /// Worker threads (also REACHCORE_JOBS).
    #[arg(long)]
    jobs: Option<usize>,
    #[arg(long, default_value = "out")]
    out_dir: PathBuf,
    /// Emit a gnuplot script projecting this coordinate pair, e.g. "0,1".
    #[arg(long)]
    plot: Option<String>,
    /// Config file (JSON mirror of the flags); flags win over the file.
    #[arg(long)]
    config: Option<PathBuf>,
}

#[derive(Args)]
struct Table1Args {
    /// Evaluations per method for the runtime column.
    #[arg(long, default_value_t = 10_000)]
    evals: usize,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.cmd {
        Cmd::Run(args) => cmd_run(args, false),
        Cmd::Verify(args) => cmd_run(args, true),
        Cmd::Table1(args) => cmd_table1(args),
    };
    match result {
        Ok(code) => code,
        Err(e) => {
            let payload = serde_json::json!({
                "error": {
                    "kind": e.kind,
                    "message": e.message,
                }
            });
            eprintln!("{payload}");
            ExitCode::from(1)
        }
    }
}

pub struct CliError {
    pub kind: String,
    pub message: String,
}

impl CliError {
    fn new(kind: &str, message: impl ToString) -> Self {
        CliError {
            kind: kind.into(),
            message: message.to_string(),
        }
    }
}

fn cmd_run(args: RunArgs, verify: bool) -> Result<ExitCode, CliError> {
    let cfg = RunConfig::assemble(&args)?;
    if let Some(jobs) = cfg.jobs {
        rayon::ThreadPoolBuilder::new()
            .num_threads(jobs)
            .build_global()
            .ok();
    }
    let outcome = output::execute(&cfg).map_err(|e| CliError::new(e.0, e.1))?;
    if verify {
        match outcome.verdict {
            Some(reachcore::reach::Verdict::Verified) => Ok(ExitCode::from(0)),
            Some(reachcore::reach::Verdict::ViolatedPossible) => Ok(ExitCode::from(2)),
            _ => Ok(ExitCode::from(3)),
        }
    } else {
        Ok(ExitCode::from(0))
    }
}

fn cmd_table1(args: Table1Args) -> Result<ExitCode, CliError> {
    let rows = reachcore::models::table1_report(args.evals)
        .map_err(|e| CliError::new("table1", e))?;
    let reference = reachcore::models::table1_reference();
    println!("Method          | Output Interval                      | Runtime (s) | vs reference");
    println!("----------------+--------------------------------------+-------------+-------------");
    for (row, (rname, expect)) in rows.iter().zip(&reference) {
        assert_eq!(&row.name, rname);
        let iv = &row.interval;
        let got = [iv[0].lo(), iv[0].hi(), iv[1].lo(), iv[1].hi()];
        let ok = got
            .iter()
            .zip(expect)
            .all(|(a, b)| (a - b).abs() <= 5e-3);
        println!(
            "{:<15} | [{:+.2}, {:+.2}] x [{:+.2}, {:+.2}]     | {:.3e}   | {}",
            row.name,
            got[0],
            got[1],
            got[2],
            got[3],
            row.seconds,
            if ok { "PASS" } else { "FAIL" }
        );
    }
    let t_nat = rows[0].seconds;
    let t_cor = rows[3].seconds;
    let t_mix = rows[4].seconds;
    println!(
        "runtime ordering natural < cornered < mixed-cornered: {}",
        if t_nat < t_cor && t_cor < t_mix {
            "PASS"
        } else {
            "FAIL"
        }
    );
    Ok(ExitCode::from(0))
}
