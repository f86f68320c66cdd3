use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use clap::{Parser, Subcommand};
use serde::Serialize;

use spindrift::config::{parse_config, SimulationConfig};
use spindrift::drivers::{self, Problem};
use spindrift::io;
use spindrift::{Error, Result};

#[derive(Parser)]
#[command(name = "spindrift", version, about = "Spin-diffusion LLG simulator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one simulation in the mode given by the config.
    Run {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Compare SDLLG runs at several epsilon against the SLLG limit.
    SweepEps {
        #[arg(long)]
        config: PathBuf,
        /// Strictly decreasing, comma separated.
        #[arg(long, value_delimiter = ',', required = true)]
        eps: Vec<f64>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Lipschitz ratios of the stationary spin map around the initial state.
    ProbeLipschitz {
        #[arg(long)]
        config: PathBuf,
        #[arg(long, value_delimiter = ',', default_value = "1e-1,1e-2,1e-3")]
        distances: Vec<f64>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Distances between trajectories on successively refined grids.
    ProbeUniqueness {
        #[arg(long)]
        config: PathBuf,
        #[arg(long, default_value_t = 3)]
        levels: usize,
        #[arg(long)]
        out: PathBuf,
    },
    /// Run the built-in invariant suite.
    Validate,
}

#[derive(Serialize)]
struct Report<'a, T> {
    version: &'a str,
    config: &'a SimulationConfig,
    wall_time_s: f64,
    result: T,
}

fn save<T: Serialize>(out: &Path, cfg: &SimulationConfig, start: Instant, result: T) -> Result<()> {
    std::fs::create_dir_all(out).map_err(|e| Error::Io {
        path: out.to_path_buf(),
        source: e,
    })?;
    let report = Report {
        version: env!("CARGO_PKG_VERSION"),
        config: cfg,
        wall_time_s: start.elapsed().as_secs_f64(),
        result,
    };
    io::write_json(&out.join("report.json"), &report)
}

fn configure_threads() {
    if let Some(n) = std::env::var("SPINDRIFT_THREADS").ok().and_then(|v| v.parse::<usize>().ok()) {
        if n > 0 {
            let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
        }
    }
}

fn execute(cmd: Command) -> Result<bool> {
    let start = Instant::now();
    match cmd {
        Command::Run { config, out } => {
            let cfg = parse_config(&config)?;
            let problem = Problem::from_config(&cfg)?;
            let traj = drivers::run(&problem)?;
            let manifest = io::write_outputs(&traj, &out, Some(&cfg), start.elapsed().as_secs_f64())?;
            println!(
                "{} steps, final t = {}, min slack = {:.3e}, {} files in {}",
                problem.n_steps,
                traj.final_state.t,
                manifest.min_slack,
                manifest.files.len() + 1,
                out.display()
            );
            for w in &manifest.warnings {
                eprintln!("warning: {w}");
            }
        }
        Command::SweepEps { config, eps, out } => {
            let cfg = parse_config(&config)?;
            let report = drivers::epsilon_sweep(&Problem::from_config(&cfg)?, &eps)?;
            println!("{:>10} {:>14} {:>14} {:>8} {:>8}", "eps", "err_m", "err_s", "ord_m", "ord_s");
            for r in &report.rows {
                let o = |v: Option<f64>| v.map(|x| format!("{x:.3}")).unwrap_or_else(|| "-".into());
                println!(
                    "{:>10.3e} {:>14.6e} {:>14.6e} {:>8} {:>8}",
                    r.epsilon,
                    r.err_m,
                    r.err_s,
                    o(r.order_m),
                    o(r.order_s)
                );
            }
            save(&out, &cfg, start, report)?;
        }
        Command::ProbeLipschitz { config, distances, out } => {
            let cfg = parse_config(&config)?;
            let p = Problem::from_config(&cfg)?;
            let report = drivers::lipschitz_probe(&p.m0, &p.spin, &distances, &p.solver)?;
            for r in &report.rows {
                println!("distance {:.3e}  ratio {:.6e}", r.distance, r.ratio);
            }
            println!("spread {:.4}", report.spread);
            save(&out, &cfg, start, report)?;
        }
        Command::ProbeUniqueness { config, levels, out } => {
            let cfg = parse_config(&config)?;
            let report = drivers::uniqueness_probe(&cfg, levels)?;
            for (k, d) in report.distances.iter().enumerate() {
                println!("d_{k} = {d:.6e}");
            }
            save(&out, &cfg, start, report)?;
        }
        Command::Validate => {
            let checks = spindrift::validate::run_all();
            let mut ok = true;
            for c in &checks {
                println!("[{}] {}: {}", if c.passed { "PASS" } else { "FAIL" }, c.name, c.detail);
                ok &= c.passed;
            }
            return Ok(ok);
        }
    }
    Ok(true)
}

fn main() -> ExitCode {
    configure_threads();
    let cli = Cli::parse();
    match execute(cli.command) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::FAILURE,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
