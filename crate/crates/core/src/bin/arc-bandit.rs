use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use arc_bandit::harness::{run_experiment, write_outputs, ExperimentConfig};
use arc_bandit::oracle::{compare_grid, value_iterate, GridSpec, OracleConfig};
use arc_bandit::BanditError;
use clap::{Args, Parser, Subcommand};

/// Bayesian bandit experiments with the ARC policy and baselines.
#[derive(Parser)]
#[command(version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a regret experiment described by a JSON or TOML config.
    Simulate {
        #[command(flatten)]
        run: RunArgs,
        /// K=50, T=2000, 1000 replications.
        #[arg(long)]
        paper_scale: bool,
    },
    /// Exact value iteration for the one-and-a-half-armed bandit and its
    /// comparison with the ARC closed form.
    Oracle {
        #[arg(long, default_value_t = 0.1)]
        lambda: f64,
        #[arg(long, default_value_t = 0.99)]
        beta: f64,
        #[arg(long, default_value_t = 1000)]
        mc: usize,
        /// `min:max:step`
        #[arg(long, default_value = "0:2:0.02")]
        grid_m: String,
        /// `min:max`; the grid uses the deterministic orbit from `max`.
        #[arg(long, default_value = "0.01:0.05")]
        grid_d: String,
        #[arg(long, default_value_t = 1e-3)]
        d_tail: f64,
        #[arg(long, default_value_t = 6.0)]
        pad_sd: f64,
        #[arg(long, default_value_t = 1e-6)]
        tol: f64,
        #[arg(long, default_value_t = 10_000)]
        max_iters: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value = "oracle-out")]
        out: PathBuf,
    },
    /// Run one experiment with a hyper-parameter expanded over several values.
    Sweep {
        #[command(flatten)]
        run: RunArgs,
        /// rho, kappa, beta, lambda_floor, epsilon or c
        #[arg(long)]
        param: String,
        #[arg(long, value_delimiter = ',', required = true)]
        values: Vec<f64>,
    },
}

#[derive(Args)]
struct RunArgs {
    #[arg(long)]
    config: PathBuf,
    #[arg(long)]
    reps: Option<usize>,
    #[arg(long)]
    horizon: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    out: Option<PathBuf>,
}

impl RunArgs {
    fn load(&self) -> Result<ExperimentConfig, BanditError> {
        let mut cfg = ExperimentConfig::from_path(&self.config)?;
        if let Some(r) = self.reps {
            cfg.replications = r;
        }
        if let Some(h) = self.horizon {
            cfg.horizon = h;
        }
        if let Some(s) = self.seed {
            cfg.base_seed = s;
        }
        if let Some(o) = &self.out {
            cfg.output = Some(o.clone());
        }
        Ok(cfg)
    }
}

enum Outcome {
    Ok,
    TooManyFailures,
}

fn parse_floats(text: &str, n: usize, what: &str) -> Result<Vec<f64>, BanditError> {
    let parts: Result<Vec<f64>, _> = text.split(':').map(str::parse::<f64>).collect();
    match parts {
        Ok(v) if v.len() == n => Ok(v),
        _ => Err(BanditError::Config(format!("{what} must have {n} colon-separated numbers, got {text:?}"))),
    }
}

fn simulate(cfg: ExperimentConfig) -> Result<Outcome, BanditError> {
    cfg.validate()?;
    let out = cfg.output.clone().unwrap_or_else(|| PathBuf::from("results"));
    let start = Instant::now();
    let summary = run_experiment(&cfg)?;
    let secs = start.elapsed().as_secs_f64();
    write_outputs(&summary, &out, Some(secs))?;
    for (label, curves) in summary.labels.iter().zip(&summary.curves) {
        println!("{label}: mean final regret {:.3}", curves.mean.last().copied().unwrap_or(f64::NAN));
    }
    println!("wrote {} ({:.1}s)", out.display(), secs);
    if summary.exceeds_failure_threshold() {
        log::error!(
            "{} of {} episodes failed, above the {:.0}% threshold",
            summary.failed_episodes(),
            summary.episodes(),
            100.0 * arc_bandit::harness::FAILURE_THRESHOLD
        );
        return Ok(Outcome::TooManyFailures);
    }
    Ok(Outcome::Ok)
}

fn oracle(cfg: &OracleConfig, out: &Path) -> Result<Outcome, BanditError> {
    let start = Instant::now();
    let vg = value_iterate(cfg)?;
    let report = compare_grid(&vg);
    report.write(out)?;
    println!(
        "converged after {} sweeps (sup delta {:.2e}) in {:.1}s; {} out-of-grid draws",
        vg.iterations,
        vg.sup_delta,
        start.elapsed().as_secs_f64(),
        vg.out_of_range
    );
    let s = &report.summary;
    println!("max rel err {:.4}, mean rel err {:.4}, max p diff {:.4}", s.max_rel_err, s.mean_rel_err, s.max_p_diff);
    println!("wrote {}", out.display());
    Ok(Outcome::Ok)
}

fn run(cli: Cli) -> Result<Outcome, BanditError> {
    match cli.command {
        Command::Simulate { run, paper_scale } => {
            let mut cfg = run.load()?;
            if paper_scale {
                cfg.paper_scale()?;
            }
            simulate(cfg)
        }
        Command::Sweep { run, param, values } => simulate(run.load()?.sweep(&param, &values)?),
        Command::Oracle { lambda, beta, mc, grid_m, grid_d, d_tail, pad_sd, tol, max_iters, seed, out } => {
            let m = parse_floats(&grid_m, 3, "--grid-m")?;
            let d = parse_floats(&grid_d, 2, "--grid-d")?;
            let grid = GridSpec { m_min: m[0], m_max: m[1], m_step: m[2], d_min: d[0], d_max: d[1], d_tail, pad_sd };
            let cfg = OracleConfig { lambda, beta, mc_samples: mc, tol, max_iters, seed, grid };
            oracle(&cfg, &out)
        }
    }
}

/// 0 success, 2 bad configuration, 3 numeric trouble, 1 anything else.
fn exit_code(result: &Result<Outcome, BanditError>) -> u8 {
    match result {
        Ok(Outcome::Ok) => 0,
        Ok(Outcome::TooManyFailures) => 3,
        Err(BanditError::Config(_) | BanditError::InvalidArgument(_)) => 2,
        Err(BanditError::Numeric(_) | BanditError::NotConverged { .. }) => 3,
        Err(_) => 1,
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let result = run(Cli::parse());
    if let Err(e) = &result {
        eprintln!("error: {e}");
    }
    ExitCode::from(exit_code(&result))
}
