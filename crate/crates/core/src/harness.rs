//! Experiment driver: paired replications, regret curves and output files.

use std::collections::HashSet;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use statrs::statistics::{Data, OrderStatistics};

use crate::baselines::{decide, DecisionContext, PolicyKind};
use crate::envs::{EnvVariant, EnvironmentSpec};
use crate::error::{BanditError, Result};
use crate::model::{update, Arms};

pub const DESK_ARMS: usize = 10;
pub const DESK_HORIZON: usize = 500;
pub const DESK_REPLICATIONS: usize = 200;
pub const PAPER_ARMS: usize = 50;
pub const PAPER_HORIZON: usize = 2000;
pub const PAPER_REPLICATIONS: usize = 1000;

/// Share of failed episodes above which a run counts as failed.
pub const FAILURE_THRESHOLD: f64 = 0.01;

fn desk_horizon() -> usize {
    DESK_HORIZON
}
fn desk_reps() -> usize {
    DESK_REPLICATIONS
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LabeledPolicy {
    /// Column name in the outputs; defaults to the policy kind.
    #[serde(default)]
    pub label: Option<String>,
    pub policy: PolicyKind,
}

impl LabeledPolicy {
    pub fn new(label: impl Into<String>, policy: PolicyKind) -> Self {
        Self { label: Some(label.into()), policy }
    }

    pub fn label(&self) -> String {
        self.label.clone().unwrap_or_else(|| self.policy.name().to_string())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub env: EnvironmentSpec,
    #[serde(default)]
    pub policies: Vec<LabeledPolicy>,
    #[serde(default = "desk_horizon")]
    pub horizon: usize,
    #[serde(default = "desk_reps")]
    pub replications: usize,
    #[serde(default)]
    pub base_seed: u64,
    #[serde(default)]
    pub output: Option<PathBuf>,
    /// Write a prefix summary every this many replications.
    #[serde(default)]
    pub checkpoint_interval: Option<usize>,
    /// Worker threads; defaults to the rayon global pool.
    #[serde(default)]
    pub workers: Option<usize>,
}

impl ExperimentConfig {
    pub fn new(env: EnvironmentSpec, policies: Vec<LabeledPolicy>) -> Self {
        Self {
            env,
            policies,
            horizon: DESK_HORIZON,
            replications: DESK_REPLICATIONS,
            base_seed: 0,
            output: None,
            checkpoint_interval: None,
            workers: None,
        }
    }

    /// Parse JSON, or TOML when the text is not JSON.
    pub fn parse(text: &str) -> Result<Self> {
        match serde_json::from_str(text) {
            Ok(cfg) => Ok(cfg),
            Err(json_err) => toml::from_str(text).map_err(|toml_err| {
                BanditError::Config(format!("not valid JSON ({json_err}) nor TOML ({toml_err})"))
            }),
        }
    }

    pub fn from_path(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| BanditError::Config(format!("cannot read {}: {e}", path.display())))?;
        let cfg = match path.extension().and_then(|e| e.to_str()) {
            Some("toml") => toml::from_str(&text).map_err(|e| BanditError::Config(e.to_string()))?,
            Some("json") => serde_json::from_str(&text).map_err(|e| BanditError::Config(e.to_string()))?,
            _ => Self::parse(&text)?,
        };
        Ok(cfg)
    }

    pub fn labels(&self) -> Vec<String> {
        self.policies.iter().map(LabeledPolicy::label).collect()
    }

    pub fn validate(&self) -> Result<()> {
        let cfg = |e: BanditError| BanditError::Config(e.to_string());
        if self.horizon == 0 {
            return Err(BanditError::Config("horizon must be at least 1".into()));
        }
        if self.replications == 0 {
            return Err(BanditError::Config("replications must be at least 1".into()));
        }
        if self.checkpoint_interval == Some(0) || self.workers == Some(0) {
            return Err(BanditError::Config("checkpoint interval and workers must be positive".into()));
        }
        self.env.validate().map_err(cfg)?;
        let mut seen = HashSet::new();
        for p in &self.policies {
            p.policy.validate().map_err(cfg)?;
            if !seen.insert(p.label()) {
                return Err(BanditError::Config(format!("duplicate policy label {:?}", p.label())));
            }
        }
        Ok(())
    }

    /// Switch to K=50, T=2000 and 1000 replications.
    pub fn paper_scale(&mut self) -> Result<()> {
        log::warn!(
            "paper scale: K={PAPER_ARMS}, T={PAPER_HORIZON}, {PAPER_REPLICATIONS} replications; expect a long run"
        );
        set_arms(&mut self.env.variant, PAPER_ARMS)?;
        self.horizon = PAPER_HORIZON;
        self.replications = PAPER_REPLICATIONS;
        Ok(())
    }

    /// Replace every policy that has hyper-parameter `param` by one copy per
    /// value, labelled `label[param=value]`.
    pub fn sweep(&self, param: &str, values: &[f64]) -> Result<Self> {
        let mut policies = Vec::new();
        let mut hit = false;
        for p in &self.policies {
            if set_param(&mut p.policy.clone(), param, 0.0) {
                hit = true;
                for &v in values {
                    let mut policy = p.policy.clone();
                    set_param(&mut policy, param, v);
                    policies.push(LabeledPolicy::new(format!("{}[{param}={v}]", p.label()), policy));
                }
            } else {
                policies.push(p.clone());
            }
        }
        if !hit {
            return Err(BanditError::Config(format!("no policy has a parameter named {param:?}")));
        }
        Ok(Self { policies, ..self.clone() })
    }

    pub fn hash(&self) -> String {
        hex(&Sha256::digest(serde_json::to_vec(self).expect("config serialises")))
    }
}

fn set_arms(variant: &mut EnvVariant, arms: usize) -> Result<()> {
    match variant {
        EnvVariant::Classical { k, .. } | EnvVariant::InformativeArm { k, .. } => *k = arms,
        EnvVariant::Linear { k, loadings: None, .. }
        | EnvVariant::Bernoulli { k, trials: None }
        | EnvVariant::Poisson { k, intensities: None } => *k = arms,
        _ => return Err(BanditError::Config("cannot rescale an environment with explicit per-arm data".into())),
    }
    Ok(())
}

fn set_param(policy: &mut PolicyKind, param: &str, value: f64) -> bool {
    let slot: Option<&mut f64> = match (policy, param) {
        (PolicyKind::EpsilonGreedy { epsilon }, "epsilon") => Some(epsilon),
        (PolicyKind::Boltzmann { rho, .. }, "rho") => Some(rho),
        (PolicyKind::Boltzmann { kappa, .. }, "kappa") => Some(kappa),
        (PolicyKind::BayesUcb { c, .. }, "c") => Some(c),
        (PolicyKind::KnowledgeGradient { beta, .. }, "beta") => Some(beta),
        (PolicyKind::Arc(cfg) | PolicyKind::ArcIndex(cfg), p) => match p {
            "rho" => Some(&mut cfg.rho),
            "kappa" => Some(&mut cfg.kappa),
            "beta" => Some(&mut cfg.beta),
            "lambda_floor" => Some(&mut cfg.lambda_floor),
            _ => None,
        },
        _ => None,
    };
    match slot {
        Some(s) => {
            *s = value;
            true
        }
        None => false,
    }
}

fn hex(bytes: &[u8]) -> String {
    bytes.iter().fold(String::with_capacity(2 * bytes.len()), |mut s, b| {
        let _ = write!(s, "{b:02x}");
        s
    })
}

/// First 16 hex digits of the SHA-256 of the little-endian bytes of `theta`.
pub fn theta_hash(theta: &[f64]) -> String {
    let bytes: Vec<u8> = theta.iter().flat_map(|x| x.to_le_bytes()).collect();
    hex(&Sha256::digest(bytes))[..16].to_string()
}

const STREAM_THETA: u64 = 0;
const STREAM_ENV: u64 = 1;
const STREAM_POLICY: u64 = 2;

/// Independent ChaCha stream keyed by `(base_seed, replication, kind, index)`.
fn stream(base_seed: u64, replication: u64, kind: u64, index: u64) -> ChaCha8Rng {
    let mut key = [0u8; 32];
    for (chunk, word) in key.chunks_mut(8).zip([base_seed, replication, kind, index]) {
        chunk.copy_from_slice(&word.to_le_bytes());
    }
    ChaCha8Rng::from_seed(key)
}

/// Seeds of one episode. Environment noise is keyed by arm only, so every
/// policy in a replication sees the same noise on its n-th pull of an arm.
#[derive(Debug, Clone, Copy)]
pub struct EpisodeSeeds {
    pub base_seed: u64,
    pub replication: u64,
    pub policy_index: u64,
}

impl EpisodeSeeds {
    pub fn theta_rng(base_seed: u64, replication: u64) -> ChaCha8Rng {
        stream(base_seed, replication, STREAM_THETA, 0)
    }

    pub fn env_rng(&self, arm: usize) -> ChaCha8Rng {
        stream(self.base_seed, self.replication, STREAM_ENV, arm as u64)
    }

    pub fn policy_rng(&self) -> ChaCha8Rng {
        stream(self.base_seed, self.replication, STREAM_POLICY, self.policy_index)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegretTrace {
    pub label: String,
    pub replication: usize,
    pub theta_hash: String,
    /// `cumulative[t - 1]` is the regret after `t` steps.
    pub cumulative: Vec<f64>,
    pub pulls: Vec<u64>,
    pub initial_uncertainty: f64,
    pub final_uncertainty: f64,
}

impl RegretTrace {
    pub fn final_regret(&self) -> f64 {
        self.cumulative.last().copied().unwrap_or(0.0)
    }
}

/// One policy against one parameter draw for `horizon` steps.
pub fn run_episode(
    env: &EnvironmentSpec,
    policy: &LabeledPolicy,
    theta: &[f64],
    horizon: usize,
    seeds: EpisodeSeeds,
) -> Result<RegretTrace> {
    let arms: Arms = env.arms()?;
    let k = arms.len();
    let means = env.mean_rewards(theta)?;
    let best = means.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut belief = env.initial_belief()?;
    let initial_uncertainty = belief.uncertainty_norm();
    let mut policy_rng = seeds.policy_rng();
    let mut env_rngs: Vec<ChaCha8Rng> = (0..k).map(|a| seeds.env_rng(a)).collect();
    let mut pulls = vec![0u64; k];
    let mut cumulative = Vec::with_capacity(horizon);
    let mut total = 0.0;
    for t in 1..=horizon {
        let ctx = DecisionContext { t, horizon, theta: Some(theta) };
        let arm = decide(&policy.policy, &belief, &arms, ctx, &mut policy_rng)?;
        let obs = env.observe(theta, arm, &mut env_rngs[arm])?;
        belief = update(&belief, &arms, arm, &obs.values)?;
        pulls[arm] += 1;
        total += (best - means[arm]).max(0.0);
        cumulative.push(total);
    }
    let final_uncertainty = belief.uncertainty_norm();
    if !final_uncertainty.is_finite() {
        return Err(BanditError::Numeric("posterior uncertainty is not finite".into()));
    }
    Ok(RegretTrace {
        label: policy.label(),
        replication: seeds.replication as usize,
        theta_hash: theta_hash(theta),
        cumulative,
        pulls,
        initial_uncertainty,
        final_uncertainty,
    })
}

/// Pointwise statistics of the cumulative regret of one policy.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Curves {
    pub mean: Vec<f64>,
    pub median: Vec<f64>,
    pub q75: Vec<f64>,
    pub q90: Vec<f64>,
}

impl Curves {
    fn from_traces(traces: &[&RegretTrace], horizon: usize) -> Self {
        let mut c = Curves { mean: vec![], median: vec![], q75: vec![], q90: vec![] };
        for t in 0..horizon {
            let col: Vec<f64> = traces.iter().map(|tr| tr.cumulative[t]).collect();
            if col.is_empty() {
                c.mean.push(f64::NAN);
                c.median.push(f64::NAN);
                c.q75.push(f64::NAN);
                c.q90.push(f64::NAN);
                continue;
            }
            c.mean.push(col.iter().sum::<f64>() / col.len() as f64);
            let mut data = Data::new(col);
            c.median.push(data.quantile(0.5));
            c.q75.push(data.quantile(0.75));
            c.q90.push(data.quantile(0.9));
        }
        c
    }

    pub fn get(&self, stat: Statistic) -> &[f64] {
        match stat {
            Statistic::Mean => &self.mean,
            Statistic::Median => &self.median,
            Statistic::Q75 => &self.q75,
            Statistic::Q90 => &self.q90,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Statistic {
    Mean,
    Median,
    Q75,
    Q90,
}

impl Statistic {
    pub const ALL: [Statistic; 4] = [Statistic::Mean, Statistic::Median, Statistic::Q75, Statistic::Q90];

    pub fn file_name(self) -> &'static str {
        match self {
            Statistic::Mean => "mean.csv",
            Statistic::Median => "median.csv",
            Statistic::Q75 => "q75.csv",
            Statistic::Q90 => "q90.csv",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Failure {
    pub replication: usize,
    /// `None` when the parameter draw itself failed.
    pub label: Option<String>,
    pub message: String,
}

#[derive(Debug, Clone)]
pub struct ExperimentSummary {
    pub config: ExperimentConfig,
    pub labels: Vec<String>,
    pub horizon: usize,
    /// Same order as `labels`.
    pub curves: Vec<Curves>,
    /// `traces[r][i]` for replication `r` and policy `i`; `None` on failure.
    pub traces: Vec<Vec<Option<RegretTrace>>>,
    pub thetas: Vec<Option<Vec<f64>>>,
    pub failures: Vec<Failure>,
}

impl ExperimentSummary {
    pub fn episodes(&self) -> usize {
        self.traces.len() * self.labels.len()
    }

    pub fn failed_episodes(&self) -> usize {
        self.traces.iter().flatten().filter(|t| t.is_none()).count()
    }

    pub fn failure_rate(&self) -> f64 {
        if self.episodes() == 0 {
            return 0.0;
        }
        self.failed_episodes() as f64 / self.episodes() as f64
    }

    pub fn exceeds_failure_threshold(&self) -> bool {
        self.failure_rate() > FAILURE_THRESHOLD
    }

    /// Final regret of policy `i` in every replication where it completed.
    pub fn final_regrets(&self, i: usize) -> Vec<f64> {
        self.traces.iter().filter_map(|r| r[i].as_ref().map(RegretTrace::final_regret)).collect()
    }

    /// `final(a) - final(b)` over replications where both completed.
    pub fn paired_differences(&self, a: usize, b: usize) -> Vec<f64> {
        self.traces
            .iter()
            .filter_map(|r| match (&r[a], &r[b]) {
                (Some(x), Some(y)) => Some(x.final_regret() - y.final_regret()),
                _ => None,
            })
            .collect()
    }

    pub fn index_of(&self, label: &str) -> Option<usize> {
        self.labels.iter().position(|l| l == label)
    }
}

fn run_replication(config: &ExperimentConfig, r: usize) -> (Option<Vec<f64>>, Vec<Option<RegretTrace>>, Vec<Failure>) {
    let mut failures = Vec::new();
    let theta = match config.env.sample_theta(&mut EpisodeSeeds::theta_rng(config.base_seed, r as u64)) {
        Ok(t) => t,
        Err(e) => {
            log::error!("replication {r}: parameter draw failed: {e}");
            failures.push(Failure { replication: r, label: None, message: e.to_string() });
            return (None, vec![None; config.policies.len()], failures);
        }
    };
    let traces = config
        .policies
        .iter()
        .enumerate()
        .map(|(i, p)| {
            let seeds = EpisodeSeeds { base_seed: config.base_seed, replication: r as u64, policy_index: i as u64 };
            match run_episode(&config.env, p, &theta, config.horizon, seeds) {
                Ok(tr) => Some(tr),
                Err(e) => {
                    log::error!("replication {r}, policy {}: {e}", p.label());
                    failures.push(Failure { replication: r, label: Some(p.label()), message: e.to_string() });
                    None
                }
            }
        })
        .collect();
    (Some(theta), traces, failures)
}

/// Every policy against the same parameter draws and noise streams.
pub fn run_experiment(config: &ExperimentConfig) -> Result<ExperimentSummary> {
    config.validate()?;
    let job = || -> Vec<_> { (0..config.replications).into_par_iter().map(|r| run_replication(config, r)).collect() };
    let results = match config.workers {
        Some(n) => rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build()
            .map_err(|e| BanditError::Config(format!("worker pool: {e}")))?
            .install(job),
        None => job(),
    };
    let mut thetas = Vec::with_capacity(results.len());
    let mut traces = Vec::with_capacity(results.len());
    let mut failures = Vec::new();
    for (theta, tr, f) in results {
        thetas.push(theta);
        traces.push(tr);
        failures.extend(f);
    }
    let labels = config.labels();
    let curves = (0..labels.len())
        .map(|i| {
            let ok: Vec<&RegretTrace> = traces.iter().filter_map(|r: &Vec<Option<RegretTrace>>| r[i].as_ref()).collect();
            Curves::from_traces(&ok, config.horizon)
        })
        .collect();
    Ok(ExperimentSummary { config: config.clone(), labels, horizon: config.horizon, curves, traces, thetas, failures })
}

/// One CSV per statistic with columns `t, label_1, ...`.
pub fn emit_plot_data(summary: &ExperimentSummary, dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    for stat in Statistic::ALL {
        let mut w = csv::Writer::from_path(dir.join(stat.file_name()))?;
        let mut header = vec!["t".to_string()];
        header.extend(summary.labels.iter().cloned());
        w.write_record(&header)?;
        if !summary.labels.is_empty() {
            for t in 0..summary.horizon {
                let mut row = vec![(t + 1).to_string()];
                row.extend(summary.curves.iter().map(|c| c.get(stat)[t].to_string()));
                w.write_record(&row)?;
            }
        }
        w.flush()?;
    }
    Ok(())
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Manifest {
    pub version: String,
    pub config: ExperimentConfig,
    pub config_hash: String,
    pub labels: Vec<String>,
    pub horizon: usize,
    pub replications: usize,
    pub episodes: usize,
    pub failed_episodes: usize,
    pub failures: Vec<Failure>,
    pub files: Vec<String>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct Checkpoint {
    replications_done: usize,
    mean_final_regret: Vec<(String, f64)>,
}

/// All result files under `dir`. Everything except `timing.json` depends
/// only on the config.
pub fn write_outputs(summary: &ExperimentSummary, dir: &Path, wall_clock_secs: Option<f64>) -> Result<()> {
    emit_plot_data(summary, dir)?;
    let mut files: Vec<String> = Statistic::ALL.iter().map(|s| s.file_name().to_string()).collect();

    let mut w = csv::Writer::from_path(dir.join("final_regret.csv"))?;
    let mut header = vec!["replication".to_string()];
    header.extend(summary.labels.iter().cloned());
    w.write_record(&header)?;
    for (r, row) in summary.traces.iter().enumerate() {
        let mut rec = vec![r.to_string()];
        rec.extend(row.iter().map(|t| t.as_ref().map(|t| t.final_regret().to_string()).unwrap_or_default()));
        w.write_record(&rec)?;
    }
    w.flush()?;
    files.push("final_regret.csv".into());

    let k = summary.config.env.dim();
    let mut w = csv::Writer::from_path(dir.join("thetas.csv"))?;
    let mut header = vec!["replication".to_string(), "theta_hash".to_string()];
    header.extend((1..=k).map(|j| format!("theta_{j}")));
    w.write_record(&header)?;
    for (r, theta) in summary.thetas.iter().enumerate() {
        let mut rec = vec![r.to_string()];
        match theta {
            Some(th) => {
                rec.push(theta_hash(th));
                rec.extend(th.iter().map(f64::to_string));
            }
            None => rec.extend(std::iter::repeat_n(String::new(), k + 1)),
        }
        w.write_record(&rec)?;
    }
    w.flush()?;
    files.push("thetas.csv".into());

    if let Some(every) = summary.config.checkpoint_interval {
        let mut lines = String::new();
        let mut done = every;
        while done <= summary.traces.len() {
            let mean_final_regret = summary
                .labels
                .iter()
                .enumerate()
                .map(|(i, l)| {
                    let v: Vec<f64> = summary.traces[..done].iter().filter_map(|r| r[i].as_ref().map(RegretTrace::final_regret)).collect();
                    (l.clone(), v.iter().sum::<f64>() / v.len().max(1) as f64)
                })
                .collect();
            lines.push_str(&serde_json::to_string(&Checkpoint { replications_done: done, mean_final_regret })?);
            lines.push('\n');
            done += every;
        }
        std::fs::write(dir.join("checkpoints.jsonl"), lines)?;
        files.push("checkpoints.jsonl".into());
    }

    let manifest = Manifest {
        version: env!("CARGO_PKG_VERSION").to_string(),
        config: summary.config.clone(),
        config_hash: summary.config.hash(),
        labels: summary.labels.clone(),
        horizon: summary.horizon,
        replications: summary.traces.len(),
        episodes: summary.episodes(),
        failed_episodes: summary.failed_episodes(),
        failures: summary.failures.clone(),
        files,
    };
    std::fs::write(dir.join("manifest.json"), serde_json::to_string_pretty(&manifest)? + "\n")?;
    if let Some(secs) = wall_clock_secs {
        let timing = serde_json::json!({ "wall_clock_secs": secs });
        std::fs::write(dir.join("timing.json"), serde_json::to_string_pretty(&timing)? + "\n")?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::arc::ArcConfig;

    fn classical(k: usize) -> EnvironmentSpec {
        EnvironmentSpec::new(EnvVariant::Classical { k, noise_var: 5.0 })
    }

    fn small(policies: Vec<LabeledPolicy>) -> ExperimentConfig {
        let mut c = ExperimentConfig::new(classical(4), policies);
        c.horizon = 30;
        c.replications = 6;
        c.base_seed = 7;
        c
    }

    #[test]
    fn oracle_policy_has_no_regret() {
        let s = run_experiment(&small(vec![LabeledPolicy::new("oracle", PolicyKind::Oracle)])).unwrap();
        for r in &s.traces {
            assert!(r[0].as_ref().unwrap().cumulative.iter().all(|&x| x == 0.0));
        }
    }

    #[test]
    fn traces_are_monotone_and_deterministic() {
        let cfg = small(vec![
            LabeledPolicy::new("ts", PolicyKind::Thompson),
            LabeledPolicy::new("arc", PolicyKind::Arc(ArcConfig::default())),
        ]);
        let a = run_experiment(&cfg).unwrap();
        let b = run_experiment(&cfg).unwrap();
        assert_eq!(a.traces, b.traces);
        for r in a.traces.iter().flatten().flatten() {
            assert!(r.cumulative[0] >= 0.0);
            assert!(r.cumulative.windows(2).all(|w| w[1] >= w[0]));
            assert_eq!(r.pulls.iter().sum::<u64>(), 30);
        }
    }

    #[test]
    fn policies_share_theta_and_noise() {
        // two copies of the same deterministic policy under different labels
        let cfg = small(vec![
            LabeledPolicy::new("a", PolicyKind::Greedy),
            LabeledPolicy::new("b", PolicyKind::Greedy),
        ]);
        let s = run_experiment(&cfg).unwrap();
        for r in &s.traces {
            let (x, y) = (r[0].as_ref().unwrap(), r[1].as_ref().unwrap());
            assert_eq!(x.theta_hash, y.theta_hash);
            assert_eq!(x.cumulative, y.cumulative);
        }
    }

    #[test]
    fn single_replication_collapses_statistics() {
        let mut cfg = small(vec![LabeledPolicy::new("ts", PolicyKind::Thompson)]);
        cfg.replications = 1;
        let s = run_experiment(&cfg).unwrap();
        let c = &s.curves[0];
        assert_eq!(c.mean, c.median);
        assert_eq!(c.median, c.q75);
        assert_eq!(c.q75, c.q90);
    }

    #[test]
    fn quantile_curves_are_ordered() {
        let s = run_experiment(&small(vec![LabeledPolicy::new("eps", PolicyKind::EpsilonGreedy { epsilon: 0.3 })])).unwrap();
        let c = &s.curves[0];
        for t in 0..s.horizon {
            assert!(c.median[t] <= c.q75[t] && c.q75[t] <= c.q90[t]);
        }
    }

    #[test]
    fn uniform_play_matches_mean_gap() {
        let mut cfg = small(vec![LabeledPolicy::new("uniform", PolicyKind::EpsilonGreedy { epsilon: 1.0 })]);
        cfg.replications = 200;
        let s = run_experiment(&cfg).unwrap();
        // expected regret given theta is T * mean gap; compare per replication
        let diffs: Vec<f64> = s
            .traces
            .iter()
            .zip(&s.thetas)
            .map(|(r, th)| {
                let th = th.as_ref().unwrap();
                let best = th.iter().copied().fold(f64::NEG_INFINITY, f64::max);
                let gap = th.iter().map(|x| best - x).sum::<f64>() / th.len() as f64;
                r[0].as_ref().unwrap().final_regret() - cfg.horizon as f64 * gap
            })
            .collect();
        let n = diffs.len() as f64;
        let mean = diffs.iter().sum::<f64>() / n;
        let sd = (diffs.iter().map(|d| (d - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt();
        assert!(mean.abs() <= 3.0 * sd / n.sqrt(), "mean {mean}, se {}", sd / n.sqrt());
    }

    #[test]
    fn outputs_round_trip() {
        let cfg = small(vec![
            LabeledPolicy::new("ts", PolicyKind::Thompson),
            LabeledPolicy::new("ucb", PolicyKind::BayesUcb { c: 0.0, total_horizon: None, mc_samples: 10 }),
        ]);
        let s = run_experiment(&cfg).unwrap();
        let dir = tempfile::tempdir().unwrap();
        write_outputs(&s, dir.path(), None).unwrap();
        let mut rd = csv::Reader::from_path(dir.path().join("mean.csv")).unwrap();
        assert_eq!(rd.headers().unwrap(), vec!["t", "ts", "ucb"]);
        let rows: Vec<csv::StringRecord> = rd.records().map(|r| r.unwrap()).collect();
        assert_eq!(rows.len(), cfg.horizon);
        for (t, row) in rows.iter().enumerate() {
            assert_eq!(row[0].parse::<usize>().unwrap(), t + 1);
            assert_eq!(row[1].parse::<f64>().unwrap(), s.curves[0].mean[t]);
            assert_eq!(row[2].parse::<f64>().unwrap(), s.curves[1].mean[t]);
        }
        let m: Manifest = serde_json::from_str(&std::fs::read_to_string(dir.path().join("manifest.json")).unwrap()).unwrap();
        assert_eq!(m.config, cfg);
        assert_eq!(m.config_hash, cfg.hash());
        assert!(!dir.path().join("timing.json").exists());
    }

    #[test]
    fn empty_policy_list_gives_header_only() {
        let s = run_experiment(&small(vec![])).unwrap();
        let dir = tempfile::tempdir().unwrap();
        emit_plot_data(&s, dir.path()).unwrap();
        assert_eq!(std::fs::read_to_string(dir.path().join("q90.csv")).unwrap(), "t\n");
    }

    #[test]
    fn paper_scale_round_trips_through_manifest() {
        let mut cfg = ExperimentConfig::new(
            EnvironmentSpec::new(EnvVariant::InformativeArm { k: 10, noise_var: 5.0, penalty: 1.0 }),
            vec![LabeledPolicy::new("arc", PolicyKind::ArcIndex(ArcConfig::default()))],
        );
        cfg.paper_scale().unwrap();
        assert_eq!((cfg.env.dim(), cfg.horizon, cfg.replications), (50, 2000, 1000));
        let text = serde_json::to_string(&cfg).unwrap();
        assert_eq!(ExperimentConfig::parse(&text).unwrap(), cfg);
    }

    #[test]
    fn config_validation() {
        let mut cfg = small(vec![LabeledPolicy::new("x", PolicyKind::Thompson), LabeledPolicy::new("x", PolicyKind::Greedy)]);
        assert!(matches!(cfg.validate(), Err(BanditError::Config(_))));
        cfg.policies.pop();
        cfg.horizon = 0;
        assert!(cfg.validate().is_err());
        assert!(ExperimentConfig::parse("{\"env\": 3}").is_err());
    }

    #[test]
    fn toml_config_parses() {
        let text = r#"
            horizon = 20
            replications = 3
            [env.variant]
            kind = "informative_arm"
            k = 4

            [[policies]]
            label = "arc"
            policy = { kind = "arc_index", rho = 2.0 }

            [[policies]]
            policy = { kind = "thompson" }
        "#;
        let cfg = ExperimentConfig::parse(text).unwrap();
        assert_eq!(cfg.labels(), vec!["arc", "thompson"]);
        let PolicyKind::ArcIndex(arc) = &cfg.policies[0].policy else { panic!() };
        assert_eq!(arc.rho, 2.0);
        assert_eq!(arc.beta, 0.99);
    }

    #[test]
    fn sweep_expands_matching_policies() {
        let cfg = small(vec![
            LabeledPolicy::new("arc", PolicyKind::ArcIndex(ArcConfig::default())),
            LabeledPolicy::new("ts", PolicyKind::Thompson),
        ]);
        let s = cfg.sweep("rho", &[0.5, 2.0]).unwrap();
        assert_eq!(s.labels(), vec!["arc[rho=0.5]", "arc[rho=2]", "ts"]);
        let PolicyKind::ArcIndex(a) = &s.policies[1].policy else { panic!() };
        assert_eq!(a.rho, 2.0);
        assert!(cfg.sweep("epsilon", &[0.1]).is_err());
    }
}
