//! Comparison policies sharing the belief/arm abstractions of ARC.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};

use crate::arc::{arc_index, arc_index_step, arc_step, argmax, predictive_reward_any, select_arm, ArcConfig};
use crate::belief::{gaussian_log_det_reduction, Belief};
use crate::error::{invalid, numeric, Result};
use crate::model::{expected_rewards, gaussian_root, sample_theta, update, Arms};
use crate::smoothmax;

fn default_floor() -> f64 {
    1e-8
}
fn default_one() -> f64 {
    1.0
}
fn default_beta() -> f64 {
    0.99
}
fn default_mc() -> usize {
    100
}

/// Every decision rule the harness can run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum PolicyKind {
    EpsilonGreedy {
        epsilon: f64,
    },
    Boltzmann {
        #[serde(default = "default_one")]
        rho: f64,
        #[serde(default = "default_one")]
        kappa: f64,
        #[serde(default = "default_floor")]
        lambda_floor: f64,
    },
    Thompson,
    BayesUcb {
        #[serde(default)]
        c: f64,
        /// Defaults to the experiment horizon.
        #[serde(default)]
        total_horizon: Option<usize>,
        /// Posterior draws for rewards without a closed-form quantile.
        #[serde(default = "default_mc")]
        mc_samples: usize,
    },
    KnowledgeGradient {
        #[serde(default = "default_beta")]
        beta: f64,
        #[serde(default = "default_mc")]
        mc_samples: usize,
    },
    Ids {
        #[serde(default = "default_mc")]
        mc_samples: usize,
    },
    Greedy,
    /// Randomised ARC. A `horizon` in the config is the total horizon; the
    /// index then uses the remaining number of steps.
    Arc(ArcConfig),
    /// Argmax of the ARC index.
    ArcIndex(ArcConfig),
    /// Plays the best arm for the true parameter. Only meaningful in tests.
    Oracle,
}

impl PolicyKind {
    pub fn validate(&self) -> Result<()> {
        match self {
            PolicyKind::EpsilonGreedy { epsilon } if !(0.0..=1.0).contains(epsilon) => {
                Err(invalid(format!("epsilon must lie in [0, 1], got {epsilon}")))
            }
            PolicyKind::Boltzmann { rho, kappa, lambda_floor } if !(*rho > 0.0 && *kappa > 0.0 && *lambda_floor > 0.0) => {
                Err(invalid("Boltzmann rho, kappa and floor must be positive"))
            }
            PolicyKind::BayesUcb { c, mc_samples, .. } if !(*c >= 0.0) || *mc_samples == 0 => {
                Err(invalid("Bayes-UCB needs c >= 0 and at least one sample"))
            }
            PolicyKind::KnowledgeGradient { beta, mc_samples } if !(*beta > 0.0 && *beta < 1.0) || *mc_samples == 0 => {
                Err(invalid("knowledge gradient needs beta in (0, 1) and at least one sample"))
            }
            PolicyKind::Ids { mc_samples: 0 } => Err(invalid("IDS needs at least one sample")),
            PolicyKind::Arc(c) | PolicyKind::ArcIndex(c) => c.validate(),
            _ => Ok(()),
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            PolicyKind::EpsilonGreedy { .. } => "epsilon_greedy",
            PolicyKind::Boltzmann { .. } => "boltzmann",
            PolicyKind::Thompson => "thompson",
            PolicyKind::BayesUcb { .. } => "bayes_ucb",
            PolicyKind::KnowledgeGradient { .. } => "knowledge_gradient",
            PolicyKind::Ids { .. } => "ids",
            PolicyKind::Greedy => "greedy",
            PolicyKind::Arc(_) => "arc",
            PolicyKind::ArcIndex(_) => "arc_index",
            PolicyKind::Oracle => "oracle",
        }
    }
}

/// Per-step information a policy may use besides the belief.
#[derive(Debug, Clone, Copy)]
pub struct DecisionContext<'a> {
    /// 1-based step index.
    pub t: usize,
    pub horizon: usize,
    /// True parameter; read only by [`PolicyKind::Oracle`].
    pub theta: Option<&'a [f64]>,
}

/// Choose an arm.
pub fn decide<R: Rng + ?Sized>(
    policy: &PolicyKind,
    belief: &Belief,
    arms: &Arms,
    ctx: DecisionContext<'_>,
    rng: &mut R,
) -> Result<usize> {
    let steps_left = |cfg: &ArcConfig| {
        let mut cfg = *cfg;
        if let Some(h) = cfg.horizon {
            cfg.horizon = Some((h + 1).saturating_sub(ctx.t).max(1));
        }
        cfg
    };
    match policy {
        PolicyKind::EpsilonGreedy { epsilon } => {
            let f = predictive_reward_any(belief, arms)?.f;
            Ok(epsilon_greedy_step(f.as_slice(), *epsilon, rng))
        }
        PolicyKind::Boltzmann { rho, kappa, lambda_floor } => {
            let f = predictive_reward_any(belief, arms)?.f;
            let lambda = (rho * belief.uncertainty_norm().powf(*kappa)).max(*lambda_floor);
            boltzmann_step(f.as_slice(), lambda, rng)
        }
        PolicyKind::Thompson => thompson_step(belief, arms, rng),
        PolicyKind::BayesUcb { c, total_horizon, mc_samples } => {
            bayes_ucb_step(belief, arms, ctx.t, total_horizon.unwrap_or(ctx.horizon), *c, *mc_samples, rng)
        }
        PolicyKind::KnowledgeGradient { beta, mc_samples } => kg_step(belief, arms, *beta, *mc_samples, rng),
        PolicyKind::Ids { mc_samples } => Ok(ids_step(belief, arms, *mc_samples, rng)?.1),
        PolicyKind::Greedy => Ok(argmax(predictive_reward_any(belief, arms)?.f.as_slice())),
        PolicyKind::Arc(cfg) => {
            let idx = arc_index(belief, arms, &steps_left(cfg))?;
            Ok(arc_step(&idx, rng.random::<f64>())?.1)
        }
        PolicyKind::ArcIndex(cfg) => Ok(arc_index_step(&arc_index(belief, arms, &steps_left(cfg))?)),
        PolicyKind::Oracle => {
            let theta = ctx.theta.ok_or_else(|| invalid("oracle policy needs the true parameter"))?;
            Ok(argmax(&expected_rewards(arms, theta)?))
        }
    }
}

/// Argmax of `f` with probability `1 - epsilon`, otherwise a uniform arm.
pub fn epsilon_greedy_step<R: Rng + ?Sized>(f: &[f64], epsilon: f64, rng: &mut R) -> usize {
    if epsilon > 0.0 && rng.random::<f64>() < epsilon {
        rng.random_range(0..f.len())
    } else {
        argmax(f)
    }
}

/// Sample from `softmax(f / lambda)`.
pub fn boltzmann_step<R: Rng + ?Sized>(f: &[f64], lambda: f64, rng: &mut R) -> Result<usize> {
    let u = smoothmax::nu(f, lambda)?;
    Ok(select_arm(&u, rng.random::<f64>()))
}

/// Argmax of the expected rewards under one posterior draw.
pub fn thompson_step<R: Rng + ?Sized>(belief: &Belief, arms: &Arms, rng: &mut R) -> Result<usize> {
    arms.check(belief)?;
    let theta = sample_theta(belief, rng)?;
    Ok(argmax(&expected_rewards(arms, &theta)?))
}

/// Quantile level `1 - 1 / (t (ln T)^c)`, clipped to `[0, 1]`.
pub fn ucb_level(t: usize, total_horizon: usize, c: f64) -> Result<f64> {
    if t < 1 {
        return Err(invalid("Bayes-UCB step index starts at 1"));
    }
    if total_horizon < 2 {
        return Err(invalid("Bayes-UCB needs a horizon of at least 2"));
    }
    let scale = t as f64 * (total_horizon as f64).ln().powf(c);
    Ok((1.0 - 1.0 / scale).clamp(0.0, 1.0))
}

fn empirical_quantile(mut xs: Vec<f64>, p: f64) -> f64 {
    xs.sort_by(f64::total_cmp);
    let pos = p * (xs.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    xs[lo] + (pos - lo as f64) * (xs[hi] - xs[lo])
}

/// Posterior `p`-quantile of every arm's expected reward.
pub fn bayes_ucb_index<R: Rng + ?Sized>(
    belief: &Belief,
    arms: &Arms,
    p: f64,
    mc_samples: usize,
    rng: &mut R,
) -> Result<Vec<f64>> {
    arms.check(belief)?;
    let dist_err = |e: Box<dyn std::fmt::Display>| numeric(format!("quantile: {e}"));
    match (belief, arms) {
        (Belief::Gaussian(b), Arms::Gaussian(a)) if a.iter().all(|arm| arm.reward.as_affine().is_some()) => {
            let z = Normal::standard().inverse_cdf(p);
            Ok(a.iter()
                .map(|arm| {
                    let (scale, offset) = arm.reward.as_affine().unwrap();
                    let load = arm.reward_loading();
                    let mean = scale * load.dot(&b.m) + offset;
                    let sd = scale.abs() * (load.transpose() * &b.d * &load)[(0, 0)].max(0.0).sqrt();
                    if sd == 0.0 {
                        mean
                    } else {
                        mean + z * sd
                    }
                })
                .collect())
        }
        (Belief::Gaussian(_), Arms::Gaussian(_)) => {
            let draws: Vec<Vec<f64>> = (0..mc_samples)
                .map(|_| expected_rewards(arms, &sample_theta(belief, rng)?))
                .collect::<Result<_>>()?;
            Ok((0..arms.len())
                .map(|i| empirical_quantile(draws.iter().map(|d| d[i]).collect(), p))
                .collect())
        }
        (Belief::Beta(b), Arms::Binomial(n)) => n
            .iter()
            .enumerate()
            .map(|(i, &ni)| {
                let (a, bb) = b.shapes(i);
                let q = statrs::distribution::Beta::new(a, bb).map_err(|e| dist_err(Box::new(e)))?.inverse_cdf(p);
                Ok(ni as f64 * q)
            })
            .collect(),
        (Belief::Gamma(g), Arms::Poisson(n)) => n
            .iter()
            .enumerate()
            .map(|(i, &ni)| {
                let (shape, rate) = g.shape_rate(i);
                let q = statrs::distribution::Gamma::new(shape, rate).map_err(|e| dist_err(Box::new(e)))?.inverse_cdf(p);
                Ok(ni * q)
            })
            .collect(),
        _ => Err(invalid("belief does not match arm family")),
    }
}

pub fn bayes_ucb_step<R: Rng + ?Sized>(
    belief: &Belief,
    arms: &Arms,
    t: usize,
    total_horizon: usize,
    c: f64,
    mc_samples: usize,
    rng: &mut R,
) -> Result<usize> {
    let p = ucb_level(t, total_horizon, c)?;
    Ok(argmax(&bayes_ucb_index(belief, arms, p, mc_samples, rng)?))
}

/// Knowledge-gradient index and its Monte-Carlo standard error.
#[derive(Debug, Clone, PartialEq)]
pub struct KgIndex {
    pub index: Vec<f64>,
    pub std_err: Vec<f64>,
}

/// `f_i + beta / (1 - beta) (E max_j f_j(m_i, d_i) - max_j f_j)` where
/// `(m_i, d_i)` is the posterior after one observation of arm `i`.
///
/// All arms share the same underlying random numbers.
pub fn kg_index<R: Rng + ?Sized>(
    belief: &Belief,
    arms: &Arms,
    beta: f64,
    mc_samples: usize,
    rng: &mut R,
) -> Result<KgIndex> {
    if mc_samples == 0 {
        return Err(invalid("knowledge gradient needs at least one sample"));
    }
    let reward = predictive_reward_any(belief, arms)?;
    let f = reward.f.as_slice().to_vec();
    let k = f.len();
    let best = f.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let weight = beta / (1.0 - beta);

    // excess of the post-update best reward over the current one
    let mut samples = vec![Vec::with_capacity(mc_samples); k];
    match (belief, arms) {
        (Belief::Gaussian(b), Arms::Gaussian(a)) if reward.is_flat() => {
            // f is affine in m: f(m') = f + G (m' - m) with m' - m = F z
            let q_max = a.iter().map(|arm| arm.obs_dim()).max().unwrap_or(0);
            let z = DMatrix::from_fn(q_max, mc_samples, |_, _| -> f64 { StandardNormal.sample(rng) });
            for (i, arm) in a.iter().enumerate() {
                let obs = arm.observed();
                if obs.is_empty() {
                    samples[i] = vec![0.0; mc_samples];
                    continue;
                }
                let c = arm.c.select_columns(&obs);
                let dc = &b.d * &c;
                let mut s = c.transpose() * &dc;
                for (j, &col) in obs.iter().enumerate() {
                    s[(j, j)] += 1.0 / arm.precision[col];
                }
                let chol = s.cholesky().ok_or_else(|| numeric("predictive covariance is not positive definite"))?;
                // F = d c L^{-T}
                let f_t = chol
                    .l()
                    .solve_lower_triangular(&dc.transpose())
                    .ok_or_else(|| numeric("triangular solve failed"))?;
                let h = &reward.df_dm * f_t.transpose();
                let shifts = h * z.rows(0, obs.len());
                for s in 0..mc_samples {
                    let top = (0..k).map(|j| f[j] + shifts[(j, s)]).fold(f64::NEG_INFINITY, f64::max);
                    samples[i].push(top - best);
                }
            }
        }
        _ => {
            let seed: u64 = rng.random();
            for (i, sample) in samples.iter_mut().enumerate() {
                let mut crn = ChaCha8Rng::seed_from_u64(seed);
                for _ in 0..mc_samples {
                    let y = simulate_observation(belief, arms, i, &mut crn)?;
                    let post = update(belief, arms, i, &y)?;
                    let f_post = predictive_reward_any(&post, arms)?.f;
                    sample.push(f_post.max() - best);
                }
            }
        }
    }

    let n = mc_samples as f64;
    let mut index = Vec::with_capacity(k);
    let mut std_err = Vec::with_capacity(k);
    for i in 0..k {
        let mean = samples[i].iter().sum::<f64>() / n;
        let var = if mc_samples > 1 {
            samples[i].iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0)
        } else {
            0.0
        };
        index.push(f[i] + weight * mean);
        std_err.push(weight * (var / n).sqrt());
    }
    Ok(KgIndex { index, std_err })
}

/// Draw an observation of `arm` from the predictive law of `belief`.
fn simulate_observation<R: Rng + ?Sized>(belief: &Belief, arms: &Arms, arm: usize, rng: &mut R) -> Result<Vec<f64>> {
    let theta = sample_theta(belief, rng)?;
    match arms {
        Arms::Gaussian(a) => {
            let model = &a[arm];
            let mean = model.c.transpose() * DVector::from_column_slice(&theta);
            Ok((0..model.obs_dim())
                .map(|k| {
                    let p = model.precision[k];
                    let z: f64 = StandardNormal.sample(rng);
                    if p > 0.0 {
                        mean[k] + z / p.sqrt()
                    } else {
                        0.0
                    }
                })
                .collect())
        }
        Arms::Binomial(n) => {
            let dist = rand_distr::Binomial::new(n[arm], theta[arm].clamp(0.0, 1.0))
                .map_err(|e| numeric(format!("binomial: {e}")))?;
            Ok(vec![dist.sample(rng) as f64])
        }
        Arms::Poisson(n) => {
            let rate = n[arm] * theta[arm];
            if rate <= 0.0 {
                return Ok(vec![0.0]);
            }
            let dist = rand_distr::Poisson::new(rate).map_err(|e| numeric(format!("poisson: {e}")))?;
            Ok(vec![dist.sample(rng)])
        }
    }
}

pub fn kg_step<R: Rng + ?Sized>(belief: &Belief, arms: &Arms, beta: f64, mc_samples: usize, rng: &mut R) -> Result<usize> {
    Ok(argmax(&kg_index(belief, arms, beta, mc_samples, rng)?.index))
}

/// `delta^2 / gain` with `0/0 = 0` and `x/0 = inf`.
pub fn ids_ratio(delta: f64, gain: f64) -> f64 {
    if delta <= 0.0 {
        0.0
    } else if gain <= 0.0 {
        f64::INFINITY
    } else {
        delta * delta / gain
    }
}

/// Minimise `(u . delta)^2 / (u . gain)` over the simplex by scanning all
/// supports of size at most two.
pub fn ids_optimise(delta: &[f64], gain: &[f64]) -> Vec<f64> {
    let k = delta.len();
    let mut best_u = vec![0.0; k];
    best_u[0] = 1.0;
    let mut best = ids_ratio(delta[0], gain[0]);
    for i in 1..k {
        let v = ids_ratio(delta[i], gain[i]);
        if v < best {
            best = v;
            best_u = vec![0.0; k];
            best_u[i] = 1.0;
        }
    }
    for i in 0..k {
        for j in (i + 1)..k {
            // weight q on arm i, 1 - q on arm j
            let a = delta[i] - delta[j];
            let b = gain[i] - gain[j];
            let q = if a == 0.0 && b == 0.0 {
                0.5
            } else if a != 0.0 && b != 0.0 {
                ((delta[j] * b - 2.0 * a * gain[j]) / (a * b)).clamp(0.0, 1.0)
            } else {
                continue;
            };
            if q <= 0.0 || q >= 1.0 {
                continue;
            }
            let v = ids_ratio(q * delta[i] + (1.0 - q) * delta[j], q * gain[i] + (1.0 - q) * gain[j]);
            // indistinguishable arms share the mass instead of the lower index taking it all
            let split_tie = q == 0.5 && v == best && (best_u[i] == 1.0 || best_u[j] == 1.0);
            if v < best || split_tie {
                best = v;
                best_u = vec![0.0; k];
                best_u[i] = q;
                best_u[j] = 1.0 - q;
            }
        }
    }
    best_u
}

/// Regret and information-gain estimates used by IDS.
#[derive(Debug, Clone, PartialEq)]
pub struct IdsTerms {
    pub delta: Vec<f64>,
    pub gain: Vec<f64>,
}

/// `delta_i = E[max_j r_j] - f_i` with the expectation over posterior draws,
/// and `gain_i = (ln det d - ln det d_i) / 2`.
pub fn ids_terms<R: Rng + ?Sized>(belief: &Belief, arms: &Arms, mc_samples: usize, rng: &mut R) -> Result<IdsTerms> {
    let (Belief::Gaussian(b), Arms::Gaussian(a)) = (belief, arms) else {
        return Err(invalid("IDS is implemented for Gaussian beliefs only"));
    };
    arms.check(belief)?;
    if mc_samples == 0 {
        return Err(invalid("IDS needs at least one sample"));
    }
    let f = predictive_reward_any(belief, arms)?.f;
    let root = gaussian_root(b)?;
    let p = b.dim();
    let mut top = 0.0;
    for _ in 0..mc_samples {
        let z = DVector::from_fn(p, |_, _| -> f64 { StandardNormal.sample(rng) });
        let theta = &b.m + &root * z;
        let r = expected_rewards(arms, theta.as_slice())?;
        top += r.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    }
    top /= mc_samples as f64;
    let delta = f.iter().map(|fi| (top - fi).max(0.0)).collect();
    let gain = a
        .iter()
        .map(|arm| gaussian_log_det_reduction(b, arm).map(|x| 0.5 * x))
        .collect::<Result<Vec<_>>>()?;
    Ok(IdsTerms { delta, gain })
}

/// IDS action distribution and the sampled arm.
pub fn ids_step<R: Rng + ?Sized>(belief: &Belief, arms: &Arms, mc_samples: usize, rng: &mut R) -> Result<(Vec<f64>, usize)> {
    let terms = ids_terms(belief, arms, mc_samples, rng)?;
    if terms.gain.iter().all(|&g| g <= 0.0) {
        log::warn!("IDS: no arm carries information, falling back to greedy");
        let f = predictive_reward_any(belief, arms)?.f;
        let arm = argmax(f.as_slice());
        let mut u = vec![0.0; arms.len()];
        u[arm] = 1.0;
        return Ok((u, arm));
    }
    let u = ids_optimise(&terms.delta, &terms.gain);
    let arm = select_arm(&u, rng.random::<f64>());
    Ok((u, arm))
}
