//! Ground-truth bandit environments.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::{Binomial, Distribution, Normal, Poisson};
use serde::{Deserialize, Serialize};

use crate::belief::{Belief, BetaBelief, GammaBelief, GaussianArmModel, GaussianBelief, RewardMap};
use crate::error::{invalid, numeric, Result};
use crate::model::{expected_rewards, sample_theta, Arms};

fn five() -> f64 {
    5.0
}
fn one() -> f64 {
    1.0
}

/// Scalar (broadcast) or per-coordinate parameter.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Param {
    Scalar(f64),
    Vector(Vec<f64>),
}

impl Param {
    pub fn expand(&self, k: usize) -> Result<Vec<f64>> {
        match self {
            Param::Scalar(x) => Ok(vec![*x; k]),
            Param::Vector(v) if v.len() == k => Ok(v.clone()),
            Param::Vector(v) => Err(invalid(format!("expected {k} entries, got {}", v.len()))),
        }
    }
}

/// Independent per-coordinate `(mean, var)`; for count families `var` is the
/// uncertainty parameter `d` of the Beta/Gamma belief.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PriorSpec {
    pub mean: Param,
    pub var: Param,
}

impl PriorSpec {
    pub fn new(mean: f64, var: f64) -> Self {
        Self { mean: Param::Scalar(mean), var: Param::Scalar(var) }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum EnvVariant {
    /// Arm `i` returns `N(theta_i, noise_var)`.
    Classical {
        k: usize,
        #[serde(default = "five")]
        noise_var: f64,
    },
    /// Arm 1 pays `N(theta_1 - penalty, noise_var)` and also reveals
    /// `N(theta, noise_var I)`; other arms are classical.
    InformativeArm {
        k: usize,
        #[serde(default = "five")]
        noise_var: f64,
        #[serde(default = "one")]
        penalty: f64,
    },
    /// Arm `i` returns `N(b_i^T theta, noise_var)`. Default loadings are
    /// `b_i = e_i + e_{i+1}` and `b_K = e_1 + e_K`.
    Linear {
        k: usize,
        #[serde(default = "five")]
        noise_var: f64,
        #[serde(default)]
        loadings: Option<Vec<Vec<f64>>>,
    },
    /// Arm `i` returns `Binomial(n_i, theta_i)` successes.
    Bernoulli {
        k: usize,
        #[serde(default)]
        trials: Option<Vec<u64>>,
    },
    /// Arm `i` returns `Poisson(n_i theta_i)` events.
    Poisson {
        k: usize,
        #[serde(default)]
        intensities: Option<Vec<f64>>,
    },
}

/// An environment plus the prior the policies start from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EnvironmentSpec {
    pub variant: EnvVariant,
    /// Initial belief. Defaults: `(0, 1e3 I)` for Gaussian variants,
    /// `Beta(1, 1)` and `Gamma(1, 1)` for count variants.
    #[serde(default)]
    pub prior: Option<PriorSpec>,
    /// Law of the true parameter. Defaults: `N(1, I)` for Gaussian variants,
    /// the prior for count variants.
    #[serde(default)]
    pub theta_prior: Option<PriorSpec>,
}

/// One pull of an arm.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Observation {
    pub arm: usize,
    /// Observation vector in the arm's channel (counts for count families).
    pub values: Vec<f64>,
    pub reward: f64,
}

impl EnvironmentSpec {
    pub fn new(variant: EnvVariant) -> Self {
        Self { variant, prior: None, theta_prior: None }
    }

    pub fn arms_count(&self) -> usize {
        match &self.variant {
            EnvVariant::Classical { k, .. }
            | EnvVariant::InformativeArm { k, .. }
            | EnvVariant::Linear { k, .. }
            | EnvVariant::Bernoulli { k, .. }
            | EnvVariant::Poisson { k, .. } => *k,
        }
    }

    /// Parameter dimension.
    pub fn dim(&self) -> usize {
        self.arms_count()
    }

    fn is_gaussian(&self) -> bool {
        !matches!(self.variant, EnvVariant::Bernoulli { .. } | EnvVariant::Poisson { .. })
    }

    pub fn validate(&self) -> Result<()> {
        let k = self.arms_count();
        if k < 2 {
            return Err(invalid("an environment needs at least two arms"));
        }
        match &self.variant {
            EnvVariant::Classical { noise_var, .. } | EnvVariant::InformativeArm { noise_var, .. } => check_noise(*noise_var)?,
            EnvVariant::Linear { noise_var, loadings, .. } => {
                check_noise(*noise_var)?;
                if let Some(b) = loadings {
                    if b.len() != k || b.iter().any(|row| row.len() != k) {
                        return Err(invalid("linear loadings must be K vectors of length K"));
                    }
                }
            }
            EnvVariant::Bernoulli { trials, .. } => {
                if let Some(n) = trials {
                    if n.len() != k {
                        return Err(invalid("need one trial count per arm"));
                    }
                }
            }
            EnvVariant::Poisson { intensities, .. } => {
                if let Some(n) = intensities {
                    if n.len() != k || n.iter().any(|&x| !(x > 0.0)) {
                        return Err(invalid("need one positive intensity per arm"));
                    }
                }
            }
        }
        self.initial_belief()?;
        self.theta_prior_spec().mean.expand(k)?;
        let var = self.theta_prior_spec().var.expand(k)?;
        if var.iter().any(|&v| !(v >= 0.0)) {
            return Err(invalid("theta prior variances must be non-negative"));
        }
        Ok(())
    }

    fn prior_spec(&self) -> PriorSpec {
        self.prior.clone().unwrap_or_else(|| match self.variant {
            EnvVariant::Bernoulli { .. } => PriorSpec::new(0.5, 0.5),
            EnvVariant::Poisson { .. } => PriorSpec::new(1.0, 1.0),
            _ => PriorSpec::new(0.0, 1e3),
        })
    }

    fn theta_prior_spec(&self) -> PriorSpec {
        match &self.theta_prior {
            Some(t) => t.clone(),
            None if self.is_gaussian() => PriorSpec::new(1.0, 1.0),
            None => self.prior_spec(),
        }
    }

    pub fn initial_belief(&self) -> Result<Belief> {
        let k = self.dim();
        let spec = self.prior_spec();
        let m = spec.mean.expand(k)?;
        let d = spec.var.expand(k)?;
        Ok(match self.variant {
            EnvVariant::Bernoulli { .. } => Belief::Beta(BetaBelief::new(m, d)?),
            EnvVariant::Poisson { .. } => Belief::Gamma(GammaBelief::new(m, d)?),
            _ => {
                if d.iter().any(|&x| !(x >= 0.0)) {
                    return Err(invalid("prior variances must be non-negative"));
                }
                Belief::Gaussian(GaussianBelief::new(DVector::from_vec(m), DMatrix::from_diagonal(&DVector::from_vec(d)))?)
            }
        })
    }

    fn linear_loadings(&self) -> Vec<DVector<f64>> {
        let k = self.dim();
        match &self.variant {
            EnvVariant::Linear { loadings: Some(b), .. } => b.iter().map(|row| DVector::from_column_slice(row)).collect(),
            _ => (0..k)
                .map(|i| {
                    let mut b = DVector::zeros(k);
                    b[i] = 1.0;
                    b[if i + 1 < k { i + 1 } else { 0 }] += 1.0;
                    b
                })
                .collect(),
        }
    }

    fn trials(&self) -> Vec<u64> {
        match &self.variant {
            EnvVariant::Bernoulli { trials: Some(n), .. } => n.clone(),
            _ => vec![1; self.dim()],
        }
    }

    fn intensities(&self) -> Vec<f64> {
        match &self.variant {
            EnvVariant::Poisson { intensities: Some(n), .. } => n.clone(),
            _ => vec![1.0; self.dim()],
        }
    }

    /// Belief-side model of every arm.
    pub fn arms(&self) -> Result<Arms> {
        let k = self.dim();
        Ok(match &self.variant {
            EnvVariant::Classical { noise_var, .. } => {
                Arms::Gaussian((0..k).map(|i| GaussianArmModel::direct(k, i, 1.0 / noise_var)).collect())
            }
            EnvVariant::InformativeArm { noise_var, penalty, .. } => {
                let mut w = DVector::zeros(k);
                w[0] = 1.0;
                let first = GaussianArmModel::new(
                    DMatrix::identity(k, k),
                    DVector::from_element(k, 1.0 / noise_var),
                    w,
                    RewardMap::Affine { scale: 1.0, offset: -penalty },
                )?;
                let mut arms = vec![first];
                arms.extend((1..k).map(|i| GaussianArmModel::direct(k, i, 1.0 / noise_var)));
                Arms::Gaussian(arms)
            }
            EnvVariant::Linear { noise_var, .. } => Arms::Gaussian(
                self.linear_loadings()
                    .into_iter()
                    .map(|b| GaussianArmModel::linear(b, 1.0 / noise_var))
                    .collect(),
            ),
            EnvVariant::Bernoulli { .. } => Arms::Binomial(self.trials()),
            EnvVariant::Poisson { .. } => Arms::Poisson(self.intensities()),
        })
    }

    /// One draw of the true parameter.
    pub fn sample_theta<R: Rng + ?Sized>(&self, rng: &mut R) -> Result<Vec<f64>> {
        let k = self.dim();
        let spec = self.theta_prior_spec();
        let mean = spec.mean.expand(k)?;
        let var = spec.var.expand(k)?;
        if self.is_gaussian() {
            return mean
                .iter()
                .zip(&var)
                .map(|(&m, &v)| {
                    if v == 0.0 {
                        Ok(m)
                    } else {
                        Normal::new(m, v.sqrt()).map(|n| n.sample(rng)).map_err(|e| numeric(e.to_string()))
                    }
                })
                .collect();
        }
        let belief = match self.variant {
            EnvVariant::Bernoulli { .. } => Belief::Beta(BetaBelief::new(mean, var)?),
            _ => Belief::Gamma(GammaBelief::new(mean, var)?),
        };
        sample_theta(&belief, rng)
    }

    /// Pull `arm` when the true parameter is `theta`.
    pub fn observe<R: Rng + ?Sized>(&self, theta: &[f64], arm: usize, rng: &mut R) -> Result<Observation> {
        let k = self.dim();
        if arm >= k {
            return Err(invalid(format!("arm {arm} out of range for {k} arms")));
        }
        if theta.len() != k {
            return Err(invalid("theta has the wrong dimension"));
        }
        let gauss = |mean: f64, var: f64, rng: &mut R| -> Result<f64> {
            Normal::new(mean, var.sqrt()).map(|n| n.sample(rng)).map_err(|e| numeric(e.to_string()))
        };
        match &self.variant {
            EnvVariant::Classical { noise_var, .. } => {
                let y = gauss(theta[arm], *noise_var, rng)?;
                Ok(Observation { arm, values: vec![y], reward: y })
            }
            EnvVariant::InformativeArm { noise_var, penalty, .. } => {
                if arm == 0 {
                    let reward = gauss(theta[0] - penalty, *noise_var, rng)?;
                    let values = theta.iter().map(|&t| gauss(t, *noise_var, rng)).collect::<Result<_>>()?;
                    Ok(Observation { arm, values, reward })
                } else {
                    let y = gauss(theta[arm], *noise_var, rng)?;
                    Ok(Observation { arm, values: vec![y], reward: y })
                }
            }
            EnvVariant::Linear { noise_var, .. } => {
                let b = &self.linear_loadings()[arm];
                let y = gauss(b.dot(&DVector::from_column_slice(theta)), *noise_var, rng)?;
                Ok(Observation { arm, values: vec![y], reward: y })
            }
            EnvVariant::Bernoulli { .. } => {
                let n = self.trials()[arm];
                let y = Binomial::new(n, theta[arm].clamp(0.0, 1.0))
                    .map_err(|e| numeric(e.to_string()))?
                    .sample(rng) as f64;
                Ok(Observation { arm, values: vec![y], reward: y })
            }
            EnvVariant::Poisson { .. } => {
                let rate = self.intensities()[arm] * theta[arm];
                let y = if rate > 0.0 {
                    Poisson::new(rate).map_err(|e| numeric(e.to_string()))?.sample(rng)
                } else {
                    0.0
                };
                Ok(Observation { arm, values: vec![y], reward: y })
            }
        }
    }

    /// Conditional mean reward of every arm.
    pub fn mean_rewards(&self, theta: &[f64]) -> Result<Vec<f64>> {
        expected_rewards(&self.arms()?, theta)
    }

    /// `max_i E[r_i | theta] - E[r_arm | theta]`.
    pub fn instant_regret(&self, theta: &[f64], arm: usize) -> Result<f64> {
        let means = self.mean_rewards(theta)?;
        let chosen = *means.get(arm).ok_or_else(|| invalid(format!("arm {arm} out of range")))?;
        let best = means.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        Ok((best - chosen).max(0.0))
    }
}

fn check_noise(v: f64) -> Result<()> {
    if !(v > 0.0) || !v.is_finite() {
        return Err(invalid(format!("noise variance must be positive, got {v}")));
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::update;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn rng(seed: u64) -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(seed)
    }

    fn classical(k: usize) -> EnvironmentSpec {
        EnvironmentSpec::new(EnvVariant::Classical { k, noise_var: 5.0 })
    }

    #[test]
    fn degenerate_theta_prior() {
        let mut env = classical(3);
        env.theta_prior = Some(PriorSpec { mean: Param::Vector(vec![1.0, 2.0, 3.0]), var: Param::Scalar(0.0) });
        assert_eq!(env.sample_theta(&mut rng(1)).unwrap(), vec![1.0, 2.0, 3.0]);
    }

    #[test]
    fn default_theta_prior_is_unit_normal_around_one() {
        let env = classical(2);
        let mut r = rng(2);
        let n = 10_000;
        let mean: f64 = (0..n).map(|_| env.sample_theta(&mut r).unwrap()[0]).sum::<f64>() / n as f64;
        assert!((mean - 1.0).abs() < 3.0 / (n as f64).sqrt());
        assert_eq!(env.sample_theta(&mut rng(5)).unwrap(), env.sample_theta(&mut rng(5)).unwrap());
    }

    #[test]
    fn near_noiseless_observation() {
        let env = EnvironmentSpec::new(EnvVariant::Classical { k: 2, noise_var: 1e-12 });
        let obs = env.observe(&[0.3, 0.9], 1, &mut rng(3)).unwrap();
        assert!((obs.values[0] - 0.9).abs() < 1e-5);
        assert_eq!(obs.reward, obs.values[0]);
    }

    #[test]
    fn informative_arm_reward_and_regret() {
        let env = EnvironmentSpec::new(EnvVariant::InformativeArm { k: 3, noise_var: 5.0, penalty: 1.0 });
        let theta = [2.0, 0.5, 0.1];
        let mut r = rng(4);
        let n = 100_000;
        let mut total = 0.0;
        for _ in 0..n {
            let obs = env.observe(&theta, 0, &mut r).unwrap();
            assert_eq!(obs.values.len(), 3);
            total += obs.reward;
        }
        assert!((total / n as f64 - 1.0).abs() < 3.0 * (5.0 / n as f64).sqrt());
        let theta = [5.0, 1.0, 0.0];
        assert_eq!(env.instant_regret(&theta, 0).unwrap(), 0.0);
        assert_eq!(env.instant_regret(&theta, 1).unwrap(), 3.0);
    }

    #[test]
    fn classical_regret() {
        let env = classical(2);
        assert_eq!(env.instant_regret(&[3.0, 1.0], 1).unwrap(), 2.0);
        assert_eq!(env.instant_regret(&[3.0, 1.0], 0).unwrap(), 0.0);
        assert!(env.instant_regret(&[3.0, 1.0], 2).is_err());
    }

    #[test]
    fn linear_wraparound_loading() {
        let k = 50;
        let env = EnvironmentSpec::new(EnvVariant::Linear { k, noise_var: 5.0, loadings: None });
        let theta: Vec<f64> = (0..k).map(|i| i as f64 / 10.0).collect();
        let mut r = rng(5);
        let n = 20_000;
        let mean: f64 = (0..n).map(|_| env.observe(&theta, k - 1, &mut r).unwrap().values[0]).sum::<f64>() / n as f64;
        assert!((mean - (theta[0] + theta[k - 1])).abs() < 3.0 * (5.0 / n as f64).sqrt());
        assert_eq!(env.mean_rewards(&theta).unwrap()[3], theta[3] + theta[4]);
    }

    #[test]
    fn count_environments() {
        let env = EnvironmentSpec::new(EnvVariant::Bernoulli { k: 2, trials: Some(vec![3, 5]) });
        env.validate().unwrap();
        let theta = env.sample_theta(&mut rng(6)).unwrap();
        assert!(theta.iter().all(|&t| (0.0..=1.0).contains(&t)));
        let obs = env.observe(&theta, 1, &mut rng(6)).unwrap();
        assert!(obs.values[0] <= 5.0);
        assert_eq!(env.mean_rewards(&[0.25, 0.5]).unwrap(), vec![0.75, 2.5]);

        let env = EnvironmentSpec::new(EnvVariant::Poisson { k: 2, intensities: Some(vec![2.0, 1.0]) });
        assert_eq!(env.mean_rewards(&[1.5, 2.0]).unwrap(), vec![3.0, 2.0]);
        assert!(matches!(env.initial_belief().unwrap(), Belief::Gamma(_)));
    }

    #[test]
    fn invalid_specs() {
        assert!(EnvironmentSpec::new(EnvVariant::Classical { k: 1, noise_var: 1.0 }).validate().is_err());
        assert!(EnvironmentSpec::new(EnvVariant::Classical { k: 2, noise_var: 0.0 }).validate().is_err());
        let mut env = classical(3);
        env.prior = Some(PriorSpec { mean: Param::Vector(vec![0.0; 2]), var: Param::Scalar(1.0) });
        assert!(env.validate().is_err());
    }

    #[test]
    fn posterior_consistency_under_round_robin() {
        let mut ok = 0;
        let seeds = 40;
        for seed in 0..seeds {
            let env = EnvironmentSpec::new(EnvVariant::Linear { k: 5, noise_var: 5.0, loadings: None });
            let arms = env.arms().unwrap();
            let mut r = rng(seed);
            let theta = env.sample_theta(&mut r).unwrap();
            let mut belief = env.initial_belief().unwrap();
            let err = |b: &Belief| b.mean().iter().zip(&theta).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
            let initial = err(&belief);
            for t in 0..2000 {
                let obs = env.observe(&theta, t % 5, &mut r).unwrap();
                belief = update(&belief, &arms, obs.arm, &obs.values).unwrap();
            }
            if err(&belief) < initial {
                ok += 1;
            }
        }
        assert!(ok as f64 >= 0.95 * seeds as f64);
    }

    #[test]
    fn spec_serde() {
        let env = EnvironmentSpec::new(EnvVariant::InformativeArm { k: 10, noise_var: 5.0, penalty: 1.0 });
        let s = serde_json::to_string(&env).unwrap();
        assert_eq!(serde_json::from_str::<EnvironmentSpec>(&s).unwrap(), env);
        let parsed: EnvironmentSpec = serde_json::from_str(r#"{"variant":{"kind":"classical","k":4}}"#).unwrap();
        assert_eq!(parsed.variant, EnvVariant::Classical { k: 4, noise_var: 5.0 });
    }
}
