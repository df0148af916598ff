//! Family-generic view of "belief + arms" used by policies and the harness.

use nalgebra::DVector;
use rand::Rng;
use rand_distr::{Beta, Distribution, Gamma, StandardNormal};

use crate::belief::{
    beta_binomial_update, beta_dynamics, gamma_dynamics, gamma_poisson_update, gaussian_dynamics,
    gaussian_update, Belief, DynamicsCoefficients, GaussianArmModel, GaussianBelief,
};
use crate::error::{invalid, numeric, Result};
use crate::quadrature::HermiteRule;

/// Arm set matching a belief family.
///
/// Count arms observe coordinate `i` of the parameter: `Binomial(n_i, theta_i)`
/// or `Poisson(n_i theta_i)`, and pay the count.
#[derive(Debug, Clone)]
pub enum Arms {
    Gaussian(Vec<GaussianArmModel>),
    Binomial(Vec<u64>),
    Poisson(Vec<f64>),
}

impl Arms {
    pub fn len(&self) -> usize {
        match self {
            Arms::Gaussian(a) => a.len(),
            Arms::Binomial(n) => n.len(),
            Arms::Poisson(n) => n.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn check(&self, belief: &Belief) -> Result<()> {
        let p = belief.mean().len();
        let ok = match (self, belief) {
            (Arms::Gaussian(a), Belief::Gaussian(_)) => a.iter().all(|arm| arm.param_dim() == p),
            (Arms::Binomial(n), Belief::Beta(_)) => n.len() <= p,
            (Arms::Poisson(n), Belief::Gamma(_)) => n.len() <= p && n.iter().all(|&x| x > 0.0),
            _ => return Err(invalid(format!("{} belief does not match arm family", belief.family()))),
        };
        if !ok {
            return Err(invalid("arm set does not match belief dimension"));
        }
        if self.is_empty() {
            return Err(invalid("no arms"));
        }
        Ok(())
    }
}

/// One-step dynamics of every arm.
pub fn dynamics(belief: &Belief, arms: &Arms, sigma_cap: f64) -> Result<Vec<DynamicsCoefficients>> {
    arms.check(belief)?;
    match (belief, arms) {
        (Belief::Gaussian(b), Arms::Gaussian(a)) => a.iter().map(|arm| gaussian_dynamics(b, arm)).collect(),
        (Belief::Beta(b), Arms::Binomial(n)) => n.iter().enumerate().map(|(j, &nj)| beta_dynamics(b, nj, j)).collect(),
        (Belief::Gamma(b), Arms::Poisson(n)) => {
            n.iter().enumerate().map(|(j, &nj)| gamma_dynamics(b, nj, j, sigma_cap)).collect()
        }
        _ => unreachable!("checked above"),
    }
}

/// Posterior after observing `values` from `arm`. Count families read `values[0]`.
pub fn update(belief: &Belief, arms: &Arms, arm: usize, values: &[f64]) -> Result<Belief> {
    if arm >= arms.len() {
        return Err(invalid(format!("arm {arm} out of range")));
    }
    let count = || -> Result<u64> {
        let y = *values.first().ok_or_else(|| invalid("missing count observation"))?;
        if !(y >= 0.0) || y.fract() != 0.0 {
            return Err(invalid(format!("count observation must be a non-negative integer, got {y}")));
        }
        Ok(y as u64)
    };
    Ok(match (belief, arms) {
        (Belief::Gaussian(b), Arms::Gaussian(a)) => Belief::Gaussian(gaussian_update(b, &a[arm], values)?),
        (Belief::Beta(b), Arms::Binomial(n)) => Belief::Beta(beta_binomial_update(b, n[arm], count()?, arm)?),
        (Belief::Gamma(b), Arms::Poisson(n)) => Belief::Gamma(gamma_poisson_update(b, n[arm], count()?, arm)?),
        _ => return Err(invalid("belief does not match arm family")),
    })
}

/// Draw `theta` from a Gaussian belief; falls back to an eigen square root
/// when the covariance is only semidefinite.
pub fn sample_gaussian<R: Rng + ?Sized>(belief: &GaussianBelief, rng: &mut R) -> Result<DVector<f64>> {
    let p = belief.dim();
    let z = DVector::from_fn(p, |_, _| -> f64 { StandardNormal.sample(rng) });
    let root = gaussian_root(belief)?;
    Ok(&belief.m + root * z)
}

/// A matrix `F` with `F F^T = d`.
pub fn gaussian_root(belief: &GaussianBelief) -> Result<nalgebra::DMatrix<f64>> {
    if belief.is_diagonal() {
        return Ok(nalgebra::DMatrix::from_diagonal(&belief.d.diagonal().map(|x| x.max(0.0).sqrt())));
    }
    if let Some(ch) = belief.d.clone().cholesky() {
        return Ok(ch.l());
    }
    let eig = nalgebra::SymmetricEigen::new(belief.d.clone());
    if eig.eigenvalues.iter().any(|x| !x.is_finite()) {
        return Err(numeric("covariance has non-finite eigenvalues"));
    }
    let vals = eig.eigenvalues.map(|x| x.max(0.0).sqrt());
    Ok(&eig.eigenvectors * nalgebra::DMatrix::from_diagonal(&vals))
}

/// Draw `theta` from any supported posterior.
pub fn sample_theta<R: Rng + ?Sized>(belief: &Belief, rng: &mut R) -> Result<Vec<f64>> {
    match belief {
        Belief::Gaussian(b) => Ok(sample_gaussian(b, rng)?.as_slice().to_vec()),
        Belief::Beta(b) => (0..b.0.m.len())
            .map(|j| {
                let (a, bb) = b.shapes(j);
                Beta::new(a, bb)
                    .map(|dist| dist.sample(rng))
                    .map_err(|e| numeric(format!("Beta sampling: {e}")))
            })
            .collect(),
        Belief::Gamma(g) => (0..g.0.m.len())
            .map(|j| {
                let (shape, rate) = g.shape_rate(j);
                Gamma::new(shape, 1.0 / rate)
                    .map(|dist| dist.sample(rng))
                    .map_err(|e| numeric(format!("Gamma sampling: {e}")))
            })
            .collect(),
    }
}

/// Expected reward of every arm when the parameter equals `theta`.
pub fn expected_rewards(arms: &Arms, theta: &[f64]) -> Result<Vec<f64>> {
    match arms {
        Arms::Gaussian(a) => a
            .iter()
            .map(|arm| {
                if arm.param_dim() != theta.len() {
                    return Err(invalid("theta dimension differs from arm loading"));
                }
                let mean = arm.reward_loading().dot(&DVector::from_column_slice(theta));
                let sd = arm.reward_noise_var().sqrt();
                match arm.reward.as_affine() {
                    Some((scale, offset)) => Ok(scale * mean + offset),
                    None => Ok(HermiteRule::standard().expect(mean, sd, |x| arm.reward.value(x))),
                }
            })
            .collect(),
        Arms::Binomial(n) => count_means(n.iter().map(|&x| x as f64), theta),
        Arms::Poisson(n) => count_means(n.iter().copied(), theta),
    }
}

fn count_means(n: impl Iterator<Item = f64>, theta: &[f64]) -> Result<Vec<f64>> {
    n.enumerate()
        .map(|(i, ni)| {
            theta
                .get(i)
                .map(|t| ni * t)
                .ok_or_else(|| invalid("theta shorter than the arm set"))
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::belief::{BetaBelief, GammaBelief};
    use nalgebra::DMatrix;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn family_mismatch_is_rejected() {
        let b = Belief::Beta(BetaBelief::new(vec![0.5], vec![0.5]).unwrap());
        let arms = Arms::Poisson(vec![1.0]);
        assert!(dynamics(&b, &arms, 1e3).is_err());
        assert!(update(&b, &Arms::Binomial(vec![1]), 0, &[0.5]).is_err());
        assert!(update(&b, &Arms::Binomial(vec![1]), 3, &[1.0]).is_err());
    }

    #[test]
    fn count_update_through_generic_entry() {
        let b = Belief::Gamma(GammaBelief::new(vec![1.0, 1.0], vec![1.0, 1.0]).unwrap());
        let arms = Arms::Poisson(vec![1.0, 1.0]);
        let Belief::Gamma(post) = update(&b, &arms, 1, &[3.0]).unwrap() else { panic!() };
        assert_eq!(post.0.m, vec![1.0, 2.0]);
        assert_eq!(post.0.d, vec![1.0, 0.5]);
    }

    #[test]
    fn semidefinite_sampling_stays_on_support() {
        let d = DMatrix::from_row_slice(2, 2, &[1.0, 1.0, 1.0, 1.0]);
        let b = GaussianBelief::new(DVector::from_vec(vec![0.0, 3.0]), d).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..100 {
            let th = sample_gaussian(&b, &mut rng).unwrap();
            assert!((th[1] - th[0] - 3.0).abs() < 1e-7);
        }
    }
}
