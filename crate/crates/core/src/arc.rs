//! The ARC index: predictive reward, learning premium and decision steps.
//!
//! For each arm `i` the index is `alpha_i = f_i + w L_i` where `f` is the
//! one-step predictive reward, `L` the learning premium (a second-order
//! expansion of the value of what the arm reveals) and `w` the discounted
//! weight of the future, `beta / (1 - beta)` or a finite geometric sum.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::belief::{Belief, DynamicsCoefficients, GaussianArmModel, GaussianBelief, RewardMap, DEFAULT_SIGMA_CAP};
use crate::error::{invalid, Result};
use crate::model::{dynamics, Arms};
use crate::quadrature::HermiteRule;
use crate::smoothmax::SmoothMaxKind;

/// Predictive reward of every arm and its derivatives in `(m, d)`.
///
/// `df_dd` rows are flattened column-major over the uncertainty parameter
/// (`p * p` entries for Gaussian beliefs, `p` for count families).
#[derive(Debug, Clone, PartialEq)]
pub struct RewardEval {
    pub f: DVector<f64>,
    pub df_dm: DMatrix<f64>,
    pub df_dd: DMatrix<f64>,
    pub d2f_dm2: Vec<DMatrix<f64>>,
}

impl RewardEval {
    pub fn arms(&self) -> usize {
        self.f.len()
    }

    pub fn dim(&self) -> usize {
        self.df_dm.ncols()
    }

    /// True when every arm's reward is affine in the parameter.
    pub fn is_flat(&self) -> bool {
        self.d2f_dm2.iter().all(|h| h.iter().all(|&x| x == 0.0))
    }
}

/// `E r(x)`, `E r'(x)`, `E r''(x)` for `x ~ N(mean, var)`.
fn reward_moments(reward: &RewardMap, mean: f64, var: f64) -> Result<(f64, f64, f64)> {
    if let Some((scale, offset)) = reward.as_affine() {
        return Ok((scale * mean + offset, scale, 0.0));
    }
    let RewardMap::Custom(c) = reward else { unreachable!() };
    let (Some(d1), Some(d2)) = (&c.first, &c.second) else {
        return Err(invalid("non-affine reward needs first and second derivative callbacks"));
    };
    let rule = HermiteRule::standard();
    let sd = var.max(0.0).sqrt();
    let f = rule.expect(mean, sd, |x| (c.value)(x));
    let g = rule.expect(mean, sd, |x| d1(x));
    let h = rule.expect(mean, sd, |x| d2(x));
    if !(f.is_finite() && g.is_finite() && h.is_finite()) {
        return Err(crate::error::numeric("reward expectation is not finite"));
    }
    Ok((f, g, h))
}

/// Expected reward of every Gaussian arm under `belief`, with derivatives.
///
/// The reward signal `x = w^T Y` of arm `i` is `N(c~^T m, c~^T d c~ + tau^2)`
/// under the predictive law, so `d f / d m = E r' c~`,
/// `d^2 f / d m^2 = E r'' c~ c~^T` and `d f / d d = E r'' c~ c~^T / 2`.
pub fn predictive_reward(belief: &GaussianBelief, arms: &[GaussianArmModel]) -> Result<RewardEval> {
    let p = belief.dim();
    let k = arms.len();
    let mut f = DVector::zeros(k);
    let mut df_dm = DMatrix::zeros(k, p);
    let mut df_dd = DMatrix::zeros(k, p * p);
    let mut d2f_dm2 = Vec::with_capacity(k);
    for (i, arm) in arms.iter().enumerate() {
        if arm.param_dim() != p {
            return Err(invalid(format!("arm {i} loads {} parameters, belief has {p}", arm.param_dim())));
        }
        let load = arm.reward_loading();
        let mean = load.dot(&belief.m);
        let var = (load.transpose() * &belief.d * &load)[(0, 0)] + arm.reward_noise_var();
        let (fi, gi, hi) = reward_moments(&arm.reward, mean, var)?;
        f[i] = fi;
        df_dm.row_mut(i).copy_from(&(&load * gi).transpose());
        let outer = &load * load.transpose();
        if hi != 0.0 {
            let half = &outer * (0.5 * hi);
            df_dd.row_mut(i).copy_from_slice(half.as_slice());
        }
        d2f_dm2.push(outer * hi);
    }
    Ok(RewardEval { f, df_dm, df_dd, d2f_dm2 })
}

/// Expected counts `n_i m_i` for the Beta and Gamma families.
fn predictive_reward_counts(m: &[f64], n: &[f64]) -> RewardEval {
    let p = m.len();
    let k = n.len();
    let mut df_dm = DMatrix::zeros(k, p);
    for i in 0..k {
        df_dm[(i, i)] = n[i];
    }
    RewardEval {
        f: DVector::from_iterator(k, (0..k).map(|i| n[i] * m[i])),
        df_dm,
        df_dd: DMatrix::zeros(k, p),
        d2f_dm2: vec![DMatrix::zeros(p, p); k],
    }
}

/// Predictive reward for any belief family.
pub fn predictive_reward_any(belief: &Belief, arms: &Arms) -> Result<RewardEval> {
    arms.check(belief)?;
    match (belief, arms) {
        (Belief::Gaussian(b), Arms::Gaussian(a)) => predictive_reward(b, a),
        (Belief::Beta(b), Arms::Binomial(n)) => {
            let n: Vec<f64> = n.iter().map(|&x| x as f64).collect();
            Ok(predictive_reward_counts(&b.0.m, &n))
        }
        (Belief::Gamma(b), Arms::Poisson(n)) => Ok(predictive_reward_counts(&b.0.m, n)),
        _ => unreachable!("checked above"),
    }
}

/// The premium together with the tensors it is built from.
#[derive(Debug, Clone, PartialEq)]
pub struct Premium {
    pub l: DVector<f64>,
    pub b: DVector<f64>,
    pub m: DVector<f64>,
    pub sigma: DMatrix<f64>,
}

fn check_lambda(lambda: f64) -> Result<()> {
    if !(lambda > 0.0) || !lambda.is_finite() {
        return Err(invalid(format!("temperature must be positive, got {lambda}")));
    }
    Ok(())
}

/// Generic learning premium from the reward derivatives and arm dynamics.
///
/// `B = sum_j nu_j df_j/dd`, `M = sum_j nu_j df_j/dm`,
/// `Sigma = sum_j nu_j d2f_j/dm2 + G^T eta G / lambda` with `G` the rows of
/// `df/dm`, and `L_i = <B, b_i> + <M, mu_i> + <Sigma, sigma_sq_i> / 2`.
pub fn learning_premium(
    reward: &RewardEval,
    dyn_: &[DynamicsCoefficients],
    smooth_max: SmoothMaxKind,
    lambda: f64,
) -> Result<Premium> {
    check_lambda(lambda)?;
    let k = reward.arms();
    let p = reward.dim();
    if dyn_.len() != k {
        return Err(invalid(format!("{} dynamics for {k} arms", dyn_.len())));
    }
    let nu = smooth_max.nu(reward.f.as_slice(), lambda)?;
    let eta = smooth_max.eta_from_nu(&nu);

    let b = reward.df_dd.tr_mul(&DVector::from_column_slice(&nu));
    let m = reward.df_dm.tr_mul(&DVector::from_column_slice(&nu));
    let mut sigma = (reward.df_dm.transpose() * &eta * &reward.df_dm) / lambda;
    for (j, h) in reward.d2f_dm2.iter().enumerate() {
        if nu[j] != 0.0 && h.iter().any(|&x| x != 0.0) {
            sigma += h * nu[j];
        }
    }

    let mut l = DVector::zeros(k);
    for (i, dy) in dyn_.iter().enumerate() {
        if dy.mu.len() != p || dy.sigma_sq.nrows() != p || dy.b.len() != b.len() {
            return Err(invalid(format!("dynamics of arm {i} have inconsistent dimensions")));
        }
        l[i] = b.dot(&dy.b) + m.dot(&dy.mu) + 0.5 * sigma.component_mul(&dy.sigma_sq).sum();
    }
    Ok(Premium { l, b, m, sigma })
}

/// Premium for diagonal beliefs where each arm observes coordinates
/// independently: arm `i` sees coordinate `j` with precision `s_ij` and arm
/// `j` pays an affine function of coordinate `j` with slope `g_j`.
///
/// `L_i = (2 lambda)^{-1} sum_j eta_jj d_jj^2 s_ij / (1 + d_jj s_ij) g_j^2`.
pub fn learning_premium_info_arm(
    f: &[f64],
    d_diag: &[f64],
    s: &DMatrix<f64>,
    g: &[f64],
    smooth_max: SmoothMaxKind,
    lambda: f64,
) -> Result<DVector<f64>> {
    check_lambda(lambda)?;
    let k = f.len();
    if d_diag.len() != k || g.len() != k || s.nrows() != k || s.ncols() != k {
        return Err(invalid("informative-arm premium needs K coordinates and a K x K precision table"));
    }
    if s.iter().any(|&x| !(x >= 0.0)) {
        return Err(invalid("observation precisions must be non-negative"));
    }
    let nu = smooth_max.nu(f, lambda)?;
    let eta = smooth_max.eta_from_nu(&nu);
    Ok(DVector::from_fn(k, |i, _| {
        (0..k)
            .map(|j| {
                let dj = d_diag[j];
                let sij = s[(i, j)];
                if sij == 0.0 || dj == 0.0 {
                    0.0
                } else {
                    eta[(j, j)] * dj * dj * sij / (1.0 + dj * sij) * g[j] * g[j]
                }
            })
            .sum::<f64>()
            / (2.0 * lambda)
    }))
}

/// Premium when every arm observes a single linear functional `c_i^T theta`
/// with precision `P_i` and all rewards are affine with gradients `G_j`.
///
/// With `a_ij = G_j^T d c_i`:
/// `L_i = (c_i^T d c_i + 1/P_i)^{-1} / (2 lambda) * (sum_j nu_j a_ij^2 - (sum_j nu_j a_ij)^2)`.
pub fn learning_premium_linear(
    belief: &GaussianBelief,
    loadings: &[DVector<f64>],
    precisions: &[f64],
    reward_grads: &DMatrix<f64>,
    f: &[f64],
    smooth_max: SmoothMaxKind,
    lambda: f64,
) -> Result<DVector<f64>> {
    check_lambda(lambda)?;
    let k = f.len();
    let p = belief.dim();
    if loadings.len() != k || precisions.len() != k || reward_grads.nrows() != k || reward_grads.ncols() != p {
        return Err(invalid("linear premium: inconsistent number of arms"));
    }
    if loadings.iter().any(|c| c.len() != p) {
        return Err(invalid("linear premium: loading dimension differs from belief"));
    }
    let SmoothMaxKind::Shannon = smooth_max;
    let nu = smooth_max.nu(f, lambda)?;
    let mut out = DVector::zeros(k);
    for i in 0..k {
        if precisions[i] <= 0.0 {
            continue;
        }
        let dc = &belief.d * &loadings[i];
        let var = loadings[i].dot(&dc) + 1.0 / precisions[i];
        let a = reward_grads * &dc;
        let first: f64 = (0..k).map(|j| nu[j] * a[j]).sum();
        let second: f64 = (0..k).map(|j| nu[j] * a[j] * a[j]).sum();
        out[i] = ((second - first * first).max(0.0)) / (var * 2.0 * lambda);
    }
    Ok(out)
}

fn default_beta() -> f64 {
    0.99
}
fn default_one() -> f64 {
    1.0
}
fn default_floor() -> f64 {
    1e-8
}
fn default_sigma_cap() -> f64 {
    DEFAULT_SIGMA_CAP
}

/// Hyper-parameters of the ARC policy.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ArcConfig {
    #[serde(default = "default_beta")]
    pub beta: f64,
    #[serde(default = "default_one")]
    pub rho: f64,
    #[serde(default = "default_one")]
    pub kappa: f64,
    #[serde(default = "default_floor")]
    pub lambda_floor: f64,
    #[serde(default)]
    pub smooth_max: SmoothMaxKind,
    /// Steps to go. `None` uses the infinite-horizon weight.
    #[serde(default)]
    pub horizon: Option<usize>,
    /// Cap on the Poisson mean-increment standard deviation.
    #[serde(default = "default_sigma_cap")]
    pub sigma_cap: f64,
}

impl Default for ArcConfig {
    fn default() -> Self {
        Self {
            beta: default_beta(),
            rho: 1.0,
            kappa: 1.0,
            lambda_floor: default_floor(),
            smooth_max: SmoothMaxKind::Shannon,
            horizon: None,
            sigma_cap: DEFAULT_SIGMA_CAP,
        }
    }
}

impl ArcConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.beta > 0.0 && self.beta < 1.0) {
            return Err(invalid(format!("beta must lie in (0, 1), got {}", self.beta)));
        }
        if !(self.rho > 0.0) || !self.rho.is_finite() {
            return Err(invalid(format!("rho must be positive, got {}", self.rho)));
        }
        if !(self.kappa > 0.0 && self.kappa <= 2.0) {
            return Err(invalid(format!("kappa must lie in (0, 2], got {}", self.kappa)));
        }
        if !(self.lambda_floor > 0.0) {
            return Err(invalid("lambda floor must be positive"));
        }
        if self.horizon == Some(0) {
            return Err(invalid("horizon must be positive"));
        }
        if !(self.sigma_cap > 0.0) {
            return Err(invalid("sigma cap must be positive"));
        }
        Ok(())
    }

    /// `max(rho * norm^kappa, floor)`.
    pub fn lambda(&self, d_norm: f64) -> f64 {
        (self.rho * d_norm.powf(self.kappa)).max(self.lambda_floor)
    }

    /// Weight on the premium: `beta / (1 - beta)`, or `sum_{s=1}^{t-1} beta^s`
    /// with `t` steps to go.
    pub fn premium_weight(&self) -> f64 {
        let b = self.beta;
        match self.horizon {
            None => b / (1.0 - b),
            Some(t) => b * (1.0 - b.powi(t as i32 - 1)) / (1.0 - b),
        }
    }
}

/// Which premium formula produced an index.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PremiumPath {
    Generic,
    InformativeArm,
    Linear,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ArcIndex {
    pub alpha: DVector<f64>,
    pub f: DVector<f64>,
    pub l: DVector<f64>,
    /// Only filled on the generic path.
    pub b: Option<DVector<f64>>,
    pub m: Option<DVector<f64>>,
    pub sigma: Option<DMatrix<f64>>,
    pub lambda_used: f64,
    pub smooth_max: SmoothMaxKind,
    pub path: PremiumPath,
}

/// `(s, g)` tables when the instance has the informative-arm structure.
fn info_arm_structure(belief: &GaussianBelief, arms: &[GaussianArmModel], reward: &RewardEval) -> Option<(DMatrix<f64>, Vec<f64>)> {
    let k = arms.len();
    let p = belief.dim();
    if p != k || !reward.is_flat() || !belief.is_diagonal() {
        return None;
    }
    let mut s = DMatrix::zeros(k, k);
    for (i, arm) in arms.iter().enumerate() {
        for col in arm.observed() {
            let c = arm.c.column(col);
            let mut nz = c.iter().enumerate().filter(|(_, &x)| x != 0.0);
            match (nz.next(), nz.next()) {
                (None, _) => {}
                (Some((j, &x)), None) => s[(i, j)] += arm.precision[col] * x * x,
                _ => return None,
            }
        }
    }
    let mut g = vec![0.0; k];
    for (j, gj) in g.iter_mut().enumerate() {
        for col in 0..p {
            let v = reward.df_dm[(j, col)];
            if col == j {
                *gj = v;
            } else if v != 0.0 {
                return None;
            }
        }
    }
    Some((s, g))
}

fn linear_structure(arms: &[GaussianArmModel], reward: &RewardEval) -> Option<(Vec<DVector<f64>>, Vec<f64>)> {
    if !reward.is_flat() {
        return None;
    }
    let p = reward.dim();
    let mut loads = Vec::with_capacity(arms.len());
    let mut precs = Vec::with_capacity(arms.len());
    for arm in arms {
        let obs = arm.observed();
        match obs.as_slice() {
            [] => {
                loads.push(DVector::zeros(p));
                precs.push(0.0);
            }
            [col] => {
                loads.push(arm.c.column(*col).into_owned());
                precs.push(arm.precision[*col]);
            }
            _ => return None,
        }
    }
    Some((loads, precs))
}

/// ARC index at a fixed temperature.
pub fn arc_index_at(belief: &Belief, arms: &Arms, config: &ArcConfig, lambda: f64) -> Result<ArcIndex> {
    config.validate()?;
    check_lambda(lambda)?;
    let reward = predictive_reward_any(belief, arms)?;
    let weight = config.premium_weight();
    let kind = config.smooth_max;

    let closed = match (belief, arms) {
        (Belief::Gaussian(b), Arms::Gaussian(a)) => {
            if let Some((s, g)) = info_arm_structure(b, a, &reward) {
                let d_diag: Vec<f64> = b.d.diagonal().iter().copied().collect();
                Some((learning_premium_info_arm(reward.f.as_slice(), &d_diag, &s, &g, kind, lambda)?, PremiumPath::InformativeArm))
            } else if let Some((loads, precs)) = linear_structure(a, &reward) {
                Some((
                    learning_premium_linear(b, &loads, &precs, &reward.df_dm, reward.f.as_slice(), kind, lambda)?,
                    PremiumPath::Linear,
                ))
            } else {
                None
            }
        }
        _ => None,
    };

    let (l, b, m, sigma, path) = match closed {
        Some((l, path)) => (l, None, None, None, path),
        None => {
            let dy = dynamics(belief, arms, config.sigma_cap)?;
            let prem = learning_premium(&reward, &dy, kind, lambda)?;
            (prem.l, Some(prem.b), Some(prem.m), Some(prem.sigma), PremiumPath::Generic)
        }
    };
    let alpha = &reward.f + &l * weight;
    if alpha.iter().any(|x| !x.is_finite()) {
        return Err(crate::error::numeric("ARC index is not finite"));
    }
    Ok(ArcIndex { alpha, f: reward.f, l, b, m, sigma, lambda_used: lambda, smooth_max: kind, path })
}

/// ARC index with the temperature schedule `max(rho ||d||^kappa, floor)`.
pub fn arc_index(belief: &Belief, arms: &Arms, config: &ArcConfig) -> Result<ArcIndex> {
    config.validate()?;
    let lambda = config.lambda(belief.uncertainty_norm());
    arc_index_at(belief, arms, config, lambda)
}

/// First arm whose cumulative probability reaches `zeta`.
pub fn select_arm(u: &[f64], zeta: f64) -> usize {
    let mut acc = 0.0;
    for (i, &ui) in u.iter().enumerate() {
        acc += ui;
        if acc >= zeta {
            return i;
        }
    }
    // rounding left zeta above the total: fall back to the last arm with mass
    u.iter().rposition(|&x| x > 0.0).unwrap_or(u.len() - 1)
}

/// Lowest-index maximiser.
pub fn argmax(a: &[f64]) -> usize {
    let mut best = 0;
    for (i, &x) in a.iter().enumerate() {
        if x > a[best] {
            best = i;
        }
    }
    best
}

/// Randomised ARC decision: `U = nu(alpha)`, arm drawn by inverse CDF at `rng_draw`.
pub fn arc_step(index: &ArcIndex, rng_draw: f64) -> Result<(Vec<f64>, usize)> {
    let u = index.smooth_max.nu(index.alpha.as_slice(), index.lambda_used)?;
    let a = select_arm(&u, rng_draw);
    Ok((u, a))
}

/// Deterministic ARC decision: argmax of the index.
pub fn arc_index_step(index: &ArcIndex) -> usize {
    argmax(index.alpha.as_slice())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::belief::{gaussian_dynamics, CustomReward};
    use crate::smoothmax;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    fn gauss(b: GaussianBelief) -> Belief {
        Belief::Gaussian(b)
    }

    #[test]
    fn identity_reward_is_linear() {
        let b = GaussianBelief::new(DVector::from_vec(vec![0.3, -1.0]), DMatrix::from_row_slice(2, 2, &[1.0, 0.2, 0.2, 2.0])).unwrap();
        let arms = vec![GaussianArmModel::direct(2, 0, 1.0), GaussianArmModel::direct(2, 1, 3.0)];
        let ev = predictive_reward(&b, &arms).unwrap();
        assert_eq!(ev.f.as_slice(), &[0.3, -1.0]);
        assert_eq!(ev.df_dm, DMatrix::identity(2, 2));
        assert!(ev.df_dd.iter().all(|&x| x == 0.0));
        assert!(ev.is_flat());
    }

    fn square_reward() -> RewardMap {
        RewardMap::Custom(CustomReward::new(|y| y * y, |y| 2.0 * y, |_| 2.0))
    }

    #[test]
    fn squared_reward_second_moment() {
        let (m, d, noise) = (0.7, 0.4, 0.25);
        let b = GaussianBelief::isotropic(1, m, d);
        let mut arm = GaussianArmModel::direct(1, 0, 1.0 / noise);
        arm.reward = square_reward();
        let ev = predictive_reward(&b, &[arm]).unwrap();
        assert_relative_eq!(ev.f[0], m * m + d + noise, max_relative = 1e-12);
        assert_relative_eq!(ev.df_dm[(0, 0)], 2.0 * m, max_relative = 1e-12);
        assert_relative_eq!(ev.d2f_dm2[0][(0, 0)], 2.0, max_relative = 1e-12);
        assert_relative_eq!(ev.df_dd[(0, 0)], 1.0, max_relative = 1e-12);
    }

    #[test]
    fn quadrature_matches_identity_closed_form() {
        let b = GaussianBelief::new(DVector::from_vec(vec![0.5, 2.0]), DMatrix::from_row_slice(2, 2, &[1.0, 0.3, 0.3, 0.5])).unwrap();
        let mut quad = GaussianArmModel::linear(DVector::from_vec(vec![1.0, -2.0]), 0.7);
        quad.reward = RewardMap::Custom(CustomReward::new(|y| y, |_| 1.0, |_| 0.0));
        let exact = GaussianArmModel::linear(DVector::from_vec(vec![1.0, -2.0]), 0.7);
        let a = predictive_reward(&b, &[quad]).unwrap();
        let e = predictive_reward(&b, &[exact]).unwrap();
        assert!((a.f[0] - e.f[0]).abs() < 1e-10);
        assert!((&a.df_dm - &e.df_dm).abs().max() < 1e-10);
    }

    #[test]
    fn custom_reward_without_derivatives_is_rejected() {
        let b = GaussianBelief::isotropic(1, 0.0, 1.0);
        let mut arm = GaussianArmModel::direct(1, 0, 1.0);
        arm.reward = RewardMap::Custom(CustomReward { value: std::sync::Arc::new(|y: f64| y.tanh()), first: None, second: None });
        assert!(matches!(predictive_reward(&b, &[arm]), Err(crate::error::BanditError::InvalidArgument(_))));
    }

    #[test]
    fn premium_vanishes_without_uncertainty() {
        let b = GaussianBelief::new(DVector::from_vec(vec![0.0, 0.1]), DMatrix::zeros(2, 2)).unwrap();
        let arms = vec![GaussianArmModel::direct(2, 0, 1.0), GaussianArmModel::direct(2, 1, 1.0)];
        let ev = predictive_reward(&b, &arms).unwrap();
        let dy: Vec<_> = arms.iter().map(|a| gaussian_dynamics(&b, a).unwrap()).collect();
        let prem = learning_premium(&ev, &dy, SmoothMaxKind::Shannon, 0.3).unwrap();
        assert!(prem.l.iter().all(|&x| x == 0.0));
    }

    /// Each arm sees both coordinates with unit precision and pays its own.
    fn two_arm_info_instance(f: (f64, f64)) -> (GaussianBelief, Vec<GaussianArmModel>) {
        let b = GaussianBelief::new(DVector::from_vec(vec![f.0, f.1]), DMatrix::identity(2, 2)).unwrap();
        let arm = |i: usize| {
            let mut w = DVector::zeros(2);
            w[i] = 1.0;
            GaussianArmModel::new(DMatrix::identity(2, 2), DVector::from_element(2, 1.0), w, RewardMap::Identity).unwrap()
        };
        (b, vec![arm(0), arm(1)])
    }

    #[test]
    fn hand_evaluated_info_arm_value() {
        // eta_jj = 1/4, d^2 s / (1 + d s) = 1/2, lambda = 1: 1/4 * 1/2 / 2 = 0.125
        let (b, arms) = two_arm_info_instance((0.0, 0.0));
        let ev = predictive_reward(&b, &arms).unwrap();
        let dy: Vec<_> = arms.iter().map(|a| gaussian_dynamics(&b, a).unwrap()).collect();
        let generic = learning_premium(&ev, &dy, SmoothMaxKind::Shannon, 1.0).unwrap();
        let closed = learning_premium_info_arm(&[0.0, 0.0], &[1.0, 1.0], &DMatrix::from_element(2, 2, 1.0), &[1.0, 1.0], SmoothMaxKind::Shannon, 1.0).unwrap();
        for i in 0..2 {
            assert_relative_eq!(generic.l[i], 0.125, epsilon = 1e-15);
            assert_relative_eq!(closed[i], 0.125, epsilon = 1e-15);
        }
        let idx = arc_index_at(&gauss(b), &Arms::Gaussian(arms), &ArcConfig::default(), 1.0).unwrap();
        assert_eq!(idx.path, PremiumPath::InformativeArm);
        assert_relative_eq!(idx.l[0], 0.125, epsilon = 1e-15);
    }

    #[test]
    fn info_arm_edge_cases() {
        let kind = SmoothMaxKind::Shannon;
        let s = DMatrix::from_row_slice(2, 2, &[0.0, 0.0, 1.0, 1.0]);
        let l = learning_premium_info_arm(&[0.0, 0.0], &[1.0, 1.0], &s, &[1.0, 1.0], kind, 1.0).unwrap();
        assert_eq!(l[0], 0.0);
        let s = DMatrix::from_row_slice(2, 2, &[1.0, 1.0, 0.0, 1.0]);
        let l = learning_premium_info_arm(&[0.0, 0.0], &[1.0, 1.0], &s, &[1.0, 1.0], kind, 1.0).unwrap();
        assert!(l[0] > l[1]);
        let s = DMatrix::from_row_slice(2, 2, &[1.0, -1.0, 0.0, 1.0]);
        assert!(learning_premium_info_arm(&[0.0, 0.0], &[1.0, 1.0], &s, &[1.0, 1.0], kind, 1.0).is_err());
        assert!(learning_premium_info_arm(&[0.0, 0.0], &[1.0, 1.0], &DMatrix::identity(2, 2), &[1.0, 1.0], kind, 0.0).is_err());
    }

    #[test]
    fn dominant_arm_has_no_premium() {
        let (b, arms) = two_arm_info_instance((100.0, 0.0));
        let ev = predictive_reward(&b, &arms).unwrap();
        let dy: Vec<_> = arms.iter().map(|a| gaussian_dynamics(&b, a).unwrap()).collect();
        let prem = learning_premium(&ev, &dy, SmoothMaxKind::Shannon, 0.1).unwrap();
        assert!(prem.l.norm() < 1e-6);
    }

    #[test]
    fn orthogonal_linear_arms() {
        let k = 4;
        let lambda = 0.7;
        let b = GaussianBelief::isotropic(k, 0.0, 1.0);
        let loads: Vec<_> = (0..k).map(|i| DVector::from_fn(k, |j, _| if i == j { 1.0 } else { 0.0 })).collect();
        let l = learning_premium_linear(&b, &loads, &vec![1.0; k], &DMatrix::identity(k, k), &vec![0.0; k], SmoothMaxKind::Shannon, lambda).unwrap();
        let kf = k as f64;
        for i in 0..k {
            assert_relative_eq!(l[i], (1.0 / (4.0 * lambda)) * (1.0 / kf) * (1.0 - 1.0 / kf), epsilon = 1e-14);
        }
        let zero = GaussianBelief::new(DVector::zeros(k), DMatrix::zeros(k, k)).unwrap();
        let l = learning_premium_linear(&zero, &loads, &vec![1.0; k], &DMatrix::identity(k, k), &vec![0.0; k], SmoothMaxKind::Shannon, lambda).unwrap();
        assert!(l.iter().all(|&x| x == 0.0));
        assert!(learning_premium_linear(&b, &loads[..2], &[1.0, 1.0], &DMatrix::identity(k, k), &vec![0.0; k], SmoothMaxKind::Shannon, lambda).is_err());
    }

    #[test]
    fn one_and_a_half_bandit_index() {
        let m = 1.0;
        let d = 0.04;
        let b = GaussianBelief::isotropic(1, m, d);
        let arms = Arms::Gaussian(vec![GaussianArmModel::direct(1, 0, 1.0), GaussianArmModel::constant(1, 1.0)]);
        let cfg = ArcConfig { beta: 0.99, ..Default::default() };
        let idx = arc_index_at(&gauss(b), &arms, &cfg, 0.1).unwrap();
        assert_eq!(idx.path, PremiumPath::Linear);
        let expect = 1.0 + 0.5 * (0.99 / 0.01) * (1.0 / 0.1) * 0.25 * d * d / (1.0 + d);
        assert_relative_eq!(idx.alpha[0], expect, epsilon = 1e-12);
        assert!((idx.alpha[0] - 1.1904).abs() < 1e-4);
        assert_eq!(idx.alpha[1], 1.0);
        assert_eq!(idx.l[1], 0.0);
        let (u, _) = arc_step(&idx, 0.5).unwrap();
        assert!((u[0] - 0.8704).abs() < 1e-4);
    }

    #[test]
    fn greedy_reductions() {
        let b = GaussianBelief::new(DVector::from_vec(vec![0.2, 0.5, 0.1]), DMatrix::zeros(3, 3)).unwrap();
        let arms = Arms::Gaussian((0..3).map(|i| GaussianArmModel::direct(3, i, 1.0)).collect());
        let idx = arc_index(&gauss(b.clone()), &arms, &ArcConfig::default()).unwrap();
        assert_eq!(idx.alpha, idx.f);
        assert_eq!(idx.lambda_used, 1e-8);
        assert_eq!(arc_index_step(&idx), 1);

        let b = GaussianBelief::isotropic(3, 0.0, 2.0);
        let cfg = ArcConfig { horizon: Some(1), ..Default::default() };
        let idx = arc_index(&gauss(b), &arms, &cfg).unwrap();
        assert_eq!(idx.alpha, idx.f);
    }

    #[test]
    fn finite_horizon_weight_is_partial_geometric_sum() {
        let cfg = ArcConfig { beta: 0.9, horizon: Some(4), ..Default::default() };
        assert_relative_eq!(cfg.premium_weight(), 0.9 + 0.81 + 0.729, epsilon = 1e-14);
        let inf = ArcConfig { beta: 0.9, ..Default::default() };
        assert_relative_eq!(inf.premium_weight(), 9.0, epsilon = 1e-14);
    }

    #[test]
    fn selection_rule() {
        let u = [0.2, 0.3, 0.5];
        assert_eq!(select_arm(&u, 0.45), 1);
        assert_eq!(select_arm(&u, 0.0), 0);
        assert_eq!(select_arm(&[0.0, 1.0], 0.0), 0);
        assert_eq!(select_arm(&u, 0.2), 0);
        assert_eq!(select_arm(&u, 0.999_999), 2);
        assert_eq!(select_arm(&[0.3, 0.3, 0.0], 0.99), 1);
        assert_eq!(argmax(&[1.0, 2.0, 2.0]), 1);
    }

    #[test]
    fn zero_premium_reduces_to_boltzmann() {
        let b = GaussianBelief::new(DVector::from_vec(vec![0.2, 0.5]), DMatrix::zeros(2, 2)).unwrap();
        let arms = Arms::Gaussian(vec![GaussianArmModel::direct(2, 0, 1.0), GaussianArmModel::direct(2, 1, 1.0)]);
        let idx = arc_index_at(&gauss(b), &arms, &ArcConfig::default(), 0.3).unwrap();
        let (u, _) = arc_step(&idx, 0.1).unwrap();
        assert_eq!(u, smoothmax::nu(&[0.2, 0.5], 0.3).unwrap());
    }

    #[test]
    fn informative_toy_prefers_informative_arm() {
        // arm 1 reveals both coordinates, arm 2 only its own; f = (0, 0.01)
        let b = GaussianBelief::new(DVector::from_vec(vec![0.0, 0.01]), DMatrix::identity(2, 2)).unwrap();
        let info = GaussianArmModel::new(
            DMatrix::identity(2, 2),
            DVector::from_vec(vec![1.0, 1.0]),
            DVector::from_vec(vec![1.0, 0.0]),
            RewardMap::Identity,
        )
        .unwrap();
        let arms = Arms::Gaussian(vec![info, GaussianArmModel::direct(2, 1, 1.0)]);
        let cfg = ArcConfig { beta: 0.9, rho: 5.0, ..Default::default() };
        let idx = arc_index(&gauss(b), &arms, &cfg).unwrap();
        assert_eq!(idx.path, PremiumPath::InformativeArm);
        assert!(cfg.premium_weight() * (idx.l[0] - idx.l[1]) > 0.01);
        assert_eq!(arc_index_step(&idx), 0);
    }

    #[test]
    fn count_family_premium() {
        use crate::belief::BetaBelief;
        let b = Belief::Beta(BetaBelief::new(vec![0.5, 0.5], vec![0.5, 0.5]).unwrap());
        let arms = Arms::Binomial(vec![1, 1]);
        let idx = arc_index_at(&b, &arms, &ArcConfig::default(), 1.0).unwrap();
        assert_eq!(idx.path, PremiumPath::Generic);
        // sigma_sq = d^2 m (1-m) / ((1+d)(1+d)) = 0.25 * 0.25 / 2.25, eta = 1/4
        let expect = 0.5 * 0.25 * 0.0625 / 2.25;
        assert_relative_eq!(idx.l[0], expect, epsilon = 1e-15);
        assert_eq!(idx.f.as_slice(), &[0.5, 0.5]);
    }

    #[test]
    fn rejects_bad_config() {
        let b = gauss(GaussianBelief::isotropic(1, 0.0, 1.0));
        let arms = Arms::Gaussian(vec![GaussianArmModel::direct(1, 0, 1.0)]);
        for cfg in [
            ArcConfig { beta: 1.0, ..Default::default() },
            ArcConfig { rho: 0.0, ..Default::default() },
            ArcConfig { kappa: 3.0, ..Default::default() },
            ArcConfig { horizon: Some(0), ..Default::default() },
        ] {
            assert!(arc_index(&b, &arms, &cfg).is_err());
        }
        assert!(arc_index_at(&b, &arms, &ArcConfig::default(), -1.0).is_err());
    }

    proptest! {
        #[test]
        fn scale_covariance(seed in 0u64..200, scale in 0.1..10.0f64) {
            use rand::SeedableRng;
            use rand_distr::{Distribution, StandardNormal};
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
            let k = 3;
            let m = DVector::from_fn(k, |_, _| -> f64 { StandardNormal.sample(&mut rng) });
            let b = GaussianBelief::isotropic(k, 0.0, 0.5);
            let b = GaussianBelief { m, ..b };
            let arms: Vec<_> = (0..k).map(|i| GaussianArmModel::direct(k, i, 1.0)).collect();
            let scaled: Vec<_> = arms.iter().cloned().map(|mut a| { a.reward = RewardMap::Affine { scale, offset: 0.0 }; a }).collect();
            let cfg = ArcConfig::default();
            let lam = 0.4;
            let i1 = arc_index_at(&gauss(b.clone()), &Arms::Gaussian(arms), &cfg, lam).unwrap();
            let i2 = arc_index_at(&gauss(b), &Arms::Gaussian(scaled), &cfg, lam * scale).unwrap();
            let (u1, _) = arc_step(&i1, 0.5).unwrap();
            let (u2, _) = arc_step(&i2, 0.5).unwrap();
            for j in 0..k {
                prop_assert!((u1[j] - u2[j]).abs() < 1e-10);
            }
        }

        #[test]
        fn alpha_monotone_in_beta(seed in 0u64..200, b1 in 0.1..0.95f64, gap in 0.0..0.04f64) {
            use rand::SeedableRng;
            use rand_distr::{Distribution, StandardNormal};
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
            let k = 4;
            let m = DVector::from_fn(k, |_, _| -> f64 { StandardNormal.sample(&mut rng) });
            let b = GaussianBelief { m, d: DMatrix::identity(k, k) * 0.3 };
            let arms = Arms::Gaussian((0..k).map(|i| GaussianArmModel::direct(k, i, 2.0)).collect());
            let lo = arc_index(&gauss(b.clone()), &arms, &ArcConfig { beta: b1, ..Default::default() }).unwrap();
            let hi = arc_index(&gauss(b), &arms, &ArcConfig { beta: b1 + gap, ..Default::default() }).unwrap();
            for i in 0..k {
                prop_assert!(lo.l[i] >= 0.0);
                prop_assert!(hi.alpha[i] >= lo.alpha[i] - 1e-12);
            }
        }
    }
}
