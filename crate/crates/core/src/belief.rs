//! Conjugate posterior states and their one-step dynamics.
//!
//! Three families are supported:
//!
//! * Gaussian: `theta ~ N(m, d)` observed through linear Gaussian channels
//!   `Y ~ N(c^T theta, P^{-1})` with diagonal precision `P`.
//! * Beta-Binomial: coordinate `j` has posterior `Beta(m_j / d_j, (1 - m_j) / d_j)`.
//! * Gamma-Poisson: coordinate `j` has posterior `Gamma(m_j / d_j, 1 / d_j)` in
//!   (shape, rate) form.
//!
//! Alongside each update the module exposes the expected one-step drift of the
//! posterior parameters (`mu`, `b`) and the covariance of the mean increment
//! (`sigma_sq`). These feed the learning premium of the ARC index.

use std::sync::Arc;

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::error::{invalid, numeric, BanditError, Result};

/// Uncertainty below this is treated as fully resolved for count families.
pub const COUNT_D_FLOOR: f64 = 1e-12;

/// Default cap on the Poisson mean-increment standard deviation used by the
/// ARC premium.
pub const DEFAULT_SIGMA_CAP: f64 = 1e3;

// ---------------------------------------------------------------------------
// Gaussian family
// ---------------------------------------------------------------------------

/// Posterior `N(m, d)` over a `p`-dimensional parameter.
#[derive(Debug, Clone, PartialEq)]
pub struct GaussianBelief {
    pub m: DVector<f64>,
    pub d: DMatrix<f64>,
}

impl GaussianBelief {
    pub fn new(m: DVector<f64>, d: DMatrix<f64>) -> Result<Self> {
        let p = m.len();
        if d.nrows() != p || d.ncols() != p {
            return Err(invalid(format!(
                "covariance is {}x{} but mean has length {p}",
                d.nrows(),
                d.ncols()
            )));
        }
        if m.iter().chain(d.iter()).any(|x| !x.is_finite()) {
            return Err(invalid("belief contains non-finite entries"));
        }
        for i in 0..p {
            for j in 0..i {
                if (d[(i, j)] - d[(j, i)]).abs() > 1e-10 * (1.0 + d[(i, j)].abs()) {
                    return Err(invalid("covariance is not symmetric"));
                }
            }
        }
        Ok(Self { m, d: sanitize_covariance(d) })
    }

    /// `N(mean * 1, var * I)`.
    pub fn isotropic(p: usize, mean: f64, var: f64) -> Self {
        Self {
            m: DVector::from_element(p, mean),
            d: DMatrix::from_diagonal_element(p, p, var),
        }
    }

    pub fn dim(&self) -> usize {
        self.m.len()
    }

    /// Operator norm of the covariance.
    pub fn op_norm(&self) -> f64 {
        op_norm(&self.d)
    }

    pub fn is_diagonal(&self) -> bool {
        is_diagonal(&self.d)
    }
}

pub(crate) fn is_diagonal(d: &DMatrix<f64>) -> bool {
    let p = d.nrows();
    (0..p).all(|j| (0..p).all(|i| i == j || d[(i, j)] == 0.0))
}

/// Largest absolute eigenvalue of a symmetric matrix.
pub fn op_norm(d: &DMatrix<f64>) -> f64 {
    if d.is_empty() {
        return 0.0;
    }
    if is_diagonal(d) {
        return d.diagonal().iter().fold(0.0, |acc, x| acc.max(x.abs()));
    }
    SymmetricEigen::new(d.clone())
        .eigenvalues
        .iter()
        .fold(0.0, |acc, x| acc.max(x.abs()))
}

/// Symmetrise and clamp negative eigenvalues to zero.
pub(crate) fn sanitize_covariance(d: DMatrix<f64>) -> DMatrix<f64> {
    let sym = (&d + d.transpose()) * 0.5;
    if sym.is_empty() || is_diagonal(&sym) {
        return sym.map(|x| x.max(0.0));
    }
    if sym.clone().cholesky().is_some() {
        return sym;
    }
    let eig = SymmetricEigen::new(sym);
    let vals = eig.eigenvalues.map(|x| x.max(0.0));
    let q = &eig.eigenvectors;
    let out = q * DMatrix::from_diagonal(&vals) * q.transpose();
    (&out + out.transpose()) * 0.5
}

/// A user-supplied scalar reward `r` with optional first and second derivatives.
#[derive(Clone)]
pub struct CustomReward {
    pub value: Arc<dyn Fn(f64) -> f64 + Send + Sync>,
    pub first: Option<Arc<dyn Fn(f64) -> f64 + Send + Sync>>,
    pub second: Option<Arc<dyn Fn(f64) -> f64 + Send + Sync>>,
}

impl std::fmt::Debug for CustomReward {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("CustomReward")
            .field("first", &self.first.is_some())
            .field("second", &self.second.is_some())
            .finish()
    }
}

impl CustomReward {
    pub fn new<R, D1, D2>(value: R, first: D1, second: D2) -> Self
    where
        R: Fn(f64) -> f64 + Send + Sync + 'static,
        D1: Fn(f64) -> f64 + Send + Sync + 'static,
        D2: Fn(f64) -> f64 + Send + Sync + 'static,
    {
        Self {
            value: Arc::new(value),
            first: Some(Arc::new(first)),
            second: Some(Arc::new(second)),
        }
    }
}

/// Scalar reward applied to the projected observation `x = w^T y`.
#[derive(Debug, Clone, Default)]
pub enum RewardMap {
    #[default]
    Identity,
    Affine {
        scale: f64,
        offset: f64,
    },
    Custom(CustomReward),
}

impl RewardMap {
    pub fn value(&self, x: f64) -> f64 {
        match self {
            RewardMap::Identity => x,
            RewardMap::Affine { scale, offset } => scale * x + offset,
            RewardMap::Custom(c) => (c.value)(x),
        }
    }

    /// `(scale, offset)` when the map is affine.
    pub fn as_affine(&self) -> Option<(f64, f64)> {
        match self {
            RewardMap::Identity => Some((1.0, 0.0)),
            RewardMap::Affine { scale, offset } => Some((*scale, *offset)),
            RewardMap::Custom(_) => None,
        }
    }
}

/// Observation channel of one arm in the Gaussian family.
///
/// Choosing the arm reveals `Y ~ N(c^T theta, diag(precision)^{-1})`; a zero
/// precision entry means that component is not observed. The collected reward
/// is `reward(reward_weights^T Y)`.
#[derive(Debug, Clone)]
pub struct GaussianArmModel {
    pub c: DMatrix<f64>,
    pub precision: DVector<f64>,
    pub reward_weights: DVector<f64>,
    pub reward: RewardMap,
}

impl GaussianArmModel {
    pub fn new(
        c: DMatrix<f64>,
        precision: DVector<f64>,
        reward_weights: DVector<f64>,
        reward: RewardMap,
    ) -> Result<Self> {
        let q = c.ncols();
        if precision.len() != q || reward_weights.len() != q {
            return Err(invalid(format!(
                "arm has {q} observation components but {} precisions and {} reward weights",
                precision.len(),
                reward_weights.len()
            )));
        }
        if precision.iter().any(|&x| !(x >= 0.0) || !x.is_finite()) {
            return Err(invalid("precision entries must be finite and non-negative"));
        }
        for k in 0..q {
            if reward_weights[k] != 0.0 && precision[k] == 0.0 {
                return Err(invalid(format!(
                    "reward reads component {k} which is never observed"
                )));
            }
        }
        Ok(Self { c, precision, reward_weights, reward })
    }

    /// Single-component arm observing `theta_coord` with the given precision,
    /// paid the observation itself.
    pub fn direct(p: usize, coord: usize, precision: f64) -> Self {
        let mut c = DMatrix::zeros(p, 1);
        c[(coord, 0)] = 1.0;
        Self {
            c,
            precision: DVector::from_element(1, precision),
            reward_weights: DVector::from_element(1, 1.0),
            reward: RewardMap::Identity,
        }
    }

    /// Single-component arm observing `loading^T theta`.
    pub fn linear(loading: DVector<f64>, precision: f64) -> Self {
        let p = loading.len();
        Self {
            c: DMatrix::from_column_slice(p, 1, loading.as_slice()),
            precision: DVector::from_element(1, precision),
            reward_weights: DVector::from_element(1, 1.0),
            reward: RewardMap::Identity,
        }
    }

    /// Arm that observes nothing and always pays `value`.
    pub fn constant(p: usize, value: f64) -> Self {
        Self {
            c: DMatrix::zeros(p, 0),
            precision: DVector::zeros(0),
            reward_weights: DVector::zeros(0),
            reward: RewardMap::Affine { scale: 0.0, offset: value },
        }
    }

    /// Builds an arm from a channel with full (non-diagonal) noise precision
    /// `p_tilde` by rotating into its eigenbasis. Returns the arm and the
    /// orthogonal matrix `Q`; raw observations must be mapped as `y = Q^T y~`.
    pub fn from_full_precision(
        c_tilde: DMatrix<f64>,
        p_tilde: DMatrix<f64>,
        reward_weights: DVector<f64>,
        reward: RewardMap,
    ) -> Result<(Self, DMatrix<f64>)> {
        let q = c_tilde.ncols();
        if p_tilde.nrows() != q || p_tilde.ncols() != q {
            return Err(invalid("precision matrix does not match observation dimension"));
        }
        let eig = SymmetricEigen::new((&p_tilde + p_tilde.transpose()) * 0.5);
        if eig.eigenvalues.iter().any(|&x| x <= 0.0) {
            return Err(invalid("full precision matrix must be positive definite"));
        }
        let rot = eig.eigenvectors;
        let c = &c_tilde * &rot;
        let w = rot.transpose() * reward_weights;
        let arm = Self::new(c, eig.eigenvalues, w, reward)?;
        Ok((arm, rot))
    }

    pub fn obs_dim(&self) -> usize {
        self.c.ncols()
    }

    pub fn param_dim(&self) -> usize {
        self.c.nrows()
    }

    pub fn observed(&self) -> Vec<usize> {
        (0..self.obs_dim()).filter(|&k| self.precision[k] > 0.0).collect()
    }

    /// Loading of the projected reward signal on `theta`, `c w`.
    pub fn reward_loading(&self) -> DVector<f64> {
        &self.c * &self.reward_weights
    }

    /// Noise variance of the projected reward signal.
    pub fn reward_noise_var(&self) -> f64 {
        (0..self.obs_dim())
            .filter(|&k| self.reward_weights[k] != 0.0)
            .map(|k| self.reward_weights[k].powi(2) / self.precision[k])
            .sum()
    }
}

/// Expected drift and increment covariance of a one-step posterior update.
#[derive(Debug, Clone, PartialEq)]
pub struct DynamicsCoefficients {
    /// Expected change of the mean, length `p`.
    pub mu: DVector<f64>,
    /// Expected change of the uncertainty parameter, flattened column-major.
    pub b: DVector<f64>,
    /// Covariance of the mean increment, `p x p`.
    pub sigma_sq: DMatrix<f64>,
}

impl DynamicsCoefficients {
    pub fn zero(p: usize, d_dim: usize) -> Self {
        Self {
            mu: DVector::zeros(p),
            b: DVector::zeros(d_dim),
            sigma_sq: DMatrix::zeros(p, p),
        }
    }
}

struct ObservedBlock {
    idx: Vec<usize>,
    c: DMatrix<f64>,
    /// `d c_O`
    dc: DMatrix<f64>,
    /// `(P_O^{-1} + c_O^T d c_O)^{-1}`
    s_inv: DMatrix<f64>,
}

fn observed_block(belief: &GaussianBelief, arm: &GaussianArmModel) -> Result<Option<ObservedBlock>> {
    let p = belief.dim();
    if arm.param_dim() != p {
        return Err(invalid(format!(
            "arm loads {} parameters but belief has dimension {p}",
            arm.param_dim()
        )));
    }
    let idx = arm.observed();
    if idx.is_empty() {
        return Ok(None);
    }
    let c = arm.c.select_columns(&idx);
    let dc = &belief.d * &c;
    let mut s = c.transpose() * &dc;
    for (a, &k) in idx.iter().enumerate() {
        s[(a, a)] += 1.0 / arm.precision[k];
    }
    let s = (&s + s.transpose()) * 0.5;
    let s_inv = match s.clone().cholesky() {
        Some(ch) => ch.inverse(),
        None => s
            .try_inverse()
            .ok_or_else(|| numeric("innovation covariance is singular"))?,
    };
    if s_inv.iter().any(|x| !x.is_finite()) {
        return Err(numeric("innovation covariance inverse is not finite"));
    }
    Ok(Some(ObservedBlock { idx, c, dc, s_inv }))
}

/// Posterior after observing `y` from `arm` (Woodbury form).
pub fn gaussian_update(
    belief: &GaussianBelief,
    arm: &GaussianArmModel,
    y: &[f64],
) -> Result<GaussianBelief> {
    if y.len() != arm.obs_dim() {
        return Err(invalid(format!(
            "observation has {} components, arm expects {}",
            y.len(),
            arm.obs_dim()
        )));
    }
    let Some(block) = observed_block(belief, arm)? else {
        return Ok(belief.clone());
    };
    let y_obs = DVector::from_iterator(block.idx.len(), block.idx.iter().map(|&k| y[k]));
    if y_obs.iter().any(|x| !x.is_finite()) {
        return Err(invalid("observation contains non-finite entries"));
    }
    let gain = &block.dc * &block.s_inv;
    let innovation = y_obs - block.c.transpose() * &belief.m;
    let m = &belief.m + &gain * innovation;
    let d = &belief.d - &gain * block.dc.transpose();
    Ok(GaussianBelief { m, d: sanitize_covariance(d) })
}

/// `mu = 0`, `b = -d c (P^{-1} + c^T d c)^{-1} c^T d`, `sigma_sq = -b`.
pub fn gaussian_dynamics(belief: &GaussianBelief, arm: &GaussianArmModel) -> Result<DynamicsCoefficients> {
    let p = belief.dim();
    let Some(block) = observed_block(belief, arm)? else {
        return Ok(DynamicsCoefficients::zero(p, p * p));
    };
    let reduction = &block.dc * &block.s_inv * block.dc.transpose();
    let reduction = (&reduction + reduction.transpose()) * 0.5;
    Ok(DynamicsCoefficients {
        mu: DVector::zeros(p),
        b: DVector::from_column_slice((-&reduction).as_slice()),
        sigma_sq: reduction,
    })
}

/// Information gain `ln det d - ln det d'` of one observation from `arm`,
/// computed as `ln det(I + P^{1/2} c^T d c P^{1/2})` so singular `d` is fine.
pub fn gaussian_log_det_reduction(belief: &GaussianBelief, arm: &GaussianArmModel) -> Result<f64> {
    let idx = arm.observed();
    if idx.is_empty() {
        return Ok(0.0);
    }
    let c = arm.c.select_columns(&idx);
    let root = DVector::from_iterator(idx.len(), idx.iter().map(|&k| arm.precision[k].sqrt()));
    let mut inner = c.transpose() * &belief.d * &c;
    for a in 0..idx.len() {
        for b in 0..idx.len() {
            inner[(a, b)] *= root[a] * root[b];
        }
        inner[(a, a)] += 1.0;
    }
    let inner = (&inner + inner.transpose()) * 0.5;
    let ch = inner
        .cholesky()
        .ok_or_else(|| numeric("information matrix is not positive definite"))?;
    Ok(2.0 * ch.l().diagonal().iter().map(|x| x.ln()).sum::<f64>())
}

// ---------------------------------------------------------------------------
// Count families
// ---------------------------------------------------------------------------

/// Per-coordinate `(m, d)` parameters shared by the Beta and Gamma families.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CountBelief {
    pub m: Vec<f64>,
    pub d: Vec<f64>,
}

impl CountBelief {
    fn check_coord(&self, j: usize) -> Result<()> {
        if j >= self.m.len() {
            return Err(invalid(format!("coordinate {j} out of range for dimension {}", self.m.len())));
        }
        Ok(())
    }

    pub fn max_norm(&self) -> f64 {
        self.d.iter().fold(0.0, |acc, x| acc.max(x.abs()))
    }

    fn with_coord(&self, j: usize, m: f64, d: f64) -> Self {
        let mut out = self.clone();
        out.m[j] = m;
        out.d[j] = d.max(COUNT_D_FLOOR);
        out
    }
}

/// Beta posterior: coordinate `j` is `Beta(m_j / d_j, (1 - m_j) / d_j)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BetaBelief(pub CountBelief);

/// Gamma posterior: coordinate `j` is `Gamma(shape m_j / d_j, rate 1 / d_j)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GammaBelief(pub CountBelief);

impl BetaBelief {
    pub fn new(m: Vec<f64>, d: Vec<f64>) -> Result<Self> {
        if m.len() != d.len() {
            return Err(invalid("Beta belief m and d differ in length"));
        }
        for (&mj, &dj) in m.iter().zip(&d) {
            if !(mj > 0.0 && mj < 1.0) {
                return Err(invalid(format!("Beta mean must lie in (0, 1), got {mj}")));
            }
            if !(dj > 0.0) || !dj.is_finite() {
                return Err(invalid(format!("Beta uncertainty must be positive, got {dj}")));
            }
        }
        Ok(Self(CountBelief { m, d }))
    }

    /// From Beta shape parameters `(a, b)` per coordinate.
    pub fn from_shapes(shapes: &[(f64, f64)]) -> Result<Self> {
        let m = shapes.iter().map(|(a, b)| a / (a + b)).collect();
        let d = shapes.iter().map(|(a, b)| 1.0 / (a + b)).collect();
        Self::new(m, d)
    }

    pub fn shapes(&self, j: usize) -> (f64, f64) {
        let CountBelief { m, d } = &self.0;
        (m[j] / d[j], (1.0 - m[j]) / d[j])
    }
}

impl GammaBelief {
    pub fn new(m: Vec<f64>, d: Vec<f64>) -> Result<Self> {
        if m.len() != d.len() {
            return Err(invalid("Gamma belief m and d differ in length"));
        }
        for (&mj, &dj) in m.iter().zip(&d) {
            if !(mj > 0.0) || !mj.is_finite() {
                return Err(invalid(format!("Gamma mean must be positive, got {mj}")));
            }
            if !(dj > 0.0) || !dj.is_finite() {
                return Err(invalid(format!("Gamma uncertainty must be positive, got {dj}")));
            }
        }
        Ok(Self(CountBelief { m, d }))
    }

    /// `(shape, rate)` of coordinate `j`.
    pub fn shape_rate(&self, j: usize) -> (f64, f64) {
        let CountBelief { m, d } = &self.0;
        (m[j] / d[j], 1.0 / d[j])
    }
}

/// Conjugate update of coordinate `j` after `y` successes out of `n` trials.
pub fn beta_binomial_update(belief: &BetaBelief, n: u64, y: u64, j: usize) -> Result<BetaBelief> {
    belief.0.check_coord(j)?;
    if y > n {
        return Err(invalid(format!("{y} successes out of {n} trials")));
    }
    let dj = belief.0.d[j];
    if n == 0 || dj <= COUNT_D_FLOOR {
        return Ok(belief.clone());
    }
    let (a, b) = belief.shapes(j);
    let (a, b) = (a + y as f64, b + (n - y) as f64);
    let total = a + b;
    Ok(BetaBelief(belief.0.with_coord(j, a / total, 1.0 / total)))
}

/// Conjugate update of coordinate `j` after a Poisson count `y` at exposure `n`.
pub fn gamma_poisson_update(belief: &GammaBelief, n: f64, y: u64, j: usize) -> Result<GammaBelief> {
    belief.0.check_coord(j)?;
    if !(n > 0.0) || !n.is_finite() {
        return Err(invalid(format!("Poisson exposure must be positive, got {n}")));
    }
    let dj = belief.0.d[j];
    if dj <= COUNT_D_FLOOR {
        return Ok(belief.clone());
    }
    let (shape, rate) = belief.shape_rate(j);
    let (shape, rate) = (shape + y as f64, rate + n);
    Ok(GammaBelief(belief.0.with_coord(j, shape / rate, 1.0 / rate)))
}

/// Drift of the count-family uncertainty: `-n d^2 / (1 + n d)`.
pub fn count_d_drift(d: f64, n: f64) -> f64 {
    -n * d * d / (1.0 + n * d)
}

fn count_dynamics(p: usize, j: usize, d: f64, n: f64, var: f64) -> DynamicsCoefficients {
    let mut out = DynamicsCoefficients::zero(p, p);
    if d > COUNT_D_FLOOR && n > 0.0 {
        out.b[j] = count_d_drift(d, n);
        out.sigma_sq[(j, j)] = var;
    }
    out
}

/// Dynamics of a Binomial(n, theta_j) observation under a Beta belief.
///
/// The mean increment is `d (y - n m) / (1 + n d)` and the Beta-Binomial
/// predictive variance of `y` is `n m (1 - m) (1 + n d) / (1 + d)`.
pub fn beta_dynamics(belief: &BetaBelief, n: u64, j: usize) -> Result<DynamicsCoefficients> {
    belief.0.check_coord(j)?;
    let (m, d, n) = (belief.0.m[j], belief.0.d[j], n as f64);
    let var = d * d * n * m * (1.0 - m) / ((1.0 + n * d) * (1.0 + d));
    Ok(count_dynamics(belief.0.m.len(), j, d, n, var))
}

/// Dynamics of a Poisson(n theta_j) observation under a Gamma belief, with the
/// increment standard deviation capped at `sigma_cap`.
pub fn gamma_dynamics(belief: &GammaBelief, n: f64, j: usize, sigma_cap: f64) -> Result<DynamicsCoefficients> {
    belief.0.check_coord(j)?;
    if !(n > 0.0) {
        return Err(invalid(format!("Poisson exposure must be positive, got {n}")));
    }
    let (m, d) = (belief.0.m[j], belief.0.d[j]);
    let var = (d * d * n * m / (1.0 + n * d)).min(sigma_cap * sigma_cap);
    Ok(count_dynamics(belief.0.m.len(), j, d, n, var))
}

// ---------------------------------------------------------------------------
// Serialisation
// ---------------------------------------------------------------------------

/// Any supported posterior, serialised as `{family, m, d}`.
#[derive(Debug, Clone, PartialEq)]
pub enum Belief {
    Gaussian(GaussianBelief),
    Beta(BetaBelief),
    Gamma(GammaBelief),
}

#[derive(Serialize, Deserialize)]
#[serde(untagged)]
enum WireD {
    Matrix(Vec<Vec<f64>>),
    Vector(Vec<f64>),
}

#[derive(Serialize, Deserialize)]
struct WireBelief {
    family: String,
    m: Vec<f64>,
    d: WireD,
}

impl Belief {
    /// Operator norm (Gaussian) or max-coordinate norm (count families).
    pub fn uncertainty_norm(&self) -> f64 {
        match self {
            Belief::Gaussian(g) => g.op_norm(),
            Belief::Beta(b) => b.0.max_norm(),
            Belief::Gamma(g) => g.0.max_norm(),
        }
    }

    pub fn mean(&self) -> Vec<f64> {
        match self {
            Belief::Gaussian(g) => g.m.as_slice().to_vec(),
            Belief::Beta(b) => b.0.m.clone(),
            Belief::Gamma(g) => g.0.m.clone(),
        }
    }

    pub fn family(&self) -> &'static str {
        match self {
            Belief::Gaussian(_) => "gaussian",
            Belief::Beta(_) => "beta",
            Belief::Gamma(_) => "gamma",
        }
    }
}

impl Serialize for Belief {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        let wire = match self {
            Belief::Gaussian(g) => {
                let p = g.dim();
                WireBelief {
                    family: "gaussian".into(),
                    m: g.m.as_slice().to_vec(),
                    d: WireD::Matrix((0..p).map(|i| g.d.row(i).iter().copied().collect()).collect()),
                }
            }
            Belief::Beta(b) => WireBelief { family: "beta".into(), m: b.0.m.clone(), d: WireD::Vector(b.0.d.clone()) },
            Belief::Gamma(g) => WireBelief { family: "gamma".into(), m: g.0.m.clone(), d: WireD::Vector(g.0.d.clone()) },
        };
        wire.serialize(s)
    }
}

impl<'de> Deserialize<'de> for Belief {
    fn deserialize<D: serde::Deserializer<'de>>(de: D) -> std::result::Result<Self, D::Error> {
        use serde::de::Error;
        let wire = WireBelief::deserialize(de)?;
        let out: Result<Belief> = match (wire.family.as_str(), wire.d) {
            ("gaussian", WireD::Matrix(rows)) => {
                let p = wire.m.len();
                if rows.len() != p || rows.iter().any(|r| r.len() != p) {
                    Err(invalid("Gaussian covariance must be p x p"))
                } else {
                    let d = DMatrix::from_fn(p, p, |i, j| rows[i][j]);
                    GaussianBelief::new(DVector::from_vec(wire.m), d).map(Belief::Gaussian)
                }
            }
            ("beta", WireD::Vector(d)) => BetaBelief::new(wire.m, d).map(Belief::Beta),
            ("gamma", WireD::Vector(d)) => GammaBelief::new(wire.m, d).map(Belief::Gamma),
            (fam, _) => Err(BanditError::InvalidArgument(format!("unknown or malformed belief family {fam}"))),
        };
        out.map_err(D::Error::custom)
    }
}
