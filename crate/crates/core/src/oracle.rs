//! Exact benchmark for the one-and-a-half-armed bandit.
//!
//! Arm 1 pays `N(theta, 1)` with `theta ~ N(m, d)`; arm 2 pays 1. Under the
//! entropy-regularised objective the value function solves
//!
//! ```text
//! V(m, d) = lambda * ln( exp(C1 / lambda) + exp(C2 / lambda) )
//! C1 = m + beta * E V(m + d (1 + d)^{-1/2} Z, d / (1 + d))
//! C2 = 1 + beta * V(m, d)
//! ```
//!
//! which is solved by Monte-Carlo value iteration on an `(m, d)` grid whose
//! `d` axis is the deterministic orbit `d -> d / (1 + d)`, so only `m` needs
//! interpolation.

use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, BanditError, Result};

/// Grid layout. The computed grid extends the report window by `pad_sd`
/// one-step standard deviations in `m` and continues the `d` orbit down to
/// `d_tail`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    pub m_min: f64,
    pub m_max: f64,
    pub m_step: f64,
    pub d_min: f64,
    pub d_max: f64,
    pub d_tail: f64,
    pub pad_sd: f64,
}

impl Default for GridSpec {
    fn default() -> Self {
        Self { m_min: 0.0, m_max: 2.0, m_step: 0.02, d_min: 0.01, d_max: 0.05, d_tail: 1e-3, pad_sd: 6.0 }
    }
}

impl GridSpec {
    fn validate(&self) -> Result<()> {
        if !(self.m_step > 0.0) || !(self.m_max > self.m_min) {
            return Err(invalid("m grid needs m_max > m_min and a positive step"));
        }
        if !(self.d_max >= 0.0) || !(self.d_min >= 0.0) || self.d_min > self.d_max {
            return Err(invalid("d window needs 0 <= d_min <= d_max"));
        }
        if !(self.pad_sd >= 0.0) {
            return Err(invalid("padding must be non-negative"));
        }
        if self.d_max > 0.0 && !(self.d_tail > 0.0) {
            return Err(invalid("d tail must be positive"));
        }
        Ok(())
    }

    /// `d_max, d_max / (1 + d_max), ...` down to `min(d_min, d_tail)`.
    pub fn d_orbit(&self) -> Vec<f64> {
        if self.d_max == 0.0 {
            return vec![0.0];
        }
        let stop = self.d_min.min(self.d_tail);
        let inv = 1.0 / self.d_max;
        let mut out = Vec::new();
        let mut k = 0usize;
        loop {
            // closed form avoids accumulating round-off along the orbit
            let d = 1.0 / (inv + k as f64);
            if d < stop * (1.0 - 1e-12) {
                break;
            }
            out.push(d);
            k += 1;
        }
        out
    }
}

/// Value-iteration settings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OracleConfig {
    pub lambda: f64,
    pub beta: f64,
    pub mc_samples: usize,
    pub tol: f64,
    pub max_iters: usize,
    pub seed: u64,
    pub grid: GridSpec,
}

impl Default for OracleConfig {
    fn default() -> Self {
        Self { lambda: 0.1, beta: 0.99, mc_samples: 1000, tol: 1e-6, max_iters: 10_000, seed: 0, grid: GridSpec::default() }
    }
}

/// Converged value and decision surfaces. `values[k][a]` is the node
/// `(m_axis[a], d_axis[k])`; both axes ascend, and the `d` transition maps
/// level `k` to level `k - 1` (the smallest level maps to itself).
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ValueGrid {
    pub m_axis: Vec<f64>,
    pub d_axis: Vec<f64>,
    pub values: Vec<Vec<f64>>,
    pub probs: Vec<Vec<f64>>,
    /// Per-node Monte-Carlo standard error of the value.
    pub std_err: Vec<Vec<f64>>,
    pub lambda: f64,
    pub beta: f64,
    pub mc_samples: usize,
    pub iterations: usize,
    pub sup_delta: f64,
    /// Draws landing outside the `m` grid, handled by linear extrapolation.
    pub out_of_range: u64,
    pub seed: u64,
    pub grid: GridSpec,
}

/// Fixed antithetic normal draws with unit second moment.
fn draws(n: usize, seed: u64) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut z: Vec<f64> = Vec::with_capacity(n);
    for _ in 0..n / 2 {
        let x: f64 = StandardNormal.sample(&mut rng);
        z.push(x);
        z.push(-x);
    }
    if n % 2 == 1 {
        z.push(0.0);
    }
    let second = z.iter().map(|x| x * x).sum::<f64>() / n as f64;
    if second > 0.0 {
        let s = second.sqrt();
        z.iter_mut().for_each(|x| *x /= s);
    }
    z
}

/// Row-sparse linear map `V -> E V(m_a + s Z)`.
struct Operator {
    offsets: Vec<usize>,
    cols: Vec<u32>,
    weights: Vec<f64>,
}

impl Operator {
    fn build(m_axis: &[f64], step: f64, shift: f64, z: &[f64], out_of_range: &mut u64) -> Self {
        let nm = m_axis.len();
        let lo = m_axis[0];
        let hi = m_axis[nm - 1];
        let n = z.len() as f64;
        let mut offsets = vec![0];
        let mut cols = Vec::new();
        let mut weights = Vec::new();
        let mut scratch = vec![0.0; nm];
        let mut seen = vec![false; nm];
        let mut touched = Vec::new();
        for &m in m_axis {
            if shift == 0.0 || nm == 1 {
                let a = ((m - lo) / step).round() as usize;
                cols.push(a as u32);
                weights.push(1.0);
                offsets.push(cols.len());
                continue;
            }
            for &zi in z {
                let x = m + shift * zi;
                if x < lo || x > hi {
                    *out_of_range += 1;
                }
                let idx = (((x - lo) / step).floor() as isize).clamp(0, nm as isize - 2) as usize;
                let t = (x - (lo + idx as f64 * step)) / step;
                for (j, w) in [(idx, 1.0 - t), (idx + 1, t)] {
                    if !seen[j] {
                        seen[j] = true;
                        touched.push(j);
                    }
                    scratch[j] += w / n;
                }
            }
            touched.sort_unstable();
            for &j in &touched {
                cols.push(j as u32);
                weights.push(scratch[j]);
                scratch[j] = 0.0;
                seen[j] = false;
            }
            touched.clear();
            offsets.push(cols.len());
        }
        Self { offsets, cols, weights }
    }

    fn apply_row(&self, a: usize, v: &[f64]) -> f64 {
        let (s, e) = (self.offsets[a], self.offsets[a + 1]);
        self.cols[s..e].iter().zip(&self.weights[s..e]).map(|(&j, w)| w * v[j as usize]).sum()
    }
}

fn log_add_exp(a: f64, b: f64, lambda: f64) -> f64 {
    let top = a.max(b);
    top + lambda * (((a - top) / lambda).exp() + ((b - top) / lambda).exp()).ln()
}

fn logistic(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

/// Monte-Carlo value iteration for the regularised one-and-a-half-armed bandit.
pub fn value_iterate(config: &OracleConfig) -> Result<ValueGrid> {
    let OracleConfig { lambda, beta, mc_samples, tol, max_iters, seed, ref grid } = *config;
    grid.validate()?;
    if !(lambda > 0.0) || !(beta > 0.0 && beta < 1.0) || mc_samples == 0 || !(tol > 0.0) || max_iters == 0 {
        return Err(invalid("oracle needs lambda > 0, beta in (0, 1), samples >= 1, tol > 0, max_iters >= 1"));
    }
    let d_axis = grid.d_orbit();
    let shifts: Vec<f64> = d_axis.iter().map(|d| d / (1.0 + d).sqrt()).collect();
    let pad = grid.pad_sd * shifts[0];
    let h = grid.m_step;
    let lo_cells = (pad / h - 1e-9).ceil().max(0.0);
    let n_core = ((grid.m_max - grid.m_min) / h).round() as usize;
    let lo = grid.m_min - lo_cells * h;
    let nm = n_core + 2 * lo_cells as usize + 1;
    let m_axis: Vec<f64> = (0..nm).map(|a| lo + a as f64 * h).collect();
    let z = draws(mc_samples, seed);

    let mut out_of_range = 0u64;
    let ops: Vec<Operator> = shifts.iter().map(|&s| Operator::build(&m_axis, h, s, &z, &mut out_of_range)).collect();
    if out_of_range > 0 {
        log::info!("{out_of_range} transition draws fall outside the m grid and are extrapolated linearly");
    }

    let levels = d_axis.len();
    let next_of = |k: usize| (k + 1).min(levels - 1);
    let static_v: Vec<f64> = m_axis.iter().map(|&m| log_add_exp(m, 1.0, lambda) / (1.0 - beta)).collect();
    let mut v = vec![static_v; levels];
    let mut iterations = 0;
    let mut sup_delta = f64::INFINITY;
    while iterations < max_iters {
        let new: Vec<Vec<f64>> = (0..levels)
            .into_par_iter()
            .map(|k| {
                let next = &v[next_of(k)];
                (0..nm)
                    .map(|a| {
                        let c1 = m_axis[a] + beta * ops[k].apply_row(a, next);
                        let c2 = 1.0 + beta * v[k][a];
                        log_add_exp(c1, c2, lambda)
                    })
                    .collect()
            })
            .collect();
        sup_delta = new
            .iter()
            .zip(&v)
            .flat_map(|(a, b)| a.iter().zip(b).map(|(x, y)| (x - y).abs()))
            .fold(0.0, f64::max);
        v = new;
        iterations += 1;
        if sup_delta < tol {
            break;
        }
    }
    if !(sup_delta < tol) {
        return Err(BanditError::NotConverged { iterations, sup_delta });
    }

    let n = z.len() as f64;
    let (probs, std_err): (Vec<Vec<f64>>, Vec<Vec<f64>>) = (0..levels)
        .into_par_iter()
        .map(|k| {
            let next = &v[next_of(k)];
            let mut p = Vec::with_capacity(nm);
            let mut se = Vec::with_capacity(nm);
            for a in 0..nm {
                let c1 = m_axis[a] + beta * ops[k].apply_row(a, next);
                let c2 = 1.0 + beta * v[k][a];
                p.push(logistic((c1 - c2) / lambda));
                // spread of the continuation value across draws
                let vals: Vec<f64> = z.iter().map(|&zi| interp(&m_axis, next, m_axis[a] + shifts[k] * zi)).collect();
                let mean = vals.iter().sum::<f64>() / n;
                let var = vals.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0).max(1.0);
                se.push(beta * (var / n).sqrt() / (1.0 - beta));
            }
            (p, se)
        })
        .unzip();

    // report with d ascending
    let rev = |mut x: Vec<Vec<f64>>| {
        x.reverse();
        x
    };
    let mut d_axis = d_axis;
    d_axis.reverse();
    Ok(ValueGrid {
        m_axis,
        d_axis,
        values: rev(v),
        probs: rev(probs),
        std_err: rev(std_err),
        lambda,
        beta,
        mc_samples,
        iterations,
        sup_delta,
        out_of_range,
        seed,
        grid: grid.clone(),
    })
}

/// Piecewise-linear interpolation with linear extrapolation past the ends.
fn interp(axis: &[f64], v: &[f64], x: f64) -> f64 {
    let n = axis.len();
    if n == 1 {
        return v[0];
    }
    let h = axis[1] - axis[0];
    let idx = (((x - axis[0]) / h).floor() as isize).clamp(0, n as isize - 2) as usize;
    let t = (x - axis[idx]) / h;
    (1.0 - t) * v[idx] + t * v[idx + 1]
}


impl ValueGrid {
    /// Largest change produced by one more synchronous Bellman sweep with the
    /// same draws.
    pub fn bellman_residual(&self) -> f64 {
        let z = draws(self.mc_samples, self.seed);
        let h = self.grid.m_step;
        let mut unused = 0;
        let mut worst: f64 = 0.0;
        for (k, &d) in self.d_axis.iter().enumerate() {
            let next = &self.values[k.saturating_sub(1)];
            let op = Operator::build(&self.m_axis, h, d / (1.0 + d).sqrt(), &z, &mut unused);
            for (a, &m) in self.m_axis.iter().enumerate() {
                let c1 = m + self.beta * op.apply_row(a, next);
                let new = log_add_exp(c1, 1.0 + self.beta * self.values[k][a], self.lambda);
                worst = worst.max((new - self.values[k][a]).abs());
            }
        }
        worst
    }

    /// Indices of `d` levels inside the report window.
    pub fn report_levels(&self) -> Vec<usize> {
        let (lo, hi) = (self.grid.d_min * (1.0 - 1e-9), self.grid.d_max * (1.0 + 1e-9));
        (0..self.d_axis.len()).filter(|&k| self.d_axis[k] >= lo && self.d_axis[k] <= hi).collect()
    }

    /// Indices of `m` nodes inside the report window.
    pub fn report_nodes(&self) -> Vec<usize> {
        let eps = 1e-9 * self.grid.m_step;
        (0..self.m_axis.len())
            .filter(|&a| self.m_axis[a] >= self.grid.m_min - eps && self.m_axis[a] <= self.grid.m_max + eps)
            .collect()
    }
}

/// Value and arm-1 probability of the ARC policy on the one-and-a-half-armed
/// bandit, treating the index as a stationary reward.
pub fn arc_closed_form(m: f64, d: f64, lambda: f64, beta: f64) -> (f64, f64) {
    let nu1 = logistic((m - 1.0) / lambda);
    let alpha1 = m + beta / (1.0 - beta) / (2.0 * lambda) * nu1 * (1.0 - nu1) * d * d / (1.0 + d);
    let value = log_add_exp(alpha1, 1.0, lambda) / (1.0 - beta);
    (value, logistic((alpha1 - 1.0) / lambda))
}

/// One node of the comparison. `rel_err` and `p_diff` are signed (ARC minus exact).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonRow {
    pub m: f64,
    pub d: f64,
    pub v_exact: f64,
    pub v_arc: f64,
    pub rel_err: f64,
    pub p_exact: f64,
    pub p_arc: f64,
    pub p_diff: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonSummary {
    pub max_rel_err: f64,
    pub mean_rel_err: f64,
    pub max_p_diff: f64,
}

#[derive(Debug, Clone)]
pub struct ComparisonReport {
    pub rows: Vec<ComparisonRow>,
    pub summary: ComparisonSummary,
}

impl ComparisonReport {
    /// Mean absolute relative error over the rows at level `d`.
    pub fn mean_rel_err_at(&self, d: f64) -> Option<f64> {
        let errs: Vec<f64> = self
            .rows
            .iter()
            .filter(|r| (r.d - d).abs() <= 1e-9 * d.max(1e-300))
            .map(|r| r.rel_err.abs())
            .collect();
        (!errs.is_empty()).then(|| errs.iter().sum::<f64>() / errs.len() as f64)
    }

    /// `oracle.csv` and `oracle_summary.json` under `dir`.
    pub fn write(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir)?;
        let mut w = csv::Writer::from_path(dir.join("oracle.csv"))?;
        for row in &self.rows {
            w.serialize(row)?;
        }
        w.flush()?;
        let json = serde_json::to_string_pretty(&self.summary)?;
        std::fs::write(dir.join("oracle_summary.json"), json + "\n")?;
        Ok(())
    }
}

/// Exact vs ARC value and probability on the report window of `vg`.
pub fn compare_grid(vg: &ValueGrid) -> ComparisonReport {
    let nodes = vg.report_nodes();
    let mut rows = Vec::new();
    for k in vg.report_levels() {
        let d = vg.d_axis[k];
        for &a in &nodes {
            let m = vg.m_axis[a];
            let (v_arc, p_arc) = arc_closed_form(m, d, vg.lambda, vg.beta);
            let v_exact = vg.values[k][a];
            let p_exact = vg.probs[k][a];
            rows.push(ComparisonRow {
                m,
                d,
                v_exact,
                v_arc,
                rel_err: (v_arc - v_exact) / v_exact.abs(),
                p_exact,
                p_arc,
                p_diff: p_arc - p_exact,
            });
        }
    }
    let n = rows.len().max(1) as f64;
    let summary = ComparisonSummary {
        max_rel_err: rows.iter().map(|r| r.rel_err.abs()).fold(0.0, f64::max),
        mean_rel_err: rows.iter().map(|r| r.rel_err.abs()).sum::<f64>() / n,
        max_p_diff: rows.iter().map(|r| r.p_diff.abs()).fold(0.0, f64::max),
    };
    ComparisonReport { rows, summary }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn small(seed: u64) -> OracleConfig {
        OracleConfig {
            lambda: 0.1,
            beta: 0.9,
            mc_samples: 200,
            tol: 1e-8,
            max_iters: 5_000,
            seed,
            grid: GridSpec { m_min: 0.0, m_max: 2.0, m_step: 0.05, d_min: 0.02, d_max: 0.05, d_tail: 0.01, pad_sd: 6.0 },
        }
    }

    #[test]
    fn zero_uncertainty_is_static_smooth_max() {
        let mut cfg = small(1);
        cfg.grid.d_min = 0.0;
        cfg.grid.d_max = 0.0;
        let vg = value_iterate(&cfg).unwrap();
        assert_eq!(vg.d_axis, vec![0.0]);
        for (a, &m) in vg.m_axis.iter().enumerate() {
            let expect = cfg.lambda * ((m / cfg.lambda).exp() + (1.0 / cfg.lambda).exp()).ln() / (1.0 - cfg.beta);
            assert_relative_eq!(vg.values[0][a], expect, max_relative = 1e-9);
            assert_relative_eq!(vg.probs[0][a], logistic((m - 1.0) / cfg.lambda), max_relative = 1e-9);
        }
    }

    #[test]
    fn orbit_is_exact_and_ascending() {
        let vg = value_iterate(&small(2)).unwrap();
        for w in vg.d_axis.windows(2) {
            assert!(w[0] < w[1]);
            assert_relative_eq!(w[1] / (1.0 + w[1]), w[0], max_relative = 1e-12);
        }
        assert_relative_eq!(*vg.d_axis.last().unwrap(), 0.05);
        assert!(vg.m_axis[0] < 0.0 && *vg.m_axis.last().unwrap() > 2.0);
    }

    #[test]
    fn converged_grid_properties() {
        let cfg = small(3);
        let vg = value_iterate(&cfg).unwrap();
        assert!(vg.sup_delta < cfg.tol);
        assert!(vg.bellman_residual() < 2.0 * cfg.tol);
        let slack = cfg.lambda * 2f64.ln() / (1.0 - cfg.beta);
        for k in 0..vg.d_axis.len() {
            for a in 0..vg.m_axis.len() {
                let v = vg.values[k][a];
                assert!(v.is_finite());
                assert!((0.0..=1.0).contains(&vg.probs[k][a]));
                assert!(v >= vg.m_axis[a].max(1.0) / (1.0 - cfg.beta) - slack - 1e-9);
                if a > 0 {
                    assert!(v >= vg.values[k][a - 1] - 1e-9, "not monotone in m");
                }
            }
        }
    }

    #[test]
    fn independent_seeds_agree() {
        let a = value_iterate(&small(10)).unwrap();
        let b = value_iterate(&small(11)).unwrap();
        for k in 0..a.d_axis.len() {
            for i in 0..a.m_axis.len() {
                let se = (a.std_err[k][i].powi(2) + b.std_err[k][i].powi(2)).sqrt();
                assert!((a.values[k][i] - b.values[k][i]).abs() <= 5.0 * se + 1e-9);
            }
        }
    }

    #[test]
    fn non_convergence_reports_delta() {
        let mut cfg = small(4);
        cfg.max_iters = 3;
        match value_iterate(&cfg) {
            Err(BanditError::NotConverged { iterations, sup_delta }) => {
                assert_eq!(iterations, 3);
                assert!(sup_delta > cfg.tol);
            }
            other => panic!("expected non-convergence, got {other:?}"),
        }
    }

    #[test]
    fn closed_form_examples() {
        let (v, p) = arc_closed_form(0.7, 0.0, 0.1, 0.99);
        assert_relative_eq!(v, 0.1 * ((7.0f64).exp() + (10.0f64).exp()).ln() / 0.01, max_relative = 1e-12);
        assert_relative_eq!(p, logistic(-3.0), max_relative = 1e-12);
        let (_, p) = arc_closed_form(1.0, 0.04, 0.1, 0.99);
        assert_relative_eq!(p, logistic(1.904), max_relative = 1e-3);
        assert!((p - 0.8704).abs() < 1e-4);
        for d in [1e-3, 0.01, 0.5] {
            assert!(arc_closed_form(1.0, d, 0.3, 0.9).1 > 0.5);
        }
    }

    #[test]
    fn comparison_is_self_consistent() {
        let vg = value_iterate(&small(5)).unwrap();
        let rep = compare_grid(&vg);
        assert_eq!(rep.rows.len(), vg.report_levels().len() * vg.report_nodes().len());
        for r in &rep.rows {
            let (v, p) = arc_closed_form(r.m, r.d, vg.lambda, vg.beta);
            assert_eq!(r.v_arc, v);
            assert_eq!(r.p_arc, p);
            assert!((-1.0..=1.0).contains(&r.p_diff));
            assert!(r.d >= 0.02 * (1.0 - 1e-9) && r.d <= 0.05 * (1.0 + 1e-9));
        }
        let dir = tempfile::tempdir().unwrap();
        rep.write(dir.path()).unwrap();
        let csv = std::fs::read_to_string(dir.path().join("oracle.csv")).unwrap();
        assert!(csv.starts_with("m,d,v_exact,v_arc,rel_err,p_exact,p_arc,p_diff\n"));
        let s: ComparisonSummary =
            serde_json::from_str(&std::fs::read_to_string(dir.path().join("oracle_summary.json")).unwrap()).unwrap();
        assert_eq!(s, rep.summary);
    }
}
