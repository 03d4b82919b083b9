//! Minimax (Chebyshev) affine regression as a linear program.
//!
//! The primal problem over `n` samples with `p` free coefficients is
//!
//! ```text
//! minimise λ  subject to  −λ ≤ u_i·γ + γ₀ − t_i ≤ λ   (i = 1..n)
//! ```
//!
//! It is solved through its dual, a standard-form LP with only `p + 2`
//! equality rows and `2n` non-negative columns:
//!
//! ```text
//! maximise Σ t_i (w⁺_i − w⁻_i)
//! subject to Σ u_i (w⁺_i − w⁻_i) = 0,  Σ (w⁺_i − w⁻_i) = 0,  Σ (w⁺_i + w⁻_i) = 1
//! ```
//!
//! A revised simplex with a dense `(p+2)²` basis inverse runs on the dual;
//! the simplex multipliers at the optimum are the primal `(γ, γ₀, λ)`.
//! Features and targets are centred and scaled to `[-1, 1]` first, and the
//! reported margin is recomputed from the back-transformed coefficients so
//! that every sample satisfies `|residual| ≤ λ*` exactly.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::sampler::LabeledSample;
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChebyshevFit {
    /// Coefficients of the free features, in the order they were given.
    pub alpha: Vec<f64>,
    pub beta: f64,
    /// Maximal absolute residual over the samples.
    pub lambda_star: f64,
    /// Constraints within tolerance of the margin at the solution.
    pub active: usize,
    pub iterations: usize,
}

/// Minimax fit on the `free_indices` coordinates of `samples`, the other
/// coordinates contributing `fixed_alpha[j] * x_j` to the fit.
pub fn chebyshev_lp(samples: &[LabeledSample], free_indices: &[usize], fixed_alpha: &[f64]) -> Result<ChebyshevFit> {
    if samples.is_empty() {
        return Err(Error::invalid("Chebyshev fit needs at least one sample"));
    }
    let d = samples[0].input.dim();
    if fixed_alpha.len() != d {
        return Err(Error::invalid(format!(
            "fixed_alpha has {} entries, inputs have {d}",
            fixed_alpha.len()
        )));
    }
    if let Some(&bad) = free_indices.iter().find(|&&j| j >= d) {
        return Err(Error::invalid(format!("free index {bad} out of range")));
    }
    let mut is_free = vec![false; d];
    for &j in free_indices {
        if std::mem::replace(&mut is_free[j], true) {
            return Err(Error::invalid(format!("free index {j} repeated")));
        }
    }
    let p = free_indices.len();
    let mut features = Vec::with_capacity(samples.len() * p);
    let mut targets = Vec::with_capacity(samples.len());
    for s in samples {
        let x = &s.input.values;
        if x.len() != d {
            return Err(Error::invalid("samples have inconsistent dimensions"));
        }
        features.extend(free_indices.iter().map(|&j| x[j]));
        let fixed: f64 = (0..d).filter(|&j| !is_free[j]).map(|j| fixed_alpha[j] * x[j]).sum();
        targets.push(s.delta - fixed);
    }
    minimax_fit(&features, p, &targets)
}

/// Minimax affine fit of `targets` on the row-major `n × p` matrix `features`.
pub fn minimax_fit(features: &[f64], p: usize, targets: &[f64]) -> Result<ChebyshevFit> {
    let n = targets.len();
    if n == 0 || features.len() != n * p {
        return Err(Error::invalid("feature matrix shape does not match targets"));
    }
    if targets.iter().chain(features).any(|v| !v.is_finite()) {
        return Err(Error::invalid("non-finite value in Chebyshev fit"));
    }

    // Column preconditioning: u = (x - mid) / half, constant columns dropped.
    let mut mid = vec![0.0; p];
    let mut half = vec![0.0; p];
    let mut kept = Vec::new();
    for j in 0..p {
        let (lo, hi) = (0..n).fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), i| {
            let v = features[i * p + j];
            (lo.min(v), hi.max(v))
        });
        mid[j] = 0.5 * (lo + hi);
        half[j] = 0.5 * (hi - lo);
        if half[j] > 0.0 {
            kept.push(j);
        }
    }
    let q = kept.len();
    let (tlo, thi) = targets
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| (lo.min(v), hi.max(v)));
    let tmid = 0.5 * (tlo + thi);
    let tscale = 0.5 * (thi - tlo);

    let mut alpha = vec![0.0; p];
    let mut iterations = 0;
    let mut beta = tmid;
    if tscale > 0.0 {
        let mut u = Vec::with_capacity(n * q);
        for i in 0..n {
            u.extend(kept.iter().map(|&j| (features[i * p + j] - mid[j]) / half[j]));
        }
        let t: Vec<f64> = targets.iter().map(|&v| (v - tmid) / tscale).collect();
        let mut simplex = DualSimplex::new(&u, &t, q);
        let outcome = simplex.solve();
        iterations = simplex.iterations;
        let y = simplex.multipliers();
        let (a, b) = back_transform(&y, &kept, &mid, &half, tmid, tscale, p);
        alpha = a;
        beta = b;
        if let Err(msg) = outcome {
            let incumbent = finish(features, p, targets, alpha, beta, iterations);
            return Err(Error::Numeric {
                msg,
                incumbent: Some(Box::new(incumbent)),
            });
        }
    }
    Ok(finish(features, p, targets, alpha, beta, iterations))
}

fn back_transform(
    y: &[f64],
    kept: &[usize],
    mid: &[f64],
    half: &[f64],
    tmid: f64,
    tscale: f64,
    p: usize,
) -> (Vec<f64>, f64) {
    let q = kept.len();
    let mut alpha = vec![0.0; p];
    let mut beta = tscale * y[q] + tmid;
    for (k, &j) in kept.iter().enumerate() {
        alpha[j] = tscale * y[k] / half[j];
        beta -= alpha[j] * mid[j];
    }
    (alpha, beta)
}

fn finish(features: &[f64], p: usize, targets: &[f64], alpha: Vec<f64>, beta: f64, iterations: usize) -> ChebyshevFit {
    let residuals: Vec<f64> = targets
        .iter()
        .enumerate()
        .map(|(i, &t)| {
            let row = &features[i * p..(i + 1) * p];
            row.iter().zip(&alpha).map(|(x, a)| x * a).sum::<f64>() + beta - t
        })
        .collect();
    let lambda_star = residuals.iter().fold(0.0f64, |m, r| m.max(r.abs()));
    let tol = 1e-9 * lambda_star.max(1.0);
    let active = residuals.iter().filter(|r| r.abs() >= lambda_star - tol).count();
    ChebyshevFit {
        alpha,
        beta,
        lambda_star,
        active,
        iterations,
    }
}

const PRICE_TOL: f64 = 1e-11;
const PIVOT_TOL: f64 = 1e-9;
const HARRIS_TOL: f64 = 1e-12;
const REFACTOR_EVERY: usize = 64;

#[derive(Clone, Copy, PartialEq, Eq)]
enum Phase {
    One,
    Two,
}

/// Revised simplex on the dual of the scaled Chebyshev problem.
///
/// Rows: `q` feature rows, the bias row and the normalisation row.
/// Column `2i` is `w⁺_i`, `2i+1` is `w⁻_i`, `2n + r` is the artificial of row `r`.
struct DualSimplex<'a> {
    u: &'a [f64],
    t: &'a [f64],
    n: usize,
    q: usize,
    m: usize,
    basis: Vec<usize>,
    /// Row of each column in the basis, if basic.
    row_of: Vec<Option<usize>>,
    binv: Vec<f64>,
    xb: Vec<f64>,
    iterations: usize,
    max_iterations: usize,
    y: Vec<f64>,
}

impl<'a> DualSimplex<'a> {
    fn new(u: &'a [f64], t: &'a [f64], q: usize) -> Self {
        let n = t.len();
        let m = q + 2;
        let mut binv = vec![0.0; m * m];
        for r in 0..m {
            binv[r * m + r] = 1.0;
        }
        let mut row_of = vec![None; 2 * n + m];
        for r in 0..m {
            row_of[2 * n + r] = Some(r);
        }
        let mut xb = vec![0.0; m];
        xb[m - 1] = 1.0;
        Self {
            u,
            t,
            n,
            q,
            m,
            basis: (0..m).map(|r| 2 * n + r).collect(),
            row_of,
            binv,
            xb,
            iterations: 0,
            max_iterations: 50_000 + 50 * (m + n),
            y: vec![0.0; m],
        }
    }

    fn is_artificial(&self, col: usize) -> bool {
        col >= 2 * self.n
    }

    fn column(&self, col: usize, out: &mut [f64]) {
        out.iter_mut().for_each(|v| *v = 0.0);
        if self.is_artificial(col) {
            out[col - 2 * self.n] = 1.0;
            return;
        }
        let i = col / 2;
        let sign = if col % 2 == 0 { 1.0 } else { -1.0 };
        let row = &self.u[i * self.q..(i + 1) * self.q];
        for (o, v) in out.iter_mut().zip(row) {
            *o = sign * v;
        }
        out[self.q] = sign;
        out[self.q + 1] = 1.0;
    }

    /// Objective coefficient in the maximisation form.
    fn cost(&self, col: usize, phase: Phase) -> f64 {
        match (phase, self.is_artificial(col)) {
            (Phase::One, true) => -1.0,
            (Phase::One, false) | (Phase::Two, true) => 0.0,
            (Phase::Two, false) => {
                let t = self.t[col / 2];
                if col % 2 == 0 {
                    t
                } else {
                    -t
                }
            }
        }
    }

    fn update_multipliers(&mut self, phase: Phase) {
        let m = self.m;
        let mut y = vec![0.0; m];
        for (r, &col) in self.basis.iter().enumerate() {
            let c = self.cost(col, phase);
            if c != 0.0 {
                for (k, yk) in y.iter_mut().enumerate() {
                    *yk += c * self.binv[r * m + k];
                }
            }
        }
        self.y = y;
    }

    /// Current multipliers, i.e. the primal `(γ, γ₀, λ)` in scaled units.
    fn multipliers(&self) -> Vec<f64> {
        self.y.clone()
    }

    /// Most negative reduced cost `y·a_j − c_j` over non-basic columns; in
    /// Bland mode the lowest-index negative one.
    fn price(&self, phase: Phase, bland: bool) -> Option<usize> {
        let (q, n) = (self.q, self.n);
        let y_lambda = self.y[q + 1];
        let y_bias = self.y[q];
        let tau = if phase == Phase::Two { 1.0 } else { 0.0 };
        let mut best: Option<(usize, f64)> = None;
        for i in 0..n {
            let row = &self.u[i * q..(i + 1) * q];
            let s = row.iter().zip(&self.y[..q]).map(|(a, b)| a * b).sum::<f64>() + y_bias - tau * self.t[i];
            for (col, rc) in [(2 * i, y_lambda + s), (2 * i + 1, y_lambda - s)] {
                if rc < -PRICE_TOL && self.row_of[col].is_none() {
                    if bland {
                        return Some(col);
                    }
                    if best.is_none_or(|(_, b)| rc < b) {
                        best = Some((col, rc));
                    }
                }
            }
        }
        best.map(|(c, _)| c)
    }

    fn direction(&self, col: usize) -> Vec<f64> {
        let m = self.m;
        let mut a = vec![0.0; m];
        self.column(col, &mut a);
        (0..m)
            .map(|r| (0..m).map(|k| self.binv[r * m + k] * a[k]).sum())
            .collect()
    }

    /// Leaving row for entering direction `dir`, or `None` if unbounded.
    fn ratio_test(&self, dir: &[f64], phase: Phase, bland: bool) -> Option<usize> {
        // Basic artificials must stay at zero in phase two.
        if phase == Phase::Two {
            if let Some(r) = (0..self.m)
                .filter(|&r| self.is_artificial(self.basis[r]) && dir[r].abs() > PIVOT_TOL)
                .max_by(|&a, &b| dir[a].abs().total_cmp(&dir[b].abs()))
            {
                return Some(r);
            }
        }
        let candidates: Vec<usize> = (0..self.m).filter(|&r| dir[r] > PIVOT_TOL).collect();
        if candidates.is_empty() {
            return None;
        }
        if bland {
            let min_ratio = candidates
                .iter()
                .map(|&r| self.xb[r].max(0.0) / dir[r])
                .fold(f64::INFINITY, f64::min);
            return candidates
                .into_iter()
                .filter(|&r| self.xb[r].max(0.0) / dir[r] <= min_ratio)
                .min_by_key(|&r| self.basis[r]);
        }
        // Harris two-pass: loosen the bound slightly, then take the largest pivot.
        let relaxed = candidates
            .iter()
            .map(|&r| (self.xb[r].max(0.0) + HARRIS_TOL) / dir[r])
            .fold(f64::INFINITY, f64::min);
        candidates
            .into_iter()
            .filter(|&r| self.xb[r].max(0.0) / dir[r] <= relaxed)
            .max_by(|&a, &b| dir[a].total_cmp(&dir[b]))
    }

    fn pivot(&mut self, row: usize, col: usize, dir: &[f64]) {
        let m = self.m;
        let theta = self.xb[row].max(0.0) / dir[row];
        for r in 0..m {
            if r != row {
                self.xb[r] -= theta * dir[r];
                if self.xb[r] < 0.0 && self.xb[r] > -1e-12 {
                    self.xb[r] = 0.0;
                }
            }
        }
        self.xb[row] = theta;
        let piv = dir[row];
        for k in 0..m {
            self.binv[row * m + k] /= piv;
        }
        for r in 0..m {
            if r != row && dir[r] != 0.0 {
                let f = dir[r];
                for k in 0..m {
                    self.binv[r * m + k] -= f * self.binv[row * m + k];
                }
            }
        }
        let old = self.basis[row];
        self.row_of[old] = None;
        self.basis[row] = col;
        self.row_of[col] = Some(row);
        self.iterations += 1;
        if self.iterations % REFACTOR_EVERY == 0 {
            self.refactor();
        }
    }

    fn refactor(&mut self) {
        let m = self.m;
        let mut b = DMatrix::<f64>::zeros(m, m);
        let mut a = vec![0.0; m];
        for (r, &col) in self.basis.iter().enumerate() {
            self.column(col, &mut a);
            for k in 0..m {
                b[(k, r)] = a[k];
            }
        }
        if let Some(inv) = b.lu().try_inverse() {
            for r in 0..m {
                for k in 0..m {
                    self.binv[r * m + k] = inv[(r, k)];
                }
                self.xb[r] = inv[(r, m - 1)].max(0.0);
            }
        }
    }

    fn run_phase(&mut self, phase: Phase) -> std::result::Result<(), String> {
        let mut degenerate = 0usize;
        loop {
            if self.iterations >= self.max_iterations {
                return Err(format!("simplex iteration cap {} reached", self.max_iterations));
            }
            self.update_multipliers(phase);
            let bland = degenerate > 2 * self.m;
            let Some(col) = self.price(phase, bland) else {
                return Ok(());
            };
            let dir = self.direction(col);
            let Some(row) = self.ratio_test(&dir, phase, bland) else {
                return Err("dual problem unbounded; constraint data inconsistent".into());
            };
            let theta = self.xb[row].max(0.0) / dir[row].abs();
            if theta <= 1e-14 {
                degenerate += 1;
            } else {
                degenerate = 0;
            }
            self.pivot(row, col, &dir);
        }
    }

    /// Pivot zero-level artificials out of the basis where possible; the
    /// ones left belong to redundant rows and stay at zero.
    fn drive_out_artificials(&mut self) {
        let m = self.m;
        let mut a = vec![0.0; m];
        for row in 0..m {
            if !self.is_artificial(self.basis[row]) {
                continue;
            }
            let binv_row: Vec<f64> = self.binv[row * m..(row + 1) * m].to_vec();
            let mut best: Option<(usize, f64)> = None;
            for col in 0..2 * self.n {
                if self.row_of[col].is_some() {
                    continue;
                }
                self.column(col, &mut a);
                let v: f64 = binv_row.iter().zip(&a).map(|(x, y)| x * y).sum();
                if v.abs() > 1e-7 && best.is_none_or(|(_, b)| v.abs() > b.abs()) {
                    best = Some((col, v));
                }
            }
            if let Some((col, _)) = best {
                self.xb[row] = 0.0;
                let dir = self.direction(col);
                self.pivot(row, col, &dir);
            }
        }
    }

    fn solve(&mut self) -> std::result::Result<(), String> {
        self.run_phase(Phase::One)?;
        let infeasibility: f64 = (0..self.m)
            .filter(|&r| self.is_artificial(self.basis[r]))
            .map(|r| self.xb[r])
            .sum();
        if infeasibility > 1e-7 {
            return Err(format!("phase one ended with infeasibility {infeasibility:e}"));
        }
        self.drive_out_artificials();
        self.refactor();
        self.run_phase(Phase::Two)?;
        self.update_multipliers(Phase::Two);
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::stream_rng;
    use rand::Rng;

    fn fit1(points: &[(f64, f64)]) -> ChebyshevFit {
        let x: Vec<f64> = points.iter().map(|p| p.0).collect();
        let t: Vec<f64> = points.iter().map(|p| p.1).collect();
        minimax_fit(&x, 1, &t).unwrap()
    }

    #[test]
    fn single_sample_interpolates() {
        let f = fit1(&[(0.3, 2.0)]);
        assert_eq!(f.lambda_star, 0.0);
        assert!((f.beta + f.alpha[0] * 0.3 - 2.0).abs() < 1e-15);
    }

    #[test]
    fn three_point_equioscillation() {
        let f = fit1(&[(0.0, 0.0), (1.0, 1.0), (2.0, 0.0)]);
        assert!(f.alpha[0].abs() < 1e-9);
        assert!((f.beta - 0.5).abs() < 1e-9);
        assert!((f.lambda_star - 0.5).abs() < 1e-9);
        assert_eq!(f.active, 3);
    }

    #[test]
    fn exact_line_has_zero_margin() {
        let pts: Vec<(f64, f64)> = (0..30).map(|i| (i as f64, 3.0 * i as f64 - 1.0)).collect();
        let f = fit1(&pts);
        assert!(f.lambda_star < 1e-9);
        assert!((f.alpha[0] - 3.0).abs() < 1e-9);
    }

    #[test]
    fn constant_feature_dropped() {
        let x = vec![1.0; 4];
        let f = minimax_fit(&x, 1, &[0.0, 1.0, 2.0, 3.0]).unwrap();
        assert_eq!(f.alpha[0], 0.0);
        assert!((f.beta - 1.5).abs() < 1e-12);
        assert!((f.lambda_star - 1.5).abs() < 1e-12);
    }

    #[test]
    fn duplicated_inputs_with_different_targets() {
        let f = fit1(&[(0.0, 0.0), (0.0, 1.0), (1.0, 1.0), (1.0, 2.0)]);
        assert!((f.lambda_star - 0.5).abs() < 1e-9);
        assert!((f.alpha[0] - 1.0).abs() < 1e-9);
    }

    #[test]
    fn fixed_coefficients_shift_targets() {
        use crate::sampler::{DeltaKind, LabeledSample};
        use crate::traj::{FlatInput, Layout};
        let layout = Layout::new(1, 1);
        let mut rng = stream_rng(4, 0);
        let samples: Vec<LabeledSample> = (0..40)
            .map(|_| {
                let x = vec![rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)];
                let delta = 2.0 * x[0] - 3.0 * x[1] + 0.25;
                LabeledSample { input: FlatInput { values: x, layout }, delta, kind: DeltaKind::Label }
            })
            .collect();
        let f = chebyshev_lp(&samples, &[0], &[0.0, -3.0]).unwrap();
        assert!((f.alpha[0] - 2.0).abs() < 1e-9);
        assert!((f.beta - 0.25).abs() < 1e-9);
        assert!(f.lambda_star < 1e-9);
        assert!(chebyshev_lp(&samples, &[0, 0], &[0.0, 0.0]).is_err());
        assert!(chebyshev_lp(&samples, &[2], &[0.0, 0.0]).is_err());
        assert!(chebyshev_lp(&[], &[], &[]).is_err());
    }

    /// Brute force over slopes on a zooming grid; the best bias and margin
    /// for a fixed slope are closed form.
    fn grid_lambda_1d(x: &[f64], t: &[f64]) -> f64 {
        let value = |a: f64| {
            let (lo, hi) = x
                .iter()
                .zip(t)
                .map(|(xi, ti)| ti - a * xi)
                .fold((f64::INFINITY, f64::NEG_INFINITY), |(l, h), v| (l.min(v), h.max(v)));
            0.5 * (hi - lo)
        };
        let (mut center, mut step) = (0.0, 10.0);
        let mut best = value(0.0);
        while step > 1e-6 {
            for s in -200..=200 {
                let a = center + s as f64 * step;
                let v = value(a);
                if v < best {
                    best = v;
                    center = a;
                }
            }
            step /= 8.0;
        }
        best
    }

    #[test]
    fn random_tiny_instances_match_grid() {
        let mut rng = stream_rng(77, 0);
        for _ in 0..50 {
            let n = rng.random_range(1..=6);
            let x: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
            let t: Vec<f64> = (0..n).map(|_| rng.random_range(-2.0..2.0)).collect();
            let f = minimax_fit(&x, 1, &t).unwrap();
            let g = grid_lambda_1d(&x, &t);
            assert!(f.lambda_star <= g + 1e-9, "lp {} grid {}", f.lambda_star, g);
            assert!(f.lambda_star >= g - 1e-3, "lp {} grid {}", f.lambda_star, g);
        }
    }

    #[test]
    fn larger_instance_is_optimal_by_active_count() {
        let mut rng = stream_rng(5, 0);
        let (n, p) = (2000, 12);
        let u: Vec<f64> = (0..n * p).map(|_| rng.random_range(-0.03..0.03) + 4.0).collect();
        let t: Vec<f64> = (0..n)
            .map(|i| {
                let row = &u[i * p..(i + 1) * p];
                row.iter().enumerate().map(|(j, v)| (j as f64 - 6.0) * v).sum::<f64>() + rng.random_range(-0.01..0.01)
            })
            .collect();
        let f = minimax_fit(&u, p, &t).unwrap();
        assert!(f.lambda_star <= 0.01);
        assert!(f.active >= p + 2, "active {}", f.active);
    }
}
