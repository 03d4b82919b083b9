//! Projected sign-gradient ascent on the observed Δ, the comparison baseline
//! for the surrogate's linear adversary.

use serde::{Deserialize, Serialize};

use crate::par::{try_map_indexed, Workers};
use crate::predictor::Predictor;
use crate::sampler::{ball_bounds, DeltaEvaluator, PerturbationSpec};
use crate::traj::{FlatInput, ScenePast};
use crate::Result;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum GradMode {
    /// Through the predictor's output Jacobian.
    Analytic,
    /// Central differences with common random numbers.
    FiniteDifference,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PgdConfig {
    pub steps: usize,
    /// Defaults to `r / 10`.
    pub step_size: Option<f64>,
    /// Finite-difference probe, defaults to `r / 100`.
    pub probe: Option<f64>,
    pub grad_mode: GradMode,
    pub seed: u64,
}

impl Default for PgdConfig {
    fn default() -> Self {
        Self {
            steps: 40,
            step_size: None,
            probe: None,
            grad_mode: GradMode::FiniteDifference,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PgdResult {
    pub input: FlatInput,
    pub scene: ScenePast,
    pub delta: f64,
    /// Iteration at which the best iterate was reached (0 = centre).
    pub best_step: usize,
}

/// Gradient of the observed Δ at `x`; every probe shares `seed`.
pub fn delta_gradient<P: Predictor + ?Sized>(
    evaluator: &DeltaEvaluator<'_, P>,
    x: &FlatInput,
    mask: &[bool],
    mode: GradMode,
    probe: f64,
    seed: u64,
    workers: Workers,
) -> Result<(f64, Vec<f64>)> {
    match mode {
        GradMode::Analytic => {
            let (v, mut g) = evaluator.eval_gradient(x, seed)?;
            for (gi, &m) in g.iter_mut().zip(mask) {
                if !m {
                    *gi = 0.0;
                }
            }
            Ok((v, g))
        }
        GradMode::FiniteDifference => {
            let value = evaluator.eval(x, seed)?;
            let coords: Vec<usize> = (0..x.dim()).filter(|&i| mask[i]).collect();
            let diffs = try_map_indexed(coords.len(), workers, |k| {
                let i = coords[k];
                let mut up = x.values.clone();
                let mut down = x.values.clone();
                up[i] += probe;
                down[i] -= probe;
                let fu = evaluator.eval(&x.with_values(up), seed)?;
                let fd = evaluator.eval(&x.with_values(down), seed)?;
                Ok::<_, crate::Error>((fu - fd) / (2.0 * probe))
            })?;
            let mut g = vec![0.0; x.dim()];
            for (&i, d) in coords.iter().zip(diffs) {
                g[i] = d;
            }
            Ok((value, g))
        }
    }
}

/// `x ← clamp_ball(x + step · sign(∇Δ))`, returning the best iterate seen.
pub fn pgd_attack<P: Predictor + ?Sized>(
    evaluator: &DeltaEvaluator<'_, P>,
    spec: &PerturbationSpec,
    config: &PgdConfig,
) -> Result<PgdResult> {
    spec.validate()?;
    let center = evaluator.center().past.flatten();
    let mask = spec.mask(&center.layout);
    let bounds: Vec<(f64, f64)> = center.values.iter().map(|&c| ball_bounds(c, spec.radius)).collect();
    let step = config.step_size.unwrap_or(spec.radius / 10.0);
    let probe = config.probe.unwrap_or(spec.radius / 100.0);
    let workers = evaluator.options().workers;

    let mut x = center.clone();
    let mut best = (evaluator.eval(&x, config.seed)?, x.clone(), 0);
    for it in 1..=config.steps {
        let (_, g) = delta_gradient(evaluator, &x, &mask, config.grad_mode, probe, config.seed, workers)?;
        let values = x
            .values
            .iter()
            .zip(&g)
            .zip(bounds.iter().zip(&mask))
            .map(|((&v, &gi), (&(lo, hi), &m))| {
                if !m || gi == 0.0 {
                    v
                } else {
                    (v + step * gi.signum()).clamp(lo, hi)
                }
            })
            .collect();
        x = x.with_values(values);
        let v = evaluator.eval(&x, config.seed)?;
        if v > best.0 {
            best = (v, x.clone(), it);
        }
    }
    let (delta, input, best_step) = best;
    Ok(PgdResult {
        scene: input.unflatten(evaluator.unit())?,
        input,
        delta,
        best_step,
    })
}
