//! Robustness verdicts and adversaries read off a learned surrogate.

mod pgd;

use serde::{Deserialize, Serialize};

pub use pgd::{pgd_attack, GradMode, PgdConfig, PgdResult};

use crate::learner::{AffineSurrogate, LearnOutcome};
use crate::predictor::Predictor;
use crate::rng::derive;
use crate::sampler::{ball_bounds, DeltaEvaluator, DeltaKind, PerturbationSpec};
use crate::traj::{FlatInput, ScenePast};
use crate::{Error, Result};

/// Maximum of the surrogate over the ball and a maximising corner.
pub fn box_max(surrogate: &AffineSurrogate, center: &FlatInput, radius: f64, mask: &[bool]) -> Result<(f64, FlatInput)> {
    if surrogate.dim() != center.dim() || mask.len() != center.dim() {
        return Err(Error::invalid(format!(
            "surrogate dimension {} / mask {} do not match input dimension {}",
            surrogate.dim(),
            mask.len(),
            center.dim()
        )));
    }
    let mut spread = 0.0;
    let values = center
        .values
        .iter()
        .zip(&surrogate.alpha)
        .zip(mask)
        .map(|((&c, &a), &m)| {
            if !m || a == 0.0 {
                return c;
            }
            spread += a.abs();
            let (lo, hi) = ball_bounds(c, radius);
            if a > 0.0 {
                hi
            } else {
                lo
            }
        })
        .collect();
    let value = surrogate.eval(&center.values) + radius * spread;
    Ok((value, center.with_values(values)))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum Outcome {
    Yes,
    No,
    Unknown,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CounterexampleSource {
    /// The surrogate's maximising corner.
    Argmax,
    /// A sample drawn while learning.
    LearningSample,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Counterexample {
    pub input: FlatInput,
    pub scene: ScenePast,
    pub observed_delta: f64,
    /// Evaluating at `input` with this seed reproduces `observed_delta`.
    pub replay_seed: Option<u64>,
    pub source: CounterexampleSource,
    /// Fraction of independent re-draws at `input` whose Δ exceeds `s`.
    pub redraw_exceedance: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Verdict {
    pub kind: DeltaKind,
    pub outcome: Outcome,
    /// `max Δ̃ + λ*` over the ball.
    pub pac_bound: f64,
    pub max_sampled_delta: f64,
    pub safety_constant: f64,
    /// `pac_bound - safety_constant`.
    pub gap: f64,
    pub counterexample: Option<Counterexample>,
    /// Observed Δ at the surrogate's argmax, when it was evaluated.
    pub argmax_delta: Option<f64>,
    pub epsilon: f64,
    pub eta: f64,
}

#[derive(Debug, Clone)]
pub struct VerifyConfig {
    pub safety_constant: f64,
    pub seed: u64,
    /// Re-draws used to estimate a counterexample's exceedance frequency.
    pub redraws: usize,
}

impl VerifyConfig {
    pub fn new(safety_constant: f64) -> Self {
        Self {
            safety_constant,
            seed: 0,
            redraws: 100,
        }
    }
}

fn exceedance<P: Predictor + ?Sized>(
    evaluator: &DeltaEvaluator<'_, P>,
    input: &FlatInput,
    s: f64,
    redraws: usize,
    seed: u64,
) -> Result<f64> {
    if redraws == 0 {
        return Ok(0.0);
    }
    let inputs = vec![input.clone(); redraws];
    let deltas = evaluator.eval_many(&inputs, seed)?;
    Ok(deltas.iter().filter(|&&d| d > s).count() as f64 / redraws as f64)
}

/// Three-way robustness analysis.
///
/// YES when the surrogate bound is within `s`. Otherwise the true model is
/// run at the surrogate's argmax; that point, or the largest learning
/// sample, exceeding `s` gives NO with a counterexample, else UNKNOWN.
pub fn verify<P: Predictor + ?Sized>(
    surrogate: &AffineSurrogate,
    max_sample: Option<&crate::sampler::LabeledSample>,
    spec: &PerturbationSpec,
    evaluator: &DeltaEvaluator<'_, P>,
    config: &VerifyConfig,
) -> Result<Verdict> {
    let s = config.safety_constant;
    if !s.is_finite() {
        return Err(Error::invalid("safety constant must be finite"));
    }
    let center = evaluator.center().past.flatten();
    let mask = spec.mask(&center.layout);
    let (max_value, argmax) = box_max(surrogate, &center, spec.radius, &mask)?;
    let pac_bound = max_value + surrogate.lambda_star;
    let mut verdict = Verdict {
        kind: surrogate.kind,
        outcome: Outcome::Unknown,
        pac_bound,
        max_sampled_delta: surrogate.max_sampled_delta,
        safety_constant: s,
        gap: pac_bound - s,
        counterexample: None,
        argmax_delta: None,
        epsilon: surrogate.epsilon,
        eta: surrogate.eta,
    };
    if pac_bound <= s {
        verdict.outcome = Outcome::Yes;
        return Ok(verdict);
    }

    let unit = evaluator.unit();
    let argmax_seed = derive(config.seed, &[1]);
    let observed = evaluator.eval(&argmax, argmax_seed)?;
    verdict.argmax_delta = Some(observed);
    if observed > s {
        verdict.counterexample = Some(Counterexample {
            scene: argmax.unflatten(unit)?,
            redraw_exceedance: exceedance(evaluator, &argmax, s, config.redraws, derive(config.seed, &[2]))?,
            input: argmax,
            observed_delta: observed,
            replay_seed: Some(argmax_seed),
            source: CounterexampleSource::Argmax,
        });
        verdict.outcome = Outcome::No;
        return Ok(verdict);
    }

    if let Some(sample) = max_sample.filter(|m| m.delta > s) {
        // A real model run during learning; find a replayable draw if one exists.
        let replay_seed = derive(config.seed, &[3]);
        let replayed = evaluator.eval(&sample.input, replay_seed)?;
        let (observed_delta, replay_seed) = if replayed > s {
            (replayed, Some(replay_seed))
        } else {
            (sample.delta, None)
        };
        verdict.counterexample = Some(Counterexample {
            scene: sample.input.unflatten(unit)?,
            redraw_exceedance: exceedance(evaluator, &sample.input, s, config.redraws, derive(config.seed, &[4]))?,
            input: sample.input.clone(),
            observed_delta,
            replay_seed,
            source: CounterexampleSource::LearningSample,
        });
        verdict.outcome = Outcome::No;
    }
    Ok(verdict)
}

/// [`verify`] on a fresh learning outcome.
pub fn verify_outcome<P: Predictor + ?Sized>(
    outcome: &LearnOutcome,
    spec: &PerturbationSpec,
    evaluator: &DeltaEvaluator<'_, P>,
    config: &VerifyConfig,
) -> Result<Verdict> {
    verify(&outcome.surrogate, Some(&outcome.max_sample), spec, evaluator, config)
}

/// The surrogate's maximising corner as a scene.
pub fn linear_adversary(surrogate: &AffineSurrogate, center: &ScenePast, spec: &PerturbationSpec) -> Result<ScenePast> {
    let flat = center.flatten();
    let mask = spec.mask(&flat.layout);
    let (_, argmax) = box_max(surrogate, &flat, spec.radius, &mask)?;
    argmax.unflatten(center.unit())
}
