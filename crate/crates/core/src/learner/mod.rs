//! Learning the affine surrogate `Δ̃(X) = X·α + β` and its margin `λ*`.
//!
//! Learning is two-phase. Phase one fits least squares on `t1` samples and
//! ranks coordinates by coefficient magnitude. Phase two draws `t2` fresh
//! samples and solves the Chebyshev LP over the key coordinates plus the
//! bias, freezing every other coefficient at its phase-one value.

mod budget;
mod lp;
mod lsq;

use std::path::Path;

use serde::{Deserialize, Serialize};

pub use budget::{max_key_features, required_samples, PacBudget};
pub use lp::{chebyshev_lp, minimax_fit, ChebyshevFit};
pub use lsq::{fit_affine, least_squares_fit, AffineFit};

use crate::par::Workers;
use crate::predictor::Predictor;
use crate::rng::derive;
use crate::sampler::{draw_labeled, DeltaEvaluator, DeltaKind, EvalOptions, LabeledSample, PerturbationSpec, PureMode};
use crate::traj::{Layout, Scene};
use crate::{Error, Result};

/// The learned PAC model with its provenance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AffineSurrogate {
    pub kind: DeltaKind,
    pub alpha: Vec<f64>,
    pub beta: f64,
    pub lambda_star: f64,
    pub epsilon: f64,
    pub eta: f64,
    pub t1: usize,
    pub t2: usize,
    pub k_features: usize,
    /// Flat coordinates freed in phase two, ascending.
    pub key_indices: Vec<usize>,
    /// Whether the bias ranked among the top `k_features` magnitudes.
    pub bias_in_key: bool,
    pub max_sampled_delta: f64,
    pub seed: u64,
    /// Prediction samples per input.
    pub k: usize,
    pub layout: Layout,
}

impl AffineSurrogate {
    pub fn eval(&self, x: &[f64]) -> f64 {
        self.alpha.iter().zip(x).map(|(a, v)| a * v).sum::<f64>() + self.beta
    }

    pub fn dim(&self) -> usize {
        self.alpha.len()
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let s: Self = serde_json::from_str(text)?;
        if s.alpha.len() != s.layout.dim() {
            return Err(Error::invalid("surrogate alpha length does not match its layout"));
        }
        if !(s.lambda_star >= 0.0) {
            return Err(Error::invalid("surrogate margin must be non-negative"));
        }
        Ok(s)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_json()?).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text)
    }
}

#[derive(Debug, Clone)]
pub struct LearnConfig {
    /// Prediction samples per input, `K`.
    pub k: usize,
    pub pure_mode: PureMode,
    pub workers: Workers,
    pub seed: u64,
}

impl Default for LearnConfig {
    fn default() -> Self {
        Self {
            k: 20,
            pure_mode: PureMode::Fresh,
            workers: Workers::default(),
            seed: 0,
        }
    }
}

impl LearnConfig {
    pub fn eval_options(&self, kind: DeltaKind) -> EvalOptions {
        EvalOptions {
            kind,
            k: self.k,
            pure_mode: self.pure_mode,
            workers: self.workers,
            seed: derive(self.seed, &[0]),
        }
    }
}

#[derive(Debug, Clone)]
pub struct LearnOutcome {
    pub surrogate: AffineSurrogate,
    /// The sample with the largest observed Δ over both phases.
    pub max_sample: LabeledSample,
    pub phase1_fit: AffineFit,
    pub phase2_fit: ChebyshevFit,
    pub phase2_samples: Vec<LabeledSample>,
}

/// Coordinates ranked by `|alpha|` descending, lower index first on ties.
pub fn rank_coordinates(alpha: &[f64], candidates: &[usize]) -> Vec<usize> {
    let mut order = candidates.to_vec();
    order.sort_by(|&a, &b| alpha[b].abs().total_cmp(&alpha[a].abs()).then(a.cmp(&b)));
    order
}

/// Run both learning phases for one robustness kind.
pub fn learn_surrogate<P: Predictor + ?Sized>(
    center: &Scene,
    spec: &PerturbationSpec,
    budget: &PacBudget,
    kind: DeltaKind,
    predictor: &P,
    config: &LearnConfig,
) -> Result<LearnOutcome> {
    let evaluator = DeltaEvaluator::new(predictor, center, config.eval_options(kind))?;
    learn_with(&evaluator, spec, budget, config.seed)
}

/// [`learn_surrogate`] with a prepared evaluator.
pub fn learn_with<P: Predictor + ?Sized>(
    evaluator: &DeltaEvaluator<'_, P>,
    spec: &PerturbationSpec,
    budget: &PacBudget,
    seed: u64,
) -> Result<LearnOutcome> {
    budget.validate()?;
    spec.validate()?;
    let center = evaluator.center();
    let layout = center.past.layout();
    let d = layout.dim();
    let kind = evaluator.options().kind;

    let bound = required_samples(budget.epsilon, budget.eta, layout.t_past, layout.n_agents)?;
    if (budget.t2 as u64) < bound {
        tracing::warn!(
            t2 = budget.t2,
            bound,
            "phase-two sample count is below the full-dimension bound; the guarantee rests on the key-feature budget"
        );
    }

    let mask = spec.mask(&layout);
    let perturbed: Vec<usize> = (0..d).filter(|&i| mask[i]).collect();

    let phase1 = draw_labeled(evaluator, spec, budget.t1, derive(seed, &[1]))?;
    let rows: Vec<Vec<f64>> = phase1
        .iter()
        .map(|s| perturbed.iter().map(|&i| s.input.values[i]).collect())
        .collect();
    let refs: Vec<&[f64]> = rows.iter().map(Vec::as_slice).collect();
    let targets: Vec<f64> = phase1.iter().map(|s| s.delta).collect();
    let fit = fit_affine(&refs, &targets)?;
    let mut alpha1 = vec![0.0; d];
    for (&i, &a) in perturbed.iter().zip(&fit.alpha) {
        alpha1[i] = a;
    }
    let phase1_fit = AffineFit {
        alpha: alpha1.clone(),
        beta: fit.beta,
        ridged: fit.ridged,
    };

    // The bias always takes one of the k_features slots.
    let feature_slots = budget.k_features.saturating_sub(1);
    let ranked = rank_coordinates(&alpha1, &perturbed);
    let mut key_indices: Vec<usize> = ranked.into_iter().take(feature_slots).collect();
    key_indices.sort_unstable();
    let larger_than_bias = perturbed
        .iter()
        .filter(|&&i| alpha1[i].abs() > fit.beta.abs())
        .count();
    let bias_in_key = larger_than_bias < budget.k_features;

    let phase2 = draw_labeled(evaluator, spec, budget.t2, derive(seed, &[2]))?;
    let lp = chebyshev_lp(&phase2, &key_indices, &alpha1)?;
    let mut alpha = alpha1;
    for (&i, &a) in key_indices.iter().zip(&lp.alpha) {
        alpha[i] = a;
    }

    let max_sample = phase1
        .iter()
        .chain(&phase2)
        .max_by(|a, b| a.delta.total_cmp(&b.delta))
        .cloned()
        .ok_or_else(|| Error::invalid("no samples drawn"))?;

    let surrogate = AffineSurrogate {
        kind,
        alpha,
        beta: lp.beta,
        lambda_star: lp.lambda_star,
        epsilon: budget.epsilon,
        eta: budget.eta,
        t1: budget.t1,
        t2: budget.t2,
        k_features: budget.k_features,
        key_indices,
        bias_in_key,
        max_sampled_delta: max_sample.delta,
        seed,
        k: evaluator.options().k,
        layout,
    };
    Ok(LearnOutcome {
        surrogate,
        max_sample,
        phase1_fit,
        phase2_fit: lp,
        phase2_samples: phase2,
    })
}
