//! The black-box stochastic predictor contract.
//!
//! A predictor maps a scene's past paths to `K` sampled future trajectories.
//! Implementations may be in-process ([`builtin`]) or a child process
//! speaking the line-delimited JSON protocol ([`external`], [`protocol`]).

pub mod builtin;
pub mod external;
pub mod protocol;

use serde::{Deserialize, Serialize};

use crate::traj::{ScenePast, Trajectory};
use crate::{Error, Result};

pub use builtin::{AffinePredictor, ConstantPredictor, ConstantVelocity};
pub use external::{ExternalConfig, ExternalPredictor};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PredictorInfo {
    pub name: String,
    /// Past length the predictor expects, when it is fixed.
    pub t_past: Option<usize>,
    pub t_future: usize,
    /// Largest number of scenes worth sending in one call.
    pub max_batch: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PredictionRequest {
    pub scene_past: ScenePast,
    pub sample_count: usize,
    pub seed: Option<u64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredictionBatch {
    pub samples: Vec<Trajectory>,
}

/// Jacobian of the noise-free output with respect to the flat input:
/// `rows[2 * t + axis][i] = d out[t][axis] / d x[i]`.
#[derive(Debug, Clone, PartialEq)]
pub struct OutputJacobian {
    pub rows: Vec<Vec<f64>>,
}

pub trait Predictor: Send + Sync {
    fn info(&self) -> PredictorInfo;

    /// Draw `k` future samples for each scene. With a seed the result is a
    /// deterministic function of `(scenes, k, seed)`.
    fn predict_many(
        &self,
        scenes: &[ScenePast],
        k: usize,
        seed: Option<u64>,
    ) -> Result<Vec<PredictionBatch>>;

    fn predict(&self, request: &PredictionRequest) -> Result<PredictionBatch> {
        let mut out = self.predict_many(
            std::slice::from_ref(&request.scene_past),
            request.sample_count,
            request.seed,
        )?;
        out.pop()
            .ok_or_else(|| Error::predictor("predictor returned no batch"))
    }

    /// Analytic output Jacobian at `scene`, for predictors that have one.
    fn output_jacobian(&self, _scene: &ScenePast) -> Option<OutputJacobian> {
        None
    }
}

impl<P: Predictor + ?Sized> Predictor for Box<P> {
    fn info(&self) -> PredictorInfo {
        (**self).info()
    }

    fn predict_many(
        &self,
        scenes: &[ScenePast],
        k: usize,
        seed: Option<u64>,
    ) -> Result<Vec<PredictionBatch>> {
        (**self).predict_many(scenes, k, seed)
    }

    fn output_jacobian(&self, scene: &ScenePast) -> Option<OutputJacobian> {
        (**self).output_jacobian(scene)
    }
}

/// Reject batches whose shape or values break the contract.
pub fn validate_batches(
    batches: &[PredictionBatch],
    scenes: usize,
    k: usize,
    t_future: usize,
) -> Result<()> {
    if batches.len() != scenes {
        return Err(Error::predictor(format!(
            "expected {scenes} prediction batches, got {}",
            batches.len()
        )));
    }
    for (s, b) in batches.iter().enumerate() {
        if b.samples.len() != k {
            return Err(Error::predictor(format!(
                "scene {s}: expected {k} samples, got {}",
                b.samples.len()
            )));
        }
        for (j, traj) in b.samples.iter().enumerate() {
            if traj.len() != t_future {
                return Err(Error::predictor(format!(
                    "scene {s} sample {j}: expected {t_future} future steps, got {}",
                    traj.len()
                )));
            }
        }
    }
    Ok(())
}
