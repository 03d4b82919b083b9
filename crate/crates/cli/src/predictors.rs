//! Predictor construction from a [`PredictorConfig`].

use std::time::Duration;

use anyhow::{bail, Context};
use serde::de::DeserializeOwned;
use serde::Deserialize;
use serde_json::{Map, Value};

use pacrobust_core::predictor::builtin::constant_velocity_path;
use pacrobust_core::predictor::{
    AffinePredictor, ConstantPredictor, ConstantVelocity, ExternalConfig, ExternalPredictor, Predictor,
};
use pacrobust_core::rng::stream_rng;
use pacrobust_core::traj::{Axis, Scene, Trajectory};

use crate::config::PredictorConfig;

pub const BUILTINS: &[&str] = &[
    "constant-velocity",
    "constant",
    "affine-distance",
    "affine-random",
    "neighbor-sensitive",
];

#[derive(Deserialize)]
#[serde(default, deny_unknown_fields)]
struct CvParams {
    sigma: f64,
}

impl Default for CvParams {
    fn default() -> Self {
        Self { sigma: 0.05 }
    }
}

#[derive(Deserialize)]
#[serde(default, deny_unknown_fields)]
struct DistanceParams {
    /// Explicit weights; otherwise uniform in `[-weight_scale, weight_scale]`.
    weights: Option<Vec<f64>>,
    weight_scale: f64,
    offset: f64,
    seed: u64,
}

impl Default for DistanceParams {
    fn default() -> Self {
        Self {
            weights: None,
            weight_scale: 1.0,
            offset: 0.5,
            seed: 1,
        }
    }
}

#[derive(Deserialize)]
#[serde(default, deny_unknown_fields)]
struct RandomParams {
    scale: f64,
    sigma: f64,
    seed: u64,
}

impl Default for RandomParams {
    fn default() -> Self {
        Self {
            scale: 0.5,
            sigma: 0.05,
            seed: 1,
        }
    }
}

#[derive(Deserialize)]
#[serde(default, deny_unknown_fields)]
struct NeighborParams {
    agent: usize,
    step: usize,
    axis: Axis,
    weight: f64,
    offset: f64,
    sigma: f64,
}

impl Default for NeighborParams {
    fn default() -> Self {
        Self {
            agent: 1,
            step: 7,
            axis: Axis::X,
            weight: 1.0,
            offset: 0.5,
            sigma: 0.0,
        }
    }
}

fn params<T: DeserializeOwned>(name: &str, map: &Map<String, Value>) -> anyhow::Result<T> {
    serde_json::from_value(Value::Object(map.clone())).with_context(|| format!("parameters of builtin predictor {name:?}"))
}

/// Weights `uniform[-scale, scale]` from a seeded stream.
pub fn seeded_weights(d: usize, scale: f64, seed: u64) -> Vec<f64> {
    use rand::Rng;
    let mut rng = stream_rng(seed, 1);
    (0..d).map(|_| rng.random_range(-scale..=scale)).collect()
}

/// Fixture predictors are anchored at the ground truth, or at the centre's
/// constant-velocity extrapolation when the scene has none.
fn anchor(scene: &Scene, t_future: usize) -> anyhow::Result<Trajectory> {
    match &scene.future_truth {
        Some(t) => Ok(t.clone()),
        None => Ok(Trajectory::new(constant_velocity_path(&scene.past, t_future), scene.past.unit())?),
    }
}

pub fn build(config: &PredictorConfig, scene: &Scene, t_future: usize) -> anyhow::Result<Box<dyn Predictor>> {
    match config {
        PredictorConfig::External {
            command,
            pool_size,
            timeout_secs,
        } => {
            if !(*timeout_secs > 0.0) {
                bail!("predictor timeout must be positive");
            }
            let cfg = ExternalConfig {
                command: command.clone(),
                pool_size: *pool_size,
                timeout: Duration::from_secs_f64(*timeout_secs),
            };
            Ok(Box::new(ExternalPredictor::spawn(&cfg)?))
        }
        PredictorConfig::Builtin { name, params: p } => build_builtin(name, p, scene, t_future),
    }
}

pub fn build_builtin(
    name: &str,
    p: &Map<String, Value>,
    scene: &Scene,
    t_future: usize,
) -> anyhow::Result<Box<dyn Predictor>> {
    let center = scene.past.flatten();
    Ok(match name {
        "constant-velocity" => {
            let p: CvParams = params(name, p)?;
            Box::new(ConstantVelocity::new(p.sigma, t_future)?)
        }
        "constant" => {
            if !p.is_empty() {
                bail!("builtin predictor \"constant\" takes no parameters");
            }
            let out = Trajectory::new(constant_velocity_path(&scene.past, t_future), scene.past.unit())?;
            Box::new(ConstantPredictor::new(out))
        }
        "affine-distance" => {
            let p: DistanceParams = params(name, p)?;
            let w = p
                .weights
                .unwrap_or_else(|| seeded_weights(center.dim(), p.weight_scale, p.seed));
            Box::new(AffinePredictor::distance_fixture(&center, &anchor(scene, t_future)?, w, p.offset)?)
        }
        "affine-random" => {
            let p: RandomParams = params(name, p)?;
            Box::new(AffinePredictor::random(&center, &anchor(scene, t_future)?, p.scale, p.sigma, p.seed)?)
        }
        "neighbor-sensitive" => {
            let p: NeighborParams = params(name, p)?;
            Box::new(AffinePredictor::neighbor_sensitive(
                &center,
                &anchor(scene, t_future)?,
                p.agent,
                p.step,
                p.axis,
                p.weight,
                p.offset,
                p.sigma,
            )?)
        }
        other => bail!("unknown builtin predictor {other:?} (known: {})", BUILTINS.join(", ")),
    })
}
