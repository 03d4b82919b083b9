//! In-process synthetic predictors.
//!
//! Noise for scene `j` of a seeded call is drawn from a ChaCha stream keyed
//! by `derive(seed, [j])`, so batches are reproducible however they are
//! scheduled.

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use super::{OutputJacobian, PredictionBatch, Predictor, PredictorInfo};
use crate::rng::{derive, entropy_seed, stream_rng};
use crate::traj::{FlatInput, Layout, Point, ScenePast, Trajectory, Axis};
use crate::{Error, Result};

const BUILTIN_MAX_BATCH: usize = 256;

fn scene_rng(seed: Option<u64>, base: u64, scene: usize) -> ChaCha8Rng {
    stream_rng(derive(seed.unwrap_or(base), &[scene as u64]), 0)
}

fn check_sigma(sigma: f64) -> Result<()> {
    if !(sigma >= 0.0 && sigma.is_finite()) {
        return Err(Error::invalid(format!("noise sigma must be >= 0, got {sigma}")));
    }
    Ok(())
}

fn noisy(p: Point, sigma: f64, rng: &mut ChaCha8Rng) -> Point {
    if sigma == 0.0 {
        return p;
    }
    let nx: f64 = rng.sample(StandardNormal);
    let ny: f64 = rng.sample(StandardNormal);
    [p[0] + sigma * nx, p[1] + sigma * ny]
}

/// Linear extrapolation of the agent's last step plus isotropic Gaussian noise.
#[derive(Debug, Clone)]
pub struct ConstantVelocity {
    sigma: f64,
    t_future: usize,
}

impl ConstantVelocity {
    pub fn new(sigma: f64, t_future: usize) -> Result<Self> {
        check_sigma(sigma)?;
        if t_future == 0 {
            return Err(Error::invalid("t_future must be at least 1"));
        }
        Ok(Self { sigma, t_future })
    }

    pub fn sigma(&self) -> f64 {
        self.sigma
    }

    /// The noise-free forecast.
    pub fn extrapolate(&self, scene: &ScenePast) -> Vec<Point> {
        constant_velocity_path(scene, self.t_future)
    }
}

/// Continue the agent's last displacement for `t_future` steps.
pub fn constant_velocity_path(scene: &ScenePast, t_future: usize) -> Vec<Point> {
    let pts = scene.agent.points();
    let last = pts[pts.len() - 1];
    let v = if pts.len() >= 2 {
        let prev = pts[pts.len() - 2];
        [last[0] - prev[0], last[1] - prev[1]]
    } else {
        [0.0, 0.0]
    };
    (1..=t_future)
        .map(|t| [last[0] + t as f64 * v[0], last[1] + t as f64 * v[1]])
        .collect()
}

impl Predictor for ConstantVelocity {
    fn info(&self) -> PredictorInfo {
        PredictorInfo {
            name: "constant-velocity".into(),
            t_past: None,
            t_future: self.t_future,
            max_batch: BUILTIN_MAX_BATCH,
        }
    }

    fn predict_many(
        &self,
        scenes: &[ScenePast],
        k: usize,
        seed: Option<u64>,
    ) -> Result<Vec<PredictionBatch>> {
        let base = entropy_seed();
        scenes
            .iter()
            .enumerate()
            .map(|(j, scene)| {
                let mean = self.extrapolate(scene);
                let mut rng = scene_rng(seed, base, j);
                let samples = (0..k)
                    .map(|_| {
                        let pts = mean.iter().map(|&p| noisy(p, self.sigma, &mut rng)).collect();
                        Trajectory::new(pts, scene.unit())
                    })
                    .collect::<Result<_>>()?;
                Ok(PredictionBatch { samples })
            })
            .collect()
    }
}

/// Ignores its input and always returns the same trajectory.
#[derive(Debug, Clone)]
pub struct ConstantPredictor {
    output: Trajectory,
}

impl ConstantPredictor {
    pub fn new(output: Trajectory) -> Self {
        Self { output }
    }
}

impl Predictor for ConstantPredictor {
    fn info(&self) -> PredictorInfo {
        PredictorInfo {
            name: "constant".into(),
            t_past: None,
            t_future: self.output.len(),
            max_batch: BUILTIN_MAX_BATCH,
        }
    }

    fn predict_many(
        &self,
        scenes: &[ScenePast],
        k: usize,
        _seed: Option<u64>,
    ) -> Result<Vec<PredictionBatch>> {
        Ok(scenes
            .iter()
            .map(|_| PredictionBatch {
                samples: vec![self.output.clone(); k],
            })
            .collect())
    }
}

/// Each output coordinate is a fixed affine map of the flat input,
/// `out = W (x - origin) + offset`, plus optional isotropic noise.
#[derive(Debug, Clone)]
pub struct AffinePredictor {
    name: String,
    /// `2 * t_future` rows of length `d`, row `2t + axis`.
    weights: Vec<Vec<f64>>,
    offset: Vec<f64>,
    origin: Vec<f64>,
    sigma: f64,
}

impl AffinePredictor {
    pub fn new(weights: Vec<Vec<f64>>, offset: Vec<f64>, origin: Vec<f64>, sigma: f64) -> Result<Self> {
        check_sigma(sigma)?;
        if weights.is_empty() || weights.len() % 2 != 0 {
            return Err(Error::invalid("affine predictor needs 2 * t_future weight rows"));
        }
        if offset.len() != weights.len() {
            return Err(Error::invalid("offset length must equal the number of weight rows"));
        }
        let d = origin.len();
        if weights.iter().any(|r| r.len() != d) {
            return Err(Error::invalid("every weight row must have the input dimension"));
        }
        let finite = |v: &[f64]| v.iter().all(|x| x.is_finite());
        if !weights.iter().all(|r| finite(r)) || !finite(&offset) || !finite(&origin) {
            return Err(Error::invalid("affine predictor parameters must be finite"));
        }
        Ok(Self {
            name: "affine".into(),
            weights,
            offset,
            origin,
            sigma,
        })
    }

    /// Output `anchor + (c + w·(x − center), 0)` at every future step: the
    /// distance to `anchor` is exactly `c + w·(x − center)` wherever that is
    /// positive.
    pub fn displacement(
        center: &FlatInput,
        anchor: &Trajectory,
        weights: Vec<f64>,
        offset: f64,
        sigma: f64,
    ) -> Result<Self> {
        if weights.len() != center.dim() {
            return Err(Error::invalid(format!(
                "weight vector has {} entries, input dimension is {}",
                weights.len(),
                center.dim()
            )));
        }
        let d = center.dim();
        let mut rows = Vec::with_capacity(2 * anchor.len());
        let mut off = Vec::with_capacity(2 * anchor.len());
        for p in anchor.points() {
            rows.push(weights.clone());
            rows.push(vec![0.0; d]);
            off.push(p[0] + offset);
            off.push(p[1]);
        }
        let mut me = Self::new(rows, off, center.values.clone(), sigma)?;
        me.name = "displacement".into();
        Ok(me)
    }

    /// Deterministic fixture whose label distance to `truth` is affine in the
    /// input over any ball where `offset - r * |w|_1 > 0`.
    pub fn distance_fixture(center: &FlatInput, truth: &Trajectory, weights: Vec<f64>, offset: f64) -> Result<Self> {
        let mut me = Self::displacement(center, truth, weights, offset, 0.0)?;
        me.name = "affine-distance".into();
        Ok(me)
    }

    /// Output depends on a single past coordinate with weight `weight`.
    #[allow(clippy::too_many_arguments)]
    pub fn neighbor_sensitive(
        center: &FlatInput,
        anchor: &Trajectory,
        agent: usize,
        step: usize,
        axis: Axis,
        weight: f64,
        offset: f64,
        sigma: f64,
    ) -> Result<Self> {
        let layout = center.layout;
        if agent >= layout.n_agents || step >= layout.t_past {
            return Err(Error::invalid(format!(
                "coordinate (agent {agent}, step {step}) outside layout {}x{}",
                layout.n_agents, layout.t_past
            )));
        }
        let mut w = vec![0.0; center.dim()];
        w[layout.index(agent, step, axis)] = weight;
        let mut me = Self::displacement(center, anchor, w, offset, sigma)?;
        me.name = "neighbor-sensitive".into();
        Ok(me)
    }

    /// Dense random weights in `[-scale, scale]` around `anchor`.
    pub fn random(
        center: &FlatInput,
        anchor: &Trajectory,
        scale: f64,
        sigma: f64,
        seed: u64,
    ) -> Result<Self> {
        let d = center.dim();
        let mut rng = stream_rng(seed, 0);
        let rows: Vec<Vec<f64>> = (0..2 * anchor.len())
            .map(|_| (0..d).map(|_| rng.random_range(-scale..=scale)).collect())
            .collect();
        let off = anchor.points().iter().flat_map(|p| [p[0], p[1]]).collect();
        Self::new(rows, off, center.values.clone(), sigma)
    }

    pub fn t_future(&self) -> usize {
        self.weights.len() / 2
    }

    pub fn dim(&self) -> usize {
        self.origin.len()
    }

    pub fn layout_matches(&self, layout: &Layout) -> bool {
        layout.dim() == self.dim()
    }

    /// Noise-free output at flat input `x`.
    pub fn mean_output(&self, x: &[f64]) -> Vec<Point> {
        let rows: Vec<f64> = self
            .weights
            .iter()
            .zip(&self.offset)
            .map(|(w, b)| {
                let dot: f64 = w
                    .iter()
                    .zip(x.iter().zip(&self.origin))
                    .map(|(wi, (xi, oi))| wi * (xi - oi))
                    .sum();
                b + dot
            })
            .collect();
        rows.chunks(2).map(|c| [c[0], c[1]]).collect()
    }
}

impl Predictor for AffinePredictor {
    fn info(&self) -> PredictorInfo {
        PredictorInfo {
            name: self.name.clone(),
            t_past: None,
            t_future: self.t_future(),
            max_batch: BUILTIN_MAX_BATCH,
        }
    }

    fn predict_many(
        &self,
        scenes: &[ScenePast],
        k: usize,
        seed: Option<u64>,
    ) -> Result<Vec<PredictionBatch>> {
        let base = entropy_seed();
        scenes
            .iter()
            .enumerate()
            .map(|(j, scene)| {
                let x = scene.flatten();
                if x.dim() != self.dim() {
                    return Err(Error::predictor(format!(
                        "{} predictor built for dimension {}, got {}",
                        self.name,
                        self.dim(),
                        x.dim()
                    )));
                }
                let mean = self.mean_output(&x.values);
                let mut rng = scene_rng(seed, base, j);
                let samples = (0..k)
                    .map(|_| {
                        let pts = mean.iter().map(|&p| noisy(p, self.sigma, &mut rng)).collect();
                        Trajectory::new(pts, scene.unit())
                    })
                    .collect::<Result<_>>()?;
                Ok(PredictionBatch { samples })
            })
            .collect()
    }

    fn output_jacobian(&self, _scene: &ScenePast) -> Option<OutputJacobian> {
        Some(OutputJacobian {
            rows: self.weights.clone(),
        })
    }
}
