//! Uniform sampling in the L∞ ball and evaluation of the distance variable Δ.

use std::path::Path;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::par::{try_map_indexed, Workers};
use crate::predictor::{validate_batches, PredictionBatch, Predictor};
use crate::rng::{derive, stream_rng};
use crate::traj::{ade_k_argmin, FlatInput, Layout, Scene, ScenePast, Trajectory, Unit};
use crate::{Error, Result};

/// Which agents' past coordinates may move.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum AgentMask {
    #[default]
    All,
    AgentOnly,
    /// Agent indices, `0` being the target.
    Agents(Vec<usize>),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PerturbationSpec {
    pub radius: f64,
    #[serde(default)]
    pub agents: AgentMask,
}

impl PerturbationSpec {
    pub fn new(radius: f64) -> Result<Self> {
        let s = Self {
            radius,
            agents: AgentMask::All,
        };
        s.validate()?;
        Ok(s)
    }

    pub fn with_agents(mut self, agents: AgentMask) -> Self {
        self.agents = agents;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.radius > 0.0 && self.radius.is_finite()) {
            return Err(Error::invalid(format!("radius must be > 0, got {}", self.radius)));
        }
        Ok(())
    }

    /// Per flat coordinate: is it perturbed?
    pub fn mask(&self, layout: &Layout) -> Vec<bool> {
        (0..layout.dim())
            .map(|i| {
                let (agent, _, _) = layout.position(i);
                match &self.agents {
                    AgentMask::All => true,
                    AgentMask::AgentOnly => agent == 0,
                    AgentMask::Agents(list) => list.contains(&agent),
                }
            })
            .collect()
    }
}

/// Closed interval `[lo, hi]` of the ball around `c`, nudged inward so that
/// both `lo <= x <= hi` and `|x - c| <= r` hold for every `x` in it.
pub fn ball_bounds(c: f64, r: f64) -> (f64, f64) {
    let mut lo = c - r;
    while c - lo > r {
        lo = lo.next_up();
    }
    let mut hi = c + r;
    while hi - c > r {
        hi = hi.next_down();
    }
    (lo, hi)
}

/// Is `x` inside the ball (masked coordinates free, others pinned)?
pub fn in_ball(x: &FlatInput, center: &FlatInput, spec: &PerturbationSpec) -> bool {
    let mask = spec.mask(&center.layout);
    x.dim() == center.dim()
        && x.values
            .iter()
            .zip(&center.values)
            .zip(&mask)
            .all(|((&v, &c), &m)| if m { (v - c).abs() <= spec.radius } else { v == c })
}

/// `count` perturbed inputs, each coordinate independent uniform on its
/// interval. Sample `i` depends only on `(seed, i)`.
pub fn sample_inputs(
    center: &FlatInput,
    spec: &PerturbationSpec,
    count: usize,
    seed: u64,
) -> Result<Vec<FlatInput>> {
    spec.validate()?;
    let mask = spec.mask(&center.layout);
    let bounds: Vec<(f64, f64)> = center.values.iter().map(|&c| ball_bounds(c, spec.radius)).collect();
    Ok((0..count)
        .map(|i| {
            let mut rng = stream_rng(seed, i as u64);
            let values = center
                .values
                .iter()
                .zip(&bounds)
                .zip(&mask)
                .map(|((&c, &(lo, hi)), &m)| {
                    if m {
                        let u: f64 = rng.random_range(-1.0..=1.0);
                        (c + spec.radius * u).clamp(lo, hi)
                    } else {
                        c
                    }
                })
                .collect();
            center.with_values(values)
        })
        .collect())
}

/// Scene form of [`sample_inputs`].
pub fn sample_scenes(
    center: &ScenePast,
    spec: &PerturbationSpec,
    count: usize,
    seed: u64,
) -> Result<Vec<ScenePast>> {
    sample_inputs(&center.flatten(), spec, count, seed)?
        .iter()
        .map(|x| x.unflatten(center.unit()))
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DeltaKind {
    Label,
    Pure,
}

impl DeltaKind {
    pub fn name(self) -> &'static str {
        match self {
            DeltaKind::Label => "label",
            DeltaKind::Pure => "pure",
        }
    }
}

impl std::str::FromStr for DeltaKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "label" => Ok(DeltaKind::Label),
            "pure" => Ok(DeltaKind::Pure),
            other => Err(Error::invalid(format!("unknown robustness kind {other:?}"))),
        }
    }
}

/// How the unperturbed reference prediction is drawn for pure robustness.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", tag = "mode")]
pub enum PureMode {
    /// One fresh centre draw per evaluation.
    Fresh,
    /// Minimum over a fixed set of `m` centre draws.
    ReferenceSet { m: usize },
}

impl Default for PureMode {
    fn default() -> Self {
        PureMode::Fresh
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabeledSample {
    pub input: FlatInput,
    pub delta: f64,
    pub kind: DeltaKind,
}

#[derive(Debug, Clone)]
pub struct EvalOptions {
    pub kind: DeltaKind,
    /// Prediction samples per input, `K`.
    pub k: usize,
    pub pure_mode: PureMode,
    pub workers: Workers,
    /// Seed for the reference-set draws.
    pub seed: u64,
}

impl EvalOptions {
    pub fn new(kind: DeltaKind) -> Self {
        Self {
            kind,
            k: 20,
            pure_mode: PureMode::Fresh,
            workers: Workers::default(),
            seed: 0,
        }
    }
}

/// Details of one Δ evaluation.
#[derive(Debug, Clone)]
pub struct DeltaDetail {
    pub delta: f64,
    /// The K-sample set drawn at the input.
    pub batch: PredictionBatch,
    /// Index of the sample achieving the minimum.
    pub best_sample: usize,
    /// The trajectory it was compared with.
    pub reference: Trajectory,
}

/// Evaluates `Δ_label` or `Δ_pure` at perturbed inputs around one centre.
pub struct DeltaEvaluator<'a, P: Predictor + ?Sized> {
    predictor: &'a P,
    center: &'a Scene,
    options: EvalOptions,
    t_future: usize,
    reference_set: Vec<Trajectory>,
}

const REFSET_TAG: u64 = 0x7265_6673;

impl<'a, P: Predictor + ?Sized> DeltaEvaluator<'a, P> {
    pub fn new(predictor: &'a P, center: &'a Scene, options: EvalOptions) -> Result<Self> {
        if options.k == 0 {
            return Err(Error::invalid("K must be at least 1"));
        }
        let info = predictor.info();
        if let Some(tp) = info.t_past {
            if tp != center.past.t_past() {
                return Err(Error::invalid(format!(
                    "predictor expects {tp} past steps, scene has {}",
                    center.past.t_past()
                )));
            }
        }
        let t_future = match options.kind {
            DeltaKind::Label => {
                let truth = center.future_truth.as_ref().ok_or_else(|| {
                    Error::invalid("label robustness needs a scene with ground-truth future")
                })?;
                if truth.len() != info.t_future {
                    return Err(Error::invalid(format!(
                        "ground truth has {} steps, predictor forecasts {}",
                        truth.len(),
                        info.t_future
                    )));
                }
                truth.len()
            }
            DeltaKind::Pure => info.t_future,
        };
        let mut me = Self {
            predictor,
            center,
            options,
            t_future,
            reference_set: Vec::new(),
        };
        if let (DeltaKind::Pure, PureMode::ReferenceSet { m }) = (me.options.kind, me.options.pure_mode) {
            if m == 0 {
                return Err(Error::invalid("reference set size must be at least 1"));
            }
            let batch = me.draw(std::slice::from_ref(&center.past), m, derive(me.options.seed, &[REFSET_TAG]))?;
            me.reference_set = batch.into_iter().next().map(|b| b.samples).unwrap_or_default();
        }
        Ok(me)
    }

    pub fn options(&self) -> &EvalOptions {
        &self.options
    }

    pub fn center(&self) -> &Scene {
        self.center
    }

    pub fn predictor(&self) -> &P {
        self.predictor
    }

    pub fn unit(&self) -> Unit {
        self.center.past.unit()
    }

    fn draw(&self, scenes: &[ScenePast], k: usize, seed: u64) -> Result<Vec<PredictionBatch>> {
        let batches = self.predictor.predict_many(scenes, k, Some(seed))?;
        validate_batches(&batches, scenes.len(), k, self.t_future)?;
        Ok(batches)
    }

    /// Δ for every input. Chunk `c` of the inputs is predicted with seed
    /// `derive(seed, [c])`; output order follows input order.
    pub fn eval_many(&self, inputs: &[FlatInput], seed: u64) -> Result<Vec<f64>> {
        Ok(self.eval_many_detail(inputs, seed)?.into_iter().map(|d| d.delta).collect())
    }

    pub fn eval_many_detail(&self, inputs: &[FlatInput], seed: u64) -> Result<Vec<DeltaDetail>> {
        let chunk = self.predictor.info().max_batch.max(1);
        let n_chunks = inputs.len().div_ceil(chunk);
        let chunks = try_map_indexed(n_chunks, self.options.workers, |c| {
            let part = &inputs[c * chunk..((c + 1) * chunk).min(inputs.len())];
            self.eval_chunk(part, derive(seed, &[c as u64]))
        })?;
        Ok(chunks.into_iter().flatten().collect())
    }

    /// Δ at one input, reproducible from `(input, seed)`.
    pub fn eval(&self, input: &FlatInput, seed: u64) -> Result<f64> {
        Ok(self.eval_detail(input, seed)?.delta)
    }

    pub fn eval_detail(&self, input: &FlatInput, seed: u64) -> Result<DeltaDetail> {
        self.eval_chunk(std::slice::from_ref(input), derive(seed, &[0]))?
            .pop()
            .ok_or_else(|| Error::predictor("empty evaluation"))
    }

    fn eval_chunk(&self, inputs: &[FlatInput], seed: u64) -> Result<Vec<DeltaDetail>> {
        let unit = self.unit();
        let scenes = inputs
            .iter()
            .map(|x| x.unflatten(unit))
            .collect::<Result<Vec<_>>>()?;
        let batches = self.draw(&scenes, self.options.k, derive(seed, &[0]))?;
        let fresh_refs = match (self.options.kind, self.options.pure_mode) {
            (DeltaKind::Pure, PureMode::Fresh) => {
                let centers = vec![self.center.past.clone(); inputs.len()];
                self.draw(&centers, 1, derive(seed, &[1]))?
            }
            _ => Vec::new(),
        };
        batches
            .into_iter()
            .enumerate()
            .map(|(i, batch)| {
                let refs: &[Trajectory] = match self.options.kind {
                    DeltaKind::Label => std::slice::from_ref(
                        self.center.future_truth.as_ref().expect("checked at construction"),
                    ),
                    DeltaKind::Pure => match self.options.pure_mode {
                        PureMode::Fresh => &fresh_refs[i].samples,
                        PureMode::ReferenceSet { .. } => &self.reference_set,
                    },
                };
                let mut best: Option<(f64, usize, usize)> = None;
                for (j, r) in refs.iter().enumerate() {
                    let (k, v) = ade_k_argmin(&batch.samples, r)?;
                    if best.is_none_or(|b| v < b.0) {
                        best = Some((v, k, j));
                    }
                }
                let (delta, k, j) = best.ok_or_else(|| Error::predictor("no reference trajectory"))?;
                if !delta.is_finite() {
                    return Err(Error::predictor("non-finite distance from predictor output"));
                }
                Ok(DeltaDetail {
                    delta,
                    batch,
                    best_sample: k,
                    reference: refs[j].clone(),
                })
            })
            .collect()
    }

    /// Δ and its gradient with respect to the flat input, through the
    /// minimising sample, using the predictor's analytic Jacobian.
    pub fn eval_gradient(&self, input: &FlatInput, seed: u64) -> Result<(f64, Vec<f64>)> {
        let scene = input.unflatten(self.unit())?;
        let jac = self.predictor.output_jacobian(&scene).ok_or_else(|| {
            Error::invalid("predictor exposes no analytic gradient; use finite differences")
        })?;
        let detail = self.eval_detail(input, seed)?;
        let y = detail.batch.samples[detail.best_sample].points();
        let r = detail.reference.points();
        let t_f = y.len() as f64;
        let mut grad = vec![0.0; input.dim()];
        for (t, (p, q)) in y.iter().zip(r).enumerate() {
            let diff = [p[0] - q[0], p[1] - q[1]];
            let norm = diff[0].hypot(diff[1]);
            if norm == 0.0 {
                continue;
            }
            for axis in 0..2 {
                let coef = diff[axis] / norm / t_f;
                for (g, w) in grad.iter_mut().zip(&jac.rows[2 * t + axis]) {
                    *g += coef * w;
                }
            }
        }
        Ok((detail.delta, grad))
    }
}

/// `Δ_label` at one perturbed scene, `ADE_K(g(X), Y_f)`.
pub fn eval_delta_label<P: Predictor + ?Sized>(
    scene: &ScenePast,
    truth: &Trajectory,
    predictor: &P,
    k: usize,
    seed: u64,
) -> Result<f64> {
    let batch = predictor.predict_many(std::slice::from_ref(scene), k, Some(seed))?;
    validate_batches(&batch, 1, k, truth.len())?;
    let (_, v) = ade_k_argmin(&batch[0].samples, truth)?;
    Ok(v)
}

/// `Δ_pure` at one perturbed scene against draws at `center`.
pub fn eval_delta_pure<P: Predictor + ?Sized>(
    scene: &ScenePast,
    center: &ScenePast,
    predictor: &P,
    k: usize,
    mode: PureMode,
    seed: u64,
) -> Result<f64> {
    let wrapped = Scene::new(center.clone(), None, Default::default())?;
    let opts = EvalOptions {
        kind: DeltaKind::Pure,
        k,
        pure_mode: mode,
        workers: Workers::SEQUENTIAL,
        seed: derive(seed, &[REFSET_TAG]),
    };
    DeltaEvaluator::new(predictor, &wrapped, opts)?.eval(&scene.flatten(), seed)
}

/// Draw `count` inputs and evaluate them: inputs from `derive(seed, [0])`,
/// predictions from `derive(seed, [1])`.
pub fn draw_labeled<P: Predictor + ?Sized>(
    evaluator: &DeltaEvaluator<'_, P>,
    spec: &PerturbationSpec,
    count: usize,
    seed: u64,
) -> Result<Vec<LabeledSample>> {
    let center = evaluator.center().past.flatten();
    let inputs = sample_inputs(&center, spec, count, derive(seed, &[0]))?;
    let deltas = evaluator.eval_many(&inputs, derive(seed, &[1]))?;
    let kind = evaluator.options().kind;
    Ok(inputs
        .into_iter()
        .zip(deltas)
        .map(|(input, delta)| LabeledSample { input, delta, kind })
        .collect())
}

/// CSV dump with header `idx,delta,coord_0,...,coord_{d-1}`.
pub fn write_samples_csv(path: &Path, samples: &[LabeledSample]) -> Result<()> {
    let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = csv::Writer::from_writer(std::io::BufWriter::new(file));
    let d = samples.first().map_or(0, |s| s.input.dim());
    let mut header = vec!["idx".to_string(), "delta".to_string()];
    header.extend((0..d).map(|i| format!("coord_{i}")));
    w.write_record(&header)?;
    for (i, s) in samples.iter().enumerate() {
        let mut row = vec![i.to_string(), s.delta.to_string()];
        row.extend(s.input.values.iter().map(f64::to_string));
        w.write_record(&row)?;
    }
    w.flush().map_err(|e| Error::io(path, e))?;
    Ok(())
}
