//! Trajectories, scenes and displacement metrics.

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// A 2-D position `[x, y]`.
pub type Point = [f64; 2];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum Unit {
    #[default]
    Meters,
    Pixels,
}

impl std::str::FromStr for Unit {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "m" | "meter" | "meters" => Ok(Unit::Meters),
            "px" | "pixel" | "pixels" => Ok(Unit::Pixels),
            other => Err(Error::invalid(format!("unknown unit {other:?}"))),
        }
    }
}

/// An ordered, non-empty sequence of finite 2-D points sharing one unit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    points: Vec<Point>,
    unit: Unit,
}

impl Trajectory {
    pub fn new(points: Vec<Point>, unit: Unit) -> Result<Self> {
        if points.is_empty() {
            return Err(Error::invalid("trajectory must contain at least one point"));
        }
        if let Some(t) = points.iter().position(|p| !p[0].is_finite() || !p[1].is_finite()) {
            return Err(Error::invalid(format!("non-finite coordinate at step {t}")));
        }
        Ok(Self { points, unit })
    }

    pub fn points(&self) -> &[Point] {
        &self.points
    }

    pub fn unit(&self) -> Unit {
        self.unit
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn last(&self) -> Point {
        self.points[self.points.len() - 1]
    }

    /// Copy of this trajectory with every point shifted by `offset`.
    pub fn translated(&self, offset: Point) -> Self {
        Self {
            points: self
                .points
                .iter()
                .map(|p| [p[0] + offset[0], p[1] + offset[1]])
                .collect(),
            unit: self.unit,
        }
    }
}

/// Past paths of the target agent and its neighbours, all of length `T_p`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenePast {
    pub agent: Trajectory,
    pub neighbors: Vec<Trajectory>,
}

impl ScenePast {
    pub fn new(agent: Trajectory, neighbors: Vec<Trajectory>) -> Result<Self> {
        let t_past = agent.len();
        for (i, n) in neighbors.iter().enumerate() {
            if n.len() != t_past {
                return Err(Error::invalid(format!(
                    "neighbor {} has {} past steps, agent has {t_past}",
                    i + 1,
                    n.len()
                )));
            }
            if n.unit() != agent.unit() {
                return Err(Error::invalid(format!("neighbor {} unit mismatch", i + 1)));
            }
        }
        Ok(Self { agent, neighbors })
    }

    pub fn t_past(&self) -> usize {
        self.agent.len()
    }

    /// Number of agents including the target, `N + 1`.
    pub fn n_agents(&self) -> usize {
        self.neighbors.len() + 1
    }

    pub fn unit(&self) -> Unit {
        self.agent.unit()
    }

    pub fn layout(&self) -> Layout {
        Layout::new(self.n_agents(), self.t_past())
    }

    /// Agent `0` is the target, agent `i >= 1` is `neighbors[i - 1]`.
    pub fn path(&self, agent: usize) -> &Trajectory {
        if agent == 0 {
            &self.agent
        } else {
            &self.neighbors[agent - 1]
        }
    }

    pub fn flatten(&self) -> FlatInput {
        let layout = self.layout();
        let mut values = Vec::with_capacity(layout.dim());
        for a in 0..layout.n_agents {
            for p in self.path(a).points() {
                values.extend_from_slice(p);
            }
        }
        FlatInput { values, layout }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize, Default, PartialEq)]
pub struct SceneMeta {
    pub name: String,
    pub frame: i64,
    pub pedestrian: i64,
}

/// A verification scene: past paths, optional ground-truth future, metadata.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scene {
    pub past: ScenePast,
    pub future_truth: Option<Trajectory>,
    pub meta: SceneMeta,
}

impl Scene {
    pub fn new(past: ScenePast, future_truth: Option<Trajectory>, meta: SceneMeta) -> Result<Self> {
        if let Some(f) = &future_truth {
            if f.unit() != past.unit() {
                return Err(Error::invalid("future truth unit differs from past"));
            }
        }
        Ok(Self {
            past,
            future_truth,
            meta,
        })
    }

    pub fn t_future(&self) -> Option<usize> {
        self.future_truth.as_ref().map(Trajectory::len)
    }
}

/// Coordinate axis within a point.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Axis {
    X,
    Y,
}

impl Axis {
    pub fn index(self) -> usize {
        match self {
            Axis::X => 0,
            Axis::Y => 1,
        }
    }

    pub fn from_index(i: usize) -> Self {
        if i == 0 {
            Axis::X
        } else {
            Axis::Y
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Axis::X => "x",
            Axis::Y => "y",
        }
    }
}

/// Agent-major, then timestep, then axis (x before y).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Layout {
    pub n_agents: usize,
    pub t_past: usize,
}

impl Layout {
    pub fn new(n_agents: usize, t_past: usize) -> Self {
        Self { n_agents, t_past }
    }

    /// `d = 2 * T_p * (N + 1)`.
    pub fn dim(&self) -> usize {
        2 * self.t_past * self.n_agents
    }

    pub fn index(&self, agent: usize, t: usize, axis: Axis) -> usize {
        debug_assert!(agent < self.n_agents && t < self.t_past);
        (agent * self.t_past + t) * 2 + axis.index()
    }

    pub fn position(&self, index: usize) -> (usize, usize, Axis) {
        let axis = Axis::from_index(index % 2);
        let step = index / 2;
        (step / self.t_past, step % self.t_past, axis)
    }

    pub fn unflatten(&self, values: &[f64], unit: Unit) -> Result<ScenePast> {
        if values.len() != self.dim() {
            return Err(Error::invalid(format!(
                "flat input has {} values, layout expects {}",
                values.len(),
                self.dim()
            )));
        }
        let mut paths = values.chunks(2 * self.t_past).map(|chunk| {
            Trajectory::new(chunk.chunks(2).map(|p| [p[0], p[1]]).collect(), unit)
        });
        let agent = paths.next().ok_or_else(|| Error::invalid("empty layout"))??;
        let neighbors = paths.collect::<Result<Vec<_>>>()?;
        ScenePast::new(agent, neighbors)
    }
}

/// The flattened past coordinates of every agent.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FlatInput {
    pub values: Vec<f64>,
    pub layout: Layout,
}

impl FlatInput {
    pub fn dim(&self) -> usize {
        self.values.len()
    }

    pub fn unflatten(&self, unit: Unit) -> Result<ScenePast> {
        self.layout.unflatten(&self.values, unit)
    }

    pub fn with_values(&self, values: Vec<f64>) -> Self {
        debug_assert_eq!(values.len(), self.values.len());
        Self {
            values,
            layout: self.layout,
        }
    }
}

fn check_comparable(a: &Trajectory, b: &Trajectory) -> Result<()> {
    if a.len() != b.len() {
        return Err(Error::invalid(format!(
            "trajectory lengths differ ({} vs {})",
            a.len(),
            b.len()
        )));
    }
    if a.unit() != b.unit() {
        return Err(Error::invalid("trajectory units differ"));
    }
    Ok(())
}

/// Average displacement error: mean Euclidean distance over matching steps.
pub fn ade(a: &Trajectory, b: &Trajectory) -> Result<f64> {
    check_comparable(a, b)?;
    Ok(ade_unchecked(a.points(), b.points()))
}

pub(crate) fn ade_unchecked(a: &[Point], b: &[Point]) -> f64 {
    let sum: f64 = a
        .iter()
        .zip(b)
        .map(|(p, q)| (p[0] - q[0]).hypot(p[1] - q[1]))
        .sum();
    sum / a.len() as f64
}

/// Best-of-K ADE: the smallest ADE between any candidate and the reference.
pub fn ade_k(candidates: &[Trajectory], reference: &Trajectory) -> Result<f64> {
    Ok(ade_k_argmin(candidates, reference)?.1)
}

/// `(index, value)` of the minimising candidate; the first one wins ties.
pub fn ade_k_argmin(candidates: &[Trajectory], reference: &Trajectory) -> Result<(usize, f64)> {
    if candidates.is_empty() {
        return Err(Error::invalid("ADE_K needs at least one candidate"));
    }
    let mut best = (0, f64::INFINITY);
    for (k, c) in candidates.iter().enumerate() {
        let v = ade(c, reference)?;
        if v < best.1 {
            best = (k, v);
        }
    }
    Ok(best)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn traj(points: &[(f64, f64)]) -> Trajectory {
        Trajectory::new(points.iter().map(|&(x, y)| [x, y]).collect(), Unit::Meters).unwrap()
    }

    #[test]
    fn ade_identity_and_hypotenuse() {
        let y = traj(&[(1.0, 2.0), (3.0, -1.0)]);
        assert_eq!(ade(&y, &y).unwrap(), 0.0);
        let a = traj(&[(0.0, 0.0), (0.0, 0.0)]);
        let b = traj(&[(3.0, 4.0), (3.0, 4.0)]);
        assert_eq!(ade(&a, &b).unwrap(), 5.0);
    }

    #[test]
    fn ade_rejects_mismatches() {
        let a = traj(&[(0.0, 0.0)]);
        let b = traj(&[(0.0, 0.0), (1.0, 1.0)]);
        assert!(matches!(ade(&a, &b), Err(Error::InvalidArgument(_))));
        let px = Trajectory::new(vec![[0.0, 0.0]], Unit::Pixels).unwrap();
        assert!(matches!(ade(&a, &px), Err(Error::InvalidArgument(_))));
    }

    #[test]
    fn trajectory_rejects_empty_and_nan() {
        assert!(Trajectory::new(vec![], Unit::Meters).is_err());
        assert!(Trajectory::new(vec![[f64::NAN, 0.0]], Unit::Meters).is_err());
    }

    #[test]
    fn ade_k_cases() {
        let y = traj(&[(0.0, 0.0), (1.0, 1.0)]);
        let off = y.translated([0.5, 0.0]);
        assert_eq!(ade_k(&[off.clone()], &y).unwrap(), ade(&off, &y).unwrap());
        assert_eq!(ade_k(&[off.clone(), y.clone()], &y).unwrap(), 0.0);
        assert!(ade_k(&[], &y).is_err());
    }

    #[test]
    fn flatten_layout() {
        let s = ScenePast::new(traj(&[(1.0, 2.0), (3.0, 4.0)]), vec![]).unwrap();
        assert_eq!(s.flatten().values, vec![1.0, 2.0, 3.0, 4.0]);

        let l = Layout::new(2, 8);
        assert_eq!(l.dim(), 32);
        assert_eq!(l.index(1, 0, Axis::X), 16);
        assert_eq!(l.position(16), (1, 0, Axis::X));
        assert_eq!(l.position(31), (1, 7, Axis::Y));
    }

    #[test]
    fn scene_rejects_ragged_neighbors() {
        let a = traj(&[(0.0, 0.0), (1.0, 0.0)]);
        let n = traj(&[(0.0, 0.0)]);
        assert!(ScenePast::new(a, vec![n]).is_err());
    }

    fn arb_scene() -> impl Strategy<Value = ScenePast> {
        (1usize..4, 1usize..9).prop_flat_map(|(agents, t)| {
            prop::collection::vec(-100.0f64..100.0, 2 * agents * t).prop_map(move |v| {
                Layout::new(agents, t).unflatten(&v, Unit::Meters).unwrap()
            })
        })
    }

    fn arb_pair(t: usize) -> impl Strategy<Value = Vec<Trajectory>> {
        prop::collection::vec(prop::collection::vec((-50.0f64..50.0, -50.0f64..50.0), t), 3)
            .prop_map(|v| v.iter().map(|p| traj(p)).collect())
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(1000))]

        #[test]
        fn flatten_roundtrip(s in arb_scene()) {
            let flat = s.flatten();
            prop_assert_eq!(flat.dim(), flat.layout.dim());
            prop_assert_eq!(flat.unflatten(s.unit()).unwrap(), s);
        }
    }

    proptest! {
        #[test]
        fn ade_is_a_metric(v in arb_pair(6)) {
            let (a, b, c) = (&v[0], &v[1], &v[2]);
            let ab = ade(a, b).unwrap();
            prop_assert!(ab >= 0.0);
            prop_assert!((ab - ade(b, a).unwrap()).abs() <= 1e-9);
            prop_assert!(ab <= ade(a, c).unwrap() + ade(c, b).unwrap() + 1e-9);
            prop_assert_eq!(ade(a, a).unwrap(), 0.0);
        }

        #[test]
        fn ade_k_bounded_and_monotone(v in arb_pair(4), extra in arb_pair(4)) {
            let reference = &extra[0];
            let small = ade_k(&v, reference).unwrap();
            for c in &v {
                prop_assert!(small <= ade(c, reference).unwrap());
            }
            let mut more = v.clone();
            more.extend_from_slice(&extra[1..]);
            prop_assert!(ade_k(&more, reference).unwrap() <= small);
        }
    }
}
