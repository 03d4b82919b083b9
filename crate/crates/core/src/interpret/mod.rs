//! Sensitivity attribution from surrogate coefficients.
//!
//! The sensitivity of a coordinate is `|α_i| / max_j |α_j|`. A step's
//! sensitivity is the larger of its x and y entries; a path's score is the
//! sum over its coordinates (the mean is reported too, paths being equally
//! long). Agent `0` is the predicted agent, agent `i ≥ 1` neighbour `i`.

mod render;

use serde::{Deserialize, Serialize};

pub use render::{read_csv, render, write_csv, write_svg, RenderFormat};

use crate::learner::AffineSurrogate;
use crate::traj::{Axis, Layout};
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PathScore {
    pub agent: usize,
    pub sum: f64,
    pub mean: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Coordinate {
    pub agent: usize,
    pub step: usize,
    pub axis: Axis,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SensitivityMap {
    pub layout: Layout,
    /// Flat, in layout order.
    pub values: Vec<f64>,
    /// `[agent][step]`, max over axes.
    pub per_step: Vec<Vec<f64>>,
    /// All paths, best first.
    pub paths: Vec<PathScore>,
    /// Highest-sensitivity coordinate, lowest flat index on ties; `None`
    /// when every coefficient is zero.
    pub critical_step: Option<Coordinate>,
}

impl SensitivityMap {
    pub fn from_values(layout: Layout, values: Vec<f64>) -> Result<Self> {
        if values.len() != layout.dim() {
            return Err(Error::invalid(format!(
                "{} sensitivities for a layout of dimension {}",
                values.len(),
                layout.dim()
            )));
        }
        let per_step = (0..layout.n_agents)
            .map(|a| {
                (0..layout.t_past)
                    .map(|t| {
                        values[layout.index(a, t, Axis::X)].max(values[layout.index(a, t, Axis::Y)])
                    })
                    .collect()
            })
            .collect();
        let block = 2 * layout.t_past;
        let mut paths: Vec<PathScore> = (0..layout.n_agents)
            .map(|a| {
                let sum: f64 = values[a * block..(a + 1) * block].iter().sum();
                PathScore {
                    agent: a,
                    sum,
                    mean: sum / block as f64,
                }
            })
            .collect();
        paths.sort_by(|a, b| b.sum.total_cmp(&a.sum).then(a.agent.cmp(&b.agent)));
        let critical_step = values
            .iter()
            .enumerate()
            .filter(|(_, &v)| v > 0.0)
            .fold(None::<(usize, f64)>, |best, (i, &v)| match best {
                Some((_, b)) if b >= v => best,
                _ => Some((i, v)),
            })
            .map(|(i, _)| {
                let (agent, step, axis) = layout.position(i);
                Coordinate { agent, step, axis }
            });
        Ok(Self {
            layout,
            values,
            per_step,
            paths,
            critical_step,
        })
    }

    pub fn top_paths(&self, n: usize) -> &[PathScore] {
        &self.paths[..n.min(self.paths.len())]
    }

    pub fn critical_path(&self) -> Option<usize> {
        self.critical_step.map(|_| self.paths[0].agent)
    }

    pub fn get(&self, agent: usize, step: usize, axis: Axis) -> f64 {
        self.values[self.layout.index(agent, step, axis)]
    }
}

/// Normalised coefficient magnitudes of `surrogate`.
pub fn sensitivity(surrogate: &AffineSurrogate, layout: &Layout) -> Result<SensitivityMap> {
    if surrogate.dim() != layout.dim() {
        return Err(Error::invalid(format!(
            "surrogate dimension {} does not match layout dimension {}",
            surrogate.dim(),
            layout.dim()
        )));
    }
    Ok(SensitivityMap::from_values(*layout, normalized_magnitudes(&surrogate.alpha))?)
}

pub fn normalized_magnitudes(alpha: &[f64]) -> Vec<f64> {
    let top = alpha.iter().fold(0.0f64, |m, a| m.max(a.abs()));
    if top == 0.0 {
        return vec![0.0; alpha.len()];
    }
    alpha.iter().map(|a| a.abs() / top).collect()
}
