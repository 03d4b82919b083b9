//! Line-delimited JSON wire protocol between the verifier and a predictor
//! process.
//!
//! ```text
//! -> {"op":"info"}
//! <- {"t_past":8,"t_future":12,"max_batch":64,"name":"..."}
//! -> {"op":"predict","seed":123,"k":20,"scenes":[{"agent":[[x,y],...],"neighbors":[[[x,y],...],...]}]}
//! <- {"predictions":[[[[x,y],...],...],...]}
//! -> {"op":"shutdown"}
//! ```
//!
//! Errors are replied as `{"error":"msg"}`. Unknown keys are ignored.

use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};
use serde_json::Value;

use super::{PredictionBatch, Predictor};
use crate::traj::{Point, ScenePast, Trajectory, Unit};
use crate::{Error, Result};

/// Seeds travel as JSON numbers; keep them exactly representable as doubles.
pub const WIRE_SEED_MASK: u64 = (1 << 53) - 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "op", rename_all = "lowercase")]
pub enum Request {
    Info,
    Predict {
        #[serde(default, skip_serializing_if = "Option::is_none")]
        seed: Option<u64>,
        k: usize,
        scenes: Vec<WireScene>,
    },
    Shutdown,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WireScene {
    pub agent: Vec<Point>,
    #[serde(default)]
    pub neighbors: Vec<Vec<Point>>,
}

impl WireScene {
    pub fn from_past(scene: &ScenePast) -> Self {
        Self {
            agent: scene.agent.points().to_vec(),
            neighbors: scene.neighbors.iter().map(|n| n.points().to_vec()).collect(),
        }
    }

    pub fn to_past(&self, unit: Unit) -> Result<ScenePast> {
        let agent = Trajectory::new(self.agent.clone(), unit)?;
        let neighbors = self
            .neighbors
            .iter()
            .map(|n| Trajectory::new(n.clone(), unit))
            .collect::<Result<_>>()?;
        ScenePast::new(agent, neighbors)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct InfoReply {
    pub t_past: usize,
    pub t_future: usize,
    pub max_batch: usize,
    #[serde(default)]
    pub name: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredictReply {
    pub predictions: Vec<Vec<Vec<Point>>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ErrorReply {
    pub error: String,
}

/// Parse one reply line, turning `{"error": ...}` into a predictor error.
pub fn parse_reply<T: for<'de> Deserialize<'de>>(line: &str) -> Result<T> {
    let value: Value = serde_json::from_str(line)
        .map_err(|e| Error::predictor(format!("malformed reply ({e}): {}", truncate(line))))?;
    if let Some(msg) = value.get("error") {
        let msg = msg.as_str().map(str::to_string).unwrap_or_else(|| msg.to_string());
        return Err(Error::predictor(format!("predictor replied with error: {msg}")));
    }
    serde_json::from_value(value)
        .map_err(|e| Error::predictor(format!("reply violates schema ({e}): {}", truncate(line))))
}

fn truncate(s: &str) -> String {
    if s.len() <= 200 {
        s.to_string()
    } else {
        let cut = (0..=200).rev().find(|&i| s.is_char_boundary(i)).unwrap_or(0);
        format!("{}...", &s[..cut])
    }
}

pub fn reply_to_batches(reply: PredictReply, unit: Unit) -> Result<Vec<PredictionBatch>> {
    reply
        .predictions
        .into_iter()
        .map(|samples| {
            Ok(PredictionBatch {
                samples: samples
                    .into_iter()
                    .map(|pts| Trajectory::new(pts, unit))
                    .collect::<Result<_>>()
                    .map_err(|e| Error::predictor(format!("bad predicted trajectory: {e}")))?,
            })
        })
        .collect()
}

/// Deliberate protocol violations, for exercising conformance checks.
#[derive(Debug, Clone, Default)]
pub struct Faults {
    /// Return one future point fewer than declared.
    pub truncate_future: bool,
    /// Replace the request seed with fresh entropy.
    pub ignore_seed: bool,
    /// Exit without replying once this many predict requests were received.
    pub exit_after_predicts: Option<usize>,
    /// Sleep before every predict reply.
    pub delay_ms: u64,
}

/// Serve `predictor` over the protocol until shutdown or end of input.
pub fn serve<P, R, W>(predictor: &P, t_past: usize, input: R, mut output: W, faults: &Faults) -> Result<()>
where
    P: Predictor + ?Sized,
    R: BufRead,
    W: Write,
{
    let info = predictor.info();
    let mut predicts = 0usize;
    let io_err = |e| Error::io("<protocol stream>", e);
    for line in input.lines() {
        let line = line.map_err(io_err)?;
        if line.trim().is_empty() {
            continue;
        }
        let reply = match serde_json::from_str::<Request>(&line) {
            Err(e) => serde_json::to_string(&ErrorReply { error: format!("bad request: {e}") })?,
            Ok(Request::Shutdown) => return Ok(()),
            Ok(Request::Info) => serde_json::to_string(&InfoReply {
                t_past,
                t_future: info.t_future,
                max_batch: info.max_batch,
                name: info.name.clone(),
            })?,
            Ok(Request::Predict { seed, k, scenes }) => {
                predicts += 1;
                if faults.exit_after_predicts.is_some_and(|n| predicts > n) {
                    return Ok(());
                }
                if faults.delay_ms > 0 {
                    std::thread::sleep(std::time::Duration::from_millis(faults.delay_ms));
                }
                let seed = if faults.ignore_seed { Some(crate::rng::entropy_seed()) } else { seed };
                match answer_predict(predictor, t_past, seed, k, &scenes, faults) {
                    Ok(r) => serde_json::to_string(&r)?,
                    Err(e) => serde_json::to_string(&ErrorReply { error: e.to_string() })?,
                }
            }
        };
        writeln!(output, "{reply}").map_err(io_err)?;
        output.flush().map_err(io_err)?;
    }
    Ok(())
}

fn answer_predict<P: Predictor + ?Sized>(
    predictor: &P,
    t_past: usize,
    seed: Option<u64>,
    k: usize,
    scenes: &[WireScene],
    faults: &Faults,
) -> Result<PredictReply> {
    if k == 0 {
        return Err(Error::invalid("k must be at least 1"));
    }
    let pasts = scenes
        .iter()
        .map(|s| s.to_past(Unit::Meters))
        .collect::<Result<Vec<_>>>()?;
    if let Some(bad) = pasts.iter().position(|s| s.t_past() != t_past) {
        return Err(Error::invalid(format!("scene {bad} has t_past != {t_past}")));
    }
    let batches = predictor.predict_many(&pasts, k, seed)?;
    Ok(PredictReply {
        predictions: batches
            .into_iter()
            .map(|b| {
                b.samples
                    .into_iter()
                    .map(|t| {
                        let mut pts = t.points().to_vec();
                        if faults.truncate_future {
                            pts.pop();
                        }
                        pts
                    })
                    .collect()
            })
            .collect(),
    })
}
