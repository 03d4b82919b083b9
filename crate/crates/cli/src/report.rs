//! Report documents. Every report is one JSON object with a common header;
//! the only time-dependent field is `generated_at`.

use std::path::Path;

use anyhow::{bail, Context};
use serde::Serialize;
use serde_json::Value;

use pacrobust_core::analyzer::{Counterexample, Outcome};
use pacrobust_core::interpret::{Coordinate, PathScore};
use pacrobust_core::predictor::PredictorInfo;
use pacrobust_core::sampler::DeltaKind;
use pacrobust_core::traj::{Scene, ScenePast, Trajectory, Unit};

pub const SCHEMA_VERSION: u32 = 1;
pub const REPORT_FILE: &str = "report.json";

#[derive(Debug, Clone, Serialize)]
pub struct Header<'a> {
    pub schema_version: u32,
    pub tool: String,
    pub command: &'a str,
    pub generated_at: String,
    pub config: Value,
}

#[derive(Debug, Clone, Serialize)]
pub struct SceneSummary {
    pub dataset: String,
    pub frame: i64,
    pub pedestrian: i64,
    pub unit: Unit,
    pub n_agents: usize,
    pub t_past: usize,
    pub past: ScenePast,
    pub future_truth: Option<Trajectory>,
}

impl SceneSummary {
    pub fn new(scene: &Scene) -> Self {
        Self {
            dataset: scene.meta.name.clone(),
            frame: scene.meta.frame,
            pedestrian: scene.meta.pedestrian,
            unit: scene.past.unit(),
            n_agents: scene.past.n_agents(),
            t_past: scene.past.t_past(),
            past: scene.past.clone(),
            future_truth: scene.future_truth.clone(),
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct BudgetSummary {
    pub epsilon: f64,
    pub eta: f64,
    pub t1: usize,
    pub t2: usize,
    pub k_features: usize,
    /// Sample count for a surrogate over every input coordinate.
    pub required_samples: u64,
}

/// The four quantities compared when judging how tight an analysis is.
#[derive(Debug, Clone, Serialize)]
pub struct Precision {
    pub pac_bound: f64,
    pub max_sampled_delta: f64,
    pub linear_adversary_delta: f64,
    pub pgd_delta: f64,
    /// `pac_bound - max_sampled_delta`.
    pub bound_gap: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct KindVerdict {
    pub kind: DeltaKind,
    pub outcome: Outcome,
    pub safety_constant: f64,
    /// `pac_bound - safety_constant`.
    pub gap: f64,
    pub lambda_star: f64,
    pub precision: Precision,
    pub argmax_delta: Option<f64>,
    pub counterexample: Option<Counterexample>,
    pub budget: BudgetSummary,
    pub key_indices: Vec<usize>,
    pub surrogate_file: String,
}

#[derive(Debug, Clone, Serialize)]
pub struct VerifyBody {
    pub scene: SceneSummary,
    pub predictor: PredictorInfo,
    pub outcome: Outcome,
    pub exit_code: i32,
    pub kinds: Vec<KindVerdict>,
}

#[derive(Debug, Clone, Serialize)]
pub struct Adversary {
    pub delta: f64,
    pub scene: ScenePast,
}

#[derive(Debug, Clone, Serialize)]
pub struct PgdAdversary {
    pub delta: f64,
    pub scene: ScenePast,
    pub steps: usize,
    pub best_step: usize,
}

#[derive(Debug, Clone, Serialize)]
pub struct AttackBody {
    pub scene: SceneSummary,
    pub predictor: PredictorInfo,
    pub kind: DeltaKind,
    pub pac_bound: f64,
    pub lambda_star: f64,
    pub linear: Adversary,
    pub pgd: PgdAdversary,
    /// `|pgd.delta - linear.delta|`.
    pub gap: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct ExplainBody {
    pub scene: SceneSummary,
    pub kind: DeltaKind,
    /// `"learned"` or the path of the loaded surrogate.
    pub surrogate_source: String,
    pub critical_path: Option<usize>,
    pub critical_step: Option<Coordinate>,
    pub top_paths: Vec<PathScore>,
    pub files: Vec<String>,
}

#[derive(Debug, Clone, Serialize)]
pub struct Clause {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

#[derive(Debug, Clone, Serialize)]
pub struct ProtocolBody {
    pub predictor_command: String,
    pub passed: bool,
    pub clauses: Vec<Clause>,
}

#[derive(Debug, Clone, Serialize)]
pub struct SampleFile {
    pub kind: DeltaKind,
    pub count: usize,
    pub max_delta: f64,
    pub file: String,
}

#[derive(Debug, Clone, Serialize)]
pub struct SampleDumpBody {
    pub scene: SceneSummary,
    pub predictor: PredictorInfo,
    pub samples: Vec<SampleFile>,
}

pub fn timestamp() -> String {
    chrono::Utc::now().to_rfc3339_opts(chrono::SecondsFormat::Secs, true)
}

/// Header fields followed by the body's fields in one object.
pub fn assemble(command: &str, config: Value, body: &impl Serialize) -> anyhow::Result<Value> {
    let header = Header {
        schema_version: SCHEMA_VERSION,
        tool: format!("pacrobust {}", env!("CARGO_PKG_VERSION")),
        command,
        generated_at: timestamp(),
        config,
    };
    let mut doc = serde_json::to_value(header)?;
    let Value::Object(body) = serde_json::to_value(body)? else {
        bail!("report body must serialize to an object");
    };
    let map = doc.as_object_mut().expect("header is an object");
    for (k, v) in body {
        if map.insert(k.clone(), v).is_some() {
            bail!("report body field {k:?} collides with the header");
        }
    }
    Ok(doc)
}

pub fn write(dir: &Path, doc: &Value) -> anyhow::Result<std::path::PathBuf> {
    std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    let path = dir.join(REPORT_FILE);
    let mut text = serde_json::to_string_pretty(doc)?;
    text.push('\n');
    std::fs::write(&path, text).with_context(|| format!("writing {}", path.display()))?;
    Ok(path)
}

/// A report with its timestamp blanked, for reproducibility comparisons.
pub fn without_timestamp(mut doc: Value) -> Value {
    if let Some(m) = doc.as_object_mut() {
        m.insert("generated_at".into(), Value::Null);
    }
    doc
}
