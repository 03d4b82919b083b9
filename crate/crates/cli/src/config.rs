//! Run configuration: one JSON document, every field reachable by a dotted
//! path for command-line overrides.

use std::path::{Path, PathBuf};

use anyhow::{anyhow, bail, Context};
use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};

use pacrobust_core::analyzer::GradMode;
use pacrobust_core::learner::{max_key_features, PacBudget};
use pacrobust_core::sampler::{AgentMask, DeltaKind, PerturbationSpec, PureMode};
use pacrobust_core::traj::Unit;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DatasetConfig {
    pub path: Option<PathBuf>,
    pub unit: Unit,
}

impl Default for DatasetConfig {
    fn default() -> Self {
        Self {
            path: None,
            unit: Unit::Meters,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SceneConfig {
    pub frame: Option<i64>,
    pub pedestrian: Option<i64>,
    pub t_past: usize,
    pub t_future: usize,
    /// Defaults by unit: 10 for meters, 12 for pixels.
    pub frame_stride: Option<i64>,
}

impl Default for SceneConfig {
    fn default() -> Self {
        Self {
            frame: None,
            pedestrian: None,
            t_past: 8,
            t_future: 12,
            frame_stride: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "kebab-case", deny_unknown_fields)]
pub enum PredictorConfig {
    Builtin {
        name: String,
        #[serde(default)]
        params: Map<String, Value>,
    },
    External {
        command: String,
        #[serde(default = "one")]
        pool_size: usize,
        #[serde(default = "default_timeout")]
        timeout_secs: f64,
    },
}

fn one() -> usize {
    1
}

fn default_timeout() -> f64 {
    300.0
}

impl Default for PredictorConfig {
    fn default() -> Self {
        PredictorConfig::Builtin {
            name: "constant-velocity".into(),
            params: Map::new(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PerturbationConfig {
    pub radius: f64,
    pub agents: AgentMask,
}

impl Default for PerturbationConfig {
    fn default() -> Self {
        Self {
            radius: 0.03,
            agents: AgentMask::All,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SafetyConfig {
    pub label: f64,
    pub pure: f64,
}

impl Default for SafetyConfig {
    fn default() -> Self {
        Self { label: 1.0, pure: 0.5 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BudgetConfig {
    pub epsilon: f64,
    pub eta: f64,
    pub t1: usize,
    pub t2: usize,
    /// Largest admissible value when absent.
    pub k_features: Option<usize>,
}

impl Default for BudgetConfig {
    fn default() -> Self {
        Self {
            epsilon: 0.01,
            eta: 0.01,
            t1: 2000,
            t2: 3000,
            k_features: None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PureModeName {
    Fresh,
    Refset,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SamplingConfig {
    /// Prediction samples per input.
    pub k: usize,
    pub pure_mode: PureModeName,
    /// Reference-set size for `refset`.
    pub refs: usize,
    /// 0 = all logical processors.
    pub workers: usize,
    pub redraws: usize,
}

impl Default for SamplingConfig {
    fn default() -> Self {
        Self {
            k: 20,
            pure_mode: PureModeName::Fresh,
            refs: 100,
            workers: 0,
            redraws: 100,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AttackConfig {
    pub steps: usize,
    pub step_size: Option<f64>,
    pub probe: Option<f64>,
    pub grad_mode: GradMode,
}

impl Default for AttackConfig {
    fn default() -> Self {
        Self {
            steps: 40,
            step_size: None,
            probe: None,
            grad_mode: GradMode::FiniteDifference,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub dataset: DatasetConfig,
    pub scene: SceneConfig,
    pub predictor: PredictorConfig,
    pub perturbation: PerturbationConfig,
    pub kinds: Vec<DeltaKind>,
    pub safety: SafetyConfig,
    pub budget: BudgetConfig,
    pub sampling: SamplingConfig,
    pub attack: AttackConfig,
    pub seed: u64,
    pub out: PathBuf,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            dataset: DatasetConfig::default(),
            scene: SceneConfig::default(),
            predictor: PredictorConfig::default(),
            perturbation: PerturbationConfig::default(),
            kinds: vec![DeltaKind::Label, DeltaKind::Pure],
            safety: SafetyConfig::default(),
            budget: BudgetConfig::default(),
            sampling: SamplingConfig::default(),
            attack: AttackConfig::default(),
            seed: 0,
            out: PathBuf::from("out"),
        }
    }
}

impl RunConfig {
    /// Pixel-unit defaults for SDD-style annotations.
    pub fn sdd_preset() -> Self {
        let mut c = Self::default();
        c.dataset.unit = Unit::Pixels;
        c.perturbation.radius = 2.0;
        c.safety = SafetyConfig { label: 50.0, pure: 50.0 };
        c
    }

    pub fn preset(name: &str) -> anyhow::Result<Self> {
        match name {
            "default" | "eth-ucy" => Ok(Self::default()),
            "sdd" => Ok(Self::sdd_preset()),
            other => bail!("unknown preset {other:?} (default, eth-ucy, sdd)"),
        }
    }

    pub fn load(path: &Path) -> anyhow::Result<Self> {
        Self::default().patched_from(path)
    }

    /// Fields present in the JSON file at `path` replace those of `self`.
    pub fn patched_from(&self, path: &Path) -> anyhow::Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading config {}", path.display()))?;
        let patch: Value = serde_json::from_str(&text).with_context(|| format!("parsing config {}", path.display()))?;
        if !patch.is_object() {
            bail!("config {} must be a JSON object", path.display());
        }
        let mut doc = serde_json::to_value(self)?;
        merge(&mut doc, patch);
        serde_json::from_value(doc).with_context(|| format!("invalid config {}", path.display()))
    }

    /// Apply `dotted.path=value` assignments. Values parse as JSON, falling
    /// back to a plain string.
    pub fn with_overrides<'a>(&self, overrides: impl IntoIterator<Item = (&'a str, Value)>) -> anyhow::Result<Self> {
        let mut doc = serde_json::to_value(self)?;
        for (path, value) in overrides {
            set_path(&mut doc, path, value)?;
        }
        serde_json::from_value(doc).context("applying overrides")
    }

    pub fn safety_constant(&self, kind: DeltaKind) -> f64 {
        match kind {
            DeltaKind::Label => self.safety.label,
            DeltaKind::Pure => self.safety.pure,
        }
    }

    pub fn frame_stride(&self) -> i64 {
        self.scene.frame_stride.unwrap_or(match self.dataset.unit {
            Unit::Meters => pacrobust_core::dataset::ETH_UCY_STRIDE,
            Unit::Pixels => pacrobust_core::dataset::SDD_STRIDE,
        })
    }

    pub fn spec(&self) -> anyhow::Result<PerturbationSpec> {
        Ok(PerturbationSpec::new(self.perturbation.radius)?.with_agents(self.perturbation.agents.clone()))
    }

    pub fn budget(&self) -> anyhow::Result<PacBudget> {
        let b = &self.budget;
        let k_features = match b.k_features {
            Some(k) => k,
            None => max_key_features(b.epsilon, b.eta, b.t2)?,
        };
        let budget = PacBudget {
            epsilon: b.epsilon,
            eta: b.eta,
            t1: b.t1,
            t2: b.t2,
            k_features,
        };
        budget.validate()?;
        Ok(budget)
    }

    pub fn pure_mode(&self) -> PureMode {
        match self.sampling.pure_mode {
            PureModeName::Fresh => PureMode::Fresh,
            PureModeName::Refset => PureMode::ReferenceSet { m: self.sampling.refs },
        }
    }

    /// Static checks run before any work starts.
    pub fn validate(&self) -> anyhow::Result<()> {
        if self.kinds.is_empty() {
            bail!("no robustness kinds requested");
        }
        self.spec()?;
        self.budget()?;
        if self.sampling.k == 0 {
            bail!("sampling.k must be at least 1");
        }
        if self.sampling.pure_mode == PureModeName::Refset && self.sampling.refs == 0 {
            bail!("sampling.refs must be at least 1 in refset mode");
        }
        for kind in &self.kinds {
            if !self.safety_constant(*kind).is_finite() {
                bail!("safety constant for {} must be finite", kind.name());
            }
        }
        Ok(())
    }
}

/// Recursive object merge; non-object values replace wholesale.
pub fn merge(base: &mut Value, patch: Value) {
    match (base, patch) {
        (Value::Object(b), Value::Object(p)) => {
            for (k, v) in p {
                match b.get_mut(&k) {
                    Some(slot) if slot.is_object() && v.is_object() && k != "predictor" => merge(slot, v),
                    _ => {
                        b.insert(k, v);
                    }
                }
            }
        }
        (b, p) => *b = p,
    }
}

/// `"a.b.c"` → assign `value` under nested objects, creating them as needed.
pub fn set_path(doc: &mut Value, path: &str, value: Value) -> anyhow::Result<()> {
    let mut parts = path.split('.').peekable();
    let mut cur = doc;
    while let Some(part) = parts.next() {
        if part.is_empty() {
            bail!("empty segment in {path:?}");
        }
        let obj = match cur {
            Value::Object(m) => m,
            Value::Null => {
                *cur = Value::Object(Map::new());
                cur.as_object_mut().expect("just created")
            }
            _ => bail!("{path:?}: cannot descend into a non-object at {part:?}"),
        };
        if parts.peek().is_none() {
            obj.insert(part.to_string(), value);
            return Ok(());
        }
        cur = obj.entry(part.to_string()).or_insert(Value::Null);
    }
    Err(anyhow!("empty override path"))
}

/// Parse `key=value` with a JSON value, or a bare string when it is not JSON.
pub fn parse_assignment(text: &str) -> anyhow::Result<(String, Value)> {
    let (key, raw) = text
        .split_once('=')
        .ok_or_else(|| anyhow!("expected key=value, got {text:?}"))?;
    let value = serde_json::from_str(raw).unwrap_or_else(|_| Value::String(raw.to_string()));
    Ok((key.trim().to_string(), value))
}
