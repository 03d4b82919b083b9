//! End-to-end orchestration behind each subcommand.

use std::path::{Path, PathBuf};

use anyhow::{bail, Context};

use pacrobust_core::analyzer::{box_max, pgd_attack, verify_outcome, Outcome, PgdConfig, VerifyConfig};
use pacrobust_core::dataset::{extract_scene, RecordStore, SceneQuery};
use pacrobust_core::interpret::{self, RenderFormat};
use pacrobust_core::learner::{learn_with, required_samples, AffineSurrogate, LearnConfig};
use pacrobust_core::par::Workers;
use pacrobust_core::predictor::Predictor;
use pacrobust_core::rng::derive;
use pacrobust_core::sampler::{draw_labeled, write_samples_csv, DeltaEvaluator, DeltaKind};
use pacrobust_core::traj::Scene;

use crate::config::RunConfig;
use crate::predictors;
use crate::report::{
    self, Adversary, AttackBody, BudgetSummary, ExplainBody, KindVerdict, PgdAdversary, Precision, SampleDumpBody,
    SampleFile, SceneSummary, VerifyBody,
};

/// Exit status of a verification: any NO wins, then any UNKNOWN.
pub fn exit_code(outcomes: &[Outcome]) -> i32 {
    if outcomes.contains(&Outcome::No) {
        1
    } else if outcomes.contains(&Outcome::Unknown) {
        2
    } else {
        0
    }
}

fn overall(outcomes: &[Outcome]) -> Outcome {
    match exit_code(outcomes) {
        1 => Outcome::No,
        2 => Outcome::Unknown,
        _ => Outcome::Yes,
    }
}

fn kind_tag(kind: DeltaKind) -> u64 {
    match kind {
        DeltaKind::Label => 1,
        DeltaKind::Pure => 2,
    }
}

pub fn load_scene(config: &RunConfig) -> anyhow::Result<Scene> {
    let path = config
        .dataset
        .path
        .as_ref()
        .context("no dataset given (--dataset or dataset.path)")?;
    if !path.is_file() {
        bail!("dataset file {} does not exist", path.display());
    }
    let frame = config.scene.frame.context("no frame given (--frame or scene.frame)")?;
    let pedestrian = config
        .scene
        .pedestrian
        .context("no pedestrian given (--ped or scene.pedestrian)")?;
    let store = RecordStore::load(path, config.dataset.unit)?;
    let query = SceneQuery {
        frame,
        pedestrian,
        t_past: config.scene.t_past,
        t_future: config.scene.t_future,
        frame_stride: config.frame_stride(),
    };
    Ok(extract_scene(&store, &query)?)
}

fn future_len(config: &RunConfig, scene: &Scene) -> usize {
    scene.t_future().unwrap_or(config.scene.t_future)
}

/// Scene and predictor shared by every command that runs the model.
pub struct Session {
    pub config: RunConfig,
    pub scene: Scene,
    pub predictor: Box<dyn Predictor>,
}

impl Session {
    pub fn open(config: RunConfig) -> anyhow::Result<Self> {
        config.validate()?;
        let scene = load_scene(&config)?;
        let predictor = predictors::build(&config.predictor, &scene, future_len(&config, &scene))?;
        Ok(Self {
            config,
            scene,
            predictor,
        })
    }

    fn learn_config(&self) -> LearnConfig {
        LearnConfig {
            k: self.config.sampling.k,
            pure_mode: self.config.pure_mode(),
            workers: Workers(self.config.sampling.workers),
            seed: self.config.seed,
        }
    }

    pub fn evaluator(&self, kind: DeltaKind) -> anyhow::Result<DeltaEvaluator<'_, dyn Predictor>> {
        let options = self.learn_config().eval_options(kind);
        DeltaEvaluator::new(self.predictor.as_ref(), &self.scene, options)
            .with_context(|| format!("preparing {} robustness evaluation", kind.name()))
    }

    fn pgd_config(&self, kind: DeltaKind) -> PgdConfig {
        let a = &self.config.attack;
        PgdConfig {
            steps: a.steps,
            step_size: a.step_size,
            probe: a.probe,
            grad_mode: a.grad_mode,
            seed: derive(self.config.seed, &[kind_tag(kind), 2]),
        }
    }

    fn config_json(&self) -> anyhow::Result<serde_json::Value> {
        Ok(serde_json::to_value(&self.config)?)
    }
}

pub struct KindRun {
    pub verdict: KindVerdict,
    pub surrogate: AffineSurrogate,
}

pub fn run_kind(session: &Session, kind: DeltaKind) -> anyhow::Result<KindRun> {
    let cfg = &session.config;
    let evaluator = session.evaluator(kind)?;
    let spec = cfg.spec()?;
    let budget = cfg.budget()?;
    let layout = session.scene.past.layout();
    let learn_seed = derive(cfg.seed, &[kind_tag(kind), 0]);
    let outcome = learn_with(&evaluator, &spec, &budget, learn_seed)
        .with_context(|| format!("learning the {} surrogate", kind.name()))?;
    let vcfg = VerifyConfig {
        safety_constant: cfg.safety_constant(kind),
        seed: derive(cfg.seed, &[kind_tag(kind), 1]),
        redraws: cfg.sampling.redraws,
    };
    let verdict = verify_outcome(&outcome, &spec, &evaluator, &vcfg)?;

    let center = session.scene.past.flatten();
    let (_, argmax) = box_max(&outcome.surrogate, &center, spec.radius, &spec.mask(&layout))?;
    let linear_delta = match verdict.argmax_delta {
        Some(d) => d,
        None => evaluator.eval(&argmax, derive(vcfg.seed, &[1]))?,
    };
    let pgd = pgd_attack(&evaluator, &spec, &session.pgd_config(kind))?;

    let surrogate = outcome.surrogate;
    Ok(KindRun {
        verdict: KindVerdict {
            kind,
            outcome: verdict.outcome,
            safety_constant: verdict.safety_constant,
            gap: verdict.gap,
            lambda_star: surrogate.lambda_star,
            precision: Precision {
                pac_bound: verdict.pac_bound,
                max_sampled_delta: verdict.max_sampled_delta,
                linear_adversary_delta: linear_delta,
                pgd_delta: pgd.delta,
                bound_gap: verdict.pac_bound - verdict.max_sampled_delta,
            },
            argmax_delta: verdict.argmax_delta,
            counterexample: verdict.counterexample,
            budget: BudgetSummary {
                epsilon: budget.epsilon,
                eta: budget.eta,
                t1: budget.t1,
                t2: budget.t2,
                k_features: budget.k_features,
                required_samples: required_samples(budget.epsilon, budget.eta, layout.t_past, layout.n_agents)?,
            },
            key_indices: surrogate.key_indices.clone(),
            surrogate_file: surrogate_file(kind),
        },
        surrogate,
    })
}

fn surrogate_file(kind: DeltaKind) -> String {
    format!("surrogate_{}.json", kind.name())
}

pub struct CommandResult {
    pub report: serde_json::Value,
    pub report_path: PathBuf,
    pub exit_code: i32,
}

pub fn verify(config: RunConfig) -> anyhow::Result<CommandResult> {
    let session = Session::open(config)?;
    let mut runs = Vec::new();
    for &kind in &session.config.kinds {
        runs.push(run_kind(&session, kind)?);
    }
    let outcomes: Vec<Outcome> = runs.iter().map(|r| r.verdict.outcome).collect();
    let code = exit_code(&outcomes);
    let body = VerifyBody {
        scene: SceneSummary::new(&session.scene),
        predictor: session.predictor.info(),
        outcome: overall(&outcomes),
        exit_code: code,
        kinds: runs.iter().map(|r| r.verdict.clone()).collect(),
    };
    let doc = report::assemble("verify", session.config_json()?, &body)?;
    let out = &session.config.out;
    std::fs::create_dir_all(out).with_context(|| format!("creating {}", out.display()))?;
    for r in &runs {
        r.surrogate.save(&out.join(surrogate_file(r.verdict.kind)))?;
    }
    let report_path = report::write(out, &doc)?;
    Ok(CommandResult {
        report: doc,
        report_path,
        exit_code: code,
    })
}

fn primary_kind(config: &RunConfig) -> DeltaKind {
    config.kinds[0]
}

pub fn attack(config: RunConfig) -> anyhow::Result<CommandResult> {
    let session = Session::open(config)?;
    let cfg = &session.config;
    let kind = primary_kind(cfg);
    let evaluator = session.evaluator(kind)?;
    let spec = cfg.spec()?;
    let outcome = learn_with(&evaluator, &spec, &cfg.budget()?, derive(cfg.seed, &[kind_tag(kind), 0]))?;
    let sur = &outcome.surrogate;
    let center = session.scene.past.flatten();
    let (max_value, argmax) = box_max(sur, &center, spec.radius, &spec.mask(&center.layout))?;
    let linear_delta = evaluator.eval(&argmax, derive(cfg.seed, &[kind_tag(kind), 1, 1]))?;
    let pgd = pgd_attack(&evaluator, &spec, &session.pgd_config(kind))?;
    let body = AttackBody {
        scene: SceneSummary::new(&session.scene),
        predictor: session.predictor.info(),
        kind,
        pac_bound: max_value + sur.lambda_star,
        lambda_star: sur.lambda_star,
        linear: Adversary {
            delta: linear_delta,
            scene: argmax.unflatten(center_unit(&session))?,
        },
        gap: (pgd.delta - linear_delta).abs(),
        pgd: PgdAdversary {
            delta: pgd.delta,
            scene: pgd.scene,
            steps: cfg.attack.steps,
            best_step: pgd.best_step,
        },
    };
    let doc = report::assemble("attack", session.config_json()?, &body)?;
    let report_path = report::write(&cfg.out, &doc)?;
    Ok(CommandResult {
        report: doc,
        report_path,
        exit_code: 0,
    })
}

fn center_unit(session: &Session) -> pacrobust_core::traj::Unit {
    session.scene.past.unit()
}

pub fn explain(config: RunConfig, load_surrogate: Option<&Path>, format: RenderFormat) -> anyhow::Result<CommandResult> {
    config.validate()?;
    let (scene, surrogate, source) = match load_surrogate {
        Some(path) => {
            let scene = load_scene(&config)?;
            let sur = AffineSurrogate::load(path)?;
            (scene, sur, path.display().to_string())
        }
        None => {
            let session = Session::open(config.clone())?;
            let kind = primary_kind(&session.config);
            let evaluator = session.evaluator(kind)?;
            let outcome = learn_with(
                &evaluator,
                &session.config.spec()?,
                &session.config.budget()?,
                derive(session.config.seed, &[kind_tag(kind), 0]),
            )?;
            drop(evaluator);
            (session.scene, outcome.surrogate, "learned".to_string())
        }
    };
    let layout = scene.past.layout();
    if surrogate.layout != layout {
        bail!(
            "surrogate was learned for {} agents x {} steps, scene has {} x {}",
            surrogate.layout.n_agents,
            surrogate.layout.t_past,
            layout.n_agents,
            layout.t_past
        );
    }
    let map = interpret::sensitivity(&surrogate, &layout)?;
    let written = interpret::render(&map, &scene.past, &config.out, format)?;
    let mut files: Vec<String> = written
        .iter()
        .map(|p| p.file_name().unwrap_or_default().to_string_lossy().into_owned())
        .collect();
    if load_surrogate.is_none() {
        let name = surrogate_file(surrogate.kind);
        surrogate.save(&config.out.join(&name))?;
        files.push(name);
    }
    let body = ExplainBody {
        scene: SceneSummary::new(&scene),
        kind: surrogate.kind,
        surrogate_source: source,
        critical_path: map.critical_path(),
        critical_step: map.critical_step,
        top_paths: map.top_paths(3).to_vec(),
        files,
    };
    let doc = report::assemble("explain", serde_json::to_value(&config)?, &body)?;
    let report_path = report::write(&config.out, &doc)?;
    Ok(CommandResult {
        report: doc,
        report_path,
        exit_code: 0,
    })
}

pub fn sample_dump(config: RunConfig) -> anyhow::Result<CommandResult> {
    let session = Session::open(config)?;
    let cfg = &session.config;
    let spec = cfg.spec()?;
    let mut dumped = Vec::new();
    for &kind in &cfg.kinds {
        let evaluator = session.evaluator(kind)?;
        let samples = draw_labeled(&evaluator, &spec, cfg.budget.t1, derive(cfg.seed, &[kind_tag(kind), 3]))?;
        dumped.push((kind, samples));
    }
    std::fs::create_dir_all(&cfg.out).with_context(|| format!("creating {}", cfg.out.display()))?;
    let mut files = Vec::new();
    for (kind, samples) in &dumped {
        let name = format!("samples_{}.csv", kind.name());
        write_samples_csv(&cfg.out.join(&name), samples)?;
        files.push(SampleFile {
            kind: *kind,
            count: samples.len(),
            max_delta: samples.iter().map(|s| s.delta).fold(f64::NEG_INFINITY, f64::max),
            file: name,
        });
    }
    let body = SampleDumpBody {
        scene: SceneSummary::new(&session.scene),
        predictor: session.predictor.info(),
        samples: files,
    };
    let doc = report::assemble("sample-dump", session.config_json()?, &body)?;
    let report_path = report::write(&cfg.out, &doc)?;
    Ok(CommandResult {
        report: doc,
        report_path,
        exit_code: 0,
    })
}
