//! Argument parsing and dispatch.

use std::io::Write as _;
use std::path::PathBuf;
use std::time::Duration;

use anyhow::Context;
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde_json::Value;

use pacrobust_core::interpret::RenderFormat;
use pacrobust_core::predictor::protocol::{serve, Faults};
use pacrobust_core::predictor::ConstantVelocity;
use pacrobust_core::sampler::DeltaKind;

use crate::commands;
use crate::config::{parse_assignment, PredictorConfig, RunConfig};
use crate::protocol_check::{self, CheckOptions};
use crate::report;

/// Exit status for operational errors.
pub const EXIT_ERROR: i32 = 3;

#[derive(Parser, Debug)]
#[command(name = "pacrobust", version, about = "Black-box PAC robustness verification for trajectory predictors")]
pub struct Cli {
    /// Increase log verbosity (repeatable).
    #[arg(short, long, action = clap::ArgAction::Count, global = true)]
    pub verbose: u8,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Learn surrogates and decide robustness for each requested kind.
    Verify(RunArgs),
    /// Compare the surrogate's linear adversary with projected gradient ascent.
    Attack(RunArgs),
    /// Sensitivity plot and CSV from a learned or saved surrogate.
    Explain {
        #[command(flatten)]
        run: RunArgs,
        /// Skip sampling and render this saved surrogate.
        #[arg(long)]
        load_surrogate: Option<PathBuf>,
        #[arg(long, value_enum, default_value_t = Format::Both)]
        format: Format,
    },
    /// Check an external predictor command against the wire protocol.
    ProtocolCheck {
        /// Shell command launching the predictor.
        #[arg(long)]
        predictor_cmd: String,
        /// Reply deadline in seconds.
        #[arg(long, default_value_t = 10.0)]
        timeout: f64,
        #[arg(long, default_value_t = 3)]
        k: usize,
        /// Also write report.json here.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Draw labelled samples and write them as CSV.
    SampleDump(RunArgs),
    /// Serve the built-in constant-velocity model over the wire protocol.
    #[command(hide = true)]
    ServeBuiltin(ServeArgs),
}

#[derive(Clone, Copy, Debug, ValueEnum)]
pub enum Format {
    Svg,
    Csv,
    Both,
}

impl From<Format> for RenderFormat {
    fn from(f: Format) -> Self {
        match f {
            Format::Svg => RenderFormat::Svg,
            Format::Csv => RenderFormat::Csv,
            Format::Both => RenderFormat::Both,
        }
    }
}

#[derive(Clone, Copy, Debug, ValueEnum)]
pub enum PureModeArg {
    Fresh,
    Refset,
}

#[derive(Args, Debug, Clone, Default)]
pub struct RunArgs {
    /// JSON config; its fields replace the preset's.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Base defaults: default, eth-ucy or sdd.
    #[arg(long)]
    pub preset: Option<String>,
    /// Override any config field by dotted path, e.g. `budget.t2=12000`.
    #[arg(long = "set", value_name = "PATH=VALUE")]
    pub set: Vec<String>,
    #[arg(long)]
    pub dataset: Option<PathBuf>,
    /// meters or pixels.
    #[arg(long)]
    pub unit: Option<String>,
    #[arg(long)]
    pub frame: Option<i64>,
    #[arg(long)]
    pub ped: Option<i64>,
    #[arg(long)]
    pub radius: Option<f64>,
    #[arg(long)]
    pub epsilon: Option<f64>,
    #[arg(long)]
    pub eta: Option<f64>,
    #[arg(long)]
    pub t1: Option<usize>,
    #[arg(long)]
    pub t2: Option<usize>,
    #[arg(long)]
    pub k_features: Option<usize>,
    /// Prediction samples per input.
    #[arg(long)]
    pub k: Option<usize>,
    #[arg(long)]
    pub safety_label: Option<f64>,
    #[arg(long)]
    pub safety_pure: Option<f64>,
    #[arg(long, value_enum)]
    pub pure_mode: Option<PureModeArg>,
    /// Reference-set size for `--pure-mode refset`.
    #[arg(long)]
    pub refs: Option<usize>,
    /// Robustness kinds, comma separated.
    #[arg(long, value_delimiter = ',')]
    pub kinds: Vec<String>,
    /// Built-in predictor name.
    #[arg(long, conflicts_with = "predictor_cmd")]
    pub predictor: Option<String>,
    /// Built-in predictor parameter, `name=value`.
    #[arg(long = "param", value_name = "NAME=VALUE")]
    pub params: Vec<String>,
    /// Shell command of an external predictor.
    #[arg(long)]
    pub predictor_cmd: Option<String>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Worker threads; 0 uses every logical processor.
    #[arg(long)]
    pub workers: Option<usize>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

impl RunArgs {
    /// Preset, then config file, then `--set`, then named flags.
    pub fn resolve(&self) -> anyhow::Result<RunConfig> {
        let mut config = match &self.preset {
            Some(p) => RunConfig::preset(p)?,
            None => RunConfig::default(),
        };
        if let Some(path) = &self.config {
            config = config.patched_from(path)?;
        }
        let mut overrides: Vec<(String, Value)> = Vec::new();
        for s in &self.set {
            overrides.push(parse_assignment(s)?);
        }
        let mut put = |k: &str, v: Value| overrides.push((k.to_string(), v));
        if let Some(v) = &self.dataset {
            put("dataset.path", Value::from(v.to_string_lossy().into_owned()));
        }
        if let Some(v) = &self.unit {
            let unit: pacrobust_core::traj::Unit = v.parse()?;
            put("dataset.unit", serde_json::to_value(unit)?);
        }
        if let Some(v) = self.frame {
            put("scene.frame", v.into());
        }
        if let Some(v) = self.ped {
            put("scene.pedestrian", v.into());
        }
        if let Some(v) = self.radius {
            put("perturbation.radius", v.into());
        }
        if let Some(v) = self.epsilon {
            put("budget.epsilon", v.into());
        }
        if let Some(v) = self.eta {
            put("budget.eta", v.into());
        }
        if let Some(v) = self.t1 {
            put("budget.t1", v.into());
        }
        if let Some(v) = self.t2 {
            put("budget.t2", v.into());
        }
        if let Some(v) = self.k_features {
            put("budget.k_features", v.into());
        }
        if let Some(v) = self.k {
            put("sampling.k", v.into());
        }
        if let Some(v) = self.safety_label {
            put("safety.label", v.into());
        }
        if let Some(v) = self.safety_pure {
            put("safety.pure", v.into());
        }
        if let Some(v) = self.pure_mode {
            let name = match v {
                PureModeArg::Fresh => "fresh",
                PureModeArg::Refset => "refset",
            };
            put("sampling.pure_mode", name.into());
        }
        if let Some(v) = self.refs {
            put("sampling.refs", v.into());
        }
        if !self.kinds.is_empty() {
            let kinds = self
                .kinds
                .iter()
                .map(|k| k.trim().parse::<DeltaKind>())
                .collect::<Result<Vec<_>, _>>()?;
            put("kinds", serde_json::to_value(kinds)?);
        }
        if let Some(v) = self.seed {
            put("seed", v.into());
        }
        if let Some(v) = self.workers {
            put("sampling.workers", v.into());
        }
        if let Some(v) = &self.out {
            put("out", Value::from(v.to_string_lossy().into_owned()));
        }
        let mut config = config.with_overrides(overrides.iter().map(|(k, v)| (k.as_str(), v.clone())))?;

        if let Some(cmd) = &self.predictor_cmd {
            let (pool_size, timeout_secs) = match &config.predictor {
                PredictorConfig::External {
                    pool_size,
                    timeout_secs,
                    ..
                } => (*pool_size, *timeout_secs),
                _ => (1, 300.0),
            };
            config.predictor = PredictorConfig::External {
                command: cmd.clone(),
                pool_size,
                timeout_secs,
            };
        }
        if let Some(name) = &self.predictor {
            let params = match &config.predictor {
                PredictorConfig::Builtin { name: old, params } if old == name => params.clone(),
                _ => Default::default(),
            };
            config.predictor = PredictorConfig::Builtin {
                name: name.clone(),
                params,
            };
        }
        if !self.params.is_empty() {
            let PredictorConfig::Builtin { params, .. } = &mut config.predictor else {
                anyhow::bail!("--param applies to built-in predictors only");
            };
            for p in &self.params {
                let (k, v) = parse_assignment(p)?;
                params.insert(k, v);
            }
        }
        Ok(config)
    }
}

#[derive(Args, Debug, Clone)]
pub struct ServeArgs {
    #[arg(long, default_value_t = 8)]
    pub t_past: usize,
    #[arg(long, default_value_t = 12)]
    pub t_future: usize,
    #[arg(long, default_value_t = 0.05)]
    pub sigma: f64,
    /// Fault: answer with one future point fewer than declared.
    #[arg(long)]
    pub truncate_future: bool,
    /// Fault: ignore request seeds.
    #[arg(long)]
    pub ignore_seed: bool,
    /// Fault: exit silently after this many predict requests.
    #[arg(long)]
    pub exit_after: Option<usize>,
    /// Fault: delay every predict reply.
    #[arg(long, default_value_t = 0)]
    pub delay_ms: u64,
}

fn init_logging(verbose: u8) {
    let default = match verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    let filter = tracing_subscriber::EnvFilter::try_from_default_env()
        .unwrap_or_else(|_| tracing_subscriber::EnvFilter::new(default));
    let _ = tracing_subscriber::fmt()
        .with_env_filter(filter)
        .with_writer(std::io::stderr)
        .with_ansi(std::io::IsTerminal::is_terminal(&std::io::stderr()))
        .try_init();
}

fn summarize(result: &commands::CommandResult) {
    let mut out = std::io::stdout().lock();
    let doc = &result.report;
    if let Some(kinds) = doc.get("kinds").and_then(Value::as_array) {
        for k in kinds {
            let _ = writeln!(
                out,
                "{}: {} (pac bound {:.6}, s {}, max sampled {:.6})",
                k["kind"].as_str().unwrap_or("?"),
                k["outcome"].as_str().unwrap_or("?"),
                k["precision"]["pac_bound"].as_f64().unwrap_or(f64::NAN),
                k["safety_constant"],
                k["precision"]["max_sampled_delta"].as_f64().unwrap_or(f64::NAN),
            );
        }
    }
    if let (Some(l), Some(p)) = (doc.get("linear"), doc.get("pgd")) {
        let _ = writeln!(out, "linear adversary delta {}, pgd delta {}, gap {}", l["delta"], p["delta"], doc["gap"]);
    }
    let _ = writeln!(out, "report: {}", result.report_path.display());
}

/// Run a parsed command line and return the process exit status.
pub fn run(cli: Cli) -> i32 {
    init_logging(cli.verbose);
    match dispatch(cli.command) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            EXIT_ERROR
        }
    }
}

fn dispatch(command: Command) -> anyhow::Result<i32> {
    let result = match command {
        Command::Verify(args) => commands::verify(args.resolve()?)?,
        Command::Attack(args) => commands::attack(args.resolve()?)?,
        Command::SampleDump(args) => commands::sample_dump(args.resolve()?)?,
        Command::Explain {
            run,
            load_surrogate,
            format,
        } => commands::explain(run.resolve()?, load_surrogate.as_deref(), format.into())?,
        Command::ProtocolCheck {
            predictor_cmd,
            timeout,
            k,
            out,
        } => {
            if !(timeout > 0.0) {
                anyhow::bail!("--timeout must be positive");
            }
            let options = CheckOptions {
                timeout: Duration::from_secs_f64(timeout),
                k,
                ..Default::default()
            };
            let body = protocol_check::check(&predictor_cmd, &options);
            let mut stdout = std::io::stdout().lock();
            for c in &body.clauses {
                writeln!(stdout, "{} {}: {}", if c.passed { "PASS" } else { "FAIL" }, c.name, c.detail)?;
            }
            if let Some(dir) = out {
                let doc = report::assemble("protocol-check", Value::Null, &body)?;
                report::write(&dir, &doc)?;
            }
            return Ok(if body.passed { 0 } else { 1 });
        }
        Command::ServeBuiltin(args) => {
            let model = ConstantVelocity::new(args.sigma, args.t_future)?;
            let faults = Faults {
                truncate_future: args.truncate_future,
                ignore_seed: args.ignore_seed,
                exit_after_predicts: args.exit_after,
                delay_ms: args.delay_ms,
            };
            let stdin = std::io::stdin().lock();
            let stdout = std::io::stdout().lock();
            serve(&model, args.t_past, stdin, stdout, &faults).context("serving predictions")?;
            return Ok(0);
        }
    };
    summarize(&result);
    Ok(result.exit_code)
}
