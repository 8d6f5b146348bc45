//! Config-file driven commands behind the `pacroute` binary.
//!
//! Each command reads one JSON [`RunConfig`], loads the world it names
//! (relative paths resolve against the config file's directory) and emits a
//! canonical JSON report that embeds the resolved config, the world and the
//! crate version.
//!
//! Exit codes: 0 success, 2 config or parse error, 3 invalid world,
//! 4 demo precondition failed, 5 enumeration budget exceeded.

use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::calibrate::{select_threshold, Algorithm, CalibrationOutcome, PacConfig};
use crate::error::Error;
use crate::report::{to_canonical_json, ARTIFACT_VERSION};
use crate::risk::{exact_deferral_mass, exact_miscoverage, LossSpec, RouterThreshold};
use crate::simulate::{
    enumerate_exact, mc_conditional_profile_traced, run_impossibility_demo, write_trace_csv,
    Experiment, McConfig, Target,
};
use crate::world::{sample_calibration, validate_world, CellWorld};

pub const EXIT_OK: i32 = 0;
pub const EXIT_CONFIG: i32 = 2;
pub const EXIT_WORLD: i32 = 3;
pub const EXIT_PRECONDITION: i32 = 4;
pub const EXIT_BUDGET: i32 = 5;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub world_path: PathBuf,
    pub loss: LossSpec,
    pub pac: PacConfig,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mc: Option<McConfig>,
    #[serde(default)]
    pub algorithm: Algorithm,
    /// Calibration set size.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub n: Option<usize>,
    /// Sampling seed for `calibrate`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub x_star: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub eta: Option<f64>,
    /// Oracle target: a point in `[0, 1]` or `"JOINT"`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub target: Option<Target>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output_path: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Command {
    Calibrate,
    Audit,
    Demo,
    Oracle,
    ValidateWorld,
}

impl Command {
    pub fn name(self) -> &'static str {
        match self {
            Command::Calibrate => "calibrate",
            Command::Audit => "audit",
            Command::Demo => "demo",
            Command::Oracle => "oracle",
            Command::ValidateWorld => "validate-world",
        }
    }
}

#[derive(Debug, Clone, Default)]
pub struct Options {
    pub config: PathBuf,
    pub out: Option<PathBuf>,
    pub seed: Option<u64>,
    pub workers: Option<usize>,
    pub trace: Option<PathBuf>,
}

#[derive(Debug)]
pub struct CliError {
    pub code: i32,
    pub message: String,
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.message)
    }
}

impl std::error::Error for CliError {}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        let code = match &e {
            Error::InvalidWorld(_) => EXIT_WORLD,
            Error::Precondition(_) => EXIT_PRECONDITION,
            Error::Budget { .. } => EXIT_BUDGET,
            _ => EXIT_CONFIG,
        };
        CliError {
            code,
            message: e.to_string(),
        }
    }
}

fn config_error(msg: impl Into<String>) -> CliError {
    CliError {
        code: EXIT_CONFIG,
        message: msg.into(),
    }
}

/// The outcome of a command: the JSON report and the exit code to use.
#[derive(Debug)]
pub struct Outcome {
    pub report: String,
    pub code: i32,
}

fn read(path: &Path) -> Result<String, CliError> {
    fs::read_to_string(path).map_err(|source| {
        Error::Io {
            path: path.display().to_string(),
            source,
        }
        .into()
    })
}

fn write(path: &Path, text: &str) -> Result<(), CliError> {
    fs::write(path, text).map_err(|source| {
        Error::Io {
            path: path.display().to_string(),
            source,
        }
        .into()
    })
}

pub fn load_config(path: &Path) -> Result<RunConfig, CliError> {
    let text = read(path)?;
    serde_json::from_str(&text).map_err(|e| config_error(format!("{}: {e}", path.display())))
}

fn world_location(config_path: &Path, cfg: &RunConfig) -> PathBuf {
    if cfg.world_path.is_absolute() {
        cfg.world_path.clone()
    } else {
        config_path
            .parent()
            .unwrap_or_else(|| Path::new("."))
            .join(&cfg.world_path)
    }
}

fn parse_world(path: &Path) -> Result<CellWorld, CliError> {
    let text = read(path)?;
    serde_json::from_str(&text).map_err(|e| config_error(format!("{}: {e}", path.display())))
}

fn require<T: Copy>(v: Option<T>, name: &str) -> Result<T, CliError> {
    v.ok_or_else(|| config_error(format!("config is missing `{name}`")))
}

fn require_mc(cfg: &RunConfig) -> Result<&McConfig, CliError> {
    cfg.mc
        .as_ref()
        .ok_or_else(|| config_error("config is missing `mc`"))
}

/// Runs `cmd`, writing the report to `--out` (or the config's `output_path`) when set.
pub fn run(cmd: Command, opts: &Options) -> Result<Outcome, CliError> {
    match opts.workers {
        Some(0) => Err(config_error("--workers must be at least 1")),
        Some(k) => {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(k)
                .build()
                .map_err(|e| config_error(format!("thread pool: {e}")))?;
            pool.install(|| run_inner(cmd, opts))
        }
        None => run_inner(cmd, opts),
    }
}

fn run_inner(cmd: Command, opts: &Options) -> Result<Outcome, CliError> {
    let mut cfg = load_config(&opts.config)?;
    if let Some(seed) = opts.seed {
        cfg.seed = Some(seed);
        if let Some(mc) = cfg.mc.as_mut() {
            mc.master_seed = seed;
        }
    }
    let world_file = world_location(&opts.config, &cfg);
    let raw_world = parse_world(&world_file)?;

    let (result, code) = if cmd == Command::ValidateWorld {
        let violations = validate_world(&raw_world);
        let code = if violations.is_empty() {
            EXIT_OK
        } else {
            EXIT_WORLD
        };
        (
            json!({"valid": violations.is_empty(), "violations": violations}),
            code,
        )
    } else {
        let violations = validate_world(&raw_world);
        if !violations.is_empty() {
            return Err(Error::InvalidWorld(violations).into());
        }
        cfg.loss.validate_for(&raw_world)?;
        if let Some(mc) = &cfg.mc {
            mc.validate()?;
        }
        (execute(cmd, &cfg, &raw_world, opts)?, EXIT_OK)
    };

    let envelope = json!({
        "command": cmd.name(),
        "version": ARTIFACT_VERSION,
        "config": cfg,
        "world": raw_world,
        "result": result,
    });
    let report = to_canonical_json(&envelope)?;
    if let Some(path) = opts.out.as_ref().or(cfg.output_path.as_ref()) {
        write(path, &report)?;
    }
    Ok(Outcome { report, code })
}

fn execute(
    cmd: Command,
    cfg: &RunConfig,
    world: &CellWorld,
    opts: &Options,
) -> Result<serde_json::Value, CliError> {
    let exp = |n| Experiment::new(world, &cfg.loss, &cfg.pac, n).with_algorithm(cfg.algorithm);
    let value = match cmd {
        Command::Calibrate => {
            let n = require(cfg.n, "n")?;
            let seed = require(cfg.seed, "seed")?;
            let d = sample_calibration(world, n, seed)?;
            let outcome = match cfg.algorithm {
                Algorithm::Calibrated => select_threshold(&d, world, &cfg.loss, &cfg.pac)?,
                Algorithm::Trivial => CalibrationOutcome {
                    tau_hat: RouterThreshold::AlwaysDefer,
                    tested: Vec::new(),
                    n,
                },
            };
            json!({
                "outcome": outcome,
                "tau_hat": outcome.tau_hat,
                "exact_miscoverage": exact_miscoverage(world, &cfg.loss, outcome.tau_hat),
                "exact_deferral_mass": exact_deferral_mass(world, outcome.tau_hat),
            })
        }
        Command::Audit => {
            let n = require(cfg.n, "n")?;
            let mc = require_mc(cfg)?;
            let (report, trace) = mc_conditional_profile_traced(&exp(n), mc)?;
            if let Some(path) = &opts.trace {
                let mut buf = Vec::new();
                write_trace_csv(&mut buf, &trace).expect("writing to memory");
                write(path, &String::from_utf8(buf).expect("ascii csv"))?;
            }
            serde_json::to_value(report).map_err(Error::from)?
        }
        Command::Demo => {
            let n = require(cfg.n, "n")?;
            let mc = require_mc(cfg)?;
            let x_star = require(cfg.x_star, "x_star")?;
            let eta = require(cfg.eta, "eta")?;
            let report = run_impossibility_demo(&exp(n), x_star, eta, mc)?;
            serde_json::to_value(report).map_err(Error::from)?
        }
        Command::Oracle => {
            let n = require(cfg.n, "n")?;
            let target = cfg.target.unwrap_or(Target::Joint);
            let r = enumerate_exact(&exp(n), target)?;
            serde_json::to_value(r).map_err(Error::from)?
        }
        Command::ValidateWorld => unreachable!("handled by the caller"),
    };
    Ok(value)
}
