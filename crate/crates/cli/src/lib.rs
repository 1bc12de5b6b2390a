//! Scenario-driven runs: analytical, simulated, calibration and coordinated
//! pipelines, with CSV artifacts and optional reference-band checks.

mod bands;
mod check;
mod output;
mod pipeline;

use std::path::{Path, PathBuf};

use beacon_core::contention::{fit_tau_coefficients, TauCoefficients};
use beacon_core::error::Error;
use beacon_core::scenario::{Scenario, ScenarioKind};
use sha2::{Digest, Sha256};

pub use bands::*;
pub use check::CheckLine;
pub use output::TOOL_VERSION;

/// Used by the coordinated pipeline when no scenario is given.
pub const DEFAULT_SWEEP: &str = include_str!("../../../scenarios/homogeneous.cfg");

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum Pipeline {
    Analytical,
    Simulate,
    Both,
    Calibrate,
    Coordinated,
}

impl Pipeline {
    pub fn name(self) -> &'static str {
        match self {
            Pipeline::Analytical => "analytical",
            Pipeline::Simulate => "simulate",
            Pipeline::Both => "both",
            Pipeline::Calibrate => "calibrate",
            Pipeline::Coordinated => "coordinated",
        }
    }
}

#[derive(Debug, Clone)]
pub struct RunManifest {
    pub scenario: Option<PathBuf>,
    pub pipeline: Pipeline,
    pub out: PathBuf,
    pub seed: Option<u64>,
    pub trials: Option<u32>,
    pub wss: Option<Vec<u32>>,
    /// Arrival rates replacing the sweep (or the single profile rate).
    pub rates: Option<Vec<f64>>,
    pub tau: Option<String>,
    pub interference: Option<String>,
    /// Coordination overhead for the coordinated pipeline.
    pub overhead: f64,
    /// Fitted coefficients for `--tau approx`; fitted in-process when absent.
    pub calibration: Option<PathBuf>,
    pub check: bool,
}

impl RunManifest {
    pub fn new(pipeline: Pipeline, scenario: Option<PathBuf>, out: PathBuf) -> Self {
        Self {
            scenario,
            pipeline,
            out,
            seed: None,
            trials: None,
            wss: None,
            rates: None,
            tau: None,
            interference: None,
            overhead: 0.2,
            calibration: None,
            check: false,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ExitStatus {
    Success = 0,
    ConfigError = 1,
    SolverFailure = 2,
    CheckFailed = 3,
}

#[derive(Debug)]
pub struct RunFailure {
    pub status: ExitStatus,
    pub message: String,
}

impl std::fmt::Display for RunFailure {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.message)
    }
}

impl std::error::Error for RunFailure {}

impl From<Error> for RunFailure {
    fn from(e: Error) -> Self {
        let status = match e {
            Error::Config(_) | Error::Input(_) => ExitStatus::ConfigError,
            _ => ExitStatus::SolverFailure,
        };
        RunFailure { status, message: e.to_string() }
    }
}

fn config_err(message: String) -> RunFailure {
    RunFailure { status: ExitStatus::ConfigError, message }
}

#[derive(Debug, Default)]
pub struct RunOutcome {
    pub artifacts: Vec<PathBuf>,
    pub summary: Vec<String>,
    pub warnings: Vec<String>,
    pub checks: Vec<CheckLine>,
    /// A calibration that wrote its artifact but missed the error ceiling.
    pub calibration_failed: bool,
}

impl RunOutcome {
    pub fn status(&self) -> ExitStatus {
        if self.calibration_failed {
            ExitStatus::SolverFailure
        } else if self.checks.iter().any(|c| !c.pass) {
            ExitStatus::CheckFailed
        } else {
            ExitStatus::Success
        }
    }
}

/// Scenario with manifest overrides applied, plus everything the pipelines share.
pub struct Prepared {
    pub scenario: Scenario,
    pub coeffs: Option<TauCoefficients>,
    pub hash: String,
    pub out: PathBuf,
}

fn load_scenario(m: &RunManifest) -> Result<Scenario, RunFailure> {
    match &m.scenario {
        Some(p) => Ok(Scenario::load(p)?),
        None if m.pipeline == Pipeline::Coordinated => Ok(Scenario::from_toml(DEFAULT_SWEEP)?),
        None => Err(config_err(format!("pipeline '{}' needs --scenario", m.pipeline.name()))),
    }
}

fn apply_overrides(s: &mut Scenario, m: &RunManifest) -> Result<(), RunFailure> {
    if let Some(w) = &m.wss {
        s.w_ss = w.clone();
    }
    if let Some(seed) = m.seed {
        s.sim.seed = seed;
    }
    if let Some(t) = m.trials {
        s.sim.trials = t;
    }
    if let Some(t) = &m.tau {
        s.eval.tau = t.clone();
    }
    if let Some(i) = &m.interference {
        s.eval.interference = i.clone();
    }
    if let Some(r) = &m.rates {
        match s.kind {
            ScenarioKind::Sweep => {
                s.arrival.sweep = r.clone();
                s.arrival.analytic_only.clear();
            }
            ScenarioKind::Profile => match r.as_slice() {
                [rate] => s.arrival.rates = vec![(0.0, *rate)],
                _ => return Err(config_err("a profile scenario takes exactly one --rates value".into())),
            },
        }
    }
    s.validate()?;
    Ok(())
}

fn config_hash(s: &Scenario, m: &RunManifest, coeffs: Option<&TauCoefficients>) -> String {
    let mut h = Sha256::new();
    h.update(s.to_toml().as_bytes());
    h.update(format!("pipeline={}\n", m.pipeline.name()).as_bytes());
    if m.pipeline == Pipeline::Coordinated {
        h.update(format!("overhead={}\n", m.overhead).as_bytes());
    }
    if let Some(c) = coeffs {
        h.update(c.to_toml().as_bytes());
    }
    hex::encode(h.finalize())
}

fn ensure_writable(dir: &Path) -> Result<(), RunFailure> {
    std::fs::create_dir_all(dir).map_err(|e| config_err(format!("cannot create {}: {e}", dir.display())))?;
    let probe = dir.join(".beacon-write-probe");
    std::fs::write(&probe, b"").map_err(|e| config_err(format!("{} is not writable: {e}", dir.display())))?;
    let _ = std::fs::remove_file(probe);
    Ok(())
}

fn prepare(m: &RunManifest, warnings: &mut Vec<String>) -> Result<Prepared, RunFailure> {
    let mut scenario = load_scenario(m)?;
    apply_overrides(&mut scenario, m)?;
    if m.overhead.is_nan() || m.overhead < 0.0 {
        return Err(config_err("overhead must be non-negative".into()));
    }
    ensure_writable(&m.out)?;
    let coeffs = if scenario.eval.tau == "approx" && m.pipeline != Pipeline::Calibrate {
        let c = match &m.calibration {
            Some(p) => {
                let text =
                    std::fs::read_to_string(p).map_err(|e| config_err(format!("cannot read {}: {e}", p.display())))?;
                TauCoefficients::from_toml(&text)?
            }
            None => {
                fit_tau_coefficients(&scenario.calibration.densities, &scenario.calibration.w_values, &scenario.mac)?
            }
        };
        if !c.passes() {
            warnings.push(format!(
                "approximate tau fit has max relative error {:.1}%, above {:.0}%",
                100.0 * c.max_rel_err(),
                100.0 * beacon_core::contention::TAU_FIT_MAX_REL_ERR
            ));
        }
        Some(c)
    } else {
        None
    };
    let hash = config_hash(&scenario, m, coeffs.as_ref());
    Ok(Prepared { scenario, coeffs, hash, out: m.out.clone() })
}

/// Run one manifest. Artifacts are written even when a check fails; the
/// outcome's status then carries the check failure.
pub fn run_manifest(m: &RunManifest) -> Result<RunOutcome, RunFailure> {
    let mut outcome = RunOutcome::default();
    let p = prepare(m, &mut outcome.warnings)?;
    match m.pipeline {
        Pipeline::Analytical => {
            let a = pipeline::analytical(&p, &mut outcome)?;
            outcome.summary.extend(pipeline::headline(&p.scenario, &a));
            if m.check {
                outcome.checks.extend(check::analytical(&p.scenario, &a));
            }
        }
        Pipeline::Simulate => {
            pipeline::simulated(&p, &mut outcome)?;
        }
        Pipeline::Both => {
            let a = pipeline::analytical(&p, &mut outcome)?;
            let s = pipeline::simulated(&p, &mut outcome)?;
            let reports = pipeline::reports(&p, &a, &s, &mut outcome)?;
            outcome.summary.extend(pipeline::headline(&p.scenario, &a));
            for r in &reports {
                let avg: Vec<String> = r
                    .w_values
                    .iter()
                    .zip(&r.col_mean_relative)
                    .map(|(w, v)| format!("W={w}: {}", v.map_or("-".into(), |x| format!("{:.2}%", 100.0 * x))))
                    .collect();
                outcome.summary.push(format!("{} avg relative error  {}", r.metric, avg.join("  ")));
            }
            if m.check {
                outcome.checks.extend(check::analytical(&p.scenario, &a));
                outcome.checks.extend(check::simulated(&p.scenario, &s));
                outcome.checks.extend(check::reports(&p.scenario, &reports));
            }
        }
        Pipeline::Calibrate => pipeline::calibrate(&p, &mut outcome)?,
        Pipeline::Coordinated => {
            let c = pipeline::coordinated(&p, m.overhead, &mut outcome)?;
            if m.check {
                outcome.checks.extend(check::coordinated(&c));
            }
        }
    }
    Ok(outcome)
}
