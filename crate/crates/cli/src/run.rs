//! `divmin run` and `divmin gradcheck`.

use std::path::Path;

use anyhow::{Context, Result};
use divmin_core::objectives::{Family, Objective, ObjectiveBreakdown};
use divmin_core::optim::{
    analytic_gradient, finite_difference_gradient, minimize_with_selectors, OptimTrace, ScanEntry, Termination,
    SELECTOR_CAP,
};
use divmin_core::random::{random_parameters, stream};
use indexmap::IndexMap;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::config::{ExperimentConfig, Init};

pub const REPORT_SCHEMA_VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Parameter {
    pub name: String,
    pub value: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SelectorReport {
    pub exhaustive: bool,
    pub chosen: Vec<(String, Vec<usize>)>,
    pub scan: Vec<ScanEntry>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub schema_version: u32,
    /// Seconds since the Unix epoch; the only field that differs between identical runs.
    pub timestamp: u64,
    pub tool_version: String,
    pub seed: u64,
    pub config: ExperimentConfig,
    pub family: Family,
    pub equation: String,
    pub termination: Termination,
    pub iterations: usize,
    #[serde(rename = "final")]
    pub breakdown: ObjectiveBreakdown,
    /// Marginal of every variable under the final actual distribution.
    pub marginals: IndexMap<String, Vec<f64>>,
    pub parameters: Vec<Parameter>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub selectors: Option<SelectorReport>,
}

pub struct RunOutcome {
    pub report: RunReport,
    pub trace: OptimTrace,
}

/// Why a run stopped without a report.
#[derive(Debug)]
pub enum RunError {
    /// Non-finite objective or gradient.
    Divergent(String),
    Other(anyhow::Error),
}

impl From<anyhow::Error> for RunError {
    fn from(e: anyhow::Error) -> Self {
        RunError::Other(e)
    }
}

fn classify(e: divmin_core::Error) -> RunError {
    match e {
        divmin_core::Error::Divergent(m) => RunError::Divergent(m),
        other => RunError::Other(other.into()),
    }
}

pub fn initial_parameters(config: &ExperimentConfig, objective: &Objective) -> Vec<f64> {
    match config.init {
        Init::Declared => objective.parameters().values().to_vec(),
        Init::Random => random_parameters(config.seed, objective.parameter_count()),
    }
}

pub fn run(config: &ExperimentConfig) -> Result<RunOutcome, RunError> {
    let objective = config.objective()?;
    let phi0 = initial_parameters(config, &objective);
    objective.value(&phi0).map_err(classify)?;
    let search = minimize_with_selectors(&objective, &phi0, &config.optim, SELECTOR_CAP).map_err(classify)?;
    if search.trace.termination == Termination::Divergence {
        return Err(RunError::Divergent(format!(
            "gradient became non-finite after {} iterations",
            search.trace.iterations()
        )));
    }
    let tuned = &search.objective;
    let phi = &search.trace.phi;
    let mut marginals = IndexMap::new();
    for v in tuned.scope().vars() {
        marginals.insert(v.name().to_string(), tuned.marginal(phi, v.name()).map_err(classify)?);
    }
    let coords = tuned.parameters();
    let parameters = phi
        .iter()
        .enumerate()
        .map(|(i, &value)| Parameter {
            name: coords.describe(i),
            value,
        })
        .collect();
    let selectors = (!search.selectors.is_empty()).then(|| SelectorReport {
        exhaustive: search.exhaustive,
        chosen: search.selectors.clone(),
        scan: search.scan.clone(),
    });
    let report = RunReport {
        schema_version: REPORT_SCHEMA_VERSION,
        timestamp: crate::unix_time(),
        tool_version: env!("CARGO_PKG_VERSION").to_string(),
        seed: config.seed,
        config: config.clone(),
        family: objective.family(),
        equation: objective.family().equation().to_string(),
        termination: search.trace.termination,
        iterations: search.trace.iterations(),
        breakdown: search.trace.breakdown.clone(),
        marginals,
        parameters,
        selectors,
    };
    Ok(RunOutcome {
        report,
        trace: search.trace,
    })
}

/// Writes `trace.csv`, `report.json` and `terms.svg` into `dir`.
pub fn write_artifacts(outcome: &RunOutcome, dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).with_context(|| format!("cannot create {}", dir.display()))?;
    write_trace(&outcome.trace, &dir.join("trace.csv"))?;
    let json = serde_json::to_string_pretty(&outcome.report)?;
    std::fs::write(dir.join("report.json"), json + "\n")?;
    std::fs::write(dir.join("terms.svg"), crate::plot::terms_svg(&outcome.trace))?;
    Ok(())
}

/// One row per iteration: iter, total, each term, grad_norm, then the joint KL, the
/// accepted step and the parameter hash.
pub fn write_trace(trace: &OptimTrace, path: &Path) -> Result<()> {
    let mut w = csv::Writer::from_path(path).with_context(|| format!("cannot write {}", path.display()))?;
    let names: Vec<String> = trace
        .records
        .first()
        .map(|r| r.terms.keys().cloned().collect())
        .unwrap_or_default();
    let mut header = vec!["iter".to_string(), "total".to_string()];
    header.extend(names.iter().cloned());
    header.extend(["grad_norm", "joint_kl", "step", "phi_hash"].map(String::from));
    w.write_record(&header)?;
    for r in &trace.records {
        let mut row = vec![r.iter.to_string(), r.total.to_string()];
        row.extend(names.iter().map(|n| r.terms[n].to_string()));
        row.extend([r.grad_norm.to_string(), r.joint_kl.to_string(), r.step.to_string(), r.phi_hash.clone()]);
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GradPoint {
    pub index: usize,
    pub max_relative_deviation: f64,
    pub worst_coordinate: String,
    pub analytic: f64,
    pub central_difference: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GradcheckResult {
    pub family: Family,
    pub parameters: usize,
    pub step: f64,
    pub tolerance: f64,
    pub points: Vec<GradPoint>,
    pub max_relative_deviation: f64,
    pub passed: bool,
}

pub const GRADCHECK_POINTS: u64 = 5;
pub const GRADCHECK_STEP: f64 = 1e-5;
pub const GRADCHECK_TOL: f64 = 1e-5;

/// Analytic vs central-difference gradients at five points drawn from the seed.
pub fn gradcheck(config: &ExperimentConfig) -> Result<GradcheckResult, RunError> {
    let objective = config.objective()?;
    let n = objective.parameter_count();
    let coords = objective.parameters();
    let mut points = Vec::new();
    for k in 0..GRADCHECK_POINTS {
        let mut r = stream(config.seed, k + 1);
        let phi: Vec<f64> = (0..n).map(|_| r.random_range(-2.0..2.0)).collect();
        let a = analytic_gradient(&objective, &phi).map_err(classify)?.gradient;
        let fd = finite_difference_gradient(&objective, &phi, GRADCHECK_STEP).map_err(classify)?.gradient;
        let (mut worst, mut dev) = (0, 0.0f64);
        for i in 0..n {
            let d = (a[i] - fd[i]).abs() / a[i].abs().max(1.0);
            if d > dev {
                (worst, dev) = (i, d);
            }
        }
        points.push(GradPoint {
            index: k as usize,
            max_relative_deviation: dev,
            worst_coordinate: if n == 0 { String::new() } else { coords.describe(worst) },
            analytic: a.get(worst).copied().unwrap_or(0.0),
            central_difference: fd.get(worst).copied().unwrap_or(0.0),
        });
    }
    let max = points.iter().map(|p| p.max_relative_deviation).fold(0.0, f64::max);
    Ok(GradcheckResult {
        family: objective.family(),
        parameters: n,
        step: GRADCHECK_STEP,
        tolerance: GRADCHECK_TOL,
        points,
        max_relative_deviation: max,
        passed: max < GRADCHECK_TOL,
    })
}
