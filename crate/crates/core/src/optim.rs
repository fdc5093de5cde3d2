//! Gradients of objectives over φ, a central-difference oracle, gradient descent with
//! backtracking, and exhaustive search over point-mass selectors.

use indexmap::IndexMap;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::objectives::{Objective, ObjectiveBreakdown};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum GradientMethod {
    Analytic,
    CentralDifference,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GradientReport {
    pub gradient: Vec<f64>,
    pub method: GradientMethod,
    pub max_abs: f64,
}

impl GradientReport {
    fn new(gradient: Vec<f64>, method: GradientMethod) -> Result<Self> {
        if let Some(i) = gradient.iter().position(|g| !g.is_finite()) {
            return Err(Error::Divergent(format!("gradient coordinate {i} is not finite")));
        }
        let max_abs = gradient.iter().fold(0.0f64, |m, g| m.max(g.abs()));
        Ok(Self {
            gradient,
            method,
            max_abs,
        })
    }

    pub fn norm(&self) -> f64 {
        norm(&self.gradient)
    }
}

pub fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

pub fn analytic_gradient(objective: &Objective, phi: &[f64]) -> Result<GradientReport> {
    GradientReport::new(objective.gradient(phi)?, GradientMethod::Analytic)
}

/// Central differences `(f(φ + h e_i) − f(φ − h e_i)) / 2h`.
pub fn finite_difference_gradient(objective: &Objective, phi: &[f64], h: f64) -> Result<GradientReport> {
    if !(h > 0.0 && h.is_finite()) {
        return Err(Error::InvalidArgument(format!("step must be positive, got {h}")));
    }
    let mut x = phi.to_vec();
    let mut g = Vec::with_capacity(phi.len());
    for i in 0..phi.len() {
        x[i] = phi[i] + h;
        let up = objective.value(&x)?;
        x[i] = phi[i] - h;
        let down = objective.value(&x)?;
        x[i] = phi[i];
        g.push((up - down) / (2.0 * h));
    }
    GradientReport::new(g, GradientMethod::CentralDifference)
}

/// `max_i |a_i − b_i| / max(1, |a_i|)`.
pub fn max_relative_deviation(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y).abs() / x.abs().max(1.0))
        .fold(0.0, f64::max)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OptimSettings {
    /// Initial step of every line search.
    pub step: f64,
    pub max_iters: usize,
    pub grad_tol: f64,
    /// Halvings before the line search gives up.
    pub max_halvings: u32,
}

impl Default for OptimSettings {
    fn default() -> Self {
        Self {
            step: 1.0,
            max_iters: 5000,
            grad_tol: 1e-7,
            max_halvings: 30,
        }
    }
}

impl OptimSettings {
    pub fn validate(&self) -> Result<()> {
        if !(self.step > 0.0 && self.step.is_finite()) {
            return Err(Error::InvalidArgument(format!("step must be positive, got {}", self.step)));
        }
        if !(self.grad_tol >= 0.0) {
            return Err(Error::InvalidArgument("grad_tol must be non-negative".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Termination {
    GradientTol,
    MaxIters,
    Divergence,
    /// No decrease after the allowed halvings: the scalar is flat to round-off.
    LineSearch,
}

impl Termination {
    pub fn as_str(self) -> &'static str {
        match self {
            Termination::GradientTol => "gradient-tol",
            Termination::MaxIters => "max-iters",
            Termination::Divergence => "divergence",
            Termination::LineSearch => "line-search",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct IterRecord {
    pub iter: usize,
    /// FNV-1a hash of φ's bit patterns.
    pub phi_hash: String,
    pub total: f64,
    pub joint_kl: f64,
    pub terms: IndexMap<String, f64>,
    pub grad_norm: f64,
    /// Accepted step length (0 for the final record).
    pub step: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OptimTrace {
    pub records: Vec<IterRecord>,
    pub termination: Termination,
    pub phi: Vec<f64>,
    pub breakdown: ObjectiveBreakdown,
}

impl OptimTrace {
    pub fn iterations(&self) -> usize {
        self.records.len().saturating_sub(1)
    }

    pub fn final_total(&self) -> f64 {
        self.breakdown.total()
    }
}

pub fn phi_hash(phi: &[f64]) -> String {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for x in phi {
        for b in x.to_bits().to_le_bytes() {
            h ^= b as u64;
            h = h.wrapping_mul(0x0100_0000_01b3);
        }
    }
    format!("{h:016x}")
}

fn record(iter: usize, phi: &[f64], b: &ObjectiveBreakdown, grad_norm: f64, step: f64) -> IterRecord {
    IterRecord {
        iter,
        phi_hash: phi_hash(phi),
        total: b.total(),
        joint_kl: b.report.joint_kl,
        terms: b.report.terms.clone(),
        grad_norm,
        step,
    }
}

/// Gradient descent on the objective's scalar with a halving line search; every
/// accepted step strictly decreases it.
pub fn minimize(objective: &Objective, phi0: &[f64], settings: &OptimSettings) -> Result<OptimTrace> {
    settings.validate()?;
    let mut phi = phi0.to_vec();
    let mut value = objective.value(&phi)?;
    let mut records = Vec::new();
    let mut iter = 0;
    let termination = loop {
        let g = match objective.gradient(&phi) {
            Ok(g) if g.iter().all(|x| x.is_finite()) => g,
            _ => break Termination::Divergence,
        };
        let gn = norm(&g);
        let breakdown = objective.evaluate(&phi)?;
        if gn <= settings.grad_tol {
            records.push(record(iter, &phi, &breakdown, gn, 0.0));
            break Termination::GradientTol;
        }
        if iter >= settings.max_iters {
            records.push(record(iter, &phi, &breakdown, gn, 0.0));
            break Termination::MaxIters;
        }
        let mut step = settings.step;
        let mut accepted = None;
        for _ in 0..=settings.max_halvings {
            let trial: Vec<f64> = phi.iter().zip(&g).map(|(p, gi)| p - step * gi).collect();
            if let Ok(v) = objective.value(&trial) {
                if v < value {
                    accepted = Some((trial, v));
                    break;
                }
            }
            step *= 0.5;
        }
        match accepted {
            Some((next, v)) => {
                records.push(record(iter, &phi, &breakdown, gn, step));
                phi = next;
                value = v;
                iter += 1;
            }
            None => {
                records.push(record(iter, &phi, &breakdown, gn, 0.0));
                break Termination::LineSearch;
            }
        }
    };
    let breakdown = objective.evaluate(&phi)?;
    Ok(OptimTrace {
        records,
        termination,
        phi,
        breakdown,
    })
}

/// One point-mass configuration and the objective reached there.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScanEntry {
    pub selectors: Vec<(String, Vec<usize>)>,
    pub total: f64,
}

#[derive(Clone, Debug)]
pub struct SelectorSearch {
    pub objective: Objective,
    pub selectors: Vec<(String, Vec<usize>)>,
    pub trace: OptimTrace,
    pub scan: Vec<ScanEntry>,
    /// False when the space exceeded the cap and coordinate-wise search was used.
    pub exhaustive: bool,
}

/// Largest number of selector configurations enumerated exhaustively.
pub const SELECTOR_CAP: usize = 4096;

/// Minimizes over point-mass selectors (exhaustively up to `cap` configurations,
/// coordinate-wise beyond) and, at each configuration, over φ by gradient descent
/// from `phi0`. Ties keep the first configuration in enumeration order.
pub fn minimize_with_selectors(
    objective: &Objective,
    phi0: &[f64],
    settings: &OptimSettings,
    cap: usize,
) -> Result<SelectorSearch> {
    let children = objective.point_mass_children();
    if children.is_empty() {
        let trace = minimize(objective, phi0, settings)?;
        return Ok(SelectorSearch {
            objective: objective.clone(),
            selectors: Vec::new(),
            trace,
            scan: Vec::new(),
            exhaustive: true,
        });
    }
    let system = objective.system();
    let scope = system.scope();
    // one digit per selector entry
    let mut radix = Vec::new();
    for c in &children {
        let f = system.factor(c)?;
        let card = scope.vars()[scope.position(c)?].cardinality();
        radix.extend(std::iter::repeat_n(card, system.slices(f)));
    }
    let split = |digits: &[usize]| -> Vec<(String, Vec<usize>)> {
        let mut out = Vec::new();
        let mut k = 0;
        for c in &children {
            let n = system.slices(system.factor(c).unwrap());
            out.push((c.clone(), digits[k..k + n].to_vec()));
            k += n;
        }
        out
    };
    let mut scan = Vec::new();
    let mut run = |digits: &[usize]| -> Result<(f64, Objective, OptimTrace)> {
        let sel = split(digits);
        let obj = objective.with_selectors(&sel)?;
        let trace = minimize(&obj, phi0, settings)?;
        let total = trace.final_total();
        scan.push(ScanEntry { selectors: sel, total });
        Ok((total, obj, trace))
    };

    let space = radix.iter().try_fold(1usize, |acc, &r| acc.checked_mul(r));
    let exhaustive = matches!(space, Some(s) if s <= cap);
    let mut best: Option<(f64, Vec<usize>, Objective, OptimTrace)> = None;
    let mut consider = |digits: Vec<usize>, best: &mut Option<(f64, Vec<usize>, Objective, OptimTrace)>| -> Result<bool> {
        let (total, obj, trace) = run(&digits)?;
        let better = best.as_ref().is_none_or(|(b, ..)| total < *b);
        if better {
            *best = Some((total, digits, obj, trace));
        }
        Ok(better)
    };
    if exhaustive {
        let mut digits = vec![0; radix.len()];
        loop {
            consider(digits.clone(), &mut best)?;
            // odometer increment, last digit fastest
            let mut i = radix.len();
            loop {
                if i == 0 {
                    break;
                }
                i -= 1;
                digits[i] += 1;
                if digits[i] < radix[i] {
                    break;
                }
                digits[i] = 0;
            }
            if digits.iter().all(|&d| d == 0) {
                break;
            }
        }
    } else {
        let start: Vec<usize> = children
            .iter()
            .flat_map(|c| match &system.factor(c).unwrap().kind {
                crate::systems::FactorKind::PointMass { selector } => selector.clone(),
                _ => unreachable!(),
            })
            .collect();
        consider(start, &mut best)?;
        let mut improved = true;
        while improved {
            improved = false;
            for i in 0..radix.len() {
                for v in 0..radix[i] {
                    let mut digits = best.as_ref().unwrap().1.clone();
                    if digits[i] == v {
                        continue;
                    }
                    digits[i] = v;
                    improved |= consider(digits, &mut best)?;
                }
            }
        }
    }
    let (_, digits, objective, trace) = best.expect("at least one configuration");
    Ok(SelectorSearch {
        objective,
        selectors: split(&digits),
        trace,
        scan,
        exhaustive,
    })
}
