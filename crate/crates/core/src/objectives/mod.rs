//! The objective families: each builder turns a system and target into a scalar
//! objective over φ with a named term breakdown, a checked relation to the joint KL and
//! family-specific certificates.

mod control;
mod inference;
mod information;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

pub use control::{kl_control, maxent_rl, ControlMode, ControlOptions, MaxentOptions};
pub use inference::{amortized_vae, elbo_bnn, map_point_mass, MapOptions};
pub use information::{empowerment, info_gain, skill_discovery, EmpowermentOptions, SkillOptions, SkillWindow};

use crate::decomp::{assemble, DecompositionReport, Reference, Relation, Term};
use crate::error::{Error, Result};
use crate::forms::{Atom, Evaluator, LogForm};
use crate::prob::{Scope, TabularDistribution, VarMask};
use crate::systems::model::Compiled;
use crate::systems::{ActualSystem, FactorSpec, Horizon, Model, ParameterVector, Preset, TargetSpec};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Family {
    ElboBnn,
    MapPointMass,
    AmortizedVae,
    KlControl,
    MaxentRl,
    Empowerment,
    SkillDiscovery,
    InfoGain,
}

impl Family {
    pub const ALL: [Family; 8] = [
        Family::ElboBnn,
        Family::MapPointMass,
        Family::AmortizedVae,
        Family::KlControl,
        Family::MaxentRl,
        Family::Empowerment,
        Family::SkillDiscovery,
        Family::InfoGain,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Family::ElboBnn => "elbo_bnn",
            Family::MapPointMass => "map_point_mass",
            Family::AmortizedVae => "amortized_vae",
            Family::KlControl => "kl_control",
            Family::MaxentRl => "maxent_rl",
            Family::Empowerment => "empowerment",
            Family::SkillDiscovery => "skill_discovery",
            Family::InfoGain => "info_gain",
        }
    }

    /// Short tag of the equation the breakdown follows.
    pub fn equation(self) -> &'static str {
        match self {
            Family::ElboBnn => "elbo",
            Family::MapPointMass => "map",
            Family::AmortizedVae => "vae",
            Family::KlControl => "control",
            Family::MaxentRl => "maxentrl",
            Family::Empowerment => "empowerment",
            Family::SkillDiscovery => "skills",
            Family::InfoGain => "infogain",
        }
    }
}

impl fmt::Display for Family {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Family {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Family::ALL
            .into_iter()
            .find(|f| f.as_str() == s)
            .ok_or_else(|| Error::InvalidObjective(format!("unknown objective family `{s}`")))
    }
}

/// A system, its target and horizon.
#[derive(Clone, Debug, PartialEq)]
pub struct Problem {
    pub system: ActualSystem,
    pub target: TargetSpec,
    pub horizon: Horizon,
}

impl Problem {
    pub fn new(system: ActualSystem, target: TargetSpec, horizon: Horizon) -> Self {
        Self { system, target, horizon }
    }
}

impl From<Preset> for Problem {
    fn from(p: Preset) -> Self {
        Self::new(p.system, p.target, p.horizon)
    }
}

/// Direction of a certificate: `lhs = rhs` or `lhs ≤ rhs`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CertificateKind {
    Equal,
    AtMost,
}

/// A checked side relation of a breakdown, e.g. that two forms of the objective agree
/// or that a per-step bound stays below the exact quantity.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Certificate {
    pub name: String,
    pub kind: CertificateKind,
    pub lhs: f64,
    pub rhs: f64,
    /// `rhs − lhs`.
    pub slack: f64,
}

impl Certificate {
    pub fn violation(&self) -> f64 {
        match self.kind {
            CertificateKind::Equal => self.slack.abs(),
            CertificateKind::AtMost => (-self.slack).max(0.0),
        }
    }

    pub fn holds(&self, tol: f64) -> bool {
        self.violation() <= tol
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ObjectiveBreakdown {
    pub family: Family,
    #[serde(flatten)]
    pub report: DecompositionReport,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub certificates: Vec<Certificate>,
}

impl ObjectiveBreakdown {
    pub fn total(&self) -> f64 {
        self.report.total
    }

    pub fn term(&self, name: &str) -> f64 {
        self.report.term(name)
    }

    pub fn certificate(&self, name: &str) -> Option<&Certificate> {
        self.certificates.iter().find(|c| c.name == name)
    }

    /// Largest violation over the main relation and every certificate.
    pub fn worst_violation(&self) -> f64 {
        self.certificates
            .iter()
            .map(Certificate::violation)
            .fold(self.report.violation(), f64::max)
    }

    pub fn holds(&self, tol: f64) -> bool {
        self.worst_violation() <= tol
    }
}

#[derive(Clone, Debug)]
pub(crate) enum Side {
    Total,
    Form(LogForm),
    /// Signed sum of separately evaluated terms.
    Terms(Vec<(f64, LogForm)>),
    /// Computed outside the form algebra from the model at φ.
    External(fn(&Objective, &[f64]) -> Result<f64>),
}

#[derive(Clone, Debug)]
pub(crate) struct Check {
    pub name: String,
    pub kind: CertificateKind,
    pub lhs: Side,
    pub rhs: Side,
}

impl Check {
    pub fn new(name: &str, kind: CertificateKind, lhs: Side, rhs: Side) -> Self {
        Self {
            name: name.to_string(),
            kind,
            lhs,
            rhs,
        }
    }
}

/// What a family builder contributes; the objective adds the model around it.
#[derive(Clone, Debug)]
pub(crate) struct Layout {
    pub terms: Vec<Term>,
    pub relation: Relation,
    pub reference: Reference,
    pub checks: Vec<Check>,
    pub diagnostics: Vec<(String, LogForm)>,
}

impl Layout {
    pub fn new(terms: Vec<Term>, relation: Relation, reference: Reference) -> Self {
        Self {
            terms,
            relation,
            reference,
            checks: Vec::new(),
            diagnostics: Vec::new(),
        }
    }

    pub fn check(mut self, check: Check) -> Self {
        self.checks.push(check);
        self
    }

    pub fn diagnostic(mut self, name: impl Into<String>, form: LogForm) -> Self {
        self.diagnostics.push((name.into(), form));
        self
    }
}

/// A differentiable scalar over φ: the signed sum of the family's terms.
#[derive(Clone, Debug)]
pub struct Objective {
    family: Family,
    model: Model,
    horizon: Horizon,
    compiled: Compiled,
    layout: Layout,
    total: LogForm,
}

impl Objective {
    pub(crate) fn assemble(family: Family, model: Model, horizon: Horizon, layout: Layout) -> Self {
        let mut total = LogForm::new();
        for t in &layout.terms {
            total.add_form(t.sign, &t.form);
        }
        let compiled = model.compile();
        Self {
            family,
            model,
            horizon,
            compiled,
            layout,
            total,
        }
    }

    pub fn family(&self) -> Family {
        self.family
    }

    pub fn model(&self) -> &Model {
        &self.model
    }

    pub fn system(&self) -> &ActualSystem {
        self.model.system()
    }

    pub fn target(&self) -> &TargetSpec {
        self.model.target()
    }

    pub fn horizon(&self) -> &Horizon {
        &self.horizon
    }

    pub fn scope(&self) -> &Scope {
        self.model.scope()
    }

    pub fn relation(&self) -> Relation {
        self.layout.relation
    }

    pub fn term_names(&self) -> Vec<&str> {
        self.layout.terms.iter().map(|t| t.name.as_str()).collect()
    }

    /// The starting point declared in the system and target.
    pub fn parameters(&self) -> ParameterVector {
        self.model.parameters()
    }

    pub fn parameter_count(&self) -> usize {
        self.compiled.n_params
    }

    fn check_phi(&self, phi: &[f64]) -> Result<()> {
        crate::systems::params::check_values(phi, self.compiled.n_params)
    }

    pub(crate) fn evaluator(&self, phi: &[f64]) -> Evaluator<'_> {
        Evaluator::new(&self.compiled, phi)
    }

    /// The objective's scalar at φ.
    pub fn value(&self, phi: &[f64]) -> Result<f64> {
        self.check_phi(phi)?;
        let e = self.evaluator(phi).expect(&self.total);
        if e.divergent || !e.value.is_finite() {
            return Err(divergent(self.family));
        }
        Ok(e.value)
    }

    /// Exact gradient of [`Objective::value`].
    pub fn gradient(&self, phi: &[f64]) -> Result<Vec<f64>> {
        self.check_phi(phi)?;
        self.evaluator(phi)
            .gradient(&self.total)
            .map_err(|_| divergent(self.family))
    }

    /// `Σ_ω p(ω) ∇ln p(ω)`; identically zero, so its norm measures round-off.
    pub fn score_residual(&self, phi: &[f64]) -> Result<Vec<f64>> {
        self.check_phi(phi)?;
        Ok(self.evaluator(phi).score_residual())
    }

    pub fn evaluate(&self, phi: &[f64]) -> Result<ObjectiveBreakdown> {
        self.check_phi(phi)?;
        let e = self.evaluator(phi);
        let mut report = assemble(
            &e,
            self.family.equation(),
            &self.layout.terms,
            self.layout.relation,
            self.layout.reference,
        );
        if report.divergent {
            return Err(divergent(self.family));
        }
        for (name, form) in &self.layout.diagnostics {
            report.diagnostics.insert(name.clone(), e.expect(form).value);
        }
        let side = |s: &Side| -> Result<f64> {
            Ok(match s {
                Side::Total => report.total,
                Side::Form(f) => e.expect(f).value,
                Side::Terms(ts) => ts.iter().map(|(c, f)| c * e.expect(f).value).sum(),
                Side::External(f) => f(self, phi)?,
            })
        };
        let mut certificates = Vec::with_capacity(self.layout.checks.len());
        for c in &self.layout.checks {
            let (lhs, rhs) = (side(&c.lhs)?, side(&c.rhs)?);
            certificates.push(Certificate {
                name: c.name.clone(),
                kind: c.kind,
                lhs,
                rhs,
                slack: rhs - lhs,
            });
        }
        Ok(ObjectiveBreakdown {
            family: self.family,
            report,
            certificates,
        })
    }

    /// The actual joint at φ.
    pub fn joint(&self, phi: &[f64]) -> Result<TabularDistribution> {
        self.check_phi(phi)?;
        let m = self.compiled.materialize(phi);
        Ok(TabularDistribution::from_parts(self.scope().clone(), m.p))
    }

    /// Marginal of one variable under the actual joint at φ.
    pub fn marginal(&self, phi: &[f64], name: &str) -> Result<Vec<f64>> {
        Ok(self.joint(phi)?.marginalize(&[name])?.probs().to_vec())
    }

    /// Children whose factors are point masses, searched over by selector.
    pub fn point_mass_children(&self) -> Vec<String> {
        self.system().point_mass_children().into_iter().map(String::from).collect()
    }

    /// Same objective with some point-mass selectors replaced.
    pub fn with_selectors(&self, selectors: &[(String, Vec<usize>)]) -> Result<Objective> {
        let mut system = self.system().clone();
        for (child, selector) in selectors {
            let f = system.factor(child)?;
            if !matches!(f.kind, crate::systems::FactorKind::PointMass { .. }) {
                return Err(Error::InvalidArgument(format!("`{child}` is not a point mass")));
            }
            let parents: Vec<&str> = f.parents.iter().map(String::as_str).collect();
            let spec = FactorSpec::point_mass(child, &parents, selector.clone());
            system = system.with_factor(spec)?;
        }
        let model = self.model.with_system(system)?;
        Ok(Objective::assemble(self.family, model, self.horizon, self.layout.clone()))
    }
}

fn divergent(family: Family) -> Error {
    Error::Divergent(format!("{family}: objective is infinite at these parameters"))
}

/// Builds any family from JSON options (`{}` or absent means defaults).
pub fn build(family: Family, problem: &Problem, options: Option<&serde_json::Value>) -> Result<Objective> {
    fn parse<T: serde::de::DeserializeOwned + Default>(v: Option<&serde_json::Value>) -> Result<T> {
        match v {
            None | Some(serde_json::Value::Null) => Ok(T::default()),
            Some(v) => serde_json::from_value(v.clone()).map_err(|e| Error::InvalidObjective(e.to_string())),
        }
    }
    fn none(v: Option<&serde_json::Value>, family: Family) -> Result<()> {
        match v {
            None | Some(serde_json::Value::Null) => Ok(()),
            Some(serde_json::Value::Object(m)) if m.is_empty() => Ok(()),
            Some(_) => Err(Error::InvalidObjective(format!("{family} takes no options"))),
        }
    }
    match family {
        Family::ElboBnn => none(options, family).and_then(|_| elbo_bnn(problem)),
        Family::MapPointMass => map_point_mass(&elbo_bnn(problem)?, &parse(options)?),
        Family::AmortizedVae => none(options, family).and_then(|_| amortized_vae(problem)),
        Family::KlControl => kl_control(problem, &parse(options)?),
        Family::MaxentRl => maxent_rl(problem, &parse(options)?),
        Family::Empowerment => empowerment(problem, &parse(options)?),
        Family::SkillDiscovery => skill_discovery(problem, &parse(options)?),
        Family::InfoGain => none(options, family).and_then(|_| info_gain(problem)),
    }
}

// ---- helpers shared by the builders ----

pub(crate) fn invalid(family: Family, msg: impl fmt::Display) -> Error {
    Error::InvalidObjective(format!("{family}: {msg}"))
}

/// Latest step among the variables in `mask`, or 0 when none carries a step.
pub(crate) fn step_of(scope: &Scope, mask: VarMask) -> usize {
    scope
        .vars()
        .iter()
        .enumerate()
        .filter(|(i, _)| mask & (1 << i) != 0)
        .filter_map(|(_, v)| v.step())
        .max()
        .unwrap_or(0)
}

/// Variables of `mask` grouped by step, in increasing step order.
pub(crate) fn step_groups(scope: &Scope, mask: VarMask) -> Vec<(usize, VarMask)> {
    let mut groups: Vec<(usize, VarMask)> = Vec::new();
    for i in 0..scope.len() {
        if mask & (1 << i) == 0 {
            continue;
        }
        let s = step_of(scope, 1 << i);
        match groups.iter_mut().find(|(t, _)| *t == s) {
            Some((_, m)) => *m |= 1 << i,
            None => groups.push((s, 1 << i)),
        }
    }
    groups.sort_by_key(|(t, _)| *t);
    groups
}

/// Sum of actual-factor atoms for the variables in `mask`.
pub(crate) fn actual_factors(mask: VarMask, n: usize) -> LogForm {
    let mut f = LogForm::new();
    for i in (0..n).filter(|i| mask & (1 << i) != 0) {
        f.add(1.0, Atom::ActualFactor(i));
    }
    f
}

pub(crate) fn target_factors(indices: &[usize]) -> LogForm {
    let mut f = LogForm::new();
    for &j in indices {
        f.add(1.0, Atom::TargetFactor(j));
    }
    f
}

pub(crate) fn difference(a: &LogForm, b: &LogForm) -> LogForm {
    let mut f = a.clone();
    f.add_form(-1.0, b);
    f
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn family_names_round_trip() {
        for f in Family::ALL {
            assert_eq!(f.as_str().parse::<Family>().unwrap(), f);
            let json = serde_json::to_string(&f).unwrap();
            assert_eq!(json, format!("\"{}\"", f.as_str()));
        }
        assert!("vanilla_rl".parse::<Family>().is_err());
    }

    #[test]
    fn certificate_violation() {
        let c = Certificate {
            name: "b".into(),
            kind: CertificateKind::AtMost,
            lhs: 1.0,
            rhs: 2.0,
            slack: 1.0,
        };
        assert!(c.holds(0.0));
        let e = Certificate {
            kind: CertificateKind::Equal,
            ..c
        };
        assert_eq!(e.violation(), 1.0);
    }
}
