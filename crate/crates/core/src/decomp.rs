//! The joint KL and its decompositions into named terms, each with a checked relation
//! to the joint KL.
//!
//! Inputs are the variables with an input role; latents are everything else (latent
//! states, actions, skills, parameters).

use indexmap::IndexMap;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::forms::{cond_kl, ln_actual_cond, ln_target_cond, Atom, Evaluator, LogForm};
use crate::prob::{Assignment, Role, Scope, VarMask};
use crate::systems::{ActualSystem, Horizon, Model, TargetSpec};

/// Tolerance for identity relations and bound slacks.
pub const IDENTITY_TOL: f64 = 1e-9;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Relation {
    /// The terms sum to the reference quantity.
    Identity,
    /// The joint KL is at most the total.
    LowerBoundsJoint,
    /// The joint KL is at least the total.
    UpperBoundsJoint,
}

/// Quantity an identity is checked against.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Reference {
    /// KL to the normalized target.
    JointKl,
    /// KL to the unnormalized target, `joint_kl − ln Z`.
    FreeEnergy,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DecompositionReport {
    pub equation: String,
    pub joint_kl: f64,
    pub log_partition: f64,
    pub terms: IndexMap<String, f64>,
    pub total: f64,
    pub relation: Relation,
    pub reference: Reference,
    /// Identity: `total − reference`. Bounds: distance from the joint KL in the stated
    /// direction, non-negative when the bound holds.
    pub slack: f64,
    pub divergent: bool,
    #[serde(default, skip_serializing_if = "IndexMap::is_empty")]
    pub flags: IndexMap<String, bool>,
    #[serde(default, skip_serializing_if = "IndexMap::is_empty")]
    pub diagnostics: IndexMap<String, f64>,
}

impl DecompositionReport {
    pub fn term(&self, name: &str) -> f64 {
        self.terms[name]
    }

    /// How far the stated relation is from holding (0 when it holds exactly).
    pub fn violation(&self) -> f64 {
        match self.relation {
            Relation::Identity => self.slack.abs(),
            _ => (-self.slack).max(0.0),
        }
    }

    pub fn holds(&self, tol: f64) -> bool {
        self.violation() <= tol
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }
}

/// A named term `sign · E_p[form]` of a breakdown.
#[derive(Clone, Debug)]
pub(crate) struct Term {
    pub name: String,
    pub sign: f64,
    pub form: LogForm,
}

impl Term {
    pub fn new(name: &str, sign: f64, form: LogForm) -> Self {
        Self {
            name: name.to_string(),
            sign,
            form,
        }
    }
}

pub(crate) fn joint_form(full: VarMask) -> LogForm {
    LogForm::new().plus(Atom::Actual(full)).minus(Atom::Target(full))
}

/// Evaluates terms and fills in the relation bookkeeping.
pub(crate) fn assemble(
    eval: &Evaluator,
    equation: &str,
    terms: &[Term],
    relation: Relation,
    reference: Reference,
) -> DecompositionReport {
    let full = eval.scope().full_mask();
    let joint = eval.expect(&joint_form(full));
    let mut divergent = joint.divergent;
    let mut values = IndexMap::new();
    let mut total = 0.0;
    for t in terms {
        let e = eval.expect(&t.form);
        divergent |= e.divergent;
        values.insert(t.name.clone(), e.value);
        total += t.sign * e.value;
    }
    let reference_value = match reference {
        Reference::JointKl => joint.value,
        Reference::FreeEnergy => joint.value - eval.ln_z,
    };
    let slack = match relation {
        Relation::Identity => total - reference_value,
        Relation::LowerBoundsJoint => total - reference_value,
        Relation::UpperBoundsJoint => reference_value - total,
    };
    DecompositionReport {
        equation: equation.to_string(),
        joint_kl: joint.value,
        log_partition: eval.ln_z,
        terms: values,
        total,
        relation,
        reference,
        slack,
        divergent,
        flags: IndexMap::new(),
        diagnostics: IndexMap::new(),
    }
}

/// Input and latent masks by role.
pub(crate) fn split_roles(scope: &Scope) -> (VarMask, VarMask) {
    let x = scope.mask_where(|v| v.role().is_input());
    (x, scope.full_mask() & !x)
}

fn with_model<T>(system: &ActualSystem, target: &TargetSpec, f: impl FnOnce(&Evaluator) -> T) -> Result<T> {
    let model = Model::new(system.clone(), target.clone())?;
    let compiled = model.compile();
    let eval = Evaluator::new(&compiled, model.parameters().values());
    Ok(f(&eval))
}

fn check_divergence(report: DecompositionReport) -> Result<DecompositionReport> {
    if report.divergent {
        return Err(Error::Divergent(format!(
            "{}: the actual distribution puts mass where the target has none",
            report.equation
        )));
    }
    Ok(report)
}

/// KL between the actual joint and the normalized target.
pub fn joint_kl(system: &ActualSystem, target: &TargetSpec) -> Result<DecompositionReport> {
    with_model(system, target, |e| {
        let full = e.scope().full_mask();
        assemble(e, "joint", &[Term::new("joint_kl", 1.0, joint_form(full))], Relation::Identity, Reference::JointKl)
    })
    .and_then(check_divergence)
}

/// Joint KL = latent preference KL − information bound on I[x; z].
pub fn decompose_latent_side(system: &ActualSystem, target: &TargetSpec) -> Result<DecompositionReport> {
    with_model(system, target, latent_side).and_then(check_divergence)
}

pub(crate) fn latent_side(e: &Evaluator) -> DecompositionReport {
    let (x, z) = split_roles(e.scope());
    let mut pref = ln_actual_cond(z, x);
    pref.add(-1.0, Atom::Target(z));
    let mut bound = ln_target_cond(x, z);
    bound.add(-1.0, Atom::Actual(x));
    assemble(
        e,
        "latent-side",
        &[Term::new("latent_pref_kl", 1.0, pref), Term::new("info_bound", -1.0, bound)],
        Relation::Identity,
        Reference::JointKl,
    )
}

/// Joint KL = input preference KL − information bound on I[x; z], from the latent side.
pub fn decompose_input_side(system: &ActualSystem, target: &TargetSpec) -> Result<DecompositionReport> {
    with_model(system, target, input_side).and_then(check_divergence)
}

pub(crate) fn input_side(e: &Evaluator) -> DecompositionReport {
    let (x, z) = split_roles(e.scope());
    let mut pref = ln_actual_cond(x, z);
    pref.add(-1.0, Atom::Target(x));
    let mut bound = ln_target_cond(z, x);
    bound.add(-1.0, Atom::Actual(z));
    assemble(
        e,
        "input-side",
        &[Term::new("input_pref_kl", 1.0, pref), Term::new("info_bound_latent", -1.0, bound)],
        Relation::Identity,
        Reference::JointKl,
    )
}

/// Joint KL = energy − entropy, with the energy taken under the normalized target; the
/// target's log-partition is reported alongside.
pub fn energy_entropy(system: &ActualSystem, target: &TargetSpec) -> Result<DecompositionReport> {
    with_model(system, target, energy_entropy_terms).and_then(check_divergence)
}

pub(crate) fn energy_entropy_terms(e: &Evaluator) -> DecompositionReport {
    let full = e.scope().full_mask();
    assemble(
        e,
        "energy-entropy",
        &[
            Term::new("energy", 1.0, LogForm::new().minus(Atom::Target(full))),
            Term::new("entropy", -1.0, LogForm::new().minus(Atom::Actual(full))),
        ],
        Relation::Identity,
        Reference::JointKl,
    )
}

/// Joint KL = expected free energy − input entropy.
pub fn expected_free_energy(system: &ActualSystem, target: &TargetSpec) -> Result<DecompositionReport> {
    with_model(system, target, efe_terms).and_then(check_divergence)
}

pub(crate) fn efe_terms(e: &Evaluator) -> DecompositionReport {
    let (x, z) = split_roles(e.scope());
    let mut efe = ln_target_cond(x, z).scaled(-1.0);
    efe.add_form(1.0, &ln_actual_cond(z, x));
    efe.add(-1.0, Atom::Target(z));
    assemble(
        e,
        "expected-free-energy",
        &[
            Term::new("efe", 1.0, efe),
            Term::new("input_entropy", -1.0, LogForm::new().minus(Atom::Actual(x))),
        ],
        Relation::Identity,
        Reference::JointKl,
    )
}

/// How realized actions and skills enter the past/future split.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Realization {
    /// Substitute realized actions and skills into the factorization; condition on
    /// observed past inputs.
    #[default]
    Intervene,
    /// Condition on every realized value.
    Condition,
}

/// Past/future split after observing `realized`; the four terms upper-bound the joint KL.
pub fn past_future_split(
    system: &ActualSystem,
    target: &TargetSpec,
    horizon: &Horizon,
    realized: &Assignment,
) -> Result<DecompositionReport> {
    past_future_split_with(system, target, horizon, realized, Realization::Intervene)
}

pub fn past_future_split_with(
    system: &ActualSystem,
    target: &TargetSpec,
    horizon: &Horizon,
    realized: &Assignment,
    mode: Realization,
) -> Result<DecompositionReport> {
    let scope = system.scope().clone();
    let (past, future) = horizon.partition(&scope)?;
    let e = realized_evaluator(system, target, realized, mode)?;
    let report = split_terms(&e, past, future);
    check_divergence(report)
}

/// Evaluator under the realized actual distribution and the target restricted to the
/// realized values.
pub(crate) fn realized_evaluator(
    system: &ActualSystem,
    target: &TargetSpec,
    realized: &Assignment,
    mode: Realization,
) -> Result<Evaluator<'static>> {
    realized.validate(system.variables())?;
    let scope = system.scope().clone();
    let mut done = Assignment::new();
    for (name, value) in realized.iter() {
        let var = &scope.vars()[scope.position(name)?];
        if !var.role().is_realizable() {
            return Err(Error::NotRealizable {
                name: name.to_string(),
                role: var.role().to_string(),
            });
        }
        if mode == Realization::Intervene && matches!(var.role(), Role::Action | Role::Skill) {
            done.insert(name, value);
        }
    }
    let actual = if done.is_empty() {
        system.clone()
    } else {
        system.intervene(&done)?
    };
    let mut p = actual.build_joint()?.probs().to_vec();
    let ln_qt = Model::new(system.clone(), target.clone())?
        .target_table()?
        .weights()
        .iter()
        .map(|w| w.ln())
        .collect::<Vec<_>>();
    let mut ln_qt = ln_qt;
    let evidence: Vec<(usize, usize)> = realized
        .iter()
        .map(|(n, v)| (scope.position(n).unwrap(), v))
        .collect();
    for (i, (pi, qi)) in p.iter_mut().zip(ln_qt.iter_mut()).enumerate() {
        if evidence.iter().any(|&(pos, v)| scope.digit(i, pos) != v) {
            *pi = 0.0;
            *qi = f64::NEG_INFINITY;
        }
    }
    let mass: f64 = crate::prob::sum::compensated_sum(p.iter().copied());
    if mass <= 0.0 {
        return Err(Error::ConditioningOnNull);
    }
    if ln_qt.iter().all(|l| *l == f64::NEG_INFINITY) {
        return Err(Error::ZeroMass);
    }
    p.iter_mut().for_each(|v| *v /= mass);
    Ok(Evaluator::from_tables(scope, p, ln_qt))
}

pub(crate) fn split_terms(e: &Evaluator, past: VarMask, future: VarMask) -> DecompositionReport {
    let full = e.scope().full_mask();
    let inputs = past | future;
    let z = full & !inputs;
    let mut past_pref = ln_actual_cond(z, past);
    past_pref.add(-1.0, Atom::Target(z));
    let mut repr = ln_target_cond(past, z);
    repr.add(-1.0, Atom::Actual(past));
    let mut future_pref = ln_actual_cond(future, past | z);
    future_pref.add_form(-1.0, &ln_target_cond(future, past));
    let mut exploration = ln_target_cond(z, inputs);
    exploration.add_form(-1.0, &ln_actual_cond(z, past));
    let mut report = assemble(
        e,
        "past-future",
        &[
            Term::new("past_latent_pref", 1.0, past_pref),
            Term::new("repr_learning", -1.0, repr),
            Term::new("future_input_pref", 1.0, future_pref),
            Term::new("exploration", -1.0, exploration),
        ],
        Relation::LowerBoundsJoint,
        Reference::JointKl,
    );
    // per-term gap: belief update split from the prior
    let gap = e.expect(&cond_kl(z, past));
    report.diagnostics.insert("latent_belief_gap".into(), gap.value);
    report
}

/// Joint KL = past inference KL + uncontrolled future KL; the latter vanishes when the
/// actual future inputs follow the target's predictions.
pub fn bayesian_future_check(
    system: &ActualSystem,
    target: &TargetSpec,
    horizon: &Horizon,
) -> Result<DecompositionReport> {
    let (_, future) = horizon.partition(system.scope())?;
    with_model(system, target, |e| bayesian_terms(e, future)).and_then(check_divergence)
}

pub(crate) fn bayesian_terms(e: &Evaluator, future: VarMask) -> DecompositionReport {
    let full = e.scope().full_mask();
    let rest = full & !future;
    let past_vi = LogForm::new().plus(Atom::Actual(rest)).minus(Atom::Target(rest));
    let uncontrolled = cond_kl(future, rest);
    let mut report = assemble(
        e,
        "missing-data",
        &[Term::new("past_vi", 1.0, past_vi), Term::new("uncontrolled_future", 1.0, uncontrolled)],
        Relation::Identity,
        Reference::JointKl,
    );
    let satisfied = report.term("uncontrolled_future") < IDENTITY_TOL;
    report.flags.insert("bayesian_satisfied".into(), satisfied);
    report
}
