//! Control families: KL control with its reward modes, and maximum-entropy RL.

use serde::{Deserialize, Serialize};

use crate::decomp::{Reference, Relation, Term};
use crate::error::Result;
use crate::forms::{Atom, LogForm};
use crate::prob::{Role, VarMask};
use crate::systems::decl::TargetFactorDecl;
use crate::systems::{Model, TargetFactor, TargetKind, TargetSpec};

use super::{
    actual_factors, difference, invalid, step_groups, step_of, target_factors, CertificateKind, Check, Family,
    Layout, Objective, Problem, Side,
};

/// How task rewards enter the target preferences.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ControlMode {
    /// Preferences are the target as given, typically `∝ exp(r)`.
    #[default]
    KlControl,
    /// Preferences `∝ exp(r) · passive dynamics`, the passive dynamics supplied as
    /// fixed normalized tables.
    KlRegularized,
    /// Preferences `∝ exp(r) · controlled dynamics`: every actual factor is tied into
    /// the target and the curiosity terms cancel.
    ExpectedReward,
}

impl ControlMode {
    pub fn as_str(self) -> &'static str {
        match self {
            ControlMode::KlControl => "kl-control",
            ControlMode::KlRegularized => "kl-regularized",
            ControlMode::ExpectedReward => "expected-reward",
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ControlOptions {
    #[serde(default)]
    pub mode: ControlMode,
    /// Passive dynamics for `kl-regularized`, in the target-factor declaration format.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub passive: Vec<TargetFactorDecl>,
}

fn reward_indices(target: &TargetSpec) -> Vec<usize> {
    target
        .factors()
        .iter()
        .enumerate()
        .filter(|(_, f)| matches!(f.kind, TargetKind::Reward { .. }))
        .map(|(j, _)| j)
        .collect()
}

/// Per-step expected preferences and curiosity: `total = −Σ_t (pref_t + curiosity_t)`.
pub fn kl_control(problem: &Problem, options: &ControlOptions) -> Result<Objective> {
    let fam = Family::KlControl;
    let mode = options.mode;
    let rewards = reward_indices(&problem.target);
    if mode != ControlMode::KlControl && rewards.is_empty() {
        return Err(invalid(fam, format!("reward table missing for {} mode", mode.as_str())));
    }
    if mode != ControlMode::KlRegularized && !options.passive.is_empty() {
        return Err(invalid(fam, "passive dynamics only apply to kl-regularized mode"));
    }
    let target = match mode {
        ControlMode::KlControl => problem.target.clone(),
        ControlMode::KlRegularized => {
            if options.passive.is_empty() {
                return Err(invalid(fam, "kl-regularized mode needs passive dynamics"));
            }
            let mut target = problem.target.clone();
            for decl in &options.passive {
                let f = decl.to_factor()?;
                if !matches!(f.kind, TargetKind::Table { normalized: true, .. }) {
                    return Err(invalid(fam, format!("passive dynamics `{}` must be a normalized table", f.name)));
                }
                target.push(f)?;
            }
            target
        }
        ControlMode::ExpectedReward => {
            let mut target = TargetSpec::default();
            for v in problem.system.variables() {
                target.push(TargetFactor::tied(&format!("dynamics_{}", v.name()), v.name()))?;
            }
            for &j in &rewards {
                target.push(problem.target.factors()[j].clone())?;
            }
            target
        }
    };
    let model = Model::new(problem.system.clone(), target)?;
    let scope = model.scope().clone();
    let n = scope.len();
    let groups = step_groups(&scope, scope.full_mask());

    let layout = if mode == ControlMode::ExpectedReward {
        let compiled = model.compile();
        let rewards = reward_indices(model.target());
        let mut terms = Vec::new();
        for &(t, g) in &groups {
            let at_step: Vec<usize> = (0..compiled.target.len())
                .filter(|&j| step_of(&scope, compiled.target[j].mask & target_child_mask(&model, j)) == t)
                .collect();
            terms.push(Term::new(&format!("expected_pref_{t}"), -1.0, target_factors(&at_step)));
            terms.push(Term::new(&format!("curiosity_{t}"), -1.0, actual_factors(g, n).scaled(-1.0)));
        }
        Layout::new(terms, Relation::Identity, Reference::FreeEnergy).check(Check::new(
            "curiosity_cancellation",
            CertificateKind::Equal,
            Side::Total,
            Side::Form(target_factors(&rewards).scaled(-1.0)),
        ))
    } else {
        let mut terms = Vec::new();
        let mut prev: VarMask = 0;
        for &(t, g) in &groups {
            let cur = prev | g;
            let pref = LogForm::new().plus(Atom::Target(cur)).minus(Atom::Target(prev));
            let curiosity = LogForm::new().minus(Atom::Actual(cur)).plus(Atom::Actual(prev));
            terms.push(Term::new(&format!("expected_pref_{t}"), -1.0, pref));
            terms.push(Term::new(&format!("curiosity_{t}"), -1.0, curiosity));
            prev = cur;
        }
        let mut layout = Layout::new(terms, Relation::Identity, Reference::JointKl);
        for (j, f) in model.target().factors().iter().enumerate() {
            if matches!(f.kind, TargetKind::Reward { .. }) {
                layout = layout.diagnostic(format!("expected_{}", f.name), target_factors(&[j]));
            }
        }
        layout
    };
    Ok(Objective::assemble(fam, model, problem.horizon, layout))
}

/// Mask used to place a target factor at a step: a tied factor belongs to its child's
/// step, anything else to the latest step in its scope.
fn target_child_mask(model: &Model, j: usize) -> VarMask {
    match &model.target().factors()[j].kind {
        TargetKind::Tied { child } => 1 << model.scope().position(child).expect("validated"),
        _ => VarMask::MAX,
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MaxentOptions {
    /// Action prior shared by every action; replaces any prior in the target. Without
    /// it, actions lacking a prior get a uniform one.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub action_prior: Option<Vec<f64>>,
}

/// `Σ_t (action_complexity_t − reward_t) = joint_kl − ln Z`, with the environment tied
/// into the target so its factors cancel.
pub fn maxent_rl(problem: &Problem, options: &MaxentOptions) -> Result<Objective> {
    let fam = Family::MaxentRl;
    let system = &problem.system;
    let scope = system.scope();
    let n = scope.len();
    for v in scope.vars() {
        if !(v.role().is_input() || v.role() == Role::Action) {
            return Err(invalid(fam, format!("`{}` must be an input or an action", v.name())));
        }
    }
    let actions: Vec<&str> = scope
        .vars()
        .iter()
        .filter(|v| v.role() == Role::Action)
        .map(|v| v.name())
        .collect();
    if actions.is_empty() {
        return Err(invalid(fam, "needs at least one action"));
    }

    let is_prior = |f: &TargetFactor| {
        f.scope.len() == 1
            && actions.contains(&f.scope[0].as_str())
            && matches!(f.kind, TargetKind::Table { .. } | TargetKind::Conditional { .. })
    };
    let mut target = TargetSpec::default();
    for f in problem.target.factors() {
        match &f.kind {
            TargetKind::Tied { child } => {
                if scope.vars()[scope.position(child)?].role() == Role::Action {
                    return Err(invalid(fam, format!("`{}` ties the policy into the target", f.name)));
                }
                target.push(f.clone())?;
            }
            TargetKind::Reward { .. } => target.push(f.clone())?,
            _ if is_prior(f) => {
                if options.action_prior.is_none() {
                    target.push(f.clone())?;
                }
            }
            _ => return Err(invalid(fam, format!("unsupported target factor `{}`", f.name))),
        }
    }
    for v in scope.vars().iter().filter(|v| v.role().is_input()) {
        let tied = target
            .factors()
            .iter()
            .any(|f| matches!(&f.kind, TargetKind::Tied { child } if child == v.name()));
        if !tied {
            return Err(invalid(fam, format!("target missing environment factor for `{}`", v.name())));
        }
    }
    for &a in &actions {
        let card = scope.vars()[scope.position(a)?].cardinality();
        let has_prior = target.factors().iter().any(|f| is_prior(f) && f.scope[0] == a);
        if has_prior {
            continue;
        }
        let weights = match &options.action_prior {
            Some(p) if p.len() != card => {
                return Err(invalid(fam, format!("action prior has {} entries, `{a}` has {card} outcomes", p.len())))
            }
            Some(p) => p.clone(),
            None => vec![1.0 / card as f64; card],
        };
        target.push(TargetFactor::table(&format!("action_prior_{a}"), &[a], weights, true))?;
    }

    let model = Model::new(system.clone(), target)?;
    let compiled = model.compile();
    let mut steps: Vec<usize> = step_groups(scope, scope.full_mask()).iter().map(|(t, _)| *t).collect();
    steps.dedup();
    let mut terms = Vec::new();
    let mut layout_diag = Vec::new();
    for t in steps {
        let mut complexity = LogForm::new();
        let mut entropy = LogForm::new();
        for &a in &actions {
            let i = scope.position(a)?;
            if step_of(scope, 1 << i) != t {
                continue;
            }
            let priors: Vec<usize> = model
                .target()
                .factors()
                .iter()
                .enumerate()
                .filter(|(_, f)| is_prior(f) && f.scope[0] == a)
                .map(|(j, _)| j)
                .collect();
            complexity.add_form(1.0, &difference(&actual_factors(1 << i, n), &target_factors(&priors)));
            entropy.add_form(-1.0, &actual_factors(1 << i, n));
        }
        let rewards: Vec<usize> = (0..compiled.target.len())
            .filter(|&j| {
                matches!(model.target().factors()[j].kind, TargetKind::Reward { .. })
                    && step_of(scope, compiled.target[j].mask) == t
            })
            .collect();
        if !complexity.is_empty() {
            terms.push(Term::new(&format!("action_complexity_{t}"), 1.0, complexity));
            layout_diag.push((format!("policy_entropy_{t}"), entropy));
        }
        if !rewards.is_empty() {
            terms.push(Term::new(&format!("reward_{t}"), -1.0, target_factors(&rewards)));
        }
    }
    let mut layout = Layout::new(terms, Relation::Identity, Reference::FreeEnergy);
    for (name, form) in layout_diag {
        layout = layout.diagnostic(name, form);
    }
    Ok(Objective::assemble(fam, model, problem.horizon, layout))
}
