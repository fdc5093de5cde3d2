//! Information-maximizing families: empowerment, skill discovery and information gain.
//! Each adds learnable reverse predictors to the target where the user has not
//! supplied them.

use serde::{Deserialize, Serialize};

use crate::decomp::{Reference, Relation, Term};
use crate::error::{Error, Result};
use crate::forms::{cond_kl, Atom, LogForm};
use crate::prob::{Role, Scope, VarMask};
use crate::systems::{Model, TargetFactor, TargetKind, TargetSpec};

use super::{
    actual_factors, difference, invalid, step_groups, step_of, target_factors, CertificateKind, Check, Family,
    Layout, Objective, Problem, Side,
};

const SLICE_TOL: f64 = 1e-9;

fn names_in(scope: &Scope, mask: VarMask) -> Vec<String> {
    (0..scope.len())
        .filter(|i| mask & (1 << i) != 0)
        .map(|i| scope.vars()[i].name().to_string())
        .collect()
}

fn bits(mask: VarMask) -> impl Iterator<Item = usize> {
    (0..64).filter(move |i| mask & (1 << i) != 0)
}

/// Zero-logit conditional of `child` given `parents`.
fn fresh_predictor(scope: &Scope, name: &str, parents: &[String], child: &str) -> Result<TargetFactor> {
    let mut names: Vec<&str> = parents.iter().map(String::as_str).collect();
    names.push(child);
    let size = names
        .iter()
        .map(|n| scope.position(n).map(|p| scope.vars()[p].cardinality()))
        .product::<Result<usize>>()?;
    Ok(TargetFactor::conditional(name, &names, vec![0.0; size]))
}

/// A user-supplied predictor must be a normalized conditional of `child`.
fn check_predictor(scope: &Scope, f: &TargetFactor, child: &str, allowed: VarMask) -> Result<()> {
    if f.scope.last().map(String::as_str) != Some(child) {
        return Err(Error::InvalidObjective(format!("predictor `{}` must predict `{child}`", f.name)));
    }
    for n in &f.scope[..f.scope.len() - 1] {
        if allowed & (1 << scope.position(n)?) == 0 {
            return Err(Error::InvalidObjective(format!("predictor `{}` may not condition on `{n}`", f.name)));
        }
    }
    match &f.kind {
        TargetKind::Conditional { .. } | TargetKind::SharedConditional { .. } => Ok(()),
        TargetKind::Table { weights, .. } => {
            let card = scope.vars()[scope.position(child)?].cardinality();
            for (s, slice) in weights.chunks(card).enumerate() {
                let sum: f64 = slice.iter().sum();
                if (sum - 1.0).abs() > SLICE_TOL {
                    return Err(Error::InvalidObjective(format!(
                        "predictor `{}` slice {s} is unnormalized (sums to {sum})",
                        f.name
                    )));
                }
            }
            Ok(())
        }
        _ => Err(Error::InvalidObjective(format!("predictor `{}` must be a conditional or a table", f.name))),
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EmpowermentOptions {
    /// Reverse predictor for the action at step t sees inputs up to step t + k;
    /// absent means the full input sequence.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub k: Option<usize>,
}

/// `control − gen_empowerment_bound = joint KL` with learnable reverse predictors
/// `reverse_<a>`; the per-step decoder/source sum is certified to stay below the exact
/// action-input information.
pub fn empowerment(problem: &Problem, options: &EmpowermentOptions) -> Result<Objective> {
    let fam = Family::Empowerment;
    let scope = problem.system.scope().clone();
    let full = scope.full_mask();
    let x = scope.mask_where(|v| v.role().is_input());
    let a = scope.mask_where(|v| v.role() == Role::Action);
    if x | a != full {
        return Err(invalid(fam, "every variable must be an input or an action"));
    }
    if a == 0 || x == 0 {
        return Err(invalid(fam, "needs actions and inputs"));
    }
    let actions: Vec<usize> = step_groups(&scope, a).into_iter().flat_map(|(_, g)| bits(g)).collect();

    let mut target = TargetSpec::default();
    for f in problem.target.factors() {
        target.push(f.clone())?;
    }
    let mut earlier: VarMask = 0;
    for &i in &actions {
        let child = scope.vars()[i].name();
        let name = format!("reverse_{child}");
        let t = step_of(&scope, 1 << i);
        let window = x & !bits(x)
            .filter(|&j| match (options.k, scope.vars()[j].step()) {
                (Some(k), Some(s)) => s > t + k,
                _ => false,
            })
            .fold(0, |m, j| m | (1 << j));
        match target.factor(&name) {
            Some(f) => check_predictor(&scope, f, child, x | earlier).map_err(|e| invalid(fam, e))?,
            None => target.push(fresh_predictor(&scope, &name, &names_in(&scope, window | earlier), child)?)?,
        }
        earlier |= 1 << i;
    }
    let model = Model::new(problem.system.clone(), target)?;
    let compiled = model.compile();
    let mut reverse = Vec::new();
    for (j, f) in model.target().factors().iter().enumerate() {
        if actions.iter().any(|&i| f.name == format!("reverse_{}", scope.vars()[i].name())) {
            reverse.push(j);
        } else if compiled.target[j].mask & !x != 0 {
            return Err(invalid(fam, format!("target factor `{}` must involve inputs only", f.name)));
        }
    }

    let control = LogForm::new()
        .plus(Atom::Actual(full))
        .minus(Atom::Actual(a))
        .minus(Atom::Target(x));
    let bound = difference(&target_factors(&reverse), &LogForm::new().plus(Atom::Actual(a)));
    let exact = LogForm::new()
        .plus(Atom::Actual(full))
        .minus(Atom::Actual(x))
        .minus(Atom::Actual(a));
    let mut layout = Layout::new(
        vec![
            Term::new("control", 1.0, control),
            Term::new("gen_empowerment_bound", -1.0, bound.clone()),
        ],
        Relation::Identity,
        Reference::JointKl,
    )
    .check(Check::new("decoder_bound", CertificateKind::AtMost, Side::Form(bound), Side::Form(exact.clone())))
    .diagnostic("empowerment_exact", exact);
    let mut before: VarMask = 0;
    for &i in &actions {
        let j = compiled.target_index(&format!("reverse_{}", scope.vars()[i].name())).expect("added above");
        let source = LogForm::new().plus(Atom::Actual(before | (1 << i))).minus(Atom::Actual(before));
        layout = layout.diagnostic(
            format!("decoder_source_{}", scope.vars()[i].name()),
            difference(&target_factors(&[j]), &source),
        );
        before |= 1 << i;
    }
    Ok(Objective::assemble(fam, model, problem.horizon, layout))
}

/// Which inputs a skill's reverse predictor sees.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SkillWindow {
    /// Inputs within the skill's own block of steps.
    #[default]
    Block,
    /// The whole input sequence.
    All,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SkillOptions {
    #[serde(default)]
    pub window: SkillWindow,
}

/// `control + action_complexity − skill_info_bound = joint_kl − ln Z` with learnable
/// skill predictors `skill_predictor_<z>`. Input and action target factors play the
/// roles of τ(x) and τ(a).
pub fn skill_discovery(problem: &Problem, options: &SkillOptions) -> Result<Objective> {
    let fam = Family::SkillDiscovery;
    problem.horizon.validate()?;
    let scope = problem.system.scope().clone();
    let n = scope.len();
    let x = scope.mask_where(|v| v.role().is_input());
    let a = scope.mask_where(|v| v.role() == Role::Action);
    let z = scope.mask_where(|v| v.role() == Role::Skill);
    if x | a | z != scope.full_mask() {
        return Err(invalid(fam, "every variable must be an input, an action or a skill"));
    }
    if z == 0 {
        return Err(invalid(fam, "needs a skill variable"));
    }
    let skills: Vec<usize> = bits(z).collect();
    let h = problem.horizon;
    let duration = h.skill_duration.unwrap_or(h.steps);
    let blocks = h.skill_blocks().unwrap_or(1);
    if skills.len() != blocks {
        return Err(invalid(fam, format!("{} skills for {blocks} skill blocks", skills.len())));
    }

    let mut target = problem.target.clone();
    for (k, &i) in skills.iter().enumerate() {
        let child = scope.vars()[i].name();
        let name = format!("skill_predictor_{child}");
        let window = match options.window {
            SkillWindow::All => x,
            SkillWindow::Block => bits(x)
                .filter(|&j| match scope.vars()[j].step() {
                    Some(s) => s > k * duration && s <= (k + 1) * duration,
                    None => true,
                })
                .fold(0, |m, j| m | (1 << j)),
        };
        match target.factor(&name) {
            Some(f) => check_predictor(&scope, f, child, x).map_err(|e| invalid(fam, e))?,
            None => target.push(fresh_predictor(&scope, &name, &names_in(&scope, window), child)?)?,
        }
    }
    let model = Model::new(problem.system.clone(), target)?;
    let compiled = model.compile();
    let (mut tau_x, mut tau_a, mut predictors) = (Vec::new(), Vec::new(), Vec::new());
    for (j, f) in model.target().factors().iter().enumerate() {
        let mask = compiled.target[j].mask;
        if f.name.starts_with("skill_predictor_") && mask & z != 0 {
            predictors.push(j);
        } else if mask & !x == 0 {
            tau_x.push(j);
        } else if mask & !a == 0 {
            tau_a.push(j);
        } else {
            return Err(invalid(fam, format!("target factor `{}` mixes inputs, actions and skills", f.name)));
        }
    }

    let control = difference(&actual_factors(x, n), &target_factors(&tau_x));
    let complexity = difference(&actual_factors(a, n), &target_factors(&tau_a));
    let bound = difference(&target_factors(&predictors), &actual_factors(z, n));
    let information = LogForm::new()
        .plus(Atom::Actual(z | x))
        .minus(Atom::Actual(z))
        .minus(Atom::Actual(x));
    let mut layout = Layout::new(
        vec![
            Term::new("control", 1.0, control),
            Term::new("action_complexity", 1.0, complexity),
            Term::new("skill_info_bound", -1.0, bound.clone()),
        ],
        Relation::Identity,
        Reference::FreeEnergy,
    )
    .diagnostic("skill_information", information.clone());
    let roots = skills
        .iter()
        .all(|&i| problem.system.factors()[i].parents.is_empty());
    if roots {
        layout = layout.check(Check::new(
            "predictor_bound",
            CertificateKind::AtMost,
            Side::Form(bound),
            Side::Form(information),
        ));
    }
    Ok(Objective::assemble(fam, model, problem.horizon, layout))
}

/// Past/future split over parameters: simplicity − repr_learning + control − info_gain
/// upper-bounds the joint KL; the telescoped per-step intrinsic rewards are certified
/// to stay below the information gain.
pub fn info_gain(problem: &Problem) -> Result<Objective> {
    let fam = Family::InfoGain;
    let model = Model::new(problem.system.clone(), problem.target.clone())?;
    let scope = model.scope().clone();
    let full = scope.full_mask();
    if scope.mask_where(|v| v.role() == Role::Parameter) == 0 {
        return Err(invalid(fam, "no parameter-role variable present"));
    }
    let (past, future_inputs) = problem.horizon.partition(&scope)?;
    let fut = future_inputs | scope.mask_where(|v| v.role() == Role::Action);
    let z = full & !(past | fut);

    let simplicity = LogForm::new()
        .plus(Atom::Actual(z | past))
        .minus(Atom::Actual(past))
        .minus(Atom::Target(z));
    let repr = LogForm::new()
        .plus(Atom::Target(past | z))
        .minus(Atom::Target(z))
        .minus(Atom::Actual(past));
    let control = LogForm::new()
        .plus(Atom::Actual(full))
        .minus(Atom::Actual(past | z))
        .minus(Atom::Target(past | fut))
        .plus(Atom::Target(past));
    let gain = LogForm::new()
        .plus(Atom::Target(full))
        .minus(Atom::Target(past | fut))
        .minus(Atom::Actual(z | past))
        .plus(Atom::Actual(past));
    let exact = LogForm::new()
        .plus(Atom::Actual(full))
        .minus(Atom::Actual(past | fut))
        .minus(Atom::Actual(z | past))
        .plus(Atom::Actual(past));

    let mut rewards = Vec::new();
    let mut seen = past;
    for (t, g) in step_groups(&scope, fut) {
        let now = seen | g;
        let r = LogForm::new()
            .plus(Atom::Target(z | now))
            .minus(Atom::Target(now))
            .minus(Atom::Actual(z | seen))
            .plus(Atom::Actual(seen));
        rewards.push((format!("intrinsic_reward_{t}"), r));
        seen = now;
    }
    let mut layout = Layout::new(
        vec![
            Term::new("simplicity", 1.0, simplicity),
            Term::new("repr_learning", -1.0, repr),
            Term::new("control", 1.0, control),
            Term::new("info_gain", -1.0, gain.clone()),
        ],
        Relation::LowerBoundsJoint,
        Reference::JointKl,
    )
    .check(Check::new(
        "intrinsic_reward_sum",
        CertificateKind::AtMost,
        Side::Terms(rewards.iter().map(|(_, f)| (1.0, f.clone())).collect()),
        Side::Form(gain),
    ))
    .diagnostic("exact_info_gain", exact)
    .diagnostic("latent_belief_gap", cond_kl(z, past));
    for (name, f) in rewards {
        layout = layout.diagnostic(name, f);
    }
    Ok(Objective::assemble(fam, model, problem.horizon, layout))
}
