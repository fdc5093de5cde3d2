//! Inference families: variational Bayes over parameters, its point-mass (MAP) limit
//! and amortized latent representations.

use serde::{Deserialize, Serialize};

use crate::decomp::{Reference, Relation, Term};
use crate::error::{Error, Result};
use crate::forms::{cond_kl, Atom, LogForm};
use crate::prob::sum::CompensatedSum;
use crate::prob::Role;
use crate::systems::params::log_softmax_slices;
use crate::systems::{FactorKind, FactorSpec, Model, TargetKind};

use super::{invalid, target_factors, CertificateKind, Check, Family, Layout, Objective, Problem, Side};

/// Variational Bayes over parameter-role variables given fixed data:
/// complexity + accuracy + constant = `joint_kl − ln Z`.
pub fn elbo_bnn(problem: &Problem) -> Result<Objective> {
    let fam = Family::ElboBnn;
    let model = Model::new(problem.system.clone(), problem.target.clone())?;
    let scope = model.scope().clone();
    let full = scope.full_mask();
    let w = scope.mask_where(|v| v.role() == Role::Parameter);
    let x = scope.mask_where(|v| v.role().is_input());
    if w == 0 {
        return Err(invalid(fam, "needs a parameter-role variable"));
    }
    if w | x != full {
        return Err(invalid(fam, "every variable must be a parameter or an input"));
    }
    for (v, f) in scope.vars().iter().zip(model.system().factors()) {
        if v.role().is_input() && !matches!(f.kind, FactorKind::Fixed { .. }) {
            return Err(invalid(fam, format!("data factor `{}` must be fixed", v.name())));
        }
    }
    let compiled = model.compile();
    let (prior, lik): (Vec<usize>, Vec<usize>) = (0..compiled.target.len()).partition(|&j| compiled.target[j].mask & !w == 0);

    let mut complexity = LogForm::new().plus(Atom::Actual(full)).minus(Atom::Actual(x));
    complexity.add_form(-1.0, &target_factors(&prior));
    let accuracy = target_factors(&lik).scaled(-1.0);
    let constant = LogForm::new().plus(Atom::Actual(x));
    let layout = Layout::new(
        vec![
            Term::new("complexity", 1.0, complexity),
            Term::new("accuracy", 1.0, accuracy),
            Term::new("constant", 1.0, constant),
        ],
        Relation::Identity,
        Reference::FreeEnergy,
    )
    .diagnostic("posterior_kl", cond_kl(w, x))
    .diagnostic("belief_entropy", LogForm::new().minus(Atom::Actual(w)));
    Ok(Objective::assemble(fam, model, problem.horizon, layout))
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MapOptions {
    /// Keep the belief as a softmax at this temperature instead of a point mass, so
    /// the objective stays differentiable in the parameter value.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub relaxed_temperature: Option<f64>,
}

/// The ELBO with the parameter belief replaced by a point mass at the belief's mode.
/// Point-mass selectors are searched over rather than differentiated.
pub fn map_point_mass(elbo: &Objective, options: &MapOptions) -> Result<Objective> {
    let fam = Family::MapPointMass;
    if elbo.family() != Family::ElboBnn {
        return Err(invalid(fam, "needs an elbo_bnn objective"));
    }
    let mut system = elbo.system().clone();
    let params: Vec<String> = elbo
        .scope()
        .vars()
        .iter()
        .filter(|v| v.role() == Role::Parameter)
        .map(|v| v.name().to_string())
        .collect();
    for name in &params {
        let f = system.factor(name)?;
        if !f.parents.is_empty() {
            return Err(invalid(fam, format!("belief over `{name}` must be unconditional")));
        }
        let probs = system.conditional(name)?;
        let spec = match options.relaxed_temperature {
            None => {
                let mode = (0..probs.len()).fold(0, |m, i| if probs[i] > probs[m] { i } else { m });
                FactorSpec::point_mass(name, &[], vec![mode])
            }
            Some(t) if t.is_finite() && t > 0.0 => {
                let logits = match &f.kind {
                    FactorKind::Parameterized { logits, .. } => logits.clone(),
                    _ => probs.iter().map(|p| p.max(1e-300).ln()).collect(),
                };
                FactorSpec::with_kind(name, &[], FactorKind::Parameterized { logits, temperature: t })
            }
            Some(t) => return Err(invalid(fam, format!("temperature must be positive, got {t}"))),
        };
        system = system.with_factor(spec)?;
    }
    let base = elbo_bnn(&Problem::new(system, elbo.target().clone(), *elbo.horizon()))?;
    let mut layout = base.layout.clone();
    if options.relaxed_temperature.is_none() {
        // the data constant is common to both forms
        let parts = layout.terms[..2].iter().map(|t| (t.sign, t.form.clone())).collect();
        layout = layout.check(Check::new(
            "parameterized_target_form",
            CertificateKind::Equal,
            Side::Terms(parts),
            Side::External(parameterized_target_form),
        ));
    }
    Ok(Objective::assemble(fam, base.model.clone(), *elbo.horizon(), layout))
}

/// Log-table of a target factor over its own scope (row-major, last variable fastest).
fn target_ln_table(model: &Model, name: &str) -> Result<(Vec<String>, Vec<f64>)> {
    let target = model.target();
    let f = target
        .factor(name)
        .ok_or_else(|| Error::Declaration(format!("unknown target factor `{name}`")))?;
    let scope = model.scope();
    let card = |names: &[String]| -> Result<usize> { Ok(scope.vars()[scope.position(names.last().unwrap())?].cardinality()) };
    Ok(match &f.kind {
        TargetKind::Table { weights, .. } => (f.scope.clone(), weights.iter().map(|w| w.ln()).collect()),
        TargetKind::Reward { values } => (f.scope.clone(), values.clone()),
        TargetKind::Conditional { logits, temperature } => {
            (f.scope.clone(), log_softmax_slices(logits, card(&f.scope)?, *temperature))
        }
        TargetKind::SharedConditional { source } => {
            let (_, table) = target_ln_table(model, source)?;
            (f.scope.clone(), table)
        }
        TargetKind::Tied { child } => {
            let spec = model.system().factor(child)?;
            let mut names = spec.parents.clone();
            names.push(child.clone());
            let table = model.system().conditional(child)?;
            (names, table.iter().map(|p| p.ln()).collect())
        }
    })
}

/// `−ln q(w̄) + E_data[−ln q_w̄(y|x)]`: the likelihood factors sliced at the point-mass
/// value and read as a target parameterized by it, averaged over the data marginal.
fn parameterized_target_form(obj: &Objective, phi: &[f64]) -> Result<f64> {
    let model = obj.model().with_parameters(phi)?;
    let system = model.system();
    let scope = model.scope();
    let mut point = Vec::new();
    for v in scope.vars().iter().filter(|v| v.role() == Role::Parameter) {
        match &system.factor(v.name())?.kind {
            FactorKind::PointMass { selector } => point.push((v.name().to_string(), selector[0])),
            _ => return Err(Error::InvalidObjective(format!("`{}` is not a point mass", v.name()))),
        }
    }
    let is_param = |n: &str| point.iter().any(|(p, _)| p == n);
    let data_names: Vec<&str> = scope
        .vars()
        .iter()
        .filter(|v| v.role().is_input())
        .map(|v| v.name())
        .collect();
    let data = system.build_joint()?.marginalize(&data_names)?;
    let dscope = data.scope().clone();

    let mut acc = CompensatedSum::new();
    for f in model.target().factors() {
        let (names, table) = target_ln_table(&model, &f.name)?;
        let cards: Vec<usize> = names
            .iter()
            .map(|n| scope.position(n).map(|p| scope.vars()[p].cardinality()))
            .collect::<Result<_>>()?;
        let index = |value_of: &dyn Fn(&str) -> usize| {
            names.iter().zip(&cards).fold(0, |i, (n, &c)| i * c + value_of(n))
        };
        let fixed = |n: &str| point.iter().find(|(p, _)| p == n).map(|(_, v)| *v);
        if names.iter().all(|n| is_param(n)) {
            acc.add(-table[index(&|n| fixed(n).unwrap())]);
            continue;
        }
        for (o, &p) in data.probs().iter().enumerate() {
            if p == 0.0 {
                continue;
            }
            let value_of = |n: &str| fixed(n).unwrap_or_else(|| dscope.digit(o, dscope.position(n).unwrap()));
            acc.add(-p * table[index(&value_of)]);
        }
    }
    Ok(acc.value())
}

/// Amortized representation learning: complexity − info_bound = joint KL, with the
/// contrastive form certified to give the same total.
pub fn amortized_vae(problem: &Problem) -> Result<Objective> {
    let fam = Family::AmortizedVae;
    let model = Model::new(problem.system.clone(), problem.target.clone())?;
    let scope = model.scope().clone();
    let full = scope.full_mask();
    let x = scope.mask_where(|v| v.role().is_input());
    let z = full & !x;
    if x == 0 || z == 0 {
        return Err(invalid(fam, "needs both inputs and latents"));
    }
    let mut encoder: Option<&str> = None;
    for (v, f) in scope.vars().iter().zip(model.system().factors()) {
        if v.role().is_input() {
            continue;
        }
        if v.role() != Role::LatentState {
            return Err(invalid(fam, format!("`{}` must be a latent state", v.name())));
        }
        let source = match &f.kind {
            FactorKind::Parameterized { .. } | FactorKind::PointMass { .. } => f.child.as_str(),
            FactorKind::Shared { source } => source.as_str(),
            FactorKind::Fixed { .. } => return Err(invalid(fam, format!("encoder for `{}` is fixed", v.name()))),
        };
        match encoder {
            None => encoder = Some(source),
            Some(e) if e == source => {}
            Some(_) => {
                return Err(invalid(fam, "encoder not shared across data points; amortization needs one conditional table"))
            }
        }
    }

    let complexity = LogForm::new()
        .plus(Atom::Actual(full))
        .minus(Atom::Actual(x))
        .minus(Atom::Target(z));
    let info_bound = LogForm::new()
        .plus(Atom::Target(full))
        .minus(Atom::Target(z))
        .minus(Atom::Actual(x));
    let input_pref = LogForm::new()
        .plus(Atom::Actual(full))
        .minus(Atom::Actual(z))
        .minus(Atom::Target(x));
    let info_bound_latent = LogForm::new()
        .plus(Atom::Target(full))
        .minus(Atom::Target(x))
        .minus(Atom::Actual(z));
    let code_mi = LogForm::new()
        .plus(Atom::Actual(full))
        .minus(Atom::Actual(x))
        .minus(Atom::Actual(z));
    let layout = Layout::new(
        vec![
            Term::new("complexity", 1.0, complexity),
            Term::new("info_bound", -1.0, info_bound),
        ],
        Relation::Identity,
        Reference::JointKl,
    )
    .check(Check::new(
        "contrastive_form",
        CertificateKind::Equal,
        Side::Total,
        Side::Terms(vec![(1.0, input_pref.clone()), (-1.0, info_bound_latent.clone())]),
    ))
    .diagnostic("contrastive_input_pref_kl", input_pref)
    .diagnostic("contrastive_info_bound", info_bound_latent)
    .diagnostic("code_mi", code_mi);
    Ok(Objective::assemble(fam, model, problem.horizon, layout))
}
