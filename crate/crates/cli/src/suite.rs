//! The identity, bound and gradient checks behind `divmin verify`, run over seeded
//! random instances.

use divmin_core::decomp::{
    bayesian_future_check, decompose_input_side, decompose_latent_side, energy_entropy, expected_free_energy,
    past_future_split, DecompositionReport,
};
use divmin_core::objectives::Family;
use divmin_core::optim::{analytic_gradient, finite_difference_gradient, max_relative_deviation, norm};
use divmin_core::prob::{
    expected_conditional_kl, kl, mutual_information, variational_mi_lower_bound, Assignment, ConditionalTable, Role,
    TabularDistribution, UnnormalizedTable, VariableSpec,
};
use divmin_core::random::{matched_info_gain, random_instance, random_objective, random_parameters, stream, RandomShape};
use divmin_core::systems::{ActualSystem, TargetFactor, TargetSpec};
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

pub const SUITE_SCHEMA_VERSION: u32 = 1;

/// Amount added to a check's violation by the corruption hook.
pub const CORRUPTION: f64 = 1e-6;

type Measure = fn(u64) -> Result<f64, String>;

/// One suite entry: a tag, what it checks, a tolerance and a per-seed measurement of
/// how far the property is from holding.
pub struct CheckSpec {
    pub tag: &'static str,
    pub description: &'static str,
    pub tolerance: f64,
    measure: Measure,
}

const fn check(tag: &'static str, description: &'static str, tolerance: f64, measure: Measure) -> CheckSpec {
    CheckSpec {
        tag,
        description,
        tolerance,
        measure,
    }
}

pub const CHECKS: &[CheckSpec] = &[
    check("latent-side", "joint KL = latent preference KL − information bound", 1e-9, |s| {
        report_violation(s, decompose_latent_side)
    }),
    check("input-side", "joint KL = input preference KL − latent information bound", 1e-9, |s| {
        report_violation(s, decompose_input_side)
    }),
    check("missing-data", "joint KL = past inference KL + uncontrolled future KL", 1e-9, |s| {
        let (sys, target, horizon) = instance(s)?;
        let r = bayesian_future_check(&sys, &target, &horizon).map_err(text)?;
        let negative = (-r.term("past_vi")).max(0.0).max(-r.term("uncontrolled_future"));
        Ok(r.violation().max(negative))
    }),
    check("expected-free-energy", "joint KL = expected free energy − input entropy", 1e-9, |s| {
        report_violation(s, expected_free_energy)
    }),
    check("energy-entropy", "joint KL = energy − entropy", 1e-9, |s| report_violation(s, energy_entropy)),
    check("elbo", "elbo_bnn breakdown equals the free energy", 1e-9, |s| family(s, Family::ElboBnn)),
    check("map", "point-mass ELBO equals the parameterized-target objective", 1e-9, |s| {
        family(s, Family::MapPointMass)
    }),
    check("vae", "reconstruction and contrastive forms equal the joint KL", 1e-9, |s| {
        family(s, Family::AmortizedVae)
    }),
    check("control", "KL control terms equal the joint KL; curiosity cancels", 1e-9, |s| {
        family(s, Family::KlControl)
    }),
    check("maxentrl", "action complexity − reward equals the free energy", 1e-9, |s| family(s, Family::MaxentRl)),
    check("empowerment", "exact empowerment identity; decoder bound below exact information", 1e-9, |s| {
        family(s, Family::Empowerment)
    }),
    check("skills", "skill discovery identity; predictor bound below skill information", 1e-9, |s| {
        family(s, Family::SkillDiscovery)
    }),
    check("infogain", "info-gain terms upper-bound the joint KL", 1e-9, |s| family(s, Family::InfoGain)),
    check("infogain-tight", "info-gain bound is tight under a matched target", 1e-9, |s| {
        let obj = matched_info_gain(s).map_err(text)?;
        let b = obj.evaluate(&random_parameters(s, obj.parameter_count())).map_err(text)?;
        Ok(b.report.slack.abs())
    }),
    check("past-future", "past/future terms upper-bound the joint KL", 1e-9, |s| {
        let (sys, target, horizon) = instance(s)?;
        let r = past_future_split(&sys, &target, &horizon, &Assignment::new()).map_err(text)?;
        Ok(r.violation())
    }),
    check("past-future-tight", "past/future bound is tight under a matched target", 1e-9, |s| {
        let (sys, _, horizon) = instance(s)?;
        let r = past_future_split(&sys, &matched_target(&sys)?, &horizon, &Assignment::new()).map_err(text)?;
        Ok(r.slack.abs())
    }),
    check("decoder-bound", "decoder bound ≤ I[x;z] with gap = expected conditional KL", 1e-10, decoder_bound),
    check("kl-chain-rule", "KL(p(a,b)‖q(a,b)) = KL(p(b)‖q(b)) + E KL[p(a|b)‖q(a|b)]", 1e-10, kl_chain_rule),
    check("gradient", "analytic gradient vs central differences (h = 1e-5), relative", 1e-5, |s| {
        let obj = random_objective(Family::ALL[s as usize % Family::ALL.len()], s).map_err(text)?;
        let phi = random_parameters(s ^ 0x9e37, obj.parameter_count());
        let a = analytic_gradient(&obj, &phi).map_err(text)?;
        let fd = finite_difference_gradient(&obj, &phi, 1e-5).map_err(text)?;
        Ok(max_relative_deviation(&a.gradient, &fd.gradient))
    }),
    check("score-identity", "‖Σ p ∇ln p‖ at random parameters", 1e-10, |s| {
        let obj = random_objective(Family::ALL[s as usize % Family::ALL.len()], s).map_err(text)?;
        let phi = random_parameters(s, obj.parameter_count());
        Ok(norm(&obj.score_residual(&phi).map_err(text)?))
    }),
];

fn text(e: impl std::fmt::Display) -> String {
    e.to_string()
}

/// Random instance with two to five binary variables; odd seeds carry a learnable
/// target conditional.
fn instance(seed: u64) -> Result<(ActualSystem, TargetSpec, divmin_core::systems::Horizon), String> {
    let shape = RandomShape {
        variables: 2 + (seed % 4) as usize,
        target_parameters: seed % 2 == 1,
        ..RandomShape::default()
    };
    random_instance(seed, shape).map_err(text)
}

fn report_violation(
    seed: u64,
    f: fn(&ActualSystem, &TargetSpec) -> divmin_core::Result<DecompositionReport>,
) -> Result<f64, String> {
    let (sys, target, _) = instance(seed)?;
    Ok(f(&sys, &target).map_err(text)?.violation())
}

fn family(seed: u64, family: Family) -> Result<f64, String> {
    let obj = random_objective(family, seed).map_err(text)?;
    let b = obj.evaluate(&random_parameters(seed, obj.parameter_count())).map_err(text)?;
    Ok(b.worst_violation())
}

fn matched_target(sys: &ActualSystem) -> Result<TargetSpec, String> {
    let joint = sys.build_joint().map_err(text)?;
    let all: Vec<&str> = sys.variables().iter().map(|v| v.name()).collect();
    TargetSpec::new(vec![TargetFactor::table("joint", &all, joint.probs().to_vec(), false)]).map_err(text)
}

fn binary(names: &[&str]) -> Vec<VariableSpec> {
    names
        .iter()
        .map(|n| VariableSpec::new(*n, 2, Role::LatentState).expect("valid name"))
        .collect()
}

fn weights(r: &mut impl Rng, n: usize) -> Vec<f64> {
    (0..n).map(|_| r.random_range(0.02..1.0)).collect()
}

fn decoder_bound(seed: u64) -> Result<f64, String> {
    let mut r = stream(seed, 101);
    let p = TabularDistribution::from_weights(binary(&["x", "z"]), weights(&mut r, 4)).map_err(text)?;
    let mut values = Vec::with_capacity(4);
    for _ in 0..2 {
        let a: f64 = r.random_range(0.02..0.98);
        values.extend([a, 1.0 - a]);
    }
    let decoder = ConditionalTable::new(binary(&["x"]), binary(&["z"]), values.clone()).map_err(text)?;
    let bound = variational_mi_lower_bound(&p, &decoder, &["x"], &["z"]).map_err(text)?;
    let mi = mutual_information(&p, &["x"], &["z"]).map_err(text)?;
    // the decoder as a joint table q(x, z) = p(z) q(x | z), scope order (x, z)
    let pr = p.probs();
    let qxz: Vec<f64> = (0..4)
        .map(|i| {
            let (x, z) = (i / 2, i % 2);
            (pr[z] + pr[2 + z]) * values[2 * z + x]
        })
        .collect();
    let q = UnnormalizedTable::new(binary(&["x", "z"]), qxz).map_err(text)?;
    let gap = expected_conditional_kl(&p, &q, &["x"], &["z"]).map_err(text)?.kl_nats;
    Ok((bound - mi).max(0.0).max((mi - bound - gap).abs()))
}

fn kl_chain_rule(seed: u64) -> Result<f64, String> {
    let mut r = stream(seed, 102);
    let p = TabularDistribution::from_weights(binary(&["a", "b"]), weights(&mut r, 4)).map_err(text)?;
    let qw = weights(&mut r, 4);
    let q = UnnormalizedTable::new(binary(&["a", "b"]), qw.clone()).map_err(text)?;
    let joint = kl(&p, &q).map_err(text)?.kl_nats;
    let pb = p.marginalize(&["b"]).map_err(text)?;
    let qb = UnnormalizedTable::new(binary(&["b"]), vec![qw[0] + qw[2], qw[1] + qw[3]]).map_err(text)?;
    let marginal = kl(&pb, &qb).map_err(text)?.kl_nats;
    let cond = expected_conditional_kl(&p, &q, &["a"], &["b"]).map_err(text)?.kl_nats;
    Ok((joint - marginal - cond).abs())
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CheckResult {
    pub tag: String,
    pub description: String,
    pub seeds_run: u64,
    pub max_violation: f64,
    /// First seed attaining the maximum violation.
    pub worst_seed: Option<u64>,
    pub tolerance: f64,
    pub passed: bool,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub errors: Vec<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SuiteResult {
    pub schema_version: u32,
    pub timestamp: u64,
    pub seeds: u64,
    pub tol_scale: f64,
    pub passed: bool,
    pub checks: Vec<CheckResult>,
}

impl SuiteResult {
    pub fn failing(&self) -> impl Iterator<Item = &CheckResult> {
        self.checks.iter().filter(|c| !c.passed)
    }

    pub fn check(&self, tag: &str) -> Option<&CheckResult> {
        self.checks.iter().find(|c| c.tag == tag)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SuiteOptions {
    pub seeds: u64,
    pub tol_scale: f64,
    /// Checks whose violations are inflated by [`CORRUPTION`]; a negative control.
    pub corrupt: Vec<String>,
    /// Only run checks with these tags (all when empty).
    pub only: Vec<String>,
}

impl Default for SuiteOptions {
    fn default() -> Self {
        Self {
            seeds: 100,
            tol_scale: 1.0,
            corrupt: Vec::new(),
            only: Vec::new(),
        }
    }
}

/// Runs every selected check on seeds `0..seeds`. Seeds fan out over the current rayon
/// pool; aggregation walks seeds in order, so the result does not depend on scheduling.
pub fn run_suite(options: &SuiteOptions) -> SuiteResult {
    let selected: Vec<&CheckSpec> = CHECKS
        .iter()
        .filter(|c| options.only.is_empty() || options.only.iter().any(|t| t == c.tag))
        .collect();
    let per_seed: Vec<Vec<Result<f64, String>>> = (0..options.seeds)
        .into_par_iter()
        .map(|seed| selected.iter().map(|c| (c.measure)(seed)).collect())
        .collect();
    let checks: Vec<CheckResult> = selected
        .iter()
        .enumerate()
        .map(|(k, c)| {
            let corrupt = options.corrupt.iter().any(|t| t == c.tag);
            let mut max_violation = 0.0f64;
            let mut worst_seed = None;
            let mut errors = Vec::new();
            for (seed, row) in per_seed.iter().enumerate() {
                match &row[k] {
                    Ok(v) => {
                        let v = if corrupt { v + CORRUPTION } else { *v };
                        if worst_seed.is_none() || (!max_violation.is_nan() && (v > max_violation || v.is_nan())) {
                            max_violation = v;
                            worst_seed = Some(seed as u64);
                        }
                    }
                    Err(e) => errors.push(format!("seed {seed}: {e}")),
                }
            }
            let tolerance = c.tolerance * options.tol_scale;
            CheckResult {
                tag: c.tag.to_string(),
                description: c.description.to_string(),
                seeds_run: options.seeds,
                max_violation,
                worst_seed,
                tolerance,
                passed: errors.is_empty() && max_violation <= tolerance,
                errors,
            }
        })
        .collect();
    SuiteResult {
        schema_version: SUITE_SCHEMA_VERSION,
        timestamp: crate::unix_time(),
        seeds: options.seeds,
        tol_scale: options.tol_scale,
        passed: checks.iter().all(|c| c.passed),
        checks,
    }
}
