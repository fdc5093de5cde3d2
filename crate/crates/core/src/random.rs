//! Seeded random systems and targets for property checks.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::Result;
use crate::objectives::{
    amortized_vae, elbo_bnn, empowerment, info_gain, kl_control, map_point_mass, maxent_rl, skill_discovery,
    ControlMode, ControlOptions, EmpowermentOptions, Family, MapOptions, MaxentOptions, Objective, Problem,
    SkillOptions, SkillWindow,
};
use crate::prob::{Role, VariableSpec};
use crate::systems::decl::TargetFactorDecl;
use crate::systems::{ActualSystem, FactorSpec, Horizon, TargetFactor, TargetSpec};

/// Shape of a random instance.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RandomShape {
    pub variables: usize,
    pub max_parents: usize,
    pub target_factors: usize,
    /// Include a learnable target conditional.
    pub target_parameters: bool,
}

impl Default for RandomShape {
    fn default() -> Self {
        Self {
            variables: 4,
            max_parents: 2,
            target_factors: 3,
            target_parameters: false,
        }
    }
}

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Independent stream `stream` derived from `seed`.
pub fn stream(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut r = ChaCha8Rng::seed_from_u64(seed);
    r.set_stream(stream);
    r
}

fn logits(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    (0..n).map(|_| rng.random_range(-2.0..2.0)).collect()
}

/// Random binary conditional table of `size` entries, slices over pairs.
fn conditional_table(rng: &mut ChaCha8Rng, size: usize) -> Vec<f64> {
    logits(rng, size)
        .chunks(2)
        .flat_map(|c| {
            let (a, b) = (c[0].exp(), c[1].exp());
            [a / (a + b), b / (a + b)]
        })
        .collect()
}

fn positive(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    (0..n).map(|_| rng.random_range(0.05..1.0)).collect()
}

/// Random binary system with at least one input, one latent and one parameterized
/// factor, and a strictly positive target. Inputs alternate past and future.
pub fn random_instance(seed: u64, shape: RandomShape) -> Result<(ActualSystem, TargetSpec, Horizon)> {
    let mut r = rng(seed);
    let n = shape.variables.max(2);
    let mut vars = Vec::with_capacity(n);
    let mut inputs = 0;
    for i in 0..n {
        let input = match i {
            0 => true,
            1 => false,
            _ => r.random_bool(0.5),
        };
        let role = if input {
            inputs += 1;
            if inputs % 2 == 1 {
                Role::PastInput
            } else {
                Role::FutureInput
            }
        } else {
            Role::LatentState
        };
        vars.push(VariableSpec::new(format!("v{i}"), 2, role)?);
    }
    let mut factors = Vec::with_capacity(n);
    let learnable = r.random_range(0..n);
    for i in 0..n {
        let mut parents: Vec<usize> = (0..i).filter(|_| r.random_bool(0.5)).collect();
        while parents.len() > shape.max_parents {
            parents.remove(r.random_range(0..parents.len()));
        }
        let names: Vec<String> = parents.iter().map(|&p| format!("v{p}")).collect();
        let refs: Vec<&str> = names.iter().map(String::as_str).collect();
        let size = 2 << parents.len();
        let child = format!("v{i}");
        factors.push(if i == learnable || r.random_bool(0.5) {
            FactorSpec::parameterized(&child, &refs, logits(&mut r, size))
        } else {
            FactorSpec::fixed(&child, &refs, conditional_table(&mut r, size))
        });
    }
    let mut target = TargetSpec::default();
    for k in 0..shape.target_factors {
        let width = r.random_range(1..=n.min(3));
        let mut scope: Vec<usize> = (0..n).collect();
        while scope.len() > width {
            scope.remove(r.random_range(0..scope.len()));
        }
        let names: Vec<String> = scope.iter().map(|&p| format!("v{p}")).collect();
        let refs: Vec<&str> = names.iter().map(String::as_str).collect();
        let weights = (0..1 << width).map(|_| r.random_range(0.05..1.0)).collect();
        target.push(TargetFactor::table(&format!("t{k}"), &refs, weights, false))?;
    }
    if shape.target_parameters {
        let a = r.random_range(0..n);
        let b = (a + 1 + r.random_range(0..n - 1)) % n;
        let (pa, ch) = (format!("v{a}"), format!("v{b}"));
        target.push(TargetFactor::conditional("pred", &[&pa, &ch], logits(&mut r, 4)))?;
    }
    Ok((ActualSystem::new(vars, factors)?, target, Horizon::new(2, None, 2)?))
}

/// Random point in the parameter space of `n` logits.
pub fn random_parameters(seed: u64, n: usize) -> Vec<f64> {
    logits(&mut rng(seed), n)
}

fn binary(name: &str, role: Role, step: Option<usize>) -> Result<VariableSpec> {
    let v = VariableSpec::new(name, 2, role)?;
    Ok(match step {
        Some(t) => v.at_step(t),
        None => v,
    })
}

fn fixed(r: &mut ChaCha8Rng, child: &str, parents: &[&str]) -> FactorSpec {
    FactorSpec::fixed(child, parents, conditional_table(r, 2 << parents.len()))
}

fn learned(r: &mut ChaCha8Rng, child: &str, parents: &[&str]) -> FactorSpec {
    FactorSpec::parameterized(child, parents, logits(r, 2 << parents.len()))
}

/// Random instance of `family` on at most five binary variables, with every option
/// the family accepts exercised across seeds.
pub fn random_objective(family: Family, seed: u64) -> Result<Objective> {
    let mut r = stream(seed, family as u64 + 1);
    let r = &mut r;
    use Role::*;
    match family {
        Family::ElboBnn | Family::MapPointMass => {
            let vars = vec![
                binary("w", Parameter, None)?,
                binary("x1", PastInput, Some(1))?,
                binary("y1", PastInput, Some(1))?,
            ];
            let factors = vec![learned(r, "w", &[]), fixed(r, "x1", &[]), fixed(r, "y1", &["x1"])];
            let target = TargetSpec::new(vec![
                TargetFactor::table("prior", &["w"], conditional_table(r, 2), true),
                TargetFactor::conditional("lik", &["x1", "w", "y1"], logits(r, 8)),
                TargetFactor::table("inputs", &["x1"], positive(r, 2), false),
            ])?;
            let problem = Problem::new(ActualSystem::new(vars, factors)?, target, Horizon::new(2, None, 2)?);
            let elbo = elbo_bnn(&problem)?;
            if family == Family::ElboBnn {
                return Ok(elbo);
            }
            let relaxed_temperature = r.random_bool(0.5).then(|| r.random_range(0.2..2.0));
            map_point_mass(&elbo, &MapOptions { relaxed_temperature })
        }
        Family::AmortizedVae => {
            let vars = vec![
                binary("x1", PastInput, Some(1))?,
                binary("z1", LatentState, None)?,
                binary("x2", PastInput, Some(1))?,
                binary("z2", LatentState, None)?,
            ];
            let factors = vec![
                fixed(r, "x1", &[]),
                learned(r, "z1", &["x1"]),
                fixed(r, "x2", &["x1"]),
                FactorSpec::shared("z2", &["x2"], "z1"),
            ];
            let target = TargetSpec::new(vec![
                TargetFactor::table("prior_z1", &["z1"], conditional_table(r, 2), true),
                TargetFactor::table("prior_z2", &["z2"], positive(r, 2), false),
                TargetFactor::conditional("decoder_x1", &["z1", "x1"], logits(r, 4)),
                TargetFactor::shared("decoder_x2", &["z2", "x2"], "decoder_x1"),
            ])?;
            amortized_vae(&Problem::new(ActualSystem::new(vars, factors)?, target, Horizon::new(2, None, 2)?))
        }
        Family::KlControl => {
            let vars = vec![
                binary("x1", FutureInput, Some(1))?,
                binary("x2", FutureInput, Some(2))?,
                binary("x3", FutureInput, Some(3))?,
            ];
            let factors = vec![learned(r, "x1", &[]), learned(r, "x2", &["x1"]), fixed(r, "x3", &["x2"])];
            let mut target = TargetSpec::new(vec![
                TargetFactor::reward("r2", &["x2"], logits(r, 2)),
                TargetFactor::reward("r3", &["x3"], logits(r, 2)),
            ])?;
            let mode = [ControlMode::KlControl, ControlMode::KlRegularized, ControlMode::ExpectedReward][r.random_range(0..3)];
            let mut passive = Vec::new();
            match mode {
                ControlMode::KlControl => target.push(TargetFactor::table("pref", &["x1", "x3"], positive(r, 4), false))?,
                ControlMode::KlRegularized => {
                    passive.push(TargetFactorDecl::normalized_table("passive_x2", &["x1", "x2"], conditional_table(r, 4)))
                }
                ControlMode::ExpectedReward => {}
            }
            let problem = Problem::new(ActualSystem::new(vars, factors)?, target, Horizon::new(3, None, 1)?);
            kl_control(&problem, &ControlOptions { mode, passive })
        }
        Family::MaxentRl => {
            let vars = vec![
                binary("x1", FutureInput, Some(1))?,
                binary("a1", Action, Some(1))?,
                binary("x2", FutureInput, Some(2))?,
                binary("a2", Action, Some(2))?,
            ];
            let factors = vec![
                fixed(r, "x1", &[]),
                learned(r, "a1", &["x1"]),
                fixed(r, "x2", &["x1", "a1"]),
                learned(r, "a2", &["x2"]),
            ];
            let target = TargetSpec::new(vec![
                TargetFactor::tied("env_x1", "x1"),
                TargetFactor::tied("env_x2", "x2"),
                TargetFactor::table("prior_a1", &["a1"], conditional_table(r, 2), true),
                TargetFactor::reward("r1", &["x1"], logits(r, 2)),
                TargetFactor::reward("r2", &["x2"], logits(r, 2)),
            ])?;
            let problem = Problem::new(ActualSystem::new(vars, factors)?, target, Horizon::new(2, None, 1)?);
            let action_prior = r.random_bool(0.5).then(|| conditional_table(r, 2));
            maxent_rl(&problem, &MaxentOptions { action_prior })
        }
        Family::Empowerment => {
            let vars = vec![
                binary("x1", PastInput, Some(1))?,
                binary("a1", Action, Some(1))?,
                binary("x2", FutureInput, Some(2))?,
                binary("a2", Action, Some(2))?,
                binary("x3", FutureInput, Some(3))?,
            ];
            let factors = vec![
                fixed(r, "x1", &[]),
                learned(r, "a1", &["x1"]),
                fixed(r, "x2", &["x1", "a1"]),
                learned(r, "a2", &["x2"]),
                fixed(r, "x3", &["x2", "a2"]),
            ];
            let target = TargetSpec::new(vec![TargetFactor::table("pref", &["x3"], positive(r, 2), false)])?;
            let problem = Problem::new(ActualSystem::new(vars, factors)?, target, Horizon::new(3, None, 2)?);
            let k = [None, Some(0), Some(1)][r.random_range(0..3)];
            empowerment(&problem, &EmpowermentOptions { k })
        }
        Family::SkillDiscovery => {
            let vars = vec![
                binary("z1", Skill, None)?,
                binary("x1", FutureInput, Some(1))?,
                binary("a1", Action, Some(1))?,
                binary("x2", FutureInput, Some(2))?,
                binary("a2", Action, Some(2))?,
            ];
            let factors = vec![
                learned(r, "z1", &[]),
                fixed(r, "x1", &[]),
                learned(r, "a1", &["z1", "x1"]),
                fixed(r, "x2", &["x1", "a1"]),
                learned(r, "a2", &["z1", "x2"]),
            ];
            let target = TargetSpec::new(vec![
                TargetFactor::table("pref", &["x2"], positive(r, 2), false),
                TargetFactor::table("prior_a1", &["a1"], conditional_table(r, 2), true),
                TargetFactor::table("prior_a2", &["a2"], conditional_table(r, 2), true),
            ])?;
            let problem = Problem::new(ActualSystem::new(vars, factors)?, target, Horizon::new(2, Some(2), 1)?);
            let window = if r.random_bool(0.5) { SkillWindow::Block } else { SkillWindow::All };
            skill_discovery(&problem, &SkillOptions { window })
        }
        Family::InfoGain => {
            let (problem, _) = random_bandit(r)?;
            info_gain(&problem)
        }
    }
}

/// Random active-inference instance: a parameter, a past input it explains, an action
/// and a future input depending on both. Also returns a target tying every actual
/// factor, under which the info-gain bound is tight.
fn random_bandit(r: &mut ChaCha8Rng) -> Result<(Problem, Problem)> {
    use Role::*;
    let vars = vec![
        binary("w", Parameter, None)?,
        binary("x1", PastInput, Some(1))?,
        binary("a1", Action, Some(1))?,
        binary("x2", FutureInput, Some(2))?,
    ];
    let factors = vec![
        learned(r, "w", &[]),
        fixed(r, "x1", &["w"]),
        learned(r, "a1", &["x1"]),
        fixed(r, "x2", &["w", "a1"]),
    ];
    let target = TargetSpec::new(vec![
        TargetFactor::table("prior", &["w"], conditional_table(r, 2), true),
        TargetFactor::conditional("lik_x1", &["w", "x1"], logits(r, 4)),
        TargetFactor::table("lik_x2", &["w", "a1", "x2"], positive(r, 8), false),
    ])?;
    let system = ActualSystem::new(vars, factors)?;
    let matched = TargetSpec::new(
        system.factors().iter().map(|f| TargetFactor::tied(&format!("copy_{}", f.child), &f.child)).collect(),
    )?;
    let horizon = Horizon::new(2, None, 2)?;
    Ok((Problem::new(system.clone(), target, horizon), Problem::new(system, matched, horizon)))
}

/// Info-gain objective on a random instance whose target equals the actual joint.
pub fn matched_info_gain(seed: u64) -> Result<Objective> {
    let (_, matched) = random_bandit(&mut stream(seed, Family::InfoGain as u64 + 1))?;
    info_gain(&matched)
}
