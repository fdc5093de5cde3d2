//! Small named environments and datasets, each well inside the enumeration cap.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::prob::{Role, VariableSpec};

use super::{ActualSystem, FactorSpec, Horizon, TargetFactor, TargetSpec};

pub const PRESET_NAMES: [&str; 8] = [
    "bnn-toy",
    "vae-toy",
    "hmm-filter",
    "chain-mdp",
    "free-choice",
    "bandit-infogain",
    "two-room-skills",
    "dead-action",
];

/// Size knobs. Only `free-choice` reads `steps`; `free-choice` and `chain-mdp` read
/// `reward`.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PresetOptions {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub steps: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reward: Option<Vec<f64>>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Preset {
    pub name: String,
    pub system: ActualSystem,
    pub target: TargetSpec,
    pub horizon: Horizon,
}

pub fn preset(name: &str, options: &PresetOptions) -> Result<Preset> {
    let uses_steps = name == "free-choice";
    let uses_reward = matches!(name, "free-choice" | "chain-mdp");
    if (options.steps.is_some() && !uses_steps) || (options.reward.is_some() && !uses_reward) {
        return Err(Error::InvalidArgument(format!(
            "preset `{name}` does not take these options"
        )));
    }
    let (system, target, horizon) = match name {
        "bnn-toy" => bnn_toy()?,
        "vae-toy" => vae_toy()?,
        "hmm-filter" => hmm_filter()?,
        "chain-mdp" => chain_mdp(options.reward.as_deref())?,
        "free-choice" => free_choice(options.steps.unwrap_or(2), options.reward.as_deref())?,
        "bandit-infogain" => bandit_infogain()?,
        "two-room-skills" => two_room_skills()?,
        "dead-action" => dead_action()?,
        _ => return Err(Error::UnknownPreset(name.to_string())),
    };
    Ok(Preset {
        name: name.to_string(),
        system,
        target,
        horizon,
    })
}

type Parts = (ActualSystem, TargetSpec, Horizon);

fn var(name: &str, card: usize, role: Role) -> Result<VariableSpec> {
    VariableSpec::new(name, card, role)
}

fn one_hot(card: usize, k: usize) -> Vec<f64> {
    let mut v = vec![0.0; card];
    v[k] = 1.0;
    v
}

/// Labelled pairs (x, y) of the toy regression data.
pub const BNN_DATA: [(usize, usize); 4] = [(0, 0), (1, 1), (0, 0), (1, 0)];
/// Prior over the binary parameter w.
pub const BNN_PRIOR: [f64; 2] = [0.4, 0.6];
/// Likelihood q(y | x, w): w = 0 copies x, w = 1 flips it, each with this probability.
pub const BNN_AGREEMENT: f64 = 0.75;

fn bnn_toy() -> Result<Parts> {
    let mut vars = vec![var("w", 2, Role::Parameter)?];
    let mut factors = vec![FactorSpec::parameterized("w", &[], vec![0.0, 0.0])];
    let mut target = TargetSpec::new(vec![TargetFactor::table("prior", &["w"], BNN_PRIOR.to_vec(), true)])?;
    let (a, d) = (BNN_AGREEMENT, 1.0 - BNN_AGREEMENT);
    for (i, &(x, y)) in BNN_DATA.iter().enumerate() {
        let (xn, yn) = (format!("x{}", i + 1), format!("y{}", i + 1));
        vars.push(var(&xn, 2, Role::PastInput)?);
        vars.push(var(&yn, 2, Role::PastInput)?);
        factors.push(FactorSpec::fixed(&xn, &[], one_hot(2, x)));
        factors.push(FactorSpec::fixed(&yn, &[], one_hot(2, y)));
        // scope (x, w, y): slices (x=0,w=0), (0,1), (1,0), (1,1)
        target.push(TargetFactor::table(
            &format!("lik{}", i + 1),
            &[&xn, "w", &yn],
            vec![a, d, d, a, d, a, a, d],
            true,
        ))?;
    }
    Ok((ActualSystem::new(vars, factors)?, target, Horizon::new(1, None, 1)?))
}

/// Distribution of each 4-valued input of the amortization toy.
pub const VAE_DATA: [f64; 4] = [0.4, 0.1, 0.1, 0.4];

fn vae_toy() -> Result<Parts> {
    let mut vars = Vec::new();
    let mut factors = Vec::new();
    let mut target = TargetSpec::default();
    for i in 1..=2 {
        let (x, z) = (format!("x{i}"), format!("z{i}"));
        vars.push(var(&x, 4, Role::PastInput)?);
        vars.push(var(&z, 2, Role::LatentState)?);
        factors.push(FactorSpec::fixed(&x, &[], VAE_DATA.to_vec()));
        // encoder and decoder are shared across the two inputs
        factors.push(if i == 1 {
            FactorSpec::parameterized(&z, &[&x], vec![0.0; 8])
        } else {
            FactorSpec::shared(&z, &[&x], "z1")
        });
        target.push(TargetFactor::table(&format!("prior{i}"), &[&z], vec![0.5, 0.5], true))?;
        target.push(if i == 1 {
            TargetFactor::conditional("decoder1", &[&z, &x], vec![0.0; 8])
        } else {
            TargetFactor::shared(&format!("decoder{i}"), &[&z, &x], "decoder1")
        })?;
    }
    Ok((ActualSystem::new(vars, factors)?, target, Horizon::new(1, None, 1)?))
}

/// True and modelled latent dynamics of the filtering toy, and the shared emission.
pub const HMM_TRUE_TRANSITION: [f64; 4] = [0.9, 0.1, 0.1, 0.9];
pub const HMM_MODEL_TRANSITION: [f64; 4] = [0.6, 0.4, 0.4, 0.6];
pub const HMM_EMISSION: [f64; 4] = [0.8, 0.2, 0.2, 0.8];

/// Data distribution over (x1, x2, x3) generated by the true HMM.
pub fn hmm_data() -> [f64; 8] {
    let mut data = [0.0; 8];
    for z in 0..8usize {
        let zs = [z >> 2 & 1, z >> 1 & 1, z & 1];
        let pz = 0.5 * HMM_TRUE_TRANSITION[zs[0] * 2 + zs[1]] * HMM_TRUE_TRANSITION[zs[1] * 2 + zs[2]];
        for (x, d) in data.iter_mut().enumerate() {
            let xs = [x >> 2 & 1, x >> 1 & 1, x & 1];
            let px: f64 = (0..3).map(|t| HMM_EMISSION[zs[t] * 2 + xs[t]]).product();
            *d += pz * px;
        }
    }
    data
}

fn hmm_filter() -> Result<Parts> {
    let data = hmm_data();
    let x1: Vec<f64> = (0..2).map(|a| data[a * 4] + data[a * 4 + 1] + data[a * 4 + 2] + data[a * 4 + 3]).collect();
    let mut x2 = Vec::new();
    for a in 0..2 {
        for b in 0..2 {
            x2.push((data[a * 4 + b * 2] + data[a * 4 + b * 2 + 1]) / x1[a]);
        }
    }
    let mut x3 = Vec::new();
    for ab in 0..4 {
        let mass = data[ab * 2] + data[ab * 2 + 1];
        x3.extend([data[ab * 2] / mass, data[ab * 2 + 1] / mass]);
    }
    let vars = vec![
        var("x1", 2, Role::PastInput)?.at_step(1),
        var("x2", 2, Role::PastInput)?.at_step(2),
        var("x3", 2, Role::FutureInput)?.at_step(3),
        var("z1", 2, Role::LatentState)?.at_step(1),
        var("z2", 2, Role::LatentState)?.at_step(2),
        var("z3", 2, Role::LatentState)?.at_step(3),
    ];
    let factors = vec![
        FactorSpec::fixed("x1", &[], x1),
        FactorSpec::fixed("x2", &["x1"], x2),
        FactorSpec::fixed("x3", &["x1", "x2"], x3),
        FactorSpec::parameterized("z1", &["x1", "x2"], vec![0.0; 8]),
        FactorSpec::parameterized("z2", &["z1", "x1", "x2"], vec![0.0; 16]),
        FactorSpec::parameterized("z3", &["z2", "x1", "x2"], vec![0.0; 16]),
    ];
    let target = TargetSpec::new(vec![
        TargetFactor::table("z_prior", &["z1"], vec![0.5, 0.5], true),
        TargetFactor::table("z_trans2", &["z1", "z2"], HMM_MODEL_TRANSITION.to_vec(), true),
        TargetFactor::table("z_trans3", &["z2", "z3"], HMM_MODEL_TRANSITION.to_vec(), true),
        TargetFactor::table("emit1", &["z1", "x1"], HMM_EMISSION.to_vec(), true),
        TargetFactor::table("emit2", &["z2", "x2"], HMM_EMISSION.to_vec(), true),
        TargetFactor::table("emit3", &["z3", "x3"], HMM_EMISSION.to_vec(), true),
    ])?;
    Ok((ActualSystem::new(vars, factors)?, target, Horizon::new(3, None, 3)?))
}

pub const CHAIN_STATES: usize = 5;
pub const CHAIN_STEPS: usize = 3;
pub const CHAIN_SLIP: f64 = 0.1;

/// p(x' | x, a) of the controlled chain: move left (a = 0) or right (a = 1) with
/// probability 0.8, stay or move the other way with the slip probability each.
pub fn chain_transition() -> Vec<f64> {
    let n = CHAIN_STATES;
    let clamp = |s: isize| s.clamp(0, n as isize - 1) as usize;
    let mut t = Vec::with_capacity(n * 2 * n);
    for x in 0..n {
        for a in 0..2 {
            let dir = if a == 0 { -1 } else { 1 };
            let mut row = vec![0.0; n];
            row[clamp(x as isize + dir)] += 1.0 - 2.0 * CHAIN_SLIP;
            row[x] += CHAIN_SLIP;
            row[clamp(x as isize - dir)] += CHAIN_SLIP;
            t.extend(row);
        }
    }
    t
}

fn chain_mdp(reward: Option<&[f64]>) -> Result<Parts> {
    let n = CHAIN_STATES;
    let r = match reward {
        Some(r) if r.len() != n => {
            return Err(Error::InvalidArgument(format!("chain-mdp reward needs {n} values")))
        }
        Some(r) => r.to_vec(),
        None => one_hot(n, n - 1),
    };
    let mut vars = Vec::new();
    let mut factors = Vec::new();
    let mut target = TargetSpec::default();
    for t in 1..=CHAIN_STEPS {
        let (x, a) = (format!("x{t}"), format!("a{t}"));
        let role = if t == 1 { Role::PastInput } else { Role::FutureInput };
        vars.push(var(&x, n, role)?.at_step(t));
        vars.push(var(&a, 2, Role::Action)?.at_step(t));
        factors.push(if t == 1 {
            FactorSpec::fixed(&x, &[], vec![1.0 / n as f64; n])
        } else {
            let (px, pa) = (format!("x{}", t - 1), format!("a{}", t - 1));
            FactorSpec::fixed(&x, &[&px, &pa], chain_transition())
        });
        factors.push(FactorSpec::parameterized(&a, &[&x], vec![0.0; 2 * n]));
        target.push(TargetFactor::tied(&format!("env_{x}"), &x))?;
        target.push(TargetFactor::table(&format!("prior_{a}"), &[&a], vec![0.5, 0.5], true))?;
        target.push(TargetFactor::reward(&format!("r{t}"), &[&x], r.clone()))?;
    }
    Ok((ActualSystem::new(vars, factors)?, target, Horizon::new(CHAIN_STEPS, None, 2)?))
}

fn free_choice(steps: usize, reward: Option<&[f64]>) -> Result<Parts> {
    if steps == 0 {
        return Err(Error::InvalidArgument("free-choice needs at least one step".into()));
    }
    let r = match reward {
        Some(r) if r.len() != 2 => {
            return Err(Error::InvalidArgument("free-choice reward needs 2 values".into()))
        }
        Some(r) => r.to_vec(),
        None => vec![0.0, 3f64.ln()],
    };
    let mut vars = Vec::new();
    let mut factors = Vec::new();
    let mut target = TargetSpec::default();
    for t in 1..=steps {
        let x = format!("x{t}");
        vars.push(var(&x, 2, Role::FutureInput)?.at_step(t));
        factors.push(if t == 1 {
            FactorSpec::parameterized(&x, &[], vec![0.0; 2])
        } else {
            FactorSpec::parameterized(&x, &[&format!("x{}", t - 1)], vec![0.0; 4])
        });
        target.push(TargetFactor::reward(&format!("r{t}"), &[&x], r.clone()))?;
    }
    Ok((ActualSystem::new(vars, factors)?, target, Horizon::new(steps, None, 1)?))
}

/// Likelihood confidence of the bandit model, q(x = w | w).
pub const BANDIT_CONFIDENCE: f64 = 0.999;

fn bandit_infogain() -> Result<Parts> {
    let vars = vec![
        var("w", 2, Role::Parameter)?,
        var("a1", 2, Role::Action)?.at_step(1),
        var("x1", 2, Role::FutureInput)?.at_step(1),
    ];
    // slices (a, w): arm 0 is a fair coin, arm 1 reveals w
    let env = vec![0.5, 0.5, 0.5, 0.5, 1.0, 0.0, 0.0, 1.0];
    let factors = vec![
        FactorSpec::parameterized("w", &[], vec![0.0, 0.0]),
        FactorSpec::parameterized("a1", &[], vec![0.0, 0.0]),
        FactorSpec::fixed("x1", &["a1", "w"], env),
    ];
    let (c, e) = (BANDIT_CONFIDENCE, 1.0 - BANDIT_CONFIDENCE);
    let target = TargetSpec::new(vec![
        TargetFactor::table("prior", &["w"], vec![0.5, 0.5], true),
        TargetFactor::table("lik", &["w", "x1"], vec![c, e, e, c], true),
    ])?;
    Ok((ActualSystem::new(vars, factors)?, target, Horizon::new(1, None, 1)?))
}

/// Room indices of the skill world.
pub const HALL: usize = 0;
pub const LEFT: usize = 1;
pub const RIGHT: usize = 2;

fn two_room_skills() -> Result<Parts> {
    let vars = vec![
        var("z1", 2, Role::Skill)?,
        var("x1", 3, Role::FutureInput)?.at_step(1),
        var("a1", 2, Role::Action)?.at_step(1),
        var("x2", 3, Role::FutureInput)?.at_step(2),
        var("a2", 2, Role::Action)?.at_step(2),
    ];
    // from the hall, action 0 leads left and action 1 right; rooms are absorbing
    let mut moves = Vec::new();
    for x in 0..3 {
        for a in 0..2 {
            let next = if x == HALL { [LEFT, RIGHT][a] } else { x };
            moves.extend(one_hot(3, next));
        }
    }
    let factors = vec![
        FactorSpec::parameterized("z1", &[], vec![0.0, 0.0]),
        FactorSpec::fixed("x1", &[], one_hot(3, HALL)),
        FactorSpec::point_mass("a1", &["z1"], vec![0, 0]),
        FactorSpec::fixed("x2", &["x1", "a1"], moves),
        FactorSpec::point_mass("a2", &["z1"], vec![0, 0]),
    ];
    let target = TargetSpec::new(vec![
        TargetFactor::table("prior_a1", &["a1"], vec![0.5, 0.5], true),
        TargetFactor::table("prior_a2", &["a2"], vec![0.5, 0.5], true),
    ])?;
    Ok((ActualSystem::new(vars, factors)?, target, Horizon::new(2, Some(2), 1)?))
}

/// Index of the action that leaves the input unchanged.
pub const DEAD_ACTION: usize = 2;

fn dead_action() -> Result<Parts> {
    let vars = vec![
        var("x1", 2, Role::PastInput)?.at_step(1),
        var("a1", 3, Role::Action)?.at_step(1),
        var("x2", 2, Role::FutureInput)?.at_step(2),
    ];
    let mut moves = Vec::new();
    for x in 0..2 {
        for a in 0..3 {
            let next = if a == DEAD_ACTION { x } else { a };
            moves.extend(one_hot(2, next));
        }
    }
    let factors = vec![
        FactorSpec::fixed("x1", &[], vec![0.5, 0.5]),
        FactorSpec::parameterized("a1", &[], vec![0.0; 3]),
        FactorSpec::fixed("x2", &["x1", "a1"], moves),
    ];
    Ok((ActualSystem::new(vars, factors)?, TargetSpec::default(), Horizon::new(2, None, 2)?))
}
