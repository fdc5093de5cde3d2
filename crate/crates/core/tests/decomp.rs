use divmin_core::decomp::{
    bayesian_future_check, decompose_input_side, decompose_latent_side, energy_entropy,
    expected_free_energy, joint_kl, past_future_split, past_future_split_with, Realization,
    Relation,
};
use divmin_core::prob::{kl, mutual_information, Assignment, Role, TabularDistribution, VariableSpec};
use divmin_core::random::{random_instance, RandomShape};
use divmin_core::systems::{
    build_target, preset, ActualSystem, FactorSpec, Horizon, PresetOptions, TargetFactor, TargetSpec,
};

fn names(vars: &[VariableSpec], pred: impl Fn(Role) -> bool) -> Vec<String> {
    vars.iter().filter(|v| pred(v.role())).map(|v| v.name().to_string()).collect()
}

/// Target equal to the actual joint.
fn matched_target(sys: &ActualSystem) -> TargetSpec {
    let joint = sys.build_joint().unwrap();
    let all: Vec<&str> = sys.variables().iter().map(|v| v.name()).collect();
    TargetSpec::new(vec![TargetFactor::table("joint", &all, joint.probs().to_vec(), false)]).unwrap()
}

/// E_p[ln a(ω)] with `a` a marginal of `d` over `keep`, by per-outcome lookup.
fn expect_ln_marginal(p: &TabularDistribution, d: &TabularDistribution, keep: &[String]) -> f64 {
    if keep.is_empty() {
        return 0.0;
    }
    let m = d.marginalize(keep).unwrap();
    let vars = p.vars();
    let mut total = 0.0;
    for (i, &pi) in p.probs().iter().enumerate() {
        if pi == 0.0 {
            continue;
        }
        let mut a = Assignment::new();
        let mut rest = i;
        for v in vars.iter().rev() {
            a.insert(v.name(), rest % v.cardinality());
            rest /= v.cardinality();
        }
        let sub: Assignment = keep.iter().map(|k| (k.clone(), a.get(k).unwrap())).collect();
        total += pi * m.prob(&sub).unwrap().ln();
    }
    total
}

fn union(a: &[String], b: &[String]) -> Vec<String> {
    a.iter().chain(b).cloned().collect()
}

#[test]
fn joint_kl_matches_table_kl() {
    for seed in 0..20 {
        let (sys, target, _) = random_instance(seed, RandomShape::default()).unwrap();
        let report = joint_kl(&sys, &target).unwrap();
        let oracle = kl(&sys.build_joint().unwrap(), &build_target(&target, &sys).unwrap()).unwrap();
        assert!((report.joint_kl - oracle.kl_nats).abs() < 1e-12, "seed {seed}");
        assert!((report.log_partition - oracle.log_partition).abs() < 1e-12);
    }
}

#[test]
fn identical_and_uniform_targets_give_zero() {
    let (sys, _, _) = random_instance(7, RandomShape::default()).unwrap();
    assert!(joint_kl(&sys, &matched_target(&sys)).unwrap().joint_kl.abs() < 1e-12);
    let vars = vec![
        VariableSpec::new("x", 2, Role::PastInput).unwrap(),
        VariableSpec::new("z", 2, Role::LatentState).unwrap(),
    ];
    let uniform = ActualSystem::new(
        vars,
        vec![
            FactorSpec::parameterized("x", &[], vec![0.0, 0.0]),
            FactorSpec::parameterized("z", &[], vec![0.0, 0.0]),
        ],
    )
    .unwrap();
    assert!(joint_kl(&uniform, &TargetSpec::default()).unwrap().joint_kl.abs() < 1e-15);
}

#[test]
fn decomposition_identities_on_random_systems() {
    for seed in 0..100 {
        let shape = RandomShape {
            variables: 2 + (seed as usize % 4),
            ..RandomShape::default()
        };
        let (sys, target, _) = random_instance(seed, shape).unwrap();
        for report in [
            decompose_latent_side(&sys, &target).unwrap(),
            decompose_input_side(&sys, &target).unwrap(),
            energy_entropy(&sys, &target).unwrap(),
            expected_free_energy(&sys, &target).unwrap(),
        ] {
            assert_eq!(report.relation, Relation::Identity);
            assert!(report.violation() < 1e-9, "seed {seed} {}: {}", report.equation, report.slack);
        }
    }
}

#[test]
fn latent_side_terms_match_oracle() {
    for seed in 0..10 {
        let (sys, target, _) = random_instance(seed, RandomShape::default()).unwrap();
        let p = sys.build_joint().unwrap();
        let q = build_target(&target, &sys).unwrap().normalized();
        let x = names(sys.variables(), |r| r.is_input());
        let z = names(sys.variables(), |r| !r.is_input());
        let all = union(&x, &z);
        let r = decompose_latent_side(&sys, &target).unwrap();
        // E[ln p(z|x) − ln q(z)]
        let pref = expect_ln_marginal(&p, &p, &all) - expect_ln_marginal(&p, &p, &x) - expect_ln_marginal(&p, &q, &z);
        // E[ln q(x|z) − ln p(x)]
        let bound = expect_ln_marginal(&p, &q, &all) - expect_ln_marginal(&p, &q, &z) - expect_ln_marginal(&p, &p, &x);
        assert!((r.term("latent_pref_kl") - pref).abs() < 1e-10);
        assert!((r.term("info_bound") - bound).abs() < 1e-10);
        let r = decompose_input_side(&sys, &target).unwrap();
        let bound = expect_ln_marginal(&p, &q, &all) - expect_ln_marginal(&p, &q, &x) - expect_ln_marginal(&p, &p, &z);
        assert!((r.term("info_bound_latent") - bound).abs() < 1e-10);
    }
}

#[test]
fn information_bounds_below_mutual_information() {
    for seed in 0..100 {
        let (sys, target, _) = random_instance(seed, RandomShape::default()).unwrap();
        let p = sys.build_joint().unwrap();
        let x = names(sys.variables(), |r| r.is_input());
        let z = names(sys.variables(), |r| !r.is_input());
        let mi = mutual_information(&p, &x, &z).unwrap();
        let a = decompose_latent_side(&sys, &target).unwrap().term("info_bound");
        let b = decompose_input_side(&sys, &target).unwrap().term("info_bound_latent");
        assert!(a <= mi + 1e-9 && b <= mi + 1e-9, "seed {seed}");
        if seed < 10 {
            let matched = matched_target(&sys);
            let l = decompose_latent_side(&sys, &matched).unwrap();
            let i = decompose_input_side(&sys, &matched).unwrap();
            assert!((l.term("info_bound") - mi).abs() < 1e-10);
            assert!((l.term("latent_pref_kl") - mi).abs() < 1e-10);
            assert!((i.term("info_bound_latent") - mi).abs() < 1e-10);
        }
    }
}

#[test]
fn independent_latent_reduces_information_bound() {
    // z independent of x in both p and q: bound = −KL[p(x) ‖ q(x)]
    let vars = vec![
        VariableSpec::new("x", 2, Role::PastInput).unwrap(),
        VariableSpec::new("z", 2, Role::LatentState).unwrap(),
    ];
    let sys = ActualSystem::new(
        vars,
        vec![
            FactorSpec::fixed("x", &[], vec![0.3, 0.7]),
            FactorSpec::parameterized("z", &[], vec![0.4, 0.0]),
        ],
    )
    .unwrap();
    let target = TargetSpec::new(vec![
        TargetFactor::table("qx", &["x"], vec![0.6, 0.4], true),
        TargetFactor::table("qz", &["z"], vec![0.5, 0.5], true),
    ])
    .unwrap();
    let r = decompose_latent_side(&sys, &target).unwrap();
    let kl_x = 0.3 * (0.3f64 / 0.6).ln() + 0.7 * (0.7f64 / 0.4).ln();
    assert!((r.term("info_bound") + kl_x).abs() < 1e-12);
    assert!(r.holds(1e-9));
}

#[test]
fn energy_entropy_extremes() {
    let vars = vec![VariableSpec::new("x", 4, Role::FutureInput).unwrap()];
    let uniform = ActualSystem::new(vars.clone(), vec![FactorSpec::parameterized("x", &[], vec![0.0; 4])]).unwrap();
    let r = energy_entropy(&uniform, &TargetSpec::default()).unwrap();
    assert!((r.term("energy") - 4f64.ln()).abs() < 1e-12);
    assert!((r.term("entropy") - 4f64.ln()).abs() < 1e-12);
    assert!(r.joint_kl.abs() < 1e-12);

    let det = ActualSystem::new(vars, vec![FactorSpec::point_mass("x", &[], vec![2])]).unwrap();
    let q = [0.1, 0.2, 0.3, 0.4];
    let target = TargetSpec::new(vec![TargetFactor::table("q", &["x"], q.to_vec(), true)]).unwrap();
    let r = energy_entropy(&det, &target).unwrap();
    assert_eq!(r.term("entropy"), 0.0);
    assert!((r.joint_kl + 0.3f64.ln()).abs() < 1e-12);

    // scaling the target only moves the reported log-partition
    let doubled = TargetSpec::new(vec![TargetFactor::table("q", &["x"], q.iter().map(|v| 2.0 * v).collect(), false)]).unwrap();
    let scaled = energy_entropy(&det, &doubled).unwrap();
    assert!((scaled.log_partition - 2f64.ln()).abs() < 1e-12);
    assert!((scaled.total - r.total).abs() < 1e-12 && scaled.holds(1e-12));
}

#[test]
fn expected_free_energy_and_input_entropy() {
    // same target and latent structure, uniform vs deterministic input
    let build = |input: FactorSpec| {
        let vars = vec![
            VariableSpec::new("x", 2, Role::PastInput).unwrap(),
            VariableSpec::new("z", 2, Role::LatentState).unwrap(),
        ];
        ActualSystem::new(vars, vec![input, FactorSpec::parameterized("z", &["x"], vec![0.5, -0.5, 0.2, 0.1])]).unwrap()
    };
    let target = TargetSpec::new(vec![TargetFactor::table("q", &["x", "z"], vec![0.1, 0.4, 0.3, 0.2], false)]).unwrap();
    let uniform = expected_free_energy(&build(FactorSpec::fixed("x", &[], vec![0.5, 0.5])), &target).unwrap();
    let det = expected_free_energy(&build(FactorSpec::fixed("x", &[], vec![1.0, 0.0])), &target).unwrap();
    assert_eq!(det.term("input_entropy"), 0.0);
    assert!((det.term("efe") - det.joint_kl).abs() < 1e-12);
    assert!((uniform.term("input_entropy") - 2f64.ln()).abs() < 1e-12);
    assert!((uniform.term("efe") - uniform.joint_kl - 2f64.ln()).abs() < 1e-12);
}

#[test]
fn past_future_split_bounds_the_joint() {
    for seed in 0..100 {
        let (sys, target, horizon) = random_instance(seed, RandomShape::default()).unwrap();
        let r = past_future_split(&sys, &target, &horizon, &Assignment::new()).unwrap();
        assert_eq!(r.relation, Relation::LowerBoundsJoint);
        assert!(r.slack >= -1e-9, "seed {seed}: {}", r.slack);
        // the slack is the belief-update gap
        assert!((r.slack - r.diagnostics["latent_belief_gap"]).abs() < 1e-9);
        if seed < 20 {
            let tight = past_future_split(&sys, &matched_target(&sys), &horizon, &Assignment::new()).unwrap();
            assert!(tight.slack.abs() < 1e-9);
        }
    }
}

#[test]
fn past_future_split_without_latents_is_tight() {
    let vars = vec![
        VariableSpec::new("x1", 2, Role::PastInput).unwrap().at_step(1),
        VariableSpec::new("x2", 2, Role::FutureInput).unwrap().at_step(2),
    ];
    let sys = ActualSystem::new(
        vars,
        vec![
            FactorSpec::fixed("x1", &[], vec![0.2, 0.8]),
            FactorSpec::parameterized("x2", &["x1"], vec![0.3, 0.0, -1.0, 0.4]),
        ],
    )
    .unwrap();
    let target = TargetSpec::new(vec![TargetFactor::table("q", &["x1", "x2"], vec![0.1, 0.2, 0.3, 0.4], false)]).unwrap();
    let r = past_future_split(&sys, &target, &Horizon::new(2, None, 2).unwrap(), &Assignment::new()).unwrap();
    assert!(r.slack.abs() < 1e-12);
    assert_eq!(r.term("past_latent_pref"), 0.0);
    assert_eq!(r.term("exploration"), 0.0);
}

#[test]
fn realized_values_follow_the_declared_semantics() {
    // x1 -> a1 -> x2: doing a1 leaves x1 at its prior, conditioning does not
    let vars = vec![
        VariableSpec::new("x1", 2, Role::PastInput).unwrap().at_step(1),
        VariableSpec::new("a1", 2, Role::Action).unwrap().at_step(1),
        VariableSpec::new("x2", 2, Role::FutureInput).unwrap().at_step(2),
        VariableSpec::new("z", 2, Role::LatentState).unwrap(),
    ];
    let sys = ActualSystem::new(
        vars,
        vec![
            FactorSpec::fixed("x1", &[], vec![0.5, 0.5]),
            FactorSpec::parameterized("a1", &["x1"], vec![2.0, 0.0, 0.0, 2.0]),
            FactorSpec::fixed("x2", &["a1", "z"], vec![0.9, 0.1, 0.3, 0.7, 0.2, 0.8, 0.6, 0.4]),
            FactorSpec::parameterized("z", &["x1"], vec![0.1, 0.0, -0.3, 0.2]),
        ],
    )
    .unwrap();
    let target = TargetSpec::new(vec![
        TargetFactor::table("qz", &["z"], vec![0.5, 0.5], true),
        TargetFactor::table("qx", &["z", "x1"], vec![0.7, 0.3, 0.4, 0.6], true),
    ])
    .unwrap();
    let horizon = Horizon::new(2, None, 2).unwrap();
    let realized = Assignment::new().with("a1", 1);
    let done = past_future_split(&sys, &target, &horizon, &realized).unwrap();
    let cond = past_future_split_with(&sys, &target, &horizon, &realized, Realization::Condition).unwrap();
    assert!(done.slack >= -1e-9 && cond.slack >= -1e-9);
    assert!((done.term("repr_learning") - cond.term("repr_learning")).abs() > 1e-3);
    let bad = Assignment::new().with("z", 0);
    assert!(past_future_split(&sys, &target, &horizon, &bad).is_err());
}

#[test]
fn bayesian_check_on_filtering_preset() {
    let p = preset("hmm-filter", &PresetOptions::default()).unwrap();
    let r = bayesian_future_check(&p.system, &p.target, &p.horizon).unwrap();
    assert!(r.violation() < 1e-9);
    assert!(r.term("uncontrolled_future") > 1e-6);
    assert!(!r.flags["bayesian_satisfied"]);

    // future input generated by the target's own emission
    let matched = p
        .system
        .with_factor(FactorSpec::fixed("x3", &["z3"], vec![0.8, 0.2, 0.2, 0.8]))
        .unwrap();
    let r = bayesian_future_check(&matched, &p.target, &p.horizon).unwrap();
    assert!(r.term("uncontrolled_future").abs() < 1e-9);
    assert!(r.flags["bayesian_satisfied"]);
    assert!(r.term("past_vi") >= 0.0);
}

#[test]
fn bayesian_identity_on_random_instances() {
    for seed in 0..50 {
        let (sys, target, horizon) = random_instance(seed, RandomShape::default()).unwrap();
        let r = bayesian_future_check(&sys, &target, &horizon).unwrap();
        assert!(r.violation() < 1e-9);
        assert!(r.term("past_vi") >= -1e-12 && r.term("uncontrolled_future") >= -1e-12);
    }
}

#[test]
fn divergent_support_is_an_error() {
    let vars = vec![VariableSpec::new("x", 2, Role::FutureInput).unwrap()];
    let sys = ActualSystem::new(vars, vec![FactorSpec::parameterized("x", &[], vec![0.0, 0.0])]).unwrap();
    let target = TargetSpec::new(vec![TargetFactor::table("q", &["x"], vec![1.0, 0.0], true)]).unwrap();
    assert!(joint_kl(&sys, &target).is_err());
}

#[test]
fn report_serializes_with_kebab_relation() {
    let (sys, target, horizon) = random_instance(3, RandomShape::default()).unwrap();
    let json = past_future_split(&sys, &target, &horizon, &Assignment::new()).unwrap().to_json();
    assert!(json.contains("\"lower-bounds-joint\""));
    assert!(json.contains("\"past_latent_pref\""));
}
