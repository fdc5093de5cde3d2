use divmin_core::prob::{Assignment, Role, VariableSpec, MAX_OUTCOMES};
use divmin_core::random::rng;
use divmin_core::systems::{
    build_target, preset, ActualSystem, FactorSpec, Model, PresetOptions, SystemDecl, TargetFactor, TargetSpec,
    PRESET_NAMES,
};
use divmin_core::Error;
use rand::Rng;

fn var(name: &str, card: usize, role: Role) -> VariableSpec {
    VariableSpec::new(name, card, role).unwrap()
}

fn row(r: &mut impl Rng, card: usize) -> Vec<f64> {
    let w: Vec<f64> = (0..card).map(|_| r.random_range(0.05..1.0)).collect();
    let z: f64 = w.iter().sum();
    w.into_iter().map(|v| v / z).collect()
}

/// x (3) → y (2) ← z (2), with x → z as well; fixed random conditionals.
fn three_variable(seed: u64) -> (ActualSystem, [Vec<f64>; 3]) {
    let mut r = rng(seed);
    let px = row(&mut r, 3);
    let pz: Vec<f64> = (0..3).flat_map(|_| row(&mut r, 2)).collect();
    let py: Vec<f64> = (0..6).flat_map(|_| row(&mut r, 2)).collect();
    let system = ActualSystem::new(
        vec![var("x", 3, Role::PastInput), var("y", 2, Role::FutureInput), var("z", 2, Role::LatentState)],
        vec![
            FactorSpec::fixed("x", &[], px.clone()),
            FactorSpec::fixed("y", &["x", "z"], py.clone()),
            FactorSpec::parameterized("z", &["x"], pz.iter().map(|v| v.ln()).collect()),
        ],
    )
    .unwrap();
    (system, [px, py, pz])
}

#[test]
fn joint_is_the_product_of_conditionals() {
    for seed in 0..10 {
        let (system, [px, py, pz]) = three_variable(seed);
        let joint = system.build_joint().unwrap();
        for x in 0..3 {
            for y in 0..2 {
                for z in 0..2 {
                    let naive = px[x] * pz[x * 2 + z] * py[(x * 2 + z) * 2 + y];
                    let got = joint.probs()[(x * 2 + y) * 2 + z];
                    assert!((got - naive).abs() < 1e-15);
                }
            }
        }
    }
}

#[test]
fn declaration_order_is_free_but_cycles_are_not() {
    let (system, _) = three_variable(0);
    assert_eq!(system.topological_order(), vec!["x", "z", "y"]);
    let cyclic = ActualSystem::new(
        vec![var("a", 2, Role::LatentState), var("b", 2, Role::LatentState)],
        vec![
            FactorSpec::fixed("a", &["b"], vec![0.5; 4]),
            FactorSpec::fixed("b", &["a"], vec![0.5; 4]),
        ],
    );
    assert!(cyclic.is_err());
}

#[test]
fn bad_factors_are_rejected() {
    let vars = vec![var("a", 2, Role::LatentState)];
    assert!(ActualSystem::new(vars.clone(), vec![FactorSpec::fixed("a", &[], vec![0.5, 0.6])]).is_err());
    assert!(ActualSystem::new(vars.clone(), vec![FactorSpec::fixed("a", &[], vec![1.0])]).is_err());
    assert!(ActualSystem::new(vars.clone(), vec![]).is_err());
    assert!(ActualSystem::new(vars, vec![FactorSpec::point_mass("a", &[], vec![2])]).is_err());
}

#[test]
fn intervening_on_a_root_equals_conditioning() {
    let system = ActualSystem::new(
        vec![var("a", 2, Role::Action), var("x", 2, Role::FutureInput)],
        vec![
            FactorSpec::parameterized("a", &[], vec![0.3, -0.4]),
            FactorSpec::fixed("x", &["a"], vec![0.9, 0.1, 0.2, 0.8]),
        ],
    )
    .unwrap();
    let realized = Assignment::new().with("a", 1);
    let done = system.intervene(&realized).unwrap().build_joint().unwrap();
    let done = done.marginalize(&["x"]).unwrap();
    let conditioned = system.build_joint().unwrap().condition(&realized).unwrap();
    assert_eq!(conditioned.scope().len(), 1);
    for (a, b) in done.probs().iter().zip(conditioned.probs()) {
        assert!((a - b).abs() < 1e-15, "{a} {b}");
    }
}

#[test]
fn intervening_leaves_ancestors_alone() {
    // x → a → y: conditioning on a changes p(x), intervening does not
    let system = ActualSystem::new(
        vec![var("x", 2, Role::PastInput), var("a", 2, Role::Action), var("y", 2, Role::FutureInput)],
        vec![
            FactorSpec::fixed("x", &[], vec![0.5, 0.5]),
            FactorSpec::parameterized("a", &["x"], [0.9f64, 0.1, 0.2, 0.8].iter().map(|v| v.ln()).collect()),
            FactorSpec::fixed("y", &["a"], vec![0.7, 0.3, 0.4, 0.6]),
        ],
    )
    .unwrap();
    let realized = Assignment::new().with("a", 1);
    let done = system.intervene(&realized).unwrap().build_joint().unwrap();
    let px = done.marginalize(&["x"]).unwrap();
    assert!((px.probs()[0] - 0.5).abs() < 1e-15);
    let conditioned = system.build_joint().unwrap().condition(&realized).unwrap();
    let cx = conditioned.marginalize(&["x"]).unwrap();
    // Bayes: p(x=0 | a=1) = 0.1 / (0.1 + 0.8)
    assert!((cx.probs()[0] - 0.1 / 0.9).abs() < 1e-15);
    // downstream factor unchanged
    let py = done.marginalize(&["y"]).unwrap();
    assert!((py.probs()[0] - 0.4).abs() < 1e-15);
}

#[test]
fn latent_states_and_parameters_cannot_be_realized() {
    let (system, _) = three_variable(1);
    let err = system.intervene(&Assignment::new().with("z", 0)).unwrap_err();
    assert!(matches!(err, Error::NotRealizable { .. }));
}

#[test]
fn target_table_multiplies_factors() {
    let (system, [px, _, pz]) = three_variable(2);
    let target = TargetSpec::new(vec![
        TargetFactor::table("pref", &["y"], vec![0.2, 0.6], false),
        TargetFactor::reward("r", &["z"], vec![0.0, 1.0]),
        TargetFactor::tied("env", "z"),
        TargetFactor::table("px", &["x"], px.clone(), true),
    ])
    .unwrap();
    let q = build_target(&target, &system).unwrap();
    for x in 0..3 {
        for y in 0..2 {
            for z in 0..2 {
                let naive = [0.2, 0.6][y] * (z as f64).exp() * pz[x * 2 + z] * px[x];
                assert!((q.weights()[(x * 2 + y) * 2 + z] - naive).abs() < 1e-15);
            }
        }
    }
}

#[test]
fn normalized_targets_are_checked() {
    let (system, _) = three_variable(3);
    let bad = TargetSpec::new(vec![TargetFactor::table("q", &["z", "y"], vec![0.5, 0.6, 0.5, 0.5], true)]).unwrap();
    assert!(Model::new(system.clone(), bad).is_err());
    let dup = TargetSpec::new(vec![
        TargetFactor::table("q", &["y"], vec![1.0, 1.0], false),
        TargetFactor::table("q", &["z"], vec![1.0, 1.0], false),
    ]);
    assert!(dup.is_err());
    let unknown = TargetSpec::new(vec![TargetFactor::table("q", &["w"], vec![1.0, 1.0], false)]).unwrap();
    assert!(Model::new(system, unknown).is_err());
}

#[test]
fn parameters_round_trip() {
    let p = preset("vae-toy", &PresetOptions::default()).unwrap();
    let model = Model::new(p.system.clone(), p.target.clone()).unwrap();
    let params = model.parameters();
    let phi: Vec<f64> = (0..params.len()).map(|i| i as f64 * 0.1 - 0.3).collect();
    let moved = model.with_parameters(&phi).unwrap();
    assert_eq!(moved.parameters().values(), phi.as_slice());
    assert!(model.with_parameters(&phi[1..]).is_err());
    // actual coordinates come before target ones
    let names: Vec<String> = (0..params.len()).map(|i| params.describe(i)).collect();
    let first_q = names.iter().position(|n| n.starts_with("q/")).unwrap_or(names.len());
    assert!(names[..first_q].iter().all(|n| n.starts_with("p/")));
}

#[test]
fn presets_build_and_stay_small() {
    for name in PRESET_NAMES {
        let p = preset(name, &PresetOptions::default()).unwrap();
        let joint = p.system.build_joint().unwrap();
        assert!(joint.probs().len() <= MAX_OUTCOMES);
        assert!((joint.probs().iter().sum::<f64>() - 1.0).abs() < 1e-12);
        p.horizon.partition(p.system.scope()).unwrap();
        Model::new(p.system, p.target).unwrap();
    }
    assert!(matches!(preset("nope", &PresetOptions::default()), Err(Error::UnknownPreset(_))));
    let wrong = PresetOptions {
        steps: Some(3),
        reward: None,
    };
    assert!(preset("bnn-toy", &wrong).is_err());
}

#[test]
fn declarations_build_systems() {
    let text = r#"{
        "variables": [
            {"name": "a", "cardinality": 2, "role": "action", "step": 1},
            {"name": "x", "cardinality": 2, "role": "future-input", "step": 1}
        ],
        "factors": [
            {"child": "a", "kind": "parameterized", "logits": [0, 0]},
            {"child": "x", "parents": ["a"], "kind": "fixed", "table": [1, 0, 0, 1]}
        ],
        "target_factors": [{"name": "pref", "scope": ["x"], "kind": "table", "weights": [1, 2]}],
        "rewards": [{"name": "r", "scope": ["x"], "values": [0, 1]}],
        "horizon": {"steps": 1, "split": 1}
    }"#;
    let decl = SystemDecl::from_json(text).unwrap();
    let (system, target, horizon) = decl.build().unwrap();
    assert_eq!(system.parameter_count(), 2);
    assert_eq!(target.factors().len(), 2);
    assert_eq!(horizon.steps, 1);
    let extra = text.replace(r#""kind": "fixed","#, r#""kind": "fixed", "colour": 1,"#);
    assert!(SystemDecl::from_json(&extra).is_err());
    let bad_kind = text.replace(r#""kind": "fixed","#, r#""kind": "lookup","#);
    assert!(SystemDecl::from_json(&bad_kind).unwrap().build().is_err());
}
