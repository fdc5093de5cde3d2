use divmin_core::objectives::{build, kl_control, ControlOptions, Family, Objective, Problem};
use divmin_core::optim::{
    analytic_gradient, finite_difference_gradient, max_relative_deviation, minimize, minimize_with_selectors,
    norm, OptimSettings, Termination,
};
use divmin_core::prob::{Role, VariableSpec};
use divmin_core::random::{random_objective, random_parameters};
use divmin_core::systems::{preset, ActualSystem, FactorSpec, Horizon, PresetOptions, TargetFactor, TargetSpec};
use divmin_core::Error;

const PRESETS: [(Family, &str); 8] = [
    (Family::ElboBnn, "bnn-toy"),
    (Family::MapPointMass, "bnn-toy"),
    (Family::AmortizedVae, "vae-toy"),
    (Family::KlControl, "free-choice"),
    (Family::MaxentRl, "chain-mdp"),
    (Family::Empowerment, "dead-action"),
    (Family::SkillDiscovery, "two-room-skills"),
    (Family::InfoGain, "bandit-infogain"),
];

fn preset_objective(family: Family, name: &str) -> Objective {
    let problem: Problem = preset(name, &PresetOptions::default()).unwrap().into();
    let options = match family {
        // the point-mass limit has no gradient; its relaxation does
        Family::MapPointMass => Some(serde_json::json!({"relaxed_temperature": 0.5})),
        _ => None,
    };
    build(family, &problem, options.as_ref()).unwrap()
}

/// One binary variable with softmax logits against a fixed normalized target `q`.
fn two_outcome(q: [f64; 2], logits: [f64; 2]) -> Objective {
    let vars = vec![VariableSpec::new("x1", 2, Role::FutureInput).unwrap().at_step(1)];
    let factors = vec![FactorSpec::parameterized("x1", &[], logits.to_vec())];
    let target = TargetSpec::new(vec![TargetFactor::table("q", &["x1"], q.to_vec(), true)]).unwrap();
    let problem = Problem::new(
        ActualSystem::new(vars, factors).unwrap(),
        target,
        Horizon::new(1, None, 1).unwrap(),
    );
    kl_control(&problem, &ControlOptions::default()).unwrap()
}

#[test]
fn analytic_matches_central_differences_on_presets() {
    for (family, name) in PRESETS {
        let obj = preset_objective(family, name);
        assert!(obj.parameter_count() > 0, "{family}");
        for seed in 0..5 {
            let phi = random_parameters(seed, obj.parameter_count());
            let a = analytic_gradient(&obj, &phi).unwrap();
            let fd = finite_difference_gradient(&obj, &phi, 1e-5).unwrap();
            let dev = max_relative_deviation(&a.gradient, &fd.gradient);
            assert!(dev < 1e-5, "{family} seed {seed}: {dev}");
        }
    }
}

#[test]
fn analytic_matches_central_differences_on_random_instances() {
    for family in Family::ALL {
        for seed in 0..10 {
            let obj = random_objective(family, seed).unwrap();
            if obj.parameter_count() == 0 {
                continue;
            }
            let phi = random_parameters(seed + 100, obj.parameter_count());
            let a = analytic_gradient(&obj, &phi).unwrap();
            let fd = finite_difference_gradient(&obj, &phi, 1e-5).unwrap();
            assert!(max_relative_deviation(&a.gradient, &fd.gradient) < 1e-5, "{family} seed {seed}");
        }
    }
}

#[test]
fn two_outcome_gradient_matches_closed_form() {
    let q = [0.3, 0.7];
    for l in [-2.0, -0.4, 0.0, 1.3] {
        let obj = two_outcome(q, [0.0, l]);
        let g = analytic_gradient(&obj, &[0.0, l]).unwrap().gradient;
        // d/dl KL(σ(l) ‖ q) = p0 p1 [ln(p1/q1) − ln(p0/q0)], and the opposite for the other logit
        let p1 = 1.0 / (1.0 + (-l).exp());
        let p0 = 1.0 - p1;
        let d = p0 * p1 * ((p1 / q[1]).ln() - (p0 / q[0]).ln());
        assert!((g[1] - d).abs() < 1e-14, "{} vs {d}", g[1]);
        assert!((g[0] + d).abs() < 1e-14);
    }
}

#[test]
fn gradient_vanishes_at_reachable_optimum() {
    let q = [0.2f64, 0.8];
    let logits = [q[0].ln(), q[1].ln()];
    let obj = two_outcome(q, logits);
    assert!(analytic_gradient(&obj, &logits).unwrap().norm() < 1e-8);
    let trace = minimize(&obj, &logits, &OptimSettings::default()).unwrap();
    assert!(trace.iterations() <= 1);
    assert_eq!(trace.termination, Termination::GradientTol);
}

#[test]
fn central_difference_error_is_quadratic_in_step() {
    let obj = preset_objective(Family::ElboBnn, "bnn-toy");
    let phi = random_parameters(11, obj.parameter_count());
    let exact = analytic_gradient(&obj, &phi).unwrap().gradient;
    let error = |h: f64| {
        let fd = finite_difference_gradient(&obj, &phi, h).unwrap().gradient;
        exact.iter().zip(&fd).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max)
    };
    let (e3, e4, e5, e6) = (error(1e-3), error(1e-4), error(1e-5), error(1e-6));
    // truncation error falls a hundredfold per decade until round-off takes over
    let ratio = e3 / e4;
    assert!((70.0..140.0).contains(&ratio), "{ratio}");
    assert!(e5 < e4 && e5 < 1e-9, "{e5}");
    assert!(e6 < 1e-8, "{e6}");
}

#[test]
fn finite_differences_reject_bad_steps() {
    let obj = two_outcome([0.5, 0.5], [0.0, 0.0]);
    for h in [0.0, -1e-5, f64::NAN] {
        assert!(matches!(finite_difference_gradient(&obj, &[0.0, 0.0], h), Err(Error::InvalidArgument(_))));
    }
}

#[test]
fn score_identity_residual_is_negligible() {
    for (family, name) in PRESETS {
        let obj = preset_objective(family, name);
        for seed in 0..5 {
            let phi = random_parameters(seed, obj.parameter_count());
            let r = obj.score_residual(&phi).unwrap();
            assert!(norm(&r) < 1e-10, "{family}: {}", norm(&r));
        }
    }
}

#[test]
fn every_accepted_step_decreases_the_objective() {
    for (family, name) in PRESETS {
        let obj = preset_objective(family, name);
        let settings = OptimSettings {
            max_iters: 300,
            ..OptimSettings::default()
        };
        let trace = minimize(&obj, &random_parameters(3, obj.parameter_count()), &settings).unwrap();
        for w in trace.records.windows(2) {
            assert!(w[1].total < w[0].total + 1e-12, "{family} at {}", w[1].iter);
            assert!(w[0].step > 0.0);
        }
        assert_eq!(trace.records.last().unwrap().total, trace.final_total());
    }
}

#[test]
fn bound_objectives_log_the_joint_alongside() {
    let obj = preset_objective(Family::InfoGain, "bandit-infogain");
    let trace = minimize(&obj, obj.parameters().values(), &OptimSettings::default()).unwrap();
    for r in &trace.records {
        assert!(r.joint_kl <= r.total + 1e-9);
    }
}

#[test]
fn optimized_start_terminates_immediately() {
    let obj = preset_objective(Family::ElboBnn, "bnn-toy");
    let first = minimize(&obj, obj.parameters().values(), &OptimSettings::default()).unwrap();
    assert_eq!(first.termination, Termination::GradientTol);
    let again = minimize(&obj, &first.phi, &OptimSettings::default()).unwrap();
    assert!(again.iterations() <= 1);
}

#[test]
fn runs_are_bit_identical() {
    for (family, name) in PRESETS {
        let obj = preset_objective(family, name);
        let phi = random_parameters(9, obj.parameter_count());
        let settings = OptimSettings {
            max_iters: 100,
            ..OptimSettings::default()
        };
        let a = minimize(&obj, &phi, &settings).unwrap();
        let b = minimize(&obj, &phi, &settings).unwrap();
        assert_eq!(a, b, "{family}");
        assert_eq!(a.phi.iter().map(|x| x.to_bits()).collect::<Vec<_>>(), b.phi.iter().map(|x| x.to_bits()).collect::<Vec<_>>());
    }
}

#[test]
fn max_iters_is_respected() {
    let obj = preset_objective(Family::MaxentRl, "chain-mdp");
    let settings = OptimSettings {
        max_iters: 3,
        ..OptimSettings::default()
    };
    let trace = minimize(&obj, &random_parameters(1, obj.parameter_count()), &settings).unwrap();
    assert_eq!(trace.termination, Termination::MaxIters);
    assert_eq!(trace.iterations(), 3);
}

#[test]
fn invalid_settings_are_rejected() {
    let obj = two_outcome([0.5, 0.5], [0.0, 0.0]);
    for step in [0.0, -1.0, f64::INFINITY] {
        let settings = OptimSettings {
            step,
            ..OptimSettings::default()
        };
        assert!(minimize(&obj, &[0.0, 0.0], &settings).is_err());
    }
    let parsed: Result<OptimSettings, _> = serde_json::from_str(r#"{"step": 0.5, "momentum": 0.9}"#);
    assert!(parsed.is_err());
    let parsed: OptimSettings = serde_json::from_str(r#"{"max_iters": 10}"#).unwrap();
    assert_eq!(parsed.step, 1.0);
}

#[test]
fn selector_scan_is_recorded_and_coordinate_search_agrees() {
    let problem: Problem = preset("two-room-skills", &PresetOptions::default()).unwrap().into();
    let obj = build(Family::SkillDiscovery, &problem, None).unwrap();
    let settings = OptimSettings {
        max_iters: 500,
        ..OptimSettings::default()
    };
    let full = minimize_with_selectors(&obj, obj.parameters().values(), &settings, 4096).unwrap();
    assert!(full.exhaustive);
    let best = full.scan.iter().map(|e| e.total).fold(f64::INFINITY, f64::min);
    assert_eq!(best, full.trace.final_total());
    let coordinate = minimize_with_selectors(&obj, obj.parameters().values(), &settings, 1).unwrap();
    assert!(!coordinate.exhaustive);
    assert!(coordinate.trace.final_total() >= best - 1e-12);
}
