use divmin_core::prob::{
    conditional_entropy, entropy, expected_conditional_kl, kl, mutual_information, variational_mi_lower_bound,
    ConditionalTable, Role, TabularDistribution, UnnormalizedTable, VariableSpec,
};
use proptest::prelude::*;

fn vars(names: &[&str]) -> Vec<VariableSpec> {
    names.iter().map(|n| VariableSpec::new(*n, 2, Role::LatentState).unwrap()).collect()
}

fn dist(names: &[&str], weights: &[f64]) -> TabularDistribution {
    TabularDistribution::from_weights(vars(names), weights.to_vec()).unwrap()
}

fn table(names: &[&str], weights: &[f64]) -> UnnormalizedTable {
    UnnormalizedTable::new(vars(names), weights.to_vec()).unwrap()
}

fn h(p: &[f64]) -> f64 {
    -p.iter().filter(|v| **v > 0.0).map(|v| v * v.ln()).sum::<f64>()
}

/// Marginal of a row-major binary table over the kept bit positions (0 = first variable).
fn marginal(p: &[f64], n: usize, keep: &[usize]) -> Vec<f64> {
    let mut out = vec![0.0; 1 << keep.len()];
    for (i, v) in p.iter().enumerate() {
        let mut j = 0;
        for &k in keep {
            j = j * 2 + ((i >> (n - 1 - k)) & 1);
        }
        out[j] += v;
    }
    out
}

fn normalize(w: &[f64]) -> Vec<f64> {
    let z: f64 = w.iter().sum();
    w.iter().map(|v| v / z).collect()
}

fn weights(n: usize) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(0.01f64..1.0, n)
}

#[test]
fn entropy_reference_values() {
    let det = dist(&["a", "b"], &[0.0, 0.0, 1.0, 0.0]);
    assert_eq!(entropy(&det, &["a", "b"]).unwrap(), 0.0);
    let uni = dist(&["a", "b"], &[1.0; 4]);
    assert!((entropy(&uni, &["a", "b"]).unwrap() - 4f64.ln()).abs() < 1e-15);
    let bern = dist(&["a"], &[0.75, 0.25]);
    let expected = -(0.25f64 * 0.25f64.ln() + 0.75 * 0.75f64.ln());
    assert!((entropy(&bern, &["a"]).unwrap() - expected).abs() < 1e-15);
    assert!(entropy(&bern, &[] as &[&str]).is_err());
}

#[test]
fn kl_reference_values() {
    let p = dist(&["a"], &[0.5, 0.5]);
    let expected = 0.5 * (0.5f64 / 0.25).ln() + 0.5 * (0.5f64 / 0.75).ln();
    let v = kl(&p, &table(&["a"], &[0.25, 0.75])).unwrap();
    assert!((v.kl_nats - expected).abs() < 1e-15);
    assert!(!v.divergent);
    // unnormalized q: the partition is reported, the KL is against q/Z
    let scaled = kl(&p, &table(&["a"], &[0.5, 1.5])).unwrap();
    assert!((scaled.kl_nats - expected).abs() < 1e-15);
    assert!((scaled.log_partition - 2f64.ln()).abs() < 1e-15);
    let off = kl(&p, &table(&["a"], &[0.0, 1.0])).unwrap();
    assert!(off.divergent);
    assert!(kl(&p, &table(&["b"], &[0.5, 0.5])).is_err());
}

#[test]
fn identical_uniform_pair_carries_one_bit() {
    let p = dist(&["x", "z"], &[0.5, 0.0, 0.0, 0.5]);
    assert!((mutual_information(&p, &["x"], &["z"]).unwrap() - std::f64::consts::LN_2).abs() < 1e-15);
    assert_eq!(conditional_entropy(&p, &["x"], &["z"]).unwrap(), 0.0);
    assert!(mutual_information(&p, &["x"], &["x"]).is_err());
}

#[test]
fn decoder_edge_cases() {
    let p = dist(&["x", "z"], &[0.3, 0.1, 0.2, 0.4]);
    let exact = ConditionalTable::from_distribution(&p, &["x"], &["z"]).unwrap();
    let mi = mutual_information(&p, &["x"], &["z"]).unwrap();
    assert!((variational_mi_lower_bound(&p, &exact, &["x"], &["z"]).unwrap() - mi).abs() < 1e-15);
    let px = marginal(p.probs(), 2, &[0]);
    let ignoring = ConditionalTable::new(vars(&["x"]), vars(&["z"]), vec![px[0], px[1], px[0], px[1]]).unwrap();
    assert!(variational_mi_lower_bound(&p, &ignoring, &["x"], &["z"]).unwrap().abs() < 1e-15);
    assert!(ConditionalTable::new(vars(&["x"]), vars(&["z"]), vec![0.5, 0.6, 0.5, 0.5]).is_err());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(100))]

    #[test]
    fn kl_is_nonnegative_and_zero_on_equal(p in weights(8), q in weights(8), s in 0.1f64..10.0) {
        let names = ["a", "b", "c"];
        let d = dist(&names, &p);
        prop_assert!(kl(&d, &table(&names, &q)).unwrap().kl_nats >= 0.0);
        let same: Vec<f64> = d.probs().iter().map(|v| v * s).collect();
        prop_assert!(kl(&d, &table(&names, &same)).unwrap().kl_nats < 1e-12);
    }

    #[test]
    fn kl_chain_rule(p in weights(4), q in weights(4)) {
        let names = ["a", "b"];
        let (d, t) = (dist(&names, &p), table(&names, &q));
        let joint = kl(&d, &t).unwrap().kl_nats;
        // KL of the b marginals by direct summation
        let (pb, qb) = (marginal(d.probs(), 2, &[1]), normalize(&marginal(&q, 2, &[1])));
        let kb: f64 = pb.iter().zip(&qb).map(|(a, b)| a * (a / b).ln()).sum();
        let cond = expected_conditional_kl(&d, &t, &["a"], &["b"]).unwrap().kl_nats;
        prop_assert!((joint - (kb + cond)).abs() < 1e-10);
    }

    #[test]
    fn conditional_entropy_chain_rule(p in weights(8)) {
        let d = dist(&["x", "y", "w"], &p);
        let hxy = h(&marginal(d.probs(), 3, &[0, 1]));
        let hy = h(&marginal(d.probs(), 3, &[1]));
        let c = conditional_entropy(&d, &["x"], &["y"]).unwrap();
        prop_assert!((c - (hxy - hy)).abs() < 1e-12);
        let all = entropy(&d, &["x", "y", "w"]).unwrap();
        prop_assert!(all >= 0.0 && all <= 8f64.ln() + 1e-12);
    }

    #[test]
    fn mutual_information_identities(p in weights(8)) {
        let d = dist(&["x", "y", "z"], &p);
        let xz = mutual_information(&d, &["x", "y"], &["z"]).unwrap();
        let zx = mutual_information(&d, &["z"], &["x", "y"]).unwrap();
        prop_assert!((xz - zx).abs() < 1e-12);
        let hx = h(&marginal(d.probs(), 3, &[0, 1]));
        let hx_given_z = h(d.probs()) - h(&marginal(d.probs(), 3, &[2]));
        prop_assert!((xz - (hx - hx_given_z)).abs() < 1e-12);
    }

    #[test]
    fn decoder_bound_is_below_information(p in weights(4), logits in prop::collection::vec(-3.0f64..3.0, 4)) {
        let d = dist(&["x", "z"], &p);
        // decoder q(x | z): slices over x for each z
        let mut values = vec![0.0; 4];
        for z in 0..2 {
            let e = [logits[2 * z].exp(), logits[2 * z + 1].exp()];
            values[2 * z] = e[0] / (e[0] + e[1]);
            values[2 * z + 1] = e[1] / (e[0] + e[1]);
        }
        let decoder = ConditionalTable::new(vars(&["x"]), vars(&["z"]), values.clone()).unwrap();
        let bound = variational_mi_lower_bound(&d, &decoder, &["x"], &["z"]).unwrap();
        let mi = mutual_information(&d, &["x"], &["z"]).unwrap();
        prop_assert!(bound <= mi + 1e-12);
        // gap = E_{p(z)} KL[p(x|z) ‖ q(x|z)], summed directly
        let pr = d.probs();
        let mut gap = 0.0;
        for z in 0..2 {
            let pz = pr[z] + pr[2 + z];
            for x in 0..2 {
                let pxz = pr[2 * x + z];
                gap += pxz * ((pxz / pz) / values[2 * z + x]).ln();
            }
        }
        prop_assert!((mi - bound - gap).abs() < 1e-10);
    }
}
