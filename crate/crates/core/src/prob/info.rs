//! Entropies, divergences and information quantities over explicit tables, in nats.
//!
//! `0 ln 0` is taken as 0. A KL whose first argument puts mass where the second has
//! none is reported through the `divergent` flag; the returned value then holds only
//! the finite part of the sum.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::prob::sum::CompensatedSum;
use crate::prob::table::{
    bucket_sums, ConditionalTable, Scope, TabularDistribution, UnnormalizedTable, VarMask,
};

/// KL value with the target's log-partition reported separately.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct KlValue {
    pub kl_nats: f64,
    pub log_partition: f64,
    pub divergent: bool,
}

/// `ln` of the marginal over `mask`, evaluated at every joint outcome.
pub(crate) fn ln_marginal(scope: &Scope, probs: &[f64], mask: VarMask) -> Vec<f64> {
    if mask == 0 {
        return vec![0.0; probs.len()];
    }
    if mask == scope.full_mask() {
        return probs.iter().map(|p| p.ln()).collect();
    }
    let proj = scope.projection(mask);
    let marg = bucket_sums(probs, &proj, scope.mask_size(mask));
    let ln: Vec<f64> = marg.iter().map(|m| m.ln()).collect();
    proj.iter().map(|&b| ln[b as usize]).collect()
}

fn disjoint(scope: &Scope, a: VarMask, b: VarMask) -> Result<()> {
    if a & b != 0 {
        return Err(Error::Overlap(scope.names(a & b)[0].to_string()));
    }
    Ok(())
}

fn nonempty_mask<S: AsRef<str>>(scope: &Scope, names: &[S]) -> Result<VarMask> {
    if names.is_empty() {
        return Err(Error::EmptySet);
    }
    scope.mask(names)
}

fn entropy_mask(dist: &TabularDistribution, mask: VarMask) -> f64 {
    if mask == 0 {
        return 0.0;
    }
    let scope = dist.scope();
    let marg = bucket_sums(dist.probs(), &scope.projection(mask), scope.mask_size(mask));
    let mut acc = CompensatedSum::new();
    for m in marg {
        if m > 0.0 {
            acc.add(-m * m.ln());
        }
    }
    acc.value().max(0.0)
}

/// Entropy of the marginal over `subset`.
pub fn entropy<S: AsRef<str>>(dist: &TabularDistribution, subset: &[S]) -> Result<f64> {
    let mask = nonempty_mask(dist.scope(), subset)?;
    Ok(entropy_mask(dist, mask))
}

/// `H[targets | conditions] = H[targets, conditions] - H[conditions]`.
pub fn conditional_entropy<S: AsRef<str>>(
    dist: &TabularDistribution,
    targets: &[S],
    conditions: &[S],
) -> Result<f64> {
    let scope = dist.scope();
    let t = nonempty_mask(scope, targets)?;
    let c = scope.mask(conditions)?;
    disjoint(scope, t, c)?;
    Ok(entropy_mask(dist, t | c) - entropy_mask(dist, c))
}

fn same_scope(a: &Scope, b: &Scope) -> Result<()> {
    if a.vars().len() != b.vars().len()
        || a
            .vars()
            .iter()
            .zip(b.vars())
            .any(|(x, y)| x.name() != y.name() || x.cardinality() != y.cardinality())
    {
        return Err(Error::ScopeMismatch);
    }
    Ok(())
}

/// `KL(p || q/Z)` with `ln Z` reported alongside.
pub fn kl(p: &TabularDistribution, q: &UnnormalizedTable) -> Result<KlValue> {
    same_scope(p.scope(), q.scope())?;
    let ln_z = q.log_partition();
    let mut acc = CompensatedSum::new();
    let mut divergent = false;
    for (&pv, &qv) in p.probs().iter().zip(q.weights()) {
        if pv == 0.0 {
            continue;
        }
        if qv == 0.0 {
            divergent = true;
            continue;
        }
        acc.add(pv * (pv.ln() - (qv.ln() - ln_z)));
    }
    Ok(KlValue {
        kl_nats: acc.value().max(0.0),
        log_partition: ln_z,
        divergent,
    })
}

/// `E_{p(b)} KL[p(a|b) || q(a|b)]`, with `q` normalized first.
pub fn expected_conditional_kl<S: AsRef<str>>(
    p: &TabularDistribution,
    q: &UnnormalizedTable,
    a_vars: &[S],
    b_vars: &[S],
) -> Result<KlValue> {
    same_scope(p.scope(), q.scope())?;
    let scope = p.scope();
    let a = nonempty_mask(scope, a_vars)?;
    let b = scope.mask(b_vars)?;
    disjoint(scope, a, b)?;
    let qn = q.normalized_probs();
    let p_ab = ln_marginal(scope, p.probs(), a | b);
    let p_b = ln_marginal(scope, p.probs(), b);
    let q_ab = ln_marginal(scope, &qn, a | b);
    let q_b = ln_marginal(scope, &qn, b);
    let mut acc = CompensatedSum::new();
    let mut divergent = false;
    for (i, &pv) in p.probs().iter().enumerate() {
        if pv == 0.0 {
            continue;
        }
        let lq = q_ab[i] - q_b[i];
        if !lq.is_finite() {
            divergent = true;
            continue;
        }
        acc.add(pv * ((p_ab[i] - p_b[i]) - lq));
    }
    Ok(KlValue {
        kl_nats: acc.value(),
        log_partition: q.log_partition(),
        divergent,
    })
}

/// `I[x; z] = KL[p(x, z) || p(x) p(z)]`.
pub fn mutual_information<S: AsRef<str>>(
    dist: &TabularDistribution,
    x_vars: &[S],
    z_vars: &[S],
) -> Result<f64> {
    let scope = dist.scope();
    let x = nonempty_mask(scope, x_vars)?;
    let z = nonempty_mask(scope, z_vars)?;
    disjoint(scope, x, z)?;
    let joint = ln_marginal(scope, dist.probs(), x | z);
    let lx = ln_marginal(scope, dist.probs(), x);
    let lz = ln_marginal(scope, dist.probs(), z);
    let mut acc = CompensatedSum::new();
    for (i, &pv) in dist.probs().iter().enumerate() {
        if pv > 0.0 {
            acc.add(pv * (joint[i] - (lx[i] + lz[i])));
        }
    }
    Ok(acc.value().max(0.0))
}

/// Variational lower bound `E[ln q(x|z) - ln p(x)]` on `I[x; z]`.
///
/// Returns `-inf` when the decoder puts zero mass on an outcome `p` can produce.
pub fn variational_mi_lower_bound<S: AsRef<str>>(
    p: &TabularDistribution,
    q_conditional: &ConditionalTable,
    x_vars: &[S],
    z_vars: &[S],
) -> Result<f64> {
    let scope = p.scope();
    let x = nonempty_mask(scope, x_vars)?;
    let z = nonempty_mask(scope, z_vars)?;
    disjoint(scope, x, z)?;
    let names_match = |spec: &[crate::prob::VariableSpec], names: &[S]| {
        spec.len() == names.len() && spec.iter().zip(names).all(|(v, n)| v.name() == n.as_ref())
    };
    if !names_match(q_conditional.targets(), x_vars)
        || !names_match(q_conditional.conditions(), z_vars)
    {
        return Err(Error::ScopeMismatch);
    }
    // the table layout is conditions outer, targets inner, each in the caller's order
    let mut order: Vec<usize> = z_vars
        .iter()
        .map(|n| scope.position(n.as_ref()))
        .collect::<Result<_>>()?;
    for n in x_vars {
        order.push(scope.position(n.as_ref())?);
    }
    let idx = scope.index_vector(&order);
    let lx = ln_marginal(scope, p.probs(), x);
    let mut acc = CompensatedSum::new();
    for (i, &pv) in p.probs().iter().enumerate() {
        if pv == 0.0 {
            continue;
        }
        let qv = q_conditional.values()[idx[i] as usize];
        if qv == 0.0 {
            return Ok(f64::NEG_INFINITY);
        }
        acc.add(pv * (qv.ln() - lx[i]));
    }
    Ok(acc.value())
}
