//! Expectations of linear combinations of log-quantities under the actual distribution,
//! and their exact gradients.
//!
//! Every term of every breakdown is some `E_p[F]` where `F` is a weighted sum of
//! log-marginals of `p` or the normalized target, or log-values of single factors.
//! Writing terms this way makes the chain-rule identities between breakdowns exact up
//! to summation error and gives one gradient routine for all of them.

use std::cell::RefCell;
use std::collections::HashMap;
use std::rc::Rc;

use crate::error::{Error, Result};
use crate::prob::info::ln_marginal;
use crate::prob::sum::CompensatedSum;
use crate::prob::table::bucket_sums;
use crate::prob::{Scope, VarMask};
use crate::systems::model::{Compiled, Materialized, Source};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub(crate) enum Atom {
    /// ln p(ω_S).
    Actual(VarMask),
    /// ln q(ω_S) of the normalized target.
    Target(VarMask),
    /// ln of one actual factor.
    ActualFactor(usize),
    /// ln of one target factor (the reward itself for reward potentials).
    TargetFactor(usize),
}

#[derive(Clone, Debug, Default, PartialEq)]
pub(crate) struct LogForm {
    terms: Vec<(f64, Atom)>,
}

impl LogForm {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn plus(mut self, atom: Atom) -> Self {
        self.add(1.0, atom);
        self
    }

    pub fn minus(mut self, atom: Atom) -> Self {
        self.add(-1.0, atom);
        self
    }

    pub fn add(&mut self, coef: f64, atom: Atom) {
        // empty marginals are identically zero
        if matches!(atom, Atom::Actual(0) | Atom::Target(0)) || coef == 0.0 {
            return;
        }
        match self.terms.iter_mut().find(|(_, a)| *a == atom) {
            Some((c, _)) => *c += coef,
            None => self.terms.push((coef, atom)),
        }
        self.terms.retain(|(c, _)| *c != 0.0);
    }

    pub fn add_form(&mut self, coef: f64, other: &LogForm) {
        for &(c, a) in &other.terms {
            self.add(coef * c, a);
        }
    }

    pub fn scaled(&self, coef: f64) -> LogForm {
        let mut out = LogForm::new();
        out.add_form(coef, self);
        out
    }

    pub fn terms(&self) -> &[(f64, Atom)] {
        &self.terms
    }

    pub fn is_empty(&self) -> bool {
        self.terms.is_empty()
    }
}

/// `E_p[ln p(a|b)]`-style helpers.
pub(crate) fn ln_actual_cond(a: VarMask, b: VarMask) -> LogForm {
    LogForm::new().plus(Atom::Actual(a | b)).minus(Atom::Actual(b))
}

pub(crate) fn ln_target_cond(a: VarMask, b: VarMask) -> LogForm {
    LogForm::new().plus(Atom::Target(a | b)).minus(Atom::Target(b))
}

/// `E KL[p(a|b) ‖ q(a|b)]`.
pub(crate) fn cond_kl(a: VarMask, b: VarMask) -> LogForm {
    let mut f = ln_actual_cond(a, b);
    f.add_form(-1.0, &ln_target_cond(a, b));
    f
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub(crate) struct Expectation {
    pub value: f64,
    pub divergent: bool,
}

/// Evaluates forms at one actual/target pair. Factor atoms and gradients need the
/// compiled model; marginal atoms work from bare tables too.
pub(crate) struct Evaluator<'a> {
    scope: Scope,
    p: Vec<f64>,
    ln_p: Vec<f64>,
    q: Vec<f64>,
    ln_q: Vec<f64>,
    pub ln_z: f64,
    model: Option<(&'a Compiled, Materialized)>,
    cache: RefCell<HashMap<Atom, Rc<Vec<f64>>>>,
}

impl<'a> Evaluator<'a> {
    pub fn new(compiled: &'a Compiled, phi: &[f64]) -> Self {
        let m = compiled.materialize(phi);
        let ln_q = m.ln_qt.iter().map(|l| l - m.ln_z).collect();
        Self {
            scope: compiled.scope.clone(),
            p: m.p.clone(),
            ln_p: m.ln_p.clone(),
            q: m.q.clone(),
            ln_q,
            ln_z: m.ln_z,
            model: Some((compiled, m)),
            cache: RefCell::default(),
        }
    }

    /// From an explicit joint and unnormalized target log-weights over the same scope.
    pub fn from_tables(scope: Scope, p: Vec<f64>, ln_qt: Vec<f64>) -> Self {
        let ln_z = crate::prob::sum::log_sum_exp(&ln_qt);
        let ln_q: Vec<f64> = ln_qt.iter().map(|l| l - ln_z).collect();
        Self {
            ln_p: p.iter().map(|v| v.ln()).collect(),
            q: ln_q.iter().map(|l| l.exp()).collect(),
            scope,
            p,
            ln_q,
            ln_z,
            model: None,
            cache: RefCell::default(),
        }
    }

    pub fn scope(&self) -> &Scope {
        &self.scope
    }

    fn atom(&self, atom: Atom) -> Rc<Vec<f64>> {
        if let Some(v) = self.cache.borrow().get(&atom) {
            return v.clone();
        }
        let full = self.scope.full_mask();
        let values = match atom {
            Atom::Actual(m) if m == full => self.ln_p.clone(),
            Atom::Actual(m) => ln_marginal(&self.scope, &self.p, m),
            Atom::Target(m) if m == full => self.ln_q.clone(),
            Atom::Target(m) => ln_marginal(&self.scope, &self.q, m),
            Atom::ActualFactor(i) => {
                let (c, m) = self.model.as_ref().expect("factor atoms need a compiled model");
                c.factor_ln(&c.actual[i], m)
            }
            Atom::TargetFactor(j) => {
                let (c, m) = self.model.as_ref().expect("factor atoms need a compiled model");
                c.factor_ln(&c.target[j], m)
            }
        };
        let rc = Rc::new(values);
        self.cache.borrow_mut().insert(atom, rc.clone());
        rc
    }

    /// Pointwise value of a form; may be infinite off the support of `p`.
    fn pointwise(&self, form: &LogForm) -> Vec<f64> {
        let mut f = vec![0.0; self.p.len()];
        for &(c, a) in form.terms() {
            let v = self.atom(a);
            for (fi, vi) in f.iter_mut().zip(v.iter()) {
                *fi += c * vi;
            }
        }
        f
    }

    pub fn expect(&self, form: &LogForm) -> Expectation {
        let f = self.pointwise(form);
        let mut acc = CompensatedSum::new();
        let mut divergent = false;
        for (&p, &v) in self.p.iter().zip(&f) {
            if p > 0.0 {
                if v.is_finite() {
                    acc.add(p * v);
                } else {
                    divergent = true;
                }
            }
        }
        Expectation {
            value: acc.value(),
            divergent,
        }
    }

    /// `∇_φ E_p[F]` over the compiled model's parameter vector.
    pub fn gradient(&self, form: &LogForm) -> Result<Vec<f64>> {
        let (c, m) = self.model.as_ref().expect("gradients need a compiled model");
        let f = self.pointwise(form);
        if self.p.iter().zip(&f).any(|(&p, v)| p > 0.0 && !v.is_finite()) {
            return Err(Error::Divergent("objective is infinite at these parameters".into()));
        }
        let mut acc = accumulators(c);
        let scatter = |acc: &mut Vec<Vec<CompensatedSum>>, source: &Source, idx: &[u32], w: &[f64]| {
            if let Source::Block(b) = source {
                for (&k, &wi) in idx.iter().zip(w) {
                    if wi != 0.0 {
                        acc[*b][k as usize].add(wi);
                    }
                }
            }
        };

        // score part: Σ p F ∇ln p
        let w: Vec<f64> = self
            .p
            .iter()
            .zip(&f)
            .map(|(&p, &v)| if p > 0.0 { p * v } else { 0.0 })
            .collect();
        for af in &c.actual {
            scatter(&mut acc, &af.source, &af.idx, &w);
        }

        // explicit dependence of target atoms on φ
        let mut wq = vec![0.0; self.p.len()];
        let mut any_q = false;
        for &(coef, atom) in form.terms() {
            match atom {
                Atom::Target(mask) => {
                    // Σ q (p_S/q_S − 1) ∇ln q̃
                    any_q = true;
                    let proj = self.scope.projection(mask);
                    let size = self.scope.mask_size(mask);
                    let ps = bucket_sums(&self.p, &proj, size);
                    let qs = bucket_sums(&self.q, &proj, size);
                    for (i, &b) in proj.iter().enumerate() {
                        let (pb, qb) = (ps[b as usize], qs[b as usize]);
                        let rho = if qb > 0.0 { pb / qb } else { 0.0 };
                        wq[i] += coef * self.q[i] * (rho - 1.0);
                    }
                }
                Atom::TargetFactor(j) => {
                    let tf = &c.target[j];
                    let wj: Vec<f64> = self.p.iter().map(|p| coef * p).collect();
                    scatter(&mut acc, &tf.source, &tf.idx, &wj);
                }
                Atom::Actual(_) | Atom::ActualFactor(_) => {}
            }
        }
        if any_q {
            for tf in &c.target {
                scatter(&mut acc, &tf.source, &tf.idx, &wq);
            }
        }

        Ok(finalize(c, m, &acc))
    }

    /// `Σ_ω p(ω) ∇ln p(ω)`, which vanishes identically.
    pub fn score_residual(&self) -> Vec<f64> {
        let (c, m) = self.model.as_ref().expect("gradients need a compiled model");
        let mut acc = accumulators(c);
        for af in &c.actual {
            if let Source::Block(b) = af.source {
                for (&k, &p) in af.idx.iter().zip(&self.p) {
                    acc[b][k as usize].add(p);
                }
            }
        }
        finalize(c, m, &acc)
    }
}

fn accumulators(c: &Compiled) -> Vec<Vec<CompensatedSum>> {
    c.blocks
        .iter()
        .map(|b| vec![CompensatedSum::new(); b.slices * b.card])
        .collect()
}

/// Per-slice log-softmax chain rule: from `A[k] = Σ w ∂/∂ln π_k` to logit gradients.
fn finalize(c: &Compiled, m: &Materialized, acc: &[Vec<CompensatedSum>]) -> Vec<f64> {
    let mut grad = vec![0.0; c.n_params];
    for (b, block) in c.blocks.iter().enumerate() {
        for s in 0..block.slices {
            let range = s * block.card..(s + 1) * block.card;
            let a: Vec<f64> = acc[b][range.clone()].iter().map(|x| x.value()).collect();
            let total: f64 = a.iter().sum();
            for (k, i) in range.enumerate() {
                grad[block.offset + i] = (a[k] - m.block_ln[b][i].exp() * total) / block.temperature;
            }
        }
    }
    grad
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::prob::{Role, VariableSpec};
    use crate::systems::{ActualSystem, FactorSpec, Model, TargetFactor, TargetSpec};

    fn model() -> Model {
        let vars = vec![
            VariableSpec::new("a", 2, Role::Action).unwrap(),
            VariableSpec::new("x", 3, Role::FutureInput).unwrap(),
        ];
        let sys = ActualSystem::new(
            vars,
            vec![
                FactorSpec::parameterized("a", &[], vec![0.3, -0.4]),
                FactorSpec::parameterized("x", &["a"], vec![0.2, -0.1, 0.5, 1.0, -2.0, 0.3]),
            ],
        )
        .unwrap();
        let target = TargetSpec::new(vec![
            TargetFactor::reward("r", &["x"], vec![0.0, 0.5, 1.5]),
            TargetFactor::conditional("back", &["x", "a"], vec![0.1, 0.2, -0.3, 0.4, 0.0, 0.9]),
        ])
        .unwrap();
        Model::new(sys, target).unwrap()
    }

    fn central(model: &Model, form: &LogForm, h: f64) -> Vec<f64> {
        let c = model.compile();
        let phi = model.parameters().values().to_vec();
        (0..phi.len())
            .map(|i| {
                let mut up = phi.clone();
                let mut dn = phi.clone();
                up[i] += h;
                dn[i] -= h;
                let fu = Evaluator::new(&c, &up).expect(form).value;
                let fd = Evaluator::new(&c, &dn).expect(form).value;
                (fu - fd) / (2.0 * h)
            })
            .collect()
    }

    #[test]
    fn gradient_matches_differences_for_every_atom() {
        let m = model();
        let c = m.compile();
        let full = c.scope.full_mask();
        let forms = [
            LogForm::new().plus(Atom::Actual(full)).minus(Atom::Target(full)),
            LogForm::new().plus(Atom::Actual(0b10)).minus(Atom::Target(0b01)),
            LogForm::new().plus(Atom::ActualFactor(1)).minus(Atom::TargetFactor(1)),
            LogForm::new().minus(Atom::TargetFactor(0)),
        ];
        for form in &forms {
            let g = Evaluator::new(&c, m.parameters().values()).gradient(form).unwrap();
            let fd = central(&m, form, 1e-5);
            for (a, b) in g.iter().zip(&fd) {
                assert!((a - b).abs() < 1e-8, "{form:?}: {a} vs {b}");
            }
        }
    }

    #[test]
    fn score_residual_vanishes() {
        let m = model();
        let c = m.compile();
        let r = Evaluator::new(&c, m.parameters().values()).score_residual();
        assert!(r.iter().all(|v| v.abs() < 1e-15));
    }

    #[test]
    fn forms_merge_and_cancel() {
        let mut f = LogForm::new().plus(Atom::Actual(1)).minus(Atom::Target(2));
        f.add_form(1.0, &LogForm::new().minus(Atom::Actual(1)).plus(Atom::Actual(0)));
        assert_eq!(f.terms(), &[(-1.0, Atom::Target(2))]);
    }

    #[test]
    fn divergence_is_flagged() {
        let scope = Scope::new(vec![VariableSpec::new("x", 2, Role::FutureInput).unwrap()]).unwrap();
        let e = Evaluator::from_tables(scope, vec![0.5, 0.5], vec![0.0, f64::NEG_INFINITY]);
        let kl = e.expect(&LogForm::new().plus(Atom::Actual(1)).minus(Atom::Target(1)));
        assert!(kl.divergent);
        assert!((kl.value - 0.5 * 0.5f64.ln()).abs() < 1e-15);
    }
}
