use crate::error::{Error, Result};
use crate::prob::table::MAX_OUTCOMES;
use crate::prob::{Assignment, Scope, TabularDistribution, VariableSpec};

use super::factor::{check_slices, FactorKind, FactorSpec};
use super::params::{check_values, softmax_slices, ParamCoord, ParameterVector};

const JOINT_TOL: f64 = 1e-10;

/// A directed acyclic factorization of the actual distribution, one factor per variable.
#[derive(Clone, Debug, PartialEq)]
pub struct ActualSystem {
    scope: Scope,
    /// Aligned with the scope's variables.
    factors: Vec<FactorSpec>,
    order: Vec<usize>,
}

impl ActualSystem {
    pub fn new(variables: Vec<VariableSpec>, factors: Vec<FactorSpec>) -> Result<Self> {
        let scope = Scope::new(variables)?;
        let mut slots: Vec<Option<FactorSpec>> = vec![None; scope.len()];
        for f in factors {
            let i = scope.position(&f.child)?;
            if slots[i].is_some() {
                return Err(invalid(&f.child, "more than one factor"));
            }
            slots[i] = Some(f);
        }
        let factors = slots
            .into_iter()
            .enumerate()
            .map(|(i, f)| f.ok_or_else(|| invalid(scope.vars()[i].name(), "no factor declared")))
            .collect::<Result<Vec<_>>>()?;
        let order = topological_order(&scope, &factors)?;
        let sys = Self {
            scope,
            factors,
            order,
        };
        for f in &sys.factors {
            sys.check_factor(f)?;
        }
        if !sys.factors.iter().any(FactorSpec::is_learnable) {
            return Err(Error::NoParameters);
        }
        Ok(sys)
    }

    fn check_factor(&self, f: &FactorSpec) -> Result<()> {
        let card = self.card(&f.child);
        let slices = self.slices(f);
        let n = slices * card;
        match &f.kind {
            FactorKind::Fixed { table } => {
                if table.len() != n {
                    return Err(invalid(&f.child, &format!("table has {} entries, expected {n}", table.len())));
                }
                check_slices(table, card).map_err(|r| invalid(&f.child, &r))
            }
            FactorKind::Parameterized {
                logits,
                temperature,
            } => {
                if logits.len() != n {
                    return Err(invalid(&f.child, &format!("{} logits, expected {n}", logits.len())));
                }
                if logits.iter().any(|l| !l.is_finite()) {
                    return Err(invalid(&f.child, "logits must be finite"));
                }
                if !(temperature.is_finite() && *temperature > 0.0) {
                    return Err(invalid(&f.child, "temperature must be positive"));
                }
                Ok(())
            }
            FactorKind::PointMass { selector } => {
                if selector.len() != slices {
                    return Err(invalid(&f.child, &format!("selector has {} entries, expected {slices}", selector.len())));
                }
                match selector.iter().find(|&&s| s >= card) {
                    Some(s) => Err(invalid(&f.child, &format!("selected outcome {s} out of range"))),
                    None => Ok(()),
                }
            }
            FactorKind::Shared { source } => {
                let src = self.factor(source)?;
                if !matches!(src.kind, FactorKind::Parameterized { .. } | FactorKind::PointMass { .. }) {
                    return Err(invalid(&f.child, &format!("source `{source}` is neither parameterized nor a point mass")));
                }
                let sig = |g: &FactorSpec| {
                    let mut c: Vec<usize> = g.parents.iter().map(|p| self.card(p)).collect();
                    c.push(self.card(&g.child));
                    c
                };
                if sig(src) != sig(f) {
                    return Err(invalid(&f.child, &format!("shape differs from source `{source}`")));
                }
                Ok(())
            }
        }
    }

    pub fn scope(&self) -> &Scope {
        &self.scope
    }

    pub fn variables(&self) -> &[VariableSpec] {
        self.scope.vars()
    }

    /// Factors in variable declaration order.
    pub fn factors(&self) -> &[FactorSpec] {
        &self.factors
    }

    pub fn factor(&self, child: &str) -> Result<&FactorSpec> {
        Ok(&self.factors[self.scope.position(child)?])
    }

    pub fn topological_order(&self) -> Vec<&str> {
        self.order.iter().map(|&i| self.scope.vars()[i].name()).collect()
    }

    fn card(&self, name: &str) -> usize {
        self.scope.vars()[self.scope.position(name).expect("validated name")].cardinality()
    }

    /// Number of parent slices of a factor.
    pub fn slices(&self, f: &FactorSpec) -> usize {
        f.parents.iter().map(|p| self.card(p)).product()
    }

    /// Conditional probabilities of `child`, parent slice outer, child outcome inner.
    pub fn conditional(&self, child: &str) -> Result<Vec<f64>> {
        let f = self.factor(child)?;
        let card = self.card(child);
        Ok(match &f.kind {
            FactorKind::Fixed { table } => table.clone(),
            FactorKind::Parameterized {
                logits,
                temperature,
            } => softmax_slices(logits, card, *temperature),
            FactorKind::PointMass { selector } => {
                let mut t = vec![0.0; selector.len() * card];
                for (s, &o) in selector.iter().enumerate() {
                    t[s * card + o] = 1.0;
                }
                t
            }
            FactorKind::Shared { source } => return self.conditional(source),
        })
    }

    /// Scope positions of a factor's parents followed by its child.
    pub(crate) fn factor_positions(&self, f: &FactorSpec) -> Vec<usize> {
        f.parents
            .iter()
            .chain(std::iter::once(&f.child))
            .map(|n| self.scope.position(n).expect("validated name"))
            .collect()
    }

    /// Materializes the joint by multiplying factor slices in topological order.
    pub fn build_joint(&self) -> Result<TabularDistribution> {
        self.joint_in(&self.order)
    }

    /// As [`build_joint`](Self::build_joint) with a caller-chosen topological order.
    pub fn build_joint_in_order<S: AsRef<str>>(&self, order: &[S]) -> Result<TabularDistribution> {
        let order = order
            .iter()
            .map(|n| self.scope.position(n.as_ref()))
            .collect::<Result<Vec<_>>>()?;
        let mut seen = vec![false; self.scope.len()];
        for &i in &order {
            let f = &self.factors[i];
            if seen[i] || f.parents.iter().any(|p| !seen[self.scope.position(p).unwrap()]) {
                return Err(Error::InvalidArgument(format!(
                    "`{}` is out of topological order",
                    f.child
                )));
            }
            seen[i] = true;
        }
        if seen.iter().any(|s| !s) {
            return Err(Error::InvalidArgument("order does not cover every variable".into()));
        }
        self.joint_in(&order)
    }

    fn joint_in(&self, order: &[usize]) -> Result<TabularDistribution> {
        if self.scope.size() > MAX_OUTCOMES {
            return Err(Error::Capacity(self.scope.size() as u128));
        }
        let mut probs = vec![1.0; self.scope.size()];
        for &i in order {
            let f = &self.factors[i];
            let table = self.conditional(&f.child)?;
            let idx = self.scope.index_vector(&self.factor_positions(f));
            for (p, &k) in probs.iter_mut().zip(&idx) {
                *p *= table[k as usize];
            }
        }
        let total = crate::prob::sum::compensated_sum(probs.iter().copied());
        if (total - 1.0).abs() > JOINT_TOL {
            return Err(Error::NotNormalized(total));
        }
        Ok(TabularDistribution::from_parts(self.scope.clone(), probs))
    }

    /// Do-substitution: each realized variable's factor becomes a parentless point mass.
    ///
    /// Factors sharing logits with a replaced factor inherit them, so the rest of the
    /// system is untouched.
    pub fn intervene(&self, realized: &Assignment) -> Result<Self> {
        realized.validate(self.scope.vars())?;
        let mut factors = self.factors.clone();
        for (name, value) in realized.iter() {
            let i = self.scope.position(name)?;
            let var = &self.scope.vars()[i];
            if !var.role().is_realizable() {
                return Err(Error::NotRealizable {
                    name: name.to_string(),
                    role: var.role().to_string(),
                });
            }
            let old = std::mem::replace(
                &mut factors[i],
                FactorSpec::point_mass(name, &[], vec![value]),
            );
            if let FactorKind::Parameterized { .. } = old.kind {
                let mut heir: Option<String> = None;
                for f in factors.iter_mut() {
                    if !matches!(&f.kind, FactorKind::Shared { source } if source == name) {
                        continue;
                    }
                    match &heir {
                        None => {
                            f.kind = old.kind.clone();
                            heir = Some(f.child.clone());
                        }
                        Some(h) => f.kind = FactorKind::Shared { source: h.clone() },
                    }
                }
            }
        }
        Self::new(self.scope.vars().to_vec(), factors)
    }

    /// Replaces the factor of `spec.child`.
    pub fn with_factor(&self, spec: FactorSpec) -> Result<Self> {
        let i = self.scope.position(&spec.child)?;
        let mut factors = self.factors.clone();
        factors[i] = spec;
        Self::new(self.scope.vars().to_vec(), factors)
    }

    /// Variables whose factors are point masses, in declaration order.
    pub fn point_mass_children(&self) -> Vec<&str> {
        self.factors
            .iter()
            .filter(|f| matches!(f.kind, FactorKind::PointMass { .. }))
            .map(|f| f.child.as_str())
            .collect()
    }

    pub(crate) fn parameter_layout(&self) -> Vec<(String, usize, usize)> {
        self.factors
            .iter()
            .filter(|f| matches!(f.kind, FactorKind::Parameterized { .. }))
            .map(|f| (format!("p/{}", f.child), self.slices(f), self.card(&f.child)))
            .collect()
    }

    pub fn parameter_count(&self) -> usize {
        self.parameter_layout().iter().map(|(_, s, c)| s * c).sum()
    }

    pub fn parameters(&self) -> ParameterVector {
        let mut values = Vec::new();
        let mut coords = Vec::new();
        for f in &self.factors {
            if let FactorKind::Parameterized { logits, .. } = &f.kind {
                let card = self.card(&f.child);
                values.extend_from_slice(logits);
                coords.extend((0..logits.len()).map(|k| ParamCoord {
                    block: format!("p/{}", f.child),
                    slice: k / card,
                    outcome: k % card,
                }));
            }
        }
        ParameterVector::from_parts(values, coords)
    }

    pub fn with_parameters(&self, phi: &[f64]) -> Result<Self> {
        check_values(phi, self.parameter_count())?;
        let mut out = self.clone();
        let mut offset = 0;
        for f in &mut out.factors {
            if let FactorKind::Parameterized { logits, .. } = &mut f.kind {
                let n = logits.len();
                logits.copy_from_slice(&phi[offset..offset + n]);
                offset += n;
            }
        }
        Ok(out)
    }
}

fn invalid(child: &str, reason: &str) -> Error {
    Error::InvalidFactor {
        child: child.to_string(),
        reason: reason.to_string(),
    }
}

/// Kahn's algorithm, preferring declaration order among ready variables.
fn topological_order(scope: &Scope, factors: &[FactorSpec]) -> Result<Vec<usize>> {
    let n = scope.len();
    let mut parents = Vec::with_capacity(n);
    for f in factors {
        let mut ps = Vec::with_capacity(f.parents.len());
        for p in &f.parents {
            let j = scope.position(p)?;
            if p == &f.child || ps.contains(&j) {
                return Err(invalid(&f.child, &format!("parent `{p}` repeated or self-referential")));
            }
            ps.push(j);
        }
        parents.push(ps);
    }
    let mut done = vec![false; n];
    let mut order = Vec::with_capacity(n);
    while order.len() < n {
        let next = (0..n).find(|&i| !done[i] && parents[i].iter().all(|&j| done[j]));
        match next {
            Some(i) => {
                done[i] = true;
                order.push(i);
            }
            None => {
                let stuck = (0..n).find(|&i| !done[i]).unwrap();
                return Err(Error::Cyclic(scope.vars()[stuck].name().to_string()));
            }
        }
    }
    Ok(order)
}
