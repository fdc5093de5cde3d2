use crate::error::{Error, Result};
use crate::prob::sum::{compensated_sum, log_sum_exp, CompensatedSum};
use crate::prob::variable::{Assignment, VariableSpec};

/// Largest product outcome space the enumerator accepts.
pub const MAX_OUTCOMES: usize = 1 << 22;

/// Tolerance on the total mass of a [`TabularDistribution`].
pub const NORMALIZATION_TOL: f64 = 1e-12;

/// Bit set over variable positions within a [`Scope`].
pub type VarMask = u64;

/// Ordered list of variables with row-major strides (last variable fastest).
#[derive(Clone, Debug, PartialEq)]
pub struct Scope {
    vars: Vec<VariableSpec>,
    strides: Vec<usize>,
    size: usize,
}

impl Scope {
    pub fn new(vars: Vec<VariableSpec>) -> Result<Self> {
        if vars.len() > 64 {
            return Err(Error::InvalidArgument(format!(
                "scope of {} variables exceeds 64",
                vars.len()
            )));
        }
        for (i, v) in vars.iter().enumerate() {
            v.validate()?;
            if vars[..i].iter().any(|w| w.name() == v.name()) {
                return Err(Error::DuplicateVariable(v.name().to_string()));
            }
        }
        let total: u128 = vars.iter().map(|v| v.cardinality() as u128).product();
        if total > MAX_OUTCOMES as u128 {
            return Err(Error::Capacity(total));
        }
        let mut strides = vec![1usize; vars.len()];
        for i in (0..vars.len().saturating_sub(1)).rev() {
            strides[i] = strides[i + 1] * vars[i + 1].cardinality();
        }
        Ok(Self {
            vars,
            strides,
            size: total as usize,
        })
    }

    pub fn empty() -> Self {
        Self {
            vars: Vec::new(),
            strides: Vec::new(),
            size: 1,
        }
    }

    pub fn vars(&self) -> &[VariableSpec] {
        &self.vars
    }

    pub fn len(&self) -> usize {
        self.vars.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vars.is_empty()
    }

    /// Number of joint outcomes.
    pub fn size(&self) -> usize {
        self.size
    }

    pub fn position(&self, name: &str) -> Result<usize> {
        self.vars
            .iter()
            .position(|v| v.name() == name)
            .ok_or_else(|| Error::UnknownVariable(name.to_string()))
    }

    pub fn mask<S: AsRef<str>>(&self, names: &[S]) -> Result<VarMask> {
        names
            .iter()
            .try_fold(0, |m, n| Ok(m | (1 << self.position(n.as_ref())?)))
    }

    pub fn full_mask(&self) -> VarMask {
        if self.vars.len() == 64 {
            u64::MAX
        } else {
            (1u64 << self.vars.len()) - 1
        }
    }

    pub fn mask_where(&self, pred: impl Fn(&VariableSpec) -> bool) -> VarMask {
        self.vars
            .iter()
            .enumerate()
            .filter(|(_, v)| pred(v))
            .fold(0, |m, (i, _)| m | (1 << i))
    }

    pub fn positions(&self, mask: VarMask) -> Vec<usize> {
        (0..self.vars.len()).filter(|i| mask & (1 << i) != 0).collect()
    }

    pub fn names(&self, mask: VarMask) -> Vec<&str> {
        self.positions(mask)
            .into_iter()
            .map(|i| self.vars[i].name())
            .collect()
    }

    #[inline]
    pub fn digit(&self, flat: usize, pos: usize) -> usize {
        (flat / self.strides[pos]) % self.vars[pos].cardinality()
    }

    pub fn flat_index(&self, assignment: &Assignment) -> Result<usize> {
        assignment.validate(&self.vars)?;
        self.vars.iter().zip(&self.strides).try_fold(0, |acc, (v, s)| {
            let d = assignment
                .get(v.name())
                .ok_or_else(|| Error::InvalidArgument(format!("`{}` is unbound", v.name())))?;
            Ok(acc + d * s)
        })
    }

    /// Scope restricted to `mask`, preserving order.
    pub fn sub_scope(&self, mask: VarMask) -> Scope {
        let vars = self
            .positions(mask)
            .into_iter()
            .map(|i| self.vars[i].clone())
            .collect();
        Scope::new(vars).expect("sub-scope of a valid scope is valid")
    }

    /// For every joint outcome, the row-major index over the variables at `positions`
    /// taken in the given order.
    pub fn index_vector(&self, positions: &[usize]) -> Vec<u32> {
        let mut weights = vec![0usize; self.vars.len()];
        let mut w = 1usize;
        for &p in positions.iter().rev() {
            weights[p] += w;
            w *= self.vars[p].cardinality();
        }
        let mut out = Vec::with_capacity(self.size);
        let mut digits = vec![0usize; self.vars.len()];
        let mut idx = 0usize;
        for _ in 0..self.size {
            out.push(idx as u32);
            // odometer increment, last variable fastest
            for i in (0..self.vars.len()).rev() {
                digits[i] += 1;
                idx += weights[i];
                if digits[i] < self.vars[i].cardinality() {
                    break;
                }
                idx -= weights[i] * digits[i];
                digits[i] = 0;
            }
        }
        out
    }

    /// Index of each joint outcome within the sub-scope of `mask`.
    pub fn projection(&self, mask: VarMask) -> Vec<u32> {
        self.index_vector(&self.positions(mask))
    }

    pub fn mask_size(&self, mask: VarMask) -> usize {
        self.positions(mask)
            .into_iter()
            .map(|i| self.vars[i].cardinality())
            .product()
    }
}

/// Sums `values` into buckets given by `projection`, with compensation.
pub(crate) fn bucket_sums(values: &[f64], projection: &[u32], buckets: usize) -> Vec<f64> {
    let mut acc = vec![CompensatedSum::new(); buckets];
    for (v, &b) in values.iter().zip(projection) {
        if *v != 0.0 {
            acc[b as usize].add(*v);
        }
    }
    acc.into_iter().map(|a| a.value()).collect()
}

fn check_entries(values: &[f64]) -> Result<()> {
    match values.iter().position(|v| !v.is_finite() || *v < 0.0) {
        Some(index) => Err(Error::InvalidEntry { index }),
        None => Ok(()),
    }
}

/// Explicit normalized probability table over a non-empty scope.
#[derive(Clone, Debug, PartialEq)]
pub struct TabularDistribution {
    scope: Scope,
    probs: Vec<f64>,
}

impl TabularDistribution {
    pub fn new(vars: Vec<VariableSpec>, probs: Vec<f64>) -> Result<Self> {
        if vars.is_empty() {
            return Err(Error::EmptySet);
        }
        let scope = Scope::new(vars)?;
        if probs.len() != scope.size() {
            return Err(Error::TableLength {
                got: probs.len(),
                expected: scope.size(),
            });
        }
        check_entries(&probs)?;
        let total = compensated_sum(probs.iter().copied());
        if (total - 1.0).abs() > NORMALIZATION_TOL {
            return Err(Error::NotNormalized(total));
        }
        Ok(Self { scope, probs })
    }

    /// Normalizes non-negative weights.
    pub fn from_weights(vars: Vec<VariableSpec>, weights: Vec<f64>) -> Result<Self> {
        let table = UnnormalizedTable::new(vars, weights)?;
        Ok(table.normalized())
    }

    pub fn uniform(vars: Vec<VariableSpec>) -> Result<Self> {
        let n: usize = vars.iter().map(|v| v.cardinality()).product();
        Self::from_weights(vars, vec![1.0; n])
    }

    pub(crate) fn from_parts(scope: Scope, probs: Vec<f64>) -> Self {
        debug_assert_eq!(scope.size(), probs.len());
        Self { scope, probs }
    }

    pub fn scope(&self) -> &Scope {
        &self.scope
    }

    pub fn vars(&self) -> &[VariableSpec] {
        self.scope.vars()
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    pub fn prob(&self, outcome: &Assignment) -> Result<f64> {
        Ok(self.probs[self.scope.flat_index(outcome)?])
    }

    /// Mass over the variables in `keep`; dropped variables are summed out.
    pub fn marginalize<S: AsRef<str>>(&self, keep: &[S]) -> Result<TabularDistribution> {
        if keep.is_empty() {
            return Err(Error::EmptySet);
        }
        let mask = self.scope.mask(keep)?;
        Ok(self.marginalize_mask(mask))
    }

    pub(crate) fn marginalize_mask(&self, mask: VarMask) -> TabularDistribution {
        let sub = self.scope.sub_scope(mask);
        let proj = self.scope.projection(mask);
        let probs = bucket_sums(&self.probs, &proj, sub.size());
        TabularDistribution::from_parts(sub, probs)
    }

    /// Renormalized slice at `evidence`; evidence variables leave the scope.
    pub fn condition(&self, evidence: &Assignment) -> Result<TabularDistribution> {
        let (scope, probs) = condition_raw(&self.scope, &self.probs, evidence)?;
        if scope.is_empty() {
            return Err(Error::EmptySet);
        }
        Ok(TabularDistribution::from_parts(scope, probs))
    }
}

/// Conditioning on arbitrary tables; the result may have an empty scope.
pub(crate) fn condition_raw(
    scope: &Scope,
    values: &[f64],
    evidence: &Assignment,
) -> Result<(Scope, Vec<f64>)> {
    evidence.validate(scope.vars())?;
    let bound: Vec<(usize, usize)> = evidence
        .iter()
        .map(|(n, o)| Ok((scope.position(n)?, o)))
        .collect::<Result<_>>()?;
    let evidence_mask = bound.iter().fold(0u64, |m, (p, _)| m | (1 << p));
    let keep = scope.full_mask() & !evidence_mask;
    let sub = scope.sub_scope(keep);
    let proj = scope.projection(keep);
    let mut acc = vec![CompensatedSum::new(); sub.size()];
    for (flat, (&v, &b)) in values.iter().zip(&proj).enumerate() {
        if v != 0.0 && bound.iter().all(|&(p, o)| scope.digit(flat, p) == o) {
            acc[b as usize].add(v);
        }
    }
    let slice: Vec<f64> = acc.into_iter().map(|a| a.value()).collect();
    let mass = compensated_sum(slice.iter().copied());
    if mass <= 0.0 {
        return Err(Error::ConditioningOnNull);
    }
    Ok((sub, slice.into_iter().map(|v| v / mass).collect()))
}

/// Non-negative weights with a cached log-partition.
#[derive(Clone, Debug, PartialEq)]
pub struct UnnormalizedTable {
    scope: Scope,
    weights: Vec<f64>,
    log_partition: f64,
}

impl UnnormalizedTable {
    pub fn new(vars: Vec<VariableSpec>, weights: Vec<f64>) -> Result<Self> {
        if vars.is_empty() {
            return Err(Error::EmptySet);
        }
        let scope = Scope::new(vars)?;
        Self::from_scope(scope, weights)
    }

    pub(crate) fn from_scope(scope: Scope, weights: Vec<f64>) -> Result<Self> {
        if weights.len() != scope.size() {
            return Err(Error::TableLength {
                got: weights.len(),
                expected: scope.size(),
            });
        }
        check_entries(&weights)?;
        let total = compensated_sum(weights.iter().copied());
        if total <= 0.0 {
            return Err(Error::ZeroMass);
        }
        Ok(Self {
            scope,
            weights,
            log_partition: total.ln(),
        })
    }

    /// Builds the table from log-weights (`-inf` for zero weight).
    pub(crate) fn from_log_weights(scope: Scope, log_weights: &[f64]) -> Result<Self> {
        let log_partition = log_sum_exp(log_weights);
        if log_partition == f64::NEG_INFINITY {
            return Err(Error::ZeroMass);
        }
        if !log_partition.is_finite() {
            return Err(Error::InvalidEntry { index: 0 });
        }
        let weights: Vec<f64> = log_weights.iter().map(|l| l.exp()).collect();
        check_entries(&weights)?;
        Ok(Self {
            scope,
            weights,
            log_partition,
        })
    }

    pub fn from_distribution(dist: &TabularDistribution) -> Self {
        Self {
            scope: dist.scope().clone(),
            weights: dist.probs().to_vec(),
            log_partition: compensated_sum(dist.probs().iter().copied()).ln(),
        }
    }

    pub fn scope(&self) -> &Scope {
        &self.scope
    }

    pub fn vars(&self) -> &[VariableSpec] {
        self.scope.vars()
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn log_partition(&self) -> f64 {
        self.log_partition
    }

    pub fn normalized_probs(&self) -> Vec<f64> {
        let z = self.log_partition.exp();
        self.weights.iter().map(|w| w / z).collect()
    }

    pub fn normalized(&self) -> TabularDistribution {
        TabularDistribution::from_parts(self.scope.clone(), self.normalized_probs())
    }
}

/// Conditional table `q(targets | conditions)`, conditions outer and targets inner,
/// each row-major.
#[derive(Clone, Debug, PartialEq)]
pub struct ConditionalTable {
    targets: Vec<VariableSpec>,
    conditions: Vec<VariableSpec>,
    values: Vec<f64>,
}

impl ConditionalTable {
    pub const SLICE_TOL: f64 = 1e-9;

    pub fn new(
        targets: Vec<VariableSpec>,
        conditions: Vec<VariableSpec>,
        values: Vec<f64>,
    ) -> Result<Self> {
        if targets.is_empty() {
            return Err(Error::EmptySet);
        }
        let inner: usize = targets.iter().map(|v| v.cardinality()).product();
        let outer: usize = conditions.iter().map(|v| v.cardinality()).product();
        if values.len() != inner * outer {
            return Err(Error::TableLength {
                got: values.len(),
                expected: inner * outer,
            });
        }
        check_entries(&values)?;
        for (slice, chunk) in values.chunks(inner).enumerate() {
            let sum = compensated_sum(chunk.iter().copied());
            if (sum - 1.0).abs() > Self::SLICE_TOL {
                return Err(Error::ConditionalNotNormalized { slice, sum });
            }
        }
        Ok(Self {
            targets,
            conditions,
            values,
        })
    }

    /// Exact conditional of `dist`; zero-mass condition slices become uniform.
    pub fn from_distribution<S: AsRef<str>>(
        dist: &TabularDistribution,
        targets: &[S],
        conditions: &[S],
    ) -> Result<Self> {
        let scope = dist.scope();
        let tmask = scope.mask(targets)?;
        let cmask = scope.mask(conditions)?;
        if tmask == 0 {
            return Err(Error::EmptySet);
        }
        if tmask & cmask != 0 {
            let shared = scope.names(tmask & cmask)[0].to_string();
            return Err(Error::Overlap(shared));
        }
        let tpos: Vec<usize> = targets.iter().map(|n| scope.position(n.as_ref())).collect::<Result<_>>()?;
        let cpos: Vec<usize> = conditions.iter().map(|n| scope.position(n.as_ref())).collect::<Result<_>>()?;
        let mut order = cpos.clone();
        order.extend(&tpos);
        let idx = scope.index_vector(&order);
        let inner: usize = tpos.iter().map(|&p| scope.vars()[p].cardinality()).product();
        let outer: usize = cpos.iter().map(|&p| scope.vars()[p].cardinality()).product();
        let mut joint = bucket_sums(dist.probs(), &idx, inner * outer);
        for chunk in joint.chunks_mut(inner) {
            let mass = compensated_sum(chunk.iter().copied());
            if mass > 0.0 {
                chunk.iter_mut().for_each(|v| *v /= mass);
            } else {
                chunk.iter_mut().for_each(|v| *v = 1.0 / inner as f64);
            }
        }
        let pick = |pos: &[usize]| pos.iter().map(|&p| scope.vars()[p].clone()).collect();
        Ok(Self {
            targets: pick(&tpos),
            conditions: pick(&cpos),
            values: joint,
        })
    }

    pub fn targets(&self) -> &[VariableSpec] {
        &self.targets
    }

    pub fn conditions(&self) -> &[VariableSpec] {
        &self.conditions
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::prob::variable::Role;

    fn bin(name: &str) -> VariableSpec {
        VariableSpec::new(name, 2, Role::PastInput).unwrap()
    }

    fn grid() -> TabularDistribution {
        TabularDistribution::new(vec![bin("a"), bin("b")], vec![0.1, 0.2, 0.3, 0.4]).unwrap()
    }

    #[test]
    fn marginalize_row_sums() {
        let m = grid().marginalize(&["a"]).unwrap();
        assert!((m.probs()[0] - 0.3).abs() < 1e-15);
        assert!((m.probs()[1] - 0.7).abs() < 1e-15);
    }

    #[test]
    fn marginalize_full_scope_is_identity() {
        let d = grid();
        assert_eq!(d.marginalize(&["a", "b"]).unwrap(), d);
    }

    #[test]
    fn marginalize_independent_uniform() {
        let d = TabularDistribution::uniform(vec![bin("x"), bin("z")]).unwrap();
        assert_eq!(d.marginalize(&["x"]).unwrap().probs(), &[0.5, 0.5]);
    }

    #[test]
    fn marginalize_errors() {
        assert_eq!(grid().marginalize::<&str>(&[]), Err(Error::EmptySet));
        assert!(matches!(grid().marginalize(&["c"]), Err(Error::UnknownVariable(_))));
    }

    #[test]
    fn condition_renormalizes_slice() {
        let c = grid().condition(&Assignment::new().with("a", 1)).unwrap();
        assert_eq!(c.vars()[0].name(), "b");
        assert!((c.probs()[0] - 0.3 / 0.7).abs() < 1e-15);
        assert!((c.probs()[1] - 0.4 / 0.7).abs() < 1e-15);
    }

    #[test]
    fn condition_on_independent_keeps_marginal() {
        let d = TabularDistribution::new(vec![bin("x"), bin("z")], vec![0.12, 0.28, 0.18, 0.42])
            .unwrap();
        let c = d.condition(&Assignment::new().with("x", 0)).unwrap();
        assert!((c.probs()[0] - 0.3).abs() < 1e-12);
    }

    #[test]
    fn condition_on_null_event() {
        let d = TabularDistribution::new(vec![bin("a"), bin("b")], vec![0.5, 0.5, 0.0, 0.0])
            .unwrap();
        assert_eq!(
            d.condition(&Assignment::new().with("a", 1)),
            Err(Error::ConditioningOnNull)
        );
    }

    #[test]
    fn rejects_bad_tables() {
        assert!(matches!(
            TabularDistribution::new(vec![bin("a")], vec![0.5, 0.6]),
            Err(Error::NotNormalized(_))
        ));
        assert!(matches!(
            TabularDistribution::new(vec![bin("a")], vec![-0.5, 1.5]),
            Err(Error::InvalidEntry { .. })
        ));
        assert_eq!(
            UnnormalizedTable::new(vec![bin("a")], vec![0.0, 0.0]),
            Err(Error::ZeroMass)
        );
    }

    #[test]
    fn capacity_cap() {
        let vars: Vec<_> = (0..23).map(|i| bin(&format!("v{i}"))).collect();
        assert!(matches!(Scope::new(vars), Err(Error::Capacity(_))));
    }

    #[test]
    fn index_vector_reorders() {
        let s = Scope::new(vec![bin("a"), VariableSpec::new("b", 3, Role::Action).unwrap()]).unwrap();
        // order (b, a): index = b*2 + a
        let idx = s.index_vector(&[1, 0]);
        assert_eq!(idx, vec![0, 2, 4, 1, 3, 5]);
        assert_eq!(s.projection(0b10), vec![0, 1, 2, 0, 1, 2]);
    }

    #[test]
    fn conditional_slices_checked() {
        let err = ConditionalTable::new(vec![bin("x")], vec![bin("z")], vec![0.5, 0.5, 0.2, 0.7]);
        assert!(matches!(err, Err(Error::ConditionalNotNormalized { slice: 1, .. })));
    }
}
