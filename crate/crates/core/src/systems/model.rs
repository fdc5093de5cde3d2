use crate::error::{Error, Result};
use crate::prob::sum::log_sum_exp;
use crate::prob::{Scope, TabularDistribution, UnnormalizedTable, VarMask};

use super::actual::ActualSystem;
use super::factor::FactorKind;
use super::params::{check_values, log_softmax_slices, ParamCoord, ParameterVector};
use super::target::{TargetKind, TargetSpec};

const TARGET_SLICE_TOL: f64 = 1e-9;

/// An actual system paired with a target over the same variables. The parameter
/// vector covers actual logits (`p/…`) followed by target predictor logits (`q/…`).
#[derive(Clone, Debug, PartialEq)]
pub struct Model {
    system: ActualSystem,
    target: TargetSpec,
}

impl Model {
    pub fn new(system: ActualSystem, target: TargetSpec) -> Result<Self> {
        Compiled::new(&system, &target)?;
        Ok(Self { system, target })
    }

    pub fn system(&self) -> &ActualSystem {
        &self.system
    }

    pub fn target(&self) -> &TargetSpec {
        &self.target
    }

    pub fn scope(&self) -> &Scope {
        self.system.scope()
    }

    pub fn with_system(&self, system: ActualSystem) -> Result<Self> {
        Self::new(system, self.target.clone())
    }

    pub fn with_target(&self, target: TargetSpec) -> Result<Self> {
        Self::new(self.system.clone(), target)
    }

    pub(crate) fn compile(&self) -> Compiled {
        Compiled::new(&self.system, &self.target).expect("validated on construction")
    }

    pub fn parameter_count(&self) -> usize {
        self.compile().n_params
    }

    pub fn parameters(&self) -> ParameterVector {
        let mut values = self.system.parameters().values().to_vec();
        for f in self.target.factors() {
            if let TargetKind::Conditional { logits, .. } = &f.kind {
                values.extend_from_slice(logits);
            }
        }
        let coords = self
            .compile()
            .blocks
            .iter()
            .flat_map(|b| {
                (0..b.slices * b.card).map(move |k| ParamCoord {
                    block: b.name.clone(),
                    slice: k / b.card,
                    outcome: k % b.card,
                })
            })
            .collect();
        ParameterVector::from_parts(values, coords)
    }

    pub fn with_parameters(&self, phi: &[f64]) -> Result<Self> {
        check_values(phi, self.parameter_count())?;
        let n_actual = self.system.parameter_count();
        let system = self.system.with_parameters(&phi[..n_actual])?;
        let mut target = self.target.clone();
        let mut offset = n_actual;
        for f in target.factors_mut() {
            if let TargetKind::Conditional { logits, .. } = &mut f.kind {
                let n = logits.len();
                logits.copy_from_slice(&phi[offset..offset + n]);
                offset += n;
            }
        }
        Ok(Self { system, target })
    }

    pub fn joint(&self) -> Result<TabularDistribution> {
        self.system.build_joint()
    }

    pub fn target_table(&self) -> Result<UnnormalizedTable> {
        let c = self.compile();
        let m = c.materialize(self.parameters().values());
        UnnormalizedTable::from_log_weights(c.scope.clone(), &m.ln_qt)
    }
}

/// Pointwise product of all target factors over the system's variables.
pub fn build_target(target: &TargetSpec, system: &ActualSystem) -> Result<UnnormalizedTable> {
    Model::new(system.clone(), target.clone())?.target_table()
}

#[derive(Clone, Debug)]
pub(crate) struct Block {
    pub name: String,
    pub offset: usize,
    pub slices: usize,
    pub card: usize,
    pub temperature: f64,
}

#[derive(Clone, Debug)]
pub(crate) enum Source {
    /// Constant log-values (log-probabilities, log-weights, or rewards).
    Const(Vec<f64>),
    Block(usize),
}

#[derive(Clone, Debug)]
pub(crate) struct CompiledFactor {
    pub name: String,
    pub mask: VarMask,
    /// Index of each joint outcome into the factor's table.
    pub idx: Vec<u32>,
    pub source: Source,
}

/// Flat evaluation form of a model: every factor as an index vector over the joint
/// plus a constant log-table or a parameter block.
#[derive(Clone, Debug)]
pub(crate) struct Compiled {
    pub scope: Scope,
    pub blocks: Vec<Block>,
    /// One per variable, in variable order.
    pub actual: Vec<CompiledFactor>,
    pub target: Vec<CompiledFactor>,
    pub n_params: usize,
}

/// Compiled model evaluated at one parameter vector.
#[derive(Clone, Debug)]
pub(crate) struct Materialized {
    pub block_ln: Vec<Vec<f64>>,
    pub p: Vec<f64>,
    pub ln_p: Vec<f64>,
    /// Unnormalized target log-weights.
    pub ln_qt: Vec<f64>,
    pub q: Vec<f64>,
    pub ln_z: f64,
}

fn ln_table(t: &[f64]) -> Vec<f64> {
    t.iter().map(|v| v.ln()).collect()
}

fn declaration(msg: String) -> Error {
    Error::Declaration(msg)
}

impl Compiled {
    pub fn new(system: &ActualSystem, target: &TargetSpec) -> Result<Self> {
        let scope = system.scope().clone();
        let mut blocks = Vec::new();
        let mut offset = 0;
        let mut actual_block = vec![None; scope.len()];
        for (i, f) in system.factors().iter().enumerate() {
            if let FactorKind::Parameterized { temperature, .. } = f.kind {
                let card = scope.vars()[i].cardinality();
                let slices = system.slices(f);
                actual_block[i] = Some(blocks.len());
                blocks.push(Block {
                    name: format!("p/{}", f.child),
                    offset,
                    slices,
                    card,
                    temperature,
                });
                offset += slices * card;
            }
        }
        let mut actual = Vec::with_capacity(scope.len());
        for (i, f) in system.factors().iter().enumerate() {
            let positions = system.factor_positions(f);
            let source = match &f.kind {
                FactorKind::Parameterized { .. } => Source::Block(actual_block[i].unwrap()),
                FactorKind::Shared { source } => match actual_block[scope.position(source)?] {
                    Some(b) => Source::Block(b),
                    None => Source::Const(ln_table(&system.conditional(&f.child)?)),
                },
                _ => Source::Const(ln_table(&system.conditional(&f.child)?)),
            };
            actual.push(CompiledFactor {
                name: f.child.clone(),
                mask: positions.iter().fold(0, |m, &p| m | (1 << p)),
                idx: scope.index_vector(&positions),
                source,
            });
        }

        let mut compiled_target: Vec<CompiledFactor> = Vec::new();
        let mut target_block: Vec<(String, usize, Vec<usize>)> = Vec::new();
        // conditionals first so shared factors can refer to any of them
        for f in target.factors() {
            if let TargetKind::Conditional {
                logits,
                temperature,
            } = &f.kind
            {
                let positions = target_positions(&scope, &f.scope, &f.name)?;
                let cards: Vec<usize> = positions.iter().map(|&p| scope.vars()[p].cardinality()).collect();
                let size: usize = cards.iter().product();
                let card = *cards.last().unwrap();
                if logits.len() != size {
                    return Err(declaration(format!("`{}` has {} logits, expected {size}", f.name, logits.len())));
                }
                if logits.iter().any(|l| !l.is_finite()) || !(temperature.is_finite() && *temperature > 0.0) {
                    return Err(declaration(format!("`{}` has non-finite logits or bad temperature", f.name)));
                }
                target_block.push((f.name.clone(), blocks.len(), cards));
                blocks.push(Block {
                    name: format!("q/{}", f.name),
                    offset,
                    slices: size / card,
                    card,
                    temperature: *temperature,
                });
                offset += size;
            }
        }
        for f in target.factors() {
            let (positions, source) = match &f.kind {
                TargetKind::Tied { child } => {
                    let i = scope.position(child)?;
                    (system.factor_positions(&system.factors()[i]), actual[i].source.clone())
                }
                kind => {
                    let positions = target_positions(&scope, &f.scope, &f.name)?;
                    let cards: Vec<usize> = positions.iter().map(|&p| scope.vars()[p].cardinality()).collect();
                    let size: usize = cards.iter().product();
                    let check_len = |n: usize| {
                        if n == size {
                            Ok(())
                        } else {
                            Err(declaration(format!("`{}` has {n} entries, expected {size}", f.name)))
                        }
                    };
                    let source = match kind {
                        TargetKind::Table {
                            weights,
                            normalized,
                        } => {
                            check_len(weights.len())?;
                            if weights.iter().any(|w| !w.is_finite() || *w < 0.0) {
                                return Err(declaration(format!("`{}` has a negative or non-finite weight", f.name)));
                            }
                            if *normalized {
                                let card = *cards.last().unwrap();
                                for (s, slice) in weights.chunks(card).enumerate() {
                                    let total: f64 = slice.iter().sum();
                                    if (total - 1.0).abs() > TARGET_SLICE_TOL {
                                        return Err(Error::ConditionalNotNormalized { slice: s, sum: total });
                                    }
                                }
                            }
                            Source::Const(ln_table(weights))
                        }
                        TargetKind::Reward { values } => {
                            check_len(values.len())?;
                            if values.iter().any(|r| !r.is_finite()) {
                                return Err(declaration(format!("`{}` has a non-finite reward", f.name)));
                            }
                            Source::Const(values.clone())
                        }
                        TargetKind::Conditional { .. } => {
                            let b = target_block.iter().find(|(n, ..)| n == &f.name).unwrap().1;
                            Source::Block(b)
                        }
                        TargetKind::SharedConditional { source } => {
                            let (_, b, src_cards) = target_block
                                .iter()
                                .find(|(n, ..)| n == source)
                                .ok_or_else(|| declaration(format!("`{}` shares unknown conditional `{source}`", f.name)))?;
                            if src_cards != &cards {
                                return Err(declaration(format!("`{}` differs in shape from `{source}`", f.name)));
                            }
                            Source::Block(*b)
                        }
                        TargetKind::Tied { .. } => unreachable!(),
                    };
                    (positions, source)
                }
            };
            compiled_target.push(CompiledFactor {
                name: f.name.clone(),
                mask: positions.iter().fold(0, |m, &p| m | (1 << p)),
                idx: scope.index_vector(&positions),
                source,
            });
        }
        let compiled = Self {
            scope,
            blocks,
            actual,
            target: compiled_target,
            n_params: offset,
        };
        // the target must be normalizable at the current parameters
        let m = compiled.materialize(&vec![0.0; offset]);
        if m.ln_z == f64::NEG_INFINITY {
            return Err(Error::ZeroMass);
        }
        Ok(compiled)
    }

    pub fn materialize(&self, phi: &[f64]) -> Materialized {
        debug_assert_eq!(phi.len(), self.n_params);
        let block_ln: Vec<Vec<f64>> = self
            .blocks
            .iter()
            .map(|b| log_softmax_slices(&phi[b.offset..b.offset + b.slices * b.card], b.card, b.temperature))
            .collect();
        let n = self.scope.size();
        let accumulate = |factors: &[CompiledFactor]| {
            let mut acc = vec![0.0; n];
            for f in factors {
                let table = match &f.source {
                    Source::Const(t) => t,
                    Source::Block(b) => &block_ln[*b],
                };
                for (a, &k) in acc.iter_mut().zip(&f.idx) {
                    *a += table[k as usize];
                }
            }
            acc
        };
        let ln_p = accumulate(&self.actual);
        let ln_qt = accumulate(&self.target);
        let ln_z = log_sum_exp(&ln_qt);
        let p = ln_p.iter().map(|l| l.exp()).collect();
        let q = ln_qt.iter().map(|l| (l - ln_z).exp()).collect();
        Materialized {
            block_ln,
            p,
            ln_p,
            ln_qt,
            q,
            ln_z,
        }
    }

    /// Log-value of a factor at every joint outcome.
    pub fn factor_ln(&self, f: &CompiledFactor, m: &Materialized) -> Vec<f64> {
        let table = match &f.source {
            Source::Const(t) => t,
            Source::Block(b) => &m.block_ln[*b],
        };
        f.idx.iter().map(|&k| table[k as usize]).collect()
    }

    pub fn target_index(&self, name: &str) -> Option<usize> {
        self.target.iter().position(|f| f.name == name)
    }
}

fn target_positions(scope: &Scope, names: &[String], factor: &str) -> Result<Vec<usize>> {
    if names.is_empty() {
        return Err(declaration(format!("target factor `{factor}` has an empty scope")));
    }
    let mut positions = Vec::with_capacity(names.len());
    for n in names {
        let p = scope.position(n)?;
        if positions.contains(&p) {
            return Err(declaration(format!("`{n}` repeated in target factor `{factor}`")));
        }
        positions.push(p);
    }
    Ok(positions)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::prob::{Role, VariableSpec};
    use crate::systems::{FactorSpec, TargetFactor};

    fn binary(name: &str, role: Role) -> VariableSpec {
        VariableSpec::new(name, 2, role).unwrap()
    }

    fn one_var() -> ActualSystem {
        ActualSystem::new(
            vec![binary("x", Role::FutureInput)],
            vec![FactorSpec::parameterized("x", &[], vec![0.0, 0.0])],
        )
        .unwrap()
    }

    #[test]
    fn normalized_prior_has_zero_log_partition() {
        let t = TargetSpec::new(vec![TargetFactor::table("prior", &["x"], vec![0.3, 0.7], true)]).unwrap();
        let table = build_target(&t, &one_var()).unwrap();
        assert!(table.log_partition().abs() < 1e-15);
        assert!((table.weights()[1] - 0.7).abs() < 1e-15);
    }

    #[test]
    fn reward_potential_normalizes_to_softmax() {
        let t = TargetSpec::new(vec![TargetFactor::reward("r", &["x"], vec![0.0, 3f64.ln()])]).unwrap();
        let q = build_target(&t, &one_var()).unwrap().normalized_probs();
        assert!((q[0] - 0.25).abs() < 1e-15 && (q[1] - 0.75).abs() < 1e-15);
    }

    #[test]
    fn prior_times_likelihood_is_bayes_joint() {
        let sys = ActualSystem::new(
            vec![binary("w", Role::Parameter), binary("y", Role::PastInput)],
            vec![
                FactorSpec::parameterized("w", &[], vec![0.0, 0.0]),
                FactorSpec::fixed("y", &[], vec![1.0, 0.0]),
            ],
        )
        .unwrap();
        let t = TargetSpec::new(vec![
            TargetFactor::table("prior", &["w"], vec![0.4, 0.6], true),
            TargetFactor::table("lik", &["w", "y"], vec![0.9, 0.1, 0.2, 0.8], true),
        ])
        .unwrap();
        let table = build_target(&t, &sys).unwrap();
        let expected = [0.36, 0.04, 0.12, 0.48];
        for (w, e) in table.weights().iter().zip(expected) {
            assert!((w - e).abs() < 1e-15);
        }
        assert!(table.log_partition().abs() < 1e-15);
    }

    #[test]
    fn compiled_joint_matches_direct_product() {
        let sys = ActualSystem::new(
            vec![binary("a", Role::Action), VariableSpec::new("x", 3, Role::FutureInput).unwrap()],
            vec![
                FactorSpec::parameterized("a", &[], vec![0.4, -0.1]),
                FactorSpec::parameterized("x", &["a"], vec![0.1, 0.2, 0.3, -1.0, 0.0, 2.0]),
            ],
        )
        .unwrap();
        let model = Model::new(sys, TargetSpec::default()).unwrap();
        let c = model.compile();
        let m = c.materialize(model.parameters().values());
        for (a, b) in m.p.iter().zip(model.joint().unwrap().probs()) {
            assert!((a - b).abs() < 1e-15);
        }
        assert!((m.ln_z - 6f64.ln()).abs() < 1e-15);
    }

    #[test]
    fn target_parameters_follow_actual_ones() {
        let t = TargetSpec::new(vec![TargetFactor::conditional("dec", &["x"], vec![1.0, 2.0])]).unwrap();
        let model = Model::new(one_var(), t).unwrap();
        let phi = model.parameters();
        assert_eq!(phi.values(), &[0.0, 0.0, 1.0, 2.0]);
        assert_eq!(phi.describe(3), "q/dec[0][1]");
        let moved = model.with_parameters(&[1.0, 2.0, 3.0, 4.0]).unwrap();
        assert_eq!(moved.parameters().values(), &[1.0, 2.0, 3.0, 4.0]);
    }

    #[test]
    fn rejects_bad_targets() {
        let sys = one_var();
        let zero = TargetSpec::new(vec![TargetFactor::table("z", &["x"], vec![0.0, 0.0], false)]).unwrap();
        assert!(matches!(Model::new(sys.clone(), zero), Err(Error::ZeroMass)));
        let unknown = TargetSpec::new(vec![TargetFactor::table("u", &["y"], vec![1.0, 1.0], false)]).unwrap();
        assert!(matches!(Model::new(sys.clone(), unknown), Err(Error::UnknownVariable(_))));
        let unnormalized = TargetSpec::new(vec![TargetFactor::table("n", &["x"], vec![0.5, 0.6], true)]).unwrap();
        assert!(Model::new(sys.clone(), unnormalized).is_err());
        assert!(TargetSpec::new(vec![
            TargetFactor::reward("r", &["x"], vec![0.0, 0.0]),
            TargetFactor::reward("r", &["x"], vec![0.0, 0.0]),
        ])
        .is_err());
    }
}
