use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// What a variable stands for in the agent-environment system.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Role {
    PastInput,
    FutureInput,
    Action,
    Skill,
    LatentState,
    Parameter,
}

impl Role {
    pub fn is_input(self) -> bool {
        matches!(self, Role::PastInput | Role::FutureInput)
    }

    pub fn is_latent(self) -> bool {
        !self.is_input()
    }

    /// Actions, skills and past inputs can take realized values; latent states and
    /// parameters are never observed.
    pub fn is_realizable(self) -> bool {
        matches!(self, Role::Action | Role::Skill | Role::PastInput)
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Role::PastInput => "past-input",
            Role::FutureInput => "future-input",
            Role::Action => "action",
            Role::Skill => "skill",
            Role::LatentState => "latent-state",
            Role::Parameter => "parameter",
        }
    }
}

impl fmt::Display for Role {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// A named finite variable.
///
/// `step` is the optional time index used by the per-step objective terms; variables
/// without a step are treated as global (parameters, skills spanning the episode).
#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VariableSpec {
    name: String,
    cardinality: usize,
    role: Role,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    step: Option<usize>,
}

impl VariableSpec {
    pub fn new(name: impl Into<String>, cardinality: usize, role: Role) -> Result<Self> {
        let name = name.into();
        if name.is_empty() {
            return Err(Error::InvalidVariable {
                name,
                reason: "name must not be empty".into(),
            });
        }
        if cardinality == 0 {
            return Err(Error::InvalidVariable {
                name,
                reason: "cardinality must be at least 1".into(),
            });
        }
        Ok(Self {
            name,
            cardinality,
            role,
            step: None,
        })
    }

    pub fn at_step(mut self, step: usize) -> Self {
        self.step = Some(step);
        self
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn cardinality(&self) -> usize {
        self.cardinality
    }

    pub fn role(&self) -> Role {
        self.role
    }

    pub fn step(&self) -> Option<usize> {
        self.step
    }

    pub(crate) fn validate(&self) -> Result<()> {
        Self::new(self.name.clone(), self.cardinality, self.role).map(|_| ())
    }
}

/// Concrete outcome indices for a subset of variables.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Assignment {
    bindings: BTreeMap<String, usize>,
}

impl Assignment {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn with(mut self, name: impl Into<String>, outcome: usize) -> Self {
        self.bindings.insert(name.into(), outcome);
        self
    }

    pub fn insert(&mut self, name: impl Into<String>, outcome: usize) {
        self.bindings.insert(name.into(), outcome);
    }

    pub fn get(&self, name: &str) -> Option<usize> {
        self.bindings.get(name).copied()
    }

    pub fn is_empty(&self) -> bool {
        self.bindings.is_empty()
    }

    pub fn len(&self) -> usize {
        self.bindings.len()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, usize)> {
        self.bindings.iter().map(|(k, v)| (k.as_str(), *v))
    }

    /// Checks every binding names a variable in `vars` and is within range.
    pub fn validate(&self, vars: &[VariableSpec]) -> Result<()> {
        for (name, &index) in &self.bindings {
            let var = vars
                .iter()
                .find(|v| v.name() == name)
                .ok_or_else(|| Error::UnknownVariable(name.clone()))?;
            if index >= var.cardinality() {
                return Err(Error::OutcomeOutOfRange {
                    variable: name.clone(),
                    index,
                    cardinality: var.cardinality(),
                });
            }
        }
        Ok(())
    }
}

impl<S: Into<String>> FromIterator<(S, usize)> for Assignment {
    fn from_iter<I: IntoIterator<Item = (S, usize)>>(iter: I) -> Self {
        Self {
            bindings: iter.into_iter().map(|(k, v)| (k.into(), v)).collect(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_cardinality_is_rejected() {
        assert!(VariableSpec::new("x", 0, Role::PastInput).is_err());
        assert!(VariableSpec::new("", 2, Role::PastInput).is_err());
    }

    #[test]
    fn assignment_range_check() {
        let vars = vec![VariableSpec::new("x", 2, Role::PastInput).unwrap()];
        assert!(Assignment::new().with("x", 1).validate(&vars).is_ok());
        assert!(matches!(
            Assignment::new().with("x", 2).validate(&vars),
            Err(Error::OutcomeOutOfRange { .. })
        ));
        assert!(matches!(
            Assignment::new().with("y", 0).validate(&vars),
            Err(Error::UnknownVariable(_))
        ));
    }

    #[test]
    fn realizable_roles() {
        assert!(Role::Action.is_realizable());
        assert!(Role::Skill.is_realizable());
        assert!(Role::PastInput.is_realizable());
        assert!(!Role::LatentState.is_realizable());
        assert!(!Role::Parameter.is_realizable());
        assert!(!Role::FutureInput.is_realizable());
    }
}
