use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::prob::{Role, Scope, VarMask};

/// Episode length `steps`, optional skill duration, and the first future step.
///
/// Inputs at steps before `split` are past, the rest are future. Input roles must agree
/// with their steps.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Horizon {
    pub steps: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub skill_duration: Option<usize>,
    pub split: usize,
}

impl Horizon {
    pub fn new(steps: usize, skill_duration: Option<usize>, split: usize) -> Result<Self> {
        let h = Self {
            steps,
            skill_duration,
            split,
        };
        h.validate()?;
        Ok(h)
    }

    pub fn validate(&self) -> Result<()> {
        if self.steps == 0 {
            return Err(Error::InvalidHorizon("at least one step is required".into()));
        }
        if self.split == 0 || self.split > self.steps {
            return Err(Error::InvalidHorizon(format!(
                "split {} outside 1..={}",
                self.split, self.steps
            )));
        }
        if let Some(k) = self.skill_duration {
            if k == 0 || self.steps % k != 0 {
                return Err(Error::InvalidHorizon(format!(
                    "skill duration {k} does not divide {} steps",
                    self.steps
                )));
            }
        }
        Ok(())
    }

    /// Number of skill blocks, when skills are present.
    pub fn skill_blocks(&self) -> Option<usize> {
        self.skill_duration.map(|k| self.steps / k)
    }

    /// Masks of past and future inputs, checking roles against steps.
    pub fn partition(&self, scope: &Scope) -> Result<(VarMask, VarMask)> {
        let mut past = 0;
        let mut future = 0;
        for (i, v) in scope.vars().iter().enumerate() {
            let is_past = match v.role() {
                Role::PastInput => true,
                Role::FutureInput => false,
                _ => continue,
            };
            if let Some(step) = v.step() {
                if step == 0 || step > self.steps {
                    return Err(Error::InvalidHorizon(format!(
                        "`{}` has step {step} outside 1..={}",
                        v.name(),
                        self.steps
                    )));
                }
                if is_past != (step < self.split) {
                    return Err(Error::InvalidHorizon(format!(
                        "`{}` has role {} but step {step} with split {}",
                        v.name(),
                        v.role(),
                        self.split
                    )));
                }
            }
            if is_past {
                past |= 1 << i;
            } else {
                future |= 1 << i;
            }
        }
        Ok((past, future))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::prob::VariableSpec;

    #[test]
    fn horizon_invariants() {
        assert!(Horizon::new(3, None, 2).is_ok());
        assert!(Horizon::new(3, None, 0).is_err());
        assert!(Horizon::new(3, None, 4).is_err());
        assert!(Horizon::new(4, Some(2), 1).is_ok());
        assert!(Horizon::new(3, Some(2), 1).is_err());
        assert_eq!(Horizon::new(4, Some(2), 1).unwrap().skill_blocks(), Some(2));
    }

    #[test]
    fn partition_checks_steps() {
        let scope = Scope::new(vec![
            VariableSpec::new("x1", 2, Role::PastInput).unwrap().at_step(1),
            VariableSpec::new("x2", 2, Role::FutureInput).unwrap().at_step(2),
            VariableSpec::new("z", 2, Role::LatentState).unwrap(),
        ])
        .unwrap();
        let h = Horizon::new(2, None, 2).unwrap();
        assert_eq!(h.partition(&scope).unwrap(), (0b001, 0b010));
        let bad = Horizon::new(2, None, 1).unwrap();
        assert!(bad.partition(&scope).is_err());
    }
}
