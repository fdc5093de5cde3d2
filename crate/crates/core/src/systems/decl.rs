//! JSON declaration of a system, its target and horizon.
//!
//! ```json
//! {
//!   "variables": [{"name": "x", "cardinality": 2, "role": "future-input", "step": 1}],
//!   "factors": [{"child": "x", "parents": [], "kind": "parameterized", "logits": [0, 0]}],
//!   "target_factors": [{"name": "prior", "scope": ["x"], "kind": "table",
//!                       "weights": [0.5, 0.5], "normalized": true}],
//!   "rewards": [{"name": "r1", "scope": ["x"], "values": [0, 1.0986]}],
//!   "horizon": {"steps": 1, "split": 1}
//! }
//! ```
//!
//! Factor kinds: `fixed` (`table`), `parameterized` (`logits`, optional `temperature`),
//! `point-mass` (`selector`), `shared` (`source`). Target kinds: `table` (`weights`,
//! `normalized`), `conditional` (`logits`, optional `temperature`), `shared-conditional`
//! (`source`), `tied` (`child`). Unknown keys are rejected.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::prob::VariableSpec;

use super::{ActualSystem, FactorKind, FactorSpec, Horizon, TargetFactor, TargetKind, TargetSpec};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SystemDecl {
    pub variables: Vec<VariableSpec>,
    pub factors: Vec<FactorDecl>,
    #[serde(default)]
    pub target_factors: Vec<TargetFactorDecl>,
    #[serde(default)]
    pub rewards: Vec<RewardDecl>,
    pub horizon: Horizon,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FactorDecl {
    pub child: String,
    #[serde(default)]
    pub parents: Vec<String>,
    pub kind: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub table: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub logits: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub temperature: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub selector: Option<Vec<usize>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub source: Option<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TargetFactorDecl {
    pub name: String,
    #[serde(default)]
    pub scope: Vec<String>,
    pub kind: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub weights: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub normalized: Option<bool>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub logits: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub temperature: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub source: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub child: Option<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RewardDecl {
    pub name: String,
    pub scope: Vec<String>,
    pub values: Vec<f64>,
}

fn required<T: Clone>(field: &Option<T>, key: &str, owner: &str) -> Result<T> {
    field
        .clone()
        .ok_or_else(|| Error::Declaration(format!("`{owner}` needs `{key}`")))
}

/// Rejects keys that belong to another kind.
fn only(present: &[(&str, bool)], allowed: &[&str], owner: &str) -> Result<()> {
    match present.iter().find(|(k, set)| *set && !allowed.contains(k)) {
        Some((k, _)) => Err(Error::Declaration(format!("`{owner}` does not take `{k}`"))),
        None => Ok(()),
    }
}

impl FactorDecl {
    pub fn to_spec(&self) -> Result<FactorSpec> {
        let owner = &self.child;
        let present = [
            ("table", self.table.is_some()),
            ("logits", self.logits.is_some()),
            ("temperature", self.temperature.is_some()),
            ("selector", self.selector.is_some()),
            ("source", self.source.is_some()),
        ];
        let kind = match self.kind.as_str() {
            "fixed" => {
                only(&present, &["table"], owner)?;
                FactorKind::Fixed {
                    table: required(&self.table, "table", owner)?,
                }
            }
            "parameterized" => {
                only(&present, &["logits", "temperature"], owner)?;
                FactorKind::Parameterized {
                    logits: required(&self.logits, "logits", owner)?,
                    temperature: self.temperature.unwrap_or(1.0),
                }
            }
            "point-mass" => {
                only(&present, &["selector"], owner)?;
                FactorKind::PointMass {
                    selector: required(&self.selector, "selector", owner)?,
                }
            }
            "shared" => {
                only(&present, &["source"], owner)?;
                FactorKind::Shared {
                    source: required(&self.source, "source", owner)?,
                }
            }
            other => return Err(Error::Declaration(format!("unknown factor kind `{other}`"))),
        };
        Ok(FactorSpec {
            child: self.child.clone(),
            parents: self.parents.clone(),
            kind,
        })
    }
}

impl TargetFactorDecl {
    pub fn normalized_table(name: &str, scope: &[&str], weights: Vec<f64>) -> Self {
        Self {
            name: name.to_string(),
            scope: scope.iter().map(|s| s.to_string()).collect(),
            kind: "table".into(),
            weights: Some(weights),
            normalized: Some(true),
            logits: None,
            temperature: None,
            source: None,
            child: None,
        }
    }

    pub fn to_factor(&self) -> Result<TargetFactor> {
        let owner = &self.name;
        let present = [
            ("weights", self.weights.is_some()),
            ("normalized", self.normalized.is_some()),
            ("logits", self.logits.is_some()),
            ("temperature", self.temperature.is_some()),
            ("source", self.source.is_some()),
            ("child", self.child.is_some()),
        ];
        let kind = match self.kind.as_str() {
            "table" => {
                only(&present, &["weights", "normalized"], owner)?;
                TargetKind::Table {
                    weights: required(&self.weights, "weights", owner)?,
                    normalized: self.normalized.unwrap_or(false),
                }
            }
            "conditional" => {
                only(&present, &["logits", "temperature"], owner)?;
                TargetKind::Conditional {
                    logits: required(&self.logits, "logits", owner)?,
                    temperature: self.temperature.unwrap_or(1.0),
                }
            }
            "shared-conditional" => {
                only(&present, &["source"], owner)?;
                TargetKind::SharedConditional {
                    source: required(&self.source, "source", owner)?,
                }
            }
            "tied" => {
                only(&present, &["child"], owner)?;
                if !self.scope.is_empty() {
                    return Err(Error::Declaration(format!(
                        "tied factor `{owner}` takes its scope from the actual factor"
                    )));
                }
                TargetKind::Tied {
                    child: required(&self.child, "child", owner)?,
                }
            }
            other => return Err(Error::Declaration(format!("unknown target kind `{other}`"))),
        };
        Ok(TargetFactor {
            name: self.name.clone(),
            scope: self.scope.clone(),
            kind,
        })
    }
}

impl SystemDecl {
    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::Declaration(e.to_string()))
    }

    pub fn build(&self) -> Result<(ActualSystem, TargetSpec, Horizon)> {
        self.horizon.validate()?;
        let factors = self
            .factors
            .iter()
            .map(FactorDecl::to_spec)
            .collect::<Result<Vec<_>>>()?;
        let system = ActualSystem::new(self.variables.clone(), factors)?;
        let mut target = TargetSpec::default();
        for t in &self.target_factors {
            target.push(t.to_factor()?)?;
        }
        for r in &self.rewards {
            let scope: Vec<&str> = r.scope.iter().map(String::as_str).collect();
            target.push(TargetFactor::reward(&r.name, &scope, r.values.clone()))?;
        }
        super::Model::new(system.clone(), target.clone())?;
        self.horizon.partition(system.scope())?;
        Ok((system, target, self.horizon))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const DOC: &str = r#"{
        "variables": [
            {"name": "w", "cardinality": 2, "role": "parameter"},
            {"name": "y", "cardinality": 2, "role": "past-input"}
        ],
        "factors": [
            {"child": "w", "kind": "parameterized", "logits": [0, 0]},
            {"child": "y", "parents": [], "kind": "fixed", "table": [1, 0]}
        ],
        "target_factors": [
            {"name": "prior", "scope": ["w"], "kind": "table", "weights": [0.5, 0.5], "normalized": true},
            {"name": "lik", "scope": ["w", "y"], "kind": "conditional", "logits": [0, 0, 0, 0]}
        ],
        "rewards": [{"name": "r", "scope": ["y"], "values": [1, 0]}],
        "horizon": {"steps": 1, "split": 1}
    }"#;

    #[test]
    fn parses_and_builds() {
        let (sys, target, horizon) = SystemDecl::from_json(DOC).unwrap().build().unwrap();
        assert_eq!(sys.variables().len(), 2);
        assert_eq!(target.factors().len(), 3);
        assert_eq!(horizon.steps, 1);
    }

    #[test]
    fn unknown_keys_rejected() {
        let bad = DOC.replace("\"horizon\"", "\"colour\": 1, \"horizon\"");
        assert!(SystemDecl::from_json(&bad).is_err());
        let bad_factor = DOC.replace("\"logits\": [0, 0]}", "\"logits\": [0, 0], \"table\": [1, 0]}");
        assert!(SystemDecl::from_json(&bad_factor).unwrap().build().is_err());
        let bad_kind = DOC.replace("\"fixed\"", "\"wobbly\"");
        assert!(SystemDecl::from_json(&bad_kind).unwrap().build().is_err());
    }
}
