use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// One factor of the target. Tables are row-major over `scope`, last variable fastest.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum TargetKind {
    /// Non-negative weights. With `normalized`, every slice over the last scope
    /// variable must sum to one (a prior or a likelihood).
    Table { weights: Vec<f64>, normalized: bool },
    /// Reward potential exp(r), stored as r.
    Reward { values: Vec<f64> },
    /// Learnable predictor q(last | rest) with per-slice softmax logits.
    Conditional { logits: Vec<f64>, temperature: f64 },
    /// Reuses the logits of another conditional target factor.
    SharedConditional { source: String },
    /// Copies the actual factor of `child` (parents and child as scope), so it cancels
    /// in the log ratio.
    Tied { child: String },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TargetFactor {
    pub name: String,
    /// Ignored for tied factors, whose scope follows the actual factor.
    #[serde(default)]
    pub scope: Vec<String>,
    #[serde(flatten)]
    pub kind: TargetKind,
}

impl TargetFactor {
    pub fn table(name: &str, scope: &[&str], weights: Vec<f64>, normalized: bool) -> Self {
        Self::with_kind(name, scope, TargetKind::Table { weights, normalized })
    }

    pub fn reward(name: &str, scope: &[&str], values: Vec<f64>) -> Self {
        Self::with_kind(name, scope, TargetKind::Reward { values })
    }

    pub fn conditional(name: &str, scope: &[&str], logits: Vec<f64>) -> Self {
        Self::with_kind(
            name,
            scope,
            TargetKind::Conditional {
                logits,
                temperature: 1.0,
            },
        )
    }

    pub fn shared(name: &str, scope: &[&str], source: &str) -> Self {
        Self::with_kind(
            name,
            scope,
            TargetKind::SharedConditional {
                source: source.to_string(),
            },
        )
    }

    pub fn tied(name: &str, child: &str) -> Self {
        Self::with_kind(
            name,
            &[],
            TargetKind::Tied {
                child: child.to_string(),
            },
        )
    }

    pub fn with_kind(name: &str, scope: &[&str], kind: TargetKind) -> Self {
        Self {
            name: name.to_string(),
            scope: scope.iter().map(|s| s.to_string()).collect(),
            kind,
        }
    }
}

/// Product of possibly unnormalized factors; an empty product is the uniform target.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct TargetSpec {
    factors: Vec<TargetFactor>,
}

impl TargetSpec {
    pub fn new(factors: Vec<TargetFactor>) -> Result<Self> {
        let mut spec = Self::default();
        for f in factors {
            spec.push(f)?;
        }
        Ok(spec)
    }

    pub fn push(&mut self, factor: TargetFactor) -> Result<()> {
        if self.factors.iter().any(|f| f.name == factor.name) {
            return Err(Error::Declaration(format!(
                "target factor `{}` declared twice",
                factor.name
            )));
        }
        self.factors.push(factor);
        Ok(())
    }

    pub fn with(mut self, factor: TargetFactor) -> Result<Self> {
        self.push(factor)?;
        Ok(self)
    }

    /// Drops the named factors.
    pub fn without(&self, names: &[&str]) -> Self {
        Self {
            factors: self
                .factors
                .iter()
                .filter(|f| !names.contains(&f.name.as_str()))
                .cloned()
                .collect(),
        }
    }

    pub fn factors(&self) -> &[TargetFactor] {
        &self.factors
    }

    pub fn factor(&self, name: &str) -> Option<&TargetFactor> {
        self.factors.iter().find(|f| f.name == name)
    }

    pub fn is_empty(&self) -> bool {
        self.factors.is_empty()
    }

    pub(crate) fn factors_mut(&mut self) -> &mut [TargetFactor] {
        &mut self.factors
    }
}
