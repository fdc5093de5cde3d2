use serde::{Deserialize, Serialize};

use crate::prob::table::NORMALIZATION_TOL;

/// How a factor's conditional table is produced. Tables and logits are laid out with
/// the parent assignment outer (row-major over `parents`, last fastest) and the child
/// outcome inner.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum FactorKind {
    Fixed {
        table: Vec<f64>,
    },
    Parameterized {
        logits: Vec<f64>,
        temperature: f64,
    },
    /// Deterministic conditional: one selected child outcome per parent slice.
    PointMass {
        selector: Vec<usize>,
    },
    /// Reuses the logits of another variable's parameterized factor (amortization,
    /// stationary policies). Parent and child cardinalities must line up.
    Shared {
        source: String,
    },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FactorSpec {
    pub child: String,
    pub parents: Vec<String>,
    #[serde(flatten)]
    pub kind: FactorKind,
}

impl FactorSpec {
    pub fn fixed(child: &str, parents: &[&str], table: Vec<f64>) -> Self {
        Self::with_kind(child, parents, FactorKind::Fixed { table })
    }

    pub fn parameterized(child: &str, parents: &[&str], logits: Vec<f64>) -> Self {
        Self::with_kind(
            child,
            parents,
            FactorKind::Parameterized {
                logits,
                temperature: 1.0,
            },
        )
    }

    pub fn point_mass(child: &str, parents: &[&str], selector: Vec<usize>) -> Self {
        Self::with_kind(child, parents, FactorKind::PointMass { selector })
    }

    pub fn shared(child: &str, parents: &[&str], source: &str) -> Self {
        Self::with_kind(
            child,
            parents,
            FactorKind::Shared {
                source: source.to_string(),
            },
        )
    }

    pub fn with_kind(child: &str, parents: &[&str], kind: FactorKind) -> Self {
        Self {
            child: child.to_string(),
            parents: parents.iter().map(|p| p.to_string()).collect(),
            kind,
        }
    }

    pub fn is_learnable(&self) -> bool {
        !matches!(self.kind, FactorKind::Fixed { .. })
    }
}

/// Checks every `card`-sized slice of `table` is a distribution.
pub(crate) fn check_slices(table: &[f64], card: usize) -> std::result::Result<(), String> {
    for (s, slice) in table.chunks(card).enumerate() {
        if let Some(i) = slice.iter().position(|v| !v.is_finite() || *v < 0.0) {
            return Err(format!("entry {} is negative or not finite", s * card + i));
        }
        let total: f64 = slice.iter().sum();
        if (total - 1.0).abs() > NORMALIZATION_TOL {
            return Err(format!("parent slice {s} sums to {total}"));
        }
    }
    Ok(())
}
