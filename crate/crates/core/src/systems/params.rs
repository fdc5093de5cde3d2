use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Location of one logit: the owning block (`p/<child>` for actual factors,
/// `q/<factor>` for target predictors), the parent slice and the child outcome.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ParamCoord {
    pub block: String,
    pub slice: usize,
    pub outcome: usize,
}

/// Flat vector of all learnable logits with an index map back to their factors.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ParameterVector {
    values: Vec<f64>,
    coords: Vec<ParamCoord>,
}

impl ParameterVector {
    pub(crate) fn from_parts(values: Vec<f64>, coords: Vec<ParamCoord>) -> Self {
        debug_assert_eq!(values.len(), coords.len());
        Self { values, coords }
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn coords(&self) -> &[ParamCoord] {
        &self.coords
    }

    /// Same layout with new values.
    pub fn with_values(&self, values: Vec<f64>) -> Result<Self> {
        check_values(&values, self.values.len())?;
        Ok(Self {
            values,
            coords: self.coords.clone(),
        })
    }

    pub fn describe(&self, index: usize) -> String {
        let c = &self.coords[index];
        format!("{}[{}][{}]", c.block, c.slice, c.outcome)
    }
}

pub(crate) fn check_values(values: &[f64], expected: usize) -> Result<()> {
    if values.len() != expected {
        return Err(Error::ParameterLength {
            got: values.len(),
            expected,
        });
    }
    if let Some(i) = values.iter().position(|v| !v.is_finite()) {
        return Err(Error::NonFiniteParameter(i));
    }
    Ok(())
}

/// Per-slice softmax of `logits / temperature`.
pub fn softmax_slices(logits: &[f64], card: usize, temperature: f64) -> Vec<f64> {
    let mut out = Vec::with_capacity(logits.len());
    for chunk in logits.chunks(card) {
        let max = chunk.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let exps: Vec<f64> = chunk.iter().map(|l| ((l - max) / temperature).exp()).collect();
        let total: f64 = exps.iter().sum();
        out.extend(exps.into_iter().map(|e| e / total));
    }
    out
}

/// Per-slice log-softmax of `logits / temperature`.
pub fn log_softmax_slices(logits: &[f64], card: usize, temperature: f64) -> Vec<f64> {
    let mut out = Vec::with_capacity(logits.len());
    for chunk in logits.chunks(card) {
        let scaled: Vec<f64> = chunk.iter().map(|l| l / temperature).collect();
        let lse = crate::prob::sum::log_sum_exp(&scaled);
        out.extend(scaled.into_iter().map(|s| s - lse));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn softmax_values() {
        assert_eq!(softmax_slices(&[0.0, 0.0], 2, 1.0), vec![0.5, 0.5]);
        let p = softmax_slices(&[3f64.ln(), 0.0], 2, 1.0);
        assert!((p[0] - 0.75).abs() < 1e-15 && (p[1] - 0.25).abs() < 1e-15);
        let lp = log_softmax_slices(&[3f64.ln(), 0.0], 2, 1.0);
        assert!((lp[0] - 0.75f64.ln()).abs() < 1e-15);
    }

    #[test]
    fn rejects_bad_vectors() {
        assert!(matches!(check_values(&[0.0], 2), Err(Error::ParameterLength { .. })));
        assert!(matches!(check_values(&[f64::NAN], 1), Err(Error::NonFiniteParameter(0))));
    }
}
