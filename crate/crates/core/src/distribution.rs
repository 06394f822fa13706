use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Tolerance on the total mass of a probability vector.
pub const PROB_SUM_TOL: f64 = 1e-12;

/// A random variable on a finite probability space, stored as atoms.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiscreteDistribution {
    values: Vec<f64>,
    probs: Vec<f64>,
}

/// Validates a probability vector: strictly positive, sums to 1.
pub fn check_probs(probs: &[f64]) -> Result<()> {
    if probs.is_empty() {
        return Err(Error::Invalid("empty probability vector".into()));
    }
    if let Some(p) = probs.iter().find(|p| !(**p > 0.0) || !p.is_finite()) {
        return Err(Error::Invalid(format!("probabilities must be positive, got {p}")));
    }
    let sum: f64 = probs.iter().sum();
    if (sum - 1.0).abs() > PROB_SUM_TOL {
        return Err(Error::ProbabilitiesNotNormalized { sum });
    }
    Ok(())
}

impl DiscreteDistribution {
    pub fn new(values: Vec<f64>, probs: Vec<f64>) -> Result<Self> {
        if values.len() != probs.len() {
            return Err(Error::Invalid(format!(
                "{} values but {} probabilities",
                values.len(),
                probs.len()
            )));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::Invalid("atom values must be finite".into()));
        }
        check_probs(&probs)?;
        Ok(DiscreteDistribution { values, probs })
    }

    /// Same probabilities, new values.
    pub fn with_values(&self, values: Vec<f64>) -> Result<Self> {
        Self::new(values, self.probs.clone())
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn expect<F: Fn(f64) -> f64>(&self, f: F) -> f64 {
        self.values.iter().zip(&self.probs).map(|(&v, &p)| p * f(v)).sum()
    }

    pub fn map<F: Fn(f64) -> f64>(&self, f: F) -> Self {
        DiscreteDistribution {
            values: self.values.iter().map(|&v| f(v)).collect(),
            probs: self.probs.clone(),
        }
    }

    pub fn is_zero(&self) -> bool {
        self.values.iter().all(|&v| v == 0.0)
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_unnormalized() {
        let e = DiscreteDistribution::new(vec![1.0, 2.0], vec![0.5, 0.4]).unwrap_err();
        assert!(matches!(e, Error::ProbabilitiesNotNormalized { .. }));
    }

    #[test]
    fn rejects_zero_probability() {
        assert!(DiscreteDistribution::new(vec![1.0, 2.0], vec![1.0, 0.0]).is_err());
    }

    #[test]
    fn expectation() {
        let d = DiscreteDistribution::new(vec![1.0, 3.0], vec![0.25, 0.75]).unwrap();
        assert_eq!(d.expect(|x| x), 2.5);
    }
}
