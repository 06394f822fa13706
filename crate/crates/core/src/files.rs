//! JSON documents for markets, mixture models and utilities.
//!
//! Finite market:
//! ```json
//! {"probs": [0.5, 0.5], "delta_s": [[1.0], [-1.0]], "W": [2.0, 2.0], "x0": 0.0, "claim": [1.0, 0.0]}
//! ```
//! `W` and `claim` are optional; `x0` defaults to 0. Each row of `delta_s`
//! holds the asset increments in one state.
//!
//! Mixture model:
//! ```json
//! {"gamma": 1.0, "z_atoms": "default 50", "claim": {"type": "delta_y", "delta": 0.3}}
//! ```
//! `z_atoms` is either `"default N"` or a list of `[z, p]` pairs; the
//! claim is `{"type": "zero"}`, `{"type": "delta_y", "delta": d}` or
//! `{"type": "bounded_alpha", "grid": [[y, z, value], ...]}` (piecewise
//! linear in `y` for each atom). An optional `"loss"` is `"one_plus_y"` or
//! `"one_plus_sqrt_y"`.
//!
//! Utility: `{"family": "exponential", "gamma": 2.0}`, or one of
//! `exponential_numeric`, `exp_sum` (`"terms": [[weight, rate], ...]`),
//! `log_quadratic`.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::exp_mixture::{default_atoms, Atom, BoundedAlpha, ExpMixtureBuilder, ExpMixtureMarket, LossVariable, MixtureClaim};
use crate::finite_market::FiniteMarket;
use crate::utility::UtilitySpec;

fn read(path: &Path) -> Result<String> {
    std::fs::read_to_string(path).map_err(|e| Error::Invalid(format!("cannot read {}: {e}", path.display())))
}

fn parse<T: for<'de> Deserialize<'de>>(text: &str, what: &str) -> Result<T> {
    serde_json::from_str(text).map_err(|e| Error::Invalid(format!("malformed {what} document: {e}")))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MarketFile {
    pub probs: Vec<f64>,
    pub delta_s: Vec<Vec<f64>>,
    #[serde(rename = "W", default, skip_serializing_if = "Option::is_none")]
    pub loss: Option<Vec<f64>>,
    #[serde(default)]
    pub x0: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub claim: Option<Vec<f64>>,
}

impl MarketFile {
    pub fn from_json(text: &str) -> Result<Self> {
        parse(text, "market")
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_json(&read(path)?)
    }

    pub fn market(&self) -> Result<FiniteMarket> {
        let m = FiniteMarket::new(self.probs.clone(), self.delta_s.clone(), self.loss.clone(), self.x0)?;
        if let Some(c) = &self.claim {
            m.check_claim(c)?;
        }
        Ok(m)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum AtomsSpec {
    /// `"default N"`; the longer spelling `"paper-default N"` is also accepted.
    Named(String),
    Explicit(Vec<[f64; 2]>),
}

impl AtomsSpec {
    pub fn atoms(&self) -> Result<Vec<Atom>> {
        match self {
            AtomsSpec::Explicit(v) => Ok(v.iter().map(|[z, p]| Atom { z: *z, p: *p }).collect()),
            AtomsSpec::Named(s) => {
                let n = s
                    .strip_prefix("paper-default")
                    .or_else(|| s.strip_prefix("default"))
                    .map(str::trim)
                    .and_then(|t| t.parse::<usize>().ok())
                    .ok_or_else(|| Error::Invalid(format!("unknown atom specification {s:?}; expected \"default N\"")))?;
                default_atoms(n, crate::exp_mixture::DEFAULT_P1, crate::exp_mixture::DEFAULT_RATIO)
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum ClaimSpec {
    Zero,
    DeltaY { delta: f64 },
    BoundedAlpha { grid: Vec<[f64; 3]> },
}

impl ClaimSpec {
    pub fn claim(&self) -> Result<MixtureClaim> {
        Ok(match self {
            ClaimSpec::Zero => MixtureClaim::Zero,
            ClaimSpec::DeltaY { delta } => MixtureClaim::DeltaY { delta: *delta },
            ClaimSpec::BoundedAlpha { grid } => MixtureClaim::Bounded(BoundedAlpha::from_grid(grid)?),
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MixtureFile {
    pub gamma: f64,
    pub z_atoms: AtomsSpec,
    pub claim: ClaimSpec,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub loss: Option<LossVariable>,
}

impl MixtureFile {
    pub fn from_json(text: &str) -> Result<Self> {
        parse(text, "mixture model")
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_json(&read(path)?)
    }

    pub fn builder(&self) -> Result<ExpMixtureBuilder> {
        let mut b = ExpMixtureMarket::builder().gamma(self.gamma).atoms(self.z_atoms.atoms()?).claim(self.claim.claim()?);
        if let Some(l) = self.loss {
            b = b.loss(l);
        }
        Ok(b)
    }

    pub fn market(&self) -> Result<ExpMixtureMarket> {
        self.builder()?.build()
    }
}

pub fn load_utility(path: &Path) -> Result<UtilitySpec> {
    parse(&read(path)?, "utility")
}
