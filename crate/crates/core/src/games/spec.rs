use std::sync::Arc;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use super::{CovarianceGan, DuopolyGame, PolyZeroSumGame, QuadraticGame, QuadraticGameSpec, TorusGame};
use crate::oracle::GameOracle;
use crate::{Error, Result};

/// Covariance GAN parameters as they appear in a config file. Either `sigma`
/// is given explicitly, or `m` and `sigma_seed` draw one with
/// [`CovarianceGan::sample_sigma`]. `eta` defaults to `m/5`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CovarianceSpec {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sigma: Option<Vec<Vec<f64>>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub m: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sigma_seed: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub eta: Option<f64>,
}

/// Scalar zero-sum quadratic `f = ½a x₁² + b x₁x₂ − ½c x₂²`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScalarQuadraticSpec {
    pub a: f64,
    pub b: f64,
    pub c: f64,
}

/// A game description, tagged by `"game"`.
///
/// ```
/// use stackdyn::games::GameSpec;
/// let g: GameSpec = serde_json::from_str(r#"{"game":"duopoly","A":100,"c1":5,"c2":2}"#).unwrap();
/// assert_eq!(g.build().unwrap().dims().total(), 2);
/// ```
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "game", rename_all = "snake_case")]
pub enum GameSpec {
    Duopoly(DuopolyGame),
    Torus(TorusGame),
    Poly(PolyZeroSumGame),
    Covariance(CovarianceSpec),
    Quadratic(QuadraticGameSpec),
    ScalarQuadratic(ScalarQuadraticSpec),
}

impl CovarianceSpec {
    pub fn build(&self) -> Result<CovarianceGan> {
        let sigma = match (&self.sigma, self.m) {
            (Some(rows), m) => {
                let n = rows.len();
                if m.is_some_and(|m| m != n) {
                    return Err(Error::Config(format!("covariance: m = {} but sigma has {n} rows", m.unwrap_or(0))));
                }
                if n == 0 || rows.iter().any(|r| r.len() != n) {
                    return Err(Error::Config("covariance: sigma must be a square nested array".into()));
                }
                DMatrix::from_fn(n, n, |i, j| rows[i][j])
            }
            (None, Some(m)) if m > 0 => CovarianceGan::sample_sigma(m, self.sigma_seed.unwrap_or(0)),
            _ => return Err(Error::Config("covariance: provide \"sigma\" or a positive \"m\"".into())),
        };
        let eta = self.eta.unwrap_or(sigma.nrows() as f64 / 5.0);
        CovarianceGan::new(sigma, eta)
    }
}

impl GameSpec {
    pub fn name(&self) -> &'static str {
        match self {
            GameSpec::Duopoly(_) => "duopoly",
            GameSpec::Torus(_) => "torus",
            GameSpec::Poly(_) => "poly",
            GameSpec::Covariance(_) => "covariance",
            GameSpec::Quadratic(_) => "quadratic",
            GameSpec::ScalarQuadratic(_) => "scalar_quadratic",
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.build().map(|_| ())
    }

    pub fn build(&self) -> Result<Arc<dyn GameOracle>> {
        Ok(match self {
            GameSpec::Duopoly(g) => {
                g.validate()?;
                Arc::new(*g)
            }
            GameSpec::Torus(g) => {
                g.validate()?;
                Arc::new(*g)
            }
            GameSpec::Poly(g) => {
                if !(g.a.is_finite() && g.b.is_finite()) {
                    return Err(Error::Config("poly: a and b must be finite".into()));
                }
                Arc::new(*g)
            }
            GameSpec::Covariance(c) => Arc::new(c.build()?),
            GameSpec::Quadratic(q) => Arc::new(QuadraticGame::random(q)?),
            GameSpec::ScalarQuadratic(s) => Arc::new(QuadraticGame::scalar_zero_sum(s.a, s.b, s.c)),
        })
    }

    /// The covariance game, when this spec describes one.
    pub fn covariance(&self) -> Option<Result<CovarianceGan>> {
        match self {
            GameSpec::Covariance(c) => Some(c.build()),
            _ => None,
        }
    }

    /// Whether coordinates live on the torus (wrapped into (−π, π]).
    pub fn periodic(&self) -> bool {
        matches!(self, GameSpec::Torus(_))
    }
}
