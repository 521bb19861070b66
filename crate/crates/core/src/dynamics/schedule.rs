use nalgebra::DVector;
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::oracle::{BlockDims, JointPoint, Player};
use crate::{Error, Result};

/// Learning-rate sequence indexed from `k = 1`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Schedule {
    Constant { gamma: f64 },
    /// `γ · k^(−p)`
    Polynomial { gamma: f64, p: f64 },
    /// `γ · ν^k`
    Exponential { gamma: f64, nu: f64 },
}

impl Schedule {
    pub fn validate(&self) -> Result<()> {
        let ok = match *self {
            Schedule::Constant { gamma } => gamma > 0.0 && gamma.is_finite(),
            Schedule::Polynomial { gamma, p } => gamma > 0.0 && gamma.is_finite() && p >= 0.0 && p.is_finite(),
            Schedule::Exponential { gamma, nu } => gamma > 0.0 && gamma.is_finite() && nu > 0.0 && nu <= 1.0,
        };
        if ok {
            Ok(())
        } else {
            Err(Error::Config(format!("invalid schedule {self:?}")))
        }
    }

    /// `γ_k`; `k = 0` is treated as `k = 1`.
    pub fn rate(&self, k: u64) -> f64 {
        let k = k.max(1) as f64;
        match *self {
            Schedule::Constant { gamma } => gamma,
            Schedule::Polynomial { gamma, p } => gamma * k.powf(-p),
            Schedule::Exponential { gamma, nu } => gamma * nu.powf(k),
        }
    }

    // γ_k ~ ν^k k^(−p)
    fn asymptotics(&self) -> (f64, f64) {
        match *self {
            Schedule::Constant { .. } => (1.0, 0.0),
            Schedule::Polynomial { p, .. } => (1.0, p),
            Schedule::Exponential { nu, .. } => (nu, 0.0),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Schedules {
    pub leader: Schedule,
    pub follower: Schedule,
}

impl Schedules {
    pub fn uniform(s: Schedule) -> Self {
        Self { leader: s, follower: s }
    }

    pub fn validate(&self) -> Result<()> {
        self.leader.validate()?;
        self.follower.validate()
    }

    pub fn rate(&self, p: Player, k: u64) -> f64 {
        match p {
            Player::Leader => self.leader.rate(k),
            Player::Follower => self.follower.rate(k),
        }
    }

    /// `τ_k = γ₁,k / γ₂,k`.
    pub fn tau(&self, k: u64) -> f64 {
        self.leader.rate(k) / self.follower.rate(k)
    }

    /// Whether `γ₁,k / γ₂,k → 0`, decided from the schedule kinds.
    pub fn timescale_separated(&self) -> bool {
        let (n1, p1) = self.leader.asymptotics();
        let (n2, p2) = self.follower.asymptotics();
        n1 < n2 || (n1 == n2 && p1 > p2)
    }
}

/// Additive zero-mean gradient noise.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum NoiseKind {
    None,
    /// Independent `N(0, σᵢ²)` entries for player `i`.
    Gaussian { sigma: [f64; 2] },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NoiseModel {
    #[serde(flatten)]
    pub kind: NoiseKind,
    #[serde(default)]
    pub seed: u64,
}

impl Default for NoiseModel {
    fn default() -> Self {
        Self::none()
    }
}

impl NoiseModel {
    pub fn none() -> Self {
        Self { kind: NoiseKind::None, seed: 0 }
    }

    pub fn gaussian(sigma: [f64; 2], seed: u64) -> Self {
        Self { kind: NoiseKind::Gaussian { sigma }, seed }
    }

    pub fn validate(&self) -> Result<()> {
        if let NoiseKind::Gaussian { sigma } = self.kind {
            if sigma.iter().any(|s| !(*s >= 0.0) || !s.is_finite()) {
                return Err(Error::Config(format!("noise sigma must be finite and nonnegative, got {sigma:?}")));
            }
        }
        Ok(())
    }

    pub fn is_active(&self) -> bool {
        matches!(self.kind, NoiseKind::Gaussian { sigma } if sigma.iter().any(|s| *s > 0.0))
    }

    /// One draw `(w₁, w₂)`, or `None` when the model is inactive.
    pub fn draw<R: Rng + ?Sized>(&self, dims: BlockDims, rng: &mut R) -> Option<JointPoint> {
        match self.kind {
            NoiseKind::Gaussian { sigma } if self.is_active() => {
                let mut block = |n: usize, s: f64| DVector::from_fn(n, |_, _| s * rng.sample::<f64, _>(StandardNormal));
                let w1 = block(dims.d1, sigma[0]);
                let w2 = block(dims.d2, sigma[1]);
                Some(JointPoint::new(w1, w2))
            }
            _ => None,
        }
    }
}
