use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{run_with, RunConfig};
use crate::oracle::{GameOracle, JointPoint};
use crate::{rng, Error, Result};

/// Normal quantile for the 95% Wilson interval.
pub const WILSON_Z: f64 = 1.96;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LockInSpec {
    pub target: JointPoint,
    pub epsilon: f64,
    /// Replicas count only if `x_{n0}` lies in the `q0`-ball.
    #[serde(default)]
    pub n0: u64,
    /// Lock-in is judged on `[n_bar, max_iters]`.
    pub n_bar: u64,
    pub q0: f64,
    pub replicas: usize,
}

impl LockInSpec {
    pub fn validate(&self) -> Result<()> {
        if !(self.epsilon > 0.0) || !(self.q0 > 0.0) {
            return Err(Error::Config("lock-in needs epsilon > 0 and q0 > 0".into()));
        }
        if self.n_bar < self.n0 {
            return Err(Error::Config("lock-in needs n_bar >= n0".into()));
        }
        if self.replicas == 0 {
            return Err(Error::Config("lock-in needs at least one replica".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LockInEstimate {
    pub epsilon: f64,
    pub p_hat: f64,
    pub ci_low: f64,
    pub ci_high: f64,
    pub ci_halfwidth: f64,
    /// Replicas that satisfied the conditioning event.
    pub conditioned: usize,
    pub locked: usize,
}

/// Wilson score interval `(low, high)` for `successes` out of `n`.
pub fn wilson_interval(successes: usize, n: usize, z: f64) -> (f64, f64) {
    let n_f = n as f64;
    let p = successes as f64 / n_f;
    let z2 = z * z;
    let denom = 1.0 + z2 / n_f;
    let center = (p + z2 / (2.0 * n_f)) / denom;
    let half = z / denom * (p * (1.0 - p) / n_f + z2 / (4.0 * n_f * n_f)).sqrt();
    ((center - half).max(0.0), (center + half).min(1.0))
}

fn uniform_in_ball<R: Rng + ?Sized>(center: &JointPoint, radius: f64, rng: &mut R) -> JointPoint {
    let n = center.dims().total();
    let dir: Vec<f64> = (0..n).map(|_| rng.sample(StandardNormal)).collect();
    let norm = dir.iter().map(|v| v * v).sum::<f64>().sqrt().max(f64::MIN_POSITIVE);
    let r = radius * rng.random::<f64>().powf(1.0 / n as f64);
    let offset = JointPoint::from_flat(center.dims(), &dir.iter().map(|v| v * r / norm).collect::<Vec<_>>())
        .expect("dims taken from center");
    center.offset(&offset, 1.0)
}

/// Largest deviation from the target over `[n_bar, max_iters]`, or `None`
/// when the replica misses the conditioning ball at `n0`.
fn replica_deviation<G: GameOracle + ?Sized>(
    config: &RunConfig,
    oracle: &G,
    spec: &LockInSpec,
    replica: usize,
) -> Result<Option<f64>> {
    let mut rng = rng::stream(config.noise.seed, 0, replica as u64);
    let mut cfg = config.clone();
    cfg.x0 = uniform_in_ball(&spec.target, spec.q0, &mut rng);
    cfg.stop_grad_tol = Some(f64::MIN_POSITIVE);
    cfg.record_every = cfg.max_iters.max(1);
    cfg.spectra_every = None;
    let mut in_ball = true;
    let mut worst = 0.0f64;
    let traj = run_with(&cfg, oracle, &mut rng, |k, x| {
        let d = x.distance(&spec.target);
        if k == spec.n0 {
            in_ball = d <= spec.q0;
        }
        if k >= spec.n_bar {
            worst = worst.max(d);
        }
    })?;
    if traj.iterations < cfg.max_iters && traj.terminal_reason != super::TerminalReason::Converged {
        return Ok(in_ball.then_some(f64::INFINITY));
    }
    Ok(in_ball.then_some(worst))
}

fn deviations<G: GameOracle + ?Sized>(config: &RunConfig, oracle: &G, spec: &LockInSpec) -> Result<Vec<Option<f64>>> {
    spec.validate()?;
    if spec.n_bar > config.max_iters {
        return Err(Error::Config("lock-in needs n_bar <= max_iters".into()));
    }
    (0..spec.replicas)
        .into_par_iter()
        .map(|r| replica_deviation(config, oracle, spec, r))
        .collect()
}

fn estimate(devs: &[Option<f64>], epsilon: f64) -> Result<LockInEstimate> {
    let conditioned = devs.iter().flatten().count();
    if conditioned == 0 {
        return Err(Error::ConditioningFailure);
    }
    let locked = devs.iter().flatten().filter(|d| **d <= epsilon).count();
    let (ci_low, ci_high) = wilson_interval(locked, conditioned, WILSON_Z);
    Ok(LockInEstimate {
        epsilon,
        p_hat: locked as f64 / conditioned as f64,
        ci_low,
        ci_high,
        ci_halfwidth: 0.5 * (ci_high - ci_low),
        conditioned,
        locked,
    })
}

/// Fraction of replicas, started uniformly in the `q0`-ball around the
/// target, that stay within `epsilon` of it for every `n ∈ [n_bar, max_iters]`.
///
/// Replica `r` draws its start and its noise from stream `(noise.seed, 0, r)`.
pub fn monte_carlo_lockin<G: GameOracle + ?Sized>(
    config: &RunConfig,
    oracle: &G,
    spec: &LockInSpec,
) -> Result<LockInEstimate> {
    estimate(&deviations(config, oracle, spec)?, spec.epsilon)
}

/// [`monte_carlo_lockin`] at several radii over one shared set of replicas.
pub fn lockin_curve<G: GameOracle + ?Sized>(
    config: &RunConfig,
    oracle: &G,
    spec: &LockInSpec,
    epsilons: &[f64],
) -> Result<Vec<LockInEstimate>> {
    let devs = deviations(config, oracle, spec)?;
    epsilons.iter().map(|&e| estimate(&devs, e)).collect()
}
