use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use super::Schedules;
use crate::opalg::SolveConfig;
use crate::oracle::{omega, omega_stackelberg_solve, GameOracle, JointPoint, Player};
use crate::{Error, Result};

/// Discrete learning rule.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "rule", rename_all = "snake_case")]
pub enum UpdateRule {
    /// Simultaneous gradient play on `ω`.
    #[serde(alias = "simgrad")]
    SimGrad,
    /// Leader follows the total derivative with follower Hessian `D₂²f₂ + ηI`.
    Stackelberg {
        #[serde(default)]
        eta: f64,
        #[serde(default)]
        solver: SolveConfig,
    },
    /// Leader gradient corrected by `−γ₂,k (D₂₁f₂)ᵀ D₂f₁`.
    Lola,
    /// Follower plays a local best response (gradient descent to `inner_tol`)
    /// before every leader step.
    BestResponse {
        inner_tol: f64,
        inner_max_iters: usize,
        inner_step: f64,
    },
}

impl UpdateRule {
    pub fn validate(&self) -> Result<()> {
        match self {
            UpdateRule::Stackelberg { eta, solver } => {
                if !(*eta >= 0.0) || !eta.is_finite() {
                    return Err(Error::Config(format!("eta must be finite and nonnegative, got {eta}")));
                }
                if solver.max_iters == 0 || !(solver.tol > 0.0) {
                    return Err(Error::Config("solver needs max_iters >= 1 and tol > 0".into()));
                }
            }
            UpdateRule::BestResponse { inner_tol, inner_max_iters, inner_step } => {
                if !(*inner_tol > 0.0) || *inner_max_iters == 0 || !(*inner_step > 0.0) {
                    return Err(Error::Config(
                        "best_response needs inner_tol > 0, inner_max_iters >= 1, inner_step > 0".into(),
                    ));
                }
            }
            UpdateRule::SimGrad | UpdateRule::Lola => {}
        }
        Ok(())
    }

    /// Whether the rule descends the Stackelberg field `ω_S`.
    pub fn is_hierarchical(&self) -> bool {
        matches!(self, UpdateRule::Stackelberg { .. } | UpdateRule::BestResponse { .. })
    }

    /// Follower regularization used by the rule's leader field.
    pub fn eta(&self) -> f64 {
        match self {
            UpdateRule::Stackelberg { eta, .. } => *eta,
            _ => 0.0,
        }
    }
}

/// Stateful stepping: carries the CG warm start between Stackelberg steps.
pub(crate) struct Stepper<'a, G: GameOracle + ?Sized> {
    rule: &'a UpdateRule,
    oracle: &'a G,
    schedules: &'a Schedules,
    warm: Option<DVector<f64>>,
}

impl<'a, G: GameOracle + ?Sized> Stepper<'a, G> {
    pub(crate) fn new(rule: &'a UpdateRule, oracle: &'a G, schedules: &'a Schedules) -> Self {
        Self { rule, oracle, schedules, warm: None }
    }

    /// The field whose norm decides convergence: `ω_S` for hierarchical
    /// rules, `ω` otherwise.
    pub(crate) fn field(&mut self, x: &JointPoint) -> Result<JointPoint> {
        match self.rule {
            UpdateRule::SimGrad | UpdateRule::Lola => omega(self.oracle, x),
            UpdateRule::Stackelberg { eta, solver } => {
                let mut cfg = solver.clone();
                if cfg.warm_start.is_none() {
                    cfg.warm_start = self.warm.take();
                }
                let warmed = cfg.warm_start.is_some();
                let out = match omega_stackelberg_solve(self.oracle, x, *eta, &cfg) {
                    Err(_) if warmed => {
                        cfg.warm_start = None;
                        omega_stackelberg_solve(self.oracle, x, *eta, &cfg)
                    }
                    r => r,
                };
                let (field, solve) = out?;
                self.warm = Some(solve.x);
                Ok(field)
            }
            UpdateRule::BestResponse { .. } => {
                let exact = SolveConfig::exact(self.oracle.dims().d2);
                omega_stackelberg_solve(self.oracle, x, 0.0, &exact).map(|(f, _)| f)
            }
        }
    }

    /// Gradient descent on the follower's cost in `x₂` until
    /// `‖D₂f₂‖ ≤ inner_tol`.
    pub(crate) fn respond(&self, x: JointPoint) -> Result<JointPoint> {
        let UpdateRule::BestResponse { inner_tol, inner_max_iters, inner_step } = self.rule else {
            return Ok(x);
        };
        let mut x = x;
        let f = Player::Follower;
        let mut g = self.oracle.grad(f, f, &x);
        let mut iters = 0;
        while g.norm() > *inner_tol && iters < *inner_max_iters {
            x.x2 -= &g * *inner_step;
            x = self.oracle.canonicalize(x);
            g = self.oracle.grad(f, f, &x);
            iters += 1;
            if !x.is_finite() {
                break;
            }
        }
        let residual = g.norm();
        if residual <= *inner_tol {
            Ok(x)
        } else {
            Err(Error::FollowerNonConvergence { residual, iterations: iters })
        }
    }

    /// `x_k = x_{k−1} − γ_k (direction + w_k)` where `field` is the driving
    /// field at `x_{k−1}`.
    pub(crate) fn advance(
        &mut self,
        x: &JointPoint,
        field: &JointPoint,
        k: u64,
        noise: Option<&JointPoint>,
    ) -> Result<JointPoint> {
        let g1 = self.schedules.rate(Player::Leader, k);
        let g2 = self.schedules.rate(Player::Follower, k);
        let mut dir = field.clone();
        if let UpdateRule::Lola = self.rule {
            let (l, f) = (Player::Leader, Player::Follower);
            let d2f1 = self.oracle.grad(l, f, x);
            // (D₂₁f₂)ᵀ v = D₁₂f₂ v
            let corr = self.oracle.sovp(f, l, f, x, &d2f1);
            dir.x1 -= corr * g2;
        }
        if let Some(w) = noise {
            dir = dir.offset(w, 1.0);
        }
        let mut next = JointPoint::new(&x.x1 - &dir.x1 * g1, x.x2.clone());
        match self.rule {
            UpdateRule::BestResponse { .. } => next = self.respond(next)?,
            _ => next.x2 -= &dir.x2 * g2,
        }
        Ok(self.oracle.canonicalize(next))
    }
}

/// One iteration of `rule` from `x` at iteration index `k ≥ 1`, with an
/// optional noise draw `(w₁, w₂)`.
///
/// For [`UpdateRule::BestResponse`] the follower first best-responds at `x`,
/// the leader then steps along `Df₁`, and the follower responds again, so
/// the returned point lies on the follower's reaction curve.
pub fn step<G: GameOracle + ?Sized>(
    rule: &UpdateRule,
    oracle: &G,
    x: &JointPoint,
    k: u64,
    schedules: &Schedules,
    noise: Option<&JointPoint>,
) -> Result<JointPoint> {
    x.check_dims(oracle.dims(), "step")?;
    let mut stepper = Stepper::new(rule, oracle, schedules);
    let x = stepper.respond(x.clone())?;
    let field = stepper.field(&x)?;
    let next = stepper.advance(&x, &field, k, noise)?;
    if !next.is_finite() {
        return Err(Error::Evaluation(format!("non-finite iterate at k = {k}")));
    }
    Ok(next)
}
