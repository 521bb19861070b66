use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use crate::oracle::{central_sovp, BlockDims, GameOracle, JointPoint, Player};

/// Zero-sum game `(f, −f)` with
/// `f(x) = −exp(−0.01(x₁² + x₂²)) ((a x₁² + x₂)² + (b x₂² + x₁)²)`.
///
/// Gradients are analytic; second-order products are central differences
/// of the analytic gradient, so the oracle reports itself approximate.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PolyZeroSumGame {
    pub a: f64,
    pub b: f64,
}

const SOVP_STEP: f64 = 1e-5;

impl PolyZeroSumGame {
    pub fn new(a: f64, b: f64) -> Self {
        Self { a, b }
    }

    pub fn value(&self, x1: f64, x2: f64) -> f64 {
        let u = self.a * x1 * x1 + x2;
        let v = self.b * x2 * x2 + x1;
        -(-0.01 * (x1 * x1 + x2 * x2)).exp() * (u * u + v * v)
    }

    /// `(∂f/∂x₁, ∂f/∂x₂)`.
    pub fn gradient(&self, x1: f64, x2: f64) -> (f64, f64) {
        let e = (-0.01 * (x1 * x1 + x2 * x2)).exp();
        let u = self.a * x1 * x1 + x2;
        let v = self.b * x2 * x2 + x1;
        let s = u * u + v * v;
        let g1 = -e * (-0.02 * x1 * s + 4.0 * self.a * x1 * u + 2.0 * v);
        let g2 = -e * (-0.02 * x2 * s + 2.0 * u + 4.0 * self.b * x2 * v);
        (g1, g2)
    }
}

fn sign(p: Player) -> f64 {
    match p {
        Player::Leader => 1.0,
        Player::Follower => -1.0,
    }
}

impl GameOracle for PolyZeroSumGame {
    fn dims(&self) -> BlockDims {
        BlockDims { d1: 1, d2: 1 }
    }

    fn cost(&self, player: Player, x: &JointPoint) -> f64 {
        sign(player) * self.value(x.x1[0], x.x2[0])
    }

    fn grad(&self, player: Player, block: Player, x: &JointPoint) -> DVector<f64> {
        let (g1, g2) = self.gradient(x.x1[0], x.x2[0]);
        let g = match block {
            Player::Leader => g1,
            Player::Follower => g2,
        };
        DVector::from_element(1, sign(player) * g)
    }

    fn sovp(
        &self,
        player: Player,
        row: Player,
        col: Player,
        x: &JointPoint,
        v: &DVector<f64>,
    ) -> DVector<f64> {
        let h = SOVP_STEP * x.amax().max(1.0);
        central_sovp(|p| self.grad(player, row, p), x, col, v, h)
            .unwrap_or_else(|_| DVector::from_element(1, f64::NAN))
    }

    fn is_approximate(&self) -> bool {
        true
    }

    fn zero_sum(&self) -> bool {
        true
    }
}
