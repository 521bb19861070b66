use std::f64::consts::PI;

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use crate::oracle::{BlockDims, GameOracle, JointPoint, Player};
use crate::{Error, Result};

/// Location game on the torus: `f_i = −α_i cos(θ_i − φ_i) + cos(θ_i − θ_{−i})`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TorusGame {
    pub alpha: [f64; 2],
    pub phi: [f64; 2],
}

/// Wraps an angle into `(−π, π]`.
pub fn wrap_angle(theta: f64) -> f64 {
    let mut t = theta.rem_euclid(2.0 * PI);
    if t > PI {
        t -= 2.0 * PI;
    }
    t
}

impl TorusGame {
    pub fn new(alpha: [f64; 2], phi: [f64; 2]) -> Result<Self> {
        let g = Self { alpha, phi };
        g.validate()?;
        Ok(g)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.alpha[0] > 0.0 && self.alpha[1] > 0.0) {
            return Err(Error::Config(format!(
                "torus alpha must be positive, got {:?}",
                self.alpha
            )));
        }
        Ok(())
    }

    fn angles(x: &JointPoint, p: Player) -> (f64, f64) {
        (x.block(p)[0], x.block(p.other())[0])
    }
}

impl GameOracle for TorusGame {
    fn dims(&self) -> BlockDims {
        BlockDims { d1: 1, d2: 1 }
    }

    fn cost(&self, player: Player, x: &JointPoint) -> f64 {
        let i = player.index();
        let (own, other) = Self::angles(x, player);
        -self.alpha[i] * (own - self.phi[i]).cos() + (own - other).cos()
    }

    fn grad(&self, player: Player, block: Player, x: &JointPoint) -> DVector<f64> {
        let i = player.index();
        let (own, other) = Self::angles(x, player);
        let g = if block == player {
            self.alpha[i] * (own - self.phi[i]).sin() - (own - other).sin()
        } else {
            (own - other).sin()
        };
        DVector::from_element(1, g)
    }

    fn sovp(
        &self,
        player: Player,
        row: Player,
        col: Player,
        x: &JointPoint,
        v: &DVector<f64>,
    ) -> DVector<f64> {
        let i = player.index();
        let (own, other) = Self::angles(x, player);
        let coupling = (own - other).cos();
        let h = match (row == player, col == player) {
            (true, true) => self.alpha[i] * (own - self.phi[i]).cos() - coupling,
            (false, false) => -coupling,
            _ => coupling,
        };
        v * h
    }

    fn canonicalize(&self, x: JointPoint) -> JointPoint {
        JointPoint::new(x.x1.map(wrap_angle), x.x2.map(wrap_angle))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::oracle::omega;

    #[test]
    fn wrap_into_half_open_interval() {
        assert_eq!(wrap_angle(PI), PI);
        assert!((wrap_angle(-PI) - PI).abs() < 1e-15);
        assert!((wrap_angle(3.0 * PI / 2.0) + PI / 2.0).abs() < 1e-12);
        assert!((wrap_angle(0.3 + 4.0 * PI) - 0.3).abs() < 1e-12);
    }

    #[test]
    fn aligned_angles_have_zero_leader_field() {
        let g = TorusGame::new([1.0, 1.3], [0.4, 0.4]).unwrap();
        let w = omega(&g, &JointPoint::scalar(0.4, 0.4)).unwrap();
        assert!(w.x1[0].abs() < 1e-15);
    }

    #[test]
    fn periodic_in_each_angle() {
        let g = TorusGame::new([1.0, 1.3], [PI / 8.0, PI / 8.0]).unwrap();
        let x = JointPoint::scalar(0.3, -1.1);
        let shifted = JointPoint::scalar(0.3 + 2.0 * PI, -1.1 - 2.0 * PI);
        let v = DVector::from_element(1, 1.0);
        for p in Player::BOTH {
            assert!((g.cost(p, &x) - g.cost(p, &shifted)).abs() < 1e-12);
            for b in Player::BOTH {
                assert!((g.grad(p, b, &x) - g.grad(p, b, &shifted)).amax() < 1e-12);
                for c in Player::BOTH {
                    assert!((g.sovp(p, b, c, &x, &v) - g.sovp(p, b, c, &shifted, &v)).amax() < 1e-12);
                }
            }
        }
    }

    #[test]
    fn rejects_nonpositive_alpha() {
        assert!(TorusGame::new([0.0, 1.0], [0.0, 0.0]).is_err());
    }
}
