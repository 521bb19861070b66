use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use crate::oracle::{BlockDims, GameOracle, JointPoint, Player};
use crate::{Error, Result};

/// Quantity competition with linear inverse demand `P = A − q₁ − q₂`.
/// Costs are negated profits, `f_i = −(A − q₁ − q₂ − c_i) q_i`.
///
/// Only the smooth branch `P = A − Q` is modelled; points with `Q > A`
/// trigger a domain warning.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DuopolyGame {
    #[serde(rename = "A")]
    pub demand: f64,
    pub c1: f64,
    pub c2: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DuopolyEquilibria {
    pub nash: JointPoint,
    pub stackelberg: JointPoint,
    pub profits_nash: [f64; 2],
    pub profits_stackelberg: [f64; 2],
}

impl DuopolyGame {
    pub fn new(demand: f64, c1: f64, c2: f64) -> Result<Self> {
        let g = Self { demand, c1, c2 };
        g.validate()?;
        Ok(g)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.demand > self.c1 && self.demand > self.c2) {
            return Err(Error::Config(format!(
                "duopoly needs A > c1 and A > c2, got A={}, c=({}, {})",
                self.demand, self.c1, self.c2
            )));
        }
        Ok(())
    }

    fn unit_cost(&self, p: Player) -> f64 {
        match p {
            Player::Leader => self.c1,
            Player::Follower => self.c2,
        }
    }

    fn quantity(x: &JointPoint, p: Player) -> f64 {
        x.block(p)[0]
    }

    pub fn profit(&self, p: Player, x: &JointPoint) -> f64 {
        let (q1, q2) = (x.x1[0], x.x2[0]);
        (self.demand - q1 - q2 - self.unit_cost(p)) * Self::quantity(x, p)
    }

    /// Closed-form Cournot (simultaneous) and Stackelberg (leader-first) outcomes.
    pub fn equilibria(&self) -> DuopolyEquilibria {
        let (a, c1, c2) = (self.demand, self.c1, self.c2);
        let nash = JointPoint::scalar((a + c2 - 2.0 * c1) / 3.0, (a + c1 - 2.0 * c2) / 3.0);
        let stackelberg =
            JointPoint::scalar((a + c2 - 2.0 * c1) / 2.0, (a + 2.0 * c1 - 3.0 * c2) / 4.0);
        DuopolyEquilibria {
            profits_nash: [
                (a - 2.0 * c1 + c2).powi(2) / 9.0,
                (a - 2.0 * c2 + c1).powi(2) / 9.0,
            ],
            profits_stackelberg: [
                (a - 2.0 * c1 + c2).powi(2) / 8.0,
                (a + 2.0 * c1 - 3.0 * c2).powi(2) / 16.0,
            ],
            nash,
            stackelberg,
        }
    }
}

impl GameOracle for DuopolyGame {
    fn dims(&self) -> BlockDims {
        BlockDims { d1: 1, d2: 1 }
    }

    fn cost(&self, player: Player, x: &JointPoint) -> f64 {
        -self.profit(player, x)
    }

    fn grad(&self, player: Player, block: Player, x: &JointPoint) -> DVector<f64> {
        let (q1, q2) = (x.x1[0], x.x2[0]);
        let own = Self::quantity(x, player);
        let g = if block == player {
            -(self.demand - q1 - q2 - own - self.unit_cost(player))
        } else {
            own
        };
        DVector::from_element(1, g)
    }

    fn sovp(
        &self,
        player: Player,
        row: Player,
        col: Player,
        _x: &JointPoint,
        v: &DVector<f64>,
    ) -> DVector<f64> {
        let h = match (row == player, col == player) {
            (true, true) => 2.0,
            (false, false) => 0.0,
            _ => 1.0,
        };
        v * h
    }

    fn domain_warning(&self, x: &JointPoint) -> Option<String> {
        let total = x.x1[0] + x.x2[0];
        (total > self.demand).then(|| {
            format!(
                "total output {total:.3} exceeds demand intercept {}; price kink ignored",
                self.demand
            )
        })
    }
}
