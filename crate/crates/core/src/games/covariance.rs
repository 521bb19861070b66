use nalgebra::{DMatrix, DVector};
use rand::Rng;

use crate::oracle::{BlockDims, GameOracle, JointPoint, Player};
use crate::{rng, Error, Result};

/// Wasserstein GAN that learns a covariance matrix with a linear generator
/// `G_V(z) = Vz` (leader) and a quadratic discriminator `D_W(x) = xᵀWx`
/// (follower):
///
/// `f₁ = ⟨W, Σ − VVᵀ⟩`, `f₂ = −f₁ + (η/2)‖W‖²_F`.
///
/// Both players are flattened column-major: `x₁ = vec(V)`, `x₂ = vec(W)`.
#[derive(Debug, Clone, PartialEq)]
pub struct CovarianceGan {
    sigma: DMatrix<f64>,
    eta: f64,
}

impl CovarianceGan {
    pub fn new(sigma: DMatrix<f64>, eta: f64) -> Result<Self> {
        let m = sigma.nrows();
        if m == 0 || !sigma.is_square() {
            return Err(Error::Config("covariance target must be a nonempty square matrix".into()));
        }
        if (&sigma - sigma.transpose()).amax() > 1e-12 * (1.0 + sigma.amax()) {
            return Err(Error::Config("covariance target must be symmetric".into()));
        }
        if sigma.clone().cholesky().is_none() {
            return Err(Error::Config("covariance target must be positive definite".into()));
        }
        if !(eta >= 0.0) {
            return Err(Error::Config(format!("eta must be nonnegative, got {eta}")));
        }
        Ok(Self { sigma, eta })
    }

    /// A well-conditioned target `AAᵀ/m + ½I` with standard normal `A`.
    pub fn sample_sigma(m: usize, seed: u64) -> DMatrix<f64> {
        let mut rng = rng::stream(seed, 0, 0);
        let a = DMatrix::from_fn(m, m, |_, _| rng.sample::<f64, _>(rand_distr::StandardNormal));
        &a * a.transpose() / m as f64 + DMatrix::identity(m, m) * 0.5
    }

    pub fn m(&self) -> usize {
        self.sigma.nrows()
    }

    pub fn sigma(&self) -> &DMatrix<f64> {
        &self.sigma
    }

    pub fn eta(&self) -> f64 {
        self.eta
    }

    fn unflatten(&self, v: &DVector<f64>) -> DMatrix<f64> {
        let m = self.m();
        DMatrix::from_column_slice(m, m, v.as_slice())
    }

    fn flatten(m: DMatrix<f64>) -> DVector<f64> {
        DVector::from_column_slice(m.as_slice())
    }

    pub fn point(v: &DMatrix<f64>, w: &DMatrix<f64>) -> JointPoint {
        JointPoint::new(
            DVector::from_column_slice(v.as_slice()),
            DVector::from_column_slice(w.as_slice()),
        )
    }

    pub fn matrices(&self, x: &JointPoint) -> (DMatrix<f64>, DMatrix<f64>) {
        (self.unflatten(&x.x1), self.unflatten(&x.x2))
    }

    /// `(V*, 0)` with `V*` the Cholesky factor of `Σ`.
    pub fn equilibrium(&self) -> JointPoint {
        let l = self.sigma.clone().cholesky().expect("validated SPD").l();
        Self::point(&l, &DMatrix::zeros(self.m(), self.m()))
    }

    /// `‖Σ − VVᵀ‖₂`.
    pub fn generator_gap(&self, x: &JointPoint) -> f64 {
        let (v, _) = self.matrices(x);
        spectral_norm_sym(&(&self.sigma - &v * v.transpose()))
    }

    /// `‖(W + Wᵀ)/2‖₂`.
    pub fn discriminator_gap(&self, x: &JointPoint) -> f64 {
        let (_, w) = self.matrices(x);
        spectral_norm_sym(&((&w + w.transpose()) * 0.5))
    }

    fn sign(p: Player) -> f64 {
        match p {
            Player::Leader => 1.0,
            Player::Follower => -1.0,
        }
    }
}

fn spectral_norm_sym(m: &DMatrix<f64>) -> f64 {
    m.clone()
        .symmetric_eigenvalues()
        .iter()
        .fold(0.0, |acc, v| acc.max(v.abs()))
}

impl GameOracle for CovarianceGan {
    fn dims(&self) -> BlockDims {
        let n = self.m() * self.m();
        BlockDims { d1: n, d2: n }
    }

    fn cost(&self, player: Player, x: &JointPoint) -> f64 {
        let (v, w) = self.matrices(x);
        let f = w.dot(&(&self.sigma - &v * v.transpose()));
        match player {
            Player::Leader => f,
            Player::Follower => -f + 0.5 * self.eta * w.norm_squared(),
        }
    }

    fn grad(&self, player: Player, block: Player, x: &JointPoint) -> DVector<f64> {
        let (v, w) = self.matrices(x);
        let s = Self::sign(player);
        let g = match block {
            Player::Leader => -(&w + w.transpose()) * &v * s,
            Player::Follower => {
                let base = (&self.sigma - &v * v.transpose()) * s;
                if player == Player::Follower {
                    base + &w * self.eta
                } else {
                    base
                }
            }
        };
        Self::flatten(g)
    }

    fn sovp(
        &self,
        player: Player,
        row: Player,
        col: Player,
        x: &JointPoint,
        dir: &DVector<f64>,
    ) -> DVector<f64> {
        let (v, w) = self.matrices(x);
        let d = self.unflatten(dir);
        let s = Self::sign(player);
        let out = match (row, col) {
            (Player::Leader, Player::Leader) => -(&w + w.transpose()) * &d * s,
            (Player::Leader, Player::Follower) => -(&d + d.transpose()) * &v * s,
            (Player::Follower, Player::Leader) => -(&d * v.transpose() + &v * d.transpose()) * s,
            (Player::Follower, Player::Follower) => {
                if player == Player::Follower {
                    d * self.eta
                } else {
                    DMatrix::zeros(self.m(), self.m())
                }
            }
        };
        Self::flatten(out)
    }

    fn antisymmetric_coupling(&self) -> bool {
        true
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::opalg::{cg_solve, SolveConfig};
    use crate::oracle::{follower_hessian, omega, omega_stackelberg};

    fn scalar(sigma: f64, eta: f64) -> CovarianceGan {
        CovarianceGan::new(DMatrix::from_element(1, 1, sigma), eta).unwrap()
    }

    #[test]
    fn scalar_equilibrium() {
        let g = scalar(4.0, 0.5);
        let x = JointPoint::scalar(2.0, 0.0);
        let w = omega(&g, &x).unwrap();
        assert_eq!((w.x1[0], w.x2[0]), (0.0, 0.0));
        assert_eq!(g.generator_gap(&x), 0.0);
    }

    #[test]
    fn leader_gradient_vanishes_on_zero_discriminator() {
        let sigma = CovarianceGan::sample_sigma(3, 1);
        let g = CovarianceGan::new(sigma, 0.6).unwrap();
        let v = DMatrix::from_fn(3, 3, |i, j| (i as f64) - 0.5 * j as f64);
        let x = CovarianceGan::point(&v, &DMatrix::zeros(3, 3));
        assert_eq!(g.grad(Player::Leader, Player::Leader, &x).amax(), 0.0);
    }

    #[test]
    fn follower_gradient_scalar_arithmetic() {
        let g = scalar(4.0, 2.0);
        let d = g.grad(Player::Follower, Player::Follower, &JointPoint::scalar(1.0, 1.0));
        assert_eq!(d[0], -1.0);
    }

    #[test]
    fn follower_hessian_is_eta_identity() {
        let g = CovarianceGan::new(CovarianceGan::sample_sigma(3, 2), 5000.0).unwrap();
        let x = CovarianceGan::point(&DMatrix::identity(3, 3), &DMatrix::from_element(3, 3, 0.1));
        let b = DVector::from_fn(9, |i, _| i as f64 + 1.0);
        let out = cg_solve(&follower_hessian(&g, &x, 0.0), &b, &SolveConfig::default()).unwrap();
        assert_eq!(out.iterations, 1);
        assert!((out.x - &b / 5000.0).amax() < 1e-15);
    }

    #[test]
    fn unregularized_follower_is_singular() {
        let g = CovarianceGan::new(CovarianceGan::sample_sigma(2, 3), 0.0).unwrap();
        let x = CovarianceGan::point(&DMatrix::identity(2, 2), &DMatrix::zeros(2, 2));
        assert!(matches!(
            omega_stackelberg(&g, &x, 0.0, &SolveConfig::default()),
            Err(Error::SingularFollowerHessian { .. })
        ));
    }

    #[test]
    fn cholesky_point_is_equilibrium() {
        let g = CovarianceGan::new(CovarianceGan::sample_sigma(3, 4), 0.6).unwrap();
        let x = g.equilibrium();
        assert!(omega(&g, &x).unwrap().norm() < 1e-12);
        assert!(g.generator_gap(&x) < 1e-12);
    }

    #[test]
    fn rejects_indefinite_target() {
        let s = DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 2.0, 1.0]);
        assert!(CovarianceGan::new(s, 1.0).is_err());
    }
}
