use nalgebra::{DMatrix, DVector};

use super::{cg_solve, dense_cap, LinearMap, SolveConfig};
use crate::oracle::{follower_hessian, omega_stackelberg, GameOracle, JointPoint, Player};
use crate::{Error, Result};

/// Base central-difference step for `J_S`, scaled by `max(1, ‖x‖∞)`.
pub const DEFAULT_JS_STEP: f64 = 1e-4;

/// `D_{row,col} f_player(x)` as an operator from block `col` to block `row`.
pub fn hessian_block<'a, G: GameOracle + ?Sized>(
    oracle: &'a G,
    x: &'a JointPoint,
    player: Player,
    row: Player,
    col: Player,
) -> LinearMap<'a> {
    let dims = oracle.dims();
    LinearMap::from_fn(dims.block(row), dims.block(col), row == col, move |v| {
        oracle.sovp(player, row, col, x, v)
    })
}

/// Jacobian of `ω`: `[[D₁²f₁, D₁₂f₁], [D₂₁f₂, D₂²f₂]]`.
pub fn jacobian_simgrad<'a, G: GameOracle + ?Sized>(
    oracle: &'a G,
    x: &'a JointPoint,
) -> LinearMap<'a> {
    let dims = oracle.dims();
    let n = dims.total();
    LinearMap::new(n, n, false, move |v| {
        let v = JointPoint::from_flat(dims, v.as_slice())?;
        let (l, f) = (Player::Leader, Player::Follower);
        let top = oracle.sovp(l, l, l, x, &v.x1) + oracle.sovp(l, l, f, x, &v.x2);
        let bottom = oracle.sovp(f, f, l, x, &v.x1) + oracle.sovp(f, f, f, x, &v.x2);
        Ok(JointPoint::new(top, bottom).to_flat())
    })
}

/// Leader Schur complement `v ↦ D₁²f₁v − D₁₂f₁ (D₂²f₂ + ηI)⁻¹ D₂₁f₂ v`.
///
/// Inner solves use a budget equal to `d₂`; a failed solve surfaces as
/// [`Error::SingularFollowerHessian`] from `apply`.
pub fn schur_complement<'a, G: GameOracle + ?Sized>(
    oracle: &'a G,
    x: &'a JointPoint,
    eta: f64,
) -> LinearMap<'a> {
    let dims = oracle.dims();
    let symmetric = oracle.antisymmetric_coupling();
    let hess = follower_hessian(oracle, x, eta);
    LinearMap::new(dims.d1, dims.d1, symmetric, move |v| {
        let (l, f) = (Player::Leader, Player::Follower);
        let coupled = oracle.sovp(f, f, l, x, v);
        let solve = match cg_solve(&hess, &coupled, &SolveConfig::exact(dims.d2)) {
            Ok(out) => out,
            Err(Error::IndefiniteOperator { .. }) => {
                return Err(Error::SingularFollowerHessian {
                    residual: coupled.norm(),
                })
            }
            Err(e) => return Err(e),
        };
        if !solve.converged {
            return Err(Error::SingularFollowerHessian {
                residual: solve.residual,
            });
        }
        Ok(oracle.sovp(l, l, l, x, v) - oracle.sovp(l, l, f, x, &solve.x))
    })
}

/// Jacobian of `ω_S` by central differences (the oracle carries no third
/// derivatives). `fd_step` is scaled by `max(1, ‖x‖∞)`.
pub fn jacobian_stackelberg<G: GameOracle + ?Sized>(
    oracle: &G,
    x: &JointPoint,
    eta: f64,
    fd_step: f64,
) -> Result<DMatrix<f64>> {
    let dims = oracle.dims();
    x.check_dims(dims, "jacobian_stackelberg")?;
    let n = dims.total();
    let cap = dense_cap();
    if n > cap {
        return Err(Error::SizeCap {
            rows: n,
            cols: n,
            cap,
        });
    }
    let h = fd_step * x.amax().max(1.0);
    let solver = SolveConfig::exact(dims.d2);
    let base = x.to_flat();
    let mut jac = DMatrix::zeros(n, n);
    for j in 0..n {
        let mut plus = base.clone();
        plus[j] += h;
        let mut minus = base.clone();
        minus[j] -= h;
        let fp = omega_stackelberg(oracle, &JointPoint::from_flat(dims, plus.as_slice())?, eta, &solver)?;
        let fm = omega_stackelberg(oracle, &JointPoint::from_flat(dims, minus.as_slice())?, eta, &solver)?;
        let col: DVector<f64> = (fp.to_flat() - fm.to_flat()) / (2.0 * h);
        jac.set_column(j, &col);
    }
    Ok(jac)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::opalg::materialize;
    use crate::oracle::BlockDims;

    /// f = ½a x₁² + b x₁x₂ − ½c x₂², f₂ = −f.
    struct Scalar {
        a: f64,
        b: f64,
        c: f64,
    }

    impl GameOracle for Scalar {
        fn dims(&self) -> BlockDims {
            BlockDims { d1: 1, d2: 1 }
        }
        fn cost(&self, p: Player, x: &JointPoint) -> f64 {
            let (u, w) = (x.x1[0], x.x2[0]);
            let f = 0.5 * self.a * u * u + self.b * u * w - 0.5 * self.c * w * w;
            if p == Player::Leader { f } else { -f }
        }
        fn grad(&self, p: Player, block: Player, x: &JointPoint) -> DVector<f64> {
            let (u, w) = (x.x1[0], x.x2[0]);
            let g = match block {
                Player::Leader => self.a * u + self.b * w,
                Player::Follower => self.b * u - self.c * w,
            };
            DVector::from_element(1, if p == Player::Leader { g } else { -g })
        }
        fn sovp(&self, p: Player, r: Player, c: Player, _: &JointPoint, v: &DVector<f64>) -> DVector<f64> {
            let h = match (r, c) {
                (Player::Leader, Player::Leader) => self.a,
                (Player::Follower, Player::Follower) => -self.c,
                _ => self.b,
            };
            v * if p == Player::Leader { h } else { -h }
        }
        fn zero_sum(&self) -> bool {
            true
        }
    }

    fn origin() -> JointPoint {
        JointPoint::scalar(0.0, 0.0)
    }

    #[test]
    fn simgrad_jacobian_of_quadratic() {
        let g = Scalar { a: 1.0, b: 2.0, c: 1.0 };
        let x = origin();
        let m = materialize(&jacobian_simgrad(&g, &x)).unwrap();
        assert_eq!(m, DMatrix::from_row_slice(2, 2, &[1.0, 2.0, -2.0, 1.0]));
        let cross = materialize(&hessian_block(&g, &x, Player::Follower, Player::Follower, Player::Leader)).unwrap();
        assert_eq!(cross[(0, 0)], -2.0);
    }

    #[test]
    fn schur_of_quadratics() {
        for (a, b, c, want) in [(1.0, 2.0, 1.0, 5.0), (-1.0, 2.0, 2.0, 1.0), (3.0, 0.0, 2.0, 3.0)] {
            let g = Scalar { a, b, c };
            let x = origin();
            let s = schur_complement(&g, &x, 0.0);
            assert!(s.symmetric_hint());
            let m = materialize(&s).unwrap();
            assert!((m[(0, 0)] - want).abs() < 1e-12, "{a} {b} {c}: {}", m[(0, 0)]);
        }
    }

    #[test]
    fn stackelberg_jacobian_of_quadratics() {
        for (a, b, c) in [(1.0, 2.0, 1.0), (-1.0, 2.0, 2.0)] {
            let g = Scalar { a, b, c };
            let x = JointPoint::scalar(0.3, -0.8);
            let js = jacobian_stackelberg(&g, &x, 0.0, DEFAULT_JS_STEP).unwrap();
            let want = DMatrix::from_row_slice(2, 2, &[a + b * b / c, 0.0, -b, c]);
            assert!((js - want).amax() < 1e-8);
        }
    }

    #[test]
    fn stackelberg_jacobian_singular_follower() {
        let g = Scalar { a: 1.0, b: 1.0, c: 0.0 };
        let x = JointPoint::scalar(0.5, 0.5);
        assert!(matches!(
            jacobian_stackelberg(&g, &x, 0.0, DEFAULT_JS_STEP),
            Err(Error::SingularFollowerHessian { .. })
        ));
        // regularization restores solvability
        assert!(jacobian_stackelberg(&g, &x, 1.0, DEFAULT_JS_STEP).is_ok());
    }
}
