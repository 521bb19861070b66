use serde::{Deserialize, Serialize};

use crate::opalg::{
    eig_dense, eig_extremal, hessian_block, jacobian_simgrad, materialize, schur_complement, EigMethod, LinearMap,
    Which,
};
use crate::oracle::{GameOracle, JointPoint, Player};
use crate::Result;

/// Extremal real eigenvalues of one operator at iteration `k`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpectrumSnapshot {
    pub k: u64,
    /// One of `J`, `S1`, `D11f1`, `D22f2`.
    pub operator: String,
    /// Ascending.
    pub smallest: Vec<f64>,
    /// Descending.
    pub largest: Vec<f64>,
}

/// The `n` smallest and `n` largest real eigenvalues (real parts for
/// nonsymmetric operators).
pub fn extremal_real(op: &LinearMap, n: usize) -> Result<(Vec<f64>, Vec<f64>)> {
    let n = n.min(op.rows()).max(1);
    if op.symmetric_hint() {
        let lo = eig_extremal(op, n, Which::Smallest, EigMethod::Auto)?.real_parts();
        let mut hi = eig_extremal(op, n, Which::Largest, EigMethod::Auto)?.real_parts();
        hi.reverse();
        Ok((lo, hi))
    } else {
        let re = eig_dense(&materialize(op)?)?.real_parts();
        let lo = re[..n].to_vec();
        let hi = re.iter().rev().take(n).copied().collect();
        Ok((lo, hi))
    }
}

/// Spectra of the game Jacobian, the leader Schur complement and both
/// individual Hessians at `x`.
pub fn spectrum_snapshot<G: GameOracle + ?Sized>(
    oracle: &G,
    x: &JointPoint,
    eta: f64,
    n: usize,
    k: u64,
) -> Result<Vec<SpectrumSnapshot>> {
    let (l, f) = (Player::Leader, Player::Follower);
    let ops: [(&str, LinearMap); 4] = [
        ("J", jacobian_simgrad(oracle, x)),
        ("S1", schur_complement(oracle, x, eta)),
        ("D11f1", hessian_block(oracle, x, l, l, l)),
        ("D22f2", hessian_block(oracle, x, f, f, f)),
    ];
    ops.iter()
        .map(|(name, op)| {
            let (smallest, largest) = extremal_real(op, n)?;
            Ok(SpectrumSnapshot { k, operator: name.to_string(), smallest, largest })
        })
        .collect()
}
