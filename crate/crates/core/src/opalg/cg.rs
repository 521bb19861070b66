use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use super::LinearMap;
use crate::{Error, Result};

/// Budget and warm start for a conjugate-gradient solve.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SolveConfig {
    pub max_iters: usize,
    /// Stop once `‖Ax − b‖ ≤ tol · ‖b‖`.
    pub tol: f64,
    #[serde(skip)]
    pub warm_start: Option<DVector<f64>>,
}

impl Default for SolveConfig {
    fn default() -> Self {
        Self {
            max_iters: 5,
            tol: 1e-10,
            warm_start: None,
        }
    }
}

impl SolveConfig {
    /// Budget equal to the system dimension, no warm start.
    pub fn exact(dim: usize) -> Self {
        Self {
            max_iters: dim.max(1),
            tol: 1e-13,
            warm_start: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CgOutcome {
    pub x: DVector<f64>,
    /// Final `‖Ax − b‖₂`.
    pub residual: f64,
    pub iterations: usize,
    pub converged: bool,
}

const BREAKDOWN_EPS: f64 = 1e-13;

/// Conjugate gradients on a square operator for at most
/// `min(max_iters, rows)` steps.
///
/// Breakdown is declared when the curvature `pᵀAp` is negligible relative to
/// `‖p‖‖Ap‖`; negative curvature is tolerated so that nonsingular indefinite
/// systems of small dimension still solve.
pub fn cg_solve(a: &LinearMap, b: &DVector<f64>, cfg: &SolveConfig) -> Result<CgOutcome> {
    if !a.is_square() {
        return Err(Error::Precondition(format!(
            "cg_solve needs a square operator, got {}x{}",
            a.rows(),
            a.cols()
        )));
    }
    if b.len() != a.rows() {
        return Err(Error::DimensionMismatch {
            context: "cg_solve rhs",
            expected: a.rows(),
            got: b.len(),
        });
    }
    let b_norm = b.norm();
    if b_norm == 0.0 {
        return Ok(CgOutcome {
            x: DVector::zeros(b.len()),
            residual: 0.0,
            iterations: 0,
            converged: true,
        });
    }
    let threshold = cfg.tol * b_norm;

    let mut x = match &cfg.warm_start {
        Some(w) if w.len() == b.len() && w.iter().all(|v| v.is_finite()) => w.clone(),
        _ => DVector::zeros(b.len()),
    };
    let mut r = if x.iter().any(|&v| v != 0.0) {
        b - a.apply(&x)?
    } else {
        b.clone()
    };
    let mut rs = r.norm_squared();
    if rs.sqrt() <= threshold {
        return Ok(CgOutcome {
            x,
            residual: rs.sqrt(),
            iterations: 0,
            converged: true,
        });
    }
    let mut p = r.clone();
    let budget = cfg.max_iters.max(1).min(a.rows());
    let mut iterations = 0;
    for it in 0..budget {
        let ap = a.apply(&p)?;
        let pap = p.dot(&ap);
        if !pap.is_finite() || pap.abs() <= BREAKDOWN_EPS * p.norm() * ap.norm() {
            return Err(Error::IndefiniteOperator {
                curvature: pap,
                iteration: it,
            });
        }
        let alpha = rs / pap;
        x.axpy(alpha, &p, 1.0);
        r.axpy(-alpha, &ap, 1.0);
        iterations = it + 1;
        let rs_new = r.norm_squared();
        if rs_new.sqrt() <= threshold {
            break;
        }
        p = &r + &p * (rs_new / rs);
        rs = rs_new;
    }
    // report the true residual rather than the recurrence estimate
    let residual = (b - a.apply(&x)?).norm();
    Ok(CgOutcome {
        x,
        residual,
        iterations,
        converged: residual <= 10.0 * threshold,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::DMatrix;
    use proptest::prelude::*;

    #[test]
    fn identity_in_one_iteration() {
        let a = LinearMap::identity(5);
        let b = DVector::from_vec(vec![1.0, -2.0, 3.0, 0.5, 7.0]);
        let out = cg_solve(&a, &b, &SolveConfig::default()).unwrap();
        assert_eq!(out.iterations, 1);
        assert!((out.x - b).amax() == 0.0);
        assert!(out.converged);
    }

    #[test]
    fn diagonal_two_by_two() {
        let a = LinearMap::from_matrix(DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, 2.0]));
        let b = DVector::from_vec(vec![2.0, 2.0]);
        let out = cg_solve(&a, &b, &SolveConfig::default()).unwrap();
        assert!(out.iterations <= 2);
        assert!(out.residual < 1e-12);
        assert!((out.x[0] - 2.0).abs() < 1e-12 && (out.x[1] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn scaled_identity_solves_in_one_step() {
        let eta = 5000.0;
        let a = LinearMap::from_fn(9, 9, true, move |v| v * eta);
        let b = DVector::from_fn(9, |i, _| i as f64 - 4.0);
        let out = cg_solve(&a, &b, &SolveConfig::default()).unwrap();
        assert_eq!(out.iterations, 1);
        assert!((out.x - &b / eta).amax() < 1e-15);
    }

    #[test]
    fn zero_operator_breaks_down() {
        let a = LinearMap::from_fn(3, 3, true, |v| v * 0.0);
        let b = DVector::from_element(3, 1.0);
        assert!(matches!(
            cg_solve(&a, &b, &SolveConfig::default()),
            Err(Error::IndefiniteOperator { .. })
        ));
    }

    #[test]
    fn warm_start_at_solution_needs_no_iterations() {
        let a = LinearMap::from_matrix(DMatrix::from_row_slice(2, 2, &[4.0, 1.0, 1.0, 3.0]));
        let b = DVector::from_vec(vec![1.0, 2.0]);
        let exact = cg_solve(&a, &b, &SolveConfig::exact(2)).unwrap();
        let cfg = SolveConfig {
            warm_start: Some(exact.x.clone()),
            ..SolveConfig::default()
        };
        let warm = cg_solve(&a, &b, &cfg).unwrap();
        assert_eq!(warm.iterations, 0);
    }

    fn spd(n: usize, seed: u64) -> DMatrix<f64> {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let g = DMatrix::from_fn(n, n, |_, _| rng.random_range(-1.0..1.0));
        let q = g.qr().q();
        let d = DMatrix::from_diagonal(&DVector::from_fn(n, |_, _| rng.random_range(1.0..10.0)));
        &q * d * q.transpose()
    }

    proptest! {
        #[test]
        fn spd_terminates_within_rank_steps(n in 1usize..=16, seed in any::<u64>()) {
            let m = spd(n, seed);
            let b = DVector::from_fn(n, |i, _| (i as f64 + 1.0).sin());
            let a = LinearMap::from_matrix(m.clone());
            let out = cg_solve(&a, &b, &SolveConfig { max_iters: n, tol: 1e-12, warm_start: None }).unwrap();
            prop_assert!(out.iterations <= n);
            prop_assert!(out.residual < 1e-8 * (1.0 + b.norm()));
        }
    }
}
