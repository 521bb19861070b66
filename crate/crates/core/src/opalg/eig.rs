use nalgebra::{Complex, DMatrix, DVector, SymmetricEigen};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{dense_cap, materialize, LinearMap};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Eigen {
    pub re: f64,
    pub im: f64,
    /// Backward-error estimate: `σ_min(M − λI)` for dense nonsymmetric input,
    /// `‖Av − λv‖` for a unit eigenvector otherwise.
    pub residual: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SpectrumMethod {
    Dense,
    Iterative,
}

/// Eigenvalues sorted by real part ascending (ties by imaginary part).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpectrumReport {
    pub eigs: Vec<Eigen>,
    pub method: SpectrumMethod,
    #[serde(rename = "k")]
    pub k_requested: usize,
    #[serde(skip, default = "yes")]
    pub converged: bool,
}

fn yes() -> bool {
    true
}

impl SpectrumReport {
    pub fn real_parts(&self) -> Vec<f64> {
        self.eigs.iter().map(|e| e.re).collect()
    }

    pub fn min_re(&self) -> f64 {
        self.eigs.iter().map(|e| e.re).fold(f64::INFINITY, f64::min)
    }

    pub fn max_abs_im(&self) -> f64 {
        self.eigs.iter().map(|e| e.im.abs()).fold(0.0, f64::max)
    }

    fn sort(&mut self) {
        self.eigs
            .sort_by(|a, b| a.re.total_cmp(&b.re).then(a.im.total_cmp(&b.im)));
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Which {
    Smallest,
    Largest,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum EigMethod {
    /// Dense when the dimension is within the cap, Lanczos otherwise.
    #[default]
    Auto,
    Dense,
    Iterative,
}

fn is_symmetric(m: &DMatrix<f64>) -> bool {
    m.is_square() && (m - m.transpose()).amax() <= 1e-14 * (1.0 + m.amax())
}

/// All eigenvalues of a dense square matrix.
pub fn eig_dense(m: &DMatrix<f64>) -> Result<SpectrumReport> {
    if !m.is_square() {
        return Err(Error::Precondition(format!(
            "eig_dense needs a square matrix, got {}x{}",
            m.nrows(),
            m.ncols()
        )));
    }
    if m.iter().any(|v| !v.is_finite()) {
        return Err(Error::Evaluation("eig_dense input".into()));
    }
    let n = m.nrows();
    let mut report = if is_symmetric(m) {
        let eig = SymmetricEigen::new(m.clone());
        let eigs = (0..n)
            .map(|i| {
                let v = eig.eigenvectors.column(i);
                let lambda = eig.eigenvalues[i];
                let residual = (m * v - v * lambda).norm();
                Eigen {
                    re: lambda,
                    im: 0.0,
                    residual,
                }
            })
            .collect();
        SpectrumReport {
            eigs,
            method: SpectrumMethod::Dense,
            k_requested: n,
            converged: true,
        }
    } else {
        let schur = m
            .clone()
            .try_schur(f64::EPSILON, 1000 * n.max(1))
            .ok_or(Error::EigenNonConvergence {
                found: 0,
                requested: n,
            })?;
        let values = schur.complex_eigenvalues();
        let mc: DMatrix<Complex<f64>> = m.map(|v| Complex::new(v, 0.0));
        let eigs = values
            .iter()
            .map(|&lambda| {
                let shifted = &mc - DMatrix::<Complex<f64>>::identity(n, n) * lambda;
                let residual = shifted
                    .singular_values()
                    .iter()
                    .copied()
                    .fold(f64::INFINITY, f64::min);
                Eigen {
                    re: lambda.re,
                    im: lambda.im,
                    residual,
                }
            })
            .collect();
        SpectrumReport {
            eigs,
            method: SpectrumMethod::Dense,
            k_requested: n,
            converged: true,
        }
    };
    report.sort();
    Ok(report)
}

/// The `k` smallest or largest eigenvalues of a symmetric operator.
pub fn eig_extremal(
    a: &LinearMap,
    k: usize,
    which: Which,
    method: EigMethod,
) -> Result<SpectrumReport> {
    if !a.is_square() || !a.symmetric_hint() {
        return Err(Error::Precondition(
            "eig_extremal needs a square operator flagged symmetric".into(),
        ));
    }
    let n = a.rows();
    if k == 0 || k > n {
        return Err(Error::Precondition(format!(
            "eig_extremal: k = {k} must be in 1..={n}"
        )));
    }
    let dense = match method {
        EigMethod::Auto => n <= dense_cap(),
        EigMethod::Dense => true,
        EigMethod::Iterative => false,
    };
    if dense {
        let m = materialize(a)?;
        let sym = (&m + m.transpose()) * 0.5;
        let full = eig_dense(&sym)?;
        let eigs = select(full.eigs, k, which);
        return Ok(SpectrumReport {
            eigs,
            method: SpectrumMethod::Dense,
            k_requested: k,
            converged: true,
        });
    }
    lanczos(a, k, which)
}

fn select(sorted: Vec<Eigen>, k: usize, which: Which) -> Vec<Eigen> {
    match which {
        Which::Smallest => sorted.into_iter().take(k).collect(),
        Which::Largest => {
            let skip = sorted.len() - k;
            sorted.into_iter().skip(skip).collect()
        }
    }
}

const LANCZOS_TOL: f64 = 1e-10;

/// Lanczos with full reorthogonalization. The Krylov space grows until the
/// requested Ritz pairs settle (and spans at least `min(n, 2k + 10)`
/// directions, so repeated eigenvalues picked up after a restart are not
/// missed) or the space is the whole domain.
fn lanczos(a: &LinearMap, k: usize, which: Which) -> Result<SpectrumReport> {
    let n = a.rows();
    let mut rng = ChaCha8Rng::seed_from_u64(0x1a2c_2057);
    let mut basis: Vec<DVector<f64>> = Vec::with_capacity(n);
    let mut alphas: Vec<f64> = Vec::new();
    let mut betas: Vec<f64> = Vec::new();

    let mut v = random_unit(&mut rng, n, &basis);
    let mut ritz: Option<(DVector<f64>, DMatrix<f64>)> = None;
    let mut scale = 0.0f64;
    let min_steps = n.min(2 * k + 10);

    for j in 0..n {
        let mut w = a.apply(&v)?;
        let alpha = v.dot(&w);
        w.axpy(-alpha, &v, 1.0);
        if let (Some(prev), Some(&beta)) = (basis.last(), betas.last()) {
            w.axpy(-beta, prev, 1.0);
        }
        basis.push(v.clone());
        for _ in 0..2 {
            for q in &basis {
                let c = q.dot(&w);
                w.axpy(-c, q, 1.0);
            }
        }
        alphas.push(alpha);
        let beta = w.norm();
        scale = scale.max(alpha.abs()).max(beta);

        let m = j + 1;
        if m >= k {
            let t = tridiagonal(&alphas, &betas);
            let eig = SymmetricEigen::new(t);
            let order = ordered_indices(&eig.eigenvalues, k, which);
            let settled = order.iter().all(|&i| {
                beta * eig.eigenvectors[(m - 1, i)].abs() <= LANCZOS_TOL * scale.max(1.0)
            });
            ritz = Some((eig.eigenvalues.clone(), eig.eigenvectors.clone()));
            if (settled && m >= min_steps) || m == n {
                break;
            }
        }
        if m == n {
            break;
        }
        if beta <= 1e-12 * scale.max(1.0) {
            // invariant subspace: continue from a fresh orthogonal direction
            betas.push(0.0);
            v = random_unit(&mut rng, n, &basis);
        } else {
            betas.push(beta);
            v = w / beta;
        }
    }

    let (values, vectors) = ritz.ok_or(Error::EigenNonConvergence {
        found: 0,
        requested: k,
    })?;
    let order = ordered_indices(&values, k, which);
    let mut eigs = Vec::with_capacity(k);
    let mut all_ok = true;
    for &i in &order {
        let mut y = DVector::zeros(n);
        for (row, q) in basis.iter().enumerate() {
            y.axpy(vectors[(row, i)], q, 1.0);
        }
        let theta = values[i];
        let residual = (a.apply(&y)? - &y * theta).norm();
        all_ok &= residual <= 1e-8 * scale.max(1.0);
        eigs.push(Eigen {
            re: theta,
            im: 0.0,
            residual,
        });
    }
    let mut report = SpectrumReport {
        eigs,
        method: SpectrumMethod::Iterative,
        k_requested: k,
        converged: all_ok,
    };
    report.sort();
    Ok(report)
}

fn tridiagonal(alphas: &[f64], betas: &[f64]) -> DMatrix<f64> {
    let m = alphas.len();
    let mut t = DMatrix::zeros(m, m);
    for i in 0..m {
        t[(i, i)] = alphas[i];
        if i + 1 < m {
            t[(i, i + 1)] = betas[i];
            t[(i + 1, i)] = betas[i];
        }
    }
    t
}

fn ordered_indices(values: &DVector<f64>, k: usize, which: Which) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..values.len()).collect();
    idx.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
    match which {
        Which::Smallest => idx.into_iter().take(k).collect(),
        Which::Largest => idx.into_iter().rev().take(k).collect(),
    }
}

fn random_unit(rng: &mut ChaCha8Rng, n: usize, basis: &[DVector<f64>]) -> DVector<f64> {
    loop {
        let mut v = DVector::from_fn(n, |_, _| rng.random_range(-1.0..1.0));
        for _ in 0..2 {
            for q in basis {
                let c = q.dot(&v);
                v.axpy(-c, q, 1.0);
            }
        }
        let norm = v.norm();
        if norm > 1e-8 {
            return v / norm;
        }
    }
}
