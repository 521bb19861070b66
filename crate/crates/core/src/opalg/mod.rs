//! Matrix-free linear algebra over game operators.
//!
//! Second-order information is only ever touched through [`LinearMap`]s.
//! Dense matrices appear when an operator is small enough to
//! [`materialize`], which is bounded by the dense cap (default 64, override
//! with the `STACKDYN_DENSE_CAP` environment variable).

mod cg;
mod eig;
mod operators;

use std::sync::OnceLock;

use nalgebra::{DMatrix, DVector};

use crate::{Error, Result};

pub use cg::{cg_solve, CgOutcome, SolveConfig};
pub use eig::{eig_dense, eig_extremal, EigMethod, Eigen, SpectrumMethod, SpectrumReport, Which};
pub use operators::{
    hessian_block, jacobian_simgrad, jacobian_stackelberg, schur_complement, DEFAULT_JS_STEP,
};

pub const DEFAULT_DENSE_CAP: usize = 64;

type ApplyFn<'a> = dyn Fn(&DVector<f64>) -> Result<DVector<f64>> + Send + Sync + 'a;

/// A dimension-tagged linear operator known only through its action.
pub struct LinearMap<'a> {
    rows: usize,
    cols: usize,
    symmetric: bool,
    op: Box<ApplyFn<'a>>,
}

impl<'a> LinearMap<'a> {
    pub fn new<F>(rows: usize, cols: usize, symmetric: bool, op: F) -> Self
    where
        F: Fn(&DVector<f64>) -> Result<DVector<f64>> + Send + Sync + 'a,
    {
        Self {
            rows,
            cols,
            symmetric,
            op: Box::new(op),
        }
    }

    /// Wraps an infallible closure.
    pub fn from_fn<F>(rows: usize, cols: usize, symmetric: bool, op: F) -> Self
    where
        F: Fn(&DVector<f64>) -> DVector<f64> + Send + Sync + 'a,
    {
        Self::new(rows, cols, symmetric, move |v| Ok(op(v)))
    }

    pub fn from_matrix(m: DMatrix<f64>) -> LinearMap<'static> {
        let symmetric = m.is_square() && (&m - m.transpose()).amax() <= 1e-12 * (1.0 + m.amax());
        LinearMap::from_fn(m.nrows(), m.ncols(), symmetric, move |v| &m * v)
    }

    pub fn identity(n: usize) -> LinearMap<'static> {
        LinearMap::from_fn(n, n, true, |v| v.clone())
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn is_square(&self) -> bool {
        self.rows == self.cols
    }

    pub fn symmetric_hint(&self) -> bool {
        self.symmetric
    }

    pub fn apply(&self, v: &DVector<f64>) -> Result<DVector<f64>> {
        if v.len() != self.cols {
            return Err(Error::DimensionMismatch {
                context: "LinearMap::apply",
                expected: self.cols,
                got: v.len(),
            });
        }
        let out = (self.op)(v)?;
        if out.len() != self.rows {
            return Err(Error::DimensionMismatch {
                context: "LinearMap::apply output",
                expected: self.rows,
                got: out.len(),
            });
        }
        Ok(out)
    }

    /// `self + shift * I`.
    pub fn shifted(self, shift: f64) -> LinearMap<'a> {
        if shift == 0.0 {
            return self;
        }
        let LinearMap {
            rows,
            cols,
            symmetric,
            op,
        } = self;
        LinearMap::new(rows, cols, symmetric, move |v| {
            let mut out = op(v)?;
            out.axpy(shift, v, 1.0);
            Ok(out)
        })
    }
}

impl std::fmt::Debug for LinearMap<'_> {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("LinearMap")
            .field("rows", &self.rows)
            .field("cols", &self.cols)
            .field("symmetric", &self.symmetric)
            .finish()
    }
}

/// The process-wide dense cap, read once from `STACKDYN_DENSE_CAP`.
pub fn dense_cap() -> usize {
    static CAP: OnceLock<usize> = OnceLock::new();
    *CAP.get_or_init(|| {
        std::env::var("STACKDYN_DENSE_CAP")
            .ok()
            .and_then(|s| s.trim().parse::<usize>().ok())
            .filter(|&c| c > 0)
            .unwrap_or(DEFAULT_DENSE_CAP)
    })
}

pub fn materialize(a: &LinearMap) -> Result<DMatrix<f64>> {
    materialize_with_cap(a, dense_cap())
}

/// Builds the dense matrix column by column from canonical basis vectors.
/// The cap bounds the larger of the two dimensions.
pub fn materialize_with_cap(a: &LinearMap, cap: usize) -> Result<DMatrix<f64>> {
    if a.rows.max(a.cols) > cap {
        return Err(Error::SizeCap {
            rows: a.rows,
            cols: a.cols,
            cap,
        });
    }
    let mut m = DMatrix::zeros(a.rows, a.cols);
    let mut e = DVector::zeros(a.cols);
    for j in 0..a.cols {
        e[j] = 1.0;
        let col = a.apply(&e)?;
        m.set_column(j, &col);
        e[j] = 0.0;
    }
    Ok(m)
}
