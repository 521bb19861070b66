//! The game interface and finite-difference tooling around it.
//!
//! Block and cost indices both use [`Player`]: `Leader` is player/block 1,
//! `Follower` is player/block 2. A second-order vector product
//! `sovp(cost, row, col, x, v)` is the directional derivative of
//! `D_row f_cost` along block `col` in direction `v`, i.e. `D_{row,col} f_cost · v`.

use std::fmt;
use std::sync::Arc;

use nalgebra::DVector;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::opalg::{cg_solve, materialize, CgOutcome, LinearMap, SolveConfig};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Player {
    Leader,
    Follower,
}

impl Player {
    pub const BOTH: [Player; 2] = [Player::Leader, Player::Follower];

    pub fn index(self) -> usize {
        match self {
            Player::Leader => 0,
            Player::Follower => 1,
        }
    }

    pub fn other(self) -> Player {
        match self {
            Player::Leader => Player::Follower,
            Player::Follower => Player::Leader,
        }
    }
}

impl fmt::Display for Player {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.index() + 1)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct BlockDims {
    pub d1: usize,
    pub d2: usize,
}

impl BlockDims {
    pub fn new(d1: usize, d2: usize) -> Result<Self> {
        if d1 == 0 || d2 == 0 {
            return Err(Error::Config(format!(
                "block dimensions must be positive, got ({d1}, {d2})"
            )));
        }
        Ok(Self { d1, d2 })
    }

    pub fn total(&self) -> usize {
        self.d1 + self.d2
    }

    pub fn block(&self, p: Player) -> usize {
        match p {
            Player::Leader => self.d1,
            Player::Follower => self.d2,
        }
    }
}

/// A joint action `x = (x₁, x₂)`; also used for block vectors such as `ω(x)`.
#[derive(Debug, Clone, PartialEq)]
pub struct JointPoint {
    pub x1: DVector<f64>,
    pub x2: DVector<f64>,
}

impl JointPoint {
    pub fn new(x1: DVector<f64>, x2: DVector<f64>) -> Self {
        Self { x1, x2 }
    }

    pub fn from_slices(x1: &[f64], x2: &[f64]) -> Self {
        Self::new(DVector::from_column_slice(x1), DVector::from_column_slice(x2))
    }

    pub fn scalar(x1: f64, x2: f64) -> Self {
        Self::from_slices(&[x1], &[x2])
    }

    pub fn zeros(dims: BlockDims) -> Self {
        Self::new(DVector::zeros(dims.d1), DVector::zeros(dims.d2))
    }

    pub fn from_flat(dims: BlockDims, flat: &[f64]) -> Result<Self> {
        if flat.len() != dims.total() {
            return Err(Error::DimensionMismatch {
                context: "JointPoint::from_flat",
                expected: dims.total(),
                got: flat.len(),
            });
        }
        Ok(Self::from_slices(&flat[..dims.d1], &flat[dims.d1..]))
    }

    pub fn to_flat(&self) -> DVector<f64> {
        DVector::from_iterator(
            self.x1.len() + self.x2.len(),
            self.x1.iter().chain(self.x2.iter()).copied(),
        )
    }

    pub fn dims(&self) -> BlockDims {
        BlockDims {
            d1: self.x1.len(),
            d2: self.x2.len(),
        }
    }

    pub fn block(&self, p: Player) -> &DVector<f64> {
        match p {
            Player::Leader => &self.x1,
            Player::Follower => &self.x2,
        }
    }

    pub fn block_mut(&mut self, p: Player) -> &mut DVector<f64> {
        match p {
            Player::Leader => &mut self.x1,
            Player::Follower => &mut self.x2,
        }
    }

    /// A point that is zero except for `v` in block `p`.
    pub fn embed(dims: BlockDims, p: Player, v: &DVector<f64>) -> Self {
        let mut out = Self::zeros(dims);
        *out.block_mut(p) = v.clone();
        out
    }

    pub fn norm(&self) -> f64 {
        (self.x1.norm_squared() + self.x2.norm_squared()).sqrt()
    }

    pub fn amax(&self) -> f64 {
        self.x1.amax().max(self.x2.amax())
    }

    pub fn is_finite(&self) -> bool {
        self.x1.iter().chain(self.x2.iter()).all(|v| v.is_finite())
    }

    pub fn distance(&self, other: &JointPoint) -> f64 {
        (self.to_flat() - other.to_flat()).norm()
    }

    /// `self + scale * dir`.
    pub fn offset(&self, dir: &JointPoint, scale: f64) -> JointPoint {
        JointPoint {
            x1: &self.x1 + &dir.x1 * scale,
            x2: &self.x2 + &dir.x2 * scale,
        }
    }

    pub fn check_dims(&self, dims: BlockDims, context: &'static str) -> Result<()> {
        if self.x1.len() != dims.d1 {
            return Err(Error::DimensionMismatch {
                context,
                expected: dims.d1,
                got: self.x1.len(),
            });
        }
        if self.x2.len() != dims.d2 {
            return Err(Error::DimensionMismatch {
                context,
                expected: dims.d2,
                got: self.x2.len(),
            });
        }
        Ok(())
    }
}

#[derive(Serialize, Deserialize)]
struct JointPointRepr {
    x1: Vec<f64>,
    x2: Vec<f64>,
}

impl Serialize for JointPoint {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        JointPointRepr {
            x1: self.x1.iter().copied().collect(),
            x2: self.x2.iter().copied().collect(),
        }
        .serialize(s)
    }
}

impl<'de> Deserialize<'de> for JointPoint {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let r = JointPointRepr::deserialize(d)?;
        Ok(JointPoint::from_slices(&r.x1, &r.x2))
    }
}

/// Costs, block gradients and second-order vector products of a two-player
/// game. Implementations must be pure so they can be shared across threads.
pub trait GameOracle: Send + Sync {
    fn dims(&self) -> BlockDims;

    /// `f_i(x)`.
    fn cost(&self, player: Player, x: &JointPoint) -> f64;

    /// `D_block f_player(x)`, a vector of length `d_block`.
    fn grad(&self, player: Player, block: Player, x: &JointPoint) -> DVector<f64>;

    /// `D_{row,col} f_player(x) · v`; `v` has length `d_col`, the result `d_row`.
    fn sovp(
        &self,
        player: Player,
        row: Player,
        col: Player,
        x: &JointPoint,
        v: &DVector<f64>,
    ) -> DVector<f64>;

    /// True when some derivative information comes from finite differences.
    fn is_approximate(&self) -> bool {
        false
    }

    /// True when `f₂ = −f₁` holds exactly by construction.
    fn zero_sum(&self) -> bool {
        false
    }

    /// True when `D₂₁f₂ = −(D₁₂f₁)ᵀ`, which makes the leader Schur complement
    /// symmetric. Zero-sum games always qualify.
    fn antisymmetric_coupling(&self) -> bool {
        self.zero_sum()
    }

    /// Maps a point to its canonical representative (identity unless the
    /// action space is periodic).
    fn canonicalize(&self, x: JointPoint) -> JointPoint {
        x
    }

    /// A message when `x` lies outside the region where the costs are smooth.
    fn domain_warning(&self, _x: &JointPoint) -> Option<String> {
        None
    }
}

impl<T: GameOracle + ?Sized> GameOracle for Arc<T> {
    fn dims(&self) -> BlockDims {
        (**self).dims()
    }
    fn cost(&self, player: Player, x: &JointPoint) -> f64 {
        (**self).cost(player, x)
    }
    fn grad(&self, player: Player, block: Player, x: &JointPoint) -> DVector<f64> {
        (**self).grad(player, block, x)
    }
    fn sovp(
        &self,
        player: Player,
        row: Player,
        col: Player,
        x: &JointPoint,
        v: &DVector<f64>,
    ) -> DVector<f64> {
        (**self).sovp(player, row, col, x, v)
    }
    fn is_approximate(&self) -> bool {
        (**self).is_approximate()
    }
    fn zero_sum(&self) -> bool {
        (**self).zero_sum()
    }
    fn antisymmetric_coupling(&self) -> bool {
        (**self).antisymmetric_coupling()
    }
    fn canonicalize(&self, x: JointPoint) -> JointPoint {
        (**self).canonicalize(x)
    }
    fn domain_warning(&self, x: &JointPoint) -> Option<String> {
        (**self).domain_warning(x)
    }
}

/// `ω(x) = (D₁f₁(x), D₂f₂(x))`.
pub fn omega<G: GameOracle + ?Sized>(oracle: &G, x: &JointPoint) -> Result<JointPoint> {
    x.check_dims(oracle.dims(), "omega")?;
    Ok(JointPoint {
        x1: oracle.grad(Player::Leader, Player::Leader, x),
        x2: oracle.grad(Player::Follower, Player::Follower, x),
    })
}

/// The follower's (optionally regularized) Hessian `D₂²f₂(x) + ηI` as an operator.
pub fn follower_hessian<'a, G: GameOracle + ?Sized>(
    oracle: &'a G,
    x: &'a JointPoint,
    eta: f64,
) -> LinearMap<'a> {
    let d2 = oracle.dims().d2;
    LinearMap::from_fn(d2, d2, true, move |v| {
        oracle.sovp(Player::Follower, Player::Follower, Player::Follower, x, v)
    })
    .shifted(eta)
}

/// `ω_S(x)`: the leader's total derivative through the follower's implicit
/// response, with the follower Hessian regularized by `eta`.
pub fn omega_stackelberg<G: GameOracle + ?Sized>(
    oracle: &G,
    x: &JointPoint,
    eta: f64,
    solver: &SolveConfig,
) -> Result<JointPoint> {
    omega_stackelberg_solve(oracle, x, eta, solver).map(|(field, _)| field)
}

/// As [`omega_stackelberg`], also returning the inner solve so callers can
/// warm-start the next one.
pub fn omega_stackelberg_solve<G: GameOracle + ?Sized>(
    oracle: &G,
    x: &JointPoint,
    eta: f64,
    solver: &SolveConfig,
) -> Result<(JointPoint, CgOutcome)> {
    let dims = oracle.dims();
    x.check_dims(dims, "omega_stackelberg")?;
    if !(eta >= 0.0) {
        return Err(Error::Config(format!("eta must be nonnegative, got {eta}")));
    }
    let d1f1 = oracle.grad(Player::Leader, Player::Leader, x);
    let d2f1 = oracle.grad(Player::Leader, Player::Follower, x);
    let d2f2 = oracle.grad(Player::Follower, Player::Follower, x);

    let hess = follower_hessian(oracle, x, eta);
    let full_budget = solver.max_iters >= dims.d2;
    let solve = match cg_solve(&hess, &d2f1, solver) {
        Ok(out) if out.converged || !full_budget => out,
        Ok(out) => dense_fallback(&hess, &d2f1).ok_or(Error::SingularFollowerHessian {
            residual: out.residual,
        })?,
        Err(Error::IndefiniteOperator { .. }) => {
            dense_fallback(&hess, &d2f1).ok_or(Error::SingularFollowerHessian {
                residual: d2f1.norm(),
            })?
        }
        Err(e) => return Err(e),
    };
    // (D₂₁f₂)ᵀ y = D₁₂f₂ y
    let correction = oracle.sovp(Player::Follower, Player::Leader, Player::Follower, x, &solve.x);
    let field = JointPoint {
        x1: d1f1 - correction,
        x2: d2f2,
    };
    if !field.is_finite() {
        return Err(Error::Evaluation("omega_stackelberg".into()));
    }
    Ok((field, solve))
}

/// Dense LU solve used when a full-budget CG solve fails (indefinite or
/// badly scaled systems). `None` if the operator exceeds the dense cap or is
/// numerically singular.
fn dense_fallback(a: &LinearMap, b: &DVector<f64>) -> Option<CgOutcome> {
    let m = materialize(a).ok()?;
    let sv = m.clone().svd(false, false).singular_values;
    let smax = sv.max();
    if !(sv.min() > 1e-12 * smax.max(1.0)) {
        return None;
    }
    let y = m.clone().lu().solve(b)?;
    let residual = (b - &m * &y).norm();
    Some(CgOutcome {
        x: y,
        residual,
        iterations: 0,
        converged: true,
    })
}

/// Central-difference settings.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FdConfig {
    /// Base step; the effective step is `step · max(1, ‖x‖∞)`.
    pub step: f64,
    pub rel_tol: f64,
    pub abs_tol: f64,
}

impl Default for FdConfig {
    fn default() -> Self {
        Self {
            step: 1e-5,
            rel_tol: 1e-5,
            abs_tol: 1e-8,
        }
    }
}

impl FdConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.step > 0.0 && self.rel_tol > 0.0 && self.abs_tol > 0.0) {
            return Err(Error::Config(format!("invalid FdConfig {self:?}")));
        }
        Ok(())
    }

    fn scaled_step(&self, x: &JointPoint) -> f64 {
        self.step * x.amax().max(1.0)
    }
}

/// One compared quantity in a [`CheckReport`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckEntry {
    pub player: Player,
    pub row: Player,
    /// `None` for gradient entries.
    pub col: Option<Player>,
    pub abs_err: f64,
    pub rel_err: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckReport {
    pub entries: Vec<CheckEntry>,
    pub max_abs_err: f64,
    pub max_rel_err: f64,
    pub passed: bool,
}

impl CheckReport {
    fn from_entries(entries: Vec<CheckEntry>, cfg: &FdConfig) -> Self {
        let passed = entries
            .iter()
            .all(|e| e.abs_err <= cfg.abs_tol || e.rel_err <= cfg.rel_tol);
        CheckReport {
            max_abs_err: entries.iter().map(|e| e.abs_err).fold(0.0, f64::max),
            max_rel_err: entries.iter().map(|e| e.rel_err).fold(0.0, f64::max),
            entries,
            passed,
        }
    }
}

fn compare(analytic: &DVector<f64>, approx: &DVector<f64>) -> (f64, f64) {
    let abs_err = (analytic - approx).amax();
    let denom = analytic.amax().max(approx.amax());
    let rel_err = if abs_err == 0.0 { 0.0 } else { abs_err / denom };
    (abs_err, rel_err)
}

/// Compares every `D_j f_i` against central differences of the costs.
pub fn fd_grad_check<G: GameOracle + ?Sized>(
    oracle: &G,
    x: &JointPoint,
    cfg: &FdConfig,
) -> Result<CheckReport> {
    cfg.validate()?;
    x.check_dims(oracle.dims(), "fd_grad_check")?;
    let h = cfg.scaled_step(x);
    let mut entries = Vec::with_capacity(4);
    for player in Player::BOTH {
        for block in Player::BOTH {
            let analytic = oracle.grad(player, block, x);
            let approx = central_grad(|p| oracle.cost(player, p), x, block, h)?;
            let (abs_err, rel_err) = compare(&analytic, &approx);
            entries.push(CheckEntry {
                player,
                row: block,
                col: None,
                abs_err,
                rel_err,
            });
        }
    }
    Ok(CheckReport::from_entries(entries, cfg))
}

pub type SovpPair = (Player, Player, Player);

/// All eight `(cost, row, col)` combinations.
pub fn all_sovp_pairs() -> Vec<SovpPair> {
    let mut out = Vec::with_capacity(8);
    for i in Player::BOTH {
        for j in Player::BOTH {
            for k in Player::BOTH {
                out.push((i, j, k));
            }
        }
    }
    out
}

/// Compares `sovp(i, (j, k), x, v_k)` with central differences of `D_j f_i`
/// along block `k` in direction `v_k` (the matching block of `v`).
pub fn fd_sovp_check<G: GameOracle + ?Sized>(
    oracle: &G,
    x: &JointPoint,
    v: &JointPoint,
    cfg: &FdConfig,
    pairs: &[SovpPair],
) -> Result<CheckReport> {
    cfg.validate()?;
    let dims = oracle.dims();
    x.check_dims(dims, "fd_sovp_check")?;
    v.check_dims(dims, "fd_sovp_check direction")?;
    let h = cfg.scaled_step(x);
    let mut entries = Vec::with_capacity(pairs.len());
    for &(player, row, col) in pairs {
        let dir = v.block(col);
        let analytic = oracle.sovp(player, row, col, x, dir);
        let approx = central_sovp(|p| oracle.grad(player, row, p), x, col, dir, h)?;
        let (abs_err, rel_err) = compare(&analytic, &approx);
        entries.push(CheckEntry {
            player,
            row,
            col: Some(col),
            abs_err,
            rel_err,
        });
    }
    Ok(CheckReport::from_entries(entries, cfg))
}

/// Central-difference gradient of a scalar function with respect to one block.
pub fn central_grad<F>(f: F, x: &JointPoint, block: Player, h: f64) -> Result<DVector<f64>>
where
    F: Fn(&JointPoint) -> f64,
{
    let n = x.block(block).len();
    let mut out = DVector::zeros(n);
    let mut probe = x.clone();
    for i in 0..n {
        let base = x.block(block)[i];
        probe.block_mut(block)[i] = base + h;
        let fp = f(&probe);
        probe.block_mut(block)[i] = base - h;
        let fm = f(&probe);
        probe.block_mut(block)[i] = base;
        if !fp.is_finite() || !fm.is_finite() {
            return Err(Error::Evaluation(format!(
                "cost at x ± {h:e} e_{i} (block {block})"
            )));
        }
        out[i] = (fp - fm) / (2.0 * h);
    }
    Ok(out)
}

/// Central difference of a vector function along `dir` placed in block `col`.
/// The step is applied to the unit direction and rescaled by `‖dir‖`.
pub fn central_sovp<F>(
    g: F,
    x: &JointPoint,
    col: Player,
    dir: &DVector<f64>,
    h: f64,
) -> Result<DVector<f64>>
where
    F: Fn(&JointPoint) -> DVector<f64>,
{
    let norm = dir.norm();
    if norm == 0.0 {
        return Ok(g(x) * 0.0);
    }
    let unit = JointPoint::embed(x.dims(), col, &(dir / norm));
    let gp = g(&x.offset(&unit, h));
    let gm = g(&x.offset(&unit, -h));
    if !gp.iter().chain(gm.iter()).all(|v| v.is_finite()) {
        return Err(Error::Evaluation(format!(
            "gradient at x ± {h:e} along block {col}"
        )));
    }
    Ok((gp - gm) * (norm / (2.0 * h)))
}

type CostFn = dyn Fn(&JointPoint) -> f64 + Send + Sync;

/// Oracle built from cost functions alone; all derivatives are central
/// differences, so it reports itself as approximate.
pub struct FdOracle {
    dims: BlockDims,
    costs: [Box<CostFn>; 2],
    grad_step: f64,
    sovp_step: f64,
    zero_sum: bool,
}

impl FdOracle {
    /// Declares `f₂ = −f₁` (the caller vouches for it).
    pub fn with_zero_sum(mut self, zero_sum: bool) -> Self {
        self.zero_sum = zero_sum;
        self
    }

    fn step(&self, base: f64, x: &JointPoint) -> f64 {
        base * x.amax().max(1.0)
    }
}

/// Wraps two cost functions in an [`FdOracle`]. Gradients use `cfg.step`;
/// second-order products difference those gradients with a 10× larger step.
pub fn fd_oracle_from_costs<F1, F2>(dims: BlockDims, f1: F1, f2: F2, cfg: &FdConfig) -> FdOracle
where
    F1: Fn(&JointPoint) -> f64 + Send + Sync + 'static,
    F2: Fn(&JointPoint) -> f64 + Send + Sync + 'static,
{
    FdOracle {
        dims,
        costs: [Box::new(f1), Box::new(f2)],
        grad_step: cfg.step,
        sovp_step: cfg.step * 10.0,
        zero_sum: false,
    }
}

impl GameOracle for FdOracle {
    fn dims(&self) -> BlockDims {
        self.dims
    }

    fn cost(&self, player: Player, x: &JointPoint) -> f64 {
        (self.costs[player.index()])(x)
    }

    fn grad(&self, player: Player, block: Player, x: &JointPoint) -> DVector<f64> {
        let h = self.step(self.grad_step, x);
        central_grad(|p| self.cost(player, p), x, block, h)
            .unwrap_or_else(|_| DVector::from_element(self.dims.block(block), f64::NAN))
    }

    fn sovp(
        &self,
        player: Player,
        row: Player,
        col: Player,
        x: &JointPoint,
        v: &DVector<f64>,
    ) -> DVector<f64> {
        let h = self.step(self.sovp_step, x);
        central_sovp(|p| self.grad(player, row, p), x, col, v, h)
            .unwrap_or_else(|_| DVector::from_element(self.dims.block(row), f64::NAN))
    }

    fn is_approximate(&self) -> bool {
        true
    }

    fn zero_sum(&self) -> bool {
        self.zero_sum
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    /// f = ½x₁² + 2x₁x₂ − ½x₂², f₂ = −f. Hand-coded so these tests do not
    /// depend on the games module.
    struct Q121;

    impl GameOracle for Q121 {
        fn dims(&self) -> BlockDims {
            BlockDims { d1: 1, d2: 1 }
        }
        fn cost(&self, p: Player, x: &JointPoint) -> f64 {
            let (a, b) = (x.x1[0], x.x2[0]);
            let f = 0.5 * a * a + 2.0 * a * b - 0.5 * b * b;
            match p {
                Player::Leader => f,
                Player::Follower => -f,
            }
        }
        fn grad(&self, p: Player, block: Player, x: &JointPoint) -> DVector<f64> {
            let (a, b) = (x.x1[0], x.x2[0]);
            let g = match block {
                Player::Leader => a + 2.0 * b,
                Player::Follower => 2.0 * a - b,
            };
            let s = if p == Player::Leader { 1.0 } else { -1.0 };
            DVector::from_element(1, s * g)
        }
        fn sovp(
            &self,
            p: Player,
            row: Player,
            col: Player,
            _x: &JointPoint,
            v: &DVector<f64>,
        ) -> DVector<f64> {
            let h = match (row, col) {
                (Player::Leader, Player::Leader) => 1.0,
                (Player::Follower, Player::Follower) => -1.0,
                _ => 2.0,
            };
            let s = if p == Player::Leader { 1.0 } else { -1.0 };
            v * (s * h)
        }
        fn zero_sum(&self) -> bool {
            true
        }
    }

    struct Constant;

    impl GameOracle for Constant {
        fn dims(&self) -> BlockDims {
            BlockDims { d1: 2, d2: 1 }
        }
        fn cost(&self, _: Player, _: &JointPoint) -> f64 {
            3.0
        }
        fn grad(&self, _: Player, block: Player, _: &JointPoint) -> DVector<f64> {
            DVector::zeros(self.dims().block(block))
        }
        fn sovp(&self, _: Player, row: Player, _: Player, _: &JointPoint, _: &DVector<f64>) -> DVector<f64> {
            DVector::zeros(self.dims().block(row))
        }
    }

    struct SignFlipped<G>(G);

    impl<G: GameOracle> GameOracle for SignFlipped<G> {
        fn dims(&self) -> BlockDims {
            self.0.dims()
        }
        fn cost(&self, p: Player, x: &JointPoint) -> f64 {
            self.0.cost(p, x)
        }
        fn grad(&self, p: Player, b: Player, x: &JointPoint) -> DVector<f64> {
            -self.0.grad(p, b, x)
        }
        fn sovp(&self, p: Player, r: Player, c: Player, x: &JointPoint, v: &DVector<f64>) -> DVector<f64> {
            self.0.sovp(p, r, c, x, v)
        }
    }

    #[test]
    fn omega_quadratic() {
        let w = omega(&Q121, &JointPoint::scalar(1.0, 1.0)).unwrap();
        assert_eq!(w.x1[0], 3.0);
        // D₂f₂ = −(2x₁ − x₂)
        assert_eq!(w.x2[0], -1.0);
    }

    #[test]
    fn omega_rejects_wrong_dims() {
        let bad = JointPoint::from_slices(&[1.0, 2.0], &[1.0]);
        assert!(matches!(
            omega(&Q121, &bad),
            Err(Error::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn omega_stackelberg_quadratic() {
        let x = JointPoint::scalar(1.0, 1.0);
        let w = omega_stackelberg(&Q121, &x, 0.0, &SolveConfig::default()).unwrap();
        assert!((w.x1[0] - 5.0).abs() < 1e-12);
        assert_eq!(w.x2, omega(&Q121, &x).unwrap().x2);
    }

    #[test]
    fn omega_stackelberg_zero_correction_when_leader_ignores_follower() {
        // D₂f₁ ≡ 0 for the constant game
        let x = JointPoint::from_slices(&[0.3, -1.0], &[2.0]);
        for eta in [0.0, 0.5, 10.0] {
            let w = omega_stackelberg(&Constant, &x, eta, &SolveConfig::default());
            // b = 0 short-circuits the solve, so even a zero Hessian is fine
            assert_eq!(w.unwrap().x1, Constant.grad(Player::Leader, Player::Leader, &x));
        }
    }

    #[test]
    fn grad_check_passes_and_detects_sign_flip() {
        let x = JointPoint::scalar(0.4, -1.3);
        let cfg = FdConfig::default();
        let ok = fd_grad_check(&Q121, &x, &cfg).unwrap();
        assert!(ok.passed);
        let bad = fd_grad_check(&SignFlipped(Q121), &x, &cfg).unwrap();
        assert!(!bad.passed);
        assert!((bad.max_rel_err - 2.0).abs() < 1e-6);
    }

    #[test]
    fn grad_check_constant_cost() {
        let x = JointPoint::from_slices(&[0.3, -1.0], &[2.0]);
        let r = fd_grad_check(&Constant, &x, &FdConfig::default()).unwrap();
        assert!(r.passed);
        assert_eq!(r.max_abs_err, 0.0);
    }

    #[test]
    fn sovp_check_quadratic_follower_hessian() {
        let x = JointPoint::scalar(0.2, 0.7);
        let v = JointPoint::scalar(1.0, 1.0);
        let value = Q121.sovp(Player::Follower, Player::Follower, Player::Follower, &x, &v.x2);
        assert!((value[0] - 1.0).abs() < 1e-8);
        let r = fd_sovp_check(&Q121, &x, &v, &FdConfig::default(), &all_sovp_pairs()).unwrap();
        assert!(r.passed, "{r:?}");
    }

    #[test]
    fn fd_check_reports_non_finite_cost() {
        let oracle = fd_oracle_from_costs(
            BlockDims { d1: 1, d2: 1 },
            |x: &JointPoint| if x.x1[0] > 1.0 { f64::NAN } else { 0.0 },
            |_: &JointPoint| 0.0,
            &FdConfig::default(),
        );
        let r = fd_grad_check(&oracle, &JointPoint::scalar(1.0, 0.0), &FdConfig::default());
        assert!(matches!(r, Err(Error::Evaluation(_))));
    }

    #[test]
    fn fd_oracle_zero_costs() {
        let oracle = fd_oracle_from_costs(
            BlockDims { d1: 2, d2: 3 },
            |_: &JointPoint| 0.0,
            |_: &JointPoint| 0.0,
            &FdConfig::default(),
        );
        assert!(oracle.is_approximate());
        let x = JointPoint::from_slices(&[1.0, 2.0], &[0.0, -1.0, 4.0]);
        for (i, j, k) in all_sovp_pairs() {
            let v = DVector::from_element(oracle.dims().block(k), 1.0);
            assert_eq!(oracle.sovp(i, j, k, &x, &v).amax(), 0.0);
            assert_eq!(oracle.grad(i, j, &x).amax(), 0.0);
        }
    }

    #[test]
    fn fd_oracle_recovers_cross_partial() {
        let oracle = fd_oracle_from_costs(
            BlockDims { d1: 1, d2: 1 },
            |x: &JointPoint| Q121.cost(Player::Leader, x),
            |x: &JointPoint| Q121.cost(Player::Follower, x),
            &FdConfig::default(),
        );
        let x = JointPoint::scalar(0.7, -0.4);
        let v = DVector::from_element(1, 1.0);
        let cross = oracle.sovp(Player::Leader, Player::Leader, Player::Follower, &x, &v);
        assert!((cross[0] - 2.0).abs() < 1e-4);
    }

    #[test]
    fn joint_point_json_round_trip() {
        let x = JointPoint::from_slices(&[1.0, -2.5], &[3.0]);
        let s = serde_json::to_string(&x).unwrap();
        assert_eq!(s, r#"{"x1":[1.0,-2.5],"x2":[3.0]}"#);
        let back: JointPoint = serde_json::from_str(&s).unwrap();
        assert_eq!(back, x);
    }

    #[test]
    fn flat_round_trip() {
        let dims = BlockDims::new(2, 1).unwrap();
        let x = JointPoint::from_flat(dims, &[1.0, 2.0, 3.0]).unwrap();
        assert_eq!(x.to_flat().as_slice(), &[1.0, 2.0, 3.0]);
        assert!(JointPoint::from_flat(dims, &[1.0]).is_err());
        assert!(BlockDims::new(0, 1).is_err());
    }
}
