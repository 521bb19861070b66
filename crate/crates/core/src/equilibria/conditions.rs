use nalgebra::{DMatrix, SymmetricEigen};
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::classify::{classify, definiteness, dense_block, ClassifyConfig, Thresholds};
use crate::opalg::{eig_dense, jacobian_stackelberg};
use crate::oracle::{GameOracle, JointPoint, Player};
use crate::{rng, Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ConditionConfig {
    /// Bound on `‖D₂₁f₂‖₂`; the exact norm when `None`.
    pub kappa: Option<f64>,
    /// Relative tolerance for zero entries of the transformed coupling and
    /// for eigenvalue clusters.
    pub structure_tol: f64,
    pub classify: ClassifyConfig,
}

impl Default for ConditionConfig {
    fn default() -> Self {
        Self {
            kappa: None,
            structure_tol: 1e-8,
            classify: ClassifyConfig::default(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IndexMargin {
    /// 1-based, as in `κ²λᵢ + μᵢ`.
    pub i: usize,
    pub mu: f64,
    pub lambda: f64,
    pub value: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StructureReport {
    /// `W₁ᵀ D₁₂f W₂` in the computed eigenbases.
    pub transformed_coupling: Vec<Vec<f64>>,
    /// Each eigenspace of `D₁²f` couples to at most one eigenspace of
    /// `−D₂²f` and vice versa, so rotations within eigenspaces diagonalize.
    pub diagonalizable: bool,
    /// Rank of the coupling; the diagonal has no zero entries iff it equals
    /// `min(m, n)`.
    pub rank: usize,
    pub nonzero_entries: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConditionReport {
    pub kappa: f64,
    pub kappa_supplied: bool,
    /// Ascending eigenvalues of `D₁²f₁`.
    pub mu: Vec<f64>,
    /// Descending eigenvalues of `−D₂²f` (= `D₂²f₂` in a zero-sum game).
    pub lambda: Vec<f64>,
    pub r_neg: usize,
    pub p_ker: usize,
    /// Follower dimension.
    pub n: usize,
    /// `κ²λᵢ + μᵢ` for `i ∈ {1, …, r − p}`.
    pub margins: Vec<IndexMargin>,
    pub necessary_holds: bool,
    pub structure: StructureReport,
    pub sufficient_structure_holds: bool,
}

fn gate(name: &str, ok: bool) -> Result<()> {
    if ok {
        Ok(())
    } else {
        Err(Error::Precondition(format!("gate failed: {name}")))
    }
}

/// Checks `f₁ + f₂ = 0` at `x` and at 10 seeded points in the unit box around it.
pub fn verify_zero_sum<G: GameOracle + ?Sized>(oracle: &G, x: &JointPoint) -> bool {
    let dims = oracle.dims();
    let mut rng = rng::stream(0x5EED, 0, 0);
    let base = x.to_flat();
    (0..=10).all(|i| {
        let p = if i == 0 {
            x.clone()
        } else {
            let flat: Vec<f64> = base.iter().map(|v| v + rng.random_range(-1.0..1.0)).collect();
            JointPoint::from_flat(dims, &flat).expect("dims of x")
        };
        let f1 = oracle.cost(Player::Leader, &p);
        let f2 = oracle.cost(Player::Follower, &p);
        (f1 + f2).abs() <= 1e-10 * (1.0 + f1.abs())
    })
}

/// Prop 2: at a stable differential Nash equilibrium of a zero-sum game,
/// returns the DSE verdict (which must be `true`).
pub fn check_prop2<G: GameOracle + ?Sized>(oracle: &G, x: &JointPoint, cfg: &ClassifyConfig) -> Result<bool> {
    gate("zero_sum", verify_zero_sum(oracle, x))?;
    let c = classify(oracle, x, cfg)?;
    gate("stable_dne", c.is_dne && c.stable_simgrad)?;
    Ok(c.is_dse)
}

fn clusters(vals: &[f64], tol: f64) -> Vec<usize> {
    let scale = 1.0 + vals.iter().map(|v| v.abs()).fold(0.0, f64::max);
    let mut id = 0;
    let mut out = Vec::with_capacity(vals.len());
    for (i, v) in vals.iter().enumerate() {
        if i > 0 && (v - vals[i - 1]).abs() > tol * scale {
            id += 1;
        }
        out.push(id);
    }
    out
}

/// Eigenpairs sorted ascending (`descending = false`) or descending.
fn sorted_eigen(m: &DMatrix<f64>, descending: bool) -> (Vec<f64>, DMatrix<f64>) {
    let sym = (m + m.transpose()) * 0.5;
    let eig = SymmetricEigen::new(sym);
    let mut idx: Vec<usize> = (0..eig.eigenvalues.len()).collect();
    idx.sort_by(|&a, &b| {
        let o = eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]);
        if descending {
            o.reverse()
        } else {
            o
        }
    });
    let vals = idx.iter().map(|&i| eig.eigenvalues[i]).collect();
    let vecs = DMatrix::from_fn(m.nrows(), m.nrows(), |r, c| eig.eigenvectors[(r, idx[c])]);
    (vals, vecs)
}

fn structure(
    mu: &[f64],
    w1: &DMatrix<f64>,
    lambda: &[f64],
    w2: &DMatrix<f64>,
    coupling: &DMatrix<f64>,
    tol: f64,
) -> StructureReport {
    let t = w1.transpose() * coupling * w2;
    let zero = tol * (1.0 + t.norm());
    let (cm, cl) = (clusters(mu, tol), clusters(lambda, tol));
    let mut partner_of_mu = vec![None; cm.last().map_or(0, |c| c + 1)];
    let mut partner_of_lambda = vec![None; cl.last().map_or(0, |c| c + 1)];
    let mut diagonalizable = true;
    for i in 0..t.nrows() {
        for j in 0..t.ncols() {
            if t[(i, j)].abs() <= zero {
                continue;
            }
            let (a, b) = (cm[i], cl[j]);
            for (slot, want) in [(&mut partner_of_mu[a], b), (&mut partner_of_lambda[b], a)] {
                match slot {
                    None => *slot = Some(want),
                    Some(p) if *p == want => {}
                    Some(_) => diagonalizable = false,
                }
            }
        }
    }
    let rank = coupling.clone().svd(false, false).singular_values.iter().filter(|s| **s > zero).count();
    StructureReport {
        transformed_coupling: t.row_iter().map(|r| r.iter().copied().collect()).collect(),
        diagonalizable,
        rank,
        nonzero_entries: rank == coupling.nrows().min(coupling.ncols()),
    }
}

fn condition_report<G: GameOracle + ?Sized>(oracle: &G, x: &JointPoint, cfg: &ConditionConfig) -> Result<ConditionReport> {
    let (l, f) = (Player::Leader, Player::Follower);
    let a = dense_block(oracle, x, l, l, l)?;
    let c = dense_block(oracle, x, f, f, f)?;
    let b = dense_block(oracle, x, l, l, f)?;
    let d21f2 = dense_block(oracle, x, f, f, l)?;
    let exact_kappa = d21f2.clone().svd(false, false).singular_values.max();
    let kappa = cfg.kappa.unwrap_or(exact_kappa);
    if !(kappa >= exact_kappa * (1.0 - 1e-12)) {
        return Err(Error::Config(format!("kappa = {kappa} is below ‖D21f2‖ = {exact_kappa}")));
    }

    let (mu, w1) = sorted_eigen(&a, false);
    let (lambda, w2) = sorted_eigen(&c, true);
    let th = Thresholds::new(oracle, cfg.classify.tol_eig);
    let thr = th.of_matrix(&a);
    let r_neg = mu.iter().filter(|m| **m < -thr).count();
    let p_ker = mu.iter().filter(|m| m.abs() <= thr).count();
    let n = lambda.len();
    let count = r_neg.saturating_sub(p_ker).min(n);
    let margins: Vec<IndexMargin> = (0..count)
        .map(|i| IndexMargin {
            i: i + 1,
            mu: mu[i],
            lambda: lambda[i],
            value: kappa * kappa * lambda[i] + mu[i],
        })
        .collect();
    let necessary_holds = r_neg <= n && margins.iter().all(|m| m.value > 0.0);
    let structure = structure(&mu, &w1, &lambda, &w2, &b, cfg.structure_tol);
    let sufficient_structure_holds = structure.diagonalizable && structure.nonzero_entries && necessary_holds;
    Ok(ConditionReport {
        kappa,
        kappa_supplied: cfg.kappa.is_some(),
        mu,
        lambda,
        r_neg,
        p_ker,
        n,
        margins,
        necessary_holds,
        structure,
        sufficient_structure_holds,
    })
}

fn non_nash_gates<G: GameOracle + ?Sized>(oracle: &G, x: &JointPoint, cfg: &ConditionConfig) -> Result<()> {
    gate("zero_sum", verify_zero_sum(oracle, x))?;
    let c = classify(oracle, x, &cfg.classify)?;
    gate("follower_hessian_positive_definite", c.follower_hessian.is_pd())?;
    gate("non_nash_attractor", c.non_nash_attractor)
}

/// Prop 3 necessary conditions at a non-Nash attractor of a zero-sum game
/// with `−D₂²f ≻ 0`: `r ≤ n` and `κ²λᵢ + μᵢ > 0` for `i ≤ r − p`.
///
/// With a caller-supplied `κ` the per-index margins are the meaningful
/// output; the verdict is reported for the supplied bound.
pub fn check_necessary_prop3<G: GameOracle + ?Sized>(
    oracle: &G,
    x: &JointPoint,
    cfg: &ConditionConfig,
) -> Result<ConditionReport> {
    non_nash_gates(oracle, x, cfg)?;
    condition_report(oracle, x, cfg)
}

/// Prop 4 sufficient conditions: symmetric Hessian blocks, a coupling that is
/// diagonal with nonzero entries in the two eigenbases, and the Prop 3
/// inequalities.
pub fn check_sufficient_prop4<G: GameOracle + ?Sized>(
    oracle: &G,
    x: &JointPoint,
    cfg: &ConditionConfig,
) -> Result<ConditionReport> {
    let (l, f) = (Player::Leader, Player::Follower);
    for (name, m) in [("leader", dense_block(oracle, x, l, l, l)?), ("follower", dense_block(oracle, x, f, f, f)?)] {
        let asym = (&m - m.transpose()).amax();
        gate(&format!("{name}_hessian_symmetric"), asym <= cfg.structure_tol * (1.0 + m.amax()))?;
    }
    non_nash_gates(oracle, x, cfg)?;
    condition_report(oracle, x, cfg)
}

/// Corollary 1: on a scalar zero-sum game, a non-Nash attractor with
/// `−D₂²f > 0` is a DSE. Returns the DSE verdict.
pub fn check_corollary1<G: GameOracle + ?Sized>(oracle: &G, x: &JointPoint, cfg: &ClassifyConfig) -> Result<bool> {
    let dims = oracle.dims();
    gate("scalar_game", dims.d1 == 1 && dims.d2 == 1)?;
    gate("zero_sum", verify_zero_sum(oracle, x))?;
    let c = classify(oracle, x, cfg)?;
    gate("follower_hessian_positive_definite", c.follower_hessian.is_pd())?;
    gate("non_nash_attractor", c.non_nash_attractor)?;
    Ok(c.is_dse)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RealizableReport {
    pub leader_hessian_norm: f64,
    pub realizable: bool,
    /// Realizable, `−D₂²f ⪰ 0`, and `spec(J_S)` has no real part below the
    /// zero band.
    pub marginal_stack: bool,
}

/// The realizable-GAN setting: `D₁²f₁(x) = 0`.
pub fn check_realizable<G: GameOracle + ?Sized>(
    oracle: &G,
    x: &JointPoint,
    tol: f64,
    cfg: &ClassifyConfig,
) -> Result<RealizableReport> {
    let (l, f) = (Player::Leader, Player::Follower);
    let a = dense_block(oracle, x, l, l, l)?;
    let norm = if a.is_empty() { 0.0 } else { a.clone().svd(false, false).singular_values.max() };
    let realizable = norm < tol;
    let mut marginal_stack = false;
    if realizable {
        let th = Thresholds::new(oracle, cfg.tol_eig);
        let c = dense_block(oracle, x, f, f, f)?;
        let spec = eig_dense(&((&c + c.transpose()) * 0.5))?;
        if definiteness(&spec.real_parts(), th.of_report(&spec)).is_psd() {
            if let Ok(js) = jacobian_stackelberg(oracle, x, cfg.eta, cfg.js_step) {
                let s = eig_dense(&js)?;
                marginal_stack = s.min_re() >= -th.of_matrix(&js);
            }
        }
    }
    Ok(RealizableReport {
        leader_hessian_norm: norm,
        realizable,
        marginal_stack,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LeaderCostEntry {
    pub x: JointPoint,
    pub leader_cost: f64,
    /// `f₁(x_S) > min f₁(x_N)`.
    pub violation: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LeaderCostReport {
    pub min_nash_leader_cost: f64,
    pub stackelberg: Vec<LeaderCostEntry>,
    pub any_violation: bool,
}

/// Compares the leader's cost at each Stackelberg point with its best cost
/// over the Nash points. Meaningful when the follower's reaction set is a
/// singleton, which the caller asserts.
pub fn leader_cost_comparison<G: GameOracle + ?Sized>(
    oracle: &G,
    nash_points: &[JointPoint],
    stackelberg_points: &[JointPoint],
) -> Result<LeaderCostReport> {
    gate("nonempty_points", !nash_points.is_empty() && !stackelberg_points.is_empty())?;
    let min_nash = nash_points
        .iter()
        .map(|x| oracle.cost(Player::Leader, x))
        .fold(f64::INFINITY, f64::min);
    let tol = 1e-12 * (1.0 + min_nash.abs());
    let stackelberg: Vec<LeaderCostEntry> = stackelberg_points
        .iter()
        .map(|x| {
            let c = oracle.cost(Player::Leader, x);
            LeaderCostEntry { x: x.clone(), leader_cost: c, violation: c > min_nash + tol }
        })
        .collect();
    Ok(LeaderCostReport {
        min_nash_leader_cost: min_nash,
        any_violation: stackelberg.iter().any(|e| e.violation),
        stackelberg,
    })
}
