use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::opalg::{
    dense_cap, eig_dense, hessian_block, jacobian_simgrad, jacobian_stackelberg, materialize, SolveConfig,
    SpectrumReport, DEFAULT_JS_STEP,
};
use crate::oracle::{omega, omega_stackelberg, GameOracle, JointPoint, Player};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ClassifyConfig {
    /// Follower regularization in `ω_S`, `S₁` and `J_S`.
    pub eta: f64,
    /// Relative eigenvalue zero-threshold: `tol_eig · (1 + ‖op‖)`.
    pub tol_eig: f64,
    /// A field counts as vanishing below this norm.
    pub residual_tol: f64,
    pub js_step: f64,
}

impl Default for ClassifyConfig {
    fn default() -> Self {
        Self {
            eta: 0.0,
            tol_eig: 1e-6,
            residual_tol: 1e-6,
            js_step: DEFAULT_JS_STEP,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Definiteness {
    PositiveDefinite,
    /// Smallest eigenvalue inside the zero band.
    PositiveSemidefinite,
    Indefinite,
}

impl Definiteness {
    pub fn is_pd(self) -> bool {
        self == Definiteness::PositiveDefinite
    }

    pub fn is_psd(self) -> bool {
        self != Definiteness::Indefinite
    }
}

/// Verdict for real parts `re` against zero-threshold `thr`.
pub fn definiteness(re: &[f64], thr: f64) -> Definiteness {
    let min = re.iter().copied().fold(f64::INFINITY, f64::min);
    if min > thr {
        Definiteness::PositiveDefinite
    } else if min >= -thr {
        Definiteness::PositiveSemidefinite
    } else {
        Definiteness::Indefinite
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassificationSpectra {
    pub j: SpectrumReport,
    pub j_s: Option<SpectrumReport>,
    pub d11f1: SpectrumReport,
    pub d22f2: SpectrumReport,
    pub s1: Option<SpectrumReport>,
    /// Leader total Hessian `D²f₁` on the reaction curve; reported for
    /// general-sum games, where it differs from `S₁`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub d2f1: Option<SpectrumReport>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Classification {
    pub x: JointPoint,
    pub eta: f64,
    pub residual_sim: f64,
    pub residual_stack: Option<f64>,
    pub is_dne: bool,
    pub is_dse: bool,
    pub stable_simgrad: bool,
    pub stable_stackelberg: bool,
    pub non_nash_attractor: bool,
    pub marginal: bool,
    /// `D₂²f₂ + ηI` singular: no Stackelberg verdict is possible.
    pub degenerate: bool,
    pub leader_hessian: Definiteness,
    pub follower_hessian: Definiteness,
    pub schur: Option<Definiteness>,
    pub spectra: ClassificationSpectra,
}

pub(crate) struct Thresholds {
    tol: f64,
    widen: f64,
}

impl Thresholds {
    pub(crate) fn new<G: GameOracle + ?Sized>(oracle: &G, tol_eig: f64) -> Self {
        Self {
            tol: tol_eig,
            widen: if oracle.is_approximate() { 10.0 } else { 1.0 },
        }
    }

    pub(crate) fn of_matrix(&self, m: &DMatrix<f64>) -> f64 {
        self.tol * self.widen * (1.0 + m.norm())
    }

    pub(crate) fn of_report(&self, r: &SpectrumReport) -> f64 {
        let scale = r.eigs.iter().map(|e| e.re.hypot(e.im)).fold(0.0, f64::max);
        self.tol * self.widen * (1.0 + scale)
    }
}

pub(crate) fn sym_spectrum(m: &DMatrix<f64>) -> Result<SpectrumReport> {
    eig_dense(&((m + m.transpose()) * 0.5))
}

pub(crate) fn dense_block<G: GameOracle + ?Sized>(
    oracle: &G,
    x: &JointPoint,
    player: Player,
    row: Player,
    col: Player,
) -> Result<DMatrix<f64>> {
    materialize(&hessian_block(oracle, x, player, row, col))
}

/// `(S₁, Dr)` from dense blocks, or `None` when `D₂²f₂ + ηI` is singular
/// at threshold `thr`.
pub(crate) fn dense_schur<G: GameOracle + ?Sized>(
    oracle: &G,
    x: &JointPoint,
    eta: f64,
    thr: f64,
) -> Result<Option<(DMatrix<f64>, DMatrix<f64>)>> {
    let (l, f) = (Player::Leader, Player::Follower);
    let d2 = oracle.dims().d2;
    let c = dense_block(oracle, x, f, f, f)? + DMatrix::identity(d2, d2) * eta;
    let svd = c.clone().svd(false, false);
    if svd.singular_values.min() <= thr {
        return Ok(None);
    }
    let lu = c.lu();
    let d21f2 = dense_block(oracle, x, f, f, l)?;
    let Some(sol) = lu.solve(&d21f2) else {
        return Ok(None);
    };
    let s1 = dense_block(oracle, x, l, l, l)? - dense_block(oracle, x, l, l, f)? * &sol;
    Ok(Some((s1, -sol)))
}

/// Classify `x` as a critical point of `ω` and/or `ω_S`.
///
/// Differential Nash: `ω = 0`, `D₁²f₁ ≻ 0`, `D₂²f₂ ≻ 0`. Differential
/// Stackelberg: `ω_S = 0`, `D²f₁ ≻ 0`, `D₂²f₂ ≻ 0`, where `D²f₁` is the
/// Schur complement `S₁` in zero-sum games and the total leader Hessian
/// `J_S,11 + J_S,12 Dr` otherwise. Stability means the spectrum of `J`
/// (resp. `J_S`) lies right of the zero band.
pub fn classify<G: GameOracle + ?Sized>(oracle: &G, x: &JointPoint, cfg: &ClassifyConfig) -> Result<Classification> {
    let dims = oracle.dims();
    x.check_dims(dims, "classify")?;
    if !(cfg.eta >= 0.0) || !(cfg.tol_eig > 0.0) || !(cfg.residual_tol > 0.0) {
        return Err(Error::Config("classify needs eta >= 0, tol_eig > 0, residual_tol > 0".into()));
    }
    let cap = dense_cap();
    if dims.total() > cap {
        return Err(Error::SizeCap { rows: dims.total(), cols: dims.total(), cap });
    }
    let th = Thresholds::new(oracle, cfg.tol_eig);
    let (l, f) = (Player::Leader, Player::Follower);

    let residual_sim = omega(oracle, x)?.norm();
    let exact = SolveConfig::exact(dims.d2);
    let residual_stack = omega_stackelberg(oracle, x, cfg.eta, &exact).ok().map(|w| w.norm());

    let j = materialize(&jacobian_simgrad(oracle, x))?;
    let j_spec = eig_dense(&j)?;
    let thr_j = th.of_matrix(&j);
    let j_min = j_spec.min_re();

    let a = dense_block(oracle, x, l, l, l)?;
    let c = dense_block(oracle, x, f, f, f)?;
    let d11f1 = sym_spectrum(&a)?;
    let d22f2 = sym_spectrum(&c)?;
    let leader_hessian = definiteness(&d11f1.real_parts(), th.of_report(&d11f1));
    let follower_hessian = definiteness(&d22f2.real_parts(), th.of_report(&d22f2));

    let c_eta = &c + DMatrix::identity(dims.d2, dims.d2) * cfg.eta;
    let schur = dense_schur(oracle, x, cfg.eta, th.of_matrix(&c_eta))?;
    let degenerate = schur.is_none();

    let mut s1_spec = None;
    let mut schur_verdict = None;
    let mut d2f1_spec = None;
    let mut leader_total = None;
    let mut j_s_spec = None;
    let mut stable_stackelberg = false;
    let mut js_marginal = false;
    if let Some((s1, dr)) = &schur {
        let spec = sym_spectrum(s1)?;
        let v = definiteness(&spec.real_parts(), th.of_report(&spec));
        schur_verdict = Some(v);
        s1_spec = Some(spec);
        if let Ok(js) = jacobian_stackelberg(oracle, x, cfg.eta, cfg.js_step) {
            let spec = eig_dense(&js)?;
            let thr = th.of_matrix(&js);
            stable_stackelberg = spec.min_re() > thr;
            js_marginal = spec.min_re().abs() <= thr;
            j_s_spec = Some(spec);
            if !oracle.zero_sum() {
                let d1 = dims.d1;
                let total = js.view((0, 0), (d1, d1)) + js.view((0, d1), (d1, dims.d2)) * dr;
                let spec = sym_spectrum(&total)?;
                leader_total = Some(definiteness(&spec.real_parts(), th.of_report(&spec)));
                d2f1_spec = Some(spec);
            }
        }
        if oracle.zero_sum() {
            leader_total = Some(v);
        }
    }

    let crit_sim = residual_sim < cfg.residual_tol;
    let crit_stack = residual_stack.is_some_and(|r| r < cfg.residual_tol);
    let is_dne = crit_sim && leader_hessian.is_pd() && follower_hessian.is_pd();
    let is_dse = crit_stack && leader_total.is_some_and(Definiteness::is_pd) && follower_hessian.is_pd();
    let stable_simgrad = j_min > thr_j;
    let non_nash_attractor = crit_sim && stable_simgrad && !is_dne;
    let band = |d: Option<Definiteness>| d == Some(Definiteness::PositiveSemidefinite);
    let marginal = degenerate
        || j_min.abs() <= thr_j
        || js_marginal
        || band(schur_verdict)
        || band(Some(follower_hessian));

    Ok(Classification {
        x: x.clone(),
        eta: cfg.eta,
        residual_sim,
        residual_stack,
        is_dne,
        is_dse,
        stable_simgrad,
        stable_stackelberg,
        non_nash_attractor,
        marginal,
        degenerate,
        leader_hessian,
        follower_hessian,
        schur: schur_verdict,
        spectra: ClassificationSpectra {
            j: j_spec,
            j_s: j_s_spec,
            d11f1,
            d22f2,
            s1: s1_spec,
            d2f1: d2f1_spec,
        },
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::games::{DuopolyGame, QuadraticGame};

    fn at_origin(a: f64, b: f64, c: f64) -> Classification {
        let g = QuadraticGame::scalar_zero_sum(a, b, c);
        classify(&g, &JointPoint::scalar(0.0, 0.0), &ClassifyConfig::default()).unwrap()
    }

    #[test]
    fn stable_nash_quadratic() {
        let c = at_origin(1.0, 2.0, 1.0);
        assert!(c.is_dne && c.is_dse && c.stable_simgrad && c.stable_stackelberg);
        assert!(!c.non_nash_attractor && !c.marginal);
        let e = &c.spectra.j.eigs;
        assert!((e[0].re - 1.0).abs() < 1e-12 && (e[0].im.abs() - 2.0).abs() < 1e-12);
        assert!((c.spectra.s1.as_ref().unwrap().eigs[0].re - 5.0).abs() < 1e-12);
    }

    #[test]
    fn non_nash_attractor_is_dse() {
        let c = at_origin(-1.0, 2.0, 2.0);
        assert!(!c.is_dne && c.is_dse && c.non_nash_attractor && c.stable_stackelberg);
    }

    #[test]
    fn unstable_non_dse() {
        let c = at_origin(-1.0, 0.5, 2.0);
        assert!(!c.stable_simgrad && !c.is_dse);
        assert_eq!(c.schur, Some(Definiteness::Indefinite));
        assert!((c.spectra.s1.unwrap().eigs[0].re + 0.875).abs() < 1e-12);
    }

    #[test]
    fn singular_follower_is_degenerate() {
        let c = at_origin(1.0, 1.0, 0.0);
        assert!(c.degenerate && c.marginal && !c.is_dse);
        assert!(c.spectra.s1.is_none() && c.spectra.j_s.is_none());
    }

    #[test]
    fn duopoly_points() {
        let g = DuopolyGame::new(100.0, 5.0, 2.0).unwrap();
        let eq = g.equilibria();
        let cfg = ClassifyConfig::default();
        let n = classify(&g, &eq.nash, &cfg).unwrap();
        assert!(n.is_dne && n.stable_simgrad && !n.is_dse);
        let s = classify(&g, &eq.stackelberg, &cfg).unwrap();
        assert!(s.is_dse && !s.is_dne && s.stable_stackelberg);
        // S₁ = 3/2 but the leader's total Hessian along the reaction curve is 1
        assert!((s.spectra.s1.as_ref().unwrap().eigs[0].re - 1.5).abs() < 1e-12);
        assert!((s.spectra.d2f1.as_ref().unwrap().eigs[0].re - 1.0).abs() < 1e-6);
    }

    #[test]
    fn json_round_trip() {
        let c = at_origin(-1.0, 2.0, 2.0);
        let s = serde_json::to_string(&c).unwrap();
        assert!(s.contains("\"non_nash_attractor\":true"));
        let back: Classification = serde_json::from_str(&s).unwrap();
        assert_eq!(back.is_dse, c.is_dse);
        assert_eq!(back.spectra.j.eigs.len(), 2);
    }
}
