use std::fmt::Write as _;

use log::warn;
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::rule::Stepper;
use super::spectra::{spectrum_snapshot, SpectrumSnapshot};
use super::{NoiseModel, Schedules, UpdateRule};
use crate::oracle::{BlockDims, GameOracle, JointPoint, Player};
use crate::{rng, Error, Result};

/// Stopping tolerance used when none is configured and the run is noiseless.
pub const DEFAULT_STOP_TOL: f64 = 1e-8;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    #[serde(flatten)]
    pub rule: UpdateRule,
    pub schedules: Schedules,
    #[serde(default)]
    pub noise: NoiseModel,
    pub x0: JointPoint,
    pub max_iters: u64,
    /// Stop once the driving field norm drops below this. Defaults to
    /// [`DEFAULT_STOP_TOL`] without noise and to no early stop with noise.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub stop_grad_tol: Option<f64>,
    #[serde(default = "one")]
    pub record_every: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub spectra_every: Option<u64>,
    #[serde(default = "six")]
    pub spectra_k: usize,
}

fn one() -> u64 {
    1
}

fn six() -> usize {
    6
}

impl RunConfig {
    pub fn new(rule: UpdateRule, schedules: Schedules, x0: JointPoint, max_iters: u64) -> Self {
        Self {
            rule,
            schedules,
            noise: NoiseModel::none(),
            x0,
            max_iters,
            stop_grad_tol: None,
            record_every: 1,
            spectra_every: None,
            spectra_k: 6,
        }
    }

    pub fn validate(&self, dims: BlockDims) -> Result<()> {
        self.rule.validate()?;
        self.schedules.validate()?;
        self.noise.validate()?;
        self.x0
            .check_dims(dims, "x0")
            .map_err(|e| Error::Config(e.to_string()))?;
        if !self.x0.is_finite() {
            return Err(Error::Config("x0 must be finite".into()));
        }
        if self.record_every == 0 {
            return Err(Error::Config("record_every must be >= 1".into()));
        }
        if self.spectra_every == Some(0) {
            return Err(Error::Config("spectra_every must be >= 1".into()));
        }
        if let Some(t) = self.stop_grad_tol {
            if !(t > 0.0) {
                return Err(Error::Config(format!("stop_grad_tol must be positive, got {t}")));
            }
        }
        Ok(())
    }

    pub fn effective_stop_tol(&self) -> Option<f64> {
        match self.stop_grad_tol {
            Some(t) => Some(t),
            None if self.noise.is_active() => None,
            None => Some(DEFAULT_STOP_TOL),
        }
    }

    /// `Some(false)` when a noisy hierarchical rule lacks `γ₁,k/γ₂,k → 0`.
    pub fn two_timescale_valid(&self) -> Option<bool> {
        (self.rule.is_hierarchical() && self.noise.is_active()).then(|| self.schedules.timescale_separated())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Record {
    pub k: u64,
    pub x: JointPoint,
    pub f1: f64,
    pub f2: f64,
    pub grad_norm: f64,
    pub tau: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TerminalReason {
    Converged,
    MaxIters,
    NumericalFailure,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub dims: BlockDims,
    pub records: Vec<Record>,
    pub terminal_reason: TerminalReason,
    pub iterations: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub message: Option<String>,
    #[serde(default)]
    pub warnings: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub two_timescale_valid: Option<bool>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub spectra: Vec<SpectrumSnapshot>,
}

/// Terminal metadata written next to the trajectory CSV.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrajectorySummary {
    pub terminal_reason: TerminalReason,
    pub iterations: u64,
    pub records: usize,
    pub final_x: JointPoint,
    pub final_grad_norm: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub message: Option<String>,
    pub warnings: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub two_timescale_valid: Option<bool>,
}

impl Trajectory {
    pub fn last(&self) -> &Record {
        self.records.last().expect("trajectory always holds the initial record")
    }

    pub fn final_x(&self) -> &JointPoint {
        &self.last().x
    }

    pub fn csv_header(dims: BlockDims) -> String {
        let mut h = String::from("k");
        for i in 0..dims.d1 {
            write!(h, ",x1_{i}").unwrap();
        }
        for i in 0..dims.d2 {
            write!(h, ",x2_{i}").unwrap();
        }
        h.push_str(",f1,f2,grad_norm,tau");
        h
    }

    pub fn to_csv(&self) -> String {
        let mut out = Self::csv_header(self.dims);
        out.push('\n');
        for r in &self.records {
            write!(out, "{}", r.k).unwrap();
            for v in r.x.x1.iter().chain(r.x.x2.iter()) {
                write!(out, ",{v}").unwrap();
            }
            writeln!(out, ",{},{},{},{}", r.f1, r.f2, r.grad_norm, r.tau).unwrap();
        }
        out
    }

    /// Long-format spectrum trace: `k,operator,which,index,value`.
    pub fn spectra_csv(&self) -> String {
        let mut out = String::from("k,operator,which,index,value\n");
        for s in &self.spectra {
            for (which, vals) in [("smallest", &s.smallest), ("largest", &s.largest)] {
                for (i, v) in vals.iter().enumerate() {
                    writeln!(out, "{},{},{which},{i},{v}", s.k, s.operator).unwrap();
                }
            }
        }
        out
    }

    pub fn summary(&self) -> TrajectorySummary {
        let last = self.last();
        TrajectorySummary {
            terminal_reason: self.terminal_reason,
            iterations: self.iterations,
            records: self.records.len(),
            final_x: last.x.clone(),
            final_grad_norm: last.grad_norm,
            message: self.message.clone(),
            warnings: self.warnings.clone(),
            two_timescale_valid: self.two_timescale_valid,
        }
    }
}

/// Iterate `config.rule` with the noise stream `(config.noise.seed, 0, 0)`.
pub fn run<G: GameOracle + ?Sized>(config: &RunConfig, oracle: &G) -> Result<Trajectory> {
    let mut rng = rng::stream(config.noise.seed, 0, 0);
    run_with(config, oracle, &mut rng, |_, _| {})
}

/// Leader/best-response iteration; each record's `x₂` satisfies
/// `‖D₂f₂(x)‖ ≤ inner_tol`.
pub fn run_best_response<G: GameOracle + ?Sized>(config: &RunConfig, oracle: &G) -> Result<Trajectory> {
    if !matches!(config.rule, UpdateRule::BestResponse { .. }) {
        return Err(Error::Precondition("run_best_response needs a best_response rule".into()));
    }
    run(config, oracle)
}

/// As [`run`], with an explicit noise generator and an observer called with
/// every iterate `(k, x_k)`, including `k = 0`.
pub fn run_with<G, R, F>(config: &RunConfig, oracle: &G, rng: &mut R, mut observe: F) -> Result<Trajectory>
where
    G: GameOracle + ?Sized,
    R: Rng + ?Sized,
    F: FnMut(u64, &JointPoint),
{
    let dims = oracle.dims();
    config.validate(dims)?;
    let stop_tol = config.effective_stop_tol();
    let two_timescale_valid = config.two_timescale_valid();
    let mut warnings = Vec::new();
    if two_timescale_valid == Some(false) {
        let msg = "schedules do not separate timescales (gamma1/gamma2 does not vanish)".to_string();
        warn!("{msg}");
        warnings.push(msg);
    }

    let mut stepper = Stepper::new(&config.rule, oracle, &config.schedules);
    let x0 = oracle.canonicalize(config.x0.clone());
    let mut x = stepper.respond(x0)?;
    let mut field = stepper
        .field(&x)
        .map_err(|e| Error::Evaluation(format!("driving field at x0: {e}")))?;

    let record = |k: u64, x: &JointPoint, field: &JointPoint| Record {
        k,
        x: x.clone(),
        f1: oracle.cost(Player::Leader, x),
        f2: oracle.cost(Player::Follower, x),
        grad_norm: field.norm(),
        tau: config.schedules.tau(k),
    };
    let snapshot = |k: u64, x: &JointPoint, warnings: &mut Vec<String>, out: &mut Vec<SpectrumSnapshot>| {
        match spectrum_snapshot(oracle, x, config.rule.eta(), config.spectra_k, k) {
            Ok(mut s) => out.append(&mut s),
            Err(e) => warnings.push(format!("spectrum at k = {k}: {e}")),
        }
    };

    let mut records = vec![record(0, &x, &field)];
    let mut spectra = Vec::new();
    if config.spectra_every.is_some() {
        snapshot(0, &x, &mut warnings, &mut spectra);
    }
    observe(0, &x);
    let mut domain_warned = false;
    let mut message = None;
    let mut reason = TerminalReason::MaxIters;
    let mut k = 0;
    if stop_tol.is_some_and(|t| field.norm() < t) {
        reason = TerminalReason::Converged;
    }

    while reason == TerminalReason::MaxIters && k < config.max_iters {
        let next_k = k + 1;
        let noise = config.noise.draw(dims, rng);
        let next = stepper
            .advance(&x, &field, next_k, noise.as_ref())
            .and_then(|nx| {
                if nx.is_finite() {
                    Ok(nx)
                } else {
                    Err(Error::Evaluation(format!("non-finite iterate at k = {next_k}")))
                }
            })
            .and_then(|nx| stepper.field(&nx).map(|f| (nx, f)))
            .and_then(|(nx, nf)| {
                let costs_finite = Player::BOTH.iter().all(|&p| oracle.cost(p, &nx).is_finite());
                if nf.is_finite() && costs_finite {
                    Ok((nx, nf))
                } else {
                    Err(Error::Evaluation(format!("non-finite field or cost at k = {next_k}")))
                }
            });
        let (nx, nf) = match next {
            Ok(v) => v,
            Err(e) => {
                reason = TerminalReason::NumericalFailure;
                message = Some(e.to_string());
                break;
            }
        };
        k = next_k;
        x = nx;
        field = nf;
        observe(k, &x);
        if !domain_warned {
            if let Some(w) = oracle.domain_warning(&x) {
                let msg = format!("k = {k}: {w}");
                warn!("{msg}");
                warnings.push(msg);
                domain_warned = true;
            }
        }
        if stop_tol.is_some_and(|t| field.norm() < t) {
            reason = TerminalReason::Converged;
        }
        if k % config.record_every == 0 {
            records.push(record(k, &x, &field));
        }
        if config.spectra_every.is_some_and(|s| k % s == 0) {
            snapshot(k, &x, &mut warnings, &mut spectra);
        }
    }
    if records.last().map(|r| r.k) != Some(k) {
        records.push(record(k, &x, &field));
    }

    Ok(Trajectory {
        dims,
        records,
        terminal_reason: reason,
        iterations: k,
        message,
        warnings,
        two_timescale_valid,
        spectra,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dynamics::Schedule;
    use crate::games::{DuopolyGame, QuadraticGame, TorusGame};
    use std::f64::consts::PI;

    fn q121() -> QuadraticGame {
        QuadraticGame::scalar_zero_sum(1.0, 2.0, 1.0)
    }

    #[test]
    fn simgrad_converges_on_stable_quadratic() {
        let cfg = RunConfig::new(
            UpdateRule::SimGrad,
            Schedules::uniform(Schedule::Constant { gamma: 0.1 }),
            JointPoint::scalar(1.0, 1.0),
            10_000,
        );
        let t = run(&cfg, &q121()).unwrap();
        assert_eq!(t.terminal_reason, TerminalReason::Converged);
        assert!(t.last().grad_norm < 1e-8);
        assert!(t.final_x().norm() < 1e-8);
    }

    #[test]
    fn record_count_and_terminal_row() {
        let mut cfg = RunConfig::new(
            UpdateRule::SimGrad,
            Schedules::uniform(Schedule::Constant { gamma: 0.01 }),
            JointPoint::scalar(1.0, 1.0),
            100,
        );
        cfg.stop_grad_tol = Some(1e-300);
        cfg.record_every = 10;
        let t = run(&cfg, &q121()).unwrap();
        assert_eq!(t.records.len(), 11);
        cfg.max_iters = 95;
        let t = run(&cfg, &q121()).unwrap();
        assert_eq!(t.records.len(), 11);
        assert_eq!(t.last().k, 95);
        assert_eq!(t.terminal_reason, TerminalReason::MaxIters);
        let csv = t.to_csv();
        assert!(csv.starts_with("k,x1_0,x2_0,f1,f2,grad_norm,tau\n"));
        assert_eq!(csv.lines().count(), 12);
    }

    #[test]
    fn duopoly_noiseless_stackelberg() {
        let g = DuopolyGame::new(100.0, 5.0, 2.0).unwrap();
        let sched = Schedules {
            leader: Schedule::Polynomial { gamma: 1.0, p: 1.0 },
            follower: Schedule::Polynomial { gamma: 1.0, p: 2.0 / 3.0 },
        };
        let mut cfg = RunConfig::new(
            UpdateRule::Stackelberg { eta: 0.0, solver: Default::default() },
            sched,
            JointPoint::scalar(10.0, 10.0),
            5000,
        );
        cfg.record_every = 100;
        let t = run(&cfg, &g).unwrap();
        let x = t.final_x();
        assert!((x.x1[0] - 46.0).abs() < 1e-3 && (x.x2[0] - 26.0).abs() < 1e-3, "{x:?}");
        for w in t.records.windows(2) {
            assert!(w[1].tau <= w[0].tau);
        }
    }

    #[test]
    fn deterministic_under_noise() {
        let g = DuopolyGame::new(100.0, 5.0, 2.0).unwrap();
        let mut cfg = RunConfig::new(
            UpdateRule::SimGrad,
            Schedules::uniform(Schedule::Polynomial { gamma: 1.0, p: 1.0 }),
            JointPoint::scalar(10.0, 10.0),
            2000,
        );
        cfg.noise = NoiseModel::gaussian([10f64.sqrt(); 2], 42);
        cfg.record_every = 50;
        let a = run(&cfg, &g).unwrap().to_csv();
        let b = run(&cfg, &g).unwrap().to_csv();
        assert_eq!(a, b);
        cfg.noise.seed = 43;
        assert_ne!(a, run(&cfg, &g).unwrap().to_csv());
    }

    #[test]
    fn timescale_warning() {
        let g = DuopolyGame::new(100.0, 5.0, 2.0).unwrap();
        let mut cfg = RunConfig::new(
            UpdateRule::Stackelberg { eta: 0.0, solver: Default::default() },
            Schedules::uniform(Schedule::Polynomial { gamma: 1.0, p: 1.0 }),
            JointPoint::scalar(10.0, 10.0),
            10,
        );
        cfg.noise = NoiseModel::gaussian([1.0, 1.0], 0);
        let t = run(&cfg, &g).unwrap();
        assert_eq!(t.two_timescale_valid, Some(false));
        assert!(t.warnings[0].contains("timescales"));
    }

    #[test]
    fn best_response_duopoly_and_torus() {
        let g = DuopolyGame::new(100.0, 5.0, 2.0).unwrap();
        let rule = UpdateRule::BestResponse { inner_tol: 1e-10, inner_max_iters: 10_000, inner_step: 0.4 };
        let cfg = RunConfig::new(
            rule.clone(),
            Schedules::uniform(Schedule::Constant { gamma: 0.5 }),
            JointPoint::scalar(0.0, 0.0),
            200,
        );
        let t = run_best_response(&cfg, &g).unwrap();
        assert!((t.final_x().x1[0] - 46.0).abs() < 1e-6);
        for r in &t.records {
            assert!(g.grad(Player::Follower, Player::Follower, &r.x).norm() <= 1e-10);
        }

        let torus = TorusGame::new([1.0, 1.3], [PI / 8.0; 2]).unwrap();
        let cfg = RunConfig::new(
            rule,
            Schedules::uniform(Schedule::Constant { gamma: 0.2 }),
            JointPoint::scalar(-0.5, 1.2),
            2000,
        );
        let t = run_best_response(&cfg, &torus).unwrap();
        let x = t.final_x();
        assert!((x.x1[0] + 0.53).abs() < 0.05 && (x.x2[0] - 1.25).abs() < 0.05, "{x:?}");
    }

    #[test]
    fn best_response_initial_stall_is_an_error() {
        let g = DuopolyGame::new(100.0, 5.0, 2.0).unwrap();
        let rule = UpdateRule::BestResponse { inner_tol: 1e-10, inner_max_iters: 3, inner_step: 0.1 };
        let cfg = RunConfig::new(rule, Schedules::uniform(Schedule::Constant { gamma: 0.5 }), JointPoint::scalar(0.0, 0.0), 10);
        assert!(matches!(run_best_response(&cfg, &g), Err(Error::FollowerNonConvergence { .. })));
        let cfg = RunConfig::new(UpdateRule::SimGrad, cfg.schedules, cfg.x0, 10);
        assert!(matches!(run_best_response(&cfg, &g), Err(Error::Precondition(_))));
    }

    #[test]
    fn divergence_is_numerical_failure() {
        let g = QuadraticGame::scalar_zero_sum(-1.0, 0.0, -1.0);
        let mut cfg = RunConfig::new(
            UpdateRule::SimGrad,
            Schedules::uniform(Schedule::Constant { gamma: 1e3 }),
            JointPoint::scalar(1.0, 1.0),
            10_000,
        );
        cfg.record_every = 1000;
        let t = run(&cfg, &g).unwrap();
        assert_eq!(t.terminal_reason, TerminalReason::NumericalFailure);
        assert!(t.final_x().is_finite());
    }

    #[test]
    fn config_round_trip() {
        let json = r#"{"rule":"stackelberg","eta":0.0,
            "schedules":{"leader":{"kind":"polynomial","gamma":1,"p":1},"follower":{"kind":"polynomial","gamma":1,"p":0.6666666666666666}},
            "noise":{"kind":"gaussian","sigma":[3.1622776601683795,3.1622776601683795],"seed":1},
            "x0":{"x1":[10],"x2":[10]},"max_iters":100}"#;
        let cfg: RunConfig = serde_json::from_str(json).unwrap();
        assert_eq!(cfg.effective_stop_tol(), None);
        let again: RunConfig = serde_json::from_str(&serde_json::to_string(&cfg).unwrap()).unwrap();
        assert_eq!(cfg, again);
    }
}
