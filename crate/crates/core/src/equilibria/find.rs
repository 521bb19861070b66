use std::cmp::Ordering;

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::opalg::SolveConfig;
use crate::oracle::{omega, omega_stackelberg, GameOracle, JointPoint};
use crate::{rng, Error, Result};

/// Which vector field to zero.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "field", rename_all = "snake_case")]
pub enum FieldKind {
    Sim,
    Stackelberg {
        #[serde(default)]
        eta: f64,
    },
}

impl FieldKind {
    pub fn eval<G: GameOracle + ?Sized>(&self, oracle: &G, x: &JointPoint) -> Result<JointPoint> {
        match *self {
            FieldKind::Sim => omega(oracle, x),
            FieldKind::Stackelberg { eta } => omega_stackelberg(oracle, x, eta, &SolveConfig::exact(oracle.dims().d2)),
        }
    }
}

/// Axis-aligned box in the flattened joint space `(x₁, x₂)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Region {
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
}

impl Region {
    pub fn new(lower: Vec<f64>, upper: Vec<f64>) -> Result<Self> {
        let r = Self { lower, upper };
        r.validate(r.lower.len())?;
        Ok(r)
    }

    /// The cube `[lo, hi]^n`.
    pub fn cube(n: usize, lo: f64, hi: f64) -> Self {
        Self { lower: vec![lo; n], upper: vec![hi; n] }
    }

    pub fn validate(&self, n: usize) -> Result<()> {
        if self.lower.len() != n || self.upper.len() != n {
            return Err(Error::Config(format!(
                "region needs {n} lower and upper bounds, got {} and {}",
                self.lower.len(),
                self.upper.len()
            )));
        }
        if self.lower.iter().zip(&self.upper).any(|(l, u)| !(l.is_finite() && u.is_finite() && l < u)) {
            return Err(Error::Config("region bounds must be finite with lower < upper".into()));
        }
        Ok(())
    }

    pub fn contains(&self, x: &[f64], slack: f64) -> bool {
        x.iter()
            .zip(self.lower.iter().zip(&self.upper))
            .all(|(v, (l, u))| *v >= l - slack && *v <= u + slack)
    }

    fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Vec<f64> {
        self.lower.iter().zip(&self.upper).map(|(l, u)| rng.random_range(*l..*u)).collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FindConfig {
    pub n_starts: usize,
    /// Accept a point once the field norm is below this.
    pub tol: f64,
    pub max_newton_iters: usize,
    pub seed: u64,
    pub dedup_radius: f64,
    /// Base central-difference step for the field Jacobian.
    pub fd_step: f64,
}

impl Default for FindConfig {
    fn default() -> Self {
        Self {
            n_starts: 200,
            tol: 1e-9,
            max_newton_iters: 200,
            seed: 0,
            dedup_radius: 1e-4,
            fd_step: 1e-6,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CriticalPoint {
    pub x: JointPoint,
    pub residual_sim: f64,
    /// `None` where `ω_S` is undefined (singular follower Hessian).
    pub residual_stack: Option<f64>,
    pub basin_seed: JointPoint,
}

/// Central-difference Jacobian of a field, step scaled by `max(1, ‖x‖∞)`.
pub fn fd_field_jacobian<F>(x: &JointPoint, step: f64, field: F) -> Result<DMatrix<f64>>
where
    F: Fn(&JointPoint) -> Result<JointPoint>,
{
    let dims = x.dims();
    let n = dims.total();
    let h = step * x.amax().max(1.0);
    let base = x.to_flat();
    let mut jac = DMatrix::zeros(n, n);
    for j in 0..n {
        let mut p = base.clone();
        p[j] += h;
        let mut m = base.clone();
        m[j] -= h;
        let fp = field(&JointPoint::from_flat(dims, p.as_slice())?)?.to_flat();
        let fm = field(&JointPoint::from_flat(dims, m.as_slice())?)?.to_flat();
        jac.set_column(j, &((fp - fm) / (2.0 * h)));
    }
    Ok(jac)
}

// Levenberg–Marquardt-damped Newton iteration on F(x) = 0.
fn newton<G: GameOracle + ?Sized>(
    oracle: &G,
    field: FieldKind,
    start: JointPoint,
    cfg: &FindConfig,
) -> Option<JointPoint> {
    let dims = oracle.dims();
    let eval = |x: &JointPoint| field.eval(oracle, x).ok().filter(JointPoint::is_finite).map(|f| f.to_flat());
    let mut x = oracle.canonicalize(start);
    let mut fx = eval(&x)?;
    let mut damping = 1e-6;
    for _ in 0..cfg.max_newton_iters {
        let norm = fx.norm();
        if norm < cfg.tol {
            return Some(x);
        }
        let jac = fd_field_jacobian(&x, cfg.fd_step, |p| field.eval(oracle, p)).ok()?;
        let jt = jac.transpose();
        let normal = &jt * &jac;
        let grad = &jt * &fx;
        let mut accepted = false;
        for _ in 0..30 {
            let scale = damping * (1.0 + normal.diagonal().amax());
            let lhs = &normal + DMatrix::identity(dims.total(), dims.total()) * scale;
            let Some(dir) = lhs.cholesky().map(|c| c.solve(&(-&grad))) else {
                damping *= 10.0;
                continue;
            };
            let trial = JointPoint::from_flat(dims, (x.to_flat() + &dir).as_slice()).ok()?;
            let trial = oracle.canonicalize(trial);
            if let Some(ft) = eval(&trial) {
                if ft.norm() < norm {
                    x = trial;
                    fx = ft;
                    damping = (damping / 10.0).max(1e-15);
                    accepted = true;
                    break;
                }
            }
            damping *= 10.0;
        }
        if !accepted {
            break;
        }
    }
    (fx.norm() < cfg.tol).then_some(x)
}

fn lex(a: &DVector<f64>, b: &DVector<f64>) -> Ordering {
    a.iter().zip(b.iter()).map(|(u, v)| u.total_cmp(v)).find(|o| o.is_ne()).unwrap_or(Ordering::Equal)
}

/// Multi-start damped Newton on `field` from uniform starts in `region`.
///
/// Start `i` is drawn from stream `(seed, 0, i)`. Converged points are
/// canonicalized (torus angles wrapped), kept if inside the region, sorted by
/// coordinates and merged within `dedup_radius`; the merge distance is taken
/// on the canonicalized difference so periodic coordinates compare across the
/// seam. An empty result is not an error.
pub fn find_critical_points<G: GameOracle + ?Sized>(
    oracle: &G,
    field: FieldKind,
    region: &Region,
    cfg: &FindConfig,
) -> Result<Vec<CriticalPoint>> {
    let dims = oracle.dims();
    region.validate(dims.total())?;
    if cfg.n_starts == 0 || !(cfg.tol > 0.0) || !(cfg.dedup_radius >= 0.0) {
        return Err(Error::Config("find needs n_starts >= 1, tol > 0 and dedup_radius >= 0".into()));
    }
    let found: Vec<Option<(JointPoint, JointPoint)>> = (0..cfg.n_starts)
        .into_par_iter()
        .map(|i| {
            let mut rng = rng::stream(cfg.seed, 0, i as u64);
            let start = JointPoint::from_flat(dims, &region.sample(&mut rng)).expect("region matches dims");
            newton(oracle, field, start.clone(), cfg).map(|x| (x, start))
        })
        .collect();

    let mut hits: Vec<(JointPoint, JointPoint, f64)> = found
        .into_iter()
        .flatten()
        .filter(|(x, _)| region.contains(x.to_flat().as_slice(), 1e-9))
        .map(|(x, s)| {
            let r = field.eval(oracle, &x).map(|f| f.norm()).unwrap_or(f64::INFINITY);
            (x, s, r)
        })
        .collect();
    hits.sort_by(|a, b| lex(&a.0.to_flat(), &b.0.to_flat()));

    let dist = |a: &JointPoint, b: &JointPoint| oracle.canonicalize(a.offset(b, -1.0)).norm();
    let mut clusters: Vec<(JointPoint, JointPoint, f64)> = Vec::new();
    for h in hits {
        match clusters.iter_mut().find(|c| dist(&c.0, &h.0) <= cfg.dedup_radius) {
            Some(c) if h.2 < c.2 => *c = h,
            Some(_) => {}
            None => clusters.push(h),
        }
    }
    clusters.sort_by(|a, b| lex(&a.0.to_flat(), &b.0.to_flat()));

    let exact = SolveConfig::exact(dims.d2);
    let eta = match field {
        FieldKind::Stackelberg { eta } => eta,
        FieldKind::Sim => 0.0,
    };
    clusters
        .into_iter()
        .map(|(x, start, _)| {
            Ok(CriticalPoint {
                residual_sim: omega(oracle, &x)?.norm(),
                residual_stack: omega_stackelberg(oracle, &x, eta, &exact).ok().map(|w| w.norm()),
                x,
                basin_seed: start,
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::games::{DuopolyGame, QuadraticGame, TorusGame};
    use std::f64::consts::PI;

    #[test]
    fn duopoly_unique_points() {
        let g = DuopolyGame::new(100.0, 5.0, 2.0).unwrap();
        let region = Region::cube(2, 0.0, 100.0);
        let cfg = FindConfig { n_starts: 16, ..Default::default() };
        let nash = find_critical_points(&g, FieldKind::Sim, &region, &cfg).unwrap();
        assert_eq!(nash.len(), 1);
        assert!((nash[0].x.x1[0] - 92.0 / 3.0).abs() < 1e-3 && (nash[0].x.x2[0] - 101.0 / 3.0).abs() < 1e-3);
        let stack = find_critical_points(&g, FieldKind::Stackelberg { eta: 0.0 }, &region, &cfg).unwrap();
        assert_eq!(stack.len(), 1);
        assert!((stack[0].x.x1[0] - 46.0).abs() < 1e-3 && (stack[0].x.x2[0] - 26.0).abs() < 1e-3);
    }

    #[test]
    fn quadratic_origin() {
        let g = QuadraticGame::scalar_zero_sum(-1.0, 2.0, 2.0);
        let pts = find_critical_points(&g, FieldKind::Sim, &Region::cube(2, -1.0, 1.0), &FindConfig::default()).unwrap();
        assert_eq!(pts.len(), 1);
        assert!(pts[0].x.norm() < 1e-9);
    }

    #[test]
    fn torus_points_are_wrapped_and_merged() {
        let g = TorusGame::new([1.0, 1.3], [PI / 8.0; 2]).unwrap();
        let region = Region::cube(2, -PI, PI);
        let cfg = FindConfig { n_starts: 100, ..Default::default() };
        let pts = find_critical_points(&g, FieldKind::Sim, &region, &cfg).unwrap();
        for p in &pts {
            assert!(p.x.amax() <= PI);
        }
        for (i, a) in pts.iter().enumerate() {
            for b in &pts[i + 1..] {
                assert!(g.canonicalize(a.x.offset(&b.x, -1.0)).norm() > 1e-4);
            }
        }
        assert!(pts.iter().any(|p| (p.x.x1[0] + 0.78).abs() < 0.02 && (p.x.x2[0] - 1.18).abs() < 0.02));
    }

    #[test]
    fn deterministic_and_sorted() {
        let g = TorusGame::new([1.0, 1.3], [PI / 8.0; 2]).unwrap();
        let region = Region::cube(2, -PI, PI);
        let cfg = FindConfig { n_starts: 50, seed: 3, ..Default::default() };
        let a = find_critical_points(&g, FieldKind::Sim, &region, &cfg).unwrap();
        let b = find_critical_points(&g, FieldKind::Sim, &region, &cfg).unwrap();
        assert_eq!(a, b);
        for w in a.windows(2) {
            assert_eq!(lex(&w[0].x.to_flat(), &w[1].x.to_flat()), Ordering::Less);
        }
    }
}
