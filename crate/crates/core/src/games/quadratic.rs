use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::oracle::{BlockDims, GameOracle, JointPoint, Player};
use crate::{rng, Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GameClass {
    GeneralSum,
    ZeroSum,
}

/// Parameters of a randomly generated quadratic game.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuadraticGameSpec {
    pub d1: usize,
    pub d2: usize,
    pub class: GameClass,
    pub seed: u64,
    #[serde(default = "one")]
    pub coupling_scale: f64,
    #[serde(default)]
    pub linear_scale: f64,
}

fn one() -> f64 {
    1.0
}

/// `f_i(x) = ½xᵀH_i x + g_iᵀx` with symmetric `H_i`.
#[derive(Debug, Clone, PartialEq)]
pub struct QuadraticGame {
    dims: BlockDims,
    hessians: [DMatrix<f64>; 2],
    linear: [DVector<f64>; 2],
    zero_sum: bool,
}

fn sym_normal(rng: &mut impl Rng, n: usize) -> DMatrix<f64> {
    let g = DMatrix::from_fn(n, n, |_, _| rng.sample::<f64, _>(StandardNormal));
    (&g + g.transpose()) * 0.5
}

fn assemble(a: &DMatrix<f64>, b: &DMatrix<f64>, c: &DMatrix<f64>) -> DMatrix<f64> {
    let (d1, d2) = (a.nrows(), c.nrows());
    let mut h = DMatrix::zeros(d1 + d2, d1 + d2);
    h.view_mut((0, 0), (d1, d1)).copy_from(a);
    h.view_mut((0, d1), (d1, d2)).copy_from(b);
    h.view_mut((d1, 0), (d2, d1)).copy_from(&b.transpose());
    h.view_mut((d1, d1), (d2, d2)).copy_from(c);
    h
}

impl QuadraticGame {
    /// General constructor from full symmetric Hessians and linear terms.
    pub fn new(
        dims: BlockDims,
        hessians: [DMatrix<f64>; 2],
        linear: [DVector<f64>; 2],
    ) -> Result<Self> {
        let n = dims.total();
        for h in &hessians {
            if h.nrows() != n || h.ncols() != n {
                return Err(Error::DimensionMismatch {
                    context: "QuadraticGame hessian",
                    expected: n,
                    got: h.nrows(),
                });
            }
            if (h - h.transpose()).amax() > 1e-12 * (1.0 + h.amax()) {
                return Err(Error::Config("quadratic Hessians must be symmetric".into()));
            }
        }
        for g in &linear {
            if g.len() != n {
                return Err(Error::DimensionMismatch {
                    context: "QuadraticGame linear term",
                    expected: n,
                    got: g.len(),
                });
            }
        }
        let zero_sum = (&hessians[0] + &hessians[1]).amax() == 0.0
            && (&linear[0] + &linear[1]).amax() == 0.0;
        Ok(Self {
            dims,
            hessians,
            linear,
            zero_sum,
        })
    }

    /// Zero-sum game with `f = ½x₁ᵀAx₁ + x₁ᵀBx₂ + ½x₂ᵀCx₂` and `f₂ = −f`.
    pub fn zero_sum_from_blocks(a: DMatrix<f64>, b: DMatrix<f64>, c: DMatrix<f64>) -> Result<Self> {
        let dims = BlockDims::new(a.nrows(), c.nrows())?;
        if b.nrows() != dims.d1 || b.ncols() != dims.d2 {
            return Err(Error::Config(format!(
                "coupling block must be {}x{}, got {}x{}",
                dims.d1,
                dims.d2,
                b.nrows(),
                b.ncols()
            )));
        }
        let h = assemble(&a, &b, &c);
        let n = dims.total();
        Self::new(dims, [h.clone(), -h], [DVector::zeros(n), DVector::zeros(n)])
    }

    /// The scalar family `f = ½a x₁² + b x₁x₂ − ½c x₂²`, `f₂ = −f`.
    pub fn scalar_zero_sum(a: f64, b: f64, c: f64) -> Self {
        Self::zero_sum_from_blocks(
            DMatrix::from_element(1, 1, a),
            DMatrix::from_element(1, 1, b),
            DMatrix::from_element(1, 1, -c),
        )
        .expect("1x1 blocks are consistent")
    }

    /// Zero-sum game whose blocks share prescribed eigenbases:
    /// `D₁²f = W₁ diag(μ) W₁ᵀ`, `−D₂²f = W₂ diag(λ) W₂ᵀ`, `D₁₂f = W₁ Σ W₂ᵀ`
    /// with `Σ` rectangular diagonal.
    pub fn shared_eigenbasis(
        w1: &DMatrix<f64>,
        mu: &[f64],
        w2: &DMatrix<f64>,
        lambda: &[f64],
        sigma: &[f64],
    ) -> Result<Self> {
        let (m, n) = (mu.len(), lambda.len());
        if w1.shape() != (m, m) || w2.shape() != (n, n) || sigma.len() > m.min(n) {
            return Err(Error::Config("inconsistent eigenbasis factors".into()));
        }
        let a = w1 * DMatrix::from_diagonal(&DVector::from_column_slice(mu)) * w1.transpose();
        let c = -(w2 * DMatrix::from_diagonal(&DVector::from_column_slice(lambda)) * w2.transpose());
        let mut s = DMatrix::zeros(m, n);
        for (i, &v) in sigma.iter().enumerate() {
            s[(i, i)] = v;
        }
        let b = w1 * s * w2.transpose();
        let sym = |x: DMatrix<f64>| (&x + x.transpose()) * 0.5;
        Self::zero_sum_from_blocks(sym(a), b, sym(c))
    }

    /// Reproducible random game: symmetric blocks from a symmetrized standard
    /// normal, coupling scaled by `coupling_scale`, linear terms by `linear_scale`.
    pub fn random(spec: &QuadraticGameSpec) -> Result<Self> {
        let dims = BlockDims::new(spec.d1, spec.d2)?;
        let n = dims.total();
        let mut rng = rng::stream(spec.seed, 0, 0);
        let draw = |rng: &mut rand_chacha::ChaCha8Rng| {
            let a = sym_normal(rng, dims.d1);
            let b = DMatrix::from_fn(dims.d1, dims.d2, |_, _| rng.sample::<f64, _>(StandardNormal))
                * spec.coupling_scale;
            let c = sym_normal(rng, dims.d2);
            let g = DVector::from_fn(n, |_, _| rng.sample::<f64, _>(StandardNormal)) * spec.linear_scale;
            (assemble(&a, &b, &c), g)
        };
        let (h1, g1) = draw(&mut rng);
        let (h2, g2) = match spec.class {
            GameClass::ZeroSum => (-h1.clone(), -g1.clone()),
            GameClass::GeneralSum => draw(&mut rng),
        };
        Self::new(dims, [h1, h2], [g1, g2])
    }

    pub fn hessian(&self, p: Player) -> &DMatrix<f64> {
        &self.hessians[p.index()]
    }

    fn range(&self, p: Player) -> (usize, usize) {
        match p {
            Player::Leader => (0, self.dims.d1),
            Player::Follower => (self.dims.d1, self.dims.d2),
        }
    }

    /// The unique critical point of `ω` when its (constant) Jacobian is invertible.
    pub fn critical_point(&self) -> Option<JointPoint> {
        let n = self.dims.total();
        let d1 = self.dims.d1;
        let mut jac = DMatrix::zeros(n, n);
        jac.rows_mut(0, d1).copy_from(&self.hessians[0].rows(0, d1));
        jac.rows_mut(d1, n - d1).copy_from(&self.hessians[1].rows(d1, n - d1));
        let mut rhs = DVector::zeros(n);
        rhs.rows_mut(0, d1).copy_from(&self.linear[0].rows(0, d1));
        rhs.rows_mut(d1, n - d1).copy_from(&self.linear[1].rows(d1, n - d1));
        let x = jac.lu().solve(&(-rhs))?;
        JointPoint::from_flat(self.dims, x.as_slice()).ok()
    }
}

impl GameOracle for QuadraticGame {
    fn dims(&self) -> BlockDims {
        self.dims
    }

    fn cost(&self, player: Player, x: &JointPoint) -> f64 {
        let z = x.to_flat();
        let i = player.index();
        0.5 * z.dot(&(&self.hessians[i] * &z)) + self.linear[i].dot(&z)
    }

    fn grad(&self, player: Player, block: Player, x: &JointPoint) -> DVector<f64> {
        let z = x.to_flat();
        let i = player.index();
        let (start, len) = self.range(block);
        self.hessians[i].rows(start, len) * &z + self.linear[i].rows(start, len)
    }

    fn sovp(
        &self,
        player: Player,
        row: Player,
        col: Player,
        _x: &JointPoint,
        v: &DVector<f64>,
    ) -> DVector<f64> {
        let (r0, rl) = self.range(row);
        let (c0, cl) = self.range(col);
        self.hessians[player.index()].view((r0, c0), (rl, cl)) * v
    }

    fn zero_sum(&self) -> bool {
        self.zero_sum
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::oracle::omega;

    fn spec(class: GameClass, seed: u64) -> QuadraticGameSpec {
        QuadraticGameSpec {
            d1: 3,
            d2: 2,
            class,
            seed,
            coupling_scale: 1.0,
            linear_scale: 0.5,
        }
    }

    #[test]
    fn seeded_construction_is_reproducible() {
        let a = QuadraticGame::random(&spec(GameClass::GeneralSum, 9)).unwrap();
        let b = QuadraticGame::random(&spec(GameClass::GeneralSum, 9)).unwrap();
        assert_eq!(a, b);
        let c = QuadraticGame::random(&spec(GameClass::GeneralSum, 10)).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn zero_sum_costs_cancel() {
        let g = QuadraticGame::random(&spec(GameClass::ZeroSum, 4)).unwrap();
        assert!(g.zero_sum());
        let mut rng = rng::stream(1, 0, 0);
        for _ in 0..100 {
            let flat: Vec<f64> = (0..5).map(|_| rng.random_range(-3.0..3.0)).collect();
            let x = JointPoint::from_flat(g.dims(), &flat).unwrap();
            assert_eq!(g.cost(Player::Leader, &x) + g.cost(Player::Follower, &x), 0.0);
        }
    }

    #[test]
    fn critical_point_zeroes_the_field() {
        for seed in 0..20 {
            let g = QuadraticGame::random(&spec(GameClass::GeneralSum, seed)).unwrap();
            let x = g.critical_point().unwrap();
            assert!(omega(&g, &x).unwrap().norm() < 1e-9);
        }
    }

    #[test]
    fn scalar_family_blocks() {
        let g = QuadraticGame::scalar_zero_sum(1.0, 2.0, 1.0);
        let x = JointPoint::scalar(1.0, 1.0);
        let one = DVector::from_element(1, 1.0);
        let (l, f) = (Player::Leader, Player::Follower);
        assert_eq!(g.cost(l, &x), 0.5 + 2.0 - 0.5);
        assert_eq!(g.sovp(f, f, f, &x, &one)[0], 1.0);
        assert_eq!(g.sovp(f, f, l, &x, &one)[0], -2.0);
        assert_eq!(g.sovp(l, l, f, &x, &one)[0], 2.0);
    }
}
