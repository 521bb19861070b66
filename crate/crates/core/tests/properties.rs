use nalgebra::DVector;
use proptest::prelude::*;
use std::cell::Cell;

use proptest::test_runner::{Config, RngAlgorithm, TestRng, TestRunner};
use stackdyn::dynamics::{run, step, RunConfig, Schedule, Schedules, UpdateRule};
use stackdyn::equilibria::{check_corollary1, check_prop2, classify, ClassifyConfig};
use stackdyn::games::{GameClass, QuadraticGame, QuadraticGameSpec};
use stackdyn::opalg::{eig_dense, jacobian_stackelberg, SolveConfig};
use stackdyn::oracle::{omega, omega_stackelberg};
use stackdyn::{BlockDims, GameOracle, JointPoint, Player};

fn runner(cases: u32) -> TestRunner {
    let mut seed = [0u8; 32];
    seed[..8].copy_from_slice(&0x5eed_u64.to_le_bytes());
    let rng = TestRng::from_seed(RngAlgorithm::ChaCha, &seed);
    TestRunner::new_with_rng(Config { cases, failure_persistence: None, ..Config::default() }, rng)
}

fn zero_sum(d1: usize, d2: usize, seed: u64) -> QuadraticGame {
    QuadraticGame::random(&QuadraticGameSpec {
        d1,
        d2,
        class: GameClass::ZeroSum,
        seed,
        coupling_scale: 1.0,
        linear_scale: 1.0,
    })
    .unwrap()
}

/// Scales both costs by a positive constant.
struct Scaled<G> {
    inner: G,
    c: f64,
}

impl<G: GameOracle> GameOracle for Scaled<G> {
    fn dims(&self) -> BlockDims {
        self.inner.dims()
    }
    fn cost(&self, p: Player, x: &JointPoint) -> f64 {
        self.c * self.inner.cost(p, x)
    }
    fn grad(&self, p: Player, b: Player, x: &JointPoint) -> DVector<f64> {
        self.inner.grad(p, b, x) * self.c
    }
    fn sovp(&self, p: Player, r: Player, c: Player, x: &JointPoint, v: &DVector<f64>) -> DVector<f64> {
        self.inner.sovp(p, r, c, x, v) * self.c
    }
    fn zero_sum(&self) -> bool {
        self.inner.zero_sum()
    }
}

#[test]
fn stable_stackelberg_points_are_dse_and_stable_dne_are_dse() {
    let checked = (Cell::new(0), Cell::new(0));
    runner(300)
        .run(&(1usize..4, 1usize..4, any::<u64>()), |(d1, d2, seed)| {
            let g = zero_sum(d1, d2, seed);
            let Some(x) = g.critical_point() else { return Ok(()) };
            let c = classify(&g, &x, &ClassifyConfig::default()).unwrap();
            if c.stable_stackelberg && !c.marginal {
                checked.0.set(checked.0.get() + 1);
                prop_assert!(c.is_dse, "seed {seed}: {c:?}");
            }
            if c.is_dne && c.stable_simgrad {
                checked.1.set(checked.1.get() + 1);
                prop_assert!(check_prop2(&g, &x, &ClassifyConfig::default()).unwrap());
            }
            Ok(())
        })
        .unwrap();
    assert!(checked.0.get() > 10 && checked.1.get() > 5, "{checked:?}");
}

#[test]
fn scalar_non_nash_attractors_with_concave_follower_are_dse() {
    let hits = Cell::new(0);
    runner(2000)
        .run(&(-3.0f64..3.0, -3.0f64..3.0, -3.0f64..3.0), |(a, b, c)| {
            let g = QuadraticGame::scalar_zero_sum(a, b, c);
            let x = JointPoint::scalar(0.0, 0.0);
            let cl = classify(&g, &x, &ClassifyConfig::default()).unwrap();
            if cl.non_nash_attractor && cl.follower_hessian.is_pd() && !cl.marginal {
                hits.set(hits.get() + 1);
                prop_assert!(cl.is_dse);
                prop_assert!(check_corollary1(&g, &x, &ClassifyConfig::default()).unwrap());
            }
            Ok(())
        })
        .unwrap();
    assert!(hits.get() > 20, "{}", hits.get());
}

#[test]
fn classification_invariant_under_cost_rescaling() {
    runner(200)
        .run(&(1usize..4, 1usize..4, any::<u64>(), 0.01f64..100.0), |(d1, d2, seed, s)| {
            let g = zero_sum(d1, d2, seed);
            let Some(x) = g.critical_point() else { return Ok(()) };
            let cfg = ClassifyConfig::default();
            let a = classify(&g, &x, &cfg).unwrap();
            if a.marginal {
                return Ok(());
            }
            let b = classify(&Scaled { inner: g.clone(), c: s }, &x, &cfg).unwrap();
            prop_assert_eq!(
                (a.is_dne, a.is_dse, a.stable_simgrad, a.stable_stackelberg, a.non_nash_attractor),
                (b.is_dne, b.is_dse, b.stable_simgrad, b.stable_stackelberg, b.non_nash_attractor)
            );
            prop_assert_eq!((a.leader_hessian, a.follower_hessian, a.schur), (b.leader_hessian, b.follower_hessian, b.schur));
            Ok(())
        })
        .unwrap();
}

#[test]
fn stackelberg_jacobian_is_block_triangular_at_critical_points() {
    let checked = Cell::new(0);
    runner(200)
        .run(&(1usize..4, 1usize..4, any::<u64>()), |(d1, d2, seed)| {
            let g = zero_sum(d1, d2, seed);
            let Some(x) = g.critical_point() else { return Ok(()) };
            let cl = classify(&g, &x, &ClassifyConfig::default()).unwrap();
            if cl.degenerate || cl.marginal {
                return Ok(());
            }
            checked.set(checked.get() + 1);
            let js = jacobian_stackelberg(&g, &x, 0.0, 1e-4).unwrap();
            let upper = js.view((0, d1), (d1, d2)).norm();
            prop_assert!(upper < 1e-4, "upper block {upper}");
            let mut got: Vec<f64> = eig_dense(&js).unwrap().eigs.iter().map(|e| e.re).collect();
            let mut want: Vec<f64> = cl.spectra.s1.as_ref().unwrap().real_parts();
            want.extend(cl.spectra.d22f2.real_parts());
            got.sort_by(f64::total_cmp);
            want.sort_by(f64::total_cmp);
            for (u, v) in got.iter().zip(&want) {
                prop_assert!((u - v).abs() < 1e-4 * (1.0 + v.abs()), "{got:?} vs {want:?}");
            }
            Ok(())
        })
        .unwrap();
    assert!(checked.get() > 100, "{}", checked.get());
}

#[test]
fn lola_shares_critical_points_with_simgrad_in_zero_sum_games() {
    runner(100)
        .run(&(1usize..4, 1usize..4, any::<u64>()), |(d1, d2, seed)| {
            let g = zero_sum(d1, d2, seed);
            let Some(x) = g.critical_point() else { return Ok(()) };
            prop_assume!(omega(&g, &x).unwrap().norm() < 1e-9);
            let sched = Schedules::uniform(Schedule::Constant { gamma: 0.01 });
            let next = step(&UpdateRule::Lola, &g, &x, 1, &sched, None).unwrap();
            prop_assert!(next.distance(&x) < 1e-9 * (1.0 + x.norm()));
            Ok(())
        })
        .unwrap();
}

#[test]
fn every_rule_fixes_its_own_critical_point() {
    runner(100)
        .run(&(1usize..3, 1usize..3, any::<u64>()), |(d1, d2, seed)| {
            let g = zero_sum(d1, d2, seed);
            let Some(x) = g.critical_point() else { return Ok(()) };
            let cl = classify(&g, &x, &ClassifyConfig::default()).unwrap();
            prop_assume!(!cl.degenerate && cl.follower_hessian.is_pd());
            let sched = Schedules::uniform(Schedule::Constant { gamma: 0.01 });
            let rules = [
                UpdateRule::SimGrad,
                UpdateRule::Stackelberg { eta: 0.0, solver: SolveConfig::default() },
                UpdateRule::Lola,
                UpdateRule::BestResponse { inner_tol: 1e-10, inner_max_iters: 1000, inner_step: 0.01 },
            ];
            for r in rules {
                let next = step(&r, &g, &x, 1, &sched, None).unwrap();
                prop_assert!(next.distance(&x) < 1e-8 * (1.0 + x.norm()), "{r:?}");
            }
            prop_assert!(omega_stackelberg(&g, &x, 0.0, &SolveConfig::exact(d2)).unwrap().norm() < 1e-8);
            Ok(())
        })
        .unwrap();
}

#[test]
fn runs_are_bitwise_reproducible() {
    runner(20)
        .run(&(any::<u64>(), any::<u64>()), |(game_seed, noise_seed)| {
            let g = zero_sum(2, 2, game_seed);
            let mut cfg = RunConfig::new(
                UpdateRule::Stackelberg { eta: 0.1, solver: SolveConfig::default() },
                Schedules::uniform(Schedule::Polynomial { gamma: 0.01, p: 0.6 }),
                JointPoint::from_slices(&[1.0, -1.0], &[0.5, 0.2]),
                200,
            );
            cfg.noise = stackdyn::dynamics::NoiseModel::gaussian([0.1, 0.1], noise_seed);
            let a = run(&cfg, &g).unwrap();
            let b = run(&cfg, &g).unwrap();
            prop_assert_eq!(a.to_csv(), b.to_csv());
            Ok(())
        })
        .unwrap();
}
