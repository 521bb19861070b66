//! Benchmark games with analytic derivatives.

mod covariance;
mod duopoly;
mod poly;
mod quadratic;
mod spec;
mod torus;

pub use covariance::CovarianceGan;
pub use duopoly::{DuopolyEquilibria, DuopolyGame};
pub use poly::PolyZeroSumGame;
pub use quadratic::{GameClass, QuadraticGame, QuadraticGameSpec};
pub use spec::{CovarianceSpec, GameSpec, ScalarQuadraticSpec};
pub use torus::{wrap_angle, TorusGame};
