//! Isoparametric trace finite elements for the Laplace-Beltrami equation on
//! surfaces given as the zero level of a smooth function.

pub mod assembly;
pub mod cut;
pub mod element;
pub mod error;
pub mod export;
pub mod levelset;
pub mod mapping;
pub mod mesh;
pub mod metrics;
pub mod quadrature;
pub mod solver;
pub mod sparse;
pub mod study;

pub use error::{Error, Result};
pub use levelset::{Aabb, BenchmarkProblem, LevelSet, Vec3};
