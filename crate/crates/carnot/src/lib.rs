//! Numerical analysis on Carnot groups, concretely the first Heisenberg
//! group H¹: group law, dilations, homogeneous norm and metric balls,
//! horizontal calculus, Hardy–Littlewood and local sharp maximal operators,
//! VMO moduli, the constant-coefficient model operator with its homogeneous
//! fundamental solution, a discrete Dirichlet solver for harmonic
//! replacement, and a verification engine that measures the constants and
//! scaling laws of the interior W_X^{2,p} estimate chain at desk scale.
//!
//! All types are immutable after construction and all operations are pure;
//! grid sweeps parallelize internally with deterministic reduction order, so
//! identical configs and seeds reproduce reports byte for byte.

pub mod calculus;
pub mod config;
pub mod error;
pub mod grid;
pub mod maximal;
pub mod dirichlet;
pub mod model;
pub mod verify;
pub mod group;
pub mod jet;

pub use error::{CarnotError, Result};
pub use grid::{GridSpec, SampledFunction};
pub use group::{Ball, CarnotGroup, GroupPoint};
