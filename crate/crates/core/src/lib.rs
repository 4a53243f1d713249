//! Forward and inverse solvers for the (sub)diffusion equation
//!
//! ```text
//!   ∂_t^α u − ∇·(q∇u) = f   in Ω × (0, T],   u = 0 on ∂Ω,   u(0) = u0
//! ```
//!
//! with a Caputo derivative of order α ∈ (0, 1]. Space is discretized with
//! continuous piecewise linear elements, time with backward Euler convolution
//! quadrature. The diffusion coefficient q is reconstructed from a noisy
//! terminal observation by an H¹-seminorm Tikhonov functional minimized with a
//! projected, Sobolev-preconditioned conjugate gradient method whose gradient
//! comes from the exact discrete adjoint.

pub mod error;
pub mod experiments;
pub mod fem;
pub mod inverse;
pub mod linalg;
pub mod mesh;
pub mod problems;
pub mod timestep;

pub use error::{Error, Result};
pub use fem::{Field, FemSpace, Space};
pub use mesh::{Domain, Mesh};
pub use timestep::{CqWeights, TimeGrid, Trajectory};
