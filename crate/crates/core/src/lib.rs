//! Symmetric interior penalty discontinuous Galerkin discretization of the
//! Allen-Cahn equation with periodic boundaries, integrated in time by the
//! energy-stable average vector field method under adaptive step control.
//!
//! The numerical core is generic over [`Scalar`] (`f32`/`f64`); the aliases
//! below fix it to `f64`, which is what the executable uses.

pub mod assembly;
pub mod driver;
pub mod integrators;
pub mod io;
pub mod linalg;
pub mod mesh;
pub mod model;
pub mod physics;
pub mod scalar;
pub mod space;

pub use scalar::Scalar;

pub type Mesh = mesh::Mesh<f64>;
pub type DgSpace = space::DgSpace<f64>;
pub type SparseMatrix = linalg::SparseMatrix<f64>;
pub type Potential = physics::Potential<f64>;
pub type Mobility = physics::Mobility<f64>;
