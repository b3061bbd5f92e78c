//! Numerical construction of Hamiltonian-stationary Lagrangian surfaces in
//! the complex projective plane from holomorphic potentials on twisted loop
//! groups.

pub mod algebra;
pub mod cones;
pub mod dpw;
pub mod factorization;
pub mod fixtures;
pub mod geometry;
pub mod loops;
pub mod persistence;
pub mod pipeline;
pub mod report;
pub mod stencil;
pub mod verify;
