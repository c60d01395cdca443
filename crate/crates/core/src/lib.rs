pub mod error;
pub mod kernels;
pub mod mesh;
pub mod quadrature;
pub mod galerkin;
pub mod harmonic;
pub mod volumegrid;
pub mod gradient;
pub mod verify;
pub mod cli;
