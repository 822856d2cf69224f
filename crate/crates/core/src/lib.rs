//! Orthonormal polynomial expansions of transition densities for affine
//! jump-diffusions, with a Fourier-inversion oracle and applications to
//! option pricing, portfolio credit loss and likelihood inference.

pub mod affine;
pub mod apps;
pub mod cli;
pub mod config;
pub mod expand;
pub mod inference;
pub mod oracle;
pub mod poly;
pub mod quad;
pub mod special;
pub mod weights;
