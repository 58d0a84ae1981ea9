//! Deterministic kinetic-simulation laboratory for the Boltzmann equation
//! with a large external potential on a periodic torus.
//!
//! The crate is organized around the pipeline that a stability study of the
//! local Maxwellian needs:
//!
//! * [`potential`]: truncated Fourier potentials on the torus, with certified
//!   bounds and the degenerate direction subspace of the force field.
//! * [`flow`]: Hamiltonian characteristics, variational (tangent) dynamics,
//!   and conjugate-point covering reports for the backward flow.
//! * [`collision`]: hard-potential cutoff collision operator: collision
//!   frequency, bilinear form Q, linearized operator L = nu - K with a dense
//!   symmetric kernel table, weighted kernel bounds.
//! * [`equilibrium`]: local Maxwellian backgrounds, distribution
//!   representations (absolute / perturbation / weighted), hydrodynamic
//!   projection, conservation and entropy reports.
//! * [`linear`]: positivity constant of the linearized operator, macroscopic
//!   field residuals, null-family Gram checks, decay-rate bootstrap.
//! * [`solver`]: Strang-split semi-Lagrangian time stepper, mild-form
//!   (Duhamel) step, run logs, stability certificates.
//!
//! Everything is deterministic: fixed iteration orders, seeded generators,
//! and no threading.

pub mod collision;
pub mod equilibrium;
pub mod error;
pub mod flow;
pub mod grids;
pub mod io;
pub mod linear;
pub mod numerics;
pub mod potential;
pub mod solver;
pub mod spectral;
pub mod torus;

pub use error::{Error, Result};
