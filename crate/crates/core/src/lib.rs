//! Phase-space numerics for particle-laden compressible flows on the torus.
//!
//! The crate is organized around the moving parts of a kinetic-fluid coupling
//! in the dense-suspension regime:
//!
//! - [`grid`]: phase-space grids, FFT-based multiplier operators, velocity
//!   quadrature and Sobolev-norm diagnostics;
//! - [`model`]: pressure laws, state containers, the regularized force field,
//!   the Brinkman source and pointwise density bounds;
//! - [`penrose`]: evaluation and sampled minimization of the Penrose stability
//!   functional over the frequency domain;
//! - [`characteristics`]: friction characteristic flows, the velocity
//!   straightening map and Lagrangian pushforwards;
//! - [`avgops`]: kernel averaging operators over free and frictional
//!   characteristic feet, with an empirical operator-norm harness;
//! - [`solver`]: split-step time integration of the coupled system with
//!   conservation, bound and stability diagnostics.
//!
//! All operations are pure functions of immutable inputs and safe to call
//! from multiple threads; FFT plans are shared behind `Arc`.

pub mod avgops;
pub mod characteristics;
pub mod grid;
pub mod interp;
pub mod model;
pub mod penrose;
pub mod solver;

/// Spatial points and velocities are carried as fixed-size arrays with the
/// first `d` entries meaningful (`d` is 1 or 2).
pub type Point = [f64; 2];
