//! Numerical toolkit for Ginzburg-Landau vortices in superconductors with
//! pinning inclusions.
//!
//! The crate is organised bottom-up:
//!
//! * [`grid`], [`field`], [`io`]: Cartesian node grids over discs and
//!   rectangles, scalar and complex fields, binary/CSV/JSON output.
//! * [`pinning`]: periodic and diluted pinning geometries and the pinning
//!   term `a_eps`.
//! * [`scalar`]: the scalar profile `U` and the 1D interface problem.
//! * [`gl`]: discrete energies and the minimizer for the reduced energy `F`.
//! * [`vortex`]: zero detection, degrees, bad discs and the separation
//!   procedure.
//! * [`s1`]: S1-valued problems (circle, rings, perforated domains,
//!   renormalized energy).
//! * [`homog`]: cell problems, unfolding and the homogenized phase.
//! * [`experiment`]: configuration, run records and end-to-end experiments.

pub mod error;
pub mod experiment;
pub mod field;
pub mod geom;
pub mod gl;
pub mod grid;
pub mod homog;
pub mod io;
pub mod linalg;
pub mod mesh;
pub mod pinning;
pub mod scalar;
pub mod s1;
pub mod vortex;

pub use error::{Error, Result};
pub use geom::Point;
