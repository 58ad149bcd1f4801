//! Almost-C1 biquadratic splines on fully unstructured quadrilateral meshes.
//!
//! The crate builds, refines, evaluates, and solves with two spline spaces
//! over a manifold quad mesh:
//!
//! * the mixed-smoothness space: one degree of freedom per face, per
//!   boundary edge, and per corner vertex, C1 across regular edges and C0
//!   across edges touching an extraordinary vertex;
//! * the almost-C1 space: the same space truncated on extraordinary faces
//!   and completed with three basis functions per extraordinary vertex, so
//!   that every vertex has a well-defined tangent plane.
//!
//! The crate is `no_std` (with `alloc`); all IO lives in the companion CLI
//! crate.

#![cfg_attr(not(test), no_std)]

extern crate alloc;

pub mod basis;
pub mod bstar;
pub mod eval;
pub mod fem;
pub mod hull;
pub mod math;
pub mod mesh;
pub mod quadrature;
pub mod refine;
pub mod space;
pub mod sparse;
