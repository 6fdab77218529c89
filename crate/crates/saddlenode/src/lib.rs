//! Symbolic-numeric toolkit for doubly-resonant saddle-node vector fields in
//! three complex variables.
//!
//! The crate computes formal and sectorial normal forms of fields
//! `x^2 d/dx + (-lambda y1 + F1) d/dy1 + (lambda y2 + F2) d/dy2`, performs
//! Gevrey-1 Borel-Laplace summation, and extracts Stokes-diffeomorphism
//! invariants in the space of leaves, including the full compactified
//! Painleve-I example.

pub mod borel;
pub mod numerics;
pub mod prenorm;
pub mod straighten;
pub mod series;
pub mod vectorfield;

pub use series::{Scalar, TruncatedSeries, UniSeries, C};
pub use vectorfield::{FiberedDiffeo, FiberedVectorField};
pub fn run_cli_placeholder() -> i32 { 0 }
