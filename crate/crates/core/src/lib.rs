//! Weak measurement with remote pre- and postselection.
//!
//! The crate is organised bottom-up:
//!
//! - [`qmath`]: dense complex linear algebra for states and operators on
//!   tensor-factored spaces (Kronecker products, partial traces, spectral
//!   decompositions).
//! - [`resources`]: shared entangled resources, the Bell and generalized Bell
//!   bases, and the product-state re-expansions used by the protocol.
//! - [`weakvalues`]: closed-form weak values and transition amplitudes for
//!   pure, mixed, noisy and Werner resources.
//! - [`pointer`]: von Neumann pointer dynamics for a Gaussian apparatus with
//!   exact conditional moments and small-coupling extrapolation.
//! - [`protocol`]: the full LOCC choreography, deterministic and sampled.
//!
//! Subsystems are numbered from 0 in code; particle 1, 2, 3 of the usual
//! three-party labelling map to indices 0, 1, 2.

#![forbid(unsafe_code)]
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod pointer;
pub mod protocol;
pub mod qmath;
pub mod resources;
pub mod tolerance;
pub mod weakvalues;

pub use num_complex::Complex64 as C64;
pub use tolerance::Tolerances;
