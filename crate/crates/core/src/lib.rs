//! Desk-scale numerics for the controlled quantum Rabi model.
//!
//! The crate assembles truncated spin-boson Hamiltonians in the Fock ⊗ spin
//! product basis, diagonalizes them, follows eigenpair branches in the
//! coupling `g`, evaluates Rayleigh–Schrödinger coefficients in closed form,
//! certifies non-resonant chains of connectedness for the control operator
//! `X ⊗ 1`, and propagates the bilinear Schrödinger equation under
//! piecewise-constant controls.

pub mod control;
pub mod error;
pub mod export;
pub mod fockmodel;
pub mod perturbation;
pub mod resonance;
pub mod spectral;

pub use error::{Error, Result};
pub use fockmodel::{BasisIndex, LabeledOperator, ModelParams, OperatorName, Spin};
pub use spectral::{BranchFamily, Spectrum};
