//! Numerical synthesis of mutually unbiased bases (MUBs) for time-bin qudits.
//!
//! A `d`-dimensional time-bin qudit is manipulated by a cascade of `N` unit
//! cells, each consisting of an electro-optic phase modulator (EOM, an
//! arbitrary per-bin temporal phase) followed by a coded fiber Bragg grating
//! (FBG, a circulant unitary built from spectral phases). The full device is
//! described by a truncated `S x S` transfer matrix acting on time-bin modes;
//! its top-left `d x d` window is the computational transformation.
//!
//! This crate provides:
//!
//! - [`cascade`] — transfer-matrix construction (DFT, FBG, EOM, cascade,
//!   subspace projection), unitary by construction;
//! - [`mub`] — MUB quality metrics, basis-state extraction, and
//!   detection/post-selection probability tables;
//! - [`optimize`] — multi-start quasi-Newton search over all free phases,
//!   analytic gradients, and solution validity checks;
//! - [`qkd`] — Monte-Carlo phase-error propagation, QBER extraction, and the
//!   secret-key fraction of the asymmetric `(d+1)`-basis protocol;
//! - [`chipscan`] — FBG chip-truncation sweeps.
//!
//! The crate is `no_std` (with `alloc`) so the numerical core stays free of
//! IO concerns; file formats and the command-line front end live in the
//! companion `mubsynth` crate.

#![no_std]
#![deny(unsafe_code)]

extern crate alloc;

#[cfg(test)]
extern crate std;

pub mod cascade;
pub mod chipscan;
mod error;
mod lbfgs;
pub mod matrix;
pub mod mub;
pub mod optimize;
pub mod qkd;
pub mod stream;

pub use error::Error;

/// Crate-wide result type.
pub type Result<T> = core::result::Result<T, Error>;
