//! Reduced-order reconstruction of magnetohydrodynamic channel flows.
//!
//! This crate holds the computational pieces of the toolkit:
//!
//! - [`linalg`] — dense matrices and a deterministic truncated SVD used for
//!   snapshot compression;
//! - [`mhdsim`] — a desk-scale finite-volume solver for buoyant lead–lithium
//!   flow around a cooled pipe under an imposed magnetic field;
//! - [`dataset`] — normalization, parametric stacking, sensor sampling and
//!   lag-window assembly of training data;
//! - [`shred`] — a stacked-LSTM encoder plus shallow decoder with
//!   from-scratch forward/backward passes and an Adam training loop;
//! - [`eval`] — full-state reconstruction from latent predictions and
//!   relative-error metrics against simulator truth.
//!
//! Everything here is pure computation over in-memory data; file formats and
//! the command-line pipeline live in the companion `shredmhd` crate. The
//! crate is `no_std`-compatible (with `alloc`) when built without the
//! default `std` feature.

#![cfg_attr(not(feature = "std"), no_std)]

extern crate alloc;

pub mod dataset;
pub mod eval;
pub mod linalg;
pub mod mhdsim;
pub mod shred;

pub(crate) mod math;
