//! Pipeline, file formats and orchestration for the reduced-order MHD
//! state-reconstruction toolkit. The numerical pieces live in
//! `shredmhd-core`; this crate adds persistence, campaign presets, and
//! the command-line interface.

pub mod config;
pub mod error;
pub mod io;
pub mod pipeline;
pub mod report;
pub mod store;
