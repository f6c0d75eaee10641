//! Localized orthogonal decomposition on uniform Cartesian meshes and explicit
//! ReLU network constructions that emulate its local operators.
//!
//! The crate is `no_std` and only needs an allocator. File formats, threading
//! and the command-line tool live in the companion `lodnn` crate.
//!
//! Module map:
//! - [`mesh`]: nested coarse / coefficient / fine grids, patches, indexers.
//! - [`fem`]: Q1 assembly, mass matrices, the quasi-interpolation and prolongations.
//! - [`lod`]: local saddle-point problems, PG and C variants of the global matrix.
//! - [`nn`]: network calculus, approximate multiplication and inversion networks.
//! - [`surrogate`]: the composite network emulating one local LOD matrix.
#![cfg_attr(not(test), no_std)]

extern crate alloc;

pub mod dense;
pub mod error;
pub mod exec;
pub mod fem;
pub mod lod;
pub mod mesh;
pub mod nn;
pub mod sparse;
pub mod surrogate;

pub use error::{Error, Result};
