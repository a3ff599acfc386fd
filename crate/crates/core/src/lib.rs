//! Hyperplane arrangement classifiers.
//!
//! A hyperplane arrangement classifier labels a point purely by the sign
//! pattern it produces against `k` hyperplanes, followed by a Boolean lookup.
//! This crate provides:
//!
//! - [`geometry`]: arrangements, sign vectors, cell counting and enumeration;
//! - [`hac`]: lookup-table classifiers, the grid histogram classifier and a
//!   brute-force ERM oracle for toy instances;
//! - [`minnorm`]: min-norm points of polyhedra, KKT certificates and conic
//!   Carathéodory support extraction;
//! - [`compression`]: the sample compression scheme and its size / VC bounds;
//! - [`qnet`]: a small reverse-mode engine for networks with threshold layers
//!   trained by surrogate gradients;
//! - [`datasets`]: synthetic generators, CSV ingestion and preprocessing;
//! - [`experiments`]: rate, moons and benchmark runners.

pub mod compression;
pub mod datasets;
pub mod error;
pub mod experiments;
pub mod geometry;
pub mod hac;
pub mod minnorm;
pub mod qnet;
pub mod rng;

pub use error::{Error, Result};
pub use geometry::{Arrangement, SignVector};
pub use hac::{HacClassifier, LabeledSample, LookupTable};
