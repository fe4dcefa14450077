//! Embedding-space engine for class-incremental source-free unsupervised
//! domain adaptation.
//!
//! The crate is `no_std` (with `alloc`). Everything here is pure computation
//! over in-memory data: a small reverse-mode gradient engine, a synthetic
//! scenario generator, a two-layer feature extractor with a bias-free
//! prototype classifier, and the adaptation pipeline built from
//!
//! - positive-class mining from source-similarity and target-probability
//!   accumulation distributions ([`mining`]),
//! - multi-granularity prototype pseudo-labeling with cross-entropy and
//!   NT-Xent self-organization ([`selforg`]),
//! - prototype topology distillation between source and target classifier
//!   rows ([`topodistill`]),
//! - herding exemplar replay ([`replay`]).
//!
//! File formats, configuration parsing and the command line live in the
//! companion `groto` crate.

#![no_std]

extern crate alloc;

pub mod error;
pub mod mining;
pub mod model;
pub mod numerics;
pub mod pipeline;
pub mod replay;
pub mod rng;
pub mod scenario;
pub mod selforg;
pub mod topodistill;

pub use error::{Error, Result};
pub use numerics::Tensor;
