//! Zero-shot and generalized zero-shot sign recognition over precomputed
//! snippet features.
//!
//! The pipeline is: load a [`data::Dataset`] from a manifest, collapse each
//! sample's feature sequences into a video embedding ([`temporal`]), build
//! class embeddings from binary attributes and text vectors ([`class_embed`]),
//! fit a bilinear compatibility model ([`zsl`]), then score it ([`eval`]) and
//! inspect which attributes drive its decisions ([`influence`]).
//!
//! [`synth`] generates datasets with a planted linear structure and
//! [`oracle`] holds the naive reference computations the test suites compare
//! against.

pub mod class_embed;
pub mod data;
pub mod error;
pub mod eval;
pub mod influence;
pub mod oracle;
pub mod pipeline;
pub mod rng;
pub mod synth;
pub mod temporal;
pub mod zsl;

pub use error::{Error, Result};
