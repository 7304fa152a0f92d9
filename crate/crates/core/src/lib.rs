//! Learned additive noise for private split inference.
//!
//! A frozen classifier is cut into an edge partition and a cloud partition.
//! Offline, a noise tensor added to the cut-point activation is trained so the
//! transmitted activation carries less information about the input while the
//! cloud's predictions stay accurate; accepted tensors are reduced to a
//! Laplace fit plus the rank order of their elements. At inference the edge
//! draws fresh Laplace samples, arranges them in a stored rank order, adds
//! them to the activation and ships the result to an unmodified cloud server.

mod codec;
pub mod collector;
pub mod data;
pub mod error;
pub mod experiment;
pub mod fixture;
pub mod learner;
pub mod metrics;
pub mod network;
pub mod planner;
pub mod runtime;
pub mod sampler;
pub mod tensor_core;
pub mod wire;

pub use error::{Error, Result};
