//! Joint reconstruction/classification forgery detector.
//!
//! A small convolutional autoencoder whose encoder is shared between a
//! reconstruction decoder and a shallow classifier, trained on the weighted
//! sum of cross-entropy and reconstruction error. Everything is built on the
//! dense [`Tensor`] kernel in [`layers`] with hand-composed backward passes.

pub mod config;
pub mod data;
pub mod error;
pub mod eval;
pub mod gradcheck;
pub mod layers;
pub mod linalg;
pub mod model;
pub mod objective;
pub mod optim;
pub mod par;
pub mod rng;
pub mod tensor;
pub mod train;

pub use error::{Error, Result};
pub use layers::Mode;
pub use rng::Rng;
pub use tensor::{Shape, Tensor};
