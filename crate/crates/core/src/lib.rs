//! Memristor crossbar simulation with closed-loop weight programming,
//! box-constrained training and chip-in-the-loop fine-tuning.
//!
//! The crate is organized bottom-up:
//!
//! - [`device`]: behavioral crossbar model (pulse response, half-select disturb,
//!   noisy quantized readout).
//! - [`protocol`]: line-oriented host/firmware command protocol and a firmware
//!   emulator bound to a [`device::CrossbarModel`].
//! - [`backend`]: uniform inference/write access, direct or through the protocol.
//! - [`programming`]: voltage-incremental PI and plain PI cell programming.
//! - [`training`]: constrained softmax regression, MLP training and chip-in-the-loop
//!   fine-tuning.
//! - [`pipelines`]: end-to-end digit classification and robot-command experiments.

pub mod backend;
pub mod device;
pub mod error;
pub mod parallel;
pub mod pipelines;
pub mod programming;
pub mod protocol;
pub mod training;

pub use error::{Error, Result};
