//! Parking-slot detection with an attentional graph neural network.
//!
//! The pipeline turns a top-down around-view image into ordered entrance
//! lines:
//!
//! 1. [`perception`]: a small convolutional backbone plus a grid detector that
//!    predicts one marking-point (offset + confidence) per cell.
//! 2. [`encoder`]: a convolutional head whose map is sampled bilinearly at the
//!    points, fused with a learned positional embedding.
//! 3. [`gnn`]: multi-head attentional message passing over the fully
//!    connected point graph.
//! 4. [`discriminator`]: classifies every ordered point pair as an entrance
//!    line.
//!
//! Everything is differentiated by the in-crate [`tensor`] tape and trained on
//! procedurally generated scenes from [`scene`]. [`harness`] holds training,
//! evaluation, diagnostics and rendering.

mod binio;
pub mod discriminator;
pub mod encoder;
pub mod error;
pub mod gnn;
pub mod harness;
pub mod model;
pub mod nn;
pub mod params;
pub mod perception;
pub mod scene;
pub mod tensor;

pub use error::{Error, Result};
pub use model::ModelConfig;
pub use params::ModelParams;
pub use perception::MarkingPoint;
pub use tensor::{Tape, Tensor, Var};
