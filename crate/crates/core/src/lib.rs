//! Audiovisual speech activity detection.
//!
//! Bimodal recurrent models over learned audio and mouth-region features,
//! the hand-crafted feature baselines, a synthetic audiovisual corpus, and
//! the training and per-speaker evaluation protocol.

pub mod audio;
pub mod corpus;
pub mod error;
pub mod eval;
pub mod features;
pub mod nn;
pub mod train;
pub mod video;
pub mod zoo;

pub use error::{Error, Result};
pub use nn::{ModelGraph, Tensor};
