//! Needle tip and angle recovery from four-class box detections.
//!
//! A needle is labelled with a box whose diagonal runs from the tip to the
//! needle midpoint, and a class naming the corner that holds the tip. From a
//! box and its class the tip position and the needle angle follow directly.
//! Around that core the crate provides detection post-processing, dataset
//! I/O and augmentation, a synthetic scene generator, a classical reference
//! detector and the evaluation metrics.

pub mod augment;
pub mod cli;
pub mod dataset_io;
pub mod detection;
pub mod detector;
pub mod error;
pub mod eval;
pub mod geometry;
pub mod overlay;
pub mod synth;

pub use error::{Error, Result};
pub use geometry::{BoundingBox, NeedlePose, PixelPoint, TipClass};
