//! Saliency-driven summarization of 360-degree video.
//!
//! The pipeline takes an equirectangular (ERP) frame sequence plus per-frame
//! saliency maps and produces a short conventional 2D summary:
//!
//! 1. [`motion`] decides whether the camera was static or moving by
//!    phase-correlating the polar bands of consecutive frames.
//! 2. [`saliency`] ingests external saliency maps (or computes a classical
//!    fallback) and provides the CC / SIM evaluation metrics.
//! 3. [`regions`] thresholds each map and clusters salient points on the
//!    sphere with DBSCAN.
//! 4. [`tracker`] links regions across frames into sub-volumes, filling short
//!    gaps and splitting on long ones.
//! 5. [`render`] renders every sub-volume into a normal-field-of-view fragment
//!    and stitches the fragments into a 2D video.
//! 6. [`summarize`] scores the fragments and picks a subset under a duration
//!    budget with an exact 0/1 knapsack.
//!
//! [`pipeline`] wires the stages together and owns the on-disk contracts.

pub mod error;
pub(crate) mod fft;
pub mod geometry;
pub mod image;
pub mod motion;
pub mod pipeline;
pub mod regions;
pub mod render;
pub mod saliency;
pub mod summarize;
pub mod tracker;

pub use error::{Error, Result};
pub use geometry::SphericalPoint;
pub use image::{Channels, ErpFrame, Image};
