//! Weakly supervised video object segmentation by attention-guided spatio-temporal
//! graph-cut.
//!
//! Given per-frame class attention (or the CNN features and classifier weights to
//! compute it), optical flow, and RGB frames, [`pipeline::segment_video`] produces a
//! binary foreground mask per frame. Supporting pieces: web-video retrieval
//! filtering ([`retrieval`]), label fusion, mIoU evaluation and training-pair export.

pub mod appearance;
pub mod attention;
pub mod error;
pub mod flow;
pub mod graphcut;
pub mod motion;
pub mod pipeline;
pub mod raster_io;
pub mod retrieval;
pub mod superpixel;
pub mod synthetic;

pub use error::{Error, Result};
