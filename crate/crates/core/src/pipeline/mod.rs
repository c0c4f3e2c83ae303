//! End-to-end orchestration: per-video segmentation, label fusion, mIoU evaluation
//! and training-pair export, plus the on-disk layout they share.

pub mod config;
pub mod eval;
pub mod fusion;
pub mod layout;
pub mod segment;
pub mod trainset;

pub use config::PipelineConfig;
pub use eval::{evaluate_miou, EvalReport, EvalSample};
pub use fusion::{fuse_labels, LabelMap};
pub use segment::{segment_video, AttentionInput, SegmentOptions, SegmentResult, VideoInput};
pub use trainset::{export_trainset, TrainManifest, TrainPair};
