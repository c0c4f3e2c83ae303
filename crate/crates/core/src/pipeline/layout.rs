//! On-disk layout of a video directory and of segmentation outputs.
//!
//! Inputs, with `NNNNNN` the zero-based frame index:
//!
//! | file | content |
//! |------|---------|
//! | `frame_NNNNNN.ppm` | RGB frame (P6) or gray (P5) |
//! | `flow_NNNNNN.flo` | forward flow from frame `N` to `N + 1` |
//! | `att_NNNNNN_sK.tnsr` or `att_NNNNNN.tnsr` | attention map(s), one per scale `K` |
//! | `feat_NNNNNN_sK.tnsr` or `feat_NNNNNN.tnsr` | `(h, w, d)` features, used with `weights.tnsr` |
//! | `weights.tnsr` | `(d, C)` classifier weights |
//! | `scores.json` | optional per-frame class scores |
//!
//! Outputs: `mask_NNNNNN.pgm`, `attention_NNNNNN.tnsr` and `segment.json`, plus an
//! `intermediates/` directory when dumps are requested.

use std::path::{Path, PathBuf};

use log::warn;
use serde::{Deserialize, Serialize};

use crate::attention::{AttentionMap, ClassScores, RelevantInterval};
use crate::error::{Error, Result};
use crate::flow::estimate_flow_blockmatch;
use crate::raster_io::{
    encode_pgm16, read_bytes, read_flo, read_image, read_mask, read_tensor, write_bytes, write_mask, write_tensor,
    SegmentationMask, Tensor,
};

use super::config::PipelineConfig;
use super::segment::{segment_video, AttentionInput, SegmentOptions, SegmentResult, SolveSummary, VideoInput};

pub const SCORES_FILE: &str = "scores.json";
pub const WEIGHTS_FILE: &str = "weights.tnsr";
pub const SEGMENT_RECORD: &str = "segment.json";
pub const INTERMEDIATES_DIR: &str = "intermediates";

pub fn frame_path(dir: &Path, t: usize) -> PathBuf {
    dir.join(format!("frame_{t:06}.ppm"))
}

pub fn flow_path(dir: &Path, t: usize) -> PathBuf {
    dir.join(format!("flow_{t:06}.flo"))
}

pub fn attention_path(dir: &Path, t: usize, scale: Option<usize>) -> PathBuf {
    match scale {
        Some(k) => dir.join(format!("att_{t:06}_s{k}.tnsr")),
        None => dir.join(format!("att_{t:06}.tnsr")),
    }
}

pub fn feature_path(dir: &Path, t: usize, scale: Option<usize>) -> PathBuf {
    match scale {
        Some(k) => dir.join(format!("feat_{t:06}_s{k}.tnsr")),
        None => dir.join(format!("feat_{t:06}.tnsr")),
    }
}

pub fn gt_path(dir: &Path, t: usize) -> PathBuf {
    dir.join(format!("gt_{t:06}.pgm"))
}

pub fn mask_path(dir: &Path, t: usize) -> PathBuf {
    dir.join(format!("mask_{t:06}.pgm"))
}

pub fn output_attention_path(dir: &Path, t: usize) -> PathBuf {
    dir.join(format!("attention_{t:06}.tnsr"))
}

pub fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T> {
    let bytes = read_bytes(path)?;
    serde_json::from_slice(&bytes).map_err(|e| Error::from(e).in_file(path))
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut bytes = serde_json::to_vec_pretty(value)?;
    bytes.push(b'\n');
    write_bytes(path, &bytes)
}

/// Files for one frame: scale-suffixed variants `_s0, _s1, ...` if present, otherwise
/// the unsuffixed file, otherwise nothing.
fn scale_files(t: usize, path: impl Fn(usize, Option<usize>) -> PathBuf) -> Vec<PathBuf> {
    let scaled: Vec<PathBuf> = (0..).map(|k| path(t, Some(k))).take_while(|p| p.is_file()).collect();
    if !scaled.is_empty() {
        return scaled;
    }
    let single = path(t, None);
    if single.is_file() {
        vec![single]
    } else {
        Vec::new()
    }
}

fn read_tensors(files: &[PathBuf]) -> Result<Vec<Tensor>> {
    files.iter().map(read_tensor).collect()
}

/// Load a video directory. Missing flow files are an error unless
/// `allow_estimated_flow` is set, in which case block matching fills them in.
pub fn load_video(dir: &Path, cfg: &PipelineConfig, allow_estimated_flow: bool) -> Result<VideoInput> {
    let frame_count = (0..).take_while(|&t| frame_path(dir, t).is_file()).count();
    if frame_count == 0 {
        return Err(Error::invalid(format!("{}: no frame_000000.ppm", dir.display())));
    }
    let frames = (0..frame_count)
        .map(|t| read_image(frame_path(dir, t)))
        .collect::<Result<Vec<_>>>()?;

    let mut flows = Vec::with_capacity(frame_count - 1);
    for t in 0..frame_count - 1 {
        let p = flow_path(dir, t);
        if p.is_file() {
            flows.push(read_flo(&p)?);
        } else if allow_estimated_flow {
            warn!("{}: missing, estimating flow by block matching", p.display());
            flows.push(
                estimate_flow_blockmatch(&frames[t], &frames[t + 1], cfg.flow_block, cfg.flow_radius)
                    .map_err(|e| e.in_frame(t))?,
            );
        } else {
            return Err(Error::invalid(format!(
                "{}: missing flow (pass --allow-estimated-flow to estimate it)",
                p.display()
            )));
        }
    }

    let use_maps = !scale_files(0, |t, k| attention_path(dir, t, k)).is_empty();
    let attention = if use_maps {
        let mut maps = Vec::with_capacity(frame_count);
        for t in 0..frame_count {
            let files = scale_files(t, |t, k| attention_path(dir, t, k));
            if files.is_empty() {
                return Err(Error::invalid("no attention map").in_frame(t));
            }
            let per_scale = read_tensors(&files)?
                .iter()
                .map(AttentionMap::from_tensor)
                .collect::<Result<Vec<_>>>()
                .map_err(|e| e.in_frame(t))?;
            maps.push(per_scale);
        }
        AttentionInput::Maps(maps)
    } else {
        let weights_file = dir.join(WEIGHTS_FILE);
        if !weights_file.is_file() {
            return Err(Error::invalid(format!(
                "{}: neither attention maps nor features with {WEIGHTS_FILE}",
                dir.display()
            )));
        }
        let weights = read_tensor(&weights_file)?;
        let mut features = Vec::with_capacity(frame_count);
        for t in 0..frame_count {
            let files = scale_files(t, |t, k| feature_path(dir, t, k));
            if files.is_empty() {
                return Err(Error::invalid("no feature tensor").in_frame(t));
            }
            features.push(read_tensors(&files)?);
        }
        AttentionInput::Features { features, weights }
    };

    let scores_file = dir.join(SCORES_FILE);
    let scores = if scores_file.is_file() {
        let s: ClassScores = read_json(&scores_file)?;
        s.validate().map_err(|e| e.in_file(&scores_file))?;
        Some(s)
    } else {
        None
    };
    Ok(VideoInput {
        frames,
        attention,
        flows,
        scores,
    })
}

/// Contents of `segment.json`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SegmentRecord {
    pub video: String,
    pub class: Option<String>,
    pub class_index: usize,
    pub frames: usize,
    pub intervals: Vec<RelevantInterval>,
    pub solves: Vec<SolveSummary>,
    pub config: PipelineConfig,
}

#[derive(Clone, Copy, Debug, Default)]
pub struct DumpOptions {
    pub intermediates: bool,
    pub energy: bool,
}

/// Write masks, fused attention, the run record and any requested dumps.
pub fn write_segment_output(
    out_dir: &Path,
    video: &str,
    result: &SegmentResult,
    cfg: &PipelineConfig,
    dumps: DumpOptions,
) -> Result<SegmentRecord> {
    for (t, (mask, att)) in result.masks.iter().zip(&result.attention).enumerate() {
        write_mask(mask_path(out_dir, t), mask)?;
        write_tensor(output_attention_path(out_dir, t), &att.to_tensor())?;
    }
    if let Some(inter) = &result.intermediates {
        let dir = out_dir.join(INTERMEDIATES_DIR);
        if dumps.intermediates {
            for (t, p) in inter.partitions.iter().enumerate() {
                if let Some(p) = p {
                    let labels: Vec<u16> = p
                        .labels
                        .iter()
                        .map(|&l| u16::try_from(l).map_err(|_| Error::invalid("more than 65535 superpixels")))
                        .collect::<Result<_>>()?;
                    write_bytes(&dir.join(format!("partition_{t:06}.pgm")), &encode_pgm16(p.width, p.height, &labels))?;
                    write_json(&dir.join(format!("partition_{t:06}.json")), &p.regions)?;
                }
            }
            for (t, iom) in inter.inside_outside.iter().enumerate() {
                if let Some(iom) = iom {
                    write_tensor(dir.join(format!("inside_{t:06}.tnsr")), &iom.to_tensor())?;
                }
            }
            for (k, g) in inter.gmms.iter().enumerate() {
                if let Some((fg, bg)) = g {
                    write_json(
                        &dir.join(format!("gmm_{k:03}.json")),
                        &serde_json::json!({ "foreground": fg, "background": bg }),
                    )?;
                }
            }
        }
        if dumps.energy {
            for (k, e) in inter.energies.iter().enumerate() {
                write_json(&dir.join(format!("energy_{k:03}.json")), e)?;
            }
        }
    }
    let record = SegmentRecord {
        video: video.to_string(),
        class: result.class_name.clone(),
        class_index: result.class_index,
        frames: result.masks.len(),
        intervals: result.intervals.clone(),
        solves: result.solves.clone(),
        config: cfg.clone(),
    };
    write_json(&out_dir.join(SEGMENT_RECORD), &record)?;
    Ok(record)
}

#[derive(Clone, Copy, Debug, Default)]
pub struct RunOptions {
    pub allow_estimated_flow: bool,
    pub dumps: DumpOptions,
}

/// Load, segment and write one video directory.
pub fn run_segment(video_dir: &Path, out_dir: &Path, cfg: &PipelineConfig, opts: RunOptions) -> Result<SegmentRecord> {
    let input = load_video(video_dir, cfg, opts.allow_estimated_flow)?;
    let seg_opts = SegmentOptions {
        keep_intermediates: opts.dumps.intermediates || opts.dumps.energy,
    };
    let result = segment_video(&input, cfg, seg_opts).map_err(|e| e.in_file(video_dir))?;
    let name = video_dir
        .file_name()
        .map(|n| n.to_string_lossy().into_owned())
        .unwrap_or_else(|| video_dir.display().to_string());
    write_segment_output(out_dir, &name, &result, cfg, opts.dumps)
}

/// Read back the masks written by [`write_segment_output`].
pub fn read_masks(out_dir: &Path, frames: usize) -> Result<Vec<SegmentationMask>> {
    (0..frames).map(|t| read_mask(mask_path(out_dir, t))).collect()
}

/// A ground-truth pairing for evaluation. Paths are relative to the manifest file.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EvalPair {
    pub video: String,
    pub class: String,
    pub pred: PathBuf,
    pub gt: PathBuf,
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EvalManifest {
    pub pairs: Vec<EvalPair>,
}

impl EvalManifest {
    pub fn load(path: &Path) -> Result<Self> {
        let mut m: EvalManifest = read_json(path)?;
        let base = path.parent().unwrap_or(Path::new(""));
        for p in &mut m.pairs {
            p.pred = base.join(&p.pred);
            p.gt = base.join(&p.gt);
        }
        Ok(m)
    }

    /// Pair `mask_NNNNNN.pgm` in `pred_dir` with `gt_NNNNNN.pgm` in `gt_dir` for every
    /// frame that has both.
    pub fn from_dirs(pred_dir: &Path, gt_dir: &Path, video: &str, class: &str) -> Self {
        let pairs = (0..)
            .map(|t| (mask_path(pred_dir, t), gt_path(gt_dir, t)))
            .take_while(|(p, g)| p.is_file() && g.is_file())
            .map(|(pred, gt)| EvalPair {
                video: video.to_string(),
                class: class.to_string(),
                pred,
                gt,
            })
            .collect();
        EvalManifest { pairs }
    }
}

/// Read every pair of a manifest and evaluate it.
pub fn evaluate_manifest(m: &EvalManifest) -> Result<super::eval::EvalReport> {
    let mut preds = Vec::with_capacity(m.pairs.len());
    let mut gts = Vec::with_capacity(m.pairs.len());
    for p in &m.pairs {
        preds.push(read_mask(&p.pred)?);
        gts.push(crate::raster_io::read_gt_mask(&p.gt)?);
    }
    let samples: Vec<super::eval::EvalSample> = m
        .pairs
        .iter()
        .zip(preds.iter().zip(&gts))
        .map(|(p, (pred, gt))| super::eval::EvalSample {
            video: &p.video,
            class: &p.class,
            pred,
            gt,
        })
        .collect();
    super::eval::evaluate_miou(&samples)
}

/// Training pairs from a segmentation output directory: every frame inside a relevant
/// interval, with its fused attention and mask.
pub fn collect_train_pairs(seg_dir: &Path) -> Result<Vec<super::trainset::TrainPair>> {
    let record: SegmentRecord = read_json(&seg_dir.join(SEGMENT_RECORD))?;
    let class = record.class.clone().unwrap_or_else(|| record.class_index.to_string());
    let mut pairs = Vec::new();
    for iv in &record.intervals {
        for t in iv.start_frame..=iv.end_frame {
            let attention = AttentionMap::from_tensor(&read_tensor(output_attention_path(seg_dir, t))?)?;
            let mask = read_mask(mask_path(seg_dir, t))?;
            pairs.push(super::trainset::TrainPair {
                attention,
                mask,
                class: class.clone(),
            });
        }
    }
    Ok(pairs)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn json_helpers_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("nested/x.json");
        write_json(&p, &vec![1, 2, 3]).unwrap();
        assert_eq!(read_json::<Vec<i32>>(&p).unwrap(), vec![1, 2, 3]);
        assert!(read_json::<Vec<i32>>(&dir.path().join("missing.json")).is_err());
    }

    #[test]
    fn empty_directory_is_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let err = load_video(dir.path(), &PipelineConfig::default(), false).unwrap_err();
        assert!(matches!(err, Error::InvalidInput(_)));
    }
}
