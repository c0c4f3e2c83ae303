//! Synthetic test clip with analytic ground truth: a textured disk translating over
//! a static textured background, exact forward flow, and Gaussian attention centered
//! on the disk at several coarse resolutions.

use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::attention::{AttentionMap, ClassScores};
use crate::error::Result;
use crate::pipeline::layout::{attention_path, flow_path, frame_path, gt_path, write_json, SCORES_FILE};
use crate::raster_io::{write_flo, write_gt_mask, write_image, write_tensor, FlowField, GroundTruthMask, GtLabel, Image};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SyntheticParams {
    pub width: usize,
    pub height: usize,
    pub frames: usize,
    pub radius: f64,
    /// Disk center in frame 0.
    pub start: [f64; 2],
    /// Pixels per frame.
    pub velocity: [f64; 2],
    /// Attention maps are rendered at `scale · size / attention_stride`.
    pub scales: Vec<f64>,
    pub attention_stride: usize,
    /// Gaussian spread in units of the disk radius.
    pub attention_sigma: f64,
    pub class: String,
    pub seed: u64,
}

impl Default for SyntheticParams {
    fn default() -> Self {
        SyntheticParams {
            width: 160,
            height: 120,
            frames: 30,
            radius: 22.0,
            start: [40.0, 50.0],
            velocity: [3.0, 1.0],
            scales: vec![0.75, 1.0, 1.25],
            attention_stride: 8,
            attention_sigma: 1.0,
            class: "disk".into(),
            seed: 7,
        }
    }
}

#[derive(Clone, Debug)]
pub struct SyntheticClip {
    pub frames: Vec<Image>,
    /// Forward flow `t → t + 1`.
    pub flows: Vec<FlowField>,
    /// Per frame, one map per scale.
    pub attention: Vec<Vec<AttentionMap>>,
    pub ground_truth: Vec<GroundTruthMask>,
    pub scores: ClassScores,
}

impl SyntheticParams {
    pub fn center(&self, t: usize) -> [f64; 2] {
        [
            self.start[0] + self.velocity[0] * t as f64,
            self.start[1] + self.velocity[1] * t as f64,
        ]
    }

    pub fn inside(&self, t: usize, x: usize, y: usize) -> bool {
        let c = self.center(t);
        let (dx, dy) = (x as f64 - c[0], y as f64 - c[1]);
        dx * dx + dy * dy <= self.radius * self.radius
    }
}

fn hash2(a: i64, b: i64, seed: u64) -> u64 {
    let mut h = seed ^ 0x9e37_79b9_7f4a_7c15;
    for v in [a as u64, b as u64] {
        h ^= v.wrapping_add(0x9e37_79b9_7f4a_7c15).wrapping_add(h << 6).wrapping_add(h >> 2);
        h = h.wrapping_mul(0xbf58_476d_1ce4_e5b9);
        h ^= h >> 31;
    }
    h
}

fn jitter(base: u8, spread: u8, h: u64) -> u8 {
    let off = (h % (2 * spread as u64 + 1)) as i32 - spread as i32;
    (base as i32 + off).clamp(0, 255) as u8
}

pub fn generate(p: &SyntheticParams) -> SyntheticClip {
    let (w, h) = (p.width, p.height);
    let mut rng = ChaCha8Rng::seed_from_u64(p.seed);
    let background: Vec<[u8; 3]> = (0..w * h)
        .map(|i| {
            let (x, y) = (i % w, i / w);
            let stripe = if (x / 6 + y / 6) % 2 == 0 { 0 } else { 18 };
            [
                jitter(40 + stripe, 12, rng.gen()),
                jitter(120, 12, rng.gen()),
                jitter(70 + stripe, 12, rng.gen()),
            ]
        })
        .collect();

    let mut frames = Vec::with_capacity(p.frames);
    let mut ground_truth = Vec::with_capacity(p.frames);
    let mut attention = Vec::with_capacity(p.frames);
    for t in 0..p.frames {
        let c = p.center(t);
        let mut img = Image::filled_rgb(w, h, [0, 0, 0]);
        let mut labels = Vec::with_capacity(w * h);
        for y in 0..h {
            for x in 0..w {
                if p.inside(t, x, y) {
                    // texture fixed to the disk so it moves with it
                    let rx = (x as f64 - c[0]).round() as i64;
                    let ry = (y as f64 - c[1]).round() as i64;
                    let ring = if ((rx * rx + ry * ry) as f64).sqrt() as i64 / 5 % 2 == 0 { 0 } else { 25 };
                    let hv = hash2(rx, ry, p.seed);
                    img.set_rgb(x, y, [jitter(215 - ring, 15, hv), jitter(80 + ring, 15, hv >> 16), jitter(50, 15, hv >> 32)]);
                    labels.push(GtLabel::Foreground);
                } else {
                    img.set_rgb(x, y, background[y * w + x]);
                    labels.push(GtLabel::Background);
                }
            }
        }
        frames.push(img);
        ground_truth.push(GroundTruthMask { width: w, height: h, labels });

        let sigma = p.attention_sigma * p.radius;
        let maps = p
            .scales
            .iter()
            .map(|&s| {
                let mw = ((w as f64 * s / p.attention_stride as f64).round() as usize).max(1);
                let mh = ((h as f64 * s / p.attention_stride as f64).round() as usize).max(1);
                let values = (0..mw * mh)
                    .map(|i| {
                        let fx = (i % mw) as f64 + 0.5;
                        let fy = (i / mw) as f64 + 0.5;
                        let x = fx * w as f64 / mw as f64 - 0.5;
                        let y = fy * h as f64 / mh as f64 - 0.5;
                        let d2 = (x - c[0]).powi(2) + (y - c[1]).powi(2);
                        (-d2 / (2.0 * sigma * sigma)).exp() as f32
                    })
                    .collect();
                AttentionMap { width: mw, height: mh, values }
            })
            .collect();
        attention.push(maps);
    }

    let flows = (0..p.frames.saturating_sub(1))
        .map(|t| {
            let mut f = FlowField::zeros(w, h);
            for y in 0..h {
                for x in 0..w {
                    if p.inside(t, x, y) {
                        f.u[y * w + x] = p.velocity[0] as f32;
                        f.v[y * w + x] = p.velocity[1] as f32;
                    }
                }
            }
            f
        })
        .collect();

    SyntheticClip {
        frames,
        flows,
        attention,
        ground_truth,
        scores: ClassScores {
            classes: vec![p.class.clone()],
            frames: vec![vec![0.95]; p.frames],
        },
    }
}

/// Write the clip in the video directory layout, with ground truth as `gt_NNNNNN.pgm`.
pub fn write_clip(dir: &Path, clip: &SyntheticClip) -> Result<()> {
    for (t, f) in clip.frames.iter().enumerate() {
        write_image(frame_path(dir, t), f)?;
        write_gt_mask(gt_path(dir, t), &clip.ground_truth[t])?;
        for (k, m) in clip.attention[t].iter().enumerate() {
            write_tensor(attention_path(dir, t, Some(k)), &m.to_tensor())?;
        }
    }
    for (t, f) in clip.flows.iter().enumerate() {
        write_flo(flow_path(dir, t), f)?;
    }
    write_json(&dir.join(SCORES_FILE), &clip.scores)
}
