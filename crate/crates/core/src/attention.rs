//! Class activation maps, multi-scale fusion, per-superpixel aggregation and
//! frame relevance filtering.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::raster_io::Tensor;
use crate::superpixel::SuperpixelPartition;

pub const DEFAULT_SCALES: [f64; 3] = [0.75, 1.0, 1.25];
pub const DEFAULT_RELEVANCE_THRESHOLD: f64 = 0.8;
pub const DEFAULT_MIN_RUN: usize = 5;

/// Nonnegative per-pixel relevance for one class, row-major.
#[derive(Clone, Debug, PartialEq)]
pub struct AttentionMap {
    pub width: usize,
    pub height: usize,
    pub values: Vec<f32>,
}

impl AttentionMap {
    pub fn new(width: usize, height: usize, values: Vec<f32>) -> Result<Self> {
        if width == 0 || height == 0 || values.len() != width * height {
            return Err(Error::invalid(format!(
                "attention map of {} values cannot be {width}x{height}",
                values.len()
            )));
        }
        if values.iter().any(|v| !v.is_finite() || *v < 0.0) {
            return Err(Error::invalid("attention values must be finite and nonnegative"));
        }
        Ok(AttentionMap {
            width,
            height,
            values,
        })
    }

    /// Interpret a `(h, w)` tensor (or `(h, w, 1)`) as an attention map. Negative
    /// entries are clamped to zero.
    pub fn from_tensor(t: &Tensor) -> Result<Self> {
        let (h, w) = match t.dims.as_slice() {
            [h, w] | [h, w, 1] => (*h as usize, *w as usize),
            other => return Err(Error::invalid(format!("attention tensor dims {other:?}, expected (h, w)"))),
        };
        AttentionMap::new(w, h, t.data.iter().map(|&v| v.max(0.0)).collect())
    }

    pub fn to_tensor(&self) -> Tensor {
        Tensor {
            dims: vec![self.height as u32, self.width as u32],
            data: self.values.clone(),
        }
    }

    pub fn get(&self, x: usize, y: usize) -> f32 {
        self.values[y * self.width + x]
    }

    pub fn max_value(&self) -> f32 {
        self.values.iter().copied().fold(0.0, f32::max)
    }

    /// Divide by the maximum; an all-zero map stays all-zero.
    pub fn max_normalized(mut self) -> Self {
        let m = self.max_value();
        if m > 0.0 {
            self.values.iter_mut().for_each(|v| *v /= m);
        }
        self
    }

    /// Bilinear resize with half-pixel-centered sampling and edge clamping.
    pub fn resized(&self, width: usize, height: usize) -> Self {
        if width == self.width && height == self.height {
            return self.clone();
        }
        let sx = self.width as f64 / width as f64;
        let sy = self.height as f64 / height as f64;
        let mut values = Vec::with_capacity(width * height);
        for y in 0..height {
            let fy = ((y as f64 + 0.5) * sy - 0.5).clamp(0.0, (self.height - 1) as f64);
            let y0 = fy.floor() as usize;
            let y1 = (y0 + 1).min(self.height - 1);
            let ty = fy - y0 as f64;
            for x in 0..width {
                let fx = ((x as f64 + 0.5) * sx - 0.5).clamp(0.0, (self.width - 1) as f64);
                let x0 = fx.floor() as usize;
                let x1 = (x0 + 1).min(self.width - 1);
                let tx = fx - x0 as f64;
                let g = |xx: usize, yy: usize| self.values[yy * self.width + xx] as f64;
                let top = g(x0, y0) * (1.0 - tx) + g(x1, y0) * tx;
                let bottom = g(x0, y1) * (1.0 - tx) + g(x1, y1) * tx;
                values.push((top * (1.0 - ty) + bottom * ty) as f32);
            }
        }
        AttentionMap {
            width,
            height,
            values,
        }
    }
}

fn check_cam_inputs(features: &Tensor, weights: &Tensor, class: usize) -> Result<(usize, usize, usize, usize)> {
    let [h, w, d] = match features.dims.as_slice() {
        &[h, w, d] => [h as usize, w as usize, d as usize],
        other => return Err(Error::invalid(format!("feature dims {other:?}, expected (h, w, d)"))),
    };
    let [wd, c] = match weights.dims.as_slice() {
        &[wd, c] => [wd as usize, c as usize],
        other => return Err(Error::invalid(format!("weight dims {other:?}, expected (d, C)"))),
    };
    if wd != d {
        return Err(Error::invalid(format!("feature depth {d} does not match weight rows {wd}")));
    }
    if class >= c {
        return Err(Error::invalid(format!("class {class} out of range for {c} classes")));
    }
    if h == 0 || w == 0 {
        return Err(Error::invalid("empty feature map"));
    }
    Ok((h, w, d, c))
}

/// Unclamped class activation: `Σ_k features(p, k) · weights(k, class)` per pixel.
pub fn cam_raw(features: &Tensor, weights: &Tensor, class: usize) -> Result<(usize, usize, Vec<f64>)> {
    let (h, w, d, c) = check_cam_inputs(features, weights, class)?;
    let column: Vec<f64> = (0..d).map(|k| weights.data[k * c + class] as f64).collect();
    let raw = features
        .data
        .chunks_exact(d)
        .map(|f| f.iter().zip(&column).map(|(&a, &b)| a as f64 * b).sum())
        .collect();
    Ok((w, h, raw))
}

/// Class activation map with negative responses clamped to zero.
pub fn cam(features: &Tensor, weights: &Tensor, class: usize) -> Result<AttentionMap> {
    let (w, h, raw) = cam_raw(features, weights, class)?;
    AttentionMap::new(w, h, raw.into_iter().map(|v| v.max(0.0) as f32).collect())
}

/// Resize every map to `(width, height)`, take the pixel-wise maximum, then
/// max-normalize.
pub fn fuse_multiscale(maps: &[AttentionMap], width: usize, height: usize) -> Result<AttentionMap> {
    if maps.is_empty() {
        return Err(Error::invalid("no attention maps to fuse"));
    }
    if width == 0 || height == 0 {
        return Err(Error::invalid("fusion target must be at least 1x1"));
    }
    let mut fused = vec![0.0f32; width * height];
    for m in maps {
        let r = m.resized(width, height);
        for (f, v) in fused.iter_mut().zip(&r.values) {
            *f = f.max(*v);
        }
    }
    Ok(AttentionMap {
        width,
        height,
        values: fused,
    }
    .max_normalized())
}

/// Mean attention per region divided by the largest region mean of the frame.
pub fn superpixel_attention(att: &AttentionMap, p: &SuperpixelPartition) -> Result<Vec<f64>> {
    if att.width != p.width || att.height != p.height {
        return Err(Error::invalid(format!(
            "attention {}x{} does not match partition {}x{}",
            att.width, att.height, p.width, p.height
        )));
    }
    let mut sums = vec![0.0f64; p.count()];
    for (&l, &v) in p.labels.iter().zip(&att.values) {
        sums[l as usize] += v as f64;
    }
    let means: Vec<f64> = sums
        .iter()
        .zip(&p.regions)
        .map(|(s, r)| s / r.pixel_count as f64)
        .collect();
    let max = means.iter().copied().fold(0.0, f64::max);
    Ok(if max > 0.0 {
        means.iter().map(|m| m / max).collect()
    } else {
        vec![0.0; means.len()]
    })
}

/// Per-frame class scores for one video.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ClassScores {
    pub classes: Vec<String>,
    /// One score vector of length `classes.len()` per frame.
    pub frames: Vec<Vec<f32>>,
}

impl ClassScores {
    pub fn validate(&self) -> Result<()> {
        for (t, s) in self.frames.iter().enumerate() {
            if s.len() != self.classes.len() {
                return Err(Error::invalid(format!(
                    "frame {t} has {} scores for {} classes",
                    s.len(),
                    self.classes.len()
                )));
            }
            if s.iter().any(|v| !v.is_finite()) {
                return Err(Error::invalid(format!("frame {t} has a non-finite score")));
            }
        }
        Ok(())
    }

    pub fn class_index(&self, name: &str) -> Option<usize> {
        self.classes.iter().position(|c| c == name)
    }

    pub fn column(&self, class: usize) -> Vec<f32> {
        self.frames.iter().map(|s| s[class]).collect()
    }
}

/// Inclusive frame range of a relevant run.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct RelevantInterval {
    pub start_frame: usize,
    pub end_frame: usize,
    pub class: usize,
}

impl RelevantInterval {
    pub fn len(&self) -> usize {
        self.end_frame - self.start_frame + 1
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn contains(&self, t: usize) -> bool {
        (self.start_frame..=self.end_frame).contains(&t)
    }
}

/// Maximal runs of frames whose score strictly exceeds `threshold` and that span at
/// least `min_run` frames.
pub fn relevance_filter(scores: &[f32], class: usize, threshold: f64, min_run: usize) -> Result<Vec<RelevantInterval>> {
    if !(0.0..=1.0).contains(&threshold) {
        return Err(Error::invalid(format!("threshold {threshold} not in [0, 1]")));
    }
    if min_run < 1 {
        return Err(Error::invalid("min_run must be >= 1"));
    }
    let mut out = Vec::new();
    let mut start = None;
    for t in 0..=scores.len() {
        let above = t < scores.len() && scores[t] > threshold as f32;
        match (above, start) {
            (true, None) => start = Some(t),
            (false, Some(s)) => {
                if t - s >= min_run {
                    out.push(RelevantInterval {
                        start_frame: s,
                        end_frame: t - 1,
                        class,
                    });
                }
                start = None;
            }
            _ => {}
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::raster_io::Image;
    use proptest::prelude::*;

    fn tensor(dims: &[u32], data: &[f32]) -> Tensor {
        Tensor::new(dims.to_vec(), data.to_vec()).unwrap()
    }

    #[test]
    fn cam_identity_weight_copies_channel() {
        let f = tensor(&[2, 2, 1], &[0.5, -1.0, 2.0, 0.0]);
        let a = cam(&f, &tensor(&[1, 1], &[1.0]), 0).unwrap();
        assert_eq!((a.width, a.height), (2, 2));
        assert_eq!(a.values, vec![0.5, 0.0, 2.0, 0.0]);
    }

    #[test]
    fn cam_zero_column_is_zero_map() {
        let f = tensor(&[2, 1, 2], &[1.0, 2.0, 3.0, 4.0]);
        let w = tensor(&[2, 2], &[1.0, 0.0, 1.0, 0.0]);
        assert!(cam(&f, &w, 1).unwrap().values.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn cam_negative_response_clamped() {
        let f = tensor(&[1, 1, 2], &[2.0, 3.0]);
        let w = tensor(&[2, 1], &[0.5, -1.0]);
        let (_, _, raw) = cam_raw(&f, &w, 0).unwrap();
        assert_eq!(raw, vec![-2.0]);
        assert_eq!(cam(&f, &w, 0).unwrap().values, vec![0.0]);
    }

    #[test]
    fn cam_dimension_errors() {
        let f = tensor(&[1, 1, 2], &[2.0, 3.0]);
        assert!(cam(&f, &tensor(&[3, 1], &[0.0; 3]), 0).is_err());
        assert!(cam(&f, &tensor(&[2, 1], &[0.0; 2]), 1).is_err());
        assert!(cam(&tensor(&[2], &[0.0; 2]), &tensor(&[2, 1], &[0.0; 2]), 0).is_err());
    }

    #[test]
    fn fuse_single_map_is_normalized_copy() {
        let m = AttentionMap::new(2, 2, vec![0.0, 1.0, 2.0, 4.0]).unwrap();
        let f = fuse_multiscale(&[m], 2, 2).unwrap();
        assert_eq!(f.values, vec![0.0, 0.25, 0.5, 1.0]);
        assert!(fuse_multiscale(&[], 2, 2).is_err());
    }

    #[test]
    fn fuse_is_pointwise_max_over_global_max() {
        // deterministic pseudo-random 4x4 maps
        let gen = |seed: u32| -> Vec<f32> {
            (0..16u32).map(|i| ((i.wrapping_mul(2654435761) ^ seed) % 1000) as f32 / 100.0).collect()
        };
        let (a, b) = (gen(17), gen(91));
        let fused = fuse_multiscale(
            &[AttentionMap::new(4, 4, a.clone()).unwrap(), AttentionMap::new(4, 4, b.clone()).unwrap()],
            4,
            4,
        )
        .unwrap();
        let pmax: Vec<f32> = a.iter().zip(&b).map(|(x, y)| x.max(*y)).collect();
        let gmax = pmax.iter().copied().fold(0.0, f32::max);
        for (got, want) in fused.values.iter().zip(&pmax) {
            assert_eq!(*got, want / gmax);
        }
    }

    #[test]
    fn resize_constant_stays_constant_and_upsamples_smoothly() {
        let m = AttentionMap::new(3, 2, vec![0.7; 6]).unwrap();
        let r = m.resized(7, 5);
        assert!(r.values.iter().all(|&v| (v - 0.7).abs() < 1e-6));
        let ramp = AttentionMap::new(2, 1, vec![0.0, 1.0]).unwrap().resized(4, 1);
        // sample centers at 0.5-pixel offsets: -0.25, 0.25, 0.75, 1.25 -> clamp
        assert_eq!(ramp.values, vec![0.0, 0.25, 0.75, 1.0]);
    }

    fn two_region_partition() -> SuperpixelPartition {
        let labels = (0..8).map(|i| u32::from(i % 4 >= 2)).collect();
        SuperpixelPartition::from_labels(&Image::filled_rgb(4, 2, [0, 0, 0]), labels).unwrap()
    }

    #[test]
    fn superpixel_attention_cases() {
        let p = two_region_partition();
        let constant = AttentionMap::new(4, 2, vec![0.5; 8]).unwrap();
        assert_eq!(superpixel_attention(&constant, &p).unwrap(), vec![1.0, 1.0]);

        let only0 = AttentionMap::new(4, 2, (0..8).map(|i| if i % 4 < 2 { 1.0 } else { 0.0 }).collect()).unwrap();
        assert_eq!(superpixel_attention(&only0, &p).unwrap(), vec![1.0, 0.0]);

        let means = AttentionMap::new(4, 2, vec![0.1, 0.3, 0.8, 0.8, 0.3, 0.1, 0.8, 0.8]).unwrap();
        let a = superpixel_attention(&means, &p).unwrap();
        assert!((a[0] - 0.25).abs() < 1e-7 && a[1] == 1.0, "{a:?}");

        let zero = AttentionMap::new(4, 2, vec![0.0; 8]).unwrap();
        assert_eq!(superpixel_attention(&zero, &p).unwrap(), vec![0.0, 0.0]);
    }

    #[test]
    fn relevance_filter_examples() {
        assert!(relevance_filter(&[0.1, 0.5, 0.79], 0, 0.8, 1).unwrap().is_empty());
        let runs = relevance_filter(&[0.9; 7], 2, 0.8, 5).unwrap();
        assert_eq!(runs, vec![RelevantInterval { start_frame: 0, end_frame: 6, class: 2 }]);
        let s = [0.9, 0.9, 0.9, 0.9, 0.1, 0.9, 0.9, 0.9, 0.9, 0.9];
        let runs = relevance_filter(&s, 0, 0.8, 5).unwrap();
        assert_eq!(runs, vec![RelevantInterval { start_frame: 5, end_frame: 9, class: 0 }]);
        // score equal to the threshold is not relevant
        assert!(relevance_filter(&[0.8; 6], 0, 0.8, 1).unwrap().is_empty());
        assert!(relevance_filter(&s, 0, 1.5, 5).is_err());
        assert!(relevance_filter(&s, 0, 0.5, 0).is_err());
    }

    proptest! {
        #[test]
        fn cam_raw_is_linear_in_weights(
            feats in prop::collection::vec(-5.0f32..5.0, 12),
            w1 in prop::collection::vec((-2048i32..2048).prop_map(|k| k as f32 / 1024.0), 6),
            w2 in prop::collection::vec((-2048i32..2048).prop_map(|k| k as f32 / 1024.0), 6),
        ) {
            let f = tensor(&[2, 2, 3], &feats);
            let sum: Vec<f32> = w1.iter().zip(&w2).map(|(a, b)| a + b).collect();
            for c in 0..2 {
                let (_, _, r1) = cam_raw(&f, &tensor(&[3, 2], &w1), c).unwrap();
                let (_, _, r2) = cam_raw(&f, &tensor(&[3, 2], &w2), c).unwrap();
                let (_, _, rs) = cam_raw(&f, &tensor(&[3, 2], &sum), c).unwrap();
                for i in 0..4 {
                    // dyadic weights keep the f32 sum exact
                    prop_assert!((rs[i] - (r1[i] + r2[i])).abs() <= 1e-6);
                }
            }
        }

        #[test]
        fn fusion_order_invariant_and_idempotent(
            a in prop::collection::vec(0.0f32..3.0, 6),
            b in prop::collection::vec(0.0f32..3.0, 12),
        ) {
            let ma = AttentionMap::new(3, 2, a).unwrap();
            let mb = AttentionMap::new(4, 3, b).unwrap();
            let ab = fuse_multiscale(&[ma.clone(), mb.clone()], 5, 4).unwrap();
            let ba = fuse_multiscale(&[mb.clone(), ma.clone()], 5, 4).unwrap();
            let abb = fuse_multiscale(&[ma, mb.clone(), mb], 5, 4).unwrap();
            prop_assert_eq!(&ab, &ba);
            prop_assert_eq!(&ab, &abb);
        }

        #[test]
        fn relevance_intervals_are_sorted_disjoint_and_above(
            scores in prop::collection::vec(0.0f32..1.0, 0..60),
            thr in 0.0f64..1.0,
            min_run in 1usize..6,
        ) {
            let runs = relevance_filter(&scores, 0, thr, min_run).unwrap();
            for pair in runs.windows(2) {
                prop_assert!(pair[0].end_frame + 1 < pair[1].start_frame);
            }
            for r in &runs {
                prop_assert!(r.len() >= min_run);
                prop_assert!((r.start_frame..=r.end_frame).all(|t| scores[t] > thr as f32));
            }
        }
    }
}
