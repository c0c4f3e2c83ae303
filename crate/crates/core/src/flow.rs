//! Optical flow sources and flow-based region correspondences between frames.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::raster_io::{FlowField, Image};
use crate::superpixel::SuperpixelPartition;

/// Region links between frames `t` and `t + 1`.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct FlowCorrespondence {
    /// `(region_at_t, region_at_t1, link_count)`, sorted by region pair.
    pub links: Vec<(u32, u32, u32)>,
}

impl FlowCorrespondence {
    pub fn total_links(&self) -> usize {
        self.links.iter().map(|l| l.2 as usize).sum()
    }
}

/// Block-matching flow estimate. Each `block`×`block` tile gets the integer
/// displacement within `radius` minimizing the sum of absolute differences, ties
/// going to zero displacement and then to the lexicographically smallest `(dy, dx)`.
/// Targets beyond the frame edge sample the nearest edge pixel.
pub fn estimate_flow_blockmatch(a: &Image, b: &Image, block: usize, radius: usize) -> Result<FlowField> {
    if a.width != b.width || a.height != b.height || a.channels != b.channels {
        return Err(Error::invalid(format!(
            "frame size mismatch: {}x{}x{} vs {}x{}x{}",
            a.width, a.height, a.channels, b.width, b.height, b.channels
        )));
    }
    if block < 4 {
        return Err(Error::invalid(format!("block {block} must be >= 4")));
    }
    if radius < 1 {
        return Err(Error::invalid("radius must be >= 1"));
    }
    let (w, h, ch) = (a.width, a.height, a.channels);
    let r = radius as isize;
    let mut candidates = vec![(0isize, 0isize)];
    for dy in -r..=r {
        for dx in -r..=r {
            if (dy, dx) != (0, 0) {
                candidates.push((dy, dx));
            }
        }
    }

    let mut flow = FlowField::zeros(w, h);
    for by in (0..h).step_by(block) {
        for bx in (0..w).step_by(block) {
            let (y1, x1) = ((by + block).min(h), (bx + block).min(w));
            let mut best = (u64::MAX, 0isize, 0isize);
            for &(dy, dx) in &candidates {
                let mut sad = 0u64;
                for y in by..y1 {
                    let ty = (y as isize + dy).clamp(0, h as isize - 1) as usize;
                    for x in bx..x1 {
                        let tx = (x as isize + dx).clamp(0, w as isize - 1) as usize;
                        let pa = &a.data[(y * w + x) * ch..][..ch];
                        let pb = &b.data[(ty * w + tx) * ch..][..ch];
                        sad += pa
                            .iter()
                            .zip(pb)
                            .map(|(&p, &q)| (p as i32 - q as i32).unsigned_abs() as u64)
                            .sum::<u64>();
                    }
                    if sad >= best.0 {
                        break;
                    }
                }
                if sad < best.0 {
                    best = (sad, dy, dx);
                }
            }
            for y in by..y1 {
                for x in bx..x1 {
                    flow.u[y * w + x] = best.2 as f32;
                    flow.v[y * w + x] = best.1 as f32;
                }
            }
        }
    }
    Ok(flow)
}

/// Count pixel links from regions at `t` to regions at `t + 1` along the flow.
/// Targets are rounded half away from zero per component; out-of-frame targets are
/// dropped.
pub fn flow_links(
    p_t: &SuperpixelPartition,
    p_t1: &SuperpixelPartition,
    flow: &FlowField,
) -> Result<FlowCorrespondence> {
    let (w, h) = (p_t.width, p_t.height);
    if p_t1.width != w || p_t1.height != h || flow.width != w || flow.height != h {
        return Err(Error::invalid("partition and flow dimensions differ"));
    }
    let mut counts: BTreeMap<(u32, u32), u32> = BTreeMap::new();
    for y in 0..h {
        for x in 0..w {
            let (u, v) = flow.at(x, y);
            let tx = (x as f64 + u as f64).round();
            let ty = (y as f64 + v as f64).round();
            if tx < 0.0 || ty < 0.0 || tx >= w as f64 || ty >= h as f64 {
                continue;
            }
            let target = p_t1.labels[ty as usize * w + tx as usize];
            *counts.entry((p_t.labels[y * w + x], target)).or_insert(0) += 1;
        }
    }
    Ok(FlowCorrespondence {
        links: counts.into_iter().map(|((a, b), n)| (a, b, n)).collect(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn textured(w: usize, h: usize) -> Image {
        let mut img = Image::filled_rgb(w, h, [0, 0, 0]);
        for y in 0..h {
            for x in 0..w {
                // non-periodic within the search radius
                let v = ((x * x * 31 + y * 17 + x * y * 7) % 251) as u8;
                img.set_rgb(x, y, [v, v.wrapping_mul(3), 255 - v]);
            }
        }
        img
    }

    fn shift_right(img: &Image, s: usize) -> Image {
        let mut out = img.clone();
        for y in 0..img.height {
            for x in 0..img.width {
                let src = x.saturating_sub(s);
                let i = (y * img.width + src) * 3;
                let rgb = [img.data[i], img.data[i + 1], img.data[i + 2]];
                out.set_rgb(x, y, rgb);
            }
        }
        out
    }

    fn grid_partition(w: usize, h: usize, split_x: usize) -> SuperpixelPartition {
        let labels = (0..w * h).map(|i| u32::from(i % w >= split_x)).collect();
        SuperpixelPartition::from_labels(&Image::filled_rgb(w, h, [0, 0, 0]), labels).unwrap()
    }

    #[test]
    fn blockmatch_recovers_shift() {
        let a = textured(48, 32);
        let b = shift_right(&a, 3);
        let flow = estimate_flow_blockmatch(&a, &b, 8, 4).unwrap();
        // interior blocks: tile columns 1..=4, rows 1..=2
        for by in 1..3 {
            for bx in 1..5 {
                let (u, v) = flow.at(bx * 8 + 3, by * 8 + 3);
                assert_eq!((u, v), (3.0, 0.0), "block ({bx},{by})");
            }
        }
    }

    #[test]
    fn blockmatch_identical_and_uniform_frames_give_zero_flow() {
        let a = textured(24, 16);
        let f = estimate_flow_blockmatch(&a, &a, 8, 3).unwrap();
        assert!(f.u.iter().chain(&f.v).all(|&d| d == 0.0));
        let flat = Image::filled_rgb(24, 16, [90, 90, 90]);
        let f = estimate_flow_blockmatch(&flat, &flat, 4, 2).unwrap();
        assert!(f.u.iter().chain(&f.v).all(|&d| d == 0.0));
    }

    #[test]
    fn blockmatch_rejects_bad_arguments() {
        let a = textured(8, 8);
        assert!(estimate_flow_blockmatch(&a, &textured(8, 9), 4, 1).is_err());
        assert!(estimate_flow_blockmatch(&a, &a, 3, 1).is_err());
        assert!(estimate_flow_blockmatch(&a, &a, 4, 0).is_err());
    }

    #[test]
    fn zero_flow_links_each_region_to_itself() {
        let p = grid_partition(6, 4, 2);
        let c = flow_links(&p, &p, &FlowField::zeros(6, 4)).unwrap();
        assert_eq!(c.links, vec![(0, 0, 8), (1, 1, 16)]);
    }

    #[test]
    fn out_of_bounds_flow_drops_everything() {
        let p = grid_partition(4, 4, 2);
        let mut f = FlowField::zeros(4, 4);
        f.u.iter_mut().for_each(|u| *u = 10.0);
        assert!(flow_links(&p, &p, &f).unwrap().links.is_empty());
    }

    #[test]
    fn left_half_shifted_onto_right_half() {
        let (w, h) = (8, 3);
        let p = grid_partition(w, h, 4);
        let mut f = FlowField::zeros(w, h);
        for y in 0..h {
            for x in 0..4 {
                f.u[y * w + x] = 4.0;
            }
        }
        // direct simulation: left pixels land at x + 4 (all right region), right pixels stay
        let c = flow_links(&p, &p, &f).unwrap();
        assert_eq!(c.links, vec![(0, 1, 12), (1, 1, 12)]);
    }

    #[test]
    fn rounding_is_half_away_from_zero() {
        let p = grid_partition(4, 1, 2);
        let mut f = FlowField::zeros(4, 1);
        f.u[1] = 0.5; // 1.5 -> 2 (right region)
        f.u[2] = -0.5; // 1.5 -> 2 (right region)
        let c = flow_links(&p, &p, &f).unwrap();
        assert_eq!(c.links, vec![(0, 0, 1), (0, 1, 1), (1, 1, 2)]);
    }
}
