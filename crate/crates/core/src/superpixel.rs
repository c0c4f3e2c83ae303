//! SLIC superpixels in RGBxy space with a 4-connectivity enforcement pass.

use std::collections::{BTreeMap, VecDeque};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::raster_io::Image;

pub const DEFAULT_REGION_SIZE: usize = 15;
pub const DEFAULT_COMPACTNESS: f64 = 0.5;
pub const SLIC_ITERATIONS: usize = 10;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RegionStats {
    pub pixel_count: usize,
    /// Mean RGB in `[0, 1]`.
    pub mean_color: [f64; 3],
    /// Centroid `(x, y)` in pixels.
    pub centroid: [f64; 2],
}

/// A full labeling of a frame into 4-connected regions `0..count`.
#[derive(Clone, Debug, PartialEq)]
pub struct SuperpixelPartition {
    pub width: usize,
    pub height: usize,
    pub labels: Vec<u32>,
    pub regions: Vec<RegionStats>,
}

impl SuperpixelPartition {
    /// Build a partition from an existing label map, validating that labels are dense
    /// and every region is non-empty. Connectivity is not enforced here; see
    /// [`SuperpixelPartition::is_connected`].
    pub fn from_labels(image: &Image, labels: Vec<u32>) -> Result<Self> {
        if labels.len() != image.width * image.height {
            return Err(Error::invalid("label map size does not match image"));
        }
        let count = labels.iter().map(|&l| l as usize + 1).max().unwrap_or(0);
        let regions = region_stats(image, &labels, count);
        if let Some(empty) = regions.iter().position(|r| r.pixel_count == 0) {
            return Err(Error::invalid(format!("label {empty} occupies no pixels")));
        }
        Ok(SuperpixelPartition {
            width: image.width,
            height: image.height,
            labels,
            regions,
        })
    }

    pub fn count(&self) -> usize {
        self.regions.len()
    }

    pub fn label(&self, x: usize, y: usize) -> u32 {
        self.labels[y * self.width + x]
    }

    /// True if every region forms a single 4-connected component.
    pub fn is_connected(&self) -> bool {
        let (_, comp_count) = connected_components(self.width, self.height, &self.labels);
        comp_count == self.count()
    }
}

/// Per-region pixel count, mean color and centroid recomputed from a label map.
pub fn region_stats(image: &Image, labels: &[u32], count: usize) -> Vec<RegionStats> {
    let mut sums = vec![[0.0f64; 5]; count];
    let mut counts = vec![0usize; count];
    for y in 0..image.height {
        for x in 0..image.width {
            let l = labels[y * image.width + x] as usize;
            let c = image.rgb_f64(x, y);
            let s = &mut sums[l];
            s[0] += c[0];
            s[1] += c[1];
            s[2] += c[2];
            s[3] += x as f64;
            s[4] += y as f64;
            counts[l] += 1;
        }
    }
    sums.iter()
        .zip(&counts)
        .map(|(s, &n)| {
            let d = n.max(1) as f64;
            RegionStats {
                pixel_count: n,
                mean_color: [s[0] / d, s[1] / d, s[2] / d],
                centroid: [s[3] / d, s[4] / d],
            }
        })
        .collect()
}

#[derive(Clone, Copy, Debug)]
struct Center {
    color: [f64; 3],
    x: f64,
    y: f64,
}

/// SLIC superpixels. Seeds sit at the centers of a `region_size` grid; pixels are
/// assigned within a `2·region_size` window by
/// `D² = ‖Δrgb‖² + (compactness / region_size)² · ‖Δxy‖²`, ties to the lower index.
pub fn slic(image: &Image, region_size: usize, compactness: f64) -> Result<SuperpixelPartition> {
    slic_with_iterations(image, region_size, compactness, SLIC_ITERATIONS)
}

pub fn slic_with_iterations(
    image: &Image,
    region_size: usize,
    compactness: f64,
    iterations: usize,
) -> Result<SuperpixelPartition> {
    if region_size < 2 {
        return Err(Error::invalid(format!("region_size {region_size} must be >= 2")));
    }
    if !(compactness > 0.0 && compactness.is_finite()) {
        return Err(Error::invalid(format!("compactness {compactness} must be > 0")));
    }
    let (w, h) = (image.width, image.height);
    let nx = (w / region_size).max(1);
    let ny = (h / region_size).max(1);
    let cell_w = w as f64 / nx as f64;
    let cell_h = h as f64 / ny as f64;

    let colors: Vec<[f64; 3]> = (0..w * h).map(|i| image.rgb_f64(i % w, i / w)).collect();

    let mut centers = Vec::with_capacity(nx * ny);
    let mut labels = vec![0u32; w * h];
    for gy in 0..ny {
        for gx in 0..nx {
            let cx = (gx as f64 + 0.5) * cell_w - 0.5;
            let cy = (gy as f64 + 0.5) * cell_h - 0.5;
            let px = (cx.round() as usize).min(w - 1);
            let py = (cy.round() as usize).min(h - 1);
            centers.push(Center {
                color: colors[py * w + px],
                x: cx,
                y: cy,
            });
        }
    }
    // pixels outside every search window keep their grid cell
    for y in 0..h {
        let gy = ((y as f64 / cell_h) as usize).min(ny - 1);
        for x in 0..w {
            let gx = ((x as f64 / cell_w) as usize).min(nx - 1);
            labels[y * w + x] = (gy * nx + gx) as u32;
        }
    }

    if centers.len() > 1 {
        let s = region_size as f64;
        let spatial_weight = (compactness / s).powi(2);
        let mut dist = vec![f64::INFINITY; w * h];
        for _ in 0..iterations {
            dist.iter_mut().for_each(|d| *d = f64::INFINITY);
            for (k, c) in centers.iter().enumerate() {
                let x0 = (c.x - s).ceil().max(0.0) as usize;
                let y0 = (c.y - s).ceil().max(0.0) as usize;
                let x1 = ((c.x + s).floor() as isize).min(w as isize - 1);
                let y1 = ((c.y + s).floor() as isize).min(h as isize - 1);
                if x1 < 0 || y1 < 0 {
                    continue;
                }
                for y in y0..=y1 as usize {
                    let dy = y as f64 - c.y;
                    for x in x0..=x1 as usize {
                        let i = y * w + x;
                        let p = colors[i];
                        let dc = (p[0] - c.color[0]).powi(2)
                            + (p[1] - c.color[1]).powi(2)
                            + (p[2] - c.color[2]).powi(2);
                        let dx = x as f64 - c.x;
                        let d = dc + spatial_weight * (dx * dx + dy * dy);
                        if d < dist[i] {
                            dist[i] = d;
                            labels[i] = k as u32;
                        }
                    }
                }
            }

            let mut sums = vec![[0.0f64; 5]; centers.len()];
            let mut counts = vec![0usize; centers.len()];
            for (i, &l) in labels.iter().enumerate() {
                let s = &mut sums[l as usize];
                let p = colors[i];
                s[0] += p[0];
                s[1] += p[1];
                s[2] += p[2];
                s[3] += (i % w) as f64;
                s[4] += (i / w) as f64;
                counts[l as usize] += 1;
            }
            for ((c, s), &n) in centers.iter_mut().zip(&sums).zip(&counts) {
                if n > 0 {
                    let n = n as f64;
                    *c = Center {
                        color: [s[0] / n, s[1] / n, s[2] / n],
                        x: s[3] / n,
                        y: s[4] / n,
                    };
                }
            }
        }
    }

    let labels = enforce_connectivity(w, h, &labels);
    SuperpixelPartition::from_labels(image, labels)
}

/// Label 4-connected components of equal label value. Returns component ids in
/// scan order of first appearance and the component count.
fn connected_components(w: usize, h: usize, labels: &[u32]) -> (Vec<u32>, usize) {
    let mut comp = vec![u32::MAX; w * h];
    let mut next = 0u32;
    let mut queue = VecDeque::new();
    for start in 0..w * h {
        if comp[start] != u32::MAX {
            continue;
        }
        let l = labels[start];
        comp[start] = next;
        queue.push_back(start);
        while let Some(i) = queue.pop_front() {
            let (x, y) = (i % w, i / w);
            for j in neighbors4(x, y, w, h) {
                if comp[j] == u32::MAX && labels[j] == l {
                    comp[j] = next;
                    queue.push_back(j);
                }
            }
        }
        next += 1;
    }
    (comp, next as usize)
}

fn neighbors4(x: usize, y: usize, w: usize, h: usize) -> impl Iterator<Item = usize> {
    let i = y * w + x;
    [
        (x > 0).then(|| i - 1),
        (y > 0).then(|| i - w),
        (x + 1 < w).then(|| i + 1),
        (y + 1 < h).then(|| i + w),
    ]
    .into_iter()
    .flatten()
}

/// Keep the largest component of every label and merge each remaining (orphan)
/// component into the largest adjacent settled region. Output labels are dense and
/// numbered in scan order.
fn enforce_connectivity(w: usize, h: usize, labels: &[u32]) -> Vec<u32> {
    let (comp, ncomp) = connected_components(w, h, labels);
    let mut comp_size = vec![0usize; ncomp];
    let mut comp_label = vec![0u32; ncomp];
    for (i, &c) in comp.iter().enumerate() {
        comp_size[c as usize] += 1;
        comp_label[c as usize] = labels[i];
    }

    // main component per label: largest, first in scan order on ties
    let mut main: BTreeMap<u32, usize> = BTreeMap::new();
    for c in 0..ncomp {
        let l = comp_label[c];
        match main.get(&l) {
            Some(&m) if comp_size[m] >= comp_size[c] => {}
            _ => {
                main.insert(l, c);
            }
        }
    }

    // owner[c] = label of the region the component ends up in
    let mut owner: Vec<Option<u32>> = vec![None; ncomp];
    let mut region_size: BTreeMap<u32, usize> = BTreeMap::new();
    for (&l, &c) in &main {
        owner[c] = Some(l);
        region_size.insert(l, comp_size[c]);
    }

    let mut comp_neighbors: Vec<Vec<u32>> = vec![Vec::new(); ncomp];
    for y in 0..h {
        for x in 0..w {
            let i = y * w + x;
            let ci = comp[i];
            for j in [(x + 1 < w).then(|| i + 1), (y + 1 < h).then(|| i + w)]
                .into_iter()
                .flatten()
            {
                let cj = comp[j];
                if ci != cj {
                    comp_neighbors[ci as usize].push(cj);
                    comp_neighbors[cj as usize].push(ci);
                }
            }
        }
    }
    for n in &mut comp_neighbors {
        n.sort_unstable();
        n.dedup();
    }

    let mut pending: Vec<usize> = (0..ncomp).filter(|&c| owner[c].is_none()).collect();
    while !pending.is_empty() {
        let mut deferred = Vec::new();
        for &c in &pending {
            let target = comp_neighbors[c]
                .iter()
                .filter_map(|&n| owner[n as usize])
                .max_by(|&a, &b| region_size[&a].cmp(&region_size[&b]).then(b.cmp(&a)));
            match target {
                Some(l) => {
                    owner[c] = Some(l);
                    *region_size.get_mut(&l).unwrap() += comp_size[c];
                }
                None => deferred.push(c),
            }
        }
        assert!(deferred.len() < pending.len(), "orphan merge made no progress");
        pending = deferred;
    }

    // dense relabel in scan order
    let mut remap: BTreeMap<u32, u32> = BTreeMap::new();
    comp.iter()
        .map(|&c| {
            let l = owner[c as usize].unwrap();
            let next = remap.len() as u32;
            *remap.entry(l).or_insert(next)
        })
        .collect()
}

/// Adjacent region pairs `(a, b)` with `a < b`, mapped to their shared boundary
/// length: the number of 4-neighbor pixel pairs straddling the two regions.
pub fn region_adjacency(p: &SuperpixelPartition) -> BTreeMap<(u32, u32), u32> {
    let mut out = BTreeMap::new();
    let (w, h) = (p.width, p.height);
    for y in 0..h {
        for x in 0..w {
            let a = p.labels[y * w + x];
            let mut visit = |b: u32| {
                if a != b {
                    *out.entry((a.min(b), a.max(b))).or_insert(0) += 1;
                }
            };
            if x + 1 < w {
                visit(p.labels[y * w + x + 1]);
            }
            if y + 1 < h {
                visit(p.labels[(y + 1) * w + x]);
            }
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn gray(w: usize, h: usize, v: u8) -> Image {
        Image::filled_rgb(w, h, [v, v, v])
    }

    fn partition(w: usize, h: usize, labels: Vec<u32>) -> SuperpixelPartition {
        SuperpixelPartition::from_labels(&gray(w, h, 0), labels).unwrap()
    }

    #[test]
    fn uniform_image_gives_grid_regions() {
        let p = slic(&gray(16, 16, 128), 8, 10.0).unwrap();
        assert_eq!(p.count(), 4);
        assert!(p.regions.iter().all(|r| r.pixel_count == 64));
        // the four regions are exactly the 8x8 quadrants
        for y in 0..16 {
            for x in 0..16 {
                assert_eq!(p.label(x, y), (y / 8 * 2 + x / 8) as u32);
            }
        }
    }

    #[test]
    fn large_region_size_gives_single_region() {
        let mut img = gray(12, 7, 0);
        for (i, b) in img.data.iter_mut().enumerate() {
            *b = (i * 37 % 251) as u8;
        }
        let p = slic(&img, 12, 10.0).unwrap();
        assert_eq!(p.count(), 1);
        assert_eq!(p.regions[0].pixel_count, 84);
        let p = slic(&img, 50, 1.0).unwrap();
        assert_eq!(p.count(), 1);
    }

    #[test]
    fn two_color_halves_respect_edge() {
        let (w, h) = (32, 16);
        let mut img = Image::filled_rgb(w, h, [20, 40, 200]);
        for y in 0..h {
            for x in 0..w / 2 {
                img.set_rgb(x, y, [230, 200, 10]);
            }
        }
        let p = slic(&img, w / 2, 10.0).unwrap();
        for r in 0..p.count() as u32 {
            let sides: Vec<bool> = (0..w * h)
                .filter(|&i| p.labels[i] == r)
                .map(|i| i % w < w / 2)
                .collect();
            assert!(sides.iter().all(|&s| s == sides[0]), "region {r} spans the edge");
        }
    }

    #[test]
    fn rejects_bad_parameters() {
        assert!(slic(&gray(4, 4, 0), 1, 10.0).is_err());
        assert!(slic(&gray(4, 4, 0), 4, 0.0).is_err());
    }

    #[test]
    fn textured_image_is_valid_and_deterministic() {
        let (w, h) = (40, 30);
        let mut img = Image::filled_rgb(w, h, [0, 0, 0]);
        for y in 0..h {
            for x in 0..w {
                let v = ((x * 7 + y * 13) % 29 * 8) as u8;
                img.set_rgb(x, y, [v, (255 - v as usize) as u8, ((x * y) % 256) as u8]);
            }
        }
        let a = slic(&img, 6, 0.5).unwrap();
        let b = slic(&img, 6, 0.5).unwrap();
        assert_eq!(a, b);
        assert!(a.is_connected());
        assert_eq!(a.regions.iter().map(|r| r.pixel_count).sum::<usize>(), w * h);
        assert_eq!(region_stats(&img, &a.labels, a.count()), a.regions);
    }

    #[test]
    fn connectivity_merges_orphans() {
        // label 0 appears in two disconnected places; the single stray pixel is absorbed
        let labels = vec![
            0, 0, 1, 1, //
            0, 0, 1, 0, //
            2, 2, 1, 1, //
        ];
        let fixed = enforce_connectivity(4, 3, &labels);
        assert_eq!(fixed[7], fixed[6]);
        let p = partition(4, 3, fixed);
        assert!(p.is_connected());
        assert_eq!(p.count(), 3);
    }

    #[test]
    fn adjacency_vertical_split() {
        let labels = (0..16).map(|i| if i % 4 < 2 { 0 } else { 1 }).collect();
        let adj = region_adjacency(&partition(4, 4, labels));
        assert_eq!(adj.into_iter().collect::<Vec<_>>(), vec![((0, 1), 4)]);
    }

    #[test]
    fn adjacency_single_region_is_empty() {
        assert!(region_adjacency(&partition(3, 3, vec![0; 9])).is_empty());
    }

    #[test]
    fn adjacency_excludes_diagonals() {
        let labels = (0..16)
            .map(|i| {
                let (x, y) = (i % 4, i / 4);
                (y / 2 * 2 + x / 2) as u32
            })
            .collect();
        let adj = region_adjacency(&partition(4, 4, labels));
        let pairs: Vec<_> = adj.keys().copied().collect();
        assert_eq!(pairs, vec![(0, 1), (0, 2), (1, 3), (2, 3)]);
        assert!(adj.values().all(|&n| n == 2));
    }
}
