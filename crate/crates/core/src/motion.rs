//! Motion evidence: flow-gradient boundaries, an 8-ray inside-outside map, and the
//! per-superpixel motion term.

use crate::error::{Error, Result};
use crate::raster_io::{FlowField, Tensor};
use crate::superpixel::SuperpixelPartition;

pub const DEFAULT_BOUNDARY_LAMBDA: f64 = 0.5;
pub const DEFAULT_BOUNDARY_THRESHOLD: f64 = 0.5;

/// Binary per-pixel motion boundary map.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct BoundaryMap {
    pub width: usize,
    pub height: usize,
    pub data: Vec<bool>,
}

impl BoundaryMap {
    pub fn empty(width: usize, height: usize) -> Self {
        BoundaryMap {
            width,
            height,
            data: vec![false; width * height],
        }
    }

    pub fn get(&self, x: usize, y: usize) -> bool {
        self.data[y * self.width + x]
    }

    pub fn set(&mut self, x: usize, y: usize, v: bool) {
        self.data[y * self.width + x] = v;
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct InsideOutsideMap {
    pub width: usize,
    pub height: usize,
    pub inside_prob: Vec<f32>,
}

impl InsideOutsideMap {
    pub fn get(&self, x: usize, y: usize) -> f32 {
        self.inside_prob[y * self.width + x]
    }

    pub fn to_tensor(&self) -> Tensor {
        Tensor {
            dims: vec![self.height as u32, self.width as u32],
            data: self.inside_prob.clone(),
        }
    }
}

/// Central difference of `f` along one axis, one-sided at the borders.
fn derivative(f: &[f32], i: usize, pos: usize, len: usize, stride: usize) -> f64 {
    if len < 2 {
        return 0.0;
    }
    if pos == 0 {
        f[i + stride] as f64 - f[i] as f64
    } else if pos == len - 1 {
        f[i] as f64 - f[i - stride] as f64
    } else {
        (f[i + stride] as f64 - f[i - stride] as f64) / 2.0
    }
}

/// Frobenius norm of the flow Jacobian at every pixel.
pub fn flow_gradient_norm(flow: &FlowField) -> Vec<f64> {
    let (w, h) = (flow.width, flow.height);
    let mut out = Vec::with_capacity(w * h);
    for y in 0..h {
        for x in 0..w {
            let i = y * w + x;
            let ux = derivative(&flow.u, i, x, w, 1);
            let uy = derivative(&flow.u, i, y, h, w);
            let vx = derivative(&flow.v, i, x, w, 1);
            let vy = derivative(&flow.v, i, y, h, w);
            out.push((ux * ux + uy * uy + vx * vx + vy * vy).sqrt());
        }
    }
    out
}

/// Pixels where `1 − exp(−lambda_b · ‖∇flow‖_F)` strictly exceeds `theta_b`.
pub fn motion_boundary(flow: &FlowField, lambda_b: f64, theta_b: f64) -> Result<BoundaryMap> {
    if !(theta_b > 0.0) {
        return Err(Error::invalid(format!("theta_b {theta_b} must be > 0")));
    }
    if !(lambda_b > 0.0 && lambda_b.is_finite()) {
        return Err(Error::invalid(format!("lambda_b {lambda_b} must be > 0")));
    }
    let data = flow_gradient_norm(flow)
        .into_iter()
        .map(|g| 1.0 - (-lambda_b * g).exp() > theta_b)
        .collect();
    Ok(BoundaryMap {
        width: flow.width,
        height: flow.height,
        data,
    })
}

const RAYS: [(isize, isize); 8] = [
    (1, 0),
    (1, 1),
    (0, 1),
    (-1, 1),
    (-1, 0),
    (-1, -1),
    (0, -1),
    (1, -1),
];

/// Fraction of the 8 axis/diagonal rays from each pixel that meet a boundary pixel
/// before leaving the frame. Boundary pixels themselves score 1.
pub fn inside_outside(boundary: &BoundaryMap) -> InsideOutsideMap {
    let (w, h) = (boundary.width, boundary.height);
    let mut crossings = vec![0u8; w * h];
    // hit[p] = some boundary pixel lies strictly beyond p along the ray
    let mut hit = vec![false; w * h];
    for &(dx, dy) in &RAYS {
        // visit pixels so that p + d is processed before p
        let xs: Vec<usize> = if dx > 0 { (0..w).rev().collect() } else { (0..w).collect() };
        let ys: Vec<usize> = if dy > 0 { (0..h).rev().collect() } else { (0..h).collect() };
        for &y in &ys {
            for &x in &xs {
                let nx = x as isize + dx;
                let ny = y as isize + dy;
                let i = y * w + x;
                hit[i] = if nx < 0 || ny < 0 || nx >= w as isize || ny >= h as isize {
                    false
                } else {
                    let j = ny as usize * w + nx as usize;
                    boundary.data[j] || hit[j]
                };
                if hit[i] {
                    crossings[i] += 1;
                }
            }
        }
    }
    let inside_prob = crossings
        .iter()
        .zip(&boundary.data)
        .map(|(&c, &b)| if b { 1.0 } else { c as f32 / 8.0 })
        .collect();
    InsideOutsideMap {
        width: w,
        height: h,
        inside_prob,
    }
}

/// Mean inside probability per region.
pub fn motion_term(iom: &InsideOutsideMap, p: &SuperpixelPartition) -> Result<Vec<f64>> {
    if iom.width != p.width || iom.height != p.height {
        return Err(Error::invalid("inside-outside map and partition dimensions differ"));
    }
    let mut sums = vec![0.0f64; p.count()];
    for (&l, &v) in p.labels.iter().zip(&iom.inside_prob) {
        sums[l as usize] += v as f64;
    }
    Ok(sums
        .iter()
        .zip(&p.regions)
        .map(|(s, r)| s / r.pixel_count as f64)
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::raster_io::Image;
    use proptest::prelude::*;

    fn translating_square(w: usize, h: usize, x0: usize, y0: usize, side: usize, u: f32) -> FlowField {
        let mut f = FlowField::zeros(w, h);
        for y in y0..y0 + side {
            for x in x0..x0 + side {
                f.u[y * w + x] = u;
            }
        }
        f
    }

    fn hollow_square(w: usize, h: usize, x0: usize, y0: usize, side: usize) -> BoundaryMap {
        let mut b = BoundaryMap::empty(w, h);
        for k in 0..side {
            b.set(x0 + k, y0, true);
            b.set(x0 + k, y0 + side - 1, true);
            b.set(x0, y0 + k, true);
            b.set(x0 + side - 1, y0 + k, true);
        }
        b
    }

    #[test]
    fn uniform_flow_has_no_boundary() {
        let mut f = FlowField::zeros(10, 8);
        f.u.iter_mut().for_each(|u| *u = 3.0);
        f.v.iter_mut().for_each(|v| *v = -1.5);
        let b = motion_boundary(&f, 0.5, 0.5).unwrap();
        assert!(b.data.iter().all(|&x| !x));
    }

    #[test]
    fn square_boundary_is_a_band_around_the_perimeter() {
        let (x0, y0, side) = (10, 12, 8);
        let f = translating_square(30, 30, x0, y0, side, 5.0);
        let b = motion_boundary(&f, 0.5, 0.5).unwrap();
        for y in 0..30 {
            for x in 0..30 {
                let inside_outer = x + 1 >= x0 && x <= x0 + side && y + 1 >= y0 && y <= y0 + side;
                let inside_inner = x > x0 && x + 1 < x0 + side && y > y0 && y + 1 < y0 + side;
                if b.get(x, y) {
                    // within one pixel of the square edge, on either side
                    assert!(inside_outer && !inside_inner, "({x},{y}) off the band");
                }
            }
        }
        // both sides of each edge are marked at mid-edge
        let my = y0 + side / 2;
        assert!(b.get(x0 - 1, my) && b.get(x0, my));
        assert!(b.get(x0 + side - 1, my) && b.get(x0 + side, my));
    }

    #[test]
    fn threshold_at_or_above_one_is_unreachable() {
        let f = translating_square(20, 20, 5, 5, 6, 1000.0);
        assert!(motion_boundary(&f, 0.5, 1.0).unwrap().data.iter().all(|&x| !x));
        assert!(motion_boundary(&f, 0.5, 0.0).is_err());
    }

    #[test]
    fn empty_boundary_gives_zero_inside() {
        let io = inside_outside(&BoundaryMap::empty(7, 5));
        assert!(io.inside_prob.iter().all(|&p| p == 0.0));
    }

    #[test]
    fn frame_border_ring_encloses_everything() {
        let io = inside_outside(&hollow_square(9, 9, 0, 0, 9));
        assert!(io.inside_prob.iter().all(|&p| p == 1.0));
    }

    #[test]
    fn hollow_square_center_and_corner() {
        let io = inside_outside(&hollow_square(40, 40, 15, 15, 10));
        assert_eq!(io.get(20, 20), 1.0);
        assert!(io.get(0, 0) < 0.5);
        assert!(io.get(39, 39) < 0.5);
        // ray simulation from (0,0): only the down-right diagonal meets the square
        assert_eq!(io.get(0, 0), 1.0 / 8.0);
    }

    #[test]
    fn motion_term_means() {
        let labels = (0..16).map(|i| u32::from(i % 4 >= 2)).collect();
        let p = SuperpixelPartition::from_labels(&Image::filled_rgb(4, 4, [0, 0, 0]), labels).unwrap();
        // region 0 fully inside, region 1 half covered
        let probs = (0..16)
            .map(|i| if i % 4 < 2 || i < 8 { 1.0 } else { 0.0 })
            .collect();
        let io = InsideOutsideMap { width: 4, height: 4, inside_prob: probs };
        assert_eq!(motion_term(&io, &p).unwrap(), vec![1.0, 0.5]);
        let zero = InsideOutsideMap { width: 4, height: 4, inside_prob: vec![0.0; 16] };
        assert_eq!(motion_term(&zero, &p).unwrap(), vec![0.0, 0.0]);
    }

    fn rotate90(b: &BoundaryMap) -> BoundaryMap {
        // (x, y) -> (h - 1 - y, x) in a frame of size (h, w)
        let mut out = BoundaryMap::empty(b.height, b.width);
        for y in 0..b.height {
            for x in 0..b.width {
                out.set(b.height - 1 - y, x, b.get(x, y));
            }
        }
        out
    }

    proptest! {
        #[test]
        fn inside_outside_rotation_invariant(
            w in 1usize..12, h in 1usize..12,
            bits in prop::collection::vec(prop::bool::weighted(0.15), 144),
        ) {
            let b = BoundaryMap { width: w, height: h, data: bits[..w * h].to_vec() };
            let io = inside_outside(&b);
            let rb = rotate90(&b);
            let rio = inside_outside(&rb);
            for y in 0..h {
                for x in 0..w {
                    prop_assert_eq!(io.get(x, y), rio.get(h - 1 - y, x));
                }
            }
        }

        #[test]
        fn adding_boundary_never_lowers_inside_prob(
            bits in prop::collection::vec(prop::bool::weighted(0.1), 100),
            extra in 0usize..100,
        ) {
            let b = BoundaryMap { width: 10, height: 10, data: bits };
            let before = inside_outside(&b);
            let mut b2 = b.clone();
            b2.data[extra] = true;
            let after = inside_outside(&b2);
            for (a, c) in before.inside_prob.iter().zip(&after.inside_prob) {
                prop_assert!(c >= a);
                prop_assert!((0.0..=1.0).contains(c));
            }
        }
    }
}
