//! Attention-weighted color GMMs and the appearance term.
//!
//! Samples are RGB colors in `[0, 1]` with nonnegative weights. Before fitting, the
//! sample set is canonicalized (sorted, exact duplicates merged by summing weights),
//! so a fit depends only on the weighted empirical distribution: permuting samples or
//! splitting one sample into weighted copies yields the identical model.

use log::warn;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::superpixel::SuperpixelPartition;

pub const VAR_FLOOR: f64 = 1e-4;
pub const DEFAULT_COMPONENTS: usize = 5;
pub const DEFAULT_EM_ITERS: usize = 20;
pub const APPEARANCE_EPS: f64 = 1e-6;

const LN_2PI: f64 = 1.837_877_066_409_345_5;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GmmComponent {
    pub weight: f64,
    pub mean: [f64; 3],
    pub var: [f64; 3],
}

impl GmmComponent {
    fn log_density(&self, x: &[f64; 3]) -> f64 {
        let mut acc = 0.0;
        for d in 0..3 {
            let diff = x[d] - self.mean[d];
            acc += diff * diff / self.var[d] + self.var[d].ln() + LN_2PI;
        }
        -0.5 * acc
    }
}

/// Diagonal-covariance Gaussian mixture over RGB.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GmmModel {
    pub components: Vec<GmmComponent>,
}

impl GmmModel {
    /// Mixture density at `x` (linear scale; may underflow to 0).
    pub fn density(&self, x: &[f64; 3]) -> f64 {
        self.components
            .iter()
            .map(|c| c.weight * c.log_density(x).exp())
            .sum()
    }

    pub fn log_density(&self, x: &[f64; 3]) -> f64 {
        log_sum_exp(self.components.iter().map(|c| c.weight.ln() + c.log_density(x)))
    }

    /// `Σ_n w_n · log p(x_n)`.
    pub fn weighted_log_likelihood(&self, samples: &[[f64; 3]], weights: &[f64]) -> f64 {
        samples
            .iter()
            .zip(weights)
            .filter(|(_, &w)| w > 0.0)
            .map(|(x, &w)| w * self.log_density(x))
            .sum()
    }
}

fn log_sum_exp(it: impl Iterator<Item = f64>) -> f64 {
    let v: Vec<f64> = it.collect();
    let m = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if m == f64::NEG_INFINITY {
        return m;
    }
    m + v.iter().map(|x| (x - m).exp()).sum::<f64>().ln()
}

/// A fitted model plus the weighted log-likelihood after initialization and after
/// every EM iteration.
#[derive(Clone, Debug)]
pub struct GmmFit {
    pub model: GmmModel,
    pub log_likelihood: Vec<f64>,
    /// Iterations in which an empty component was re-seeded.
    pub reseeded: Vec<usize>,
}

fn canonicalize(samples: &[[f64; 3]], weights: &[f64]) -> (Vec<[f64; 3]>, Vec<f64>) {
    let mut pairs: Vec<([f64; 3], f64)> = samples
        .iter()
        .zip(weights)
        .filter(|(_, &w)| w > 0.0)
        .map(|(s, &w)| (*s, w))
        .collect();
    pairs.sort_by(|a, b| {
        a.0[0]
            .total_cmp(&b.0[0])
            .then(a.0[1].total_cmp(&b.0[1]))
            .then(a.0[2].total_cmp(&b.0[2]))
            .then(a.1.total_cmp(&b.1))
    });
    let mut xs: Vec<[f64; 3]> = Vec::with_capacity(pairs.len());
    let mut ws: Vec<f64> = Vec::with_capacity(pairs.len());
    for (x, w) in pairs {
        if xs.last() == Some(&x) {
            *ws.last_mut().unwrap() += w;
        } else {
            xs.push(x);
            ws.push(w);
        }
    }
    (xs, ws)
}

fn sq_dist(a: &[f64; 3], b: &[f64; 3]) -> f64 {
    (0..3).map(|d| (a[d] - b[d]).powi(2)).sum()
}

/// Draw an index with probability proportional to `mass`.
fn sample_index(rng: &mut ChaCha8Rng, mass: &[f64]) -> usize {
    let total: f64 = mass.iter().sum();
    let r = rng.gen::<f64>() * total;
    let mut acc = 0.0;
    for (i, &m) in mass.iter().enumerate() {
        acc += m;
        if r < acc && m > 0.0 {
            return i;
        }
    }
    mass.iter().rposition(|&m| m > 0.0).unwrap_or(0)
}

/// Weighted k-means++ seeding: first center ∝ w, subsequent ∝ w·D².
fn kmeans_pp(xs: &[[f64; 3]], ws: &[f64], k: usize, rng: &mut ChaCha8Rng) -> Vec<[f64; 3]> {
    let mut centers = vec![xs[sample_index(rng, ws)]];
    let mut d2: Vec<f64> = xs.iter().map(|x| sq_dist(x, &centers[0])).collect();
    while centers.len() < k {
        let mass: Vec<f64> = d2.iter().zip(ws).map(|(d, w)| d * w).collect();
        let c = xs[sample_index(rng, &mass)];
        for (d, x) in d2.iter_mut().zip(xs) {
            *d = d.min(sq_dist(x, &c));
        }
        centers.push(c);
    }
    centers
}

/// Weighted M-step from responsibilities `resp[n][k]`. Returns the per-component
/// responsibility mass.
fn m_step(xs: &[[f64; 3]], ws: &[f64], resp: &[Vec<f64>], model: &mut GmmModel) -> Vec<f64> {
    let k = model.components.len();
    let total: f64 = ws.iter().sum();
    let mut mass = vec![0.0; k];
    let mut sum = vec![[0.0; 3]; k];
    for ((x, &w), r) in xs.iter().zip(ws).zip(resp) {
        for j in 0..k {
            let m = w * r[j];
            mass[j] += m;
            for d in 0..3 {
                sum[j][d] += m * x[d];
            }
        }
    }
    let mut sq = vec![[0.0; 3]; k];
    for ((x, &w), r) in xs.iter().zip(ws).zip(resp) {
        for j in 0..k {
            if mass[j] > 0.0 {
                let m = w * r[j];
                for d in 0..3 {
                    let diff = x[d] - sum[j][d] / mass[j];
                    sq[j][d] += m * diff * diff;
                }
            }
        }
    }
    for (j, c) in model.components.iter_mut().enumerate() {
        if mass[j] > 0.0 {
            c.weight = mass[j] / total;
            for d in 0..3 {
                c.mean[d] = sum[j][d] / mass[j];
                c.var[d] = (sq[j][d] / mass[j]).max(VAR_FLOOR);
            }
        } else {
            c.weight = 0.0;
        }
    }
    mass
}

fn responsibilities(xs: &[[f64; 3]], model: &GmmModel) -> Vec<Vec<f64>> {
    xs.iter()
        .map(|x| {
            let logs: Vec<f64> = model
                .components
                .iter()
                .map(|c| c.weight.ln() + c.log_density(x))
                .collect();
            let lse = log_sum_exp(logs.iter().copied());
            logs.iter().map(|l| (l - lse).exp()).collect()
        })
        .collect()
}

/// Fit a diagonal GMM by weighted EM.
///
/// Initialization: weighted k-means++ centers from a ChaCha8 stream seeded by `seed`,
/// hard nearest-center assignment, then one M-step. Components whose responsibility
/// mass vanishes are re-seeded at the sample with the lowest log-density.
pub fn fit_weighted_gmm(
    samples: &[[f64; 3]],
    weights: &[f64],
    k: usize,
    iters: usize,
    seed: u64,
) -> Result<GmmFit> {
    if samples.len() != weights.len() {
        return Err(Error::invalid("samples and weights differ in length"));
    }
    if k < 1 {
        return Err(Error::invalid("GMM needs at least one component"));
    }
    if weights.iter().any(|w| !w.is_finite() || *w < 0.0) {
        return Err(Error::invalid("GMM weights must be finite and nonnegative"));
    }
    if samples.iter().flatten().any(|v| !v.is_finite()) {
        return Err(Error::invalid("GMM samples must be finite"));
    }
    let (xs, ws) = canonicalize(samples, weights);
    if xs.is_empty() {
        return Err(Error::invalid("all GMM sample weights are zero"));
    }
    let k = if k > xs.len() {
        warn!("GMM: {k} components requested but only {} distinct samples; using {}", xs.len(), xs.len());
        xs.len()
    } else {
        k
    };

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let centers = kmeans_pp(&xs, &ws, k, &mut rng);
    let hard: Vec<Vec<f64>> = xs
        .iter()
        .map(|x| {
            let best = (0..k)
                .min_by(|&a, &b| sq_dist(x, &centers[a]).total_cmp(&sq_dist(x, &centers[b])))
                .unwrap();
            (0..k).map(|j| if j == best { 1.0 } else { 0.0 }).collect()
        })
        .collect();
    let mut model = GmmModel {
        components: centers
            .iter()
            .map(|c| GmmComponent {
                weight: 1.0 / k as f64,
                mean: *c,
                var: [VAR_FLOOR; 3],
            })
            .collect(),
    };
    m_step(&xs, &ws, &hard, &mut model);
    // k-means++ picks distinct points, so every center owns at least itself
    debug_assert!(model.components.iter().all(|c| c.weight > 0.0));

    let mut trace = vec![model.weighted_log_likelihood(&xs, &ws)];
    let mut reseeded = Vec::new();
    for it in 0..iters {
        let resp = responsibilities(&xs, &model);
        let mass = m_step(&xs, &ws, &resp, &mut model);
        if mass.iter().any(|&m| m <= 0.0) {
            reseed_empty(&xs, &ws, &mut model, &mass);
            reseeded.push(it);
        }
        trace.push(model.weighted_log_likelihood(&xs, &ws));
    }
    Ok(GmmFit {
        model,
        log_likelihood: trace,
        reseeded,
    })
}

fn reseed_empty(xs: &[[f64; 3]], ws: &[f64], model: &mut GmmModel, mass: &[f64]) {
    let total: f64 = ws.iter().sum();
    let mean: Vec<f64> = (0..3)
        .map(|d| xs.iter().zip(ws).map(|(x, w)| w * x[d]).sum::<f64>() / total)
        .collect();
    let var: Vec<f64> = (0..3)
        .map(|d| {
            (xs.iter().zip(ws).map(|(x, w)| w * (x[d] - mean[d]).powi(2)).sum::<f64>() / total)
                .max(VAR_FLOOR)
        })
        .collect();
    for (j, &m) in mass.iter().enumerate() {
        if m > 0.0 {
            continue;
        }
        let worst = (0..xs.len())
            .min_by(|&a, &b| model.log_density(&xs[a]).total_cmp(&model.log_density(&xs[b])))
            .unwrap();
        let share = 1.0 / (xs.len() as f64);
        model.components[j] = GmmComponent {
            weight: share,
            mean: xs[worst],
            var: [var[0], var[1], var[2]],
        };
    }
    let norm: f64 = model.components.iter().map(|c| c.weight).sum();
    model.components.iter_mut().for_each(|c| c.weight /= norm);
}

/// Foreground posterior at a color: `p_fg / (p_fg + p_bg)`, 0.5 when both densities
/// underflow, clamped to `[eps, 1 − eps]`.
pub fn color_posterior(fg: &GmmModel, bg: &GmmModel, color: &[f64; 3], eps: f64) -> f64 {
    let pf = fg.density(color);
    let pb = bg.density(color);
    let c = if pf + pb > 0.0 && (pf + pb).is_finite() {
        pf / (pf + pb)
    } else {
        0.5
    };
    c.clamp(eps, 1.0 - eps)
}

/// Appearance term per region, evaluated at the region's mean color.
pub fn appearance_term(fg: &GmmModel, bg: &GmmModel, p: &SuperpixelPartition) -> Vec<f64> {
    p.regions
        .iter()
        .map(|r| color_posterior(fg, bg, &r.mean_color, APPEARANCE_EPS))
        .collect()
}
