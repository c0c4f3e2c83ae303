//! Spatio-temporal graph, binary Potts energy, and its exact minimization.
//!
//! Label 1 is foreground. The energy of a labeling `L` is
//! `Σ_i unary_i(l_i) + Σ_(i,j) [l_i ≠ l_j] · w_ij` with `w_ij ≥ 0`, which is
//! submodular and therefore minimized exactly by a single s/t min-cut.

mod maxflow;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::flow::FlowCorrespondence;
use crate::raster_io::SegmentationMask;
use crate::superpixel::{region_adjacency, SuperpixelPartition};

pub use maxflow::{MaxFlow, Segment};

pub const DEFAULT_LAMBDA_ATTENTION: f64 = 2.0;
pub const DEFAULT_LAMBDA_MOTION: f64 = 1.0;
pub const DEFAULT_LAMBDA_APPEARANCE: f64 = 2.0;
pub const DEFAULT_EPS: f64 = 1e-6;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GraphNode {
    pub frame: usize,
    pub region: u32,
    pub pixel_count: usize,
    pub mean_color: [f64; 3],
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SpatialEdge {
    pub a: usize,
    pub b: usize,
    pub boundary_length: u32,
    pub color_dist2: f64,
}

/// Edge from a node in frame `t` (`a`) to a node in frame `t + 1` (`b`).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TemporalEdge {
    pub a: usize,
    pub b: usize,
    pub link_count: u32,
    pub source_size: usize,
    pub color_dist2: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SpatioTemporalGraph {
    pub nodes: Vec<GraphNode>,
    /// Index of the first node of each frame; node id = `frame_offsets[t] + region`.
    pub frame_offsets: Vec<usize>,
    pub spatial: Vec<SpatialEdge>,
    pub temporal: Vec<TemporalEdge>,
}

impl SpatioTemporalGraph {
    pub fn node_id(&self, frame: usize, region: u32) -> usize {
        self.frame_offsets[frame] + region as usize
    }

    pub fn frame_count(&self) -> usize {
        self.frame_offsets.len()
    }
}

fn color_dist2(a: &[f64; 3], b: &[f64; 3]) -> f64 {
    (0..3).map(|d| (a[d] - b[d]).powi(2)).sum()
}

/// Nodes are the regions of every frame; spatial edges join adjacent regions, and
/// temporal edges join flow-linked regions of consecutive frames.
pub fn build_graph(
    partitions: &[SuperpixelPartition],
    correspondences: &[FlowCorrespondence],
) -> Result<SpatioTemporalGraph> {
    if partitions.len() != correspondences.len() + 1 {
        return Err(Error::invalid(format!(
            "{} frames need {} correspondences, got {}",
            partitions.len(),
            partitions.len().saturating_sub(1),
            correspondences.len()
        )));
    }
    let mut nodes = Vec::new();
    let mut frame_offsets = Vec::with_capacity(partitions.len());
    for (t, p) in partitions.iter().enumerate() {
        frame_offsets.push(nodes.len());
        nodes.extend(p.regions.iter().enumerate().map(|(i, r)| GraphNode {
            frame: t,
            region: i as u32,
            pixel_count: r.pixel_count,
            mean_color: r.mean_color,
        }));
    }

    let mut spatial = Vec::new();
    for (t, p) in partitions.iter().enumerate() {
        for ((ra, rb), len) in region_adjacency(p) {
            let (a, b) = (frame_offsets[t] + ra as usize, frame_offsets[t] + rb as usize);
            spatial.push(SpatialEdge {
                a,
                b,
                boundary_length: len,
                color_dist2: color_dist2(&nodes[a].mean_color, &nodes[b].mean_color),
            });
        }
    }

    let mut temporal = Vec::new();
    for (t, c) in correspondences.iter().enumerate() {
        let (pt, pt1) = (&partitions[t], &partitions[t + 1]);
        for &(ra, rb, count) in &c.links {
            if ra as usize >= pt.count() || rb as usize >= pt1.count() {
                return Err(Error::invalid(format!(
                    "correspondence {t} references region outside the partition"
                )));
            }
            if count == 0 {
                continue;
            }
            let (a, b) = (frame_offsets[t] + ra as usize, frame_offsets[t + 1] + rb as usize);
            temporal.push(TemporalEdge {
                a,
                b,
                link_count: count,
                source_size: nodes[a].pixel_count,
                color_dist2: color_dist2(&nodes[a].mean_color, &nodes[b].mean_color),
            });
        }
    }

    Ok(SpatioTemporalGraph {
        nodes,
        frame_offsets,
        spatial,
        temporal,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EnergyParams {
    pub lambda_a: f64,
    pub lambda_m: f64,
    pub lambda_c: f64,
    pub eps: f64,
    /// Global pairwise gain multiplying every edge weight.
    pub gamma: f64,
}

impl Default for EnergyParams {
    fn default() -> Self {
        EnergyParams {
            lambda_a: DEFAULT_LAMBDA_ATTENTION,
            lambda_m: DEFAULT_LAMBDA_MOTION,
            lambda_c: DEFAULT_LAMBDA_APPEARANCE,
            eps: DEFAULT_EPS,
            gamma: 1.0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PairwiseTerm {
    pub a: usize,
    pub b: usize,
    pub weight: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EnergyModel {
    /// `[cost of label 0, cost of label 1]` per node.
    pub unary: Vec<[f64; 2]>,
    pub pairwise: Vec<PairwiseTerm>,
    #[serde(default)]
    pub params: Option<EnergyParams>,
}

impl EnergyModel {
    pub fn energy(&self, labels: &[u8]) -> f64 {
        let u: f64 = self
            .unary
            .iter()
            .zip(labels)
            .map(|(c, &l)| c[l as usize])
            .sum();
        let p: f64 = self
            .pairwise
            .iter()
            .filter(|e| labels[e.a] != labels[e.b])
            .map(|e| e.weight)
            .sum();
        u + p
    }

    pub fn scaled(&self, k: f64) -> EnergyModel {
        EnergyModel {
            unary: self.unary.iter().map(|u| [u[0] * k, u[1] * k]).collect(),
            pairwise: self
                .pairwise
                .iter()
                .map(|e| PairwiseTerm { weight: e.weight * k, ..e.clone() })
                .collect(),
            params: self.params,
        }
    }
}

/// Unary costs `(u0, u1)` from attention, motion and appearance probabilities.
pub fn unary_costs(a: f64, m: f64, c: f64, params: &EnergyParams) -> [f64; 2] {
    let clamp = |p: f64| p.clamp(params.eps, 1.0 - params.eps);
    let cost = |pa: f64, pm: f64, pc: f64| {
        -params.lambda_a * clamp(pa).ln() - params.lambda_m * clamp(pm).ln() - params.lambda_c * clamp(pc).ln()
    };
    [cost(1.0 - a, 1.0 - m, 1.0 - c), cost(a, m, c)]
}

/// Assemble unaries from per-node `(A, M, C)` and Potts weights from the graph.
///
/// Spatial weight `φ_s·φ_c`, temporal weight `φ_t·φ_c`, each times `gamma`, where
/// `φ_s` is the boundary length over the mean boundary length, `φ_t` the fraction
/// of source pixels flowing into the target, and `φ_c = exp(−d²/(2σ²))` with `σ²`
/// the mean squared color distance over all edges.
pub fn assemble_energy(
    attention: &[f64],
    motion: &[f64],
    appearance: &[f64],
    graph: &SpatioTemporalGraph,
    params: &EnergyParams,
) -> Result<EnergyModel> {
    let n = graph.nodes.len();
    if n == 0 {
        return Err(Error::invalid("cannot assemble energy on an empty graph"));
    }
    for (name, v) in [("attention", attention), ("motion", motion), ("appearance", appearance)] {
        if v.len() != n {
            return Err(Error::invalid(format!("{name} has {} values for {n} nodes", v.len())));
        }
        if let Some(i) = v.iter().position(|p| !(0.0..=1.0).contains(p)) {
            return Err(Error::invalid(format!("{name} value at node {i} outside [0, 1]")));
        }
    }
    if !(params.eps > 0.0 && params.eps < 0.5) {
        return Err(Error::invalid(format!("eps {} must be in (0, 0.5)", params.eps)));
    }
    if !(params.gamma >= 0.0 && params.gamma.is_finite()) {
        return Err(Error::invalid(format!("gamma {} must be finite and >= 0", params.gamma)));
    }

    let unary = (0..n)
        .map(|i| unary_costs(attention[i], motion[i], appearance[i], params))
        .collect();

    let edge_count = graph.spatial.len() + graph.temporal.len();
    let sigma2 = if edge_count > 0 {
        (graph.spatial.iter().map(|e| e.color_dist2).sum::<f64>()
            + graph.temporal.iter().map(|e| e.color_dist2).sum::<f64>())
            / edge_count as f64
    } else {
        0.0
    };
    let phi_c = |d2: f64| if sigma2 > 0.0 { (-d2 / (2.0 * sigma2)).exp() } else { 1.0 };
    let mean_boundary = if graph.spatial.is_empty() {
        1.0
    } else {
        graph.spatial.iter().map(|e| e.boundary_length as f64).sum::<f64>() / graph.spatial.len() as f64
    };

    let mut pairwise = Vec::with_capacity(edge_count);
    for e in &graph.spatial {
        let phi_s = e.boundary_length as f64 / mean_boundary;
        pairwise.push(PairwiseTerm {
            a: e.a,
            b: e.b,
            weight: params.gamma * phi_s * phi_c(e.color_dist2),
        });
    }
    for e in &graph.temporal {
        let phi_t = e.link_count as f64 / e.source_size as f64;
        pairwise.push(PairwiseTerm {
            a: e.a,
            b: e.b,
            weight: params.gamma * phi_t * phi_c(e.color_dist2),
        });
    }
    Ok(EnergyModel {
        unary,
        pairwise,
        params: Some(*params),
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Labeling {
    pub labels: Vec<u8>,
    /// Minimum energy as reported by the solver (max-flow value plus the constant
    /// absorbed from the unaries).
    pub energy: f64,
}

/// Exact minimizer of a binary Potts energy by max-flow. Nodes on the source side
/// take label 1. Among equal-energy labelings the solver's fixed scan order decides,
/// with undetermined nodes going to label 0.
pub fn min_cut(e: &EnergyModel) -> Result<Labeling> {
    let n = e.unary.len();
    if let Some(i) = e.unary.iter().position(|u| !u[0].is_finite() || !u[1].is_finite()) {
        return Err(Error::invalid(format!("non-finite unary cost at node {i}")));
    }
    for (k, p) in e.pairwise.iter().enumerate() {
        if !(p.weight >= 0.0) || !p.weight.is_finite() {
            return Err(Error::invalid(format!(
                "pairwise weight {} on edge {k} is negative or not finite",
                p.weight
            )));
        }
        if p.a >= n || p.b >= n || p.a == p.b {
            return Err(Error::invalid(format!("edge {k} has invalid endpoints ({}, {})", p.a, p.b)));
        }
    }
    let mut g = MaxFlow::new(n);
    for (i, u) in e.unary.iter().enumerate() {
        // source side (label 1) pays the sink edge, sink side (label 0) the source edge
        g.add_tweights(i, u[0], u[1]);
    }
    for p in &e.pairwise {
        if p.weight > 0.0 {
            g.add_edge(p.a, p.b, p.weight, p.weight);
        }
    }
    let energy = g.solve();
    let labels = (0..n)
        .map(|i| match g.segment(i) {
            Segment::Source => 1,
            Segment::Sink => 0,
        })
        .collect();
    Ok(Labeling { labels, energy })
}

/// Render node labels back to per-frame pixel masks.
pub fn labeling_to_masks(labeling: &Labeling, partitions: &[SuperpixelPartition]) -> Result<Vec<SegmentationMask>> {
    let total: usize = partitions.iter().map(|p| p.count()).sum();
    if labeling.labels.len() != total {
        return Err(Error::invalid(format!(
            "labeling covers {} nodes, partitions have {total}",
            labeling.labels.len()
        )));
    }
    let mut offset = 0;
    let mut masks = Vec::with_capacity(partitions.len());
    for p in partitions {
        let data = p.labels.iter().map(|&l| labeling.labels[offset + l as usize]).collect();
        masks.push(SegmentationMask {
            width: p.width,
            height: p.height,
            data,
        });
        offset += p.count();
    }
    Ok(masks)
}
