use log::{debug, info};
use serde::{Deserialize, Serialize};

use crate::appearance::{appearance_term, fit_weighted_gmm, GmmModel};
use crate::attention::{cam, fuse_multiscale, relevance_filter, superpixel_attention, AttentionMap, ClassScores, RelevantInterval};
use crate::error::{Error, Result};
use crate::flow::flow_links;
use crate::graphcut::{assemble_energy, build_graph, labeling_to_masks, min_cut, EnergyModel};
use crate::motion::{inside_outside, motion_boundary, motion_term, InsideOutsideMap};
use crate::raster_io::{FlowField, Image, SegmentationMask, Tensor};
use crate::superpixel::{slic, SuperpixelPartition};

use super::config::PipelineConfig;

/// Absolute tolerance between the solver's energy and the energy recomputed from
/// its labeling.
pub const ENERGY_TOLERANCE: f64 = 1e-9;

/// Where per-frame attention comes from.
#[derive(Clone, Debug)]
pub enum AttentionInput {
    /// One or more maps per frame, one per scale, at any resolution.
    Maps(Vec<Vec<AttentionMap>>),
    /// One `(h, w, d)` feature tensor per scale and frame, plus `(d, C)` classifier
    /// weights.
    Features { features: Vec<Vec<Tensor>>, weights: Tensor },
}

impl AttentionInput {
    fn frame_count(&self) -> usize {
        match self {
            AttentionInput::Maps(m) => m.len(),
            AttentionInput::Features { features, .. } => features.len(),
        }
    }
}

#[derive(Clone, Debug)]
pub struct VideoInput {
    pub frames: Vec<Image>,
    pub attention: AttentionInput,
    /// Forward flow from frame `t` to `t + 1`; `frames.len() − 1` entries.
    pub flows: Vec<FlowField>,
    pub scores: Option<ClassScores>,
}

/// Summary of one graph-cut solve over a relevant interval.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SolveSummary {
    pub start_frame: usize,
    pub end_frame: usize,
    pub nodes: usize,
    pub spatial_edges: usize,
    pub temporal_edges: usize,
    pub foreground_nodes: usize,
    pub energy: f64,
    pub recomputed_energy: f64,
    pub appearance_fitted: bool,
}

#[derive(Clone, Debug, Default)]
pub struct Intermediates {
    /// Indexed by frame; `None` outside relevant intervals.
    pub partitions: Vec<Option<SuperpixelPartition>>,
    pub inside_outside: Vec<Option<InsideOutsideMap>>,
    /// Foreground and background color models per solve.
    pub gmms: Vec<Option<(GmmModel, GmmModel)>>,
    pub energies: Vec<EnergyModel>,
}

#[derive(Clone, Debug)]
pub struct SegmentResult {
    pub class_index: usize,
    pub class_name: Option<String>,
    pub intervals: Vec<RelevantInterval>,
    pub masks: Vec<SegmentationMask>,
    /// Fused, max-normalized attention at frame resolution.
    pub attention: Vec<AttentionMap>,
    pub solves: Vec<SolveSummary>,
    pub intermediates: Option<Intermediates>,
}

#[derive(Clone, Copy, Debug, Default)]
pub struct SegmentOptions {
    pub keep_intermediates: bool,
}

fn check_input(input: &VideoInput) -> Result<()> {
    let t = input.frames.len();
    if t == 0 {
        return Err(Error::invalid("video has no frames"));
    }
    let (w, h) = (input.frames[0].width, input.frames[0].height);
    for (i, f) in input.frames.iter().enumerate() {
        if f.width != w || f.height != h {
            return Err(Error::invalid(format!("{}x{} differs from {w}x{h}", f.width, f.height)).in_frame(i));
        }
    }
    if input.attention.frame_count() != t {
        return Err(Error::invalid(format!(
            "{} attention entries for {t} frames",
            input.attention.frame_count()
        )));
    }
    if input.flows.len() + 1 != t {
        return Err(Error::invalid(format!(
            "{t} frames need {} flow fields, got {}",
            t - 1,
            input.flows.len()
        )));
    }
    for (i, f) in input.flows.iter().enumerate() {
        if f.width != w || f.height != h {
            return Err(Error::invalid("flow size differs from frame size").in_frame(i));
        }
    }
    if let Some(s) = &input.scores {
        s.validate()?;
        if s.frames.len() != t {
            return Err(Error::invalid(format!("{} score rows for {t} frames", s.frames.len())));
        }
    }
    Ok(())
}

fn resolve_class(cfg: &PipelineConfig, input: &VideoInput) -> Result<(usize, Option<String>)> {
    let class_count = match &input.attention {
        AttentionInput::Features { weights, .. } if weights.dims.len() == 2 => Some(weights.dims[1] as usize),
        _ => None,
    };
    let (index, name) = match (&input.scores, &cfg.class) {
        (Some(s), Some(name)) => {
            let i = s
                .class_index(name)
                .ok_or_else(|| Error::invalid(format!("class `{name}` not in score file")))?;
            (i, Some(name.clone()))
        }
        (Some(s), None) if s.classes.len() == 1 => (0, Some(s.classes[0].clone())),
        (Some(_), None) => return Err(Error::invalid("score file has several classes; set `class`")),
        (None, name) => match class_count {
            Some(1) | None => (0, name.clone()),
            Some(c) => {
                return Err(Error::invalid(format!(
                    "classifier has {c} classes; a score file is needed to name the target"
                )))
            }
        },
    };
    if let Some(c) = class_count {
        if index >= c {
            return Err(Error::invalid(format!("class index {index} outside classifier's {c} classes")));
        }
    }
    Ok((index, name))
}

fn fused_attention(input: &VideoInput, class: usize, t: usize) -> Result<AttentionMap> {
    let (w, h) = (input.frames[t].width, input.frames[t].height);
    match &input.attention {
        AttentionInput::Maps(maps) => fuse_multiscale(&maps[t], w, h),
        AttentionInput::Features { features, weights } => {
            let maps = features[t]
                .iter()
                .map(|f| cam(f, weights, class))
                .collect::<Result<Vec<_>>>()?;
            fuse_multiscale(&maps, w, h)
        }
    }
}

/// Segment one video. Each relevant interval (the whole video when no scores are
/// given) is solved as one spatio-temporal graph; frames outside every interval get
/// empty masks.
pub fn segment_video(input: &VideoInput, cfg: &PipelineConfig, opts: SegmentOptions) -> Result<SegmentResult> {
    cfg.validate()?;
    check_input(input)?;
    let (class_index, class_name) = resolve_class(cfg, input)?;
    let t_count = input.frames.len();
    let (w, h) = (input.frames[0].width, input.frames[0].height);

    let intervals = match &input.scores {
        Some(s) => relevance_filter(&s.column(class_index), class_index, cfg.relevance_threshold, cfg.min_run)?,
        None => vec![RelevantInterval {
            start_frame: 0,
            end_frame: t_count - 1,
            class: class_index,
        }],
    };
    info!("{} relevant interval(s) over {t_count} frames", intervals.len());

    let attention = (0..t_count)
        .map(|t| fused_attention(input, class_index, t).map_err(|e| e.in_frame(t)))
        .collect::<Result<Vec<_>>>()?;

    let mut masks: Vec<SegmentationMask> = (0..t_count).map(|_| SegmentationMask::zeros(w, h)).collect();
    let mut solves = Vec::with_capacity(intervals.len());
    let mut inter = opts.keep_intermediates.then(|| Intermediates {
        partitions: vec![None; t_count],
        inside_outside: vec![None; t_count],
        ..Intermediates::default()
    });

    for iv in &intervals {
        let frames = iv.start_frame..=iv.end_frame;
        let mut partitions = Vec::with_capacity(iv.len());
        let mut a = Vec::new();
        let mut m = Vec::new();
        for t in frames.clone() {
            let at_frame = |e: Error| e.in_frame(t);
            let p = slic(&input.frames[t], cfg.region_size, cfg.compactness).map_err(at_frame)?;
            a.extend(superpixel_attention(&attention[t], &p).map_err(at_frame)?);
            if t_count > 1 {
                // the last frame has no forward flow and reuses the previous pair's
                let flow = &input.flows[t.min(t_count - 2)];
                let boundary = motion_boundary(flow, cfg.boundary_lambda, cfg.boundary_threshold).map_err(at_frame)?;
                let iom = inside_outside(&boundary);
                m.extend(motion_term(&iom, &p).map_err(at_frame)?);
                if let Some(inter) = inter.as_mut() {
                    inter.inside_outside[t] = Some(iom);
                }
            } else {
                m.extend(std::iter::repeat(0.5).take(p.count()));
            }
            partitions.push(p);
        }

        let colors: Vec<[f64; 3]> = partitions
            .iter()
            .flat_map(|p| p.regions.iter().map(|r| r.mean_color))
            .collect();
        let split = cfg.attention_split;
        let fg_w: Vec<f64> = a.iter().map(|&v| if v > split { v } else { 0.0 }).collect();
        let bg_w: Vec<f64> = a.iter().map(|&v| if v > split { 0.0 } else { 1.0 - v }).collect();
        let gmms = if fg_w.iter().any(|&v| v > 0.0) && bg_w.iter().any(|&v| v > 0.0) {
            let fg = fit_weighted_gmm(&colors, &fg_w, cfg.gmm_components, cfg.em_iterations, cfg.seed)?;
            let bg = fit_weighted_gmm(&colors, &bg_w, cfg.gmm_components, cfg.em_iterations, cfg.seed.wrapping_add(1))?;
            Some((fg.model, bg.model))
        } else {
            debug!("frames {}..={}: no fg/bg split, appearance is uninformative", iv.start_frame, iv.end_frame);
            None
        };
        let c: Vec<f64> = match &gmms {
            Some((fg, bg)) => partitions.iter().flat_map(|p| appearance_term(fg, bg, p)).collect(),
            None => vec![0.5; colors.len()],
        };

        let mut links = Vec::with_capacity(iv.len().saturating_sub(1));
        for t in iv.start_frame..iv.end_frame {
            let k = t - iv.start_frame;
            links.push(flow_links(&partitions[k], &partitions[k + 1], &input.flows[t]).map_err(|e| e.in_frame(t))?);
        }
        let graph = build_graph(&partitions, &links)?;
        let model = assemble_energy(&a, &m, &c, &graph, &cfg.energy_params())?;
        let labeling = min_cut(&model)?;
        let recomputed = model.energy(&labeling.labels);
        if (recomputed - labeling.energy).abs() > ENERGY_TOLERANCE {
            return Err(Error::Invariant(format!(
                "frames {}..={}: solver energy {} but labeling energy {}",
                iv.start_frame, iv.end_frame, labeling.energy, recomputed
            )));
        }
        for (k, mask) in labeling_to_masks(&labeling, &partitions)?.into_iter().enumerate() {
            masks[iv.start_frame + k] = mask;
        }
        solves.push(SolveSummary {
            start_frame: iv.start_frame,
            end_frame: iv.end_frame,
            nodes: graph.nodes.len(),
            spatial_edges: graph.spatial.len(),
            temporal_edges: graph.temporal.len(),
            foreground_nodes: labeling.labels.iter().filter(|&&l| l == 1).count(),
            energy: labeling.energy,
            recomputed_energy: recomputed,
            appearance_fitted: gmms.is_some(),
        });
        if let Some(inter) = inter.as_mut() {
            for (k, p) in partitions.into_iter().enumerate() {
                inter.partitions[iv.start_frame + k] = Some(p);
            }
            inter.gmms.push(gmms);
            inter.energies.push(model);
        }
    }

    Ok(SegmentResult {
        class_index,
        class_name,
        intervals,
        masks,
        attention,
        solves,
        intermediates: inter,
    })
}
