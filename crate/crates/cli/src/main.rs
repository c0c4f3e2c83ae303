//! Command-line front end for the `vidmask` library.
//!
//! Exit codes: 0 on success, 2 on invalid input (including unreadable or unwritable
//! files), 3 when an internal invariant check fails.

use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

use clap::{Args, Parser, Subcommand};
use log::{error, info};

use vidmask::attention::{relevance_filter, AttentionMap, ClassScores};
use vidmask::pipeline::layout::{
    collect_train_pairs, evaluate_manifest, read_json, run_segment, write_json, DumpOptions, EvalManifest, RunOptions,
    SegmentRecord,
};
use vidmask::pipeline::{export_trainset, fuse_labels, PipelineConfig};
use vidmask::raster_io::{read_tensor, write_image, Image};
use vidmask::retrieval::{retrieval_filter, CorpusManifest};
use vidmask::synthetic::{generate, write_clip, SyntheticParams};
use vidmask::{Error, Result};

#[derive(Parser)]
#[command(name = "vidmask", version, about = "Weakly supervised video object segmentation by attention-guided graph-cut")]
struct Cli {
    /// Increase log verbosity (-v info, -vv debug). RUST_LOG overrides.
    #[arg(short, long, action = clap::ArgAction::Count, global = true)]
    verbose: u8,

    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct ConfigArgs {
    /// JSON config file (`#` comments allowed). Defaults apply when omitted.
    #[arg(long)]
    config: Option<PathBuf>,

    /// Override a config key, e.g. `--set gamma=2` or `--set retrieval.window_sec=3`.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    overrides: Vec<String>,
}

impl ConfigArgs {
    fn load(&self) -> Result<PipelineConfig> {
        let base = match &self.config {
            Some(p) => PipelineConfig::load(p)?,
            None => PipelineConfig::default(),
        };
        base.with_overrides(&self.overrides)
    }
}

#[derive(Subcommand)]
enum Command {
    /// Segment one or more video directories into per-frame foreground masks.
    Segment {
        /// Video directory (repeatable). Falls back to the config's `input`.
        #[arg(long = "video")]
        videos: Vec<PathBuf>,
        /// Output root; each video is written to `<out>/<video dir name>/`. Falls back to
        /// the config's `output`.
        #[arg(long)]
        out: Option<PathBuf>,
        #[command(flatten)]
        config: ConfigArgs,
        /// Estimate missing flow files by block matching instead of failing.
        #[arg(long)]
        allow_estimated_flow: bool,
        /// Write superpixel partitions, inside-outside maps and color models.
        #[arg(long)]
        dump_intermediates: bool,
        /// Write each assembled energy model as JSON.
        #[arg(long)]
        dump_energy: bool,
        /// Number of videos processed concurrently.
        #[arg(long, default_value_t = 1)]
        jobs: usize,
    },
    /// Find relevant frame intervals from per-frame class scores.
    Filter {
        /// Score file (`{"classes": [...], "frames": [[...], ...]}`).
        #[arg(long)]
        scores: PathBuf,
        /// Class name; optional when the score file has one class.
        #[arg(long)]
        class: Option<String>,
        #[command(flatten)]
        config: ConfigArgs,
        /// Output JSON; stdout when omitted.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Simulate web-video retrieval filtering over a corpus manifest.
    RetrieveSim {
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
        #[command(flatten)]
        config: ConfigArgs,
    },
    /// Fuse per-class probability maps into one label map (P5).
    Fuse {
        /// `CLASS_ID=path.tnsr` (repeatable); ids in 1..=254.
        #[arg(long = "map", value_name = "ID=PATH", required = true)]
        maps: Vec<String>,
        /// Pixels whose best probability is below this become background (0).
        #[arg(long)]
        bg_threshold: Option<f64>,
        #[command(flatten)]
        config: ConfigArgs,
        #[arg(long)]
        out: PathBuf,
    },
    /// Compute mIoU of predicted masks against ground truth.
    Eval {
        /// Pair manifest (`{"pairs": [{"video", "class", "pred", "gt"}]}`).
        #[arg(long, conflicts_with_all = ["pred", "gt"])]
        pairs: Option<PathBuf>,
        /// Directory of `mask_NNNNNN.pgm` predictions.
        #[arg(long, requires = "gt")]
        pred: Option<PathBuf>,
        /// Directory of `gt_NNNNNN.pgm` ground truth.
        #[arg(long, requires = "pred")]
        gt: Option<PathBuf>,
        /// Class name used with --pred/--gt.
        #[arg(long, default_value = "object")]
        class: String,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Export attention/mask training pairs from segmentation outputs.
    ExportTrainset {
        /// Segmentation output directory (repeatable).
        #[arg(long = "segmented")]
        segmented: Vec<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Write the synthetic test clip (frames, exact flow, attention, scores, ground truth).
    GenSynthetic {
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 30)]
        frames: usize,
        #[arg(long, default_value_t = 7)]
        seed: u64,
        /// Attention scales are taken from this config's `scales`.
        #[command(flatten)]
        config: ConfigArgs,
    },
}

fn emit_json(out: Option<&Path>, value: serde_json::Value) -> Result<()> {
    match out {
        Some(p) => write_json(p, &value),
        None => {
            println!("{}", serde_json::to_string_pretty(&value)?);
            Ok(())
        }
    }
}

fn video_name(dir: &Path) -> String {
    dir.file_name()
        .map(|n| n.to_string_lossy().into_owned())
        .unwrap_or_else(|| "video".into())
}

/// Run `work` over `items` on at most `jobs` threads, keeping results in input order.
fn run_pool<T: Sync, R: Send>(items: &[T], jobs: usize, work: impl Fn(&T) -> R + Sync) -> Vec<R> {
    let next = AtomicUsize::new(0);
    let slots: Vec<Mutex<Option<R>>> = items.iter().map(|_| Mutex::new(None)).collect();
    std::thread::scope(|s| {
        for _ in 0..jobs.clamp(1, items.len().max(1)) {
            s.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::Relaxed);
                if i >= items.len() {
                    break;
                }
                let r = work(&items[i]);
                *slots[i].lock().unwrap() = Some(r);
            });
        }
    });
    slots
        .into_iter()
        .map(|m| m.into_inner().unwrap().expect("every item processed"))
        .collect()
}

fn segment(
    videos: Vec<PathBuf>,
    out: Option<PathBuf>,
    cfg: PipelineConfig,
    opts: RunOptions,
    jobs: usize,
) -> Result<()> {
    let videos = if videos.is_empty() {
        vec![cfg
            .input
            .clone()
            .ok_or_else(|| Error::InvalidInput("no --video given and config has no `input`".into()))?]
    } else {
        videos
    };
    let out = out
        .or_else(|| cfg.output.clone())
        .ok_or_else(|| Error::InvalidInput("no --out given and config has no `output`".into()))?;
    let results = run_pool(&videos, jobs, |v| {
        let dest = out.join(video_name(v));
        let r = run_segment(v, &dest, &cfg, opts);
        if let Ok(rec) = &r {
            let fg: usize = rec.solves.iter().map(|s| s.foreground_nodes).sum();
            info!("{}: {} solve(s), {fg} foreground superpixels", v.display(), rec.solves.len());
        }
        r
    });
    let mut first_err = None;
    let mut records: Vec<SegmentRecord> = Vec::new();
    for (v, r) in videos.iter().zip(results) {
        match r {
            Ok(rec) => records.push(rec),
            Err(e) => {
                error!("{}: {e}", v.display());
                first_err.get_or_insert(e);
            }
        }
    }
    for rec in &records {
        println!(
            "{}: {} frames, {} interval(s), {} solve(s)",
            rec.video,
            rec.frames,
            rec.intervals.len(),
            rec.solves.len()
        );
    }
    first_err.map_or(Ok(()), Err)
}

fn parse_map_arg(s: &str) -> Result<(u8, PathBuf)> {
    let (id, path) = s
        .split_once('=')
        .ok_or_else(|| Error::InvalidInput(format!("--map `{s}` is not ID=PATH")))?;
    let id: u8 = id
        .parse()
        .map_err(|_| Error::InvalidInput(format!("--map `{s}`: class id must be 1..=254")))?;
    Ok((id, PathBuf::from(path)))
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Segment {
            videos,
            out,
            config,
            allow_estimated_flow,
            dump_intermediates,
            dump_energy,
            jobs,
        } => {
            let opts = RunOptions {
                allow_estimated_flow,
                dumps: DumpOptions {
                    intermediates: dump_intermediates,
                    energy: dump_energy,
                },
            };
            segment(videos, out, config.load()?, opts, jobs)
        }
        Command::Filter {
            scores,
            class,
            config,
            out,
        } => {
            let cfg = config.load()?;
            let s: ClassScores = read_json(&scores)?;
            s.validate().map_err(|e| e.in_file(&scores))?;
            let index = match class.or(cfg.class.clone()) {
                Some(name) => s
                    .class_index(&name)
                    .ok_or_else(|| Error::InvalidInput(format!("class `{name}` not in score file")))?,
                None if s.classes.len() == 1 => 0,
                None => return Err(Error::InvalidInput("score file has several classes; pass --class".into())),
            };
            let intervals = relevance_filter(&s.column(index), index, cfg.relevance_threshold, cfg.min_run)?;
            emit_json(out.as_deref(), serde_json::to_value(intervals)?)
        }
        Command::RetrieveSim { manifest, out, config } => {
            let cfg = config.load()?;
            let m: CorpusManifest = read_json(&manifest)?;
            let clips = retrieval_filter(&m, &cfg.retrieval).map_err(|e| e.in_file(&manifest))?;
            emit_json(out.as_deref(), serde_json::to_value(clips)?)
        }
        Command::Fuse {
            maps,
            bg_threshold,
            config,
            out,
        } => {
            let cfg = config.load()?;
            let mut ids = Vec::new();
            let mut probs = Vec::new();
            for m in &maps {
                let (id, path) = parse_map_arg(m)?;
                ids.push(id);
                probs.push(AttentionMap::from_tensor(&read_tensor(&path)?).map_err(|e| e.in_file(&path))?);
            }
            let labels = fuse_labels(&probs, &ids, bg_threshold.unwrap_or(cfg.background_threshold))?;
            let img = Image::new(labels.width, labels.height, 1, labels.data)?;
            write_image(&out, &img)
        }
        Command::Eval {
            pairs,
            pred,
            gt,
            class,
            out,
        } => {
            let manifest = match (pairs, pred, gt) {
                (Some(p), _, _) => EvalManifest::load(&p)?,
                (None, Some(pred), Some(gt)) => EvalManifest::from_dirs(&pred, &gt, &video_name(&pred), &class),
                _ => return Err(Error::InvalidInput("pass --pairs or both --pred and --gt".into())),
            };
            if manifest.pairs.is_empty() {
                return Err(Error::InvalidInput("no prediction/ground-truth pairs found".into()));
            }
            let report = evaluate_manifest(&manifest)?;
            let fmt = |v: Option<f64>| v.map_or("n/a".to_string(), |x| format!("{x:.4}"));
            eprintln!(
                "class-average mIoU {}  video-average mIoU {}",
                fmt(report.class_average),
                fmt(report.video_average)
            );
            emit_json(out.as_deref(), serde_json::to_value(report)?)
        }
        Command::ExportTrainset { segmented, out } => {
            let mut pairs = Vec::new();
            for dir in &segmented {
                pairs.extend(collect_train_pairs(dir)?);
            }
            let manifest = export_trainset(&pairs, &out)?;
            println!("exported {} pair(s) to {}", manifest.pairs.len(), out.display());
            Ok(())
        }
        Command::GenSynthetic {
            out,
            frames,
            seed,
            config,
        } => {
            let cfg = config.load()?;
            let params = SyntheticParams {
                frames,
                seed,
                scales: cfg.scales.clone(),
                ..SyntheticParams::default()
            };
            if frames == 0 {
                return Err(Error::InvalidInput("--frames must be >= 1".into()));
            }
            write_clip(&out, &generate(&params))?;
            println!("wrote {frames} synthetic frames to {}", out.display());
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            if e.is_invariant() {
                ExitCode::from(3)
            } else {
                ExitCode::from(2)
            }
        }
    }
}
