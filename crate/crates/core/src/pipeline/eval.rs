use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::raster_io::{GroundTruthMask, GtLabel, SegmentationMask};

/// One predicted/ground-truth mask pair for a frame of a video.
#[derive(Clone, Copy, Debug)]
pub struct EvalSample<'a> {
    pub video: &'a str,
    pub class: &'a str,
    pub pred: &'a SegmentationMask,
    pub gt: &'a GroundTruthMask,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Counts {
    pub tp: u64,
    pub fp: u64,
    #[serde(rename = "fn")]
    pub fn_: u64,
}

impl Counts {
    /// `TP / (TP + FP + FN)`, undefined when the union is empty.
    pub fn iou(&self) -> Option<f64> {
        let union = self.tp + self.fp + self.fn_;
        (union > 0).then(|| self.tp as f64 / union as f64)
    }

    fn add(&mut self, o: &Counts) {
        self.tp += o.tp;
        self.fp += o.fp;
        self.fn_ += o.fn_;
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClassRow {
    pub counts: Counts,
    pub gt_pixels: u64,
    pub iou: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct VideoRow {
    pub video: String,
    pub class: String,
    pub frames: usize,
    pub counts: Counts,
    pub iou: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub per_class: BTreeMap<String, ClassRow>,
    /// Mean IoU over classes with at least one ground-truth pixel.
    pub class_average: Option<f64>,
    /// Mean IoU over videos whose prediction/truth union is non-empty.
    pub video_average: Option<f64>,
    pub videos: Vec<VideoRow>,
}

/// Count agreement between a binary prediction and ground truth, skipping void pixels.
pub fn pair_counts(pred: &SegmentationMask, gt: &GroundTruthMask) -> Result<Counts> {
    if pred.width != gt.width || pred.height != gt.height {
        return Err(Error::invalid(format!(
            "prediction {}x{} vs ground truth {}x{}",
            pred.width, pred.height, gt.width, gt.height
        )));
    }
    let mut c = Counts::default();
    for (&p, &g) in pred.data.iter().zip(&gt.labels) {
        match (p != 0, g) {
            (_, GtLabel::Void) => {}
            (true, GtLabel::Foreground) => c.tp += 1,
            (true, GtLabel::Background) => c.fp += 1,
            (false, GtLabel::Foreground) => c.fn_ += 1,
            (false, GtLabel::Background) => {}
        }
    }
    Ok(c)
}

/// Order-independent mean.
fn mean(vals: impl Iterator<Item = f64>) -> Option<f64> {
    let mut v: Vec<f64> = vals.collect();
    v.sort_by(f64::total_cmp);
    (!v.is_empty()).then(|| v.iter().sum::<f64>() / v.len() as f64)
}

/// Pooled per-class IoU plus class- and video-averaged mIoU.
pub fn evaluate_miou(samples: &[EvalSample<'_>]) -> Result<EvalReport> {
    let mut per_class: BTreeMap<String, ClassRow> = BTreeMap::new();
    let mut per_video: BTreeMap<(&str, &str), (usize, Counts)> = BTreeMap::new();
    for (i, s) in samples.iter().enumerate() {
        let c = pair_counts(s.pred, s.gt).map_err(|e| Error::invalid(format!("pair {i} ({}): {e}", s.video)))?;
        let row = per_class.entry(s.class.to_string()).or_insert(ClassRow {
            counts: Counts::default(),
            gt_pixels: 0,
            iou: None,
        });
        row.counts.add(&c);
        row.gt_pixels += c.tp + c.fn_;
        let v = per_video.entry((s.video, s.class)).or_default();
        v.0 += 1;
        v.1.add(&c);
    }
    for row in per_class.values_mut() {
        row.iou = row.counts.iou();
    }
    let videos: Vec<VideoRow> = per_video
        .into_iter()
        .map(|((video, class), (frames, counts))| VideoRow {
            video: video.to_string(),
            class: class.to_string(),
            frames,
            counts,
            iou: counts.iou(),
        })
        .collect();
    Ok(EvalReport {
        class_average: mean(per_class.values().filter(|r| r.gt_pixels > 0).filter_map(|r| r.iou)),
        video_average: mean(videos.iter().filter_map(|v| v.iou)),
        per_class,
        videos,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn mask(bits: &[u8]) -> SegmentationMask {
        SegmentationMask { width: 3, height: 3, data: bits.to_vec() }
    }

    fn gt(codes: &[u8]) -> GroundTruthMask {
        let labels = codes
            .iter()
            .map(|&c| match c {
                0 => GtLabel::Background,
                2 => GtLabel::Void,
                _ => GtLabel::Foreground,
            })
            .collect();
        GroundTruthMask { width: 3, height: 3, labels }
    }

    fn one(pred: &SegmentationMask, g: &GroundTruthMask) -> EvalReport {
        evaluate_miou(&[EvalSample { video: "v", class: "c", pred, gt: g }]).unwrap()
    }

    #[test]
    fn identical_and_disjoint() {
        let g = gt(&[1, 1, 0, 0, 0, 0, 0, 0, 0]);
        assert_eq!(one(&mask(&[1, 1, 0, 0, 0, 0, 0, 0, 0]), &g).class_average, Some(1.0));
        assert_eq!(one(&mask(&[0, 0, 1, 0, 0, 0, 0, 0, 0]), &g).class_average, Some(0.0));
    }

    #[test]
    fn partial_overlap_with_void() {
        let g = gt(&[1, 1, 1, 1, 0, 0, 0, 0, 2]);
        let r = one(&mask(&[1, 1, 0, 0, 1, 0, 0, 0, 1]), &g);
        assert_eq!(r.per_class["c"].counts, Counts { tp: 2, fp: 1, fn_: 2 });
        assert_eq!(r.class_average, Some(0.4));
        assert_eq!(r.video_average, Some(0.4));
    }

    #[test]
    fn averages_over_classes_and_videos() {
        let g1 = gt(&[1, 1, 0, 0, 0, 0, 0, 0, 0]);
        let p1 = mask(&[1, 1, 0, 0, 0, 0, 0, 0, 0]);
        let g2 = gt(&[1, 1, 1, 1, 0, 0, 0, 0, 0]);
        let p2 = mask(&[1, 1, 0, 0, 0, 0, 0, 0, 0]);
        let empty_gt = gt(&[0; 9]);
        let empty_pred = mask(&[0; 9]);
        let r = evaluate_miou(&[
            EvalSample { video: "a", class: "cat", pred: &p1, gt: &g1 },
            EvalSample { video: "b", class: "cat", pred: &p2, gt: &g2 },
            EvalSample { video: "c", class: "dog", pred: &p2, gt: &g1 },
            EvalSample { video: "d", class: "bus", pred: &empty_pred, gt: &empty_gt },
        ])
        .unwrap();
        // cat pools 4 tp, 0 fp, 2 fn
        assert_eq!(r.per_class["cat"].iou, Some(4.0 / 6.0));
        assert_eq!(r.per_class["dog"].iou, Some(1.0));
        assert_eq!(r.per_class["bus"].iou, None);
        assert_eq!(r.class_average, Some((4.0 / 6.0 + 1.0) / 2.0));
        assert_eq!(r.video_average, Some((1.0 + 0.5 + 1.0) / 3.0));
        assert_eq!(r.videos.len(), 4);
    }

    #[test]
    fn size_mismatch_rejected() {
        let p = SegmentationMask::zeros(2, 2);
        let g = gt(&[0; 9]);
        assert!(evaluate_miou(&[EvalSample { video: "v", class: "c", pred: &p, gt: &g }]).is_err());
    }

    proptest! {
        #[test]
        fn relabeling_classes_is_symmetric(
            data in prop::collection::vec((prop::collection::vec(0u8..2, 9), prop::collection::vec(0u8..3, 9), 0usize..3), 1..8),
        ) {
            let preds: Vec<_> = data.iter().map(|(p, _, _)| mask(p)).collect();
            let gts: Vec<_> = data.iter().map(|(_, g, _)| gt(g)).collect();
            let names = ["a", "b", "c"];
            let renamed = ["z", "y", "x"];
            let run = |names: &[&'static str; 3]| {
                let samples: Vec<EvalSample> = data
                    .iter()
                    .enumerate()
                    .map(|(i, (_, _, c))| EvalSample { video: "v", class: names[*c], pred: &preds[i], gt: &gts[i] })
                    .collect();
                evaluate_miou(&samples).unwrap()
            };
            let r1 = run(&names);
            let r2 = run(&renamed);
            prop_assert_eq!(r1.class_average, r2.class_average);
            prop_assert_eq!(r1.video_average, r2.video_average);
            for k in 0..3 {
                prop_assert_eq!(r1.per_class.get(names[k]), r2.per_class.get(renamed[k]));
            }
            for row in r1.per_class.values() {
                if let Some(iou) = row.iou {
                    prop_assert!((0.0..=1.0).contains(&iou));
                }
            }
        }
    }
}
