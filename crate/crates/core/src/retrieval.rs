//! Web-video retrieval filtering over a local corpus manifest.
//!
//! Videos pass a thumbnail-score gate; surviving videos keep their best key-frames,
//! and each kept key-frame contributes a window of frames around it. Overlapping
//! windows are merged.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct KeyFrame {
    /// Seconds from the start of the video.
    pub t: f64,
    pub score: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CandidateVideo {
    pub id: String,
    pub class: String,
    pub thumbnail_score: f64,
    pub keyframes: Vec<KeyFrame>,
    pub frame_rate: f64,
    pub duration: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CorpusManifest {
    pub videos: Vec<CandidateVideo>,
}

impl CorpusManifest {
    pub fn validate(&self) -> Result<()> {
        for v in &self.videos {
            let bad = |what: &str| Error::invalid(format!("video {}: {what}", v.id));
            if !(v.duration.is_finite() && v.duration >= 0.0) {
                return Err(bad("duration must be finite and >= 0"));
            }
            if !(v.frame_rate.is_finite() && v.frame_rate > 0.0) {
                return Err(bad("frame_rate must be finite and > 0"));
            }
            if !v.thumbnail_score.is_finite() {
                return Err(bad("thumbnail score is not finite"));
            }
            for k in &v.keyframes {
                if !k.score.is_finite() {
                    return Err(bad("key-frame score is not finite"));
                }
                if !(k.t.is_finite() && (0.0..=v.duration).contains(&k.t)) {
                    return Err(bad(&format!("key-frame at {} s outside [0, duration]", k.t)));
                }
            }
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RetrievalParams {
    pub thumbnail_threshold: f64,
    pub keyframe_threshold: f64,
    pub max_keyframes: usize,
    pub window_sec: f64,
    pub max_videos_per_class: usize,
}

impl Default for RetrievalParams {
    fn default() -> Self {
        RetrievalParams {
            thumbnail_threshold: 0.8,
            keyframe_threshold: 0.8,
            max_keyframes: 15,
            window_sec: 2.0,
            max_videos_per_class: 300,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClipSelection {
    pub video_id: String,
    pub class: String,
    /// Disjoint `(start_sec, end_sec)` windows, sorted.
    pub windows: Vec<(f64, f64)>,
    pub selected_keyframes: usize,
}

/// Merge closed intervals that overlap or touch.
pub fn merge_windows(mut windows: Vec<(f64, f64)>) -> Vec<(f64, f64)> {
    windows.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.total_cmp(&b.1)));
    let mut out: Vec<(f64, f64)> = Vec::with_capacity(windows.len());
    for (s, e) in windows {
        match out.last_mut() {
            Some(last) if s <= last.1 => last.1 = last.1.max(e),
            _ => out.push((s, e)),
        }
    }
    out
}

fn select_video(v: &CandidateVideo, params: &RetrievalParams) -> Option<ClipSelection> {
    let mut keys: Vec<&KeyFrame> = v
        .keyframes
        .iter()
        .filter(|k| k.score > params.keyframe_threshold)
        .collect();
    keys.sort_by(|a, b| b.score.total_cmp(&a.score).then(a.t.total_cmp(&b.t)));
    keys.truncate(params.max_keyframes);
    if keys.is_empty() {
        return None;
    }
    let windows = keys
        .iter()
        .map(|k| {
            (
                (k.t - params.window_sec).max(0.0),
                (k.t + params.window_sec).min(v.duration),
            )
        })
        .collect();
    Some(ClipSelection {
        video_id: v.id.clone(),
        class: v.class.clone(),
        windows: merge_windows(windows),
        selected_keyframes: keys.len(),
    })
}

/// Select clips from a manifest.
///
/// Videos with thumbnail score `<= thumbnail_threshold` are dropped, as are videos
/// left with no key-frame scoring above `keyframe_threshold`. Each class keeps at
/// most `max_videos_per_class` videos, highest thumbnail score first (ties by id).
/// Output is ordered by class name, then by that same ranking.
pub fn retrieval_filter(m: &CorpusManifest, params: &RetrievalParams) -> Result<Vec<ClipSelection>> {
    m.validate()?;
    let mut by_class: BTreeMap<&str, Vec<&CandidateVideo>> = BTreeMap::new();
    for v in &m.videos {
        if v.thumbnail_score > params.thumbnail_threshold {
            by_class.entry(v.class.as_str()).or_default().push(v);
        }
    }
    let mut out = Vec::new();
    for (_, mut videos) in by_class {
        videos.sort_by(|a, b| {
            b.thumbnail_score
                .total_cmp(&a.thumbnail_score)
                .then_with(|| a.id.cmp(&b.id))
        });
        out.extend(
            videos
                .into_iter()
                .filter_map(|v| select_video(v, params))
                .take(params.max_videos_per_class),
        );
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn video(id: &str, class: &str, thumb: f64, keys: &[(f64, f64)], duration: f64) -> CandidateVideo {
        CandidateVideo {
            id: id.into(),
            class: class.into(),
            thumbnail_score: thumb,
            keyframes: keys.iter().map(|&(t, score)| KeyFrame { t, score }).collect(),
            frame_rate: 30.0,
            duration,
        }
    }

    fn run(videos: Vec<CandidateVideo>) -> Vec<ClipSelection> {
        retrieval_filter(&CorpusManifest { videos }, &RetrievalParams::default()).unwrap()
    }

    #[test]
    fn thumbnail_gate_is_strict() {
        assert!(run(vec![video("a", "cat", 0.79, &[(10.0, 0.9)], 60.0)]).is_empty());
        assert!(run(vec![video("a", "cat", 0.8, &[(10.0, 0.9)], 60.0)]).is_empty());
        assert_eq!(run(vec![video("a", "cat", 0.81, &[(10.0, 0.9)], 60.0)]).len(), 1);
    }

    #[test]
    fn single_keyframe_window() {
        let out = run(vec![video("a", "cat", 0.9, &[(10.0, 0.9)], 60.0)]);
        assert_eq!(out[0].windows, vec![(8.0, 12.0)]);
        assert_eq!(out[0].selected_keyframes, 1);
    }

    #[test]
    fn nearby_keyframes_merge() {
        let out = run(vec![video("a", "cat", 0.9, &[(11.0, 0.95), (10.0, 0.9)], 60.0)]);
        assert_eq!(out[0].windows, vec![(8.0, 13.0)]);
    }

    #[test]
    fn windows_clip_to_duration() {
        let out = run(vec![video("a", "cat", 0.9, &[(0.5, 0.9), (9.0, 0.85)], 10.0)]);
        assert_eq!(out[0].windows, vec![(0.0, 2.5), (7.0, 10.0)]);
    }

    #[test]
    fn keeps_top_fifteen_keyframes_with_time_tiebreak() {
        // 20 key-frames, all tied on score, 10 s apart: the 15 earliest win
        let keys: Vec<(f64, f64)> = (0..20).map(|i| (5.0 + 10.0 * i as f64, 0.9)).collect();
        let out = run(vec![video("a", "cat", 0.9, &keys, 300.0)]);
        assert_eq!(out[0].selected_keyframes, 15);
        assert_eq!(out[0].windows.len(), 15);
        assert_eq!(out[0].windows.last(), Some(&(143.0, 147.0)));
    }

    #[test]
    fn per_class_cap_by_thumbnail() {
        let params = RetrievalParams {
            max_videos_per_class: 2,
            ..RetrievalParams::default()
        };
        let videos = vec![
            video("a", "cat", 0.85, &[(1.0, 0.9)], 5.0),
            video("b", "cat", 0.95, &[(1.0, 0.9)], 5.0),
            video("c", "cat", 0.90, &[(1.0, 0.9)], 5.0),
            video("d", "dog", 0.81, &[(1.0, 0.9)], 5.0),
        ];
        let out = retrieval_filter(&CorpusManifest { videos }, &params).unwrap();
        let ids: Vec<&str> = out.iter().map(|c| c.video_id.as_str()).collect();
        assert_eq!(ids, vec!["b", "c", "d"]);
    }

    #[test]
    fn invalid_manifest_rejected() {
        let v = video("a", "cat", 0.9, &[(70.0, 0.9)], 60.0);
        assert!(retrieval_filter(&CorpusManifest { videos: vec![v] }, &RetrievalParams::default()).is_err());
    }

    fn arb_video() -> impl Strategy<Value = CandidateVideo> {
        (
            0u32..1000,
            prop::sample::select(vec!["cat", "dog", "bus"]),
            0.0f64..1.0,
            prop::collection::vec((0.0f64..1.0, 0.0f64..1.0), 0..25),
        )
            .prop_map(|(id, class, thumb, keys)| {
                let keys: Vec<(f64, f64)> = keys.iter().map(|&(t, s)| (t * 100.0, s)).collect();
                video(&format!("v{id}"), class, thumb, &keys, 100.0)
            })
    }

    proptest! {
        #[test]
        fn filter_invariants(videos in prop::collection::vec(arb_video(), 0..40), thr in 0.0f64..1.0) {
            let m = CorpusManifest { videos };
            let params = RetrievalParams { thumbnail_threshold: thr, ..RetrievalParams::default() };
            let out = retrieval_filter(&m, &params).unwrap();
            for c in &out {
                prop_assert!(c.selected_keyframes <= 15);
                for w in c.windows.windows(2) {
                    prop_assert!(w[0].1 < w[1].0);
                }
                for w in &c.windows {
                    prop_assert!(0.0 <= w.0 && w.0 <= w.1 && w.1 <= 100.0);
                }
            }
            let higher = RetrievalParams { thumbnail_threshold: (thr + 0.1).min(1.0), ..params };
            let fewer = retrieval_filter(&m, &higher).unwrap();
            let before: std::collections::BTreeSet<_> = out.iter().map(|c| c.video_id.clone()).collect();
            prop_assert!(fewer.iter().all(|c| before.contains(&c.video_id)));
        }
    }
}
