use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::appearance::{DEFAULT_COMPONENTS, DEFAULT_EM_ITERS};
use crate::attention::{DEFAULT_MIN_RUN, DEFAULT_RELEVANCE_THRESHOLD, DEFAULT_SCALES};
use crate::error::{Error, Result};
use crate::graphcut::{EnergyParams, DEFAULT_EPS, DEFAULT_LAMBDA_APPEARANCE, DEFAULT_LAMBDA_ATTENTION, DEFAULT_LAMBDA_MOTION};
use crate::motion::{DEFAULT_BOUNDARY_LAMBDA, DEFAULT_BOUNDARY_THRESHOLD};
use crate::retrieval::RetrievalParams;
use crate::superpixel::{DEFAULT_COMPACTNESS, DEFAULT_REGION_SIZE};

/// Every tunable of the pipeline. Missing keys take their defaults; unknown keys are
/// rejected.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    pub region_size: usize,
    pub compactness: f64,

    pub scales: Vec<f64>,
    pub relevance_threshold: f64,
    pub min_run: usize,
    /// Target class name; may be omitted when the score file has a single class.
    pub class: Option<String>,

    pub boundary_lambda: f64,
    pub boundary_threshold: f64,

    pub gmm_components: usize,
    pub em_iterations: usize,
    /// Normalized region attention above which a region is a foreground color sample.
    pub attention_split: f64,
    pub seed: u64,

    pub lambda_attention: f64,
    pub lambda_motion: f64,
    pub lambda_appearance: f64,
    pub eps: f64,
    pub gamma: f64,

    pub flow_block: usize,
    pub flow_radius: usize,

    pub background_threshold: f64,
    pub retrieval: RetrievalParams,

    pub input: Option<PathBuf>,
    pub output: Option<PathBuf>,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            region_size: DEFAULT_REGION_SIZE,
            compactness: DEFAULT_COMPACTNESS,
            scales: DEFAULT_SCALES.to_vec(),
            relevance_threshold: DEFAULT_RELEVANCE_THRESHOLD,
            min_run: DEFAULT_MIN_RUN,
            class: None,
            boundary_lambda: DEFAULT_BOUNDARY_LAMBDA,
            boundary_threshold: DEFAULT_BOUNDARY_THRESHOLD,
            gmm_components: DEFAULT_COMPONENTS,
            em_iterations: DEFAULT_EM_ITERS,
            attention_split: 0.5,
            seed: 0,
            lambda_attention: DEFAULT_LAMBDA_ATTENTION,
            lambda_motion: DEFAULT_LAMBDA_MOTION,
            lambda_appearance: DEFAULT_LAMBDA_APPEARANCE,
            eps: DEFAULT_EPS,
            gamma: 1.0,
            flow_block: 8,
            flow_radius: 4,
            background_threshold: 0.5,
            retrieval: RetrievalParams::default(),
            input: None,
            output: None,
        }
    }
}

impl PipelineConfig {
    pub fn energy_params(&self) -> EnergyParams {
        EnergyParams {
            lambda_a: self.lambda_attention,
            lambda_m: self.lambda_motion,
            lambda_c: self.lambda_appearance,
            eps: self.eps,
            gamma: self.gamma,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let fail = |msg: String| Err(Error::invalid(msg));
        let finite_nonneg = |v: f64| v.is_finite() && v >= 0.0;
        if self.region_size < 2 {
            return fail(format!("region_size {} must be >= 2", self.region_size));
        }
        if !(self.compactness > 0.0 && self.compactness.is_finite()) {
            return fail(format!("compactness {} must be > 0", self.compactness));
        }
        if self.scales.is_empty() || self.scales.iter().any(|&s| !(s > 0.0 && s.is_finite())) {
            return fail("scales must be a non-empty list of positive numbers".into());
        }
        if !(0.0..=1.0).contains(&self.relevance_threshold) {
            return fail(format!("relevance_threshold {} outside [0, 1]", self.relevance_threshold));
        }
        if self.min_run == 0 {
            return fail("min_run must be >= 1".into());
        }
        if !(self.boundary_lambda > 0.0 && self.boundary_lambda.is_finite()) {
            return fail(format!("boundary_lambda {} must be > 0", self.boundary_lambda));
        }
        if !(self.boundary_threshold > 0.0 && self.boundary_threshold.is_finite()) {
            return fail(format!("boundary_threshold {} must be > 0", self.boundary_threshold));
        }
        if self.gmm_components == 0 {
            return fail("gmm_components must be >= 1".into());
        }
        if !(0.0..1.0).contains(&self.attention_split) {
            return fail(format!("attention_split {} outside [0, 1)", self.attention_split));
        }
        for (name, v) in [
            ("lambda_attention", self.lambda_attention),
            ("lambda_motion", self.lambda_motion),
            ("lambda_appearance", self.lambda_appearance),
            ("gamma", self.gamma),
        ] {
            if !finite_nonneg(v) {
                return fail(format!("{name} {v} must be finite and >= 0"));
            }
        }
        if !(self.eps > 0.0 && self.eps < 0.5) {
            return fail(format!("eps {} must be in (0, 0.5)", self.eps));
        }
        if self.flow_block < 4 || self.flow_radius == 0 {
            return fail("flow_block must be >= 4 and flow_radius >= 1".into());
        }
        if !(0.0..=1.0).contains(&self.background_threshold) {
            return fail(format!("background_threshold {} outside [0, 1]", self.background_threshold));
        }
        let r = &self.retrieval;
        if !(0.0..=1.0).contains(&r.thumbnail_threshold) || !(0.0..=1.0).contains(&r.keyframe_threshold) {
            return fail("retrieval thresholds must lie in [0, 1]".into());
        }
        if !finite_nonneg(r.window_sec) {
            return fail(format!("retrieval window_sec {} must be >= 0", r.window_sec));
        }
        Ok(())
    }

    /// Parse a config document. Lines may carry `#` comments outside of strings.
    pub fn from_json_str(text: &str) -> Result<Self> {
        let value: serde_json::Value = serde_json::from_str(&strip_comments(text))?;
        Self::from_value(value)
    }

    pub fn from_value(value: serde_json::Value) -> Result<Self> {
        let cfg: PipelineConfig = serde_json::from_value(value).map_err(|e| Error::invalid(format!("config: {e}")))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json_str(&text).map_err(|e| e.in_file(path))
    }

    /// Apply `key=value` overrides. Dotted keys reach nested tables
    /// (`retrieval.window_sec=3`); values parse as JSON, falling back to a string.
    pub fn with_overrides<S: AsRef<str>>(&self, overrides: &[S]) -> Result<Self> {
        let mut value = serde_json::to_value(self)?;
        for item in overrides {
            let item = item.as_ref();
            let (key, raw) = item
                .split_once('=')
                .ok_or_else(|| Error::invalid(format!("override `{item}` is not key=value")))?;
            let parsed = serde_json::from_str(raw).unwrap_or_else(|_| serde_json::Value::String(raw.to_string()));
            let mut slot = &mut value;
            for part in key.split('.') {
                slot = slot
                    .as_object_mut()
                    .and_then(|m| m.get_mut(part))
                    .ok_or_else(|| Error::invalid(format!("unknown config key `{key}`")))?;
            }
            *slot = parsed;
        }
        Self::from_value(value)
    }
}

/// Remove `#` comments that appear outside JSON strings.
pub fn strip_comments(text: &str) -> String {
    let mut out = String::with_capacity(text.len());
    for line in text.lines() {
        let mut in_string = false;
        let mut escaped = false;
        let mut end = line.len();
        for (i, ch) in line.char_indices() {
            if in_string {
                match ch {
                    _ if escaped => escaped = false,
                    '\\' => escaped = true,
                    '"' => in_string = false,
                    _ => {}
                }
            } else if ch == '"' {
                in_string = true;
            } else if ch == '#' {
                end = i;
                break;
            }
        }
        out.push_str(&line[..end]);
        out.push('\n');
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_document_gives_defaults() {
        assert_eq!(PipelineConfig::from_json_str("{}").unwrap(), PipelineConfig::default());
    }

    #[test]
    fn comments_are_stripped_outside_strings() {
        let text = "{\n  \"gamma\": 2.0, # tuned\n  \"class\": \"a#b\" # keep the hash\n}\n";
        let cfg = PipelineConfig::from_json_str(text).unwrap();
        assert_eq!(cfg.gamma, 2.0);
        assert_eq!(cfg.class.as_deref(), Some("a#b"));
    }

    #[test]
    fn unknown_keys_rejected() {
        assert!(PipelineConfig::from_json_str("{\"gama\": 1}").is_err());
        assert!(PipelineConfig::from_json_str("{\"retrieval\": {\"window\": 1}}").is_err());
    }

    #[test]
    fn invalid_values_rejected() {
        for doc in [
            "{\"region_size\": 1}",
            "{\"eps\": 0.7}",
            "{\"scales\": []}",
            "{\"min_run\": 0}",
            "{\"lambda_motion\": -1}",
        ] {
            assert!(PipelineConfig::from_json_str(doc).is_err(), "{doc}");
        }
    }

    #[test]
    fn overrides_apply() {
        let cfg = PipelineConfig::default()
            .with_overrides(&["seed=7", "retrieval.window_sec=3.5", "class=cat"])
            .unwrap();
        assert_eq!(cfg.seed, 7);
        assert_eq!(cfg.retrieval.window_sec, 3.5);
        assert_eq!(cfg.class.as_deref(), Some("cat"));
        assert!(PipelineConfig::default().with_overrides(&["nope=1"]).is_err());
        assert!(PipelineConfig::default().with_overrides(&["seed"]).is_err());
    }

    #[test]
    fn shipped_default_config_matches_defaults() {
        let text = include_str!("../../../../config/default.json");
        assert_eq!(PipelineConfig::from_json_str(text).unwrap(), PipelineConfig::default());
    }
}
