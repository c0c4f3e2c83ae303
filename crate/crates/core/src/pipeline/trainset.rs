use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::attention::AttentionMap;
use crate::error::{Error, Result};
use crate::raster_io::{write_bytes, write_mask, write_tensor, SegmentationMask};

/// An attention map and the mask it should supervise, for one frame.
#[derive(Clone, Debug)]
pub struct TrainPair {
    pub attention: AttentionMap,
    pub mask: SegmentationMask,
    pub class: String,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct TrainEntry {
    /// Paths relative to the manifest's directory.
    pub attention: String,
    pub mask: String,
    pub class: String,
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct TrainManifest {
    pub pairs: Vec<TrainEntry>,
}

pub const TRAIN_MANIFEST: &str = "manifest.json";

/// Write every pair as `pair_NNNNNN_att.tnsr` + `pair_NNNNNN_mask.pgm` under
/// `out_dir`, and a `manifest.json` listing them in input order.
pub fn export_trainset(pairs: &[TrainPair], out_dir: &Path) -> Result<TrainManifest> {
    let mut manifest = TrainManifest::default();
    for (i, p) in pairs.iter().enumerate() {
        if p.attention.width != p.mask.width || p.attention.height != p.mask.height {
            return Err(Error::invalid(format!("pair {i}: attention and mask sizes differ")));
        }
        let entry = TrainEntry {
            attention: format!("pair_{i:06}_att.tnsr"),
            mask: format!("pair_{i:06}_mask.pgm"),
            class: p.class.clone(),
        };
        write_tensor(out_dir.join(&entry.attention), &p.attention.to_tensor())?;
        write_mask(out_dir.join(&entry.mask), &p.mask)?;
        manifest.pairs.push(entry);
    }
    let json = serde_json::to_vec_pretty(&manifest)?;
    write_bytes(&out_dir.join(TRAIN_MANIFEST), &json)?;
    Ok(manifest)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::raster_io::{read_mask, read_tensor};

    fn pair(v: f32, class: &str) -> TrainPair {
        TrainPair {
            attention: AttentionMap::new(3, 2, vec![v; 6]).unwrap(),
            mask: SegmentationMask { width: 3, height: 2, data: vec![1, 0, 1, 0, 1, 0] },
            class: class.into(),
        }
    }

    #[test]
    fn empty_export_writes_empty_manifest() {
        let dir = tempfile::tempdir().unwrap();
        let m = export_trainset(&[], dir.path()).unwrap();
        assert!(m.pairs.is_empty());
        let text = std::fs::read_to_string(dir.path().join(TRAIN_MANIFEST)).unwrap();
        assert_eq!(serde_json::from_str::<TrainManifest>(&text).unwrap(), m);
    }

    #[test]
    fn pairs_round_trip_in_order() {
        let dir = tempfile::tempdir().unwrap();
        let pairs = vec![pair(0.25, "cat"), pair(0.5, "dog"), pair(1.0, "cat")];
        let m = export_trainset(&pairs, dir.path()).unwrap();
        assert_eq!(m.pairs.len(), 3);
        for (e, p) in m.pairs.iter().zip(&pairs) {
            assert_eq!(e.class, p.class);
            assert_eq!(read_tensor(dir.path().join(&e.attention)).unwrap(), p.attention.to_tensor());
            assert_eq!(read_mask(dir.path().join(&e.mask)).unwrap(), p.mask);
        }
        assert_eq!(m.pairs[1].attention, "pair_000001_att.tnsr");
    }

    #[test]
    fn size_mismatch_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let mut p = pair(0.5, "cat");
        p.mask = SegmentationMask::zeros(2, 2);
        assert!(export_trainset(&[p], dir.path()).is_err());
    }
}
