use crate::attention::AttentionMap;
use crate::error::{Error, Result};

/// Label written for pixels where no class is confident enough.
pub const BACKGROUND: u8 = 0;

/// Per-pixel class labels; `BACKGROUND` or one of the fused class ids.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct LabelMap {
    pub width: usize,
    pub height: usize,
    pub data: Vec<u8>,
}

/// Pixel-wise argmax over per-class foreground probabilities.
///
/// A pixel is background when every probability is below `bg_threshold`. Argmax ties
/// go to the lowest class id. Class ids must be distinct and in `1..=254`.
pub fn fuse_labels(maps: &[AttentionMap], class_ids: &[u8], bg_threshold: f64) -> Result<LabelMap> {
    if maps.is_empty() {
        return Err(Error::invalid("no class maps to fuse"));
    }
    if maps.len() != class_ids.len() {
        return Err(Error::invalid(format!("{} maps but {} class ids", maps.len(), class_ids.len())));
    }
    let mut seen = [false; 256];
    for &id in class_ids {
        if id == BACKGROUND || id == 255 {
            return Err(Error::invalid(format!("class id {id} is reserved")));
        }
        if std::mem::replace(&mut seen[id as usize], true) {
            return Err(Error::invalid(format!("class id {id} given twice")));
        }
    }
    let (w, h) = (maps[0].width, maps[0].height);
    for (m, id) in maps.iter().zip(class_ids) {
        if m.width != w || m.height != h {
            return Err(Error::invalid(format!("map for class {id} has a different size")));
        }
        if m.values.iter().any(|v| !(0.0..=1.0).contains(v)) {
            return Err(Error::invalid(format!("map for class {id} has values outside [0, 1]")));
        }
    }

    // visit classes by ascending id so a strict comparison keeps the lowest on ties
    let mut order: Vec<usize> = (0..maps.len()).collect();
    order.sort_by_key(|&k| class_ids[k]);
    let data = (0..w * h)
        .map(|i| {
            let mut best = order[0];
            for &k in &order[1..] {
                if maps[k].values[i] > maps[best].values[i] {
                    best = k;
                }
            }
            if (maps[best].values[i] as f64) < bg_threshold {
                BACKGROUND
            } else {
                class_ids[best]
            }
        })
        .collect();
    Ok(LabelMap { width: w, height: h, data })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn constant(v: f32) -> AttentionMap {
        AttentionMap::new(2, 2, vec![v; 4]).unwrap()
    }

    #[test]
    fn single_confident_class() {
        assert_eq!(fuse_labels(&[constant(0.9)], &[3], 0.5).unwrap().data, vec![3; 4]);
    }

    #[test]
    fn all_zero_is_background() {
        assert_eq!(fuse_labels(&[constant(0.0), constant(0.0)], &[1, 2], 0.5).unwrap().data, vec![0; 4]);
    }

    #[test]
    fn argmax_and_ties() {
        let out = fuse_labels(&[constant(0.6), constant(0.4)], &[1, 2], 0.5).unwrap();
        assert_eq!(out.data, vec![1; 4]);
        let out = fuse_labels(&[constant(0.7), constant(0.7)], &[9, 4], 0.5).unwrap();
        assert_eq!(out.data, vec![4; 4]);
        // at the threshold is not below it
        assert_eq!(fuse_labels(&[constant(0.5)], &[1], 0.5).unwrap().data, vec![1; 4]);
    }

    #[test]
    fn errors() {
        assert!(fuse_labels(&[], &[], 0.5).is_err());
        assert!(fuse_labels(&[constant(0.1)], &[0], 0.5).is_err());
        assert!(fuse_labels(&[constant(0.1), constant(0.1)], &[2, 2], 0.5).is_err());
        assert!(fuse_labels(&[constant(1.5)], &[1], 0.5).is_err());
        let other = AttentionMap::new(1, 1, vec![0.0]).unwrap();
        assert!(fuse_labels(&[constant(0.1), other], &[1, 2], 0.5).is_err());
    }

    proptest! {
        #[test]
        fn output_ids_come_from_input(
            vals in prop::collection::vec(0.0f32..=1.0, 3 * 16),
            ids in prop::sample::subsequence((1u8..=254).collect::<Vec<_>>(), 3),
            thr in 0.0f64..1.0,
        ) {
            let maps: Vec<AttentionMap> = vals
                .chunks(16)
                .map(|c| AttentionMap::new(4, 4, c.to_vec()).unwrap())
                .collect();
            let out = fuse_labels(&maps, &ids, thr).unwrap();
            for (i, &l) in out.data.iter().enumerate() {
                prop_assert!(l == BACKGROUND || ids.contains(&l));
                if l != BACKGROUND {
                    let k = ids.iter().position(|&c| c == l).unwrap();
                    prop_assert!(maps.iter().all(|m| m.values[i] <= maps[k].values[i]));
                }
            }
        }
    }
}
