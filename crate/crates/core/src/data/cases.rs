//! A segmentation case: four MRI modalities plus a label volume, stored as
//! one directory of volume files.

use std::path::{Path, PathBuf};

use crate::data::avol;
use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// Modality file stems in channel order. The order is part of the on-disk
/// contract: channel 0 of every stacked input is FLAIR, and so on.
pub const MODALITY_NAMES: [&str; 4] = ["flair", "t1", "t1ce", "t2"];

/// File stem of the label volume inside a case directory.
pub const LABEL_NAME: &str = "label";

/// Raw label values: 0 background, 1 necrosis/non-enhancing, 2 edema,
/// 4 enhancing tumor. There is no label 3.
pub const LABEL_VALUES: [u8; 4] = [0, 1, 2, 4];

/// One subject: aligned modality volumes and a label volume.
///
/// All five volumes are rank 3 `[D, H, W]` and share extents. The three
/// evaluation masks (whole tumor ⊇ tumor core ⊇ enhancing tumor) are derived
/// from `labels` on demand rather than stored.
#[derive(Debug, Clone)]
pub struct Case {
    pub case_id: String,
    /// FLAIR, T1, T1ce, T2 in `MODALITY_NAMES` order.
    pub modalities: [Tensor<f32>; 4],
    pub labels: Tensor<u8>,
}

impl Case {
    /// Validates extents and label values once at construction so every
    /// downstream consumer can rely on them.
    pub fn new(case_id: String, modalities: [Tensor<f32>; 4], labels: Tensor<u8>) -> Result<Self> {
        let extents = labels.shape().to_vec();
        if extents.len() != 3 {
            return Err(Error::Shape(format!(
                "case {case_id}: label volume must be rank 3, got {extents:?}"
            )));
        }
        for (name, m) in MODALITY_NAMES.iter().zip(&modalities) {
            if m.shape() != extents.as_slice() {
                return Err(Error::Shape(format!(
                    "case {case_id}: modality {name} extents {:?} differ from labels {extents:?}",
                    m.shape()
                )));
            }
        }
        check_label_values(&labels)?;
        Ok(Case { case_id, modalities, labels })
    }

    pub fn extents(&self) -> &[usize] {
        self.labels.shape()
    }

    /// Binary masks for the three nested evaluation regions.
    pub fn masks(&self) -> [Tensor<u8>; 3] {
        labels_to_masks(&self.labels)
    }

    /// Modality stack as a `[1, 4, D, H, W]` network input.
    pub fn input_tensor(&self) -> Tensor<f32> {
        let (d, h, w) = (self.extents()[0], self.extents()[1], self.extents()[2]);
        let mut data = Vec::with_capacity(4 * d * h * w);
        for m in &self.modalities {
            data.extend_from_slice(m.data());
        }
        Tensor::from_vec(&[1, 4, d, h, w], data).expect("modality stack shape")
    }

    /// Mask stack as a `[1, 3, D, H, W]` training target with values 0.0/1.0.
    pub fn target_tensor(&self) -> Tensor<f32> {
        let (d, h, w) = (self.extents()[0], self.extents()[1], self.extents()[2]);
        let masks = self.masks();
        let mut data = Vec::with_capacity(3 * d * h * w);
        for m in &masks {
            data.extend(m.data().iter().map(|&v| v as f32));
        }
        Tensor::from_vec(&[1, 3, d, h, w], data).expect("mask stack shape")
    }
}

fn check_label_values(labels: &Tensor<u8>) -> Result<()> {
    for &v in labels.data() {
        if !LABEL_VALUES.contains(&v) {
            return Err(Error::Validation(format!(
                "unexpected label value {v}; allowed values are 0, 1, 2, 4"
            )));
        }
    }
    Ok(())
}

/// Maps raw labels to the three nested binary masks:
/// whole tumor {1,2,4}, tumor core {1,4}, enhancing tumor {4}.
///
/// Nesting (ET ⊆ TC ⊆ WT) holds by construction since each set of label
/// values contains the next. Assumes values were validated at `Case::new`;
/// unknown values simply fall outside every mask here.
pub fn labels_to_masks(labels: &Tensor<u8>) -> [Tensor<u8>; 3] {
    let wt = labels.map(|v| u8::from(v == 1 || v == 2 || v == 4));
    let tc = labels.map(|v| u8::from(v == 1 || v == 4));
    let et = labels.map(|v| u8::from(v == 4));
    [wt, tc, et]
}

/// Writes `case` as `<parent>/<case_id>/{flair,t1,t1ce,t2,label}.avol`.
pub fn save_case(parent: &Path, case: &Case) -> Result<PathBuf> {
    let dir = parent.join(&case.case_id);
    std::fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
    for (name, m) in MODALITY_NAMES.iter().zip(&case.modalities) {
        avol::write(&dir.join(format!("{name}.avol")), m)?;
    }
    avol::write(&dir.join(format!("{LABEL_NAME}.avol")), &case.labels)?;
    Ok(dir)
}

/// Reads a case directory written by `save_case`. The directory name is the
/// case id.
pub fn load_case(dir: &Path) -> Result<Case> {
    let case_id = dir
        .file_name()
        .and_then(|n| n.to_str())
        .ok_or_else(|| Error::format(dir, "case directory has no utf-8 name"))?
        .to_string();
    let mut modalities = Vec::with_capacity(4);
    for name in MODALITY_NAMES {
        modalities.push(avol::read::<f32>(&dir.join(format!("{name}.avol")))?);
    }
    let labels = avol::read::<u8>(&dir.join(format!("{LABEL_NAME}.avol")))?;
    let modalities: [Tensor<f32>; 4] = modalities.try_into().expect("four modalities");
    Case::new(case_id, modalities, labels)
}

/// Lists case directories under `data_dir` (anything containing label.avol),
/// sorted by id so iteration order is stable across filesystems.
pub fn list_case_dirs(data_dir: &Path) -> Result<Vec<PathBuf>> {
    let entries = std::fs::read_dir(data_dir).map_err(|e| Error::io(data_dir, e))?;
    let mut dirs = Vec::new();
    for entry in entries {
        let entry = entry.map_err(|e| Error::io(data_dir, e))?;
        let path = entry.path();
        if path.is_dir() && path.join(format!("{LABEL_NAME}.avol")).is_file() {
            dirs.push(path);
        }
    }
    dirs.sort();
    Ok(dirs)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn mk_labels(values: &[u8]) -> Tensor<u8> {
        Tensor::from_vec(&[1, 1, values.len()], values.to_vec()).unwrap()
    }

    fn mk_case(labels: Tensor<u8>) -> Case {
        let shape = labels.shape().to_vec();
        let modalities = core::array::from_fn(|i| Tensor::full(&shape, i as f32 + 1.0));
        Case::new("c0".into(), modalities, labels).unwrap()
    }

    #[test]
    fn masks_nest_and_cover_the_right_labels() {
        let labels = mk_labels(&[0, 1, 2, 4]);
        let [wt, tc, et] = labels_to_masks(&labels);
        assert_eq!(wt.data(), &[0, 1, 1, 1]);
        assert_eq!(tc.data(), &[0, 1, 0, 1]);
        assert_eq!(et.data(), &[0, 0, 0, 1]);
    }

    #[test]
    fn all_zero_labels_give_three_empty_masks() {
        let [wt, tc, et] = labels_to_masks(&mk_labels(&[0, 0, 0]));
        for m in [wt, tc, et] {
            assert!(m.data().iter().all(|&v| v == 0));
        }
    }

    #[test]
    fn a_single_enhancing_voxel_appears_in_all_three_masks() {
        let [wt, tc, et] = labels_to_masks(&mk_labels(&[0, 4, 0]));
        assert_eq!(wt.at(&[0, 0, 1]), 1);
        assert_eq!(tc.at(&[0, 0, 1]), 1);
        assert_eq!(et.at(&[0, 0, 1]), 1);
    }

    #[test]
    fn whole_tumor_count_equals_sum_of_per_label_counts() {
        // lcg-driven pseudo-random labels over the allowed alphabet
        let mut s = 77u64;
        let values: Vec<u8> = (0..512)
            .map(|_| {
                s = s.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
                LABEL_VALUES[(s >> 60) as usize % 4]
            })
            .collect();
        let labels = Tensor::from_vec(&[8, 8, 8], values.clone()).unwrap();
        let [wt, _, _] = labels_to_masks(&labels);
        let count = |l: u8| values.iter().filter(|&&v| v == l).count();
        let wt_count = wt.data().iter().filter(|&&v| v == 1).count();
        assert_eq!(wt_count, count(1) + count(2) + count(4));
    }

    #[test]
    fn case_rejects_bad_label_values_and_mismatched_extents() {
        let labels = Tensor::from_vec(&[1, 1, 2], vec![0u8, 3]).unwrap();
        let modalities = core::array::from_fn(|_| Tensor::full(&[1, 1, 2], 0.0f32));
        let err = Case::new("bad".into(), modalities, labels).unwrap_err().to_string();
        assert!(err.contains('3'), "error should list the offending value: {err}");

        let labels = Tensor::from_vec(&[1, 1, 2], vec![0u8, 1]).unwrap();
        let modalities = core::array::from_fn(|_| Tensor::full(&[1, 1, 3], 0.0f32));
        assert!(Case::new("bad".into(), modalities, labels).is_err());
    }

    #[test]
    fn input_and_target_stacks_have_channel_first_layout() {
        let case = mk_case(mk_labels(&[0, 4]));
        let input = case.input_tensor();
        assert_eq!(input.shape(), &[1, 4, 1, 1, 2]);
        // channel c holds modality c's constant value c+1
        for c in 0..4 {
            assert_eq!(input.at(&[0, c, 0, 0, 0]), c as f32 + 1.0);
        }
        let target = case.target_tensor();
        assert_eq!(target.shape(), &[1, 3, 1, 1, 2]);
        for c in 0..3 {
            assert_eq!(target.at(&[0, c, 0, 0, 1]), 1.0, "label 4 sets every mask");
        }
    }

    #[test]
    fn save_then_load_round_trips_bitwise() {
        let tmp = tempfile::tempdir().unwrap();
        let case = mk_case(mk_labels(&[0, 1, 2, 4]));
        save_case(tmp.path(), &case).unwrap();
        let back = load_case(&tmp.path().join("c0")).unwrap();
        assert_eq!(back.case_id, "c0");
        assert_eq!(back.labels.data(), case.labels.data());
        for (a, b) in back.modalities.iter().zip(&case.modalities) {
            assert_eq!(a.data(), b.data());
        }
        let dirs = list_case_dirs(tmp.path()).unwrap();
        assert_eq!(dirs.len(), 1);
    }
}
