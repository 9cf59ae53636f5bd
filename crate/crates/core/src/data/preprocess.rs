//! Crop and intensity preparation applied to every case before it reaches
//! the network.
//!
//! The crop window is a cube centered on the bounding box of the nonzero
//! FLAIR voxels (the head region), clamped inside the volume, and applied
//! identically to all modalities and the labels so voxel correspondence is
//! preserved. Intensities are then min-max scaled per modality into [−1, 1]
//! using only nonzero voxels: MRI volumes are mostly zero background, and
//! letting those zeros into the statistics would compress the tissue range
//! into a sliver. Background voxels stay exactly 0.

use crate::data::cases::Case;
use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// Picks the origin of a `target`³ crop window centered on the nonzero
/// bounding box of `reference`, clamped inside the volume. A reference with
/// no nonzero voxels centers the window on the volume instead.
pub fn crop_origin(reference: &Tensor<f32>, target: usize) -> Result<[usize; 3]> {
    let shape = reference.shape();
    if shape.len() != 3 {
        return Err(Error::Shape(format!("crop reference must be rank 3, got {shape:?}")));
    }
    for (axis, &extent) in shape.iter().enumerate() {
        if extent < target {
            return Err(Error::Validation(format!(
                "axis {axis} extent {extent} is smaller than the crop size {target}"
            )));
        }
    }
    let (d, h, w) = (shape[0], shape[1], shape[2]);
    let mut lo = [d, h, w];
    let mut hi = [0usize; 3];
    let mut any = false;
    let data = reference.data();
    let mut idx = 0;
    for z in 0..d {
        for y in 0..h {
            for x in 0..w {
                if data[idx] != 0.0 {
                    any = true;
                    let coords = [z, y, x];
                    for a in 0..3 {
                        lo[a] = lo[a].min(coords[a]);
                        hi[a] = hi[a].max(coords[a]);
                    }
                }
                idx += 1;
            }
        }
    }
    if !any {
        lo = [0; 3];
        hi = [d - 1, h - 1, w - 1];
    }
    let mut origin = [0usize; 3];
    for a in 0..3 {
        let center = (lo[a] + hi[a] + 1) / 2;
        let half = target / 2;
        let unclamped = center.saturating_sub(half);
        origin[a] = unclamped.min(shape[a] - target);
    }
    Ok(origin)
}

/// Extracts the `target`³ window at `origin` from a rank-3 volume.
pub fn crop<E: Copy>(t: &Tensor<E>, origin: &[usize; 3], target: usize) -> Result<Tensor<E>> {
    let shape = t.shape();
    if shape.len() != 3 {
        return Err(Error::Shape(format!("crop input must be rank 3, got {shape:?}")));
    }
    for a in 0..3 {
        if origin[a] + target > shape[a] {
            return Err(Error::Shape(format!(
                "crop window [{}, {}) exceeds axis {a} extent {}",
                origin[a],
                origin[a] + target,
                shape[a]
            )));
        }
    }
    let data = t.data();
    let mut out = Vec::with_capacity(target * target * target);
    for z in 0..target {
        for y in 0..target {
            let row = (origin[0] + z) * shape[1] * shape[2] + (origin[1] + y) * shape[2] + origin[2];
            out.extend_from_slice(&data[row..row + target]);
        }
    }
    Tensor::from_vec(&[target, target, target], out)
}

/// Min-max scales one modality into [−1, 1] over its nonzero voxels.
///
/// Zero voxels are background and stay exactly 0. A degenerate modality
/// (no nonzero voxels, or all nonzero voxels equal) maps to all zeros.
pub fn normalize_modality(t: &Tensor<f32>) -> Tensor<f32> {
    let mut min = f32::INFINITY;
    let mut max = f32::NEG_INFINITY;
    for &v in t.data() {
        if v != 0.0 {
            min = min.min(v);
            max = max.max(v);
        }
    }
    if !(min < max) {
        return Tensor::full(t.shape(), 0.0);
    }
    let span = f64::from(max) - f64::from(min);
    t.map(|v| {
        if v == 0.0 {
            0.0
        } else {
            (2.0 * (f64::from(v) - f64::from(min)) / span - 1.0) as f32
        }
    })
}

/// Crops every volume of `case` with one shared FLAIR-centered window and
/// normalizes each modality independently.
pub fn preprocess_case(case: &Case, target: usize) -> Result<Case> {
    let origin = crop_origin(&case.modalities[0], target)?;
    let mut modalities = Vec::with_capacity(4);
    for m in &case.modalities {
        modalities.push(normalize_modality(&crop(m, &origin, target)?));
    }
    let labels = crop(&case.labels, &origin, target)?;
    let modalities: [Tensor<f32>; 4] = modalities.try_into().expect("four modalities");
    Case::new(case.case_id.clone(), modalities, labels)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::phantom::{gen_phantom, PhantomSpec};

    #[test]
    fn midpoint_of_the_intensity_range_maps_to_zero() {
        let t = Tensor::from_vec(&[1, 1, 4], vec![0.0f32, 10.0, 20.0, 30.0]).unwrap();
        let n = normalize_modality(&t);
        assert_eq!(n.data(), &[0.0, -1.0, 0.0, 1.0]);
    }

    #[test]
    fn degenerate_modalities_map_to_all_zeros() {
        let zero = Tensor::full(&[2, 2, 2], 0.0f32);
        assert!(normalize_modality(&zero).data().iter().all(|&v| v == 0.0));
        let constant = Tensor::full(&[2, 2, 2], 7.5f32);
        assert!(normalize_modality(&constant).data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn normalized_range_is_attained_and_bounded() {
        let case = gen_phantom(&PhantomSpec::for_extent(16), 11, "p").unwrap();
        let pre = preprocess_case(&case, 16).unwrap();
        for m in &pre.modalities {
            let nonzero: Vec<f32> = m.data().iter().copied().filter(|&v| v != 0.0).collect();
            assert!(!nonzero.is_empty());
            let min = nonzero.iter().copied().fold(f32::INFINITY, f32::min);
            let max = nonzero.iter().copied().fold(f32::NEG_INFINITY, f32::max);
            assert!(m.data().iter().all(|&v| (-1.0..=1.0).contains(&v)));
            assert_eq!(min, -1.0);
            assert_eq!(max, 1.0);
        }
    }

    #[test]
    fn crop_window_is_shared_by_all_volumes() {
        // coordinate-encoded volumes make window mismatches visible
        let n = 12usize;
        let coords: Vec<f32> = (0..n * n * n).map(|i| i as f32 + 1.0).collect();
        let shape = [n, n, n];
        let modalities =
            core::array::from_fn(|m| Tensor::from_vec(&shape, coords.clone()).unwrap().map(|v| v + m as f32));
        let labels =
            Tensor::from_vec(&shape, (0..n * n * n).map(|i| [0u8, 1, 2, 4][i % 4]).collect())
                .unwrap();
        let case = Case::new("c".into(), modalities, labels).unwrap();

        let target = 8;
        let origin = crop_origin(&case.modalities[0], target).unwrap();
        let pre = preprocess_case(&case, target).unwrap();
        assert_eq!(pre.labels.data(), crop(&case.labels, &origin, target).unwrap().data());
        for (m_pre, m_raw) in pre.modalities.iter().zip(&case.modalities) {
            let expected = normalize_modality(&crop(m_raw, &origin, target).unwrap());
            assert_eq!(m_pre.data(), expected.data());
        }
    }

    #[test]
    fn window_centers_on_the_nonzero_region_and_clamps() {
        // a blob near the high corner of a 16³ volume; an 8³ window centered
        // on it would overrun, so the origin clamps to 16 − 8 = 8
        let mut flair = Tensor::full(&[16, 16, 16], 0.0f32);
        for z in 13..16 {
            for y in 13..16 {
                for x in 13..16 {
                    flair.set(&[z, y, x], 1.0);
                }
            }
        }
        let origin = crop_origin(&flair, 8).unwrap();
        assert_eq!(origin, [8, 8, 8]);
        // a centered blob stays centered
        let mut flair = Tensor::full(&[16, 16, 16], 0.0f32);
        flair.set(&[8, 8, 8], 1.0);
        assert_eq!(crop_origin(&flair, 8).unwrap(), [4, 4, 4]);
    }

    #[test]
    fn undersized_volumes_are_rejected_naming_the_axis() {
        let flair = Tensor::full(&[16, 16, 6], 0.0f32);
        let err = crop_origin(&flair, 8).unwrap_err().to_string();
        assert!(err.contains("axis 2"), "{err}");
    }
}
