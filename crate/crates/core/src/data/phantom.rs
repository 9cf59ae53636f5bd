//! Synthetic cases with nested ellipsoid tumor regions.
//!
//! A phantom is three concentric ellipsoids — enhancing core inside necrotic
//! shell inside edema shell — embedded in a brain ellipsoid, with
//! per-modality intensity offsets and Gaussian noise. Small enough volumes
//! train in minutes on a CPU while still exercising every pipeline stage:
//! nested masks, nonzero-background normalization, stratification by
//! composition, and metric computation.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::data::cases::Case;
use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// Geometry and intensity recipe for generated cases.
///
/// Semi-axes are sampled per axis: whole-tumor as a fraction of the volume
/// extent, then each inner region as a fraction of the one enclosing it, so
/// nesting holds by construction for any ratios in (0, 1).
#[derive(Debug, Clone)]
pub struct PhantomSpec {
    /// Cubic volume edge length in voxels.
    pub extent: usize,
    /// Whole-tumor semi-axis range, fraction of extent.
    pub wt_frac: [f64; 2],
    /// Tumor-core semi-axes as a fraction of the whole-tumor semi-axes.
    pub tc_ratio: [f64; 2],
    /// Enhancing-core semi-axes as a fraction of the tumor-core semi-axes.
    pub et_ratio: [f64; 2],
    /// Mean intensity per modality (rows: flair, t1, t1ce, t2) and region
    /// (columns: brain tissue, edema, necrotic/non-enhancing, enhancing).
    pub offsets: [[f64; 4]; 4],
    /// Standard deviation of per-voxel Gaussian noise.
    pub noise_sigma: f64,
}

impl PhantomSpec {
    pub fn for_extent(extent: usize) -> Self {
        PhantomSpec {
            extent,
            wt_frac: [0.30, 0.38],
            tc_ratio: [0.62, 0.75],
            et_ratio: [0.58, 0.70],
            // distinct means per region so each modality carries signal;
            // enhancing region is brightest in t1ce, edema in flair/t2
            offsets: [
                [0.30, 0.75, 0.65, 0.85], // flair
                [0.40, 0.50, 0.35, 0.60], // t1
                [0.35, 0.45, 0.50, 0.95], // t1ce
                [0.30, 0.80, 0.60, 0.70], // t2
            ],
            noise_sigma: 0.05,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.extent < 16 {
            return Err(Error::Validation(format!(
                "phantom extent {} too small; need at least 16",
                self.extent
            )));
        }
        let ranges = [
            ("wt_frac", self.wt_frac, 0.45),
            ("tc_ratio", self.tc_ratio, 1.0),
            ("et_ratio", self.et_ratio, 1.0),
        ];
        for (name, [lo, hi], max) in ranges {
            // upper bounds keep the regions strictly nested and inside the
            // volume: ratios below 1 shrink each inner region, and the
            // whole-tumor fraction cap leaves room for the center jitter
            if !(lo > 0.0 && lo <= hi && hi < max) {
                return Err(Error::Validation(format!(
                    "{name} range [{lo}, {hi}] must satisfy 0 < lo <= hi < {max}"
                )));
            }
        }
        if !(self.noise_sigma >= 0.0 && self.noise_sigma.is_finite()) {
            return Err(Error::Validation(format!(
                "noise sigma {} must be finite and non-negative",
                self.noise_sigma
            )));
        }
        Ok(())
    }
}

/// Sampled ellipsoid parameters of one phantom, exposed so tests can compare
/// voxel counts against the analytic volume (4/3)·π·a·b·c.
#[derive(Debug, Clone)]
pub struct PhantomGeometry {
    pub center: [f64; 3],
    pub wt_radii: [f64; 3],
    pub tc_radii: [f64; 3],
    pub et_radii: [f64; 3],
}

fn inside(z: usize, y: usize, x: usize, center: &[f64; 3], radii: &[f64; 3]) -> bool {
    let d = |coord: usize, i: usize| (coord as f64 - center[i]) / radii[i];
    let s = d(z, 0).powi(2) + d(y, 1).powi(2) + d(x, 2).powi(2);
    s <= 1.0
}

/// Generates one deterministic case and reports its sampled geometry.
pub fn gen_phantom_with_geometry(
    spec: &PhantomSpec,
    seed: u64,
    case_id: &str,
) -> Result<(Case, PhantomGeometry)> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = spec.extent;

    let mut wt = [0.0; 3];
    let mut tc = [0.0; 3];
    let mut et = [0.0; 3];
    let mut center = [0.0; 3];
    for a in 0..3 {
        wt[a] = n as f64 * rng.random_range(spec.wt_frac[0]..=spec.wt_frac[1]);
        tc[a] = wt[a] * rng.random_range(spec.tc_ratio[0]..=spec.tc_ratio[1]);
        et[a] = tc[a] * rng.random_range(spec.et_ratio[0]..=spec.et_ratio[1]);
        // keep the whole tumor at least one voxel inside the volume
        center[a] = rng.random_range(wt[a] + 1.0..=n as f64 - 1.0 - wt[a]);
    }
    let geometry = PhantomGeometry { center, wt_radii: wt, tc_radii: tc, et_radii: et };

    // brain tissue fills a large centered ellipsoid; outside it (and outside
    // the tumor) intensities stay exactly zero, which is what the
    // preprocessing stage treats as background
    let mid = (n as f64 - 1.0) / 2.0;
    let brain_center = [mid; 3];
    let brain_radii = [0.46 * n as f64; 3];

    let shape = [n, n, n];
    let mut labels = vec![0u8; n * n * n];
    // region index per voxel for intensity lookup: 0 brain, 1 edema,
    // 2 necrotic/non-enhancing, 3 enhancing; background stays None
    let mut region = vec![None::<usize>; n * n * n];
    let mut idx = 0;
    for z in 0..n {
        for y in 0..n {
            for x in 0..n {
                let (label, reg) = if inside(z, y, x, &center, &et) {
                    (4, Some(3))
                } else if inside(z, y, x, &center, &tc) {
                    (1, Some(2))
                } else if inside(z, y, x, &center, &wt) {
                    (2, Some(1))
                } else if inside(z, y, x, &brain_center, &brain_radii) {
                    (0, Some(0))
                } else {
                    (0, None)
                };
                labels[idx] = label;
                region[idx] = reg;
                idx += 1;
            }
        }
    }

    let noise = Normal::new(0.0, spec.noise_sigma.max(f64::MIN_POSITIVE))
        .expect("validated sigma");
    let mut modalities = Vec::with_capacity(4);
    for m in 0..4 {
        let data: Vec<f32> = region
            .iter()
            .map(|reg| match reg {
                Some(r) => {
                    let value = spec.offsets[m][*r]
                        + if spec.noise_sigma > 0.0 { noise.sample(&mut rng) } else { 0.0 };
                    value as f32
                }
                None => 0.0,
            })
            .collect();
        modalities.push(Tensor::from_vec(&shape, data)?);
    }
    let modalities: [Tensor<f32>; 4] = modalities.try_into().expect("four modalities");
    let labels = Tensor::from_vec(&shape, labels)?;
    let case = Case::new(case_id.to_string(), modalities, labels)?;
    Ok((case, geometry))
}

pub fn gen_phantom(spec: &PhantomSpec, seed: u64, case_id: &str) -> Result<Case> {
    gen_phantom_with_geometry(spec, seed, case_id).map(|(case, _)| case)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::cases::labels_to_masks;
    use std::f64::consts::PI;

    fn count_ones(mask: &Tensor<u8>) -> usize {
        mask.data().iter().filter(|&&v| v == 1).count()
    }

    #[test]
    fn same_seed_reproduces_the_case_bitwise() {
        let spec = PhantomSpec::for_extent(16);
        let a = gen_phantom(&spec, 5, "p").unwrap();
        let b = gen_phantom(&spec, 5, "p").unwrap();
        assert_eq!(a.labels.data(), b.labels.data());
        for (ma, mb) in a.modalities.iter().zip(&b.modalities) {
            assert_eq!(ma.data(), mb.data());
        }
        let c = gen_phantom(&spec, 6, "p").unwrap();
        assert_ne!(a.labels.data(), c.labels.data(), "different seed, different tumor");
    }

    #[test]
    fn masks_nest_for_a_batch_of_seeds() {
        let spec = PhantomSpec::for_extent(16);
        for seed in 0..8 {
            let case = gen_phantom(&spec, seed, "p").unwrap();
            let [wt, tc, et] = labels_to_masks(&case.labels);
            for i in 0..wt.numel() {
                assert!(et.data()[i] <= tc.data()[i], "ET outside TC at seed {seed}");
                assert!(tc.data()[i] <= wt.data()[i], "TC outside WT at seed {seed}");
            }
            assert!(count_ones(&et) > 0, "enhancing core must not be empty");
        }
    }

    #[test]
    fn voxel_counts_track_analytic_ellipsoid_volumes() {
        let spec = PhantomSpec::for_extent(32);
        for seed in 0..4 {
            let (case, geo) = gen_phantom_with_geometry(&spec, seed, "p").unwrap();
            let [wt, tc, et] = labels_to_masks(&case.labels);
            for (mask, radii) in [(&wt, &geo.wt_radii), (&tc, &geo.tc_radii), (&et, &geo.et_radii)]
            {
                let analytic = 4.0 / 3.0 * PI * radii[0] * radii[1] * radii[2];
                let counted = count_ones(mask) as f64;
                let rel = (counted - analytic).abs() / analytic;
                assert!(
                    rel < 0.10,
                    "seed {seed}: counted {counted} vs analytic {analytic:.1} ({:.1}%)",
                    rel * 100.0
                );
            }
        }
    }

    #[test]
    fn zero_noise_separates_tumor_from_background_by_threshold() {
        let mut spec = PhantomSpec::for_extent(16);
        spec.noise_sigma = 0.0;
        let case = gen_phantom(&spec, 3, "p").unwrap();
        let [wt, _, _] = labels_to_masks(&case.labels);
        let flair = &case.modalities[0];
        // every flair offset for tumor regions exceeds brain tissue, so a
        // midpoint threshold classifies tumor voxels exactly
        let threshold = 0.5 * (0.30 + 0.65);
        for i in 0..wt.numel() {
            let is_tumor = wt.data()[i] == 1;
            let above = f64::from(flair.data()[i]) > threshold;
            assert_eq!(is_tumor, above, "voxel {i}");
        }
    }

    #[test]
    fn spec_validation_rejects_broken_nesting_ranges() {
        let mut spec = PhantomSpec::for_extent(16);
        spec.tc_ratio = [0.9, 1.1];
        assert!(spec.validate().is_err(), "ratio above 1 breaks nesting");
        let mut spec = PhantomSpec::for_extent(16);
        spec.wt_frac = [0.4, 0.3];
        assert!(spec.validate().is_err(), "inverted range");
        assert!(PhantomSpec::for_extent(8).validate().is_err(), "extent too small");
    }
}
