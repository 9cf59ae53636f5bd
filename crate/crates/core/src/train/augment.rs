//! Training-time augmentation: random mirror flips along the spatial axes.

use crate::error::{Error, Result};
use crate::tensor::Tensor;
use rand::Rng;

/// Reverses the last three axes of `t` wherever `axes` is true. Leading axes
/// (batch, channel) are untouched, so the same call works for `[D,H,W]`,
/// `[C,D,H,W]`, and `[N,C,D,H,W]` layouts.
pub fn flip_axes<E: Copy>(t: &Tensor<E>, axes: [bool; 3]) -> Result<Tensor<E>> {
    let rank = t.shape().len();
    if rank < 3 {
        return Err(Error::Shape(format!(
            "need at least three axes to flip, got {:?}",
            t.shape()
        )));
    }
    let (d, h, w) = (t.shape()[rank - 3], t.shape()[rank - 2], t.shape()[rank - 1]);
    let lead: usize = t.shape()[..rank - 3].iter().product();
    let volume = d * h * w;
    let src = t.data();
    let mut out = Vec::with_capacity(src.len());
    for l in 0..lead {
        let base = l * volume;
        for z in 0..d {
            let sz = if axes[0] { d - 1 - z } else { z };
            for y in 0..h {
                let sy = if axes[1] { h - 1 - y } else { y };
                for x in 0..w {
                    let sx = if axes[2] { w - 1 - x } else { x };
                    out.push(src[base + (sz * h + sy) * w + sx]);
                }
            }
        }
    }
    Tensor::from_vec(t.shape(), out)
}

/// Draws one flip decision per spatial axis (probability ½ each) and applies
/// the same mirroring to the input volume and its target so they stay
/// voxel-aligned.
pub fn augment_flip<E: Copy, R: Rng>(
    input: &Tensor<E>,
    target: &Tensor<E>,
    rng: &mut R,
) -> Result<(Tensor<E>, Tensor<E>)> {
    let axes = [rng.random::<bool>(), rng.random::<bool>(), rng.random::<bool>()];
    Ok((flip_axes(input, axes)?, flip_axes(target, axes)?))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn ramp(shape: &[usize]) -> Tensor<f32> {
        let n: usize = shape.iter().product();
        Tensor::from_vec(shape, (0..n).map(|i| i as f32).collect()).unwrap()
    }

    #[test]
    fn flipping_twice_is_the_identity() {
        let t = ramp(&[2, 3, 4, 5]);
        for bits in 0..8u8 {
            let axes = [bits & 1 != 0, bits & 2 != 0, bits & 4 != 0];
            let twice = flip_axes(&flip_axes(&t, axes).unwrap(), axes).unwrap();
            assert_eq!(twice.data(), t.data(), "axes {axes:?}");
        }
    }

    #[test]
    fn single_axis_flip_reverses_that_axis_only() {
        let t = ramp(&[2, 2, 2]);
        let f = flip_axes(&t, [false, false, true]).unwrap();
        // innermost axis reversed pairwise
        assert_eq!(f.data(), &[1.0, 0.0, 3.0, 2.0, 5.0, 4.0, 7.0, 6.0]);
        let f = flip_axes(&t, [true, false, false]).unwrap();
        assert_eq!(f.data(), &[4.0, 5.0, 6.0, 7.0, 0.0, 1.0, 2.0, 3.0]);
    }

    #[test]
    fn leading_axes_are_left_alone() {
        let t = ramp(&[3, 1, 2, 2, 2]);
        let f = flip_axes(&t, [true, true, true]).unwrap();
        // each [2,2,2] block is reversed within itself; block order intact
        for block in 0..3 {
            let base = block * 8;
            for i in 0..8 {
                assert_eq!(f.data()[base + i], t.data()[base + 7 - i]);
            }
        }
    }

    #[test]
    fn flip_preserves_multiset_of_values() {
        let t = ramp(&[1, 4, 3, 5, 2]);
        let f = flip_axes(&t, [true, false, true]).unwrap();
        let mut a: Vec<f32> = t.data().to_vec();
        let mut b: Vec<f32> = f.data().to_vec();
        a.sort_by(f32::total_cmp);
        b.sort_by(f32::total_cmp);
        assert_eq!(a, b);
    }

    #[test]
    fn paired_augmentation_moves_input_and_target_together() {
        let input = ramp(&[1, 4, 4, 4, 4]);
        let target = ramp(&[1, 3, 4, 4, 4]);
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        for _ in 0..8 {
            let (ai, at) = augment_flip(&input, &target, &mut rng).unwrap();
            // recover the axes by testing which single flip restores the input
            for bits in 0..8u8 {
                let axes = [bits & 1 != 0, bits & 2 != 0, bits & 4 != 0];
                if flip_axes(&ai, axes).unwrap().data() == input.data() {
                    assert_eq!(flip_axes(&at, axes).unwrap().data(), target.data());
                }
            }
        }
    }

    #[test]
    fn rejects_low_rank_input() {
        let t = Tensor::from_vec(&[2, 3], vec![0.0f32; 6]).unwrap();
        assert!(flip_axes(&t, [false; 3]).is_err());
    }
}
