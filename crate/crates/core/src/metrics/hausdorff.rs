//! Hausdorff distances between voxel sets, exact on the integer grid.
//!
//! Directed distances are computed two ways that agree bitwise: an all-pairs
//! scan for small sets, and a separable squared Euclidean distance transform
//! (lower envelope of parabolas) for large ones. Both paths produce integer
//! squared distances; the single square root happens at the very end, so
//! dispatch never changes a result.

use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// Picks all-pairs when |A|·|B| is at most this; the transform otherwise.
const BRUTE_FORCE_LIMIT: u64 = 65_536;

fn check_mask(t: &Tensor<u8>) -> Result<()> {
    if t.shape().len() != 3 {
        return Err(Error::Shape(format!("mask must be rank 3, got {:?}", t.shape())));
    }
    if let Some(&v) = t.data().iter().find(|&&v| v > 1) {
        return Err(Error::Validation(format!("mask must be binary, found value {v}")));
    }
    Ok(())
}

fn set_size(t: &Tensor<u8>) -> u64 {
    t.data().iter().map(|&v| u64::from(v)).sum()
}

/// One rational envelope boundary; `den == 0` encodes −∞ (num < 0) or +∞.
#[derive(Clone, Copy)]
struct Boundary {
    num: i64,
    den: i64,
}

impl Boundary {
    const NEG_INF: Boundary = Boundary { num: -1, den: 0 };
    const POS_INF: Boundary = Boundary { num: 1, den: 0 };

    fn le(self, other: Boundary) -> bool {
        match (self.den, other.den) {
            (0, 0) => self.num <= other.num,
            (0, _) => self.num < 0,
            (_, 0) => other.num > 0,
            // both denominators are positive by construction
            _ => self.num * other.den <= other.num * self.den,
        }
    }

    fn lt_int(self, q: i64) -> bool {
        match self.den {
            0 => self.num < 0,
            _ => self.num < q * self.den,
        }
    }
}

/// 1D squared-distance lower envelope (Felzenszwalb–Huttenlocher). Input
/// values and grid coordinates are integers, and envelope boundaries are
/// kept as exact rationals, so the output is the exact pointwise minimum of
/// q ↦ (q−v)² + f[v].
fn dt_line(f: &[i64], out: &mut [i64]) {
    let n = f.len();
    let mut sites = vec![0usize; n];
    let mut z = vec![Boundary::POS_INF; n + 1];
    z[0] = Boundary::NEG_INF;
    let mut k = 0usize;

    let intersect = |q: usize, p: usize| -> Boundary {
        let (qi, pi) = (q as i64, p as i64);
        Boundary { num: (f[q] + qi * qi) - (f[p] + pi * pi), den: 2 * (qi - pi) }
    };

    for q in 1..n {
        let mut s = intersect(q, sites[k]);
        while s.le(z[k]) {
            k -= 1;
            s = intersect(q, sites[k]);
        }
        k += 1;
        sites[k] = q;
        z[k] = s;
        z[k + 1] = Boundary::POS_INF;
    }

    k = 0;
    for q in 0..n {
        while z[k + 1].lt_int(q as i64) {
            k += 1;
        }
        let d = q as i64 - sites[k] as i64;
        out[q] = d * d + f[sites[k]];
    }
}

/// Squared Euclidean distance from every voxel to the nearest set voxel of
/// `to`, in C order. Errors if the set is empty.
pub fn squared_distance_field(to: &Tensor<u8>) -> Result<Vec<i64>> {
    check_mask(to)?;
    if set_size(to) == 0 {
        return Err(Error::Numeric("hausdorff undefined for empty mask".into()));
    }
    let (d, h, w) = (to.shape()[0], to.shape()[1], to.shape()[2]);
    // larger than any achievable squared distance, yet small enough that the
    // envelope rationals stay far from i64 overflow
    let max_ext = d.max(h).max(w) as i64;
    let inf = 3 * max_ext * max_ext + 1;
    let mut g: Vec<i64> =
        to.data().iter().map(|&v| if v == 1 { 0 } else { inf }).collect();

    let mut line = vec![0i64; w.max(h).max(d)];
    let mut out = vec![0i64; w.max(h).max(d)];

    // pass along x (contiguous rows)
    for row in g.chunks_mut(w) {
        dt_line(row, &mut out[..w]);
        row.copy_from_slice(&out[..w]);
    }
    // pass along y
    for z in 0..d {
        for x in 0..w {
            for y in 0..h {
                line[y] = g[(z * h + y) * w + x];
            }
            dt_line(&line[..h], &mut out[..h]);
            for y in 0..h {
                g[(z * h + y) * w + x] = out[y];
            }
        }
    }
    // pass along z
    for y in 0..h {
        for x in 0..w {
            for z in 0..d {
                line[z] = g[(z * h + y) * w + x];
            }
            dt_line(&line[..d], &mut out[..d]);
            for z in 0..d {
                g[(z * h + y) * w + x] = out[z];
            }
        }
    }
    Ok(g)
}

/// Squared distance from each set voxel of `from` (C-order) to the nearest
/// set voxel of `to`, via the distance transform.
pub fn directed_sq_distances(from: &Tensor<u8>, to: &Tensor<u8>) -> Result<Vec<i64>> {
    check_mask(from)?;
    if from.shape() != to.shape() {
        return Err(Error::Shape(format!(
            "mask extents differ: {:?} vs {:?}",
            from.shape(),
            to.shape()
        )));
    }
    let field = squared_distance_field(to)?;
    Ok(from
        .data()
        .iter()
        .zip(&field)
        .filter(|(&v, _)| v == 1)
        .map(|(_, &d)| d)
        .collect())
}

/// Same contract as `directed_sq_distances`, by scanning every pair.
pub fn directed_sq_distances_brute(from: &Tensor<u8>, to: &Tensor<u8>) -> Result<Vec<i64>> {
    check_mask(from)?;
    check_mask(to)?;
    if from.shape() != to.shape() {
        return Err(Error::Shape(format!(
            "mask extents differ: {:?} vs {:?}",
            from.shape(),
            to.shape()
        )));
    }
    let points = |t: &Tensor<u8>| -> Vec<[i64; 3]> {
        let (h, w) = (t.shape()[1], t.shape()[2]);
        t.data()
            .iter()
            .enumerate()
            .filter(|(_, &v)| v == 1)
            .map(|(i, _)| {
                [(i / (h * w)) as i64, (i / w % h) as i64, (i % w) as i64]
            })
            .collect()
    };
    let a = points(from);
    let b = points(to);
    if b.is_empty() {
        return Err(Error::Numeric("hausdorff undefined for empty mask".into()));
    }
    Ok(a.iter()
        .map(|p| {
            b.iter()
                .map(|q| {
                    let dz = p[0] - q[0];
                    let dy = p[1] - q[1];
                    let dx = p[2] - q[2];
                    dz * dz + dy * dy + dx * dx
                })
                .min()
                .expect("nonempty target set")
        })
        .collect())
}

/// Both directed distance multisets pooled together, dispatching on set
/// sizes. Errors if either mask is empty.
fn pooled_sq_distances(a: &Tensor<u8>, b: &Tensor<u8>) -> Result<Vec<i64>> {
    check_mask(a)?;
    check_mask(b)?;
    let (ca, cb) = (set_size(a), set_size(b));
    if ca == 0 || cb == 0 {
        return Err(Error::Numeric("hausdorff undefined for empty mask".into()));
    }
    let mut pooled = if ca * cb <= BRUTE_FORCE_LIMIT {
        let mut p = directed_sq_distances_brute(a, b)?;
        p.extend(directed_sq_distances_brute(b, a)?);
        p
    } else {
        let mut p = directed_sq_distances(a, b)?;
        p.extend(directed_sq_distances(b, a)?);
        p
    };
    pooled.sort_unstable();
    Ok(pooled)
}

fn nearest_rank_95(sorted: &[i64]) -> i64 {
    // ceil(0.95·m) in integers, then back to 0-based
    let m = sorted.len();
    sorted[(95 * m + 99) / 100 - 1]
}

/// Symmetric Hausdorff distance: the largest of all directed nearest-point
/// distances, in voxel units.
pub fn hausdorff(a: &Tensor<u8>, b: &Tensor<u8>) -> Result<f64> {
    let pooled = pooled_sq_distances(a, b)?;
    Ok((*pooled.last().expect("nonempty sets") as f64).sqrt())
}

/// 95th-percentile (nearest-rank) of the pooled directed distances, the
/// outlier-robust variant commonly reported alongside the exact maximum.
pub fn hausdorff95(a: &Tensor<u8>, b: &Tensor<u8>) -> Result<f64> {
    let pooled = pooled_sq_distances(a, b)?;
    Ok((nearest_rank_95(&pooled) as f64).sqrt())
}

/// Exact maximum and 95th percentile from one pooled computation.
pub fn hausdorff_pair(a: &Tensor<u8>, b: &Tensor<u8>) -> Result<(f64, f64)> {
    let pooled = pooled_sq_distances(a, b)?;
    let hd = (*pooled.last().expect("nonempty sets") as f64).sqrt();
    let hd95 = (nearest_rank_95(&pooled) as f64).sqrt();
    Ok((hd, hd95))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn mask_from_points(extent: usize, points: &[[usize; 3]]) -> Tensor<u8> {
        let mut t = Tensor::full(&[extent, extent, extent], 0u8);
        for p in points {
            t.set(p, 1);
        }
        t
    }

    #[test]
    fn identical_sets_are_at_distance_zero() {
        let m = mask_from_points(6, &[[1, 2, 3], [4, 4, 4]]);
        assert_eq!(hausdorff(&m, &m).unwrap(), 0.0);
        assert_eq!(hausdorff95(&m, &m).unwrap(), 0.0);
    }

    #[test]
    fn single_points_give_the_euclidean_distance() {
        let a = mask_from_points(6, &[[0, 0, 0]]);
        let b = mask_from_points(6, &[[0, 3, 4]]);
        assert_eq!(hausdorff(&a, &b).unwrap(), 5.0);
    }

    #[test]
    fn symmetric_at_the_maximum() {
        let a = mask_from_points(8, &[[0, 0, 0], [1, 5, 2]]);
        let b = mask_from_points(8, &[[7, 7, 7], [2, 2, 2]]);
        assert_eq!(hausdorff(&a, &b).unwrap(), hausdorff(&b, &a).unwrap());
    }

    #[test]
    fn percentile_discards_a_single_outlier() {
        // 20 matched points plus one stray: 40 zeros and one 6 pooled, and
        // the 95th-percentile rank lands on a zero
        let base: Vec<[usize; 3]> = (0..20).map(|x| [0, 0, x]).collect();
        let mut with_stray = base.clone();
        with_stray.push([0, 0, 25]);
        let a = mask_from_points(26, &base);
        let b = mask_from_points(26, &with_stray);
        let (hd, hd95) = hausdorff_pair(&a, &b).unwrap();
        assert_eq!(hd, 6.0);
        assert_eq!(hd95, 0.0);
        assert!(hd95 <= hd);
    }

    #[test]
    fn nearest_rank_picks_the_ceiling_rank() {
        let m100: Vec<i64> = (1..=100).collect();
        assert_eq!(nearest_rank_95(&m100), 95);
        let m101: Vec<i64> = (1..=101).collect();
        assert_eq!(nearest_rank_95(&m101), 96);
        let tiny = [7i64];
        assert_eq!(nearest_rank_95(&tiny), 7);
    }

    #[test]
    fn empty_masks_are_undefined() {
        let empty = mask_from_points(4, &[]);
        let full = mask_from_points(4, &[[1, 1, 1]]);
        assert!(hausdorff(&empty, &full).is_err());
        assert!(hausdorff(&full, &empty).is_err());
        assert!(directed_sq_distances(&full, &empty).is_err());
    }

    #[test]
    fn transform_agrees_with_brute_force_exactly() {
        let mut s = 31u64;
        let mut coin = |p: u64| {
            s = s.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            (s >> 59) < p
        };
        for round in 0..24 {
            let a_v: Vec<u8> = (0..216).map(|_| u8::from(coin(6))).collect();
            let b_v: Vec<u8> = (0..216).map(|_| u8::from(coin(6))).collect();
            if a_v.iter().all(|&v| v == 0) || b_v.iter().all(|&v| v == 0) {
                continue;
            }
            let a = Tensor::from_vec(&[6, 6, 6], a_v).unwrap();
            let b = Tensor::from_vec(&[6, 6, 6], b_v).unwrap();
            assert_eq!(
                directed_sq_distances(&a, &b).unwrap(),
                directed_sq_distances_brute(&a, &b).unwrap(),
                "round {round}"
            );
        }
    }

    #[test]
    fn field_handles_anisotropic_extents() {
        let mut t = Tensor::full(&[2, 3, 9], 0u8);
        t.set(&[0, 0, 0], 1);
        let field = squared_distance_field(&t).unwrap();
        // farthest corner (1,2,8): 1 + 4 + 64
        assert_eq!(*field.last().unwrap(), 69);
    }
}
