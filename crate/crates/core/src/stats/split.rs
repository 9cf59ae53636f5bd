//! Tumor-composition statistics and the stratified cross-validation
//! splitter.
//!
//! Five folds at 80/10/10 cannot be five disjoint 20% test sets, so the
//! splitter deals each stratum round-robin into ten chunks and rotates: fold
//! i validates on chunk 2i and tests on chunk 2i+1. Every case is tested at
//! most once across the five folds, and every fold sees ~80/10/10 with
//! per-stratum proportions preserved within one case.

use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::data::cases::Case;
use crate::error::{Error, Result};

/// Voxel composition of one case's tumor, by raw label.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CaseStats {
    pub case_id: String,
    /// necrosis / non-enhancing voxels (label 1)
    pub net: usize,
    /// peritumoral edema voxels (label 2)
    pub ed: usize,
    /// enhancing voxels (label 4)
    pub et: usize,
}

impl CaseStats {
    /// Total tumor size: the sum of the three subtype counts.
    pub fn size(&self) -> usize {
        self.net + self.ed + self.et
    }
}

/// Exact per-label voxel counts. Label values were validated when the case
/// was constructed.
pub fn case_stats(case: &Case) -> CaseStats {
    let mut counts = [0usize; 5];
    for &v in case.labels.data() {
        counts[v as usize] += 1;
    }
    CaseStats { case_id: case.case_id.clone(), net: counts[1], ed: counts[2], et: counts[4] }
}

const SUBTYPE_NAMES: [&str; 3] = ["net", "ed", "et"];

/// Nearest-rank empirical quantile of a sorted slice.
fn quantile(sorted: &[usize], numer: usize, denom: usize) -> usize {
    let n = sorted.len();
    let rank = (numer * n).div_ceil(denom).max(1);
    sorted[rank - 1]
}

/// Assigns each case a stratum label: its tumor-size tertile crossed with
/// its dominant subtype. Ties in dominance go to the earliest of net/ed/et.
pub fn stratify(stats: &[CaseStats]) -> Result<Vec<String>> {
    if stats.len() < 10 {
        return Err(Error::Validation(format!(
            "stratification needs at least 10 cases, got {}",
            stats.len()
        )));
    }
    let mut sizes: Vec<usize> = stats.iter().map(CaseStats::size).collect();
    sizes.sort_unstable();
    let q1 = quantile(&sizes, 1, 3);
    let q2 = quantile(&sizes, 2, 3);
    Ok(stats
        .iter()
        .map(|s| {
            let size = s.size();
            let tertile = if size <= q1 {
                0
            } else if size <= q2 {
                1
            } else {
                2
            };
            let counts = [s.net, s.ed, s.et];
            let mut dominant = 0;
            for (i, &c) in counts.iter().enumerate() {
                if c > counts[dominant] {
                    dominant = i;
                }
            }
            format!("s{tertile}-{}", SUBTYPE_NAMES[dominant])
        })
        .collect())
}

/// One fold's three disjoint id sets.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FoldSplit {
    pub train: Vec<String>,
    pub val: Vec<String>,
    pub test: Vec<String>,
}

/// The full five-fold assignment, reproducible from its seed.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FoldAssignment {
    pub seed: u64,
    /// case id → stratum label
    pub strata: BTreeMap<String, String>,
    pub folds: Vec<FoldSplit>,
}

impl FoldAssignment {
    pub fn fold(&self, i: usize) -> Result<&FoldSplit> {
        self.folds
            .get(i)
            .ok_or_else(|| Error::Validation(format!("fold {i} out of range 0..{}", self.folds.len())))
    }
}

/// Builds the five-fold 80/10/10 assignment from per-case strata.
///
/// Within each stratum (visited in sorted label order) the ids are shuffled
/// once, then dealt round-robin into ten chunks starting at an offset that
/// rotates per stratum so leftover cases spread across chunks instead of
/// piling onto chunk zero. Identical seeds and case order reproduce the
/// assignment exactly.
pub fn kfold_split(stats: &[CaseStats], strata: &[String], seed: u64) -> Result<FoldAssignment> {
    if stats.len() != strata.len() {
        return Err(Error::Validation(format!(
            "{} cases but {} stratum labels",
            stats.len(),
            strata.len()
        )));
    }
    if stats.len() < 10 {
        return Err(Error::Validation(format!(
            "five folds at 80/10/10 need at least 10 cases, got {}",
            stats.len()
        )));
    }
    let mut by_stratum: BTreeMap<&str, Vec<&str>> = BTreeMap::new();
    for (s, label) in stats.iter().zip(strata) {
        by_stratum.entry(label).or_default().push(&s.case_id);
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut chunks: [Vec<&str>; 10] = Default::default();
    for (stratum_index, ids) in by_stratum.values_mut().enumerate() {
        ids.shuffle(&mut rng);
        for (j, id) in ids.iter().enumerate() {
            chunks[(j + stratum_index) % 10].push(id);
        }
    }

    let mut folds = Vec::with_capacity(5);
    for i in 0..5 {
        let val_chunk = 2 * i;
        let test_chunk = 2 * i + 1;
        let mut split = FoldSplit { train: vec![], val: vec![], test: vec![] };
        for (c, chunk) in chunks.iter().enumerate() {
            let target = if c == val_chunk {
                &mut split.val
            } else if c == test_chunk {
                &mut split.test
            } else {
                &mut split.train
            };
            target.extend(chunk.iter().map(|id| id.to_string()));
        }
        // membership is a set; sorted output keeps artifacts byte-stable
        split.train.sort();
        split.val.sort();
        split.test.sort();
        folds.push(split);
    }

    let strata_map =
        stats.iter().zip(strata).map(|(s, l)| (s.case_id.clone(), l.clone())).collect();
    Ok(FoldAssignment { seed, strata: strata_map, folds })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::phantom::{gen_phantom, PhantomSpec};
    use crate::data::cases::labels_to_masks;

    fn uniform_stats(n: usize) -> Vec<CaseStats> {
        (0..n)
            .map(|i| CaseStats { case_id: format!("c{i:03}"), net: 10, ed: 20, et: 5 })
            .collect()
    }

    /// size tertile varies with i, dominant subtype cycles
    fn varied_stats(n: usize) -> Vec<CaseStats> {
        (0..n)
            .map(|i| {
                let scale = 1 + (i % 3) * 40;
                let mut s =
                    CaseStats { case_id: format!("c{i:03}"), net: scale, ed: scale, et: scale };
                match i % 3 {
                    0 => s.net += 15,
                    1 => s.ed += 15,
                    _ => s.et += 15,
                }
                s
            })
            .collect()
    }

    #[test]
    fn counts_agree_with_the_mask_view_of_the_same_labels() {
        let case = gen_phantom(&PhantomSpec::for_extent(16), 2, "p").unwrap();
        let s = case_stats(&case);
        let [wt, tc, et] = labels_to_masks(&case.labels);
        let ones = |m: &crate::tensor::Tensor<u8>| m.data().iter().filter(|&&v| v == 1).count();
        assert_eq!(s.size(), ones(&wt));
        assert_eq!(s.net + s.et, ones(&tc));
        assert_eq!(s.et, ones(&et));
    }

    #[test]
    fn identical_cases_fall_into_one_stratum() {
        let stats = uniform_stats(12);
        let strata = stratify(&stats).unwrap();
        assert!(strata.iter().all(|l| l == &strata[0]));
        assert_eq!(strata[0], "s0-ed");
    }

    #[test]
    fn size_tertiles_split_three_clusters() {
        let mut stats = Vec::new();
        for (i, size) in [(0, 10usize), (1, 100), (2, 1000)] {
            for j in 0..4 {
                stats.push(CaseStats {
                    case_id: format!("c{i}{j}"),
                    net: 0,
                    ed: size,
                    et: 0,
                });
            }
        }
        let strata = stratify(&stats).unwrap();
        assert_eq!(&strata[0][..2], "s0");
        assert_eq!(&strata[4][..2], "s1");
        assert_eq!(&strata[8][..2], "s2");
        assert!(strata.iter().all(|l| l.ends_with("-ed")));
    }

    #[test]
    fn dominance_ties_resolve_in_fixed_order() {
        let mut stats = uniform_stats(10);
        stats[0].net = 20; // ties ed at 20 → net wins
        let strata = stratify(&stats).unwrap();
        assert!(strata[0].ends_with("-net"));
    }

    #[test]
    fn ten_cases_give_one_val_one_test_eight_train_per_fold() {
        let stats = uniform_stats(10);
        let strata = stratify(&stats).unwrap();
        let fa = kfold_split(&stats, &strata, 7).unwrap();
        assert_eq!(fa.folds.len(), 5);
        for fold in &fa.folds {
            assert_eq!(fold.val.len(), 1);
            assert_eq!(fold.test.len(), 1);
            assert_eq!(fold.train.len(), 8);
        }
    }

    #[test]
    fn each_fold_partitions_the_cases_exactly() {
        let stats = varied_stats(23);
        let strata = stratify(&stats).unwrap();
        let fa = kfold_split(&stats, &strata, 3).unwrap();
        let mut all: Vec<String> = stats.iter().map(|s| s.case_id.clone()).collect();
        all.sort();
        for fold in &fa.folds {
            let mut seen = Vec::new();
            seen.extend(fold.train.iter().cloned());
            seen.extend(fold.val.iter().cloned());
            seen.extend(fold.test.iter().cloned());
            seen.sort();
            assert_eq!(seen, all, "train ∪ val ∪ test must cover every case once");
        }
    }

    #[test]
    fn no_case_is_tested_twice_across_folds() {
        let stats = varied_stats(30);
        let strata = stratify(&stats).unwrap();
        let fa = kfold_split(&stats, &strata, 11).unwrap();
        let mut tested: Vec<&String> = fa.folds.iter().flat_map(|f| &f.test).collect();
        let before = tested.len();
        tested.sort();
        tested.dedup();
        assert_eq!(tested.len(), before);
    }

    #[test]
    fn same_seed_reproduces_and_different_seed_changes_the_assignment() {
        let stats = varied_stats(24);
        let strata = stratify(&stats).unwrap();
        let a = kfold_split(&stats, &strata, 5).unwrap();
        let b = kfold_split(&stats, &strata, 5).unwrap();
        assert_eq!(serde_json::to_string(&a).unwrap(), serde_json::to_string(&b).unwrap());
        let c = kfold_split(&stats, &strata, 6).unwrap();
        assert_ne!(
            serde_json::to_string(&a).unwrap(),
            serde_json::to_string(&c).unwrap(),
            "different seed should shuffle differently on 24 cases"
        );
    }

    #[test]
    fn per_stratum_proportions_hold_within_one_case() {
        let stats = varied_stats(60);
        let strata = stratify(&stats).unwrap();
        let fa = kfold_split(&stats, &strata, 1).unwrap();
        let mut stratum_totals: BTreeMap<&String, f64> = BTreeMap::new();
        for label in &strata {
            *stratum_totals.entry(label).or_default() += 1.0;
        }
        for fold in &fa.folds {
            for (subset, share) in
                [(&fold.train, 0.8), (&fold.val, 0.1), (&fold.test, 0.1)]
            {
                let mut counts: BTreeMap<&String, f64> = BTreeMap::new();
                for id in subset {
                    *counts.entry(&fa.strata[id]).or_default() += 1.0;
                }
                for (label, total) in &stratum_totals {
                    let got = counts.get(label).copied().unwrap_or(0.0);
                    let want = total * share;
                    assert!(
                        (got - want).abs() <= 1.0 + 1e-9,
                        "stratum {label}: {got} cases vs proportional {want}"
                    );
                }
            }
        }
    }

    #[test]
    fn too_few_cases_are_rejected() {
        let stats = uniform_stats(9);
        assert!(stratify(&stats).is_err());
        let strata = vec!["s0-ed".to_string(); 9];
        assert!(kfold_split(&stats, &strata, 0).is_err());
    }
}
