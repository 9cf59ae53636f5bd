//! Stratified splitting and the statistical comparison machinery.

pub mod split;
pub mod ttest;

pub use split::{case_stats, kfold_split, stratify, CaseStats, FoldAssignment, FoldSplit};
pub use ttest::{
    cohens_d_interpret, paired_t_test, pearson_corr, reg_inc_beta, student_t_two_tailed,
    EffectSize, TTestResult,
};
