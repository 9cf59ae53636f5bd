pub mod eval;
pub mod gen;
pub mod gradcheck;
pub mod info;
pub mod split;
pub mod stats;
pub mod train;

use std::path::{Path, PathBuf};

use voxelseg::data::{load_case, preprocess_case, Case};
use voxelseg::stats::FoldAssignment;
use voxelseg::{Error, Result};

pub fn load_assignment(path: &Path) -> Result<FoldAssignment> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    serde_json::from_str(&text)
        .map_err(|e| Error::format(path, format!("fold assignment: {e}")))
}

/// Flag value first, config-file value second; neither is an error.
pub fn resolve_path(flag: &str, cli: &Option<PathBuf>, cfg: &Option<PathBuf>) -> Result<PathBuf> {
    cli.clone().or_else(|| cfg.clone()).ok_or_else(|| {
        Error::Validation(format!("{flag} missing: pass the flag or set it in the config file"))
    })
}

/// Loads the named cases and preprocesses each one: center-crop to the
/// largest cube whose edge the model can pool down (a multiple of
/// `divisor`), then min-max normalize every modality.
pub fn load_split_cases(data: &Path, ids: &[String], divisor: usize) -> Result<Vec<Case>> {
    let mut cases = Vec::with_capacity(ids.len());
    for id in ids {
        let case = load_case(&data.join(id))?;
        let min_extent = case.extents().iter().copied().min().expect("cases are 3D");
        let target = (min_extent / divisor) * divisor;
        if target == 0 {
            return Err(Error::Validation(format!(
                "case {id} extents {:?} are below the model's {divisor}-voxel granularity",
                case.extents()
            )));
        }
        cases.push(preprocess_case(&case, target)?);
    }
    Ok(cases)
}
