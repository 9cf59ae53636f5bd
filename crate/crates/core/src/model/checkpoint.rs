//! Checkpoints: a directory holding one AVOL file per parameter tensor and a
//! JSON manifest mapping parameter names to files alongside the model config.

use super::blocks::ParamSet;
use super::config::ModelConfig;
use super::network::ModelParams;
use crate::data::avol;
use crate::error::{Error, Result};
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::path::Path;

pub const MANIFEST_NAME: &str = "manifest.json";

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Manifest {
    params: BTreeMap<String, String>,
    model: ModelConfig,
}

/// Writes every parameter tensor plus `manifest.json` into `dir` (created if
/// absent; existing files are overwritten).
pub fn save_checkpoint(dir: &Path, params: &ModelParams<f32>) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let mut files = BTreeMap::new();
    for (name, tensor) in params.tensors("") {
        let file = format!("{name}.avol");
        avol::write(&dir.join(&file), tensor)?;
        files.insert(name, file);
    }
    let manifest = Manifest { params: files, model: params.config.clone() };
    let text = serde_json::to_string_pretty(&manifest)
        .map_err(|e| Error::format(dir, format!("manifest serialization: {e}")))?;
    std::fs::write(dir.join(MANIFEST_NAME), text)
        .map_err(|e| Error::io(&dir.join(MANIFEST_NAME), e))
}

/// Rebuilds the model from a checkpoint directory. The manifest must name
/// exactly the parameters the stored config implies, and every tensor must
/// match its expected shape.
pub fn load_checkpoint(dir: &Path) -> Result<ModelParams<f32>> {
    let manifest_path = dir.join(MANIFEST_NAME);
    let text = std::fs::read_to_string(&manifest_path).map_err(|e| Error::io(&manifest_path, e))?;
    let manifest: Manifest = serde_json::from_str(&text)
        .map_err(|e| Error::format(&manifest_path, format!("manifest parse: {e}")))?;
    let mut params = ModelParams::<f32>::zeros(&manifest.model)?;
    let mut seen = 0usize;
    for (name, tensor) in params.tensors_mut("") {
        let file = manifest.params.get(&name).ok_or_else(|| {
            Error::format(&manifest_path, format!("manifest is missing parameter {name}"))
        })?;
        let loaded = avol::read::<f32>(&dir.join(file))?;
        if loaded.shape() != tensor.shape() {
            return Err(Error::Shape(format!(
                "checkpoint tensor {name} has shape {:?}, model expects {:?}",
                loaded.shape(),
                tensor.shape()
            )));
        }
        *tensor = loaded;
        seen += 1;
    }
    if seen != manifest.params.len() {
        let expected: std::collections::BTreeSet<String> =
            params.tensors("").into_iter().map(|(n, _)| n).collect();
        let extra: Vec<&String> =
            manifest.params.keys().filter(|k| !expected.contains(*k)).collect();
        return Err(Error::format(
            &manifest_path,
            format!("manifest names unknown parameters: {extra:?}"),
        ));
    }
    Ok(params)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small_params(seed: u64) -> ModelParams<f32> {
        let config = ModelConfig {
            in_channels: 2,
            out_classes: 3,
            base_filters: 2,
            levels: 1,
            bottleneck_filters: 4,
            seed: 0,
        };
        let mut p = ModelParams::<f32>::zeros(&config).unwrap();
        let mut s = seed;
        for (_, t) in p.tensors_mut("") {
            for v in t.data_mut() {
                s = s.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
                *v = (((s >> 33) as f64 / (1u64 << 30) as f64) - 1.0) as f32;
            }
        }
        p
    }

    #[test]
    fn round_trip_preserves_every_bit() {
        let dir = tempfile::tempdir().unwrap();
        let params = small_params(5);
        save_checkpoint(dir.path(), &params).unwrap();
        let loaded = load_checkpoint(dir.path()).unwrap();
        assert_eq!(loaded.config, params.config);
        for ((na, a), (nb, b)) in params.tensors("").iter().zip(loaded.tensors("").iter()) {
            assert_eq!(na, nb);
            assert_eq!(a.shape(), b.shape());
            for (x, y) in a.data().iter().zip(b.data()) {
                assert_eq!(x.to_bits(), y.to_bits(), "{na}");
            }
        }
    }

    #[test]
    fn missing_parameter_file_is_reported() {
        let dir = tempfile::tempdir().unwrap();
        save_checkpoint(dir.path(), &small_params(7)).unwrap();
        std::fs::remove_file(dir.path().join("head.weight.avol")).unwrap();
        let err = load_checkpoint(dir.path()).unwrap_err();
        assert!(err.to_string().contains("head.weight"), "{err}");
    }

    #[test]
    fn corrupt_manifest_is_a_format_error() {
        let dir = tempfile::tempdir().unwrap();
        save_checkpoint(dir.path(), &small_params(9)).unwrap();
        std::fs::write(dir.path().join(MANIFEST_NAME), "{not json").unwrap();
        let err = load_checkpoint(dir.path()).unwrap_err();
        assert!(matches!(err, Error::Format { .. }), "{err}");
    }

    #[test]
    fn tampered_tensor_shape_is_rejected() {
        let dir = tempfile::tempdir().unwrap();
        save_checkpoint(dir.path(), &small_params(11)).unwrap();
        let bad = crate::tensor::Tensor::from_vec(&[2], vec![0.0f32, 1.0]).unwrap();
        avol::write(&dir.path().join("head.bias.avol"), &bad).unwrap();
        let err = load_checkpoint(dir.path()).unwrap_err();
        assert!(matches!(err, Error::Shape(_)), "{err}");
    }

    #[test]
    fn unknown_manifest_entries_are_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let params = small_params(13);
        save_checkpoint(dir.path(), &params).unwrap();
        let text = std::fs::read_to_string(dir.path().join(MANIFEST_NAME)).unwrap();
        let mut manifest: serde_json::Value = serde_json::from_str(&text).unwrap();
        manifest["params"]["ghost.weight"] = serde_json::json!("head.weight.avol");
        std::fs::write(
            dir.path().join(MANIFEST_NAME),
            serde_json::to_string(&manifest).unwrap(),
        )
        .unwrap();
        let err = load_checkpoint(dir.path()).unwrap_err();
        assert!(err.to_string().contains("ghost.weight"), "{err}");
    }
}
