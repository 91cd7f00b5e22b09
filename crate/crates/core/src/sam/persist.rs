//! Versioned JSON model files.

use std::path::Path;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use super::{FeatureFit, FitMeta, SamModel, Standardization};
use crate::error::{Error, Result};

pub const FORMAT_VERSION: u32 = 1;

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ModelFile {
    format_version: u32,
    feature_names: Vec<String>,
    intercepts: Vec<Option<f64>>,
    /// Row-major `d·d`.
    coefficients: Vec<Option<f64>>,
    fit_meta: FitMetaFile,
    created_unix_seconds: u64,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct FitMetaFile {
    features: Vec<FeatureFitFile>,
    #[serde(default)]
    standardization: Option<StandardizationFile>,
    #[serde(default)]
    normalize_default: bool,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct FeatureFitFile {
    used_ransac: bool,
    converged: bool,
    degenerate: bool,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct StandardizationFile {
    means: Vec<f64>,
    stds: Vec<f64>,
}

pub fn model_to_json(model: &SamModel) -> String {
    let d = model.d();
    let file = ModelFile {
        format_version: model.format_version,
        feature_names: model.feature_names.clone(),
        intercepts: model.intercepts.iter().map(|&v| Some(v)).collect(),
        coefficients: (0..d * d).map(|k| Some(model.coefficients[(k / d, k % d)])).collect(),
        fit_meta: FitMetaFile {
            features: model
                .fit_meta
                .features
                .iter()
                .map(|f| FeatureFitFile {
                    used_ransac: f.used_ransac,
                    converged: f.converged,
                    degenerate: f.degenerate,
                })
                .collect(),
            standardization: model.fit_meta.standardization.as_ref().map(|s| StandardizationFile {
                means: s.means.clone(),
                stds: s.stds.clone(),
            }),
            normalize_default: model.fit_meta.normalize_default,
        },
        created_unix_seconds: model.created_unix_seconds,
    };
    serde_json::to_string_pretty(&file).expect("model serializes")
}

fn byte_offset(text: &str, line: usize, column: usize) -> usize {
    if line == 0 {
        return 0;
    }
    let line_start: usize = text.split_inclusive('\n').take(line - 1).map(str::len).sum();
    (line_start + column).min(text.len())
}

fn finite_all(values: Vec<Option<f64>>, what: &str) -> Result<Vec<f64>> {
    values
        .into_iter()
        .enumerate()
        .map(|(k, v)| match v {
            Some(x) if x.is_finite() => Ok(x),
            _ => Err(Error::InvalidModel(format!("non-finite {what} entry at index {k}"))),
        })
        .collect()
}

pub fn model_from_json(text: &str) -> Result<SamModel> {
    // version first, so a newer file fails with a version error rather than a schema one
    if let Ok(probe) = serde_json::from_str::<serde_json::Value>(text) {
        if let Some(v) = probe.get("format_version").and_then(|v| v.as_u64()) {
            if v != u64::from(FORMAT_VERSION) {
                return Err(Error::UnsupportedVersion {
                    found: v.try_into().unwrap_or(u32::MAX),
                    supported: FORMAT_VERSION,
                });
            }
        }
    }
    let file: ModelFile = serde_json::from_str(text).map_err(|e| Error::ModelParse {
        offset: byte_offset(text, e.line(), e.column()),
        line: e.line(),
        column: e.column(),
        message: e.to_string(),
    })?;
    let d = file.feature_names.len();
    if file.coefficients.len() != d * d {
        return Err(Error::InvalidModel(format!(
            "{} coefficients for {d} features (expected {})",
            file.coefficients.len(),
            d * d
        )));
    }
    let coefficients = finite_all(file.coefficients, "coefficient")?;
    let intercepts = finite_all(file.intercepts, "intercept")?;
    let fit_meta = FitMeta {
        features: file
            .fit_meta
            .features
            .into_iter()
            .map(|f| FeatureFit {
                used_ransac: f.used_ransac,
                converged: f.converged,
                degenerate: f.degenerate,
            })
            .collect(),
        standardization: file.fit_meta.standardization.map(|s| Standardization {
            means: s.means,
            stds: s.stds,
        }),
        normalize_default: file.fit_meta.normalize_default,
    };
    let mut model = SamModel::new(
        DMatrix::from_row_slice(d, d, &coefficients),
        intercepts,
        file.feature_names,
        fit_meta,
    )?;
    model.format_version = file.format_version;
    model.created_unix_seconds = file.created_unix_seconds;
    Ok(model)
}

pub fn save_model(model: &SamModel, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    std::fs::write(path, model_to_json(model)).map_err(|e| Error::io(path, e))
}

pub fn load_model(path: impl AsRef<Path>) -> Result<SamModel> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    model_from_json(&text)
}
