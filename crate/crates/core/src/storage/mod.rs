//! On-disk formats: binary features, tab-separated manifests and
//! predictions, hex-exact model files, and calibration parameters.

mod calibration_file;
mod features;
mod manifest;
mod model_file;
mod predictions;

pub use calibration_file::{read_calibration, write_calibration};
pub use features::{read_features, write_features, FeatureMatrix, FEATURE_HEADER_LEN, FEATURE_MAGIC};
pub use manifest::{format_manifest, parse_manifest, parse_manifest_str, write_manifest};
pub use model_file::{load_model, model_from_str, model_to_string, save_model, MODEL_HEADER};
pub use predictions::{format_predictions, parse_predictions, read_predictions, write_predictions, PredictionRow};

use std::path::Path;

use crate::error::{Error, Result};

/// Writes `contents` to `path` in one call.
pub(crate) fn write_text(path: &Path, contents: &str) -> Result<()> {
    std::fs::write(path, contents).map_err(|e| Error::io(path, e))
}

pub(crate) fn read_text(path: &Path) -> Result<String> {
    std::fs::read_to_string(path).map_err(|e| Error::io(path, e))
}
