//! Cohort manifests: JSON listing each subject's label and matrix files,
//! with paths relative to the manifest.

use std::path::{Path, PathBuf};

use hkgf_core::graphs::{
    build_fc_graph_with, build_sc_graph, fc_graph_from_correlation, FcOptions, Subject,
    TimeSeriesMatrix,
};
use serde::{Deserialize, Serialize};

use crate::error::{CliError, Result};
use crate::io::{read_json, read_matrix};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ManifestEntry {
    pub id: String,
    pub label: u8,
    /// ROI × time series; the FC graph is built from their correlations.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fc_timeseries_path: Option<PathBuf>,
    /// Precomputed ROI × ROI correlation matrix, used instead of a series.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fc_matrix_path: Option<PathBuf>,
    pub sc_fn_path: PathBuf,
    pub sc_fa_path: PathBuf,
    pub sc_fl_path: PathBuf,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Manifest {
    pub subjects: Vec<ManifestEntry>,
}

fn resolve(base: &Path, p: &Path) -> Result<PathBuf> {
    let full = base.join(p);
    if !full.is_file() {
        return Err(CliError::Invalid(format!(
            "manifest references missing file {}",
            full.display()
        )));
    }
    Ok(full)
}

impl ManifestEntry {
    pub fn load(&self, base: &Path, fc: &FcOptions) -> Result<Subject> {
        let fc_graph = match (&self.fc_timeseries_path, &self.fc_matrix_path) {
            (Some(ts), None) => {
                let ts = TimeSeriesMatrix::new(read_matrix(&resolve(base, ts)?)?)?;
                build_fc_graph_with(&ts, fc)?
            }
            (None, Some(m)) => fc_graph_from_correlation(read_matrix(&resolve(base, m)?)?, fc)?,
            _ => {
                return Err(CliError::Invalid(format!(
                    "subject {}: give exactly one of fc_timeseries_path and fc_matrix_path",
                    self.id
                )))
            }
        };
        let sc = build_sc_graph(
            &read_matrix(&resolve(base, &self.sc_fn_path)?)?,
            &read_matrix(&resolve(base, &self.sc_fa_path)?)?,
            &read_matrix(&resolve(base, &self.sc_fl_path)?)?,
        )?;
        Ok(Subject::new(self.id.clone(), self.label, vec![fc_graph, sc])?)
    }
}

/// Loads every subject of a manifest, sorted by id.
pub fn load_cohort(manifest_path: &Path, fc: &FcOptions) -> Result<Vec<Subject>> {
    if !manifest_path.is_file() {
        return Err(CliError::Invalid(format!(
            "manifest {} not found",
            manifest_path.display()
        )));
    }
    let manifest: Manifest = read_json(manifest_path)?;
    let base = manifest_path.parent().unwrap_or(Path::new("."));
    let mut seen = std::collections::BTreeSet::new();
    for e in &manifest.subjects {
        if !seen.insert(&e.id) {
            return Err(CliError::Invalid(format!("duplicate subject id {}", e.id)));
        }
    }
    let mut subjects: Vec<Subject> = manifest
        .subjects
        .iter()
        .map(|e| e.load(base, fc))
        .collect::<Result<_>>()?;
    subjects.sort_by(|a, b| a.id.cmp(&b.id));
    if subjects.is_empty() {
        return Err(CliError::Invalid("manifest lists no subjects".into()));
    }
    Ok(subjects)
}
