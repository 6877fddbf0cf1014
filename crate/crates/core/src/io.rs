//! Matrix CSV files and population manifests.
//!
//! A matrix file holds `n` lines of `n` comma-separated decimals and no header.
//! A manifest is a JSON document listing subjects and, per timepoint, the path
//! of each subject's matrix file relative to the manifest's directory.

use std::fs;
use std::path::{Path, PathBuf};

use indexmap::IndexMap;
use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matrix::ConnectivityMatrix;
use crate::population::{Population, SubjectTrajectory};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub n_rois: usize,
    pub timepoints: Vec<String>,
    pub subjects: Vec<ManifestSubject>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestSubject {
    pub id: String,
    pub matrices: IndexMap<String, String>,
}

fn parse_error(path: &Path, line: usize, message: impl Into<String>) -> Error {
    Error::Parse {
        path: path.to_path_buf(),
        line,
        message: message.into(),
    }
}

/// Parses matrix CSV text. `path` is only used in error messages.
pub fn parse_matrix(text: &str, path: &Path) -> Result<ConnectivityMatrix> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(text.as_bytes());
    let mut rows: Vec<Vec<f64>> = Vec::new();
    for (i, record) in reader.records().enumerate() {
        let record = record.map_err(|e| parse_error(path, i + 1, e.to_string()))?;
        let row = record
            .iter()
            .map(|field| {
                field
                    .parse::<f64>()
                    .map_err(|_| parse_error(path, i + 1, format!("not a number: {field:?}")))
            })
            .collect::<Result<Vec<_>>>()?;
        rows.push(row);
    }
    let n = rows.len();
    if n == 0 {
        return Err(parse_error(path, 0, "empty matrix file"));
    }
    if let Some((i, row)) = rows.iter().enumerate().find(|(_, r)| r.len() != n) {
        return Err(parse_error(
            path,
            i + 1,
            format!("row has {} values, expected {n}", row.len()),
        ));
    }
    let flat = rows.into_iter().flatten().collect();
    let weights = Array2::from_shape_vec((n, n), flat).expect("square by construction");
    ConnectivityMatrix::new(weights).map_err(|e| match e {
        Error::Validation(msg) => Error::Validation(format!("{}: {msg}", path.display())),
        other => other,
    })
}

/// Matrix as CSV text. `{}` formatting of f64 is shortest-round-trip, so
/// parsing the output restores every finite value bit-exactly.
pub fn format_matrix(x: &ConnectivityMatrix) -> String {
    let mut out = String::new();
    for row in x.weights().rows() {
        let line: Vec<String> = row.iter().map(|w| format!("{w}")).collect();
        out.push_str(&line.join(","));
        out.push('\n');
    }
    out
}

pub fn load_matrix(path: impl AsRef<Path>) -> Result<ConnectivityMatrix> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_matrix(&text, path)
}

pub fn save_matrix(x: &ConnectivityMatrix, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, format_matrix(x)).map_err(|e| Error::io(path, e))
}

pub fn read_json<T: for<'de> Deserialize<'de>>(path: impl AsRef<Path>) -> Result<T> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    serde_json::from_str(&text).map_err(|source| Error::Json {
        path: path.to_path_buf(),
        source,
    })
}

pub fn write_json<T: Serialize>(value: &T, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let mut text = serde_json::to_string_pretty(value).map_err(|source| Error::Json {
        path: path.to_path_buf(),
        source,
    })?;
    text.push('\n');
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

pub fn load_population(manifest_path: impl AsRef<Path>) -> Result<Population> {
    let manifest_path = manifest_path.as_ref();
    let manifest: Manifest = read_json(manifest_path)?;
    let root = manifest_path.parent().unwrap_or(Path::new("."));
    let mut subjects = Vec::with_capacity(manifest.subjects.len());
    for entry in &manifest.subjects {
        let mut subject = SubjectTrajectory::new(entry.id.clone());
        for (timepoint, rel) in &entry.matrices {
            if !manifest.timepoints.contains(timepoint) {
                return Err(Error::Validation(format!(
                    "subject {} references unknown timepoint {timepoint}",
                    entry.id
                )));
            }
            let file = root.join(rel);
            if !file.is_file() {
                return Err(Error::Validation(format!(
                    "subject {} timepoint {timepoint}: missing file {}",
                    entry.id,
                    file.display()
                )));
            }
            subject.matrices.insert(timepoint.clone(), load_matrix(&file)?);
        }
        subjects.push(subject);
    }
    Population::new(manifest.n_rois, manifest.timepoints, subjects)
}

/// Writes one CSV per (subject, timepoint) under `dir/matrices/` and the
/// manifest at `dir/manifest.json`. Returns the manifest path.
pub fn save_population(population: &Population, dir: impl AsRef<Path>) -> Result<PathBuf> {
    let dir = dir.as_ref();
    let matrix_dir = dir.join("matrices");
    fs::create_dir_all(&matrix_dir).map_err(|e| Error::io(&matrix_dir, e))?;
    let mut subjects = Vec::with_capacity(population.n_subjects());
    for s in population.subjects() {
        let mut matrices = IndexMap::new();
        for (t, x) in &s.matrices {
            let rel = format!("matrices/{}_{}.csv", s.subject_id, t);
            save_matrix(x, dir.join(&rel))?;
            matrices.insert(t.clone(), rel);
        }
        subjects.push(ManifestSubject {
            id: s.subject_id.clone(),
            matrices,
        });
    }
    let manifest = Manifest {
        n_rois: population.n_rois(),
        timepoints: population.timepoints().to_vec(),
        subjects,
    };
    let path = dir.join("manifest.json");
    write_json(&manifest, &path)?;
    Ok(path)
}
