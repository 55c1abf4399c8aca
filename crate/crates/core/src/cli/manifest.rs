use std::collections::{HashMap, HashSet};
use std::path::{Path, PathBuf};

use serde::Deserialize;

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ManifestRow {
    pub patient_id: String,
    /// Path as written in the manifest; used as the cough id.
    pub cough_ref: String,
    /// `cough_ref` resolved against the manifest's directory.
    pub cough_path: PathBuf,
    pub label: u8,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Manifest {
    pub rows: Vec<ManifestRow>,
}

#[derive(Deserialize)]
struct RawRow {
    patient_id: String,
    cough_path: String,
    label: String,
}

pub fn parse_label(token: &str) -> Result<u8> {
    match token.trim().to_ascii_lowercase().as_str() {
        "abnormal" => Ok(1),
        "normal" => Ok(0),
        _ => Err(Error::BadLabel(token.to_string())),
    }
}

impl Manifest {
    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn n_patients(&self) -> usize {
        self.rows
            .iter()
            .map(|r| r.patient_id.as_str())
            .collect::<HashSet<_>>()
            .len()
    }
}

/// Reads a `patient_id,cough_path,label` CSV and validates it.
pub fn load_manifest(path: &Path) -> Result<Manifest> {
    let base = path.parent().unwrap_or(Path::new(""));
    let mut reader = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_path(path)?;
    let headers = reader.headers()?.clone();
    let expected = ["patient_id", "cough_path", "label"];
    if headers.iter().collect::<Vec<_>>() != expected {
        return Err(Error::invalid(format!(
            "manifest header must be {}, found {}",
            expected.join(","),
            headers.iter().collect::<Vec<_>>().join(",")
        )));
    }

    let mut rows = Vec::new();
    let mut labels: HashMap<String, u8> = HashMap::new();
    let mut seen = HashSet::new();
    for record in reader.deserialize::<RawRow>() {
        let raw = record?;
        let label = parse_label(&raw.label)?;
        if let Some(&prev) = labels.get(&raw.patient_id) {
            if prev != label {
                return Err(Error::LabelConflict(raw.patient_id));
            }
        }
        labels.insert(raw.patient_id.clone(), label);
        if !seen.insert((raw.patient_id.clone(), raw.cough_path.clone())) {
            return Err(Error::invalid(format!(
                "duplicate manifest row {},{}",
                raw.patient_id, raw.cough_path
            )));
        }
        let cough_path = base.join(&raw.cough_path);
        if !cough_path.is_file() {
            return Err(Error::MissingAudio(cough_path));
        }
        rows.push(ManifestRow {
            patient_id: raw.patient_id,
            cough_ref: raw.cough_path,
            cough_path,
            label,
        });
    }
    if rows.is_empty() {
        return Err(Error::ManifestEmpty);
    }
    Ok(Manifest { rows })
}
