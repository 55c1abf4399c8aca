//! Patient-grouped cross-validation and triage metrics.

mod cv;
mod folds;
mod metrics;

use std::collections::HashMap;

use ndarray::{Array2, Axis};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::summarize::FeatureVector;

pub use cv::{
    derive_seed, run_cross_validation, tune_hyperparameters, CvConfig, CvReport, FoldReport,
    MetricsRow, PatientProbability, RocRow, TuningOutcome,
};
pub use folds::{stratified_group_kfold, FoldAssignment};
pub use metrics::{
    aggregate_patient_probability, confusion_at_threshold, metrics_from_confusion, roc_auc,
    roc_curve, trapezoid_area, ConfusionCounts, Degeneracy, RocPoint, ThresholdMetrics,
};

/// One study participant: the CV group and its class.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PatientRecord {
    pub patient_id: String,
    /// 1 = abnormal radiograph, 0 = normal.
    pub label: u8,
    pub cough_ids: Vec<String>,
}

/// Cough feature rows grouped by patient.
#[derive(Debug, Clone, PartialEq)]
pub struct CoughDataset {
    /// One row per cough.
    pub features: Array2<f64>,
    pub cough_ids: Vec<String>,
    /// Index into `patients` for every cough row.
    pub cough_patient: Vec<usize>,
    pub patients: Vec<PatientRecord>,
}

impl CoughDataset {
    /// Builds the dataset from labelled per-cough vectors. Patients appear in
    /// order of their first cough.
    pub fn from_vectors(rows: &[(FeatureVector, u8)]) -> Result<Self> {
        let Some((first, _)) = rows.first() else {
            return Err(Error::invalid("dataset has no coughs"));
        };
        let width = first.values.len();
        let mut features = Array2::zeros((rows.len(), width));
        let mut index: HashMap<&str, usize> = HashMap::new();
        let mut patients: Vec<PatientRecord> = Vec::new();
        let mut cough_patient = Vec::with_capacity(rows.len());
        let mut cough_ids = Vec::with_capacity(rows.len());
        for (r, (fv, label)) in rows.iter().enumerate() {
            if fv.values.len() != width {
                return Err(Error::invalid("feature vectors differ in length"));
            }
            if *label > 1 {
                return Err(Error::invalid(format!("label {label} is not 0 or 1")));
            }
            let p = *index.entry(fv.patient_id.as_str()).or_insert_with(|| {
                patients.push(PatientRecord {
                    patient_id: fv.patient_id.clone(),
                    label: *label,
                    cough_ids: Vec::new(),
                });
                patients.len() - 1
            });
            if patients[p].label != *label {
                return Err(Error::LabelConflict(fv.patient_id.clone()));
            }
            patients[p].cough_ids.push(fv.cough_id.clone());
            features.row_mut(r).assign(&ndarray::ArrayView1::from(&fv.values));
            cough_patient.push(p);
            cough_ids.push(fv.cough_id.clone());
        }
        Ok(Self {
            features,
            cough_ids,
            cough_patient,
            patients,
        })
    }

    pub fn n_coughs(&self) -> usize {
        self.features.nrows()
    }

    pub fn n_features(&self) -> usize {
        self.features.ncols()
    }

    pub fn cough_label(&self, row: usize) -> u8 {
        self.patients[self.cough_patient[row]].label
    }

    /// Cough rows belonging to the given patient indices, in row order.
    pub fn rows_of(&self, patients: &[usize]) -> Vec<usize> {
        let mut member = vec![false; self.patients.len()];
        for &p in patients {
            member[p] = true;
        }
        (0..self.n_coughs())
            .filter(|&r| member[self.cough_patient[r]])
            .collect()
    }

    pub fn select_features(&self, rows: &[usize]) -> Array2<f64> {
        self.features.select(Axis(0), rows)
    }

    pub fn select_labels(&self, rows: &[usize]) -> Vec<u8> {
        rows.iter().map(|&r| self.cough_label(r)).collect()
    }

    /// Same coughs with patient labels replaced by `labels[patient index]`.
    pub fn with_patient_labels(&self, labels: &[u8]) -> Result<Self> {
        if labels.len() != self.patients.len() {
            return Err(Error::invalid("one label per patient required"));
        }
        let mut out = self.clone();
        for (p, &l) in out.patients.iter_mut().zip(labels) {
            p.label = l;
        }
        Ok(out)
    }

    pub fn patient_index(&self, id: &str) -> Option<usize> {
        self.patients.iter().position(|p| p.patient_id == id)
    }
}
