//! Outer stratified group k-fold evaluation with nested tuning.
//!
//! Each outer fold fits the standardizer and the model on training
//! patients only, scores every held-out cough, averages cough
//! probabilities per patient and computes the metrics on patients. All
//! randomness derives from the root seed through [`derive_seed`], so folds
//! and grid points can run on any number of threads with identical output.

use std::io::Write;

use log::{debug, warn};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::evaluation::{
    aggregate_patient_probability, confusion_at_threshold, metrics_from_confusion, roc_auc,
    roc_curve, stratified_group_kfold, ConfusionCounts, CoughDataset, Degeneracy, PatientRecord,
};
use crate::models::{self, Hyperparams, ModelFamily, Standardizer, TrainingOptions};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CvConfig {
    pub k_outer: usize,
    pub k_inner: usize,
    pub seed: u64,
    pub threshold: f64,
    pub training: TrainingOptions,
}

impl Default for CvConfig {
    fn default() -> Self {
        Self {
            k_outer: 4,
            k_inner: 5,
            seed: 0,
            threshold: 0.5,
            training: TrainingOptions::default(),
        }
    }
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Child seed for the stream identified by `path` under `root`.
pub fn derive_seed(root: u64, path: &[u64]) -> u64 {
    path.iter()
        .fold(splitmix64(root), |acc, &p| splitmix64(acc ^ splitmix64(p)))
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct MetricsRow {
    pub sensitivity: f64,
    pub specificity: f64,
    pub precision: f64,
    pub f1: f64,
    pub roc_auc: f64,
}

impl MetricsRow {
    fn as_array(&self) -> [f64; 5] {
        [
            self.sensitivity,
            self.specificity,
            self.precision,
            self.f1,
            self.roc_auc,
        ]
    }

    fn from_array(v: [f64; 5]) -> Self {
        Self {
            sensitivity: v[0],
            specificity: v[1],
            precision: v[2],
            f1: v[3],
            roc_auc: v[4],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TuningOutcome {
    pub best: Hyperparams,
    /// Mean inner patient-level AUC of every grid point, in grid order.
    pub scores: Vec<f64>,
    pub inner_k: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FoldReport {
    pub fold: usize,
    pub n_train_patients: usize,
    pub n_test_patients: usize,
    pub n_train_coughs: usize,
    pub n_test_coughs: usize,
    pub hyperparams: Hyperparams,
    /// `None` when tuning was skipped (single grid point or too few
    /// patients per class for an inner split).
    pub tuning: Option<TuningOutcome>,
    pub confusion: ConfusionCounts,
    pub metrics: MetricsRow,
    pub degenerate: Degeneracy,
    pub standardizer_fingerprint: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PatientProbability {
    pub patient_id: String,
    pub label: u8,
    pub mean_prob: f64,
    pub fold: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RocRow {
    pub fold: usize,
    pub fpr: f64,
    pub tpr: f64,
    pub threshold: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CvReport {
    pub family: ModelFamily,
    pub config: CvConfig,
    pub grid: Vec<Hyperparams>,
    pub folds: Vec<FoldReport>,
    pub mean: MetricsRow,
    /// Population standard deviation over folds.
    pub std: MetricsRow,
    pub patient_probabilities: Vec<PatientProbability>,
    pub roc: Vec<RocRow>,
}

impl CvReport {
    pub fn to_json(&self) -> Result<String> {
        let mut s = serde_json::to_string_pretty(self)?;
        s.push('\n');
        Ok(s)
    }

    pub fn write_patient_probs_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["patient_id", "label", "mean_prob", "fold"])?;
        for p in &self.patient_probabilities {
            w.write_record([
                p.patient_id.clone(),
                p.label.to_string(),
                p.mean_prob.to_string(),
                p.fold.to_string(),
            ])?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn write_roc_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["fold", "fpr", "tpr", "threshold"])?;
        for r in &self.roc {
            w.write_record([
                r.fold.to_string(),
                r.fpr.to_string(),
                r.tpr.to_string(),
                r.threshold.to_string(),
            ])?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Fits standardizer and model on `train` patients and returns the mean
/// cough probability of every `test` patient, in `test` order.
fn fit_and_score(
    ds: &CoughDataset,
    train: &[usize],
    test: &[usize],
    hp: &Hyperparams,
    training: &TrainingOptions,
    seed: u64,
) -> Result<(Standardizer, Vec<f64>, usize, usize)> {
    let train_rows = ds.rows_of(train);
    let test_rows = ds.rows_of(test);
    let scaler = Standardizer::fit(ds.select_features(&train_rows).view())?;
    let x_train = scaler.transform(ds.select_features(&train_rows).view())?;
    let y_train = ds.select_labels(&train_rows);
    let model = models::train(hp, training, x_train.view(), &y_train, seed)?;

    let x_test = scaler.transform(ds.select_features(&test_rows).view())?;
    let cough_probs = model.predict_proba(x_test.view())?;
    let mut per_patient: Vec<Vec<f64>> = vec![Vec::new(); ds.patients.len()];
    for (&row, p) in test_rows.iter().zip(cough_probs) {
        per_patient[ds.cough_patient[row]].push(p);
    }
    let patient_probs = test
        .iter()
        .map(|&p| aggregate_patient_probability(&per_patient[p]))
        .collect::<Result<Vec<_>>>()?;
    Ok((scaler, patient_probs, train_rows.len(), test_rows.len()))
}

/// Patient indices of `ids`.
fn indices_of(ds: &CoughDataset, ids: &[&str]) -> Vec<usize> {
    ids.iter()
        .map(|id| ds.patient_index(id).expect("fold assignment built from dataset"))
        .collect()
}

fn subset_records(ds: &CoughDataset, patients: &[usize]) -> Vec<PatientRecord> {
    patients.iter().map(|&p| ds.patients[p].clone()).collect()
}

/// Picks the grid point with the highest mean inner-fold patient AUC;
/// earlier points win ties.
pub fn tune_hyperparameters(
    ds: &CoughDataset,
    train_patients: &[usize],
    grid: &[Hyperparams],
    training: &TrainingOptions,
    inner_k: usize,
    seed: u64,
) -> Result<TuningOutcome> {
    if grid.is_empty() {
        return Err(Error::invalid("hyperparameter grid is empty"));
    }
    let records = subset_records(ds, train_patients);
    let assignment = stratified_group_kfold(&records, inner_k, derive_seed(seed, &[0]))?;
    let splits: Vec<(Vec<usize>, Vec<usize>)> = (0..inner_k)
        .map(|f| {
            (
                indices_of(ds, &assignment.train_patients(f)),
                indices_of(ds, &assignment.test_patients(f)),
            )
        })
        .collect();

    let scores = grid
        .par_iter()
        .enumerate()
        .map(|(g, hp)| {
            let mut total = 0.0;
            for (f, (train, test)) in splits.iter().enumerate() {
                let model_seed = derive_seed(seed, &[1, g as u64, f as u64]);
                let (_, probs, _, _) = fit_and_score(ds, train, test, hp, training, model_seed)?;
                let labels: Vec<u8> = test.iter().map(|&p| ds.patients[p].label).collect();
                total += roc_auc(&labels, &probs)?;
            }
            Ok(total / inner_k as f64)
        })
        .collect::<Result<Vec<f64>>>()?;

    let mut best = 0;
    for (g, &s) in scores.iter().enumerate() {
        if s > scores[best] {
            best = g;
        }
    }
    debug!("inner scores {scores:?}, picked grid point {best}");
    Ok(TuningOutcome {
        best: grid[best].clone(),
        scores,
        inner_k,
    })
}

struct FoldOutput {
    report: FoldReport,
    patients: Vec<PatientProbability>,
    roc: Vec<RocRow>,
}

fn run_fold(
    ds: &CoughDataset,
    train: &[usize],
    test: &[usize],
    fold: usize,
    grid: &[Hyperparams],
    cfg: &CvConfig,
) -> Result<FoldOutput> {
    let train_pos = train.iter().filter(|&&p| ds.patients[p].label == 1).count();
    let smallest_class = train_pos.min(train.len() - train_pos);
    let inner_k = cfg.k_inner.min(smallest_class);
    let tuning = if grid.len() == 1 {
        None
    } else if inner_k < 2 {
        warn!(
            "fold {fold}: {smallest_class} training patients in the smaller class, \
             skipping tuning and using the first grid point"
        );
        None
    } else {
        if inner_k < cfg.k_inner {
            warn!("fold {fold}: inner CV reduced to {inner_k} folds");
        }
        Some(tune_hyperparameters(
            ds,
            train,
            grid,
            &cfg.training,
            inner_k,
            derive_seed(cfg.seed, &[2, fold as u64]),
        )?)
    };
    let hp = tuning.as_ref().map_or_else(|| grid[0].clone(), |t| t.best.clone());

    let (scaler, probs, n_train_coughs, n_test_coughs) = fit_and_score(
        ds,
        train,
        test,
        &hp,
        &cfg.training,
        derive_seed(cfg.seed, &[3, fold as u64]),
    )?;
    let labels: Vec<u8> = test.iter().map(|&p| ds.patients[p].label).collect();
    let confusion = confusion_at_threshold(&labels, &probs, cfg.threshold)?;
    let tm = metrics_from_confusion(&confusion);
    let auc = roc_auc(&labels, &probs)?;
    let roc = roc_curve(&labels, &probs)?
        .into_iter()
        .map(|p| RocRow {
            fold,
            fpr: p.fpr,
            tpr: p.tpr,
            threshold: p.threshold,
        })
        .collect();
    let patients = test
        .iter()
        .zip(&probs)
        .map(|(&p, &mean_prob)| PatientProbability {
            patient_id: ds.patients[p].patient_id.clone(),
            label: ds.patients[p].label,
            mean_prob,
            fold,
        })
        .collect();

    Ok(FoldOutput {
        report: FoldReport {
            fold,
            n_train_patients: train.len(),
            n_test_patients: test.len(),
            n_train_coughs,
            n_test_coughs,
            hyperparams: hp,
            tuning,
            confusion,
            metrics: MetricsRow {
                sensitivity: tm.sensitivity,
                specificity: tm.specificity,
                precision: tm.precision,
                f1: tm.f1,
                roc_auc: auc,
            },
            degenerate: tm.degenerate,
            standardizer_fingerprint: format!("{:016x}", scaler.fingerprint()),
        },
        patients,
        roc,
    })
}

/// Stratified group k-fold evaluation of one model family.
pub fn run_cross_validation(
    ds: &CoughDataset,
    family: ModelFamily,
    grid: &[Hyperparams],
    cfg: &CvConfig,
) -> Result<CvReport> {
    if grid.is_empty() {
        return Err(Error::invalid("hyperparameter grid is empty"));
    }
    if let Some(hp) = grid.iter().find(|hp| hp.family() != family) {
        return Err(Error::invalid(format!(
            "grid point {hp:?} does not belong to family {family}"
        )));
    }
    let assignment = stratified_group_kfold(&ds.patients, cfg.k_outer, derive_seed(cfg.seed, &[1]))?;

    let outputs: Vec<FoldOutput> = (0..cfg.k_outer)
        .into_par_iter()
        .map(|fold| {
            let train = indices_of(ds, &assignment.train_patients(fold));
            let test = indices_of(ds, &assignment.test_patients(fold));
            run_fold(ds, &train, &test, fold, grid, cfg).map_err(|e| Error::Fold {
                fold,
                source: Box::new(e),
            })
        })
        .collect::<Result<Vec<_>>>()?;

    let k = outputs.len() as f64;
    let rows: Vec<[f64; 5]> = outputs.iter().map(|o| o.report.metrics.as_array()).collect();
    let mut mean = [0.0; 5];
    let mut std = [0.0; 5];
    for m in 0..5 {
        mean[m] = rows.iter().map(|r| r[m]).sum::<f64>() / k;
        std[m] = (rows.iter().map(|r| (r[m] - mean[m]).powi(2)).sum::<f64>() / k).sqrt();
    }

    let mut folds = Vec::new();
    let mut patient_probabilities = Vec::new();
    let mut roc = Vec::new();
    for o in outputs {
        folds.push(o.report);
        patient_probabilities.extend(o.patients);
        roc.extend(o.roc);
    }
    Ok(CvReport {
        family,
        config: cfg.clone(),
        grid: grid.to_vec(),
        folds,
        mean: MetricsRow::from_array(mean),
        std: MetricsRow::from_array(std),
        patient_probabilities,
        roc,
    })
}
