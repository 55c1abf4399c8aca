//! Extraction, cross-validation and artifact writing.

use std::collections::BTreeMap;
use std::fs::{self, File};
use std::io::BufWriter;
use std::path::{Path, PathBuf};
use std::time::Instant;

use log::{info, warn};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::audio_io::{decode_wav, resample_polyphase, to_cough_segment, SEGMENT_RATE_HZ};
use crate::cli::config::RunConfig;
use crate::cli::manifest::{load_manifest, Manifest, ManifestRow};
use crate::error::{Error, Result};
use crate::evaluation::{
    derive_seed, run_cross_validation, tune_hyperparameters, CoughDataset, CvReport, MetricsRow,
};
use crate::features::{FeatureExtractor, FrameFeatureMatrix};
use crate::models::{self, ModelArtifact, ModelFamily, Standardizer};
use crate::summarize::{summarize_cough, summary_names, write_feature_table, FeatureVector};

pub const FEATURES_FILE: &str = "features.csv";
pub const SUMMARY_FILE: &str = "run_summary.json";
pub const REPORT_FILE: &str = "cv_report.json";
pub const ROC_FILE: &str = "roc_points.csv";
pub const PATIENT_PROBS_FILE: &str = "patient_probs.csv";
pub const MODEL_FILE: &str = "model.json";
pub const INCOMPLETE_MARKER: &str = "INCOMPLETE";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecodeFailure {
    pub patient_id: String,
    pub cough_path: String,
    pub error: String,
}

/// Per-cough summary vectors for every manifest row that could be read.
#[derive(Debug, Clone)]
pub struct Extraction {
    /// Per-frame feature names; the table columns are their summaries.
    pub frame_feature_names: Vec<String>,
    pub rows: Vec<(FeatureVector, u8)>,
    /// Frame matrices in `rows` order, kept only when exporting.
    pub frames: Vec<FrameFeatureMatrix>,
    pub failures: Vec<DecodeFailure>,
}

impl Extraction {
    pub fn summary_names(&self) -> Vec<String> {
        summary_names(&self.frame_feature_names)
    }

    pub fn write_features_csv(&self, path: &Path) -> Result<()> {
        let out = BufWriter::new(File::create(path)?);
        write_feature_table(out, &self.frame_feature_names, &self.rows)
    }
}

fn process_row(
    row: &ManifestRow,
    extractor: &FeatureExtractor,
    segment_ms: u32,
) -> Result<(FeatureVector, FrameFeatureMatrix)> {
    let bytes = fs::read(&row.cough_path)?;
    let clip = decode_wav(&bytes)?;
    let clip = resample_polyphase(&clip, SEGMENT_RATE_HZ)?;
    let segment = to_cough_segment(&clip, segment_ms)?.with_source_id(row.cough_ref.clone());
    let frames = extractor.extract(&segment)?;
    let fv = summarize_cough(&frames, row.cough_ref.clone(), row.patient_id.clone())?;
    Ok((fv, frames))
}

/// Decodes, segments and summarizes every cough, in manifest order.
///
/// A failing cough is logged and recorded in `failures` unless
/// `abort_on_decode_error` is set, in which case the first failure is
/// returned.
pub fn extract_features(manifest: &Manifest, cfg: &RunConfig) -> Result<Extraction> {
    let extractor = FeatureExtractor::new(cfg.features.clone())?;
    let results: Vec<Result<(FeatureVector, FrameFeatureMatrix)>> = manifest
        .rows
        .par_iter()
        .map(|row| process_row(row, &extractor, cfg.segment_ms))
        .collect();

    let mut rows = Vec::new();
    let mut frames = Vec::new();
    let mut failures = Vec::new();
    for (row, result) in manifest.rows.iter().zip(results) {
        match result {
            Ok((fv, m)) => {
                rows.push((fv, row.label));
                if cfg.export_frames {
                    frames.push(m);
                }
            }
            Err(e) if cfg.abort_on_decode_error => {
                return Err(Error::Decode(format!("{}: {e}", row.cough_path.display())))
            }
            Err(e) => {
                warn!("skipping {}: {e}", row.cough_path.display());
                failures.push(DecodeFailure {
                    patient_id: row.patient_id.clone(),
                    cough_path: row.cough_ref.clone(),
                    error: e.to_string(),
                });
            }
        }
    }
    Ok(Extraction {
        frame_feature_names: extractor.feature_names().to_vec(),
        rows,
        frames,
        failures,
    })
}

fn sanitize(s: &str) -> String {
    s.chars()
        .map(|c| if c.is_ascii_alphanumeric() || c == '-' { c } else { '_' })
        .collect()
}

fn write_frame_exports(ex: &Extraction, dir: &Path) -> Result<()> {
    let dir = dir.join("frames");
    fs::create_dir_all(&dir)?;
    for ((fv, _), m) in ex.rows.iter().zip(&ex.frames) {
        let name = format!("{}__{}.csv", sanitize(&fv.patient_id), sanitize(&fv.cough_id));
        m.write_csv(BufWriter::new(File::create(dir.join(name))?))?;
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FamilySummary {
    pub family: ModelFamily,
    pub grid_size: usize,
    pub mean: MetricsRow,
    pub std: MetricsRow,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub tool: String,
    pub version: String,
    pub command: String,
    pub seed: u64,
    pub config: RunConfig,
    pub manifest_rows: usize,
    pub manifest_patients: usize,
    pub coughs_extracted: usize,
    pub decode_failure_count: usize,
    pub decode_failures: Vec<DecodeFailure>,
    pub families: Vec<FamilySummary>,
    /// Wall-clock seconds per stage.
    pub timings_secs: BTreeMap<String, f64>,
}

impl RunSummary {
    fn new(command: &str, cfg: &RunConfig, manifest: &Manifest, ex: &Extraction) -> Self {
        Self {
            tool: env!("CARGO_PKG_NAME").to_string(),
            version: env!("CARGO_PKG_VERSION").to_string(),
            command: command.to_string(),
            seed: cfg.seed,
            config: cfg.clone(),
            manifest_rows: manifest.len(),
            manifest_patients: manifest.n_patients(),
            coughs_extracted: ex.rows.len(),
            decode_failure_count: ex.failures.len(),
            decode_failures: ex.failures.clone(),
            families: Vec::new(),
            timings_secs: BTreeMap::new(),
        }
    }

    fn write(&self, dir: &Path) -> Result<()> {
        let mut s = serde_json::to_string_pretty(self)?;
        s.push('\n');
        fs::write(dir.join(SUMMARY_FILE), s)?;
        Ok(())
    }
}

/// Tunes on all patients and fits the deployable model on every cough.
pub fn fit_final_model(
    ds: &CoughDataset,
    family: ModelFamily,
    cfg: &RunConfig,
) -> Result<ModelArtifact> {
    let grid = family.default_grid(ds.n_features());
    let all: Vec<usize> = (0..ds.patients.len()).collect();
    let n_pos = ds.patients.iter().filter(|p| p.label == 1).count();
    let inner_k = cfg.k_inner.min(n_pos.min(all.len() - n_pos));
    let hp = if grid.len() > 1 && inner_k >= 2 {
        let seed = derive_seed(cfg.seed, &[4, family as u64]);
        tune_hyperparameters(ds, &all, &grid, &cfg.training, inner_k, seed)?.best
    } else {
        grid[0].clone()
    };
    let rows: Vec<usize> = (0..ds.n_coughs()).collect();
    let scaler = Standardizer::fit(ds.features.view())?;
    let x = scaler.transform(ds.features.view())?;
    let seed = derive_seed(cfg.seed, &[5, family as u64]);
    let model = models::train(&hp, &cfg.training, x.view(), &ds.select_labels(&rows), seed)?;
    Ok(ModelArtifact::new(model, scaler, hp, seed))
}

fn family_dir(out: &Path, family: ModelFamily) -> PathBuf {
    out.join(family.as_str())
}

fn write_family_outputs(
    out: &Path,
    report: &CvReport,
    model: Option<&ModelArtifact>,
) -> Result<()> {
    let dir = family_dir(out, report.family);
    fs::create_dir_all(&dir)?;
    fs::write(dir.join(REPORT_FILE), report.to_json()?)?;
    report.write_roc_csv(BufWriter::new(File::create(dir.join(ROC_FILE))?))?;
    report.write_patient_probs_csv(BufWriter::new(File::create(dir.join(PATIENT_PROBS_FILE))?))?;
    if let Some(m) = model {
        m.save(&dir.join(MODEL_FILE))?;
    }
    Ok(())
}

fn manifest_path(cfg: &RunConfig) -> Result<&Path> {
    cfg.manifest
        .as_deref()
        .ok_or_else(|| Error::Config("no manifest given (use --manifest or the manifest key)".into()))
}

/// Runs `body` with an `INCOMPLETE` marker guarding the output directory.
fn guarded<T>(out: &Path, body: impl FnOnce() -> Result<T>) -> Result<T> {
    fs::create_dir_all(out)?;
    let marker = out.join(INCOMPLETE_MARKER);
    fs::write(&marker, "run in progress\n")?;
    match body() {
        Ok(v) => {
            fs::remove_file(&marker)?;
            Ok(v)
        }
        Err(e) => {
            // best effort: the original error matters more than this write
            let _ = fs::write(&marker, format!("run failed: {e}\n"));
            Err(e)
        }
    }
}

fn seconds(t: Instant) -> f64 {
    t.elapsed().as_secs_f64()
}

/// Feature extraction only: writes `features.csv` and `run_summary.json`.
pub fn extract_only(cfg: &RunConfig) -> Result<RunSummary> {
    cfg.validate()?;
    let out = cfg.output_dir.clone();
    guarded(&out, || {
        let start = Instant::now();
        let manifest = load_manifest(manifest_path(cfg)?)?;
        let ex = extract_features(&manifest, cfg)?;
        let extract_secs = seconds(start);
        ex.write_features_csv(&out.join(FEATURES_FILE))?;
        if cfg.export_frames {
            write_frame_exports(&ex, &out)?;
        }
        let mut summary = RunSummary::new("extract", cfg, &manifest, &ex);
        summary.timings_secs.insert("extract".into(), extract_secs);
        summary.timings_secs.insert("total".into(), seconds(start));
        summary.write(&out)?;
        info!("extracted {} coughs, {} failures", ex.rows.len(), ex.failures.len());
        Ok(summary)
    })
}

/// Runs one cross-validation per configured family on an extracted table.
pub fn evaluate_families(ds: &CoughDataset, cfg: &RunConfig) -> Result<Vec<CvReport>> {
    let cv = cfg.cv_config();
    cfg.models
        .par_iter()
        .map(|&family| {
            let grid = family.default_grid(ds.n_features());
            run_cross_validation(ds, family, &grid, &cv)
        })
        .collect()
}

/// Extraction, cross-validation of every configured family and all
/// artifacts.
pub fn run_pipeline(cfg: &RunConfig) -> Result<RunSummary> {
    cfg.validate()?;
    let out = cfg.output_dir.clone();
    guarded(&out, || {
        let start = Instant::now();
        let manifest = load_manifest(manifest_path(cfg)?)?;
        let ex = extract_features(&manifest, cfg)?;
        let extract_secs = seconds(start);
        ex.write_features_csv(&out.join(FEATURES_FILE))?;
        if cfg.export_frames {
            write_frame_exports(&ex, &out)?;
        }
        if ex.rows.is_empty() {
            return Err(Error::invalid("no cough could be decoded"));
        }

        let cv_start = Instant::now();
        let ds = CoughDataset::from_vectors(&ex.rows)?;
        let reports = evaluate_families(&ds, cfg)?;
        let cv_secs = seconds(cv_start);

        let fit_start = Instant::now();
        let finals = if cfg.save_model {
            cfg.models
                .par_iter()
                .map(|&f| fit_final_model(&ds, f, cfg).map(Some))
                .collect::<Result<Vec<_>>>()?
        } else {
            vec![None; cfg.models.len()]
        };
        let fit_secs = seconds(fit_start);

        let mut summary = RunSummary::new("cv", cfg, &manifest, &ex);
        for (report, model) in reports.iter().zip(&finals) {
            write_family_outputs(&out, report, model.as_ref())?;
            summary.families.push(FamilySummary {
                family: report.family,
                grid_size: report.grid.len(),
                mean: report.mean,
                std: report.std,
            });
        }
        summary.timings_secs.insert("extract".into(), extract_secs);
        summary.timings_secs.insert("cross_validation".into(), cv_secs);
        summary.timings_secs.insert("final_fit".into(), fit_secs);
        summary.timings_secs.insert("total".into(), seconds(start));
        summary.write(&out)?;
        Ok(summary)
    })
}

fn cell(mean: f64, std: f64) -> String {
    format!("{mean:.2} ({std:.2})")
}

/// Mean (std) table over every `*/cv_report.json` under `out`.
pub fn render_report(out: &Path) -> Result<String> {
    let mut reports = Vec::new();
    for family in ModelFamily::ALL {
        let path = family_dir(out, family).join(REPORT_FILE);
        if path.is_file() {
            let report: CvReport = serde_json::from_str(&fs::read_to_string(&path)?)?;
            reports.push(report);
        }
    }
    if reports.is_empty() {
        return Err(Error::Artifact(format!(
            "no {REPORT_FILE} found under {}",
            out.display()
        )));
    }
    let mut s = format!(
        "{:<6}{:>14}{:>14}{:>14}{:>14}{:>14}\n",
        "model", "sensitivity", "specificity", "precision", "f1", "roc_auc"
    );
    for r in &reports {
        let (m, d) = (r.mean, r.std);
        s.push_str(&format!(
            "{:<6}{:>14}{:>14}{:>14}{:>14}{:>14}\n",
            r.family.as_str().to_uppercase(),
            cell(m.sensitivity, d.sensitivity),
            cell(m.specificity, d.specificity),
            cell(m.precision, d.precision),
            cell(m.f1, d.f1),
            cell(m.roc_auc, d.roc_auc),
        ));
    }
    s.push_str(&format!(
        "{}-fold patient-level CV, threshold {}, seed {}\n",
        reports[0].config.k_outer, reports[0].config.threshold, reports[0].config.seed
    ));
    Ok(s)
}

/// Runs `f` on a pool of `jobs` workers, or on the global pool.
pub fn with_jobs<T: Send>(jobs: Option<usize>, f: impl FnOnce() -> T + Send) -> Result<T> {
    match jobs {
        None => Ok(f()),
        Some(0) => Err(Error::Config("--jobs must be at least 1".into())),
        Some(n) => {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(n)
                .build()
                .map_err(|e| Error::Config(format!("cannot build thread pool: {e}")))?;
            Ok(pool.install(f))
        }
    }
}
