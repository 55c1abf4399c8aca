//! Command-line front end.
//!
//! ```text
//! cough-triage extract --manifest m.csv [--config run.cfg] [--output-dir out] [--jobs N]
//! cough-triage cv      --manifest m.csv [--config run.cfg] [--seed S] [--models lr,svm]
//! cough-triage report  [--output-dir out]
//! cough-triage demo    --output-dir demo [--seed S]
//! ```
//!
//! Exit status is 0 on success, 1 on a runtime failure and 2 on a usage or
//! configuration error. `COUGH_TRIAGE_OUTPUT_DIR` overrides the output
//! directory when `--output-dir` is absent.

pub mod config;
pub mod manifest;
pub mod pipeline;

use std::ffi::OsString;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};
use log::error;

use crate::demo::write_demo_dataset;
use crate::error::{Error, Result};

pub use config::RunConfig;
pub use manifest::{load_manifest, Manifest, ManifestRow};
pub use pipeline::{
    evaluate_families, extract_features, extract_only, fit_final_model, render_report,
    run_pipeline, with_jobs, DecodeFailure, Extraction, RunSummary,
};

pub const EXIT_OK: i32 = 0;
pub const EXIT_RUNTIME: i32 = 1;
pub const EXIT_USAGE: i32 = 2;

#[derive(Debug, Parser)]
#[command(name = "cough-triage", version, about = "Cough-sound features and chest X-ray triage models")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Decode, segment and summarize every cough into features.csv.
    Extract(RunArgs),
    /// Extract features and cross-validate every configured model family.
    Cv(RunArgs),
    /// Print the mean (std) table of an earlier cv run.
    Report {
        #[arg(long, env = "COUGH_TRIAGE_OUTPUT_DIR")]
        output_dir: Option<PathBuf>,
    },
    /// Write the synthetic demo recordings and manifest.
    Demo {
        #[arg(long, env = "COUGH_TRIAGE_OUTPUT_DIR")]
        output_dir: PathBuf,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
}

#[derive(Debug, Args)]
pub struct RunArgs {
    #[arg(long)]
    pub manifest: Option<PathBuf>,
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Worker thread cap; results do not depend on it.
    #[arg(long)]
    pub jobs: Option<usize>,
    #[arg(long, env = "COUGH_TRIAGE_OUTPUT_DIR")]
    pub output_dir: Option<PathBuf>,
    /// Comma-separated model families (lr, svm, mlp).
    #[arg(long)]
    pub models: Option<String>,
    /// Also write per-cough frame feature matrices.
    #[arg(long)]
    pub export_frames: bool,
}

impl RunArgs {
    /// Config file (or defaults) with command-line overrides applied.
    pub fn resolve(&self) -> Result<RunConfig> {
        let mut cfg = match &self.config {
            Some(path) => RunConfig::load(path)?,
            None => RunConfig::default(),
        };
        if let Some(m) = &self.manifest {
            cfg.manifest = Some(m.clone());
        }
        if let Some(s) = self.seed {
            cfg.seed = s;
        }
        if let Some(d) = &self.output_dir {
            cfg.output_dir = d.clone();
        }
        if let Some(m) = &self.models {
            cfg.set("models", m)?;
        }
        if self.export_frames {
            cfg.export_frames = true;
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

pub fn exit_code(e: &Error) -> i32 {
    match e {
        Error::Config(_) => EXIT_USAGE,
        _ => EXIT_RUNTIME,
    }
}

fn execute(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Extract(args) => {
            let cfg = args.resolve()?;
            let summary = with_jobs(args.jobs, || extract_only(&cfg))??;
            println!(
                "extracted {} of {} coughs into {}",
                summary.coughs_extracted,
                summary.manifest_rows,
                cfg.output_dir.display()
            );
        }
        Command::Cv(args) => {
            let cfg = args.resolve()?;
            with_jobs(args.jobs, || run_pipeline(&cfg))??;
            print!("{}", render_report(&cfg.output_dir)?);
        }
        Command::Report { output_dir } => {
            let dir = output_dir.unwrap_or_else(|| RunConfig::default().output_dir);
            print!("{}", render_report(&dir)?);
        }
        Command::Demo { output_dir, seed } => {
            let manifest = write_demo_dataset(&output_dir, seed)?;
            println!("wrote {}", manifest.display());
        }
    }
    Ok(())
}

/// Parses `args` (program name first), runs the command and returns the
/// process exit status.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
            let _ = e.print();
            return code;
        }
    };
    match execute(cli) {
        Ok(()) => EXIT_OK,
        Err(e) => {
            error!("{e}");
            eprintln!("error: {e}");
            exit_code(&e)
        }
    }
}
