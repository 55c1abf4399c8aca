//! Classifiers for the abnormal (1) versus normal (0) radiograph label.

pub mod logistic;
pub mod mlp;
pub mod persist;
pub mod standardize;
pub mod svm;

use std::fmt;
use std::str::FromStr;

use ndarray::ArrayView2;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use logistic::{train_lr, LogisticRegression, LrOptions};
pub use mlp::{train_mlp, Activation, Mlp, MlpOptions};
pub use persist::ModelArtifact;
pub use standardize::Standardizer;
pub use svm::{train_svm, Kernel, SupportVectorMachine, SvmOptions};

/// Probabilities are kept inside `[PROB_CLAMP, 1 - PROB_CLAMP]`.
pub const PROB_CLAMP: f64 = 1e-12;

pub fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

pub fn clamp_probability(p: f64) -> f64 {
    p.clamp(PROB_CLAMP, 1.0 - PROB_CLAMP)
}

pub(crate) fn check_binary_labels(n_rows: usize, y: &[u8]) -> Result<()> {
    if y.len() != n_rows {
        return Err(Error::invalid(format!(
            "{} labels for {n_rows} rows",
            y.len()
        )));
    }
    if let Some(bad) = y.iter().find(|&&l| l > 1) {
        return Err(Error::invalid(format!("label {bad} is not 0 or 1")));
    }
    let positives = y.iter().filter(|&&l| l == 1).count();
    if positives == 0 || positives == y.len() {
        return Err(Error::DegenerateLabels);
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ModelFamily {
    Lr,
    Svm,
    Mlp,
}

impl ModelFamily {
    pub const ALL: [ModelFamily; 3] = [ModelFamily::Lr, ModelFamily::Svm, ModelFamily::Mlp];

    pub fn as_str(self) -> &'static str {
        match self {
            ModelFamily::Lr => "lr",
            ModelFamily::Svm => "svm",
            ModelFamily::Mlp => "mlp",
        }
    }

    /// Tuning grid in declaration order. `n_features` sets the `1/p` RBF
    /// width.
    pub fn default_grid(self, n_features: usize) -> Vec<Hyperparams> {
        match self {
            ModelFamily::Lr => [0.01, 0.1, 1.0, 10.0]
                .into_iter()
                .map(|lambda_l2| Hyperparams::Lr { lambda_l2 })
                .collect(),
            ModelFamily::Svm => {
                let mut grid = Vec::new();
                for c in [0.1, 1.0, 10.0] {
                    grid.push(Hyperparams::Svm {
                        kernel: Kernel::Linear,
                        c,
                    });
                }
                for gamma in [1.0 / n_features.max(1) as f64, 0.01, 0.1] {
                    for c in [0.1, 1.0, 10.0] {
                        grid.push(Hyperparams::Svm {
                            kernel: Kernel::Rbf { gamma },
                            c,
                        });
                    }
                }
                grid
            }
            ModelFamily::Mlp => {
                let mut grid = Vec::new();
                for hidden in [vec![64], vec![128], vec![64, 32]] {
                    for learning_rate in [1e-3, 1e-2] {
                        grid.push(Hyperparams::Mlp {
                            hidden: hidden.clone(),
                            learning_rate,
                        });
                    }
                }
                grid
            }
        }
    }
}

impl fmt::Display for ModelFamily {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ModelFamily {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "lr" | "logistic" => Ok(ModelFamily::Lr),
            "svm" => Ok(ModelFamily::Svm),
            "mlp" => Ok(ModelFamily::Mlp),
            other => Err(Error::Config(format!("unknown model family {other:?}"))),
        }
    }
}

/// The tuned hyperparameters of one family.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "lowercase")]
pub enum Hyperparams {
    Lr { lambda_l2: f64 },
    Svm { kernel: Kernel, c: f64 },
    Mlp { hidden: Vec<usize>, learning_rate: f64 },
}

impl Hyperparams {
    pub fn family(&self) -> ModelFamily {
        match self {
            Hyperparams::Lr { .. } => ModelFamily::Lr,
            Hyperparams::Svm { .. } => ModelFamily::Svm,
            Hyperparams::Mlp { .. } => ModelFamily::Mlp,
        }
    }
}

/// Training settings that are fixed rather than tuned.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainingOptions {
    pub lr_max_iter: usize,
    pub lr_tol: f64,
    pub svm_tol: f64,
    pub svm_max_iter: usize,
    pub mlp_epochs: usize,
    pub mlp_batch_size: usize,
}

impl Default for TrainingOptions {
    fn default() -> Self {
        Self {
            lr_max_iter: 500,
            lr_tol: 1e-6,
            svm_tol: 1e-3,
            svm_max_iter: 1_000_000,
            mlp_epochs: 100,
            mlp_batch_size: 32,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", content = "parameters", rename_all = "lowercase")]
pub enum Model {
    Lr(LogisticRegression),
    Svm(SupportVectorMachine),
    Mlp(Mlp),
}

impl Model {
    pub fn family(&self) -> ModelFamily {
        match self {
            Model::Lr(_) => ModelFamily::Lr,
            Model::Svm(_) => ModelFamily::Svm,
            Model::Mlp(_) => ModelFamily::Mlp,
        }
    }

    pub fn n_features(&self) -> usize {
        match self {
            Model::Lr(m) => m.n_features(),
            Model::Svm(m) => m.n_features,
            Model::Mlp(m) => m.n_features(),
        }
    }

    /// One probability of the abnormal class per row, inside
    /// `[PROB_CLAMP, 1 - PROB_CLAMP]`.
    pub fn predict_proba(&self, x: ArrayView2<'_, f64>) -> Result<Vec<f64>> {
        match self {
            Model::Lr(m) => m.predict_proba(x),
            Model::Svm(m) => m.predict_proba(x),
            Model::Mlp(m) => m.predict_proba(x),
        }
    }
}

/// Trains the model described by `hp` on already standardised rows.
pub fn train(
    hp: &Hyperparams,
    opts: &TrainingOptions,
    x: ArrayView2<'_, f64>,
    y: &[u8],
    seed: u64,
) -> Result<Model> {
    Ok(match hp {
        Hyperparams::Lr { lambda_l2 } => {
            let mut m = train_lr(
                x,
                y,
                &LrOptions {
                    lambda_l2: *lambda_l2,
                    max_iter: opts.lr_max_iter,
                    tol: opts.lr_tol,
                },
            )?;
            m.loss_history.clear();
            Model::Lr(m)
        }
        Hyperparams::Svm { kernel, c } => Model::Svm(train_svm(
            x,
            y,
            &SvmOptions {
                kernel: *kernel,
                c: *c,
                tol: opts.svm_tol,
                max_iter: opts.svm_max_iter,
            },
        )?),
        Hyperparams::Mlp {
            hidden,
            learning_rate,
        } => Model::Mlp(train_mlp(
            x,
            y,
            &MlpOptions {
                hidden: hidden.clone(),
                hidden_activation: Activation::Relu,
                learning_rate: *learning_rate,
                epochs: opts.mlp_epochs,
                batch_size: opts.mlp_batch_size,
                seed,
            },
        )?),
    })
}
