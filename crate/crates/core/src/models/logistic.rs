//! L2-regularised logistic regression trained by full-batch gradient
//! descent with Armijo backtracking.

use ndarray::{Array1, ArrayView1, ArrayView2};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::models::{check_binary_labels, clamp_probability, sigmoid};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LrOptions {
    pub lambda_l2: f64,
    pub max_iter: usize,
    /// Stop once the gradient's infinity norm drops below this.
    pub tol: f64,
}

impl Default for LrOptions {
    fn default() -> Self {
        Self {
            lambda_l2: 0.1,
            max_iter: 500,
            tol: 1e-6,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogisticRegression {
    pub weights: Vec<f64>,
    pub intercept: f64,
    pub lambda_l2: f64,
    /// Training objective after every accepted step, starting at the origin.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub loss_history: Vec<f64>,
}

/// `ln(1 + e^z)` without overflow.
fn softplus(z: f64) -> f64 {
    z.max(0.0) + (-z.abs()).exp().ln_1p()
}

/// Mean log-loss plus `lambda/2 * |w|^2` and its gradient.
///
/// `theta` holds the weights followed by the (unregularised) intercept.
pub fn objective_and_gradient(
    theta: &[f64],
    x: ArrayView2<'_, f64>,
    y: &[u8],
    lambda_l2: f64,
) -> (f64, Vec<f64>) {
    let p = x.ncols();
    let n = x.nrows() as f64;
    let w = ArrayView1::from(&theta[..p]);
    let b = theta[p];
    let z = x.dot(&w) + b;

    let mut loss = 0.0;
    let mut residual = Array1::zeros(x.nrows());
    for (i, &zi) in z.iter().enumerate() {
        let yi = f64::from(y[i]);
        loss += softplus(zi) - yi * zi;
        residual[i] = sigmoid(zi) - yi;
    }
    loss /= n;
    loss += 0.5 * lambda_l2 * w.dot(&w);

    let gw = x.t().dot(&residual) / n + &(&w * lambda_l2);
    let mut grad = gw.to_vec();
    grad.push(residual.sum() / n);
    (loss, grad)
}

fn objective(theta: &[f64], x: ArrayView2<'_, f64>, y: &[u8], lambda_l2: f64) -> f64 {
    let p = x.ncols();
    let w = ArrayView1::from(&theta[..p]);
    let z = x.dot(&w) + theta[p];
    let loss: f64 = z
        .iter()
        .zip(y)
        .map(|(&zi, &yi)| softplus(zi) - f64::from(yi) * zi)
        .sum();
    loss / x.nrows() as f64 + 0.5 * lambda_l2 * w.dot(&w)
}

pub fn train_lr(x: ArrayView2<'_, f64>, y: &[u8], opts: &LrOptions) -> Result<LogisticRegression> {
    check_binary_labels(x.nrows(), y)?;
    if !(opts.lambda_l2 >= 0.0) {
        return Err(Error::invalid("lambda_l2 must be non-negative"));
    }
    let p = x.ncols();
    let mut theta = vec![0.0; p + 1];
    let (mut loss, mut grad) = objective_and_gradient(&theta, x, y, opts.lambda_l2);
    let mut history = vec![loss];
    let mut step: f64 = 1.0;

    for _ in 0..opts.max_iter {
        let gmax = grad.iter().fold(0.0f64, |m, g| m.max(g.abs()));
        if gmax < opts.tol {
            break;
        }
        let gnorm2: f64 = grad.iter().map(|g| g * g).sum();
        // Start each search slightly beyond the last accepted step.
        let mut t = (step * 2.0).min(1e6);
        let mut accepted = None;
        while t > 1e-16 {
            let cand: Vec<f64> = theta.iter().zip(&grad).map(|(a, g)| a - t * g).collect();
            let f = objective(&cand, x, y, opts.lambda_l2);
            if f <= loss - 1e-4 * t * gnorm2 {
                accepted = Some((cand, f));
                break;
            }
            t *= 0.5;
        }
        let Some((cand, _)) = accepted else {
            break;
        };
        theta = cand;
        step = t;
        let (l, g) = objective_and_gradient(&theta, x, y, opts.lambda_l2);
        loss = l;
        grad = g;
        history.push(loss);
    }

    let intercept = theta.pop().expect("intercept");
    Ok(LogisticRegression {
        weights: theta,
        intercept,
        lambda_l2: opts.lambda_l2,
        loss_history: history,
    })
}

impl LogisticRegression {
    pub fn n_features(&self) -> usize {
        self.weights.len()
    }

    pub fn decision(&self, x: ArrayView2<'_, f64>) -> Result<Array1<f64>> {
        if x.ncols() != self.n_features() {
            return Err(Error::invalid(format!(
                "model expects {} features, got {}",
                self.n_features(),
                x.ncols()
            )));
        }
        Ok(x.dot(&ArrayView1::from(&self.weights)) + self.intercept)
    }

    pub fn predict_proba(&self, x: ArrayView2<'_, f64>) -> Result<Vec<f64>> {
        Ok(self
            .decision(x)?
            .iter()
            .map(|&z| clamp_probability(sigmoid(z)))
            .collect())
    }

    pub fn weight_norm(&self) -> f64 {
        self.weights.iter().map(|w| w * w).sum::<f64>().sqrt()
    }
}
