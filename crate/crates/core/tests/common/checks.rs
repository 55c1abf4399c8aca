//! Measurement harnesses shared by the focused tests and the acceptance
//! suite.

use std::collections::{HashMap, HashSet};

use cough_triage::evaluation::stratified_group_kfold;
use cough_triage::models::logistic::objective_and_gradient;
use cough_triage::models::svm::{dual_objective, solve_dual};
use cough_triage::models::{Activation, Kernel, Mlp};
use ndarray::Array2;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{brute_force_dual, central_difference, rel_error, uniform_matrix};

pub const STEP: f64 = 1e-5;

fn random_labels(rng: &mut impl Rng, n: usize) -> Vec<u8> {
    let mut y: Vec<u8> = (0..n).map(|_| rng.gen_range(0..2)).collect();
    y[0] = 0;
    y[1] = 1;
    y
}

/// Worst relative error of the analytic LR gradient over random batches.
pub fn worst_lr_gradient_error(trials: u64) -> f64 {
    let mut worst: f64 = 0.0;
    for seed in 0..trials {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (n, p) = (rng.gen_range(4..16), rng.gen_range(1..8));
        let x = uniform_matrix(&mut rng, n, p, 2.0);
        let y = random_labels(&mut rng, n);
        let lambda = [0.0, 0.01, 1.0][seed as usize % 3];
        let theta: Vec<f64> = (0..=p).map(|_| rng.gen_range(-1.5..1.5)).collect();
        let (_, grad) = objective_and_gradient(&theta, x.view(), &y, lambda);
        for k in 0..=p {
            let numeric = central_difference(
                |v| {
                    let mut t = theta.clone();
                    t[k] = v;
                    objective_and_gradient(&t, x.view(), &y, lambda).0
                },
                theta[k],
                STEP,
            );
            worst = worst.max(rel_error(grad[k], numeric));
        }
    }
    worst
}

/// Worst relative error of MLP backprop over random nets and batches.
pub fn worst_mlp_gradient_error(trials: u64, activation: Activation) -> f64 {
    let mut worst: f64 = 0.0;
    for seed in 0..trials {
        let mut rng = ChaCha8Rng::seed_from_u64(100 + seed);
        let (n, p) = (rng.gen_range(3..10), rng.gen_range(1..6));
        let hidden = [vec![], vec![6], vec![5, 3]][seed as usize % 3].clone();
        let mut net = Mlp::new(p, &hidden, activation, &mut rng).unwrap();
        // zero initial biases put ReLU units fed by a dead layer exactly on
        // the kink, where no finite difference agrees with any subgradient
        for layer in &mut net.layers {
            layer.bias.mapv_inplace(|_| rng.gen_range(-0.5..0.5));
        }
        let x = uniform_matrix(&mut rng, n, p, 2.0);
        let y = random_labels(&mut rng, n);
        let (_, grads) = net.loss_and_gradients(x.view(), &y);
        for (l, g) in grads.iter().enumerate() {
            for ((i, j), &analytic) in g.weights.indexed_iter() {
                let numeric = central_difference(
                    |v| {
                        let mut m = net.clone();
                        m.layers[l].weights[[i, j]] = v;
                        m.loss_and_gradients(x.view(), &y).0
                    },
                    net.layers[l].weights[[i, j]],
                    STEP,
                );
                worst = worst.max(rel_error(analytic, numeric));
            }
            for (i, &analytic) in g.bias.indexed_iter() {
                let numeric = central_difference(
                    |v| {
                        let mut m = net.clone();
                        m.layers[l].bias[i] = v;
                        m.loss_and_gradients(x.view(), &y).0
                    },
                    net.layers[l].bias[i],
                    STEP,
                );
                worst = worst.max(rel_error(analytic, numeric));
            }
        }
    }
    worst
}

/// Largest KKT violation of a dual solution, measured on the margins
/// `y_i f(x_i)`, plus any box or balance violation.
pub fn max_kkt_violation(gram: &[Vec<f64>], y: &[f64], c: f64, alpha: &[f64], bias: f64) -> f64 {
    let n = y.len();
    let mut worst: f64 = alpha.iter().zip(y).map(|(a, yi)| a * yi).sum::<f64>().abs();
    for i in 0..n {
        let f: f64 = (0..n).map(|j| alpha[j] * y[j] * gram[j][i]).sum::<f64>() + bias;
        let margin = y[i] * f;
        let violation = if alpha[i] < 0.0 || alpha[i] > c {
            f64::INFINITY
        } else if alpha[i] == 0.0 {
            (1.0 - margin).max(0.0)
        } else if alpha[i] == c {
            (margin - 1.0).max(0.0)
        } else {
            (margin - 1.0).abs()
        };
        worst = worst.max(violation);
    }
    worst
}

fn random_problem(rng: &mut impl Rng, n: usize, dims: usize) -> (Array2<f64>, Vec<f64>) {
    let x = uniform_matrix(rng, n, dims, 2.0);
    let mut y: Vec<f64> = (0..n).map(|_| if rng.gen_bool(0.5) { 1.0 } else { -1.0 }).collect();
    y[0] = 1.0;
    y[1] = -1.0;
    (x, y)
}

fn kernel_for(case: u64, dims: usize) -> Kernel {
    match case % 3 {
        0 => Kernel::Linear,
        1 => Kernel::Rbf { gamma: 0.5 },
        _ => Kernel::Rbf { gamma: 1.0 / dims as f64 },
    }
}

#[derive(Debug, Default, Clone, Copy)]
pub struct SvmOracleGaps {
    pub instances: usize,
    pub objective: f64,
    pub decision: f64,
    pub kkt: f64,
}

/// Compares SMO (at solver tolerance `tol`) with exhaustive enumeration on
/// random problems of 2 to 6 points.
pub fn svm_small_instance_gaps(instances: u64, tol: f64) -> SvmOracleGaps {
    let mut gaps = SvmOracleGaps::default();
    for case in 0..instances {
        let mut rng = ChaCha8Rng::seed_from_u64(1000 + case);
        let n = 2 + (case as usize % 5);
        let dims = 1 + (case as usize / 5) % 3;
        let (x, y) = random_problem(&mut rng, n, dims);
        let kernel = kernel_for(case, dims);
        let c = [0.1, 1.0, 10.0][(case as usize / 3) % 3];
        let gram = kernel.gram(x.view());
        let sol = solve_dual(&gram, &y, c, tol, 1_000_000);
        let oracle = brute_force_dual(&gram, &y, c);

        let obj = dual_objective(&gram, &y, &sol.alpha);
        gaps.objective = gaps.objective.max((obj - oracle.objective).abs());
        for t in 0..n {
            let mut diff: f64 = (0..n)
                .map(|j| (sol.alpha[j] - oracle.alpha[j]) * y[j] * gram[j][t])
                .sum();
            if let Some(b) = oracle.bias {
                diff += sol.bias - b;
            }
            gaps.decision = gaps.decision.max(diff.abs());
        }
        gaps.kkt = gaps.kkt.max(max_kkt_violation(&gram, &y, c, &sol.alpha, sol.bias));
        gaps.instances += 1;
    }
    gaps
}

/// Worst KKT violation of SMO at tolerance `tol` over larger random
/// training sets, both kernels, several `C`.
pub fn svm_kkt_sweep(sets: u64, tol: f64) -> f64 {
    let mut worst: f64 = 0.0;
    for case in 0..sets {
        let mut rng = ChaCha8Rng::seed_from_u64(5000 + case);
        let n = rng.gen_range(8..60);
        let dims = rng.gen_range(1..6);
        let (x, y) = random_problem(&mut rng, n, dims);
        let kernel = kernel_for(case, dims);
        let c = [0.1, 1.0, 10.0][(case as usize / 3) % 3];
        let gram = kernel.gram(x.view());
        let sol = solve_dual(&gram, &y, c, tol, 1_000_000);
        assert!(sol.converged);
        worst = worst.max(max_kkt_violation(&gram, &y, c, &sol.alpha, sol.bias));
    }
    worst
}

#[derive(Debug, Default, Clone, Copy)]
pub struct FoldAudit {
    pub draws: usize,
    /// Patients seen in both the train and test side of one fold.
    pub overlaps: usize,
    /// Patients not tested exactly once.
    pub coverage_errors: usize,
    /// Folds whose class counts leave `{floor, ceil}` of count / k.
    pub imbalanced_folds: usize,
}

/// Random cohorts and seeds through the stratified group splitter.
pub fn audit_fold_draws(draws: u64) -> FoldAudit {
    let mut audit = FoldAudit::default();
    let mut rng = ChaCha8Rng::seed_from_u64(0xF01D);
    for _ in 0..draws {
        let k = rng.gen_range(2..=6);
        let n_abn = rng.gen_range(k..=80);
        let n_norm = rng.gen_range(k..=120);
        let mut cohort = super::patients(n_abn, n_norm);
        cohort.shuffle(&mut rng);
        let seed = rng.gen();
        let folds = stratified_group_kfold(&cohort, k, seed).unwrap();
        let mut tested = HashMap::new();
        for f in 0..k {
            let test: HashSet<&str> = folds.test_patients(f).into_iter().collect();
            let train: HashSet<&str> = folds.train_patients(f).into_iter().collect();
            audit.overlaps += test.intersection(&train).count();
            if test.len() + train.len() != cohort.len() {
                audit.coverage_errors += 1;
            }
            for id in &test {
                *tested.entry(id.to_string()).or_insert(0usize) += 1;
            }
            let abn = cohort
                .iter()
                .filter(|p| p.label == 1 && test.contains(p.patient_id.as_str()))
                .count();
            let norm = test.len() - abn;
            let within = |count: usize, total: usize| count == total / k || count == total.div_ceil(k);
            if !within(abn, n_abn) || !within(norm, n_norm) {
                audit.imbalanced_folds += 1;
            }
        }
        audit.coverage_errors += cohort
            .iter()
            .filter(|p| tested.get(&p.patient_id) != Some(&1))
            .count();
        audit.draws += 1;
    }
    audit
}
