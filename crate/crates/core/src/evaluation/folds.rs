use std::collections::{BTreeMap, HashSet};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::evaluation::PatientRecord;

/// Patient-level fold membership.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FoldAssignment {
    pub k: usize,
    pub fold_of_patient: BTreeMap<String, usize>,
}

impl FoldAssignment {
    /// Patient ids held out in `fold`, in id order.
    pub fn test_patients(&self, fold: usize) -> Vec<&str> {
        self.fold_of_patient
            .iter()
            .filter(|(_, &f)| f == fold)
            .map(|(p, _)| p.as_str())
            .collect()
    }

    pub fn train_patients(&self, fold: usize) -> Vec<&str> {
        self.fold_of_patient
            .iter()
            .filter(|(_, &f)| f != fold)
            .map(|(p, _)| p.as_str())
            .collect()
    }

    pub fn fold_sizes(&self) -> Vec<usize> {
        let mut sizes = vec![0; self.k];
        for &f in self.fold_of_patient.values() {
            sizes[f] += 1;
        }
        sizes
    }
}

/// Stratified group k-fold at the patient level.
///
/// Patients are sorted by id, shuffled within each class with `seed`, and
/// dealt round-robin: abnormal patients first, then normal patients
/// continuing from the fold after the last abnormal one. Per-fold class
/// counts and fold sizes each differ by at most one.
pub fn stratified_group_kfold(
    patients: &[PatientRecord],
    k: usize,
    seed: u64,
) -> Result<FoldAssignment> {
    if k < 2 {
        return Err(Error::InfeasibleStratification {
            k,
            reason: "need at least 2 folds".into(),
        });
    }
    let mut seen = HashSet::new();
    for p in patients {
        if !seen.insert(p.patient_id.as_str()) {
            return Err(Error::invalid(format!("duplicate patient id {}", p.patient_id)));
        }
    }
    let mut by_class: [Vec<&PatientRecord>; 2] = [Vec::new(), Vec::new()];
    for p in patients {
        by_class[usize::from(p.label == 1)].push(p);
    }
    for (label, group) in [("normal", &by_class[0]), ("abnormal", &by_class[1])] {
        if group.len() < k {
            return Err(Error::InfeasibleStratification {
                k,
                reason: format!("only {} {label} patients", group.len()),
            });
        }
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut fold_of_patient = BTreeMap::new();
    let mut next = 0usize;
    let [mut normal, mut abnormal] = by_class;
    for group in [&mut abnormal, &mut normal] {
        group.sort_by(|a, b| a.patient_id.cmp(&b.patient_id));
        group.shuffle(&mut rng);
        for p in group.iter() {
            fold_of_patient.insert(p.patient_id.clone(), next % k);
            next += 1;
        }
    }
    Ok(FoldAssignment { k, fold_of_patient })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn patients(n_abn: usize, n_norm: usize) -> Vec<PatientRecord> {
        (0..n_abn + n_norm)
            .map(|i| PatientRecord {
                patient_id: format!("p{i:03}"),
                label: u8::from(i < n_abn),
                cough_ids: vec![format!("c{i}")],
            })
            .collect()
    }

    #[test]
    fn eight_patients_four_folds() {
        let ps = patients(4, 4);
        let a = stratified_group_kfold(&ps, 4, 3).unwrap();
        for f in 0..4 {
            let test = a.test_patients(f);
            assert_eq!(test.len(), 2);
            let abn = ps
                .iter()
                .filter(|p| test.contains(&p.patient_id.as_str()) && p.label == 1)
                .count();
            assert_eq!(abn, 1);
        }
    }

    #[test]
    fn study_cohort_counts() {
        // 137 patients, 36% abnormal -> 49 abnormal
        let ps = patients(49, 88);
        let a = stratified_group_kfold(&ps, 4, 7).unwrap();
        let sizes = a.fold_sizes();
        assert_eq!(sizes.iter().sum::<usize>(), 137);
        assert!(sizes.iter().max().unwrap() - sizes.iter().min().unwrap() <= 1);
        for f in 0..4 {
            let abn = ps
                .iter()
                .filter(|p| p.label == 1 && a.fold_of_patient[&p.patient_id] == f)
                .count();
            assert!(abn == 12 || abn == 13, "fold {f}: {abn}");
        }
    }

    #[test]
    fn infeasible() {
        assert!(matches!(
            stratified_group_kfold(&patients(3, 10), 4, 0),
            Err(Error::InfeasibleStratification { .. })
        ));
        assert!(stratified_group_kfold(&patients(5, 5), 1, 0).is_err());
    }

    #[test]
    fn input_order_does_not_matter() {
        let ps = patients(6, 9);
        let mut rev = ps.clone();
        rev.reverse();
        assert_eq!(
            stratified_group_kfold(&ps, 3, 42).unwrap(),
            stratified_group_kfold(&rev, 3, 42).unwrap()
        );
    }
}
