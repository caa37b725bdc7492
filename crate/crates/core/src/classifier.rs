//! Sparse Representation-based Classification: per-class residuals of a
//! sparse code and minimum-residual identity assignment.

use std::collections::BTreeSet;

use crate::error::{Error, Result};
use crate::linalg::{axpy, norm_l2, Mat};
use crate::omp::SparseCode;

/// Indicator over dictionary columns belonging to one class.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ClassMask {
    pub label: String,
    pub indicator: Vec<bool>,
}

impl ClassMask {
    pub fn count(&self) -> usize {
        self.indicator.iter().filter(|&&b| b).count()
    }
}

/// One mask per distinct label, sorted by label. Column `j` belongs to
/// `column_labels[j]`; columns at or past `column_labels.len()` belong to no class.
pub fn build_class_masks<S: AsRef<str>>(column_labels: &[S], p: usize) -> Result<Vec<ClassMask>> {
    if column_labels.is_empty() {
        return Err(Error::EmptyLabels);
    }
    if column_labels.len() > p {
        return Err(Error::DimensionMismatch {
            op: "build_class_masks",
            expected: p,
            found: column_labels.len(),
        });
    }
    let distinct: BTreeSet<&str> = column_labels.iter().map(AsRef::as_ref).collect();
    Ok(distinct
        .into_iter()
        .map(|label| ClassMask {
            label: label.to_string(),
            indicator: (0..p)
                .map(|j| column_labels.get(j).is_some_and(|l| l.as_ref() == label))
                .collect(),
        })
        .collect())
}

#[derive(Debug, Clone, PartialEq)]
pub struct ClassResidualTable {
    /// `(label, r_i(y))` in mask order.
    pub entries: Vec<(String, f64)>,
    pub predicted: String,
}

impl ClassResidualTable {
    pub fn residual(&self, label: &str) -> Option<f64> {
        self.entries
            .iter()
            .find(|(l, _)| l == label)
            .map(|(_, r)| *r)
    }
}

/// Computes `r_i = ||y - A (coeffs .* indicator_i)||_2` for every class and
/// predicts the class with the smallest residual (lexicographically smallest
/// label on ties).
pub fn classify_patch(
    a: &Mat,
    code: &SparseCode,
    y: &[f64],
    masks: &[ClassMask],
) -> Result<ClassResidualTable> {
    if masks.is_empty() {
        return Err(Error::EmptyLabels);
    }
    if code.coeffs.len() != a.cols() {
        return Err(Error::DimensionMismatch {
            op: "classify_patch",
            expected: a.cols(),
            found: code.coeffs.len(),
        });
    }
    if y.len() != a.rows() {
        return Err(Error::DimensionMismatch {
            op: "classify_patch",
            expected: a.rows(),
            found: y.len(),
        });
    }
    if let Some(m) = masks.iter().find(|m| m.indicator.len() != a.cols()) {
        return Err(Error::DimensionMismatch {
            op: "classify_patch",
            expected: a.cols(),
            found: m.indicator.len(),
        });
    }

    let active: Vec<usize> = (0..a.cols()).filter(|&j| code.coeffs[j] != 0.0).collect();
    let mut entries = Vec::with_capacity(masks.len());
    let mut best: Option<(usize, f64)> = None;
    for (i, mask) in masks.iter().enumerate() {
        let mut r = y.to_vec();
        for &j in active.iter().filter(|&&j| mask.indicator[j]) {
            axpy(-code.coeffs[j], a.col(j), &mut r);
        }
        let res = norm_l2(&r);
        let better = match best {
            None => true,
            Some((bi, br)) => res < br || (res == br && mask.label < masks[bi].label),
        };
        if better {
            best = Some((i, res));
        }
        entries.push((mask.label.clone(), res));
    }
    let predicted = masks[best.expect("masks non-empty").0].label.clone();
    Ok(ClassResidualTable { entries, predicted })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::normalize_l2;
    use crate::omp::{omp_solve, StoppingRule};

    fn labels(v: &[&str]) -> Vec<String> {
        v.iter().map(|s| s.to_string()).collect()
    }

    #[test]
    fn masks_for_two_classes() {
        let masks = build_class_masks(&labels(&["A", "A", "B"]), 3).unwrap();
        assert_eq!(masks.len(), 2);
        assert_eq!(masks[0].label, "A");
        assert_eq!(masks[0].indicator, vec![true, true, false]);
        assert_eq!(masks[1].indicator, vec![false, false, true]);
    }

    #[test]
    fn single_class_mask() {
        let masks = build_class_masks(&labels(&["only", "only"]), 2).unwrap();
        assert_eq!(masks.len(), 1);
        assert_eq!(masks[0].indicator, vec![true, true]);
    }

    #[test]
    fn masks_for_hundred_classes_of_fourteen() {
        let column_labels: Vec<String> = (0..100)
            .flat_map(|c| std::iter::repeat_n(format!("m-{c:03}"), 14))
            .collect();
        let masks = build_class_masks(&column_labels, 1400).unwrap();
        assert_eq!(masks.len(), 100);
        for j in 0..1400 {
            let owners = masks.iter().filter(|m| m.indicator[j]).count();
            assert_eq!(owners, 1);
        }
        assert!(masks.iter().all(|m| m.count() == 14));
    }

    #[test]
    fn unlabeled_trailing_columns_belong_to_no_class() {
        let masks = build_class_masks(&labels(&["A", "B"]), 4).unwrap();
        assert!(masks.iter().all(|m| !m.indicator[2] && !m.indicator[3]));
    }

    #[test]
    fn mask_errors() {
        let empty: Vec<String> = vec![];
        assert!(matches!(build_class_masks(&empty, 3), Err(Error::EmptyLabels)));
        assert!(build_class_masks(&labels(&["A", "B"]), 1).is_err());
    }

    #[test]
    fn training_atom_classifies_as_own_class() {
        let cols = vec![
            normalize_l2(&[1.0, 0.2, 0.0, 0.1]),
            normalize_l2(&[0.9, 0.1, 0.3, 0.0]),
            normalize_l2(&[0.0, 1.0, 0.2, 0.4]),
            normalize_l2(&[0.1, 0.8, 0.0, 0.5]),
        ];
        let a = Mat::from_columns(&cols).unwrap();
        let masks = build_class_masks(&labels(&["A", "A", "B", "B"]), 4).unwrap();
        for (j, expected) in ["A", "A", "B", "B"].iter().enumerate() {
            let y = a.col(j).to_vec();
            let code = omp_solve(&a, &y, StoppingRule::noiseless()).unwrap();
            let table = classify_patch(&a, &code, &y, &masks).unwrap();
            assert_eq!(&table.predicted, expected);
            assert!(table.residual(expected).unwrap() <= 1e-8);
        }
    }

    #[test]
    fn zero_code_ties_to_smallest_label() {
        let a = Mat::identity(3);
        let masks = build_class_masks(&labels(&["b", "a", "c"]), 3).unwrap();
        let code = SparseCode {
            support: vec![],
            coeffs: vec![0.0; 3],
            final_residual_norm: 0.0,
            iterations: 0,
            residual_norms: vec![],
            termination: crate::omp::Termination::Rule,
        };
        let y = [3.0, 0.0, 4.0];
        let table = classify_patch(&a, &code, &y, &masks).unwrap();
        assert!(table.entries.iter().all(|(_, r)| *r == 5.0));
        assert_eq!(table.predicted, "a");
    }

    #[test]
    fn dimension_errors() {
        let a = Mat::identity(3);
        let masks = build_class_masks(&labels(&["a", "b", "c"]), 3).unwrap();
        let code = omp_solve(&a, &[1.0, 0.0, 0.0], StoppingRule::noiseless()).unwrap();
        assert!(classify_patch(&a, &code, &[1.0, 0.0], &masks).is_err());
        assert!(classify_patch(&a, &code, &[1.0, 0.0, 0.0], &[]).is_err());
        let short = build_class_masks(&labels(&["a"]), 2).unwrap();
        assert!(classify_patch(&a, &code, &[1.0, 0.0, 0.0], &short).is_err());
    }
}
