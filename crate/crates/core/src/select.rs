//! Leave-one-out stabilized p-values and top-K feature selection.

use std::cmp::Ordering;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::landmarks::Label;
use crate::stats::welch_t_p;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SelectionResult {
    pub p_values: Vec<f64>,
    /// Indices of the kept features, by ascending p-value.
    pub selected_indices: Vec<usize>,
    pub k: usize,
}

fn check_rows(rows: &[Vec<f64>], labels: &[Label]) -> Result<usize> {
    if rows.len() != labels.len() {
        return Err(Error::InvalidInput(format!(
            "{} feature rows but {} labels",
            rows.len(),
            labels.len()
        )));
    }
    let width = rows.first().map_or(0, |r| r.len());
    if let Some(i) = rows.iter().position(|r| r.len() != width) {
        return Err(Error::InvalidInput(format!(
            "row {i} has {} features, expected {width}",
            rows[i].len()
        )));
    }
    Ok(width)
}

/// For every subject `i`, Welch p-values of all features with `i` left out;
/// each feature keeps its minimum over `i`.
pub fn bagged_p_values(rows: &[Vec<f64>], labels: &[Label]) -> Result<Vec<f64>> {
    let width = check_rows(rows, labels)?;
    let n_osa = labels.iter().filter(|l| l.is_osa()).count();
    let n_control = labels.len() - n_osa;
    if n_osa < 3 || n_control < 3 {
        return Err(Error::InvalidCohort(format!(
            "leave-one-out testing needs at least 3 subjects per class, got {n_control} control and {n_osa} osa"
        )));
    }
    let mut best = vec![f64::INFINITY; width];
    let mut control = Vec::with_capacity(n_control);
    let mut osa = Vec::with_capacity(n_osa);
    for (k, b) in best.iter_mut().enumerate() {
        for left_out in 0..rows.len() {
            control.clear();
            osa.clear();
            for (i, (row, label)) in rows.iter().zip(labels).enumerate() {
                if i == left_out {
                    continue;
                }
                match label {
                    Label::Control => control.push(row[k]),
                    Label::Osa => osa.push(row[k]),
                }
            }
            *b = b.min(welch_t_p(&control, &osa)?);
        }
    }
    Ok(best)
}

/// Indices of the `k` smallest p-values, ascending, ties by lower index.
pub fn select_top_k(p_values: &[f64], k: usize) -> Result<SelectionResult> {
    if k == 0 || k > p_values.len() {
        return Err(Error::InvalidK {
            k,
            max: p_values.len(),
        });
    }
    let mut order: Vec<usize> = (0..p_values.len()).collect();
    order.sort_by(|&i, &j| {
        p_values[i]
            .partial_cmp(&p_values[j])
            .unwrap_or(Ordering::Equal)
            .then(i.cmp(&j))
    });
    order.truncate(k);
    Ok(SelectionResult {
        p_values: p_values.to_vec(),
        selected_indices: order,
        k,
    })
}

impl SelectionResult {
    /// The selected columns of a feature row, in selection order.
    pub fn trim(&self, row: &[f64]) -> Result<Vec<f64>> {
        if row.len() != self.p_values.len() {
            return Err(Error::InvalidInput(format!(
                "row has {} deformation features, selection expects {}",
                row.len(),
                self.p_values.len()
            )));
        }
        Ok(self.selected_indices.iter().map(|&i| row[i]).collect())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn top_k_examples() {
        assert_eq!(select_top_k(&[0.5, 0.01, 0.3], 1).unwrap().selected_indices, vec![1]);
        assert_eq!(select_top_k(&[0.2, 0.2, 0.1], 2).unwrap().selected_indices, vec![2, 0]);
        assert_eq!(select_top_k(&[0.2, 0.2, 0.1], 3).unwrap().selected_indices, vec![2, 0, 1]);
        assert!(matches!(select_top_k(&[0.1], 2), Err(Error::InvalidK { k: 2, max: 1 })));
        assert!(select_top_k(&[0.1], 0).is_err());
    }

    #[test]
    fn constant_feature_has_unit_p() {
        let rows: Vec<Vec<f64>> = (0..6).map(|i| vec![1.0, i as f64]).collect();
        let labels = [Label::Control, Label::Control, Label::Control, Label::Osa, Label::Osa, Label::Osa];
        let p = bagged_p_values(&rows, &labels).unwrap();
        assert_eq!(p[0], 1.0);
        assert!(p[1] < 0.05);
    }

    #[test]
    fn small_class_is_rejected() {
        let rows = vec![vec![0.0]; 5];
        let labels = [Label::Control, Label::Control, Label::Control, Label::Osa, Label::Osa];
        assert!(matches!(bagged_p_values(&rows, &labels), Err(Error::InvalidCohort(_))));
    }
}
