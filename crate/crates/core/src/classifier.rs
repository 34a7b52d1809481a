//! L2 nearest-mean threshold classifier.

use std::cmp::Ordering;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::landmarks::Label;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ThresholdModel {
    /// Mean control feature vector.
    pub c_mean: Vec<f64>,
    /// Subjects at distance `<= d_opt` from `c_mean` are controls.
    pub d_opt: f64,
}

/// Column means accumulated in sorted order, so the result does not depend
/// on the order of the rows.
fn column_means<'a>(rows: impl Iterator<Item = &'a Vec<f64>> + Clone, width: usize) -> Vec<f64> {
    let n = rows.clone().count() as f64;
    let mut column = Vec::new();
    (0..width)
        .map(|k| {
            column.clear();
            column.extend(rows.clone().map(|r| r[k]));
            column.sort_by(|a: &f64, b| a.total_cmp(b));
            column.iter().sum::<f64>() / n
        })
        .collect()
}

pub fn l2_distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
}

/// Number of correct decisions of the rule "control iff `d <= t`".
pub fn threshold_correct(distances: &[f64], labels: &[Label], t: f64) -> usize {
    distances
        .iter()
        .zip(labels)
        .filter(|(&d, &l)| (d <= t) == (l == Label::Control))
        .count()
}

/// The best threshold among the midpoints of adjacent distinct sorted
/// distances and one sentinel on either side; the smallest wins ties.
pub fn optimal_threshold(distances: &[f64], labels: &[Label]) -> (f64, usize) {
    let mut sorted = distances.to_vec();
    sorted.sort_by(|a, b| a.total_cmp(b));
    sorted.dedup();
    let (Some(&lo), Some(&hi)) = (sorted.first(), sorted.last()) else {
        return (0.0, 0);
    };
    let mut candidates = vec![lo - 1.0];
    candidates.extend(sorted.windows(2).map(|p| 0.5 * (p[0] + p[1])));
    candidates.push(hi + 1.0);

    // Sweep in ascending order so each candidate costs O(1).
    let mut order: Vec<usize> = (0..distances.len()).collect();
    order.sort_by(|&i, &j| distances[i].partial_cmp(&distances[j]).unwrap_or(Ordering::Equal));
    let mut correct = labels.iter().filter(|l| l.is_osa()).count();
    let mut next = 0;
    let (mut best_t, mut best) = (candidates[0], correct);
    for &t in &candidates[1..] {
        while next < order.len() && distances[order[next]] <= t {
            match labels[order[next]] {
                Label::Control => correct += 1,
                Label::Osa => correct -= 1,
            }
            next += 1;
        }
        if correct > best {
            best = correct;
            best_t = t;
        }
    }
    (best_t, best)
}

impl ThresholdModel {
    pub fn train(rows: &[Vec<f64>], labels: &[Label]) -> Result<Self> {
        if rows.len() != labels.len() {
            return Err(Error::InvalidInput(format!(
                "{} rows but {} labels",
                rows.len(),
                labels.len()
            )));
        }
        let n_control = labels.iter().filter(|l| !l.is_osa()).count();
        if n_control == 0 || n_control == labels.len() {
            return Err(Error::InvalidCohort(
                "training needs both control and osa subjects".into(),
            ));
        }
        let width = rows[0].len();
        if rows.iter().any(|r| r.len() != width) {
            return Err(Error::InvalidInput("feature rows have different lengths".into()));
        }
        let controls = rows.iter().zip(labels).filter(|(_, l)| !l.is_osa()).map(|(r, _)| r);
        let c_mean = column_means(controls, width);
        let distances: Vec<f64> = rows.iter().map(|r| l2_distance(r, &c_mean)).collect();
        let (d_opt, _) = optimal_threshold(&distances, labels);
        Ok(ThresholdModel { c_mean, d_opt })
    }

    pub fn distance(&self, row: &[f64]) -> Result<f64> {
        if row.len() != self.c_mean.len() {
            return Err(Error::InvalidInput(format!(
                "feature row has length {}, model expects {}",
                row.len(),
                self.c_mean.len()
            )));
        }
        Ok(l2_distance(row, &self.c_mean))
    }

    pub fn classify_distance(&self, d: f64) -> Label {
        if d <= self.d_opt {
            Label::Control
        } else {
            Label::Osa
        }
    }

    pub fn predict(&self, row: &[f64]) -> Result<Label> {
        self.distance(row).map(|d| self.classify_distance(d))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use Label::{Control as C, Osa as O};

    #[test]
    fn separated_distances() {
        let (t, correct) = optimal_threshold(&[1.0, 2.0, 3.0, 4.0], &[C, C, O, O]);
        assert_eq!((t, correct), (2.5, 4));
    }

    #[test]
    fn interleaved_distances() {
        let (t, correct) = optimal_threshold(&[1.0, 2.0, 3.0, 4.0], &[C, O, C, O]);
        assert_eq!(correct, 3);
        // 1.5 and 3.5 both give 3 correct; the smaller one wins
        assert_eq!(t, 1.5);
    }

    #[test]
    fn boundary_is_control() {
        let m = ThresholdModel {
            c_mean: vec![0.0, 0.0],
            d_opt: 5.0,
        };
        assert_eq!(m.predict(&[3.0, 4.0]).unwrap(), C);
        assert_eq!(m.predict(&[0.0, 0.0]).unwrap(), C);
        assert_eq!(m.predict(&[0.0, 6.0]).unwrap(), O);
        assert!(m.predict(&[1.0]).is_err());
    }

    #[test]
    fn train_on_rows() {
        let rows = vec![vec![0.0, 0.0], vec![0.0, 0.0], vec![3.0, 4.0], vec![6.0, 8.0]];
        let m = ThresholdModel::train(&rows, &[C, C, O, O]).unwrap();
        assert_eq!(m.c_mean, vec![0.0, 0.0]);
        assert_eq!(m.d_opt, 2.5);
        assert!(ThresholdModel::train(&rows[..2], &[C, C]).is_err());
    }
}
