//! Linear soft-margin SVM trained by stochastic sub-gradient descent on the
//! regularized hinge loss, on standardized inputs.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::landmarks::Label;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SvmParams {
    pub lambda: f64,
    pub iterations: usize,
    pub seed: u64,
}

impl Default for SvmParams {
    fn default() -> Self {
        SvmParams {
            lambda: 1e-2,
            iterations: 100_000,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinearSvm {
    pub weights: Vec<f64>,
    pub bias: f64,
    pub mean: Vec<f64>,
    pub scale: Vec<f64>,
}

fn sign(label: Label) -> f64 {
    if label.is_osa() {
        1.0
    } else {
        -1.0
    }
}

impl LinearSvm {
    pub fn train(rows: &[Vec<f64>], labels: &[Label], params: SvmParams) -> Result<Self> {
        if rows.len() != labels.len() || rows.is_empty() {
            return Err(Error::InvalidInput(format!(
                "{} rows but {} labels",
                rows.len(),
                labels.len()
            )));
        }
        let n_osa = labels.iter().filter(|l| l.is_osa()).count();
        if n_osa == 0 || n_osa == labels.len() {
            return Err(Error::InvalidCohort("SVM training needs both classes".into()));
        }
        if !(params.lambda > 0.0) || params.iterations == 0 {
            return Err(Error::InvalidInput("SVM needs lambda > 0 and iterations > 0".into()));
        }
        let dim = rows[0].len();
        if rows.iter().any(|r| r.len() != dim) {
            return Err(Error::InvalidInput("feature rows have different lengths".into()));
        }
        let n = rows.len() as f64;
        let mean: Vec<f64> = (0..dim).map(|k| rows.iter().map(|r| r[k]).sum::<f64>() / n).collect();
        let scale: Vec<f64> = (0..dim)
            .map(|k| {
                let var = rows.iter().map(|r| (r[k] - mean[k]).powi(2)).sum::<f64>() / n;
                if var > 0.0 {
                    var.sqrt()
                } else {
                    1.0
                }
            })
            .collect();
        let x: Vec<Vec<f64>> = rows
            .iter()
            .map(|r| (0..dim).map(|k| (r[k] - mean[k]) / scale[k]).collect())
            .collect();

        let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
        let mut w = vec![0.0; dim];
        let mut b = 0.0;
        let mut w_avg = vec![0.0; dim];
        let mut b_avg = 0.0;
        let average_from = params.iterations / 2;
        for t in 1..=params.iterations {
            let i = rng.gen_range(0..x.len());
            let y = sign(labels[i]);
            let eta = 1.0 / (params.lambda * t as f64);
            let margin = y * (dot(&w, &x[i]) + b);
            let shrink = 1.0 - eta * params.lambda;
            w.iter_mut().for_each(|v| *v *= shrink);
            if margin < 1.0 {
                for (wk, xk) in w.iter_mut().zip(&x[i]) {
                    *wk += eta * y * xk;
                }
                b += eta * y;
            }
            if t > average_from {
                for (a, v) in w_avg.iter_mut().zip(&w) {
                    *a += v;
                }
                b_avg += b;
            }
        }
        let m = (params.iterations - average_from) as f64;
        Ok(LinearSvm {
            weights: w_avg.into_iter().map(|v| v / m).collect(),
            bias: b_avg / m,
            mean,
            scale,
        })
    }

    /// Signed score; positive means OSA.
    pub fn decision(&self, row: &[f64]) -> Result<f64> {
        if row.len() != self.weights.len() {
            return Err(Error::InvalidInput(format!(
                "row has {} features, model expects {}",
                row.len(),
                self.weights.len()
            )));
        }
        let mut s = self.bias;
        for k in 0..row.len() {
            s += self.weights[k] * (row[k] - self.mean[k]) / self.scale[k];
        }
        Ok(s)
    }

    pub fn predict(&self, row: &[f64]) -> Result<Label> {
        Ok(if self.decision(row)? > 0.0 {
            Label::Osa
        } else {
            Label::Control
        })
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}
