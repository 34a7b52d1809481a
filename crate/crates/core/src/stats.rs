//! Two-sided Welch t-test.

use statrs::function::beta::checked_beta_reg;

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WelchTest {
    pub t: f64,
    pub df: f64,
    pub p: f64,
}

fn mean_var(x: &[f64]) -> (f64, f64) {
    let n = x.len() as f64;
    let mean = x.iter().sum::<f64>() / n;
    let ss = x.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>();
    (mean, ss / (n - 1.0))
}

/// Welch statistic, Welch-Satterthwaite degrees of freedom and two-sided p.
///
/// With both sample variances zero the p-value is 1 for equal means and 0
/// otherwise.
pub fn welch_t_test(a: &[f64], b: &[f64]) -> Result<WelchTest> {
    for (name, s) in [("first", a), ("second", b)] {
        if s.len() < 2 {
            return Err(Error::InvalidSample(format!(
                "{name} sample has {} values, need at least 2",
                s.len()
            )));
        }
        if s.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidSample(format!("{name} sample has non-finite values")));
        }
    }
    let (ma, va) = mean_var(a);
    let (mb, vb) = mean_var(b);
    let (sa, sb) = (va / a.len() as f64, vb / b.len() as f64);
    let se2 = sa + sb;
    if se2 == 0.0 {
        let p = if ma == mb { 1.0 } else { 0.0 };
        let t = if ma == mb { 0.0 } else { (ma - mb).signum() * f64::INFINITY };
        return Ok(WelchTest { t, df: f64::NAN, p });
    }
    let t = (ma - mb) / se2.sqrt();
    let df = se2 * se2 / (sa * sa / (a.len() - 1) as f64 + sb * sb / (b.len() - 1) as f64);
    let x = df / (df + t * t);
    let p = if x >= 1.0 {
        1.0
    } else {
        checked_beta_reg(0.5 * df, 0.5, x)
            .map_err(|e| Error::InvalidSample(format!("incomplete beta: {e}")))?
    };
    Ok(WelchTest {
        t,
        df,
        p: p.clamp(0.0, 1.0),
    })
}

pub fn welch_t_p(a: &[f64], b: &[f64]) -> Result<f64> {
    welch_t_test(a, b).map(|w| w.p)
}
