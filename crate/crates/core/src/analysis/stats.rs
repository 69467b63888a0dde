use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, StudentsT};

use crate::{Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SignificanceResult {
    pub t: f64,
    pub p: f64,
    pub stars: String,
    /// Zero pooled variance with unequal means: `t` is infinite and `p = 0`.
    pub degenerate: bool,
}

/// `"***"` for `p <= 0.001`, `"**"` for `p <= 0.01`, `"*"` for `p <= 0.05`,
/// otherwise `"NS"`.
pub fn stars(p: f64) -> &'static str {
    if p <= 0.001 {
        "***"
    } else if p <= 0.01 {
        "**"
    } else if p <= 0.05 {
        "*"
    } else {
        "NS"
    }
}

fn mean_var(x: &[f64]) -> (f64, f64) {
    let n = x.len() as f64;
    let mean = x.iter().sum::<f64>() / n;
    let ss = x.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>();
    (mean, ss / (n - 1.0))
}

/// Two-tailed Student's t-test for independent samples with pooled variance.
pub fn t_test(a: &[f64], b: &[f64]) -> Result<SignificanceResult> {
    if a.len() < 2 || b.len() < 2 {
        return Err(Error::Data(format!(
            "t-test needs at least 2 values per sample, got {} and {}",
            a.len(),
            b.len()
        )));
    }
    if a.iter().chain(b).any(|v| !v.is_finite()) {
        return Err(Error::Data("t-test on non-finite values".into()));
    }
    let (na, nb) = (a.len() as f64, b.len() as f64);
    let (ma, va) = mean_var(a);
    let (mb, vb) = mean_var(b);
    let df = na + nb - 2.0;
    let pooled = ((na - 1.0) * va + (nb - 1.0) * vb) / df;
    let se = (pooled * (1.0 / na + 1.0 / nb)).sqrt();
    let diff = ma - mb;

    let result = |t: f64, p: f64, degenerate: bool| SignificanceResult {
        t,
        p,
        stars: stars(p).to_string(),
        degenerate,
    };
    if se == 0.0 {
        return Ok(if diff == 0.0 {
            result(0.0, 1.0, false)
        } else {
            result(diff.signum() * f64::INFINITY, 0.0, true)
        });
    }
    let t = diff / se;
    let dist = StudentsT::new(0.0, 1.0, df).map_err(|e| Error::Data(e.to_string()))?;
    let p = (2.0 * dist.sf(t.abs())).min(1.0);
    Ok(result(t, p, false))
}
