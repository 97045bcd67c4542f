//! Tail-exponent and goodness-of-fit statistics.

use super::HarnessError;
use serde::Serialize;
use statrs::distribution::{ChiSquared, ContinuousCDF};
use std::collections::BTreeMap;

/// Hill estimate of the tail exponent `a` in `P(X > x) ~ x^{-a}` from the
/// `k` largest observations.
pub fn hill_estimator(data: &[f64], k: usize) -> Result<f64, HarnessError> {
    let mut v: Vec<f64> = data.iter().copied().filter(|x| *x > 0.0 && x.is_finite()).collect();
    if k == 0 || k >= v.len() {
        return Err(HarnessError::Fit(format!("Hill estimator needs 0 < k < {}, got {k}", v.len())));
    }
    v.sort_by(|a, b| b.total_cmp(a));
    let base = v[k].ln();
    let mean = v[..k].iter().map(|x| x.ln() - base).sum::<f64>() / k as f64;
    if mean <= 0.0 {
        return Err(HarnessError::Fit("top order statistics are tied".into()));
    }
    Ok(1.0 / mean)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ChiSquareTest {
    pub statistic: f64,
    pub df: usize,
    pub p_value: f64,
    /// Bins left after merging sparse neighbours.
    pub bins: usize,
}

/// Two-sample chi-square test for equality of two discrete distributions.
///
/// Adjacent values are merged until every bin holds at least `min_count`
/// observations from both samples together; the statistic is
/// `sum (sqrt(M/N) a_i - sqrt(N/M) b_i)^2 / (a_i + b_i)` with `bins - 1`
/// degrees of freedom.
pub fn chi_square_two_sample(a: &[u64], b: &[u64], min_count: u64) -> Result<ChiSquareTest, HarnessError> {
    if a.is_empty() || b.is_empty() {
        return Err(HarnessError::Fit("chi-square test needs two non-empty samples".into()));
    }
    let mut hist: BTreeMap<u64, (u64, u64)> = BTreeMap::new();
    for &x in a {
        hist.entry(x).or_default().0 += 1;
    }
    for &x in b {
        hist.entry(x).or_default().1 += 1;
    }
    let mut bins: Vec<(u64, u64)> = Vec::new();
    let mut cur = (0, 0);
    for &(p, q) in hist.values() {
        cur = (cur.0 + p, cur.1 + q);
        if cur.0 + cur.1 >= min_count {
            bins.push(cur);
            cur = (0, 0);
        }
    }
    if cur.0 + cur.1 > 0 {
        match bins.last_mut() {
            Some(last) => *last = (last.0 + cur.0, last.1 + cur.1),
            None => bins.push(cur),
        }
    }
    if bins.len() < 2 {
        return Ok(ChiSquareTest { statistic: 0.0, df: 0, p_value: 1.0, bins: bins.len() });
    }
    let (n, m) = (a.len() as f64, b.len() as f64);
    let (ka, kb) = ((m / n).sqrt(), (n / m).sqrt());
    let statistic: f64 = bins
        .iter()
        .map(|&(p, q)| {
            let diff = ka * p as f64 - kb * q as f64;
            diff * diff / (p + q) as f64
        })
        .sum();
    let df = bins.len() - 1;
    let dist = ChiSquared::new(df as f64).map_err(|e| HarnessError::Fit(e.to_string()))?;
    Ok(ChiSquareTest { statistic, df, p_value: dist.sf(statistic), bins: bins.len() })
}
