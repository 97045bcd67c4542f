//! Growth fits on per-band medians.
//!
//! Each band contributes one point: the lower median of its Euclidean
//! distances and the lower median of its costs. Two lines are fitted by least
//! squares through these points:
//!
//! * power: `log d_C` against `log |x|`, slope `eta`;
//! * polylog: `log d_C` against `log log |x|`, slope `Delta`.
//!
//! The slope uncertainty comes from a percentile bootstrap that resamples rows
//! within each band.

use super::scaling::DistanceRow;
use super::HarnessError;
use crate::rng::{stream, Purpose};
use rand::Rng;
use serde::Serialize;

pub const BOOTSTRAP_RESAMPLES: usize = 1000;
pub const MIN_ROWS: usize = 30;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct LineFit {
    pub slope: f64,
    pub intercept: f64,
    pub r2: f64,
}

/// Ordinary least squares; `r2` is clamped to `[0, 1]` and is 1 for a
/// constant response.
pub fn least_squares(x: &[f64], y: &[f64]) -> LineFit {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let (mut sxx, mut sxy, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in x.iter().zip(y) {
        sxx += (a - mx) * (a - mx);
        sxy += (a - mx) * (b - my);
        syy += (b - my) * (b - my);
    }
    let slope = if sxx > 0.0 { sxy / sxx } else { 0.0 };
    let r2 = if syy > 0.0 { (sxy * sxy / (sxx * syy)).clamp(0.0, 1.0) } else { 1.0 };
    LineFit { slope, intercept: my - slope * mx, r2 }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum GrowthModel {
    Power,
    Polylog,
    Constant,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct BandMedian {
    pub band: usize,
    pub count: usize,
    pub euclid: f64,
    pub cost: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FitResult {
    pub model: GrowthModel,
    pub power: LineFit,
    pub polylog: LineFit,
    /// 95% percentile bootstrap interval of the power slope.
    pub slope_ci: (f64, f64),
    pub slope_half_width: f64,
    pub polylog_ci: (f64, f64),
    pub polylog_half_width: f64,
    pub bands: Vec<BandMedian>,
    pub rows: usize,
    /// Rows dropped for infinite or non-positive cost.
    pub dropped: usize,
    /// Median cost of the farthest band over that of the nearest.
    pub top_bottom_ratio: f64,
}

/// The `(len - 1) / 2`-th order statistic. Reorders `v`.
pub fn lower_median(v: &mut [f64]) -> f64 {
    let k = (v.len() - 1) / 2;
    *v.select_nth_unstable_by(k, f64::total_cmp).1
}

fn fits(points: &[(f64, f64)]) -> (LineFit, LineFit) {
    let lx: Vec<f64> = points.iter().map(|p| p.0.ln()).collect();
    let llx: Vec<f64> = lx.iter().map(|x| x.ln()).collect();
    let ly: Vec<f64> = points.iter().map(|p| p.1.ln()).collect();
    (least_squares(&lx, &ly), least_squares(&llx, &ly))
}

fn percentile_interval(v: &mut [f64]) -> (f64, f64) {
    v.sort_by(f64::total_cmp);
    let at = |q: f64| v[((q * (v.len() - 1) as f64).round() as usize).min(v.len() - 1)];
    (at(0.025), at(0.975))
}

/// Fits growth laws to `rows`, which should all share one penalty exponent.
///
/// Needs at least [`MIN_ROWS`] usable rows, three non-empty bands and a
/// distance span of at least one decade. `seed` keys the bootstrap stream.
pub fn fit_growth(rows: &[DistanceRow], seed: u64) -> Result<FitResult, HarnessError> {
    let usable: Vec<&DistanceRow> = rows.iter().filter(|r| r.cost.is_finite() && r.cost > 0.0).collect();
    let dropped = rows.len() - usable.len();
    if usable.len() < MIN_ROWS {
        return Err(HarnessError::Fit(format!("{} usable rows, need at least {MIN_ROWS}", usable.len())));
    }
    let lo = usable.iter().map(|r| r.euclid).fold(f64::INFINITY, f64::min);
    let hi = usable.iter().map(|r| r.euclid).fold(0.0, f64::max);
    if !(lo > 1.0) {
        return Err(HarnessError::Fit(format!("distances must exceed 1 for the polylog fit, got {lo}")));
    }
    if hi < 10.0 * lo {
        return Err(HarnessError::Fit(format!("distances span {lo}..{hi}, less than a decade")));
    }
    let nb = usable.iter().map(|r| r.band).max().unwrap() + 1;
    let mut groups: Vec<Vec<(f64, f64)>> = vec![Vec::new(); nb];
    for r in &usable {
        groups[r.band].push((r.euclid, r.cost));
    }
    let groups: Vec<(usize, Vec<(f64, f64)>)> =
        groups.into_iter().enumerate().filter(|(_, g)| !g.is_empty()).collect();
    if groups.len() < 3 {
        return Err(HarnessError::Fit(format!("{} non-empty bands, need at least 3", groups.len())));
    }
    let medians = |pick: &mut dyn FnMut(&[(f64, f64)], &mut Vec<f64>, &mut Vec<f64>)| -> Vec<(f64, f64)> {
        let (mut xs, mut ys) = (Vec::new(), Vec::new());
        groups
            .iter()
            .map(|(_, g)| {
                xs.clear();
                ys.clear();
                pick(g, &mut xs, &mut ys);
                (lower_median(&mut xs), lower_median(&mut ys))
            })
            .collect()
    };
    let points = medians(&mut |g, xs, ys| {
        xs.extend(g.iter().map(|p| p.0));
        ys.extend(g.iter().map(|p| p.1));
    });
    let (power, polylog) = fits(&points);
    let mut rng = stream(seed, Purpose::Bootstrap, 0);
    let mut slopes = Vec::with_capacity(BOOTSTRAP_RESAMPLES);
    let mut exps = Vec::with_capacity(BOOTSTRAP_RESAMPLES);
    for _ in 0..BOOTSTRAP_RESAMPLES {
        let pts = medians(&mut |g, xs, ys| {
            for _ in 0..g.len() {
                let (x, y) = g[rng.random_range(0..g.len())];
                xs.push(x);
                ys.push(y);
            }
        });
        let (p, q) = fits(&pts);
        slopes.push(p.slope);
        exps.push(q.slope);
    }
    let slope_ci = percentile_interval(&mut slopes);
    let polylog_ci = percentile_interval(&mut exps);
    let model = if slope_ci.0 <= 0.0 && 0.0 <= slope_ci.1 {
        GrowthModel::Constant
    } else if polylog.r2 > power.r2 {
        GrowthModel::Polylog
    } else {
        GrowthModel::Power
    };
    let bands: Vec<BandMedian> = groups
        .iter()
        .zip(&points)
        .map(|((b, g), &(x, y))| BandMedian { band: *b, count: g.len(), euclid: x, cost: y })
        .collect();
    let top_bottom_ratio = bands.last().unwrap().cost / bands[0].cost;
    Ok(FitResult {
        model,
        power,
        polylog,
        slope_ci,
        slope_half_width: (slope_ci.1 - slope_ci.0) / 2.0,
        polylog_ci,
        polylog_half_width: (polylog_ci.1 - polylog_ci.0) / 2.0,
        bands,
        rows: usable.len(),
        dropped,
        top_bottom_ratio,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand_distr::{Distribution, Normal};

    fn rows_for(f: impl Fn(f64) -> f64, noise: impl Fn(usize) -> f64) -> Vec<DistanceRow> {
        let mut out = Vec::new();
        for band in 0..10 {
            let x = 10f64.powf(0.5 + 0.2 * band as f64);
            for k in 0..30 {
                let i = band * 30 + k;
                out.push(DistanceRow {
                    seed: 0,
                    mu: 1.0,
                    band,
                    source: 0,
                    target: i,
                    euclid: x,
                    cost: f(x) * noise(i),
                    hops: Some(1),
                });
            }
        }
        out
    }

    #[test]
    fn exact_power_law() {
        let fit = fit_growth(&rows_for(|x| x.powf(0.6), |_| 1.0), 1).unwrap();
        assert!((fit.power.slope - 0.6).abs() < 1e-9);
        assert!((fit.power.r2 - 1.0).abs() < 1e-12);
        assert!(fit.slope_half_width < 1e-9);
        assert_eq!(fit.model, GrowthModel::Power);
    }

    #[test]
    fn exact_polylog_law() {
        let fit = fit_growth(&rows_for(|x| x.ln().powi(2), |_| 1.0), 1).unwrap();
        assert!((fit.polylog.slope - 2.0).abs() < 1e-9);
        assert!(fit.polylog.r2 > fit.power.r2);
        assert_eq!(fit.model, GrowthModel::Polylog);
    }

    #[test]
    fn constant_data_is_classified_constant() {
        let n = Normal::<f64>::new(0.0, 0.3).unwrap();
        let mut r = stream(5, Purpose::Experiment, 0);
        let noise: Vec<f64> = (0..300).map(|_| n.sample(&mut r).exp()).collect();
        let fit = fit_growth(&rows_for(|_| 2.0, |i| noise[i]), 9).unwrap();
        assert_eq!(fit.model, GrowthModel::Constant);
    }

    #[test]
    fn rejects_short_or_narrow_tables() {
        let rows = rows_for(|x| x, |_| 1.0);
        assert!(fit_growth(&rows[..20], 0).is_err());
        let narrow: Vec<DistanceRow> = rows.iter().filter(|r| r.band < 4).cloned().collect();
        assert!(fit_growth(&narrow, 0).is_err());
        let mut dead = rows.clone();
        for r in dead.iter_mut().skip(10) {
            r.cost = f64::INFINITY;
        }
        assert!(fit_growth(&dead, 0).is_err());
    }

    #[test]
    fn bootstrap_is_reproducible() {
        let n = Normal::<f64>::new(0.0, 0.5).unwrap();
        let mut r = stream(3, Purpose::Experiment, 0);
        let noise: Vec<f64> = (0..300).map(|_| n.sample(&mut r).exp()).collect();
        let rows = rows_for(|x| x.powf(0.6), |i| noise[i]);
        assert_eq!(fit_growth(&rows, 4).unwrap(), fit_growth(&rows, 4).unwrap());
    }

    #[test]
    fn lower_median_picks_lower_middle() {
        assert_eq!(lower_median(&mut [4.0, 1.0, 3.0, 2.0]), 2.0);
        assert_eq!(lower_median(&mut [5.0]), 5.0);
    }
}
