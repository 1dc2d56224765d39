//! ROC curves and normalized AUC, success fractions and score histograms.

use alloc::vec;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::energy::{EnergyMatrix, Sequence};
use crate::error::{invalid, Error, Result};
use crate::fold_oracle::{FoldEngine, OracleConfig};

/// Recall of designing sequences against rank fraction.
///
/// `points` holds the corners of the piecewise-linear curve on the full rank
/// grid: flat stretches between hits are stored by their end points only.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RocCurve {
    pub points: Vec<(f64, f64)>,
    pub q: f64,
    pub total: u64,
    pub positives: u64,
}

impl RocCurve {
    /// `y` at rank fraction `x` by linear interpolation.
    pub fn recall_at(&self, x: f64) -> f64 {
        let k = self.points.partition_point(|p| p.0 <= x);
        if k == 0 {
            return 0.0;
        }
        if k == self.points.len() {
            return self.points[k - 1].1;
        }
        let (x0, y0) = self.points[k - 1];
        let (x1, y1) = self.points[k];
        y0 + (y1 - y0) * (x - x0) / (x1 - x0)
    }
}

/// Builds the ROC from designing flags listed in rank order, best first.
///
/// `y(k/P)` is the fraction of designing sequences among the first `k`;
/// the area is integrated with the trapezoid rule on the full grid and
/// `q = (area - 1/2) / (1/2)`.
pub fn roc(flags_in_rank_order: impl IntoIterator<Item = bool>) -> Result<RocCurve> {
    let flags: Vec<bool> = flags_in_rank_order.into_iter().collect();
    let total = flags.len() as u64;
    let positives = flags.iter().filter(|&&f| f).count() as u64;
    if positives == 0 {
        return Err(Error::UndefinedQ);
    }
    let p = total as f64;
    let dn = positives as f64;
    let mut points = vec![(0.0, 0.0)];
    let mut found = 0u64;
    // sum over k = 1..=P of (y_{k-1} + y_k) / 2, in units of 1/dn
    let mut twice_area = 0.0f64;
    for (k, &hit) in flags.iter().enumerate() {
        let before = found;
        if hit {
            found += 1;
            let last = *points.last().expect("non-empty");
            let xk = k as f64 / p;
            if last.0 != xk {
                points.push((xk, before as f64 / dn));
            }
            points.push(((k + 1) as f64 / p, found as f64 / dn));
        }
        twice_area += (before + found) as f64;
    }
    if points.last().map(|q| q.0) != Some(1.0) {
        points.push((1.0, 1.0));
    }
    let area = twice_area / (2.0 * dn * p);
    Ok(RocCurve {
        points,
        q: (area - 0.5) / 0.5,
        total,
        positives,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SuccessRecord {
    pub cycle: usize,
    pub f_c: f64,
    pub designing: usize,
    pub size: usize,
}

/// Fraction of `candidates` that design `target` under the ground truth.
pub fn success_fraction(
    cycle: usize,
    candidates: &[Sequence],
    target: usize,
    engine: &FoldEngine,
    truth: &EnergyMatrix,
    cfg: OracleConfig,
) -> Result<SuccessRecord> {
    let mut designing = 0;
    for s in candidates {
        if engine.fold(s, truth, cfg)?.designs(target) {
            designing += 1;
        }
    }
    Ok(success_record(cycle, designing, candidates.len()))
}

pub fn success_record(cycle: usize, designing: usize, size: usize) -> SuccessRecord {
    SuccessRecord {
        cycle,
        f_c: if size == 0 { 0.0 } else { designing as f64 / size as f64 },
        designing,
        size,
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HistogramBin {
    pub lo: f64,
    pub hi: f64,
    pub count: u64,
}

pub const DEFAULT_BINS: usize = 60;

/// Fixed-width bins spanning `[min, max]`, the last bin closed. A sample with
/// a single distinct value gets one degenerate bin.
pub fn g_histogram(values: &[f64], bins: usize) -> Result<Vec<HistogramBin>> {
    if values.is_empty() {
        return Err(invalid("histogram of an empty sample"));
    }
    if bins == 0 {
        return Err(invalid("histogram needs at least one bin"));
    }
    if values.iter().any(|v| !v.is_finite()) {
        return Err(invalid("histogram values must be finite"));
    }
    let lo = values.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if lo == hi {
        return Ok(vec![HistogramBin {
            lo,
            hi,
            count: values.len() as u64,
        }]);
    }
    let width = (hi - lo) / bins as f64;
    let mut out: Vec<HistogramBin> = (0..bins)
        .map(|b| HistogramBin {
            lo: lo + b as f64 * width,
            hi: if b + 1 == bins { hi } else { lo + (b + 1) as f64 * width },
            count: 0,
        })
        .collect();
    for &v in values {
        let b = (((v - lo) / width) as usize).min(bins - 1);
        out[b].count += 1;
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn perfect_and_reversed() {
        let mut flags = vec![false; 100];
        flags[..10].iter_mut().for_each(|f| *f = true);
        let good = roc(flags.iter().copied()).unwrap();
        assert!((good.q - 0.9).abs() < 1e-12);
        let bad = roc(flags.iter().rev().copied()).unwrap();
        assert!((bad.q + good.q).abs() < 1e-12);
        assert_eq!(good.points.first(), Some(&(0.0, 0.0)));
        assert_eq!(good.points.last(), Some(&(1.0, 1.0)));
        assert!((good.recall_at(0.05) - 0.5).abs() < 1e-12);
    }

    #[test]
    fn interleaved_is_near_zero() {
        let flags: Vec<bool> = (0..10_000).map(|k| k % 4 == 0).collect();
        assert!(roc(flags).unwrap().q.abs() < 1e-3);
    }

    #[test]
    fn no_positive_is_undefined() {
        assert!(matches!(roc([false, false]), Err(Error::UndefinedQ)));
    }

    #[test]
    fn points_reproduce_the_area() {
        let flags = [false, true, true, false, false, true, false];
        let r = roc(flags).unwrap();
        let area: f64 = r
            .points
            .windows(2)
            .map(|w| (w[1].0 - w[0].0) * (w[0].1 + w[1].1) / 2.0)
            .sum();
        assert!((2.0 * area - 1.0 - r.q).abs() < 1e-12);
        assert!(r.points.windows(2).all(|w| w[0].0 <= w[1].0 && w[0].1 <= w[1].1));
    }

    #[test]
    fn histogram_shapes() {
        let one = g_histogram(&[2.5], 60).unwrap();
        assert_eq!(one.len(), 1);
        assert_eq!(one[0].count, 1);
        let v: Vec<f64> = (0..1000).map(|k| (k as f64).sin()).collect();
        let h = g_histogram(&v, 60).unwrap();
        assert_eq!(h.len(), 60);
        assert_eq!(h.iter().map(|b| b.count).sum::<u64>(), 1000);
        assert!(g_histogram(&[], 60).is_err());
    }

    #[test]
    fn success_bounds() {
        assert_eq!(success_record(0, 0, 30).f_c, 0.0);
        assert_eq!(success_record(0, 30, 30).f_c, 1.0);
    }
}
