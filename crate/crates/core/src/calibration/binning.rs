use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::stats::quantile_sorted;

/// Bin edges `l_0 < l_1 < ... < l_K` defining `B_i = [l_i, l_{i+1})`, the last
/// bin closed on the right.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Binning {
    edges: Vec<f64>,
}

/// Half-width used to open up a degenerate (single-valued) score range.
const DEGENERATE_PAD: f64 = 0.5e-6;

impl Binning {
    pub fn new(edges: Vec<f64>) -> Result<Self> {
        if edges.len() < 2 {
            return Err(Error::InvalidArgument("a binning needs at least two edges".into()));
        }
        if edges.iter().any(|e| !e.is_finite()) || edges.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::InvalidArgument("bin edges must be finite and strictly increasing".into()));
        }
        Ok(Self { edges })
    }

    /// `bins` equal-width bins on `[lo, hi]`.
    pub fn equal_width(lo: f64, hi: f64, bins: usize) -> Result<Self> {
        if bins == 0 {
            return Err(Error::InvalidArgument("bin count must be at least 1".into()));
        }
        let width = (hi - lo) / bins as f64;
        let mut edges: Vec<f64> = (0..bins).map(|i| lo + width * i as f64).collect();
        edges.push(hi);
        Self::new(edges)
    }

    /// Up to `bins` equal-frequency bins: interior edges are score quantiles,
    /// the outer edges the observed extremes. Coinciding quantiles merge bins.
    pub fn equal_frequency(scores: &[f64], bins: usize) -> Result<Self> {
        if bins == 0 {
            return Err(Error::InvalidArgument("bin count must be at least 1".into()));
        }
        if scores.is_empty() {
            return Err(Error::InsufficientData("no scores to bin".into()));
        }
        let mut sorted = scores.to_vec();
        sorted.sort_by(f64::total_cmp);
        let mut edges: Vec<f64> = (0..=bins)
            .map(|i| quantile_sorted(&sorted, i as f64 / bins as f64))
            .collect();
        edges.dedup();
        if edges.len() < 2 {
            let c = edges[0];
            edges = vec![c - DEGENERATE_PAD, c + DEGENERATE_PAD];
        }
        Self::new(edges)
    }

    pub fn edges(&self) -> &[f64] {
        &self.edges
    }

    pub fn len(&self) -> usize {
        self.edges.len() - 1
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    /// Index of the bin containing `s`; scores outside the edges map to the
    /// nearest outer bin.
    pub fn index(&self, s: f64) -> usize {
        let i = self.edges.partition_point(|&e| e <= s);
        i.saturating_sub(1).min(self.len() - 1)
    }

    pub fn covers(&self, s: f64) -> bool {
        s >= self.edges[0] && s <= self.edges[self.edges.len() - 1]
    }
}

/// Per-bin weighted outcome means. Empty bins take the value of the nearest
/// non-empty bin (the lower one on ties) and are reported.
pub(crate) fn bin_means(binning: &Binning, points: &[(f64, f64, f64)]) -> Result<(Vec<f64>, Vec<usize>)> {
    let mut sums = vec![(0.0, 0.0); binning.len()];
    for &(s, y, w) in points {
        let b = &mut sums[binning.index(s)];
        b.0 += w * y;
        b.1 += w;
    }
    let filled: Vec<usize> = (0..sums.len()).filter(|&i| sums[i].1 > 0.0).collect();
    if filled.is_empty() {
        return Err(Error::InsufficientData("every bin is empty".into()));
    }
    let mut empty = Vec::new();
    let values = (0..sums.len())
        .map(|i| {
            if sums[i].1 > 0.0 {
                return sums[i].0 / sums[i].1;
            }
            empty.push(i);
            let j = *filled.iter().min_by_key(|&&j| (j.abs_diff(i), j)).unwrap();
            sums[j].0 / sums[j].1
        })
        .collect();
    Ok((values, empty))
}

/// Piecewise-linear interpolation through `(knots, values)`, clamped to the
/// boundary values outside the knots.
pub(crate) fn interpolate(knots: &[f64], values: &[f64], s: f64) -> f64 {
    let last = knots.len() - 1;
    if s <= knots[0] {
        return values[0];
    }
    if s >= knots[last] {
        return values[last];
    }
    let i = knots.partition_point(|&k| k <= s) - 1;
    let (l, u) = (knots[i], knots[i + 1]);
    values[i] + (s - l) * (values[i + 1] - values[i]) / (u - l)
}
