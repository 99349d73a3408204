//! Evaluation metrics: non-parametric calibration error, parity error, AUC
//! and expected calibration error.

use serde::{Deserialize, Serialize};

use crate::data::ClusteredDataset;
use crate::error::{Error, Result};
use crate::estimator::{curve_points, CurveOptions};
use crate::testing::ScoreGrid;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Metric {
    Npce,
    ParityError,
    Auc,
    Ece,
}

impl Metric {
    pub const ALL: [Metric; 4] = [Metric::Npce, Metric::ParityError, Metric::Auc, Metric::Ece];

    pub fn name(self) -> &'static str {
        match self {
            Metric::Npce => "npce",
            Metric::ParityError => "parity_error",
            Metric::Auc => "auc",
            Metric::Ece => "ece",
        }
    }

    /// Whether smaller values are better.
    pub fn lower_is_better(self) -> bool {
        self != Metric::Auc
    }
}

impl std::fmt::Display for Metric {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub metric: Metric,
    pub value: f64,
    /// Bootstrap percentile interval, when computed.
    pub ci: Option<(f64, f64)>,
    /// Grid or bin configuration behind the value.
    pub config: String,
}

/// A grid-averaged metric with the grid points that were actually used.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridMetric {
    pub value: f64,
    pub used_points: Vec<f64>,
    /// Points where some group had no kernel mass; dropped for all groups.
    pub dropped_points: Vec<f64>,
}

/// Per-group estimates on the grid points where every group is estimable.
fn group_curves(
    dataset: &ClusteredDataset,
    grid: &ScoreGrid,
    opts: &CurveOptions,
    k: usize,
) -> Result<(Vec<f64>, Vec<f64>, Vec<Vec<f64>>)> {
    if dataset.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let mut per_group = Vec::new();
    for g in dataset.group_levels() {
        let pts = curve_points(dataset, g, &grid.points, opts, k)?;
        let vals = pts
            .into_iter()
            .map(|r| match r {
                Ok(e) => Ok(Some(e.value)),
                Err(Error::NoMass { .. }) => Ok(None),
                Err(e) => Err(e),
            })
            .collect::<Result<Vec<_>>>()?;
        per_group.push(vals);
    }
    let mut used = Vec::new();
    let mut dropped = Vec::new();
    let mut curves = vec![Vec::new(); per_group.len()];
    for (j, &s) in grid.points.iter().enumerate() {
        if per_group.iter().all(|c| c[j].is_some()) {
            used.push(s);
            for (c, src) in curves.iter_mut().zip(&per_group) {
                c.push(src[j].unwrap());
            }
        } else {
            dropped.push(s);
        }
    }
    if used.is_empty() {
        return Err(Error::EmptyGrid);
    }
    Ok((used, dropped, curves))
}

/// `(1/|S|) Σ_s Σ_g |f̂_g(s) - s|`.
pub fn npce(dataset: &ClusteredDataset, grid: &ScoreGrid, opts: &CurveOptions, k: usize) -> Result<GridMetric> {
    let (used, dropped, curves) = group_curves(dataset, grid, opts, k)?;
    let total: f64 = curves
        .iter()
        .map(|c| c.iter().zip(&used).map(|(f, s)| (f - s).abs()).sum::<f64>())
        .sum();
    Ok(GridMetric {
        value: total / used.len() as f64,
        used_points: used,
        dropped_points: dropped,
    })
}

/// `(1/|S|) Σ_s Σ_{g != g'} |f̂_g(s) - f̂_g'(s)|`, summing over ordered pairs
/// so every unordered pair counts twice.
pub fn parity_error(dataset: &ClusteredDataset, grid: &ScoreGrid, opts: &CurveOptions, k: usize) -> Result<GridMetric> {
    let (used, dropped, curves) = group_curves(dataset, grid, opts, k)?;
    let mut total = 0.0;
    for (i, a) in curves.iter().enumerate() {
        for (j, b) in curves.iter().enumerate() {
            if i != j {
                total += a.iter().zip(b).map(|(x, y)| (x - y).abs()).sum::<f64>();
            }
        }
    }
    Ok(GridMetric {
        value: total / used.len() as f64,
        used_points: used,
        dropped_points: dropped,
    })
}

/// Mann-Whitney AUC from mid-ranks: `P(S⁺ > S⁻) + P(S⁺ = S⁻) / 2`.
/// Outcomes above one half count as positive.
pub fn auc(dataset: &ClusteredDataset, group: Option<&str>, k: usize) -> Result<f64> {
    dataset.check_objective(k)?;
    let pairs: Vec<(f64, bool)> = match group {
        Some(g) => {
            dataset.require_group(g)?;
            dataset.group_pairs(g, k).into_iter().map(|(s, y)| (s, y > 0.5)).collect()
        }
        None => dataset
            .members()
            .iter()
            .flat_map(|m| m.instances.iter().map(move |o| (o.scores[k], o.outcomes[k] > 0.5)))
            .collect(),
    };
    auc_pairs(&pairs)
}

pub(crate) fn auc_pairs(pairs: &[(f64, bool)]) -> Result<f64> {
    let n_pos = pairs.iter().filter(|p| p.1).count();
    let n_neg = pairs.len() - n_pos;
    if n_pos == 0 || n_neg == 0 {
        return Err(Error::DegenerateOutcome("auc".into()));
    }
    let mut order: Vec<usize> = (0..pairs.len()).collect();
    order.sort_by(|&a, &b| pairs[a].0.total_cmp(&pairs[b].0));
    let mut rank_sum_pos = 0.0;
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && pairs[order[j + 1]].0 == pairs[order[i]].0 {
            j += 1;
        }
        // Ranks i+1..=j+1 share their average.
        let mid = (i + j) as f64 / 2.0 + 1.0;
        rank_sum_pos += mid * order[i..=j].iter().filter(|&&t| pairs[t].1).count() as f64;
        i = j + 1;
    }
    let (p, n) = (n_pos as f64, n_neg as f64);
    Ok((rank_sum_pos - p * (p + 1.0) / 2.0) / (p * n))
}

/// `Σ_b (n_b / N) |mean score in b - mean outcome in b|` over `bins`
/// equal-width bins on `[0, 1]`; out-of-range scores fall in the end bins.
pub fn ece(dataset: &ClusteredDataset, bins: usize, k: usize) -> Result<f64> {
    if bins == 0 {
        return Err(Error::InvalidArgument("ECE needs at least one bin".into()));
    }
    dataset.check_objective(k)?;
    let mut acc = vec![(0.0, 0.0, 0usize); bins];
    for o in dataset.members().iter().flat_map(|m| m.instances.iter()) {
        let s = o.scores[k];
        let b = ((s * bins as f64).floor().max(0.0) as usize).min(bins - 1);
        acc[b].0 += s;
        acc[b].1 += o.outcomes[k];
        acc[b].2 += 1;
    }
    let total = dataset.n() as f64;
    if total == 0.0 {
        return Err(Error::EmptyDataset);
    }
    Ok(acc
        .iter()
        .filter(|b| b.2 > 0)
        .map(|&(s, y, n)| (n as f64 / total) * ((s - y) / n as f64).abs())
        .sum())
}
