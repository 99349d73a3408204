//! Clustered Nadaraya-Watson estimation of `E(Y | S = s, G = g)`.
//!
//! Each member contributes a cluster summary `(A_m, B_m)`: the kernel-weighted
//! outcome sum and kernel weight sum over its instances, divided by `n_m` in
//! user-level mode and left as raw sums in aggregate mode. The estimate is
//! `ΣA / ΣB` and its standard error comes from the delta method applied to the
//! ratio of means of independent cluster summaries, which stays valid under
//! arbitrary dependence between instances of one member.

use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::data::{ClusteredDataset, Member};
use crate::error::{Error, Result};
use crate::exec::Parallelism;
use crate::kernel::{BandwidthRule, Kernel};

/// Which conditional expectation is targeted.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    /// Every member weighs the same (per-member averaging).
    #[default]
    #[serde(alias = "user")]
    UserLevel,
    /// Every instance weighs the same.
    Aggregate,
}

impl FromStr for Mode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "user" | "user-level" | "user_level" => Ok(Mode::UserLevel),
            "aggregate" | "agg" => Ok(Mode::Aggregate),
            other => Err(Error::InvalidArgument(format!("unknown mode `{other}`"))),
        }
    }
}

impl std::fmt::Display for Mode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Mode::UserLevel => "user_level",
            Mode::Aggregate => "aggregate",
        })
    }
}

/// Members with effective support below this count get a conservative
/// standard error and the `low_mass` flag.
pub const LOW_MASS_MEMBERS: f64 = 10.0;

/// An instance supports `s` when its kernel weight is at least this fraction
/// of the kernel peak (about 3.7 bandwidths for the Gaussian kernel).
const SUPPORT_RATIO: f64 = 1e-3;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PointEstimate {
    pub s: f64,
    pub value: f64,
    pub std_error: f64,
    pub numerator_mass: f64,
    pub denominator_mass: f64,
    /// Number of members with at least one instance supporting `s`.
    pub m_effective: f64,
    pub bandwidth: f64,
    pub low_mass: bool,
}

impl PointEstimate {
    /// Normal-approximation confidence interval at level `1 - alpha`.
    pub fn interval(&self, z: f64) -> (f64, f64) {
        (self.value - z * self.std_error, self.value + z * self.std_error)
    }
}

/// Per-member kernel moments `(A_m, B_m)`.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct ClusterSummary {
    pub a: f64,
    pub b: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct PointOptions {
    pub kernel: Kernel,
    pub mode: Mode,
    /// Ignore instances scored below this value (labels are unobserved there).
    pub truncate_below: Option<f64>,
}

struct Accumulated {
    summaries: Vec<ClusterSummary>,
    supported: usize,
    y_min: f64,
    y_max: f64,
}

fn accumulate<'a, I, W>(members: I, mode: Mode, k: usize, support: f64, weight: W) -> Accumulated
where
    I: Iterator<Item = &'a Member>,
    W: Fn(&[f64]) -> Option<f64>,
{
    let mut acc = Accumulated {
        summaries: Vec::new(),
        supported: 0,
        y_min: f64::INFINITY,
        y_max: f64::NEG_INFINITY,
    };
    for m in members {
        let (mut a, mut b) = (0.0, 0.0);
        let mut supports = false;
        for obs in m.instances.iter() {
            let Some(w) = weight(&obs.scores) else { continue };
            let y = obs.outcomes[k];
            a += y * w;
            b += w;
            supports |= w >= support;
            acc.y_min = acc.y_min.min(y);
            acc.y_max = acc.y_max.max(y);
        }
        if mode == Mode::UserLevel {
            let inv = 1.0 / m.n() as f64;
            a *= inv;
            b *= inv;
        }
        acc.supported += supports as usize;
        acc.summaries.push(ClusterSummary { a, b });
    }
    acc
}

fn finish(s: f64, h: f64, acc: Accumulated, total_members: usize) -> Result<PointEstimate> {
    let num: f64 = acc.summaries.iter().map(|c| c.a).sum();
    let den: f64 = acc.summaries.iter().map(|c| c.b).sum();
    if !(den > 0.0) {
        return Err(Error::NoMass { s, h });
    }
    let value = num / den;
    let m_effective = acc.supported as f64;
    let plug_in = nw_variance(&acc.summaries, total_members).ok();
    let low_mass = m_effective < LOW_MASS_MEMBERS || plug_in.is_none();
    let mut std_error = plug_in.unwrap_or(0.0).sqrt();
    if low_mass {
        // Popoviciu: sd <= range / 2 for outcomes in [y_min, y_max].
        let half_range = 0.5 * (acc.y_max - acc.y_min).max(0.0);
        std_error = std_error.max(half_range / m_effective.max(1.0).sqrt());
    }
    Ok(PointEstimate {
        s,
        value,
        std_error,
        numerator_mass: num,
        denominator_mass: den,
        m_effective,
        bandwidth: h,
        low_mass,
    })
}

fn check_common(dataset: &ClusteredDataset, group: &str, h: f64, k: usize) -> Result<()> {
    if !(h > 0.0 && h.is_finite()) {
        return Err(Error::InvalidArgument(format!("bandwidth must be positive, got {h}")));
    }
    dataset.require_group(group)?;
    dataset.check_objective(k)
}

/// Cluster summaries `(A_m, B_m)` of `group` at `s`, one per group member in
/// dataset order.
pub fn cluster_summaries(
    dataset: &ClusteredDataset,
    group: &str,
    s: f64,
    h: f64,
    k: usize,
    opts: &PointOptions,
) -> Vec<ClusterSummary> {
    let cut = opts.truncate_below;
    accumulate(dataset.members_of(group), opts.mode, k, 0.0, |scores| {
        let x = scores[k];
        if cut.is_some_and(|t| x < t) {
            return None;
        }
        Some(opts.kernel.eval((x - s) / h))
    })
    .summaries
}

/// Pointwise estimate with explicit options.
pub fn nw_point(
    dataset: &ClusteredDataset,
    group: &str,
    s: f64,
    h: f64,
    k: usize,
    opts: &PointOptions,
) -> Result<PointEstimate> {
    check_common(dataset, group, h, k)?;
    let support = SUPPORT_RATIO * opts.kernel.peak();
    let cut = opts.truncate_below;
    let acc = accumulate(dataset.members_of(group), opts.mode, k, support, |scores| {
        let x = scores[k];
        if cut.is_some_and(|t| x < t) {
            return None;
        }
        Some(opts.kernel.eval((x - s) / h))
    });
    finish(s, h, acc, dataset.m())
}

/// User-level estimate (Gaussian kernel): each member's instances are
/// averaged before pooling.
pub fn nw_user_level(
    dataset: &ClusteredDataset,
    group: &str,
    s: f64,
    h: f64,
    k: usize,
) -> Result<PointEstimate> {
    nw_point(dataset, group, s, h, k, &PointOptions::default())
}

/// Aggregate estimate (Gaussian kernel): all instances pooled equally, with
/// the variance still computed over member clusters.
pub fn nw_aggregate(
    dataset: &ClusteredDataset,
    group: &str,
    s: f64,
    h: f64,
    k: usize,
) -> Result<PointEstimate> {
    let opts = PointOptions {
        mode: Mode::Aggregate,
        ..PointOptions::default()
    };
    nw_point(dataset, group, s, h, k, &opts)
}

/// Delta-method variance of `R = ΣA / ΣB` over independent clusters.
///
/// `summaries` holds the group's members; the remaining `total_members -
/// summaries.len()` members of the dataset contribute `A = B = 0`. With
/// population moments over all members the textbook expression
/// `(1/M) [var(A) - 2R cov(A,B) + R² var(B)] / B̄²` reduces exactly to
/// `Σ (A_m - R B_m)² / (Σ B_m)²`, which is what is evaluated here because it
/// avoids cancellation.
pub fn nw_variance(summaries: &[ClusterSummary], total_members: usize) -> Result<f64> {
    if total_members < summaries.len() {
        return Err(Error::InvalidArgument(format!(
            "total member count {total_members} is below the {} summaries supplied",
            summaries.len()
        )));
    }
    let with_data = summaries.iter().filter(|c| c.b > 0.0).count();
    if with_data < 2 {
        return Err(Error::InsufficientClusters { found: with_data });
    }
    let sum_a: f64 = summaries.iter().map(|c| c.a).sum();
    let sum_b: f64 = summaries.iter().map(|c| c.b).sum();
    let ratio = sum_a / sum_b;
    let ss: f64 = summaries
        .iter()
        .map(|c| {
            let d = c.a - ratio * c.b;
            d * d
        })
        .sum();
    Ok((ss / (sum_b * sum_b)).max(0.0))
}

/// Upper bound on the objective count accepted by [`nw_multivariate`].
pub const MAX_OBJECTIVES: usize = 4;

/// User-level estimate of `E(Y^k | S^1..S^K = s_vec, G = group)` with the
/// product Gaussian kernel `Π_j K((S^j - s_j) / h_j)`.
pub fn nw_multivariate(
    dataset: &ClusteredDataset,
    group: &str,
    s_vec: &[f64],
    h_vec: &[f64],
    k: usize,
) -> Result<PointEstimate> {
    let dims = dataset.k();
    if dims > MAX_OBJECTIVES {
        return Err(Error::Dimensionality(dims));
    }
    if s_vec.len() != dims || h_vec.len() != dims {
        return Err(Error::InvalidArgument(format!(
            "expected {dims} evaluation scores and bandwidths, got {} and {}",
            s_vec.len(),
            h_vec.len()
        )));
    }
    if let Some(h) = h_vec.iter().find(|h| !(**h > 0.0 && h.is_finite())) {
        return Err(Error::InvalidArgument(format!("bandwidth must be positive, got {h}")));
    }
    dataset.require_group(group)?;
    dataset.check_objective(k)?;
    let norm = Kernel::Gaussian.peak().powi(dims as i32);
    let acc = accumulate(dataset.members_of(group), Mode::UserLevel, k, SUPPORT_RATIO * norm, |scores| {
        let q: f64 = scores
            .iter()
            .zip(s_vec.iter().zip(h_vec))
            .map(|(x, (s, h))| {
                let u = (x - s) / h;
                u * u
            })
            .sum();
        Some(norm * (-0.5 * q).exp())
    });
    let h_geo = h_vec.iter().product::<f64>().powf(1.0 / dims as f64);
    let mut est = finish(s_vec[k], h_geo, acc, dataset.m())?;
    est.s = s_vec[k];
    Ok(est)
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct CurveOptions {
    pub kernel: Kernel,
    pub mode: Mode,
    pub bandwidth: BandwidthRule,
    #[serde(skip)]
    pub parallelism: Parallelism,
}

impl CurveOptions {
    pub fn with_mode(mode: Mode) -> Self {
        Self {
            mode,
            ..Self::default()
        }
    }

    /// Sample count feeding the bandwidth rule: members of the group in
    /// user-level mode, instances of the group in aggregate mode.
    pub fn bandwidth_n(&self, dataset: &ClusteredDataset, group: &str) -> usize {
        let (m, n) = dataset.group_size(group);
        match self.mode {
            Mode::UserLevel => m,
            Mode::Aggregate => n,
        }
    }

    pub fn point_options(&self) -> PointOptions {
        PointOptions {
            kernel: self.kernel,
            mode: self.mode,
            truncate_below: None,
        }
    }
}

/// Pointwise estimates over `grid`, keeping per-point failures.
pub fn curve_points(
    dataset: &ClusteredDataset,
    group: &str,
    grid: &[f64],
    opts: &CurveOptions,
    k: usize,
) -> Result<Vec<Result<PointEstimate>>> {
    dataset.require_group(group)?;
    dataset.check_objective(k)?;
    let n = opts.bandwidth_n(dataset, group);
    let point_opts = opts.point_options();
    Ok(opts.parallelism.map(grid, |&s| {
        let h = opts.bandwidth.bandwidth(s, n, dataset.is_bounded())?;
        nw_point(dataset, group, s, h, k, &point_opts)
    }))
}

/// Estimates over `grid` with per-point rule-of-thumb (or fixed) bandwidths.
pub fn estimate_curve(
    dataset: &ClusteredDataset,
    group: &str,
    grid: &[f64],
    opts: &CurveOptions,
    k: usize,
) -> Result<Vec<PointEstimate>> {
    curve_points(dataset, group, grid, opts, k)?.into_iter().collect()
}
