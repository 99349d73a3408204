//! Per-group post-processing transformations `s̃ = t(s, g)` that target
//! predictive rate parity by mapping scores to estimated expected outcomes.
//!
//! Univariate families (binning, linear interpolation of kernel estimates,
//! Platt scaling, isotonic regression) transform one objective; the
//! multi-objective family maps the whole score vector through a
//! multivariate kernel regression. A fitted [`Calibrator`] is immutable and
//! serialises to a versioned JSON document.

mod binning;
mod isotonic;
mod multi;
mod platt;

use std::collections::BTreeMap;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::data::{ClusteredDataset, CompositeWeights, Member, Observation};
use crate::error::{Error, Result};
use crate::estimator::{nw_point, Mode, PointOptions};
use crate::exec::Parallelism;
use crate::kernel::{BandwidthRule, Kernel};

pub use binning::Binning;
pub use isotonic::{pava, StepFunction};
pub use multi::MultiObjectiveTransform;
pub use platt::{PlattParams, SEPARATION_SLOPE};

/// Serialisation format version written into every calibrator document.
pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    Binning,
    LinearInterp,
    Platt,
    Isotonic,
    MultiObjective,
}

impl Method {
    pub const UNIVARIATE: [Method; 4] = [Method::Binning, Method::LinearInterp, Method::Platt, Method::Isotonic];

    pub fn name(self) -> &'static str {
        match self {
            Method::Binning => "binning",
            Method::LinearInterp => "linear_interp",
            Method::Platt => "platt",
            Method::Isotonic => "isotonic",
            Method::MultiObjective => "multi_objective",
        }
    }
}

impl std::fmt::Display for Method {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().replace('-', "_").as_str() {
            "binning" => Ok(Method::Binning),
            "linear_interp" | "interp" | "linear" => Ok(Method::LinearInterp),
            "platt" => Ok(Method::Platt),
            "isotonic" => Ok(Method::Isotonic),
            "multi_objective" | "multi" => Ok(Method::MultiObjective),
            other => Err(Error::InvalidArgument(format!("unknown calibration method `{other}`"))),
        }
    }
}

/// How instances are weighted when a fitter averages outcomes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Weighting {
    /// Every instance counts once.
    #[default]
    Instance,
    /// Each member's instances share a total weight of one.
    Member,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitParams {
    /// Equal-frequency bin count used when `binning` is not given.
    pub bins: usize,
    /// Explicit bins shared by every group.
    pub binning: Option<Binning>,
    pub bandwidth: BandwidthRule,
    pub kernel: Kernel,
    pub weighting: Weighting,
    #[serde(skip)]
    pub parallelism: Parallelism,
}

impl Default for FitParams {
    fn default() -> Self {
        Self {
            bins: 10,
            binning: None,
            bandwidth: BandwidthRule::RuleOfThumb,
            kernel: Kernel::Gaussian,
            weighting: Weighting::Instance,
            parallelism: Parallelism::default(),
        }
    }
}

/// Fitted parameters of one group.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum GroupTransform {
    Binning {
        #[serde(flatten)]
        bins: Binning,
        values: Vec<f64>,
        empty_bins: Vec<usize>,
    },
    LinearInterp {
        knots: Vec<f64>,
        values: Vec<f64>,
    },
    Platt(PlattParams),
    Isotonic(StepFunction),
    MultiObjective(MultiObjectiveTransform),
}

impl GroupTransform {
    /// Transformed value of a single score (univariate families only).
    pub fn eval(&self, s: f64) -> Result<f64> {
        Ok(match self {
            GroupTransform::Binning { bins, values, .. } => values[bins.index(s)],
            // Knot values are kernel averages of outcomes, so the
            // interpolant stays inside the outcome range.
            GroupTransform::LinearInterp { knots, values } => binning::interpolate(knots, values, s),
            GroupTransform::Platt(p) => p.eval(s),
            GroupTransform::Isotonic(f) => f.eval(s),
            GroupTransform::MultiObjective(m) => {
                let v = m.eval(&[s])?;
                if v.len() != 1 {
                    return Err(Error::InvalidArgument(
                        "multi-objective transforms need the full score vector".into(),
                    ));
                }
                v[0]
            }
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Calibrator {
    pub version: u32,
    pub family: Method,
    /// Objective transformed by univariate families; `K` for multi-objective.
    pub k: usize,
    pub groups: BTreeMap<String, GroupTransform>,
    #[serde(default)]
    pub warnings: Vec<String>,
}

fn instance_points(dataset: &ClusteredDataset, group: &str, k: usize, weighting: Weighting) -> Vec<(f64, f64, f64)> {
    dataset
        .members_of(group)
        .flat_map(|m| {
            let w = match weighting {
                Weighting::Instance => 1.0,
                Weighting::Member => 1.0 / m.n() as f64,
            };
            m.instances.iter().map(move |o| (o.scores[k], o.outcomes[k], w))
        })
        .collect()
}

fn group_binning(dataset: &ClusteredDataset, group: &str, k: usize, params: &FitParams) -> Result<Binning> {
    match &params.binning {
        Some(b) => Ok(b.clone()),
        None => {
            let scores: Vec<f64> = dataset.group_pairs(group, k).into_iter().map(|p| p.0).collect();
            Binning::equal_frequency(&scores, params.bins)
        }
    }
}

fn check_group(dataset: &ClusteredDataset, group: &str, k: usize) -> Result<()> {
    dataset.require_group(group)?;
    dataset.check_objective(k)
}

fn fit_binning_transform(
    train: &ClusteredDataset,
    group: &str,
    bins: &Binning,
    weighting: Weighting,
    k: usize,
) -> Result<(GroupTransform, Vec<String>)> {
    check_group(train, group, k)?;
    let points = instance_points(train, group, k, weighting);
    let (values, empty_bins) = binning::bin_means(bins, &points)?;
    let warnings = if empty_bins.is_empty() {
        Vec::new()
    } else {
        vec![format!("group `{group}`: empty bins {empty_bins:?} filled from their nearest neighbour")]
    };
    Ok((
        GroupTransform::Binning {
            bins: bins.clone(),
            values,
            empty_bins,
        },
        warnings,
    ))
}

fn fit_interp_transform(
    train: &ClusteredDataset,
    group: &str,
    bins: &Binning,
    bandwidth: BandwidthRule,
    kernel: Kernel,
    k: usize,
) -> Result<GroupTransform> {
    check_group(train, group, k)?;
    let (m, _) = train.group_size(group);
    let opts = PointOptions {
        kernel,
        mode: Mode::UserLevel,
        truncate_below: None,
    };
    let knots = bins.edges().to_vec();
    let values = knots
        .iter()
        .map(|&s| {
            let h = bandwidth.bandwidth(s, m, train.is_bounded())?;
            nw_point(train, group, s, h, k, &opts).map(|e| e.value)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(GroupTransform::LinearInterp { knots, values })
}

fn fit_platt_transform(
    train: &ClusteredDataset,
    group: &str,
    weighting: Weighting,
    k: usize,
) -> Result<(GroupTransform, Vec<String>)> {
    check_group(train, group, k)?;
    let fit = platt::fit(&instance_points(train, group, k, weighting), group)?;
    let warnings = if fit.separated {
        vec![format!(
            "group `{group}`: Platt slope {:.3e} suggests separated data",
            fit.params.a
        )]
    } else {
        Vec::new()
    };
    Ok((GroupTransform::Platt(fit.params), warnings))
}

fn fit_isotonic_transform(
    train: &ClusteredDataset,
    group: &str,
    weighting: Weighting,
    k: usize,
) -> Result<GroupTransform> {
    check_group(train, group, k)?;
    let mut points = instance_points(train, group, k, weighting);
    Ok(GroupTransform::Isotonic(isotonic::fit(&mut points)?))
}

fn fit_multi_transform(train: &ClusteredDataset, group: &str, bandwidth: BandwidthRule) -> Result<GroupTransform> {
    train.require_group(group)?;
    let sample = train.filter_members(|m| &*m.group == group)?;
    Ok(GroupTransform::MultiObjective(MultiObjectiveTransform::new(sample, bandwidth)))
}

impl Calibrator {
    fn single(family: Method, k: usize, group: &str, transform: GroupTransform, warnings: Vec<String>) -> Self {
        Self {
            version: FORMAT_VERSION,
            family,
            k,
            groups: BTreeMap::from([(group.to_string(), transform)]),
            warnings,
        }
    }

    pub fn group_names(&self) -> impl Iterator<Item = &str> {
        self.groups.keys().map(String::as_str)
    }

    pub fn transform(&self, group: &str) -> Result<&GroupTransform> {
        self.groups
            .get(group)
            .ok_or_else(|| Error::UnknownGroup(format!("{group} (not seen when the calibrator was fitted)")))
    }

    /// `t(s, g)` for univariate families.
    pub fn apply(&self, s: f64, group: &str) -> Result<f64> {
        if self.family == Method::MultiObjective && self.k != 1 {
            return Err(Error::InvalidArgument(
                "multi-objective calibrators need the full score vector; use apply_vec".into(),
            ));
        }
        self.transform(group)?.eval(s)
    }

    /// Transformed score vector. Univariate families replace objective `k`
    /// only; the multi-objective family replaces every objective.
    pub fn apply_vec(&self, scores: &[f64], group: &str) -> Result<Vec<f64>> {
        match self.transform(group)? {
            GroupTransform::MultiObjective(m) => {
                if scores.len() != self.k {
                    return Err(Error::InvalidArgument(format!(
                        "expected {} scores, got {}",
                        self.k,
                        scores.len()
                    )));
                }
                m.eval(scores)
            }
            t => {
                let mut out = scores.to_vec();
                let slot = out.get_mut(self.k).ok_or_else(|| {
                    Error::InvalidArgument(format!("objective index {} out of range", self.k))
                })?;
                *slot = t.eval(*slot)?;
                Ok(out)
            }
        }
    }

    /// `Σ w_k S̃_k`.
    pub fn apply_composite(&self, scores: &[f64], group: &str, weights: &CompositeWeights) -> Result<f64> {
        let t = self.apply_vec(scores, group)?;
        if weights.as_slice().len() != t.len() {
            return Err(Error::InvalidArgument("composite weights do not match the score vector".into()));
        }
        Ok(weights.combine(&t))
    }

    /// Applies the calibrator to every instance. The result is bounded when
    /// every transformed score lies in `[0, 1]`.
    pub fn transform_dataset(&self, dataset: &ClusteredDataset) -> Result<ClusteredDataset> {
        let transformed: Vec<Vec<Observation>> = self
            .apply_members(dataset.members())
            .into_iter()
            .collect::<Result<_>>()?;
        let bounded = transformed
            .iter()
            .flatten()
            .all(|o| o.scores.iter().all(|s| (0.0..=1.0).contains(s)));
        let members = dataset
            .members()
            .iter()
            .zip(transformed)
            .map(|(m, instances)| Member {
                id: m.id.clone(),
                group: m.group.clone(),
                instances: instances.into(),
            })
            .collect();
        ClusteredDataset::new(members, bounded)
    }

    fn apply_members(&self, members: &[Member]) -> Vec<Result<Vec<Observation>>> {
        Parallelism::default().map(members, |m| {
            m.instances
                .iter()
                .map(|o| {
                    Ok(Observation {
                        scores: self.apply_vec(&o.scores, &m.group)?,
                        outcomes: o.outcomes.clone(),
                    })
                })
                .collect()
        })
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let value: serde_json::Value = serde_json::from_str(text)?;
        match value.get("version").and_then(serde_json::Value::as_u64) {
            Some(v) if v == FORMAT_VERSION as u64 => {}
            Some(v) => {
                return Err(Error::Schema(format!(
                    "calibrator format version {v} is not supported (expected {FORMAT_VERSION})"
                )))
            }
            None => return Err(Error::Schema("calibrator document lacks a version field".into())),
        }
        Ok(serde_json::from_value(value)?)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.to_json()?).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text)
    }
}

/// Bin means of the group's outcomes.
pub fn fit_binning(
    train: &ClusteredDataset,
    group: &str,
    bins: &Binning,
    weighting: Weighting,
    k: usize,
) -> Result<Calibrator> {
    let (t, w) = fit_binning_transform(train, group, bins, weighting, k)?;
    Ok(Calibrator::single(Method::Binning, k, group, t, w))
}

/// Linear interpolation between user-level kernel estimates at the bin
/// edges.
pub fn fit_linear_interp(
    train: &ClusteredDataset,
    group: &str,
    bins: &Binning,
    bandwidth: BandwidthRule,
    k: usize,
) -> Result<Calibrator> {
    let t = fit_interp_transform(train, group, bins, bandwidth, Kernel::Gaussian, k)?;
    Ok(Calibrator::single(Method::LinearInterp, k, group, t, Vec::new()))
}

/// Logistic maximum-likelihood fit of the outcome on the score.
pub fn fit_platt(train: &ClusteredDataset, group: &str, weighting: Weighting, k: usize) -> Result<Calibrator> {
    let (t, w) = fit_platt_transform(train, group, weighting, k)?;
    Ok(Calibrator::single(Method::Platt, k, group, t, w))
}

/// Monotone least-squares fit of the outcome on the score.
pub fn fit_isotonic(train: &ClusteredDataset, group: &str, weighting: Weighting, k: usize) -> Result<Calibrator> {
    let t = fit_isotonic_transform(train, group, weighting, k)?;
    Ok(Calibrator::single(Method::Isotonic, k, group, t, Vec::new()))
}

/// Joint multivariate kernel transformation of all objectives.
pub fn fit_multi_objective(train: &ClusteredDataset, group: &str, bandwidth: BandwidthRule) -> Result<Calibrator> {
    let t = fit_multi_transform(train, group, bandwidth)?;
    Ok(Calibrator::single(Method::MultiObjective, train.k(), group, t, Vec::new()))
}

/// Fits `method` independently for every group level of `train`.
pub fn fit_per_group(train: &ClusteredDataset, method: Method, params: &FitParams, k: usize) -> Result<Calibrator> {
    if train.is_empty() {
        return Err(Error::EmptyDataset);
    }
    if params.bins == 0 {
        return Err(Error::InvalidArgument("bin count must be at least 1".into()));
    }
    let levels: Vec<String> = train.group_levels().iter().map(|g| g.to_string()).collect();
    let fitted = params.parallelism.map(&levels, |g| -> Result<(GroupTransform, Vec<String>)> {
        match method {
            Method::Binning => fit_binning_transform(train, g, &group_binning(train, g, k, params)?, params.weighting, k),
            Method::LinearInterp => {
                let bins = group_binning(train, g, k, params)?;
                Ok((fit_interp_transform(train, g, &bins, params.bandwidth, params.kernel, k)?, Vec::new()))
            }
            Method::Platt => fit_platt_transform(train, g, params.weighting, k),
            Method::Isotonic => Ok((fit_isotonic_transform(train, g, params.weighting, k)?, Vec::new())),
            Method::MultiObjective => Ok((fit_multi_transform(train, g, params.bandwidth)?, Vec::new())),
        }
    });
    let mut groups = BTreeMap::new();
    let mut warnings = Vec::new();
    for (g, r) in levels.into_iter().zip(fitted) {
        let (t, w) = r?;
        warnings.extend(w);
        groups.insert(g, t);
    }
    Ok(Calibrator {
        version: FORMAT_VERSION,
        family: method,
        k: if method == Method::MultiObjective { train.k() } else { k },
        groups,
        warnings,
    })
}
