//! Bootstrap evaluation of calibrators on a scored test set, plus the
//! plumbing needed to get there from public tabular data.
//!
//! Each replicate splits the scored test set in half by member, draws a
//! cluster bootstrap sample of each half, fits one calibrator per group on
//! the first half and scores the transformed second half. Copies of a member
//! drawn by the bootstrap therefore never straddle the two halves.

mod report;
pub mod scorer;
pub mod uci;

use std::fmt;
use std::path::PathBuf;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::calibration::{fit_per_group, FitParams, Method};
use crate::data::{bootstrap_resample, split, ClusteredDataset};
use crate::error::{Error, Result};
use crate::estimator::{curve_points, CurveOptions, Mode};
use crate::exec::{stream_seed, Parallelism};
use crate::metrics::{auc, ece, npce, parity_error, Metric};
use crate::stats::quantile_sorted;
use crate::testing::{build_score_grid, default_percentiles};

pub use report::{emit_report, ReportFiles};
pub use scorer::{fit_baseline_scorer, LogisticScorer, Table, TableSpec};

/// A row of the comparison: the untransformed scores or one calibrator.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(into = "String", try_from = "String")]
pub enum MethodSpec {
    Baseline,
    Calibrated(Method),
}

impl MethodSpec {
    pub fn name(self) -> &'static str {
        match self {
            MethodSpec::Baseline => "none",
            MethodSpec::Calibrated(m) => m.name(),
        }
    }
}

impl fmt::Display for MethodSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for MethodSpec {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        if s == "none" {
            Ok(MethodSpec::Baseline)
        } else {
            s.parse().map(MethodSpec::Calibrated)
        }
    }
}

impl From<MethodSpec> for String {
    fn from(m: MethodSpec) -> String {
        m.name().to_string()
    }
}

impl TryFrom<String> for MethodSpec {
    type Error = Error;

    fn try_from(s: String) -> Result<Self> {
        s.parse()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    /// Scored input files, recorded for the report.
    pub inputs: Vec<PathBuf>,
    pub group_column: String,
    pub methods: Vec<MethodSpec>,
    pub bootstrap: usize,
    /// Percentile intervals have level `1 - alpha`.
    pub alpha: f64,
    pub mode: Mode,
    pub seed: u64,
    pub percentiles: Vec<f64>,
    pub ece_bins: usize,
    pub fit: FitParams,
    pub output: Option<PathBuf>,
    /// Policy for the replicate loop; inner loops always run sequentially.
    #[serde(skip)]
    pub parallelism: Parallelism,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            inputs: Vec::new(),
            group_column: "group".into(),
            methods: vec![MethodSpec::Baseline, MethodSpec::Calibrated(Method::LinearInterp)],
            bootstrap: 200,
            alpha: 0.05,
            mode: Mode::UserLevel,
            seed: 0,
            percentiles: default_percentiles(),
            ece_bins: 10,
            fit: FitParams::default(),
            output: None,
            parallelism: Parallelism::default(),
        }
    }
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<()> {
        if self.bootstrap < 2 {
            return Err(Error::InvalidArgument("at least 2 bootstrap iterations are needed".into()));
        }
        if self.methods.is_empty() {
            return Err(Error::InvalidArgument("no methods to compare".into()));
        }
        if self.methods.contains(&MethodSpec::Calibrated(Method::MultiObjective)) {
            return Err(Error::InvalidArgument(
                "the experiment compares univariate calibrators only".into(),
            ));
        }
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return Err(Error::InvalidArgument(format!("alpha must lie in (0, 1), got {}", self.alpha)));
        }
        if self.ece_bins == 0 {
            return Err(Error::InvalidArgument("ECE needs at least one bin".into()));
        }
        Ok(())
    }

    fn curve_options(&self, mode: Mode) -> CurveOptions {
        CurveOptions {
            kernel: self.fit.kernel,
            mode,
            bandwidth: self.fit.bandwidth,
            parallelism: Parallelism::Sequential,
        }
    }

    fn sequential_fit(&self) -> FitParams {
        FitParams {
            parallelism: Parallelism::Sequential,
            ..self.fit.clone()
        }
    }
}

/// Metric values of one method in one replicate, in [`Metric::ALL`] order.
pub type MetricValues = [f64; 4];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReplicateOutcome {
    pub index: usize,
    pub method: MethodSpec,
    pub values: Option<MetricValues>,
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricSummary {
    pub metric: Metric,
    pub mean: f64,
    pub ci: (f64, f64),
    /// Interval disjoint from the baseline's.
    pub significant: bool,
    /// Significant and on the better side of the baseline.
    pub improved: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MethodRow {
    pub method: MethodSpec,
    pub replicates: usize,
    pub failed: usize,
    pub metrics: Vec<MetricSummary>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonTable {
    pub baseline: MethodSpec,
    pub ci_level: f64,
    pub rows: Vec<MethodRow>,
}

impl ComparisonTable {
    pub fn row(&self, method: MethodSpec) -> Option<&MethodRow> {
        self.rows.iter().find(|r| r.method == method)
    }

    pub fn get(&self, method: MethodSpec, metric: Metric) -> Option<&MetricSummary> {
        self.row(method)?.metrics.iter().find(|m| m.metric == metric)
    }
}

/// One estimated curve point for plotting.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CurvePoint {
    pub method: MethodSpec,
    pub group: String,
    pub mode: Mode,
    pub s: f64,
    pub value: f64,
    pub std_error: f64,
    pub ci_low: f64,
    pub ci_high: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentResult {
    pub config: ExperimentConfig,
    pub table: ComparisonTable,
    pub replicates: Vec<ReplicateOutcome>,
    pub curves: Vec<CurvePoint>,
}

/// Maximum share of failed replicates per method.
pub const MAX_FAILURE_RATE: f64 = 0.1;

/// Runs the bootstrap comparison on a scored test set.
pub fn run_experiment(test: &ClusteredDataset, config: &ExperimentConfig) -> Result<ExperimentResult> {
    config.validate()?;
    if test.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let per_replicate = config
        .parallelism
        .map_range(config.bootstrap, |b| replicate(test, config, b));
    let mut replicates = Vec::with_capacity(config.bootstrap * config.methods.len());
    for (b, outcomes) in per_replicate.into_iter().enumerate() {
        for (method, r) in config.methods.iter().zip(outcomes) {
            let (values, error) = match r {
                Ok(v) => (Some(v), None),
                Err(e) => (None, Some(e.to_string())),
            };
            replicates.push(ReplicateOutcome {
                index: b,
                method: *method,
                values,
                error,
            });
        }
    }
    let table = summarise(config, &replicates)?;
    let curves = plot_curves(test, config)?;
    Ok(ExperimentResult {
        config: config.clone(),
        table,
        replicates,
        curves,
    })
}

/// Seeds depend only on `(seed, b)`, so a method's values do not depend on
/// which other methods are requested.
fn replicate(test: &ClusteredDataset, config: &ExperimentConfig, b: usize) -> Vec<Result<MetricValues>> {
    let seed = stream_seed(config.seed, b as u64);
    let halves = split(test, 0.5, stream_seed(seed, 0)).and_then(|(fit, eval)| {
        Ok((
            bootstrap_resample(&fit, stream_seed(seed, 1))?,
            bootstrap_resample(&eval, stream_seed(seed, 2))?,
        ))
    });
    match halves {
        Ok((fit, eval)) => config
            .methods
            .iter()
            .map(|&m| evaluate_method(&fit, &eval, m, config))
            .collect(),
        Err(e) => {
            let msg = e.to_string();
            config
                .methods
                .iter()
                .map(|_| Err(Error::InsufficientData(msg.clone())))
                .collect()
        }
    }
}

fn transformed(
    fit: &ClusteredDataset,
    eval: &ClusteredDataset,
    method: MethodSpec,
    config: &ExperimentConfig,
) -> Result<(ClusteredDataset, ClusteredDataset)> {
    match method {
        MethodSpec::Baseline => Ok((fit.clone(), eval.clone())),
        MethodSpec::Calibrated(m) => {
            let cal = fit_per_group(fit, m, &config.sequential_fit(), 0)?;
            Ok((cal.transform_dataset(fit)?, cal.transform_dataset(eval)?))
        }
    }
}

fn evaluate_method(
    fit: &ClusteredDataset,
    eval: &ClusteredDataset,
    method: MethodSpec,
    config: &ExperimentConfig,
) -> Result<MetricValues> {
    let (fit_t, eval_t) = transformed(fit, eval, method, config)?;
    let grid = build_score_grid(&fit_t, &config.percentiles, 0)?;
    let opts = config.curve_options(config.mode);
    Ok([
        npce(&eval_t, &grid, &opts, 0)?.value,
        parity_error(&eval_t, &grid, &opts, 0)?.value,
        auc(&eval_t, None, 0)?,
        ece(&eval_t, config.ece_bins, 0)?,
    ])
}

fn summarise(config: &ExperimentConfig, replicates: &[ReplicateOutcome]) -> Result<ComparisonTable> {
    let baseline = if config.methods.contains(&MethodSpec::Baseline) {
        MethodSpec::Baseline
    } else {
        config.methods[0]
    };
    let total = config.bootstrap;
    let mut rows = Vec::new();
    for &method in &config.methods {
        let values: Vec<MetricValues> = replicates
            .iter()
            .filter(|r| r.method == method)
            .filter_map(|r| r.values)
            .collect();
        let failed = total - values.len();
        if failed as f64 > MAX_FAILURE_RATE * total as f64 || values.len() < 2 {
            return Err(Error::TooManyFailures { failed, total });
        }
        let metrics = Metric::ALL
            .iter()
            .enumerate()
            .map(|(j, &metric)| {
                let mut col: Vec<f64> = values.iter().map(|v| v[j]).collect();
                let mean = col.iter().sum::<f64>() / col.len() as f64;
                col.sort_by(f64::total_cmp);
                let ci = (
                    quantile_sorted(&col, config.alpha / 2.0),
                    quantile_sorted(&col, 1.0 - config.alpha / 2.0),
                );
                MetricSummary {
                    metric,
                    mean,
                    ci,
                    significant: false,
                    improved: false,
                }
            })
            .collect();
        rows.push(MethodRow {
            method,
            replicates: values.len(),
            failed,
            metrics,
        });
    }
    let base = rows.iter().find(|r| r.method == baseline).unwrap().metrics.clone();
    for row in rows.iter_mut().filter(|r| r.method != baseline) {
        for (m, b) in row.metrics.iter_mut().zip(&base) {
            m.significant = m.ci.1 < b.ci.0 || m.ci.0 > b.ci.1;
            let better = if m.metric.lower_is_better() { m.mean < b.mean } else { m.mean > b.mean };
            m.improved = m.significant && better;
        }
    }
    Ok(ComparisonTable {
        baseline,
        ci_level: 1.0 - config.alpha,
        rows,
    })
}

/// Curves of every method on one member split of the full test set, in both
/// estimation modes, for before/after and mode-comparison plots.
fn plot_curves(test: &ClusteredDataset, config: &ExperimentConfig) -> Result<Vec<CurvePoint>> {
    let z = crate::stats::normal_quantile(1.0 - config.alpha / 2.0);
    let (fit, eval) = split(test, 0.5, stream_seed(config.seed, u64::MAX))?;
    let mut out = Vec::new();
    for &method in &config.methods {
        let (fit_t, eval_t) = match transformed(&fit, &eval, method, config) {
            Ok(pair) => pair,
            Err(_) => continue,
        };
        let grid = build_score_grid(&fit_t, &config.percentiles, 0)?;
        for g in eval_t.group_levels() {
            for mode in [Mode::UserLevel, Mode::Aggregate] {
                let opts = CurveOptions {
                    parallelism: config.parallelism,
                    ..config.curve_options(mode)
                };
                for e in curve_points(&eval_t, g, &grid.points, &opts, 0)?.into_iter().flatten() {
                    let (lo, hi) = e.interval(z);
                    out.push(CurvePoint {
                        method,
                        group: g.to_string(),
                        mode,
                        s: e.s,
                        value: e.value,
                        std_error: e.std_error,
                        ci_low: lo,
                        ci_high: hi,
                    });
                }
            }
        }
    }
    Ok(out)
}
