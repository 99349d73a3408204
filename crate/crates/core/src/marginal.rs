//! Group-specific thresholds that equalise marginal outcomes.
//!
//! Given a common threshold `t*`, the solver looks for `(t_1, t_2)` with
//! equal predicted outcomes at the two thresholds while the overall expected
//! positive-classification rate stays at its status-quo value. Outcomes are
//! only observed above `t*`, so each group's outcome curve is a truncated
//! kernel estimate above the threshold, extended linearly below it.

use serde::{Deserialize, Serialize};

use crate::calibration::pava;
use crate::data::ClusteredDataset;
use crate::error::{Error, Result};
use crate::estimator::{nw_point, Mode, PointOptions};
use crate::kernel::{BandwidthRule, Kernel};
use crate::stats::quantile_sorted;

/// Default tolerance on both solver residuals.
pub const DEFAULT_TOLERANCE: f64 = 1e-4;
/// Minimum number of instances in the extrapolation window.
pub const MIN_WINDOW_INSTANCES: usize = 30;

pub trait Cdf {
    fn cdf(&self, t: f64) -> f64;
}

impl<F: Fn(f64) -> f64> Cdf for F {
    fn cdf(&self, t: f64) -> f64 {
        self(t)
    }
}

pub trait OutcomeCurve {
    fn predict(&self, t: f64) -> f64;
}

impl<F: Fn(f64) -> f64> OutcomeCurve for F {
    fn predict(&self, t: f64) -> f64 {
        self(t)
    }
}

/// Continuous, piecewise-linear version of the empirical CDF: it rises
/// linearly from 0 at the smallest score and passes through `F̂(x)` at every
/// larger distinct score.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmpiricalCdf {
    x: Vec<f64>,
    f: Vec<f64>,
}

impl EmpiricalCdf {
    pub fn new(scores: &[f64]) -> Result<Self> {
        if scores.is_empty() {
            return Err(Error::InsufficientData("empirical CDF needs at least one score".into()));
        }
        let mut sorted = scores.to_vec();
        sorted.sort_by(f64::total_cmp);
        let n = sorted.len() as f64;
        let mut x: Vec<f64> = Vec::new();
        let mut f: Vec<f64> = Vec::new();
        for (i, &s) in sorted.iter().enumerate() {
            let level = (i + 1) as f64 / n;
            if x.last() == Some(&s) {
                *f.last_mut().unwrap() = level;
            } else {
                x.push(s);
                f.push(level);
            }
        }
        f[0] = 0.0;
        if x.len() == 1 {
            // A point mass: step from 0 to 1 at that score.
            f[0] = 1.0;
        }
        Ok(Self { x, f })
    }
}

impl Cdf for EmpiricalCdf {
    fn cdf(&self, t: f64) -> f64 {
        let last = self.x.len() - 1;
        if t < self.x[0] {
            return 0.0;
        }
        if t >= self.x[last] {
            return 1.0;
        }
        let i = self.x.partition_point(|&x| x <= t) - 1;
        let (l, u) = (self.x[i], self.x[i + 1]);
        self.f[i] + (t - l) * (self.f[i + 1] - self.f[i]) / (u - l)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PredictorOptions {
    pub kernel: Kernel,
    pub mode: Mode,
    pub bandwidth: BandwidthRule,
    /// Width of `[t*, t* + window]` used for the linear extension; `None`
    /// takes 20% of the above-threshold score range.
    pub window: Option<f64>,
}

impl Default for PredictorOptions {
    fn default() -> Self {
        Self {
            kernel: Kernel::Gaussian,
            mode: Mode::UserLevel,
            bandwidth: BandwidthRule::RuleOfThumb,
            window: None,
        }
    }
}

/// Outcome curve of one group around a threshold.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OutcomePredictor {
    pub group: String,
    pub t_star: f64,
    /// Knots at and above `t*` with isotonic-smoothed kernel estimates.
    pub knots: Vec<f64>,
    pub values: Vec<f64>,
    /// Slope of the extension below `t*`, anchored at `values[0]`.
    pub slope: f64,
    pub window: f64,
    /// Set when the least-squares slope was negative and clipped to zero.
    pub slope_clipped: bool,
}

impl OutcomePredictor {
    pub fn intercept(&self) -> f64 {
        self.values[0] - self.slope * self.t_star
    }
}

impl OutcomeCurve for OutcomePredictor {
    fn predict(&self, t: f64) -> f64 {
        if t < self.t_star {
            return (self.values[0] + self.slope * (t - self.t_star)).clamp(0.0, 1.0);
        }
        let last = self.knots.len() - 1;
        if t >= self.knots[last] {
            return self.values[last];
        }
        let i = self.knots.partition_point(|&k| k <= t) - 1;
        let (l, u) = (self.knots[i], self.knots[i + 1]);
        (self.values[i] + (t - l) * (self.values[i + 1] - self.values[i]) / (u - l)).clamp(0.0, 1.0)
    }
}

fn ols_slope(points: &[(f64, f64)]) -> f64 {
    let n = points.len() as f64;
    let mx = points.iter().map(|p| p.0).sum::<f64>() / n;
    let my = points.iter().map(|p| p.1).sum::<f64>() / n;
    let sxy: f64 = points.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let sxx: f64 = points.iter().map(|p| (p.0 - mx).powi(2)).sum();
    if sxx > 0.0 {
        sxy / sxx
    } else {
        0.0
    }
}

/// Fits the outcome curve of `group` around `t_star` from instances scored
/// at or above the threshold.
pub fn fit_outcome_predictor(
    dataset: &ClusteredDataset,
    group: &str,
    t_star: f64,
    opts: &PredictorOptions,
    k: usize,
) -> Result<OutcomePredictor> {
    dataset.require_group(group)?;
    dataset.check_objective(k)?;
    let above: Vec<(f64, f64)> = dataset
        .group_pairs(group, k)
        .into_iter()
        .filter(|p| p.0 >= t_star)
        .collect();
    if above.is_empty() {
        return Err(Error::InsufficientData(format!(
            "group `{group}` has no instances scored at or above {t_star}"
        )));
    }
    let mut scores: Vec<f64> = above.iter().map(|p| p.0).collect();
    scores.sort_by(f64::total_cmp);
    let top = *scores.last().unwrap();
    let window = match opts.window {
        Some(w) if w > 0.0 && w.is_finite() => w,
        Some(w) => return Err(Error::InvalidArgument(format!("window must be positive, got {w}"))),
        None => 0.2 * (top - t_star),
    };
    let in_window: Vec<(f64, f64)> = above.iter().copied().filter(|p| p.0 <= t_star + window).collect();
    if in_window.len() < MIN_WINDOW_INSTANCES {
        return Err(Error::InsufficientData(format!(
            "group `{group}` has {} instance(s) in [{t_star}, {}], at least {MIN_WINDOW_INSTANCES} are needed; try a larger window",
            in_window.len(),
            t_star + window
        )));
    }

    let mut knots = vec![t_star];
    knots.extend((1..=20).map(|i| quantile_sorted(&scores, i as f64 / 20.0)));
    knots.retain(|&x| x >= t_star);
    knots.sort_by(f64::total_cmp);
    knots.dedup();

    let n_bw = dataset
        .members_of(group)
        .map(|m| m.instances.iter().filter(|o| o.scores[k] >= t_star).count())
        .filter(|&c| c > 0)
        .fold(0, |acc, c| acc + if opts.mode == Mode::UserLevel { 1 } else { c });
    let point_opts = PointOptions {
        kernel: opts.kernel,
        mode: opts.mode,
        truncate_below: Some(t_star),
    };
    let raw = knots
        .iter()
        .map(|&s| {
            let h = opts.bandwidth.bandwidth(s, n_bw, dataset.is_bounded())?;
            nw_point(dataset, group, s, h, k, &point_opts).map(|e| e.value)
        })
        .collect::<Result<Vec<_>>>()?;
    let values = pava(&raw, &vec![1.0; raw.len()]);

    let slope = ols_slope(&in_window);
    Ok(OutcomePredictor {
        group: group.to_string(),
        t_star,
        knots,
        values,
        slope: slope.max(0.0),
        window,
        slope_clipped: slope < 0.0,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MarginalSolution {
    pub t_star: f64,
    pub thresholds: [f64; 2],
    /// Predicted outcomes at the two thresholds.
    pub marginal_outcomes: [f64; 2],
    /// `pred_1(t_1) - pred_2(t_2)`.
    pub outcome_residual: f64,
    /// Achieved minus status-quo positive-classification rate.
    pub budget_residual: f64,
    pub status_quo_rate: f64,
    pub iterations: usize,
    /// Whether any threshold lies below `t*`, where outcomes are extrapolated.
    pub extrapolated: bool,
    pub notes: Vec<String>,
}

/// Problem data for [`solve_fair_thresholds`].
pub struct ThresholdProblem<'a> {
    pub pred: [&'a dyn OutcomeCurve; 2],
    pub cdf: [&'a dyn Cdf; 2],
    /// Group proportions `p_1, p_2`.
    pub proportions: [f64; 2],
    pub t_star: f64,
    /// Search range for both thresholds.
    pub range: (f64, f64),
    pub tolerance: f64,
}

const BISECTION_STEPS: usize = 200;

/// Smallest `t` in `[lo, hi]` with `pred(t) >= v` (`hi` if none).
fn first_reaching(pred: &dyn OutcomeCurve, v: f64, lo: f64, hi: f64) -> f64 {
    let (mut a, mut b) = (lo, hi);
    if pred.predict(a) >= v {
        return a;
    }
    for _ in 0..BISECTION_STEPS {
        let mid = 0.5 * (a + b);
        if mid <= a || mid >= b {
            break;
        }
        if pred.predict(mid) >= v {
            b = mid;
        } else {
            a = mid;
        }
    }
    b
}

/// Largest `t` in `[lo, hi]` with `pred(t) <= v` (`lo` if none).
fn last_below(pred: &dyn OutcomeCurve, v: f64, lo: f64, hi: f64) -> f64 {
    let (mut a, mut b) = (lo, hi);
    if pred.predict(b) <= v {
        return b;
    }
    for _ in 0..BISECTION_STEPS {
        let mid = 0.5 * (a + b);
        if mid <= a || mid >= b {
            break;
        }
        if pred.predict(mid) <= v {
            a = mid;
        } else {
            b = mid;
        }
    }
    a
}

impl ThresholdProblem<'_> {
    /// Level set `{pred_2 = v}` as an interval; outside the attainable range
    /// the nearer end of the search range.
    fn level_set(&self, v: f64) -> (f64, f64) {
        let (lo, hi) = self.range;
        let p = self.pred[1];
        if v <= p.predict(lo) {
            return (lo, last_below(p, v, lo, hi));
        }
        if v >= p.predict(hi) {
            return (first_reaching(p, v, lo, hi), hi);
        }
        let l = first_reaching(p, v, lo, hi);
        let u = last_below(p, v, lo, hi);
        (l, u.max(l))
    }

    fn rate(&self, t1: f64, t2: f64) -> f64 {
        self.proportions[0] * (1.0 - self.cdf[0].cdf(t1)) + self.proportions[1] * (1.0 - self.cdf[1].cdf(t2))
    }

    fn status_quo(&self) -> f64 {
        self.rate(self.t_star, self.t_star)
    }

    /// `(t_2(t_1), budget residual)`. `t_2` is taken from the level set of
    /// `pred_1(t_1)`: the point nearest `t*` that zeroes the budget when one
    /// exists, otherwise the end with the smaller residual.
    fn residual(&self, t1: f64) -> (f64, f64) {
        let (l, u) = self.level_set(self.pred[0].predict(t1));
        let sq = self.status_quo();
        let r = |t2: f64| self.rate(t1, t2) - sq;
        let start = self.t_star.clamp(l, u);
        let r0 = r(start);
        if r0 == 0.0 || l == u {
            return (start, r0);
        }
        // The rate does not increase with t_2.
        let (mut a, mut b) = if r0 > 0.0 { (start, u) } else { (l, start) };
        if r0 > 0.0 && r(u) > 0.0 {
            return (u, r(u));
        }
        if r0 < 0.0 && r(l) < 0.0 {
            return (l, r(l));
        }
        for _ in 0..BISECTION_STEPS {
            let mid = 0.5 * (a + b);
            if mid <= a || mid >= b {
                break;
            }
            let rm = r(mid);
            if rm > 0.0 || (r0 < 0.0 && rm == 0.0) {
                a = mid;
            } else {
                b = mid;
            }
        }
        let t2 = if r0 > 0.0 { b } else { a };
        (t2, r(t2))
    }

    fn check_monotone(&self) -> Result<()> {
        let (lo, hi) = self.range;
        for (i, p) in self.pred.iter().enumerate() {
            let mut prev = f64::NEG_INFINITY;
            for j in 0..=2000 {
                let v = p.predict(lo + (hi - lo) * j as f64 / 2000.0);
                if !v.is_finite() || v < prev - 1e-12 {
                    return Err(Error::NonInvertible(format!(
                        "outcome curve {} decreases on the search range",
                        i + 1
                    )));
                }
                prev = v;
            }
        }
        if self.pred[1].predict(hi) <= self.pred[1].predict(lo) {
            return Err(Error::NonInvertible("outcome curve 2 is constant on the search range".into()));
        }
        Ok(())
    }
}

/// Solves for thresholds with equal predicted marginal outcomes and the
/// status-quo positive-classification rate by bisection over `t_1`, with
/// `t_2 = pred_2⁻¹(pred_1(t_1))`. Among several solutions the one closest to
/// `(t*, t*)` in max-norm is returned.
pub fn solve_fair_thresholds(problem: &ThresholdProblem<'_>) -> Result<MarginalSolution> {
    let (lo, hi) = problem.range;
    let tol = problem.tolerance;
    if !(lo < hi && lo.is_finite() && hi.is_finite()) {
        return Err(Error::InvalidArgument(format!("invalid search range [{lo}, {hi}]")));
    }
    if !(tol > 0.0) {
        return Err(Error::InvalidArgument("tolerance must be positive".into()));
    }
    if problem.proportions.iter().any(|p| !(*p >= 0.0)) {
        return Err(Error::InvalidArgument("group proportions must be non-negative".into()));
    }
    problem.check_monotone()?;

    // The residual is non-increasing in t_1. Find the edges of the set where
    // it is within tolerance of zero.
    let r_lo = problem.residual(lo).1;
    let r_hi = problem.residual(hi).1;
    if r_lo < -tol || r_hi > tol {
        return Err(Error::NoSolution(format!(
            "the budget residual does not change sign on [{lo}, {hi}] ({r_lo:.3e} to {r_hi:.3e})"
        )));
    }
    let mut iterations = 0;
    let mut edge = |inside: &dyn Fn(f64) -> bool, from_low: bool| {
        let (mut a, mut b) = (lo, hi);
        if from_low && inside(a) {
            return a;
        }
        if !from_low && inside(b) {
            return b;
        }
        for _ in 0..BISECTION_STEPS {
            iterations += 1;
            let mid = 0.5 * (a + b);
            if mid <= a || mid >= b {
                break;
            }
            // from_low: invariant !inside(a), inside(b); else inside(a), !inside(b).
            if inside(mid) == from_low {
                b = mid;
            } else {
                a = mid;
            }
        }
        if from_low {
            b
        } else {
            a
        }
    };
    let eval = |t1: f64| {
        let (t2, r) = problem.residual(t1);
        let e = problem.pred[0].predict(t1) - problem.pred[1].predict(t2);
        (t1, t2, r, e)
    };
    let feasible = |c: &(f64, f64, f64, f64)| c.2.abs() <= tol && c.3.abs() <= tol;
    let dist = |c: &(f64, f64, f64, f64)| (c.0 - problem.t_star).abs().max((c.1 - problem.t_star).abs());

    // Exact roots first; the tolerance band only matters when jumps in the
    // CDF or outcome curves leave no exact root.
    let mut best = None;
    let mut first = None;
    for band in [0.0, tol] {
        let left = edge(&|t| problem.residual(t).1 <= band, true);
        let right = edge(&|t| problem.residual(t).1 >= -band, false);
        let mut candidates = vec![eval(left), eval(right), eval(problem.t_star.clamp(left.min(right), left.max(right)))];
        if right > left {
            candidates.extend((1..1000).map(|i| eval(left + (right - left) * i as f64 / 1000.0)));
        }
        first.get_or_insert(candidates[0]);
        best = candidates
            .iter()
            .filter(|c| feasible(c))
            .min_by(|a, b| dist(a).total_cmp(&dist(b)))
            .copied();
        if best.is_some() {
            break;
        }
    }
    let best = best.ok_or_else(|| {
        let c = first.unwrap();
        Error::NoSolution(format!(
            "no threshold pair meets tolerance {tol:e} (budget residual {:.3e}, outcome residual {:.3e}); the CDF or outcome curve may be flat or discontinuous here",
            c.2, c.3
        ))
    })?;

    let (t1, t2, budget_residual, outcome_residual) = best;
    let extrapolated = t1 < problem.t_star || t2 < problem.t_star;
    let mut notes = Vec::new();
    if extrapolated {
        notes.push(
            "a threshold lies below t*, where outcomes were never observed; the predicted marginal outcome there is extrapolated and only suggestive"
                .to_string(),
        );
    }
    Ok(MarginalSolution {
        t_star: problem.t_star,
        thresholds: [t1, t2],
        marginal_outcomes: [problem.pred[0].predict(t1), problem.pred[1].predict(t2)],
        outcome_residual,
        budget_residual,
        status_quo_rate: problem.status_quo(),
        iterations,
        extrapolated,
        notes,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MarginalReport {
    pub groups: [String; 2],
    pub solution: MarginalSolution,
    pub predictors: [OutcomePredictor; 2],
    /// Plot data: `(t, pred_1(t), pred_2(t))` over the search range.
    pub curves: Vec<(f64, f64, f64)>,
}

/// Fits both predictors on `dataset` and solves for fair thresholds, with
/// instance shares as group proportions and the pooled score range as the
/// search range.
pub fn mitigate(
    dataset: &ClusteredDataset,
    g1: &str,
    g2: &str,
    t_star: f64,
    opts: &PredictorOptions,
    k: usize,
) -> Result<MarginalReport> {
    let p1 = fit_outcome_predictor(dataset, g1, t_star, opts, k)?;
    let p2 = fit_outcome_predictor(dataset, g2, t_star, opts, k)?;
    let s1: Vec<f64> = dataset.group_pairs(g1, k).into_iter().map(|p| p.0).collect();
    let s2: Vec<f64> = dataset.group_pairs(g2, k).into_iter().map(|p| p.0).collect();
    let c1 = EmpiricalCdf::new(&s1)?;
    let c2 = EmpiricalCdf::new(&s2)?;
    let n = (s1.len() + s2.len()) as f64;
    let lo = s1.iter().chain(&s2).copied().fold(f64::INFINITY, f64::min);
    let hi = s1.iter().chain(&s2).copied().fold(f64::NEG_INFINITY, f64::max);
    let problem = ThresholdProblem {
        pred: [&p1, &p2],
        cdf: [&c1, &c2],
        proportions: [s1.len() as f64 / n, s2.len() as f64 / n],
        t_star,
        range: (lo, hi),
        tolerance: DEFAULT_TOLERANCE,
    };
    let solution = solve_fair_thresholds(&problem)?;
    let curves = (0..=100)
        .map(|i| {
            let t = lo + (hi - lo) * i as f64 / 100.0;
            (t, p1.predict(t), p2.predict(t))
        })
        .collect();
    Ok(MarginalReport {
        groups: [g1.to_string(), g2.to_string()],
        solution,
        predictors: [p1, p2],
        curves,
    })
}
