//! Pointwise hypothesis tests for predictive rate parity.
//!
//! For two groups the conditional expected outcome is estimated on a grid of
//! scores, each grid point yields a z statistic from the two independent
//! cluster-robust estimates, and the family of p-values is corrected for
//! multiplicity (Bonferroni by default, Holm optionally).

use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::data::ClusteredDataset;
use crate::error::{Error, Result};
use crate::estimator::{self, CurveOptions, Mode, PointEstimate, PointOptions};
use crate::kernel::BandwidthRule;
use crate::stats::{quantile_sorted, two_sided_p, upper_p};

/// `{1, 5, 10, 15, ..., 95, 99}`.
pub fn default_percentiles() -> Vec<f64> {
    let mut p = vec![1.0];
    p.extend((1..=19).map(|i| 5.0 * i as f64));
    p.push(99.0);
    p
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreGrid {
    pub points: Vec<f64>,
    pub source_percentiles: Vec<f64>,
}

impl ScoreGrid {
    /// Grid from explicit points (sorted and de-duplicated).
    pub fn from_points(mut points: Vec<f64>) -> Result<Self> {
        if points.iter().any(|p| !p.is_finite()) {
            return Err(Error::InvalidArgument("grid points must be finite".into()));
        }
        points.sort_by(f64::total_cmp);
        points.dedup();
        if points.is_empty() {
            return Err(Error::EmptyGrid);
        }
        Ok(Self {
            points,
            source_percentiles: Vec::new(),
        })
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }
}

/// Empirical percentiles of the pooled instance scores of objective `k`.
pub fn build_score_grid(
    reference: &ClusteredDataset,
    percentiles: &[f64],
    k: usize,
) -> Result<ScoreGrid> {
    if reference.is_empty() {
        return Err(Error::EmptyDataset);
    }
    reference.check_objective(k)?;
    if percentiles.is_empty() || percentiles.iter().any(|p| !(*p > 0.0 && *p < 100.0)) {
        return Err(Error::InvalidArgument("percentiles must lie in (0, 100)".into()));
    }
    let mut scores = reference.scores(k);
    scores.sort_by(f64::total_cmp);
    let mut points: Vec<f64> = percentiles
        .iter()
        .map(|p| quantile_sorted(&scores, p / 100.0))
        .collect();
    points.sort_by(f64::total_cmp);
    points.dedup();
    Ok(ScoreGrid {
        points,
        source_percentiles: percentiles.to_vec(),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Correction {
    #[default]
    Bonferroni,
    Holm,
}

impl FromStr for Correction {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "bonferroni" => Ok(Correction::Bonferroni),
            "holm" => Ok(Correction::Holm),
            other => Err(Error::InvalidArgument(format!("unknown correction `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Alternative {
    #[default]
    TwoSided,
    /// `f_g1(s) > f_g2(s)`.
    Greater,
    /// `f_g1(s) < f_g2(s)`.
    Less,
}

impl Alternative {
    fn p_value(self, z: f64) -> f64 {
        match self {
            Alternative::TwoSided => two_sided_p(z),
            Alternative::Greater => upper_p(z),
            Alternative::Less => upper_p(-z),
        }
    }
}

/// Adjusts raw p-values for a family of `raw.len()` tests.
pub fn adjust_p_values(raw: &[f64], correction: Correction) -> Vec<f64> {
    let j = raw.len() as f64;
    match correction {
        Correction::Bonferroni => raw.iter().map(|p| (p * j).min(1.0)).collect(),
        Correction::Holm => {
            let mut order: Vec<usize> = (0..raw.len()).collect();
            order.sort_by(|&a, &b| raw[a].total_cmp(&raw[b]));
            let mut adjusted = vec![0.0; raw.len()];
            let mut running: f64 = 0.0;
            for (rank, &i) in order.iter().enumerate() {
                running = running.max(((j - rank as f64) * raw[i]).min(1.0));
                adjusted[i] = running;
            }
            adjusted
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TestOptions {
    pub alpha: f64,
    pub curve: CurveOptions,
    pub correction: Correction,
    pub alternative: Alternative,
}

impl Default for TestOptions {
    fn default() -> Self {
        Self {
            alpha: 0.05,
            curve: CurveOptions::default(),
            correction: Correction::default(),
            alternative: Alternative::default(),
        }
    }
}

impl TestOptions {
    pub fn with_mode(mode: Mode) -> Self {
        Self {
            curve: CurveOptions::with_mode(mode),
            ..Self::default()
        }
    }
}

/// Statistics at one grid point. Untestable points (a group without kernel
/// mass there) carry `None` statistics and are excluded from the family.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PointTest {
    pub s: f64,
    pub estimate_g1: Option<PointEstimate>,
    pub estimate_g2: Option<PointEstimate>,
    pub z: Option<f64>,
    pub p_raw: Option<f64>,
    pub p_adj: Option<f64>,
    pub testable: bool,
    pub note: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OrderingViolation {
    pub group: String,
    pub s: f64,
    pub value: f64,
    pub other_group: String,
    pub other_s: f64,
    pub other_value: f64,
    pub tolerance: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParityTestReport {
    pub g1: String,
    pub g2: String,
    pub mode: Mode,
    pub alpha: f64,
    pub correction: Correction,
    pub alternative: Alternative,
    pub points: Vec<PointTest>,
    /// Number of testable points, the multiplicity factor `J`.
    pub family_size: usize,
    pub reject: bool,
    pub min_p_adj: Option<f64>,
    pub ordering_violations: Vec<OrderingViolation>,
    pub warnings: Vec<String>,
}

impl ParityTestReport {
    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }
}

fn z_statistic(a: &PointEstimate, b: &PointEstimate) -> f64 {
    let mut diff = a.value - b.value;
    // Ratios of identical sums can differ in the last bits.
    if diff.abs() <= 8.0 * f64::EPSILON * a.value.abs().max(b.value.abs()) {
        diff = 0.0;
    }
    let se = (a.std_error.powi(2) + b.std_error.powi(2)).sqrt();
    if se > 0.0 {
        diff / se
    } else if diff == 0.0 {
        0.0
    } else {
        diff.signum() * f64::INFINITY
    }
}

fn is_untestable(e: &Error) -> bool {
    matches!(e, Error::NoMass { .. } | Error::InsufficientClusters { .. })
}

fn assemble(
    g1: &str,
    g2: &str,
    grid: &[f64],
    e1: Vec<Result<PointEstimate>>,
    e2: Vec<Result<PointEstimate>>,
    opts: &TestOptions,
) -> Result<ParityTestReport> {
    let mut points = Vec::with_capacity(grid.len());
    let mut warnings = Vec::new();
    for ((&s, a), b) in grid.iter().zip(e1).zip(e2) {
        let a = a.map_err(|e| if is_untestable(&e) { Ok(e) } else { Err(e) });
        let b = b.map_err(|e| if is_untestable(&e) { Ok(e) } else { Err(e) });
        let (a, b) = match (a, b) {
            (Err(Err(e)), _) | (_, Err(Err(e))) => return Err(e),
            (a, b) => (a.ok(), b.ok()),
        };
        let mut pt = PointTest {
            s,
            estimate_g1: a,
            estimate_g2: b,
            z: None,
            p_raw: None,
            p_adj: None,
            testable: false,
            note: None,
        };
        match (a, b) {
            (Some(a), Some(b)) => {
                let z = z_statistic(&a, &b);
                pt.z = Some(z);
                pt.p_raw = Some(opts.alternative.p_value(z));
                pt.testable = true;
                if a.low_mass || b.low_mass {
                    pt.note = Some("low kernel mass; standard error inflated".into());
                    warnings.push(format!("low kernel mass at s = {s}"));
                }
            }
            _ => {
                pt.note = Some("untestable: a group has no kernel mass".into());
                warnings.push(format!("grid point s = {s} is untestable and excluded"));
            }
        }
        points.push(pt);
    }
    let raw: Vec<f64> = points.iter().filter_map(|p| p.p_raw).collect();
    let adjusted = adjust_p_values(&raw, opts.correction);
    let mut it = adjusted.iter();
    for p in points.iter_mut().filter(|p| p.testable) {
        p.p_adj = it.next().copied();
    }
    let min_p_adj = adjusted.iter().copied().reduce(f64::min);
    Ok(ParityTestReport {
        g1: g1.to_string(),
        g2: g2.to_string(),
        mode: opts.curve.mode,
        alpha: opts.alpha,
        correction: opts.correction,
        alternative: opts.alternative,
        family_size: raw.len(),
        reject: min_p_adj.is_some_and(|p| p < opts.alpha),
        min_p_adj,
        points,
        ordering_violations: Vec::new(),
        warnings,
    })
}

fn check_alpha(alpha: f64) -> Result<()> {
    if alpha > 0.0 && alpha < 1.0 {
        Ok(())
    } else {
        Err(Error::InvalidArgument(format!("alpha must lie in (0, 1), got {alpha}")))
    }
}

/// Tests `f_g1(s) = f_g2(s)` at every grid point and controls the
/// family-wise error rate. The report also carries the ordering diagnostic
/// computed from the two estimated curves.
pub fn parity_test(
    dataset: &ClusteredDataset,
    g1: &str,
    g2: &str,
    grid: &ScoreGrid,
    opts: &TestOptions,
    k: usize,
) -> Result<ParityTestReport> {
    check_alpha(opts.alpha)?;
    dataset.require_group(g1)?;
    dataset.require_group(g2)?;
    let e1 = estimator::curve_points(dataset, g1, &grid.points, &opts.curve, k)?;
    let e2 = estimator::curve_points(dataset, g2, &grid.points, &opts.curve, k)?;
    let mut report = assemble(g1, g2, &grid.points, e1, e2, opts)?;

    let curve = |pick: fn(&PointTest) -> Option<PointEstimate>| GroupCurve {
        group: String::new(),
        points: report.points.iter().filter_map(pick).collect(),
    };
    let mut c1 = curve(|p| p.estimate_g1);
    let mut c2 = curve(|p| p.estimate_g2);
    c1.group = g1.to_string();
    c2.group = g2.to_string();
    report.ordering_violations = ordering_diagnostic(&[c1, c2]);
    if !report.ordering_violations.is_empty() {
        report.warnings.push(format!(
            "ordering diagnostic (heuristic, no size control) flagged {} score pair(s)",
            report.ordering_violations.len()
        ));
    }
    Ok(report)
}

/// Marginal-outcome test at threshold `t_star`: both groups are estimated at
/// `s = t_star` from instances scored at or above the threshold only.
pub fn marginal_outcome_test(
    dataset: &ClusteredDataset,
    g1: &str,
    g2: &str,
    t_star: f64,
    bandwidth: BandwidthRule,
    opts: &TestOptions,
    k: usize,
) -> Result<ParityTestReport> {
    check_alpha(opts.alpha)?;
    dataset.check_objective(k)?;
    let point_opts = PointOptions {
        kernel: opts.curve.kernel,
        mode: opts.curve.mode,
        truncate_below: Some(t_star),
    };
    let mut estimates = Vec::with_capacity(2);
    for g in [g1, g2] {
        dataset.require_group(g)?;
        let above = dataset
            .members_of(g)
            .flat_map(|m| m.instances.iter())
            .filter(|o| o.scores[k] >= t_star)
            .count();
        if above == 0 {
            return Err(Error::InsufficientData(format!(
                "group `{g}` has no instances scored at or above {t_star}"
            )));
        }
        let n = opts.curve.bandwidth_n(dataset, g);
        let h = bandwidth.bandwidth(t_star, n, dataset.is_bounded())?;
        estimates.push(vec![estimator::nw_point(dataset, g, t_star, h, k, &point_opts)]);
    }
    let e2 = estimates.pop().unwrap();
    let e1 = estimates.pop().unwrap();
    assemble(g1, g2, &[t_star], e1, e2, opts)
}

/// One group's estimated curve on a shared grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupCurve {
    pub group: String,
    pub points: Vec<PointEstimate>,
}

/// Flags score pairs `s < s'` and groups `g != g'` with
/// `f_g(s) > f_g'(s') + 2 (se_g(s) + se_g'(s'))`: a lower score in one group
/// carrying a clearly higher expected outcome than a higher score in another.
/// Points without adequate kernel support are skipped. This is a
/// noise-tolerant heuristic without formal size control.
pub fn ordering_diagnostic(curves: &[GroupCurve]) -> Vec<OrderingViolation> {
    let mut out = Vec::new();
    for (i, c) in curves.iter().enumerate() {
        for (j, other) in curves.iter().enumerate() {
            if i == j {
                continue;
            }
            for p in c.points.iter().filter(|p| !p.low_mass) {
                for q in other.points.iter().filter(|q| !q.low_mass && q.s > p.s) {
                    let tolerance = 2.0 * (p.std_error + q.std_error);
                    if p.value > q.value + tolerance {
                        out.push(OrderingViolation {
                            group: c.group.clone(),
                            s: p.s,
                            value: p.value,
                            other_group: other.group.clone(),
                            other_s: q.s,
                            other_value: q.value,
                            tolerance,
                        });
                    }
                }
            }
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{Member, Observation};
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    fn two_groups(f1: impl Fn(usize) -> (f64, f64), f2: impl Fn(usize) -> (f64, f64), n: usize) -> ClusteredDataset {
        let mut members = Vec::new();
        for i in 0..n {
            let (s, y) = f1(i);
            members.push(Member::new(format!("a{i}"), "g1", vec![Observation::scalar(s, y)]).unwrap());
            let (s, y) = f2(i);
            members.push(Member::new(format!("b{i}"), "g2", vec![Observation::scalar(s, y)]).unwrap());
        }
        ClusteredDataset::new(members, true).unwrap()
    }

    #[test]
    fn grid_percentiles() {
        let members = (1..=100)
            .map(|i| Member::new(i.to_string(), "g", vec![Observation::scalar(i as f64 / 100.0, 0.0)]).unwrap())
            .collect();
        let d = ClusteredDataset::new(members, true).unwrap();
        let grid = build_score_grid(&d, &[50.0], 0).unwrap();
        assert!((grid.points[0] - 0.50).abs() <= 0.01 + 1e-12);
        let grid = build_score_grid(&d, &default_percentiles(), 0).unwrap();
        assert_eq!(grid.len(), 21);
        assert!(grid.points.windows(2).all(|w| w[0] < w[1]));

        let same = two_groups(|_| (0.3, 1.0), |_| (0.3, 0.0), 5);
        assert_eq!(build_score_grid(&same, &default_percentiles(), 0).unwrap().points, vec![0.3]);
        assert!(build_score_grid(&same, &[0.0], 0).is_err());
    }

    #[test]
    fn identical_groups_do_not_reject() {
        let d = two_groups(|i| ((i % 10) as f64 / 10.0, (i % 2) as f64), |i| ((i % 10) as f64 / 10.0, (i % 2) as f64), 200);
        let grid = build_score_grid(&d, &default_percentiles(), 0).unwrap();
        let r = parity_test(&d, "g1", "g2", &grid, &TestOptions::default(), 0).unwrap();
        assert!(!r.reject);
        for p in &r.points {
            assert_eq!(p.z, Some(0.0));
            assert_eq!(p.p_raw, Some(1.0));
            assert_eq!(p.p_adj, Some(1.0));
        }
    }

    #[test]
    fn swapping_groups_negates_z() {
        let d = two_groups(
            |i| ((i % 17) as f64 / 17.0, ((i * 7) % 3 == 0) as u8 as f64),
            |i| ((i % 13) as f64 / 13.0, ((i * 5) % 2 == 0) as u8 as f64),
            150,
        );
        let grid = build_score_grid(&d, &default_percentiles(), 0).unwrap();
        let a = parity_test(&d, "g1", "g2", &grid, &TestOptions::default(), 0).unwrap();
        let b = parity_test(&d, "g2", "g1", &grid, &TestOptions::default(), 0).unwrap();
        for (p, q) in a.points.iter().zip(&b.points) {
            assert_abs_diff_eq!(p.z.unwrap(), -q.z.unwrap(), epsilon = 1e-12);
            assert_abs_diff_eq!(p.p_raw.unwrap(), q.p_raw.unwrap(), epsilon = 1e-15);
        }
        assert_eq!(a.reject, b.reject);
    }

    #[test]
    fn holm_and_bonferroni() {
        let raw = [0.01, 0.04, 0.03, 0.5];
        assert_eq!(adjust_p_values(&raw, Correction::Bonferroni), vec![0.04, 0.16, 0.12, 1.0]);
        let holm = adjust_p_values(&raw, Correction::Holm);
        let expected = [0.04, 0.09, 0.09, 0.5];
        for (h, e) in holm.iter().zip(expected) {
            assert_abs_diff_eq!(*h, e, epsilon = 1e-15);
        }
    }

    proptest! {
        #[test]
        fn adjusted_p_dominates_raw(raw in proptest::collection::vec(0.0f64..=1.0, 1..30)) {
            for c in [Correction::Bonferroni, Correction::Holm] {
                for (a, r) in adjust_p_values(&raw, c).iter().zip(&raw) {
                    prop_assert!(*a >= *r && *a <= 1.0);
                }
            }
        }

        #[test]
        fn bonferroni_grows_with_family(p in 0.0f64..=1.0, j in 1usize..40) {
            let small = adjust_p_values(&vec![p; j], Correction::Bonferroni)[0];
            let large = adjust_p_values(&vec![p; j + 1], Correction::Bonferroni)[0];
            prop_assert!(large >= small);
        }
    }

    #[test]
    fn untestable_points_shrink_the_family() {
        // g2 lives at high scores only; with a compact kernel the low grid
        // point has no g2 mass.
        let d = two_groups(|i| (0.05 + 0.9 * (i % 10) as f64 / 10.0, (i % 2) as f64), |i| (0.8 + (i % 5) as f64 / 50.0, (i % 2) as f64), 100);
        let mut opts = TestOptions::default();
        opts.curve.kernel = crate::kernel::Kernel::Epanechnikov;
        opts.curve.bandwidth = BandwidthRule::Fixed(0.1);
        let grid = ScoreGrid::from_points(vec![0.1, 0.85]).unwrap();
        let r = parity_test(&d, "g1", "g2", &grid, &opts, 0).unwrap();
        assert_eq!(r.family_size, 1);
        assert!(!r.points[0].testable);
        assert!(r.points[1].testable);
        assert_eq!(r.points[1].p_adj, r.points[1].p_raw);
    }

    #[test]
    fn marginal_test_with_constant_outcomes_is_zero() {
        let d = two_groups(|i| ((i % 20) as f64 / 20.0, 0.6), |i| ((i % 11) as f64 / 11.0, 0.6), 120);
        let r = marginal_outcome_test(&d, "g1", "g2", 0.5, BandwidthRule::RuleOfThumb, &TestOptions::default(), 0).unwrap();
        assert_eq!(r.points.len(), 1);
        assert_eq!(r.points[0].z, Some(0.0));
        assert!(marginal_outcome_test(&d, "g1", "g2", 2.0, BandwidthRule::Fixed(0.1), &TestOptions::default(), 0).is_err());
    }

    #[test]
    fn marginal_test_at_minimum_score_equals_parity_test() {
        let d = two_groups(
            |i| (0.1 + (i % 19) as f64 / 25.0, ((i * 7) % 3 == 0) as u8 as f64),
            |i| (0.1 + (i % 13) as f64 / 20.0, ((i * 5) % 2 == 0) as u8 as f64),
            150,
        );
        let min = d.scores(0).into_iter().fold(f64::INFINITY, f64::min);
        let opts = TestOptions::default();
        let m = marginal_outcome_test(&d, "g1", "g2", min, BandwidthRule::RuleOfThumb, &opts, 0).unwrap();
        let grid = ScoreGrid::from_points(vec![min]).unwrap();
        let p = parity_test(&d, "g1", "g2", &grid, &opts, 0).unwrap();
        assert_eq!(m.points[0].z, p.points[0].z);
        assert_eq!(m.points[0].p_adj, p.points[0].p_adj);
    }

    fn pe(s: f64, value: f64, se: f64) -> PointEstimate {
        PointEstimate {
            s,
            value,
            std_error: se,
            numerator_mass: 1.0,
            denominator_mass: 1.0,
            m_effective: 100.0,
            bandwidth: 0.1,
            low_mass: false,
        }
    }

    #[test]
    fn ordering_diagnostic_cases() {
        let grid = [0.2, 0.4, 0.6, 0.8];
        let mk = |g: &str, shift: f64, se: f64| GroupCurve {
            group: g.into(),
            points: grid.iter().map(|&s| pe(s, s + shift, se)).collect(),
        };
        assert!(ordering_diagnostic(&[mk("a", 0.0, 0.01), mk("b", 0.0, 0.01)]).is_empty());
        // Within noise: a 0.25 offset against tolerance 2 * (0.1 + 0.1).
        assert!(ordering_diagnostic(&[mk("a", 0.25, 0.1), mk("b", 0.0, 0.1)]).is_empty());
        let v = ordering_diagnostic(&[mk("a", 0.5, 0.01), mk("b", 0.0, 0.01)]);
        assert!(!v.is_empty());
        assert!(v.iter().all(|x| x.group == "a" && x.s < x.other_s));
    }

    #[test]
    fn ordering_toy_example_is_flagged() {
        // g1: all mass at score 0 with average outcome 0.8; g2: all mass at
        // score 1 with average outcome 0.6.
        let d = two_groups(|i| (0.0, (i % 5 != 0) as u8 as f64), |i| (1.0, (i % 5 < 3) as u8 as f64), 200);
        let opts = CurveOptions::default();
        let c1 = GroupCurve {
            group: "g1".into(),
            points: estimator::estimate_curve(&d, "g1", &[0.0], &opts, 0).unwrap(),
        };
        let c2 = GroupCurve {
            group: "g2".into(),
            points: estimator::estimate_curve(&d, "g2", &[1.0], &opts, 0).unwrap(),
        };
        assert_abs_diff_eq!(c1.points[0].value, 0.8, epsilon = 1e-12);
        assert_abs_diff_eq!(c2.points[0].value, 0.6, epsilon = 1e-12);
        let v = ordering_diagnostic(&[c1, c2]);
        assert_eq!(v.len(), 1);
        assert_eq!((v[0].group.as_str(), v[0].s, v[0].other_s), ("g1", 0.0, 1.0));
    }
}
