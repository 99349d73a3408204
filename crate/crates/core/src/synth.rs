//! Synthetic clustered data with known ground truth.
//!
//! Each member draws an activity level `n_m`, a random effect
//! `u_m ~ N(0, τ²)` and `n_m` independent scores. Outcomes are Bernoulli with
//! probability `logistic(logit(f_g(s)) + u_m)` clamped to `[0.001, 0.999]`,
//! where `f_g` may depend on `n_m` through an optional coupling rule.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Beta, Distribution, Normal, Poisson, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::data::{ClusteredDataset, Member, Observation};
use crate::error::{Error, Result};
use crate::estimator::Mode;
use crate::stats::{logistic, logit};

const P_MIN: f64 = 0.001;
const P_MAX: f64 = 0.999;
/// Monte-Carlo draws behind the ground truth when `τ > 0`.
pub const TRUTH_DRAWS: usize = 100_000;

/// Distribution of the instance count `n_m`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Activity {
    /// `1 + Poisson(λ)`.
    Poisson { lambda: f64 },
    /// With probability `heavy_fraction`, `1 + Poisson(heavy_lambda)`;
    /// otherwise `1 + Poisson(lambda)`.
    HeavyTail {
        lambda: f64,
        heavy_fraction: f64,
        heavy_lambda: f64,
    },
}

fn poisson_draw(rng: &mut ChaCha8Rng, lambda: f64) -> usize {
    if lambda <= 0.0 {
        return 1;
    }
    1 + Poisson::new(lambda).expect("validated rate").sample(rng) as usize
}

/// `P(1 + Poisson(λ) = n)` for `n = 1, 2, ...` until the tail is negligible.
fn shifted_poisson_pmf(lambda: f64) -> Vec<f64> {
    if lambda <= 0.0 {
        return vec![0.0, 1.0];
    }
    let mut pmf = vec![0.0];
    let mut p = (-lambda).exp();
    let mut cum = 0.0;
    let mut k = 0.0;
    while cum < 1.0 - 1e-15 && pmf.len() < 10_000 {
        pmf.push(p);
        cum += p;
        k += 1.0;
        p *= lambda / k;
    }
    pmf
}

impl Activity {
    fn validate(&self) -> Result<()> {
        let ok = match *self {
            Activity::Poisson { lambda } => lambda >= 0.0 && lambda.is_finite(),
            Activity::HeavyTail {
                lambda,
                heavy_fraction,
                heavy_lambda,
            } => {
                lambda >= 0.0
                    && heavy_lambda >= 0.0
                    && lambda.is_finite()
                    && heavy_lambda.is_finite()
                    && (0.0..=1.0).contains(&heavy_fraction)
            }
        };
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidArgument(format!("invalid activity distribution {self:?}")))
        }
    }

    fn sample(&self, rng: &mut ChaCha8Rng) -> usize {
        match *self {
            Activity::Poisson { lambda } => poisson_draw(rng, lambda),
            Activity::HeavyTail {
                lambda,
                heavy_fraction,
                heavy_lambda,
            } => {
                let heavy = rng.random::<f64>() < heavy_fraction;
                poisson_draw(rng, if heavy { heavy_lambda } else { lambda })
            }
        }
    }

    /// `P(n_m = n)`, indexed by `n`.
    pub fn pmf(&self) -> Vec<f64> {
        match *self {
            Activity::Poisson { lambda } => shifted_poisson_pmf(lambda),
            Activity::HeavyTail {
                lambda,
                heavy_fraction,
                heavy_lambda,
            } => {
                let light = shifted_poisson_pmf(lambda);
                let heavy = shifted_poisson_pmf(heavy_lambda);
                (0..light.len().max(heavy.len()))
                    .map(|n| {
                        (1.0 - heavy_fraction) * light.get(n).copied().unwrap_or(0.0)
                            + heavy_fraction * heavy.get(n).copied().unwrap_or(0.0)
                    })
                    .collect()
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ScoreDist {
    Uniform,
    Beta { a: f64, b: f64 },
}

/// Calibration function `f(s) = P(Y = 1 | S = s)` before the random effect.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum CalibrationFn {
    Identity,
    /// `min(max(s + delta, 0), 1)`.
    Shift { delta: f64 },
    /// `intercept + slope s`, clamped to `[0, 1]`.
    Affine { intercept: f64, slope: f64 },
    /// `logistic(a s + b)`.
    Logistic { a: f64, b: f64 },
}

impl CalibrationFn {
    pub fn eval(&self, s: f64) -> f64 {
        match *self {
            CalibrationFn::Identity => s.clamp(0.0, 1.0),
            CalibrationFn::Shift { delta } => (s + delta).clamp(0.0, 1.0),
            CalibrationFn::Affine { intercept, slope } => (intercept + slope * s).clamp(0.0, 1.0),
            CalibrationFn::Logistic { a, b } => logistic(a * s + b),
        }
    }
}

/// Members with `n_m > min_activity` follow `calibration` instead of the
/// group's base function.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Coupling {
    pub min_activity: usize,
    pub calibration: CalibrationFn,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupSpec {
    pub name: String,
    pub members: usize,
    pub activity: Activity,
    pub scores: ScoreDist,
    pub calibration: CalibrationFn,
    pub coupling: Option<Coupling>,
}

impl GroupSpec {
    pub fn new(name: &str, members: usize) -> Self {
        Self {
            name: name.to_string(),
            members,
            activity: Activity::Poisson { lambda: 3.0 },
            scores: ScoreDist::Beta { a: 1.0, b: 1.0 },
            calibration: CalibrationFn::Identity,
            coupling: None,
        }
    }

    fn calibration_for(&self, n: usize) -> CalibrationFn {
        match self.coupling {
            Some(c) if n > c.min_activity => c.calibration,
            _ => self.calibration,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthConfig {
    pub groups: Vec<GroupSpec>,
    /// Standard deviation of the member random effect on the logit scale.
    pub tau: f64,
    pub seed: u64,
}

impl SynthConfig {
    /// Two groups `g1`, `g2` with `members` members each and default
    /// settings (identity calibration, `λ = 3`, Beta(1, 1) scores, `τ = 0`).
    pub fn two_groups(members: usize, seed: u64) -> Self {
        Self {
            groups: vec![GroupSpec::new("g1", members), GroupSpec::new("g2", members)],
            tau: 0.0,
            seed,
        }
    }

    /// Repeat-user dataset on which user-level and aggregate parity
    /// disagree. In both groups highly active members (`n_m > 5`) see
    /// `f(s) = min(s + 0.2, 1)`, everyone else the identity. `g1` members are
    /// all light users; in `g2` two percent are heavy users who generate
    /// most of the group's instances, so `g2`'s instance-weighted curve
    /// shifts while its member-weighted curve barely moves.
    pub fn coupling(members: usize, seed: u64) -> Self {
        let coupling = Some(Coupling {
            min_activity: 5,
            calibration: CalibrationFn::Shift { delta: 0.2 },
        });
        let base = |name: &str, activity| GroupSpec {
            name: name.to_string(),
            members,
            activity,
            scores: ScoreDist::Uniform,
            calibration: CalibrationFn::Identity,
            coupling,
        };
        Self {
            groups: vec![
                base("g1", Activity::Poisson { lambda: 1.0 }),
                base(
                    "g2",
                    Activity::HeavyTail {
                        lambda: 1.0,
                        heavy_fraction: 0.02,
                        heavy_lambda: 49.0,
                    },
                ),
            ],
            tau: 0.0,
            seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.groups.is_empty() {
            return Err(Error::InvalidArgument("synthetic config needs at least one group".into()));
        }
        if !(self.tau >= 0.0 && self.tau.is_finite()) {
            return Err(Error::InvalidArgument(format!("tau must be non-negative, got {}", self.tau)));
        }
        for (i, g) in self.groups.iter().enumerate() {
            g.activity.validate()?;
            if let ScoreDist::Beta { a, b } = g.scores {
                if !(a > 0.0 && b > 0.0) {
                    return Err(Error::InvalidArgument(format!("Beta parameters must be positive in `{}`", g.name)));
                }
            }
            if self.groups[..i].iter().any(|o| o.name == g.name) {
                return Err(Error::InvalidArgument(format!("duplicate group name `{}`", g.name)));
            }
        }
        Ok(())
    }
}

fn outcome_probability(f: f64, u: f64) -> f64 {
    if u == 0.0 {
        return f.clamp(P_MIN, P_MAX);
    }
    logistic(logit(f) + u).clamp(P_MIN, P_MAX)
}

/// Draws the dataset described by `config`; the same seed yields a
/// bit-identical dataset.
pub fn generate(config: &SynthConfig) -> Result<(ClusteredDataset, GroundTruth)> {
    config.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let effect = Normal::new(0.0, config.tau).expect("validated tau");
    let mut members = Vec::new();
    for g in &config.groups {
        let beta = match g.scores {
            ScoreDist::Beta { a, b } => Some(Beta::new(a, b).expect("validated Beta")),
            ScoreDist::Uniform => None,
        };
        for i in 0..g.members {
            let n = g.activity.sample(&mut rng);
            let u = if config.tau > 0.0 { effect.sample(&mut rng) } else { 0.0 };
            let f = g.calibration_for(n);
            let instances = (0..n)
                .map(|_| {
                    let s = match &beta {
                        Some(b) => b.sample(&mut rng),
                        None => rng.random::<f64>(),
                    };
                    let y = (rng.random::<f64>() < outcome_probability(f.eval(s), u)) as u8 as f64;
                    Observation::scalar(s, y)
                })
                .collect();
            members.push(Member::new(format!("{}-{i}", g.name), &g.name, instances)?);
        }
    }
    let dataset = ClusteredDataset::new(members, true)?;
    Ok((dataset, GroundTruth::new(config)))
}

/// Evaluates the true conditional expectation of a synthetic design.
#[derive(Debug, Clone)]
pub struct GroundTruth {
    config: SynthConfig,
    normals: Vec<f64>,
}

impl GroundTruth {
    pub fn new(config: &SynthConfig) -> Self {
        let normals = if config.tau > 0.0 {
            let mut rng = ChaCha8Rng::seed_from_u64(config.seed ^ 0x7472_7574_6800);
            (0..TRUTH_DRAWS)
                .map(|_| config.tau * Distribution::<f64>::sample(&StandardNormal, &mut rng))
                .collect::<Vec<f64>>()
        } else {
            Vec::new()
        };
        Self {
            config: config.clone(),
            normals,
        }
    }

    pub fn config(&self) -> &SynthConfig {
        &self.config
    }

    fn spec(&self, group: &str) -> Result<&GroupSpec> {
        self.config
            .groups
            .iter()
            .find(|g| g.name == group)
            .ok_or_else(|| Error::UnknownGroup(group.to_string()))
    }

    /// `E_u[clamp(logistic(logit f + u))]` for a single calibration function.
    fn marginal(&self, f: CalibrationFn, s: f64) -> f64 {
        let p = f.eval(s);
        if self.normals.is_empty() {
            return p.clamp(P_MIN, P_MAX);
        }
        self.normals.iter().map(|&u| outcome_probability(p, u)).sum::<f64>() / self.normals.len() as f64
    }

    /// True member-weighted `E(Y | S = s, G = group)`.
    pub fn eval(&self, group: &str, s: f64) -> Result<f64> {
        self.eval_mode(group, s, Mode::UserLevel)
    }

    /// True target of the estimator in `mode`. Scores are independent of
    /// activity, so under coupling the member-weighted truth mixes the two
    /// calibration functions by `P(n_m > c)` and the instance-weighted truth
    /// by the share of instances from such members.
    pub fn eval_mode(&self, group: &str, s: f64, mode: Mode) -> Result<f64> {
        let g = self.spec(group)?;
        let Some(c) = g.coupling else {
            return Ok(self.marginal(g.calibration, s));
        };
        let pmf = g.activity.pmf();
        let weight = |n: usize| match mode {
            Mode::UserLevel => pmf[n],
            Mode::Aggregate => pmf[n] * n as f64,
        };
        let total: f64 = (1..pmf.len()).map(weight).sum();
        let coupled: f64 = (c.min_activity + 1..pmf.len()).map(weight).sum::<f64>() / total;
        Ok((1.0 - coupled) * self.marginal(g.calibration, s) + coupled * self.marginal(c.calibration, s))
    }

    /// Truth curves on a grid for every group and both modes, for the JSON
    /// sidecar of generated datasets.
    pub fn sidecar(&self, grid: &[f64]) -> Result<serde_json::Value> {
        let mut curves = serde_json::Map::new();
        for g in &self.config.groups {
            let mut by_mode = serde_json::Map::new();
            for mode in [Mode::UserLevel, Mode::Aggregate] {
                let values = grid
                    .iter()
                    .map(|&s| self.eval_mode(&g.name, s, mode))
                    .collect::<Result<Vec<_>>>()?;
                by_mode.insert(mode.to_string(), serde_json::json!(values));
            }
            curves.insert(g.name.clone(), serde_json::Value::Object(by_mode));
        }
        Ok(serde_json::json!({
            "config": self.config,
            "grid": grid,
            "truth": curves,
        }))
    }
}

/// Linear conditional mean `intercept + Σ_j coefs[j] S^j`, clamped to `[0, 1]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinearOutcome {
    pub intercept: f64,
    pub coefs: Vec<f64>,
}

impl LinearOutcome {
    pub fn eval(&self, s: &[f64]) -> f64 {
        (self.intercept + self.coefs.iter().zip(s).map(|(c, x)| c * x).sum::<f64>()).clamp(0.0, 1.0)
    }
}

/// Multi-objective design. Each instance has `K` independent uniform latent
/// scores `U`; group `g` observes `S^j = (U^j)^score_power[g]` and draws
/// Bernoulli outcomes with `E(Y^k | U) = outcomes[k](U) + group_shift[g]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MultiSynthConfig {
    pub groups: Vec<(String, usize)>,
    pub group_shift: Vec<f64>,
    pub score_power: Vec<f64>,
    pub outcomes: Vec<LinearOutcome>,
    pub lambda: f64,
    pub seed: u64,
}

impl MultiSynthConfig {
    /// Two objectives where the first score also informs the second
    /// outcome: `E(Y^1|U) = 0.1 + 0.8 U^1`, `E(Y^2|U) = 0.2 + 0.3 U^1 + 0.4 U^2`.
    /// Group `g2`'s scores are inflated (`S = U^0.6`), so raw scores violate
    /// parity while both groups share the same calibrated score range.
    pub fn cross_informative(members: usize, seed: u64) -> Self {
        Self {
            groups: vec![("g1".into(), members), ("g2".into(), members)],
            group_shift: vec![0.0, 0.0],
            score_power: vec![1.0, 0.6],
            outcomes: vec![
                LinearOutcome {
                    intercept: 0.1,
                    coefs: vec![0.8, 0.0],
                },
                LinearOutcome {
                    intercept: 0.2,
                    coefs: vec![0.3, 0.4],
                },
            ],
            lambda: 0.0,
            seed,
        }
    }

    pub fn k(&self) -> usize {
        self.outcomes.len()
    }

    fn index(&self, group: &str) -> Result<usize> {
        self.groups
            .iter()
            .position(|g| g.0 == group)
            .ok_or_else(|| Error::UnknownGroup(group.to_string()))
    }

    /// `E(Y^k | S = s, G = group)` for every objective, at observed scores.
    pub fn truth(&self, group: &str, s: &[f64]) -> Result<Vec<f64>> {
        let i = self.index(group)?;
        let latent: Vec<f64> = s.iter().map(|x| x.clamp(0.0, 1.0).powf(1.0 / self.score_power[i])).collect();
        Ok(self.latent_truth(i, &latent))
    }

    fn latent_truth(&self, i: usize, u: &[f64]) -> Vec<f64> {
        self.outcomes
            .iter()
            .map(|o| (o.eval(u) + self.group_shift[i]).clamp(0.0, 1.0))
            .collect()
    }
}

pub fn generate_multi(config: &MultiSynthConfig) -> Result<ClusteredDataset> {
    let k = config.k();
    if k == 0
        || config.group_shift.len() != config.groups.len()
        || config.score_power.len() != config.groups.len()
        || config.score_power.iter().any(|p| !(*p > 0.0 && p.is_finite()))
        || config.outcomes.iter().any(|o| o.coefs.len() != k)
        || !(config.lambda >= 0.0)
    {
        return Err(Error::InvalidArgument("inconsistent multi-objective synthetic config".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut members = Vec::new();
    for (g, (name, m)) in config.groups.iter().enumerate() {
        for i in 0..*m {
            let n = poisson_draw(&mut rng, config.lambda);
            let instances = (0..n)
                .map(|_| {
                    let u: Vec<f64> = (0..k).map(|_| rng.random::<f64>()).collect();
                    let p = config.latent_truth(g, &u);
                    let y = p.iter().map(|&p| (rng.random::<f64>() < p) as u8 as f64).collect();
                    let s = u.iter().map(|x| x.powf(config.score_power[g])).collect();
                    Observation::new(s, y)
                })
                .collect::<Result<Vec<_>>>()?;
            members.push(Member::new(format!("{name}-{i}"), name, instances)?);
        }
    }
    ClusteredDataset::new(members, true)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn same_seed_is_bit_identical() {
        let mut cfg = SynthConfig::two_groups(200, 9);
        cfg.tau = 0.5;
        let (a, _) = generate(&cfg).unwrap();
        let (b, _) = generate(&cfg).unwrap();
        assert_eq!(a, b);
        cfg.seed = 10;
        assert_ne!(generate(&cfg).unwrap().0, a);
    }

    #[test]
    fn group_counts_match_config() {
        let mut cfg = SynthConfig::two_groups(0, 1);
        cfg.groups[0].members = 37;
        cfg.groups[1].members = 11;
        let (d, _) = generate(&cfg).unwrap();
        assert_eq!(d.group_size("g1").0, 37);
        assert_eq!(d.group_size("g2").0, 11);
    }

    #[test]
    fn zero_rate_means_single_instances() {
        let mut cfg = SynthConfig::two_groups(300, 2);
        for g in &mut cfg.groups {
            g.activity = Activity::Poisson { lambda: 0.0 };
        }
        let (d, _) = generate(&cfg).unwrap();
        assert!(d.members().iter().all(|m| m.n() == 1));
    }

    #[test]
    fn identity_outcomes_track_scores_in_a_window() {
        let mut cfg = SynthConfig::two_groups(20_000, 3);
        cfg.groups[0].scores = ScoreDist::Uniform;
        let (d, _) = generate(&cfg).unwrap();
        let window: Vec<(f64, f64)> = d.group_pairs("g1", 0).into_iter().filter(|p| (0.3..0.4).contains(&p.0)).collect();
        let n = window.len() as f64;
        let mean_s = window.iter().map(|p| p.0).sum::<f64>() / n;
        let mean_y = window.iter().map(|p| p.1).sum::<f64>() / n;
        let se = (mean_s * (1.0 - mean_s) / n).sqrt();
        assert!((mean_y - mean_s).abs() <= 3.0 * se, "{mean_y} vs {mean_s}");
    }

    #[test]
    fn truth_without_random_effect_is_the_configured_function() {
        let mut cfg = SynthConfig::two_groups(10, 4);
        cfg.groups[1].calibration = CalibrationFn::Shift { delta: 0.1 };
        let truth = GroundTruth::new(&cfg);
        for s in [0.05, 0.3, 0.77] {
            assert_eq!(truth.eval("g1", s).unwrap(), s);
            assert_eq!(truth.eval("g2", s).unwrap(), (s + 0.1).min(1.0));
        }
        assert!(truth.eval("zz", 0.5).is_err());
    }

    #[test]
    fn random_effect_truth_matches_quadrature() {
        let mut cfg = SynthConfig::two_groups(10, 5);
        cfg.tau = 0.8;
        let truth = GroundTruth::new(&cfg);
        // Independent oracle: trapezoid rule over the normal density.
        let quad = |s: f64| {
            let (lo, hi, n) = (-8.0, 8.0, 4000);
            let h = (hi - lo) / n as f64;
            (0..=n)
                .map(|i| {
                    let z = lo + i as f64 * h;
                    let w = if i == 0 || i == n { 0.5 } else { 1.0 };
                    let p = (1.0 / (1.0 + (-(s / (1.0 - s)).ln() - 0.8 * z).exp())).clamp(0.001, 0.999);
                    w * h * p * (-0.5 * z * z).exp() / (2.0 * std::f64::consts::PI).sqrt()
                })
                .sum::<f64>()
        };
        for s in [0.1, 0.5, 0.9] {
            assert_abs_diff_eq!(truth.eval("g1", s).unwrap(), quad(s), epsilon = 5e-3);
        }
        // Symmetry of the normal makes s = 0.5 a fixed point.
        assert_abs_diff_eq!(truth.eval("g1", 0.5).unwrap(), 0.5, epsilon = 5e-3);
    }

    #[test]
    fn coupling_truths_differ_by_mode() {
        let cfg = SynthConfig::coupling(100, 6);
        let t = GroundTruth::new(&cfg);
        let user = t.eval_mode("g2", 0.5, Mode::UserLevel).unwrap();
        let agg = t.eval_mode("g2", 0.5, Mode::Aggregate).unwrap();
        assert!(user < 0.51 && agg > 0.55, "{user} {agg}");
        // Under 1 + Poisson(1) about 1% of g1's instances come from members
        // above the activity threshold.
        let g1 = t.eval_mode("g1", 0.5, Mode::Aggregate).unwrap();
        assert!(g1 > 0.5 && g1 < 0.505, "{g1}");
        let pmf = cfg.groups[1].activity.pmf();
        assert_abs_diff_eq!(pmf.iter().sum::<f64>(), 1.0, epsilon = 1e-12);
    }

    #[test]
    fn coupling_rule_applies_above_threshold() {
        let cfg = SynthConfig::coupling(3000, 7);
        let (d, _) = generate(&cfg).unwrap();
        let heavy: Vec<_> = d.members_of("g2").filter(|m| m.n() > 5).collect();
        assert!(!heavy.is_empty());
        let pairs: Vec<(f64, f64)> = heavy.iter().flat_map(|m| m.instances.iter().map(|o| (o.scores[0], o.outcomes[0]))).collect();
        let mean_gap = pairs.iter().map(|(s, y)| y - s).sum::<f64>() / pairs.len() as f64;
        // E(Y - S) for min(S + 0.2, 1) with uniform S is 0.2 - 0.02 = 0.18.
        assert!((mean_gap - 0.18).abs() < 0.03, "{mean_gap}");
    }

    #[test]
    fn multi_objective_design() {
        let cfg = MultiSynthConfig::cross_informative(500, 8);
        let d = generate_multi(&cfg).unwrap();
        assert_eq!(d.k(), 2);
        assert_eq!(d.m(), 1000);
        assert_eq!(cfg.truth("g1", &[0.5, 0.5]).unwrap(), vec![0.1 + 0.4, 0.2 + 0.15 + 0.2]);
        // g2 observes U^0.6, so S = 0.25^0.6 corresponds to U = 0.25.
        let t = cfg.truth("g2", &[0.25f64.powf(0.6), 1.0]).unwrap();
        assert_abs_diff_eq!(t[0], 0.1 + 0.2, epsilon = 1e-12);
        assert_abs_diff_eq!(t[1], 0.2 + 0.075 + 0.4, epsilon = 1e-12);
        assert_eq!(generate_multi(&cfg).unwrap(), d);
    }
}
