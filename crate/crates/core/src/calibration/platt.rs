use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::stats::{logistic, logit};

const MAX_ITER: usize = 100;
const GRAD_TOL: f64 = 1e-8;
/// A slope beyond this signals (quasi-)separation.
pub const SEPARATION_SLOPE: f64 = 1e4;

/// `p(s) = 1 / (1 + exp(-(a s + b)))`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PlattParams {
    pub a: f64,
    pub b: f64,
}

impl PlattParams {
    pub fn eval(&self, s: f64) -> f64 {
        logistic(self.a * s + self.b)
    }
}

pub(crate) struct PlattFit {
    pub params: PlattParams,
    pub separated: bool,
}

/// Mean weighted log-likelihood with its gradient and negated Hessian.
fn evaluate(points: &[(f64, f64, f64)], total: f64, a: f64, b: f64) -> (f64, [f64; 2], [f64; 3]) {
    let mut ll = 0.0;
    let mut g = [0.0; 2];
    let mut h = [0.0; 3];
    for &(s, y, w) in points {
        let eta = a * s + b;
        // log(1 + e^eta) without overflow.
        let softplus = if eta > 0.0 { eta + (-eta).exp().ln_1p() } else { eta.exp().ln_1p() };
        ll += w * (y * eta - softplus);
        let p = logistic(eta);
        let r = w * (y - p);
        g[0] += r * s;
        g[1] += r;
        let v = w * p * (1.0 - p);
        h[0] += v * s * s;
        h[1] += v * s;
        h[2] += v;
    }
    (
        ll / total,
        [g[0] / total, g[1] / total],
        [h[0] / total, h[1] / total, h[2] / total],
    )
}

/// True when a score threshold splits binary outcomes perfectly; the
/// likelihood then has no finite maximiser and the gradient can vanish long
/// before the slope passes [`SEPARATION_SLOPE`].
fn separable(points: &[(f64, f64, f64)]) -> bool {
    if points.iter().any(|p| p.1 != 0.0 && p.1 != 1.0) {
        return false;
    }
    let range = |y: f64| {
        points
            .iter()
            .filter(|p| p.1 == y && p.2 > 0.0)
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), p| (lo.min(p.0), hi.max(p.0)))
    };
    let (lo0, hi0) = range(0.0);
    let (lo1, hi1) = range(1.0);
    hi0 < lo1 || hi1 < lo0
}

/// Maximum-likelihood logistic fit of `(score, outcome, weight)` triples by
/// damped Newton iterations.
pub(crate) fn fit(points: &[(f64, f64, f64)], group: &str) -> Result<PlattFit> {
    if points.iter().any(|p| !(0.0..=1.0).contains(&p.1)) {
        return Err(Error::InvalidArgument(format!(
            "Platt scaling needs outcomes in [0, 1] (group `{group}`)"
        )));
    }
    let total: f64 = points.iter().map(|p| p.2).sum();
    let mean_y = points.iter().map(|p| p.1 * p.2).sum::<f64>() / total;
    let y_min = points.iter().map(|p| p.1).fold(f64::INFINITY, f64::min);
    let y_max = points.iter().map(|p| p.1).fold(f64::NEG_INFINITY, f64::max);
    if points.is_empty() || !(total > 0.0) || y_min == y_max {
        return Err(Error::DegenerateOutcome(group.to_string()));
    }
    let (mut a, mut b) = (0.0, logit(mean_y));
    let (mut ll, mut g, mut h) = evaluate(points, total, a, b);
    let mut iterations = 0usize;
    while iterations < MAX_ITER && g[0].hypot(g[1]) >= GRAD_TOL && a.abs() <= SEPARATION_SLOPE {
        iterations += 1;
        let det = h[0] * h[2] - h[1] * h[1];
        // Newton direction H⁻¹ g; falls back to gradient ascent when the
        // curvature is degenerate (all scores equal or separation).
        let (da, db) = if det > 1e-300 {
            ((h[2] * g[0] - h[1] * g[1]) / det, (h[0] * g[1] - h[1] * g[0]) / det)
        } else {
            (g[0], g[1])
        };
        let mut step = 1.0;
        let mut accepted = false;
        for _ in 0..60 {
            let (na, nb) = (a + step * da, b + step * db);
            let next = evaluate(points, total, na, nb);
            if next.0 >= ll {
                (a, b) = (na, nb);
                (ll, g, h) = next;
                accepted = true;
                break;
            }
            step *= 0.5;
        }
        if !accepted {
            break;
        }
    }
    Ok(PlattFit {
        params: PlattParams { a, b },
        separated: a.abs() > SEPARATION_SLOPE || separable(points),
    })
}
