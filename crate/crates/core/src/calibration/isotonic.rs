use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Weighted pool-adjacent-violators: the non-decreasing sequence minimising
/// `Σ w_i (y_i - g_i)²`.
pub fn pava(y: &[f64], w: &[f64]) -> Vec<f64> {
    assert_eq!(y.len(), w.len(), "pava needs one weight per value");
    // Stack of blocks: (weighted mean, weight, length).
    let mut blocks: Vec<(f64, f64, usize)> = Vec::with_capacity(y.len());
    for (&yi, &wi) in y.iter().zip(w) {
        let mut cur = (yi, wi, 1usize);
        while let Some(&(mean, weight, len)) = blocks.last() {
            if mean <= cur.0 {
                break;
            }
            blocks.pop();
            let total = weight + cur.1;
            let pooled = if total > 0.0 {
                (mean * weight + cur.0 * cur.1) / total
            } else {
                0.5 * (mean + cur.0)
            };
            cur = (pooled, total, len + cur.2);
        }
        blocks.push(cur);
    }
    blocks
        .into_iter()
        .flat_map(|(mean, _, len)| std::iter::repeat_n(mean, len))
        .collect()
}

/// Right-continuous step function fitted by isotonic regression.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepFunction {
    pub x: Vec<f64>,
    pub y: Vec<f64>,
}

impl StepFunction {
    pub fn eval(&self, s: f64) -> f64 {
        let i = self.x.partition_point(|&x| x <= s);
        self.y[i.saturating_sub(1)]
    }
}

/// Pre-pools tied scores into weighted points, then runs PAVA.
pub(crate) fn fit(points: &mut [(f64, f64, f64)]) -> Result<StepFunction> {
    if points.is_empty() {
        return Err(Error::InsufficientData("isotonic fit needs at least one instance".into()));
    }
    points.sort_by(|a, b| a.0.total_cmp(&b.0));
    let mut x: Vec<f64> = Vec::new();
    let mut sums: Vec<(f64, f64)> = Vec::new();
    for &(s, y, w) in points.iter() {
        if x.last() == Some(&s) {
            let last = sums.last_mut().unwrap();
            last.0 += w * y;
            last.1 += w;
        } else {
            x.push(s);
            sums.push((w * y, w));
        }
    }
    let means: Vec<f64> = sums
        .iter()
        .map(|&(sy, sw)| if sw > 0.0 { sy / sw } else { 0.0 })
        .collect();
    let weights: Vec<f64> = sums.iter().map(|p| p.1).collect();
    let y = pava(&means, &weights);
    Ok(StepFunction { x, y })
}
