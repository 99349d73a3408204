//! Feature tables and the baseline L2-regularised logistic scorer.

use std::collections::BTreeSet;
use std::path::Path;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::data::{ClusteredDataset, Member, Observation};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct NumericColumn {
    pub name: String,
    pub values: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CategoricalColumn {
    pub name: String,
    pub values: Vec<String>,
}

/// One row per individual: an id, a group label, a binary target and the
/// feature columns. The group attribute is never a feature column.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Table {
    pub ids: Vec<String>,
    pub groups: Vec<String>,
    pub target: Vec<f64>,
    pub numeric: Vec<NumericColumn>,
    pub categorical: Vec<CategoricalColumn>,
}

impl Table {
    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    /// Rows `idx`, in that order.
    pub fn select(&self, idx: &[usize]) -> Table {
        let pick = |v: &Vec<String>| idx.iter().map(|&i| v[i].clone()).collect();
        Table {
            ids: pick(&self.ids),
            groups: pick(&self.groups),
            target: idx.iter().map(|&i| self.target[i]).collect(),
            numeric: self
                .numeric
                .iter()
                .map(|c| NumericColumn {
                    name: c.name.clone(),
                    values: idx.iter().map(|&i| c.values[i]).collect(),
                })
                .collect(),
            categorical: self
                .categorical
                .iter()
                .map(|c| CategoricalColumn {
                    name: c.name.clone(),
                    values: pick(&c.values),
                })
                .collect(),
        }
    }

    /// Rows whose predicate holds.
    pub fn filter(&self, mut keep: impl FnMut(usize) -> bool) -> Table {
        let idx: Vec<usize> = (0..self.len()).filter(|&i| keep(i)).collect();
        self.select(&idx)
    }

    /// One single-instance member per row, scored by `scores`.
    pub fn to_scored_dataset(&self, scores: &[f64]) -> Result<ClusteredDataset> {
        if scores.len() != self.len() {
            return Err(Error::InvalidArgument(format!(
                "{} scores for {} rows",
                scores.len(),
                self.len()
            )));
        }
        let members = (0..self.len())
            .map(|i| {
                Member::new(
                    self.ids[i].clone(),
                    &self.groups[i],
                    vec![Observation::scalar(scores[i], self.target[i])],
                )
            })
            .collect::<Result<Vec<_>>>()?;
        ClusteredDataset::new(members, true)
    }

    fn validate(&self) -> Result<()> {
        let n = self.len();
        let ok = self.groups.len() == n
            && self.target.len() == n
            && self.numeric.iter().all(|c| c.values.len() == n)
            && self.categorical.iter().all(|c| c.values.len() == n);
        if !ok {
            return Err(Error::Schema("table columns have different lengths".into()));
        }
        if n == 0 {
            return Err(Error::EmptyDataset);
        }
        Ok(())
    }
}

/// Column roles for [`read_table`].
#[derive(Debug, Clone, Default)]
pub struct TableSpec {
    pub target: String,
    pub group: String,
    pub id: Option<String>,
    /// Columns forced to be categorical even when they parse as numbers.
    pub categorical: Vec<String>,
    pub exclude: Vec<String>,
    /// Target label counted as the positive class. Without it the target
    /// must already be coded 0/1.
    pub positive: Option<String>,
}

/// Reads a headed CSV into a [`Table`]. A feature column is numeric when
/// every value parses as a number and it is not listed as categorical.
pub fn read_table(path: impl AsRef<Path>, spec: &TableSpec) -> Result<Table> {
    let path = path.as_ref();
    let mut reader = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .flexible(true)
        .from_path(path)
        .map_err(|e| match e.into_kind() {
            csv::ErrorKind::Io(io) => Error::io(path, io),
            other => Error::Schema(format!("{}: {other:?}", path.display())),
        })?;
    let headers: Vec<String> = reader.headers()?.iter().map(str::to_string).collect();
    let find = |name: &str| {
        headers
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| Error::Schema(format!("column `{name}` not found in {}", path.display())))
    };
    let target_col = find(&spec.target)?;
    let group_col = find(&spec.group)?;
    let id_col = spec.id.as_deref().map(find).transpose()?;
    for name in spec.categorical.iter().chain(&spec.exclude) {
        find(name)?;
    }
    let mut raw: Vec<Vec<String>> = Vec::new();
    for rec in reader.records() {
        let rec = rec?;
        if rec.iter().all(str::is_empty) {
            continue;
        }
        raw.push(rec.iter().map(str::to_string).collect());
    }
    let mut table = Table::default();
    for (line, row) in raw.iter().enumerate() {
        if row.len() != headers.len() {
            return Err(Error::Schema(format!(
                "row {}: expected {} fields, found {}",
                line + 1,
                headers.len(),
                row.len()
            )));
        }
        table.ids.push(match id_col {
            Some(c) => row[c].clone(),
            None => format!("row{}", line + 1),
        });
        table.groups.push(row[group_col].clone());
        table.target.push(parse_target(&row[target_col], spec, line + 1)?);
    }
    for (c, name) in headers.iter().enumerate() {
        if c == target_col || c == group_col || Some(c) == id_col || spec.exclude.contains(name) {
            continue;
        }
        let numeric: Option<Vec<f64>> = if spec.categorical.contains(name) {
            None
        } else {
            raw.iter().map(|r| r[c].parse::<f64>().ok().filter(|v| v.is_finite())).collect()
        };
        match numeric {
            Some(values) => table.numeric.push(NumericColumn { name: name.clone(), values }),
            None => table.categorical.push(CategoricalColumn {
                name: name.clone(),
                values: raw.iter().map(|r| r[c].clone()).collect(),
            }),
        }
    }
    table.validate()?;
    Ok(table)
}

fn parse_target(value: &str, spec: &TableSpec, row: usize) -> Result<f64> {
    if let Some(p) = &spec.positive {
        return Ok(if value == p { 1.0 } else { 0.0 });
    }
    match value.parse::<f64>() {
        Ok(v) if v == 0.0 || v == 1.0 => Ok(v),
        _ => Err(Error::Parse {
            row,
            column: spec.target.clone(),
            value: value.to_string(),
        }),
    }
}

/// Standardises numeric columns and one-hot encodes categorical ones, with
/// statistics and levels taken from the training table. Unseen levels encode
/// as all zeros. The first design column is the intercept.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Encoder {
    pub numeric: Vec<(String, f64, f64)>,
    pub categorical: Vec<(String, Vec<String>)>,
}

impl Encoder {
    pub fn fit(train: &Table) -> Self {
        let numeric = train
            .numeric
            .iter()
            .map(|c| {
                let n = c.values.len() as f64;
                let mean = c.values.iter().sum::<f64>() / n;
                let var = c.values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
                let sd = if var > 0.0 { var.sqrt() } else { 1.0 };
                (c.name.clone(), mean, sd)
            })
            .collect();
        let categorical = train
            .categorical
            .iter()
            .map(|c| {
                let levels: BTreeSet<&String> = c.values.iter().collect();
                (c.name.clone(), levels.into_iter().cloned().collect())
            })
            .collect();
        Self { numeric, categorical }
    }

    /// Design width including the intercept.
    pub fn width(&self) -> usize {
        1 + self.numeric.len() + self.categorical.iter().map(|(_, l)| l.len()).sum::<usize>()
    }

    pub fn encode(&self, table: &Table) -> Result<DMatrix<f64>> {
        let n = table.len();
        let mut x = DMatrix::zeros(n, self.width());
        x.column_mut(0).fill(1.0);
        let mut col = 1;
        for (name, mean, sd) in &self.numeric {
            let src = table
                .numeric
                .iter()
                .find(|c| &c.name == name)
                .ok_or_else(|| Error::Schema(format!("numeric column `{name}` missing")))?;
            for (i, v) in src.values.iter().enumerate() {
                x[(i, col)] = (v - mean) / sd;
            }
            col += 1;
        }
        for (name, levels) in &self.categorical {
            let src = table
                .categorical
                .iter()
                .find(|c| &c.name == name)
                .ok_or_else(|| Error::Schema(format!("categorical column `{name}` missing")))?;
            for (i, v) in src.values.iter().enumerate() {
                if let Ok(j) = levels.binary_search(v) {
                    x[(i, col + j)] = 1.0;
                }
            }
            col += levels.len();
        }
        Ok(x)
    }
}

/// Logistic regression with penalty `lambda/2 · ||β||²` on all coefficients
/// except the intercept.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogisticScorer {
    pub encoder: Encoder,
    pub coefficients: Vec<f64>,
    pub lambda: f64,
    pub iterations: usize,
}

impl LogisticScorer {
    pub fn score(&self, table: &Table) -> Result<Vec<f64>> {
        let x = self.encoder.encode(table)?;
        let beta = DVector::from_column_slice(&self.coefficients);
        Ok((x * beta).iter().map(|&e| sigmoid(e)).collect())
    }
}

pub const DEFAULT_LAMBDA: f64 = 1.0;

fn sigmoid(e: f64) -> f64 {
    if e >= 0.0 {
        1.0 / (1.0 + (-e).exp())
    } else {
        let z = e.exp();
        z / (1.0 + z)
    }
}

fn softplus(e: f64) -> f64 {
    e.max(0.0) + (-e.abs()).exp().ln_1p()
}

/// Fits the scorer by damped Newton iterations on the penalised negative
/// log-likelihood.
pub fn fit_baseline_scorer(train: &Table, lambda: f64) -> Result<LogisticScorer> {
    train.validate()?;
    if !(lambda > 0.0 && lambda.is_finite()) {
        return Err(Error::InvalidArgument(format!("lambda must be positive, got {lambda}")));
    }
    if train.target.iter().any(|&y| y != 0.0 && y != 1.0) {
        return Err(Error::DegenerateOutcome("scorer target must be binary 0/1".into()));
    }
    let encoder = Encoder::fit(train);
    let x = encoder.encode(train)?;
    let y = DVector::from_column_slice(&train.target);
    let p = x.ncols();
    let mut penalty = DVector::from_element(p, lambda);
    penalty[0] = 0.0;

    let objective = |beta: &DVector<f64>| {
        let eta = &x * beta;
        let nll: f64 = eta.iter().zip(y.iter()).map(|(&e, &yi)| softplus(e) - yi * e).sum();
        nll + 0.5 * beta.iter().zip(penalty.iter()).map(|(b, l)| l * b * b).sum::<f64>()
    };

    let mut beta = DVector::zeros(p);
    let base = train.target.iter().sum::<f64>() / train.len() as f64;
    if base > 0.0 && base < 1.0 {
        beta[0] = (base / (1.0 - base)).ln();
    }
    let mut current = objective(&beta);
    let mut iterations = 0;
    while iterations < 100 {
        iterations += 1;
        let eta = &x * &beta;
        let mu = eta.map(sigmoid);
        let grad = x.tr_mul(&(&mu - &y)) + penalty.component_mul(&beta);
        let mut xw = x.clone();
        for (i, mut row) in xw.row_iter_mut().enumerate() {
            row *= (mu[i] * (1.0 - mu[i])).sqrt();
        }
        let mut hess = xw.tr_mul(&xw);
        for j in 0..p {
            hess[(j, j)] += penalty[j] + 1e-10;
        }
        let step = hess
            .cholesky()
            .ok_or_else(|| Error::NonInvertible("scorer Hessian is not positive definite".into()))?
            .solve(&grad);
        let mut t = 1.0;
        let mut next = &beta - &step * t;
        let mut value = objective(&next);
        while value > current && t > 1e-8 {
            t *= 0.5;
            next = &beta - &step * t;
            value = objective(&next);
        }
        let moved = (&step * t).amax();
        if value <= current {
            beta = next;
            current = value;
        }
        if moved < 1e-10 || grad.amax() < 1e-9 * train.len() as f64 {
            break;
        }
    }
    Ok(LogisticScorer {
        encoder,
        coefficients: beta.iter().copied().collect(),
        lambda,
        iterations,
    })
}
