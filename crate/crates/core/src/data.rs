//! Clustered observation model.
//!
//! A dataset is a list of members (the unit of independence), each carrying a
//! fixed group label and one or more scored instances. Members are cheap to
//! clone: the instance list is shared behind an `Arc`, which keeps cluster
//! bootstrap resampling allocation-light.

use std::collections::HashMap;
use std::io::{Read, Write};
use std::path::Path;
use std::sync::Arc;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// One scored instance: `K` scores and the matching `K` outcomes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Observation {
    pub scores: Vec<f64>,
    pub outcomes: Vec<f64>,
}

impl Observation {
    pub fn new(scores: Vec<f64>, outcomes: Vec<f64>) -> Result<Self> {
        if scores.is_empty() || scores.len() != outcomes.len() {
            return Err(Error::InvalidArgument(format!(
                "observation needs K >= 1 scores and K outcomes, got {} and {}",
                scores.len(),
                outcomes.len()
            )));
        }
        Ok(Self { scores, outcomes })
    }

    /// Single-objective shorthand.
    pub fn scalar(score: f64, outcome: f64) -> Self {
        Self {
            scores: vec![score],
            outcomes: vec![outcome],
        }
    }

    pub fn k(&self) -> usize {
        self.scores.len()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Member {
    pub id: String,
    pub group: Arc<str>,
    pub instances: Arc<[Observation]>,
}

impl Member {
    pub fn new(id: impl Into<String>, group: &str, instances: Vec<Observation>) -> Result<Self> {
        let id = id.into();
        if instances.is_empty() {
            return Err(Error::InvalidArgument(format!("member `{id}` has no instances")));
        }
        Ok(Self {
            id,
            group: Arc::from(group.trim()),
            instances: instances.into(),
        })
    }

    /// Instance count `n_m`.
    pub fn n(&self) -> usize {
        self.instances.len()
    }
}

/// Immutable clustered dataset.
#[derive(Debug, Clone, PartialEq)]
pub struct ClusteredDataset {
    members: Vec<Member>,
    k: usize,
    group_levels: Vec<Arc<str>>,
    n_instances: usize,
    bounded: bool,
}

impl ClusteredDataset {
    /// Validates and assembles a dataset. Group labels are interned so that
    /// members of the same group share one allocation; `group_levels` follows
    /// first appearance.
    pub fn new(members: Vec<Member>, bounded: bool) -> Result<Self> {
        let mut levels: Vec<Arc<str>> = Vec::new();
        let mut k = None;
        let mut n_instances = 0;
        let mut members = members;
        for m in &mut members {
            if m.instances.is_empty() {
                return Err(Error::InvalidArgument(format!("member `{}` has no instances", m.id)));
            }
            match levels.iter().find(|l| **l == m.group) {
                Some(l) => m.group = l.clone(),
                None => levels.push(m.group.clone()),
            }
            for obs in m.instances.iter() {
                if obs.scores.is_empty() || obs.scores.len() != obs.outcomes.len() {
                    return Err(Error::InvalidArgument(format!(
                        "member `{}` has an instance with mismatched score/outcome lengths",
                        m.id
                    )));
                }
                match k {
                    None => k = Some(obs.k()),
                    Some(k) if k != obs.k() => {
                        return Err(Error::InvalidArgument(format!(
                            "member `{}` has {} objectives, dataset has {k}",
                            m.id,
                            obs.k()
                        )))
                    }
                    _ => {}
                }
                if bounded && obs.scores.iter().any(|s| !(0.0..=1.0).contains(s)) {
                    return Err(Error::InvalidArgument(format!(
                        "member `{}` has a score outside [0, 1] in a bounded dataset",
                        m.id
                    )));
                }
                if obs.scores.iter().chain(&obs.outcomes).any(|v| !v.is_finite()) {
                    return Err(Error::InvalidArgument(format!(
                        "member `{}` has a non-finite score or outcome",
                        m.id
                    )));
                }
            }
            n_instances += m.n();
        }
        Ok(Self {
            members,
            k: k.unwrap_or(1),
            group_levels: levels,
            n_instances,
            bounded,
        })
    }

    /// Builds a dataset with one single-instance member per row, the layout of
    /// the public benchmark tables.
    pub fn from_rows(
        groups: &[String],
        scores: &[f64],
        outcomes: &[f64],
        bounded: bool,
    ) -> Result<Self> {
        if groups.len() != scores.len() || scores.len() != outcomes.len() {
            return Err(Error::InvalidArgument("row columns differ in length".into()));
        }
        let members = groups
            .iter()
            .zip(scores.iter().zip(outcomes))
            .enumerate()
            .map(|(i, (g, (&s, &y)))| Member::new(i.to_string(), g, vec![Observation::scalar(s, y)]))
            .collect::<Result<Vec<_>>>()?;
        Self::new(members, bounded)
    }

    pub fn members(&self) -> &[Member] {
        &self.members
    }

    /// Member count `M`.
    pub fn m(&self) -> usize {
        self.members.len()
    }

    /// Total instance count `N`.
    pub fn n(&self) -> usize {
        self.n_instances
    }

    /// Objective count `K`.
    pub fn k(&self) -> usize {
        self.k
    }

    pub fn is_bounded(&self) -> bool {
        self.bounded
    }

    pub fn is_empty(&self) -> bool {
        self.members.is_empty()
    }

    pub fn group_levels(&self) -> &[Arc<str>] {
        &self.group_levels
    }

    pub fn has_group(&self, group: &str) -> bool {
        self.group_levels.iter().any(|g| &**g == group)
    }

    pub fn require_group(&self, group: &str) -> Result<()> {
        if self.has_group(group) {
            Ok(())
        } else {
            Err(Error::UnknownGroup(group.to_string()))
        }
    }

    pub fn members_of<'a>(&'a self, group: &'a str) -> impl Iterator<Item = &'a Member> + 'a {
        self.members.iter().filter(move |m| &*m.group == group)
    }

    /// Members and instances belonging to `group`.
    pub fn group_size(&self, group: &str) -> (usize, usize) {
        self.members_of(group)
            .fold((0, 0), |(m, n), member| (m + 1, n + member.n()))
    }

    /// Pooled instance scores of objective `k`, in member order.
    pub fn scores(&self, k: usize) -> Vec<f64> {
        self.members
            .iter()
            .flat_map(|m| m.instances.iter().map(move |o| o.scores[k]))
            .collect()
    }

    /// Pooled `(score, outcome)` pairs of objective `k` for one group.
    pub fn group_pairs(&self, group: &str, k: usize) -> Vec<(f64, f64)> {
        self.members_of(group)
            .flat_map(|m| m.instances.iter().map(move |o| (o.scores[k], o.outcomes[k])))
            .collect()
    }

    pub fn check_objective(&self, k: usize) -> Result<()> {
        if k < self.k {
            Ok(())
        } else {
            Err(Error::InvalidArgument(format!(
                "objective index {k} out of range for K = {}",
                self.k
            )))
        }
    }

    /// Returns a copy whose instances are rewritten by `f`, which receives the
    /// member and an instance and returns the replacement.
    pub fn map_instances<F>(&self, bounded: bool, mut f: F) -> Result<Self>
    where
        F: FnMut(&Member, &Observation) -> Result<Observation>,
    {
        let members = self
            .members
            .iter()
            .map(|m| {
                let instances = m
                    .instances
                    .iter()
                    .map(|o| f(m, o))
                    .collect::<Result<Vec<_>>>()?;
                Ok(Member {
                    id: m.id.clone(),
                    group: m.group.clone(),
                    instances: instances.into(),
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Self::new(members, bounded)
    }

    /// Single-objective view with score `Σ w_k S^k` and outcome `Σ w_k Y^k`.
    /// Bounded when the weights are non-negative and sum to at most one.
    pub fn composite(&self, weights: &CompositeWeights) -> Result<Self> {
        if weights.as_slice().len() != self.k {
            return Err(Error::InvalidArgument(format!(
                "expected {} composite weights, got {}",
                self.k,
                weights.as_slice().len()
            )));
        }
        let w = weights.as_slice();
        let bounded = self.bounded && w.iter().all(|&x| x >= 0.0) && w.iter().sum::<f64>() <= 1.0 + 1e-12;
        self.map_instances(bounded, |_, o| {
            Ok(Observation::scalar(weights.combine(&o.scores), weights.combine(&o.outcomes)))
        })
    }

    /// Keeps the members for which `keep` is true.
    pub fn filter_members<F: FnMut(&Member) -> bool>(&self, mut keep: F) -> Result<Self> {
        let members = self.members.iter().filter(|m| keep(m)).cloned().collect();
        Self::new(members, self.bounded)
    }
}

/// Composite weights `w_1..w_K` for multi-objective ranking.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompositeWeights(Vec<f64>);

impl CompositeWeights {
    pub fn new(w: Vec<f64>, k: usize) -> Result<Self> {
        if w.len() != k {
            return Err(Error::InvalidArgument(format!(
                "expected {k} composite weights, got {}",
                w.len()
            )));
        }
        Ok(Self(w))
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn combine(&self, values: &[f64]) -> f64 {
        self.0.iter().zip(values).map(|(w, v)| w * v).sum()
    }
}

/// Column mapping for CSV ingestion.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Schema {
    pub member_id: String,
    pub group: String,
    pub scores: Vec<String>,
    pub outcomes: Vec<String>,
}

impl Default for Schema {
    fn default() -> Self {
        Self::with_objectives(1)
    }
}

impl Schema {
    /// Canonical column names: `score, score_2, ...` and `outcome, outcome_2, ...`.
    pub fn with_objectives(k: usize) -> Self {
        let name = |base: &str, j: usize| {
            if j == 0 {
                base.to_string()
            } else {
                format!("{base}_{}", j + 1)
            }
        };
        Self {
            member_id: "member_id".into(),
            group: "group".into(),
            scores: (0..k).map(|j| name("score", j)).collect(),
            outcomes: (0..k).map(|j| name("outcome", j)).collect(),
        }
    }

    /// Infers `K` from canonical headers (`score`, `score_2`, ...).
    pub fn detect(headers: &[&str]) -> Self {
        let mut k = 1;
        while headers.contains(&format!("score_{}", k + 1).as_str()) {
            k += 1;
        }
        Self::with_objectives(k)
    }

    /// Applies a remapping such as `member_id=uid,group=sex,score=p`. Keys are
    /// canonical column names, values the names used in the file.
    pub fn remap(mut self, mapping: &str) -> Result<Self> {
        for pair in mapping.split(',').map(str::trim).filter(|p| !p.is_empty()) {
            let (key, value) = pair
                .split_once('=')
                .ok_or_else(|| Error::Schema(format!("mapping entry `{pair}` is not key=value")))?;
            let (key, value) = (key.trim(), value.trim().to_string());
            let canonical = Self::with_objectives(self.scores.len().max(8));
            if key == "member_id" {
                self.member_id = value;
            } else if key == "group" {
                self.group = value;
            } else if let Some(j) = canonical.scores.iter().position(|c| c == key) {
                if j >= self.scores.len() {
                    return Err(Error::Schema(format!("`{key}` exceeds K = {}", self.scores.len())));
                }
                self.scores[j] = value;
            } else if let Some(j) = canonical.outcomes.iter().position(|c| c == key) {
                if j >= self.outcomes.len() {
                    return Err(Error::Schema(format!("`{key}` exceeds K = {}", self.outcomes.len())));
                }
                self.outcomes[j] = value;
            } else {
                return Err(Error::Schema(format!("unknown schema key `{key}`")));
            }
        }
        Ok(self)
    }
}

/// Reads a clustered dataset from CSV. Rows are grouped by member id in order
/// of first appearance.
pub fn load_csv(path: impl AsRef<Path>, schema: &Schema, bounded: bool) -> Result<ClusteredDataset> {
    let path = path.as_ref();
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    read_csv(file, schema, bounded)
}

pub fn read_csv<R: Read>(reader: R, schema: &Schema, bounded: bool) -> Result<ClusteredDataset> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
    let headers = rdr.headers()?.clone();
    let col = |name: &str| {
        headers
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| Error::Schema(format!("missing column `{name}`")))
    };
    let id_col = col(&schema.member_id)?;
    let group_col = col(&schema.group)?;
    let score_cols = schema.scores.iter().map(|c| col(c)).collect::<Result<Vec<_>>>()?;
    let outcome_cols = schema.outcomes.iter().map(|c| col(c)).collect::<Result<Vec<_>>>()?;
    if score_cols.is_empty() || score_cols.len() != outcome_cols.len() {
        return Err(Error::Schema("schema needs K >= 1 score and outcome columns".into()));
    }

    let mut index: HashMap<String, usize> = HashMap::new();
    let mut staged: Vec<(String, String, Vec<Observation>)> = Vec::new();
    for (i, record) in rdr.records().enumerate() {
        let record = record?;
        // Row numbers are 1-based and count the header line.
        let row = i + 2;
        let parse = |c: usize, name: &str| -> Result<f64> {
            let raw = record.get(c).unwrap_or("");
            raw.parse::<f64>().map_err(|_| Error::Parse {
                row,
                column: name.to_string(),
                value: raw.to_string(),
            })
        };
        let scores = score_cols
            .iter()
            .zip(&schema.scores)
            .map(|(&c, n)| parse(c, n))
            .collect::<Result<Vec<_>>>()?;
        let outcomes = outcome_cols
            .iter()
            .zip(&schema.outcomes)
            .map(|(&c, n)| parse(c, n))
            .collect::<Result<Vec<_>>>()?;
        let id = record.get(id_col).unwrap_or("").to_string();
        let group = record.get(group_col).unwrap_or("").trim().to_string();
        let obs = Observation { scores, outcomes };
        match index.get(&id) {
            Some(&j) => {
                if staged[j].1 != group {
                    return Err(Error::InconsistentGroup {
                        member: id,
                        first: staged[j].1.clone(),
                        second: group,
                    });
                }
                staged[j].2.push(obs);
            }
            None => {
                index.insert(id.clone(), staged.len());
                staged.push((id, group, vec![obs]));
            }
        }
    }
    let members = staged
        .into_iter()
        .map(|(id, group, obs)| Member::new(id, &group, obs))
        .collect::<Result<Vec<_>>>()?;
    ClusteredDataset::new(members, bounded)
}

/// Writes the dataset in the canonical CSV layout, one row per instance.
pub fn write_csv<W: Write>(dataset: &ClusteredDataset, writer: W) -> Result<()> {
    let schema = Schema::with_objectives(dataset.k());
    let mut wtr = csv::Writer::from_writer(writer);
    let mut header = vec![schema.member_id.clone(), schema.group.clone()];
    header.extend(schema.scores.iter().cloned());
    header.extend(schema.outcomes.iter().cloned());
    wtr.write_record(&header)?;
    for m in dataset.members() {
        for o in m.instances.iter() {
            let mut rec = vec![m.id.clone(), m.group.to_string()];
            rec.extend(o.scores.iter().map(|v| v.to_string()));
            rec.extend(o.outcomes.iter().map(|v| v.to_string()));
            wtr.write_record(&rec)?;
        }
    }
    wtr.flush().map_err(|e| Error::io("<csv writer>", e))?;
    Ok(())
}

pub fn save_csv(dataset: &ClusteredDataset, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    write_csv(dataset, std::io::BufWriter::new(file))
}

/// Member-level split: every instance of a member lands on the same side.
/// The first side receives `round(fraction * M)` members.
pub fn split(
    dataset: &ClusteredDataset,
    fraction: f64,
    seed: u64,
) -> Result<(ClusteredDataset, ClusteredDataset)> {
    if !(fraction > 0.0 && fraction < 1.0) {
        return Err(Error::InvalidArgument(format!(
            "split fraction must lie in (0, 1), got {fraction}"
        )));
    }
    if dataset.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let m = dataset.m();
    let mut order: Vec<usize> = (0..m).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let cut = (fraction * m as f64).round() as usize;
    let mut first = vec![false; m];
    for &i in &order[..cut] {
        first[i] = true;
    }
    let (a, b): (Vec<_>, Vec<_>) = dataset
        .members()
        .iter()
        .zip(&first)
        .partition(|(_, &f)| f);
    let unzip = |side: Vec<(&Member, &bool)>| side.into_iter().map(|(m, _)| m.clone()).collect();
    Ok((
        ClusteredDataset::new(unzip(a), dataset.bounded)?,
        ClusteredDataset::new(unzip(b), dataset.bounded)?,
    ))
}

/// Cluster bootstrap: draws `M` members with replacement, keeping each drawn
/// member's full instance list. Repeated draws of one member get the suffix
/// `~2`, `~3`, ... so ids stay unique.
pub fn bootstrap_resample(dataset: &ClusteredDataset, seed: u64) -> Result<ClusteredDataset> {
    if dataset.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let m = dataset.m();
    let mut seen = vec![0usize; m];
    let members = (0..m)
        .map(|_| {
            let j = rng.random_range(0..m);
            seen[j] += 1;
            let src = &dataset.members[j];
            let id = if seen[j] == 1 {
                src.id.clone()
            } else {
                format!("{}~{}", src.id, seen[j])
            };
            Member {
                id,
                group: src.group.clone(),
                instances: src.instances.clone(),
            }
        })
        .collect();
    ClusteredDataset::new(members, dataset.bounded)
}
