use std::collections::HashMap;
use std::sync::Mutex;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::data::{ClusteredDataset, Member, Observation};
use crate::error::{Error, Result};
#[cfg(doc)]
use crate::estimator::nw_multivariate;
use crate::kernel::{rule_of_thumb_bandwidth, BandwidthRule};

/// Joint transformation `S̃_k = E(Y^k | S^1..S^K, G = g)`, evaluated lazily
/// from the stored training sample and memoised per distinct query.
pub struct MultiObjectiveTransform {
    sample: ClusteredDataset,
    bandwidth: BandwidthRule,
    memo: Mutex<HashMap<Vec<u64>, Vec<f64>>>,
}

impl MultiObjectiveTransform {
    pub(crate) fn new(sample: ClusteredDataset, bandwidth: BandwidthRule) -> Self {
        Self {
            sample,
            bandwidth,
            memo: Mutex::new(HashMap::new()),
        }
    }

    pub fn sample(&self) -> &ClusteredDataset {
        &self.sample
    }

    /// Per-objective bandwidths at `s_vec`. The rule of thumb keeps its
    /// Bernoulli-variance shape per coordinate but shrinks at the
    /// dimension-adjusted rate `M^(-1/(4+K))`.
    pub fn bandwidths(&self, s_vec: &[f64]) -> Result<Vec<f64>> {
        let dims = s_vec.len();
        let m = self.sample.m() as f64;
        let n_eff = m.powf(5.0 / (4.0 + dims as f64)).round().max(1.0) as usize;
        s_vec
            .iter()
            .map(|&s| match self.bandwidth {
                BandwidthRule::RuleOfThumb => rule_of_thumb_bandwidth(s.clamp(0.0, 1.0), n_eff),
                fixed => fixed.bandwidth(s, n_eff, false),
            })
            .collect()
    }

    /// All `K` transformed scores at `s_vec`: the values of
    /// [`nw_multivariate`] for every objective, from one pass over the sample.
    pub fn eval(&self, s_vec: &[f64]) -> Result<Vec<f64>> {
        let key: Vec<u64> = s_vec.iter().map(|s| s.to_bits()).collect();
        if let Some(hit) = self.memo.lock().unwrap().get(&key) {
            return Ok(hit.clone());
        }
        let dims = self.sample.k();
        if s_vec.len() != dims {
            return Err(Error::InvalidArgument(format!(
                "expected {dims} scores, got {}",
                s_vec.len()
            )));
        }
        let h = self.bandwidths(s_vec)?;
        let inv_h: Vec<f64> = h.iter().map(|h| 1.0 / h).collect();
        let mut num = vec![0.0; dims];
        let mut den = 0.0;
        for m in self.sample.members() {
            let inv_n = 1.0 / m.n() as f64;
            for o in m.instances.iter() {
                let q: f64 = (0..dims)
                    .map(|j| {
                        let u = (o.scores[j] - s_vec[j]) * inv_h[j];
                        u * u
                    })
                    .sum();
                let w = (-0.5 * q).exp() * inv_n;
                den += w;
                for (acc, y) in num.iter_mut().zip(&o.outcomes) {
                    *acc += w * y;
                }
            }
        }
        if !(den > 0.0) {
            return Err(Error::NoMass { s: s_vec[0], h: h[0] });
        }
        let values: Vec<f64> = num.iter().map(|n| n / den).collect();
        self.memo.lock().unwrap().insert(key, values.clone());
        Ok(values)
    }

    pub fn memo_len(&self) -> usize {
        self.memo.lock().unwrap().len()
    }
}

impl Clone for MultiObjectiveTransform {
    fn clone(&self) -> Self {
        Self::new(self.sample.clone(), self.bandwidth)
    }
}

impl std::fmt::Debug for MultiObjectiveTransform {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("MultiObjectiveTransform")
            .field("members", &self.sample.m())
            .field("bandwidth", &self.bandwidth)
            .finish()
    }
}

impl PartialEq for MultiObjectiveTransform {
    fn eq(&self, other: &Self) -> bool {
        self.bandwidth == other.bandwidth && self.sample == other.sample
    }
}

#[derive(Serialize, Deserialize)]
struct MemberRepr {
    id: String,
    instances: Vec<Observation>,
}

#[derive(Serialize, Deserialize)]
struct Repr {
    group: String,
    bounded: bool,
    bandwidth: BandwidthRule,
    members: Vec<MemberRepr>,
}

impl Serialize for MultiObjectiveTransform {
    fn serialize<S: Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        Repr {
            group: self.sample.group_levels()[0].to_string(),
            bounded: self.sample.is_bounded(),
            bandwidth: self.bandwidth,
            members: self
                .sample
                .members()
                .iter()
                .map(|m| MemberRepr {
                    id: m.id.clone(),
                    instances: m.instances.to_vec(),
                })
                .collect(),
        }
        .serialize(serializer)
    }
}

impl<'de> Deserialize<'de> for MultiObjectiveTransform {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> std::result::Result<Self, D::Error> {
        use serde::de::Error as _;
        let repr = Repr::deserialize(deserializer)?;
        let members = repr
            .members
            .into_iter()
            .map(|m| Member::new(m.id, &repr.group, m.instances))
            .collect::<Result<Vec<_>>>()
            .map_err(D::Error::custom)?;
        let sample = ClusteredDataset::new(members, repr.bounded).map_err(D::Error::custom)?;
        if sample.is_empty() {
            return Err(D::Error::custom("multi-objective sample is empty"));
        }
        Ok(Self::new(sample, repr.bandwidth))
    }
}
