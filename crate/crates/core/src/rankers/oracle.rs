use std::collections::HashMap;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{BatchOrdering, BatchRanker, BatchRequest, RankerError, TokenUsage};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum NoiseKind {
    #[default]
    None,
    /// One left-to-right pass; each adjacent pair is swapped with probability `p`.
    AdjacentSwap,
    /// With probability `p` the whole batch comes back uniformly shuffled.
    UniformShuffle,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NoiseModel {
    pub kind: NoiseKind,
    pub parameter: f64,
    pub seed: u64,
}

impl Default for NoiseModel {
    fn default() -> Self {
        Self::none()
    }
}

impl NoiseModel {
    pub fn none() -> Self {
        Self {
            kind: NoiseKind::None,
            parameter: 0.0,
            seed: 0,
        }
    }

    pub fn new(kind: NoiseKind, parameter: f64, seed: u64) -> Result<Self, RankerError> {
        if !(0.0..=1.0).contains(&parameter) {
            return Err(RankerError::Config(format!(
                "noise parameter must lie in [0, 1], got {parameter}"
            )));
        }
        Ok(Self { kind, parameter, seed })
    }
}

/// Order `ids` by ground truth (lower value is more relevant) and apply noise.
/// Returns a permutation of indices into `ids`.
pub fn oracle_rank<R: Rng + ?Sized>(
    ids: &[&str],
    ground_truth: &HashMap<String, usize>,
    kind: NoiseKind,
    parameter: f64,
    rng: &mut R,
) -> Result<Vec<usize>, RankerError> {
    let mut relevance = Vec::with_capacity(ids.len());
    for id in ids {
        match ground_truth.get(*id) {
            Some(r) => relevance.push(*r),
            None => return Err(RankerError::UnknownDocument(id.to_string())),
        }
    }
    let mut order: Vec<usize> = (0..ids.len()).collect();
    order.sort_by_key(|&i| relevance[i]);
    match kind {
        NoiseKind::None => {}
        NoiseKind::AdjacentSwap => {
            for i in 0..order.len().saturating_sub(1) {
                if rng.random_bool(parameter) {
                    order.swap(i, i + 1);
                }
            }
        }
        NoiseKind::UniformShuffle => {
            if rng.random_bool(parameter) {
                order.shuffle(rng);
            }
        }
    }
    Ok(order)
}

/// Ranker backed by a known total order, for simulation and testing.
///
/// The noise generator for each call is derived from the model seed and the
/// request's keys, so results do not depend on how calls interleave across
/// threads.
#[derive(Debug, Clone)]
pub struct OracleRanker {
    ground_truth: HashMap<String, usize>,
    noise: NoiseModel,
}

impl OracleRanker {
    /// `order` lists ids from most to least relevant.
    pub fn new<I, S>(order: I, noise: NoiseModel) -> Self
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        let ground_truth = order
            .into_iter()
            .enumerate()
            .map(|(rank, id)| (id.into(), rank))
            .collect();
        Self { ground_truth, noise }
    }

    pub fn noiseless<I, S>(order: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        Self::new(order, NoiseModel::none())
    }

    pub fn ground_truth(&self) -> &HashMap<String, usize> {
        &self.ground_truth
    }

    fn request_rng(&self, request: &BatchRequest<'_>) -> ChaCha8Rng {
        // FNV-1a; stable across platforms and toolchains
        let mut h: u64 = 0xcbf2_9ce4_8422_2325;
        let mut feed = |bytes: &[u8]| {
            for b in bytes {
                h ^= u64::from(*b);
                h = h.wrapping_mul(0x0000_0100_0000_01b3);
            }
        };
        for entry in &request.entries {
            feed(entry.key.as_bytes());
            feed(&[0xff]);
        }
        feed(&request.attempt.to_le_bytes());
        ChaCha8Rng::seed_from_u64(self.noise.seed ^ h)
    }
}

impl BatchRanker for OracleRanker {
    fn rank_batch(&self, request: &BatchRequest<'_>) -> Result<BatchOrdering, RankerError> {
        let ids: Vec<&str> = request.entries.iter().map(|e| e.id).collect();
        let mut rng = self.request_rng(request);
        let order = oracle_rank(&ids, &self.ground_truth, self.noise.kind, self.noise.parameter, &mut rng)?;
        Ok(BatchOrdering {
            ordered_keys: order.into_iter().map(|i| request.entries[i].key.clone()).collect(),
            reasoning: None,
            usage: TokenUsage::default(),
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rankers::BatchEntry;

    fn truth(order: &[&str]) -> HashMap<String, usize> {
        order.iter().enumerate().map(|(i, s)| (s.to_string(), i)).collect()
    }

    #[test]
    fn noiseless_sorts_by_truth() {
        let gt = truth(&["z", "y", "x"]);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let order = oracle_rank(&["x", "y", "z"], &gt, NoiseKind::None, 0.0, &mut rng).unwrap();
        assert_eq!(order, [2, 1, 0]);
    }

    #[test]
    fn forced_adjacent_swap() {
        let gt = truth(&["a", "b"]);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let order = oracle_rank(&["a", "b"], &gt, NoiseKind::AdjacentSwap, 1.0, &mut rng).unwrap();
        assert_eq!(order, [1, 0]);
    }

    #[test]
    fn unknown_id_is_an_error() {
        let gt = truth(&["a"]);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        assert!(matches!(
            oracle_rank(&["a", "q"], &gt, NoiseKind::None, 0.0, &mut rng),
            Err(RankerError::UnknownDocument(id)) if id == "q"
        ));
    }

    #[test]
    fn parameter_bounds() {
        assert!(NoiseModel::new(NoiseKind::AdjacentSwap, 1.5, 0).is_err());
        assert!(NoiseModel::new(NoiseKind::AdjacentSwap, -0.1, 0).is_err());
        assert!(NoiseModel::new(NoiseKind::UniformShuffle, 1.0, 0).is_ok());
    }

    #[test]
    fn adjacent_swap_rate_matches_parameter() {
        // In a single left-to-right pass the element originally at i+1 ends
        // up ahead of position i+1 exactly when pair i was swapped, so the
        // per-pair decision is observable from the output alone.
        let ids: Vec<String> = (0..10).map(|i| format!("d{i}")).collect();
        let refs: Vec<&str> = ids.iter().map(String::as_str).collect();
        let gt: HashMap<String, usize> = ids.iter().cloned().enumerate().map(|(i, s)| (s, i)).collect();
        let mut rng = ChaCha8Rng::seed_from_u64(2024);
        let (mut swaps, mut pairs) = (0u64, 0u64);
        for _ in 0..10_000 {
            let order = oracle_rank(&refs, &gt, NoiseKind::AdjacentSwap, 0.2, &mut rng).unwrap();
            let mut pos = [0usize; 10];
            for (p, &i) in order.iter().enumerate() {
                pos[i] = p;
            }
            for i in 0..9 {
                pairs += 1;
                if pos[i + 1] < i + 1 {
                    swaps += 1;
                }
            }
        }
        let rate = swaps as f64 / pairs as f64;
        assert!((rate - 0.2).abs() <= 0.01, "rate {rate}");
    }

    #[test]
    fn ranker_is_deterministic_per_request() {
        let ranker = OracleRanker::new(["a", "b", "c", "d"], NoiseModel::new(NoiseKind::UniformShuffle, 0.5, 9).unwrap());
        let req = BatchRequest {
            query: "q",
            entries: ["d", "c", "b", "a"]
                .iter()
                .enumerate()
                .map(|(i, id)| BatchEntry { key: format!("k{i}"), id, text: "t" })
                .collect(),
            attempt: 0,
        };
        let first = ranker.rank_batch(&req).unwrap();
        for _ in 0..5 {
            assert_eq!(ranker.rank_batch(&req).unwrap(), first);
        }
        let mut sorted = first.ordered_keys.clone();
        sorted.sort();
        assert_eq!(sorted, ["k0", "k1", "k2", "k3"]);
    }

    #[test]
    fn batch_of_one() {
        let ranker = OracleRanker::noiseless(["a"]);
        let req = BatchRequest {
            query: "q",
            entries: vec![BatchEntry { key: "only".into(), id: "a", text: "t" }],
            attempt: 0,
        };
        assert_eq!(ranker.rank_batch(&req).unwrap().ordered_keys, ["only"]);
    }
}
