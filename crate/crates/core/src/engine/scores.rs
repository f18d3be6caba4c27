use std::collections::{BTreeMap, BTreeSet};

use crate::config::Statistic;

/// Batch positions observed in one trial, keyed by corpus index.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct TrialRecord {
    pub trial: usize,
    /// 1-based position within the document's batch.
    pub positions: BTreeMap<usize, u32>,
}

impl TrialRecord {
    pub fn new(trial: usize) -> Self {
        Self {
            trial,
            positions: BTreeMap::new(),
        }
    }

    pub fn participation(&self) -> BTreeSet<usize> {
        self.positions.keys().copied().collect()
    }
}

/// Running per-document statistic over the positions recorded so far.
///
/// Scores average over the trials a document actually took part in, so a
/// document left out of a trial is not charged a phantom position.
#[derive(Debug, Clone)]
pub struct ScoreBoard {
    statistic: Statistic,
    history: Vec<Vec<u32>>,
}

impl ScoreBoard {
    /// A board for corpus indices `0..capacity`.
    pub fn new(capacity: usize, statistic: Statistic) -> Self {
        Self {
            statistic,
            history: vec![Vec::new(); capacity],
        }
    }

    pub fn statistic(&self) -> Statistic {
        self.statistic
    }

    pub fn update(&mut self, record: &TrialRecord) {
        for (&doc, &pos) in &record.positions {
            self.history[doc].push(pos);
        }
    }

    pub fn exposure(&self, doc: usize) -> usize {
        self.history[doc].len()
    }

    pub fn positions(&self, doc: usize) -> &[u32] {
        &self.history[doc]
    }

    /// `None` until the document has been ranked at least once.
    pub fn score(&self, doc: usize) -> Option<f64> {
        aggregate(&self.history[doc], self.statistic)
    }
}

/// Pure functional form of [`ScoreBoard::update`].
pub fn update_scores(mut board: ScoreBoard, record: &TrialRecord) -> ScoreBoard {
    board.update(record);
    board
}

/// Mean, or median (average of the two middle values for even counts).
pub fn aggregate(positions: &[u32], statistic: Statistic) -> Option<f64> {
    if positions.is_empty() {
        return None;
    }
    Some(match statistic {
        Statistic::Mean => positions.iter().map(|&p| f64::from(p)).sum::<f64>() / positions.len() as f64,
        Statistic::Median => {
            let mut sorted = positions.to_vec();
            sorted.sort_unstable();
            let mid = sorted.len() / 2;
            if sorted.len() % 2 == 1 {
                f64::from(sorted[mid])
            } else {
                (f64::from(sorted[mid - 1]) + f64::from(sorted[mid])) / 2.0
            }
        }
    })
}
