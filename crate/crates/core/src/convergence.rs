//! Inflection detection over sorted score curves and the trailing-window
//! stability checks that end a trial loop.

use std::collections::VecDeque;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Relative slack used when comparing second differences and gaps, so that
/// rounding noise cannot split a tie.
const TIE_EPSILON: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum CurveError {
    #[error("curve needs at least {needed} points, got {got}")]
    TooShort { needed: usize, got: usize },
    #[error("curve is not sorted ascending at index {0}")]
    NotSorted(usize),
    #[error("curve contains a non-finite value at index {0}")]
    NonFinite(usize),
}

/// Scores sorted ascending, best first.
#[derive(Debug, Clone, PartialEq)]
pub struct ScoreCurve(Vec<f64>);

impl ScoreCurve {
    pub fn new(values: Vec<f64>) -> Result<Self, CurveError> {
        if values.len() < 2 {
            return Err(CurveError::TooShort {
                needed: 2,
                got: values.len(),
            });
        }
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(CurveError::NonFinite(i));
        }
        if let Some(i) = values.windows(2).position(|w| w[1] < w[0]) {
            return Err(CurveError::NotSorted(i + 1));
        }
        Ok(Self(values))
    }

    pub fn values(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

/// A detected partition point: the number of leading items kept above the knee.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Inflection {
    At(usize),
    /// No bend exists (constant or exactly linear curve).
    Degenerate,
}

/// Maximum-curvature knee on the min-max normalized curve.
///
/// Curvature is estimated by the discrete second difference. A convex bend at
/// point `j` (flat, then rising) keeps items `0..=j`; a concave bend (rising,
/// then flat) keeps `0..j`, so the partition always falls on the low side of
/// the sharp change. Ties go to the smaller partition.
pub fn find_inflection_elbow(curve: &ScoreCurve) -> Result<Inflection, CurveError> {
    let v = curve.values();
    let n = v.len();
    if n < 3 {
        return Err(CurveError::TooShort { needed: 3, got: n });
    }
    let (lo, hi) = (v[0], v[n - 1]);
    let range = hi - lo;
    if range <= 0.0 {
        return Ok(Inflection::Degenerate);
    }
    let y: Vec<f64> = v.iter().map(|x| (x - lo) / range).collect();

    let bends: Vec<(f64, usize)> = (1..n - 1)
        .map(|j| {
            let d2 = y[j + 1] - 2.0 * y[j] + y[j - 1];
            let keep = if d2 > 0.0 { j + 1 } else { j };
            (d2.abs(), keep)
        })
        .collect();
    let max = bends.iter().map(|b| b.0).fold(0.0, f64::max);
    if max <= TIE_EPSILON {
        return Ok(Inflection::Degenerate);
    }
    let keep = bends
        .iter()
        .filter(|b| b.0 >= max - TIE_EPSILON)
        .map(|b| b.1)
        .min()
        .expect("at least one bend reaches the maximum");
    Ok(Inflection::At(keep))
}

/// Largest gap between consecutive scores. Returns the number of items kept
/// before the gap; ties go to the smaller count.
pub fn find_inflection_gap(curve: &ScoreCurve) -> usize {
    let v = curve.values();
    let range = v[v.len() - 1] - v[0];
    let slack = TIE_EPSILON * range.max(1.0);
    let gaps: Vec<f64> = v.windows(2).map(|w| w[1] - w[0]).collect();
    let max = gaps.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    gaps.iter().position(|g| *g >= max - slack).expect("curve has a gap") + 1
}

/// Outcome of the trailing-window check.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Stability {
    OrderingStable,
    InflectionStable,
    None,
}

/// The last `W` rankings and partition indices; the oldest entry is evicted first.
#[derive(Debug, Clone)]
pub struct StabilityHistory<T = usize> {
    window: usize,
    rankings: VecDeque<Vec<T>>,
    inflections: VecDeque<usize>,
}

impl<T: PartialEq> StabilityHistory<T> {
    pub fn new(window: usize) -> Self {
        Self {
            window,
            rankings: VecDeque::with_capacity(window),
            inflections: VecDeque::with_capacity(window),
        }
    }

    pub fn push(&mut self, ranking: Vec<T>, inflection: usize) {
        if self.rankings.len() == self.window {
            self.rankings.pop_front();
            self.inflections.pop_front();
        }
        self.rankings.push_back(ranking);
        self.inflections.push_back(inflection);
    }

    pub fn len(&self) -> usize {
        self.rankings.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rankings.is_empty()
    }

    pub fn window(&self) -> usize {
        self.window
    }

    pub fn inflections(&self) -> impl Iterator<Item = usize> + '_ {
        self.inflections.iter().copied()
    }
}

/// Ordering stability is checked first: the last `window` rankings must be
/// identical. Otherwise the last `window` inflection indices must lie within
/// `tolerance` of each other.
pub fn check_stability<T: PartialEq>(
    history: &StabilityHistory<T>,
    window: usize,
    tolerance: usize,
) -> Stability {
    let n = history.rankings.len();
    if window == 0 || n < window {
        return Stability::None;
    }
    let rankings = history.rankings.range(n - window..);
    let first = &history.rankings[n - window];
    if rankings.clone().all(|r| r == first) {
        return Stability::OrderingStable;
    }
    let recent = history.inflections.range(n - window..);
    let lo = recent.clone().min().copied().unwrap_or(0);
    let hi = recent.max().copied().unwrap_or(0);
    if hi - lo <= tolerance {
        Stability::InflectionStable
    } else {
        Stability::None
    }
}
