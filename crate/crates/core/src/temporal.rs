//! Temporal aggregation of snippet features into a fixed-length video
//! embedding.
//!
//! Two aggregators are supported: plain temporal average pooling, and a
//! 3-tap temporal-shift multiply-accumulate followed by average pooling.
//! Shifts past either end of the sequence read zeros.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::data::{FeatureSequence, Sample};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum AggregatorKind {
    #[serde(rename = "avgpool")]
    AveragePool,
    #[serde(rename = "tsm")]
    TemporalShiftMac,
}

/// Out-of-range shift policy. Only zero fill is defined.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Boundary {
    #[default]
    ZeroFill,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AggregatorSpec {
    pub kind: AggregatorKind,
    /// `(w1, w2, w3)` applied to the row shifted from the past, the row
    /// itself, and the row shifted from the future. Ignored for pooling.
    pub weights: [f64; 3],
    pub boundary: Boundary,
}

impl AggregatorSpec {
    pub fn average_pool() -> Self {
        Self {
            kind: AggregatorKind::AveragePool,
            weights: [0.0, 1.0, 0.0],
            boundary: Boundary::ZeroFill,
        }
    }

    pub fn tsm(weights: [f64; 3]) -> Result<Self> {
        if weights.iter().any(|w| !w.is_finite()) {
            return Err(Error::InvariantViolation(format!("non-finite TSM weights {weights:?}")));
        }
        Ok(Self {
            kind: AggregatorKind::TemporalShiftMac,
            weights,
            boundary: Boundary::ZeroFill,
        })
    }
}

impl Default for AggregatorSpec {
    fn default() -> Self {
        Self::average_pool()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct VideoEmbedding {
    pub sample_id: String,
    pub vector: DVector<f64>,
}

impl VideoEmbedding {
    pub fn new(sample_id: impl Into<String>, vector: DVector<f64>) -> Self {
        Self {
            sample_id: sample_id.into(),
            vector,
        }
    }

    pub fn dim(&self) -> usize {
        self.vector.len()
    }
}

fn column_means(m: &DMatrix<f64>) -> DVector<f64> {
    let t = m.nrows() as f64;
    DVector::from_iterator(
        m.ncols(),
        m.column_iter().map(|col| col.iter().fold(0.0, |acc, x| acc + x) / t),
    )
}

/// Column means over the snippet axis.
pub fn average_pool(seq: &FeatureSequence) -> DVector<f64> {
    column_means(seq.matrix())
}

/// Returns `(X_minus, X_zero, X_plus)` where row `i` of `X_minus` is input
/// row `i - 1` and row `i` of `X_plus` is input row `i + 1`, zero-filled at
/// the ends.
pub fn shift_1d(seq: &FeatureSequence) -> (DMatrix<f64>, DMatrix<f64>, DMatrix<f64>) {
    let x = seq.matrix();
    let (t, d) = x.shape();
    let minus = DMatrix::from_fn(t, d, |i, j| if i == 0 { 0.0 } else { x[(i - 1, j)] });
    let plus = DMatrix::from_fn(t, d, |i, j| if i + 1 == t { 0.0 } else { x[(i + 1, j)] });
    (minus, x.clone(), plus)
}

/// `mean_rows(w1 * X_minus + w2 * X_zero + w3 * X_plus)`.
pub fn tsm_aggregate(seq: &FeatureSequence, weights: [f64; 3]) -> DVector<f64> {
    let (minus, zero, plus) = shift_1d(seq);
    let [w1, w2, w3] = weights;
    let y = DMatrix::from_fn(zero.nrows(), zero.ncols(), |i, j| {
        w1 * minus[(i, j)] + w2 * zero[(i, j)] + w3 * plus[(i, j)]
    });
    column_means(&y)
}

pub fn aggregate(seq: &FeatureSequence, spec: &AggregatorSpec) -> DVector<f64> {
    match spec.kind {
        AggregatorKind::AveragePool => average_pool(seq),
        AggregatorKind::TemporalShiftMac => tsm_aggregate(seq, spec.weights),
    }
}

/// Aggregates the body stream (and the hand stream when `use_hand`) and
/// concatenates them body first.
pub fn embed_video(sample: &Sample, spec: &AggregatorSpec, use_hand: bool) -> Result<VideoEmbedding> {
    let body = aggregate(&sample.body, spec);
    let vector = if use_hand {
        let hand = sample
            .hand
            .as_ref()
            .ok_or_else(|| Error::MissingHandStream(sample.sample_id.clone()))?;
        let hand = aggregate(hand, spec);
        DVector::from_iterator(body.len() + hand.len(), body.iter().chain(hand.iter()).copied())
    } else {
        body
    };
    Ok(VideoEmbedding::new(sample.sample_id.clone(), vector))
}
