//! Bilinear compatibility models `F(v, c) = φ(v)ᵀ W ρ(c)`.
//!
//! Three trainers produce a [`CompatModel`]: [`lle::train_lle`] (softmax
//! cross-entropy with an l2 penalty on `W`, optionally learning the text
//! reduction jointly), [`closed_form::train_eszsl`] and
//! [`closed_form::train_sae`]. All three are applied the same way.
//!
//! Posteriors `p(c | v)` are the softmax of compatibility scores over the
//! active candidate set. The attribute analyses in [`crate::influence`]
//! are defined on top of this.

pub mod closed_form;
pub mod io;
pub mod lle;

use std::cmp::Ordering;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::class_embed::{compose_embedding, ClassEmbedding, EmbeddingMode, ReductionMatrix};
use crate::data::{ClassDescriptor, Dataset};
use crate::error::{Error, Result};
use crate::temporal::{embed_video, AggregatorSpec, VideoEmbedding};

pub use closed_form::{train_eszsl, train_sae};
pub use io::{load_model, save_model};
pub use lle::{train_lle, TrainConfig};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    Lle,
    Eszsl,
    Sae,
}

impl std::str::FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "lle" => Ok(Method::Lle),
            "eszsl" => Ok(Method::Eszsl),
            "sae" => Ok(Method::Sae),
            other => Err(Error::Unsupported(format!("unknown method {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Hyperparams {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lambda: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gamma: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lambda_sae: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub learning_rate: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub init_scale: Option<f64>,
}

/// Trained compatibility model.
#[derive(Debug, Clone, PartialEq)]
pub struct CompatModel {
    pub method: Method,
    pub mode: EmbeddingMode,
    /// `d × t`.
    pub w: DMatrix<f64>,
    /// Learned text reduction, present iff the mode reduces text.
    pub reduction: Option<ReductionMatrix>,
    pub text_dim: usize,
    pub hyperparams: Hyperparams,
    pub seed: u64,
    pub epochs: usize,
    pub final_loss: f64,
}

impl CompatModel {
    /// Video embedding length.
    pub fn d(&self) -> usize {
        self.w.nrows()
    }

    /// Class embedding length.
    pub fn t(&self) -> usize {
        self.w.ncols()
    }

    /// Number of attribute coordinates at the front of `ρ(c)`.
    pub fn attribute_count(&self) -> usize {
        self.mode.attribute_block(self.t())
    }

    pub fn embed_class(&self, c: &ClassDescriptor) -> Result<ClassEmbedding> {
        let e = compose_embedding(c, &self.mode, self.reduction.as_ref())?;
        if e.dim() != self.t() {
            return Err(Error::DimensionMismatch(format!(
                "class {} embeds to {} dims, model expects {}",
                c.class_id,
                e.dim(),
                self.t()
            )));
        }
        Ok(e)
    }

    pub fn embed_classes<'a>(&self, classes: impl IntoIterator<Item = &'a ClassDescriptor>) -> Result<Vec<ClassEmbedding>> {
        classes.into_iter().map(|c| self.embed_class(c)).collect()
    }

    /// `Wᵀφ`, the vector every candidate embedding is dotted with.
    pub fn project(&self, phi: &VideoEmbedding) -> Result<DVector<f64>> {
        if phi.dim() != self.d() {
            return Err(Error::DimensionMismatch(format!(
                "video embedding {} has {} dims, model expects {}",
                phi.sample_id,
                phi.dim(),
                self.d()
            )));
        }
        Ok(self.w.tr_mul(&phi.vector))
    }
}

/// `φᵀ W ρ`.
pub fn compatibility(phi: &VideoEmbedding, model: &CompatModel, rho: &ClassEmbedding) -> Result<f64> {
    let projected = model.project(phi)?;
    dot_checked(&projected, rho)
}

fn dot_checked(projected: &DVector<f64>, rho: &ClassEmbedding) -> Result<f64> {
    if rho.dim() != projected.len() {
        return Err(Error::DimensionMismatch(format!(
            "class embedding {} has {} dims, model expects {}",
            rho.class_id,
            rho.dim(),
            projected.len()
        )));
    }
    Ok(projected.dot(&rho.vector))
}

/// Compatibility scores against each candidate, in candidate order.
pub fn scores(phi: &VideoEmbedding, model: &CompatModel, candidates: &[ClassEmbedding]) -> Result<Vec<f64>> {
    if candidates.is_empty() {
        return Err(Error::EmptyCandidates);
    }
    let projected = model.project(phi)?;
    candidates.iter().map(|c| dot_checked(&projected, c)).collect()
}

/// Max-shifted log-sum-exp.
pub fn log_sum_exp(scores: &[f64]) -> f64 {
    let max = scores.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !max.is_finite() {
        return max;
    }
    max + scores.iter().map(|s| (s - max).exp()).sum::<f64>().ln()
}

pub fn softmax(scores: &[f64]) -> Vec<f64> {
    let max = scores.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = scores.iter().map(|s| (s - max).exp()).collect();
    let total: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / total).collect()
}

pub fn log_softmax(scores: &[f64]) -> Vec<f64> {
    let lse = log_sum_exp(scores);
    scores.iter().map(|s| s - lse).collect()
}

/// `p(c | v)` for every candidate.
pub fn posteriors(phi: &VideoEmbedding, model: &CompatModel, candidates: &[ClassEmbedding]) -> Result<Vec<f64>> {
    Ok(softmax(&scores(phi, model, candidates)?))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankedClass {
    pub class_id: String,
    pub score: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Prediction {
    pub sample_id: String,
    pub class_id: String,
    /// Every candidate, best first.
    pub ranking: Vec<RankedClass>,
}

impl Prediction {
    pub fn ranked_ids(&self) -> Vec<String> {
        self.ranking.iter().map(|r| r.class_id.clone()).collect()
    }
}

/// Orders candidates by descending score; equal scores go to the
/// lexicographically smaller class id.
pub fn rank(ids: &[&str], scores: &[f64]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..ids.len()).collect();
    order.sort_by(|&a, &b| {
        // `==` first so that 0.0 and -0.0 count as a tie.
        let by_score = if scores[a] == scores[b] {
            Ordering::Equal
        } else {
            scores[b].total_cmp(&scores[a])
        };
        by_score.then_with(|| ids[a].cmp(ids[b]))
    });
    order
}

/// Argmax of compatibility over the candidates with the full ranking.
pub fn predict(phi: &VideoEmbedding, model: &CompatModel, candidates: &[ClassEmbedding]) -> Result<Prediction> {
    let s = scores(phi, model, candidates)?;
    let ids: Vec<&str> = candidates.iter().map(|c| c.class_id.as_str()).collect();
    let ranking: Vec<RankedClass> = rank(&ids, &s)
        .into_iter()
        .map(|i| RankedClass {
            class_id: ids[i].to_string(),
            score: s[i],
        })
        .collect();
    Ok(Prediction {
        sample_id: phi.sample_id.clone(),
        class_id: ranking[0].class_id.clone(),
        ranking,
    })
}

/// Video embeddings and class labels for the seen classes.
#[derive(Debug, Clone)]
pub struct TrainingSet {
    pub phis: Vec<VideoEmbedding>,
    /// Index into `classes` per sample.
    pub labels: Vec<usize>,
    /// Seen classes ordered by id.
    pub classes: Vec<ClassDescriptor>,
}

impl TrainingSet {
    pub fn new(phis: Vec<VideoEmbedding>, label_ids: &[String], classes: Vec<ClassDescriptor>) -> Result<Self> {
        if phis.is_empty() {
            return Err(Error::DegenerateData("no training samples".into()));
        }
        if phis.len() != label_ids.len() {
            return Err(Error::DimensionMismatch(format!(
                "{} embeddings but {} labels",
                phis.len(),
                label_ids.len()
            )));
        }
        let d = phis[0].dim();
        if let Some(bad) = phis.iter().find(|p| p.dim() != d) {
            return Err(Error::DimensionMismatch(format!(
                "sample {} has {} dims, expected {d}",
                bad.sample_id,
                bad.dim()
            )));
        }
        let labels = label_ids
            .iter()
            .map(|id| {
                classes
                    .iter()
                    .position(|c| &c.class_id == id)
                    .ok_or_else(|| Error::DegenerateData(format!("training sample class {id} is not a seen class")))
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Self { phis, labels, classes })
    }

    /// Embeds every non-held-out seen-class sample of `dataset`.
    pub fn from_dataset(dataset: &Dataset, spec: &AggregatorSpec, use_hand: bool) -> Result<Self> {
        let samples = dataset.training_samples();
        let phis = samples
            .iter()
            .map(|s| embed_video(s, spec, use_hand))
            .collect::<Result<Vec<_>>>()?;
        let labels: Vec<String> = samples.iter().map(|s| s.class_id.clone()).collect();
        let classes = dataset.seen_classes()?.into_iter().cloned().collect();
        Self::new(phis, &labels, classes)
    }

    pub fn len(&self) -> usize {
        self.phis.len()
    }

    pub fn is_empty(&self) -> bool {
        self.phis.is_empty()
    }

    pub fn video_dim(&self) -> usize {
        self.phis[0].dim()
    }

    pub fn text_dim(&self) -> usize {
        self.classes.first().map_or(0, ClassDescriptor::text_dim)
    }

    pub fn attribute_count(&self) -> usize {
        self.classes.first().map_or(0, ClassDescriptor::attribute_count)
    }

    /// `d × N`, one column per sample.
    pub fn video_matrix(&self) -> DMatrix<f64> {
        let d = self.video_dim();
        DMatrix::from_fn(d, self.len(), |i, n| self.phis[n].vector[i])
    }
}
