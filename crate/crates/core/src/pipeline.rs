//! End-to-end helpers shared by the command line and the tests: fit any
//! method on a dataset, then score an evaluation scope.

use serde::{Deserialize, Serialize};

use crate::class_embed::EmbeddingMode;
use crate::data::{Dataset, EvalScope, SplitMode};
use crate::error::{Error, Result};
use crate::eval::{gzsl_report, topk_accuracy, EvalReport};
use crate::temporal::{embed_video, AggregatorSpec, VideoEmbedding};
use crate::zsl::{predict, train_eszsl, train_lle, train_sae, CompatModel, Method, Prediction, TrainConfig, TrainingSet};

/// Everything that decides how a model is fitted.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FitConfig {
    pub method: Method,
    pub mode: EmbeddingMode,
    pub train: TrainConfig,
    /// ESZSL ridge on the video side; its attribute-side ridge is `train.lambda`.
    pub gamma: f64,
    pub lambda_sae: f64,
}

impl FitConfig {
    pub fn lle(mode: EmbeddingMode, train: TrainConfig) -> Self {
        Self {
            method: Method::Lle,
            mode,
            train,
            gamma: 1e-3,
            lambda_sae: 1e-3,
        }
    }
}

#[derive(Debug, Clone)]
pub struct Fit {
    pub model: CompatModel,
    /// Loss per epoch, starting with the initial loss. Empty for the
    /// closed-form methods.
    pub loss_log: Vec<f64>,
}

pub fn fit(set: &TrainingSet, cfg: &FitConfig) -> Result<Fit> {
    match cfg.method {
        Method::Lle => {
            let f = train_lle(set, cfg.mode, &cfg.train)?;
            Ok(Fit {
                model: f.model,
                loss_log: f.loss_log,
            })
        }
        Method::Eszsl => {
            let mut model = train_eszsl(set, cfg.mode, cfg.gamma, cfg.train.lambda)?;
            model.seed = cfg.train.seed;
            Ok(Fit {
                model,
                loss_log: Vec::new(),
            })
        }
        Method::Sae => {
            let mut model = train_sae(set, cfg.mode, cfg.lambda_sae)?;
            model.seed = cfg.train.seed;
            Ok(Fit {
                model,
                loss_log: Vec::new(),
            })
        }
    }
}

/// Predictions for one scope with the matching report.
#[derive(Debug, Clone)]
pub struct Evaluation {
    pub predictions: Vec<Prediction>,
    pub truths: Vec<String>,
    pub report: EvalReport,
}

pub fn embed_scope(
    dataset: &Dataset,
    scope: EvalScope,
    spec: &AggregatorSpec,
    use_hand: bool,
) -> Result<Vec<(VideoEmbedding, String)>> {
    dataset
        .evaluation_samples(scope)
        .into_iter()
        .map(|s| Ok((embed_video(s, spec, use_hand)?, s.class_id.clone())))
        .collect()
}

/// Ranks every candidate of `scope` for every evaluation sample.
pub fn predict_scope(
    model: &CompatModel,
    dataset: &Dataset,
    scope: EvalScope,
    spec: &AggregatorSpec,
    use_hand: bool,
) -> Result<(Vec<Prediction>, Vec<String>)> {
    let candidates = dataset.candidates(scope)?;
    if candidates.is_empty() {
        return Err(Error::EmptyCandidates);
    }
    let embedded = model.embed_classes(candidates)?;
    let mut predictions = Vec::new();
    let mut truths = Vec::new();
    for (phi, truth) in embed_scope(dataset, scope, spec, use_hand)? {
        predictions.push(predict(&phi, model, &embedded)?);
        truths.push(truth);
    }
    Ok((predictions, truths))
}

pub fn evaluate(
    model: &CompatModel,
    dataset: &Dataset,
    scope: EvalScope,
    spec: &AggregatorSpec,
    use_hand: bool,
    ks: &[usize],
) -> Result<Evaluation> {
    let (predictions, truths) = predict_scope(model, dataset, scope, spec, use_hand)?;
    let rankings: Vec<Vec<String>> = predictions.iter().map(Prediction::ranked_ids).collect();
    let report = match (scope, dataset.split.mode) {
        (EvalScope::Test, SplitMode::Gzsl) => gzsl_report(&rankings, &truths, &dataset.split, ks)?,
        _ => topk_accuracy(&rankings, &truths, ks)?,
    };
    Ok(Evaluation {
        predictions,
        truths,
        report,
    })
}
