//! Flip-difference attribute analysis.
//!
//! Binary attributes admit no derivative, so influence is measured by
//! toggling attribute `k` of one class at inference time and recording the
//! change:
//!
//! * for a correct prediction of class `c`, `p(c|v) − p(c|v; flipped)`;
//! * for a confusion of ground truth `c°` as `c*`, the change in the
//!   log-ratio `log p(c*|v) − log p(c°|v)` when attribute `k` of `c*` is
//!   flipped. Because only `c*`'s score moves, this equals
//!   `F(v, c*) − F(v, c*; flipped)`.
//!
//! Posteriors are the softmax over the candidate set in use.

use std::collections::BTreeMap;

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use crate::class_embed::{flip_attribute, ClassEmbedding};
use crate::data::ClassDescriptor;
use crate::error::{Error, Result};
use crate::temporal::VideoEmbedding;
use crate::zsl::{log_softmax, predict, softmax, CompatModel};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InfluenceKind {
    CorrectConfidence,
    ConfusionLogRatio,
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Subject {
    Class { class: String },
    Confusion { ground_truth: String, predicted: String },
}

impl Subject {
    pub fn label(&self) -> String {
        match self {
            Subject::Class { class } => class.clone(),
            Subject::Confusion { ground_truth, predicted } => format!("{ground_truth}->{predicted}"),
        }
    }

    /// Class whose attributes were flipped for this row.
    pub fn flipped_class(&self) -> &str {
        match self {
            Subject::Class { class } => class,
            Subject::Confusion { predicted, .. } => predicted,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InfluenceRow {
    pub subject: Subject,
    /// One averaged influence per attribute.
    pub scores: Vec<f64>,
    /// Samples averaged over.
    pub support: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InfluenceReport {
    pub kind: InfluenceKind,
    pub attribute_names: Vec<String>,
    pub rows: Vec<InfluenceRow>,
    /// Classes with no correctly classified sample (correct-confidence
    /// reports only).
    #[serde(default)]
    pub omitted: Vec<String>,
}

/// A test sample reduced to what the analyses need.
#[derive(Debug, Clone)]
pub struct ScoredSample {
    pub phi: VideoEmbedding,
    pub truth: String,
}

fn require_attributes(model: &CompatModel, k: usize) -> Result<()> {
    if !model.mode.has_attributes() {
        return Err(Error::ModeWithoutAttributes);
    }
    let len = model.attribute_count();
    if k >= len {
        return Err(Error::IndexOutOfRange { index: k, len });
    }
    Ok(())
}

fn position(candidates: &[ClassDescriptor], class_id: &str) -> Result<usize> {
    candidates
        .iter()
        .position(|c| c.class_id == class_id)
        .ok_or_else(|| Error::UnknownClass(class_id.to_string()))
}

/// Candidate embeddings plus the flipped embedding of every
/// (candidate, attribute) pair, computed once and reused across samples.
struct FlipTable {
    base: Vec<ClassEmbedding>,
    /// `flipped[j][k]` is candidate `j` with attribute `k` toggled.
    flipped: Vec<Vec<DVector<f64>>>,
}

impl FlipTable {
    fn new(model: &CompatModel, candidates: &[ClassDescriptor], which: &[usize]) -> Result<Self> {
        if candidates.is_empty() {
            return Err(Error::EmptyCandidates);
        }
        if !model.mode.has_attributes() {
            return Err(Error::ModeWithoutAttributes);
        }
        let base = model.embed_classes(candidates)?;
        let a = model.attribute_count();
        let mut flipped = vec![Vec::new(); candidates.len()];
        for &j in which {
            flipped[j] = (0..a)
                .map(|k| Ok(model.embed_class(&flip_attribute(&candidates[j], k)?)?.vector))
                .collect::<Result<_>>()?;
        }
        Ok(Self { base, flipped })
    }
}

/// Raw scores for one sample with the unflipped candidates.
fn base_scores(projected: &DVector<f64>, table: &FlipTable) -> Vec<f64> {
    table.base.iter().map(|e| projected.dot(&e.vector)).collect()
}

fn correct_influence(projected: &DVector<f64>, scores: &[f64], j: usize, flipped: &DVector<f64>) -> f64 {
    let before = softmax(scores)[j];
    let mut moved = scores.to_vec();
    moved[j] = projected.dot(flipped);
    before - softmax(&moved)[j]
}

fn confusion_influence(projected: &DVector<f64>, scores: &[f64], star: usize, origin: usize, flipped: &DVector<f64>) -> f64 {
    let before = log_ratio_of(scores, star, origin);
    let mut moved = scores.to_vec();
    moved[star] = projected.dot(flipped);
    before - log_ratio_of(&moved, star, origin)
}

fn log_ratio_of(scores: &[f64], star: usize, origin: usize) -> f64 {
    let logp = log_softmax(scores);
    logp[star] - logp[origin]
}

/// `p(c|v) − p(c|v; attribute k of c flipped)` over `candidates`.
pub fn flip_influence_correct(
    model: &CompatModel,
    phi: &VideoEmbedding,
    class_id: &str,
    k: usize,
    candidates: &[ClassDescriptor],
) -> Result<f64> {
    require_attributes(model, k)?;
    let j = position(candidates, class_id)?;
    let projected = model.project(phi)?;
    let base = model.embed_classes(candidates)?;
    let scores: Vec<f64> = base.iter().map(|e| projected.dot(&e.vector)).collect();
    let flipped = model.embed_class(&flip_attribute(&candidates[j], k)?)?;
    Ok(correct_influence(&projected, &scores, j, &flipped.vector))
}

/// `log p(c*|v) − log p(c°|v)`.
pub fn log_ratio(
    model: &CompatModel,
    phi: &VideoEmbedding,
    c_star: &str,
    c_origin: &str,
    candidates: &[ClassDescriptor],
) -> Result<f64> {
    if candidates.is_empty() {
        return Err(Error::EmptyCandidates);
    }
    let star = position(candidates, c_star)?;
    let origin = position(candidates, c_origin)?;
    let projected = model.project(phi)?;
    let scores: Vec<f64> = model
        .embed_classes(candidates)?
        .iter()
        .map(|e| projected.dot(&e.vector))
        .collect();
    Ok(log_ratio_of(&scores, star, origin))
}

/// Change in `log p(c*|v) / p(c°|v)` when attribute `k` of `c*` is flipped.
pub fn flip_influence_confusion(
    model: &CompatModel,
    phi: &VideoEmbedding,
    c_star: &str,
    c_origin: &str,
    k: usize,
    candidates: &[ClassDescriptor],
) -> Result<f64> {
    require_attributes(model, k)?;
    let star = position(candidates, c_star)?;
    let origin = position(candidates, c_origin)?;
    let projected = model.project(phi)?;
    let scores: Vec<f64> = model
        .embed_classes(candidates)?
        .iter()
        .map(|e| projected.dot(&e.vector))
        .collect();
    let flipped = model.embed_class(&flip_attribute(&candidates[star], k)?)?;
    Ok(confusion_influence(&projected, &scores, star, origin, &flipped.vector))
}

/// Per-class mean correct-confidence influence over the correctly
/// classified samples of each class in `classes`. Classes without a correct
/// sample are listed in `omitted`.
pub fn class_influence_matrix(
    model: &CompatModel,
    samples: &[ScoredSample],
    classes: &[String],
    candidates: &[ClassDescriptor],
    attribute_names: &[String],
) -> Result<InfluenceReport> {
    let targets: Vec<usize> = classes
        .iter()
        .map(|c| position(candidates, c))
        .collect::<Result<_>>()?;
    let table = FlipTable::new(model, candidates, &targets)?;
    let a = model.attribute_count();

    let mut sums: BTreeMap<usize, (Vec<f64>, usize)> = BTreeMap::new();
    for sample in samples {
        let Some(j) = targets.iter().copied().find(|&j| candidates[j].class_id == sample.truth) else {
            continue;
        };
        let prediction = predict(&sample.phi, model, &table.base)?;
        if prediction.class_id != sample.truth {
            continue;
        }
        let projected = model.project(&sample.phi)?;
        let scores = base_scores(&projected, &table);
        let entry = sums.entry(j).or_insert_with(|| (vec![0.0; a], 0));
        for (k, acc) in entry.0.iter_mut().enumerate() {
            *acc += correct_influence(&projected, &scores, j, &table.flipped[j][k]);
        }
        entry.1 += 1;
    }

    let mut rows = Vec::new();
    let mut omitted = Vec::new();
    let mut ordered: Vec<usize> = targets.clone();
    ordered.sort_by(|&x, &y| candidates[x].class_id.cmp(&candidates[y].class_id));
    ordered.dedup();
    for j in ordered {
        match sums.remove(&j) {
            Some((total, n)) => rows.push(InfluenceRow {
                subject: Subject::Class {
                    class: candidates[j].class_id.clone(),
                },
                scores: total.into_iter().map(|s| s / n as f64).collect(),
                support: n,
            }),
            None => omitted.push(candidates[j].class_id.clone()),
        }
    }
    Ok(InfluenceReport {
        kind: InfluenceKind::CorrectConfidence,
        attribute_names: attribute_names.to_vec(),
        rows,
        omitted,
    })
}

/// Mean influence of one attribute over the report classes that carry it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AffiliationSummary {
    pub attribute: usize,
    pub name: String,
    pub mean_influence: f64,
    pub n_classes: usize,
}

/// For every attribute set in at least `min_affiliation` of the report's
/// classes, the mean of that attribute's influence over exactly those
/// classes. Other attributes are left out.
pub fn positive_affiliation_summary(
    report: &InfluenceReport,
    classes: &[ClassDescriptor],
    min_affiliation: usize,
) -> Result<Vec<AffiliationSummary>> {
    let a = report.attribute_names.len();
    let mut out = Vec::new();
    for k in 0..a {
        let mut total = 0.0;
        let mut n = 0;
        for row in &report.rows {
            let class_id = row.subject.flipped_class();
            let class = classes
                .iter()
                .find(|c| c.class_id == class_id)
                .ok_or_else(|| Error::UnknownClass(class_id.to_string()))?;
            if class.has_attribute(k) {
                total += row.scores[k];
                n += 1;
            }
        }
        if n >= min_affiliation && n > 0 {
            out.push(AffiliationSummary {
                attribute: k,
                name: report.attribute_names[k].clone(),
                mean_influence: total / n as f64,
                n_classes: n,
            });
        }
    }
    Ok(out)
}

/// Mean confusion influence per attribute for the `top_n` most frequent
/// (ground truth, predicted) pairs. Pairs are ranked by count, then by
/// `(ground truth, predicted)` ascending.
pub fn confusion_influence_matrix(
    model: &CompatModel,
    samples: &[ScoredSample],
    candidates: &[ClassDescriptor],
    top_n: usize,
    attribute_names: &[String],
) -> Result<InfluenceReport> {
    if candidates.is_empty() {
        return Err(Error::EmptyCandidates);
    }
    if !model.mode.has_attributes() {
        return Err(Error::ModeWithoutAttributes);
    }
    let base = model.embed_classes(candidates)?;

    let mut confusions: BTreeMap<(usize, usize), Vec<usize>> = BTreeMap::new();
    for (i, sample) in samples.iter().enumerate() {
        let origin = position(candidates, &sample.truth)?;
        let prediction = predict(&sample.phi, model, &base)?;
        let star = position(candidates, &prediction.class_id)?;
        if star != origin {
            confusions.entry((origin, star)).or_default().push(i);
        }
    }
    if confusions.is_empty() {
        return Err(Error::NoMisclassifications);
    }
    let mut ranked: Vec<((usize, usize), Vec<usize>)> = confusions.into_iter().collect();
    ranked.sort_by(|(pa, sa), (pb, sb)| {
        sb.len().cmp(&sa.len()).then_with(|| {
            let key = |(o, s): (usize, usize)| (&candidates[o].class_id, &candidates[s].class_id);
            key(*pa).cmp(&key(*pb))
        })
    });
    ranked.truncate(top_n);

    let stars: Vec<usize> = ranked.iter().map(|((_, s), _)| *s).collect();
    let table = FlipTable::new(model, candidates, &stars)?;
    let a = model.attribute_count();
    let mut rows = Vec::with_capacity(ranked.len());
    for ((origin, star), members) in ranked {
        let mut totals = vec![0.0; a];
        for &i in &members {
            let projected = model.project(&samples[i].phi)?;
            let scores = base_scores(&projected, &table);
            for (k, acc) in totals.iter_mut().enumerate() {
                *acc += confusion_influence(&projected, &scores, star, origin, &table.flipped[star][k]);
            }
        }
        rows.push(InfluenceRow {
            subject: Subject::Confusion {
                ground_truth: candidates[origin].class_id.clone(),
                predicted: candidates[star].class_id.clone(),
            },
            scores: totals.into_iter().map(|s| s / members.len() as f64).collect(),
            support: members.len(),
        });
    }
    Ok(InfluenceReport {
        kind: InfluenceKind::ConfusionLogRatio,
        attribute_names: attribute_names.to_vec(),
        rows,
        omitted: Vec::new(),
    })
}

/// Boolean companion matrix: whether the flipped class of each row carries
/// each attribute.
pub fn affiliation_matrix(report: &InfluenceReport, classes: &[ClassDescriptor]) -> Result<Vec<Vec<bool>>> {
    report
        .rows
        .iter()
        .map(|row| {
            let id = row.subject.flipped_class();
            let class = classes
                .iter()
                .find(|c| c.class_id == id)
                .ok_or_else(|| Error::UnknownClass(id.to_string()))?;
            Ok((0..report.attribute_names.len()).map(|k| class.has_attribute(k)).collect())
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::class_embed::{EmbeddingKind, EmbeddingMode};
    use crate::rng;
    use crate::zsl::{compatibility, posteriors, Hyperparams, Method};
    use nalgebra::DMatrix;

    fn model(w: DMatrix<f64>, mode: EmbeddingMode) -> CompatModel {
        CompatModel {
            method: Method::Lle,
            mode,
            w,
            reduction: None,
            text_dim: 2,
            hyperparams: Hyperparams::default(),
            seed: 0,
            epochs: 0,
            final_loss: 0.0,
        }
    }

    fn class(id: &str, attrs: &[f64]) -> ClassDescriptor {
        ClassDescriptor::new(id, id, attrs.to_vec(), vec![1.0, 0.0]).unwrap()
    }

    fn phi(v: &[f64]) -> VideoEmbedding {
        VideoEmbedding::new("v", DVector::from_column_slice(v))
    }

    fn three_classes() -> Vec<ClassDescriptor> {
        vec![
            class("a", &[1.0, 0.0, 1.0]),
            class("b", &[0.0, 1.0, 1.0]),
            class("c", &[1.0, 1.0, 0.0]),
        ]
    }

    #[test]
    fn zero_weight_attribute_has_zero_influence() {
        let mut w = DMatrix::from_row_slice(2, 3, &[0.5, -1.0, 0.0, 2.0, 0.3, 0.0]);
        w[(0, 2)] = 0.0;
        let m = model(w, EmbeddingMode::attr_only());
        let cands = three_classes();
        for c in ["a", "b", "c"] {
            assert_eq!(flip_influence_correct(&m, &phi(&[1.0, 2.0]), c, 2, &cands).unwrap(), 0.0);
            assert_eq!(flip_influence_confusion(&m, &phi(&[1.0, 2.0]), c, "a", 2, &cands).unwrap(), 0.0);
        }
    }

    #[test]
    fn crafted_instance_matches_hand_softmax() {
        let w = DMatrix::from_row_slice(2, 3, &[1.0, 0.0, 0.5, 0.0, 2.0, -1.0]);
        let m = model(w, EmbeddingMode::attr_only());
        let v = phi(&[1.0, 0.5]);
        // Wᵀφ = [1, 1, 0]; scores a = 1 + 0 = 1, b = 1 + 0 = 1, c = 2.
        // Flip attribute 0 of a: a' = [0, 0, 1] -> score 0.
        let e = |x: f64| x.exp();
        let before = e(1.0) / (e(1.0) + e(1.0) + e(2.0));
        let after = e(0.0) / (e(0.0) + e(1.0) + e(2.0));
        let got = flip_influence_correct(&m, &v, "a", 0, &three_classes()).unwrap();
        assert!((got - (before - after)).abs() < 1e-12);
    }

    #[test]
    fn flip_leaves_other_scores_untouched() {
        let mut r = rng::seeded(3);
        let w = DMatrix::from_vec(2, 3, rng::gaussian_vec(&mut r, 6));
        let m = model(w, EmbeddingMode::attr_only());
        let v = phi(&rng::gaussian_vec(&mut r, 2));
        let cands = three_classes();
        let mut flipped = cands.clone();
        flipped[1] = flip_attribute(&cands[1], 0).unwrap();
        for j in [0, 2] {
            let a = compatibility(&v, &m, &m.embed_class(&cands[j]).unwrap()).unwrap();
            let b = compatibility(&v, &m, &m.embed_class(&flipped[j]).unwrap()).unwrap();
            assert_eq!(a.to_bits(), b.to_bits());
        }
    }

    #[test]
    fn double_flip_restores_posteriors_and_negates() {
        let mut r = rng::seeded(5);
        let w = DMatrix::from_vec(2, 3, rng::gaussian_vec(&mut r, 6));
        let m = model(w, EmbeddingMode::attr_only());
        let v = phi(&rng::gaussian_vec(&mut r, 2));
        let cands = three_classes();
        let base = posteriors(&v, &m, &m.embed_classes(&cands).unwrap()).unwrap();
        let mut twice = cands.clone();
        twice[0] = flip_attribute(&flip_attribute(&cands[0], 1).unwrap(), 1).unwrap();
        let again = posteriors(&v, &m, &m.embed_classes(&twice).unwrap()).unwrap();
        assert_eq!(base, again);

        let mut once = cands.clone();
        once[0] = flip_attribute(&cands[0], 1).unwrap();
        let forward = flip_influence_correct(&m, &v, "a", 1, &cands).unwrap();
        let backward = flip_influence_correct(&m, &v, "a", 1, &once).unwrap();
        let flipped_post = posteriors(&v, &m, &m.embed_classes(&once).unwrap()).unwrap();
        assert!((forward + backward).abs() < 1e-15);
        assert!((base[0] - forward - flipped_post[0]).abs() < 1e-15);
    }

    #[test]
    fn log_ratio_cases() {
        let mut r = rng::seeded(6);
        let w = DMatrix::from_vec(2, 3, rng::gaussian_vec(&mut r, 6));
        let m = model(w, EmbeddingMode::attr_only());
        let v = phi(&rng::gaussian_vec(&mut r, 2));
        let cands = three_classes();
        assert_eq!(log_ratio(&m, &v, "b", "b", &cands).unwrap(), 0.0);
        let p = posteriors(&v, &m, &m.embed_classes(&cands).unwrap()).unwrap();
        let direct = (p[2] / p[0]).ln();
        assert!((log_ratio(&m, &v, "c", "a", &cands).unwrap() - direct).abs() < 1e-10);

        let tie = model(DMatrix::zeros(2, 3), EmbeddingMode::attr_only());
        assert_eq!(log_ratio(&tie, &v, "a", "c", &cands).unwrap(), 0.0);
    }

    #[test]
    fn confusion_influence_two_class_hand_value() {
        // Wᵀφ = [2, -1]; c* = [1, 1] scores 1; flipping attribute 0 gives [0, 1] scoring -1.
        let w = DMatrix::from_row_slice(1, 2, &[2.0, -1.0]);
        let m = model(w, EmbeddingMode::attr_only());
        let cands = vec![class("o", &[0.0, 0.0]), class("s", &[1.0, 1.0])];
        let got = flip_influence_confusion(&m, &phi(&[1.0]), "s", "o", 0, &cands).unwrap();
        assert!((got - 2.0).abs() < 1e-12);
    }

    #[test]
    fn mode_checks() {
        let m = model(DMatrix::zeros(1, 2), EmbeddingMode::new(EmbeddingKind::TextOnly, 2).unwrap());
        let cands = vec![class("a", &[1.0])];
        assert!(matches!(
            flip_influence_correct(&m, &phi(&[1.0]), "a", 0, &cands),
            Err(Error::ModeWithoutAttributes)
        ));
        let m = model(DMatrix::zeros(1, 3), EmbeddingMode::attr_only());
        assert!(matches!(
            flip_influence_correct(&m, &phi(&[1.0]), "a", 3, &three_classes()),
            Err(Error::IndexOutOfRange { .. })
        ));
    }

    #[test]
    fn combined_mode_flips_attribute_block_only() {
        let mode = EmbeddingMode::new(EmbeddingKind::Combined, 2).unwrap();
        // Large weight on the text block, zero on attribute 0.
        let w = DMatrix::from_row_slice(1, 5, &[0.0, 1.0, 0.0, 5.0, 5.0]);
        let m = model(w, mode);
        let cands = three_classes();
        assert_eq!(flip_influence_correct(&m, &phi(&[1.0]), "a", 0, &cands).unwrap(), 0.0);
        assert!(flip_influence_correct(&m, &phi(&[1.0]), "b", 1, &cands).unwrap() != 0.0);
    }

    #[test]
    fn class_matrix_single_and_missing() {
        let w = DMatrix::from_row_slice(1, 3, &[3.0, -3.0, 0.0]);
        let m = model(w, EmbeddingMode::attr_only());
        let cands = vec![class("a", &[1.0, 0.0, 0.0]), class("b", &[0.0, 1.0, 0.0])];
        let samples = vec![
            ScoredSample { phi: phi(&[1.0]), truth: "a".into() },
            ScoredSample { phi: phi(&[1.0]), truth: "b".into() },
        ];
        let names: Vec<String> = (0..3).map(|k| format!("k{k}")).collect();
        let report = class_influence_matrix(&m, &samples, &["a".into(), "b".into()], &cands, &names).unwrap();
        assert_eq!(report.rows.len(), 1);
        assert_eq!(report.omitted, vec!["b".to_string()]);
        for k in 0..3 {
            let one = flip_influence_correct(&m, &samples[0].phi, "a", k, &cands).unwrap();
            assert_eq!(report.rows[0].scores[k], one);
        }
        assert_eq!(report.rows[0].support, 1);
    }

    #[test]
    fn perfect_model_has_no_confusions() {
        let w = DMatrix::from_row_slice(1, 3, &[3.0, -3.0, 0.0]);
        let m = model(w, EmbeddingMode::attr_only());
        let cands = vec![class("a", &[1.0, 0.0, 0.0]), class("b", &[0.0, 1.0, 0.0])];
        let samples = vec![ScoredSample { phi: phi(&[1.0]), truth: "a".into() }];
        assert!(matches!(
            confusion_influence_matrix(&m, &samples, &cands, 4, &[]),
            Err(Error::NoMisclassifications)
        ));
    }

    #[test]
    fn affiliation_threshold() {
        let report = InfluenceReport {
            kind: InfluenceKind::CorrectConfidence,
            attribute_names: vec!["x".into(), "y".into()],
            rows: vec![
                InfluenceRow { subject: Subject::Class { class: "a".into() }, scores: vec![0.25, 0.5], support: 1 },
                InfluenceRow { subject: Subject::Class { class: "b".into() }, scores: vec![0.75, 0.1], support: 2 },
            ],
            omitted: vec![],
        };
        let classes = vec![class("a", &[1.0, 1.0]), class("b", &[1.0, 0.0])];
        let s = positive_affiliation_summary(&report, &classes, 1).unwrap();
        assert_eq!(s.len(), 2);
        assert_eq!(s[0].mean_influence, 0.5);
        assert_eq!(s[1].mean_influence, 0.5);
        assert_eq!(s[1].n_classes, 1);
        let s = positive_affiliation_summary(&report, &classes, 2).unwrap();
        assert_eq!(s.len(), 1);
        assert_eq!(s[0].attribute, 0);
    }
}
