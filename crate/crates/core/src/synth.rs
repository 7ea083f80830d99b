//! Synthetic datasets with a planted linear structure.
//!
//! Each class gets distinct random binary attributes and a unit text
//! vector. A hidden map `A*` sends the class vector `[α; τ]` to a feature
//! mean; every sample adds Gaussian noise to that mean, and every snippet
//! row adds further zero-sum jitter so the row mean is exactly the sample
//! mean. Average pooling and the identity shift kernel therefore both see
//! `A*·[α; τ] + noise`.

use std::collections::BTreeSet;

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::data::{
    default_attribute_names, ClassDescriptor, Dataset, FeatureSequence, Sample, SplitConfig, SplitMode, Stream,
};
use crate::error::{Error, Result};
use crate::rng::{self, SeededRng};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SynthSpec {
    pub n_classes: usize,
    pub n_seen: usize,
    pub n_unseen: usize,
    pub attribute_count: usize,
    pub d_text: usize,
    pub samples_per_class: usize,
    /// Snippet rows per sample.
    pub snippets: usize,
    /// Width of each stream's feature rows.
    pub feature_width: usize,
    pub noise_sigma: f64,
    pub planted_map_scale: f64,
    pub seed: u64,
    /// Emit a hand stream with its own planted map.
    pub hand: bool,
    /// Samples per seen class flagged for generalized evaluation.
    pub seen_holdout: usize,
    pub mode: SplitMode,
}

impl Default for SynthSpec {
    fn default() -> Self {
        Self {
            n_classes: 60,
            n_seen: 45,
            n_unseen: 10,
            attribute_count: 16,
            d_text: 8,
            samples_per_class: 20,
            snippets: 4,
            feature_width: 32,
            noise_sigma: 0.01,
            planted_map_scale: 1.0,
            seed: 0,
            hand: false,
            seen_holdout: 0,
            mode: SplitMode::Zsl,
        }
    }
}

impl SynthSpec {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvariantViolation(m));
        let counts = [
            ("n_classes", self.n_classes),
            ("n_seen", self.n_seen),
            ("n_unseen", self.n_unseen),
            ("attribute_count", self.attribute_count),
            ("d_text", self.d_text),
            ("samples_per_class", self.samples_per_class),
            ("snippets", self.snippets),
            ("feature_width", self.feature_width),
        ];
        if let Some((name, _)) = counts.iter().find(|(_, v)| *v == 0) {
            return bad(format!("synth {name} must be positive"));
        }
        if self.n_seen + self.n_unseen > self.n_classes {
            return bad(format!(
                "synth n_seen + n_unseen = {} exceeds n_classes = {}",
                self.n_seen + self.n_unseen,
                self.n_classes
            ));
        }
        if self.attribute_count < 64 && (1u64 << self.attribute_count) - 1 < self.n_classes as u64 {
            return bad(format!(
                "synth {} attributes cannot give {} distinct non-empty classes",
                self.attribute_count, self.n_classes
            ));
        }
        if !(self.noise_sigma.is_finite() && self.noise_sigma >= 0.0) {
            return bad("synth noise_sigma must be finite and non-negative".into());
        }
        if !self.planted_map_scale.is_finite() {
            return bad("synth planted_map_scale must be finite".into());
        }
        if self.seen_holdout >= self.samples_per_class && self.seen_holdout > 0 {
            return bad("synth seen_holdout must leave training samples".into());
        }
        Ok(())
    }

    /// Length of the planted class vector `[α; τ]`.
    pub fn latent_dim(&self) -> usize {
        self.attribute_count + self.d_text
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SynthOutput {
    pub dataset: Dataset,
    /// `feature_width × (A + D_text)` map for the body stream.
    pub planted_body: DMatrix<f64>,
    pub planted_hand: Option<DMatrix<f64>>,
}

fn class_id(i: usize) -> String {
    format!("c{i:03}")
}

fn draw_attributes(rng: &mut SeededRng, spec: &SynthSpec) -> Vec<Vec<f64>> {
    let mut seen = BTreeSet::new();
    let mut out = Vec::with_capacity(spec.n_classes);
    while out.len() < spec.n_classes {
        let bits: Vec<bool> = (0..spec.attribute_count).map(|_| rng.random::<bool>()).collect();
        if bits.iter().any(|&b| b) && seen.insert(bits.clone()) {
            out.push(bits.into_iter().map(|b| if b { 1.0 } else { 0.0 }).collect());
        }
    }
    out
}

fn draw_text(rng: &mut SeededRng, dim: usize) -> Vec<f64> {
    loop {
        let v = rng::gaussian_vec(rng, dim);
        if v.iter().any(|x| *x != 0.0) {
            return v;
        }
    }
}

fn planted_map(rng: &mut SeededRng, spec: &SynthSpec) -> DMatrix<f64> {
    let latent = spec.latent_dim();
    let scale = spec.planted_map_scale / (latent as f64).sqrt();
    let values = rng::gaussian_vec(rng, spec.feature_width * latent);
    DMatrix::from_vec(spec.feature_width, latent, values) * scale
}

/// Snippet rows whose column means equal `mean` up to rounding.
fn snippet_rows(rng: &mut SeededRng, mean: &DVector<f64>, snippets: usize, sigma: f64) -> DMatrix<f64> {
    let width = mean.len();
    let jitter = DMatrix::from_vec(snippets, width, rng::gaussian_vec(rng, snippets * width));
    let centre = jitter.row_mean();
    DMatrix::from_fn(snippets, width, |r, j| mean[j] + sigma * (jitter[(r, j)] - centre[j]))
}

/// Builds a dataset per `spec`. The same spec always yields the same data.
pub fn generate(spec: &SynthSpec) -> Result<SynthOutput> {
    spec.validate()?;
    let mut rng = rng::seeded(spec.seed);

    let attributes = draw_attributes(&mut rng, spec);
    let mut classes = Vec::with_capacity(spec.n_classes);
    for (i, attrs) in attributes.into_iter().enumerate() {
        let text = draw_text(&mut rng, spec.d_text);
        classes.push(ClassDescriptor::new(class_id(i), format!("class {i}"), attrs, text)?);
    }

    let planted_body = planted_map(&mut rng, spec);
    let planted_hand = spec.hand.then(|| planted_map(&mut rng, spec));

    let mut samples = Vec::with_capacity(spec.n_classes * spec.samples_per_class);
    for (ci, class) in classes.iter().enumerate() {
        let latent = DVector::from_iterator(
            spec.latent_dim(),
            class.attributes.iter().chain(&class.text).copied(),
        );
        let body_mean = &planted_body * &latent;
        let hand_mean = planted_hand.as_ref().map(|m| m * &latent);
        for s in 0..spec.samples_per_class {
            let sample_id = format!("{}_{s:03}", class.class_id);
            let stream = |rng: &mut SeededRng, mean: &DVector<f64>, kind: Stream| {
                let noise = DVector::from_vec(rng::gaussian_vec(rng, mean.len())) * spec.noise_sigma;
                let rows = snippet_rows(rng, &(mean + noise), spec.snippets, spec.noise_sigma);
                FeatureSequence::from_matrix(sample_id.clone(), kind, rows)
            };
            let body = stream(&mut rng, &body_mean, Stream::Body)?;
            let hand = match &hand_mean {
                Some(m) => Some(stream(&mut rng, m, Stream::Hand)?),
                None => None,
            };
            let holdout = ci < spec.n_seen && s >= spec.samples_per_class - spec.seen_holdout;
            samples.push(Sample {
                sample_id: sample_id.clone(),
                class_id: class.class_id.clone(),
                body,
                hand,
                holdout,
            });
        }
    }

    let ids: Vec<String> = classes.iter().map(|c| c.class_id.clone()).collect();
    let seen: BTreeSet<String> = ids[..spec.n_seen].iter().cloned().collect();
    let unseen: BTreeSet<String> = ids[spec.n_seen..spec.n_seen + spec.n_unseen].iter().cloned().collect();
    let validation: BTreeSet<String> = ids[spec.n_seen + spec.n_unseen..].iter().cloned().collect();

    let dataset = Dataset {
        attribute_count: spec.attribute_count,
        attribute_names: default_attribute_names(spec.attribute_count),
        classes,
        samples,
        split: SplitConfig {
            mode: spec.mode,
            seen,
            validation,
            unseen,
        },
    };
    Ok(SynthOutput {
        dataset,
        planted_body,
        planted_hand,
    })
}
