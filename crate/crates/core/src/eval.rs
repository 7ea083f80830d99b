//! Class-normalized top-k accuracy, generalized seen/unseen/harmonic
//! summaries, and the Monte-Carlo random baseline.
//!
//! Accuracy for a given `k` is the unweighted mean over classes of each
//! class's top-k hit rate, in percent. Percentages are kept at full
//! precision; rounding is a presentation concern.

use std::collections::BTreeMap;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::data::SplitConfig;
use crate::error::{Error, Result};
use crate::rng;

pub const DEFAULT_KS: [usize; 3] = [1, 2, 5];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub per_k: BTreeMap<usize, f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seen_per_k: Option<BTreeMap<usize, f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub unseen_per_k: Option<BTreeMap<usize, f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub harmonic_per_k: Option<BTreeMap<usize, f64>>,
    /// Per class, per k hit rate as a fraction in `[0, 1]`.
    pub per_class: BTreeMap<String, BTreeMap<usize, f64>>,
    pub n_samples: usize,
    pub n_classes: usize,
}

/// `2su / (s + u)`, zero when both are zero.
pub fn harmonic_mean(seen: f64, unseen: f64) -> f64 {
    if seen + unseen == 0.0 {
        0.0
    } else {
        2.0 * seen * unseen / (seen + unseen)
    }
}

/// Rounds to one decimal for tables.
pub fn round1(x: f64) -> f64 {
    (x * 10.0).round() / 10.0
}

/// `rankings[i]` lists candidate ids best first for sample `i`, whose truth
/// is `truths[i]`.
pub fn topk_accuracy<S: AsRef<str>>(rankings: &[Vec<S>], truths: &[S], ks: &[usize]) -> Result<EvalReport> {
    if rankings.is_empty() {
        return Err(Error::EmptyEvaluationSet);
    }
    if rankings.len() != truths.len() {
        return Err(Error::DimensionMismatch(format!(
            "{} rankings but {} truths",
            rankings.len(),
            truths.len()
        )));
    }
    // class -> (positions of the truth in each of its samples' rankings)
    let mut positions: BTreeMap<&str, Vec<usize>> = BTreeMap::new();
    for (ranking, truth) in rankings.iter().zip(truths) {
        let truth = truth.as_ref();
        let pos = ranking
            .iter()
            .position(|c| c.as_ref() == truth)
            .ok_or_else(|| Error::UnrankedClass(truth.to_string()))?;
        positions.entry(truth).or_default().push(pos);
    }

    let mut per_class = BTreeMap::new();
    for (class, pos) in &positions {
        let rates = ks
            .iter()
            .map(|&k| {
                let hits = pos.iter().filter(|&&p| p < k).count();
                (k, hits as f64 / pos.len() as f64)
            })
            .collect::<BTreeMap<_, _>>();
        per_class.insert(class.to_string(), rates);
    }
    let per_k = class_mean(&per_class, ks);
    Ok(EvalReport {
        per_k,
        seen_per_k: None,
        unseen_per_k: None,
        harmonic_per_k: None,
        n_samples: rankings.len(),
        n_classes: per_class.len(),
        per_class,
    })
}

fn class_mean<'a>(
    per_class: impl IntoIterator<Item = (&'a String, &'a BTreeMap<usize, f64>)> + Clone,
    ks: &[usize],
) -> BTreeMap<usize, f64> {
    ks.iter()
        .map(|&k| {
            let (sum, n) = per_class
                .clone()
                .into_iter()
                .fold((0.0, 0usize), |(s, n), (_, rates)| (s + rates[&k], n + 1));
            (k, if n == 0 { 0.0 } else { 100.0 * sum / n as f64 })
        })
        .collect()
}

/// Top-k report over a generalized candidate set with separate seen and
/// unseen summaries. A side with no samples is reported as absent and
/// contributes a harmonic mean of zero.
pub fn gzsl_report<S: AsRef<str>>(
    rankings: &[Vec<S>],
    truths: &[S],
    split: &SplitConfig,
    ks: &[usize],
) -> Result<EvalReport> {
    let mut report = topk_accuracy(rankings, truths, ks)?;
    let subset = |pred: &dyn Fn(&str) -> bool| -> Option<BTreeMap<usize, f64>> {
        let classes: Vec<_> = report.per_class.iter().filter(|(c, _)| pred(c)).collect();
        (!classes.is_empty()).then(|| class_mean(classes.iter().copied(), ks))
    };
    let seen = subset(&|c| split.is_seen(c));
    let unseen = subset(&|c| split.is_unseen(c));
    let harmonic = ks
        .iter()
        .map(|k| {
            let s = seen.as_ref().map_or(0.0, |m| m[k]);
            let u = unseen.as_ref().map_or(0.0, |m| m[k]);
            (*k, harmonic_mean(s, u))
        })
        .collect();
    report.seen_per_k = seen;
    report.unseen_per_k = unseen;
    report.harmonic_per_k = Some(harmonic);
    Ok(report)
}

/// Expected class-normalized top-k accuracy of uniformly random rankings,
/// estimated from `trials` seeded draws.
///
/// Each trial ranks the `n_classes` candidates uniformly at random for every
/// sample; only the truth's position matters, and under a uniform
/// permutation that position is uniform on `0..n_classes`. `class_sizes`
/// gives the number of samples per class (one each when empty).
pub fn random_baseline(
    n_classes: usize,
    class_sizes: &[usize],
    ks: &[usize],
    trials: usize,
    seed: u64,
) -> BTreeMap<usize, f64> {
    let sizes: Vec<usize> = if class_sizes.is_empty() {
        vec![1; n_classes]
    } else {
        class_sizes.to_vec()
    };
    let populated: Vec<usize> = sizes.into_iter().filter(|&s| s > 0).collect();
    let mut totals = vec![0.0; ks.len()];
    if n_classes == 0 || populated.is_empty() || trials == 0 {
        return ks.iter().map(|&k| (k, 0.0)).collect();
    }
    let mut r = rng::seeded(seed);
    let mut hits = vec![0usize; ks.len()];
    for _ in 0..trials {
        let mut trial = vec![0.0; ks.len()];
        for &size in &populated {
            hits.iter_mut().for_each(|h| *h = 0);
            for _ in 0..size {
                let pos = r.random_range(0..n_classes);
                for (h, &k) in hits.iter_mut().zip(ks) {
                    if pos < k {
                        *h += 1;
                    }
                }
            }
            for (t, &h) in trial.iter_mut().zip(&hits) {
                *t += h as f64 / size as f64;
            }
        }
        for (total, t) in totals.iter_mut().zip(trial) {
            *total += 100.0 * t / populated.len() as f64;
        }
    }
    ks.iter()
        .zip(totals)
        .map(|(&k, total)| (k, total / trials as f64))
        .collect()
}
