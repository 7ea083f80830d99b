//! Training on a synthetic dataset recovers its planted structure.

use zsslr_core::class_embed::{EmbeddingKind, EmbeddingMode};
use zsslr_core::data::{EvalScope, SplitMode};
use zsslr_core::pipeline::{evaluate, fit, FitConfig};
use zsslr_core::synth::{generate, SynthSpec};
use zsslr_core::temporal::AggregatorSpec;
use zsslr_core::zsl::{TrainConfig, TrainingSet};

fn fixture(mode: SplitMode) -> SynthSpec {
    SynthSpec {
        seen_holdout: 4,
        mode,
        ..SynthSpec::default()
    }
}

#[test]
fn lle_recovers_unseen_classes() {
    let data = generate(&fixture(SplitMode::Zsl)).unwrap().dataset;
    let agg = AggregatorSpec::default();
    let set = TrainingSet::from_dataset(&data, &agg, false).unwrap();
    let f = fit(&set, &FitConfig::lle(EmbeddingMode::attr_only(), TrainConfig::default())).unwrap();
    let uniform = (data.split.seen.len() as f64).ln();
    assert!(*f.loss_log.last().unwrap() < uniform);
    let e = evaluate(&f.model, &data, EvalScope::Test, &agg, false, &[1]).unwrap();
    assert!(e.report.per_k[&1] >= 90.0, "{:?}", e.report.per_k);
}

#[test]
fn generalized_run_has_positive_harmonic_mean() {
    let data = generate(&fixture(SplitMode::Gzsl)).unwrap().dataset;
    let agg = AggregatorSpec::default();
    let set = TrainingSet::from_dataset(&data, &agg, false).unwrap();
    let f = fit(&set, &FitConfig::lle(EmbeddingMode::attr_only(), TrainConfig::default())).unwrap();
    let e = evaluate(&f.model, &data, EvalScope::Test, &agg, false, &[1, 2, 5]).unwrap();
    let h = e.report.harmonic_per_k.unwrap();
    assert!(h[&1] > 0.0);
}

#[test]
fn text_modes_beat_chance() {
    let spec = SynthSpec {
        n_classes: 30,
        n_seen: 20,
        n_unseen: 5,
        samples_per_class: 6,
        ..SynthSpec::default()
    };
    let data = generate(&spec).unwrap().dataset;
    let agg = AggregatorSpec::default();
    let set = TrainingSet::from_dataset(&data, &agg, false).unwrap();
    for mode in [
        EmbeddingMode::new(EmbeddingKind::TextOnly, 8).unwrap(),
        EmbeddingMode::new(EmbeddingKind::Combined, 4).unwrap(),
    ] {
        let cfg = TrainConfig {
            epochs: 300,
            ..TrainConfig::default()
        };
        let f = fit(&set, &FitConfig::lle(mode, cfg)).unwrap();
        let e = evaluate(&f.model, &data, EvalScope::Test, &agg, false, &[1]).unwrap();
        assert!(e.report.per_k[&1] > 20.0, "{mode:?}: {:?}", e.report.per_k);
    }
}
