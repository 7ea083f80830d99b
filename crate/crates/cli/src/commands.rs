//! Subcommand bodies.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use serde::Serialize;
use zsslr_core::class_embed::EmbeddingKind;
use zsslr_core::data::{load_dataset, write_dataset, ClassDescriptor, Dataset, EvalScope};
use zsslr_core::eval::{random_baseline, EvalReport};
use zsslr_core::influence::{
    affiliation_matrix, class_influence_matrix, confusion_influence_matrix, positive_affiliation_summary,
    AffiliationSummary, InfluenceReport, ScoredSample,
};
use zsslr_core::pipeline::{embed_scope, evaluate, fit, predict_scope};
use zsslr_core::synth::{generate, SynthSpec};
use zsslr_core::zsl::{load_model, save_model, CompatModel, TrainingSet};
use zsslr_core::{Error, Result};

use crate::config::RunConfig;
use crate::output::{accuracy_table, mean_std, summarize_per_k, write_csv, write_json, MeanStd};

fn prepare_output(cfg: &RunConfig, extra: &[(&str, String)]) -> Result<PathBuf> {
    let dir = cfg.output_dir();
    fs::create_dir_all(&dir)?;
    #[derive(Serialize)]
    struct Echo<'a> {
        #[serde(flatten)]
        config: &'a RunConfig,
        #[serde(flatten)]
        extra: BTreeMap<&'a str, &'a str>,
    }
    let echo = Echo {
        config: cfg,
        extra: extra.iter().map(|(k, v)| (*k, v.as_str())).collect(),
    };
    write_json(&dir.join("effective_config.json"), &echo)?;
    Ok(dir)
}

fn load(cfg: &RunConfig) -> Result<Dataset> {
    load_dataset(cfg.dataset_path()?)
}

/// Fails early when the dataset cannot feed the model.
fn check_compatible(model: &CompatModel, dataset: &Dataset, cfg: &RunConfig) -> Result<()> {
    if model.mode.has_attributes() && model.attribute_count() != dataset.attribute_count {
        return Err(Error::DimensionMismatch(format!(
            "model expects {} attributes, dataset has {}",
            model.attribute_count(),
            dataset.attribute_count
        )));
    }
    if model.mode.has_text() && model.text_dim != dataset.text_dim() {
        return Err(Error::DimensionMismatch(format!(
            "model expects text vectors of length {}, dataset has {}",
            model.text_dim,
            dataset.text_dim()
        )));
    }
    let agg = cfg.aggregator_spec()?;
    if let Some(sample) = dataset.samples.first() {
        let d = zsslr_core::temporal::embed_video(sample, &agg, cfg.use_hand)?.dim();
        if d != model.d() {
            return Err(Error::DimensionMismatch(format!(
                "model expects video embeddings of length {}, dataset gives {d}",
                model.d()
            )));
        }
    }
    Ok(())
}

// ---- synth -----------------------------------------------------------------

pub fn synth(spec: &SynthSpec, out: &Path) -> Result<()> {
    let generated = generate(spec)?;
    let manifest = write_dataset(&generated.dataset, out)?;
    write_json(&out.join("synth_spec.json"), spec)?;
    println!(
        "wrote {} classes, {} samples to {}",
        generated.dataset.classes.len(),
        generated.dataset.samples.len(),
        manifest.display()
    );
    Ok(())
}

// ---- train -----------------------------------------------------------------

#[derive(Serialize)]
struct RepeatResult {
    seed: u64,
    model: String,
    initial_loss: Option<f64>,
    final_loss: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    validation: Option<BTreeMap<usize, f64>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    test: Option<EvalReport>,
}

#[derive(Serialize)]
struct TrainSummary {
    repeats: Vec<RepeatResult>,
    final_loss: MeanStd,
    #[serde(skip_serializing_if = "BTreeMap::is_empty")]
    validation_per_k: BTreeMap<usize, MeanStd>,
    #[serde(skip_serializing_if = "BTreeMap::is_empty")]
    test_per_k: BTreeMap<usize, MeanStd>,
    #[serde(skip_serializing_if = "BTreeMap::is_empty")]
    test_harmonic_per_k: BTreeMap<usize, MeanStd>,
}

/// Score `scope` unless it has no samples.
fn optional_eval(
    model: &CompatModel,
    data: &Dataset,
    scope: EvalScope,
    cfg: &RunConfig,
) -> Result<Option<EvalReport>> {
    if data.evaluation_samples(scope).is_empty() || data.candidates(scope)?.is_empty() {
        return Ok(None);
    }
    Ok(Some(
        evaluate(model, data, scope, &cfg.aggregator_spec()?, cfg.use_hand, &cfg.ks)?.report,
    ))
}

pub fn train(cfg: &RunConfig) -> Result<()> {
    let data = load(cfg)?;
    let dir = prepare_output(cfg, &[])?;
    let set = TrainingSet::from_dataset(&data, &cfg.aggregator_spec()?, cfg.use_hand)?;

    let mut results = Vec::with_capacity(cfg.repeats);
    for i in 0..cfg.repeats {
        let seed = cfg.repeat_seed(i);
        let f = fit(&set, &cfg.fit_config(seed)?)?;
        let name = format!("model_{i}.json");
        save_model(&f.model, dir.join(&name))?;
        let rows: Vec<Vec<String>> = f
            .loss_log
            .iter()
            .enumerate()
            .map(|(e, l)| vec![e.to_string(), l.to_string()])
            .collect();
        write_csv(
            &dir.join(format!("loss_log_{i}.csv")),
            &["epoch".into(), "loss".into()],
            &rows,
        )?;
        let validation = optional_eval(&f.model, &data, EvalScope::Validation, cfg)?.map(|r| r.per_k);
        let test = optional_eval(&f.model, &data, EvalScope::Test, cfg)?;
        println!(
            "repeat {i}: seed {seed}, final loss {}{}",
            f.model.final_loss,
            f.loss_log
                .first()
                .map(|l| format!(" (initial {l})"))
                .unwrap_or_default()
        );
        results.push(RepeatResult {
            seed,
            model: name,
            initial_loss: f.loss_log.first().copied(),
            final_loss: f.model.final_loss,
            validation,
            test,
        });
    }

    let losses: Vec<f64> = results.iter().map(|r| r.final_loss).collect();
    let validation: Vec<&BTreeMap<usize, f64>> = results.iter().filter_map(|r| r.validation.as_ref()).collect();
    let test: Vec<&BTreeMap<usize, f64>> = results.iter().filter_map(|r| r.test.as_ref().map(|t| &t.per_k)).collect();
    let harmonic: Vec<&BTreeMap<usize, f64>> = results
        .iter()
        .filter_map(|r| r.test.as_ref().and_then(|t| t.harmonic_per_k.as_ref()))
        .collect();
    let summary = TrainSummary {
        final_loss: MeanStd::of(&losses),
        validation_per_k: summarize_per_k(&validation),
        test_per_k: summarize_per_k(&test),
        test_harmonic_per_k: summarize_per_k(&harmonic),
        repeats: results,
    };
    if !summary.test_per_k.is_empty() {
        let means: BTreeMap<usize, f64> = summary.test_per_k.iter().map(|(k, m)| (*k, m.mean)).collect();
        print!("{}", accuracy_table(&cfg.ks, &[("test mean", &means)]));
    }
    write_json(&dir.join("train_summary.json"), &summary)?;
    Ok(())
}

// ---- predict ---------------------------------------------------------------

#[derive(Serialize)]
struct PredictionRecord<'a> {
    sample_id: &'a str,
    truth: &'a str,
    predicted: &'a str,
    ranking: &'a [zsslr_core::zsl::RankedClass],
}

fn scope_name(scope: EvalScope) -> &'static str {
    match scope {
        EvalScope::Validation => "validation",
        EvalScope::Test => "test",
    }
}

pub fn predict(cfg: &RunConfig, model_path: &Path, scope: EvalScope) -> Result<()> {
    let model = load_model(model_path)?;
    let data = load(cfg)?;
    check_compatible(&model, &data, cfg)?;
    let dir = prepare_output(
        cfg,
        &[
            ("model_path", model_path.display().to_string()),
            ("scope", scope_name(scope).into()),
        ],
    )?;
    let (predictions, truths) = predict_scope(&model, &data, scope, &cfg.aggregator_spec()?, cfg.use_hand)?;
    let records: Vec<PredictionRecord> = predictions
        .iter()
        .zip(&truths)
        .map(|(p, t)| PredictionRecord {
            sample_id: &p.sample_id,
            truth: t,
            predicted: &p.class_id,
            ranking: &p.ranking,
        })
        .collect();
    write_json(&dir.join("predictions.json"), &records)?;
    let correct = predictions.iter().zip(&truths).filter(|(p, t)| &p.class_id == *t).count();
    println!("{} predictions, {correct} correct", predictions.len());
    Ok(())
}

// ---- eval ------------------------------------------------------------------

#[derive(Serialize)]
struct EvalOutput<'a> {
    scope: &'static str,
    #[serde(flatten)]
    report: &'a EvalReport,
    #[serde(skip_serializing_if = "Option::is_none")]
    random_baseline: Option<BTreeMap<usize, f64>>,
}

/// Class sizes of the evaluated samples.
fn class_sizes(truths: &[String]) -> Vec<usize> {
    let mut counts: BTreeMap<&str, usize> = BTreeMap::new();
    for t in truths {
        *counts.entry(t).or_default() += 1;
    }
    counts.into_values().collect()
}

pub fn eval(cfg: &RunConfig, model_path: &Path, scope: EvalScope, baseline_trials: Option<usize>) -> Result<()> {
    let model = load_model(model_path)?;
    let data = load(cfg)?;
    check_compatible(&model, &data, cfg)?;
    let dir = prepare_output(
        cfg,
        &[
            ("model_path", model_path.display().to_string()),
            ("scope", scope_name(scope).into()),
        ],
    )?;
    let e = evaluate(&model, &data, scope, &cfg.aggregator_spec()?, cfg.use_hand, &cfg.ks)?;
    let baseline = baseline_trials.map(|trials| {
        let n = data.candidates(scope).map(|c| c.len()).unwrap_or(0);
        random_baseline(n, &class_sizes(&e.truths), &cfg.ks, trials, cfg.train.seed)
    });

    let r = &e.report;
    let mut rows: Vec<(&str, &BTreeMap<usize, f64>)> = vec![("all", &r.per_k)];
    if let Some(s) = &r.seen_per_k {
        rows.push(("seen", s));
    }
    if let Some(u) = &r.unseen_per_k {
        rows.push(("unseen", u));
    }
    if let Some(h) = &r.harmonic_per_k {
        rows.push(("harmonic", h));
    }
    if let Some(b) = &baseline {
        rows.push(("random", b));
    }
    print!("{}", accuracy_table(&cfg.ks, &rows));
    write_json(
        &dir.join("eval_report.json"),
        &EvalOutput {
            scope: scope_name(scope),
            report: r,
            random_baseline: baseline.clone(),
        },
    )?;
    Ok(())
}

// ---- baseline --------------------------------------------------------------

#[derive(Serialize)]
struct BaselineOutput {
    n_classes: usize,
    class_sizes: Vec<usize>,
    trials: usize,
    seed: u64,
    per_k: BTreeMap<usize, f64>,
}

pub fn baseline(cfg: &RunConfig, n_classes: Option<usize>, trials: usize) -> Result<()> {
    let (n, sizes) = match n_classes {
        Some(n) => (n, Vec::new()),
        None => {
            let data = load(cfg)?;
            let n = data.candidates(EvalScope::Test)?.len();
            let truths: Vec<String> = data
                .evaluation_samples(EvalScope::Test)
                .iter()
                .map(|s| s.class_id.clone())
                .collect();
            (n, class_sizes(&truths))
        }
    };
    if n == 0 {
        return Err(Error::EmptyCandidates);
    }
    let extra = [
        ("n_classes", n.to_string()),
        ("trials", trials.to_string()),
    ];
    let dir = prepare_output(cfg, &extra)?;
    let per_k = random_baseline(n, &sizes, &cfg.ks, trials, cfg.train.seed);
    print!("{}", accuracy_table(&cfg.ks, &[("random", &per_k)]));
    write_json(
        &dir.join("baseline.json"),
        &BaselineOutput {
            n_classes: n,
            class_sizes: sizes,
            trials,
            seed: cfg.train.seed,
            per_k,
        },
    )
}

// ---- analyze ---------------------------------------------------------------

#[derive(Debug, Clone, Copy)]
pub enum Analysis {
    Correct { min_affiliation: usize },
    Confusions(usize),
}

#[derive(Serialize)]
struct AnalysisOutput<'a> {
    #[serde(flatten)]
    report: &'a InfluenceReport,
    #[serde(skip_serializing_if = "Option::is_none")]
    min_affiliation: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    affiliation_summary: Option<Vec<AffiliationSummary>>,
}

fn heatmap_rows(report: &InfluenceReport) -> (Vec<String>, Vec<Vec<String>>) {
    let mut header = vec!["subject".to_string(), "support".to_string()];
    header.extend(report.attribute_names.iter().cloned());
    let rows = report
        .rows
        .iter()
        .map(|r| {
            let mut row = vec![r.subject.label(), r.support.to_string()];
            row.extend(r.scores.iter().map(|s| s.to_string()));
            row
        })
        .collect();
    (header, rows)
}

pub fn analyze(cfg: &RunConfig, model_path: &Path, analysis: Analysis) -> Result<()> {
    let model = load_model(model_path)?;
    if !model.mode.has_attributes() {
        return Err(Error::ModeWithoutAttributes);
    }
    let data = load(cfg)?;
    check_compatible(&model, &data, cfg)?;
    let what = match analysis {
        Analysis::Correct { .. } => "correct".to_string(),
        Analysis::Confusions(n) => format!("confusions {n}"),
    };
    let dir = prepare_output(
        cfg,
        &[("model_path", model_path.display().to_string()), ("analysis", what)],
    )?;

    let candidates: Vec<ClassDescriptor> = data.candidates(EvalScope::Test)?.into_iter().cloned().collect();
    let samples: Vec<ScoredSample> = embed_scope(&data, EvalScope::Test, &cfg.aggregator_spec()?, cfg.use_hand)?
        .into_iter()
        .map(|(phi, truth)| ScoredSample { phi, truth })
        .collect();
    if samples.is_empty() {
        return Err(Error::EmptyEvaluationSet);
    }

    let (stem, report, min_affiliation, summary) = match analysis {
        Analysis::Correct { min_affiliation } => {
            let mut classes: Vec<String> = samples.iter().map(|s| s.truth.clone()).collect();
            classes.sort();
            classes.dedup();
            let report = class_influence_matrix(&model, &samples, &classes, &candidates, &data.attribute_names)?;
            let summary = positive_affiliation_summary(&report, &candidates, min_affiliation)?;
            for s in &summary {
                println!("{:<24} {:>4} classes  mean influence {:.4}", s.name, s.n_classes, s.mean_influence);
            }
            if !report.omitted.is_empty() {
                println!("no correct samples: {}", report.omitted.join(", "));
            }
            ("influence_correct", report, Some(min_affiliation), Some(summary))
        }
        Analysis::Confusions(n) => {
            let report = confusion_influence_matrix(&model, &samples, &candidates, n, &data.attribute_names)?;
            for r in &report.rows {
                println!("{:<24} {:>4} samples", r.subject.label(), r.support);
            }
            ("influence_confusions", report, None, None)
        }
    };

    write_json(
        &dir.join(format!("{stem}.json")),
        &AnalysisOutput {
            report: &report,
            min_affiliation,
            affiliation_summary: summary,
        },
    )?;
    let (header, rows) = heatmap_rows(&report);
    write_csv(&dir.join(format!("{stem}.csv")), &header, &rows)?;
    let affil = affiliation_matrix(&report, &candidates)?;
    let affil_rows: Vec<Vec<String>> = report
        .rows
        .iter()
        .zip(affil)
        .map(|(r, flags)| {
            let mut row = vec![r.subject.label(), r.support.to_string()];
            row.extend(flags.into_iter().map(|f| u8::from(f).to_string()));
            row
        })
        .collect();
    write_csv(&dir.join(format!("{stem}_affiliation.csv")), &header, &affil_rows)?;
    Ok(())
}

// ---- sweep -----------------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum SweepParam {
    #[value(name = "d_t")]
    DT,
    Lambda,
    Gamma,
    #[value(name = "lambda_sae")]
    LambdaSae,
}

impl SweepParam {
    fn apply(self, cfg: &mut RunConfig, value: f64) -> Result<()> {
        match self {
            SweepParam::DT => {
                if value < 1.0 || value.fract() != 0.0 {
                    return Err(Error::InvariantViolation(format!("d_t value {value} is not a positive integer")));
                }
                if cfg.embedding == EmbeddingKind::AttrOnly {
                    return Err(Error::Unsupported("a d_t sweep needs the text or combined embedding".into()));
                }
                cfg.d_t = value as usize;
            }
            SweepParam::Lambda => cfg.train.lambda = value,
            SweepParam::Gamma => cfg.gamma = value,
            SweepParam::LambdaSae => cfg.lambda_sae = value,
        }
        Ok(())
    }

    fn name(self) -> &'static str {
        match self {
            SweepParam::DT => "d_t",
            SweepParam::Lambda => "lambda",
            SweepParam::Gamma => "gamma",
            SweepParam::LambdaSae => "lambda_sae",
        }
    }
}

pub fn sweep(cfg: &RunConfig, param: SweepParam, values: &[f64]) -> Result<()> {
    if values.is_empty() {
        return Err(Error::InvariantViolation("sweep needs at least one value".into()));
    }
    let data = load(cfg)?;
    if data.evaluation_samples(EvalScope::Validation).is_empty() {
        return Err(Error::EmptyEvaluationSet);
    }
    let values_text = values.iter().map(f64::to_string).collect::<Vec<_>>().join(",");
    let dir = prepare_output(cfg, &[("param", param.name().into()), ("values", values_text)])?;
    let set = TrainingSet::from_dataset(&data, &cfg.aggregator_spec()?, cfg.use_hand)?;
    let agg = cfg.aggregator_spec()?;

    let mut rows = Vec::with_capacity(values.len());
    for &value in values {
        let mut run = cfg.clone();
        param.apply(&mut run, value)?;
        let mut top1 = Vec::with_capacity(run.repeats);
        for i in 0..run.repeats {
            let f = fit(&set, &run.fit_config(run.repeat_seed(i))?)?;
            let e = evaluate(&f.model, &data, EvalScope::Validation, &agg, run.use_hand, &[1])?;
            top1.push(e.report.per_k[&1]);
        }
        let (mean, std) = mean_std(&top1);
        println!("{} = {value}: validation top-1 {mean:.1} ± {std:.1}", param.name());
        rows.push(vec![value.to_string(), mean.to_string(), std.to_string()]);
    }
    write_csv(
        &dir.join(format!("sweep_{}.csv", param.name())),
        &["value".into(), "mean_val_top1".into(), "stddev".into()],
        &rows,
    )
}
