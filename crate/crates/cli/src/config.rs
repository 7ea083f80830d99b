//! Run configuration: a JSON file, overridden field by field from the
//! command line.

use std::fs;
use std::path::{Path, PathBuf};

use clap::Args;
use serde::{Deserialize, Serialize};
use zsslr_core::class_embed::{EmbeddingKind, EmbeddingMode, DEFAULT_TEXT_DIM};
use zsslr_core::eval::DEFAULT_KS;
use zsslr_core::pipeline::FitConfig;
use zsslr_core::temporal::{AggregatorKind, AggregatorSpec};
use zsslr_core::zsl::{Method, TrainConfig};
use zsslr_core::{Error, Result};

/// Environment variable naming the default output directory.
pub const OUTPUT_ROOT_ENV: &str = "ZSSLR_OUTPUT_ROOT";
const FALLBACK_OUTPUT: &str = "runs";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub dataset: Option<PathBuf>,
    pub aggregator: AggregatorKind,
    pub tsm_weights: [f64; 3],
    pub use_hand: bool,
    pub embedding: EmbeddingKind,
    pub d_t: usize,
    pub method: Method,
    pub train: TrainConfig,
    pub gamma: f64,
    pub lambda_sae: f64,
    pub ks: Vec<usize>,
    pub output: Option<PathBuf>,
    pub repeats: usize,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            dataset: None,
            aggregator: AggregatorKind::AveragePool,
            tsm_weights: [0.0, 1.0, 0.0],
            use_hand: false,
            embedding: EmbeddingKind::AttrOnly,
            d_t: DEFAULT_TEXT_DIM,
            method: Method::Lle,
            train: TrainConfig::default(),
            gamma: 1e-3,
            lambda_sae: 1e-3,
            ks: DEFAULT_KS.to_vec(),
            output: None,
            repeats: 5,
        }
    }
}

fn parse_list<T: std::str::FromStr>(raw: &str) -> std::result::Result<Vec<T>, String>
where
    T::Err: std::fmt::Display,
{
    raw.split(',')
        .map(|s| s.trim().parse::<T>().map_err(|e| format!("{s:?}: {e}")))
        .collect()
}

fn parse_weights(raw: &str) -> std::result::Result<[f64; 3], String> {
    let v: Vec<f64> = parse_list(raw)?;
    v.try_into().map_err(|v: Vec<f64>| format!("expected 3 weights, got {}", v.len()))
}

fn parse_ks(raw: &str) -> std::result::Result<Vec<usize>, String> {
    parse_list(raw)
}

fn parse_kind(raw: &str) -> std::result::Result<EmbeddingKind, String> {
    match raw {
        "attr" => Ok(EmbeddingKind::AttrOnly),
        "text" => Ok(EmbeddingKind::TextOnly),
        "combined" => Ok(EmbeddingKind::Combined),
        other => Err(format!("unknown embedding {other:?} (attr, text, combined)")),
    }
}

fn parse_aggregator(raw: &str) -> std::result::Result<AggregatorKind, String> {
    match raw {
        "avgpool" => Ok(AggregatorKind::AveragePool),
        "tsm" => Ok(AggregatorKind::TemporalShiftMac),
        other => Err(format!("unknown aggregator {other:?} (avgpool, tsm)")),
    }
}

/// Flags shared by every experiment command. Each one overrides the
/// matching config field.
#[derive(Debug, Clone, Default, Args)]
pub struct ConfigArgs {
    /// JSON run configuration.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Dataset manifest.
    #[arg(long)]
    pub dataset: Option<PathBuf>,
    /// avgpool or tsm.
    #[arg(long, value_parser = parse_aggregator)]
    pub aggregator: Option<AggregatorKind>,
    /// Shift kernel weights w1,w2,w3.
    #[arg(long, value_parser = parse_weights, allow_hyphen_values = true)]
    pub tsm_weights: Option<[f64; 3]>,
    /// Concatenate the hand stream after the body stream.
    #[arg(long)]
    pub use_hand: Option<bool>,
    /// attr, text or combined.
    #[arg(long, value_parser = parse_kind)]
    pub embedding: Option<EmbeddingKind>,
    /// Reduced text dimension.
    #[arg(long)]
    pub d_t: Option<usize>,
    /// lle, eszsl or sae.
    #[arg(long)]
    pub method: Option<Method>,
    #[arg(long)]
    pub lambda: Option<f64>,
    #[arg(long)]
    pub learning_rate: Option<f64>,
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub init_scale: Option<f64>,
    #[arg(long)]
    pub gamma: Option<f64>,
    #[arg(long)]
    pub lambda_sae: Option<f64>,
    /// Comma-separated k values.
    #[arg(long, value_parser = parse_ks)]
    pub ks: Option<Vec<usize>>,
    /// Output directory. Falls back to the config, then $ZSSLR_OUTPUT_ROOT,
    /// then ./runs.
    #[arg(long)]
    pub output: Option<PathBuf>,
    #[arg(long)]
    pub repeats: Option<usize>,
}

pub fn read_config(path: &Path) -> Result<RunConfig> {
    if !path.is_file() {
        return Err(Error::MissingFile(path.to_path_buf()));
    }
    let raw = fs::read_to_string(path)?;
    serde_json::from_str(&raw).map_err(|e| {
        Error::parse(
            format!("{} line {} column {}", path.display(), e.line(), e.column()),
            e,
        )
    })
}

impl ConfigArgs {
    /// Config file (or defaults) with every given flag applied, validated.
    pub fn resolve(&self) -> Result<RunConfig> {
        let mut c = match &self.config {
            Some(p) => read_config(p)?,
            None => RunConfig::default(),
        };
        macro_rules! set {
            ($flag:ident => $($field:tt)+) => {
                if let Some(v) = self.$flag.clone() {
                    c.$($field)+ = v;
                }
            };
        }
        if let Some(d) = &self.dataset {
            c.dataset = Some(d.clone());
        }
        if let Some(o) = &self.output {
            c.output = Some(o.clone());
        }
        set!(aggregator => aggregator);
        set!(tsm_weights => tsm_weights);
        set!(use_hand => use_hand);
        set!(embedding => embedding);
        set!(d_t => d_t);
        set!(method => method);
        set!(lambda => train.lambda);
        set!(learning_rate => train.learning_rate);
        set!(epochs => train.epochs);
        set!(seed => train.seed);
        set!(init_scale => train.init_scale);
        set!(gamma => gamma);
        set!(lambda_sae => lambda_sae);
        set!(ks => ks);
        set!(repeats => repeats);
        if c.output.is_none() {
            c.output = Some(
                std::env::var_os(OUTPUT_ROOT_ENV)
                    .map(PathBuf::from)
                    .unwrap_or_else(|| PathBuf::from(FALLBACK_OUTPUT)),
            );
        }
        c.validate()?;
        Ok(c)
    }
}

impl RunConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvariantViolation(m.to_string()));
        if self.ks.is_empty() || self.ks.contains(&0) {
            return bad("ks must be a non-empty list of positive integers");
        }
        if self.repeats == 0 {
            return bad("repeats must be positive");
        }
        if self.d_t == 0 {
            return bad("d_t must be positive");
        }
        self.aggregator_spec()?;
        Ok(())
    }

    pub fn dataset_path(&self) -> Result<&Path> {
        self.dataset
            .as_deref()
            .ok_or_else(|| Error::InvariantViolation("no dataset given (--dataset or config \"dataset\")".into()))
    }

    pub fn output_dir(&self) -> PathBuf {
        self.output.clone().unwrap_or_else(|| PathBuf::from(FALLBACK_OUTPUT))
    }

    pub fn aggregator_spec(&self) -> Result<AggregatorSpec> {
        match self.aggregator {
            AggregatorKind::AveragePool => Ok(AggregatorSpec::average_pool()),
            AggregatorKind::TemporalShiftMac => AggregatorSpec::tsm(self.tsm_weights),
        }
    }

    pub fn mode(&self) -> Result<EmbeddingMode> {
        match self.embedding {
            EmbeddingKind::AttrOnly => Ok(EmbeddingMode::attr_only()),
            kind => EmbeddingMode::new(kind, self.d_t),
        }
    }

    pub fn fit_config(&self, seed: u64) -> Result<FitConfig> {
        Ok(FitConfig {
            method: self.method,
            mode: self.mode()?,
            train: TrainConfig { seed, ..self.train },
            gamma: self.gamma,
            lambda_sae: self.lambda_sae,
        })
    }

    /// Seed of repeat `i`.
    pub fn repeat_seed(&self, i: usize) -> u64 {
        self.train.seed.wrapping_add(i as u64)
    }
}
