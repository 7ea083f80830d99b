//! Domain types for datasets and the on-disk manifest / feature-file formats.
//!
//! A manifest is a single JSON document:
//!
//! ```json
//! {
//!   "attribute_count": 53,
//!   "attribute_names": ["flat-hand", "..."],
//!   "classes": [{"id": "c1", "name": "hello", "attributes": [0, 1, ...], "text": [0.1, ...]}],
//!   "samples": [{"id": "s1", "class_id": "c1", "body": "features/s1_body.csv", "hand": "features/s1_hand.csv"}],
//!   "split": {"mode": "zsl", "seen": ["c1"], "validation": [], "unseen": ["c2"]}
//! }
//! ```
//!
//! `text` may be replaced by `text_file`, a path to a one-row CSV. Sample
//! paths are resolved relative to the manifest's directory. A sample may set
//! `"holdout": true` to keep a seen-class sample out of training so it can be
//! scored in the generalized setting.
//!
//! Feature files hold one snippet per line as comma-separated reals, no
//! header, LF or CRLF line endings.

use std::collections::{BTreeSet, HashSet};
use std::fs;
use std::path::{Path, PathBuf};

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const DEFAULT_ATTRIBUTE_COUNT: usize = 53;

const TEXT_NORM_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Stream {
    Body,
    Hand,
}

impl Stream {
    pub fn as_str(self) -> &'static str {
        match self {
            Stream::Body => "body",
            Stream::Hand => "hand",
        }
    }
}

/// Snippet features of one stream of one sample: `T` rows of width `d_s`.
///
/// Construction guarantees `T >= 1`, `d_s >= 1` and a rectangular shape.
/// Finiteness is checked by [`validate_dataset`] so that bad data can be
/// reported rather than refused outright.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureSequence {
    pub sample_id: String,
    pub stream: Stream,
    data: DMatrix<f64>,
}

impl FeatureSequence {
    pub fn from_matrix(sample_id: impl Into<String>, stream: Stream, data: DMatrix<f64>) -> Result<Self> {
        if data.nrows() == 0 {
            return Err(Error::EmptySequence);
        }
        let sample_id = sample_id.into();
        if data.ncols() == 0 {
            return Err(Error::InvariantViolation(format!(
                "sample {sample_id} {} has zero-width rows",
                stream.as_str()
            )));
        }
        Ok(Self {
            sample_id,
            stream,
            data,
        })
    }

    pub fn from_rows(sample_id: impl Into<String>, stream: Stream, rows: &[Vec<f64>]) -> Result<Self> {
        let sample_id = sample_id.into();
        let Some(first) = rows.first() else {
            return Err(Error::EmptySequence);
        };
        let width = first.len();
        if let Some((i, row)) = rows.iter().enumerate().find(|(_, r)| r.len() != width) {
            return Err(Error::InvariantViolation(format!(
                "sample {sample_id} {} row {i} has {} columns, expected {width}",
                stream.as_str(),
                row.len()
            )));
        }
        let data = DMatrix::from_fn(rows.len(), width, |i, j| rows[i][j]);
        Self::from_matrix(sample_id, stream, data)
    }

    /// Number of snippets `T`.
    pub fn len(&self) -> usize {
        self.data.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.data.nrows() == 0
    }

    pub fn width(&self) -> usize {
        self.data.ncols()
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.data
    }

    pub fn rows(&self) -> Vec<Vec<f64>> {
        (0..self.len())
            .map(|i| self.data.row(i).iter().copied().collect())
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    pub sample_id: String,
    pub class_id: String,
    pub body: FeatureSequence,
    pub hand: Option<FeatureSequence>,
    /// Seen-class sample reserved for generalized evaluation.
    pub holdout: bool,
}

impl Sample {
    pub fn sequence(&self, stream: Stream) -> Option<&FeatureSequence> {
        match stream {
            Stream::Body => Some(&self.body),
            Stream::Hand => self.hand.as_ref(),
        }
    }
}

/// Class identity with its binary attribute vector and text vector.
#[derive(Debug, Clone, PartialEq)]
pub struct ClassDescriptor {
    pub class_id: String,
    pub name: String,
    /// Entries are 0.0 or 1.0 once validated.
    pub attributes: Vec<f64>,
    pub text: Vec<f64>,
}

impl ClassDescriptor {
    /// Builds a descriptor and rescales `text` to unit l2 norm.
    pub fn new(
        class_id: impl Into<String>,
        name: impl Into<String>,
        attributes: Vec<f64>,
        text: Vec<f64>,
    ) -> Result<Self> {
        let class_id = class_id.into();
        let text = l2_normalized(&text).ok_or_else(|| {
            Error::InvariantViolation(format!("class {class_id} text vector has zero or non-finite norm"))
        })?;
        Ok(Self {
            class_id,
            name: name.into(),
            attributes,
            text,
        })
    }

    pub fn attribute_count(&self) -> usize {
        self.attributes.len()
    }

    pub fn text_dim(&self) -> usize {
        self.text.len()
    }

    /// True when attribute `k` is set.
    pub fn has_attribute(&self, k: usize) -> bool {
        self.attributes.get(k).is_some_and(|&a| a == 1.0)
    }
}

fn l2_normalized(v: &[f64]) -> Option<Vec<f64>> {
    let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    if !norm.is_finite() || norm == 0.0 {
        return None;
    }
    // Rescaling a vector that is already unit length can move its last
    // bits, which would break file round trips.
    if (norm - 1.0).abs() <= 4.0 * f64::EPSILON {
        return Some(v.to_vec());
    }
    Some(v.iter().map(|x| x / norm).collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SplitMode {
    Zsl,
    Gzsl,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SplitConfig {
    pub mode: SplitMode,
    pub seen: BTreeSet<String>,
    pub validation: BTreeSet<String>,
    pub unseen: BTreeSet<String>,
}

impl SplitConfig {
    pub fn is_seen(&self, class_id: &str) -> bool {
        self.seen.contains(class_id)
    }

    pub fn is_unseen(&self, class_id: &str) -> bool {
        self.unseen.contains(class_id)
    }
}

/// Which part of a dataset an evaluation runs on.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EvalScope {
    /// Validation-class samples against validation-class candidates.
    Validation,
    /// Unseen-class samples against unseen candidates (ZSL), or unseen plus
    /// held-out seen samples against all seen and unseen classes (GZSL).
    Test,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub attribute_count: usize,
    pub attribute_names: Vec<String>,
    pub classes: Vec<ClassDescriptor>,
    pub samples: Vec<Sample>,
    pub split: SplitConfig,
}

impl Dataset {
    pub fn class(&self, class_id: &str) -> Option<&ClassDescriptor> {
        self.classes.iter().find(|c| c.class_id == class_id)
    }

    pub fn text_dim(&self) -> usize {
        self.classes.first().map_or(0, ClassDescriptor::text_dim)
    }

    /// Two-stream embeddings are only possible when every sample has a hand
    /// sequence.
    pub fn hand_available(&self) -> bool {
        !self.samples.is_empty() && self.samples.iter().all(|s| s.hand.is_some())
    }

    /// Descriptors for a set of class ids, ordered by id.
    pub fn classes_in<'a>(&'a self, ids: impl IntoIterator<Item = &'a String>) -> Result<Vec<&'a ClassDescriptor>> {
        let ids: BTreeSet<&String> = ids.into_iter().collect();
        ids.into_iter()
            .map(|id| self.class(id).ok_or_else(|| Error::UnknownClass(id.clone())))
            .collect()
    }

    pub fn seen_classes(&self) -> Result<Vec<&ClassDescriptor>> {
        self.classes_in(&self.split.seen)
    }

    /// Samples used for fitting: seen classes, excluding held-out samples.
    pub fn training_samples(&self) -> Vec<&Sample> {
        self.samples
            .iter()
            .filter(|s| self.split.is_seen(&s.class_id) && !s.holdout)
            .collect()
    }

    pub fn candidates(&self, scope: EvalScope) -> Result<Vec<&ClassDescriptor>> {
        match (scope, self.split.mode) {
            (EvalScope::Validation, _) => self.classes_in(&self.split.validation),
            (EvalScope::Test, SplitMode::Zsl) => self.classes_in(&self.split.unseen),
            (EvalScope::Test, SplitMode::Gzsl) => self.classes_in(self.split.seen.iter().chain(&self.split.unseen)),
        }
    }

    pub fn evaluation_samples(&self, scope: EvalScope) -> Vec<&Sample> {
        let split = &self.split;
        self.samples
            .iter()
            .filter(|s| match (scope, split.mode) {
                (EvalScope::Validation, _) => split.validation.contains(&s.class_id),
                (EvalScope::Test, SplitMode::Zsl) => split.is_unseen(&s.class_id),
                (EvalScope::Test, SplitMode::Gzsl) => {
                    split.is_unseen(&s.class_id) || (split.is_seen(&s.class_id) && s.holdout)
                }
            })
            .collect()
    }
}

/// Lists every broken invariant, naming the offending entity. Empty means
/// the dataset is well formed.
pub fn validate_dataset(d: &Dataset) -> Vec<String> {
    let mut out = Vec::new();

    if d.attribute_names.len() != d.attribute_count {
        out.push(format!(
            "attribute_names has {} entries, attribute_count is {}",
            d.attribute_names.len(),
            d.attribute_count
        ));
    }

    let mut class_ids = HashSet::new();
    let text_dim = d.text_dim();
    for c in &d.classes {
        if !class_ids.insert(c.class_id.as_str()) {
            out.push(format!("class {} duplicated", c.class_id));
        }
        if c.attributes.len() != d.attribute_count {
            out.push(format!(
                "class {} has {} attributes, expected {}",
                c.class_id,
                c.attributes.len(),
                d.attribute_count
            ));
        }
        for (k, &a) in c.attributes.iter().enumerate() {
            if a != 0.0 && a != 1.0 {
                out.push(format!("class {} attribute {k} not binary", c.class_id));
            }
        }
        if c.text.len() != text_dim {
            out.push(format!(
                "class {} text has {} dims, expected {text_dim}",
                c.class_id,
                c.text.len()
            ));
        }
        if c.text.iter().any(|x| !x.is_finite()) {
            out.push(format!("class {} text non-finite", c.class_id));
        } else {
            let norm = c.text.iter().map(|x| x * x).sum::<f64>().sqrt();
            if (norm - 1.0).abs() > TEXT_NORM_TOLERANCE {
                out.push(format!("class {} text norm {norm} is not 1", c.class_id));
            }
        }
    }

    let mut sample_ids = HashSet::new();
    let body_width = d.samples.first().map(|s| s.body.width());
    let hand_width = d.samples.iter().find_map(|s| s.hand.as_ref().map(FeatureSequence::width));
    for s in &d.samples {
        if !sample_ids.insert(s.sample_id.as_str()) {
            out.push(format!("sample {} duplicated", s.sample_id));
        }
        if !class_ids.contains(s.class_id.as_str()) {
            out.push(format!("sample {} references unknown class {}", s.sample_id, s.class_id));
        }
        if Some(s.body.width()) != body_width {
            out.push(format!(
                "sample {} body width {} differs from {}",
                s.sample_id,
                s.body.width(),
                body_width.unwrap_or(0)
            ));
        }
        for seq in std::iter::once(&s.body).chain(s.hand.as_ref()) {
            for (i, row) in seq.matrix().row_iter().enumerate() {
                if row.iter().any(|x| !x.is_finite()) {
                    out.push(format!("sample {} {} row {i} non-finite", s.sample_id, seq.stream.as_str()));
                }
            }
        }
        if let Some(hand) = &s.hand {
            if hand.len() != s.body.len() {
                out.push(format!(
                    "sample {} hand has {} snippets, body has {}",
                    s.sample_id,
                    hand.len(),
                    s.body.len()
                ));
            }
            if Some(hand.width()) != hand_width {
                out.push(format!("sample {} hand width {} differs", s.sample_id, hand.width()));
            }
        }
    }

    let split = &d.split;
    for (name, set) in [
        ("seen", &split.seen),
        ("validation", &split.validation),
        ("unseen", &split.unseen),
    ] {
        for id in set {
            if !class_ids.contains(id.as_str()) {
                out.push(format!("split {name} references unknown class {id}"));
            }
        }
    }
    if split.mode == SplitMode::Zsl {
        let pairs = [
            ("seen", &split.seen, "unseen", &split.unseen),
            ("seen", &split.seen, "validation", &split.validation),
            ("validation", &split.validation, "unseen", &split.unseen),
        ];
        for (a_name, a, b_name, b) in pairs {
            for id in a.intersection(b) {
                out.push(format!("class {id} is in both {a_name} and {b_name} splits"));
            }
        }
    }

    out
}

#[derive(Debug, Serialize, Deserialize)]
struct ManifestFile {
    #[serde(default = "default_attribute_count")]
    attribute_count: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    attribute_names: Option<Vec<String>>,
    classes: Vec<ManifestClass>,
    samples: Vec<ManifestSample>,
    split: ManifestSplit,
}

fn default_attribute_count() -> usize {
    DEFAULT_ATTRIBUTE_COUNT
}

#[derive(Debug, Serialize, Deserialize)]
struct ManifestClass {
    id: String,
    name: String,
    attributes: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    text: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    text_file: Option<String>,
}

#[derive(Debug, Serialize, Deserialize)]
struct ManifestSample {
    id: String,
    class_id: String,
    body: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    hand: Option<String>,
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    holdout: bool,
}

#[derive(Debug, Serialize, Deserialize)]
struct ManifestSplit {
    mode: SplitMode,
    seen: Vec<String>,
    #[serde(default)]
    validation: Vec<String>,
    unseen: Vec<String>,
}

/// Default attribute labels when a manifest does not name them.
pub fn default_attribute_names(count: usize) -> Vec<String> {
    (0..count).map(|k| format!("attr_{k}")).collect()
}

/// Loads and validates a dataset manifest.
///
/// Text vectors are l2-normalized on load. Any violated invariant is
/// reported as [`Error::InvariantViolation`] listing every violation found.
pub fn load_dataset(manifest_path: impl AsRef<Path>) -> Result<Dataset> {
    let manifest_path = manifest_path.as_ref();
    let raw = read_existing(manifest_path)?;
    let manifest: ManifestFile = serde_json::from_str(&raw).map_err(|e| {
        Error::parse(
            format!("{} line {} column {}", manifest_path.display(), e.line(), e.column()),
            e,
        )
    })?;
    let base = manifest_path.parent().unwrap_or(Path::new("."));

    let mut classes = Vec::with_capacity(manifest.classes.len());
    for mc in manifest.classes {
        let text = match (mc.text, mc.text_file) {
            (Some(text), None) => text,
            (None, Some(file)) => read_text_row(&base.join(file))?,
            (Some(_), Some(_)) => {
                return Err(Error::parse(
                    format!("class {}", mc.id),
                    "both \"text\" and \"text_file\" given",
                ))
            }
            (None, None) => {
                return Err(Error::parse(
                    format!("class {}", mc.id),
                    "one of \"text\" or \"text_file\" is required",
                ))
            }
        };
        classes.push(ClassDescriptor::new(mc.id, mc.name, mc.attributes, text)?);
    }

    let mut samples = Vec::with_capacity(manifest.samples.len());
    for ms in manifest.samples {
        let body = read_feature_file(&base.join(&ms.body), &ms.id, Stream::Body)?;
        let hand = ms
            .hand
            .as_ref()
            .map(|p| read_feature_file(&base.join(p), &ms.id, Stream::Hand))
            .transpose()?;
        samples.push(Sample {
            sample_id: ms.id,
            class_id: ms.class_id,
            body,
            hand,
            holdout: ms.holdout,
        });
    }

    let attribute_names = manifest
        .attribute_names
        .unwrap_or_else(|| default_attribute_names(manifest.attribute_count));
    let dataset = Dataset {
        attribute_count: manifest.attribute_count,
        attribute_names,
        classes,
        samples,
        split: SplitConfig {
            mode: manifest.split.mode,
            seen: manifest.split.seen.into_iter().collect(),
            validation: manifest.split.validation.into_iter().collect(),
            unseen: manifest.split.unseen.into_iter().collect(),
        },
    };

    let violations = validate_dataset(&dataset);
    if !violations.is_empty() {
        return Err(Error::InvariantViolation(violations.join("; ")));
    }
    Ok(dataset)
}

fn read_existing(path: &Path) -> Result<String> {
    if !path.is_file() {
        return Err(Error::MissingFile(path.to_path_buf()));
    }
    Ok(fs::read_to_string(path)?)
}

fn parse_rows(path: &Path) -> Result<Vec<Vec<f64>>> {
    let raw = read_existing(path)?;
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(raw.as_bytes());
    let mut rows = Vec::new();
    for (line, record) in reader.records().enumerate() {
        let record = record.map_err(|e| Error::parse(format!("{} line {}", path.display(), line + 1), e))?;
        let row = record
            .iter()
            .enumerate()
            .map(|(field, s)| {
                s.parse::<f64>().map_err(|e| {
                    Error::parse(
                        format!("{} line {} field {}", path.display(), line + 1, field + 1),
                        format!("{e}: {s:?}"),
                    )
                })
            })
            .collect::<Result<Vec<f64>>>()?;
        rows.push(row);
    }
    Ok(rows)
}

fn read_feature_file(path: &Path, sample_id: &str, stream: Stream) -> Result<FeatureSequence> {
    let rows = parse_rows(path)?;
    FeatureSequence::from_rows(sample_id, stream, &rows)
}

fn read_text_row(path: &Path) -> Result<Vec<f64>> {
    let mut rows = parse_rows(path)?;
    if rows.len() != 1 {
        return Err(Error::parse(
            path.display().to_string(),
            format!("expected exactly one row, found {}", rows.len()),
        ));
    }
    Ok(rows.remove(0))
}

fn format_row(row: impl IntoIterator<Item = f64>) -> String {
    // `Display` for f64 prints the shortest string that parses back to the
    // same bits.
    row.into_iter().map(|x| x.to_string()).collect::<Vec<_>>().join(",")
}

/// Writes `manifest.json` plus one feature file per sample stream under
/// `dir/features/`. Returns the manifest path.
pub fn write_dataset(dataset: &Dataset, dir: impl AsRef<Path>) -> Result<PathBuf> {
    let dir = dir.as_ref();
    let feature_dir = dir.join("features");
    fs::create_dir_all(&feature_dir)?;

    let mut samples = Vec::with_capacity(dataset.samples.len());
    for (i, s) in dataset.samples.iter().enumerate() {
        let mut write_stream = |seq: &FeatureSequence| -> Result<String> {
            let rel = format!("features/{i:06}_{}.csv", seq.stream.as_str());
            let mut text = String::new();
            for row in seq.matrix().row_iter() {
                text.push_str(&format_row(row.iter().copied()));
                text.push('\n');
            }
            fs::write(dir.join(&rel), text)?;
            Ok(rel)
        };
        let body = write_stream(&s.body)?;
        let hand = s.hand.as_ref().map(&mut write_stream).transpose()?;
        samples.push(ManifestSample {
            id: s.sample_id.clone(),
            class_id: s.class_id.clone(),
            body,
            hand,
            holdout: s.holdout,
        });
    }

    let manifest = ManifestFile {
        attribute_count: dataset.attribute_count,
        attribute_names: Some(dataset.attribute_names.clone()),
        classes: dataset
            .classes
            .iter()
            .map(|c| ManifestClass {
                id: c.class_id.clone(),
                name: c.name.clone(),
                attributes: c.attributes.clone(),
                text: Some(c.text.clone()),
                text_file: None,
            })
            .collect(),
        samples,
        split: ManifestSplit {
            mode: dataset.split.mode,
            seen: dataset.split.seen.iter().cloned().collect(),
            validation: dataset.split.validation.iter().cloned().collect(),
            unseen: dataset.split.unseen.iter().cloned().collect(),
        },
    };
    let path = dir.join("manifest.json");
    let json = serde_json::to_string_pretty(&manifest).map_err(|e| Error::parse("manifest", e))?;
    fs::write(&path, json + "\n")?;
    Ok(path)
}
