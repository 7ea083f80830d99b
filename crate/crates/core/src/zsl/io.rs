//! Model files.
//!
//! JSON with keys `method`, `mode`, `d`, `t`, `d_text`, `d_t`, `W`
//! (row-major), `M` (row-major or null), `hyperparams`, `seed`, `epochs`,
//! `final_loss`. Reals are written in shortest round-trip form, so a reload
//! reproduces every bit.

use std::fs;
use std::path::Path;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use super::{CompatModel, Hyperparams, Method};
use crate::class_embed::{EmbeddingKind, EmbeddingMode, ReductionMatrix};
use crate::error::{Error, Result};

#[derive(Debug, Serialize, Deserialize)]
struct ModelFile {
    method: Method,
    mode: EmbeddingKind,
    d: usize,
    t: usize,
    d_text: usize,
    d_t: usize,
    #[serde(rename = "W")]
    w: Vec<f64>,
    #[serde(rename = "M")]
    m: Option<Vec<f64>>,
    hyperparams: Hyperparams,
    seed: u64,
    epochs: usize,
    final_loss: f64,
}

fn row_major(m: &DMatrix<f64>) -> Vec<f64> {
    m.transpose().as_slice().to_vec()
}

pub fn model_to_json(model: &CompatModel) -> String {
    let file = ModelFile {
        method: model.method,
        mode: model.mode.kind,
        d: model.d(),
        t: model.t(),
        d_text: model.text_dim,
        d_t: model.mode.d_t,
        w: row_major(&model.w),
        m: model.reduction.as_ref().map(|m| row_major(m.matrix())),
        hyperparams: model.hyperparams,
        seed: model.seed,
        epochs: model.epochs,
        final_loss: model.final_loss,
    };
    serde_json::to_string_pretty(&file).expect("model serializes") + "\n"
}

pub fn model_from_json(raw: &str) -> Result<CompatModel> {
    let file: ModelFile = serde_json::from_str(raw)
        .map_err(|e| Error::SchemaMismatch(format!("line {} column {}: {e}", e.line(), e.column())))?;
    if file.w.len() != file.d * file.t {
        return Err(Error::SchemaMismatch(format!(
            "W has {} entries, header says {}x{}",
            file.w.len(),
            file.d,
            file.t
        )));
    }
    let mode = EmbeddingMode::new(file.mode, file.d_t).map_err(|e| Error::SchemaMismatch(e.to_string()))?;
    let attr_block = mode.attribute_block(file.t);
    if mode.has_text() && file.t < file.d_t || mode.embedding_len(attr_block) != file.t {
        return Err(Error::SchemaMismatch(format!(
            "t = {} is inconsistent with mode {:?} and d_t = {}",
            file.t, file.mode, file.d_t
        )));
    }
    let needs_m = mode.uses_reduction(file.d_text);
    let reduction = match (needs_m, file.m) {
        (true, Some(m)) => {
            if m.len() != file.d_text * file.d_t {
                return Err(Error::SchemaMismatch(format!(
                    "M has {} entries, header says {}x{}",
                    m.len(),
                    file.d_text,
                    file.d_t
                )));
            }
            Some(ReductionMatrix::new(DMatrix::from_row_slice(file.d_text, file.d_t, &m))?)
        }
        (false, None) => None,
        (true, None) => return Err(Error::SchemaMismatch("mode needs M but it is null".into())),
        (false, Some(_)) => return Err(Error::SchemaMismatch("M given for a mode without text reduction".into())),
    };
    let w = DMatrix::from_row_slice(file.d, file.t, &file.w);
    if w.iter().any(|x| !x.is_finite()) {
        return Err(Error::SchemaMismatch("W has non-finite entries".into()));
    }
    Ok(CompatModel {
        method: file.method,
        mode,
        w,
        reduction,
        text_dim: file.d_text,
        hyperparams: file.hyperparams,
        seed: file.seed,
        epochs: file.epochs,
        final_loss: file.final_loss,
    })
}

pub fn save_model(model: &CompatModel, path: impl AsRef<Path>) -> Result<()> {
    fs::write(path, model_to_json(model))?;
    Ok(())
}

pub fn load_model(path: impl AsRef<Path>) -> Result<CompatModel> {
    let path = path.as_ref();
    if !path.is_file() {
        return Err(Error::MissingFile(path.to_path_buf()));
    }
    model_from_json(&fs::read_to_string(path)?)
}
