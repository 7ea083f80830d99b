//! Class embeddings built from binary attributes and text vectors.
//!
//! The embedding is the attribute vector, the reduced text vector `Mᵀτ`, or
//! their concatenation (attributes first). When `d_t` equals the text
//! dimension and no matrix is supplied, the text vector is used directly.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::data::ClassDescriptor;
use crate::error::{Error, Result};

pub const DEFAULT_TEXT_DIM: usize = 64;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum EmbeddingKind {
    #[serde(rename = "attr")]
    AttrOnly,
    #[serde(rename = "text")]
    TextOnly,
    #[serde(rename = "combined")]
    Combined,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct EmbeddingMode {
    pub kind: EmbeddingKind,
    pub d_t: usize,
}

impl EmbeddingMode {
    pub fn new(kind: EmbeddingKind, d_t: usize) -> Result<Self> {
        if d_t == 0 {
            return Err(Error::InvariantViolation("d_t must be at least 1".into()));
        }
        Ok(Self { kind, d_t })
    }

    pub fn attr_only() -> Self {
        Self {
            kind: EmbeddingKind::AttrOnly,
            d_t: DEFAULT_TEXT_DIM,
        }
    }

    pub fn has_attributes(&self) -> bool {
        matches!(self.kind, EmbeddingKind::AttrOnly | EmbeddingKind::Combined)
    }

    pub fn has_text(&self) -> bool {
        matches!(self.kind, EmbeddingKind::TextOnly | EmbeddingKind::Combined)
    }

    /// A reduction matrix is needed when text is used and `d_t` differs from
    /// the raw text dimension.
    pub fn uses_reduction(&self, text_dim: usize) -> bool {
        self.has_text() && self.d_t != text_dim
    }

    /// Length `t` of the class embedding.
    pub fn embedding_len(&self, attribute_count: usize) -> usize {
        match self.kind {
            EmbeddingKind::AttrOnly => attribute_count,
            EmbeddingKind::TextOnly => self.d_t,
            EmbeddingKind::Combined => attribute_count + self.d_t,
        }
    }

    /// Number of leading embedding coordinates that hold attributes.
    pub fn attribute_block(&self, embedding_len: usize) -> usize {
        match self.kind {
            EmbeddingKind::AttrOnly => embedding_len,
            EmbeddingKind::TextOnly => 0,
            EmbeddingKind::Combined => embedding_len.saturating_sub(self.d_t),
        }
    }
}

/// Linear text reduction, `D_text × d_t`. No bias term.
#[derive(Debug, Clone, PartialEq)]
pub struct ReductionMatrix(pub DMatrix<f64>);

impl ReductionMatrix {
    pub fn new(matrix: DMatrix<f64>) -> Result<Self> {
        if matrix.iter().any(|x| !x.is_finite()) {
            return Err(Error::InvariantViolation("reduction matrix has non-finite entries".into()));
        }
        Ok(Self(matrix))
    }

    pub fn text_dim(&self) -> usize {
        self.0.nrows()
    }

    pub fn reduced_dim(&self) -> usize {
        self.0.ncols()
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.0
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ClassEmbedding {
    pub class_id: String,
    pub vector: DVector<f64>,
}

impl ClassEmbedding {
    pub fn dim(&self) -> usize {
        self.vector.len()
    }
}

fn reduce_text(text: &[f64], mode: &EmbeddingMode, m: Option<&ReductionMatrix>) -> Result<Vec<f64>> {
    match m {
        Some(m) => {
            if m.text_dim() != text.len() || m.reduced_dim() != mode.d_t {
                return Err(Error::DimensionMismatch(format!(
                    "reduction matrix is {}x{}, text has {} dims and d_t is {}",
                    m.text_dim(),
                    m.reduced_dim(),
                    text.len(),
                    mode.d_t
                )));
            }
            let tau = DVector::from_column_slice(text);
            Ok(m.matrix().tr_mul(&tau).iter().copied().collect())
        }
        None if mode.d_t == text.len() => Ok(text.to_vec()),
        None => Err(Error::MissingReduction),
    }
}

/// Builds `ρ(c)` for the given mode.
pub fn compose_embedding(
    c: &ClassDescriptor,
    mode: &EmbeddingMode,
    m: Option<&ReductionMatrix>,
) -> Result<ClassEmbedding> {
    let values: Vec<f64> = match mode.kind {
        EmbeddingKind::AttrOnly => c.attributes.clone(),
        EmbeddingKind::TextOnly => reduce_text(&c.text, mode, m)?,
        EmbeddingKind::Combined => {
            let mut v = c.attributes.clone();
            v.extend(reduce_text(&c.text, mode, m)?);
            v
        }
    };
    Ok(ClassEmbedding {
        class_id: c.class_id.clone(),
        vector: DVector::from_vec(values),
    })
}

/// Copy of `c` with attribute `k` toggled between 0 and 1.
pub fn flip_attribute(c: &ClassDescriptor, k: usize) -> Result<ClassDescriptor> {
    let len = c.attributes.len();
    if k >= len {
        return Err(Error::IndexOutOfRange { index: k, len });
    }
    let mut out = c.clone();
    out.attributes[k] = 1.0 - out.attributes[k];
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn class(attrs: &[f64], text: &[f64]) -> ClassDescriptor {
        ClassDescriptor::new("c", "c", attrs.to_vec(), text.to_vec()).unwrap()
    }

    #[test]
    fn attr_only_is_identity() {
        let c = class(&[1.0, 0.0, 1.0], &[1.0]);
        let e = compose_embedding(&c, &EmbeddingMode::attr_only(), None).unwrap();
        assert_eq!(e.vector.as_slice(), &[1.0, 0.0, 1.0]);
    }

    #[test]
    fn identity_reduction_returns_text() {
        let c = class(&[1.0], &[0.2, -0.4, 0.1, 0.9]);
        let mode = EmbeddingMode::new(EmbeddingKind::TextOnly, 4).unwrap();
        let m = ReductionMatrix::new(DMatrix::identity(4, 4)).unwrap();
        let with_m = compose_embedding(&c, &mode, Some(&m)).unwrap();
        let bypass = compose_embedding(&c, &mode, None).unwrap();
        assert_eq!(with_m.vector.as_slice(), c.text.as_slice());
        assert_eq!(bypass.vector.as_slice(), c.text.as_slice());
    }

    #[test]
    fn combined_length_is_attributes_plus_d_t() {
        let c = class(&[1.0; 53], &[0.5; 768]);
        let mode = EmbeddingMode::new(EmbeddingKind::Combined, 64).unwrap();
        let m = ReductionMatrix::new(DMatrix::from_element(768, 64, 0.01)).unwrap();
        assert_eq!(compose_embedding(&c, &mode, Some(&m)).unwrap().dim(), 117);
        assert_eq!(mode.embedding_len(53), 117);
    }

    #[test]
    fn reduction_errors() {
        let c = class(&[1.0], &[0.5; 6]);
        let mode = EmbeddingMode::new(EmbeddingKind::TextOnly, 3).unwrap();
        assert!(matches!(compose_embedding(&c, &mode, None), Err(Error::MissingReduction)));
        let m = ReductionMatrix::new(DMatrix::zeros(5, 3)).unwrap();
        assert!(matches!(
            compose_embedding(&c, &mode, Some(&m)),
            Err(Error::DimensionMismatch(_))
        ));
        assert!(EmbeddingMode::new(EmbeddingKind::TextOnly, 0).is_err());
    }

    #[test]
    fn flip_cases() {
        assert_eq!(flip_attribute(&class(&[1.0, 0.0], &[1.0]), 0).unwrap().attributes, vec![0.0, 0.0]);
        assert_eq!(
            flip_attribute(&class(&[1.0, 0.0, 1.0], &[1.0]), 1).unwrap().attributes,
            vec![1.0, 1.0, 1.0]
        );
        assert!(matches!(
            flip_attribute(&class(&[1.0], &[1.0]), 1),
            Err(Error::IndexOutOfRange { index: 1, len: 1 })
        ));
    }

    fn descriptor() -> impl Strategy<Value = ClassDescriptor> {
        (
            proptest::collection::vec(prop::bool::ANY, 1..12),
            proptest::collection::vec(0.1f64..1.0, 5),
        )
            .prop_map(|(bits, text)| {
                let attrs = bits.into_iter().map(|b| if b { 1.0 } else { 0.0 }).collect();
                ClassDescriptor::new("c", "c", attrs, text).unwrap()
            })
    }

    fn reduction() -> ReductionMatrix {
        ReductionMatrix::new(DMatrix::from_fn(5, 3, |i, j| ((i * 3 + j) as f64).sin())).unwrap()
    }

    proptest! {
        #[test]
        fn flip_is_an_involution(c in descriptor(), k in 0usize..12) {
            let k = k % c.attributes.len();
            let twice = flip_attribute(&flip_attribute(&c, k).unwrap(), k).unwrap();
            prop_assert_eq!(twice, c);
        }

        #[test]
        fn combined_prefix_is_attr_only(c in descriptor()) {
            let m = reduction();
            let combined = compose_embedding(&c, &EmbeddingMode::new(EmbeddingKind::Combined, 3).unwrap(), Some(&m)).unwrap();
            let attr = compose_embedding(&c, &EmbeddingMode::attr_only(), None).unwrap();
            prop_assert_eq!(&combined.vector.as_slice()[..c.attributes.len()], attr.vector.as_slice());
        }

        #[test]
        fn flip_touches_one_combined_coordinate(c in descriptor(), k in 0usize..12) {
            let k = k % c.attributes.len();
            let m = reduction();
            let mode = EmbeddingMode::new(EmbeddingKind::Combined, 3).unwrap();
            let a = compose_embedding(&c, &mode, Some(&m)).unwrap();
            let b = compose_embedding(&flip_attribute(&c, k).unwrap(), &mode, Some(&m)).unwrap();
            let changed: Vec<usize> = (0..a.dim()).filter(|&i| a.vector[i] != b.vector[i]).collect();
            prop_assert_eq!(changed, vec![k]);
        }

        #[test]
        fn text_block_is_linear(x in proptest::collection::vec(-1.0f64..1.0, 5),
                                y in proptest::collection::vec(-1.0f64..1.0, 5),
                                a in -2.0f64..2.0, b in -2.0f64..2.0) {
            let m = reduction();
            let mode = EmbeddingMode::new(EmbeddingKind::TextOnly, 3).unwrap();
            let combo: Vec<f64> = x.iter().zip(&y).map(|(u, v)| a * u + b * v).collect();
            let rx = reduce_text(&x, &mode, Some(&m)).unwrap();
            let ry = reduce_text(&y, &mode, Some(&m)).unwrap();
            let rc = reduce_text(&combo, &mode, Some(&m)).unwrap();
            for i in 0..3 {
                prop_assert!((rc[i] - (a * rx[i] + b * ry[i])).abs() < 1e-12);
            }
        }
    }
}
