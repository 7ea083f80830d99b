//! Logistic label embedding: softmax cross-entropy over seen-class
//! compatibility scores plus `λ‖W‖²`, minimized by full-batch gradient
//! descent.
//!
//! When the embedding mode reduces text, the reduction `M` is learned
//! jointly with `W`. The step size is halved (up to [`MAX_HALVINGS`] times
//! per epoch) whenever a step would raise the loss, so the recorded loss
//! sequence never increases. A halved step is kept for later epochs.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use super::{CompatModel, Hyperparams, Method, TrainingSet};
use crate::class_embed::{EmbeddingMode, ReductionMatrix};
use crate::error::{Error, Result};
use crate::rng;

pub const MAX_HALVINGS: usize = 30;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub lambda: f64,
    pub learning_rate: f64,
    pub epochs: usize,
    pub seed: u64,
    pub init_scale: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            lambda: 1e-3,
            learning_rate: 1e-2,
            epochs: 1000,
            seed: 0,
            init_scale: 1e-3,
        }
    }
}

impl TrainConfig {
    fn validate(&self) -> Result<()> {
        let ok = self.lambda >= 0.0
            && self.lambda.is_finite()
            && self.learning_rate > 0.0
            && self.learning_rate.is_finite()
            && self.epochs > 0
            && self.init_scale >= 0.0
            && self.init_scale.is_finite();
        if ok {
            Ok(())
        } else {
            Err(Error::InvariantViolation(format!("invalid training config {self:?}")))
        }
    }
}

/// Loss value with its gradients.
#[derive(Debug, Clone)]
pub struct LleGradient {
    pub loss: f64,
    pub w: DMatrix<f64>,
    /// Present iff the objective learns a text reduction.
    pub m: Option<DMatrix<f64>>,
}

/// The training objective over a fixed training set.
///
/// Class embeddings are assembled as a `t × C` matrix whose leading rows are
/// the attribute vectors and trailing rows are `Mᵀτ` (or `τ` when text is
/// used unreduced).
#[derive(Debug, Clone)]
pub struct LleObjective {
    /// `N × d`.
    phi: DMatrix<f64>,
    labels: Vec<usize>,
    /// `A × C`, zero rows when the mode has no attributes.
    attrs: DMatrix<f64>,
    /// `D_text × C`, zero rows when the mode has no text.
    texts: DMatrix<f64>,
    mode: EmbeddingMode,
    lambda: f64,
}

impl LleObjective {
    pub fn new(set: &TrainingSet, mode: EmbeddingMode, lambda: f64) -> Result<Self> {
        let n = set.len();
        let d = set.video_dim();
        let c = set.classes.len();
        let phi = DMatrix::from_fn(n, d, |i, j| set.phis[i].vector[j]);
        let a = if mode.has_attributes() { set.attribute_count() } else { 0 };
        let dt = if mode.has_text() { set.text_dim() } else { 0 };
        let attrs = DMatrix::from_fn(a, c, |k, j| set.classes[j].attributes[k]);
        let texts = DMatrix::from_fn(dt, c, |k, j| set.classes[j].text[k]);
        Ok(Self {
            phi,
            labels: set.labels.clone(),
            attrs,
            texts,
            mode,
            lambda,
        })
    }

    pub fn uses_reduction(&self) -> bool {
        self.mode.uses_reduction(self.texts.nrows())
    }

    pub fn video_dim(&self) -> usize {
        self.phi.ncols()
    }

    pub fn embedding_len(&self) -> usize {
        self.attrs.nrows() + if self.mode.has_text() { self.mode.d_t } else { 0 }
    }

    pub fn text_dim(&self) -> usize {
        self.texts.nrows()
    }

    /// Panics on shapes that do not belong to this objective.
    fn check_shapes(&self, w: &DMatrix<f64>, m: Option<&DMatrix<f64>>) {
        assert_eq!(w.shape(), (self.video_dim(), self.embedding_len()), "W shape");
        match (self.uses_reduction(), m) {
            (true, Some(m)) => assert_eq!(m.shape(), (self.texts.nrows(), self.mode.d_t), "M shape"),
            (false, None) => {}
            (true, None) => panic!("objective needs a reduction matrix"),
            (false, Some(_)) => panic!("objective takes no reduction matrix"),
        }
    }

    /// `t × C` class embedding matrix.
    pub fn class_matrix(&self, m: Option<&DMatrix<f64>>) -> DMatrix<f64> {
        let a = self.attrs.nrows();
        let t = self.embedding_len();
        let c = self.attrs.ncols().max(self.texts.ncols());
        let mut r = DMatrix::zeros(t, c);
        r.rows_mut(0, a).copy_from(&self.attrs);
        if self.mode.has_text() {
            match m {
                Some(m) => r.rows_mut(a, self.mode.d_t).copy_from(&m.tr_mul(&self.texts)),
                None => r.rows_mut(a, self.mode.d_t).copy_from(&self.texts),
            }
        }
        r
    }

    /// `(N × C)` per-sample class probabilities and the loss.
    fn forward(&self, w: &DMatrix<f64>, r: &DMatrix<f64>) -> (f64, DMatrix<f64>) {
        let scores = &self.phi * w * r;
        let n = scores.nrows();
        let mut probs = DMatrix::zeros(n, scores.ncols());
        let mut nll = 0.0;
        for i in 0..n {
            let row = scores.row(i);
            let max = row.max();
            let total: f64 = row.iter().map(|s| (s - max).exp()).sum();
            let lse = max + total.ln();
            nll -= row[self.labels[i]] - lse;
            for (j, s) in row.iter().enumerate() {
                probs[(i, j)] = (s - lse).exp();
            }
        }
        let loss = nll / n as f64 + self.lambda * w.norm_squared();
        (loss, probs)
    }

    pub fn loss(&self, w: &DMatrix<f64>, m: Option<&DMatrix<f64>>) -> f64 {
        self.check_shapes(w, m);
        self.forward(w, &self.class_matrix(m)).0
    }

    /// Analytic gradient of the objective with respect to `W` and `M`.
    pub fn gradient(&self, w: &DMatrix<f64>, m: Option<&DMatrix<f64>>) -> LleGradient {
        self.check_shapes(w, m);
        let r = self.class_matrix(m);
        let (loss, mut g) = self.forward(w, &r);
        let n = g.nrows() as f64;
        for (i, &y) in self.labels.iter().enumerate() {
            g[(i, y)] -= 1.0;
        }
        g /= n;
        // dL/dScores = G; Scores = Φ W R.
        let phi_t_g = self.phi.tr_mul(&g);
        let grad_w = &phi_t_g * r.transpose() + w * (2.0 * self.lambda);
        let grad_m = m.map(|_| {
            let grad_r = w.tr_mul(&phi_t_g);
            let a = self.attrs.nrows();
            let grad_text = grad_r.rows(a, self.mode.d_t);
            &self.texts * grad_text.transpose()
        });
        LleGradient {
            loss,
            w: grad_w,
            m: grad_m,
        }
    }
}

/// Trained model plus the per-epoch loss log (entry 0 is the initial loss).
#[derive(Debug, Clone)]
pub struct LleFit {
    pub model: CompatModel,
    pub loss_log: Vec<f64>,
}

/// Fits `W` (and `M` when the mode reduces text) on the seen classes.
pub fn train_lle(set: &TrainingSet, mode: EmbeddingMode, cfg: &TrainConfig) -> Result<LleFit> {
    cfg.validate()?;
    if set.classes.len() < 2 {
        return Err(Error::DegenerateData(format!(
            "need at least 2 seen classes, have {}",
            set.classes.len()
        )));
    }
    let objective = LleObjective::new(set, mode, cfg.lambda)?;
    let d = objective.video_dim();
    let t = objective.embedding_len();

    let mut rng = rng::seeded(cfg.seed);
    let mut w = DMatrix::from_fn(d, t, |_, _| rng::symmetric_uniform(&mut rng, cfg.init_scale));
    let mut m = objective.uses_reduction().then(|| {
        DMatrix::from_fn(objective.text_dim(), mode.d_t, |_, _| {
            rng::symmetric_uniform(&mut rng, cfg.init_scale)
        })
    });

    let mut grad = objective.gradient(&w, m.as_ref());
    if !grad.loss.is_finite() {
        return Err(Error::NonFiniteLoss { epoch: 0 });
    }
    let mut loss_log = vec![grad.loss];
    let mut step = cfg.learning_rate;
    let mut epochs_run = 0;

    'epochs: for epoch in 1..=cfg.epochs {
        let mut saw_finite = false;
        for _ in 0..=MAX_HALVINGS {
            let w_next = &w - &grad.w * step;
            let m_next = m.as_ref().zip(grad.m.as_ref()).map(|(m, g)| m - g * step);
            let loss = objective.loss(&w_next, m_next.as_ref());
            saw_finite |= loss.is_finite();
            if loss.is_finite() && loss <= grad.loss {
                w = w_next;
                m = m_next;
                grad = objective.gradient(&w, m.as_ref());
                loss_log.push(grad.loss);
                epochs_run = epoch;
                continue 'epochs;
            }
            step *= 0.5;
        }
        if !saw_finite {
            return Err(Error::NonFiniteLoss { epoch });
        }
        // No descent at any step size: stationary to rounding precision.
        break;
    }

    let reduction = m.map(ReductionMatrix::new).transpose()?;
    let final_loss = *loss_log.last().expect("initial loss recorded");
    Ok(LleFit {
        model: CompatModel {
            method: Method::Lle,
            mode,
            w,
            reduction,
            text_dim: set.text_dim(),
            hyperparams: Hyperparams {
                lambda: Some(cfg.lambda),
                learning_rate: Some(cfg.learning_rate),
                init_scale: Some(cfg.init_scale),
                ..Hyperparams::default()
            },
            seed: cfg.seed,
            epochs: epochs_run,
            final_loss,
        },
        loss_log,
    })
}

#[cfg(test)]
pub(crate) mod tests {
    use super::*;
    use crate::class_embed::EmbeddingKind;
    use crate::data::ClassDescriptor;
    use crate::oracle;
    use crate::temporal::VideoEmbedding;
    use nalgebra::DVector;

    /// Small random problem: `n` samples, `c` classes.
    pub(crate) fn random_set(seed: u64, n: usize, d: usize, c: usize, a: usize, dt: usize) -> TrainingSet {
        let mut r = rng::seeded(seed);
        let classes: Vec<ClassDescriptor> = (0..c)
            .map(|j| {
                let attrs = (0..a).map(|k| ((j + k) % 2) as f64).collect();
                let text = rng::gaussian_vec(&mut r, dt);
                ClassDescriptor::new(format!("c{j}"), "x", attrs, text).unwrap()
            })
            .collect();
        let phis = (0..n)
            .map(|i| VideoEmbedding::new(format!("s{i}"), DVector::from_vec(rng::gaussian_vec(&mut r, d))))
            .collect();
        let labels: Vec<String> = (0..n).map(|i| format!("c{}", i % c)).collect();
        TrainingSet::new(phis, &labels, classes).unwrap()
    }

    fn flatten(m: &DMatrix<f64>) -> Vec<f64> {
        m.iter().copied().collect()
    }

    fn check_gradient(mode: EmbeddingMode, set: &TrainingSet, seed: u64) -> f64 {
        let obj = LleObjective::new(set, mode, 0.05).unwrap();
        let mut r = rng::seeded(seed);
        let (d, t) = (obj.video_dim(), obj.embedding_len());
        let w = DMatrix::from_fn(d, t, |_, _| rng::symmetric_uniform(&mut r, 1.0));
        let m = obj
            .uses_reduction()
            .then(|| DMatrix::from_fn(obj.text_dim(), mode.d_t, |_, _| rng::symmetric_uniform(&mut r, 1.0)));
        let g = obj.gradient(&w, m.as_ref());

        let fd_w = oracle::finite_difference_grad(
            |x| obj.loss(&DMatrix::from_column_slice(d, t, x), m.as_ref()),
            &flatten(&w),
            1e-5,
        );
        let mut worst = oracle::max_relative_error(&flatten(&g.w), &fd_w);
        if let (Some(m), Some(gm)) = (&m, &g.m) {
            let fd_m = oracle::finite_difference_grad(
                |x| obj.loss(&w, Some(&DMatrix::from_column_slice(m.nrows(), m.ncols(), x))),
                &flatten(m),
                1e-5,
            );
            worst = worst.max(oracle::max_relative_error(&flatten(gm), &fd_m));
        }
        worst
    }

    #[test]
    fn gradient_matches_finite_differences_attr() {
        let set = random_set(1, 8, 4, 3, 3, 5);
        assert!(check_gradient(EmbeddingMode::attr_only(), &set, 2) < 1e-5);
    }

    #[test]
    fn gradient_matches_finite_differences_with_reduction() {
        let set = random_set(3, 8, 4, 3, 1, 5);
        let combined = EmbeddingMode::new(EmbeddingKind::Combined, 2).unwrap();
        assert!(check_gradient(combined, &set, 4) < 1e-5);
        let text = EmbeddingMode::new(EmbeddingKind::TextOnly, 3).unwrap();
        assert!(check_gradient(text, &set, 5) < 1e-5);
    }

    #[test]
    fn unreduced_text_has_no_m() {
        let set = random_set(3, 8, 4, 3, 1, 5);
        let mode = EmbeddingMode::new(EmbeddingKind::TextOnly, 5).unwrap();
        let obj = LleObjective::new(&set, mode, 0.1).unwrap();
        assert!(!obj.uses_reduction());
        assert!(check_gradient(mode, &set, 6) < 1e-5);
    }

    #[test]
    fn loss_never_increases_and_is_deterministic() {
        let set = random_set(7, 30, 6, 4, 5, 6);
        let mode = EmbeddingMode::new(EmbeddingKind::Combined, 3).unwrap();
        let cfg = TrainConfig {
            epochs: 200,
            seed: 42,
            learning_rate: 0.5,
            ..TrainConfig::default()
        };
        let a = train_lle(&set, mode, &cfg).unwrap();
        assert!(a.loss_log.windows(2).all(|w| w[1] <= w[0]));
        assert!(a.model.final_loss < a.loss_log[0]);
        let b = train_lle(&set, mode, &cfg).unwrap();
        assert_eq!(a.model, b.model);
        assert_eq!(a.model.reduction.as_ref().unwrap().matrix().shape(), (6, 3));
    }

    #[test]
    fn heavy_regularization_shrinks_w() {
        let set = random_set(8, 20, 5, 3, 4, 4);
        let cfg = TrainConfig {
            lambda: 1e6,
            init_scale: 0.5,
            ..TrainConfig::default()
        };
        let fit = train_lle(&set, EmbeddingMode::attr_only(), &cfg).unwrap();
        assert!(fit.model.w.norm() < 1e-2, "{}", fit.model.w.norm());
    }

    #[test]
    fn one_seen_class_is_degenerate() {
        let set = random_set(8, 4, 3, 1, 2, 2);
        assert!(matches!(
            train_lle(&set, EmbeddingMode::attr_only(), &TrainConfig::default()),
            Err(Error::DegenerateData(_))
        ));
    }

    #[test]
    fn missing_reduction_for_mismatched_bypass() {
        // d_t == text dim means no reduction; any other d_t gets a learned M.
        let set = random_set(9, 6, 3, 2, 2, 4);
        let fit = train_lle(
            &set,
            EmbeddingMode::new(EmbeddingKind::TextOnly, 4).unwrap(),
            &TrainConfig {
                epochs: 5,
                ..TrainConfig::default()
            },
        )
        .unwrap();
        assert!(fit.model.reduction.is_none());
        assert_eq!(fit.model.t(), 4);
    }
}
