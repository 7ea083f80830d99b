//! Closed-form baselines.
//!
//! ESZSL minimizes
//! `‖XᵀWS − Y‖² + γ‖WS‖² + λ‖XᵀW‖² + γλ‖W‖²`
//! with `X` the `d × N` video embeddings, `S` the `t × C` seen-class
//! embeddings and `Y ∈ {−1, +1}^{N × C}`, giving
//! `W = (XXᵀ + γI)⁻¹ X Y Sᵀ (SSᵀ + λI)⁻¹`.
//!
//! SAE learns a `t × d` encoder `P` from the Sylvester equation
//! `SSᵀP + λ P XXᵀ = (1 + λ) S Xᵀ`, here with `S` the per-sample class
//! embeddings (`t × N`). The model stores `W = Pᵀ` so that scoring is the
//! same bilinear form as the other methods.
//!
//! Neither method can learn a text reduction, so modes that need one are
//! rejected.

use nalgebra::DMatrix;

use super::{CompatModel, Hyperparams, Method, TrainingSet};
use crate::class_embed::{compose_embedding, EmbeddingMode};
use crate::error::{Error, Result};

/// Above this many unknowns the Sylvester solver diagonalizes instead of
/// forming the Kronecker system.
pub const KRONECKER_LIMIT: usize = 1024;

fn ensure_no_reduction(set: &TrainingSet, mode: &EmbeddingMode) -> Result<()> {
    if mode.uses_reduction(set.text_dim()) {
        return Err(Error::Unsupported(format!(
            "closed-form methods cannot learn a text reduction; use d_t = {} or the lle method",
            set.text_dim()
        )));
    }
    Ok(())
}

/// `t × C` matrix of seen-class embeddings, in `set.classes` order.
fn class_matrix(set: &TrainingSet, mode: &EmbeddingMode) -> Result<DMatrix<f64>> {
    let cols = set
        .classes
        .iter()
        .map(|c| compose_embedding(c, mode, None).map(|e| e.vector))
        .collect::<Result<Vec<_>>>()?;
    Ok(DMatrix::from_columns(&cols))
}

#[derive(Debug, Clone)]
pub struct EszslProblem {
    /// `d × N`.
    pub x: DMatrix<f64>,
    /// `t × C`.
    pub s: DMatrix<f64>,
    /// `N × C`, +1 at the true class, −1 elsewhere.
    pub y: DMatrix<f64>,
    pub gamma: f64,
    pub lambda: f64,
}

impl EszslProblem {
    pub fn new(x: DMatrix<f64>, s: DMatrix<f64>, labels: &[usize], gamma: f64, lambda: f64) -> Self {
        let mut y = DMatrix::from_element(labels.len(), s.ncols(), -1.0);
        for (i, &l) in labels.iter().enumerate() {
            y[(i, l)] = 1.0;
        }
        Self { x, s, y, gamma, lambda }
    }

    pub fn from_training_set(set: &TrainingSet, mode: &EmbeddingMode, gamma: f64, lambda: f64) -> Result<Self> {
        ensure_no_reduction(set, mode)?;
        Ok(Self::new(
            set.video_matrix(),
            class_matrix(set, mode)?,
            &set.labels,
            gamma,
            lambda,
        ))
    }

    pub fn objective(&self, w: &DMatrix<f64>) -> f64 {
        let ws = w * &self.s;
        let xtw = self.x.tr_mul(w);
        (self.x.tr_mul(&ws) - &self.y).norm_squared()
            + self.gamma * ws.norm_squared()
            + self.lambda * xtw.norm_squared()
            + self.gamma * self.lambda * w.norm_squared()
    }

    pub fn gradient(&self, w: &DMatrix<f64>) -> DMatrix<f64> {
        let xxt = &self.x * self.x.transpose();
        let sst = &self.s * self.s.transpose();
        let residual = self.x.tr_mul(&(w * &self.s)) - &self.y;
        (&self.x * residual * self.s.transpose()
            + w * &sst * self.gamma
            + &xxt * w * self.lambda
            + w * (self.gamma * self.lambda))
            * 2.0
    }

    /// Magnitude of the data term in the gradient, `‖2XYSᵀ‖_F`.
    pub fn gradient_scale(&self) -> f64 {
        (&self.x * &self.y * self.s.transpose()).norm() * 2.0
    }

    pub fn solve(&self) -> Result<DMatrix<f64>> {
        let d = self.x.nrows();
        let t = self.s.nrows();
        let left = &self.x * self.x.transpose() + DMatrix::identity(d, d) * self.gamma;
        let right = &self.s * self.s.transpose() + DMatrix::identity(t, t) * self.lambda;
        let left = left
            .cholesky()
            .ok_or_else(|| Error::SingularSystem("XXᵀ + γI is not positive definite".into()))?;
        let right = right
            .cholesky()
            .ok_or_else(|| Error::SingularSystem("SSᵀ + λI is not positive definite".into()))?;
        let middle = &self.x * &self.y * self.s.transpose();
        // W (SSᵀ + λI) = (XXᵀ + γI)⁻¹ X Y Sᵀ; the right factor is symmetric.
        let partial = left.solve(&middle);
        let w = right.solve(&partial.transpose()).transpose();
        if w.iter().any(|x| !x.is_finite()) {
            return Err(Error::SingularSystem("ESZSL solution is not finite".into()));
        }
        Ok(w)
    }
}

pub fn train_eszsl(set: &TrainingSet, mode: EmbeddingMode, gamma: f64, lambda: f64) -> Result<CompatModel> {
    if !(gamma > 0.0 && lambda > 0.0) {
        return Err(Error::InvariantViolation(format!(
            "ESZSL needs gamma > 0 and lambda > 0, got {gamma} and {lambda}"
        )));
    }
    let problem = EszslProblem::from_training_set(set, &mode, gamma, lambda)?;
    let w = problem.solve()?;
    Ok(CompatModel {
        method: Method::Eszsl,
        mode,
        final_loss: problem.objective(&w),
        w,
        reduction: None,
        text_dim: set.text_dim(),
        hyperparams: Hyperparams {
            gamma: Some(gamma),
            lambda: Some(lambda),
            ..Hyperparams::default()
        },
        seed: 0,
        epochs: 0,
    })
}

/// Solves `A P + P B = C` by vectorizing: `(I ⊗ A + Bᵀ ⊗ I) vec(P) = vec(C)`.
pub fn solve_sylvester_kron(a: &DMatrix<f64>, b: &DMatrix<f64>, c: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let (t, d) = c.shape();
    if a.shape() != (t, t) || b.shape() != (d, d) {
        return Err(Error::DimensionMismatch("Sylvester operands do not conform".into()));
    }
    let n = t * d;
    // Column-major vec: entry (i, j) of P sits at j * t + i.
    let mut k = DMatrix::zeros(n, n);
    for j in 0..d {
        for i in 0..t {
            let row = j * t + i;
            for l in 0..t {
                k[(row, j * t + l)] += a[(i, l)];
            }
            for l in 0..d {
                k[(row, l * t + i)] += b[(l, j)];
            }
        }
    }
    let rhs = nalgebra::DVector::from_column_slice(c.as_slice());
    let solution = k
        .lu()
        .solve(&rhs)
        .ok_or_else(|| Error::SingularSystem("Kronecker system is singular".into()))?;
    if solution.iter().any(|x| !x.is_finite()) {
        return Err(Error::SingularSystem("Kronecker solution is not finite".into()));
    }
    Ok(DMatrix::from_column_slice(t, d, solution.as_slice()))
}

/// Solves `A P + P B = C` for symmetric `A` and `B` by diagonalizing both.
pub fn solve_sylvester_symmetric(a: &DMatrix<f64>, b: &DMatrix<f64>, c: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let (t, d) = c.shape();
    if a.shape() != (t, t) || b.shape() != (d, d) {
        return Err(Error::DimensionMismatch("Sylvester operands do not conform".into()));
    }
    let ea = a.clone().symmetric_eigen();
    let eb = b.clone().symmetric_eigen();
    let mut rotated = ea.eigenvectors.tr_mul(c) * &eb.eigenvectors;
    let scale = ea.eigenvalues.amax().max(eb.eigenvalues.amax()).max(f64::MIN_POSITIVE);
    for j in 0..d {
        for i in 0..t {
            let denom = ea.eigenvalues[i] + eb.eigenvalues[j];
            if denom.abs() <= scale * 1e-14 {
                return Err(Error::SingularSystem("Sylvester operator has a zero eigenvalue".into()));
            }
            rotated[(i, j)] /= denom;
        }
    }
    Ok(&ea.eigenvectors * rotated * eb.eigenvectors.transpose())
}

#[derive(Debug, Clone)]
pub struct SaeProblem {
    /// `d × N`.
    pub x: DMatrix<f64>,
    /// `t × N`, the class embedding of each sample.
    pub s: DMatrix<f64>,
    pub lambda: f64,
}

impl SaeProblem {
    pub fn from_training_set(set: &TrainingSet, mode: &EmbeddingMode, lambda: f64) -> Result<Self> {
        ensure_no_reduction(set, mode)?;
        let classes = class_matrix(set, mode)?;
        let s = DMatrix::from_fn(classes.nrows(), set.len(), |i, n| classes[(i, set.labels[n])]);
        Ok(Self {
            x: set.video_matrix(),
            s,
            lambda,
        })
    }

    /// `(SSᵀ, λXXᵀ, (1+λ)SXᵀ)`, the `A`, `B`, `C` of `AP + PB = C`.
    pub fn operands(&self) -> (DMatrix<f64>, DMatrix<f64>, DMatrix<f64>) {
        let a = &self.s * self.s.transpose();
        let b = &self.x * self.x.transpose() * self.lambda;
        let c = &self.s * self.x.transpose() * (1.0 + self.lambda);
        (a, b, c)
    }

    /// Encoder `P` (`t × d`).
    pub fn solve(&self) -> Result<DMatrix<f64>> {
        let (a, b, c) = self.operands();
        if c.len() <= KRONECKER_LIMIT {
            solve_sylvester_kron(&a, &b, &c)
        } else {
            solve_sylvester_symmetric(&a, &b, &c)
        }
    }

    /// `‖SSᵀP + λPXXᵀ − (1+λ)SXᵀ‖_F / ‖(1+λ)SXᵀ‖_F`.
    pub fn relative_residual(&self, p: &DMatrix<f64>) -> f64 {
        let (a, b, c) = self.operands();
        (&a * p + p * &b - &c).norm() / c.norm()
    }

    /// `‖X − PᵀS‖² + λ‖PX − S‖²`.
    pub fn objective(&self, p: &DMatrix<f64>) -> f64 {
        (&self.x - p.tr_mul(&self.s)).norm_squared() + self.lambda * (p * &self.x - &self.s).norm_squared()
    }
}

pub fn train_sae(set: &TrainingSet, mode: EmbeddingMode, lambda_sae: f64) -> Result<CompatModel> {
    if lambda_sae.is_nan() || lambda_sae <= 0.0 {
        return Err(Error::InvariantViolation(format!("SAE needs lambda > 0, got {lambda_sae}")));
    }
    let problem = SaeProblem::from_training_set(set, &mode, lambda_sae)?;
    let p = problem.solve()?;
    Ok(CompatModel {
        method: Method::Sae,
        mode,
        final_loss: problem.objective(&p),
        w: p.transpose(),
        reduction: None,
        text_dim: set.text_dim(),
        hyperparams: Hyperparams {
            lambda_sae: Some(lambda_sae),
            ..Hyperparams::default()
        },
        seed: 0,
        epochs: 0,
    })
}
