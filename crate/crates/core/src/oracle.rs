//! Brute-force reference implementations.
//!
//! Every function here recomputes a quantity the fast paths also compute,
//! using explicit loops over plain slices and compensated summation. They
//! exist to be compared against, so they never touch nalgebra. Instances
//! are capped at 64 along every dimension.

use std::collections::BTreeMap;

use crate::error::{Error, Result};

/// Largest dimension an oracle accepts.
pub const MAX_DIM: usize = 64;

/// Neumaier-compensated running sum.
#[derive(Debug, Default, Clone, Copy)]
pub struct CompensatedSum {
    sum: f64,
    carry: f64,
}

impl CompensatedSum {
    pub fn add(&mut self, x: f64) {
        let t = self.sum + x;
        if self.sum.abs() >= x.abs() {
            self.carry += (self.sum - t) + x;
        } else {
            self.carry += (x - t) + self.sum;
        }
        self.sum = t;
    }

    pub fn value(&self) -> f64 {
        self.sum + self.carry
    }
}

fn csum(values: impl IntoIterator<Item = f64>) -> f64 {
    let mut s = CompensatedSum::default();
    for v in values {
        s.add(v);
    }
    s.value()
}

fn check(what: &str, dims: &[usize]) -> Result<()> {
    if let Some(&d) = dims.iter().find(|&&d| d > MAX_DIM) {
        return Err(Error::InstanceTooLarge(format!("{what}: dimension {d} exceeds {MAX_DIM}")));
    }
    Ok(())
}

fn check_rect(what: &str, rows: &[Vec<f64>], width: usize) -> Result<()> {
    for (i, r) in rows.iter().enumerate() {
        if r.len() != width {
            return Err(Error::DimensionMismatch(format!(
                "{what}: row {i} has {} entries, expected {width}",
                r.len()
            )));
        }
    }
    Ok(())
}

/// Column means of a row list.
pub fn brute_column_means(rows: &[Vec<f64>]) -> Result<Vec<f64>> {
    if rows.is_empty() {
        return Err(Error::EmptySequence);
    }
    let width = rows[0].len();
    check("column means", &[rows.len(), width])?;
    check_rect("column means", rows, width)?;
    let n = rows.len() as f64;
    Ok((0..width)
        .map(|j| {
            let mut s = CompensatedSum::default();
            for row in rows {
                s.add(row[j]);
            }
            s.value() / n
        })
        .collect())
}

/// Three-tap shift kernel with zero boundaries, then column means.
pub fn brute_tsm(rows: &[Vec<f64>], weights: [f64; 3]) -> Result<Vec<f64>> {
    if rows.is_empty() {
        return Err(Error::EmptySequence);
    }
    let t = rows.len();
    let width = rows[0].len();
    check("tsm", &[t, width])?;
    check_rect("tsm", rows, width)?;
    let at = |i: isize, j: usize| -> f64 {
        if i < 0 || i as usize >= t {
            0.0
        } else {
            rows[i as usize][j]
        }
    };
    let mut out = vec![0.0; width];
    for (j, slot) in out.iter_mut().enumerate() {
        let mut s = CompensatedSum::default();
        for i in 0..t as isize {
            let y = weights[0] * at(i - 1, j) + weights[1] * at(i, j) + weights[2] * at(i + 1, j);
            s.add(y);
        }
        *slot = s.value() / t as f64;
    }
    Ok(out)
}

/// `Σ_i Σ_j φ_i W_ij ρ_j`.
pub fn brute_bilinear(phi: &[f64], w_rows: &[Vec<f64>], rho: &[f64]) -> Result<f64> {
    check("bilinear", &[phi.len(), rho.len()])?;
    if w_rows.len() != phi.len() {
        return Err(Error::DimensionMismatch(format!(
            "bilinear: W has {} rows, phi has {}",
            w_rows.len(),
            phi.len()
        )));
    }
    check_rect("bilinear", w_rows, rho.len())?;
    let mut s = CompensatedSum::default();
    for (i, row) in w_rows.iter().enumerate() {
        for (j, w) in row.iter().enumerate() {
            s.add(phi[i] * w * rho[j]);
        }
    }
    Ok(s.value())
}

/// `exp(s_i − max) / Σ exp(s_j − max)` with a compensated denominator.
pub fn brute_softmax(scores: &[f64]) -> Result<Vec<f64>> {
    if scores.is_empty() {
        return Err(Error::EmptyCandidates);
    }
    check("softmax", &[scores.len()])?;
    let mut max = scores[0];
    for &s in scores {
        if s > max {
            max = s;
        }
    }
    let exps: Vec<f64> = scores.iter().map(|s| (s - max).exp()).collect();
    let z = csum(exps.iter().copied());
    Ok(exps.into_iter().map(|e| e / z).collect())
}

/// Per class: (samples whose truth is within the first `k` ranked ids,
/// samples of that class).
pub fn brute_topk_count<S: AsRef<str>>(rankings: &[Vec<S>], truths: &[S], k: usize) -> BTreeMap<String, (usize, usize)> {
    let mut out: BTreeMap<String, (usize, usize)> = BTreeMap::new();
    for (ranking, truth) in rankings.iter().zip(truths) {
        let truth = truth.as_ref();
        let mut hit = false;
        let mut i = 0;
        while i < ranking.len() && i < k {
            if ranking[i].as_ref() == truth {
                hit = true;
            }
            i += 1;
        }
        let entry = out.entry(truth.to_string()).or_insert((0, 0));
        if hit {
            entry.0 += 1;
        }
        entry.1 += 1;
    }
    out
}

/// Central differences `(f(x + h e_i) − f(x − h e_i)) / 2h`.
pub fn finite_difference_grad(f: impl Fn(&[f64]) -> f64, x: &[f64], h: f64) -> Vec<f64> {
    let mut probe = x.to_vec();
    let mut grad = Vec::with_capacity(x.len());
    for i in 0..x.len() {
        let orig = probe[i];
        probe[i] = orig + h;
        let up = f(&probe);
        probe[i] = orig - h;
        let down = f(&probe);
        probe[i] = orig;
        grad.push((up - down) / (2.0 * h));
    }
    grad
}

/// Largest elementwise `|a − b| / max(|a|, |b|, 1e-8)`.
pub fn max_relative_error(a: &[f64], b: &[f64]) -> f64 {
    assert_eq!(a.len(), b.len(), "relative error of unequal lengths");
    let mut worst: f64 = 0.0;
    for (x, y) in a.iter().zip(b) {
        let denom = x.abs().max(y.abs()).max(1e-8);
        worst = worst.max((x - y).abs() / denom);
    }
    worst
}

fn dims(what: &str, m: &[Vec<f64>]) -> Result<(usize, usize)> {
    let r = m.len();
    let c = m.first().map_or(0, |row| row.len());
    check(what, &[r, c])?;
    check_rect(what, m, c)?;
    Ok((r, c))
}

fn matmul(a: &[Vec<f64>], b: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let n = a.len();
    let inner = b.len();
    let m = b.first().map_or(0, |r| r.len());
    let mut out = vec![vec![0.0; m]; n];
    for i in 0..n {
        for j in 0..m {
            let mut s = CompensatedSum::default();
            for k in 0..inner {
                s.add(a[i][k] * b[k][j]);
            }
            out[i][j] = s.value();
        }
    }
    out
}

/// `‖A P + P B − C‖_F / ‖C‖_F`.
pub fn sylvester_residual(a: &[Vec<f64>], b: &[Vec<f64>], c: &[Vec<f64>], p: &[Vec<f64>]) -> Result<f64> {
    let (ar, ac) = dims("sylvester A", a)?;
    let (br, bc) = dims("sylvester B", b)?;
    let (cr, cc) = dims("sylvester C", c)?;
    let (pr, pc) = dims("sylvester P", p)?;
    if ar != ac || br != bc || ar != cr || bc != cc || pr != cr || pc != cc {
        return Err(Error::DimensionMismatch(format!(
            "sylvester: A {ar}x{ac}, B {br}x{bc}, C {cr}x{cc}, P {pr}x{pc}"
        )));
    }
    let ap = matmul(a, p);
    let pb = matmul(p, b);
    let mut num = CompensatedSum::default();
    let mut den = CompensatedSum::default();
    for i in 0..cr {
        for j in 0..cc {
            let r = ap[i][j] + pb[i][j] - c[i][j];
            num.add(r * r);
            den.add(c[i][j] * c[i][j]);
        }
    }
    Ok(num.value().sqrt() / den.value().sqrt())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn compensated_sum_recovers_cancelled_terms() {
        let v = csum([1e16, 1.0, -1e16]);
        assert_eq!(v, 1.0);
    }

    #[test]
    fn bilinear_hand_value() {
        let w = vec![vec![1.0, 2.0], vec![3.0, 4.0]];
        assert_eq!(brute_bilinear(&[1.0, -1.0], &w, &[0.5, 1.0]).unwrap(), -3.0);
    }

    #[test]
    fn softmax_uniform_and_oversize() {
        assert_eq!(brute_softmax(&[2.0; 4]).unwrap(), vec![0.25; 4]);
        assert!(matches!(brute_softmax(&[0.0; 65]), Err(Error::InstanceTooLarge(_))));
    }

    #[test]
    fn topk_count_toy() {
        let r = vec![vec!["a", "b", "c"], vec!["b", "a", "c"], vec!["c", "b", "a"]];
        let t = vec!["a", "a", "c"];
        let m = brute_topk_count(&r, &t, 1);
        assert_eq!(m["a"], (1, 2));
        assert_eq!(m["c"], (1, 1));
        assert_eq!(brute_topk_count(&r, &t, 2)["a"], (2, 2));
    }

    #[test]
    fn finite_difference_of_quadratic() {
        let g = finite_difference_grad(|x| x[0] * x[0] + 3.0 * x[1], &[2.0, 5.0], 1e-5);
        assert!((g[0] - 4.0).abs() < 1e-8);
        assert!((g[1] - 3.0).abs() < 1e-8);
    }

    #[test]
    fn sylvester_residual_exact_solution() {
        let a = vec![vec![2.0, 0.0], vec![0.0, 3.0]];
        let b = vec![vec![1.0]];
        let p = vec![vec![1.0], vec![2.0]];
        let c = vec![vec![3.0], vec![8.0]];
        assert_eq!(sylvester_residual(&a, &b, &c, &p).unwrap(), 0.0);
    }
}
