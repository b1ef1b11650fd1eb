//! Thin singular value decomposition by one-sided Jacobi rotations.
//!
//! For an `m × n` input with `m ≥ n` the factors are `U` (`m × n`, orthonormal
//! columns), `σ` (`n` values, non-increasing) and `V` (`n × n`, orthogonal),
//! with `W = U·diag(σ)·Vᵀ`. Wide inputs are factored through their transpose
//! and flagged so callers can swap the roles of `U` and `V`.
//!
//! Output is fully deterministic: the sweep order is fixed, ties in `σ` are
//! ordered by original column index, and each right singular vector has its
//! largest-magnitude entry made non-negative.

use crate::densela::Matrix;
use crate::error::{Error, Result};

const MAX_SWEEPS: usize = 60;

#[derive(Debug, Clone, PartialEq)]
pub struct SvdFactors {
    pub u: Matrix,
    pub sigma: Vec<f64>,
    pub v: Matrix,
    /// The input had fewer rows than columns and its transpose was factored.
    pub transposed: bool,
}

/// Factors in the orientation of the original input:
/// `W = left · diag(sigma) · rightᵀ` with `left` being `m × r`, `right`
/// `n × r` and `r = min(m, n)`. `left` spans the output side, `right` the
/// input side.
#[derive(Debug, Clone, PartialEq)]
pub struct OrientedSvd {
    pub left: Matrix,
    pub sigma: Vec<f64>,
    pub right: Matrix,
}

impl SvdFactors {
    pub fn rank_dim(&self) -> usize {
        self.sigma.len()
    }

    /// `U·diag(σ)·Vᵀ`, i.e. the (possibly transposed) factored matrix.
    pub fn reconstruct(&self) -> Matrix {
        partial_sum(&self.u, &self.sigma, &self.v, 0, self.sigma.len())
    }

    pub fn oriented(&self) -> OrientedSvd {
        let (left, right) = if self.transposed {
            (self.v.clone(), self.u.clone())
        } else {
            (self.u.clone(), self.v.clone())
        };
        OrientedSvd {
            left,
            sigma: self.sigma.clone(),
            right,
        }
    }

    fn orient(&self, m: Matrix) -> Matrix {
        if self.transposed {
            m.transpose()
        } else {
            m
        }
    }

    /// Best rank-`k` approximation `Σ_{i<k} σᵢ uᵢ vᵢᵀ`, returned in the
    /// orientation of the original input.
    pub fn truncate(&self, k: usize) -> Result<Matrix> {
        let n = self.sigma.len();
        if k == 0 || k > n {
            return Err(Error::invalid(format!("truncate rank {k} outside 1..={n}")));
        }
        Ok(self.orient(partial_sum(&self.u, &self.sigma, &self.v, 0, k)))
    }

    /// The tail `Σ_{i≥k} σᵢ uᵢ vᵢᵀ` in the orientation of the original input.
    pub fn residual(&self, k: usize) -> Result<Matrix> {
        let n = self.sigma.len();
        if k > n {
            return Err(Error::invalid(format!("residual rank {k} outside 0..={n}")));
        }
        Ok(self.orient(partial_sum(&self.u, &self.sigma, &self.v, k, n)))
    }
}

impl OrientedSvd {
    pub fn rank_dim(&self) -> usize {
        self.sigma.len()
    }

    pub fn partial(&self, start: usize, end: usize) -> Matrix {
        partial_sum(&self.left, &self.sigma, &self.right, start, end)
    }
}

fn partial_sum(u: &Matrix, sigma: &[f64], v: &Matrix, start: usize, end: usize) -> Matrix {
    let mut out = Matrix::zeros(u.rows(), v.rows());
    for idx in start..end {
        let s = sigma[idx];
        if s == 0.0 {
            continue;
        }
        for i in 0..u.rows() {
            let ui = s * u.get(i, idx);
            if ui == 0.0 {
                continue;
            }
            for j in 0..v.rows() {
                let cur = out.get(i, j);
                out.set(i, j, cur + ui * v.get(j, idx));
            }
        }
    }
    out
}

/// Thin SVD of `w`.
pub fn svd(w: &Matrix) -> Result<SvdFactors> {
    if w.is_empty() {
        return Err(Error::invalid("svd of an empty matrix"));
    }
    if !w.is_finite() {
        return Err(Error::NonFinite("svd"));
    }
    let transposed = w.rows() < w.cols();
    let a = if transposed { w.transpose() } else { w.clone() };
    let (m, n) = a.shape();

    // work on columns for contiguous access
    let mut cols: Vec<Vec<f64>> = (0..n).map(|j| a.column(j)).collect();
    let mut vcols: Vec<Vec<f64>> = (0..n)
        .map(|j| (0..n).map(|i| if i == j { 1.0 } else { 0.0 }).collect())
        .collect();

    let fro2: f64 = a.as_slice().iter().map(|x| x * x).sum();
    let rel_tol = f64::EPSILON * (m as f64).sqrt();
    let abs_floor = fro2 * 1e-300;

    for _sweep in 0..MAX_SWEEPS {
        let mut rotated = false;
        for p in 0..n.saturating_sub(1) {
            for q in p + 1..n {
                let alpha = dot(&cols[p], &cols[p]);
                let beta = dot(&cols[q], &cols[q]);
                let gamma = dot(&cols[p], &cols[q]);
                if gamma.abs() <= rel_tol * (alpha * beta).sqrt() || gamma.abs() <= abs_floor {
                    continue;
                }
                rotated = true;
                let zeta = (beta - alpha) / (2.0 * gamma);
                let t = zeta.signum() / (zeta.abs() + (1.0 + zeta * zeta).sqrt());
                let c = 1.0 / (1.0 + t * t).sqrt();
                let s = c * t;
                rotate(&mut cols, p, q, c, s);
                rotate(&mut vcols, p, q, c, s);
            }
        }
        if !rotated {
            break;
        }
    }

    let norms: Vec<f64> = cols.iter().map(|c| dot(c, c).sqrt()).collect();
    let mut order: Vec<usize> = (0..n).collect();
    // stable sort keeps index order among exact ties
    order.sort_by(|&i, &j| norms[j].total_cmp(&norms[i]));

    let sigma: Vec<f64> = order.iter().map(|&j| norms[j]).collect();
    let sigma_max = sigma[0];
    let negligible = sigma_max * 1e-13;

    let mut u_cols: Vec<Vec<f64>> = Vec::with_capacity(n);
    let mut next_basis = 0usize;
    for &j in &order {
        let candidate = if norms[j] > negligible && norms[j] > 0.0 {
            let inv = 1.0 / norms[j];
            Some(cols[j].iter().map(|x| x * inv).collect::<Vec<f64>>())
        } else {
            None
        };
        let col = match candidate.and_then(|c| orthonormalize(c, &u_cols)) {
            Some(c) => c,
            None => loop {
                // completion with standard basis vectors for null directions
                let mut e = vec![0.0; m];
                e[next_basis] = 1.0;
                next_basis += 1;
                if let Some(c) = orthonormalize(e, &u_cols) {
                    break c;
                }
            },
        };
        u_cols.push(col);
    }

    let mut v_cols: Vec<Vec<f64>> = order.iter().map(|&j| vcols[j].clone()).collect();
    for (uc, vc) in u_cols.iter_mut().zip(v_cols.iter_mut()) {
        let mut lead = 0;
        for (i, x) in vc.iter().enumerate() {
            if x.abs() > vc[lead].abs() {
                lead = i;
            }
        }
        if vc[lead] < 0.0 {
            vc.iter_mut().for_each(|x| *x = -*x);
            uc.iter_mut().for_each(|x| *x = -*x);
        }
    }

    let u = Matrix::from_fn(m, n, |i, j| u_cols[j][i]);
    let v = Matrix::from_fn(n, n, |i, j| v_cols[j][i]);
    Ok(SvdFactors {
        u,
        sigma,
        v,
        transposed,
    })
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn rotate(cols: &mut [Vec<f64>], p: usize, q: usize, c: f64, s: f64) {
    let (head, tail) = cols.split_at_mut(q);
    let (cp, cq) = (&mut head[p], &mut tail[0]);
    for (x, y) in cp.iter_mut().zip(cq.iter_mut()) {
        let (xp, xq) = (*x, *y);
        *x = c * xp - s * xq;
        *y = s * xp + c * xq;
    }
}

/// Two passes of modified Gram-Schmidt against `basis`; `None` when the
/// vector is (numerically) inside the span.
fn orthonormalize(mut v: Vec<f64>, basis: &[Vec<f64>]) -> Option<Vec<f64>> {
    let start = dot(&v, &v).sqrt();
    for _ in 0..2 {
        for b in basis {
            let proj = dot(&v, b);
            v.iter_mut().zip(b).for_each(|(x, y)| *x -= proj * y);
        }
    }
    let norm = dot(&v, &v).sqrt();
    if norm <= 1e-8 * start || norm == 0.0 {
        return None;
    }
    v.iter_mut().for_each(|x| *x /= norm);
    Some(v)
}
