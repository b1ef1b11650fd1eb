//! Orthogonal rotations of the top-k right singular directions.
//!
//! A rotation block `G_k` is produced from a packed skew-symmetric generator
//! `K` either exactly through the Cayley transform `(I − K)(I + K)⁻¹`, or to
//! first order as `I − 2K`. The unconstrained mode skips the generator and
//! trains `G_k` directly.

use std::fmt;
use std::str::FromStr;

use crate::densela::Matrix;
use crate::error::{Error, Result};

/// How the top-k rotation block is parameterised.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum RotationMode {
    /// Cayley transform; exactly special orthogonal.
    Strict,
    /// `I − 2K`; orthogonal up to `O(‖K‖²)`.
    Approximate,
    /// Free `k × k` matrix.
    Unconstrained,
}

impl RotationMode {
    pub const ALL: [RotationMode; 3] = [
        RotationMode::Strict,
        RotationMode::Approximate,
        RotationMode::Unconstrained,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            RotationMode::Strict => "strict",
            RotationMode::Approximate => "approx",
            RotationMode::Unconstrained => "none",
        }
    }

    /// Trainable entries of the rotation block alone (scalings excluded).
    pub fn rotation_params(self, k: usize) -> usize {
        match self {
            RotationMode::Strict | RotationMode::Approximate => k * (k - 1) / 2,
            RotationMode::Unconstrained => k * k,
        }
    }
}

impl fmt::Display for RotationMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for RotationMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "strict" => Ok(RotationMode::Strict),
            "approx" | "approximate" => Ok(RotationMode::Approximate),
            "none" | "unconstrained" => Ok(RotationMode::Unconstrained),
            other => Err(Error::invalid(format!("unknown rotation mode {other:?}"))),
        }
    }
}

/// Strictly-upper-triangular entries of a skew-symmetric `dim × dim`
/// matrix, packed row by row.
#[derive(Debug, Clone, PartialEq)]
pub struct SkewParam {
    dim: usize,
    packed: Vec<f64>,
}

impl SkewParam {
    pub fn zeros(dim: usize) -> Self {
        Self {
            dim,
            packed: vec![0.0; packed_len(dim)],
        }
    }

    pub fn new(dim: usize, packed: Vec<f64>) -> Result<Self> {
        if packed.len() != packed_len(dim) {
            return Err(Error::dim(
                "SkewParam::new",
                format!("{} packed entries for k={dim}", packed_len(dim)),
                packed.len(),
            ));
        }
        Ok(Self { dim, packed })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn packed(&self) -> &[f64] {
        &self.packed
    }

    pub fn packed_mut(&mut self) -> &mut [f64] {
        &mut self.packed
    }

    /// Reduces a full `dim × dim` gradient `dL/dK` to packed coordinates:
    /// each packed entry drives `K[i][j]` and `−K[j][i]`.
    pub fn reduce_gradient(dim: usize, full: &Matrix) -> Vec<f64> {
        let mut out = Vec::with_capacity(packed_len(dim));
        for i in 0..dim {
            for j in i + 1..dim {
                out.push(full.get(i, j) - full.get(j, i));
            }
        }
        out
    }
}

pub fn packed_len(dim: usize) -> usize {
    dim * dim.saturating_sub(1) / 2
}

/// Full skew-symmetric matrix from its packed upper triangle.
pub fn expand_skew(p: &SkewParam) -> Matrix {
    let k = p.dim;
    let mut m = Matrix::zeros(k, k);
    let mut idx = 0;
    for i in 0..k {
        for j in i + 1..k {
            let v = p.packed[idx];
            m.set(i, j, v);
            m.set(j, i, -v);
            idx += 1;
        }
    }
    m
}

/// `(I − K)(I + K)⁻¹` for an arbitrary square `K`. Orthogonal whenever `K`
/// is skew-symmetric.
pub fn cayley_from_matrix(k: &Matrix) -> Result<Matrix> {
    let n = k.rows();
    if k.cols() != n {
        return Err(Error::dim("cayley", "square generator", format!("{}x{}", n, k.cols())));
    }
    let eye = Matrix::identity(n);
    let plus = eye.add(k)?;
    let minus = eye.sub(k)?;
    // (I − K) and (I + K)⁻¹ commute, so G = (I + K)⁻¹ (I − K)
    plus.solve(&minus).map_err(|e| match e {
        Error::Singular(_) => Error::Singular("cayley_strict"),
        other => other,
    })
}

pub fn cayley_strict(p: &SkewParam) -> Result<Matrix> {
    cayley_from_matrix(&expand_skew(p))
}

/// First-order Cayley map `I − 2K`.
pub fn cayley_approx(p: &SkewParam) -> Matrix {
    let mut g = expand_skew(p).scale(-2.0);
    for i in 0..p.dim {
        g.set(i, i, 1.0);
    }
    g
}

/// Block-diagonal `[[G_k, 0], [0, I_{n−k}]]`.
pub fn embed_topk(gk: &Matrix, n: usize) -> Result<Matrix> {
    let k = gk.rows();
    if gk.cols() != k {
        return Err(Error::dim("embed_topk", "square block", format!("{}x{}", k, gk.cols())));
    }
    if k > n {
        return Err(Error::invalid(format!("embed_topk block size {k} exceeds n={n}")));
    }
    Ok(Matrix::from_fn(n, n, |i, j| {
        if i < k && j < k {
            gk.get(i, j)
        } else if i == j {
            1.0
        } else {
            0.0
        }
    }))
}

/// Packed gradient through the strict Cayley map, given the forward output
/// `g` and `upstream = dL/dG`.
///
/// Uses `dG = −(I + G)·dK·(I + K)⁻¹`, hence
/// `dL/dK = −(I + G)ᵀ · upstream · (I + K)⁻ᵀ`.
pub fn cayley_strict_grad(p: &SkewParam, g: &Matrix, upstream: &Matrix) -> Result<Vec<f64>> {
    let k = p.dim;
    for (name, m) in [("forward output", g), ("upstream", upstream)] {
        if m.shape() != (k, k) {
            return Err(Error::dim(
                "cayley_strict_grad",
                format!("{name} {k}x{k}"),
                format!("{}x{}", m.rows(), m.cols()),
            ));
        }
    }
    let plus = Matrix::identity(k).add(&expand_skew(p))?;
    let i_plus_g = Matrix::identity(k).add(g)?;
    let left = i_plus_g.t_matmul(upstream)?;
    // Z = left · (I+K)⁻ᵀ  <=>  (I+K) Zᵀ = leftᵀ
    let z = plus.solve(&left.transpose())?.transpose();
    Ok(SkewParam::reduce_gradient(k, &z.scale(-1.0)))
}

/// Packed gradient through `I − 2K`.
pub fn cayley_approx_grad(p: &SkewParam, upstream: &Matrix) -> Result<Vec<f64>> {
    let k = p.dim;
    if upstream.shape() != (k, k) {
        return Err(Error::dim(
            "cayley_approx_grad",
            format!("{k}x{k}"),
            format!("{}x{}", upstream.rows(), upstream.cols()),
        ));
    }
    Ok(SkewParam::reduce_gradient(k, &upstream.scale(-2.0)))
}

/// `‖GᵀG − I‖_F`.
pub fn orthogonality_error(g: &Matrix) -> f64 {
    let gtg = g.t_matmul(g).expect("square");
    gtg.sub(&Matrix::identity(g.cols()))
        .expect("square")
        .frobenius_norm()
}

/// Rotation block for a given mode. `full` is only consulted in
/// unconstrained mode.
pub fn rotation_block(mode: RotationMode, skew: &SkewParam, full: Option<&Matrix>) -> Result<Matrix> {
    match mode {
        RotationMode::Strict => cayley_strict(skew),
        RotationMode::Approximate => Ok(cayley_approx(skew)),
        RotationMode::Unconstrained => full
            .cloned()
            .ok_or_else(|| Error::invalid("unconstrained rotation without a block")),
    }
}
