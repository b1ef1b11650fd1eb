use std::sync::Arc;

use sha2::{Digest, Sha256};

use super::spec::{random_offdiag_count, AdapterSpec, Method, SvftVariant};
use crate::densela::{column_norms, random_matrix, Matrix, RngStream};
use crate::error::{Error, Result};
use crate::rotations::{
    cayley_approx, cayley_approx_grad, cayley_strict, cayley_strict_grad, RotationMode, SkewParam,
};
use crate::svd::{svd, OrientedSvd};

/// Denominator floor for DoRA column norms.
pub const DORA_NORM_EPS: f64 = 1e-12;

/// Initial value of VeRA's per-row scaling vector `d`.
pub const VERA_D_INIT: f64 = 0.1;

/// VeRA's frozen random factors `A` (`m × r`) and `B` (`n × r`).
///
/// They are a pure function of `(seed, m, n, r, scale)`, so every layer with
/// the same shape and seed holds identical matrices.
#[derive(Debug, Clone, PartialEq)]
pub struct VeraShared {
    pub a: Matrix,
    pub b: Matrix,
}

impl VeraShared {
    pub fn generate(seed: u64, m: usize, n: usize, rank: usize, scale: f64) -> Self {
        let mut rng = RngStream::new(seed);
        let a = random_matrix(&mut rng, m, rank, scale);
        let b = random_matrix(&mut rng, n, rank, scale);
        VeraShared { a, b }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub(crate) enum Rotation {
    Skew(SkewParam),
    Full(Matrix),
}

#[derive(Debug, Clone, PartialEq)]
pub(crate) enum Body {
    Lora {
        a: Matrix,
        b: Matrix,
    },
    Vera {
        shared: Arc<VeraShared>,
        b: Vec<f64>,
        d: Vec<f64>,
    },
    Dora {
        a: Matrix,
        b: Matrix,
        magnitude: Vec<f64>,
    },
    Pissa {
        a: Matrix,
        b: Matrix,
        residual: Arc<Matrix>,
    },
    Svft {
        basis: Arc<OrientedSvd>,
        support: Arc<Vec<(usize, usize)>>,
        values: Vec<f64>,
    },
    Ssvd {
        basis: Arc<OrientedSvd>,
        /// `Σ_{i≥k} σᵢ uᵢ vᵢᵀ`, derived from `basis`.
        tail: Arc<Matrix>,
        k: usize,
        delta_sigma: Vec<f64>,
        rotation: Rotation,
    },
}

/// A frozen base weight plus the trainable tensors of one adapter.
///
/// Frozen parts sit behind `Arc` and are never modified; every update
/// produces a new state via [`apply_update`](AdapterState::apply_update).
///
/// Flattened parameter order:
/// - LoRA, PiSSA: `A` row-major, then `B` row-major
/// - VeRA: `b` (length `r`), then `d` (length `m`)
/// - DoRA: `A`, `B`, then the magnitude vector
/// - SVFT: values of `M` over its support, row-major
/// - SSVD: `ΔΣ_k`, then the packed skew generator (strict/approx) or the
///   full `G_k` row-major (unconstrained)
#[derive(Debug, Clone, PartialEq)]
pub struct AdapterState {
    pub(crate) spec: AdapterSpec,
    pub(crate) w0: Arc<Matrix>,
    pub(crate) body: Body,
}

impl AdapterState {
    /// Attaches a freshly initialised adapter to `w0`. The effective weight
    /// of the result equals `w0` (exactly for LoRA, VeRA, SVFT; up to SVD
    /// round-off for the SVD-based methods and DoRA's norm quotient).
    pub fn init(spec: AdapterSpec, w0: &Matrix, rng: &mut RngStream) -> Result<Self> {
        if !w0.is_finite() {
            return Err(Error::NonFinite("adapter init"));
        }
        let (m, n) = w0.shape();
        spec.validate(m, n)?;
        let r0 = m.min(n);
        let body = match spec.method {
            Method::Lora { rank } => {
                let scale = spec.init_scale.unwrap_or(1.0 / (rank as f64).sqrt());
                Body::Lora {
                    a: random_matrix(rng, m, rank, scale),
                    b: Matrix::zeros(n, rank),
                }
            }
            Method::Vera { rank, shared_seed } => {
                let scale = spec.init_scale.unwrap_or(1.0 / (rank as f64).sqrt());
                Body::Vera {
                    shared: Arc::new(VeraShared::generate(shared_seed, m, n, rank, scale)),
                    b: vec![0.0; rank],
                    d: vec![VERA_D_INIT; m],
                }
            }
            Method::Dora { rank } => {
                let scale = spec.init_scale.unwrap_or(1.0 / (rank as f64).sqrt());
                Body::Dora {
                    a: random_matrix(rng, m, rank, scale),
                    b: Matrix::zeros(n, rank),
                    magnitude: column_norms(w0),
                }
            }
            Method::Pissa { rank } => {
                let basis = svd(w0)?.oriented();
                let roots: Vec<f64> = basis.sigma[..rank].iter().map(|s| s.sqrt()).collect();
                Body::Pissa {
                    a: basis.left.columns(0, rank).scale_cols(&roots),
                    b: basis.right.columns(0, rank).scale_cols(&roots),
                    residual: Arc::new(basis.partial(rank, r0)),
                }
            }
            Method::Svft { variant } => {
                let basis = svd(w0)?.oriented();
                let support = svft_support(variant, &basis.sigma, rng);
                let values = vec![0.0; support.len()];
                Body::Svft {
                    basis: Arc::new(basis),
                    support: Arc::new(support),
                    values,
                }
            }
            Method::Ssvd { portion, mode } => {
                let basis = svd(w0)?.oriented();
                let k = AdapterSpec::ssvd_k(portion, m, n);
                let rotation = match mode {
                    RotationMode::Unconstrained => Rotation::Full(Matrix::identity(k)),
                    _ => Rotation::Skew(SkewParam::zeros(k)),
                };
                Body::Ssvd {
                    tail: Arc::new(basis.partial(k, r0)),
                    basis: Arc::new(basis),
                    k,
                    delta_sigma: vec![0.0; k],
                    rotation,
                }
            }
        };
        Ok(AdapterState {
            spec,
            w0: Arc::new(w0.clone()),
            body,
        })
    }

    /// Like [`init`](Self::init) for VeRA, but reuses already generated
    /// shared factors instead of regenerating them.
    pub fn init_vera_shared(spec: AdapterSpec, w0: &Matrix, shared: Arc<VeraShared>) -> Result<Self> {
        let Method::Vera { rank, .. } = spec.method else {
            return Err(Error::invalid("init_vera_shared needs a VeRA spec"));
        };
        let (m, n) = w0.shape();
        spec.validate(m, n)?;
        if shared.a.shape() != (m, rank) || shared.b.shape() != (n, rank) {
            return Err(Error::dim(
                "init_vera_shared",
                format!("A {m}x{rank}, B {n}x{rank}"),
                format!("A {:?}, B {:?}", shared.a.shape(), shared.b.shape()),
            ));
        }
        Ok(AdapterState {
            spec,
            w0: Arc::new(w0.clone()),
            body: Body::Vera {
                shared,
                b: vec![0.0; rank],
                d: vec![VERA_D_INIT; m],
            },
        })
    }

    pub fn spec(&self) -> &AdapterSpec {
        &self.spec
    }

    pub fn base_weight(&self) -> &Matrix {
        &self.w0
    }

    /// `(m, n)` of the adapted layer.
    pub fn dims(&self) -> (usize, usize) {
        self.w0.shape()
    }

    pub fn vera_shared(&self) -> Option<&Arc<VeraShared>> {
        match &self.body {
            Body::Vera { shared, .. } => Some(shared),
            _ => None,
        }
    }

    /// SVD basis of the base weight for SVFT and SSVD.
    pub fn basis(&self) -> Option<&OrientedSvd> {
        match &self.body {
            Body::Svft { basis, .. } | Body::Ssvd { basis, .. } => Some(basis),
            _ => None,
        }
    }

    /// Number of top directions SSVD adapts.
    pub fn ssvd_k(&self) -> Option<usize> {
        match &self.body {
            Body::Ssvd { k, .. } => Some(*k),
            _ => None,
        }
    }

    /// Support of SVFT's `M`, row-major.
    pub fn svft_support(&self) -> Option<&[(usize, usize)]> {
        match &self.body {
            Body::Svft { support, .. } => Some(support),
            _ => None,
        }
    }

    pub fn trainable_param_count(&self) -> usize {
        let (m, n) = self.dims();
        self.spec.trainable_param_count(m, n)
    }

    /// Flattened trainable tensors in the documented order.
    pub fn params(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.trainable_param_count());
        match &self.body {
            Body::Lora { a, b } | Body::Pissa { a, b, .. } => {
                out.extend_from_slice(a.as_slice());
                out.extend_from_slice(b.as_slice());
            }
            Body::Vera { b, d, .. } => {
                out.extend_from_slice(b);
                out.extend_from_slice(d);
            }
            Body::Dora { a, b, magnitude } => {
                out.extend_from_slice(a.as_slice());
                out.extend_from_slice(b.as_slice());
                out.extend_from_slice(magnitude);
            }
            Body::Svft { values, .. } => out.extend_from_slice(values),
            Body::Ssvd {
                delta_sigma,
                rotation,
                ..
            } => {
                out.extend_from_slice(delta_sigma);
                match rotation {
                    Rotation::Skew(p) => out.extend_from_slice(p.packed()),
                    Rotation::Full(g) => out.extend_from_slice(g.as_slice()),
                }
            }
        }
        out
    }

    /// Mutable views of the trainable tensors in flat order.
    fn param_slices_mut(&mut self) -> Vec<&mut [f64]> {
        match &mut self.body {
            Body::Lora { a, b } | Body::Pissa { a, b, .. } => {
                vec![a.as_mut_slice(), b.as_mut_slice()]
            }
            Body::Vera { b, d, .. } => vec![b.as_mut_slice(), d.as_mut_slice()],
            Body::Dora { a, b, magnitude } => {
                vec![a.as_mut_slice(), b.as_mut_slice(), magnitude.as_mut_slice()]
            }
            Body::Svft { values, .. } => vec![values.as_mut_slice()],
            Body::Ssvd {
                delta_sigma,
                rotation,
                ..
            } => {
                let rot = match rotation {
                    Rotation::Skew(p) => p.packed_mut(),
                    Rotation::Full(g) => g.as_mut_slice(),
                };
                vec![delta_sigma.as_mut_slice(), rot]
            }
        }
    }

    /// New state with the trainable tensors shifted by `delta`.
    pub fn apply_update(&self, delta: &[f64]) -> Result<AdapterState> {
        let expected = self.trainable_param_count();
        if delta.len() != expected {
            return Err(Error::dim("apply_update", format!("{expected} deltas"), delta.len()));
        }
        if delta.iter().any(|x| !x.is_finite()) {
            return Err(Error::NonFinite("apply_update"));
        }
        let mut next = self.clone();
        let mut offset = 0;
        for slice in next.param_slices_mut() {
            for (p, d) in slice.iter_mut().zip(&delta[offset..]) {
                *p += d;
            }
            offset += slice.len();
        }
        Ok(next)
    }

    /// New state with the trainable tensors replaced by `values`.
    pub fn with_params(&self, values: &[f64]) -> Result<AdapterState> {
        let expected = self.trainable_param_count();
        if values.len() != expected {
            return Err(Error::dim("with_params", format!("{expected} values"), values.len()));
        }
        let mut next = self.clone();
        let mut offset = 0;
        for slice in next.param_slices_mut() {
            let len = slice.len();
            slice.copy_from_slice(&values[offset..offset + len]);
            offset += len;
        }
        Ok(next)
    }

    fn rotation_block(&self) -> Result<Option<Matrix>> {
        match &self.body {
            Body::Ssvd { rotation, .. } => Ok(Some(match (rotation, self.rotation_mode()) {
                (Rotation::Full(g), _) => g.clone(),
                (Rotation::Skew(p), Some(RotationMode::Strict)) => cayley_strict(p)?,
                (Rotation::Skew(p), _) => cayley_approx(p),
            })),
            _ => Ok(None),
        }
    }

    fn rotation_mode(&self) -> Option<RotationMode> {
        match self.spec.method {
            Method::Ssvd { mode, .. } => Some(mode),
            _ => None,
        }
    }

    /// Dense `m × n` weight the adapter is equivalent to.
    pub fn effective_weight(&self) -> Result<Matrix> {
        let w0 = self.w0.as_ref();
        match &self.body {
            Body::Lora { a, b } => w0.add(&a.matmul_t(b)?),
            Body::Vera { shared, b, d } => {
                let scaled = shared.a.scale_rows(d).scale_cols(b);
                w0.add(&scaled.matmul_t(&shared.b)?)
            }
            Body::Dora { a, b, magnitude } => {
                let v = w0.add(&a.matmul_t(b)?)?;
                let factors: Vec<f64> = column_norms(&v)
                    .iter()
                    .zip(magnitude)
                    .map(|(c, mag)| mag / c.max(DORA_NORM_EPS))
                    .collect();
                Ok(v.scale_cols(&factors))
            }
            Body::Pissa { a, b, residual } => a.matmul_t(b)?.add(residual),
            Body::Svft {
                basis,
                support,
                values,
            } => {
                let mut core = Matrix::diag(&basis.sigma);
                for (&(i, j), &v) in support.iter().zip(values) {
                    core.set(i, j, core.get(i, j) + v);
                }
                basis.left.matmul(&core)?.matmul_t(&basis.right)
            }
            Body::Ssvd {
                basis,
                tail,
                k,
                delta_sigma,
                ..
            } => {
                let g = self.rotation_block()?.expect("ssvd rotation");
                let scales: Vec<f64> = (0..*k).map(|i| basis.sigma[i] + delta_sigma[i]).collect();
                let core = g.scale_rows(&scales);
                let left = basis.left.columns(0, *k);
                let right = basis.right.columns(0, *k);
                left.matmul(&core)?.matmul_t(&right)?.add(tail)
            }
        }
    }

    /// Dense weight for deployment; identical to the effective weight.
    pub fn merge(&self) -> Result<Matrix> {
        self.effective_weight()
    }

    /// `y = W'·x` with samples as columns of `x`. LoRA, PiSSA and VeRA use a
    /// factored path; the others go through the dense effective weight.
    pub fn forward(&self, x: &Matrix) -> Result<Matrix> {
        let (_, n) = self.dims();
        if x.rows() != n {
            return Err(Error::dim("forward", format!("{n} input rows"), x.rows()));
        }
        match &self.body {
            Body::Lora { a, b } => {
                let mut y = self.w0.matmul(x)?;
                y.axpy(1.0, &a.matmul(&b.t_matmul(x)?)?)?;
                Ok(y)
            }
            Body::Pissa { a, b, residual } => {
                let mut y = residual.matmul(x)?;
                y.axpy(1.0, &a.matmul(&b.t_matmul(x)?)?)?;
                Ok(y)
            }
            Body::Vera { shared, b, d } => {
                let inner = shared.b.t_matmul(x)?.scale_rows(b);
                let mut y = self.w0.matmul(x)?;
                y.axpy(1.0, &shared.a.matmul(&inner)?.scale_rows(d))?;
                Ok(y)
            }
            _ => self.effective_weight()?.matmul(x),
        }
    }

    /// `dL/dx = W'ᵀ · upstream`, for stacking layers.
    pub fn input_gradient(&self, upstream: &Matrix) -> Result<Matrix> {
        let (m, _) = self.dims();
        if upstream.rows() != m {
            return Err(Error::dim("input_gradient", format!("{m} upstream rows"), upstream.rows()));
        }
        self.effective_weight()?.t_matmul(upstream)
    }

    /// Gradient of a loss `L(Y)`, `Y = forward(x)`, with respect to the
    /// flattened trainable tensors, given `upstream = dL/dY`.
    pub fn param_gradients(&self, x: &Matrix, upstream: &Matrix) -> Result<Vec<f64>> {
        let (m, n) = self.dims();
        if x.rows() != n {
            return Err(Error::dim("param_gradients", format!("{n} input rows"), x.rows()));
        }
        if upstream.shape() != (m, x.cols()) {
            return Err(Error::dim(
                "param_gradients",
                format!("upstream {m}x{}", x.cols()),
                format!("{}x{}", upstream.rows(), upstream.cols()),
            ));
        }
        // dL/dW'
        let gw = upstream.matmul_t(x)?;
        self.weight_gradient_to_params(&gw)
    }

    /// Chain rule from `dL/dW'` to the flattened trainable tensors.
    pub fn weight_gradient_to_params(&self, gw: &Matrix) -> Result<Vec<f64>> {
        if gw.shape() != self.dims() {
            return Err(Error::dim(
                "weight_gradient_to_params",
                format!("{:?}", self.dims()),
                format!("{:?}", gw.shape()),
            ));
        }
        let mut out = Vec::with_capacity(self.trainable_param_count());
        match &self.body {
            Body::Lora { a, b } | Body::Pissa { a, b, .. } => {
                out.extend(gw.matmul(b)?.into_vec());
                out.extend(gw.t_matmul(a)?.into_vec());
            }
            Body::Vera { shared, b, d } => {
                let p = gw.matmul(&shared.b)?;
                let a = &shared.a;
                let (rows, rank) = a.shape();
                let mut gb = vec![0.0; rank];
                let mut gd = vec![0.0; rows];
                for i in 0..rows {
                    for k in 0..rank {
                        let ap = a.get(i, k) * p.get(i, k);
                        gb[k] += d[i] * ap;
                        gd[i] += b[k] * ap;
                    }
                }
                out.extend(gb);
                out.extend(gd);
            }
            Body::Dora { a, b, magnitude } => {
                let v = self.w0.add(&a.matmul_t(b)?)?;
                let norms = column_norms(&v);
                let (rows, cols) = v.shape();
                let mut gv = Matrix::zeros(rows, cols);
                let mut gm = vec![0.0; cols];
                for j in 0..cols {
                    let vj = v.column(j);
                    let gj = gw.column(j);
                    let proj: f64 = vj.iter().zip(&gj).map(|(x, y)| x * y).sum();
                    if norms[j] > DORA_NORM_EPS {
                        let c = norms[j];
                        gm[j] = proj / c;
                        let coef = magnitude[j] / c;
                        let along = proj / (c * c);
                        for i in 0..rows {
                            gv.set(i, j, coef * (gj[i] - along * vj[i]));
                        }
                    } else {
                        gm[j] = proj / DORA_NORM_EPS;
                        for i in 0..rows {
                            gv.set(i, j, magnitude[j] / DORA_NORM_EPS * gj[i]);
                        }
                    }
                }
                out.extend(gv.matmul(b)?.into_vec());
                out.extend(gv.t_matmul(a)?.into_vec());
                out.extend(gm);
            }
            Body::Svft { basis, support, .. } => {
                let h = basis.left.t_matmul(gw)?.matmul(&basis.right)?;
                out.extend(support.iter().map(|&(i, j)| h.get(i, j)));
            }
            Body::Ssvd {
                basis,
                k,
                delta_sigma,
                rotation,
                ..
            } => {
                let k = *k;
                let left = basis.left.columns(0, k);
                let right = basis.right.columns(0, k);
                let h = left.t_matmul(gw)?.matmul(&right)?;
                let g = self.rotation_block()?.expect("ssvd rotation");
                let scales: Vec<f64> = (0..k).map(|i| basis.sigma[i] + delta_sigma[i]).collect();
                let gsigma: Vec<f64> = (0..k)
                    .map(|i| (0..k).map(|j| h.get(i, j) * g.get(i, j)).sum())
                    .collect();
                // dL/dG_k
                let gg = h.scale_rows(&scales);
                out.extend(gsigma);
                match rotation {
                    Rotation::Full(_) => out.extend_from_slice(gg.as_slice()),
                    Rotation::Skew(p) => match self.rotation_mode() {
                        Some(RotationMode::Strict) => out.extend(cayley_strict_grad(p, &g, &gg)?),
                        _ => out.extend(cayley_approx_grad(p, &gg)?),
                    },
                }
            }
        }
        Ok(out)
    }

    /// Named frozen tensors, in checkpoint order.
    pub fn frozen_components(&self) -> Vec<(&'static str, Matrix)> {
        let mut out = vec![("w0", self.w0.as_ref().clone())];
        match &self.body {
            Body::Lora { .. } | Body::Dora { .. } => {}
            Body::Vera { shared, .. } => {
                out.push(("vera.a", shared.a.clone()));
                out.push(("vera.b", shared.b.clone()));
            }
            Body::Pissa { residual, .. } => out.push(("residual", residual.as_ref().clone())),
            Body::Svft { basis, support, .. } => {
                push_basis(&mut out, basis);
                out.push(("support", support_matrix(support)));
            }
            Body::Ssvd { basis, .. } => push_basis(&mut out, basis),
        }
        out
    }

    /// SHA-256 of every frozen tensor (dims plus raw bits), hex encoded.
    pub fn frozen_hashes(&self) -> Vec<(&'static str, String)> {
        self.frozen_components()
            .into_iter()
            .map(|(name, m)| (name, tensor_hash(&m)))
            .collect()
    }

    /// One digest over all frozen tensors.
    pub fn frozen_digest(&self) -> String {
        let mut h = Sha256::new();
        for (name, hash) in self.frozen_hashes() {
            h.update(name.as_bytes());
            h.update(hash.as_bytes());
        }
        format!("{:x}", h.finalize())
    }

    /// Named trainable tensors in flat order, for checkpoints.
    pub fn trainable_tensors(&self) -> Vec<(&'static str, Matrix)> {
        match &self.body {
            Body::Lora { a, b } | Body::Pissa { a, b, .. } => {
                vec![("a", a.clone()), ("b", b.clone())]
            }
            Body::Vera { b, d, .. } => {
                vec![("b", Matrix::row_vector(b)), ("d", Matrix::row_vector(d))]
            }
            Body::Dora { a, b, magnitude } => vec![
                ("a", a.clone()),
                ("b", b.clone()),
                ("magnitude", Matrix::row_vector(magnitude)),
            ],
            Body::Svft { values, .. } => vec![("values", Matrix::row_vector(values))],
            Body::Ssvd {
                delta_sigma,
                rotation,
                ..
            } => {
                let rot = match rotation {
                    Rotation::Skew(p) => ("skew", Matrix::row_vector(p.packed())),
                    Rotation::Full(g) => ("rotation", g.clone()),
                };
                vec![("delta_sigma", Matrix::row_vector(delta_sigma)), rot]
            }
        }
    }
}

fn push_basis(out: &mut Vec<(&'static str, Matrix)>, basis: &OrientedSvd) {
    out.push(("basis.left", basis.left.clone()));
    out.push(("basis.sigma", Matrix::row_vector(&basis.sigma)));
    out.push(("basis.right", basis.right.clone()));
}

pub(crate) fn support_matrix(support: &[(usize, usize)]) -> Matrix {
    let len = support.len();
    Matrix::from_fn(2, len, |r, c| {
        let (i, j) = support[c];
        if r == 0 {
            i as f64
        } else {
            j as f64
        }
    })
}

pub(crate) fn tensor_hash(m: &Matrix) -> String {
    let mut h = Sha256::new();
    h.update((m.rows() as u64).to_le_bytes());
    h.update((m.cols() as u64).to_le_bytes());
    for x in m.as_slice() {
        h.update(x.to_bits().to_le_bytes());
    }
    format!("{:x}", h.finalize())
}

/// Support of SVFT's `M` over the `r × r` core, sorted row-major.
pub(crate) fn svft_support(
    variant: SvftVariant,
    sigma: &[f64],
    rng: &mut RngStream,
) -> Vec<(usize, usize)> {
    let r = sigma.len();
    let diagonal = (0..r).map(|i| (i, i));
    let mut support: Vec<(usize, usize)> = match variant {
        SvftVariant::Plain => diagonal.collect(),
        SvftVariant::Banded { d } => (0..r)
            .flat_map(|i| (0..r).map(move |j| (i, j)))
            .filter(|(i, j)| i.abs_diff(*j) <= d)
            .collect(),
        SvftVariant::Random { density } => {
            let mut off: Vec<(usize, usize)> = (0..r)
                .flat_map(|i| (0..r).map(move |j| (i, j)))
                .filter(|(i, j)| i != j)
                .collect();
            let want = random_offdiag_count(r, density);
            // partial Fisher-Yates
            for t in 0..want {
                let pick = t + rng.below(off.len() - t);
                off.swap(t, pick);
            }
            off.truncate(want);
            diagonal.chain(off).collect()
        }
        SvftVariant::TopK { count } => {
            // saliency of the (i, j) interaction: geometric mean strength over
            // spectral gap; near-degenerate pairs rank first
            let floor = sigma.first().copied().unwrap_or(0.0).max(f64::MIN_POSITIVE) * 1e-12;
            let mut off: Vec<((usize, usize), f64)> = (0..r)
                .flat_map(|i| (0..r).map(move |j| (i, j)))
                .filter(|(i, j)| i != j)
                .map(|(i, j)| {
                    let s = (sigma[i] * sigma[j]).sqrt() / ((sigma[i] - sigma[j]).abs() + floor);
                    ((i, j), s)
                })
                .collect();
            off.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
            diagonal.chain(off.into_iter().take(count).map(|(ij, _)| ij)).collect()
        }
    };
    support.sort_unstable();
    support
}
