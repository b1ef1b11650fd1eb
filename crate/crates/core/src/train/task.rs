use std::fmt;
use std::str::FromStr;

use crate::densela::{random_matrix, Matrix, RngStream};
use crate::error::{Error, Result};
use crate::rotations::{cayley_strict, SkewParam};
use crate::svd::svd;

/// Samples in the fixed held-out evaluation batch.
pub const HELD_OUT_SAMPLES: usize = 256;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ShiftKind {
    /// Rotation and rescaling of the top-k right singular directions.
    InClassRotation,
    /// Additive rank-`r*` update.
    LowRankAdditive,
    /// Additive full-rank update.
    Dense,
}

impl ShiftKind {
    pub fn as_str(self) -> &'static str {
        match self {
            ShiftKind::InClassRotation => "inclass",
            ShiftKind::LowRankAdditive => "lowrank",
            ShiftKind::Dense => "dense",
        }
    }
}

impl fmt::Display for ShiftKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ShiftKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "inclass" | "rotation" => Ok(ShiftKind::InClassRotation),
            "lowrank" => Ok(ShiftKind::LowRankAdditive),
            "dense" => Ok(ShiftKind::Dense),
            other => Err(Error::invalid(format!("unknown shift kind {other:?}"))),
        }
    }
}

/// Teacher–student regression problem: the student starts from `w0` and
/// must match outputs of `w_tgt`.
#[derive(Debug, Clone, PartialEq)]
pub struct ShiftTask {
    pub w0: Matrix,
    pub w_tgt: Matrix,
    pub shift_kind: ShiftKind,
    pub noise_std: f64,
    /// Seed of the held-out batch, drawn once when the task is made.
    pub eval_seed: u64,
}

impl ShiftTask {
    pub fn input_dim(&self) -> usize {
        self.w0.cols()
    }

    pub fn output_dim(&self) -> usize {
        self.w0.rows()
    }

    /// The fixed evaluation batch. Regenerated from `eval_seed` on each call,
    /// so it is identical for every run on this task.
    pub fn held_out(&self) -> (Matrix, Matrix) {
        let mut rng = RngStream::new(self.eval_seed);
        gen_batch(self, &mut rng, HELD_OUT_SAMPLES)
    }
}

/// Ground truth behind an in-class task, kept so tests can rebuild the
/// exact adapter state that represents it.
#[derive(Debug, Clone, PartialEq)]
pub struct InClassTruth {
    pub k: usize,
    pub delta_sigma: Vec<f64>,
    pub skew: SkewParam,
}

fn base_weight(rng: &mut RngStream, m: usize, n: usize) -> Matrix {
    // entries with variance 1/n keep outputs O(1) for standard normal inputs
    random_matrix(rng, m, n, (3.0 / n as f64).sqrt())
}

fn check_shape(m: usize, n: usize) -> Result<()> {
    if m == 0 || n == 0 {
        return Err(Error::invalid(format!("task shape {m}x{n} is empty")));
    }
    Ok(())
}

fn check_strength(name: &str, value: f64) -> Result<()> {
    if !(value.is_finite() && value >= 0.0) {
        return Err(Error::invalid(format!("{name} must be finite and >= 0, got {value}")));
    }
    Ok(())
}

/// In-class task together with its generating parameters.
pub fn make_inclass_shift_with_truth(
    rng: &mut RngStream,
    m: usize,
    n: usize,
    k: usize,
    rotation_strength: f64,
    scale_strength: f64,
    noise_std: f64,
) -> Result<(ShiftTask, InClassTruth)> {
    check_shape(m, n)?;
    let r0 = m.min(n);
    if k == 0 || k > r0 {
        return Err(Error::invalid(format!("k = {k} outside 1..={r0}")));
    }
    check_strength("rotation_strength", rotation_strength)?;
    check_strength("scale_strength", scale_strength)?;
    check_strength("noise_std", noise_std)?;

    let w0 = base_weight(rng, m, n);
    let basis = svd(&w0)?.oriented();

    let mut packed: Vec<f64> = (0..k * (k - 1) / 2).map(|_| rng.uniform(1.0)).collect();
    // ‖K‖_F counts each packed entry twice
    let norm = (2.0 * packed.iter().map(|v| v * v).sum::<f64>()).sqrt();
    for v in &mut packed {
        *v = if norm > 0.0 { *v * rotation_strength / norm } else { 0.0 };
    }
    let skew = SkewParam::new(k, packed)?;
    let delta_sigma: Vec<f64> = basis.sigma[..k]
        .iter()
        .map(|s| scale_strength * s * rng.uniform(1.0))
        .collect();

    let g = cayley_strict(&skew)?;
    let scales: Vec<f64> = (0..k).map(|i| basis.sigma[i] + delta_sigma[i]).collect();
    let head = basis
        .left
        .columns(0, k)
        .matmul(&g.scale_rows(&scales))?
        .matmul_t(&basis.right.columns(0, k))?;
    let w_tgt = head.add(&basis.partial(k, r0))?;

    let task = ShiftTask {
        w0,
        w_tgt,
        shift_kind: ShiftKind::InClassRotation,
        noise_std,
        eval_seed: rng.next_u64(),
    };
    Ok((task, InClassTruth { k, delta_sigma, skew }))
}

/// Target `U(Σ+ΔΣ*)·diag(G*, I)·Vᵀ` built from the SVD of a random `w0`,
/// where `G*` is a Cayley rotation with generator norm `rotation_strength`
/// and `ΔΣ*_i = scale_strength·σ_i·u_i`, `u_i ~ U[-1, 1]`.
pub fn make_inclass_shift(
    rng: &mut RngStream,
    m: usize,
    n: usize,
    k: usize,
    rotation_strength: f64,
    scale_strength: f64,
    noise_std: f64,
) -> Result<ShiftTask> {
    make_inclass_shift_with_truth(rng, m, n, k, rotation_strength, scale_strength, noise_std)
        .map(|(task, _)| task)
}

/// Low-rank task with its factors: `w_tgt = w0 + a·bᵀ`.
pub fn make_lowrank_shift_with_factors(
    rng: &mut RngStream,
    m: usize,
    n: usize,
    r_star: usize,
    strength: f64,
    noise_std: f64,
) -> Result<(ShiftTask, Matrix, Matrix)> {
    check_shape(m, n)?;
    let r0 = m.min(n);
    if r_star == 0 || r_star > r0 {
        return Err(Error::invalid(format!("r_star = {r_star} outside 1..={r0}")));
    }
    check_strength("strength", strength)?;
    check_strength("noise_std", noise_std)?;

    let w0 = base_weight(rng, m, n);
    let mut a = random_matrix(rng, m, r_star, 1.0);
    let b = random_matrix(rng, n, r_star, 1.0);
    let raw = a.matmul_t(&b)?.frobenius_norm();
    let factor = if raw > 0.0 {
        strength * w0.frobenius_norm() / raw
    } else {
        0.0
    };
    a = a.scale(factor);
    let w_tgt = w0.add(&a.matmul_t(&b)?)?;
    let task = ShiftTask {
        w0,
        w_tgt,
        shift_kind: ShiftKind::LowRankAdditive,
        noise_std,
        eval_seed: rng.next_u64(),
    };
    Ok((task, a, b))
}

/// `w_tgt = w0 + A*·B*ᵀ` with random rank-`r_star` factors and
/// `‖A*B*ᵀ‖_F = strength·‖w0‖_F`.
pub fn make_lowrank_shift(
    rng: &mut RngStream,
    m: usize,
    n: usize,
    r_star: usize,
    strength: f64,
    noise_std: f64,
) -> Result<ShiftTask> {
    make_lowrank_shift_with_factors(rng, m, n, r_star, strength, noise_std).map(|(t, _, _)| t)
}

/// `w_tgt = w0 + E` with a dense random `E`, `‖E‖_F = strength·‖w0‖_F`.
pub fn make_dense_shift(
    rng: &mut RngStream,
    m: usize,
    n: usize,
    strength: f64,
    noise_std: f64,
) -> Result<ShiftTask> {
    check_shape(m, n)?;
    check_strength("strength", strength)?;
    check_strength("noise_std", noise_std)?;
    let w0 = base_weight(rng, m, n);
    let e = random_matrix(rng, m, n, 1.0);
    let factor = strength * w0.frobenius_norm() / e.frobenius_norm().max(f64::MIN_POSITIVE);
    let w_tgt = w0.add(&e.scale(factor))?;
    Ok(ShiftTask {
        w0,
        w_tgt,
        shift_kind: ShiftKind::Dense,
        noise_std,
        eval_seed: rng.next_u64(),
    })
}

/// `batch_size` samples as columns: `x ~ N(0, I)`, `y = w_tgt·x + ε`,
/// `ε ~ N(0, noise_std²)`.
pub fn gen_batch(task: &ShiftTask, rng: &mut RngStream, batch_size: usize) -> (Matrix, Matrix) {
    let n = task.input_dim();
    let x = Matrix::from_fn(n, batch_size, |_, _| rng.normal());
    let mut y = task.w_tgt.matmul(&x).expect("task shapes agree");
    if task.noise_std > 0.0 {
        for v in y.as_mut_slice() {
            *v += task.noise_std * rng.normal();
        }
    }
    (x, y)
}

/// Mean squared error over all entries.
pub fn mse_loss(pred: &Matrix, target: &Matrix) -> Result<f64> {
    if pred.shape() != target.shape() || pred.is_empty() {
        return Err(Error::dim(
            "mse_loss",
            format!("{:?}", target.shape()),
            format!("{:?}", pred.shape()),
        ));
    }
    let sum: f64 = pred
        .as_slice()
        .iter()
        .zip(target.as_slice())
        .map(|(p, t)| (p - t) * (p - t))
        .sum();
    Ok(sum / pred.len() as f64)
}

/// `d mse / d pred = 2(pred − target)/count`.
pub fn mse_grad(pred: &Matrix, target: &Matrix) -> Result<Matrix> {
    if pred.shape() != target.shape() || pred.is_empty() {
        return Err(Error::dim(
            "mse_grad",
            format!("{:?}", target.shape()),
            format!("{:?}", pred.shape()),
        ));
    }
    Ok(pred.sub(target)?.scale(2.0 / pred.len() as f64))
}
