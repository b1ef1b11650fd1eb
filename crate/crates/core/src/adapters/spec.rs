use std::fmt;

use crate::error::{Error, Result};
use crate::rotations::RotationMode;

/// Structure of the trainable SVFT perturbation `M`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum SvftVariant {
    /// Diagonal only.
    Plain,
    /// `d` off-diagonals on each side of the main diagonal.
    Banded { d: usize },
    /// Diagonal plus a fixed random off-diagonal support covering `density`
    /// of the off-diagonal entries. Experimental.
    Random { density: f64 },
    /// Diagonal plus the `count` off-diagonal entries with the highest
    /// spectral-gap saliency. Experimental.
    TopK { count: usize },
}

impl SvftVariant {
    pub fn as_str(&self) -> &'static str {
        match self {
            SvftVariant::Plain => "plain",
            SvftVariant::Banded { .. } => "banded",
            SvftVariant::Random { .. } => "random",
            SvftVariant::TopK { .. } => "topk",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Method {
    Lora { rank: usize },
    Vera { rank: usize, shared_seed: u64 },
    Dora { rank: usize },
    Pissa { rank: usize },
    Svft { variant: SvftVariant },
    Ssvd { portion: f64, mode: RotationMode },
}

/// Which adapter to attach and its hyperparameters.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdapterSpec {
    pub method: Method,
    /// Overrides the uniform init range of random trainable factors
    /// (LoRA/DoRA `A`) and of VeRA's shared matrices. Default `1/√r`.
    pub init_scale: Option<f64>,
}

impl From<Method> for AdapterSpec {
    fn from(method: Method) -> Self {
        AdapterSpec {
            method,
            init_scale: None,
        }
    }
}

impl AdapterSpec {
    pub fn lora(rank: usize) -> Self {
        Method::Lora { rank }.into()
    }

    pub fn vera(rank: usize, shared_seed: u64) -> Self {
        Method::Vera { rank, shared_seed }.into()
    }

    pub fn dora(rank: usize) -> Self {
        Method::Dora { rank }.into()
    }

    pub fn pissa(rank: usize) -> Self {
        Method::Pissa { rank }.into()
    }

    pub fn svft(variant: SvftVariant) -> Self {
        Method::Svft { variant }.into()
    }

    pub fn ssvd(portion: f64, mode: RotationMode) -> Self {
        Method::Ssvd { portion, mode }.into()
    }

    pub fn with_init_scale(mut self, scale: f64) -> Self {
        self.init_scale = Some(scale);
        self
    }

    pub fn tag(&self) -> &'static str {
        match self.method {
            Method::Lora { .. } => "lora",
            Method::Vera { .. } => "vera",
            Method::Dora { .. } => "dora",
            Method::Pissa { .. } => "pissa",
            Method::Svft { .. } => "svft",
            Method::Ssvd { .. } => "ssvd",
        }
    }

    /// Experiment label, e.g. `LoRA_r=8`, `SVFT^B_d=2`, `SSVD_p=40%`.
    pub fn label(&self) -> String {
        match self.method {
            Method::Lora { rank } => format!("LoRA_r={rank}"),
            Method::Vera { rank, .. } => format!("VeRA_r={rank}"),
            Method::Dora { rank } => format!("DoRA_r={rank}"),
            Method::Pissa { rank } => format!("PiSSA_r={rank}"),
            Method::Svft { variant } => match variant {
                SvftVariant::Plain => "SVFT^P".to_string(),
                SvftVariant::Banded { d } => format!("SVFT^B_d={d}"),
                SvftVariant::Random { density } => format!("SVFT^R_d={}", percent(density)),
                SvftVariant::TopK { count } => format!("SVFT^T_d={count}"),
            },
            Method::Ssvd { portion, .. } => format!("SSVD_p={}", percent(portion)),
        }
    }

    /// Secondary descriptor: rotation mode for SSVD, structure for SVFT.
    pub fn variant(&self) -> &'static str {
        match self.method {
            Method::Svft { variant } => variant.as_str(),
            Method::Ssvd { mode, .. } => mode.as_str(),
            _ => "-",
        }
    }

    /// Number of top singular directions SSVD adapts for an `m × n` layer.
    pub fn ssvd_k(portion: f64, m: usize, n: usize) -> usize {
        let r0 = m.min(n);
        // tolerance so that e.g. p = 16/384 maps back to exactly 16
        (((portion * r0 as f64) + 1e-9).floor() as usize).clamp(1, r0)
    }

    pub fn validate(&self, m: usize, n: usize) -> Result<()> {
        let r0 = m.min(n);
        if r0 == 0 {
            return Err(Error::invalid(format!("empty layer {m}x{n}")));
        }
        let check_rank = |rank: usize| {
            if rank == 0 || rank > r0 {
                Err(Error::invalid(format!(
                    "rank {rank} must lie in 1..={r0} for a {m}x{n} layer"
                )))
            } else {
                Ok(())
            }
        };
        match self.method {
            Method::Lora { rank }
            | Method::Vera { rank, .. }
            | Method::Dora { rank }
            | Method::Pissa { rank } => check_rank(rank)?,
            Method::Svft { variant } => match variant {
                SvftVariant::Plain => {}
                SvftVariant::Banded { d } => {
                    if d >= r0 {
                        return Err(Error::invalid(format!("band {d} must be < {r0}")));
                    }
                }
                SvftVariant::Random { density } => {
                    if !(density > 0.0 && density <= 1.0) {
                        return Err(Error::invalid(format!("density {density} outside (0, 1]")));
                    }
                }
                SvftVariant::TopK { count } => {
                    if count > r0 * (r0 - 1) {
                        return Err(Error::invalid(format!(
                            "top-k count {count} exceeds {} off-diagonal entries",
                            r0 * (r0 - 1)
                        )));
                    }
                }
            },
            Method::Ssvd { portion, .. } => {
                if !(portion > 0.0 && portion <= 1.0) {
                    return Err(Error::invalid(format!("portion {portion} outside (0, 1]")));
                }
            }
        }
        if let Some(s) = self.init_scale {
            if !(s > 0.0 && s.is_finite()) {
                return Err(Error::invalid(format!("init_scale {s} must be positive")));
            }
        }
        Ok(())
    }

    /// Trainable element count for an `m × n` layer.
    ///
    /// | method | count |
    /// |---|---|
    /// | LoRA, PiSSA | `r(m+n)` |
    /// | VeRA | `r + m` |
    /// | DoRA | `r(m+n) + n` (one magnitude per column) |
    /// | SVFT | entries in the support of `M` |
    /// | SSVD strict/approx | `k(k+1)/2` |
    /// | SSVD unconstrained | `k² + k` |
    pub fn trainable_param_count(&self, m: usize, n: usize) -> usize {
        let r0 = m.min(n);
        match self.method {
            Method::Lora { rank } | Method::Pissa { rank } => rank * (m + n),
            Method::Vera { rank, .. } => rank + m,
            Method::Dora { rank } => rank * (m + n) + n,
            Method::Svft { variant } => match variant {
                SvftVariant::Plain => r0,
                SvftVariant::Banded { d } => banded_count(r0, d),
                SvftVariant::Random { density } => r0 + random_offdiag_count(r0, density),
                SvftVariant::TopK { count } => r0 + count,
            },
            Method::Ssvd { portion, mode } => {
                let k = Self::ssvd_k(portion, m, n);
                k + mode.rotation_params(k)
            }
        }
    }

    /// The closed-form count as printed in the method summary table, where
    /// one exists. Differs from [`trainable_param_count`](Self::trainable_param_count)
    /// for VeRA (`r+m+1`) and DoRA (`+m` instead of `+n`).
    pub fn table_param_count(&self, m: usize, n: usize) -> Option<usize> {
        let r0 = m.min(n);
        match self.method {
            Method::Lora { rank } | Method::Pissa { rank } => Some(rank * (m + n)),
            Method::Vera { rank, .. } => Some(rank + m + 1),
            Method::Dora { rank } => Some(rank * (m + n) + m),
            Method::Svft { variant } => match variant {
                SvftVariant::Plain => Some(r0),
                SvftVariant::Banded { d: q } => Some(r0 * q + (r0 - q) * (q + 1)),
                _ => None,
            },
            Method::Ssvd { portion, mode } => {
                let k = Self::ssvd_k(portion, m, n);
                Some(match mode {
                    RotationMode::Unconstrained => k * k + k,
                    _ => k * (k + 1) / 2,
                })
            }
        }
    }
}

impl fmt::Display for AdapterSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.method {
            Method::Ssvd { .. } | Method::Svft { .. } => {
                write!(f, "{}_{}", self.label(), self.variant())
            }
            _ => f.write_str(&self.label()),
        }
    }
}

/// Entries within `d` of the diagonal of an `n × n` matrix.
pub(crate) fn banded_count(n: usize, d: usize) -> usize {
    (0..n)
        .map(|i| (i + d).min(n - 1) - i.saturating_sub(d) + 1)
        .sum()
}

pub(crate) fn random_offdiag_count(n: usize, density: f64) -> usize {
    let total = n * (n - 1);
    ((density * total as f64).round() as usize).min(total)
}

/// `0.25 → "25%"`, `0.125 → "12.5%"`.
pub(crate) fn percent(fraction: f64) -> String {
    let pct = fraction * 100.0;
    let rounded = (pct * 1e6).round() / 1e6;
    if rounded.fract() == 0.0 {
        format!("{}%", rounded as i64)
    } else {
        format!("{rounded}%")
    }
}
