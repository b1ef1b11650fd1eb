//! Text checkpoints for adapter states.
//!
//! ```text
//! PEFTKIT-ADAPTER
//! version 1
//! method <tag>
//! dims <m> <n>
//! spec <key>=<value> ...
//! init_scale <value|none>
//! frozen <name> <sha256>        (one per frozen tensor)
//! trainable <count>
//! tensor <name>                 (trainable tensors, flat order)
//! <matrix text>
//! frozen-data
//! tensor <name>                 (frozen tensors)
//! <matrix text>
//! end
//! ```

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::sync::Arc;

use super::spec::{AdapterSpec, Method, SvftVariant};
use super::state::{tensor_hash, AdapterState, Body, Rotation, VeraShared};
use crate::densela::Matrix;
use crate::error::{Error, Result};
use crate::rotations::{packed_len, RotationMode, SkewParam};
use crate::svd::OrientedSvd;

pub const CHECKPOINT_MAGIC: &str = "PEFTKIT-ADAPTER";
pub const CHECKPOINT_VERSION: u32 = 1;

fn spec_fields(spec: &AdapterSpec) -> Vec<(&'static str, String)> {
    match spec.method {
        Method::Lora { rank } | Method::Dora { rank } | Method::Pissa { rank } => {
            vec![("rank", rank.to_string())]
        }
        Method::Vera { rank, shared_seed } => {
            vec![("rank", rank.to_string()), ("shared_seed", shared_seed.to_string())]
        }
        Method::Svft { variant } => {
            let mut f = vec![("variant", variant.as_str().to_string())];
            match variant {
                SvftVariant::Plain => {}
                SvftVariant::Banded { d } => f.push(("d", d.to_string())),
                SvftVariant::Random { density } => f.push(("density", format!("{density:?}"))),
                SvftVariant::TopK { count } => f.push(("count", count.to_string())),
            }
            f
        }
        Method::Ssvd { portion, mode } => {
            vec![("portion", format!("{portion:?}")), ("mode", mode.as_str().to_string())]
        }
    }
}

fn spec_from_fields(tag: &str, fields: &BTreeMap<String, String>, line: usize) -> Result<Method> {
    let bad = |reason: String| Error::Checkpoint { line, reason };
    let get = |key: &str| {
        fields
            .get(key)
            .ok_or_else(|| bad(format!("spec is missing `{key}`")))
    };
    let int = |key: &str| -> Result<usize> {
        get(key)?
            .parse()
            .map_err(|_| bad(format!("`{key}` is not an integer")))
    };
    let float = |key: &str| -> Result<f64> {
        get(key)?
            .parse()
            .map_err(|_| bad(format!("`{key}` is not a number")))
    };
    Ok(match tag {
        "lora" => Method::Lora { rank: int("rank")? },
        "dora" => Method::Dora { rank: int("rank")? },
        "pissa" => Method::Pissa { rank: int("rank")? },
        "vera" => Method::Vera {
            rank: int("rank")?,
            shared_seed: get("shared_seed")?
                .parse()
                .map_err(|_| bad("`shared_seed` is not an integer".into()))?,
        },
        "svft" => Method::Svft {
            variant: match get("variant")?.as_str() {
                "plain" => SvftVariant::Plain,
                "banded" => SvftVariant::Banded { d: int("d")? },
                "random" => SvftVariant::Random {
                    density: float("density")?,
                },
                "topk" => SvftVariant::TopK {
                    count: int("count")?,
                },
                other => return Err(bad(format!("unknown SVFT variant {other:?}"))),
            },
        },
        "ssvd" => Method::Ssvd {
            portion: float("portion")?,
            mode: get("mode")?.parse::<RotationMode>().map_err(|e| bad(e.to_string()))?,
        },
        other => return Err(bad(format!("unknown method {other:?}"))),
    })
}

impl AdapterState {
    /// Serialises the full state (spec, frozen tensors with their hashes,
    /// trainable tensors) to the text checkpoint format.
    pub fn save_state(&self) -> Vec<u8> {
        let (m, n) = self.dims();
        let mut out = String::new();
        let _ = writeln!(out, "{CHECKPOINT_MAGIC}");
        let _ = writeln!(out, "version {CHECKPOINT_VERSION}");
        let _ = writeln!(out, "method {}", self.spec.tag());
        let _ = writeln!(out, "dims {m} {n}");
        let fields: Vec<String> = spec_fields(&self.spec)
            .into_iter()
            .map(|(k, v)| format!("{k}={v}"))
            .collect();
        let _ = writeln!(out, "spec {}", fields.join(" "));
        match self.spec.init_scale {
            Some(s) => {
                let _ = writeln!(out, "init_scale {s:?}");
            }
            None => out.push_str("init_scale none\n"),
        }
        for (name, hash) in self.frozen_hashes() {
            let _ = writeln!(out, "frozen {name} {hash}");
        }
        let _ = writeln!(out, "trainable {}", self.trainable_param_count());
        for (name, t) in self.trainable_tensors() {
            let _ = writeln!(out, "tensor {name}");
            t.write_text(&mut out);
        }
        out.push_str("frozen-data\n");
        for (name, t) in self.frozen_components() {
            let _ = writeln!(out, "tensor {name}");
            t.write_text(&mut out);
        }
        out.push_str("end\n");
        out.into_bytes()
    }

    pub fn load_state(bytes: &[u8]) -> Result<AdapterState> {
        let text = std::str::from_utf8(bytes).map_err(|e| Error::Checkpoint {
            line: 0,
            reason: format!("not UTF-8: {e}"),
        })?;
        let mut lines = text.lines().enumerate().map(|(i, l)| (i + 1, l));

        let (line, magic) = next_line(&mut lines, "magic")?;
        if magic.trim() != CHECKPOINT_MAGIC {
            return Err(Error::Checkpoint {
                line,
                reason: format!("bad magic {magic:?}"),
            });
        }
        let (line, v) = next_line(&mut lines, "version")?;
        let version: u32 = keyed(line, v, "version")?
            .parse()
            .map_err(|_| Error::Checkpoint {
                line,
                reason: "bad version".into(),
            })?;
        if version != CHECKPOINT_VERSION {
            return Err(Error::Version {
                found: version,
                expected: CHECKPOINT_VERSION,
            });
        }
        let (line, t) = next_line(&mut lines, "method")?;
        let tag = keyed(line, t, "method")?.to_string();
        let (dims_line, d) = next_line(&mut lines, "dims")?;
        let dims: Vec<usize> = keyed(dims_line, d, "dims")?
            .split_whitespace()
            .map(|s| s.parse::<usize>())
            .collect::<std::result::Result<_, _>>()
            .map_err(|_| Error::Checkpoint {
                line: dims_line,
                reason: "bad dims".into(),
            })?;
        let [m, n] = dims[..] else {
            return Err(Error::Checkpoint {
                line: dims_line,
                reason: "dims needs two values".into(),
            });
        };
        let (spec_line, s) = next_line(&mut lines, "spec")?;
        let mut fields = BTreeMap::new();
        for kv in keyed(spec_line, s, "spec")?.split_whitespace() {
            let (k, v) = kv.split_once('=').ok_or_else(|| Error::Checkpoint {
                line: spec_line,
                reason: format!("bad spec field {kv:?}"),
            })?;
            fields.insert(k.to_string(), v.to_string());
        }
        let method = spec_from_fields(&tag, &fields, spec_line)?;
        let (line, s) = next_line(&mut lines, "init_scale")?;
        let init_scale = match keyed(line, s, "init_scale")? {
            "none" => None,
            v => Some(v.parse::<f64>().map_err(|_| Error::Checkpoint {
                line,
                reason: "bad init_scale".into(),
            })?),
        };
        let spec = AdapterSpec { method, init_scale };
        spec.validate(m, n).map_err(|e| Error::Checkpoint {
            line: spec_line,
            reason: e.to_string(),
        })?;

        let mut header_hashes = Vec::new();
        let declared = loop {
            let (line, l) = next_line(&mut lines, "trainable count")?;
            if let Some(rest) = l.strip_prefix("frozen ") {
                let (name, hash) = rest.split_once(' ').ok_or_else(|| Error::Checkpoint {
                    line,
                    reason: "bad frozen hash line".into(),
                })?;
                header_hashes.push((name.to_string(), hash.trim().to_string()));
            } else {
                break keyed(line, l, "trainable")?
                    .parse::<usize>()
                    .map_err(|_| Error::Checkpoint {
                        line,
                        reason: "bad trainable count".into(),
                    })?;
            }
        };

        let mut trainable = BTreeMap::new();
        let mut frozen = BTreeMap::new();
        let mut in_frozen = false;
        loop {
            let (line, l) = next_line(&mut lines, "end marker")?;
            match l.trim() {
                "end" => break,
                "frozen-data" if !in_frozen => in_frozen = true,
                other => {
                    let name = other.strip_prefix("tensor ").ok_or_else(|| Error::Checkpoint {
                        line,
                        reason: format!("expected `tensor <name>`, found {other:?}"),
                    })?;
                    let t = Matrix::read_text(&mut lines)?;
                    let target = if in_frozen { &mut frozen } else { &mut trainable };
                    target.insert(name.to_string(), t);
                }
            }
        }

        let state = assemble(spec, m, n, &mut trainable, &mut frozen)?;
        if state.trainable_param_count() != declared {
            return Err(Error::Checkpoint {
                line: 0,
                reason: format!(
                    "declared {declared} trainable values, spec implies {}",
                    state.trainable_param_count()
                ),
            });
        }
        let actual: Vec<(String, String)> = state
            .frozen_hashes()
            .into_iter()
            .map(|(k, v)| (k.to_string(), v))
            .collect();
        if actual != header_hashes {
            let culprit = actual
                .iter()
                .zip(&header_hashes)
                .find(|(a, b)| a != b)
                .map(|(a, _)| a.0.clone())
                .unwrap_or_else(|| "frozen component list".into());
            return Err(Error::Checkpoint {
                line: 0,
                reason: format!("frozen hash mismatch for `{culprit}`"),
            });
        }
        Ok(state)
    }
}

fn next_line<'a, I>(lines: &mut I, what: &str) -> Result<(usize, &'a str)>
where
    I: Iterator<Item = (usize, &'a str)>,
{
    lines.next().ok_or_else(|| Error::Checkpoint {
        line: 0,
        reason: format!("truncated checkpoint: missing {what}"),
    })
}

fn keyed<'a>(line: usize, text: &'a str, key: &str) -> Result<&'a str> {
    text.strip_prefix(key)
        .and_then(|rest| rest.strip_prefix(' '))
        .map(str::trim)
        .ok_or_else(|| Error::Checkpoint {
            line,
            reason: format!("expected `{key} ...`, found {text:?}"),
        })
}

fn take(map: &mut BTreeMap<String, Matrix>, name: &str, rows: usize, cols: usize) -> Result<Matrix> {
    let t = map.remove(name).ok_or_else(|| Error::Checkpoint {
        line: 0,
        reason: format!("missing tensor `{name}`"),
    })?;
    if t.shape() != (rows, cols) {
        return Err(Error::dim(
            "load_state",
            format!("`{name}` {rows}x{cols}"),
            format!("{}x{}", t.rows(), t.cols()),
        ));
    }
    Ok(t)
}

fn take_basis(map: &mut BTreeMap<String, Matrix>, m: usize, n: usize) -> Result<OrientedSvd> {
    let r0 = m.min(n);
    Ok(OrientedSvd {
        left: take(map, "basis.left", m, r0)?,
        sigma: take(map, "basis.sigma", 1, r0)?.into_vec(),
        right: take(map, "basis.right", n, r0)?,
    })
}

fn assemble(
    spec: AdapterSpec,
    m: usize,
    n: usize,
    trainable: &mut BTreeMap<String, Matrix>,
    frozen: &mut BTreeMap<String, Matrix>,
) -> Result<AdapterState> {
    let w0 = take(frozen, "w0", m, n)?;
    let r0 = m.min(n);
    let body = match spec.method {
        Method::Lora { rank } => Body::Lora {
            a: take(trainable, "a", m, rank)?,
            b: take(trainable, "b", n, rank)?,
        },
        Method::Pissa { rank } => Body::Pissa {
            a: take(trainable, "a", m, rank)?,
            b: take(trainable, "b", n, rank)?,
            residual: Arc::new(take(frozen, "residual", m, n)?),
        },
        Method::Dora { rank } => Body::Dora {
            a: take(trainable, "a", m, rank)?,
            b: take(trainable, "b", n, rank)?,
            magnitude: take(trainable, "magnitude", 1, n)?.into_vec(),
        },
        Method::Vera { rank, .. } => Body::Vera {
            shared: Arc::new(VeraShared {
                a: take(frozen, "vera.a", m, rank)?,
                b: take(frozen, "vera.b", n, rank)?,
            }),
            b: take(trainable, "b", 1, rank)?.into_vec(),
            d: take(trainable, "d", 1, m)?.into_vec(),
        },
        Method::Svft { .. } => {
            let basis = take_basis(frozen, m, n)?;
            let len = spec.trainable_param_count(m, n);
            let raw = take(frozen, "support", 2, len)?;
            let mut support = Vec::with_capacity(len);
            for c in 0..len {
                let (i, j) = (raw.get(0, c), raw.get(1, c));
                let ok = |x: f64| x >= 0.0 && x.fract() == 0.0 && (x as usize) < r0;
                if !ok(i) || !ok(j) {
                    return Err(Error::Checkpoint {
                        line: 0,
                        reason: format!("support entry ({i}, {j}) outside the {r0}x{r0} core"),
                    });
                }
                support.push((i as usize, j as usize));
            }
            Body::Svft {
                basis: Arc::new(basis),
                support: Arc::new(support),
                values: take(trainable, "values", 1, len)?.into_vec(),
            }
        }
        Method::Ssvd { portion, mode } => {
            let basis = take_basis(frozen, m, n)?;
            let k = AdapterSpec::ssvd_k(portion, m, n);
            let rotation = match mode {
                RotationMode::Unconstrained => Rotation::Full(take(trainable, "rotation", k, k)?),
                _ => Rotation::Skew(SkewParam::new(
                    k,
                    take(trainable, "skew", 1, packed_len(k))?.into_vec(),
                )?),
            };
            Body::Ssvd {
                tail: Arc::new(basis.partial(k, r0)),
                basis: Arc::new(basis),
                k,
                delta_sigma: take(trainable, "delta_sigma", 1, k)?.into_vec(),
                rotation,
            }
        }
    };
    if let Some(extra) = trainable.keys().chain(frozen.keys()).next() {
        return Err(Error::Checkpoint {
            line: 0,
            reason: format!("unexpected tensor `{extra}`"),
        });
    }
    Ok(AdapterState {
        spec,
        w0: Arc::new(w0),
        body,
    })
}

/// Hash of a single tensor as written in checkpoint headers.
pub fn checkpoint_tensor_hash(m: &Matrix) -> String {
    tensor_hash(m)
}
