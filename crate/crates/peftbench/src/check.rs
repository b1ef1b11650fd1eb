//! Self-check suites run by `peftbench check`.

use std::fmt;
use std::str::FromStr;
use std::time::{Duration, Instant};

use peftkit::adapters::{AdapterSpec, AdapterState, SvftVariant};
use peftkit::densela::{random_matrix, Matrix, RngStream};
use peftkit::rotations::{
    cayley_approx, cayley_from_matrix, cayley_strict, expand_skew, orthogonality_error, RotationMode,
    SkewParam,
};
use peftkit::svd::svd;
use peftkit::train::{check_adapter_gradient, make_inclass_shift, train_run, Optimizer, TrainConfig};

/// Deliberate defects for exercising the harness itself.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Fault {
    /// Flips the sign of the lower triangle of the Cayley generator, so the
    /// "skew" matrix handed to the transform is symmetric.
    CayleySign,
}

impl FromStr for Fault {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "cayley-sign" => Ok(Fault::CayleySign),
            other => Err(format!("unknown fault {other:?} (known: cayley-sign)")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct CheckOptions {
    pub fault: Option<Fault>,
    pub seed: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Suite {
    Svd,
    Cayley,
    Init,
    Gradients,
    Counts,
    EckartYoung,
    Checkpoint,
    Frozen,
}

impl Suite {
    pub const ALL: [Suite; 8] = [
        Suite::Svd,
        Suite::Cayley,
        Suite::Init,
        Suite::Gradients,
        Suite::Counts,
        Suite::EckartYoung,
        Suite::Checkpoint,
        Suite::Frozen,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Suite::Svd => "svd",
            Suite::Cayley => "cayley",
            Suite::Init => "init",
            Suite::Gradients => "gradients",
            Suite::Counts => "counts",
            Suite::EckartYoung => "eckart-young",
            Suite::Checkpoint => "checkpoint",
            Suite::Frozen => "frozen",
        }
    }

    pub fn run(self, opts: &CheckOptions) -> Result<String, String> {
        let mut rng = RngStream::new(opts.seed).fork(self as u64);
        match self {
            Suite::Svd => svd_suite(&mut rng),
            Suite::Cayley => cayley_suite(&mut rng, opts.fault),
            Suite::Init => init_suite(&mut rng),
            Suite::Gradients => gradient_suite(&mut rng),
            Suite::Counts => counts_suite(&mut rng),
            Suite::EckartYoung => eckart_young_suite(&mut rng),
            Suite::Checkpoint => checkpoint_suite(&mut rng),
            Suite::Frozen => frozen_suite(&mut rng),
        }
    }
}

impl fmt::Display for Suite {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Suite {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        Suite::ALL
            .into_iter()
            .find(|suite| suite.name() == s)
            .ok_or_else(|| format!("unknown suite {s:?}"))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SuiteOutcome {
    pub suite: Suite,
    pub result: Result<String, String>,
    pub elapsed: Duration,
}

impl SuiteOutcome {
    pub fn passed(&self) -> bool {
        self.result.is_ok()
    }
}

impl fmt::Display for SuiteOutcome {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let (tag, detail) = match &self.result {
            Ok(d) => ("PASS", d),
            Err(d) => ("FAIL", d),
        };
        write!(
            f,
            "{tag} {:<13} {:>9.1} ms  {detail}",
            self.suite.name(),
            self.elapsed.as_secs_f64() * 1e3
        )
    }
}

pub fn run_suites(suites: &[Suite], opts: &CheckOptions) -> Vec<SuiteOutcome> {
    suites
        .iter()
        .map(|&suite| {
            let start = Instant::now();
            let result = suite.run(opts);
            SuiteOutcome {
                suite,
                result,
                elapsed: start.elapsed(),
            }
        })
        .collect()
}

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn e2s<E: fmt::Display>(e: E) -> String {
    e.to_string()
}

fn random_skew(rng: &mut RngStream, k: usize, norm: f64) -> SkewParam {
    let mut packed: Vec<f64> = (0..k * (k - 1) / 2).map(|_| rng.uniform(1.0)).collect();
    let current = (2.0 * packed.iter().map(|v| v * v).sum::<f64>()).sqrt();
    for v in &mut packed {
        *v *= norm / current;
    }
    SkewParam::new(k, packed).expect("packed length matches")
}

fn svd_suite(rng: &mut RngStream) -> Result<String, String> {
    let mut worst = 0.0_f64;
    let mut cases = 0;
    for &(m, n) in &[(1, 1), (5, 3), (3, 5), (8, 8), (12, 7), (7, 16), (20, 20)] {
        for _ in 0..5 {
            let w = random_matrix(rng, m, n, 1.0);
            let f = svd(&w).map_err(e2s)?.oriented();
            let r = f.sigma.len();
            let rebuilt = f.left.scale_cols(&f.sigma).matmul_t(&f.right).map_err(e2s)?;
            let err = rebuilt.sub(&w).map_err(e2s)?.frobenius_norm() / w.frobenius_norm();
            let ortho_l = f.left.t_matmul(&f.left).map_err(e2s)?.max_abs_diff(&Matrix::identity(r));
            let ortho_r = f.right.t_matmul(&f.right).map_err(e2s)?.max_abs_diff(&Matrix::identity(r));
            ensure(f.sigma.windows(2).all(|p| p[0] >= p[1]), || {
                format!("{m}x{n}: singular values not sorted")
            })?;
            worst = worst.max(err).max(ortho_l).max(ortho_r);
            cases += 1;
        }
    }
    ensure(worst <= 1e-10, || format!("worst reconstruction/orthogonality error {worst:.2e}"))?;
    Ok(format!("{cases} matrices, worst error {worst:.2e}"))
}

fn cayley_suite(rng: &mut RngStream, fault: Option<Fault>) -> Result<String, String> {
    let strict = |p: &SkewParam| -> Result<Matrix, String> {
        match fault {
            None => cayley_strict(p).map_err(e2s),
            Some(Fault::CayleySign) => {
                let mut k = expand_skew(p);
                for i in 0..k.rows() {
                    for j in 0..i {
                        k.set(i, j, -k.get(i, j));
                    }
                }
                cayley_from_matrix(&k).map_err(e2s)
            }
        }
    };
    let mut worst = 0.0_f64;
    for &k in &[2, 8, 32] {
        for _ in 0..100 {
            let norm = 0.1 + rng.next_f64() * 2.0;
            let g = strict(&random_skew(rng, k, norm))?;
            worst = worst.max(orthogonality_error(&g));
        }
    }
    ensure(worst <= 1e-10, || format!("strict ‖GᵀG − I‖ reached {worst:.2e}"))?;

    let mut ratios = Vec::new();
    for &k in &[4, 8, 16] {
        let p = random_skew(rng, k, 0.2);
        let half = SkewParam::new(k, p.packed().iter().map(|v| v * 0.5).collect()).map_err(e2s)?;
        ratios.push(orthogonality_error(&cayley_approx(&half)) / orthogonality_error(&cayley_approx(&p)));
    }
    ensure(ratios.iter().all(|r| (r - 0.25).abs() <= 0.05), || {
        format!("approximate error ratios {ratios:?} not quadratic")
    })?;
    Ok(format!("300 rotations, worst {worst:.2e}; halving ratios {ratios:.3?}"))
}

fn every_method(rank: usize) -> Vec<AdapterSpec> {
    let mut specs = vec![
        AdapterSpec::lora(rank),
        AdapterSpec::vera(rank, 11),
        AdapterSpec::dora(rank),
        AdapterSpec::pissa(rank),
        AdapterSpec::svft(SvftVariant::Plain),
        AdapterSpec::svft(SvftVariant::Banded { d: 1 }),
        AdapterSpec::svft(SvftVariant::Random { density: 0.2 }),
        AdapterSpec::svft(SvftVariant::TopK { count: 4 }),
    ];
    for mode in RotationMode::ALL {
        specs.push(AdapterSpec::ssvd(0.5, mode));
    }
    specs
}

fn random_shape(rng: &mut RngStream) -> (usize, usize) {
    (3 + rng.below(12), 3 + rng.below(10))
}

fn init_suite(rng: &mut RngStream) -> Result<String, String> {
    let mut worst = 0.0_f64;
    for _ in 0..20 {
        let (m, n) = random_shape(rng);
        let w0 = random_matrix(rng, m, n, 1.0);
        for spec in every_method(2) {
            let state = AdapterState::init(spec, &w0, rng).map_err(e2s)?;
            let diff = state.effective_weight().map_err(e2s)?.sub(&w0).map_err(e2s)?;
            let rel = diff.frobenius_norm() / w0.frobenius_norm();
            ensure(rel <= 1e-8, || format!("{spec} on {m}x{n}: init drift {rel:.2e}"))?;
            worst = worst.max(rel);
        }
    }
    Ok(format!("20 shapes x 11 instances, worst drift {worst:.2e}"))
}

fn gradient_suite(rng: &mut RngStream) -> Result<String, String> {
    let mut worst = 0.0_f64;
    for spec in every_method(2) {
        for _ in 0..5 {
            let (m, n) = random_shape(rng);
            let w0 = random_matrix(rng, m, n, 1.0);
            let state = AdapterState::init(spec, &w0, rng).map_err(e2s)?;
            let delta: Vec<f64> = (0..state.trainable_param_count()).map(|_| rng.uniform(0.3)).collect();
            let state = state.apply_update(&delta).map_err(e2s)?;
            let x = random_matrix(rng, n, 4, 1.0);
            let up = random_matrix(rng, m, 4, 1.0);
            let check = check_adapter_gradient(&state, &x, &up).map_err(e2s)?;
            ensure(check.rel_error <= 1e-4, || {
                format!("{spec} on {m}x{n}: relative gradient error {:.2e}", check.rel_error)
            })?;
            worst = worst.max(check.rel_error);
        }
    }
    Ok(format!("11 instances x 5 draws, worst relative error {worst:.2e}"))
}

fn counts_suite(rng: &mut RngStream) -> Result<String, String> {
    for &m in &[64, 384, 1024] {
        for &n in &[64, 384, 1024] {
            for &r in &[8, 16, 32] {
                for spec in [AdapterSpec::lora(r), AdapterSpec::pissa(r)] {
                    ensure(spec.trainable_param_count(m, n) == r * (m + n), || {
                        format!("{spec} count wrong for {m}x{n}")
                    })?;
                }
            }
            for &k in &[16, 64] {
                let spec = AdapterSpec::ssvd(k as f64 / m.min(n) as f64, RotationMode::Strict);
                ensure(spec.trainable_param_count(m, n) == k * (k + 1) / 2, || {
                    format!("{spec} count wrong for {m}x{n}")
                })?;
            }
        }
    }
    // formulas agree with counting the instantiated tensors
    let mut instances = 0;
    for _ in 0..10 {
        let (m, n) = random_shape(rng);
        let w0 = random_matrix(rng, m, n, 1.0);
        for spec in every_method(2) {
            let state = AdapterState::init(spec, &w0, rng).map_err(e2s)?;
            let counted: usize = state.trainable_tensors().iter().map(|(_, t)| t.len()).sum();
            ensure(counted == spec.trainable_param_count(m, n), || {
                format!("{spec} on {m}x{n}: formula {} vs tensors {counted}", spec.trainable_param_count(m, n))
            })?;
            instances += 1;
        }
    }
    Ok(format!("formula grid plus {instances} instantiated adapters"))
}

fn eckart_young_suite(rng: &mut RngStream) -> Result<String, String> {
    let mut competitors = 0;
    for _ in 0..20 {
        let w = random_matrix(rng, 10, 8, 1.0);
        let f = svd(&w).map_err(e2s)?;
        for &k in &[1, 2, 4] {
            let best = w.sub(&f.truncate(k).map_err(e2s)?).map_err(e2s)?.frobenius_norm();
            for _ in 0..200 {
                let c = random_matrix(rng, 10, k, 1.0)
                    .matmul_t(&random_matrix(rng, 8, k, 1.0))
                    .map_err(e2s)?;
                let err = w.sub(&c).map_err(e2s)?.frobenius_norm();
                ensure(best <= err + 1e-12, || format!("rank-{k} competitor beat truncation"))?;
                competitors += 1;
            }
        }
    }
    Ok(format!("{competitors} competitors, no violations"))
}

fn checkpoint_suite(rng: &mut RngStream) -> Result<String, String> {
    let w0 = random_matrix(rng, 9, 7, 1.0);
    let x = random_matrix(rng, 7, 3, 1.0);
    for spec in every_method(2) {
        let state = AdapterState::init(spec, &w0, rng).map_err(e2s)?;
        let delta: Vec<f64> = (0..state.trainable_param_count()).map(|_| rng.uniform(0.3)).collect();
        let state = state.apply_update(&delta).map_err(e2s)?;
        let bytes = state.save_state();
        let back = AdapterState::load_state(&bytes).map_err(e2s)?;
        ensure(back.save_state() == bytes, || format!("{spec}: bytes changed on reload"))?;
        let same = back.forward(&x).map_err(e2s)? == state.forward(&x).map_err(e2s)?;
        ensure(same, || format!("{spec}: forward differs after reload"))?;
    }
    Ok("11 instances round-trip bit-exactly".into())
}

fn frozen_suite(rng: &mut RngStream) -> Result<String, String> {
    let task = make_inclass_shift(rng, 10, 8, 2, 0.5, 0.1, 0.0).map_err(e2s)?;
    let cfg = TrainConfig {
        optimizer: Optimizer::Adam,
        learning_rate: 0.01,
        epochs: 10,
        batch_size: 16,
        samples_per_epoch: 160,
        seed: rng.next_u64(),
        loss_threshold: None,
    };
    // train_run fails if any frozen tensor hash changes
    for spec in every_method(2) {
        train_run(&task, spec, &cfg).map_err(e2s)?;
    }
    Ok("100 steps per instance, frozen hashes unchanged".into())
}
