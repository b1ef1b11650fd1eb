//! Experiment description files.
//!
//! Line oriented: `[section]` headers, `key = value` pairs, `#` comments.
//! A comma in a value makes a sweep. Sections are `[task]`, `[methods]`
//! (required), `[train]` and `[output]`; every other field has a default.
//!
//! ```text
//! [task]
//! shift_kind = inclass
//! dims = 32x32
//! k = 8
//!
//! [methods]
//! lora.r = 1, 2
//! ssvd.p = 0.25
//! ssvd.mode = strict, approx
//!
//! [train]
//! optimizer = sgd
//! learning_rate = 0.05
//! seeds = 0..10
//! ```

use std::collections::HashMap;
use std::path::PathBuf;
use std::str::FromStr;

use peftkit::adapters::{AdapterSpec, SvftVariant};
use peftkit::densela::RngStream;
use peftkit::rotations::RotationMode;
use peftkit::train::{
    make_dense_shift, make_inclass_shift, make_lowrank_shift, Optimizer, ShiftKind, ShiftTask,
    TrainConfig,
};

use crate::error::{BenchError, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct TaskConfig {
    pub shift_kind: ShiftKind,
    pub rows: usize,
    pub cols: usize,
    /// Rotated block size for in-class tasks.
    pub k: usize,
    /// Rank of the additive update for low-rank tasks.
    pub r_star: usize,
    pub rotation_strength: f64,
    pub scale_strength: f64,
    /// Relative size of the additive update for low-rank and dense tasks.
    pub strength: f64,
    pub noise_std: f64,
    pub seed: u64,
}

impl Default for TaskConfig {
    fn default() -> Self {
        TaskConfig {
            shift_kind: ShiftKind::InClassRotation,
            rows: 32,
            cols: 32,
            k: 8,
            r_star: 2,
            rotation_strength: 0.5,
            scale_strength: 0.1,
            strength: 0.3,
            noise_std: 0.0,
            seed: 0,
        }
    }
}

impl TaskConfig {
    /// Task for one run seed. All methods sharing a run seed see the same
    /// task; different run seeds draw different tasks.
    pub fn make_task(&self, run_seed: u64) -> peftkit::Result<ShiftTask> {
        let mut rng = RngStream::new(self.seed).fork(run_seed);
        let (m, n) = (self.rows, self.cols);
        match self.shift_kind {
            ShiftKind::InClassRotation => make_inclass_shift(
                &mut rng,
                m,
                n,
                self.k,
                self.rotation_strength,
                self.scale_strength,
                self.noise_std,
            ),
            ShiftKind::LowRankAdditive => {
                make_lowrank_shift(&mut rng, m, n, self.r_star, self.strength, self.noise_std)
            }
            ShiftKind::Dense => make_dense_shift(&mut rng, m, n, self.strength, self.noise_std),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum OutputFormat {
    Csv,
    Markdown,
    Curves,
}

impl FromStr for OutputFormat {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "csv" => Ok(OutputFormat::Csv),
            "markdown" | "md" => Ok(OutputFormat::Markdown),
            "curves" => Ok(OutputFormat::Curves),
            other => Err(format!("unknown output format {other:?}")),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct OutputConfig {
    pub dir: Option<PathBuf>,
    pub formats: Vec<OutputFormat>,
    /// Record measured wall time. Off by default so outputs are
    /// byte-identical between runs.
    pub timing: bool,
}

impl Default for OutputConfig {
    fn default() -> Self {
        OutputConfig {
            dir: None,
            formats: vec![OutputFormat::Csv, OutputFormat::Markdown, OutputFormat::Curves],
            timing: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub task: TaskConfig,
    /// Expanded method instances in file order.
    pub methods: Vec<AdapterSpec>,
    /// Training settings; `seed` is replaced per run.
    pub train: TrainConfig,
    pub seeds: Vec<u64>,
    pub output: OutputConfig,
}

impl ExperimentConfig {
    pub fn train_config(&self, seed: u64) -> TrainConfig {
        TrainConfig {
            seed,
            ..self.train.clone()
        }
    }

    /// Replaces the first configured seed.
    pub fn override_first_seed(&mut self, seed: u64) {
        match self.seeds.first_mut() {
            Some(first) => *first = seed,
            None => self.seeds.push(seed),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
enum Section {
    Task,
    Methods,
    Train,
    Output,
}

impl Section {
    fn parse(name: &str) -> Option<Self> {
        match name {
            "task" => Some(Section::Task),
            "methods" => Some(Section::Methods),
            "train" => Some(Section::Train),
            "output" => Some(Section::Output),
            _ => None,
        }
    }
}

#[derive(Debug)]
struct Entry<'a> {
    line: usize,
    value: &'a str,
}

impl Entry<'_> {
    fn parse<T: FromStr>(&self, what: &str) -> Result<T> {
        self.value
            .parse()
            .map_err(|_| BenchError::config(self.line, format!("bad {what} {:?}", self.value)))
    }

    fn list<T: FromStr>(&self, what: &str) -> Result<Vec<T>> {
        let items = split_list(self.value);
        if items.is_empty() {
            return Err(BenchError::config(self.line, format!("empty {what} list")));
        }
        items
            .into_iter()
            .map(|v| {
                v.parse()
                    .map_err(|_| BenchError::config(self.line, format!("bad {what} {v:?}")))
            })
            .collect()
    }
}

fn split_list(value: &str) -> Vec<&str> {
    value
        .split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .collect()
}

/// Parses a config file. Errors carry the 1-based line they refer to.
pub fn parse_config(text: &str) -> Result<ExperimentConfig> {
    let mut sections: HashMap<Section, Vec<(&str, Entry)>> = HashMap::new();
    let mut seen_sections: HashMap<Section, usize> = HashMap::new();
    let mut current = None;

    for (idx, raw) in text.lines().enumerate() {
        let line = idx + 1;
        let content = raw.split('#').next().unwrap_or("").trim();
        if content.is_empty() {
            continue;
        }
        if let Some(name) = content.strip_prefix('[') {
            let name = name
                .strip_suffix(']')
                .ok_or_else(|| BenchError::config(line, "unterminated section header"))?
                .trim();
            let section = Section::parse(name)
                .ok_or_else(|| BenchError::config(line, format!("unknown section [{name}]")))?;
            if let Some(first) = seen_sections.insert(section, line) {
                return Err(BenchError::config(
                    line,
                    format!("section [{name}] repeated (first on line {first})"),
                ));
            }
            current = Some(section);
            continue;
        }
        let section =
            current.ok_or_else(|| BenchError::config(line, "key outside of any section"))?;
        let (key, value) = content
            .split_once('=')
            .ok_or_else(|| BenchError::config(line, "expected `key = value`"))?;
        let (key, value) = (key.trim(), value.trim());
        if key.is_empty() || value.is_empty() {
            return Err(BenchError::config(line, "expected `key = value`"));
        }
        let entries = sections.entry(section).or_default();
        if let Some((_, prev)) = entries.iter().find(|(k, _)| *k == key) {
            return Err(BenchError::config(
                line,
                format!("duplicate key {key:?} (first on line {})", prev.line),
            ));
        }
        entries.push((key, Entry { line, value }));
    }

    if !seen_sections.contains_key(&Section::Methods) {
        return Err(BenchError::ConfigStructure("missing [methods] section".into()));
    }

    let task = parse_task(sections.remove(&Section::Task).unwrap_or_default())?;
    let (train, seeds) = parse_train(sections.remove(&Section::Train).unwrap_or_default())?;
    let output = parse_output(sections.remove(&Section::Output).unwrap_or_default())?;
    let methods = parse_methods(
        sections.remove(&Section::Methods).unwrap_or_default(),
        &task,
        seen_sections[&Section::Methods],
    )?;
    Ok(ExperimentConfig {
        task,
        methods,
        train,
        seeds,
        output,
    })
}

fn unknown(key: &str, entry: &Entry, section: &str) -> BenchError {
    BenchError::config(entry.line, format!("unknown key {key:?} in [{section}]"))
}

fn parse_task(entries: Vec<(&str, Entry)>) -> Result<TaskConfig> {
    let mut task = TaskConfig::default();
    for (key, e) in &entries {
        match *key {
            "shift_kind" => task.shift_kind = e.parse("shift kind")?,
            "dims" => {
                let (m, n) = e
                    .value
                    .split_once('x')
                    .ok_or_else(|| BenchError::config(e.line, "dims must look like 32x24"))?;
                let dim = |s: &str| {
                    s.trim()
                        .parse::<usize>()
                        .ok()
                        .filter(|&d| d > 0)
                        .ok_or_else(|| BenchError::config(e.line, format!("bad dimension {s:?}")))
                };
                task.rows = dim(m)?;
                task.cols = dim(n)?;
            }
            "k" => task.k = e.parse("k")?,
            "r_star" => task.r_star = e.parse("r_star")?,
            "rotation_strength" => task.rotation_strength = e.parse("strength")?,
            "scale_strength" => task.scale_strength = e.parse("strength")?,
            "strength" => task.strength = e.parse("strength")?,
            "noise" => task.noise_std = e.parse("noise")?,
            "seed" => task.seed = e.parse("seed")?,
            _ => return Err(unknown(key, e, "task")),
        }
    }
    let line = |name: &str| entries.iter().find(|(k, _)| *k == name).map_or(0, |(_, e)| e.line);
    let r0 = task.rows.min(task.cols);
    if task.shift_kind == ShiftKind::InClassRotation && !(1..=r0).contains(&task.k) {
        return Err(BenchError::config(line("k"), format!("k must be in 1..={r0}")));
    }
    if task.shift_kind == ShiftKind::LowRankAdditive && !(1..=r0).contains(&task.r_star) {
        return Err(BenchError::config(line("r_star"), format!("r_star must be in 1..={r0}")));
    }
    for (name, v) in [
        ("rotation_strength", task.rotation_strength),
        ("scale_strength", task.scale_strength),
        ("strength", task.strength),
        ("noise", task.noise_std),
    ] {
        if !(v.is_finite() && v >= 0.0) {
            return Err(BenchError::config(line(name), format!("{name} must be >= 0")));
        }
    }
    Ok(task)
}

fn parse_seeds(e: &Entry) -> Result<Vec<u64>> {
    let mut seeds = Vec::new();
    for item in split_list(e.value) {
        if let Some((lo, hi)) = item.split_once("..") {
            let lo: u64 = lo.trim().parse().map_err(|_| BenchError::config(e.line, "bad seed range"))?;
            let hi: u64 = hi.trim().parse().map_err(|_| BenchError::config(e.line, "bad seed range"))?;
            if hi <= lo {
                return Err(BenchError::config(e.line, "empty seed range"));
            }
            seeds.extend(lo..hi);
        } else {
            seeds.push(item.parse().map_err(|_| BenchError::config(e.line, format!("bad seed {item:?}")))?);
        }
    }
    if seeds.is_empty() {
        return Err(BenchError::config(e.line, "no seeds"));
    }
    Ok(seeds)
}

fn parse_train(entries: Vec<(&str, Entry)>) -> Result<(TrainConfig, Vec<u64>)> {
    let mut cfg = TrainConfig::default();
    let mut seeds = vec![0];
    for (key, e) in &entries {
        match *key {
            "optimizer" => {
                cfg.optimizer = e
                    .value
                    .parse::<Optimizer>()
                    .map_err(|err| BenchError::config(e.line, err.to_string()))?
            }
            "learning_rate" | "lr" => cfg.learning_rate = e.parse("learning rate")?,
            "epochs" => cfg.epochs = e.parse("epoch count")?,
            "batch_size" => cfg.batch_size = e.parse("batch size")?,
            "samples_per_epoch" => cfg.samples_per_epoch = e.parse("sample count")?,
            "loss_threshold" => cfg.loss_threshold = Some(e.parse("threshold")?),
            "seeds" => seeds = parse_seeds(e)?,
            _ => return Err(unknown(key, e, "train")),
        }
    }
    cfg.validate().map_err(|err| {
        let line = entries.first().map_or(0, |(_, e)| e.line);
        BenchError::config(line, err.to_string())
    })?;
    Ok((cfg, seeds))
}

fn parse_output(entries: Vec<(&str, Entry)>) -> Result<OutputConfig> {
    let mut out = OutputConfig::default();
    for (key, e) in &entries {
        match *key {
            "dir" => out.dir = Some(PathBuf::from(e.value)),
            "formats" => {
                out.formats = split_list(e.value)
                    .into_iter()
                    .map(|f| f.parse().map_err(|msg| BenchError::config(e.line, msg)))
                    .collect::<Result<_>>()?;
                if out.formats.is_empty() {
                    return Err(BenchError::config(e.line, "no output formats"));
                }
            }
            "timing" => out.timing = e.parse("boolean")?,
            _ => return Err(unknown(key, e, "output")),
        }
    }
    Ok(out)
}

fn parse_variant(s: &str) -> Option<SvftVariant> {
    let (name, arg) = match s.split_once(':') {
        Some((n, a)) => (n.trim(), Some(a.trim())),
        None => (s, None),
    };
    match (name, arg) {
        ("plain", None) => Some(SvftVariant::Plain),
        ("banded", Some(a)) => a.parse().ok().map(|d| SvftVariant::Banded { d }),
        ("random", Some(a)) => a.parse().ok().map(|density| SvftVariant::Random { density }),
        ("topk", Some(a)) => a.parse().ok().map(|count| SvftVariant::TopK { count }),
        _ => None,
    }
}

const METHODS: [&str; 6] = ["lora", "vera", "dora", "pissa", "svft", "ssvd"];

fn parse_methods(
    entries: Vec<(&str, Entry)>,
    task: &TaskConfig,
    header_line: usize,
) -> Result<Vec<AdapterSpec>> {
    // group keys by method, keeping first-appearance order
    let mut order: Vec<&str> = Vec::new();
    let mut groups: HashMap<&str, Vec<(&str, &Entry)>> = HashMap::new();
    for (key, e) in &entries {
        let (method, field) = key
            .split_once('.')
            .ok_or_else(|| BenchError::config(e.line, format!("expected method.field, got {key:?}")))?;
        if !METHODS.contains(&method) {
            return Err(BenchError::config(e.line, format!("unknown method {method:?}")));
        }
        if !groups.contains_key(method) {
            order.push(method);
        }
        groups.entry(method).or_default().push((field, e));
    }
    if order.is_empty() {
        return Err(BenchError::config(header_line, "[methods] lists no method"));
    }

    let mut specs = Vec::new();
    for method in order {
        let fields = &groups[method];
        let allowed: &[&str] = match method {
            "lora" | "dora" | "pissa" => &["r", "init_scale"],
            "vera" => &["r", "seed", "init_scale"],
            "svft" => &["variant"],
            _ => &["p", "mode"],
        };
        for (field, e) in fields {
            if !allowed.contains(field) {
                return Err(BenchError::config(e.line, format!("unknown key {method}.{field}")));
            }
        }
        let get = |name: &str| fields.iter().find(|(f, _)| *f == name).map(|(_, e)| *e);
        let first_line = fields[0].1.line;
        let required = |name: &str| {
            get(name).ok_or_else(|| BenchError::config(first_line, format!("{method}.{name} is required")))
        };
        let init_scale: Option<f64> = get("init_scale").map(|e| e.parse("init scale")).transpose()?;

        let mut expanded: Vec<(AdapterSpec, usize)> = Vec::new();
        match method {
            "svft" => {
                let e = required("variant")?;
                for item in split_list(e.value) {
                    let variant = parse_variant(item)
                        .ok_or_else(|| BenchError::config(e.line, format!("bad svft variant {item:?}")))?;
                    expanded.push((AdapterSpec::svft(variant), e.line));
                }
            }
            "ssvd" => {
                let p = required("p")?;
                let modes: Vec<RotationMode> = match get("mode") {
                    Some(e) => e.list("rotation mode")?,
                    None => vec![RotationMode::Strict],
                };
                for portion in p.list::<f64>("portion")? {
                    for &mode in &modes {
                        expanded.push((AdapterSpec::ssvd(portion, mode), p.line));
                    }
                }
            }
            _ => {
                let e = required("r")?;
                let shared_seed: u64 = get("seed").map(|s| s.parse("seed")).transpose()?.unwrap_or(0);
                for rank in e.list::<usize>("rank")? {
                    let spec = match method {
                        "lora" => AdapterSpec::lora(rank),
                        "vera" => AdapterSpec::vera(rank, shared_seed),
                        "dora" => AdapterSpec::dora(rank),
                        _ => AdapterSpec::pissa(rank),
                    };
                    let spec = match init_scale {
                        Some(s) => spec.with_init_scale(s),
                        None => spec,
                    };
                    expanded.push((spec, e.line));
                }
            }
        }
        for (spec, line) in expanded {
            spec.validate(task.rows, task.cols)
                .map_err(|err| BenchError::config(line, err.to_string()))?;
            specs.push(spec);
        }
    }
    Ok(specs)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn line_of(err: BenchError) -> usize {
        match err {
            BenchError::Config { line, .. } => line,
            other => panic!("expected a line-numbered error, got {other}"),
        }
    }

    #[test]
    fn minimal_config_fills_defaults() {
        let cfg = parse_config("[methods]\nlora.r = 4\n").unwrap();
        assert_eq!(cfg.methods, vec![AdapterSpec::lora(4)]);
        assert_eq!(cfg.task, TaskConfig::default());
        assert_eq!(cfg.train, TrainConfig::default());
        assert_eq!(cfg.seeds, vec![0]);
        assert_eq!(cfg.output, OutputConfig::default());
    }

    #[test]
    fn sweep_expands_to_instances() {
        let cfg = parse_config("[methods]\nlora.r = 1,2,4\n").unwrap();
        assert_eq!(
            cfg.methods,
            vec![AdapterSpec::lora(1), AdapterSpec::lora(2), AdapterSpec::lora(4)]
        );
    }

    #[test]
    fn ssvd_sweeps_cross_portion_and_mode() {
        let cfg = parse_config("[methods]\nssvd.p = 0.25, 0.5\nssvd.mode = strict, approx\n").unwrap();
        let labels: Vec<String> = cfg.methods.iter().map(|s| s.to_string()).collect();
        assert_eq!(
            labels,
            ["SSVD_p=25%_strict", "SSVD_p=25%_approx", "SSVD_p=50%_strict", "SSVD_p=50%_approx"]
        );
    }

    #[test]
    fn full_config() {
        let text = "\
# comment line
[task]
shift_kind = lowrank   # trailing comment
dims = 16x12
r_star = 2
strength = 0.4
noise = 0.01
seed = 9

[methods]
pissa.r = 2
vera.r = 4
vera.seed = 5
svft.variant = plain, banded:1, random:0.2, topk:6
dora.r = 1

[train]
optimizer = adam
learning_rate = 0.02
epochs = 10
batch_size = 8
samples_per_epoch = 16
loss_threshold = 1e-3
seeds = 3, 10..12

[output]
dir = out
formats = csv, curves
timing = true
";
        let cfg = parse_config(text).unwrap();
        assert_eq!(cfg.task.shift_kind, ShiftKind::LowRankAdditive);
        assert_eq!((cfg.task.rows, cfg.task.cols, cfg.task.seed), (16, 12, 9));
        assert_eq!(cfg.seeds, vec![3, 10, 11]);
        assert_eq!(cfg.train.optimizer, Optimizer::Adam);
        assert_eq!(cfg.train.loss_threshold, Some(1e-3));
        assert_eq!(cfg.output.formats, vec![OutputFormat::Csv, OutputFormat::Curves]);
        assert!(cfg.output.timing);
        assert_eq!(cfg.methods.len(), 1 + 1 + 4 + 1);
        assert_eq!(cfg.methods[0], AdapterSpec::pissa(2));
        assert_eq!(cfg.methods[1], AdapterSpec::vera(4, 5));
        assert_eq!(cfg.methods[3], AdapterSpec::svft(SvftVariant::Banded { d: 1 }));
    }

    #[test]
    fn duplicate_key_names_its_line() {
        let err = parse_config("[methods]\nlora.r = 1\n\nlora.r = 2\n").unwrap_err();
        assert!(err.to_string().contains("duplicate"), "{err}");
        assert_eq!(line_of(err), 4);
    }

    #[test]
    fn errors_carry_line_numbers() {
        let cases = [
            ("[methods]\nmystery.r = 1\n", 2),
            ("[methods]\nlora.r = 1\n[train]\nepochs = many\n", 4),
            ("[task]\nwidth = 3\n[methods]\nlora.r = 1\n", 2),
            ("[methods]\nlora.r = 1\nlora.alpha = 2\n", 3),
            ("[methods]\nlora.r = 99\n", 2),
            ("[methods]\nsvft.variant = banded\n", 2),
            ("[bogus]\n", 1),
            ("lora.r = 1\n[methods]\n", 1),
            ("[methods]\nlora.r 1\n", 2),
        ];
        for (text, line) in cases {
            let err = parse_config(text).unwrap_err();
            assert_eq!(line_of(err), line, "{text:?}");
        }
    }

    #[test]
    fn missing_methods_section_is_rejected() {
        let err = parse_config("[task]\ndims = 8x8\n").unwrap_err();
        assert!(err.to_string().contains("[methods]"));
        assert!(parse_config("[methods]\n").is_err());
    }

    #[test]
    fn first_seed_override() {
        let mut cfg = parse_config("[methods]\nlora.r = 1\n[train]\nseeds = 4, 5\n").unwrap();
        cfg.override_first_seed(42);
        assert_eq!(cfg.seeds, vec![42, 5]);
    }
}
