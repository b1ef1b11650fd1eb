//! Result files.
//!
//! * `results.csv`: one row per run.
//! * `summary.md`: one row per method instance, aggregated over seeds and
//!   sorted by trainable parameter count.
//! * `curves.csv`: mean held-out loss per method instance and epoch.

use std::collections::HashMap;
use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use peftkit::train::RunResult;

use crate::error::{BenchError, Result};

pub const RESULTS_FILE: &str = "results.csv";
pub const SUMMARY_FILE: &str = "summary.md";
pub const CURVES_FILE: &str = "curves.csv";

pub const CSV_HEADER: [&str; 8] = [
    "method",
    "variant",
    "params",
    "seed",
    "final_loss",
    "epochs_to_threshold",
    "diverged",
    "wall_ms",
];

const LOSS_NOTE: &str = "Loss is mean squared error on held-out teacher outputs; it is not a word error rate.";

/// One line of `results.csv`.
#[derive(Debug, Clone, PartialEq)]
pub struct CsvRow {
    pub method: String,
    pub variant: String,
    pub params: usize,
    pub seed: u64,
    pub final_loss: f64,
    pub epochs_to_threshold: Option<usize>,
    pub diverged: bool,
    pub wall_ms: u64,
}

impl From<&RunResult> for CsvRow {
    fn from(r: &RunResult) -> Self {
        CsvRow {
            method: r.label.clone(),
            variant: r.variant.to_string(),
            params: r.trainable_params,
            seed: r.seed,
            final_loss: r.final_loss,
            epochs_to_threshold: r.epochs_to_threshold,
            diverged: r.diverged,
            wall_ms: r.wall_ms,
        }
    }
}

impl CsvRow {
    /// `method` plus the variant when there is one, e.g. `SSVD_p=25%_approx`.
    pub fn full_label(&self) -> String {
        full_label(&self.method, &self.variant)
    }
}

fn full_label(method: &str, variant: &str) -> String {
    if variant == "-" {
        method.to_string()
    } else {
        format!("{method}_{variant}")
    }
}

fn nonempty<T>(items: &[T], path: &Path) -> Result<()> {
    if items.is_empty() {
        return Err(BenchError::Report {
            path: path.to_path_buf(),
            msg: "nothing to write".into(),
        });
    }
    Ok(())
}

fn csv_err(path: &Path) -> impl Fn(csv::Error) -> BenchError + '_ {
    move |source| BenchError::Csv {
        path: path.to_path_buf(),
        source,
    }
}

pub fn render_csv(rows: &[CsvRow]) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    let err = csv_err(Path::new("<memory>"));
    w.write_record(CSV_HEADER).map_err(&err)?;
    for r in rows {
        w.write_record([
            r.method.clone(),
            r.variant.clone(),
            r.params.to_string(),
            r.seed.to_string(),
            format!("{:e}", r.final_loss),
            r.epochs_to_threshold.map(|e| e.to_string()).unwrap_or_default(),
            r.diverged.to_string(),
            r.wall_ms.to_string(),
        ])
        .map_err(&err)?;
    }
    let bytes = w.into_inner().map_err(|e| err(e.into_error().into()))?;
    Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
}

/// One row per run, columns in [`CSV_HEADER`] order.
pub fn write_csv(results: &[RunResult], path: &Path) -> Result<()> {
    nonempty(results, path)?;
    let rows: Vec<CsvRow> = results.iter().map(CsvRow::from).collect();
    fs::write(path, render_csv(&rows)?).map_err(|e| BenchError::io(path, e))
}

pub fn read_csv(path: &Path) -> Result<Vec<CsvRow>> {
    let mut reader = csv::Reader::from_path(path).map_err(csv_err(path))?;
    let header = reader.headers().map_err(csv_err(path))?.clone();
    if header.iter().ne(CSV_HEADER) {
        return Err(BenchError::Report {
            path: path.to_path_buf(),
            msg: format!("unexpected header {:?}", header.iter().collect::<Vec<_>>()),
        });
    }
    let mut rows = Vec::new();
    for (idx, record) in reader.records().enumerate() {
        let record = record.map_err(csv_err(path))?;
        let bad = |field: &str| BenchError::Report {
            path: path.to_path_buf(),
            msg: format!("row {}: bad {field}", idx + 1),
        };
        let epochs = &record[5];
        rows.push(CsvRow {
            method: record[0].to_string(),
            variant: record[1].to_string(),
            params: record[2].parse().map_err(|_| bad("params"))?,
            seed: record[3].parse().map_err(|_| bad("seed"))?,
            final_loss: record[4].parse().map_err(|_| bad("final_loss"))?,
            epochs_to_threshold: if epochs.is_empty() {
                None
            } else {
                Some(epochs.parse().map_err(|_| bad("epochs_to_threshold"))?)
            },
            diverged: record[6].parse().map_err(|_| bad("diverged"))?,
            wall_ms: record[7].parse().map_err(|_| bad("wall_ms"))?,
        });
    }
    Ok(rows)
}

/// Per-method aggregate over seeds.
#[derive(Debug, Clone, PartialEq)]
pub struct ReportRow {
    pub label: String,
    pub method: String,
    pub variant: String,
    pub trainable_params: usize,
    pub seeds: usize,
    pub mean_final_loss: f64,
    pub min_final_loss: f64,
    /// Mean over the seeds that reached the threshold.
    pub mean_epochs_to_threshold: Option<f64>,
    pub reached_threshold: usize,
    pub diverged: usize,
    pub mean_wall_ms: f64,
}

/// Groups rows by method instance; sorted by parameter count, then label.
pub fn aggregate(rows: &[CsvRow]) -> Vec<ReportRow> {
    let mut order: Vec<String> = Vec::new();
    let mut groups: HashMap<String, Vec<&CsvRow>> = HashMap::new();
    for r in rows {
        let label = r.full_label();
        if !groups.contains_key(&label) {
            order.push(label.clone());
        }
        groups.entry(label).or_default().push(r);
    }
    let mut out: Vec<ReportRow> = order
        .into_iter()
        .map(|label| {
            let g = &groups[&label];
            let n = g.len() as f64;
            let hits: Vec<f64> = g.iter().filter_map(|r| r.epochs_to_threshold).map(|e| e as f64).collect();
            ReportRow {
                method: g[0].method.clone(),
                variant: g[0].variant.clone(),
                trainable_params: g[0].params,
                seeds: g.len(),
                mean_final_loss: g.iter().map(|r| r.final_loss).sum::<f64>() / n,
                min_final_loss: g.iter().map(|r| r.final_loss).fold(f64::INFINITY, f64::min),
                mean_epochs_to_threshold: (!hits.is_empty())
                    .then(|| hits.iter().sum::<f64>() / hits.len() as f64),
                reached_threshold: hits.len(),
                diverged: g.iter().filter(|r| r.diverged).count(),
                mean_wall_ms: g.iter().map(|r| r.wall_ms as f64).sum::<f64>() / n,
                label,
            }
        })
        .collect();
    out.sort_by(|a, b| {
        a.trainable_params
            .cmp(&b.trainable_params)
            .then_with(|| a.label.cmp(&b.label))
    });
    out
}

pub fn render_markdown(rows: &[ReportRow]) -> String {
    let mut s = String::new();
    let _ = writeln!(s, "# Results\n\n{LOSS_NOTE}\n");
    s.push_str("| method | variant | params | seeds | mean final loss | min final loss | mean epochs to threshold | diverged | mean wall ms |\n");
    s.push_str("|---|---|---:|---:|---:|---:|---:|---:|---:|\n");
    for r in rows {
        let epochs = r
            .mean_epochs_to_threshold
            .map(|e| format!("{e:.1} ({}/{})", r.reached_threshold, r.seeds))
            .unwrap_or_else(|| "-".into());
        let _ = writeln!(
            s,
            "| {} | {} | {} | {} | {:.4e} | {:.4e} | {} | {} | {:.1} |",
            r.method,
            r.variant,
            r.trainable_params,
            r.seeds,
            r.mean_final_loss,
            r.min_final_loss,
            epochs,
            r.diverged,
            r.mean_wall_ms
        );
    }
    s
}

pub fn write_markdown(rows: &[ReportRow], path: &Path) -> Result<()> {
    nonempty(rows, path)?;
    fs::write(path, render_markdown(rows)).map_err(|e| BenchError::io(path, e))
}

/// Mean loss per epoch for each method instance in first-appearance order.
/// Runs that diverged contribute only the epochs they completed.
pub fn curve_rows(results: &[RunResult]) -> Vec<(String, String, usize, f64)> {
    let mut order: Vec<(String, String)> = Vec::new();
    let mut groups: HashMap<(String, String), Vec<&RunResult>> = HashMap::new();
    for r in results {
        let key = (r.label.clone(), r.variant.to_string());
        if !groups.contains_key(&key) {
            order.push(key.clone());
        }
        groups.entry(key).or_default().push(r);
    }
    let mut out = Vec::new();
    for key in order {
        let runs = &groups[&key];
        let epochs = runs.iter().map(|r| r.loss_curve.len()).max().unwrap_or(0);
        for epoch in 0..epochs {
            let vals: Vec<f64> = runs.iter().filter_map(|r| r.loss_curve.get(epoch).copied()).collect();
            let mean = vals.iter().sum::<f64>() / vals.len() as f64;
            out.push((key.0.clone(), key.1.clone(), epoch + 1, mean));
        }
    }
    out
}

pub fn render_curves(results: &[RunResult]) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    let err = csv_err(Path::new("<memory>"));
    w.write_record(["method", "variant", "epoch", "mean_loss"]).map_err(&err)?;
    for (method, variant, epoch, mean) in curve_rows(results) {
        w.write_record([method, variant, epoch.to_string(), format!("{mean:e}")])
            .map_err(&err)?;
    }
    let bytes = w.into_inner().map_err(|e| err(e.into_error().into()))?;
    Ok(format!("# {LOSS_NOTE}\n{}", String::from_utf8(bytes).expect("utf-8")))
}

/// One row per `(method, epoch)`, preceded by a `#` note line.
pub fn write_curves(results: &[RunResult], path: &Path) -> Result<()> {
    nonempty(results, path)?;
    fs::write(path, render_curves(results)?).map_err(|e| BenchError::io(path, e))
}
