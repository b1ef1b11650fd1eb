use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;
use std::thread;

use peftkit::adapters::AdapterSpec;
use peftkit::train::{train_run, RunResult};

use crate::config::ExperimentConfig;
use crate::error::{BenchError, Result};

/// One `(method instance, seed)` cell of the sweep.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WorkItem {
    pub spec: AdapterSpec,
    pub seed: u64,
}

/// Method-major order: all seeds of the first method, then the next.
pub fn work_items(cfg: &ExperimentConfig) -> Vec<WorkItem> {
    cfg.methods
        .iter()
        .flat_map(|&spec| cfg.seeds.iter().map(move |&seed| WorkItem { spec, seed }))
        .collect()
}

fn run_item(cfg: &ExperimentConfig, item: WorkItem) -> Result<RunResult> {
    let wrap = |source| BenchError::Run {
        label: item.spec.to_string(),
        seed: item.seed,
        source,
    };
    let task = cfg.task.make_task(item.seed).map_err(wrap)?;
    let mut result = train_run(&task, item.spec, &cfg.train_config(item.seed)).map_err(wrap)?;
    if !cfg.output.timing {
        result.wall_ms = 0;
    }
    Ok(result)
}

/// Runs every work item on up to `jobs` threads. Results come back in
/// [`work_items`] order regardless of `jobs`, and each run depends only on
/// its own seed, so the output is identical for any thread count.
/// Divergence is recorded in the result; any other failure aborts.
pub fn run_experiment(cfg: &ExperimentConfig, jobs: usize) -> Result<Vec<RunResult>> {
    let items = work_items(cfg);
    let jobs = jobs.clamp(1, items.len().max(1));
    if jobs == 1 {
        return items.into_iter().map(|item| run_item(cfg, item)).collect();
    }

    let next = AtomicUsize::new(0);
    let slots: Mutex<Vec<Option<Result<RunResult>>>> =
        Mutex::new((0..items.len()).map(|_| None).collect());
    thread::scope(|scope| {
        for _ in 0..jobs {
            scope.spawn(|| loop {
                let idx = next.fetch_add(1, Ordering::Relaxed);
                let Some(&item) = items.get(idx) else { break };
                let outcome = run_item(cfg, item);
                slots.lock().expect("result slots poisoned")[idx] = Some(outcome);
            });
        }
    });
    slots
        .into_inner()
        .expect("result slots poisoned")
        .into_iter()
        .map(|slot| slot.expect("every item ran"))
        .collect()
}
