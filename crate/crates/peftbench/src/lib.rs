//! Experiment runner and self-check harness for `peftkit` adapters.
//!
//! An experiment file names a synthetic shift task, a sweep of adapter
//! instances and training settings. Every `(instance, seed)` pair is
//! trained independently and the results are written as CSV, a markdown
//! summary and per-epoch loss curves.

pub mod check;
pub mod config;
pub mod error;
pub mod experiment;
pub mod report;

pub use config::{parse_config, ExperimentConfig, OutputFormat};
pub use error::{BenchError, Result};
pub use experiment::run_experiment;

/// Environment variable that replaces the first configured seed.
pub const SEED_ENV: &str = "PEFTBENCH_SEED";

/// Seed precedence: explicit flag, then `PEFTBENCH_SEED`, then the config.
pub fn resolve_seed(flag: Option<u64>, env: Option<&str>) -> Result<Option<u64>> {
    if flag.is_some() {
        return Ok(flag);
    }
    match env.map(str::trim).filter(|s| !s.is_empty()) {
        Some(v) => v
            .parse()
            .map(Some)
            .map_err(|_| BenchError::ConfigStructure(format!("{SEED_ENV}={v:?} is not a seed"))),
        None => Ok(None),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn seed_precedence() {
        assert_eq!(resolve_seed(Some(1), Some("2")).unwrap(), Some(1));
        assert_eq!(resolve_seed(None, Some("2")).unwrap(), Some(2));
        assert_eq!(resolve_seed(None, Some("")).unwrap(), None);
        assert_eq!(resolve_seed(None, None).unwrap(), None);
        assert!(resolve_seed(None, Some("two")).is_err());
    }
}
