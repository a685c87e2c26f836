use std::path::{Path, PathBuf};

use wavelab_cae::train::write_log_csv;
use wavelab_cae::{train, EpochRecord, TrainOutcome};

use crate::config::ExperimentConfig;
use crate::Result;

/// Where the training log goes for a given checkpoint path.
pub fn log_path(checkpoint: &Path) -> PathBuf {
    checkpoint.with_extension("log.csv")
}

/// Trains from `cfg`, then writes the checkpoint and the per-epoch log.
pub fn run_train(cfg: &ExperimentConfig, checkpoint: &Path, on_epoch: impl FnMut(&EpochRecord)) -> Result<TrainOutcome> {
    let tc = cfg.train_config();
    tc.validate()?;
    let outcome = train(&tc, on_epoch)?;
    outcome.model.save(checkpoint)?;
    let mut log = Vec::new();
    write_log_csv(&outcome.log, &mut log)?;
    std::fs::write(log_path(checkpoint), log)?;
    Ok(outcome)
}
