use wavelab_core::dsp::papr_mimo;
use wavelab_core::linear_to_db;

use crate::config::ExperimentConfig;
use crate::csv::Table;
use crate::experiments::ber::CurveRecord;
use crate::link::Link;
use crate::runner::Runner;
use crate::{HarnessError, Result};

/// Worst-antenna PAPR in dB of the band-pass filter output, per frame.
pub fn papr_samples(cfg: &ExperimentConfig, runner: &Runner) -> Result<Vec<f64>> {
    let link = Link::new(cfg, cfg.transmitter.method)?;
    runner.map(cfg.ccdf.frames, |i| {
        let tx = link.transmit(&link.draw(i)?)?;
        Ok(linear_to_db(papr_mimo(&tx.filtered)?))
    })
}

/// Empirical `P(PAPR > threshold)`; nonincreasing in the threshold.
pub fn ccdf_curve(samples: &[f64], thresholds_db: &[f64]) -> Vec<CurveRecord> {
    thresholds_db
        .iter()
        .map(|&t| {
            let above = samples.iter().filter(|&&p| p > t).count() as u64;
            CurveRecord::binomial(t, above, samples.len() as u64)
        })
        .collect()
}

pub fn run_ccdf(cfg: &ExperimentConfig, runner: &Runner) -> Result<Vec<CurveRecord>> {
    if cfg.ccdf.thresholds_db.is_empty() {
        return Err(HarnessError::Config("ccdf.thresholds_db is empty".into()));
    }
    if cfg.ccdf.frames < 100 {
        return Err(HarnessError::Config("ccdf.frames must be at least 100".into()));
    }
    Ok(ccdf_curve(&papr_samples(cfg, runner)?, &cfg.ccdf.thresholds_db))
}

/// Smallest threshold on the curve whose CCDF is at or below `level`.
pub fn threshold_at(curve: &[CurveRecord], level: f64) -> Option<f64> {
    curve.iter().find(|r| r.y <= level).map(|r| r.x)
}

pub fn ccdf_table(points: &[CurveRecord]) -> Table {
    let mut t = Table::new(&["papr0_db", "ccdf", "frames", "stderr"]);
    for p in points {
        t.push(vec![p.x.into(), p.y.into(), p.count.into(), p.stderr.into()]);
    }
    t
}
