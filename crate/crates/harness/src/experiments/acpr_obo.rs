use wavelab_core::dsp::{estimate_psd, PsdConfig};
use wavelab_core::linear_to_db;
use wavelab_core::rf::acpr;

use crate::config::{ExperimentConfig, Method};
use crate::csv::Table;
use crate::link::Link;
use crate::runner::Runner;
use crate::{HarnessError, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AcprOboRow {
    pub method: Method,
    pub ibo_db: f64,
    /// Mean over frames of the per-frame ACPR in dB.
    pub acpr_db: f64,
    /// `P_T` over the mean total power entering the amplifiers.
    pub obo_db: f64,
    /// `P_T` over the mean total power leaving the amplifiers.
    pub output_obo_db: f64,
    pub frames: u64,
}

/// One row per configured method, all on the same frames.
pub fn run_acpr_obo(cfg: &ExperimentConfig, runner: &Runner) -> Result<Vec<AcprOboRow>> {
    if cfg.acpr_obo.methods.is_empty() {
        return Err(HarnessError::Config("acpr_obo.methods is empty".into()));
    }
    let frames = cfg.acpr_obo.frames;
    cfg.acpr_obo
        .methods
        .iter()
        .map(|&method| {
            let link = Link::new(cfg, method)?;
            let l = link.system().oversampling;
            let per_frame = runner.map(frames, |i| {
                let tx = link.transmit(&link.draw(i)?)?;
                let a = acpr(&estimate_psd(&tx.amplified, PsdConfig::default())?, l)?;
                let total = |f: &wavelab_core::dsp::TimeFrame| (0..f.n_t()).map(|m| f.antenna_power(m)).sum::<f64>();
                Ok((a, total(&tx.backed_off), total(&tx.amplified)))
            })?;
            let n = frames as f64;
            let mean = |f: &dyn Fn(&(f64, f64, f64)) -> f64| per_frame.iter().map(f).sum::<f64>() / n;
            let p_total = cfg.amplifier.p_total;
            Ok(AcprOboRow {
                method,
                ibo_db: cfg.amplifier.ibo_db,
                acpr_db: mean(&|r| r.0),
                obo_db: linear_to_db(p_total / mean(&|r| r.1)),
                output_obo_db: linear_to_db(p_total / mean(&|r| r.2)),
                frames: frames as u64,
            })
        })
        .collect()
}

pub fn acpr_obo_table(rows: &[AcprOboRow]) -> Table {
    let mut t = Table::new(&["method", "ibo_db", "acpr_db", "obo_db", "output_obo_db", "frames"]);
    for r in rows {
        t.push(vec![
            r.method.label().into(),
            r.ibo_db.into(),
            r.acpr_db.into(),
            r.obo_db.into(),
            r.output_obo_db.into(),
            r.frames.into(),
        ]);
    }
    t
}
