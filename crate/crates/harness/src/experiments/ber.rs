use wavelab_core::channel::noise_variance_for_psnr;

use crate::config::ExperimentConfig;
use crate::csv::Table;
use crate::link::Link;
use crate::runner::Runner;
use crate::{HarnessError, Result};

/// One point of a Monte Carlo curve.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CurveRecord {
    pub x: f64,
    pub y: f64,
    pub count: u64,
    /// Binomial standard error of `y`.
    pub stderr: f64,
}

impl CurveRecord {
    pub fn binomial(x: f64, hits: u64, count: u64) -> Self {
        let y = hits as f64 / count as f64;
        Self {
            x,
            y,
            count,
            stderr: (y * (1.0 - y) / count as f64).sqrt(),
        }
    }
}

/// BER against peak SNR. Noise variance is `P_T / 10^(P_SNR/10)`; every
/// point reuses the same frames and unit noise, scaled.
pub fn run_ber(cfg: &ExperimentConfig, runner: &Runner) -> Result<Vec<CurveRecord>> {
    if cfg.ber.p_snr_db.is_empty() {
        return Err(HarnessError::Config("ber.p_snr_db is empty".into()));
    }
    let link = Link::new(cfg, cfg.transmitter.method)?;
    let sigmas: Vec<f64> = cfg
        .ber
        .p_snr_db
        .iter()
        .map(|&p| noise_variance_for_psnr(cfg.amplifier.p_total, p).sqrt())
        .collect();
    let per_frame = runner.map(cfg.ber.frames, |i| link.bit_errors(&link.draw(i)?, &sigmas))?;
    let bits = link.bits_per_frame() * cfg.ber.frames as u64;
    Ok(cfg
        .ber
        .p_snr_db
        .iter()
        .enumerate()
        .map(|(j, &p)| {
            let errors = per_frame.iter().map(|f| f[j]).sum();
            CurveRecord::binomial(p, errors, bits)
        })
        .collect())
}

pub fn ber_table(points: &[CurveRecord]) -> Table {
    let mut t = Table::new(&["p_snr_db", "ber", "bit_count", "stderr"]);
    for p in points {
        t.push(vec![p.x.into(), p.y.into(), p.count.into(), p.stderr.into()]);
    }
    t
}
