use wavelab_core::dsp::{estimate_psd, PsdConfig, PsdEstimate};
use wavelab_core::linear_to_db;

use crate::config::ExperimentConfig;
use crate::csv::Table;
use crate::link::Link;
use crate::runner::Runner;
use crate::Result;

/// Lowest level reported, in dB below the peak. Bins of an ideal
/// band-limited signal can be exactly zero.
pub const FLOOR_DB: f64 = -400.0;

#[derive(Debug, Clone, PartialEq)]
pub struct PsdTrace {
    /// Bin centers in units of the signal bandwidth; the main band is
    /// `[-0.5, 0.5)`.
    pub frequency: Vec<f64>,
    /// Amplifier output, dB relative to its peak.
    pub amplified_db: Vec<f64>,
    /// The same frames with the amplifier bypassed.
    pub linear_db: Vec<f64>,
    pub amplified: PsdEstimate,
    pub linear: PsdEstimate,
}

fn relative_db(psd: &PsdEstimate) -> Vec<f64> {
    let peak = psd.bin_power.iter().copied().fold(0.0, f64::max);
    psd.bin_power
        .iter()
        .map(|&p| if p > 0.0 { linear_to_db(p / peak).max(FLOOR_DB) } else { FLOOR_DB })
        .collect()
}

pub fn run_psd(cfg: &ExperimentConfig, runner: &Runner) -> Result<PsdTrace> {
    let link = Link::new(cfg, cfg.transmitter.method)?;
    let per_frame = runner.map(cfg.psd.frames, |i| {
        let tx = link.transmit(&link.draw(i)?)?;
        Ok((
            estimate_psd(&tx.amplified, PsdConfig::default())?,
            estimate_psd(&tx.backed_off, PsdConfig::default())?,
        ))
    })?;
    let (amp, lin): (Vec<_>, Vec<_>) = per_frame.into_iter().unzip();
    let amplified = PsdEstimate::average(&amp)?;
    let linear = PsdEstimate::average(&lin)?;
    let l = link.system().oversampling as f64;
    Ok(PsdTrace {
        frequency: (0..amplified.bin_power.len()).map(|i| amplified.frequency(i) * l).collect(),
        amplified_db: relative_db(&amplified),
        linear_db: relative_db(&linear),
        amplified,
        linear,
    })
}

pub fn psd_table(trace: &PsdTrace) -> Table {
    let mut t = Table::new(&["normalized_freq", "psd_db", "linear_reference_db"]);
    for ((f, a), r) in trace.frequency.iter().zip(&trace.amplified_db).zip(&trace.linear_db) {
        t.push(vec![(*f).into(), (*a).into(), (*r).into()]);
    }
    t
}
