//! One frame through transmitter, amplifier, channel and detector.

use wavelab_core::Complex64;
use wavelab_cae::model::ChainConfig;
use wavelab_cae::{Batch, Cae, Example, SystemConfig};
use wavelab_core::baselines::{clip, mle_detect, slm_encode, zf_detect, ClipConfig, SlmCodebook};
use wavelab_core::channel::{apply_channel_noiseless, draw_noise, ChannelProfile, ChannelRealization};
use wavelab_core::dsp::{dft_unpad, idft_oversampled, CMat, OfdmGrid, Stage, TimeFrame};
use wavelab_core::qam::Constellation;
use wavelab_core::rf::{apply_ibo, bandpass_filter, bussgang_alpha, rapp_amplify, RappParams};

use crate::config::{Detector, ExperimentConfig, Method};
use crate::seeds::{Purpose, SeedSplitter};
use crate::{HarnessError, Result};

#[derive(Debug, Clone)]
enum Encoder {
    Plain,
    Clip(ClipConfig),
    Slm(SlmCodebook),
    Cae(Box<Cae>),
}

/// Random draws of one frame. Noise is unit variance and scaled per
/// operating point, so every point sees the same realizations.
#[derive(Debug, Clone)]
pub struct FrameDraw {
    pub symbols: Vec<usize>,
    pub channel: ChannelRealization,
    pub unit_noise: CMat,
    pub x_hat0: Vec<f64>,
}

/// Transmit-side frames of one draw.
#[derive(Debug, Clone)]
pub struct TxFrames {
    pub encoded: TimeFrame,
    pub filtered: TimeFrame,
    pub backed_off: TimeFrame,
    pub amplified: TimeFrame,
    pub alpha: Complex64,
    /// Chosen SLM candidate.
    pub slm_index: Option<usize>,
}

#[derive(Debug, Clone)]
pub struct Link {
    system: SystemConfig,
    constellation: Constellation,
    profile: ChannelProfile,
    encoder: Encoder,
    rapp: RappParams,
    amplifier: bool,
    ibo_db: f64,
    detector: Detector,
    seeds: SeedSplitter,
}

impl Link {
    /// Builds the link of `cfg` with its transmit method replaced by
    /// `method`.
    pub fn new(cfg: &ExperimentConfig, method: Method) -> Result<Self> {
        let system = cfg.system.to_system();
        let seeds = SeedSplitter::new(cfg.seed);
        let encoder = match method {
            Method::None => Encoder::Plain,
            Method::Cf => Encoder::Clip(ClipConfig {
                clip_ratio_db: cfg.transmitter.clip_ratio_db,
            }),
            Method::Slm => Encoder::Slm(SlmCodebook::new(
                cfg.transmitter.slm_candidates,
                system.subcarriers,
                seeds.seed(Purpose::Codebook, 0),
            )?),
            Method::Cae => {
                let path = cfg
                    .transmitter
                    .checkpoint
                    .as_ref()
                    .ok_or_else(|| HarnessError::Config("transmitter.checkpoint is required for cae".into()))?;
                if !path.exists() {
                    return Err(HarnessError::Config(format!("checkpoint {} not found", path.display())));
                }
                Encoder::Cae(Box::new(Cae::load(path, system, cfg.model.to_model())?))
            }
        };
        let detector = if method == Method::Cae {
            Detector::Cae
        } else if cfg.receiver.detector == Detector::Cae {
            Detector::Mle
        } else {
            cfg.receiver.detector
        };
        Ok(Self {
            constellation: Constellation::new(system.order)?,
            system,
            profile: cfg.channel.profile(),
            encoder,
            rapp: cfg.amplifier.rapp(system.n_t)?,
            amplifier: cfg.amplifier.enabled,
            ibo_db: cfg.amplifier.ibo_db,
            detector,
            seeds,
        })
    }

    pub fn system(&self) -> &SystemConfig {
        &self.system
    }

    pub fn bits_per_frame(&self) -> u64 {
        (self.system.n_t * self.system.subcarriers * self.constellation.bits_per_symbol()) as u64
    }

    pub fn draw(&self, frame: usize) -> Result<FrameDraw> {
        let s = &self.system;
        let mut rng = self.seeds.rng(Purpose::Frame, frame as u64);
        let ex = Example::draw(&mut rng, s, self.profile, 0.0)?;
        let mut noise_rng = self.seeds.rng(Purpose::Noise, frame as u64);
        let unit_noise = draw_noise(&mut noise_rng, s.n_r, s.subcarriers, 1.0);
        Ok(FrameDraw {
            symbols: ex.symbols,
            channel: ex.channel,
            unit_noise,
            x_hat0: ex.x_hat0,
        })
    }

    fn chain(&self) -> ChainConfig {
        ChainConfig {
            rapp: self.rapp,
            ibo_db: self.ibo_db,
        }
    }

    fn cae_batch(&self, draw: &FrameDraw, sigma: f64) -> Result<Batch> {
        let noise = draw.unit_noise.scale(Complex64::new(sigma, 0.0));
        let ex = Example {
            symbols: draw.symbols.clone(),
            channel: draw.channel.clone(),
            noise,
            x_hat0: draw.x_hat0.clone(),
        };
        Ok(Batch::from_examples(&self.system, vec![ex])?)
    }

    pub fn transmit(&self, draw: &FrameDraw) -> Result<TxFrames> {
        let s = &self.system;
        let grid = OfdmGrid::from_indices(&self.constellation, s.n_t, s.subcarriers, &draw.symbols)?;
        let (encoded, slm_index) = match &self.encoder {
            Encoder::Plain => (idft_oversampled(&grid, s.oversampling)?, None),
            Encoder::Clip(cfg) => (clip(&idft_oversampled(&grid, s.oversampling)?, *cfg)?, None),
            Encoder::Slm(book) => {
                let (frame, u) = slm_encode(&grid, book, s.oversampling)?;
                (frame, Some(u))
            }
            Encoder::Cae(model) => {
                let ev = model.evaluate(&self.cae_batch(draw, 0.0)?, &self.chain())?;
                let take = |v: Vec<TimeFrame>| v.into_iter().next().expect("one frame");
                return Ok(TxFrames {
                    encoded: take(ev.encoded),
                    filtered: take(ev.filtered),
                    backed_off: take(ev.backed_off),
                    amplified: take(ev.amplified),
                    alpha: ev.alpha,
                    slm_index: None,
                });
            }
        };
        let filtered = bandpass_filter(&encoded)?;
        let backed_off = apply_ibo(&filtered, self.ibo_db, &self.rapp)?;
        let amplified = if self.amplifier {
            rapp_amplify(&backed_off, &self.rapp)?
        } else {
            backed_off.clone().retagged(Stage::Amplified)
        };
        let alpha = bussgang_alpha(&filtered, &amplified)?.alpha;
        Ok(TxFrames {
            encoded,
            filtered,
            backed_off,
            amplified,
            alpha,
            slm_index,
        })
    }

    /// Bit errors of one frame at each noise standard deviation.
    pub fn bit_errors(&self, draw: &FrameDraw, sigmas: &[f64]) -> Result<Vec<u64>> {
        let count = |detected: &[usize]| -> u64 {
            draw.symbols
                .iter()
                .zip(detected)
                .map(|(&a, &b)| u64::from(self.constellation.bit_errors(a, b)))
                .sum()
        };
        if let Encoder::Cae(model) = &self.encoder {
            return sigmas
                .iter()
                .map(|&sigma| {
                    let ev = model.evaluate(&self.cae_batch(draw, sigma)?, &self.chain())?;
                    Ok(count(&ev.decisions[0]))
                })
                .collect();
        }
        let tx = self.transmit(draw)?;
        let freq = dft_unpad(&tx.amplified, self.system.subcarriers)?;
        let clean = apply_channel_noiseless(&freq, &draw.channel)?;
        let inv_alpha = 1.0 / tx.alpha;
        sigmas
            .iter()
            .map(|&sigma| {
                let mut y = clean.clone();
                for (z, n) in y.as_mut_slice().iter_mut().zip(draw.unit_noise.as_slice()) {
                    *z = (*z + n * sigma) * inv_alpha;
                }
                if let (Encoder::Slm(book), Some(u)) = (&self.encoder, tx.slm_index) {
                    book.derotate(u, &mut y);
                }
                let detected = match self.detector {
                    Detector::Mle => mle_detect(&draw.channel, &y, &self.constellation)?,
                    Detector::Zf => zf_detect(&draw.channel, &y, &self.constellation)?,
                    Detector::Cae => unreachable!("autoencoder links return above"),
                };
                Ok(count(&detected))
            })
            .collect()
    }
}
