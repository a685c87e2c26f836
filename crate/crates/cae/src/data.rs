//! System dimensions and the seeded stream of training examples.

use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use wavelab_core::channel::{draw_channel, draw_noise, noise_variance_for_psnr, ChannelProfile, ChannelRealization};
use wavelab_core::dsp::{idft_oversampled, CMat, OfdmGrid};
use wavelab_core::qam::Constellation;

use crate::signal::from_complex;
use crate::{CaeError, Result};

/// Antenna counts, OFDM size and alphabet.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SystemConfig {
    pub n_t: usize,
    pub n_r: usize,
    pub subcarriers: usize,
    pub oversampling: usize,
    pub order: usize,
}

impl SystemConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_t == 0 || self.n_r == 0 || self.subcarriers == 0 {
            return Err(CaeError::Config("antenna and subcarrier counts must be positive".into()));
        }
        if self.oversampling < 2 {
            return Err(CaeError::Config(format!(
                "oversampling {} leaves no adjacent band",
                self.oversampling
            )));
        }
        Constellation::new(self.order)?;
        Ok(())
    }

    pub fn constellation(&self) -> Result<Constellation> {
        Ok(Constellation::new(self.order)?)
    }

    pub fn frame_len(&self) -> usize {
        self.oversampling * self.subcarriers
    }

    /// Number of (antenna, subcarrier, part) decision positions per example.
    pub fn positions(&self) -> usize {
        self.n_t * 2 * self.subcarriers
    }
}

/// One batch of examples with everything random already drawn, so the
/// forward pass is a deterministic function of the parameters.
#[derive(Debug, Clone)]
pub struct Batch {
    pub size: usize,
    /// Oversampled OFDM frames, realified `[batch, N_t, 2LK]`.
    pub x_time: Vec<f64>,
    /// Transmitted symbol indices, `N_t x K` row-major per example.
    pub symbols: Vec<Vec<usize>>,
    /// Level index per decision position, `[batch, N_t, 2K]`.
    pub targets: Vec<usize>,
    pub channels: Arc<Vec<ChannelRealization>>,
    /// Receiver noise, realified `[batch, N_r, 2K]`.
    pub noise: Vec<f64>,
    /// Initial decoder estimate, `[batch, N_t, 2K]`, uniform in `[-1, 1]`.
    pub x_hat0: Vec<f64>,
}

/// Level-index targets of one grid in decision-position order.
pub fn level_targets(indices: &[usize], system: &SystemConfig, c: &Constellation) -> Vec<usize> {
    let k = system.subcarriers;
    let mut out = Vec::with_capacity(system.positions());
    for a in 0..system.n_t {
        let row = &indices[a * k..(a + 1) * k];
        out.extend(row.iter().map(|&s| c.level_indices(s).0));
        out.extend(row.iter().map(|&s| c.level_indices(s).1));
    }
    out
}

/// Everything random about a single example.
#[derive(Debug, Clone)]
pub struct Example {
    /// Symbol indices, `N_t x K` row-major.
    pub symbols: Vec<usize>,
    pub channel: ChannelRealization,
    /// Receiver noise, `N_r x K`.
    pub noise: CMat,
    /// Initial decoder estimate, one value per decision position.
    pub x_hat0: Vec<f64>,
}

impl Example {
    /// Draws grid, channel, noise and initial estimate, in that order.
    pub fn draw<R: Rng + ?Sized>(
        rng: &mut R,
        system: &SystemConfig,
        profile: ChannelProfile,
        sigma_w2: f64,
    ) -> Result<Self> {
        let s = system;
        let c = s.constellation()?;
        let (_, symbols) = OfdmGrid::random(rng, &c, s.n_t, s.subcarriers)?;
        let channel = draw_channel(rng, s.subcarriers, s.n_t, s.n_r, profile)?;
        let noise = draw_noise(rng, s.n_r, s.subcarriers, sigma_w2);
        let x_hat0 = (0..s.positions()).map(|_| rng.random_range(-1.0..=1.0)).collect();
        Ok(Self {
            symbols,
            channel,
            noise,
            x_hat0,
        })
    }
}

impl Batch {
    /// Stacks examples into a batch; transmit frames are the plain
    /// oversampled IDFT of each grid.
    pub fn from_examples(system: &SystemConfig, examples: Vec<Example>) -> Result<Self> {
        let s = system;
        if examples.is_empty() {
            return Err(CaeError::Config("empty batch".into()));
        }
        let c = s.constellation()?;
        let size = examples.len();
        let mut batch = Batch {
            size,
            x_time: Vec::with_capacity(size * s.n_t * 2 * s.frame_len()),
            symbols: Vec::with_capacity(size),
            targets: Vec::with_capacity(size * s.positions()),
            channels: Arc::new(Vec::new()),
            noise: Vec::with_capacity(size * s.n_r * 2 * s.subcarriers),
            x_hat0: Vec::with_capacity(size * s.positions()),
        };
        let mut channels = Vec::with_capacity(size);
        for ex in examples {
            if ex.noise.rows() != s.n_r || ex.noise.cols() != s.subcarriers || ex.x_hat0.len() != s.positions() {
                return Err(CaeError::Shape("example does not match the system dimensions".into()));
            }
            if ex.channel.n_t() != s.n_t || ex.channel.n_r() != s.n_r || ex.channel.subcarriers() != s.subcarriers {
                return Err(CaeError::Shape("channel does not match the system dimensions".into()));
            }
            let grid = OfdmGrid::from_indices(&c, s.n_t, s.subcarriers, &ex.symbols)?;
            let frame = idft_oversampled(&grid, s.oversampling)?;
            batch.x_time.extend(from_complex(frame.samples().as_slice(), s.frame_len()));
            batch.targets.extend(level_targets(&ex.symbols, s, &c));
            batch.symbols.push(ex.symbols);
            channels.push(ex.channel);
            batch.noise.extend(from_complex(ex.noise.as_slice(), s.subcarriers));
            batch.x_hat0.extend(ex.x_hat0);
        }
        batch.channels = Arc::new(channels);
        Ok(batch)
    }
}

/// Seeded generator of training or evaluation batches.
#[derive(Debug, Clone)]
pub struct BatchGenerator {
    system: SystemConfig,
    profile: ChannelProfile,
    sigma_w2: f64,
    rng: ChaCha8Rng,
}

impl BatchGenerator {
    /// Noise is set from `psnr_db` against a total power budget `p_total`.
    pub fn new(system: SystemConfig, profile: ChannelProfile, p_total: f64, psnr_db: f64, seed: u64) -> Result<Self> {
        system.validate()?;
        Ok(Self {
            system,
            profile,
            sigma_w2: noise_variance_for_psnr(p_total, psnr_db),
            rng: ChaCha8Rng::seed_from_u64(seed),
        })
    }

    pub fn sigma_w2(&self) -> f64 {
        self.sigma_w2
    }

    pub fn next_batch(&mut self, size: usize) -> Result<Batch> {
        let examples = (0..size)
            .map(|_| Example::draw(&mut self.rng, &self.system, self.profile, self.sigma_w2))
            .collect::<Result<Vec<_>>>()?;
        Batch::from_examples(&self.system, examples)
    }
}
