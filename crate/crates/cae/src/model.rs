//! Encoder, iterative decoder and the end-to-end differentiable link.

use std::path::Path;

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use wavelab_autodiff::{
    read_checkpoint, write_checkpoint, BatchNormMode, BatchStats, BoundParams, NamedTensor, ParamId, ParamStore,
    Tape, Var,
};
use wavelab_core::dsp::{CMat, Stage, TimeFrame};
use wavelab_core::rf::RappParams;

use crate::data::{Batch, SystemConfig};
use crate::signal::{
    bandpass, channel_product, complex_scale, dft_unpad, power_normalize, rapp, to_complex, ChannelProduct,
};
use crate::{CaeError, Result};

const BN_MOMENTUM: f64 = 0.1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Activation {
    #[default]
    Selu,
    Gelu,
}

/// Layer widths and depth. Every convolution keeps its input size, so the
/// encoder output has the shape of its input.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ModelConfig {
    pub encoder_channels: [usize; 3],
    pub decoder_channels: [usize; 2],
    pub decoder_iterations: usize,
    pub activation: Activation,
    /// Weights and biases start uniform in `±init_scale/sqrt(fan_in)`.
    pub init_scale: f64,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            encoder_channels: [21, 15, 21],
            decoder_channels: [15, 21],
            decoder_iterations: 10,
            activation: Activation::Selu,
            init_scale: 1.0,
        }
    }
}

impl ModelConfig {
    pub fn validate(&self) -> Result<()> {
        if self.encoder_channels.contains(&0) || self.decoder_channels.contains(&0) {
            return Err(CaeError::Config("layer widths must be positive".into()));
        }
        if self.encoder_channels[0] != self.encoder_channels[2] {
            return Err(CaeError::Config(format!(
                "residual path needs equal first and last encoder widths, got {:?}",
                self.encoder_channels
            )));
        }
        if self.decoder_iterations == 0 {
            return Err(CaeError::Config("decoder needs at least one iteration".into()));
        }
        if !(self.init_scale > 0.0) {
            return Err(CaeError::Config("init scale must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    Train,
    Eval,
}

/// Running batch-norm statistics for one layer.
#[derive(Debug, Clone, PartialEq)]
pub struct RunningStats {
    pub mean: Vec<f64>,
    pub var: Vec<f64>,
}

impl RunningStats {
    fn new(channels: usize) -> Self {
        Self {
            mean: vec![0.0; channels],
            var: vec![1.0; channels],
        }
    }

    fn absorb(&mut self, batch: &BatchStats) {
        for (r, b) in self.mean.iter_mut().zip(&batch.mean) {
            *r = (1.0 - BN_MOMENTUM) * *r + BN_MOMENTUM * b;
        }
        for (r, b) in self.var.iter_mut().zip(&batch.var) {
            *r = (1.0 - BN_MOMENTUM) * *r + BN_MOMENTUM * b;
        }
    }
}

#[derive(Debug, Clone)]
struct ConvBlock {
    weight: ParamId,
    bias: ParamId,
    gamma: ParamId,
    beta: ParamId,
    norm: usize,
    pad: (usize, usize),
}

#[derive(Debug, Clone)]
struct Dense {
    weight: ParamId,
    bias: ParamId,
}

#[derive(Debug, Clone)]
struct EncoderNet {
    stages: [ConvBlock; 3],
    out: Dense,
}

#[derive(Debug, Clone)]
struct DecoderIteration {
    delta_matched: ParamId,
    delta_gram: ParamId,
    stages: [ConvBlock; 2],
    out: Dense,
}

/// Batch-norm statistics produced by one training forward pass, keyed by
/// layer.
pub type StatsSink = Vec<(usize, BatchStats)>;

struct Builder {
    store: ParamStore,
    running: Vec<RunningStats>,
    rng: ChaCha8Rng,
    scale: f64,
    prefix: String,
}

impl Builder {
    fn uniform(&mut self, name: String, shape: &[usize], fan_in: usize) -> Result<ParamId> {
        let bound = self.scale / (fan_in as f64).sqrt();
        let n = shape.iter().product();
        let rng = &mut self.rng;
        let values = (0..n).map(|_| rng.random_range(-bound..bound)).collect();
        Ok(self.store.add(name, shape, values)?)
    }

    fn conv(&mut self, name: &str, c_in: usize, c_out: usize, kernel: (usize, usize)) -> Result<ConvBlock> {
        let fan_in = c_in * kernel.0 * kernel.1;
        let p = self.prefix.clone();
        let block = ConvBlock {
            weight: self.uniform(format!("{p}.{name}.weight"), &[c_out, c_in, kernel.0, kernel.1], fan_in)?,
            bias: self.uniform(format!("{p}.{name}.bias"), &[c_out], fan_in)?,
            gamma: self.store.add(format!("{p}.{name}.bn.gamma"), &[c_out], vec![1.0; c_out])?,
            beta: self.store.add(format!("{p}.{name}.bn.beta"), &[c_out], vec![0.0; c_out])?,
            norm: self.running.len(),
            pad: (kernel.0 / 2, kernel.1 / 2),
        };
        self.running.push(RunningStats::new(c_out));
        Ok(block)
    }

    fn dense(&mut self, name: &str, c_in: usize, c_out: usize) -> Result<Dense> {
        let p = self.prefix.clone();
        Ok(Dense {
            weight: self.uniform(format!("{p}.{name}.weight"), &[c_out, c_in], c_in)?,
            bias: self.uniform(format!("{p}.{name}.bias"), &[c_out], c_in)?,
        })
    }
}

/// Link parameters between the encoder and the decoder.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ChainConfig {
    pub rapp: RappParams,
    pub ibo_db: f64,
}

impl ChainConfig {
    /// Target mean power at the amplifier input.
    pub fn backed_off_power(&self) -> f64 {
        self.rapp.saturation.powi(2) / 10f64.powf(self.ibo_db / 10.0)
    }
}

/// Tape handles of one forward pass through the link.
#[derive(Debug, Clone)]
pub struct LinkOutput {
    pub encoded: Var,
    pub filtered: Var,
    pub backed_off: Var,
    pub amplified: Var,
    pub logits: Var,
    pub alpha: Complex64,
}

/// Values of an evaluation pass.
#[derive(Debug, Clone)]
pub struct Evaluation {
    pub encoded: Vec<TimeFrame>,
    pub filtered: Vec<TimeFrame>,
    pub backed_off: Vec<TimeFrame>,
    pub amplified: Vec<TimeFrame>,
    /// Level probabilities `[batch, N_c, N_t, 2K]`.
    pub probabilities: Vec<f64>,
    /// Hard symbol decisions, `N_t x K` row-major per example.
    pub decisions: Vec<Vec<usize>>,
    pub alpha: Complex64,
}

/// The trainable autoencoder.
#[derive(Debug, Clone)]
pub struct Cae {
    system: SystemConfig,
    config: ModelConfig,
    store: ParamStore,
    running: Vec<RunningStats>,
    encoder: EncoderNet,
    decoder: Vec<DecoderIteration>,
    levels: Vec<f64>,
}

impl Cae {
    pub fn new(system: SystemConfig, config: ModelConfig, seed: u64) -> Result<Self> {
        system.validate()?;
        config.validate()?;
        let constellation = system.constellation()?;
        let n_c = constellation.levels_per_axis();
        let mut b = Builder {
            store: ParamStore::new(),
            running: Vec::new(),
            rng: ChaCha8Rng::seed_from_u64(seed),
            scale: config.init_scale,
            prefix: "encoder".into(),
        };
        let [e1, e2, e3] = config.encoder_channels;
        let encoder = EncoderNet {
            stages: [
                b.conv("conv1", 1, e1, (1, 3))?,
                b.conv("conv2", e1, e2, (1, 3))?,
                b.conv("conv3", e2, e3, (1, 3))?,
            ],
            out: b.dense("fc", e3, 1)?,
        };
        let [d1, d2] = config.decoder_channels;
        let mut decoder = Vec::with_capacity(config.decoder_iterations);
        for it in 0..config.decoder_iterations {
            let prefix = format!("decoder{it}");
            b.prefix.clone_from(&prefix);
            let delta_matched = b.store.add(format!("{prefix}.delta_matched"), &[1], vec![1.0])?;
            let delta_gram = b.store.add(format!("{prefix}.delta_gram"), &[1], vec![1.0])?;
            let stages = [b.conv("conv1", 1, d1, (3, 3))?, b.conv("conv2", d1, d2, (3, 3))?];
            let out = b.dense("fc", 3 * d2, n_c)?;
            decoder.push(DecoderIteration {
                delta_matched,
                delta_gram,
                stages,
                out,
            });
        }
        Ok(Self {
            system,
            config,
            store: b.store,
            running: b.running,
            encoder,
            decoder,
            levels: constellation.levels().to_vec(),
        })
    }

    pub fn system(&self) -> &SystemConfig {
        &self.system
    }

    pub fn config(&self) -> &ModelConfig {
        &self.config
    }

    pub fn params(&self) -> &ParamStore {
        &self.store
    }

    pub fn params_mut(&mut self) -> &mut ParamStore {
        &mut self.store
    }

    pub fn running_stats(&self) -> &[RunningStats] {
        &self.running
    }

    /// Folds batch statistics of a training pass into the running averages.
    pub fn absorb_stats(&mut self, stats: &StatsSink) {
        for (layer, s) in stats {
            self.running[*layer].absorb(s);
        }
    }

    fn activate(&self, tape: &mut Tape, x: Var) -> Result<Var> {
        Ok(match self.config.activation {
            Activation::Selu => tape.selu(x)?,
            Activation::Gelu => tape.gelu(x)?,
        })
    }

    fn conv_block(
        &self,
        tape: &mut Tape,
        p: &BoundParams,
        block: &ConvBlock,
        x: Var,
        mode: Mode,
        stats: &mut StatsSink,
    ) -> Result<Var> {
        let y = tape.conv2d(x, p.var(block.weight), Some(p.var(block.bias)), block.pad)?;
        let running = &self.running[block.norm];
        let bn_mode = match mode {
            Mode::Train => BatchNormMode::Train,
            Mode::Eval => BatchNormMode::Eval {
                mean: &running.mean,
                var: &running.var,
            },
        };
        let (y, batch) = tape.batch_norm(y, p.var(block.gamma), p.var(block.beta), bn_mode)?;
        if let Some(s) = batch {
            stats.push((block.norm, s));
        }
        self.activate(tape, y)
    }

    /// Encoder: `[batch, N_t, 2LK]` time frames to unit-power encoded frames
    /// of the same shape.
    pub fn encode(&self, tape: &mut Tape, p: &BoundParams, x: Var, mode: Mode, stats: &mut StatsSink) -> Result<Var> {
        let shape = tape.shape(x).to_vec();
        let s = self.system;
        if shape.len() != 3 || shape[1] != s.n_t || shape[2] != 2 * s.frame_len() {
            return Err(CaeError::Shape(format!(
                "encoder input {shape:?}, expected [batch, {}, {}]",
                s.n_t,
                2 * s.frame_len()
            )));
        }
        let img = tape.reshape(x, &[shape[0], 1, shape[1], shape[2]])?;
        let [c1, c2, c3] = &self.encoder.stages;
        let s1 = self.conv_block(tape, p, c1, img, mode, stats)?;
        let s2 = self.conv_block(tape, p, c2, s1, mode, stats)?;
        let s3 = self.conv_block(tape, p, c3, s2, mode, stats)?;
        let res = tape.add(s1, s3)?;
        let out = &self.encoder.out;
        let y = tape.channel_fc(res, p.var(out.weight), p.var(out.bias))?;
        let y = tape.reshape(y, &shape)?;
        power_normalize(tape, y, 1.0)
    }

    /// Iterative decoder. `y` is the equalized receive grid
    /// `[batch, N_r, 2K]`; returns the final-iteration level logits
    /// `[batch, N_c, N_t, 2K]`.
    pub fn decode(
        &self,
        tape: &mut Tape,
        p: &BoundParams,
        y: Var,
        batch: &Batch,
        mode: Mode,
        stats: &mut StatsSink,
    ) -> Result<Var> {
        let s = self.system;
        let (nb, n_t, w) = (batch.size, s.n_t, 2 * s.subcarriers);
        let matched = channel_product(tape, y, batch.channels.clone(), ChannelProduct::Adjoint)?;
        let mut x_hat = tape.constant(batch.x_hat0.clone(), &[nb, n_t, w])?;
        let n_c = self.levels.len();
        let levels = tape.constant(self.levels.clone(), &[1, n_c])?;
        let no_bias = tape.constant(vec![0.0], &[1])?;
        let last = self.decoder.len() - 1;
        for (i, it) in self.decoder.iter().enumerate() {
            let a = tape.mul_scalar(p.var(it.delta_matched), matched)?;
            let gram = channel_product(tape, x_hat, batch.channels.clone(), ChannelProduct::Gram)?;
            let b = tape.mul_scalar(p.var(it.delta_gram), gram)?;
            let d = tape.concat(&[x_hat, a, b], 1)?;
            let d = tape.reshape(d, &[nb, 1, 3 * n_t, w])?;
            let h = self.conv_block(tape, p, &it.stages[0], d, mode, stats)?;
            let h = self.conv_block(tape, p, &it.stages[1], h, mode, stats)?;
            let c = tape.shape(h)[1];
            let h = tape.reshape(h, &[nb, 3 * c, n_t, w])?;
            let logits = tape.channel_fc(h, p.var(it.out.weight), p.var(it.out.bias))?;
            if i == last {
                return Ok(logits);
            }
            let probs = tape.softmax(logits)?;
            let soft = tape.channel_fc(probs, levels, no_bias)?;
            x_hat = tape.reshape(soft, &[nb, n_t, w])?;
        }
        unreachable!("decoder has at least one iteration")
    }

    /// Full link: encoder, band-pass, back-off, amplifier, receiver FFT,
    /// channel with the batch's frozen noise, Bussgang equalization and the
    /// decoder. `alpha` overrides the gain otherwise measured on this batch;
    /// the gain never carries gradient.
    pub fn link(
        &self,
        tape: &mut Tape,
        p: &BoundParams,
        batch: &Batch,
        chain: &ChainConfig,
        mode: Mode,
        alpha: Option<Complex64>,
        stats: &mut StatsSink,
    ) -> Result<LinkOutput> {
        let s = self.system;
        let nb = batch.size;
        let x = tape.constant(batch.x_time.clone(), &[nb, s.n_t, 2 * s.frame_len()])?;
        let encoded = self.encode(tape, p, x, mode, stats)?;
        let filtered = bandpass(tape, encoded, s.subcarriers)?;
        let backed_off = power_normalize(tape, filtered, chain.backed_off_power())?;
        let amplified = rapp(tape, backed_off, chain.rapp)?;
        let alpha = match alpha {
            Some(a) => a,
            None => bussgang_gain(tape.value(filtered), tape.value(amplified), s.frame_len())?,
        };
        let spectrum = dft_unpad(tape, amplified, s.subcarriers)?;
        let received = channel_product(tape, spectrum, batch.channels.clone(), ChannelProduct::Forward)?;
        let noise = tape.constant(batch.noise.clone(), &[nb, s.n_r, 2 * s.subcarriers])?;
        let received = tape.add(received, noise)?;
        let equalized = complex_scale(tape, received, alpha.inv())?;
        let logits = self.decode(tape, p, equalized, batch, mode, stats)?;
        Ok(LinkOutput {
            encoded,
            filtered,
            backed_off,
            amplified,
            logits,
            alpha,
        })
    }

    /// Runs the link with frozen parameters and running statistics.
    pub fn evaluate(&self, batch: &Batch, chain: &ChainConfig) -> Result<Evaluation> {
        let mut tape = Tape::new();
        let p = self.store.bind_frozen(&mut tape);
        let mut stats = Vec::new();
        let out = self.link(&mut tape, &p, batch, chain, Mode::Eval, None, &mut stats)?;
        let probs_var = tape.softmax(out.logits)?;
        let probabilities = tape.value(probs_var).to_vec();
        let s = self.system;
        let frames = |v: Var, stage: Stage| self.to_frames(tape.value(v), stage);
        Ok(Evaluation {
            encoded: frames(out.encoded, Stage::Encoded)?,
            filtered: frames(out.filtered, Stage::Filtered)?,
            backed_off: frames(out.backed_off, Stage::BackedOff)?,
            amplified: frames(out.amplified, Stage::Amplified)?,
            decisions: hard_decisions(&probabilities, batch.size, &s)?,
            probabilities,
            alpha: out.alpha,
        })
    }

    fn to_frames(&self, values: &[f64], stage: Stage) -> Result<Vec<TimeFrame>> {
        let s = self.system;
        let len = s.frame_len();
        values
            .chunks_exact(s.n_t * 2 * len)
            .map(|ex| {
                let m = CMat::from_vec(s.n_t, len, to_complex(ex, len))?;
                Ok(TimeFrame::new(m, s.oversampling, stage)?)
            })
            .collect()
    }

    fn meta(&self) -> Vec<f64> {
        let s = self.system;
        let c = self.config;
        [
            s.n_t,
            s.n_r,
            s.subcarriers,
            s.oversampling,
            s.order,
            c.encoder_channels[0],
            c.encoder_channels[1],
            c.encoder_channels[2],
            c.decoder_channels[0],
            c.decoder_channels[1],
            c.decoder_iterations,
        ]
        .iter()
        .map(|&v| v as f64)
        .collect()
    }

    pub fn to_tensors(&self) -> Vec<NamedTensor> {
        let mut t = self.store.to_tensors();
        for (i, r) in self.running.iter().enumerate() {
            t.push(NamedTensor {
                name: format!("norm{i}.running_mean"),
                shape: vec![r.mean.len()],
                values: r.mean.clone(),
            });
            t.push(NamedTensor {
                name: format!("norm{i}.running_var"),
                shape: vec![r.var.len()],
                values: r.var.clone(),
            });
        }
        let meta = self.meta();
        t.push(NamedTensor {
            name: "meta.dims".into(),
            shape: vec![meta.len()],
            values: meta,
        });
        t
    }

    pub fn load_tensors(&mut self, tensors: &[NamedTensor]) -> Result<()> {
        let find = |name: &str| {
            tensors
                .iter()
                .find(|t| t.name == name)
                .ok_or_else(|| CaeError::Checkpoint(format!("missing tensor {name}")))
        };
        if find("meta.dims")?.values != self.meta() {
            return Err(CaeError::Checkpoint("architecture or system dimensions differ".into()));
        }
        self.store.load_tensors(tensors)?;
        for i in 0..self.running.len() {
            let mean = &find(&format!("norm{i}.running_mean"))?.values;
            let var = &find(&format!("norm{i}.running_var"))?.values;
            if mean.len() != self.running[i].mean.len() || var.len() != self.running[i].var.len() {
                return Err(CaeError::Checkpoint(format!("norm{i} statistics have the wrong length")));
            }
            self.running[i].mean.clone_from(mean);
            self.running[i].var.clone_from(var);
        }
        Ok(())
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        Ok(write_checkpoint(path, &self.to_tensors())?)
    }

    /// Builds the architecture for `system`/`config` and fills it from a
    /// checkpoint.
    pub fn load(path: &Path, system: SystemConfig, config: ModelConfig) -> Result<Self> {
        let mut model = Self::new(system, config, 0)?;
        model.load_tensors(&read_checkpoint(path)?)?;
        Ok(model)
    }
}

/// Least-squares gain `E[x_P conj(x_F)] / E|x_F|²` pooled over two
/// realified tensors with complex rows of length `m`.
pub fn bussgang_gain(filtered: &[f64], amplified: &[f64], m: usize) -> Result<Complex64> {
    if filtered.len() != amplified.len() || m == 0 || filtered.len() % (2 * m) != 0 {
        return Err(CaeError::Shape("filtered and amplified tensors differ".into()));
    }
    let (f, a) = (to_complex(filtered, m), to_complex(amplified, m));
    let cross: Complex64 = f.iter().zip(&a).map(|(xf, xp)| xp * xf.conj()).sum();
    let energy: f64 = f.iter().map(|z| z.norm_sqr()).sum();
    if energy == 0.0 {
        return Err(wavelab_core::Error::ZeroPower.into());
    }
    Ok(cross / energy)
}

/// Per-position argmax of `[batch, N_c, N_t, 2K]` probabilities mapped to
/// symbol indices.
pub fn hard_decisions(probs: &[f64], batch: usize, system: &SystemConfig) -> Result<Vec<Vec<usize>>> {
    let c = system.constellation()?;
    let n_c = c.levels_per_axis();
    let (n_t, k) = (system.n_t, system.subcarriers);
    let sp = n_t * 2 * k;
    if probs.len() != batch * n_c * sp {
        return Err(CaeError::Shape(format!("{} probabilities for batch {batch}", probs.len())));
    }
    let argmax = |b: usize, pos: usize| {
        (0..n_c)
            .map(|q| probs[(b * n_c + q) * sp + pos])
            .enumerate()
            .fold((0, f64::NEG_INFINITY), |best, (q, v)| if v > best.1 { (q, v) } else { best })
            .0
    };
    Ok((0..batch)
        .map(|b| {
            (0..n_t * k)
                .map(|i| {
                    let (a, sc) = (i / k, i % k);
                    let re = argmax(b, a * 2 * k + sc);
                    let im = argmax(b, a * 2 * k + k + sc);
                    c.index_from_levels(re, im)
                })
                .collect()
        })
        .collect())
}
