//! Experiment configuration files.
//!
//! Configs are TOML. Only `[system]` is required; every other table and key
//! falls back to the defaults listed on its field. Unknown keys are errors.
//!
//! ```toml
//! seed = 7
//!
//! [system]
//! n_t = 2
//! n_r = 2
//! order = 4          # QAM alphabet size, 4 or 16
//!
//! [transmitter]
//! method = "cf"      # none | cf | slm | cae
//!
//! [ber]
//! p_snr_db = [0.0, 10.0, 20.0]
//! ```

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use wavelab_cae::model::Activation;
use wavelab_cae::{ModelConfig, SystemConfig, TrainConfig};
use wavelab_core::baselines::MLE_MAX_CANDIDATES;
use wavelab_core::channel::{default_tap_decay, ChannelProfile};
use wavelab_core::qam::Constellation;
use wavelab_core::rf::RappParams;

use crate::{HarnessError, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    /// Master seed; every random draw derives from it. Default 0.
    #[serde(default)]
    pub seed: u64,
    /// CSV or checkpoint destination when `--out` is not given.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output: Option<PathBuf>,
    pub system: SystemSection,
    #[serde(default)]
    pub channel: ChannelSection,
    #[serde(default)]
    pub transmitter: TransmitterSection,
    #[serde(default)]
    pub amplifier: AmplifierSection,
    #[serde(default)]
    pub receiver: ReceiverSection,
    #[serde(default)]
    pub ber: BerSection,
    #[serde(default)]
    pub ccdf: CcdfSection,
    #[serde(default)]
    pub psd: PsdSection,
    #[serde(default)]
    pub acpr_obo: AcprOboSection,
    #[serde(default)]
    pub model: ModelSection,
    #[serde(default)]
    pub train: TrainSection,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SystemSection {
    pub n_t: usize,
    pub n_r: usize,
    /// QAM alphabet size.
    pub order: usize,
    /// Default 72.
    #[serde(default = "default_subcarriers")]
    pub subcarriers: usize,
    /// Default 4.
    #[serde(default = "default_oversampling")]
    pub oversampling: usize,
}

fn default_subcarriers() -> usize {
    72
}

fn default_oversampling() -> usize {
    4
}

impl SystemSection {
    pub fn to_system(&self) -> SystemConfig {
        SystemConfig {
            n_t: self.n_t,
            n_r: self.n_r,
            subcarriers: self.subcarriers,
            oversampling: self.oversampling,
            order: self.order,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ProfileKind {
    /// Scaled identity with unit Frobenius norm.
    Awgn,
    /// Plain identity.
    Identity,
    Multipath,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ChannelSection {
    /// Default `multipath`.
    #[serde(default = "default_profile")]
    pub profile: ProfileKind,
    /// Multipath tap count. Default 13.
    #[serde(default = "default_taps")]
    pub taps: usize,
    /// Per-tap power decay. Default puts the 13th tap at 1% of the first.
    #[serde(default = "default_tap_decay")]
    pub decay: f64,
}

fn default_profile() -> ProfileKind {
    ProfileKind::Multipath
}

fn default_taps() -> usize {
    13
}

impl Default for ChannelSection {
    fn default() -> Self {
        Self {
            profile: default_profile(),
            taps: default_taps(),
            decay: default_tap_decay(),
        }
    }
}

impl ChannelSection {
    pub fn profile(&self) -> ChannelProfile {
        match self.profile {
            ProfileKind::Awgn => ChannelProfile::Awgn,
            ProfileKind::Identity => ChannelProfile::Identity,
            ProfileKind::Multipath => ChannelProfile::MultipathTaps {
                count: self.taps,
                decay: self.decay,
            },
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    /// Plain OFDM.
    None,
    /// Clipping and filtering.
    Cf,
    /// Selected mapping.
    Slm,
    /// Trained autoencoder from a checkpoint.
    Cae,
}

impl Method {
    pub fn label(self) -> &'static str {
        match self {
            Method::None => "none",
            Method::Cf => "cf",
            Method::Slm => "slm",
            Method::Cae => "cae",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TransmitterSection {
    /// Default `none`.
    #[serde(default = "default_method")]
    pub method: Method,
    /// Default 4.08 dB.
    #[serde(default = "default_clip_ratio")]
    pub clip_ratio_db: f64,
    /// Default 64.
    #[serde(default = "default_slm_candidates")]
    pub slm_candidates: usize,
    /// Required for `method = "cae"`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub checkpoint: Option<PathBuf>,
}

fn default_method() -> Method {
    Method::None
}

fn default_clip_ratio() -> f64 {
    4.08
}

fn default_slm_candidates() -> usize {
    64
}

impl Default for TransmitterSection {
    fn default() -> Self {
        Self {
            method: default_method(),
            clip_ratio_db: default_clip_ratio(),
            slm_candidates: default_slm_candidates(),
            checkpoint: None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AmplifierSection {
    /// When false the back-off stays but the RAPP stage is bypassed.
    /// Default true.
    #[serde(default = "yes")]
    pub enabled: bool,
    /// Default 6 dB.
    #[serde(default = "default_ibo")]
    pub ibo_db: f64,
    /// RAPP smoothness. Default 2.
    #[serde(default = "default_smoothness")]
    pub smoothness: f64,
    /// Small-signal gain. Default 1.
    #[serde(default = "one")]
    pub gain: f64,
    /// Total radiated power budget. Default 1.
    #[serde(default = "one")]
    pub p_total: f64,
}

fn yes() -> bool {
    true
}

fn one() -> f64 {
    1.0
}

fn default_ibo() -> f64 {
    6.0
}

fn default_smoothness() -> f64 {
    2.0
}

impl Default for AmplifierSection {
    fn default() -> Self {
        Self {
            enabled: true,
            ibo_db: default_ibo(),
            smoothness: default_smoothness(),
            gain: 1.0,
            p_total: 1.0,
        }
    }
}

impl AmplifierSection {
    /// Shared amplifier with saturation `sqrt(P_T / N_t)`.
    pub fn rapp(&self, n_t: usize) -> Result<RappParams> {
        Ok(RappParams::new((self.p_total / n_t as f64).sqrt(), self.gain, self.smoothness)?)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Detector {
    Mle,
    Zf,
    /// The autoencoder's own decoder; pairs with `method = "cae"`.
    Cae,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ReceiverSection {
    /// Default `mle`.
    #[serde(default = "default_detector")]
    pub detector: Detector,
}

fn default_detector() -> Detector {
    Detector::Mle
}

impl Default for ReceiverSection {
    fn default() -> Self {
        Self {
            detector: default_detector(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BerSection {
    /// Default 0, 5, ..., 30 dB.
    #[serde(default = "default_psnr_grid")]
    pub p_snr_db: Vec<f64>,
    /// Frames per point. Default 7000.
    #[serde(default = "default_ber_frames")]
    pub frames: usize,
}

fn default_psnr_grid() -> Vec<f64> {
    (0..=6).map(|i| 5.0 * i as f64).collect()
}

fn default_ber_frames() -> usize {
    7000
}

impl Default for BerSection {
    fn default() -> Self {
        Self {
            p_snr_db: default_psnr_grid(),
            frames: default_ber_frames(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CcdfSection {
    /// Default 0 to 14 dB in 0.05 dB steps.
    #[serde(default = "default_thresholds")]
    pub thresholds_db: Vec<f64>,
    /// Default 10000.
    #[serde(default = "default_ccdf_frames")]
    pub frames: usize,
}

fn default_thresholds() -> Vec<f64> {
    (0..=280).map(|i| i as f64 * 0.05).collect()
}

fn default_ccdf_frames() -> usize {
    10_000
}

impl Default for CcdfSection {
    fn default() -> Self {
        Self {
            thresholds_db: default_thresholds(),
            frames: default_ccdf_frames(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PsdSection {
    /// Default 1000.
    #[serde(default = "default_spectral_frames")]
    pub frames: usize,
}

fn default_spectral_frames() -> usize {
    1000
}

impl Default for PsdSection {
    fn default() -> Self {
        Self {
            frames: default_spectral_frames(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AcprOboSection {
    /// One table row per entry. Default none, cf, slm.
    #[serde(default = "default_table_methods")]
    pub methods: Vec<Method>,
    /// Default 1000.
    #[serde(default = "default_spectral_frames")]
    pub frames: usize,
}

fn default_table_methods() -> Vec<Method> {
    vec![Method::None, Method::Cf, Method::Slm]
}

impl Default for AcprOboSection {
    fn default() -> Self {
        Self {
            methods: default_table_methods(),
            frames: default_spectral_frames(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelSection {
    /// Default [21, 15, 21].
    #[serde(default = "default_encoder_channels")]
    pub encoder_channels: [usize; 3],
    /// Default [15, 21].
    #[serde(default = "default_decoder_channels")]
    pub decoder_channels: [usize; 2],
    /// Default 10.
    #[serde(default = "default_iterations")]
    pub decoder_iterations: usize,
    /// `selu` (default) or `gelu`.
    #[serde(default)]
    pub activation: ActivationKind,
    /// Uniform initialization half-width times `sqrt(fan_in)`. Default 1.
    #[serde(default = "one")]
    pub init_scale: f64,
}

fn default_encoder_channels() -> [usize; 3] {
    ModelConfig::default().encoder_channels
}

fn default_decoder_channels() -> [usize; 2] {
    ModelConfig::default().decoder_channels
}

fn default_iterations() -> usize {
    ModelConfig::default().decoder_iterations
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ActivationKind {
    #[default]
    Selu,
    Gelu,
}

impl Default for ModelSection {
    fn default() -> Self {
        Self {
            encoder_channels: default_encoder_channels(),
            decoder_channels: default_decoder_channels(),
            decoder_iterations: default_iterations(),
            activation: ActivationKind::Selu,
            init_scale: 1.0,
        }
    }
}

impl ModelSection {
    pub fn to_model(&self) -> ModelConfig {
        ModelConfig {
            encoder_channels: self.encoder_channels,
            decoder_channels: self.decoder_channels,
            decoder_iterations: self.decoder_iterations,
            activation: match self.activation {
                ActivationKind::Selu => Activation::Selu,
                ActivationKind::Gelu => Activation::Gelu,
            },
            init_scale: self.init_scale,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainSection {
    /// Default 140.
    #[serde(default = "default_epochs")]
    pub epochs: usize,
    /// Default 31.
    #[serde(default = "default_batches")]
    pub batches_per_epoch: usize,
    /// Default 32.
    #[serde(default = "default_batch_size")]
    pub batch_size: usize,
    /// Zero-based epoch where the constraint terms join. Default 45.
    #[serde(default = "default_gradual_start")]
    pub gradual_start_epoch: usize,
    /// Default 40 dB.
    #[serde(default = "default_train_snr")]
    pub train_snr_db: f64,
    /// Default 0.001.
    #[serde(default = "default_lr")]
    pub learning_rate: f64,
    /// Default 0.01.
    #[serde(default = "default_weight_decay")]
    pub weight_decay: f64,
    /// Default -45 dB.
    #[serde(default = "default_acpr_req")]
    pub acpr_req_db: f64,
    /// Initial multipliers for (L2a, L2b, L3). Default [0.015, 0.001, 0.005].
    #[serde(default = "default_lambda")]
    pub lambda: [f64; 3],
    /// Penalties for (L2a, L2b, L3). Default [0.0015, 0.00001, 0.001].
    #[serde(default = "default_rho")]
    pub rho: [f64; 3],
}

fn published() -> TrainConfig {
    TrainConfig::defaults_for(SystemConfig {
        n_t: 1,
        n_r: 1,
        subcarriers: 72,
        oversampling: 4,
        order: 4,
    })
}

fn default_epochs() -> usize {
    published().epochs
}

fn default_batches() -> usize {
    published().batches_per_epoch
}

fn default_batch_size() -> usize {
    published().batch_size
}

fn default_gradual_start() -> usize {
    published().gradual_start_epoch
}

fn default_train_snr() -> f64 {
    published().train_snr_db
}

fn default_lr() -> f64 {
    published().learning_rate
}

fn default_weight_decay() -> f64 {
    published().weight_decay
}

fn default_acpr_req() -> f64 {
    published().acpr_req_db
}

fn default_lambda() -> [f64; 3] {
    published().lambda
}

fn default_rho() -> [f64; 3] {
    published().rho
}

impl Default for TrainSection {
    fn default() -> Self {
        Self {
            epochs: default_epochs(),
            batches_per_epoch: default_batches(),
            batch_size: default_batch_size(),
            gradual_start_epoch: default_gradual_start(),
            train_snr_db: default_train_snr(),
            learning_rate: default_lr(),
            weight_decay: default_weight_decay(),
            acpr_req_db: default_acpr_req(),
            lambda: default_lambda(),
            rho: default_rho(),
        }
    }
}

impl ExperimentConfig {
    /// A config with every optional part at its default.
    pub fn minimal(system: SystemSection) -> Self {
        Self {
            seed: 0,
            output: None,
            system,
            channel: ChannelSection::default(),
            transmitter: TransmitterSection::default(),
            amplifier: AmplifierSection::default(),
            receiver: ReceiverSection::default(),
            ber: BerSection::default(),
            ccdf: CcdfSection::default(),
            psd: PsdSection::default(),
            acpr_obo: AcprOboSection::default(),
            model: ModelSection::default(),
            train: TrainSection::default(),
        }
    }

    pub fn parse(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text).map_err(|e| HarnessError::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| HarnessError::Config(e.to_string()))
    }

    /// Checks the cross-field rules that the schema alone cannot express.
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(HarnessError::Config(msg));
        let s = &self.system;
        if s.n_t == 0 || s.n_r == 0 || s.subcarriers == 0 || s.oversampling == 0 {
            return bad("system dimensions must be positive".into());
        }
        Constellation::new(s.order).map_err(|e| HarnessError::Config(format!("system.order: {e}")))?;
        if self.channel.profile != ProfileKind::Multipath && s.n_r != s.n_t {
            return bad(format!("channel.profile {:?} needs n_r = n_t", self.channel.profile));
        }
        if self.channel.profile == ProfileKind::Multipath && !(1..=s.subcarriers).contains(&self.channel.taps) {
            return bad(format!("channel.taps must lie in 1..={}", s.subcarriers));
        }
        let cae_tx = self.transmitter.method == Method::Cae;
        let cae_rx = self.receiver.detector == Detector::Cae;
        if cae_tx != cae_rx {
            return bad("receiver.detector = \"cae\" exactly when transmitter.method = \"cae\"".into());
        }
        if cae_tx && !self.amplifier.enabled {
            return bad("the autoencoder link always includes the amplifier".into());
        }
        if self.transmitter.slm_candidates == 0 {
            return bad("transmitter.slm_candidates must be at least 1".into());
        }
        if !self.transmitter.clip_ratio_db.is_finite() {
            return bad("transmitter.clip_ratio_db must be finite".into());
        }
        let a = &self.amplifier;
        if !(a.p_total > 0.0 && a.gain > 0.0 && a.smoothness > 0.0 && a.ibo_db.is_finite()) {
            return bad("amplifier parameters must be positive and finite".into());
        }
        if self.receiver.detector == Detector::Mle {
            let candidates = (s.order as f64).powi(s.n_t as i32);
            if candidates > MLE_MAX_CANDIDATES as f64 {
                return bad(format!("ML search over {candidates} candidates exceeds the guard"));
            }
        }
        if self.receiver.detector == Detector::Zf && s.n_r < s.n_t {
            return bad("zero forcing needs n_r >= n_t".into());
        }
        if self.ber.frames == 0 || self.ccdf.frames == 0 || self.psd.frames == 0 || self.acpr_obo.frames == 0 {
            return bad("frame counts must be at least 1".into());
        }
        if self.ber.p_snr_db.iter().any(|v| v.is_nan()) || self.ccdf.thresholds_db.iter().any(|v| v.is_nan()) {
            return bad("grids must not contain NaN".into());
        }
        if self.train.gradual_start_epoch > self.train.epochs {
            return bad("train.gradual_start_epoch must not exceed train.epochs".into());
        }
        Ok(())
    }

    pub fn train_config(&self) -> TrainConfig {
        let t = &self.train;
        TrainConfig {
            system: self.system.to_system(),
            channel: self.channel.profile(),
            model: self.model.to_model(),
            learning_rate: t.learning_rate,
            weight_decay: t.weight_decay,
            epochs: t.epochs,
            batches_per_epoch: t.batches_per_epoch,
            batch_size: t.batch_size,
            gradual_start_epoch: t.gradual_start_epoch,
            train_snr_db: t.train_snr_db,
            ibo_db: self.amplifier.ibo_db,
            smoothness: self.amplifier.smoothness,
            p_total: self.amplifier.p_total,
            acpr_req_db: t.acpr_req_db,
            lambda: t.lambda,
            rho: t.rho,
            seed: self.seed,
        }
    }
}

pub fn load_config(path: &Path) -> Result<ExperimentConfig> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| HarnessError::Config(format!("{}: {e}", path.display())))?;
    ExperimentConfig::parse(&text).map_err(|e| match e {
        HarnessError::Config(msg) => HarnessError::Config(format!("{}: {msg}", path.display())),
        other => other,
    })
}
