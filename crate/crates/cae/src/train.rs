//! Gradual loss learning with dual ascent on the multipliers.

use std::io::Write;

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use wavelab_autodiff::{AdamW, AdamWConfig, Tape};
use wavelab_core::channel::ChannelProfile;
use wavelab_core::rf::RappParams;

use crate::data::{BatchGenerator, SystemConfig};
use crate::loss::{loss_acpr, loss_l1, loss_papr, total_loss, LagrangianState, LossTerms};
use crate::model::{Cae, ChainConfig, Mode, ModelConfig};
use crate::{CaeError, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub system: SystemConfig,
    pub channel: ChannelProfile,
    pub model: ModelConfig,
    pub learning_rate: f64,
    pub weight_decay: f64,
    pub epochs: usize,
    pub batches_per_epoch: usize,
    pub batch_size: usize,
    /// Zero-based epoch from which the constraint terms join the loss.
    pub gradual_start_epoch: usize,
    pub train_snr_db: f64,
    pub ibo_db: f64,
    pub smoothness: f64,
    pub p_total: f64,
    pub acpr_req_db: f64,
    /// Initial multipliers (2a, 2b, 3).
    pub lambda: [f64; 3],
    /// Fixed penalties (2a, 2b, 3).
    pub rho: [f64; 3],
    pub seed: u64,
}

impl TrainConfig {
    /// Published hyperparameters for a given system.
    pub fn defaults_for(system: SystemConfig) -> Self {
        Self {
            system,
            channel: ChannelProfile::multipath_default(),
            model: ModelConfig::default(),
            learning_rate: 1e-3,
            weight_decay: 0.01,
            epochs: 140,
            batches_per_epoch: 4375 / 140,
            batch_size: 32,
            gradual_start_epoch: 45,
            train_snr_db: 40.0,
            ibo_db: 6.0,
            smoothness: 2.0,
            p_total: 1.0,
            acpr_req_db: -45.0,
            lambda: [0.015, 0.001, 0.005],
            rho: [0.0015, 0.00001, 0.001],
            seed: 0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.system.validate()?;
        self.model.validate()?;
        LagrangianState::new(self.lambda, self.rho)?;
        if self.epochs == 0 || self.batches_per_epoch == 0 {
            return Err(CaeError::Config("training needs at least one epoch and one batch".into()));
        }
        if self.batch_size < 2 {
            return Err(CaeError::Config("batch normalization needs batches of at least 2".into()));
        }
        if self.gradual_start_epoch > self.epochs {
            return Err(CaeError::Config(format!(
                "gradual start {} after the last epoch {}",
                self.gradual_start_epoch, self.epochs
            )));
        }
        if !(self.learning_rate > 0.0) || !(self.weight_decay >= 0.0) || !(self.p_total > 0.0) {
            return Err(CaeError::Config("learning rate and power budget must be positive".into()));
        }
        self.rapp()?;
        Ok(())
    }

    pub fn rapp(&self) -> Result<RappParams> {
        let a0 = (self.p_total / self.system.n_t as f64).sqrt();
        Ok(RappParams::new(a0, 1.0, self.smoothness)?)
    }

    pub fn chain(&self) -> Result<ChainConfig> {
        Ok(ChainConfig {
            rapp: self.rapp()?,
            ibo_db: self.ibo_db,
        })
    }
}

/// Epoch means of the loss components and optimizer diagnostics.
#[derive(Debug, Clone, PartialEq)]
pub struct EpochRecord {
    pub epoch: usize,
    pub augmented: bool,
    pub l1: f64,
    pub l2a: f64,
    pub l2b: f64,
    pub l3: f64,
    /// Multipliers in force during the epoch.
    pub lambda_2a: f64,
    pub lambda_2b: f64,
    pub lambda_3: f64,
    pub grad_norm: f64,
}

pub const LOG_HEADER: &str = "epoch,augmented,l1,l2a,l2b,l3,lambda_2a,lambda_2b,lambda_3,grad_norm";

impl EpochRecord {
    pub fn csv_row(&self) -> String {
        format!(
            "{},{},{:.16e},{:.16e},{:.16e},{:.16e},{:.16e},{:.16e},{:.16e},{:.16e}",
            self.epoch,
            u8::from(self.augmented),
            self.l1,
            self.l2a,
            self.l2b,
            self.l3,
            self.lambda_2a,
            self.lambda_2b,
            self.lambda_3,
            self.grad_norm
        )
    }
}

pub fn write_log_csv(records: &[EpochRecord], out: &mut impl Write) -> std::io::Result<()> {
    writeln!(out, "{LOG_HEADER}")?;
    for r in records {
        writeln!(out, "{}", r.csv_row())?;
    }
    Ok(())
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub model: Cae,
    pub log: Vec<EpochRecord>,
    pub multipliers: LagrangianState,
}

/// Trains a fresh model. `on_epoch` sees each record as it is produced.
pub fn train(cfg: &TrainConfig, mut on_epoch: impl FnMut(&EpochRecord)) -> Result<TrainOutcome> {
    cfg.validate()?;
    let mut seeds = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut model = Cae::new(cfg.system, cfg.model, seeds.next_u64())?;
    let mut data = BatchGenerator::new(cfg.system, cfg.channel, cfg.p_total, cfg.train_snr_db, seeds.next_u64())?;
    let chain = cfg.chain()?;
    let adam = AdamWConfig {
        learning_rate: cfg.learning_rate,
        weight_decay: cfg.weight_decay,
        ..AdamWConfig::default()
    };
    let mut opt = AdamW::new(adam, model.params());
    let mut state = LagrangianState::new(cfg.lambda, cfg.rho)?;
    let mut log = Vec::with_capacity(cfg.epochs);

    for epoch in 0..cfg.epochs {
        let augmented = epoch >= cfg.gradual_start_epoch;
        let mut sums = [0.0; 5];
        for step in 0..cfg.batches_per_epoch {
            let batch = data.next_batch(cfg.batch_size)?;
            let mut tape = Tape::new();
            let bound = model.params().bind(&mut tape);
            let mut stats = Vec::new();
            let out = model.link(&mut tape, &bound, &batch, &chain, Mode::Train, None, &mut stats)?;
            let l1 = loss_l1(&mut tape, out.logits, &batch.targets)?;
            let (l2a, l2b) = loss_papr(&mut tape, out.encoded, out.filtered)?;
            let l3 = loss_acpr(&mut tape, out.amplified, cfg.system.oversampling, cfg.acpr_req_db)?;
            let loss = if augmented {
                total_loss(&mut tape, LossTerms { l1, l2a, l2b, l3 }, &state)?
            } else {
                l1
            };
            let values = [l1, l2a, l2b, l3, loss].map(|v| tape.item(v));
            if let Some(i) = values.iter().position(|v| !v.is_finite()) {
                let what = ["l1", "l2a", "l2b", "l3", "loss"][i];
                return Err(CaeError::NonFinite { what, epoch, batch: step });
            }
            let grads = tape.backward(loss)?;
            let grads = model.params().collect_grads(&tape, &bound, &grads);
            let norm = grads.iter().flatten().map(|g| g * g).sum::<f64>().sqrt();
            if !norm.is_finite() {
                return Err(CaeError::NonFinite {
                    what: "gradient",
                    epoch,
                    batch: step,
                });
            }
            opt.step(model.params_mut(), &grads)?;
            model.absorb_stats(&stats);
            for (s, v) in sums.iter_mut().zip(values[..4].iter().chain([&norm])) {
                *s += v;
            }
        }
        let n = cfg.batches_per_epoch as f64;
        let [l1, l2a, l2b, l3, grad_norm] = sums.map(|s| s / n);
        let record = EpochRecord {
            epoch,
            augmented,
            l1,
            l2a,
            l2b,
            l3,
            lambda_2a: state.lambda_2a,
            lambda_2b: state.lambda_2b,
            lambda_3: state.lambda_3,
            grad_norm,
        };
        on_epoch(&record);
        log.push(record);
        if augmented {
            state = state.update_multipliers(l2a, l2b, l3);
        }
    }
    Ok(TrainOutcome {
        model,
        log,
        multipliers: state,
    })
}
