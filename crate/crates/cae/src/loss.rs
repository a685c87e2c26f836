//! Loss components and the augmented-Lagrangian objective.

use wavelab_autodiff::{Tape, Var};

use crate::signal::{acpr_db, papr};
use crate::{CaeError, Result};

/// Reconstruction loss: level cross-entropy summed over antennas,
/// subcarriers and both parts, averaged over the batch.
pub fn loss_l1(tape: &mut Tape, logits: Var, targets: &[usize]) -> Result<Var> {
    Ok(tape.softmax_nll(logits, targets)?)
}

/// Batch-mean PAPR (linear) of the encoder output and of the filtered frame.
pub fn loss_papr(tape: &mut Tape, encoded: Var, filtered: Var) -> Result<(Var, Var)> {
    let a = papr(tape, encoded)?;
    let b = papr(tape, filtered)?;
    Ok((tape.mean(a)?, tape.mean(b)?))
}

/// Batch-mean ACPR of the amplified frames minus the requirement, in dB.
/// Negative when the spectral constraint holds.
pub fn loss_acpr(tape: &mut Tape, amplified: Var, oversampling: usize, acpr_req_db: f64) -> Result<Var> {
    let per_example = acpr_db(tape, amplified, oversampling)?;
    let mean = tape.mean(per_example)?;
    Ok(tape.add_scalar(mean, -acpr_req_db)?)
}

/// Scalar handles of the four loss components.
#[derive(Debug, Clone, Copy)]
pub struct LossTerms {
    pub l1: Var,
    pub l2a: Var,
    pub l2b: Var,
    pub l3: Var,
}

/// Multipliers and fixed penalties of the augmented Lagrangian. The PAPR
/// terms are equality-style constraints; the ACPR term is an inequality
/// whose multiplier is kept nonnegative.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LagrangianState {
    pub lambda_2a: f64,
    pub lambda_2b: f64,
    pub lambda_3: f64,
    pub rho_2a: f64,
    pub rho_2b: f64,
    pub rho_3: f64,
    /// Number of multiplier updates applied so far.
    pub updates: usize,
}

impl LagrangianState {
    /// `lambda` and `rho` are ordered (2a, 2b, 3).
    pub fn new(lambda: [f64; 3], rho: [f64; 3]) -> Result<Self> {
        let state = Self {
            lambda_2a: lambda[0],
            lambda_2b: lambda[1],
            lambda_3: lambda[2],
            rho_2a: rho[0],
            rho_2b: rho[1],
            rho_3: rho[2],
            updates: 0,
        };
        state.validate()?;
        Ok(state)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.rho_3 > 0.0) {
            return Err(CaeError::Config(format!("rho_3 must be positive, got {}", self.rho_3)));
        }
        if !(self.rho_2a >= 0.0 && self.rho_2b >= 0.0) {
            return Err(CaeError::Config("PAPR penalties must be nonnegative".into()));
        }
        if !(self.lambda_3 >= 0.0) {
            return Err(CaeError::Config(format!("lambda_3 must be nonnegative, got {}", self.lambda_3)));
        }
        let all = [self.lambda_2a, self.lambda_2b, self.lambda_3, self.rho_2a, self.rho_2b, self.rho_3];
        if all.iter().any(|v| !v.is_finite()) {
            return Err(CaeError::Config("multipliers and penalties must be finite".into()));
        }
        Ok(())
    }

    /// One dual-ascent step on epoch-mean constraint values.
    pub fn update_multipliers(&self, mean_l2a: f64, mean_l2b: f64, mean_l3: f64) -> Self {
        Self {
            lambda_2a: self.lambda_2a + self.rho_2a * mean_l2a,
            lambda_2b: self.lambda_2b + self.rho_2b * mean_l2b,
            lambda_3: (self.lambda_3 + self.rho_3 * mean_l3).max(0.0),
            updates: self.updates + 1,
            ..*self
        }
    }

    /// Objective value for given component values, without a tape.
    pub fn objective(&self, l1: f64, l2a: f64, l2b: f64, l3: f64) -> f64 {
        let hinge = (self.lambda_3 + self.rho_3 * l3).max(0.0);
        l1 + self.lambda_2a * l2a
            + 0.5 * self.rho_2a * l2a * l2a
            + self.lambda_2b * l2b
            + 0.5 * self.rho_2b * l2b * l2b
            + (hinge * hinge - self.lambda_3 * self.lambda_3) / (2.0 * self.rho_3)
    }
}

/// Differentiable augmented-Lagrangian objective.
pub fn total_loss(tape: &mut Tape, terms: LossTerms, state: &LagrangianState) -> Result<Var> {
    state.validate()?;
    let mut acc = terms.l1;
    for (l, lambda, rho) in [
        (terms.l2a, state.lambda_2a, state.rho_2a),
        (terms.l2b, state.lambda_2b, state.rho_2b),
    ] {
        let linear = tape.scale(l, lambda)?;
        let sq = tape.square(l)?;
        let quad = tape.scale(sq, 0.5 * rho)?;
        acc = tape.add(acc, linear)?;
        acc = tape.add(acc, quad)?;
    }
    let shifted = tape.scale(terms.l3, state.rho_3)?;
    let shifted = tape.add_scalar(shifted, state.lambda_3)?;
    let hinge = tape.relu(shifted)?;
    let sq = tape.square(hinge)?;
    let centered = tape.add_scalar(sq, -state.lambda_3 * state.lambda_3)?;
    let inequality = tape.scale(centered, 1.0 / (2.0 * state.rho_3))?;
    Ok(tape.add(acc, inequality)?)
}
