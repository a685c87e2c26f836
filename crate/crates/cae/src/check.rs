//! Finite-difference check of the full link gradient.

use num_complex::Complex64;
use wavelab_autodiff::gradcheck::relative_error;
use wavelab_autodiff::{ParamId, Tape};

use crate::loss::{loss_acpr, loss_l1, loss_papr, total_loss, LagrangianState, LossTerms};
use crate::model::{Cae, ChainConfig, Mode};
use crate::{Batch, Result};

/// Everything the objective depends on besides the parameters.
#[derive(Debug, Clone, Copy)]
pub struct LinkObjective<'a> {
    pub batch: &'a Batch,
    pub chain: &'a ChainConfig,
    pub state: &'a LagrangianState,
    pub acpr_req_db: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LinkCheckReport {
    pub max_error: f64,
    pub checked: usize,
    pub worst: Option<String>,
}

fn evaluate(model: &Cae, obj: &LinkObjective<'_>, alpha: Option<Complex64>, grads: bool) -> Result<(f64, Complex64, Option<Vec<Vec<f64>>>)> {
    let mut tape = Tape::new();
    let bound = model.params().bind(&mut tape);
    let mut stats = Vec::new();
    let out = model.link(&mut tape, &bound, obj.batch, obj.chain, Mode::Train, alpha, &mut stats)?;
    let l1 = loss_l1(&mut tape, out.logits, &obj.batch.targets)?;
    let (l2a, l2b) = loss_papr(&mut tape, out.encoded, out.filtered)?;
    let l3 = loss_acpr(&mut tape, out.amplified, model.system().oversampling, obj.acpr_req_db)?;
    let loss = total_loss(&mut tape, LossTerms { l1, l2a, l2b, l3 }, obj.state)?;
    let g = if grads {
        let g = tape.backward(loss)?;
        Some(model.params().collect_grads(&tape, &bound, &g))
    } else {
        None
    };
    Ok((tape.item(loss), out.alpha, g))
}

/// A few entries of every parameter tensor: the first, the middle and the
/// last.
pub fn probe_entries(model: &Cae, filter: impl Fn(&str) -> bool) -> Vec<(ParamId, usize)> {
    let store = model.params();
    let mut out = Vec::new();
    for id in store.ids().filter(|&id| filter(store.name(id))) {
        let n = store.value(id).len();
        let mut picks = vec![0, n / 2, n - 1];
        picks.dedup();
        out.extend(picks.into_iter().map(|i| (id, i)));
    }
    out
}

/// Compares backpropagated gradients of the augmented-Lagrangian objective
/// with central differences for the listed parameter entries. The Bussgang
/// gain is measured once and then held fixed, matching its detached role in
/// the gradient.
pub fn link_gradcheck(
    model: &Cae,
    obj: &LinkObjective<'_>,
    entries: &[(ParamId, usize)],
    step: f64,
) -> Result<LinkCheckReport> {
    let (_, alpha, grads) = evaluate(model, obj, None, true)?;
    let grads = grads.expect("requested");
    let mut probe = model.clone();
    let mut report = LinkCheckReport {
        max_error: 0.0,
        checked: 0,
        worst: None,
    };
    for &(id, i) in entries {
        let orig = probe.params().value(id)[i];
        probe.params_mut().value_mut(id)[i] = orig + step;
        let (plus, _, _) = evaluate(&probe, obj, Some(alpha), false)?;
        probe.params_mut().value_mut(id)[i] = orig - step;
        let (minus, _, _) = evaluate(&probe, obj, Some(alpha), false)?;
        probe.params_mut().value_mut(id)[i] = orig;
        let numeric = (plus - minus) / (2.0 * step);
        let index = model.params().ids().position(|p| p == id).expect("own parameter");
        let err = relative_error(grads[index][i], numeric);
        let err = if err.is_nan() { f64::INFINITY } else { err };
        if report.worst.is_none() || err > report.max_error {
            report.max_error = err;
            report.worst = Some(format!("{}[{i}]", model.params().name(id)));
        }
        report.checked += 1;
    }
    Ok(report)
}
