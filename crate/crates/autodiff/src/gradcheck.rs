//! Central finite-difference checks of backward passes.

use crate::{Result, Tape, Var};

#[derive(Debug, Clone, Copy)]
pub struct GradCheckOptions {
    pub step: f64,
    /// Upper bound on checked entries per input; larger inputs are sampled
    /// with a fixed stride.
    pub max_entries_per_input: usize,
    /// Deliberately corrupts convolution gradients (negative control).
    pub corrupt_conv: Option<f64>,
}

impl Default for GradCheckOptions {
    fn default() -> Self {
        Self {
            step: 1e-6,
            max_entries_per_input: usize::MAX,
            corrupt_conv: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GradCheckReport {
    /// Largest `|analytic - numeric| / max(|analytic|, |numeric|, floor)`.
    pub max_error: f64,
    pub checked: usize,
    /// Input and flat index of the worst entry.
    pub worst: (usize, usize),
}

/// Magnitude below which gradient entries are compared absolutely; central
/// differences cannot resolve relative error on smaller values.
pub const RELATIVE_FLOOR: f64 = 1e-3;

pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(RELATIVE_FLOOR)
}

/// Compares the gradient of `build` with respect to each of `inputs` against
/// central differences. `build` receives one parameter leaf per input and
/// must return a scalar.
pub fn check<F>(inputs: &[(Vec<f64>, Vec<usize>)], build: F, options: GradCheckOptions) -> Result<GradCheckReport>
where
    F: Fn(&mut Tape, &[Var]) -> Result<Var>,
{
    let eval = |values: &[Vec<f64>]| -> Result<f64> {
        let mut tape = Tape::new();
        let vars = values
            .iter()
            .zip(inputs)
            .map(|(v, (_, s))| tape.param(v.clone(), s))
            .collect::<Result<Vec<_>>>()?;
        let out = build(&mut tape, &vars)?;
        Ok(tape.item(out))
    };

    let mut tape = Tape::new();
    tape.corrupt_conv_backward(options.corrupt_conv);
    let vars = inputs
        .iter()
        .map(|(v, s)| tape.param(v.clone(), s))
        .collect::<Result<Vec<_>>>()?;
    let out = build(&mut tape, &vars)?;
    let grads = tape.backward(out)?;

    let mut values: Vec<Vec<f64>> = inputs.iter().map(|(v, _)| v.clone()).collect();
    let mut report = GradCheckReport {
        max_error: 0.0,
        checked: 0,
        worst: (0, 0),
    };
    for (i, &var) in vars.iter().enumerate() {
        let analytic = grads.wrt(&tape, var);
        let n = analytic.len();
        let stride = n.div_ceil(options.max_entries_per_input.max(1)).max(1);
        for j in (0..n).step_by(stride) {
            let orig = values[i][j];
            values[i][j] = orig + options.step;
            let plus = eval(&values)?;
            values[i][j] = orig - options.step;
            let minus = eval(&values)?;
            values[i][j] = orig;
            let numeric = (plus - minus) / (2.0 * options.step);
            let err = relative_error(analytic[j], numeric);
            if err > report.max_error || err.is_nan() {
                report.max_error = if err.is_nan() { f64::INFINITY } else { err };
                report.worst = (i, j);
            }
            report.checked += 1;
        }
    }
    Ok(report)
}
