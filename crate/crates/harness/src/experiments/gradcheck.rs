//! Finite-difference verification of every differentiable layer and of the
//! full link objective, with a deliberately broken convolution as a
//! negative control.

use std::sync::Arc;

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use wavelab_autodiff::gradcheck::{check, GradCheckOptions};
use wavelab_autodiff::{AdError, BatchNormMode, Result as AdResult, Tape, Var};
use wavelab_cae::check::{link_gradcheck, probe_entries, LinkObjective};
use wavelab_cae::signal::{
    acpr_db, bandpass, channel_product, complex_scale, dft_unpad, papr, power_normalize, rapp, ChannelProduct,
};
use wavelab_cae::{BatchGenerator, Cae, ChainConfig, LagrangianState, ModelConfig, SystemConfig};
use wavelab_core::channel::{draw_channel, ChannelProfile};
use wavelab_core::rf::RappParams;
use wavelab_core::Complex64;

use crate::csv::Table;
use crate::seeds::{Purpose, SeedSplitter};
use crate::Result;

pub const LAYER_TOLERANCE: f64 = 1e-5;
pub const LINK_TOLERANCE: f64 = 1e-4;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Expectation {
    /// Must stay below the tolerance.
    Agree,
    /// Must exceed the tolerance.
    Disagree,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CheckOutcome {
    pub name: String,
    pub max_error: f64,
    pub tolerance: f64,
    pub entries: usize,
    pub expectation: Expectation,
}

impl CheckOutcome {
    pub fn passed(&self) -> bool {
        match self.expectation {
            Expectation::Agree => self.max_error < self.tolerance,
            Expectation::Disagree => self.max_error > self.tolerance,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GradcheckReport {
    pub outcomes: Vec<CheckOutcome>,
}

impl GradcheckReport {
    pub fn passed(&self) -> bool {
        self.outcomes.iter().all(CheckOutcome::passed)
    }

    pub fn failures(&self) -> Vec<&str> {
        self.outcomes.iter().filter(|o| !o.passed()).map(|o| o.name.as_str()).collect()
    }

    pub fn table(&self) -> Table {
        let mut t = Table::new(&["check", "max_rel_error", "tolerance", "entries", "status"]);
        for o in &self.outcomes {
            let status = match (o.expectation, o.passed()) {
                (Expectation::Agree, true) => "pass",
                (Expectation::Disagree, true) => "caught",
                (_, false) => "fail",
            };
            t.push(vec![
                o.name.as_str().into(),
                o.max_error.into(),
                o.tolerance.into(),
                (o.entries as u64).into(),
                status.into(),
            ]);
        }
        t
    }
}

type Input = (Vec<f64>, Vec<usize>);

fn random(rng: &mut ChaCha8Rng, shape: &[usize]) -> Input {
    let n = shape.iter().product();
    ((0..n).map(|_| rng.random_range(-1.0..1.0)).collect(), shape.to_vec())
}

/// Weighted sum so every output entry carries a distinct gradient.
fn project(t: &mut Tape, y: Var) -> AdResult<Var> {
    if t.value(y).len() == 1 {
        return Ok(y);
    }
    let n = t.value(y).len();
    let w: Vec<f64> = (0..n).map(|i| ((i * 7 % 11) as f64 - 5.0) / 5.0).collect();
    let wv = t.constant(w, &t.shape(y).to_vec())?;
    let p = t.mul(y, wv)?;
    t.sum(p)
}

fn lift<T>(r: wavelab_cae::Result<T>) -> AdResult<T> {
    r.map_err(|e| AdError::Shape(e.to_string()))
}

struct Suite {
    outcomes: Vec<CheckOutcome>,
}

impl Suite {
    fn layer<F>(&mut self, name: &str, inputs: &[Input], options: GradCheckOptions, expectation: Expectation, build: F) -> Result<()>
    where
        F: Fn(&mut Tape, &[Var]) -> AdResult<Var>,
    {
        let report = check(inputs, |t, v| build(t, v).and_then(|y| project(t, y)), options)?;
        self.outcomes.push(CheckOutcome {
            name: name.to_string(),
            max_error: report.max_error,
            tolerance: LAYER_TOLERANCE,
            entries: report.checked,
            expectation,
        });
        Ok(())
    }

    fn agree<F>(&mut self, name: &str, inputs: &[Input], build: F) -> Result<()>
    where
        F: Fn(&mut Tape, &[Var]) -> AdResult<Var>,
    {
        self.layer(name, inputs, GradCheckOptions::default(), Expectation::Agree, build)
    }
}

fn layer_checks(suite: &mut Suite, rng: &mut ChaCha8Rng) -> Result<()> {
    let (a, b) = (random(rng, &[3, 4]), random(rng, &[3, 4]));
    suite.agree("elementwise", &[a, b], |t, v| {
        let s = t.add(v[0], v[1])?;
        let d = t.sub(s, v[1])?;
        let m = t.mul(d, v[1])?;
        let sq = t.square(v[1])?;
        let pos = t.add_scalar(sq, 0.5)?;
        let q = t.div(m, pos)?;
        let l = t.ln(pos)?;
        let r = t.relu(v[0])?;
        let x = t.maximum(q, r)?;
        let y = t.add(x, l)?;
        t.scale(y, 1.7)
    })?;
    let (s, x) = (random(rng, &[1]), random(rng, &[2, 3]));
    suite.agree("reshape_slice_concat", &[s, x], |t, v| {
        let y = t.mul_scalar(v[0], v[1])?;
        let r = t.reshape(y, &[3, 2])?;
        let c = t.concat(&[r, r], 0)?;
        let sl = t.slice(c, 2, 7)?;
        t.mean(sl)
    })?;
    for &(name, kh, kw, ph, pw) in &[("conv2d_1x3", 1, 3, 0, 1), ("conv2d_3x3", 3, 3, 1, 1)] {
        let inputs = [random(rng, &[2, 2, 3, 5]), random(rng, &[3, 2, kh, kw]), random(rng, &[3])];
        suite.agree(name, &inputs, |t, v| t.conv2d(v[0], v[1], Some(v[2]), (ph, pw)))?;
    }
    let bn = [random(rng, &[3, 2, 4]), random(rng, &[2]), random(rng, &[2])];
    suite.agree("batch_norm_train", &bn, |t, v| {
        Ok(t.batch_norm(v[0], v[1], v[2], BatchNormMode::Train)?.0)
    })?;
    let (mean, var) = ([0.2, -0.1], [0.7, 1.3]);
    suite.agree("batch_norm_eval", &bn, |t, v| {
        Ok(t.batch_norm(v[0], v[1], v[2], BatchNormMode::Eval { mean: &mean, var: &var })?.0)
    })?;
    let fc = [random(rng, &[2, 3, 4]), random(rng, &[5, 3]), random(rng, &[5])];
    suite.agree("channel_fc", &fc, |t, v| t.channel_fc(v[0], v[1], v[2]))?;
    let dense = [random(rng, &[6]), random(rng, &[4, 6]), random(rng, &[4])];
    suite.agree("fully_connected", &dense, |t, v| t.fully_connected(v[0], v[1], v[2]))?;
    let act = [random(rng, &[10])];
    suite.agree("selu", &act, |t, v| t.selu(v[0]))?;
    suite.agree("gelu", &act, |t, v| t.gelu(v[0]))?;
    let z = [random(rng, &[2, 4, 3])];
    suite.agree("softmax", &z, |t, v| t.softmax(v[0]))?;
    let targets: Vec<usize> = (0..6).map(|_| rng.random_range(0..4)).collect();
    suite.agree("softmax_nll", &z, |t, v| t.softmax_nll(v[0], &targets))?;
    Ok(())
}

fn signal_checks(suite: &mut Suite, rng: &mut ChaCha8Rng) -> Result<()> {
    let (k, l, rows) = (4, 2, 2);
    let time = [random(rng, &[2, rows, 2 * l * k])];
    let freq = [random(rng, &[2, rows, 2 * k])];
    suite.agree("bandpass", &time, |t, v| lift(bandpass(t, v[0], k)))?;
    suite.agree("dft_unpad", &time, |t, v| lift(dft_unpad(t, v[0], k)))?;
    suite.agree("complex_scale", &freq, |t, v| lift(complex_scale(t, v[0], Complex64::new(0.3, -1.2))))?;
    let profile = ChannelProfile::MultipathTaps { count: 2, decay: 0.5 };
    let chans = Arc::new(
        (0..2)
            .map(|_| draw_channel(rng, k, rows, rows, profile))
            .collect::<wavelab_core::Result<Vec<_>>>()?,
    );
    for (name, product) in [
        ("channel_forward", ChannelProduct::Forward),
        ("channel_adjoint", ChannelProduct::Adjoint),
        ("channel_gram", ChannelProduct::Gram),
    ] {
        let c = chans.clone();
        suite.agree(name, &freq, move |t, v| lift(channel_product(t, v[0], c.clone(), product)))?;
    }
    suite.agree("power_normalize", &time, |t, v| lift(power_normalize(t, v[0], 0.7)))?;
    for p in [1.0, 2.0, 10.0] {
        let params = RappParams::new(0.8, 1.0, p)?;
        suite.agree(&format!("rapp_p{p}"), &time, move |t, v| lift(rapp(t, v[0], params)))?;
    }
    suite.agree("papr", &time, |t, v| lift(papr(t, v[0])))?;
    suite.agree("acpr_db", &time, |t, v| lift(acpr_db(t, v[0], l)))?;
    Ok(())
}

fn link_check(suite: &mut Suite, seed: u64) -> Result<()> {
    let system = SystemConfig {
        n_t: 2,
        n_r: 2,
        subcarriers: 4,
        oversampling: 2,
        order: 4,
    };
    let config = ModelConfig {
        encoder_channels: [3, 2, 3],
        decoder_channels: [2, 3],
        decoder_iterations: 2,
        ..ModelConfig::default()
    };
    let model = Cae::new(system, config, seed)?;
    let profile = ChannelProfile::MultipathTaps { count: 2, decay: 0.5 };
    let batch = BatchGenerator::new(system, profile, 1.0, 20.0, seed ^ 1)?.next_batch(3)?;
    let chain = ChainConfig {
        rapp: RappParams::from_budget(1.0, system.n_t)?,
        ibo_db: 3.0,
    };
    let state = LagrangianState::new([0.015, 0.001, 0.005], [0.0015, 0.00001, 0.001])?;
    let obj = LinkObjective {
        batch: &batch,
        chain: &chain,
        state: &state,
        acpr_req_db: -45.0,
    };
    let entries = probe_entries(&model, |_| true);
    let report = link_gradcheck(&model, &obj, &entries, 1e-6)?;
    suite.outcomes.push(CheckOutcome {
        name: "end_to_end_link".into(),
        max_error: report.max_error,
        tolerance: LINK_TOLERANCE,
        entries: report.checked,
        expectation: Expectation::Agree,
    });
    Ok(())
}

fn negative_control(suite: &mut Suite, rng: &mut ChaCha8Rng) -> Result<()> {
    let inputs = [random(rng, &[1, 2, 3, 4]), random(rng, &[2, 2, 3, 3])];
    let options = GradCheckOptions {
        corrupt_conv: Some(1.01),
        ..GradCheckOptions::default()
    };
    suite.layer("corrupted_conv_control", &inputs, options, Expectation::Disagree, |t, v| {
        t.conv2d(v[0], v[1], None, (1, 1))
    })
}

pub fn run_gradcheck(seed: u64) -> Result<GradcheckReport> {
    let seeds = SeedSplitter::new(seed);
    let mut rng = seeds.rng(Purpose::Gradcheck, 0);
    let mut suite = Suite { outcomes: Vec::new() };
    layer_checks(&mut suite, &mut rng)?;
    signal_checks(&mut suite, &mut rng)?;
    link_check(&mut suite, seeds.seed(Purpose::Gradcheck, 1))?;
    negative_control(&mut suite, &mut rng)?;
    Ok(GradcheckReport {
        outcomes: suite.outcomes,
    })
}
