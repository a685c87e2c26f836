use std::sync::Arc;

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use wavelab_autodiff::gradcheck::{check, GradCheckOptions};
use wavelab_autodiff::{Result as AdResult, Tape, Var};
use wavelab_cae::signal::{
    acpr_db, bandpass, channel_product, complex_scale, dft_unpad, from_complex, papr, power_normalize, rapp,
    to_complex, ChannelProduct,
};
use wavelab_core::channel::{draw_channel, ChannelProfile};
use wavelab_core::dsp::{self, estimate_psd, CMat, PsdConfig, Stage, TimeFrame};
use wavelab_core::rf::{self, RappParams};

fn random(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    (0..n).map(|_| rng.random_range(-1.0..1.0)).collect()
}

fn frame(values: &[f64], rows: usize, len: usize, l: usize, stage: Stage) -> TimeFrame {
    TimeFrame::new(CMat::from_vec(rows, len, to_complex(values, len)).unwrap(), l, stage).unwrap()
}

fn weighted_sum(t: &mut Tape, y: Var) -> AdResult<Var> {
    let n = t.value(y).len();
    let w: Vec<f64> = (0..n).map(|i| ((i * 5 % 13) as f64 - 6.0) / 6.0).collect();
    let wv = t.constant(w, &t.shape(y).to_vec())?;
    let p = t.mul(y, wv)?;
    t.sum(p)
}

fn grad_ok(values: Vec<f64>, shape: &[usize], f: impl Fn(&mut Tape, Var) -> wavelab_cae::Result<Var>) {
    let report = check(
        &[(values, shape.to_vec())],
        |t, v| {
            let y = f(t, v[0]).map_err(|e| wavelab_autodiff::AdError::Shape(e.to_string()))?;
            if t.value(y).len() == 1 {
                Ok(y)
            } else {
                weighted_sum(t, y)
            }
        },
        GradCheckOptions::default(),
    )
    .unwrap();
    assert!(report.max_error < 1e-5, "{report:?}");
}

#[test]
fn realified_layout_round_trips() {
    let z = vec![Complex64::new(1.0, -1.0), Complex64::new(2.0, 3.0), Complex64::new(-4.0, 0.5), Complex64::new(0.0, 9.0)];
    let r = from_complex(&z, 2);
    assert_eq!(r, vec![1.0, 2.0, -1.0, 3.0, -4.0, 0.0, 0.5, 9.0]);
    assert_eq!(to_complex(&r, 2), z);
}

#[test]
fn linear_ops_match_core_and_gradients() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let (k, l, nt) = (4, 3, 2);
    let len = k * l;
    let x = random(&mut rng, 2 * nt * 2 * len);

    let mut t = Tape::new();
    let xv = t.constant(x.clone(), &[2, nt, 2 * len]).unwrap();
    let f = bandpass(&mut t, xv, k).unwrap();
    let u = dft_unpad(&mut t, xv, k).unwrap();
    for e in 0..2 {
        let slice = &x[e * nt * 2 * len..(e + 1) * nt * 2 * len];
        let core_f = rf::bandpass_filter(&frame(slice, nt, len, l, Stage::Encoded)).unwrap();
        let ours = &t.value(f)[e * nt * 2 * len..(e + 1) * nt * 2 * len];
        let expect = from_complex(core_f.samples().as_slice(), len);
        for (a, b) in ours.iter().zip(&expect) {
            assert!((a - b).abs() < 1e-12);
        }
        let core_u = dsp::dft_unpad(&frame(slice, nt, len, l, Stage::Amplified), k).unwrap();
        let ours = &t.value(u)[e * nt * 2 * k..(e + 1) * nt * 2 * k];
        for (a, b) in ours.iter().zip(&from_complex(core_u.as_slice(), k)) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    let shape = [2, nt, 2 * len];
    grad_ok(x.clone(), &shape, |t, v| bandpass(t, v, k));
    grad_ok(x.clone(), &shape, |t, v| dft_unpad(t, v, k));
    grad_ok(x, &shape, |t, v| complex_scale(t, v, Complex64::new(0.7, -0.4)));
}

#[test]
fn channel_products_match_matrices_and_gradients() {
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    let (k, nt, nr) = (4, 2, 3);
    let profile = ChannelProfile::MultipathTaps { count: 3, decay: 0.5 };
    let chans: Vec<_> = (0..2).map(|_| draw_channel(&mut rng, k, nt, nr, profile).unwrap()).collect();
    let chans = Arc::new(chans);
    let x = random(&mut rng, 2 * nt * 2 * k);
    let y = random(&mut rng, 2 * nr * 2 * k);

    let mut t = Tape::new();
    let xv = t.constant(x.clone(), &[2, nt, 2 * k]).unwrap();
    let hx = channel_product(&mut t, xv, chans.clone(), ChannelProduct::Forward).unwrap();
    for e in 0..2 {
        let xm = CMat::from_vec(nt, k, to_complex(&x[e * nt * 2 * k..(e + 1) * nt * 2 * k], k)).unwrap();
        let expect = wavelab_core::channel::apply_channel_noiseless(&xm, &chans[e]).unwrap();
        let ours = to_complex(&t.value(hx)[e * nr * 2 * k..(e + 1) * nr * 2 * k], k);
        for (a, b) in ours.iter().zip(expect.as_slice()) {
            assert!((a - b).norm() < 1e-12);
        }
    }

    let c1 = chans.clone();
    grad_ok(x.clone(), &[2, nt, 2 * k], move |t, v| channel_product(t, v, c1.clone(), ChannelProduct::Forward));
    let c2 = chans.clone();
    grad_ok(y, &[2, nr, 2 * k], move |t, v| channel_product(t, v, c2.clone(), ChannelProduct::Adjoint));
    grad_ok(x, &[2, nt, 2 * k], move |t, v| channel_product(t, v, chans.clone(), ChannelProduct::Gram));
}

#[test]
fn power_normalize_hits_target_per_example() {
    let mut rng = ChaCha8Rng::seed_from_u64(13);
    let x = random(&mut rng, 3 * 2 * 16);
    let mut t = Tape::new();
    let xv = t.constant(x.clone(), &[3, 2, 16]).unwrap();
    let y = power_normalize(&mut t, xv, 0.3).unwrap();
    for ex in t.value(y).chunks_exact(32) {
        let p = ex.iter().map(|v| v * v).sum::<f64>() / 16.0;
        assert!((p - 0.3).abs() < 1e-12);
    }
    grad_ok(x, &[3, 2, 16], |t, v| power_normalize(t, v, 0.3));
}

#[test]
fn rapp_matches_core_and_gradients() {
    let mut rng = ChaCha8Rng::seed_from_u64(14);
    for p in [1.0, 2.0, 10.0] {
        let params = RappParams::new(0.8, 1.0, p).unwrap();
        let x: Vec<f64> = random(&mut rng, 2 * 2 * 12).iter().map(|v| 1.5 * v).collect();
        let mut t = Tape::new();
        let xv = t.constant(x.clone(), &[1, 2, 24]).unwrap();
        let y = rapp(&mut t, xv, params).unwrap();
        let core = rf::rapp_amplify(&frame(&x, 2, 12, 3, Stage::BackedOff), &params).unwrap();
        for (a, b) in t.value(y).iter().zip(&from_complex(core.samples().as_slice(), 12)) {
            assert!((a - b).abs() < 1e-12);
        }
        grad_ok(x, &[1, 2, 24], move |t, v| rapp(t, v, params));
    }
}

#[test]
fn papr_matches_core_and_gradients() {
    let mut rng = ChaCha8Rng::seed_from_u64(15);
    let x = random(&mut rng, 3 * 2 * 2 * 16);
    let mut t = Tape::new();
    let xv = t.constant(x.clone(), &[3, 2, 32]).unwrap();
    let p = papr(&mut t, xv).unwrap();
    for e in 0..3 {
        let f = frame(&x[e * 64..(e + 1) * 64], 2, 16, 4, Stage::Filtered);
        assert!((t.value(p)[e] - dsp::papr_mimo(&f).unwrap()).abs() < 1e-12);
    }
    grad_ok(x, &[3, 2, 32], papr);
}

#[test]
fn acpr_matches_core_and_gradients() {
    let mut rng = ChaCha8Rng::seed_from_u64(16);
    let (k, l) = (4, 4);
    let len = k * l;
    let x = random(&mut rng, 2 * 2 * 2 * len);
    let mut t = Tape::new();
    let xv = t.constant(x.clone(), &[2, 2, 2 * len]).unwrap();
    let a = acpr_db(&mut t, xv, l).unwrap();
    for e in 0..2 {
        let f = frame(&x[e * 4 * len..(e + 1) * 4 * len], 2, len, l, Stage::Amplified);
        let expect = rf::acpr(&estimate_psd(&f, PsdConfig::default()).unwrap(), l).unwrap();
        assert!((t.value(a)[e] - expect).abs() < 1e-10);
    }
    grad_ok(x, &[2, 2, 2 * len], move |t, v| acpr_db(t, v, l));
}
