use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use wavelab_autodiff::Tape;
use wavelab_cae::check::{link_gradcheck, probe_entries, LinkObjective};
use wavelab_cae::loss::{loss_acpr, loss_l1, loss_papr};
use wavelab_cae::model::{hard_decisions, StatsSink};
use wavelab_cae::signal::from_complex;
use wavelab_cae::{
    total_loss, BatchGenerator, Cae, ChainConfig, LagrangianState, LossTerms, Mode, ModelConfig, SystemConfig,
};
use wavelab_core::channel::ChannelProfile;
use wavelab_core::dsp::{idft_oversampled, OfdmGrid};
use wavelab_core::qam::Constellation;
use wavelab_core::rf::RappParams;

fn small_system() -> SystemConfig {
    SystemConfig {
        n_t: 2,
        n_r: 2,
        subcarriers: 4,
        oversampling: 2,
        order: 4,
    }
}

fn small_model() -> ModelConfig {
    ModelConfig {
        encoder_channels: [3, 2, 3],
        decoder_channels: [2, 3],
        decoder_iterations: 2,
        ..ModelConfig::default()
    }
}

fn chain(n_t: usize) -> ChainConfig {
    ChainConfig {
        rapp: RappParams::new((1.0 / n_t as f64).sqrt(), 1.0, 2.0).unwrap(),
        ibo_db: 3.0,
    }
}

fn multipath() -> ChannelProfile {
    ChannelProfile::MultipathTaps { count: 2, decay: 0.5 }
}

#[test]
fn encoder_output_has_unit_power_per_example() {
    let system = small_system();
    let model = Cae::new(system, small_model(), 1).unwrap();
    let batch = BatchGenerator::new(system, multipath(), 1.0, 20.0, 2).unwrap().next_batch(4).unwrap();
    for mode in [Mode::Train, Mode::Eval] {
        let mut tape = Tape::new();
        let p = model.params().bind_frozen(&mut tape);
        let x = tape.constant(batch.x_time.clone(), &[4, 2, 16]).unwrap();
        let y = model.encode(&mut tape, &p, x, mode, &mut StatsSink::new()).unwrap();
        assert_eq!(tape.shape(y), &[4, 2, 16]);
        for ex in tape.value(y).chunks_exact(32) {
            let power = ex.iter().map(|v| v * v).sum::<f64>() / 16.0;
            assert!((power - 1.0).abs() < 1e-9);
        }
    }
}

#[test]
fn encoder_commutes_with_antenna_permutation() {
    let system = small_system();
    let model = Cae::new(system, small_model(), 3).unwrap();
    let batch = BatchGenerator::new(system, multipath(), 1.0, 20.0, 4).unwrap().next_batch(3).unwrap();
    let row = 16;
    let swapped: Vec<f64> = batch
        .x_time
        .chunks_exact(2 * row)
        .flat_map(|ex| ex[row..].iter().chain(&ex[..row]).copied().collect::<Vec<_>>())
        .collect();
    let run = |x: Vec<f64>| {
        let mut tape = Tape::new();
        let p = model.params().bind_frozen(&mut tape);
        let x = tape.constant(x, &[3, 2, 16]).unwrap();
        let y = model.encode(&mut tape, &p, x, Mode::Train, &mut StatsSink::new()).unwrap();
        tape.value(y).to_vec()
    };
    let (a, b) = (run(batch.x_time.clone()), run(swapped));
    for (ea, eb) in a.chunks_exact(2 * row).zip(b.chunks_exact(2 * row)) {
        for i in 0..row {
            assert!((ea[i] - eb[row + i]).abs() < 1e-12);
            assert!((ea[row + i] - eb[i]).abs() < 1e-12);
        }
    }
}

#[test]
fn decoder_outputs_probabilities() {
    let system = small_system();
    let model = Cae::new(system, small_model(), 5).unwrap();
    let batch = BatchGenerator::new(system, multipath(), 1.0, 20.0, 6).unwrap().next_batch(3).unwrap();
    let ev = model.evaluate(&batch, &chain(2)).unwrap();
    let sp = system.positions();
    for b in 0..3 {
        for pos in 0..sp {
            let p0 = ev.probabilities[(b * 2) * sp + pos];
            let p1 = ev.probabilities[(b * 2 + 1) * sp + pos];
            assert!(p0 >= 0.0 && p1 >= 0.0);
            assert!((p0 + p1 - 1.0).abs() < 1e-12);
        }
    }
    assert_eq!(ev.decisions.len(), 3);
    assert!(ev.decisions.iter().all(|d| d.len() == 8 && d.iter().all(|&s| s < 4)));
}

#[test]
fn zeroed_output_layer_gives_even_odds() {
    let system = small_system();
    let mut model = Cae::new(system, small_model(), 7).unwrap();
    for name in ["decoder1.fc.weight", "decoder1.fc.bias"] {
        let id = model.params().find(name).unwrap();
        model.params_mut().value_mut(id).fill(0.0);
    }
    let batch = BatchGenerator::new(system, multipath(), 1.0, 20.0, 8).unwrap().next_batch(2).unwrap();
    let ev = model.evaluate(&batch, &chain(2)).unwrap();
    assert!(ev.probabilities.iter().all(|p| (p - 0.5).abs() < 1e-15));
}

#[test]
fn hard_decisions_map_levels_to_symbols() {
    let system = SystemConfig {
        n_t: 1,
        n_r: 1,
        subcarriers: 2,
        oversampling: 2,
        order: 16,
    };
    let c = Constellation::qam16();
    // positions: re(k=0), re(k=1), im(k=0), im(k=1); winners 3, 0, 1, 2
    let winners = [3, 0, 1, 2];
    let mut probs = vec![0.0; 4 * 4];
    for (pos, &q) in winners.iter().enumerate() {
        probs[q * 4 + pos] = 1.0;
    }
    let d = hard_decisions(&probs, 1, &system).unwrap();
    assert_eq!(d, vec![vec![c.index_from_levels(3, 1), c.index_from_levels(0, 2)]]);
}

#[test]
fn l1_oracles() {
    let mut t = Tape::new();
    let logits = t.constant(vec![0.0; 2 * 2 * 8], &[1, 2, 2, 8]).unwrap();
    let targets: Vec<usize> = (0..16).map(|i| i % 2).collect();
    let l = loss_l1(&mut t, logits, &targets).unwrap();
    assert!((t.item(l) - 16.0 * 2f64.ln()).abs() < 1e-12);

    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let (nb, nc, sp) = (3, 4, 10);
    let z: Vec<f64> = (0..nb * nc * sp).map(|_| rng.random_range(-3.0..3.0)).collect();
    let targets: Vec<usize> = (0..nb * sp).map(|_| rng.random_range(0..nc)).collect();
    let mut t = Tape::new();
    let lv = t.constant(z.clone(), &[nb, nc, sp]).unwrap();
    let l = loss_l1(&mut t, lv, &targets).unwrap();
    let mut naive = 0.0;
    for b in 0..nb {
        for s in 0..sp {
            let denom: f64 = (0..nc).map(|c| z[(b * nc + c) * sp + s].exp()).sum();
            naive -= (z[(b * nc + targets[b * sp + s]) * sp + s].exp() / denom).ln();
        }
    }
    assert!((t.item(l) - naive / nb as f64).abs() < 1e-12);

    let mut t = Tape::new();
    let confident = t.constant(vec![50.0, -50.0, -50.0, 50.0], &[1, 2, 2]).unwrap();
    let l = loss_l1(&mut t, confident, &[0, 1]).unwrap();
    assert!(t.item(l) < 1e-40);
}

#[test]
fn papr_loss_examples() {
    let mut t = Tape::new();
    let flat: Vec<f64> = (0..16).map(|i| if i % 8 < 4 { 0.6 } else { 0.8 }).collect();
    let a = t.constant(flat.clone(), &[1, 2, 8]).unwrap();
    let (l2a, l2b) = loss_papr(&mut t, a, a).unwrap();
    assert!((t.item(l2a) - 1.0).abs() < 1e-12 && (t.item(l2b) - 1.0).abs() < 1e-12);

    let two = [2f64.sqrt(), 2f64.sqrt(), 0.0, 0.0, 0.0, 0.0, 0.0, 0.0];
    let four = [2.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0];
    let b = t.constant(two.iter().chain(&four).copied().collect(), &[2, 1, 8]).unwrap();
    let (mean, _) = loss_papr(&mut t, b, b).unwrap();
    assert!((t.item(mean) - 3.0).abs() < 1e-12);

    // A band-limited encoder output passes the filter unchanged.
    let mut rng = ChaCha8Rng::seed_from_u64(10);
    let c = Constellation::qpsk();
    let (grid, _) = OfdmGrid::random(&mut rng, &c, 2, 8).unwrap();
    let frame = idft_oversampled(&grid, 4).unwrap();
    let x = t.constant(from_complex(frame.samples().as_slice(), 32), &[1, 2, 64]).unwrap();
    let f = wavelab_cae::signal::bandpass(&mut t, x, 8).unwrap();
    let (l2a, l2b) = loss_papr(&mut t, x, f).unwrap();
    assert!((t.item(l2a) - t.item(l2b)).abs() < 1e-9);
}

#[test]
fn acpr_loss_sign_convention() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let c = Constellation::qpsk();
    let (grid, _) = OfdmGrid::random(&mut rng, &c, 2, 16).unwrap();
    let frame = idft_oversampled(&grid, 4).unwrap();
    let mut t = Tape::new();
    let clean = t.constant(from_complex(frame.samples().as_slice(), 64), &[1, 2, 128]).unwrap();
    let l3 = loss_acpr(&mut t, clean, 4, -45.0).unwrap();
    assert!(t.item(l3) <= -15.0, "{}", t.item(l3));
    let noise: Vec<f64> = (0..256).map(|_| rng.random_range(-1.0..1.0)).collect();
    let white = t.constant(noise, &[1, 2, 128]).unwrap();
    let l3 = loss_acpr(&mut t, white, 4, -45.0).unwrap();
    assert!(t.item(l3) > 0.0);
    let shifted = loss_acpr(&mut t, white, 4, 0.0).unwrap();
    let req = t.item(shifted);
    let at_req = loss_acpr(&mut t, white, 4, req).unwrap();
    assert!(t.item(at_req).abs() < 1e-12);
}

fn total(l: [f64; 4], state: &LagrangianState) -> (f64, [f64; 4]) {
    let mut t = Tape::new();
    let v: Vec<_> = l.iter().map(|&x| t.param(vec![x], &[1]).unwrap()).collect();
    let terms = LossTerms {
        l1: v[0],
        l2a: v[1],
        l2b: v[2],
        l3: v[3],
    };
    let out = total_loss(&mut t, terms, state).unwrap();
    let g = t.backward(out).unwrap();
    let grads = [0, 1, 2, 3].map(|i| g.wrt(&t, v[i])[0]);
    (t.item(out), grads)
}

#[test]
fn total_loss_examples() {
    let table = LagrangianState::new([0.015, 0.001, 0.005], [0.0015, 0.00001, 0.001]).unwrap();
    let expected = 1.0 + 0.015 + 0.00075 + 0.001 + 0.000005 + (0.006f64.powi(2) - 0.005f64.powi(2)) / 0.002;
    let (value, _) = total([1.0; 4], &table);
    assert!((value - expected).abs() < 1e-12);
    assert!((table.objective(1.0, 1.0, 1.0, 1.0) - expected).abs() < 1e-12);
    assert!((expected - 1.022255).abs() < 1e-12);

    let only_rho3 = LagrangianState::new([0.0; 3], [0.0, 0.0, 0.01]).unwrap();
    let (value, grads) = total([2.5, 7.0, 9.0, -3.0], &only_rho3);
    assert!((value - 2.5).abs() < 1e-12);
    assert_eq!(grads, [1.0, 0.0, 0.0, 0.0]);

    let clamp = LagrangianState::new([0.0, 0.0, 0.005], [0.0, 0.0, 0.001]).unwrap();
    let (value, grads) = total([0.0, 0.0, 0.0, -10.0], &clamp);
    assert!((value + 0.005f64.powi(2) / 0.002).abs() < 1e-15);
    assert_eq!(grads[3], 0.0);

    assert!(LagrangianState::new([0.0; 3], [0.1, 0.1, 0.0]).is_err());
    assert!(LagrangianState::new([0.0; 3], [0.1, 0.1, -1.0]).is_err());
}

#[test]
fn multiplier_updates_follow_dual_ascent() {
    let s = LagrangianState::new([0.015, 0.001, 0.005], [0.0015, 0.00001, 0.001]).unwrap();
    let same = s.update_multipliers(0.0, 0.0, 0.0);
    assert_eq!((same.lambda_2a, same.lambda_2b, same.lambda_3), (s.lambda_2a, s.lambda_2b, s.lambda_3));
    assert_eq!(same.updates, 1);
    let clamped = s.update_multipliers(0.0, 0.0, -10.0);
    assert_eq!(clamped.lambda_3, 0.0);
    let up = s.update_multipliers(2.0, 3.0, 1.0);
    assert!((up.lambda_2a - 0.018).abs() < 1e-15);
    assert!((up.lambda_2b - 0.00103).abs() < 1e-15);
    assert!((up.lambda_3 - 0.006).abs() < 1e-15);
}

#[test]
fn lambda_3_stays_nonnegative_under_fuzz() {
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    let mut s = LagrangianState::new([0.015, 0.001, 0.005], [0.0015, 0.00001, 0.001]).unwrap();
    for _ in 0..10_000 {
        let l3 = rng.random_range(-100.0..100.0);
        s = s.update_multipliers(rng.random_range(1.0..20.0), rng.random_range(1.0..20.0), l3);
        assert!(s.lambda_3 >= 0.0);
    }
    assert_eq!(s.updates, 10_000);
}

fn loss_gradients(model: &Cae, batch: &wavelab_cae::Batch, state: Option<&LagrangianState>) -> Vec<Vec<f64>> {
    let mut tape = Tape::new();
    let p = model.params().bind(&mut tape);
    let out = model
        .link(&mut tape, &p, batch, &chain(2), Mode::Train, None, &mut StatsSink::new())
        .unwrap();
    let l1 = loss_l1(&mut tape, out.logits, &batch.targets).unwrap();
    let loss = match state {
        Some(s) => {
            let (l2a, l2b) = loss_papr(&mut tape, out.encoded, out.filtered).unwrap();
            // A requirement far above any reachable ACPR keeps L3 negative.
            let l3 = loss_acpr(&mut tape, out.amplified, 2, 100.0).unwrap();
            assert!(tape.item(l3) < 0.0);
            total_loss(&mut tape, LossTerms { l1, l2a, l2b, l3 }, s).unwrap()
        }
        None => l1,
    };
    let g = tape.backward(loss).unwrap();
    model.params().collect_grads(&tape, &p, &g)
}

#[test]
fn inactive_constraints_reduce_to_reconstruction_gradient() {
    let system = small_system();
    let model = Cae::new(system, small_model(), 13).unwrap();
    let batch = BatchGenerator::new(system, multipath(), 1.0, 20.0, 14).unwrap().next_batch(3).unwrap();
    let state = LagrangianState::new([0.0; 3], [0.0, 0.0, 0.001]).unwrap();
    let a = loss_gradients(&model, &batch, Some(&state));
    let b = loss_gradients(&model, &batch, None);
    for (ga, gb) in a.iter().flatten().zip(b.iter().flatten()) {
        assert!((ga - gb).abs() <= 1e-12 * gb.abs().max(1.0));
    }
}

#[test]
fn end_to_end_gradient_matches_finite_differences() {
    let system = small_system();
    let model = Cae::new(system, small_model(), 15).unwrap();
    let batch = BatchGenerator::new(system, multipath(), 1.0, 20.0, 16).unwrap().next_batch(3).unwrap();
    let state = LagrangianState::new([0.015, 0.001, 0.005], [0.0015, 0.00001, 0.001]).unwrap();
    let chain = chain(2);
    let obj = LinkObjective {
        batch: &batch,
        chain: &chain,
        state: &state,
        acpr_req_db: -45.0,
    };
    let entries = probe_entries(&model, |name| name.starts_with("encoder") || name.starts_with("decoder0"));
    let report = link_gradcheck(&model, &obj, &entries, 1e-6).unwrap();
    assert!(report.max_error < 1e-4, "{report:?}");
    assert!(report.checked >= 20);
}

#[test]
fn checkpoint_round_trip_preserves_behaviour() {
    let system = small_system();
    let model = Cae::new(system, small_model(), 17).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("cae.bin");
    model.save(&path).unwrap();
    let loaded = Cae::load(&path, system, small_model()).unwrap();
    assert_eq!(loaded.to_tensors(), model.to_tensors());
    let batch = BatchGenerator::new(system, multipath(), 1.0, 20.0, 18).unwrap().next_batch(2).unwrap();
    let (a, b) = (model.evaluate(&batch, &chain(2)).unwrap(), loaded.evaluate(&batch, &chain(2)).unwrap());
    assert_eq!(a.probabilities, b.probabilities);

    let other = ModelConfig {
        decoder_iterations: 3,
        ..small_model()
    };
    assert!(Cae::load(&path, system, other).is_err());
}
