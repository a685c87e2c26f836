//! Classical comparison methods: clipping and filtering, selected mapping
//! with worst-antenna selection, and exhaustive ML / zero-forcing detection.

use num_complex::Complex64;
use rand::{Rng, SeedableRng};

use crate::channel::ChannelRealization;
use crate::dsp::{idft_matrix, papr_mimo, CMat, OfdmGrid, Stage, TimeFrame};
use crate::qam::Constellation;
use crate::rf::bandpass_filter;
use crate::{Error, Result};

/// Largest exhaustive ML search per subcarrier.
pub const MLE_MAX_CANDIDATES: u64 = 1 << 20;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ClipConfig {
    /// Clipping level relative to the RMS amplitude, in dB.
    pub clip_ratio_db: f64,
}

impl Default for ClipConfig {
    fn default() -> Self {
        Self { clip_ratio_db: 4.08 }
    }
}

/// Hard envelope limiter at `A_clip = sqrt(P_avg)·10^(CR/20)`, where `P_avg`
/// is each antenna's own mean power. Phase is preserved.
pub fn clip(frame: &TimeFrame, cfg: ClipConfig) -> Result<TimeFrame> {
    if !cfg.clip_ratio_db.is_finite() {
        return Err(Error::Parameter("clip ratio must be finite".into()));
    }
    if frame.mean_power() == 0.0 {
        return Err(Error::ZeroPower);
    }
    let ratio = 10f64.powf(cfg.clip_ratio_db / 20.0);
    let mut samples = frame.samples().clone();
    for a in 0..samples.rows() {
        let limit = frame.antenna_power(a).sqrt() * ratio;
        for z in samples.row_mut(a) {
            let m = z.norm();
            if m > limit {
                *z *= limit / m;
            }
        }
    }
    frame.advance(samples, Stage::Encoded)
}

/// One clipping pass followed by the ideal band-pass filter.
pub fn clip_and_filter(frame: &TimeFrame, cfg: ClipConfig) -> Result<TimeFrame> {
    bandpass_filter(&clip(frame, cfg)?)
}

/// Phase sequences over `{±1, ±j}`; candidate 0 is all ones.
#[derive(Debug, Clone, PartialEq)]
pub struct SlmCodebook {
    phases: Vec<Vec<Complex64>>,
    seed: u64,
}

impl SlmCodebook {
    pub fn new(candidates: usize, n_sc: usize, seed: u64) -> Result<Self> {
        if candidates == 0 || n_sc == 0 {
            return Err(Error::Parameter("SLM needs at least one candidate and subcarrier".into()));
        }
        const ALPHABET: [Complex64; 4] = [
            Complex64::new(1.0, 0.0),
            Complex64::new(-1.0, 0.0),
            Complex64::new(0.0, 1.0),
            Complex64::new(0.0, -1.0),
        ];
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let mut phases = vec![vec![ALPHABET[0]; n_sc]];
        for _ in 1..candidates {
            phases.push((0..n_sc).map(|_| ALPHABET[rng.random_range(0..4)]).collect());
        }
        Ok(Self { phases, seed })
    }

    pub fn candidates(&self) -> usize {
        self.phases.len()
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn phases(&self, u: usize) -> &[Complex64] {
        &self.phases[u]
    }

    /// Undoes candidate `u`'s rotation on a received `N × K` grid.
    pub fn derotate(&self, u: usize, grid: &mut CMat) {
        for a in 0..grid.rows() {
            for (z, p) in grid.row_mut(a).iter_mut().zip(&self.phases[u]) {
                *z *= p.conj();
            }
        }
    }
}

/// Selected mapping: rotate all antennas with each candidate sequence and
/// keep the candidate with the smallest worst-antenna PAPR. Ties keep the
/// lower index. The index is side information assumed known at the receiver.
pub fn slm_encode(grid: &OfdmGrid, book: &SlmCodebook, oversampling: usize) -> Result<(TimeFrame, usize)> {
    if book.phases.first().map(Vec::len) != Some(grid.subcarriers()) {
        return Err(Error::Dimension("codebook length differs from K".into()));
    }
    let mut best: Option<(f64, usize, TimeFrame)> = None;
    for u in 0..book.candidates() {
        let frame = idft_matrix(&grid.rotated(book.phases(u)), oversampling)?;
        let p = papr_mimo(&frame)?;
        if best.as_ref().is_none_or(|(bp, _, _)| p < *bp) {
            best = Some((p, u, frame));
        }
    }
    let (_, u, frame) = best.expect("at least one candidate");
    Ok((frame.retagged(Stage::Encoded), u))
}

/// Exhaustive ML detection on every subcarrier. `y` is `N_r × K`; the
/// result holds symbol indices in `N_t × K` row-major order.
pub fn mle_detect(chan: &ChannelRealization, y: &CMat, constellation: &Constellation) -> Result<Vec<usize>> {
    let (n_t, n_sc) = (chan.n_t(), chan.subcarriers());
    check_rx(chan, y)?;
    let candidates = (constellation.order() as u64).checked_pow(n_t as u32).unwrap_or(u64::MAX);
    if candidates > MLE_MAX_CANDIDATES {
        return Err(Error::SearchTooLarge(candidates));
    }
    let points = constellation.points();
    let mut out = vec![0; n_t * n_sc];
    for (k, h) in chan.h.iter().enumerate() {
        let best = mle_vector(h, &y.column(k), &points);
        for (a, &i) in best.iter().enumerate() {
            out[a * n_sc + k] = i;
        }
    }
    Ok(out)
}

/// `argmin_x ‖y - Hx‖²` over `points^{N_t}`, first minimum in lexicographic
/// candidate order (antenna 0 most significant).
pub fn mle_vector(h: &CMat, y: &[Complex64], points: &[Complex64]) -> Vec<usize> {
    let (n_r, n_t) = (h.rows(), h.cols());
    // contrib[j][m] = H[:, j] * points[m]
    let contrib: Vec<Vec<Vec<Complex64>>> = (0..n_t)
        .map(|j| {
            points
                .iter()
                .map(|s| (0..n_r).map(|r| h[(r, j)] * s).collect())
                .collect()
        })
        .collect();
    let mut search = MlSearch {
        contrib: &contrib,
        best: f64::INFINITY,
        best_idx: vec![0; n_t],
        current: vec![0; n_t],
    };
    search.descend(0, y.to_vec());
    search.best_idx
}

struct MlSearch<'a> {
    contrib: &'a [Vec<Vec<Complex64>>],
    best: f64,
    best_idx: Vec<usize>,
    current: Vec<usize>,
}

impl MlSearch<'_> {
    fn descend(&mut self, level: usize, residual: Vec<Complex64>) {
        if level == self.contrib.len() {
            let d: f64 = residual.iter().map(|z| z.norm_sqr()).sum();
            if d < self.best {
                self.best = d;
                self.best_idx.copy_from_slice(&self.current);
            }
            return;
        }
        for m in 0..self.contrib[level].len() {
            self.current[level] = m;
            let next = residual
                .iter()
                .zip(&self.contrib[level][m])
                .map(|(r, c)| r - c)
                .collect();
            self.descend(level + 1, next);
        }
    }
}

/// Zero-forcing: `(H^H H)^{-1} H^H y` then per-entry slicing.
pub fn zf_detect(chan: &ChannelRealization, y: &CMat, constellation: &Constellation) -> Result<Vec<usize>> {
    let eq = zf_equalize(chan, y)?;
    Ok(eq.as_slice().iter().map(|z| constellation.nearest(*z)).collect())
}

/// Zero-forcing estimate `N_t × K` before slicing.
pub fn zf_equalize(chan: &ChannelRealization, y: &CMat) -> Result<CMat> {
    check_rx(chan, y)?;
    let mut out = CMat::zeros(chan.n_t(), chan.subcarriers());
    for (k, h) in chan.h.iter().enumerate() {
        let ha = h.adjoint();
        let gram = ha.matmul(h)?;
        let inv = gram.inverse().ok_or(Error::Singular(k))?;
        let x = inv.matmul(&ha)?.matvec(&y.column(k))?;
        out.set_column(k, &x);
    }
    Ok(out)
}

fn check_rx(chan: &ChannelRealization, y: &CMat) -> Result<()> {
    if y.rows() != chan.n_r() || y.cols() != chan.subcarriers() {
        return Err(Error::Dimension(format!(
            "received grid {}x{} does not match channel {}x{}",
            y.rows(),
            y.cols(),
            chan.n_r(),
            chan.subcarriers()
        )));
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::channel::{apply_channel_noiseless, draw_channel, ChannelProfile};
    use crate::dsp::{idft_oversampled, papr};
    use rand_chacha::ChaCha8Rng;

    fn grid(seed: u64, n_t: usize, k: usize, c: &Constellation) -> (OfdmGrid, Vec<usize>) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        OfdmGrid::random(&mut rng, c, n_t, k).unwrap()
    }

    #[test]
    fn clipping_leaves_low_papr_frames_alone() {
        let m = CMat::from_fn(2, 8, |_, n| Complex64::from_polar(1.0, n as f64));
        let f = TimeFrame::new(m, 1, Stage::Raw).unwrap();
        let out = clip(&f, ClipConfig::default()).unwrap();
        assert_eq!(out.samples(), f.samples());
    }

    #[test]
    fn clipping_hits_the_limit_exactly() {
        let (g, _) = grid(1, 2, 72, &Constellation::qpsk());
        let f = idft_oversampled(&g, 4).unwrap();
        let cfg = ClipConfig::default();
        let out = clip(&f, cfg).unwrap();
        for a in 0..2 {
            let limit = f.antenna_power(a).sqrt() * 10f64.powf(cfg.clip_ratio_db / 20.0);
            let peak = out.row(a).iter().map(|z| z.norm()).fold(0.0, f64::max);
            assert!((peak - limit).abs() < 1e-12);
            assert!(papr(out.row(a)).unwrap() <= papr(f.row(a)).unwrap());
        }
        let cf = clip_and_filter(&f, cfg).unwrap();
        assert_eq!(cf.stage(), Stage::Filtered);
    }

    #[test]
    fn slm_single_candidate_is_plain_ofdm() {
        let (g, _) = grid(2, 2, 16, &Constellation::qpsk());
        let book = SlmCodebook::new(1, 16, 9).unwrap();
        let (f, u) = slm_encode(&g, &book, 4).unwrap();
        assert_eq!(u, 0);
        assert_eq!(f.samples(), idft_oversampled(&g, 4).unwrap().samples());
    }

    #[test]
    fn slm_never_worse_than_identity() {
        let book = SlmCodebook::new(16, 32, 4).unwrap();
        for seed in 0..20 {
            let (g, _) = grid(seed, 2, 32, &Constellation::qpsk());
            let (f, u) = slm_encode(&g, &book, 4).unwrap();
            let base = papr_mimo(&idft_oversampled(&g, 4).unwrap()).unwrap();
            assert!(papr_mimo(&f).unwrap() <= base);
            let mut back = crate::dsp::dft_unpad(&f, 32).unwrap();
            book.derotate(u, &mut back);
            for (a, b) in back.as_slice().iter().zip(g.symbols().as_slice()) {
                assert!((a - b).norm() < 1e-12);
            }
        }
        let book = SlmCodebook::new(8, 8, 1).unwrap();
        assert!((0..8).all(|u| book.phases(u).iter().all(|p| (p.norm() - 1.0).abs() == 0.0)));
        assert!(book.phases(0).iter().all(|p| *p == Complex64::new(1.0, 0.0)));
    }

    #[test]
    fn mle_noiseless_identity_recovers() {
        let q = Constellation::qam16();
        let (g, idx) = grid(3, 2, 8, &q);
        let ch = ChannelRealization::flat(CMat::identity(2), 8, 0.0);
        let y = apply_channel_noiseless(g.symbols(), &ch).unwrap();
        assert_eq!(mle_detect(&ch, &y, &q).unwrap(), idx);
        assert_eq!(zf_detect(&ch, &y, &q).unwrap(), idx);
    }

    #[test]
    fn mle_single_antenna_is_scaled_nearest_neighbour() {
        let q = Constellation::qam16();
        let gain = Complex64::new(0.3, -1.1);
        let h = CMat::from_vec(1, 1, vec![gain]).unwrap();
        let ch = ChannelRealization::flat(h, 1, 0.0);
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        for _ in 0..200 {
            let z = Complex64::new(rng.random_range(-2.0..2.0), rng.random_range(-2.0..2.0));
            let y = CMat::from_vec(1, 1, vec![z]).unwrap();
            let got = mle_detect(&ch, &y, &q).unwrap()[0];
            assert_eq!(got, q.nearest(z / gain));
        }
    }

    #[test]
    fn mle_guard() {
        let q = Constellation::qam16();
        let ch = ChannelRealization::flat(CMat::identity(6), 1, 0.0);
        let y = CMat::zeros(6, 1);
        assert_eq!(mle_detect(&ch, &y, &q).unwrap_err(), Error::SearchTooLarge(1 << 24));
    }

    #[test]
    fn mle_noiseless_random_channels() {
        let q = Constellation::qpsk();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for seed in 0..20 {
            let ch = draw_channel(&mut rng, 16, 2, 2, ChannelProfile::multipath_default()).unwrap();
            let (g, idx) = grid(seed, 2, 16, &q);
            let y = apply_channel_noiseless(g.symbols(), &ch).unwrap();
            assert_eq!(mle_detect(&ch, &y, &q).unwrap(), idx);
        }
    }

    #[test]
    fn zf_diagonal_equalization() {
        let h = CMat::from_vec(2, 2, vec![
            Complex64::new(2.0, 0.0), Complex64::new(0.0, 0.0),
            Complex64::new(0.0, 0.0), Complex64::new(0.0, 0.5),
        ]).unwrap();
        let ch = ChannelRealization::flat(h, 1, 0.0);
        let y = CMat::from_vec(2, 1, vec![Complex64::new(1.0, 1.0), Complex64::new(1.0, 0.0)]).unwrap();
        let x = zf_equalize(&ch, &y).unwrap();
        assert!((x[(0, 0)] - Complex64::new(0.5, 0.5)).norm() < 1e-12);
        assert!((x[(1, 0)] - Complex64::new(0.0, -2.0)).norm() < 1e-12);
        let sing = ChannelRealization::flat(CMat::zeros(2, 2), 1, 0.0);
        assert_eq!(zf_equalize(&sing, &y).unwrap_err(), Error::Singular(0));
    }
}
