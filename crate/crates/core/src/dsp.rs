//! Complex-signal primitives shared by every other module.
//!
//! Frequency layout: the `K` data subcarriers of an OFDM symbol sit in the
//! centre of an `L·K`-point spectrum. Data index `k` occupies FFT bin
//! `(k - K/2) mod L·K`, so subcarrier frequencies run over `[-K/2, K/2)` and
//! the `(L-1)·K` outer bins are the out-of-band padding. Compared with the
//! one-sided sum `Σ_k X(k) e^{j2πkn/(LK)}` this is a unit-modulus frequency
//! shift of the time signal, which leaves amplitude, power and PAPR intact.

use std::cell::RefCell;
use std::sync::Arc;

use num_complex::Complex64;
use rand::Rng;
use rustfft::{Fft, FftPlanner};

use crate::qam::Constellation;
use crate::{Error, Result};

thread_local! {
    static PLANNER: RefCell<FftPlanner<f64>> = RefCell::new(FftPlanner::new());
}

fn plan(len: usize, inverse: bool) -> Arc<dyn Fft<f64>> {
    PLANNER.with(|p| {
        let mut p = p.borrow_mut();
        if inverse {
            p.plan_fft_inverse(len)
        } else {
            p.plan_fft_forward(len)
        }
    })
}

/// Unnormalized forward FFT, `X[b] = Σ_n x[n] e^{-j2πbn/N}`.
pub fn fft_forward(buf: &mut [Complex64]) {
    if !buf.is_empty() {
        plan(buf.len(), false).process(buf);
    }
}

/// Unnormalized inverse FFT, `x[n] = Σ_b X[b] e^{+j2πbn/N}`.
pub fn fft_inverse(buf: &mut [Complex64]) {
    if !buf.is_empty() {
        plan(buf.len(), true).process(buf);
    }
}

/// FFT bin holding data subcarrier `k` of `n_sc` in an `fft_len` spectrum.
pub fn data_bin(k: usize, n_sc: usize, fft_len: usize) -> usize {
    (k + fft_len - n_sc / 2) % fft_len
}

/// Membership mask of the in-band bins of an `fft_len` spectrum.
pub fn in_band_mask(n_sc: usize, fft_len: usize) -> Vec<bool> {
    let mut mask = vec![false; fft_len];
    for k in 0..n_sc {
        mask[data_bin(k, n_sc, fft_len)] = true;
    }
    mask
}

/// Dense row-major complex matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct CMat {
    rows: usize,
    cols: usize,
    data: Vec<Complex64>,
}

impl CMat {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![Complex64::new(0.0, 0.0); rows * cols],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m[(i, i)] = Complex64::new(1.0, 0.0);
        }
        m
    }

    pub fn from_vec(rows: usize, cols: usize, data: Vec<Complex64>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::Dimension(format!(
                "{} entries for a {rows}x{cols} matrix",
                data.len()
            )));
        }
        Ok(Self { rows, cols, data })
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> Complex64) -> Self {
        let mut data = Vec::with_capacity(rows * cols);
        for r in 0..rows {
            for c in 0..cols {
                data.push(f(r, c));
            }
        }
        Self { rows, cols, data }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn as_slice(&self) -> &[Complex64] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [Complex64] {
        &mut self.data
    }

    pub fn into_vec(self) -> Vec<Complex64> {
        self.data
    }

    pub fn row(&self, r: usize) -> &[Complex64] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn row_mut(&mut self, r: usize) -> &mut [Complex64] {
        &mut self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn column(&self, c: usize) -> Vec<Complex64> {
        (0..self.rows).map(|r| self[(r, c)]).collect()
    }

    pub fn set_column(&mut self, c: usize, values: &[Complex64]) {
        for (r, v) in values.iter().enumerate() {
            self[(r, c)] = *v;
        }
    }

    /// Conjugate transpose.
    pub fn adjoint(&self) -> Self {
        Self::from_fn(self.cols, self.rows, |r, c| self[(c, r)].conj())
    }

    pub fn matmul(&self, rhs: &CMat) -> Result<CMat> {
        if self.cols != rhs.rows {
            return Err(Error::Dimension(format!(
                "cannot multiply {}x{} by {}x{}",
                self.rows, self.cols, rhs.rows, rhs.cols
            )));
        }
        let mut out = CMat::zeros(self.rows, rhs.cols);
        for r in 0..self.rows {
            for k in 0..self.cols {
                let a = self[(r, k)];
                for c in 0..rhs.cols {
                    out[(r, c)] += a * rhs[(k, c)];
                }
            }
        }
        Ok(out)
    }

    pub fn matvec(&self, x: &[Complex64]) -> Result<Vec<Complex64>> {
        if x.len() != self.cols {
            return Err(Error::Dimension(format!(
                "vector of length {} for a {}x{} matrix",
                x.len(),
                self.rows,
                self.cols
            )));
        }
        Ok((0..self.rows)
            .map(|r| self.row(r).iter().zip(x).map(|(a, b)| a * b).sum())
            .collect())
    }

    pub fn frobenius_sqr(&self) -> f64 {
        self.data.iter().map(|z| z.norm_sqr()).sum()
    }

    pub fn scale(&self, c: Complex64) -> Self {
        Self {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(|z| z * c).collect(),
        }
    }

    /// Inverse of a square matrix by Gauss-Jordan elimination with partial
    /// pivoting. Returns `None` when a pivot falls below `1e-12` relative to
    /// the largest entry.
    pub fn inverse(&self) -> Option<CMat> {
        if self.rows != self.cols {
            return None;
        }
        let n = self.rows;
        let mut a = self.clone();
        let mut inv = CMat::identity(n);
        let scale = self.data.iter().map(|z| z.norm()).fold(0.0, f64::max);
        if scale == 0.0 {
            return None;
        }
        for col in 0..n {
            let pivot = (col..n)
                .max_by(|&i, &j| a[(i, col)].norm().total_cmp(&a[(j, col)].norm()))
                .expect("non-empty range");
            if a[(pivot, col)].norm() <= 1e-12 * scale {
                return None;
            }
            if pivot != col {
                for c in 0..n {
                    a.data.swap(pivot * n + c, col * n + c);
                    inv.data.swap(pivot * n + c, col * n + c);
                }
            }
            let p = a[(col, col)].inv();
            for c in 0..n {
                a[(col, c)] *= p;
                inv[(col, c)] *= p;
            }
            for r in 0..n {
                if r == col {
                    continue;
                }
                let f = a[(r, col)];
                if f == Complex64::new(0.0, 0.0) {
                    continue;
                }
                for c in 0..n {
                    let (ac, ic) = (a[(col, c)], inv[(col, c)]);
                    a[(r, c)] -= f * ac;
                    inv[(r, c)] -= f * ic;
                }
            }
        }
        Some(inv)
    }
}

impl std::ops::Index<(usize, usize)> for CMat {
    type Output = Complex64;
    fn index(&self, (r, c): (usize, usize)) -> &Complex64 {
        &self.data[r * self.cols + c]
    }
}

impl std::ops::IndexMut<(usize, usize)> for CMat {
    fn index_mut(&mut self, (r, c): (usize, usize)) -> &mut Complex64 {
        &mut self.data[r * self.cols + c]
    }
}

/// Frequency-domain OFDM symbol: `N_t` antennas by `K` subcarriers of
/// unit-energy QAM points.
#[derive(Debug, Clone, PartialEq)]
pub struct OfdmGrid {
    symbols: CMat,
    constellation_order: usize,
}

impl OfdmGrid {
    /// Wraps a symbol matrix, checking every entry against the alphabet.
    pub fn new(symbols: CMat, constellation: &Constellation) -> Result<Self> {
        if symbols.rows() == 0 || symbols.cols() == 0 {
            return Err(Error::Dimension("empty OFDM grid".into()));
        }
        if let Some(bad) = symbols
            .as_slice()
            .iter()
            .find(|z| constellation.index_of(**z, 1e-9).is_none())
        {
            return Err(Error::Parameter(format!(
                "{bad} is not a {}-QAM point",
                constellation.order()
            )));
        }
        Ok(Self {
            symbols,
            constellation_order: constellation.order(),
        })
    }

    /// Builds a grid from row-major symbol indices.
    pub fn from_indices(
        constellation: &Constellation,
        n_t: usize,
        n_sc: usize,
        indices: &[usize],
    ) -> Result<Self> {
        if n_t == 0 || n_sc == 0 || indices.len() != n_t * n_sc {
            return Err(Error::Dimension(format!(
                "{} indices for a {n_t}x{n_sc} grid",
                indices.len()
            )));
        }
        let data = indices.iter().map(|&i| constellation.symbol(i)).collect();
        Ok(Self {
            symbols: CMat::from_vec(n_t, n_sc, data)?,
            constellation_order: constellation.order(),
        })
    }

    /// Draws iid uniform symbol indices and returns them with the grid.
    pub fn random<R: Rng + ?Sized>(
        rng: &mut R,
        constellation: &Constellation,
        n_t: usize,
        n_sc: usize,
    ) -> Result<(Self, Vec<usize>)> {
        let indices: Vec<usize> = (0..n_t * n_sc)
            .map(|_| rng.random_range(0..constellation.order()))
            .collect();
        let grid = Self::from_indices(constellation, n_t, n_sc, &indices)?;
        Ok((grid, indices))
    }

    pub fn symbols(&self) -> &CMat {
        &self.symbols
    }

    pub fn n_t(&self) -> usize {
        self.symbols.rows()
    }

    pub fn subcarriers(&self) -> usize {
        self.symbols.cols()
    }

    pub fn constellation_order(&self) -> usize {
        self.constellation_order
    }

    /// Multiplies every antenna's subcarrier `k` by `phases[k]`. The result
    /// is no longer an alphabet grid in general, so a raw matrix is returned.
    pub fn rotated(&self, phases: &[Complex64]) -> CMat {
        let mut out = self.symbols.clone();
        for a in 0..out.rows() {
            for (z, p) in out.row_mut(a).iter_mut().zip(phases) {
                *z *= p;
            }
        }
        out
    }
}

/// Position of a time-domain frame in the transmit chain.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Stage {
    Raw,
    Encoded,
    Filtered,
    BackedOff,
    Amplified,
}

impl Stage {
    /// Stages only move forward; skipping ahead is allowed.
    pub fn can_advance_to(self, next: Stage) -> bool {
        next > self
    }
}

/// Time-domain MIMO signal, `N_t` rows of `L·K` samples.
#[derive(Debug, Clone, PartialEq)]
pub struct TimeFrame {
    samples: CMat,
    oversampling: usize,
    stage: Stage,
}

impl TimeFrame {
    pub fn new(samples: CMat, oversampling: usize, stage: Stage) -> Result<Self> {
        if oversampling == 0 {
            return Err(Error::Oversampling(0));
        }
        if samples.rows() == 0 || samples.cols() == 0 {
            return Err(Error::Dimension("empty time frame".into()));
        }
        if samples.cols() % oversampling != 0 {
            return Err(Error::Dimension(format!(
                "{} samples per antenna is not a multiple of L={oversampling}",
                samples.cols()
            )));
        }
        Ok(Self {
            samples,
            oversampling,
            stage,
        })
    }

    pub fn samples(&self) -> &CMat {
        &self.samples
    }

    pub fn into_samples(self) -> CMat {
        self.samples
    }

    pub fn n_t(&self) -> usize {
        self.samples.rows()
    }

    /// Samples per antenna (`L·K`).
    pub fn len(&self) -> usize {
        self.samples.cols()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.cols() == 0
    }

    pub fn oversampling(&self) -> usize {
        self.oversampling
    }

    pub fn subcarriers(&self) -> usize {
        self.samples.cols() / self.oversampling
    }

    pub fn stage(&self) -> Stage {
        self.stage
    }

    pub fn row(&self, antenna: usize) -> &[Complex64] {
        self.samples.row(antenna)
    }

    /// Replaces the samples, keeping shape, and advances the stage.
    pub fn advance(&self, samples: CMat, stage: Stage) -> Result<Self> {
        if !self.stage.can_advance_to(stage) {
            return Err(Error::Stage {
                from: self.stage,
                to: stage,
            });
        }
        if samples.rows() != self.samples.rows() || samples.cols() != self.samples.cols() {
            return Err(Error::Dimension("stage output changed the frame shape".into()));
        }
        Ok(Self {
            samples,
            oversampling: self.oversampling,
            stage,
        })
    }

    /// Same samples, different stage tag. Used where a stage is bypassed.
    pub fn retagged(mut self, stage: Stage) -> Self {
        self.stage = stage;
        self
    }

    /// Mean of `|x|²` over all antennas and samples.
    pub fn mean_power(&self) -> f64 {
        self.samples.frobenius_sqr() / self.samples.as_slice().len() as f64
    }

    pub fn antenna_power(&self, antenna: usize) -> f64 {
        mean_power(self.samples.row(antenna))
    }

    /// Multiplies every sample by a real factor, keeping the stage.
    pub fn scaled(&self, factor: f64) -> Self {
        Self {
            samples: self.samples.scale(Complex64::new(factor, 0.0)),
            oversampling: self.oversampling,
            stage: self.stage,
        }
    }
}

pub fn mean_power(x: &[Complex64]) -> f64 {
    x.iter().map(|z| z.norm_sqr()).sum::<f64>() / x.len() as f64
}

/// Oversampled OFDM modulation of every antenna row:
/// `x[n] = K^{-1/2} Σ_k X(k) e^{j2π f_k n/(LK)}`, `n ∈ [0, L·K)`, with the
/// centred subcarrier layout described in the module docs.
pub fn idft_oversampled(grid: &OfdmGrid, oversampling: usize) -> Result<TimeFrame> {
    idft_matrix(grid.symbols(), oversampling)
}

/// [`idft_oversampled`] on an arbitrary complex spectrum matrix.
pub fn idft_matrix(spectrum: &CMat, oversampling: usize) -> Result<TimeFrame> {
    if oversampling == 0 {
        return Err(Error::Oversampling(0));
    }
    let (n_t, n_sc) = (spectrum.rows(), spectrum.cols());
    if n_t == 0 || n_sc == 0 {
        return Err(Error::Dimension("empty OFDM grid".into()));
    }
    let len = oversampling * n_sc;
    let norm = 1.0 / (n_sc as f64).sqrt();
    let mut out = CMat::zeros(n_t, len);
    for a in 0..n_t {
        let row = out.row_mut(a);
        for (k, &x) in spectrum.row(a).iter().enumerate() {
            row[data_bin(k, n_sc, len)] = x;
        }
        fft_inverse(row);
        row.iter_mut().for_each(|z| *z *= norm);
    }
    TimeFrame::new(out, oversampling, Stage::Raw)
}

/// Forward DFT of each antenna row, keeping the `K` in-band bins. The scale
/// `sqrt(K)/(L·K)` inverts [`idft_oversampled`] exactly.
pub fn dft_unpad(frame: &TimeFrame, n_sc: usize) -> Result<CMat> {
    dft_unpad_rows(frame.samples(), n_sc)
}

pub fn dft_unpad_rows(samples: &CMat, n_sc: usize) -> Result<CMat> {
    let len = samples.cols();
    if n_sc == 0 || len % n_sc != 0 {
        return Err(Error::Dimension(format!(
            "frame length {len} is not a multiple of K={n_sc}"
        )));
    }
    let norm = (n_sc as f64).sqrt() / len as f64;
    let mut out = CMat::zeros(samples.rows(), n_sc);
    let mut buf = vec![Complex64::new(0.0, 0.0); len];
    for a in 0..samples.rows() {
        buf.copy_from_slice(samples.row(a));
        fft_forward(&mut buf);
        for (k, z) in out.row_mut(a).iter_mut().enumerate() {
            *z = buf[data_bin(k, n_sc, len)] * norm;
        }
    }
    Ok(out)
}

/// Peak-to-average power ratio (linear).
pub fn papr(samples: &[Complex64]) -> Result<f64> {
    if samples.is_empty() {
        return Err(Error::Dimension("empty signal".into()));
    }
    let (peak, total) = samples.iter().fold((0.0f64, 0.0f64), |(p, t), z| {
        let e = z.norm_sqr();
        (p.max(e), t + e)
    });
    if total == 0.0 {
        return Err(Error::ZeroPower);
    }
    Ok(peak * samples.len() as f64 / total)
}

/// Largest per-antenna PAPR of a frame (linear).
pub fn papr_mimo(frame: &TimeFrame) -> Result<f64> {
    (0..frame.n_t())
        .map(|a| papr(frame.row(a)))
        .try_fold(0.0f64, |m, p| Ok(m.max(p?)))
}

/// Rescales by one global real factor so the mean power over all antennas
/// and samples is 1.
pub fn normalize_power(frame: &TimeFrame) -> Result<TimeFrame> {
    scale_to_power(frame, 1.0)
}

pub(crate) fn scale_to_power(frame: &TimeFrame, target: f64) -> Result<TimeFrame> {
    let p = frame.mean_power();
    if p == 0.0 {
        return Err(Error::ZeroPower);
    }
    Ok(frame.scaled((target / p).sqrt()))
}

#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct PsdConfig {
    /// Welch segment length; `None` means one OFDM symbol (`L·K`).
    pub segment_len: Option<usize>,
}

/// Welch PSD estimate, bins in fftshifted order: bin `i` sits at normalized
/// frequency `(i - S/2)/S` cycles per sample for segment length `S`.
#[derive(Debug, Clone, PartialEq)]
pub struct PsdEstimate {
    pub bin_power: Vec<f64>,
    pub bin_spacing: f64,
}

impl PsdEstimate {
    pub fn total_power(&self) -> f64 {
        self.bin_power.iter().sum()
    }

    /// Normalized frequency of bin `i`.
    pub fn frequency(&self, i: usize) -> f64 {
        (i as f64 - (self.bin_power.len() / 2) as f64) * self.bin_spacing
    }

    /// Averages estimates of equal length.
    pub fn average(estimates: &[PsdEstimate]) -> Result<PsdEstimate> {
        let first = estimates
            .first()
            .ok_or_else(|| Error::Dimension("no PSD estimates to average".into()))?;
        let mut acc = vec![0.0; first.bin_power.len()];
        for e in estimates {
            if e.bin_power.len() != acc.len() {
                return Err(Error::Dimension("PSD length mismatch".into()));
            }
            acc.iter_mut().zip(&e.bin_power).for_each(|(a, b)| *a += b);
        }
        let n = estimates.len() as f64;
        acc.iter_mut().for_each(|a| *a /= n);
        Ok(PsdEstimate {
            bin_power: acc,
            bin_spacing: first.bin_spacing,
        })
    }
}

/// Welch-averaged periodogram with a rectangular window and no overlap,
/// averaged over segments and antennas. Normalized so the bins sum to the
/// mean power of the samples covered by whole segments.
pub fn estimate_psd(frame: &TimeFrame, cfg: PsdConfig) -> Result<PsdEstimate> {
    let seg = cfg.segment_len.unwrap_or(frame.len());
    if seg == 0 || seg > frame.len() {
        return Err(Error::Dimension(format!(
            "segment length {seg} exceeds frame length {}",
            frame.len()
        )));
    }
    let mut acc = vec![0.0; seg];
    let mut buf = vec![Complex64::new(0.0, 0.0); seg];
    let mut count = 0usize;
    for a in 0..frame.n_t() {
        for chunk in frame.row(a).chunks_exact(seg) {
            buf.copy_from_slice(chunk);
            fft_forward(&mut buf);
            for (i, z) in buf.iter().enumerate() {
                acc[(i + seg / 2) % seg] += z.norm_sqr();
            }
            count += 1;
        }
    }
    let norm = 1.0 / (count as f64 * (seg * seg) as f64);
    acc.iter_mut().for_each(|p| *p *= norm);
    Ok(PsdEstimate {
        bin_power: acc,
        bin_spacing: 1.0 / seg as f64,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, StandardNormal};

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    fn random_grid(seed: u64, n_t: usize, k: usize, c: &Constellation) -> OfdmGrid {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        OfdmGrid::random(&mut rng, c, n_t, k).unwrap().0
    }

    fn direct_sum(row: &[Complex64], l: usize) -> Vec<Complex64> {
        let k = row.len();
        let n = l * k;
        (0..n)
            .map(|t| {
                row.iter()
                    .enumerate()
                    .map(|(i, x)| {
                        let ph = 2.0 * std::f64::consts::PI * (i * t) as f64 / n as f64;
                        x * Complex64::from_polar(1.0, ph)
                    })
                    .sum::<Complex64>()
                    / (k as f64).sqrt()
            })
            .collect()
    }

    #[test]
    fn single_tone_is_constant_modulus() {
        let qpsk = Constellation::qpsk();
        let mut m = CMat::zeros(1, 4);
        m[(0, 0)] = c(1.0, 0.0);
        let f = idft_matrix(&m, 1).unwrap();
        assert!(f.row(0).iter().all(|z| (z.norm() - 0.5).abs() < 1e-12));
        assert_eq!(f.stage(), Stage::Raw);
        let _ = qpsk;
    }

    #[test]
    fn flat_spectrum_gives_impulse() {
        let m = CMat::from_fn(1, 72, |_, _| c(1.0, 0.0));
        let f = idft_matrix(&m, 1).unwrap();
        assert!((f.row(0)[0] - c(72f64.sqrt(), 0.0)).norm() < 1e-12);
        assert!(f.row(0)[1..].iter().all(|z| z.norm() < 1e-12));
        assert!((papr(f.row(0)).unwrap() - 72.0).abs() < 1e-9);
    }

    #[test]
    fn oversampled_matches_direct_sum_and_keeps_power() {
        let qpsk = Constellation::qpsk();
        let g = random_grid(7, 1, 72, &qpsk);
        let f4 = idft_oversampled(&g, 4).unwrap();
        let f1 = idft_oversampled(&g, 1).unwrap();
        assert_eq!(f4.len(), 288);
        let direct = direct_sum(g.symbols().row(0), 4);
        for (a, b) in f4.row(0).iter().zip(&direct) {
            assert!((a.norm() - b.norm()).abs() < 1e-12);
        }
        assert!((f4.mean_power() - mean_power(&direct)).abs() < 1e-9);
        assert!((f4.mean_power() - f1.mean_power()).abs() < 1e-9);
    }

    #[test]
    fn rejects_bad_oversampling_and_empty() {
        let m = CMat::zeros(1, 4);
        assert_eq!(idft_matrix(&m, 0).unwrap_err(), Error::Oversampling(0));
        assert!(idft_matrix(&CMat::zeros(0, 4), 1).is_err());
    }

    #[test]
    fn unpad_impulse_is_flat() {
        let mut m = CMat::zeros(1, 4);
        m[(0, 0)] = c(1.0, 0.0);
        let f = TimeFrame::new(m, 1, Stage::Raw).unwrap();
        let g = dft_unpad(&f, 4).unwrap();
        assert!(g.row(0).iter().all(|z| (z - g.row(0)[0]).norm() < 1e-12));
    }

    #[test]
    fn unpad_discards_out_of_band() {
        let (k, l) = (8, 4);
        let len = k * l;
        let mask = in_band_mask(k, len);
        let mut spec: Vec<Complex64> = (0..len)
            .map(|b| if mask[b] { c(0.0, 0.0) } else { c(b as f64, 1.0) })
            .collect();
        fft_inverse(&mut spec);
        let f = TimeFrame::new(CMat::from_vec(1, len, spec).unwrap(), l, Stage::Raw).unwrap();
        let g = dft_unpad(&f, k).unwrap();
        assert!(g.as_slice().iter().all(|z| z.norm() < 1e-12));
        assert!(dft_unpad(&f, 7).is_err());
    }

    #[test]
    fn papr_examples() {
        assert!((papr(&[c(1.0, 0.0), c(0.0, 0.0), c(0.0, 0.0), c(0.0, 0.0)]).unwrap() - 4.0).abs() < 1e-15);
        assert_eq!(papr(&[c(0.0, 1.0), c(1.0, 0.0)]).unwrap(), 1.0);
        assert_eq!(papr(&[c(0.0, 0.0); 3]).unwrap_err(), Error::ZeroPower);
    }

    #[test]
    fn papr_mimo_takes_worst_antenna() {
        // Row 0: [1, 1] -> 1; row 1: peaks give PAPR 2 and 5 cases.
        let m = CMat::from_vec(
            2,
            5,
            vec![
                c(1.0, 0.0), c(1.0, 0.0), c(1.0, 0.0), c(1.0, 0.0), c(1.0, 0.0),
                c(1.0, 0.0), c(0.0, 0.0), c(0.0, 0.0), c(0.0, 0.0), c(0.0, 0.0),
            ],
        )
        .unwrap();
        let f = TimeFrame::new(m, 1, Stage::Raw).unwrap();
        assert!((papr_mimo(&f).unwrap() - 5.0).abs() < 1e-12);

        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let m = CMat::from_fn(2, 288, |_, _| {
            c(StandardNormal.sample(&mut rng), StandardNormal.sample(&mut rng))
        });
        let f = TimeFrame::new(m, 4, Stage::Raw).unwrap();
        let brute = (0..2).map(|a| papr(f.row(a)).unwrap()).fold(0.0, f64::max);
        assert_eq!(papr_mimo(&f).unwrap(), brute);
    }

    #[test]
    fn normalize_power_examples() {
        let m = CMat::from_fn(2, 4, |r, s| c((r + s) as f64, 1.0) * 2.0);
        let f = TimeFrame::new(m, 1, Stage::Raw).unwrap();
        let quarter = f.scaled((4.0 / f.mean_power()).sqrt());
        let n = normalize_power(&quarter).unwrap();
        for (a, b) in n.samples().as_slice().iter().zip(quarter.samples().as_slice()) {
            assert!((a - b * 0.5).norm() < 1e-12);
        }
        let again = normalize_power(&n).unwrap();
        assert!((again.mean_power() - 1.0).abs() < 1e-12);
        assert!((papr_mimo(&again).unwrap() - papr_mimo(&f).unwrap()).abs() < 1e-12);
        let z = TimeFrame::new(CMat::zeros(1, 4), 1, Stage::Raw).unwrap();
        assert_eq!(normalize_power(&z).unwrap_err(), Error::ZeroPower);
    }

    #[test]
    fn psd_of_tone_concentrates_in_one_bin() {
        let len = 64;
        let b = 5;
        let m = CMat::from_fn(1, len, |_, n| {
            Complex64::from_polar(1.0, 2.0 * std::f64::consts::PI * (b * n) as f64 / len as f64)
        });
        let f = TimeFrame::new(m, 4, Stage::Raw).unwrap();
        let psd = estimate_psd(&f, PsdConfig::default()).unwrap();
        let shifted = (b + len / 2) % len;
        assert!(psd.bin_power[shifted] / psd.total_power() >= 0.999);
        assert!((psd.frequency(shifted) - b as f64 / len as f64).abs() < 1e-15);
    }

    #[test]
    fn psd_rejects_long_segment() {
        let f = TimeFrame::new(CMat::zeros(1, 8), 1, Stage::Raw).unwrap();
        assert!(estimate_psd(&f, PsdConfig { segment_len: Some(9) }).is_err());
    }

    #[test]
    fn psd_of_white_noise_is_flat() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let seg = 32;
        let m = CMat::from_fn(1, seg * 1000, |_, _| {
            c(StandardNormal.sample(&mut rng), StandardNormal.sample(&mut rng))
        });
        let f = TimeFrame::new(m, 1, Stage::Raw).unwrap();
        let psd = estimate_psd(&f, PsdConfig { segment_len: Some(seg) }).unwrap();
        let mean = psd.total_power() / seg as f64;
        assert!(psd.bin_power.iter().all(|p| (p / mean - 1.0).abs() < 0.15));
        assert!((psd.total_power() / f.mean_power() - 1.0).abs() < 1e-9);
    }

    #[test]
    fn matrix_inverse_roundtrip() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let m = CMat::from_fn(4, 4, |_, _| {
            c(StandardNormal.sample(&mut rng), StandardNormal.sample(&mut rng))
        });
        let prod = m.matmul(&m.inverse().unwrap()).unwrap();
        for r in 0..4 {
            for s in 0..4 {
                let want = if r == s { 1.0 } else { 0.0 };
                assert!((prod[(r, s)] - c(want, 0.0)).norm() < 1e-10);
            }
        }
        assert!(CMat::zeros(2, 2).inverse().is_none());
    }

    #[test]
    fn grid_rejects_off_alphabet() {
        let q = Constellation::qpsk();
        let m = CMat::from_vec(1, 1, vec![c(1.0, 0.0)]).unwrap();
        assert!(OfdmGrid::new(m, &q).is_err());
    }
}
