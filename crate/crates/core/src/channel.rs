//! Per-subcarrier MIMO channels, AWGN, and the real-valued reparametrization
//! used by the neural detector.
//!
//! Frequency-domain signals are `N × K` matrices (antennas by subcarriers),
//! the same orientation as [`OfdmGrid`](crate::dsp::OfdmGrid).

use num_complex::Complex64;
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::dsp::{fft_forward, CMat};
use crate::{Error, Result};

/// Tap-power decay giving the 13th tap 1% of the first tap's power.
pub fn default_tap_decay() -> f64 {
    0.01f64.powf(1.0 / 12.0)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ChannelProfile {
    /// `H[k] = I / sqrt(N_t)`, unit Frobenius norm.
    Awgn,
    /// `H[k] = I`; no normalization, every stream sees the noise directly.
    Identity,
    /// `count` iid Rayleigh taps whose powers decay by `decay` per tap.
    MultipathTaps { count: usize, decay: f64 },
}

impl ChannelProfile {
    pub fn multipath_default() -> Self {
        ChannelProfile::MultipathTaps {
            count: 13,
            decay: default_tap_decay(),
        }
    }
}

/// Block-constant channel of one frame.
#[derive(Debug, Clone, PartialEq)]
pub struct ChannelRealization {
    /// One `N_r × N_t` matrix per subcarrier.
    pub h: Vec<CMat>,
    /// Noise variance per complex entry.
    pub sigma_w2: f64,
    /// Normalized tap powers (a single unit tap for flat profiles).
    pub pdp: Vec<f64>,
}

impl ChannelRealization {
    pub fn flat(h: CMat, n_sc: usize, sigma_w2: f64) -> Self {
        Self {
            h: vec![h; n_sc],
            sigma_w2,
            pdp: vec![1.0],
        }
    }

    pub fn with_noise(mut self, sigma_w2: f64) -> Self {
        self.sigma_w2 = sigma_w2;
        self
    }

    pub fn subcarriers(&self) -> usize {
        self.h.len()
    }

    pub fn n_r(&self) -> usize {
        self.h.first().map_or(0, CMat::rows)
    }

    pub fn n_t(&self) -> usize {
        self.h.first().map_or(0, CMat::cols)
    }
}

/// Noise variance for a peak SNR `P_T / σ_w²` given in dB.
pub fn noise_variance_for_psnr(p_total: f64, psnr_db: f64) -> f64 {
    p_total / 10f64.powf(psnr_db / 10.0)
}

fn complex_normal<R: Rng + ?Sized>(rng: &mut R, variance: f64) -> Complex64 {
    let s = (variance / 2.0).sqrt();
    let re: f64 = StandardNormal.sample(rng);
    let im: f64 = StandardNormal.sample(rng);
    Complex64::new(re * s, im * s)
}

/// Draws one channel realization with zero noise variance.
pub fn draw_channel<R: Rng + ?Sized>(
    rng: &mut R,
    n_sc: usize,
    n_t: usize,
    n_r: usize,
    profile: ChannelProfile,
) -> Result<ChannelRealization> {
    if n_sc == 0 || n_t == 0 || n_r == 0 {
        return Err(Error::Dimension("channel dimensions must be positive".into()));
    }
    match profile {
        ChannelProfile::Awgn | ChannelProfile::Identity => {
            if n_r != n_t {
                return Err(Error::Dimension(format!(
                    "diagonal channel needs N_r = N_t, got {n_r}x{n_t}"
                )));
            }
            let g = if profile == ChannelProfile::Awgn {
                1.0 / (n_t as f64).sqrt()
            } else {
                1.0
            };
            let h = CMat::identity(n_t).scale(Complex64::new(g, 0.0));
            Ok(ChannelRealization::flat(h, n_sc, 0.0))
        }
        ChannelProfile::MultipathTaps { count, decay } => {
            if count == 0 || count > n_sc {
                return Err(Error::Parameter(format!(
                    "tap count {count} must lie in 1..={n_sc}"
                )));
            }
            if !(decay > 0.0 && decay.is_finite()) {
                return Err(Error::Parameter(format!("tap decay must be positive, got {decay}")));
            }
            let raw: Vec<f64> = (0..count).map(|l| decay.powi(l as i32)).collect();
            let total: f64 = raw.iter().sum();
            let pdp: Vec<f64> = raw.iter().map(|p| p / total).collect();
            let entries = n_r * n_t;
            // taps[e][l]: tap l of matrix entry e, zero-padded to K for the DFT.
            let mut h = vec![CMat::zeros(n_r, n_t); n_sc];
            let mut buf = vec![Complex64::new(0.0, 0.0); n_sc];
            for e in 0..entries {
                buf.iter_mut().for_each(|z| *z = Complex64::new(0.0, 0.0));
                for (l, p) in pdp.iter().enumerate() {
                    buf[l] = complex_normal(rng, p / entries as f64);
                }
                fft_forward(&mut buf);
                for (k, hk) in h.iter_mut().enumerate() {
                    hk.as_mut_slice()[e] = buf[k];
                }
            }
            Ok(ChannelRealization {
                h,
                sigma_w2: 0.0,
                pdp,
            })
        }
    }
}

/// `y[k] = H[k] x[k] + n[k]` with `n` iid `CN(0, σ_w²)`. `x` is `N_t × K`,
/// the result `N_r × K`.
pub fn apply_channel<R: Rng + ?Sized>(
    x_freq: &CMat,
    chan: &ChannelRealization,
    rng: &mut R,
) -> Result<CMat> {
    let mut y = apply_channel_noiseless(x_freq, chan)?;
    if chan.sigma_w2 > 0.0 {
        for z in y.as_mut_slice() {
            *z += complex_normal(rng, chan.sigma_w2);
        }
    }
    Ok(y)
}

/// Noise samples shaped like a receive grid.
pub fn draw_noise<R: Rng + ?Sized>(rng: &mut R, n_r: usize, n_sc: usize, sigma_w2: f64) -> CMat {
    CMat::from_fn(n_r, n_sc, |_, _| complex_normal(rng, sigma_w2))
}

pub fn apply_channel_noiseless(x_freq: &CMat, chan: &ChannelRealization) -> Result<CMat> {
    check_shape(x_freq, chan.n_t(), chan)?;
    let mut y = CMat::zeros(chan.n_r(), chan.subcarriers());
    for (k, hk) in chan.h.iter().enumerate() {
        let yk = hk.matvec(&x_freq.column(k))?;
        y.set_column(k, &yk);
    }
    Ok(y)
}

fn check_shape(m: &CMat, rows: usize, chan: &ChannelRealization) -> Result<()> {
    if m.rows() != rows || m.cols() != chan.subcarriers() {
        return Err(Error::Dimension(format!(
            "expected {}x{} signal, got {}x{}",
            rows,
            chan.subcarriers(),
            m.rows(),
            m.cols()
        )));
    }
    Ok(())
}

/// Real-valued view `[Re(z); Im(z)]` of a complex vector.
#[derive(Debug, Clone, PartialEq)]
pub struct RealifiedSignal {
    pub data: Vec<f64>,
}

pub fn realify(z: &[Complex64]) -> RealifiedSignal {
    let mut data: Vec<f64> = z.iter().map(|c| c.re).collect();
    data.extend(z.iter().map(|c| c.im));
    RealifiedSignal { data }
}

pub fn complexify(r: &RealifiedSignal) -> Result<Vec<Complex64>> {
    if r.data.len() % 2 != 0 {
        return Err(Error::Dimension(format!(
            "cannot split odd length {} into real and imaginary halves",
            r.data.len()
        )));
    }
    let n = r.data.len() / 2;
    Ok((0..n)
        .map(|i| Complex64::new(r.data[i], r.data[n + i]))
        .collect())
}

/// Block form `[[Re H, -Im H], [Im H, Re H]]`, row-major
/// `2N_r × 2N_t`.
pub fn realify_matrix(h: &CMat) -> Vec<Vec<f64>> {
    let (r, c) = (h.rows(), h.cols());
    let mut out = vec![vec![0.0; 2 * c]; 2 * r];
    for i in 0..r {
        for j in 0..c {
            let z = h[(i, j)];
            out[i][j] = z.re;
            out[i][c + j] = -z.im;
            out[r + i][j] = z.im;
            out[r + i][c + j] = z.re;
        }
    }
    out
}

/// Per-subcarrier matched-filter products `(H^H y, H^H H x̂)`.
pub fn matched_features(
    chan: &ChannelRealization,
    y: &CMat,
    x_hat: &CMat,
) -> Result<(CMat, CMat)> {
    check_shape(y, chan.n_r(), chan)?;
    check_shape(x_hat, chan.n_t(), chan)?;
    let mut hy = CMat::zeros(chan.n_t(), chan.subcarriers());
    let mut hhx = CMat::zeros(chan.n_t(), chan.subcarriers());
    for (k, hk) in chan.h.iter().enumerate() {
        let ha = hk.adjoint();
        hy.set_column(k, &ha.matvec(&y.column(k))?);
        let hx = hk.matvec(&x_hat.column(k))?;
        hhx.set_column(k, &ha.matvec(&hx)?);
    }
    Ok((hy, hhx))
}
