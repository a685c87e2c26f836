//! Transmit RF front end: band-pass filter, input back-off and the RAPP
//! solid-state amplifier, plus the Bussgang gain and the spectral metrics
//! (ACPR, OBO) used to judge the amplified signal.

use num_complex::Complex64;

use crate::dsp::{
    estimate_psd, fft_forward, fft_inverse, in_band_mask, PsdConfig, PsdEstimate, Stage, TimeFrame,
};
use crate::{linear_to_db, Error, Result};

/// RAPP AM/AM parameters. All amplifiers of the array share one instance.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RappParams {
    /// Limiting output amplitude `A0`.
    pub saturation: f64,
    /// Small-signal gain `v`.
    pub gain: f64,
    /// Smoothness `p` of the linear-to-saturation knee.
    pub smoothness: f64,
}

impl RappParams {
    pub fn new(saturation: f64, gain: f64, smoothness: f64) -> Result<Self> {
        for (name, v) in [("saturation", saturation), ("gain", gain), ("smoothness", smoothness)] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::Parameter(format!("RAPP {name} must be positive, got {v}")));
            }
        }
        Ok(Self {
            saturation,
            gain,
            smoothness,
        })
    }

    /// Per-amplifier parameters for a total radiated power budget split
    /// evenly over `n_t` amplifiers: `A0 = sqrt(P_T/N_t)`, `v = 1`, `p = 2`.
    pub fn from_budget(p_total: f64, n_t: usize) -> Result<Self> {
        if n_t == 0 {
            return Err(Error::Dimension("zero transmit antennas".into()));
        }
        Self::new((p_total / n_t as f64).sqrt(), 1.0, 2.0)
    }

    /// Output amplitude `G(A) = vA (1 + (vA/A0)^{2p})^{-1/(2p)}`.
    pub fn am_am(&self, amplitude: f64) -> f64 {
        let two_p = 2.0 * self.smoothness;
        let drive = self.gain * amplitude;
        let u = (drive / self.saturation).powf(two_p);
        if u <= 1.0 {
            drive * (1.0 + u).powf(-1.0 / two_p)
        } else {
            // Past the knee, A0 (1 + 1/u)^{-1/(2p)} stays monotone and
            // below A0 in floating point.
            self.saturation * (1.0 + u.recip()).powf(-1.0 / two_p)
        }
    }

    /// `G(A)/A`, finite at `A = 0`.
    pub fn gain_ratio(&self, amplitude: f64) -> f64 {
        if amplitude == 0.0 {
            return self.gain;
        }
        let two_p = 2.0 * self.smoothness;
        let u = (self.gain * amplitude / self.saturation).powf(two_p);
        if u <= 1.0 {
            self.gain * (1.0 + u).powf(-1.0 / two_p)
        } else {
            self.am_am(amplitude) / amplitude
        }
    }
}

/// Least-squares linear gain of a memoryless nonlinearity.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BussgangFactor {
    pub alpha: Complex64,
}

/// Output of [`spectral_report`].
#[derive(Debug, Clone, PartialEq)]
pub struct SpectralReport {
    pub acpr_db: f64,
    pub obo_db: f64,
    pub psd: PsdEstimate,
}

/// Ideal rectangular band-pass filter: zero the `(L-1)·K` padding bins of
/// every antenna's spectrum.
pub fn bandpass_filter(frame: &TimeFrame) -> Result<TimeFrame> {
    if !matches!(frame.stage(), Stage::Raw | Stage::Encoded) {
        return Err(Error::Stage {
            from: frame.stage(),
            to: Stage::Filtered,
        });
    }
    let mut samples = frame.samples().clone();
    bandpass_rows(samples.as_mut_slice(), frame.len(), frame.subcarriers());
    frame.advance(samples, Stage::Filtered)
}

/// In-place band-pass of consecutive rows of length `len` holding `n_sc`
/// in-band bins.
pub fn bandpass_rows(data: &mut [Complex64], len: usize, n_sc: usize) {
    let mask = in_band_mask(n_sc, len);
    let inv = 1.0 / len as f64;
    for row in data.chunks_exact_mut(len) {
        fft_forward(row);
        for (z, keep) in row.iter_mut().zip(&mask) {
            if *keep {
                *z *= inv;
            } else {
                *z = Complex64::new(0.0, 0.0);
            }
        }
        fft_inverse(row);
    }
}

/// Scales the frame so its mean power is `A0² / 10^(IBO/10)`.
pub fn apply_ibo(frame: &TimeFrame, ibo_db: f64, params: &RappParams) -> Result<TimeFrame> {
    let p = frame.mean_power();
    if p == 0.0 {
        return Err(Error::ZeroPower);
    }
    let target = params.saturation.powi(2) / 10f64.powf(ibo_db / 10.0);
    let scaled = frame.scaled((target / p).sqrt());
    frame.advance(scaled.into_samples(), Stage::BackedOff)
}

/// RAPP AM/AM on every sample; phase passes through unchanged.
pub fn rapp_amplify(frame: &TimeFrame, params: &RappParams) -> Result<TimeFrame> {
    let mut samples = frame.samples().clone();
    for z in samples.as_mut_slice() {
        *z *= params.gain_ratio(z.norm());
    }
    TimeFrame::new(samples, frame.oversampling(), Stage::Amplified)
}

/// Bussgang gain `α` between the filtered (pre-back-off) frame and the
/// amplifier output, with expectations taken as sample means over all
/// antennas and samples. `α` is the least-squares coefficient
/// `E[x_P conj(x_F)] / E|x_F|²`, so the residual `x_P - α x_F` is
/// uncorrelated with `x_F`; for a phase-preserving amplifier it is real.
pub fn bussgang_alpha(filtered: &TimeFrame, amplified: &TimeFrame) -> Result<BussgangFactor> {
    bussgang_alpha_batch(&[(filtered, amplified)])
}

/// [`bussgang_alpha`] pooled over a batch of frame pairs.
pub fn bussgang_alpha_batch(pairs: &[(&TimeFrame, &TimeFrame)]) -> Result<BussgangFactor> {
    let mut cross = Complex64::new(0.0, 0.0);
    let mut energy = 0.0;
    for (f, p) in pairs {
        if f.samples().rows() != p.samples().rows() || f.len() != p.len() {
            return Err(Error::Dimension("filtered and amplified shapes differ".into()));
        }
        for (xf, xp) in f.samples().as_slice().iter().zip(p.samples().as_slice()) {
            cross += xp * xf.conj();
            energy += xf.norm_sqr();
        }
    }
    if energy == 0.0 {
        return Err(Error::ZeroPower);
    }
    Ok(BussgangFactor {
        alpha: cross / energy,
    })
}

/// Spectral band of a PSD bin.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Band {
    Main,
    Upper,
    Lower,
}

/// Band of fftshifted bin `bin` out of `segment` bins. Bands are defined on
/// normalized frequency with bandwidth `1/L`: main `[-BW/2, BW/2)`, upper
/// `[BW/2, 3BW/2)`, lower `[-3BW/2, -BW/2)`. Bins beyond Nyquist are in
/// no band.
pub fn band_of_bin(bin: usize, segment: usize, oversampling: usize) -> Option<Band> {
    let s = segment as i64;
    let d = (bin as i64 - s / 2) * 2 * oversampling as i64;
    if (-s..s).contains(&d) {
        Some(Band::Main)
    } else if (s..3 * s).contains(&d) {
        Some(Band::Upper)
    } else if (-3 * s..-s).contains(&d) {
        Some(Band::Lower)
    } else {
        None
    }
}

/// Band powers `(main, upper, lower)` of a PSD; see [`band_of_bin`].
pub fn band_powers(psd: &PsdEstimate, oversampling: usize) -> (f64, f64, f64) {
    let s = psd.bin_power.len();
    let (mut main, mut upper, mut lower) = (0.0, 0.0, 0.0);
    for (i, p) in psd.bin_power.iter().enumerate() {
        match band_of_bin(i, s, oversampling) {
            Some(Band::Main) => main += p,
            Some(Band::Upper) => upper += p,
            Some(Band::Lower) => lower += p,
            None => {}
        }
    }
    (main, upper, lower)
}

/// Adjacent channel power ratio in dB: the stronger adjacent band over the
/// main band.
pub fn acpr(psd: &PsdEstimate, oversampling: usize) -> Result<f64> {
    if oversampling < 2 {
        return Err(Error::Oversampling(oversampling));
    }
    let (main, upper, lower) = band_powers(psd, oversampling);
    if main <= 0.0 {
        return Err(Error::ZeroPower);
    }
    Ok(linear_to_db(upper.max(lower) / main))
}

/// Output back-off in dB: `P_T / Σ_m E|x_m^B|²`.
pub fn obo(backed_off: &TimeFrame, p_total: f64) -> Result<f64> {
    let total: f64 = (0..backed_off.n_t()).map(|a| backed_off.antenna_power(a)).sum();
    if total == 0.0 {
        return Err(Error::ZeroPower);
    }
    Ok(linear_to_db(p_total / total))
}

pub fn spectral_report(
    backed_off: &TimeFrame,
    amplified: &TimeFrame,
    p_total: f64,
    psd_cfg: PsdConfig,
) -> Result<SpectralReport> {
    let psd = estimate_psd(amplified, psd_cfg)?;
    Ok(SpectralReport {
        acpr_db: acpr(&psd, amplified.oversampling())?,
        obo_db: obo(backed_off, p_total)?,
        psd,
    })
}
