//! Differentiable versions of the transmit chain and channel, acting on
//! realified tensors `[batch, rows, 2M]` where each row stores the real parts
//! of `M` complex samples followed by their imaginary parts.

use std::sync::Arc;

use num_complex::Complex64;
use wavelab_autodiff::{Tape, Var};
use wavelab_core::channel::ChannelRealization;
use wavelab_core::dsp::{data_bin, fft_forward, fft_inverse};
use wavelab_core::rf::{band_of_bin, bandpass_rows, Band, RappParams};

use crate::{CaeError, Result};

fn zero() -> Complex64 {
    Complex64::new(0.0, 0.0)
}

/// Batch, rows and complex row length of a realified tensor.
pub fn complex_dims(shape: &[usize]) -> Result<(usize, usize, usize)> {
    match *shape {
        [b, r, w] if w % 2 == 0 && w > 0 => Ok((b, r, w / 2)),
        _ => Err(CaeError::Shape(format!("expected [batch, rows, 2M], got {shape:?}"))),
    }
}

/// Unpacks realified rows into complex samples, row-major.
pub fn to_complex(values: &[f64], m: usize) -> Vec<Complex64> {
    let mut out = Vec::with_capacity(values.len() / 2);
    for row in values.chunks_exact(2 * m) {
        let (re, im) = row.split_at(m);
        out.extend(re.iter().zip(im).map(|(&a, &b)| Complex64::new(a, b)));
    }
    out
}

/// Inverse of [`to_complex`].
pub fn from_complex(z: &[Complex64], m: usize) -> Vec<f64> {
    let mut out = Vec::with_capacity(2 * z.len());
    for row in z.chunks_exact(m) {
        out.extend(row.iter().map(|c| c.re));
        out.extend(row.iter().map(|c| c.im));
    }
    out
}

/// Applies a complex-linear map given with its adjoint. `forward` and
/// `adjoint` act on the whole batch in complex form.
fn complex_linear<F, A>(tape: &mut Tape, x: Var, out_shape: [usize; 3], forward: F, adjoint: A) -> Result<Var>
where
    F: Fn(&[Complex64]) -> Vec<Complex64>,
    A: Fn(&[Complex64]) -> Vec<Complex64> + 'static,
{
    let (_, _, m_in) = complex_dims(tape.shape(x))?;
    let m_out = out_shape[2] / 2;
    let y = forward(&to_complex(tape.value(x), m_in));
    let value = from_complex(&y, m_out);
    Ok(tape.push_op(value, &out_shape, &[x], move |ctx, sink| {
        if let Some(gx) = sink.grad_mut(0) {
            let g = adjoint(&to_complex(ctx.grad_output(), m_out));
            for (d, s) in gx.iter_mut().zip(from_complex(&g, m_in)) {
                *d += s;
            }
        }
    })?)
}

/// Ideal band-pass on every row of `[batch, antennas, 2LK]`. The filter is
/// an orthogonal projection, so it is its own adjoint.
pub fn bandpass(tape: &mut Tape, x: Var, n_sc: usize) -> Result<Var> {
    let (b, r, len) = complex_dims(tape.shape(x))?;
    let run = move |z: &[Complex64]| {
        let mut out = z.to_vec();
        bandpass_rows(&mut out, len, n_sc);
        out
    };
    complex_linear(tape, x, [b, r, 2 * len], run, run)
}

/// Receiver FFT and zero-unpadding: `[batch, antennas, 2LK]` to
/// `[batch, antennas, 2K]`.
pub fn dft_unpad(tape: &mut Tape, x: Var, n_sc: usize) -> Result<Var> {
    let (b, r, len) = complex_dims(tape.shape(x))?;
    if n_sc == 0 || len % n_sc != 0 {
        return Err(CaeError::Shape(format!("row length {len} is not a multiple of K={n_sc}")));
    }
    let norm = (n_sc as f64).sqrt() / len as f64;
    let forward = move |z: &[Complex64]| {
        let mut out = Vec::with_capacity(z.len() / len * n_sc);
        let mut buf = vec![zero(); len];
        for row in z.chunks_exact(len) {
            buf.copy_from_slice(row);
            fft_forward(&mut buf);
            out.extend((0..n_sc).map(|k| buf[data_bin(k, n_sc, len)] * norm));
        }
        out
    };
    let adjoint = move |g: &[Complex64]| {
        let mut out = Vec::with_capacity(g.len() / n_sc * len);
        let mut buf = vec![zero(); len];
        for row in g.chunks_exact(n_sc) {
            buf.fill(zero());
            for (k, &v) in row.iter().enumerate() {
                buf[data_bin(k, n_sc, len)] = v * norm;
            }
            fft_inverse(&mut buf);
            out.extend_from_slice(&buf);
        }
        out
    };
    complex_linear(tape, x, [b, r, 2 * n_sc], forward, adjoint)
}

/// Multiplies every complex sample by `c`.
pub fn complex_scale(tape: &mut Tape, x: Var, c: Complex64) -> Result<Var> {
    let (b, r, m) = complex_dims(tape.shape(x))?;
    complex_linear(
        tape,
        x,
        [b, r, 2 * m],
        move |z| z.iter().map(|v| v * c).collect(),
        move |g| g.iter().map(|v| v * c.conj()).collect(),
    )
}

/// Which per-subcarrier matrix product a channel op applies.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ChannelProduct {
    /// `H x`
    Forward,
    /// `H^H y`
    Adjoint,
    /// `H^H H x`
    Gram,
}

fn apply_per_subcarrier(
    chans: &[ChannelRealization],
    z: &[Complex64],
    rows_in: usize,
    n_sc: usize,
    product: ChannelProduct,
) -> Vec<Complex64> {
    let mat_vec = |h: &wavelab_core::dsp::CMat, adjoint: bool, v: &[Complex64]| -> Vec<Complex64> {
        let (nr, nt) = (h.rows(), h.cols());
        if adjoint {
            (0..nt)
                .map(|j| (0..nr).map(|i| h[(i, j)].conj() * v[i]).sum())
                .collect()
        } else {
            (0..nr).map(|i| (0..nt).map(|j| h[(i, j)] * v[j]).sum()).collect()
        }
    };
    let mut out = Vec::new();
    for (b, chan) in chans.iter().enumerate() {
        let block = &z[b * rows_in * n_sc..(b + 1) * rows_in * n_sc];
        let rows_out = match product {
            ChannelProduct::Forward => chan.n_r(),
            ChannelProduct::Adjoint | ChannelProduct::Gram => chan.n_t(),
        };
        let mut res = vec![zero(); rows_out * n_sc];
        let mut col = vec![zero(); rows_in];
        for (k, h) in chan.h.iter().enumerate() {
            for (i, c) in col.iter_mut().enumerate() {
                *c = block[i * n_sc + k];
            }
            let v = match product {
                ChannelProduct::Forward => mat_vec(h, false, &col),
                ChannelProduct::Adjoint => mat_vec(h, true, &col),
                ChannelProduct::Gram => mat_vec(h, true, &mat_vec(h, false, &col)),
            };
            for (i, c) in v.into_iter().enumerate() {
                res[i * n_sc + k] = c;
            }
        }
        out.extend(res);
    }
    out
}

/// Per-example, per-subcarrier channel products on `[batch, rows, 2K]`.
pub fn channel_product(
    tape: &mut Tape,
    x: Var,
    chans: Arc<Vec<ChannelRealization>>,
    product: ChannelProduct,
) -> Result<Var> {
    let (b, rows, n_sc) = complex_dims(tape.shape(x))?;
    let first = chans
        .first()
        .ok_or_else(|| CaeError::Shape("no channel realizations".into()))?;
    let (nr, nt) = (first.n_r(), first.n_t());
    let (rows_in, rows_out) = match product {
        ChannelProduct::Forward => (nt, nr),
        ChannelProduct::Adjoint => (nr, nt),
        ChannelProduct::Gram => (nt, nt),
    };
    let consistent = chans
        .iter()
        .all(|c| c.n_r() == nr && c.n_t() == nt && c.subcarriers() == n_sc);
    if chans.len() != b || rows != rows_in || !consistent {
        return Err(CaeError::Shape(format!(
            "{} channels ({nr}x{nt}, K={}) for signal {:?}",
            chans.len(),
            first.subcarriers(),
            tape.shape(x)
        )));
    }
    let back = match product {
        ChannelProduct::Forward => ChannelProduct::Adjoint,
        ChannelProduct::Adjoint => ChannelProduct::Forward,
        ChannelProduct::Gram => ChannelProduct::Gram,
    };
    let fwd_chans = Arc::clone(&chans);
    complex_linear(
        tape,
        x,
        [b, rows_out, 2 * n_sc],
        move |z| apply_per_subcarrier(&fwd_chans, z, rows_in, n_sc, product),
        move |g| apply_per_subcarrier(&chans, g, rows_out, n_sc, back),
    )
}

/// Rescales each example (all rows together) to mean complex power
/// `target`.
pub fn power_normalize(tape: &mut Tape, x: Var, target: f64) -> Result<Var> {
    let (b, r, m) = complex_dims(tape.shape(x))?;
    let per = r * 2 * m;
    let count = (r * m) as f64;
    let xs = tape.value(x);
    let mut out = Vec::with_capacity(xs.len());
    let mut norms = Vec::with_capacity(b);
    for ex in xs.chunks_exact(per) {
        let norm = ex.iter().map(|v| v * v).sum::<f64>().sqrt();
        if norm == 0.0 {
            return Err(wavelab_core::Error::ZeroPower.into());
        }
        let k = (target * count).sqrt() / norm;
        out.extend(ex.iter().map(|v| v * k));
        norms.push(norm);
    }
    let shape = tape.shape(x).to_vec();
    Ok(tape.push_op(out, &shape, &[x], move |ctx, sink| {
        let (xs, g) = (ctx.input(0), ctx.grad_output());
        if let Some(gx) = sink.grad_mut(0) {
            for (e, &norm) in norms.iter().enumerate() {
                let range = e * per..(e + 1) * per;
                let (xe, ge) = (&xs[range.clone()], &g[range.clone()]);
                let k = (target * count).sqrt() / norm;
                let proj = xe.iter().zip(ge).map(|(a, b)| a * b).sum::<f64>() / (norm * norm);
                for ((d, &xv), &gv) in gx[range].iter_mut().zip(xe).zip(ge) {
                    *d += k * (gv - xv * proj);
                }
            }
        }
    })?)
}

/// RAPP amplitude compression on every complex sample.
pub fn rapp(tape: &mut Tape, x: Var, params: RappParams) -> Result<Var> {
    let (_, _, m) = complex_dims(tape.shape(x))?;
    let two_p = 2.0 * params.smoothness;
    let ratio = params.gain / params.saturation;
    // d(gain_ratio)/dr divided by r; finite at r = 0 for p >= 1.
    let slope_over_r = move |r: f64| {
        let u = (ratio * r).powf(two_p);
        -params.gain * (1.0 + u).powf(-1.0 / two_p - 1.0) * ratio.powf(two_p) * r.powf(two_p - 2.0)
    };
    let xs = tape.value(x);
    let mut out = vec![0.0; xs.len()];
    for (row_in, row_out) in xs.chunks_exact(2 * m).zip(out.chunks_exact_mut(2 * m)) {
        for i in 0..m {
            let (u, v) = (row_in[i], row_in[m + i]);
            let s = params.gain_ratio(u.hypot(v));
            row_out[i] = s * u;
            row_out[m + i] = s * v;
        }
    }
    let shape = tape.shape(x).to_vec();
    Ok(tape.push_op(out, &shape, &[x], move |ctx, sink| {
        let (xs, g) = (ctx.input(0), ctx.grad_output());
        if let Some(gx) = sink.grad_mut(0) {
            for ((row, grow), drow) in xs.chunks_exact(2 * m).zip(g.chunks_exact(2 * m)).zip(gx.chunks_exact_mut(2 * m)) {
                for i in 0..m {
                    let (u, v) = (row[i], row[m + i]);
                    let (gu, gv) = (grow[i], grow[m + i]);
                    let r = u.hypot(v);
                    let s = params.gain_ratio(r);
                    let c = slope_over_r(r) * (u * gu + v * gv);
                    drow[i] += s * gu + c * u;
                    drow[m + i] += s * gv + c * v;
                }
            }
        }
    })?)
}

/// Per-example PAPR (linear), the largest over the example's rows. The
/// gradient follows the peak sample of the worst row.
pub fn papr(tape: &mut Tape, x: Var) -> Result<Var> {
    let (b, r, m) = complex_dims(tape.shape(x))?;
    let xs = tape.value(x);
    let mut values = Vec::with_capacity(b);
    // (row start, peak index, row energy) of the maximizing row
    let mut argmax = Vec::with_capacity(b);
    for e in 0..b {
        let mut best = (f64::NEG_INFINITY, 0, 0, 0.0);
        for row in 0..r {
            let start = (e * r + row) * 2 * m;
            let data = &xs[start..start + 2 * m];
            let (mut peak, mut at, mut energy) = (0.0f64, 0, 0.0);
            for i in 0..m {
                let p = data[i] * data[i] + data[m + i] * data[m + i];
                energy += p;
                if p > peak {
                    peak = p;
                    at = i;
                }
            }
            if energy == 0.0 {
                return Err(wavelab_core::Error::ZeroPower.into());
            }
            let ratio = peak * m as f64 / energy;
            if ratio > best.0 {
                best = (ratio, start, at, energy);
            }
        }
        values.push(best.0);
        argmax.push((best.1, best.2, best.3));
    }
    Ok(tape.push_op(values, &[b], &[x], move |ctx, sink| {
        let (xs, g) = (ctx.input(0), ctx.grad_output());
        let papr_values = ctx.output();
        if let Some(gx) = sink.grad_mut(0) {
            for (e, &(start, at, energy)) in argmax.iter().enumerate() {
                let data = &xs[start..start + 2 * m];
                let grad = &mut gx[start..start + 2 * m];
                // papr = m |x_at|² / E, so d/dx_j = (2m δ_{j,at} x_j - 2 papr x_j) / E
                let scale = g[e] * 2.0 / energy;
                for i in 0..2 * m {
                    grad[i] -= scale * papr_values[e] * data[i];
                }
                grad[at] += scale * m as f64 * data[at];
                grad[m + at] += scale * m as f64 * data[m + at];
            }
        }
    })?)
}

/// Per-example ACPR in dB of `[batch, antennas, 2LK]`, from the periodogram
/// of each whole row pooled over antennas.
pub fn acpr_db(tape: &mut Tape, x: Var, oversampling: usize) -> Result<Var> {
    if oversampling < 2 {
        return Err(wavelab_core::Error::Oversampling(oversampling).into());
    }
    let (b, r, len) = complex_dims(tape.shape(x))?;
    let bands: Vec<Option<Band>> = (0..len)
        .map(|j| band_of_bin((j + len / 2) % len, len, oversampling))
        .collect();
    let z = to_complex(tape.value(x), len);
    let mut spectra = Vec::with_capacity(z.len());
    let mut values = Vec::with_capacity(b);
    let mut powers = Vec::with_capacity(b);
    for e in 0..b {
        let (mut main, mut upper, mut lower) = (0.0, 0.0, 0.0);
        for row in z[e * r * len..(e + 1) * r * len].chunks_exact(len) {
            let mut buf = row.to_vec();
            fft_forward(&mut buf);
            for (j, c) in buf.iter().enumerate() {
                match bands[j] {
                    Some(Band::Main) => main += c.norm_sqr(),
                    Some(Band::Upper) => upper += c.norm_sqr(),
                    Some(Band::Lower) => lower += c.norm_sqr(),
                    None => {}
                }
            }
            spectra.extend(buf);
        }
        if main == 0.0 {
            return Err(wavelab_core::Error::ZeroPower.into());
        }
        values.push(10.0 * (upper.max(lower) / main).log10());
        powers.push((main, upper, lower));
    }
    let db = 10.0 / std::f64::consts::LN_10;
    Ok(tape.push_op(values, &[b], &[x], move |ctx, sink| {
        let g = ctx.grad_output();
        if let Some(gx) = sink.grad_mut(0) {
            let mut grads = Vec::with_capacity(spectra.len());
            for (e, &(main, upper, lower)) in powers.iter().enumerate() {
                // d acpr / d P_band, then d P_band / d x = 2 FFT^H (mask X)
                let adj = if upper >= lower { (1.0 / upper, 0.0) } else { (0.0, 1.0 / lower) };
                let w_main = -g[e] * db / main;
                let (w_up, w_low) = (g[e] * db * adj.0, g[e] * db * adj.1);
                for row in spectra[e * r * len..(e + 1) * r * len].chunks_exact(len) {
                    let mut buf: Vec<Complex64> = row
                        .iter()
                        .zip(&bands)
                        .map(|(c, band)| {
                            let w = match band {
                                Some(Band::Main) => w_main,
                                Some(Band::Upper) => w_up,
                                Some(Band::Lower) => w_low,
                                None => 0.0,
                            };
                            c * (2.0 * w)
                        })
                        .collect();
                    fft_inverse(&mut buf);
                    grads.extend(buf);
                }
            }
            for (d, s) in gx.iter_mut().zip(from_complex(&grads, len)) {
                *d += s;
            }
        }
    })?)
}
