//! Neural network layers.

use crate::tape::numel;
use crate::{AdError, Result, Tape, Var};

pub const SELU_LAMBDA: f64 = 1.050_700_987_355_480_5;
pub const SELU_ALPHA: f64 = 1.673_263_242_354_377_3;

const BN_EPS: f64 = 1e-5;

/// Whether batch normalization uses the batch statistics or stored ones.
#[derive(Debug, Clone, Copy)]
pub enum BatchNormMode<'a> {
    Train,
    Eval { mean: &'a [f64], var: &'a [f64] },
}

/// Per-channel statistics of a training batch. `var` is the unbiased
/// estimate, which is what running averages track.
#[derive(Debug, Clone, PartialEq)]
pub struct BatchStats {
    pub mean: Vec<f64>,
    pub var: Vec<f64>,
}

/// Output columns `[lo, hi)` that read valid input columns starting at `src`
/// for kernel tap `tap` with `pad` zeros on each side.
fn valid_span(out_len: usize, in_len: usize, pad: usize, tap: usize) -> Option<(usize, usize, usize)> {
    let lo = pad.saturating_sub(tap);
    let hi = (in_len + pad).saturating_sub(tap).min(out_len);
    (lo < hi).then(|| (lo, hi, lo + tap - pad))
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn axpy(alpha: f64, x: &[f64], y: &mut [f64]) {
    y.iter_mut().zip(x).for_each(|(d, s)| *d += alpha * s);
}

fn rank4(shape: &[usize], what: &str) -> Result<[usize; 4]> {
    <[usize; 4]>::try_from(shape)
        .map_err(|_| AdError::Shape(format!("{what} must be rank 4, got {shape:?}")))
}

impl Tape {
    /// Stride-1 2-D convolution. `input` is `[batch, in, h, w]`, `weight`
    /// `[out, in, kh, kw]`, `bias` `[out]`; `pad` adds zeros on both sides of
    /// each spatial axis.
    pub fn conv2d(&mut self, input: Var, weight: Var, bias: Option<Var>, pad: (usize, usize)) -> Result<Var> {
        let [nb, ci, h, w] = rank4(self.shape(input), "conv2d input")?;
        let [co, wci, kh, kw] = rank4(self.shape(weight), "conv2d weight")?;
        if wci != ci {
            return Err(AdError::Shape(format!("conv2d: {ci} input channels, kernel expects {wci}")));
        }
        if let Some(b) = bias {
            if self.shape(b) != [co] {
                return Err(AdError::Shape(format!("conv2d bias {:?} for {co} channels", self.shape(b))));
            }
        }
        let (ph, pw) = pad;
        if h + 2 * ph < kh || w + 2 * pw < kw {
            return Err(AdError::Shape(format!("conv2d kernel {kh}x{kw} larger than padded {h}x{w}")));
        }
        let (ho, wo) = (h + 2 * ph - kh + 1, w + 2 * pw - kw + 1);
        let x = self.value(input);
        let k = self.value(weight);
        let mut out = vec![0.0; nb * co * ho * wo];
        for b in 0..nb {
            for o in 0..co {
                let plane = &mut out[(b * co + o) * ho * wo..][..ho * wo];
                if let Some(bv) = bias {
                    plane.fill(self.value(bv)[o]);
                }
                for c in 0..ci {
                    let src = &x[(b * ci + c) * h * w..][..h * w];
                    for i in 0..kh {
                        for j in 0..kw {
                            let wt = k[((o * ci + c) * kh + i) * kw + j];
                            let Some((lo, hi, sc)) = valid_span(wo, w, pw, j) else {
                                continue;
                            };
                            let Some((rlo, rhi, rs)) = valid_span(ho, h, ph, i) else {
                                continue;
                            };
                            for (r, ir) in (rlo..rhi).zip(rs..) {
                                axpy(wt, &src[ir * w + sc..][..hi - lo], &mut plane[r * wo + lo..r * wo + hi]);
                            }
                        }
                    }
                }
            }
        }
        let mut inputs = vec![input, weight];
        inputs.extend(bias);
        self.push_op(out, &[nb, co, ho, wo], &inputs, move |ctx, sink| {
            let g = ctx.grad_output();
            let fault = ctx.conv_fault().unwrap_or(1.0);
            let x = ctx.input(0);
            let k = ctx.input(1);
            if sink.wants(0) {
                let mut gx = vec![0.0; x.len()];
                for b in 0..nb {
                    for o in 0..co {
                        let gp = &g[(b * co + o) * ho * wo..][..ho * wo];
                        for c in 0..ci {
                            let dst = &mut gx[(b * ci + c) * h * w..][..h * w];
                            for i in 0..kh {
                                let Some((rlo, rhi, rs)) = valid_span(ho, h, ph, i) else {
                                    continue;
                                };
                                for j in 0..kw {
                                    let Some((lo, hi, sc)) = valid_span(wo, w, pw, j) else {
                                        continue;
                                    };
                                    let wt = k[((o * ci + c) * kh + i) * kw + j];
                                    for (r, ir) in (rlo..rhi).zip(rs..) {
                                        axpy(wt, &gp[r * wo + lo..r * wo + hi], &mut dst[ir * w + sc..][..hi - lo]);
                                    }
                                }
                            }
                        }
                    }
                }
                if let Some(d) = sink.grad_mut(0) {
                    axpy(fault, &gx, d);
                }
            }
            if sink.wants(1) {
                let mut gw = vec![0.0; k.len()];
                for b in 0..nb {
                    for o in 0..co {
                        let gp = &g[(b * co + o) * ho * wo..][..ho * wo];
                        for c in 0..ci {
                            let src = &x[(b * ci + c) * h * w..][..h * w];
                            for i in 0..kh {
                                let Some((rlo, rhi, rs)) = valid_span(ho, h, ph, i) else {
                                    continue;
                                };
                                for j in 0..kw {
                                    let Some((lo, hi, sc)) = valid_span(wo, w, pw, j) else {
                                        continue;
                                    };
                                    let mut acc = 0.0;
                                    for (r, ir) in (rlo..rhi).zip(rs..) {
                                        acc += dot(&gp[r * wo + lo..r * wo + hi], &src[ir * w + sc..][..hi - lo]);
                                    }
                                    gw[((o * ci + c) * kh + i) * kw + j] += acc;
                                }
                            }
                        }
                    }
                }
                if let Some(d) = sink.grad_mut(1) {
                    axpy(fault, &gw, d);
                }
            }
            if let Some(gb) = sink.grad_mut(2) {
                for b in 0..nb {
                    for (o, d) in gb.iter_mut().enumerate() {
                        *d += g[(b * co + o) * ho * wo..][..ho * wo].iter().sum::<f64>();
                    }
                }
            }
        })
    }

    /// Batch normalization over axis 1 of `[batch, channels, ...]` with a
    /// per-channel affine transform. In training mode the batch statistics
    /// are returned so the caller can update running averages.
    pub fn batch_norm(
        &mut self,
        x: Var,
        gamma: Var,
        beta: Var,
        mode: BatchNormMode<'_>,
    ) -> Result<(Var, Option<BatchStats>)> {
        let shape = self.shape(x).to_vec();
        if shape.len() < 2 {
            return Err(AdError::Shape(format!("batch_norm input {shape:?}")));
        }
        let (nb, ch) = (shape[0], shape[1]);
        let sp = numel(&shape[2..]);
        if self.shape(gamma) != [ch] || self.shape(beta) != [ch] {
            return Err(AdError::Shape(format!("batch_norm affine for {ch} channels")));
        }
        let count = nb * sp;
        let xs = self.value(x);
        let (mean, var_biased, stats) = match mode {
            BatchNormMode::Train => {
                if count < 2 {
                    return Err(AdError::BatchTooSmall(count));
                }
                let mut mean = vec![0.0; ch];
                let mut var = vec![0.0; ch];
                for c in 0..ch {
                    let m = (0..nb)
                        .map(|b| xs[(b * ch + c) * sp..][..sp].iter().sum::<f64>())
                        .sum::<f64>()
                        / count as f64;
                    let v = (0..nb)
                        .map(|b| xs[(b * ch + c) * sp..][..sp].iter().map(|t| (t - m) * (t - m)).sum::<f64>())
                        .sum::<f64>()
                        / count as f64;
                    mean[c] = m;
                    var[c] = v;
                }
                let unbiased = var.iter().map(|v| v * count as f64 / (count - 1) as f64).collect();
                let stats = BatchStats {
                    mean: mean.clone(),
                    var: unbiased,
                };
                (mean, var, Some(stats))
            }
            BatchNormMode::Eval { mean, var } => {
                if mean.len() != ch || var.len() != ch {
                    return Err(AdError::Shape(format!("batch_norm running stats for {ch} channels")));
                }
                (mean.to_vec(), var.to_vec(), None)
            }
        };
        let inv_std: Vec<f64> = var_biased.iter().map(|v| 1.0 / (v + BN_EPS).sqrt()).collect();
        let (gm, bt) = (self.value(gamma), self.value(beta));
        let mut xhat = vec![0.0; xs.len()];
        let mut out = vec![0.0; xs.len()];
        for b in 0..nb {
            for c in 0..ch {
                let base = (b * ch + c) * sp;
                for s in base..base + sp {
                    xhat[s] = (xs[s] - mean[c]) * inv_std[c];
                    out[s] = gm[c] * xhat[s] + bt[c];
                }
            }
        }
        let training = stats.is_some();
        let var = self.push_op(out, &shape, &[x, gamma, beta], move |ctx, sink| {
            let g = ctx.grad_output();
            let gm = ctx.input(1);
            let mut sum_g = vec![0.0; ch];
            let mut sum_gx = vec![0.0; ch];
            for b in 0..nb {
                for c in 0..ch {
                    let base = (b * ch + c) * sp;
                    sum_g[c] += g[base..base + sp].iter().sum::<f64>();
                    sum_gx[c] += dot(&g[base..base + sp], &xhat[base..base + sp]);
                }
            }
            if let Some(gx) = sink.grad_mut(0) {
                let n = count as f64;
                for b in 0..nb {
                    for c in 0..ch {
                        let base = (b * ch + c) * sp;
                        let k = gm[c] * inv_std[c];
                        for s in base..base + sp {
                            gx[s] += if training {
                                k * (g[s] - sum_g[c] / n - xhat[s] * sum_gx[c] / n)
                            } else {
                                k * g[s]
                            };
                        }
                    }
                }
            }
            if let Some(gg) = sink.grad_mut(1) {
                axpy(1.0, &sum_gx, gg);
            }
            if let Some(gb) = sink.grad_mut(2) {
                axpy(1.0, &sum_g, gb);
            }
        })?;
        Ok((var, stats))
    }

    /// Linear map over axis 1 applied at every other position:
    /// `[batch, in, ...]` with weight `[out, in]` and bias `[out]` gives
    /// `[batch, out, ...]`.
    pub fn channel_fc(&mut self, x: Var, weight: Var, bias: Var) -> Result<Var> {
        let shape = self.shape(x).to_vec();
        if shape.len() < 2 {
            return Err(AdError::Shape(format!("channel_fc input {shape:?}")));
        }
        let (nb, ci) = (shape[0], shape[1]);
        let sp = numel(&shape[2..]);
        let &[co, wci] = self.shape(weight) else {
            return Err(AdError::Shape(format!("channel_fc weight {:?}", self.shape(weight))));
        };
        if wci != ci || self.shape(bias) != [co] {
            return Err(AdError::Shape(format!("channel_fc {ci} -> {co} with weight [{co}, {wci}]")));
        }
        let (xs, k, bs) = (self.value(x), self.value(weight), self.value(bias));
        let mut out = vec![0.0; nb * co * sp];
        for b in 0..nb {
            for o in 0..co {
                let dst = &mut out[(b * co + o) * sp..][..sp];
                dst.fill(bs[o]);
                for c in 0..ci {
                    axpy(k[o * ci + c], &xs[(b * ci + c) * sp..][..sp], dst);
                }
            }
        }
        let mut out_shape = shape;
        out_shape[1] = co;
        self.push_op(out, &out_shape, &[x, weight, bias], move |ctx, sink| {
            let g = ctx.grad_output();
            let (xs, k) = (ctx.input(0), ctx.input(1));
            if let Some(gx) = sink.grad_mut(0) {
                for b in 0..nb {
                    for o in 0..co {
                        let gp = &g[(b * co + o) * sp..][..sp];
                        for c in 0..ci {
                            axpy(k[o * ci + c], gp, &mut gx[(b * ci + c) * sp..][..sp]);
                        }
                    }
                }
            }
            if let Some(gw) = sink.grad_mut(1) {
                for b in 0..nb {
                    for o in 0..co {
                        let gp = &g[(b * co + o) * sp..][..sp];
                        for c in 0..ci {
                            gw[o * ci + c] += dot(gp, &xs[(b * ci + c) * sp..][..sp]);
                        }
                    }
                }
            }
            if let Some(gb) = sink.grad_mut(2) {
                for b in 0..nb {
                    for (o, d) in gb.iter_mut().enumerate() {
                        *d += g[(b * co + o) * sp..][..sp].iter().sum::<f64>();
                    }
                }
            }
        })
    }

    /// `weight · x + bias` for `x` of shape `[in]` or `[batch, in]`.
    pub fn fully_connected(&mut self, x: Var, weight: Var, bias: Var) -> Result<Var> {
        match *self.shape(x) {
            [n] => {
                let x2 = self.reshape(x, &[1, n])?;
                let y = self.channel_fc(x2, weight, bias)?;
                let out = self.shape(y)[1];
                self.reshape(y, &[out])
            }
            [_, _] => self.channel_fc(x, weight, bias),
            ref s => Err(AdError::Shape(format!("fully_connected input {s:?}"))),
        }
    }

    pub fn selu(&mut self, a: Var) -> Result<Var> {
        self.unary_act(
            a,
            |x| {
                if x > 0.0 {
                    SELU_LAMBDA * x
                } else {
                    SELU_LAMBDA * SELU_ALPHA * x.exp_m1()
                }
            },
            |x, y| if x > 0.0 { SELU_LAMBDA } else { y + SELU_LAMBDA * SELU_ALPHA },
        )
    }

    /// Exact GELU, `x Φ(x)`.
    pub fn gelu(&mut self, a: Var) -> Result<Var> {
        let cdf = |x: f64| 0.5 * (1.0 + libm::erf(x / std::f64::consts::SQRT_2));
        self.unary_act(a, move |x| x * cdf(x), move |x, _| {
            let pdf = (-0.5 * x * x).exp() / (2.0 * std::f64::consts::PI).sqrt();
            cdf(x) + x * pdf
        })
    }

    fn unary_act<F, D>(&mut self, a: Var, f: F, df: D) -> Result<Var>
    where
        F: Fn(f64) -> f64,
        D: Fn(f64, f64) -> f64 + 'static,
    {
        let value = self.value(a).iter().map(|&x| f(x)).collect();
        let shape = self.shape(a).to_vec();
        self.push_op(value, &shape, &[a], move |ctx, sink| {
            let (x, y, g) = (ctx.input(0), ctx.output(), ctx.grad_output());
            if let Some(ga) = sink.grad_mut(0) {
                for i in 0..ga.len() {
                    ga[i] += g[i] * df(x[i], y[i]);
                }
            }
        })
    }

    /// Softmax over axis 1 of `[batch, classes, ...]`.
    pub fn softmax(&mut self, logits: Var) -> Result<Var> {
        let shape = self.shape(logits).to_vec();
        let (nb, nc, sp) = class_layout(&shape)?;
        let probs = softmax_values(self.value(logits), nb, nc, sp);
        self.push_op(probs, &shape, &[logits], move |ctx, sink| {
            let (p, g) = (ctx.output(), ctx.grad_output());
            if let Some(gx) = sink.grad_mut(0) {
                for b in 0..nb {
                    for s in 0..sp {
                        let idx = |c: usize| (b * nc + c) * sp + s;
                        let inner: f64 = (0..nc).map(|c| g[idx(c)] * p[idx(c)]).sum();
                        for c in 0..nc {
                            gx[idx(c)] += p[idx(c)] * (g[idx(c)] - inner);
                        }
                    }
                }
            }
        })
    }

    /// Cross-entropy of softmax over axis 1 against integer targets laid out
    /// as `[batch, ...]`; summed over positions and averaged over the batch.
    pub fn softmax_nll(&mut self, logits: Var, targets: &[usize]) -> Result<Var> {
        let shape = self.shape(logits).to_vec();
        let (nb, nc, sp) = class_layout(&shape)?;
        if targets.len() != nb * sp {
            return Err(AdError::Shape(format!(
                "{} targets for {nb} x {sp} positions",
                targets.len()
            )));
        }
        if let Some(&bad) = targets.iter().find(|&&t| t >= nc) {
            return Err(AdError::Target { index: bad, classes: nc });
        }
        let z = self.value(logits);
        let mut probs = vec![0.0; z.len()];
        let mut loss = 0.0;
        for b in 0..nb {
            for s in 0..sp {
                let idx = |c: usize| (b * nc + c) * sp + s;
                let m = (0..nc).map(|c| z[idx(c)]).fold(f64::NEG_INFINITY, f64::max);
                let total: f64 = (0..nc).map(|c| (z[idx(c)] - m).exp()).sum();
                for c in 0..nc {
                    probs[idx(c)] = (z[idx(c)] - m).exp() / total;
                }
                let t = targets[b * sp + s];
                loss += m + total.ln() - z[idx(t)];
            }
        }
        let targets = targets.to_vec();
        self.push_op(vec![loss / nb as f64], &[1], &[logits], move |ctx, sink| {
            let k = ctx.grad_output()[0] / nb as f64;
            if let Some(gx) = sink.grad_mut(0) {
                for (i, (d, p)) in gx.iter_mut().zip(&probs).enumerate() {
                    *d += k * p;
                    let (b, c, s) = (i / (nc * sp), (i / sp) % nc, i % sp);
                    if targets[b * sp + s] == c {
                        *d -= k;
                    }
                }
            }
        })
    }
}

fn class_layout(shape: &[usize]) -> Result<(usize, usize, usize)> {
    if shape.len() < 2 || shape[1] == 0 {
        return Err(AdError::Shape(format!("class axis missing in {shape:?}")));
    }
    Ok((shape[0], shape[1], numel(&shape[2..])))
}

fn softmax_values(z: &[f64], nb: usize, nc: usize, sp: usize) -> Vec<f64> {
    let mut p = vec![0.0; z.len()];
    for b in 0..nb {
        for s in 0..sp {
            let idx = |c: usize| (b * nc + c) * sp + s;
            let m = (0..nc).map(|c| z[idx(c)]).fold(f64::NEG_INFINITY, f64::max);
            let total: f64 = (0..nc).map(|c| (z[idx(c)] - m).exp()).sum();
            for c in 0..nc {
                p[idx(c)] = (z[idx(c)] - m).exp() / total;
            }
        }
    }
    p
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identity_kernel_reproduces_input() {
        let mut t = Tape::new();
        let x: Vec<f64> = (0..12).map(f64::from).collect();
        let input = t.constant(x.clone(), &[1, 1, 3, 4]).unwrap();
        let mut k = vec![0.0; 9];
        k[4] = 1.0;
        let w = t.constant(k, &[1, 1, 3, 3]).unwrap();
        let y = t.conv2d(input, w, None, (1, 1)).unwrap();
        assert_eq!(t.shape(y), &[1, 1, 3, 4]);
        assert_eq!(t.value(y), x.as_slice());
    }

    #[test]
    fn conv_matches_direct_sum() {
        let mut t = Tape::new();
        let input = t.constant(vec![1.0, 2.0, 3.0, 4.0], &[1, 1, 1, 4]).unwrap();
        let w = t.constant(vec![1.0, 10.0, 100.0], &[1, 1, 1, 3]).unwrap();
        let b = t.constant(vec![0.5], &[1]).unwrap();
        let y = t.conv2d(input, w, Some(b), (0, 2)).unwrap();
        // Output column o reads input columns o-2, o-1, o.
        assert_eq!(t.value(y), &[100.5, 210.5, 321.5, 432.5, 43.5, 4.5]);
    }

    #[test]
    fn selu_values() {
        let mut t = Tape::new();
        let x = t.constant(vec![0.0, 1.0, -1e3], &[3]).unwrap();
        let y = t.selu(x).unwrap();
        let v = t.value(y);
        assert_eq!(v[0], 0.0);
        assert!((v[1] - SELU_LAMBDA).abs() < 1e-15);
        assert!((v[2] + SELU_LAMBDA * SELU_ALPHA).abs() < 1e-12);
    }

    #[test]
    fn batch_norm_normalizes() {
        let mut t = Tape::new();
        let x = t.constant(vec![1.0, 2.0, 3.0, 4.0, 10.0, 20.0, 30.0, 40.0], &[2, 2, 2]).unwrap();
        let g = t.constant(vec![1.0, 1.0], &[2]).unwrap();
        let b = t.constant(vec![0.0, 0.0], &[2]).unwrap();
        let (y, stats) = t.batch_norm(x, g, b, BatchNormMode::Train).unwrap();
        let stats = stats.unwrap();
        assert_eq!(stats.mean, vec![8.25, 19.25]);
        let v = t.value(y);
        let m0 = (v[0] + v[1] + v[4] + v[5]) / 4.0;
        assert!(m0.abs() < 1e-12);
    }

    #[test]
    fn batch_of_one_is_rejected() {
        let mut t = Tape::new();
        let x = t.constant(vec![1.0, 2.0], &[1, 2]).unwrap();
        let g = t.constant(vec![1.0, 1.0], &[2]).unwrap();
        let b = t.constant(vec![0.0, 0.0], &[2]).unwrap();
        assert!(matches!(
            t.batch_norm(x, g, b, BatchNormMode::Train),
            Err(AdError::BatchTooSmall(1))
        ));
    }

    #[test]
    fn nll_of_dominant_correct_logit_vanishes() {
        let mut t = Tape::new();
        let z = t.constant(vec![800.0, 0.0, -3.0, 1.0], &[1, 4]).unwrap();
        let loss = t.softmax_nll(z, &[0]).unwrap();
        assert!(t.item(loss).abs() < 1e-300);
        assert!(t.item(loss).is_finite());
    }

    #[test]
    fn bad_target_is_rejected() {
        let mut t = Tape::new();
        let z = t.constant(vec![0.0; 4], &[1, 4]).unwrap();
        assert!(matches!(t.softmax_nll(z, &[4]), Err(AdError::Target { .. })));
    }
}
