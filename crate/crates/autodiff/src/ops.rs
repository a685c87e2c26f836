//! Element-wise arithmetic, reductions and shape manipulation.

use crate::tape::numel;
use crate::{AdError, Result, Tape, Var};

fn check_same(tape: &Tape, a: Var, b: Var, op: &str) -> Result<()> {
    if tape.shape(a) != tape.shape(b) {
        return Err(AdError::Shape(format!(
            "{op}: {:?} vs {:?}",
            tape.shape(a),
            tape.shape(b)
        )));
    }
    Ok(())
}

impl Tape {
    fn unary<F, D>(&mut self, a: Var, f: F, df: D) -> Result<Var>
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

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        check_same(self, a, b, "add")?;
        let value = self.value(a).iter().zip(self.value(b)).map(|(x, y)| x + y).collect();
        let shape = self.shape(a).to_vec();
        self.push_op(value, &shape, &[a, b], |ctx, sink| {
            let g = ctx.grad_output();
            for i in 0..2 {
                if let Some(gi) = sink.grad_mut(i) {
                    gi.iter_mut().zip(g).for_each(|(d, s)| *d += s);
                }
            }
        })
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        check_same(self, a, b, "sub")?;
        let value = self.value(a).iter().zip(self.value(b)).map(|(x, y)| x - y).collect();
        let shape = self.shape(a).to_vec();
        self.push_op(value, &shape, &[a, b], |ctx, sink| {
            let g = ctx.grad_output();
            if let Some(ga) = sink.grad_mut(0) {
                ga.iter_mut().zip(g).for_each(|(d, s)| *d += s);
            }
            if let Some(gb) = sink.grad_mut(1) {
                gb.iter_mut().zip(g).for_each(|(d, s)| *d -= s);
            }
        })
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        check_same(self, a, b, "mul")?;
        let value = self.value(a).iter().zip(self.value(b)).map(|(x, y)| x * y).collect();
        let shape = self.shape(a).to_vec();
        self.push_op(value, &shape, &[a, b], |ctx, sink| {
            let g = ctx.grad_output();
            let (x, y) = (ctx.input(0), ctx.input(1));
            if let Some(ga) = sink.grad_mut(0) {
                for i in 0..ga.len() {
                    ga[i] += g[i] * y[i];
                }
            }
            if let Some(gb) = sink.grad_mut(1) {
                for i in 0..gb.len() {
                    gb[i] += g[i] * x[i];
                }
            }
        })
    }

    pub fn div(&mut self, a: Var, b: Var) -> Result<Var> {
        check_same(self, a, b, "div")?;
        let value = self.value(a).iter().zip(self.value(b)).map(|(x, y)| x / y).collect();
        let shape = self.shape(a).to_vec();
        self.push_op(value, &shape, &[a, b], |ctx, sink| {
            let g = ctx.grad_output();
            let (x, y) = (ctx.input(0), ctx.input(1));
            if let Some(ga) = sink.grad_mut(0) {
                for i in 0..ga.len() {
                    ga[i] += g[i] / y[i];
                }
            }
            if let Some(gb) = sink.grad_mut(1) {
                for i in 0..gb.len() {
                    gb[i] -= g[i] * x[i] / (y[i] * y[i]);
                }
            }
        })
    }

    /// Element-wise maximum; ties send the gradient to `a`.
    pub fn maximum(&mut self, a: Var, b: Var) -> Result<Var> {
        check_same(self, a, b, "maximum")?;
        let value = self.value(a).iter().zip(self.value(b)).map(|(x, y)| x.max(*y)).collect();
        let shape = self.shape(a).to_vec();
        self.push_op(value, &shape, &[a, b], |ctx, sink| {
            let g = ctx.grad_output();
            let (x, y) = (ctx.input(0), ctx.input(1));
            if let Some(ga) = sink.grad_mut(0) {
                for i in 0..ga.len() {
                    if x[i] >= y[i] {
                        ga[i] += g[i];
                    }
                }
            }
            if let Some(gb) = sink.grad_mut(1) {
                for i in 0..gb.len() {
                    if x[i] < y[i] {
                        gb[i] += g[i];
                    }
                }
            }
        })
    }

    pub fn scale(&mut self, a: Var, factor: f64) -> Result<Var> {
        self.unary(a, |x| factor * x, move |_, _| factor)
    }

    pub fn add_scalar(&mut self, a: Var, offset: f64) -> Result<Var> {
        self.unary(a, |x| x + offset, |_, _| 1.0)
    }

    pub fn square(&mut self, a: Var) -> Result<Var> {
        self.unary(a, |x| x * x, |x, _| 2.0 * x)
    }

    pub fn ln(&mut self, a: Var) -> Result<Var> {
        self.unary(a, f64::ln, |x, _| 1.0 / x)
    }

    pub fn relu(&mut self, a: Var) -> Result<Var> {
        self.unary(a, |x| x.max(0.0), |x, _| if x > 0.0 { 1.0 } else { 0.0 })
    }

    /// Multiplies every element of `x` by the single-element tensor `s`.
    pub fn mul_scalar(&mut self, s: Var, x: Var) -> Result<Var> {
        if self.value(s).len() != 1 {
            return Err(AdError::Shape(format!("mul_scalar: factor has shape {:?}", self.shape(s))));
        }
        let k = self.item(s);
        let value = self.value(x).iter().map(|v| k * v).collect();
        let shape = self.shape(x).to_vec();
        self.push_op(value, &shape, &[s, x], |ctx, sink| {
            let g = ctx.grad_output();
            let (k, xs) = (ctx.input(0)[0], ctx.input(1));
            if let Some(gs) = sink.grad_mut(0) {
                gs[0] += g.iter().zip(xs).map(|(a, b)| a * b).sum::<f64>();
            }
            if let Some(gx) = sink.grad_mut(1) {
                gx.iter_mut().zip(g).for_each(|(d, s)| *d += k * s);
            }
        })
    }

    pub fn sum(&mut self, a: Var) -> Result<Var> {
        let total = self.value(a).iter().sum();
        self.push_op(vec![total], &[1], &[a], |ctx, sink| {
            let g = ctx.grad_output()[0];
            if let Some(ga) = sink.grad_mut(0) {
                ga.iter_mut().for_each(|d| *d += g);
            }
        })
    }

    pub fn mean(&mut self, a: Var) -> Result<Var> {
        let n = self.value(a).len();
        if n == 0 {
            return Err(AdError::Shape("mean of an empty tensor".into()));
        }
        let s = self.sum(a)?;
        self.scale(s, 1.0 / n as f64)
    }

    /// Contiguous flat slice `[start, start + len)` as a 1-D tensor.
    pub fn slice(&mut self, a: Var, start: usize, len: usize) -> Result<Var> {
        let n = self.value(a).len();
        if start + len > n {
            return Err(AdError::Shape(format!("slice {start}..{} of {n}", start + len)));
        }
        let value = self.value(a)[start..start + len].to_vec();
        self.push_op(value, &[len], &[a], move |ctx, sink| {
            let g = ctx.grad_output();
            if let Some(ga) = sink.grad_mut(0) {
                ga[start..start + len].iter_mut().zip(g).for_each(|(d, s)| *d += s);
            }
        })
    }

    pub fn reshape(&mut self, a: Var, shape: &[usize]) -> Result<Var> {
        if numel(shape) != self.value(a).len() {
            return Err(AdError::Shape(format!(
                "reshape {:?} to {shape:?}",
                self.shape(a)
            )));
        }
        let value = self.value(a).to_vec();
        self.push_op(value, shape, &[a], |ctx, sink| {
            let g = ctx.grad_output();
            if let Some(ga) = sink.grad_mut(0) {
                ga.iter_mut().zip(g).for_each(|(d, s)| *d += s);
            }
        })
    }

    /// Concatenates tensors along `axis`; all other dimensions must agree.
    pub fn concat(&mut self, parts: &[Var], axis: usize) -> Result<Var> {
        let first = parts
            .first()
            .ok_or_else(|| AdError::Shape("concat of nothing".into()))?;
        let base = self.shape(*first).to_vec();
        if axis >= base.len() {
            return Err(AdError::Shape(format!("concat axis {axis} for rank {}", base.len())));
        }
        let mut widths = Vec::with_capacity(parts.len());
        for &p in parts {
            let s = self.shape(p);
            let compatible = s.len() == base.len()
                && s.iter().zip(&base).enumerate().all(|(d, (x, y))| d == axis || x == y);
            if !compatible {
                return Err(AdError::Shape(format!("concat {:?} with {base:?} on axis {axis}", s)));
            }
            widths.push(s[axis]);
        }
        let outer: usize = base[..axis].iter().product();
        let inner: usize = base[axis + 1..].iter().product();
        let total_axis: usize = widths.iter().sum();
        let mut value = Vec::with_capacity(outer * total_axis * inner);
        for o in 0..outer {
            for (&p, &w) in parts.iter().zip(&widths) {
                let chunk = w * inner;
                value.extend_from_slice(&self.value(p)[o * chunk..(o + 1) * chunk]);
            }
        }
        let mut shape = base;
        shape[axis] = total_axis;
        self.push_op(value, &shape, parts, move |ctx, sink| {
            let g = ctx.grad_output();
            let row = total_axis * inner;
            let mut offset = 0;
            for (i, &w) in widths.iter().enumerate() {
                let chunk = w * inner;
                if let Some(gi) = sink.grad_mut(i) {
                    for o in 0..outer {
                        let src = &g[o * row + offset..o * row + offset + chunk];
                        gi[o * chunk..(o + 1) * chunk]
                            .iter_mut()
                            .zip(src)
                            .for_each(|(d, s)| *d += s);
                    }
                }
                offset += chunk;
            }
        })
    }
}
