//! Op implementations for [`Tape`].
//!
//! Conventions:
//! - image tensors are NCHW; weight tensors are [out_c, in_c, kh, kw]
//! - convolution uses zero padding; `pad` is applied on all four sides
//! - backward closures recompute im2col patches instead of caching them,
//!   trading FLOPs for a much smaller live tape
//! - weight gradients are skipped entirely for non-trainable params

use std::rc::Rc;

use super::{Grads, Param, Tape, Value};
use crate::error::{Error, Result};
use crate::tensor::{gemm, Tensor};

const NORM_EPS: f64 = 1e-5;

/// Output length of a strided convolution along one axis.
fn conv_out_len(input: usize, k: usize, stride: usize, pad: usize) -> usize {
    (input + 2 * pad - k) / stride + 1
}

/// Scatter input patches into a [c*kh*kw, oh*ow] column matrix.
#[allow(clippy::too_many_arguments)]
fn im2col(
    x: &[f64],
    c: usize,
    h: usize,
    w: usize,
    kh: usize,
    kw: usize,
    stride: usize,
    pad: usize,
    oh: usize,
    ow: usize,
    cols: &mut [f64],
) {
    debug_assert_eq!(cols.len(), c * kh * kw * oh * ow);
    for ci in 0..c {
        let x_c = &x[ci * h * w..(ci + 1) * h * w];
        for ki in 0..kh {
            for kj in 0..kw {
                let row = ((ci * kh + ki) * kw + kj) * (oh * ow);
                for oi in 0..oh {
                    let yi = (oi * stride + ki) as isize - pad as isize;
                    let out_row = &mut cols[row + oi * ow..row + (oi + 1) * ow];
                    if yi < 0 || yi >= h as isize {
                        out_row.fill(0.0);
                        continue;
                    }
                    let x_row = &x_c[yi as usize * w..(yi as usize + 1) * w];
                    for (oj, slot) in out_row.iter_mut().enumerate() {
                        let xj = (oj * stride + kj) as isize - pad as isize;
                        *slot = if xj < 0 || xj >= w as isize {
                            0.0
                        } else {
                            x_row[xj as usize]
                        };
                    }
                }
            }
        }
    }
}

/// Adjoint of [`im2col`]: accumulate column gradients back onto the image.
#[allow(clippy::too_many_arguments)]
fn col2im(
    cols: &[f64],
    c: usize,
    h: usize,
    w: usize,
    kh: usize,
    kw: usize,
    stride: usize,
    pad: usize,
    oh: usize,
    ow: usize,
    dx: &mut [f64],
) {
    for ci in 0..c {
        let dx_c = &mut dx[ci * h * w..(ci + 1) * h * w];
        for ki in 0..kh {
            for kj in 0..kw {
                let row = ((ci * kh + ki) * kw + kj) * (oh * ow);
                for oi in 0..oh {
                    let yi = (oi * stride + ki) as isize - pad as isize;
                    if yi < 0 || yi >= h as isize {
                        continue;
                    }
                    let col_row = &cols[row + oi * ow..row + (oi + 1) * ow];
                    for (oj, &g) in col_row.iter().enumerate() {
                        let xj = (oj * stride + kj) as isize - pad as isize;
                        if xj >= 0 && (xj as usize) < w {
                            dx_c[yi as usize * w + xj as usize] += g;
                        }
                    }
                }
            }
        }
    }
}

impl Tape {
    fn unary(
        &mut self,
        x: Value,
        out: Tensor,
        dfdx: impl FnOnce(&Tensor) -> Tensor + 'static,
    ) -> Value {
        let xid = x.0;
        self.push(
            Rc::new(out),
            Some(Box::new(move |g: &Tensor, grads: &mut Grads| {
                grads.accum(xid, dfdx(g));
            })),
        )
    }

    /// Elementwise a + b (shapes must already match).
    pub fn add(&mut self, a: Value, b: Value) -> Value {
        let (ta, tb) = (self.value(a), self.value(b));
        assert_eq!(ta.shape(), tb.shape(), "add shape mismatch");
        let out = ta.zip(tb, |x, y| x + y);
        let (ia, ib) = (a.0, b.0);
        self.push(
            Rc::new(out),
            Some(Box::new(move |g, grads| {
                grads.accum(ia, g.clone());
                grads.accum(ib, g.clone());
            })),
        )
    }

    /// Elementwise a - b.
    pub fn sub(&mut self, a: Value, b: Value) -> Value {
        let (ta, tb) = (self.value(a), self.value(b));
        assert_eq!(ta.shape(), tb.shape(), "sub shape mismatch");
        let out = ta.zip(tb, |x, y| x - y);
        let (ia, ib) = (a.0, b.0);
        self.push(
            Rc::new(out),
            Some(Box::new(move |g, grads| {
                grads.accum(ia, g.clone());
                grads.accum(ib, g.map(|v| -v));
            })),
        )
    }

    /// Elementwise a * b.
    pub fn mul(&mut self, a: Value, b: Value) -> Value {
        let (ta, tb) = (self.value(a), self.value(b));
        assert_eq!(ta.shape(), tb.shape(), "mul shape mismatch");
        let out = ta.zip(tb, |x, y| x * y);
        let (ra, rb) = (Rc::clone(&self.vals[a.0]), Rc::clone(&self.vals[b.0]));
        let (ia, ib) = (a.0, b.0);
        self.push(
            Rc::new(out),
            Some(Box::new(move |g, grads| {
                grads.accum(ia, g.zip(&rb, |gv, bv| gv * bv));
                grads.accum(ib, g.zip(&ra, |gv, av| gv * av));
            })),
        )
    }

    /// scale * x + offset, elementwise.
    pub fn affine(&mut self, x: Value, scale: f64, offset: f64) -> Value {
        let out = self.value(x).map(|v| scale * v + offset);
        self.unary(x, out, move |g| g.map(|v| scale * v))
    }

    pub fn abs(&mut self, x: Value) -> Value {
        let rx = Rc::clone(&self.vals[x.0]);
        let out = rx.map(f64::abs);
        // Subgradient 0 at the kink.
        self.unary(x, out, move |g| {
            g.zip(&rx, |gv, xv| gv * if xv > 0.0 { 1.0 } else if xv < 0.0 { -1.0 } else { 0.0 })
        })
    }

    pub fn square(&mut self, x: Value) -> Value {
        let rx = Rc::clone(&self.vals[x.0]);
        let out = rx.map(|v| v * v);
        self.unary(x, out, move |g| g.zip(&rx, |gv, xv| 2.0 * xv * gv))
    }

    pub fn sqrt(&mut self, x: Value) -> Value {
        let out = Rc::new(self.value(x).map(f64::sqrt));
        let ry = Rc::clone(&out);
        let xid = x.0;
        self.push(
            Rc::new((*out).clone()),
            Some(Box::new(move |g, grads| {
                grads.accum(
                    xid,
                    g.zip(&ry, |gv, yv| if yv > 0.0 { gv / (2.0 * yv) } else { 0.0 }),
                );
            })),
        )
    }

    /// ln(clamp(x, lo, hi)). Clamped elements are counted on the tape's
    /// guard counter and receive zero gradient, so saturated probabilities
    /// degrade the update instead of producing infinities.
    pub fn ln_clamped(&mut self, x: Value, lo: f64, hi: f64) -> Value {
        let rx = Rc::clone(&self.vals[x.0]);
        let hits = rx
            .data()
            .iter()
            .filter(|&&v| !(lo..=hi).contains(&v))
            .count() as u64;
        self.note_guard_hits(hits);
        let out = rx.map(|v| v.clamp(lo, hi).ln());
        self.unary(x, out, move |g| {
            g.zip(&rx, |gv, xv| if xv > lo && xv < hi { gv / xv } else { 0.0 })
        })
    }

    /// clamp(x, lo, hi) with pass-through gradient strictly inside the range.
    pub fn clamp(&mut self, x: Value, lo: f64, hi: f64) -> Value {
        let rx = Rc::clone(&self.vals[x.0]);
        let out = rx.map(|v| v.clamp(lo, hi));
        self.unary(x, out, move |g| {
            g.zip(&rx, |gv, xv| if xv > lo && xv < hi { gv } else { 0.0 })
        })
    }

    pub fn relu(&mut self, x: Value) -> Value {
        let rx = Rc::clone(&self.vals[x.0]);
        let out = rx.map(|v| v.max(0.0));
        self.unary(x, out, move |g| {
            g.zip(&rx, |gv, xv| if xv > 0.0 { gv } else { 0.0 })
        })
    }

    pub fn leaky_relu(&mut self, x: Value, slope: f64) -> Value {
        let rx = Rc::clone(&self.vals[x.0]);
        let out = rx.map(|v| if v > 0.0 { v } else { slope * v });
        self.unary(x, out, move |g| {
            g.zip(&rx, |gv, xv| if xv > 0.0 { gv } else { slope * gv })
        })
    }

    pub fn tanh(&mut self, x: Value) -> Value {
        let out = Rc::new(self.value(x).map(f64::tanh));
        let ry = Rc::clone(&out);
        let xid = x.0;
        self.push(
            out,
            Some(Box::new(move |g, grads| {
                grads.accum(xid, g.zip(&ry, |gv, yv| gv * (1.0 - yv * yv)));
            })),
        )
    }

    pub fn sigmoid(&mut self, x: Value) -> Value {
        let out = Rc::new(self.value(x).map(|v| 1.0 / (1.0 + (-v).exp())));
        let ry = Rc::clone(&out);
        let xid = x.0;
        self.push(
            out,
            Some(Box::new(move |g, grads| {
                grads.accum(xid, g.zip(&ry, |gv, yv| gv * yv * (1.0 - yv)));
            })),
        )
    }

    /// Mean over every element, producing a scalar node.
    pub fn mean_all(&mut self, x: Value) -> Value {
        let tx = self.value(x);
        let n = tx.len() as f64;
        let shape = tx.shape().to_vec();
        let out = Tensor::scalar(tx.mean());
        self.unary(x, out, move |g| {
            Tensor::full(&shape, g.item() / n)
        })
    }

    /// Sum over every element, producing a scalar node.
    pub fn sum_all(&mut self, x: Value) -> Value {
        let tx = self.value(x);
        let shape = tx.shape().to_vec();
        let out = Tensor::scalar(tx.data().iter().sum());
        self.unary(x, out, move |g| Tensor::full(&shape, g.item()))
    }

    /// 2D convolution with zero padding: x [N,C,H,W], w [K,C,kh,kw] -> [N,K,oh,ow].
    pub fn conv2d(
        &mut self,
        x: Value,
        weight: &Param,
        bias: Option<&Param>,
        stride: usize,
        pad: usize,
    ) -> Result<Value> {
        let rx = Rc::clone(&self.vals[x.0]);
        let (n, c, h, w) = rx.dims4()?;
        let wshape = weight.shape();
        if wshape.len() != 4 || wshape[1] != c {
            return Err(Error::Shape(format!(
                "conv2d weight {:?} does not accept {} input channels",
                wshape, c
            )));
        }
        let (k, kh, kw) = (wshape[0], wshape[2], wshape[3]);
        if let Some(b) = bias {
            if b.shape() != [k] {
                return Err(Error::Shape(format!(
                    "conv2d bias {:?} does not match {} output channels",
                    b.shape(),
                    k
                )));
            }
        }
        if stride == 0 {
            return Err(Error::Shape("conv2d stride must be positive".into()));
        }
        if h + 2 * pad < kh || w + 2 * pad < kw {
            return Err(Error::Shape(format!(
                "conv2d input {}x{} too small for {}x{} kernel with pad {}",
                h, w, kh, kw, pad
            )));
        }
        let oh = conv_out_len(h, kh, stride, pad);
        let ow = conv_out_len(w, kw, stride, pad);
        let ckk = c * kh * kw;

        let mut out = Tensor::zeros(&[n, k, oh, ow]);
        let mut cols = vec![0.0; ckk * oh * ow];
        {
            let wt = weight.borrow();
            let bias_vals: Option<Vec<f64>> = bias.map(|b| b.borrow().value.data().to_vec());
            for s in 0..n {
                im2col(
                    &rx.data()[s * c * h * w..(s + 1) * c * h * w],
                    c, h, w, kh, kw, stride, pad, oh, ow, &mut cols,
                );
                let out_s = &mut out.data_mut()[s * k * oh * ow..(s + 1) * k * oh * ow];
                gemm(
                    false, false, k, ckk, oh * ow,
                    1.0, wt.value.data(), &cols, 0.0, out_s,
                );
                if let Some(bv) = &bias_vals {
                    for (ki, &b) in bv.iter().enumerate() {
                        for v in &mut out_s[ki * oh * ow..(ki + 1) * oh * ow] {
                            *v += b;
                        }
                    }
                }
            }
        }

        let xid = x.0;
        let weight = weight.clone();
        let bias = bias.cloned();
        Ok(self.push(
            Rc::new(out),
            Some(Box::new(move |g: &Tensor, grads: &mut Grads| {
                let want_w = weight.trainable();
                let want_b = bias.as_ref().map(|b| b.trainable()).unwrap_or(false);
                let mut dx = Tensor::zeros(&[n, c, h, w]);
                let mut cols = vec![0.0; ckk * oh * ow];
                let mut dcols = vec![0.0; ckk * oh * ow];
                for s in 0..n {
                    let g_s = &g.data()[s * k * oh * ow..(s + 1) * k * oh * ow];
                    if want_w || want_b {
                        im2col(
                            &rx.data()[s * c * h * w..(s + 1) * c * h * w],
                            c, h, w, kh, kw, stride, pad, oh, ow, &mut cols,
                        );
                        if want_w {
                            // dW += g_s [k, oh*ow] x cols^T [oh*ow, ckk]
                            gemm(
                                false, true, k, oh * ow, ckk,
                                1.0, g_s, &cols, 1.0,
                                weight.borrow_mut().grad.data_mut(),
                            );
                        }
                        if want_b {
                            let b = bias.as_ref().unwrap();
                            let mut bg = b.borrow_mut();
                            for ki in 0..k {
                                bg.grad.data_mut()[ki] +=
                                    g_s[ki * oh * ow..(ki + 1) * oh * ow].iter().sum::<f64>();
                            }
                        }
                    }
                    // dcols = W^T [ckk, k] x g_s [k, oh*ow]
                    gemm(
                        true, false, ckk, k, oh * ow,
                        1.0, weight.borrow().value.data(), g_s, 0.0, &mut dcols,
                    );
                    col2im(
                        &dcols,
                        c, h, w, kh, kw, stride, pad, oh, ow,
                        &mut dx.data_mut()[s * c * h * w..(s + 1) * c * h * w],
                    );
                }
                grads.accum(xid, dx);
            })),
        ))
    }

    /// Instance normalization over the spatial extent of each (sample,
    /// channel) plane, with learned per-channel scale and shift.
    pub fn instance_norm(&mut self, x: Value, scale: &Param, shift: &Param) -> Result<Value> {
        let rx = Rc::clone(&self.vals[x.0]);
        let (n, c, h, w) = rx.dims4()?;
        if scale.shape() != [c] || shift.shape() != [c] {
            return Err(Error::Shape(format!(
                "instance_norm affine params {:?}/{:?} do not match {} channels",
                scale.shape(),
                shift.shape(),
                c
            )));
        }
        let hw = h * w;
        let mut xhat = Tensor::zeros(rx.shape());
        let mut inv_std = vec![0.0; n * c];
        {
            let sc = scale.borrow();
            let sh = shift.borrow();
            for p in 0..n * c {
                let plane = &rx.data()[p * hw..(p + 1) * hw];
                let mean = plane.iter().sum::<f64>() / hw as f64;
                let var = plane.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / hw as f64;
                let istd = 1.0 / (var + NORM_EPS).sqrt();
                inv_std[p] = istd;
                let (g, b) = (sc.value.data()[p % c], sh.value.data()[p % c]);
                for (o, &v) in xhat.data_mut()[p * hw..(p + 1) * hw]
                    .iter_mut()
                    .zip(plane.iter())
                {
                    *o = (v - mean) * istd * g + b;
                }
            }
        }
        // The stored output folds in the affine transform; the backward pass
        // needs the pre-affine normalized activations, so recompute them from
        // the output rather than caching a second full tensor.
        let out = Rc::new(xhat);
        let ry = Rc::clone(&out);
        let xid = x.0;
        let scale = scale.clone();
        let shift = shift.clone();
        Ok(self.push(
            out,
            Some(Box::new(move |g: &Tensor, grads: &mut Grads| {
                let mut dx = Tensor::zeros(&[n, c, h, w]);
                let sc_vals: Vec<f64> = scale.borrow().value.data().to_vec();
                let sh_vals: Vec<f64> = shift.borrow().value.data().to_vec();
                let train_affine = scale.trainable();
                let mut dsc = vec![0.0; c];
                let mut dsh = vec![0.0; c];
                for p in 0..n * c {
                    let ci = p % c;
                    let (gam, bet) = (sc_vals[ci], sh_vals[ci]);
                    let gy = &g.data()[p * hw..(p + 1) * hw];
                    let ys = &ry.data()[p * hw..(p + 1) * hw];
                    // xhat recovered from the affine output.
                    let mut sum_g = 0.0;
                    let mut sum_gx = 0.0;
                    for (&gv, &yv) in gy.iter().zip(ys.iter()) {
                        let xh = (yv - bet) / gam;
                        sum_g += gv;
                        sum_gx += gv * xh;
                    }
                    if train_affine {
                        dsc[ci] += sum_gx;
                        dsh[ci] += sum_g;
                    }
                    let mg = sum_g / hw as f64;
                    let mgx = sum_gx / hw as f64;
                    let k = gam * inv_std[p];
                    for ((o, &gv), &yv) in dx.data_mut()[p * hw..(p + 1) * hw]
                        .iter_mut()
                        .zip(gy.iter())
                        .zip(ys.iter())
                    {
                        let xh = (yv - bet) / gam;
                        *o = k * (gv - mg - xh * mgx);
                    }
                }
                if train_affine {
                    let mut sc_mut = scale.borrow_mut();
                    for (o, d) in sc_mut.grad.data_mut().iter_mut().zip(dsc) {
                        *o += d;
                    }
                    drop(sc_mut);
                    let mut sh_mut = shift.borrow_mut();
                    for (o, d) in sh_mut.grad.data_mut().iter_mut().zip(dsh) {
                        *o += d;
                    }
                }
                grads.accum(xid, dx);
            })),
        ))
    }

    /// Nearest-neighbor 2x upsampling.
    pub fn upsample2(&mut self, x: Value) -> Result<Value> {
        let rx = Rc::clone(&self.vals[x.0]);
        let (n, c, h, w) = rx.dims4()?;
        let (oh, ow) = (2 * h, 2 * w);
        let mut out = Tensor::zeros(&[n, c, oh, ow]);
        for p in 0..n * c {
            let src = &rx.data()[p * h * w..(p + 1) * h * w];
            let dst = &mut out.data_mut()[p * oh * ow..(p + 1) * oh * ow];
            for i in 0..oh {
                for j in 0..ow {
                    dst[i * ow + j] = src[(i / 2) * w + j / 2];
                }
            }
        }
        let xid = x.0;
        Ok(self.push(
            Rc::new(out),
            Some(Box::new(move |g, grads| {
                let mut dx = Tensor::zeros(&[n, c, h, w]);
                for p in 0..n * c {
                    let gs = &g.data()[p * oh * ow..(p + 1) * oh * ow];
                    let ds = &mut dx.data_mut()[p * h * w..(p + 1) * h * w];
                    for i in 0..oh {
                        for j in 0..ow {
                            ds[(i / 2) * w + j / 2] += gs[i * ow + j];
                        }
                    }
                }
                grads.accum(xid, dx);
            })),
        ))
    }

    /// 2x2 max pooling with stride 2 (trailing odd row/column dropped).
    pub fn maxpool2(&mut self, x: Value) -> Result<Value> {
        let rx = Rc::clone(&self.vals[x.0]);
        let (n, c, h, w) = rx.dims4()?;
        let (oh, ow) = (h / 2, w / 2);
        if oh == 0 || ow == 0 {
            return Err(Error::Shape(format!(
                "maxpool2 input {}x{} too small",
                h, w
            )));
        }
        let mut out = Tensor::zeros(&[n, c, oh, ow]);
        let mut argmax = vec![0u32; n * c * oh * ow];
        for p in 0..n * c {
            let src = &rx.data()[p * h * w..(p + 1) * h * w];
            let dst = &mut out.data_mut()[p * oh * ow..(p + 1) * oh * ow];
            let arg = &mut argmax[p * oh * ow..(p + 1) * oh * ow];
            for i in 0..oh {
                for j in 0..ow {
                    let mut best = f64::NEG_INFINITY;
                    let mut best_at = 0usize;
                    for di in 0..2 {
                        for dj in 0..2 {
                            let at = (2 * i + di) * w + 2 * j + dj;
                            if src[at] > best {
                                best = src[at];
                                best_at = at;
                            }
                        }
                    }
                    dst[i * ow + j] = best;
                    arg[i * ow + j] = best_at as u32;
                }
            }
        }
        let xid = x.0;
        Ok(self.push(
            Rc::new(out),
            Some(Box::new(move |g, grads| {
                let mut dx = Tensor::zeros(&[n, c, h, w]);
                for p in 0..n * c {
                    let gs = &g.data()[p * oh * ow..(p + 1) * oh * ow];
                    let arg = &argmax[p * oh * ow..(p + 1) * oh * ow];
                    let ds = &mut dx.data_mut()[p * h * w..(p + 1) * h * w];
                    for (&gv, &at) in gs.iter().zip(arg.iter()) {
                        ds[at as usize] += gv;
                    }
                }
                grads.accum(xid, dx);
            })),
        ))
    }

    /// Concatenate along the channel axis: [N,C1,H,W] ++ [N,C2,H,W].
    pub fn concat_c(&mut self, a: Value, b: Value) -> Result<Value> {
        let ra = Rc::clone(&self.vals[a.0]);
        let rb = Rc::clone(&self.vals[b.0]);
        let (n, c1, h, w) = ra.dims4()?;
        let (n2, c2, h2, w2) = rb.dims4()?;
        if n != n2 || h != h2 || w != w2 {
            return Err(Error::Shape(format!(
                "concat_c operands {:?} and {:?} disagree outside the channel axis",
                ra.shape(),
                rb.shape()
            )));
        }
        let mut out = Tensor::zeros(&[n, c1 + c2, h, w]);
        let hw = h * w;
        for s in 0..n {
            let dst = &mut out.data_mut()[s * (c1 + c2) * hw..(s + 1) * (c1 + c2) * hw];
            dst[..c1 * hw].copy_from_slice(&ra.data()[s * c1 * hw..(s + 1) * c1 * hw]);
            dst[c1 * hw..].copy_from_slice(&rb.data()[s * c2 * hw..(s + 1) * c2 * hw]);
        }
        let (ia, ib) = (a.0, b.0);
        Ok(self.push(
            Rc::new(out),
            Some(Box::new(move |g, grads| {
                let mut da = Tensor::zeros(&[n, c1, h, w]);
                let mut db = Tensor::zeros(&[n, c2, h, w]);
                for s in 0..n {
                    let gs = &g.data()[s * (c1 + c2) * hw..(s + 1) * (c1 + c2) * hw];
                    da.data_mut()[s * c1 * hw..(s + 1) * c1 * hw]
                        .copy_from_slice(&gs[..c1 * hw]);
                    db.data_mut()[s * c2 * hw..(s + 1) * c2 * hw]
                        .copy_from_slice(&gs[c1 * hw..]);
                }
                grads.accum(ia, da);
                grads.accum(ib, db);
            })),
        ))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gradcheck::check_gradients;
    use rand::prelude::*;
    use rand_chacha::ChaCha8Rng;

    fn rand_tensor(rng: &mut ChaCha8Rng, shape: &[usize]) -> Tensor {
        let n: usize = shape.iter().product();
        Tensor::new(shape, (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect())
    }

    /// Forward-only sanity: conv against a hand-worked 1x1x3x3 example.
    #[test]
    fn conv2d_matches_hand_computation() {
        let mut tape = Tape::new();
        let x = tape.leaf(Tensor::new(
            &[1, 1, 3, 3],
            vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0, 7.0, 8.0, 9.0],
        ));
        // 3x3 averaging kernel, stride 1, pad 1; bias 10.
        let w = Param::new("w", Tensor::full(&[1, 1, 3, 3], 1.0 / 9.0), true);
        let b = Param::new("b", Tensor::new(&[1], vec![10.0]), true);
        let y = tape.conv2d(x, &w, Some(&b), 1, 1).unwrap();
        // Center tap sees all nine values: mean 5, plus bias.
        let out = tape.value(y);
        assert_eq!(out.shape(), &[1, 1, 3, 3]);
        assert!((out.data()[4] - 15.0).abs() < 1e-12);
        // Corner sees {1,2,4,5}: 12/9 + 10.
        assert!((out.data()[0] - (12.0 / 9.0 + 10.0)).abs() < 1e-12);
    }

    #[test]
    fn conv2d_stride_two_shape() {
        let mut tape = Tape::new();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let x = tape.leaf(rand_tensor(&mut rng, &[2, 3, 8, 8]));
        let w = Param::new("w", rand_tensor(&mut rng, &[4, 3, 3, 3]), true);
        let y = tape.conv2d(x, &w, None, 2, 1).unwrap();
        assert_eq!(tape.value(y).shape(), &[2, 4, 4, 4]);
    }

    /// Every differentiable op is validated against central differences on
    /// its weight parameters through a mean-reduction loss.
    #[test]
    fn gradients_match_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let x0 = rand_tensor(&mut rng, &[2, 2, 4, 4]);
        let w = Param::new("w", rand_tensor(&mut rng, &[3, 2, 3, 3]), true);
        let b = Param::new("b", rand_tensor(&mut rng, &[3]), true);
        let gamma = Param::new("g", rand_tensor(&mut rng, &[3]), true);
        // Keep |gamma| away from zero: the instance-norm backward divides by it.
        {
            let mut g = gamma.borrow_mut();
            for v in g.value.data_mut() {
                *v = 1.0 + 0.3 * *v;
            }
        }
        let beta = Param::new("be", rand_tensor(&mut rng, &[3]), true);
        let params = [w.clone(), b.clone(), gamma.clone(), beta.clone()];

        let report = check_gradients(&params, 1e-5, |grad| {
            let mut tape = Tape::new();
            let x = tape.leaf(x0.clone());
            let c = tape.conv2d(x, &w, Some(&b), 1, 1).unwrap();
            let nrm = tape.instance_norm(c, &gamma, &beta).unwrap();
            let a = tape.leaky_relu(nrm, 0.2);
            let up = tape.upsample2(a).unwrap();
            let cat = tape.concat_c(up, up).unwrap();
            let pool = tape.maxpool2(cat).unwrap();
            let t = tape.tanh(pool);
            let sq = tape.square(t);
            let loss = tape.mean_all(sq);
            if grad {
                tape.backward(loss);
            }
            tape.scalar(loss)
        });
        assert!(
            report.max_rel_err < 1e-6,
            "composite op chain gradcheck failed: {:?}",
            report
        );
    }

    #[test]
    fn scalar_op_gradients_match_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        // A 1x1 conv weight feeds a chain of the scalar ops; gradients reach
        // the weight through every op in turn.
        let w = Param::new("w", rand_tensor(&mut rng, &[1, 1, 1, 1]), true);
        {
            let mut inner = w.borrow_mut();
            inner.value.data_mut()[0] = 0.7;
        }
        let x0 = rand_tensor(&mut rng, &[1, 1, 2, 2]);
        let report = check_gradients(&[w.clone()], 1e-6, |grad| {
            let mut tape = Tape::new();
            let x = tape.leaf(x0.clone());
            let y = tape.conv2d(x, &w, None, 1, 0).unwrap();
            let s = tape.sigmoid(y);
            let l = tape.ln_clamped(s, 1e-7, 1.0 - 1e-7);
            let a = tape.abs(l);
            let q = tape.sqrt(a);
            let sc = tape.affine(q, 0.5, 0.1);
            let loss = tape.sum_all(sc);
            if grad {
                tape.backward(loss);
            }
            tape.scalar(loss)
        });
        assert!(
            report.max_rel_err < 1e-6,
            "scalar op chain gradcheck failed: {:?}",
            report
        );
    }

    #[test]
    fn ln_clamped_counts_guard_hits_without_panicking() {
        let mut tape = Tape::new();
        let x = tape.leaf(Tensor::new(&[3], vec![0.0, 0.5, 2.0]));
        let l = tape.ln_clamped(x, 1e-7, 1.0 - 1e-7);
        let loss = tape.mean_all(l);
        tape.backward(loss);
        assert_eq!(tape.guard_hits(), 2);
        assert!(tape.value(l).all_finite());
    }

    #[test]
    fn frozen_weights_accumulate_no_gradient() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let w = Param::new("w", rand_tensor(&mut rng, &[2, 1, 3, 3]), false);
        let mut tape = Tape::new();
        let x = tape.leaf(rand_tensor(&mut rng, &[1, 1, 4, 4]));
        let y = tape.conv2d(x, &w, None, 1, 1).unwrap();
        let loss = tape.mean_all(y);
        tape.backward(loss);
        assert!(w.grad_clone().data().iter().all(|&g| g == 0.0));
    }

    #[test]
    fn maxpool_routes_gradient_to_argmax() {
        let mut tape = Tape::new();
        let x = tape.leaf(Tensor::new(&[1, 1, 2, 2], vec![1.0, 4.0, 2.0, 3.0]));
        let y = tape.maxpool2(x).unwrap();
        assert_eq!(tape.value(y).data(), &[4.0]);
    }
}
