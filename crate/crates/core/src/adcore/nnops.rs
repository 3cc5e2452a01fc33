//! Neural-network ops on the tape: conv1d, batchnorm, dense, activations,
//! pooling and the classification losses.
//!
//! Parallel loops only ever write disjoint output slices and keep every
//! reduction in a fixed index order, so results are bitwise identical
//! regardless of thread count.

use rand::Rng;
use rand_chacha::ChaCha12Rng;
use rayon::prelude::*;

use super::graph::{shape_err, sigmoid_scalar, zip_mul, Graph, Var};
use super::params::{ParamId, ParamSet};
use super::tensor::{Scalar, Tensor};
use crate::error::{Error, Result};

/// Output length of a strided, padded 1-D convolution.
pub fn conv1d_out_len(l: usize, k: usize, stride: usize, pad: usize) -> Option<usize> {
    let padded = l + 2 * pad;
    if k == 0 || k > padded {
        return None;
    }
    Some((padded - k) / stride + 1)
}

/// Copy one sample's padded channels into `[c_in * k, l_out]` column form.
fn im2col<T: Scalar>(
    x: &[T],
    c_in: usize,
    l: usize,
    k: usize,
    stride: usize,
    pad: usize,
    l_out: usize,
    xpad: &mut [T],
    col: &mut [T],
) {
    let lp = l + 2 * pad;
    for v in xpad.iter_mut() {
        *v = T::zero();
    }
    for c in 0..c_in {
        xpad[c * lp + pad..c * lp + pad + l].copy_from_slice(&x[c * l..(c + 1) * l]);
    }
    for c in 0..c_in {
        for i in 0..k {
            let src = &xpad[c * lp + i..];
            let dst = &mut col[(c * k + i) * l_out..(c * k + i + 1) * l_out];
            if stride == 1 {
                dst.copy_from_slice(&src[..l_out]);
            } else {
                for (t, d) in dst.iter_mut().enumerate() {
                    *d = src[t * stride];
                }
            }
        }
    }
}

/// y[t] += a * x[t]
#[inline]
fn axpy<T: Scalar>(a: T, x: &[T], y: &mut [T]) {
    for (yi, &xi) in y.iter_mut().zip(x) {
        *yi += a * xi;
    }
}

#[inline]
fn dot<T: Scalar>(a: &[T], b: &[T]) -> T {
    let mut s = T::zero();
    for (&x, &y) in a.iter().zip(b) {
        s += x * y;
    }
    s
}

impl<T: Scalar> Graph<T> {
    /// Strided cross-correlation over `[B, C_in, L]` with kernel
    /// `[C_out, C_in, k]` and bias `[C_out]`.
    pub fn conv1d(&mut self, x: Var, w: Var, b: Var, stride: usize, pad: usize) -> Result<Var> {
        let tx = self.value(x).clone();
        let tw = self.value(w).clone();
        let tb = self.value(b).clone();
        let (xs, ws) = (tx.shape().to_vec(), tw.shape().to_vec());
        if xs.len() != 3 || ws.len() != 3 || tb.shape().len() != 1 {
            return Err(shape_err(
                "conv1d",
                format!("expected x[B,C,L], w[O,C,k], b[O]; got {:?}, {:?}, {:?}", xs, ws, tb.shape()),
            ));
        }
        let (batch, c_in, l) = (xs[0], xs[1], xs[2]);
        let (c_out, wc_in, k) = (ws[0], ws[1], ws[2]);
        if wc_in != c_in || tb.shape()[0] != c_out {
            return Err(shape_err(
                "conv1d",
                format!("channel mismatch: x has C_in={c_in}, w has C_in={wc_in}, b has {}", tb.shape()[0]),
            ));
        }
        if stride == 0 {
            return Err(Error::config("conv1d stride must be >= 1"));
        }
        let Some(l_out) = conv1d_out_len(l, k, stride, pad) else {
            return Err(shape_err(
                "conv1d",
                format!("kernel {k} exceeds padded length {}", l + 2 * pad),
            ));
        };

        let lp = l + 2 * pad;
        let ck = c_in * k;
        let mut out = vec![T::zero(); batch * c_out * l_out];
        out.par_chunks_mut(c_out * l_out)
            .zip(tx.data().par_chunks(c_in * l))
            .for_each(|(y, xb)| {
                let mut xpad = vec![T::zero(); c_in * lp];
                let mut col = vec![T::zero(); ck * l_out];
                im2col(xb, c_in, l, k, stride, pad, l_out, &mut xpad, &mut col);
                for o in 0..c_out {
                    let row = &mut y[o * l_out..(o + 1) * l_out];
                    let bias = tb.data()[o];
                    for v in row.iter_mut() {
                        *v = bias;
                    }
                    let wrow = &tw.data()[o * ck..(o + 1) * ck];
                    for (ci, &wv) in wrow.iter().enumerate() {
                        axpy(wv, &col[ci * l_out..(ci + 1) * l_out], row);
                    }
                }
            });

        let value = Tensor::new(vec![batch, c_out, l_out], out);
        let back = move |g: &Tensor<T>, sink: &mut super::graph::GradSink<'_, T>| {
            // Shared column buffer for the whole batch.
            let mut cols = vec![T::zero(); batch * ck * l_out];
            cols.par_chunks_mut(ck * l_out)
                .zip(tx.data().par_chunks(c_in * l))
                .for_each(|(col, xb)| {
                    let mut xpad = vec![T::zero(); c_in * lp];
                    im2col(xb, c_in, l, k, stride, pad, l_out, &mut xpad, col);
                });

            // dW[o, ck] = sum_b <g[b,o,:], col_b[ck,:]> ; rows are disjoint per o.
            let mut dw = vec![T::zero(); c_out * ck];
            dw.par_chunks_mut(ck).enumerate().for_each(|(o, dwo)| {
                for bi in 0..batch {
                    let grow = &g.data()[(bi * c_out + o) * l_out..(bi * c_out + o + 1) * l_out];
                    let col = &cols[bi * ck * l_out..(bi + 1) * ck * l_out];
                    for (ci, d) in dwo.iter_mut().enumerate() {
                        *d += dot(grow, &col[ci * l_out..(ci + 1) * l_out]);
                    }
                }
            });

            // db[o] = sum_{b,t} g[b,o,t]
            let mut db = vec![T::zero(); c_out];
            db.par_iter_mut().enumerate().for_each(|(o, d)| {
                for bi in 0..batch {
                    let grow = &g.data()[(bi * c_out + o) * l_out..(bi * c_out + o + 1) * l_out];
                    for &gv in grow {
                        *d += gv;
                    }
                }
            });

            // dX via dcol = W^T g then col2im, per sample.
            let mut dx = vec![T::zero(); batch * c_in * l];
            dx.par_chunks_mut(c_in * l).enumerate().for_each(|(bi, dxb)| {
                let mut dcol = vec![T::zero(); ck * l_out];
                for o in 0..c_out {
                    let grow = &g.data()[(bi * c_out + o) * l_out..(bi * c_out + o + 1) * l_out];
                    let wrow = &tw.data()[o * ck..(o + 1) * ck];
                    for (ci, &wv) in wrow.iter().enumerate() {
                        axpy(wv, grow, &mut dcol[ci * l_out..(ci + 1) * l_out]);
                    }
                }
                let mut dxpad = vec![T::zero(); c_in * lp];
                for c in 0..c_in {
                    for i in 0..k {
                        let src = &dcol[(c * k + i) * l_out..(c * k + i + 1) * l_out];
                        let dst = &mut dxpad[c * lp + i..];
                        for (t, &sv) in src.iter().enumerate() {
                            dst[t * stride] += sv;
                        }
                    }
                }
                for c in 0..c_in {
                    dxb[c * l..(c + 1) * l].copy_from_slice(&dxpad[c * lp + pad..c * lp + pad + l]);
                }
            });

            sink.add(x, Tensor::new(vec![batch, c_in, l], dx));
            sink.add(w, Tensor::new(vec![c_out, c_in, k], dw));
            sink.add(b, Tensor::new(vec![c_out], db));
        };
        Ok(self.push(value, Some(Box::new(back))))
    }

    /// Per-channel batch normalization over `[B, C, L]`.
    ///
    /// Train mode normalizes with biased batch statistics and folds them into
    /// the running buffers (`running = (1-momentum)*running + momentum*batch`);
    /// eval mode normalizes with the running buffers. Running variance stores
    /// the biased batch variance so that eval with momentum = 1 reproduces the
    /// preceding train batch exactly.
    #[allow(clippy::too_many_arguments)]
    pub fn batchnorm1d(
        &mut self,
        x: Var,
        gamma: Var,
        beta: Var,
        params: &mut ParamSet<T>,
        running_mean: ParamId,
        running_var: ParamId,
        train: bool,
        momentum: f64,
        eps: f64,
    ) -> Result<Var> {
        let tx = self.value(x).clone();
        let xs = tx.shape().to_vec();
        if xs.len() != 3 {
            return Err(shape_err("batchnorm1d", format!("expected [B,C,L], got {:?}", xs)));
        }
        let (batch, c, l) = (xs[0], xs[1], xs[2]);
        let n_red = batch * l;
        if train && n_red < 2 {
            return Err(Error::DegenerateBatch(format!(
                "batchnorm1d needs B*L >= 2 in train mode, got {n_red}"
            )));
        }
        let tg = self.value(gamma).clone();
        let tbeta = self.value(beta).clone();
        if tg.shape() != [c] || tbeta.shape() != [c] {
            return Err(shape_err(
                "batchnorm1d",
                format!("gamma/beta must be [{c}], got {:?}/{:?}", tg.shape(), tbeta.shape()),
            ));
        }

        let (mean, var) = if train {
            let mut mean = vec![T::zero(); c];
            let mut var = vec![T::zero(); c];
            let inv_n = T::from_f64(1.0 / n_red as f64);
            mean.par_iter_mut().zip(var.par_iter_mut()).enumerate().for_each(
                |(ci, (m, v))| {
                    let mut s = T::zero();
                    for bi in 0..batch {
                        let row = &tx.data()[(bi * c + ci) * l..(bi * c + ci + 1) * l];
                        for &xv in row {
                            s += xv;
                        }
                    }
                    *m = s * inv_n;
                    let mut sq = T::zero();
                    for bi in 0..batch {
                        let row = &tx.data()[(bi * c + ci) * l..(bi * c + ci + 1) * l];
                        for &xv in row {
                            let d = xv - *m;
                            sq += d * d;
                        }
                    }
                    *v = sq * inv_n;
                },
            );
            // Fold into running stats.
            let mom = T::from_f64(momentum);
            let keep = T::one() - mom;
            let mut rm = params.value(running_mean).clone();
            let mut rv = params.value(running_var).clone();
            for ((r, &m), (s, &v)) in rm
                .data_mut()
                .iter_mut()
                .zip(&mean)
                .zip(rv.data_mut().iter_mut().zip(&var))
            {
                *r = keep * *r + mom * m;
                *s = keep * *s + mom * v;
            }
            params.set_value(running_mean, rm);
            params.set_value(running_var, rv);
            (mean, var)
        } else {
            (
                params.value(running_mean).data().to_vec(),
                params.value(running_var).data().to_vec(),
            )
        };

        let epsv = T::from_f64(eps);
        let invstd: Vec<T> = var.iter().map(|&v| T::one() / (v + epsv).sqrt()).collect();

        let mut xhat = vec![T::zero(); tx.numel()];
        xhat.par_chunks_mut(c * l)
            .zip(tx.data().par_chunks(c * l))
            .for_each(|(xh, xb)| {
                for ci in 0..c {
                    let m = mean[ci];
                    let is = invstd[ci];
                    for (h, &xv) in xh[ci * l..(ci + 1) * l].iter_mut().zip(&xb[ci * l..(ci + 1) * l]) {
                        *h = (xv - m) * is;
                    }
                }
            });
        let xhat = Tensor::new(xs.clone(), xhat);

        let mut out = vec![T::zero(); tx.numel()];
        out.par_chunks_mut(c * l)
            .zip(xhat.data().par_chunks(c * l))
            .for_each(|(y, xh)| {
                for ci in 0..c {
                    let ga = tg.data()[ci];
                    let be = tbeta.data()[ci];
                    for (yv, &h) in y[ci * l..(ci + 1) * l].iter_mut().zip(&xh[ci * l..(ci + 1) * l]) {
                        *yv = ga * h + be;
                    }
                }
            });

        let xhat_b = xhat.clone();
        let back = move |g: &Tensor<T>, sink: &mut super::graph::GradSink<'_, T>| {
            // Per-channel reductions of g and g*xhat.
            let mut dbeta = vec![T::zero(); c];
            let mut dgamma = vec![T::zero(); c];
            dbeta
                .par_iter_mut()
                .zip(dgamma.par_iter_mut())
                .enumerate()
                .for_each(|(ci, (db, dg))| {
                    for bi in 0..batch {
                        let base = (bi * c + ci) * l;
                        let grow = &g.data()[base..base + l];
                        let hrow = &xhat_b.data()[base..base + l];
                        for (&gv, &hv) in grow.iter().zip(hrow) {
                            *db += gv;
                            *dg += gv * hv;
                        }
                    }
                });

            let mut dx = vec![T::zero(); batch * c * l];
            if train {
                let inv_n = T::from_f64(1.0 / n_red as f64);
                dx.par_chunks_mut(c * l).enumerate().for_each(|(bi, dxb)| {
                    for ci in 0..c {
                        let base = (bi * c + ci) * l;
                        let grow = &g.data()[base..base + l];
                        let hrow = &xhat_b.data()[base..base + l];
                        let coef = tg.data()[ci] * invstd[ci];
                        let gsum = dbeta[ci] * inv_n;
                        let ghsum = dgamma[ci] * inv_n;
                        for ((d, &gv), &hv) in dxb[ci * l..(ci + 1) * l].iter_mut().zip(grow).zip(hrow) {
                            *d = coef * (gv - gsum - hv * ghsum);
                        }
                    }
                });
            } else {
                dx.par_chunks_mut(c * l).enumerate().for_each(|(bi, dxb)| {
                    for ci in 0..c {
                        let base = (bi * c + ci) * l;
                        let grow = &g.data()[base..base + l];
                        let coef = tg.data()[ci] * invstd[ci];
                        for (d, &gv) in dxb[ci * l..(ci + 1) * l].iter_mut().zip(grow) {
                            *d = coef * gv;
                        }
                    }
                });
            }
            sink.add(x, Tensor::new(vec![batch, c, l], dx));
            sink.add(gamma, Tensor::new(vec![c], dgamma));
            sink.add(beta, Tensor::new(vec![c], dbeta));
        };
        Ok(self.push(Tensor::new(xs, out), Some(Box::new(back))))
    }

    /// Affine map `y = x W^T + b` with `x[B,F_in]`, `w[F_out,F_in]`.
    pub fn dense(&mut self, x: Var, w: Var, b: Var) -> Result<Var> {
        let tx = self.value(x).clone();
        let tw = self.value(w).clone();
        let tb = self.value(b).clone();
        if tx.shape().len() != 2 || tw.shape().len() != 2 {
            return Err(shape_err(
                "dense",
                format!("expected x[B,F_in], w[F_out,F_in]; got {:?}, {:?}", tx.shape(), tw.shape()),
            ));
        }
        let (batch, f_in) = (tx.shape()[0], tx.shape()[1]);
        let (f_out, wf_in) = (tw.shape()[0], tw.shape()[1]);
        if wf_in != f_in || tb.shape() != [f_out] {
            return Err(shape_err(
                "dense",
                format!(
                    "dims: x[.., {f_in}] w[{f_out}, {wf_in}] b{:?}",
                    tb.shape()
                ),
            ));
        }

        let mut out = vec![T::zero(); batch * f_out];
        out.par_chunks_mut(f_out)
            .zip(tx.data().par_chunks(f_in))
            .for_each(|(yrow, xrow)| {
                for (o, yv) in yrow.iter_mut().enumerate() {
                    *yv = tb.data()[o] + dot(&tw.data()[o * f_in..(o + 1) * f_in], xrow);
                }
            });

        let back = move |g: &Tensor<T>, sink: &mut super::graph::GradSink<'_, T>| {
            let mut dx = vec![T::zero(); batch * f_in];
            dx.par_chunks_mut(f_in).enumerate().for_each(|(bi, dxr)| {
                let grow = &g.data()[bi * f_out..(bi + 1) * f_out];
                for (o, &gv) in grow.iter().enumerate() {
                    axpy(gv, &tw.data()[o * f_in..(o + 1) * f_in], dxr);
                }
            });
            let mut dw = vec![T::zero(); f_out * f_in];
            dw.par_chunks_mut(f_in).enumerate().for_each(|(o, dwr)| {
                for bi in 0..batch {
                    let gv = g.data()[bi * f_out + o];
                    axpy(gv, &tx.data()[bi * f_in..(bi + 1) * f_in], dwr);
                }
            });
            let mut db = vec![T::zero(); f_out];
            for bi in 0..batch {
                for (o, d) in db.iter_mut().enumerate() {
                    *d += g.data()[bi * f_out + o];
                }
            }
            sink.add(x, Tensor::new(vec![batch, f_in], dx));
            sink.add(w, Tensor::new(vec![f_out, f_in], dw));
            sink.add(b, Tensor::new(vec![f_out], db));
        };
        Ok(self.push(Tensor::new(vec![batch, f_out], out), Some(Box::new(back))))
    }

    pub fn relu(&mut self, x: Var) -> Var {
        let tx = self.value(x).clone();
        let out = tx.map(|v| v.max(T::zero()));
        self.push(
            out,
            Some(Box::new(move |g, sink| {
                let delta = Tensor::new(
                    tx.shape().to_vec(),
                    g.data()
                        .iter()
                        .zip(tx.data())
                        .map(|(&gv, &xv)| if xv > T::zero() { gv } else { T::zero() })
                        .collect(),
                );
                sink.add(x, delta);
            })),
        )
    }

    /// Inverted dropout: train mode zeroes with probability `p` and scales
    /// survivors by 1/(1-p); eval mode is the identity.
    pub fn dropout(&mut self, x: Var, p: f64, train: bool, rng: &mut ChaCha12Rng) -> Var {
        assert!((0.0..1.0).contains(&p), "dropout p must be in [0,1)");
        if !train || p == 0.0 {
            let t = self.value(x).clone();
            return self.push(
                t,
                Some(Box::new(move |g, sink| sink.add(x, g.clone()))),
            );
        }
        let tx = self.value(x).clone();
        let keep = T::from_f64(1.0 / (1.0 - p));
        let mask = Tensor::new(
            tx.shape().to_vec(),
            (0..tx.numel())
                .map(|_| if rng.random::<f64>() < p { T::zero() } else { keep })
                .collect(),
        );
        let out = zip_mul(&tx, &mask);
        self.push(
            out,
            Some(Box::new(move |g, sink| {
                sink.add(x, zip_mul(g, &mask));
            })),
        )
    }

    /// ReLU followed by dropout, the dense-block activation.
    pub fn relu_dropout(&mut self, x: Var, p: f64, train: bool, rng: &mut ChaCha12Rng) -> Var {
        let r = self.relu(x);
        self.dropout(r, p, train, rng)
    }

    /// Mean over the temporal axis: `[B, C, L] -> [B, C]`.
    pub fn global_avg_pool(&mut self, x: Var) -> Result<Var> {
        let tx = self.value(x).clone();
        if tx.shape().len() != 3 {
            return Err(shape_err("global_avg_pool", format!("expected [B,C,L], got {:?}", tx.shape())));
        }
        let (batch, c, l) = (tx.shape()[0], tx.shape()[1], tx.shape()[2]);
        let inv_l = T::from_f64(1.0 / l as f64);
        let mut out = vec![T::zero(); batch * c];
        out.par_chunks_mut(c)
            .zip(tx.data().par_chunks(c * l))
            .for_each(|(yrow, xb)| {
                for (ci, yv) in yrow.iter_mut().enumerate() {
                    let mut s = T::zero();
                    for &xv in &xb[ci * l..(ci + 1) * l] {
                        s += xv;
                    }
                    *yv = s * inv_l;
                }
            });
        let back = move |g: &Tensor<T>, sink: &mut super::graph::GradSink<'_, T>| {
            let mut dx = vec![T::zero(); batch * c * l];
            dx.par_chunks_mut(c * l).enumerate().for_each(|(bi, dxb)| {
                for ci in 0..c {
                    let gv = g.data()[bi * c + ci] * inv_l;
                    for d in &mut dxb[ci * l..(ci + 1) * l] {
                        *d = gv;
                    }
                }
            });
            sink.add(x, Tensor::new(vec![batch, c, l], dx));
        };
        Ok(self.push(Tensor::new(vec![batch, c], out), Some(Box::new(back))))
    }

    /// Row-wise stable softmax over `[B, K]`.
    pub fn softmax(&mut self, x: Var) -> Var {
        let tx = self.value(x).clone();
        assert_eq!(tx.shape().len(), 2, "softmax expects [B,K]");
        let (batch, k) = (tx.shape()[0], tx.shape()[1]);
        let mut out = vec![T::zero(); batch * k];
        for (yrow, xrow) in out.chunks_mut(k).zip(tx.data().chunks(k)) {
            let mx = xrow.iter().fold(T::neg_infinity(), |a, &b| a.max(b));
            let mut z = T::zero();
            for (y, &xv) in yrow.iter_mut().zip(xrow) {
                *y = (xv - mx).exp();
                z += *y;
            }
            for y in yrow.iter_mut() {
                *y = *y / z;
            }
        }
        let ty = Tensor::new(vec![batch, k], out);
        let yc = ty.clone();
        self.push(
            ty,
            Some(Box::new(move |g, sink| {
                let mut dx = vec![T::zero(); batch * k];
                for ((dxr, grow), yrow) in dx
                    .chunks_mut(k)
                    .zip(g.data().chunks(k))
                    .zip(yc.data().chunks(k))
                {
                    let gy = dot(grow, yrow);
                    for ((d, &gv), &yv) in dxr.iter_mut().zip(grow).zip(yrow) {
                        *d = yv * (gv - gy);
                    }
                }
                sink.add(x, Tensor::new(vec![batch, k], dx));
            })),
        )
    }

    /// Mean cross-entropy between logits `[B, K]` and one-hot labels, via the
    /// log-sum-exp form. Gradient is `(softmax - onehot) / B`.
    pub fn softmax_cross_entropy(&mut self, logits: Var, onehot: &Tensor<T>) -> Result<Var> {
        let tl = self.value(logits).clone();
        if tl.shape() != onehot.shape() || tl.shape().len() != 2 {
            return Err(shape_err(
                "softmax_cross_entropy",
                format!("logits {:?} vs labels {:?}", tl.shape(), onehot.shape()),
            ));
        }
        let (batch, k) = (tl.shape()[0], tl.shape()[1]);
        for (i, row) in onehot.data().chunks(k).enumerate() {
            let s: T = row.iter().fold(T::zero(), |a, &b| a + b);
            if (s - T::one()).abs() > T::from_f64(1e-4) || row.iter().any(|&v| v < T::zero()) {
                return Err(Error::Label(format!(
                    "row {i} sums to {s}, expected 1 with non-negative entries"
                )));
            }
        }
        let mut loss = T::zero();
        let mut probs = vec![T::zero(); batch * k];
        for ((xrow, yrow), prow) in tl
            .data()
            .chunks(k)
            .zip(onehot.data().chunks(k))
            .zip(probs.chunks_mut(k))
        {
            let mx = xrow.iter().fold(T::neg_infinity(), |a, &b| a.max(b));
            let mut z = T::zero();
            for (p, &xv) in prow.iter_mut().zip(xrow) {
                *p = (xv - mx).exp();
                z += *p;
            }
            for p in prow.iter_mut() {
                *p = *p / z;
            }
            let lse = mx + z.ln();
            loss += lse - dot(xrow, yrow);
        }
        loss = loss / T::from_f64(batch as f64);
        let labels = onehot.clone();
        let back = move |g: &Tensor<T>, sink: &mut super::graph::GradSink<'_, T>| {
            let scale = g.item() / T::from_f64(batch as f64);
            let dl = Tensor::new(
                vec![batch, k],
                probs
                    .iter()
                    .zip(labels.data())
                    .map(|(&p, &y)| (p - y) * scale)
                    .collect(),
            );
            sink.add(logits, dl);
        };
        Ok(self.push(Tensor::scalar(loss), Some(Box::new(back))))
    }

    /// Mean binary cross-entropy on raw logits, in the overflow-safe form
    /// `max(z,0) - z*d + ln(1 + e^{-|z|})`.
    pub fn bce_with_logits(&mut self, logits: Var, targets: &Tensor<T>) -> Result<Var> {
        let tz = self.value(logits).clone();
        if !tz.is_same_shape(targets) {
            return Err(shape_err(
                "bce_with_logits",
                format!("logits {:?} vs targets {:?}", tz.shape(), targets.shape()),
            ));
        }
        let n = tz.numel();
        let mut loss = T::zero();
        for (&z, &d) in tz.data().iter().zip(targets.data()) {
            loss += z.max(T::zero()) - z * d + (-z.abs()).exp().ln_1p();
        }
        loss = loss / T::from_f64(n as f64);
        let tg = targets.clone();
        let back = move |g: &Tensor<T>, sink: &mut super::graph::GradSink<'_, T>| {
            let scale = g.item() / T::from_f64(n as f64);
            let dz = Tensor::new(
                tz.shape().to_vec(),
                tz.data()
                    .iter()
                    .zip(tg.data())
                    .map(|(&z, &d)| (sigmoid_scalar(z) - d) * scale)
                    .collect(),
            );
            sink.add(logits, dz);
        };
        Ok(self.push(Tensor::scalar(loss), Some(Box::new(back))))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::adcore::graph::Graph;

    fn leafy(g: &mut Graph<f64>, shape: &[usize], data: &[f64]) -> Var {
        g.leaf(Tensor::new(shape.to_vec(), data.to_vec()))
    }

    // x=(1,2,3,4), w=(1,1,1), b=0, stride=2, pad=1 -> (1+2, 2+3+4) = (3, 9)
    #[test]
    fn conv1d_hand_example() {
        let mut g: Graph<f64> = Graph::new();
        let x = leafy(&mut g, &[1, 1, 4], &[1.0, 2.0, 3.0, 4.0]);
        let w = leafy(&mut g, &[1, 1, 3], &[1.0, 1.0, 1.0]);
        let b = leafy(&mut g, &[1], &[0.0]);
        let y = g.conv1d(x, w, b, 2, 1).unwrap();
        assert_eq!(g.value(y).shape(), &[1, 1, 2]);
        assert_eq!(g.value(y).data(), &[3.0, 9.0]);
    }

    #[test]
    fn conv1d_identity_kernel() {
        let mut g: Graph<f64> = Graph::new();
        let x = leafy(&mut g, &[1, 1, 5], &[5.0, -1.0, 2.0, 0.5, 3.0]);
        let w = leafy(&mut g, &[1, 1, 1], &[1.0]);
        let b = leafy(&mut g, &[1], &[0.0]);
        let y = g.conv1d(x, w, b, 1, 0).unwrap();
        assert_eq!(g.value(y).data(), g.value(x).data());
    }

    #[test]
    fn conv1d_out_len_formula() {
        assert_eq!(conv1d_out_len(4096, 3, 2, 1), Some(2048));
        assert_eq!(conv1d_out_len(4, 3, 2, 1), Some(2));
        assert_eq!(conv1d_out_len(2, 5, 1, 1), None);
    }

    // Naive quadruple-loop reference on random-ish shapes.
    #[test]
    fn conv1d_matches_naive_reference() {
        let shapes = [
            (1usize, 1usize, 7usize, 2usize, 3usize, 1usize, 1usize),
            (2, 3, 9, 2, 3, 2, 1),
            (2, 2, 16, 3, 1, 1, 0),
            (1, 3, 8, 2, 5, 3, 2),
        ];
        let mut state = 1u64;
        let mut next = || {
            state = state.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            ((state >> 33) as f64 / (1u64 << 31) as f64) - 1.0
        };
        for &(b, cin, l, cout, k, s, p) in &shapes {
            let x: Vec<f64> = (0..b * cin * l).map(|_| next()).collect();
            let w: Vec<f64> = (0..cout * cin * k).map(|_| next()).collect();
            let bias: Vec<f64> = (0..cout).map(|_| next()).collect();
            let mut g: Graph<f64> = Graph::new();
            let xv = g.leaf(Tensor::new(vec![b, cin, l], x.clone()));
            let wv = g.leaf(Tensor::new(vec![cout, cin, k], w.clone()));
            let bv = g.leaf(Tensor::new(vec![cout], bias.clone()));
            let y = g.conv1d(xv, wv, bv, s, p).unwrap();
            let lout = conv1d_out_len(l, k, s, p).unwrap();
            for bi in 0..b {
                for o in 0..cout {
                    for t in 0..lout {
                        let mut acc = bias[o];
                        for c in 0..cin {
                            for i in 0..k {
                                let xi = (t * s + i) as isize - p as isize;
                                if xi >= 0 && (xi as usize) < l {
                                    acc += x[(bi * cin + c) * l + xi as usize]
                                        * w[(o * cin + c) * k + i];
                                }
                            }
                        }
                        let got = g.value(y).data()[(bi * cout + o) * lout + t];
                        assert!((got - acc).abs() < 1e-12, "mismatch at {bi},{o},{t}");
                    }
                }
            }
        }
    }

    #[test]
    fn dense_hand_example() {
        // x=(1,2), w=((1,1),(0,1)), b=(0.5,0) -> (3.5, 2)
        let mut g: Graph<f64> = Graph::new();
        let x = leafy(&mut g, &[1, 2], &[1.0, 2.0]);
        let w = leafy(&mut g, &[2, 2], &[1.0, 1.0, 0.0, 1.0]);
        let b = leafy(&mut g, &[2], &[0.5, 0.0]);
        let y = g.dense(x, w, b).unwrap();
        assert_eq!(g.value(y).data(), &[3.5, 2.0]);
        let loss = g.sum_all(y);
        let grads = g.backward_collect(loss);
        assert_eq!(grads[b.0].as_ref().unwrap().data(), &[1.0, 1.0]);
    }

    #[test]
    fn batchnorm_train_normalizes_and_eval_replays_with_momentum_one() {
        let mut ps: ParamSet<f64> = ParamSet::new();
        let rm = ps.add("rm", Tensor::zeros(&[1]), false);
        let rv = ps.add("rv", Tensor::ones(&[1]), false);
        let data = vec![1.0, 2.0, 3.0, 4.0, 7.0, 2.0];
        let mut g: Graph<f64> = Graph::new();
        let x = g.leaf(Tensor::new(vec![2, 1, 3], data.clone()));
        let gamma = g.leaf(Tensor::ones(&[1]));
        let beta = g.leaf(Tensor::zeros(&[1]));
        let y = g
            .batchnorm1d(x, gamma, beta, &mut ps, rm, rv, true, 1.0, 1e-5)
            .unwrap();
        let out = g.value(y).data().to_vec();
        let mean: f64 = out.iter().sum::<f64>() / 6.0;
        let var: f64 = out.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / 6.0;
        assert!(mean.abs() < 1e-6);
        assert!((var - 1.0).abs() < 1e-4);

        // momentum = 1 replaced running stats with this batch; eval reproduces.
        let mut g2: Graph<f64> = Graph::new();
        let x2 = g2.leaf(Tensor::new(vec![2, 1, 3], data));
        let gamma2 = g2.leaf(Tensor::ones(&[1]));
        let beta2 = g2.leaf(Tensor::zeros(&[1]));
        let y2 = g2
            .batchnorm1d(x2, gamma2, beta2, &mut ps, rm, rv, false, 1.0, 1e-5)
            .unwrap();
        for (a, b) in g2.value(y2).data().iter().zip(&out) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn batchnorm_constant_channel_maps_to_zero() {
        let mut ps: ParamSet<f64> = ParamSet::new();
        let rm = ps.add("rm", Tensor::zeros(&[2]), false);
        let rv = ps.add("rv", Tensor::ones(&[2]), false);
        let mut g: Graph<f64> = Graph::new();
        let x = g.leaf(Tensor::full(&[1, 2, 4], 3.25));
        let gamma = g.leaf(Tensor::ones(&[2]));
        let beta = g.leaf(Tensor::zeros(&[2]));
        let y = g
            .batchnorm1d(x, gamma, beta, &mut ps, rm, rv, true, 0.1, 1e-5)
            .unwrap();
        assert!(g.value(y).data().iter().all(|v| v.abs() < 1e-6));
    }

    #[test]
    fn batchnorm_degenerate_batch_errors() {
        let mut ps: ParamSet<f64> = ParamSet::new();
        let rm = ps.add("rm", Tensor::zeros(&[1]), false);
        let rv = ps.add("rv", Tensor::ones(&[1]), false);
        let mut g: Graph<f64> = Graph::new();
        let x = g.leaf(Tensor::ones(&[1, 1, 1]));
        let gamma = g.leaf(Tensor::ones(&[1]));
        let beta = g.leaf(Tensor::zeros(&[1]));
        let r = g.batchnorm1d(x, gamma, beta, &mut ps, rm, rv, true, 0.1, 1e-5);
        assert!(matches!(r, Err(Error::DegenerateBatch(_))));
    }

    #[test]
    fn relu_dropout_eval_is_relu() {
        let mut rng = crate::seed::rng(1);
        let mut g: Graph<f64> = Graph::new();
        let x = leafy(&mut g, &[2], &[-1.0, 2.0]);
        let y = g.relu_dropout(x, 0.5, false, &mut rng);
        assert_eq!(g.value(y).data(), &[0.0, 2.0]);
    }

    #[test]
    fn dropout_train_keeps_expectation() {
        let mut rng = crate::seed::rng(99);
        let mut g: Graph<f64> = Graph::new();
        let x = g.leaf(Tensor::ones(&[100_000]));
        let y = g.dropout(x, 0.5, true, &mut rng);
        let mean = g.value(y).mean();
        assert!((mean - 1.0).abs() < 0.02, "mean {mean}");
    }

    #[test]
    fn global_avg_pool_means_and_distributes() {
        let mut g: Graph<f64> = Graph::new();
        let x = leafy(&mut g, &[1, 1, 4], &[1.0, 2.0, 3.0, 4.0]);
        let y = g.global_avg_pool(x).unwrap();
        assert_eq!(g.value(y).data(), &[2.5]);
        let loss = g.sum_all(y);
        let grads = g.backward_collect(loss);
        assert_eq!(grads[x.0].as_ref().unwrap().data(), &[0.25; 4]);
    }

    #[test]
    fn cross_entropy_uniform_and_stability() {
        let mut g: Graph<f64> = Graph::new();
        let logits = g.leaf(Tensor::zeros(&[1, 4]));
        let onehot = Tensor::new(vec![1, 4], vec![1.0, 0.0, 0.0, 0.0]);
        let loss = g.softmax_cross_entropy(logits, &onehot).unwrap();
        assert!((g.value(loss).item() - 4f64.ln()).abs() < 1e-12);

        let mut g: Graph<f64> = Graph::new();
        let logits = g.leaf(Tensor::new(vec![1, 4], vec![1e6, 0.0, 0.0, 0.0]));
        let loss = g.softmax_cross_entropy(logits, &onehot).unwrap();
        let v = g.value(loss).item();
        assert!(v.is_finite() && v < 1e-6, "loss {v}");
    }

    #[test]
    fn cross_entropy_rejects_malformed_onehot() {
        let mut g: Graph<f64> = Graph::new();
        let logits = g.leaf(Tensor::zeros(&[1, 3]));
        let bad = Tensor::new(vec![1, 3], vec![0.5, 0.0, 0.0]);
        assert!(matches!(
            g.softmax_cross_entropy(logits, &bad),
            Err(Error::Label(_))
        ));
    }

    #[test]
    fn bce_at_zero_logit_is_ln2() {
        let mut g: Graph<f64> = Graph::new();
        let z = g.leaf(Tensor::zeros(&[4]));
        let d = Tensor::new(vec![4], vec![1.0, 0.0, 1.0, 0.0]);
        let loss = g.bce_with_logits(z, &d).unwrap();
        assert!((g.value(loss).item() - 2f64.ln()).abs() < 1e-12);
    }
}
