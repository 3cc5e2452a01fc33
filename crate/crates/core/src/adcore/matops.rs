//! Matrix ops used by the alignment losses: general matmul, pairwise squared
//! distances, per-column centering and diagonal masking.

use rayon::prelude::*;

use super::graph::{shape_err, Graph, Var};
use super::tensor::{Scalar, Tensor};
use crate::error::Result;

/// Row-major `[m, k] x [k, n]` product.
fn mm<T: Scalar>(a: &[T], b: &[T], m: usize, k: usize, n: usize) -> Vec<T> {
    let mut c = vec![T::zero(); m * n];
    c.par_chunks_mut(n).enumerate().for_each(|(i, crow)| {
        for p in 0..k {
            let av = a[i * k + p];
            let brow = &b[p * n..(p + 1) * n];
            for (cv, &bv) in crow.iter_mut().zip(brow) {
                *cv += av * bv;
            }
        }
    });
    c
}

fn transpose<T: Scalar>(a: &[T], rows: usize, cols: usize) -> Vec<T> {
    let mut t = vec![T::zero(); rows * cols];
    for r in 0..rows {
        for c in 0..cols {
            t[c * rows + r] = a[r * cols + c];
        }
    }
    t
}

/// Materialized operand in `[rows, cols]` row-major order after applying the
/// transpose flag.
fn realize<T: Scalar>(t: &Tensor<T>, trans: bool) -> (Vec<T>, usize, usize) {
    let (r, c) = (t.shape()[0], t.shape()[1]);
    if trans {
        (transpose(t.data(), r, c), c, r)
    } else {
        (t.data().to_vec(), r, c)
    }
}

impl<T: Scalar> Graph<T> {
    /// `op(a) x op(b)` where `op` optionally transposes its 2-D operand.
    pub fn matmul(&mut self, a: Var, b: Var, trans_a: bool, trans_b: bool) -> Result<Var> {
        let ta = self.value(a).clone();
        let tb = self.value(b).clone();
        if ta.shape().len() != 2 || tb.shape().len() != 2 {
            return Err(shape_err(
                "matmul",
                format!("expected 2-D operands, got {:?} and {:?}", ta.shape(), tb.shape()),
            ));
        }
        let (da, m, ka) = realize(&ta, trans_a);
        let (db, kb, n) = realize(&tb, trans_b);
        if ka != kb {
            return Err(shape_err(
                "matmul",
                format!("inner dims {ka} vs {kb} (trans_a={trans_a}, trans_b={trans_b})"),
            ));
        }
        let out = mm(&da, &db, m, ka, n);
        let k = ka;
        let (sa, sb) = (ta.shape().to_vec(), tb.shape().to_vec());
        let back = move |g: &Tensor<T>, sink: &mut super::graph::GradSink<'_, T>| {
            // dA' = g B'^T, dB' = A'^T g for the realized operands; transpose
            // back when the flag was set.
            let bt = transpose(&db, k, n);
            let da_r = mm(g.data(), &bt, m, n, k);
            let at = transpose(&da, m, k);
            let db_r = mm(&at, g.data(), k, m, n);
            let ga = if trans_a {
                Tensor::new(sa.clone(), transpose(&da_r, m, k))
            } else {
                Tensor::new(sa.clone(), da_r)
            };
            let gb = if trans_b {
                Tensor::new(sb.clone(), transpose(&db_r, k, n))
            } else {
                Tensor::new(sb.clone(), db_r)
            };
            sink.add(a, ga);
            sink.add(b, gb);
        };
        Ok(self.push(Tensor::new(vec![m, n], out), Some(Box::new(back))))
    }

    /// Squared Euclidean distances between rows: `[B1, d] x [B2, d] -> [B1, B2]`.
    pub fn pairwise_sqdist(&mut self, x: Var, y: Var) -> Result<Var> {
        let tx = self.value(x).clone();
        let ty = self.value(y).clone();
        if tx.shape().len() != 2 || ty.shape().len() != 2 || tx.shape()[1] != ty.shape()[1] {
            return Err(shape_err(
                "pairwise_sqdist",
                format!("rows must share width: {:?} vs {:?}", tx.shape(), ty.shape()),
            ));
        }
        let (b1, d) = (tx.shape()[0], tx.shape()[1]);
        let b2 = ty.shape()[0];
        let mut out = vec![T::zero(); b1 * b2];
        out.par_chunks_mut(b2).enumerate().for_each(|(i, row)| {
            let xr = &tx.data()[i * d..(i + 1) * d];
            for (j, o) in row.iter_mut().enumerate() {
                let yr = &ty.data()[j * d..(j + 1) * d];
                let mut s = T::zero();
                for (&a, &b) in xr.iter().zip(yr) {
                    let diff = a - b;
                    s += diff * diff;
                }
                *o = s;
            }
        });
        let back = move |g: &Tensor<T>, sink: &mut super::graph::GradSink<'_, T>| {
            let two = T::from_f64(2.0);
            let mut dx = vec![T::zero(); b1 * d];
            dx.par_chunks_mut(d).enumerate().for_each(|(i, dxr)| {
                let xr = &tx.data()[i * d..(i + 1) * d];
                for j in 0..b2 {
                    let gv = g.data()[i * b2 + j] * two;
                    let yr = &ty.data()[j * d..(j + 1) * d];
                    for ((dv, &xv), &yv) in dxr.iter_mut().zip(xr).zip(yr) {
                        *dv += gv * (xv - yv);
                    }
                }
            });
            let mut dy = vec![T::zero(); b2 * d];
            dy.par_chunks_mut(d).enumerate().for_each(|(j, dyr)| {
                let yr = &ty.data()[j * d..(j + 1) * d];
                for i in 0..b1 {
                    let gv = g.data()[i * b2 + j] * two;
                    let xr = &tx.data()[i * d..(i + 1) * d];
                    for ((dv, &yv), &xv) in dyr.iter_mut().zip(yr).zip(xr) {
                        *dv -= gv * (xv - yv);
                    }
                }
            });
            sink.add(x, Tensor::new(vec![b1, d], dx));
            sink.add(y, Tensor::new(vec![b2, d], dy));
        };
        Ok(self.push(Tensor::new(vec![b1, b2], out), Some(Box::new(back))))
    }

    /// Subtract each column's mean: `[B, d] -> [B, d]`.
    pub fn column_center(&mut self, x: Var) -> Result<Var> {
        let tx = self.value(x).clone();
        if tx.shape().len() != 2 {
            return Err(shape_err("column_center", format!("expected [B,d], got {:?}", tx.shape())));
        }
        let (b, d) = (tx.shape()[0], tx.shape()[1]);
        let inv_b = T::from_f64(1.0 / b as f64);
        let mut mean = vec![T::zero(); d];
        for row in tx.data().chunks(d) {
            for (m, &v) in mean.iter_mut().zip(row) {
                *m += v;
            }
        }
        for m in mean.iter_mut() {
            *m *= inv_b;
        }
        let mut out = vec![T::zero(); b * d];
        for (orow, xrow) in out.chunks_mut(d).zip(tx.data().chunks(d)) {
            for ((o, &xv), &m) in orow.iter_mut().zip(xrow).zip(&mean) {
                *o = xv - m;
            }
        }
        let back = move |g: &Tensor<T>, sink: &mut super::graph::GradSink<'_, T>| {
            let mut gmean = vec![T::zero(); d];
            for row in g.data().chunks(d) {
                for (m, &v) in gmean.iter_mut().zip(row) {
                    *m += v;
                }
            }
            for m in gmean.iter_mut() {
                *m *= inv_b;
            }
            let mut dx = vec![T::zero(); b * d];
            for (drow, grow) in dx.chunks_mut(d).zip(g.data().chunks(d)) {
                for ((dv, &gv), &m) in drow.iter_mut().zip(grow).zip(&gmean) {
                    *dv = gv - m;
                }
            }
            sink.add(x, Tensor::new(vec![b, d], dx));
        };
        Ok(self.push(Tensor::new(vec![b, d], out), Some(Box::new(back))))
    }

    /// Zero the diagonal of a square matrix (used by unbiased kernel sums).
    pub fn zero_diag(&mut self, x: Var) -> Result<Var> {
        let tx = self.value(x).clone();
        if tx.shape().len() != 2 || tx.shape()[0] != tx.shape()[1] {
            return Err(shape_err("zero_diag", format!("expected square matrix, got {:?}", tx.shape())));
        }
        let n = tx.shape()[0];
        let mut out = tx.data().to_vec();
        for i in 0..n {
            out[i * n + i] = T::zero();
        }
        let back = move |g: &Tensor<T>, sink: &mut super::graph::GradSink<'_, T>| {
            let mut dg = g.data().to_vec();
            for i in 0..n {
                dg[i * n + i] = T::zero();
            }
            sink.add(x, Tensor::new(vec![n, n], dg));
        };
        Ok(self.push(Tensor::new(vec![n, n], out), Some(Box::new(back))))
    }
}
