//! Reverse-mode tape over dense tensors.
//!
//! A [`Graph`] records one forward pass; every op pushes a node holding the
//! output value and a backward closure that scatters gradient into its
//! parents. Nodes only ever reference older nodes, so a single reverse sweep
//! over the tape is a valid topological order and multiple uses of a value
//! accumulate naturally.

use super::params::{ParamId, ParamSet};
use super::tensor::{Scalar, Tensor};
use crate::error::{Error, Result};

/// Handle to a node in the tape.
#[derive(Clone, Copy, PartialEq, Eq, Debug)]
pub struct Var(pub(crate) usize);

pub(crate) type BackFn<T> = Box<dyn Fn(&Tensor<T>, &mut GradSink<'_, T>)>;

pub(crate) struct Node<T> {
    pub value: Tensor<T>,
    pub backward: Option<BackFn<T>>,
}

/// Accumulates gradient contributions during the reverse sweep.
pub struct GradSink<'a, T> {
    slots: &'a mut [Option<Tensor<T>>],
}

impl<T: Scalar> GradSink<'_, T> {
    pub fn add(&mut self, v: Var, delta: Tensor<T>) {
        match &mut self.slots[v.0] {
            Some(acc) => acc.add_assign(&delta),
            slot @ None => *slot = Some(delta),
        }
    }
}

pub struct Graph<T> {
    pub(crate) nodes: Vec<Node<T>>,
    bindings: Vec<(Var, ParamId)>,
}

impl<T: Scalar> Default for Graph<T> {
    fn default() -> Self {
        Self::new()
    }
}

impl<T: Scalar> Graph<T> {
    pub fn new() -> Self {
        Graph {
            nodes: Vec::new(),
            bindings: Vec::new(),
        }
    }

    pub(crate) fn push(&mut self, value: Tensor<T>, backward: Option<BackFn<T>>) -> Var {
        self.nodes.push(Node { value, backward });
        Var(self.nodes.len() - 1)
    }

    pub fn value(&self, v: Var) -> &Tensor<T> {
        &self.nodes[v.0].value
    }

    /// Record an input tensor. Leaves receive gradients but own no update
    /// rule; use [`Graph::param`] for learnable state.
    pub fn leaf(&mut self, t: Tensor<T>) -> Var {
        self.push(t, None)
    }

    /// Record a parameter read. Its gradient lands in the [`ParamSet`] on
    /// [`Graph::backward`].
    pub fn param(&mut self, params: &ParamSet<T>, id: ParamId) -> Var {
        let v = self.push(params.value(id).clone(), None);
        self.bindings.push((v, id));
        v
    }

    /// Reverse sweep from a rank-0 loss; returns one gradient slot per node.
    pub fn backward_collect(&self, loss: Var) -> Vec<Option<Tensor<T>>> {
        assert_eq!(
            self.nodes[loss.0].value.numel(),
            1,
            "backward requires a scalar loss"
        );
        let mut grads: Vec<Option<Tensor<T>>> = vec![None; self.nodes.len()];
        grads[loss.0] = Some(Tensor::scalar(T::one()));
        for i in (0..=loss.0).rev() {
            let Some(g) = grads[i].clone() else { continue };
            if let Some(back) = &self.nodes[i].backward {
                let mut sink = GradSink { slots: &mut grads };
                back(&g, &mut sink);
            }
        }
        grads
    }

    /// Backward pass that accumulates into bound parameter gradients.
    pub fn backward(&self, loss: Var, params: &mut ParamSet<T>) {
        let grads = self.backward_collect(loss);
        for &(v, id) in &self.bindings {
            if let Some(g) = &grads[v.0] {
                params.accumulate_grad(id, g);
            }
        }
    }

    // ------------------------------------------------------------------
    // Elementwise ops
    // ------------------------------------------------------------------

    fn binary(
        &mut self,
        op: &'static str,
        a: Var,
        b: Var,
        f: impl Fn(T, T) -> T,
        back: impl Fn(&Tensor<T>, &Tensor<T>, &Tensor<T>, &mut GradSink<'_, T>) + 'static,
    ) -> Var {
        let (ta, tb) = (self.value(a).clone(), self.value(b).clone());
        assert!(
            ta.is_same_shape(&tb),
            "{op}: shape {:?} vs {:?}",
            ta.shape(),
            tb.shape()
        );
        let out = Tensor::new(
            ta.shape().to_vec(),
            ta.data()
                .iter()
                .zip(tb.data())
                .map(|(&x, &y)| f(x, y))
                .collect(),
        );
        self.push(
            out,
            Some(Box::new(move |g, sink| back(g, &ta, &tb, sink))),
        )
    }

    pub fn add(&mut self, a: Var, b: Var) -> Var {
        self.binary("add", a, b, |x, y| x + y, move |g, _, _, sink| {
            sink.add(a, g.clone());
            sink.add(b, g.clone());
        })
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Var {
        self.binary("sub", a, b, |x, y| x - y, move |g, _, _, sink| {
            sink.add(a, g.clone());
            sink.add(b, g.map(|x| -x));
        })
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Var {
        self.binary("mul", a, b, |x, y| x * y, move |g, ta, tb, sink| {
            sink.add(a, zip_mul(g, tb));
            sink.add(b, zip_mul(g, ta));
        })
    }

    fn unary(
        &mut self,
        x: Var,
        f: impl Fn(T) -> T,
        dfdx: impl Fn(T, T) -> T + 'static,
    ) -> Var {
        let tx = self.value(x).clone();
        let out = tx.map(&f);
        let ty = out.clone();
        self.push(
            out,
            Some(Box::new(move |g, sink| {
                let delta = Tensor::new(
                    tx.shape().to_vec(),
                    g.data()
                        .iter()
                        .zip(tx.data().iter().zip(ty.data()))
                        .map(|(&gi, (&xi, &yi))| gi * dfdx(xi, yi))
                        .collect(),
                );
                sink.add(x, delta);
            })),
        )
    }

    pub fn neg(&mut self, x: Var) -> Var {
        self.unary(x, |v| -v, |_, _| -T::one())
    }

    pub fn exp(&mut self, x: Var) -> Var {
        self.unary(x, |v| v.exp(), |_, y| y)
    }

    pub fn ln(&mut self, x: Var) -> Var {
        self.unary(x, |v| v.ln(), |v, _| T::one() / v)
    }

    pub fn abs(&mut self, x: Var) -> Var {
        self.unary(
            x,
            |v| v.abs(),
            |v, _| {
                if v > T::zero() {
                    T::one()
                } else if v < T::zero() {
                    -T::one()
                } else {
                    T::zero()
                }
            },
        )
    }

    pub fn sigmoid(&mut self, x: Var) -> Var {
        self.unary(x, sigmoid_scalar, |_, y| y * (T::one() - y))
    }

    /// Numerically stable ln(1 + e^x); derivative is the sigmoid.
    pub fn softplus(&mut self, x: Var) -> Var {
        self.unary(
            x,
            |v| v.max(T::zero()) + (-v.abs()).exp().ln_1p(),
            |v, _| sigmoid_scalar(v),
        )
    }

    /// max(x, c) with gradient blocked where x <= c.
    pub fn clamp_min(&mut self, x: Var, c: f64) -> Var {
        let c = T::from_f64(c);
        self.unary(
            x,
            move |v| v.max(c),
            move |v, _| if v > c { T::one() } else { T::zero() },
        )
    }

    /// Multiply by a compile-time constant.
    pub fn scale(&mut self, x: Var, k: f64) -> Var {
        let k = T::from_f64(k);
        self.unary(x, move |v| v * k, move |_, _| k)
    }

    // ------------------------------------------------------------------
    // Reductions
    // ------------------------------------------------------------------

    pub fn sum_all(&mut self, x: Var) -> Var {
        let tx = self.value(x).clone();
        let shape = tx.shape().to_vec();
        let s = tx.sum();
        self.push(
            Tensor::scalar(s),
            Some(Box::new(move |g, sink| {
                sink.add(x, Tensor::full(&shape, g.item()));
            })),
        )
    }

    pub fn mean_all(&mut self, x: Var) -> Var {
        let n = self.value(x).numel();
        let s = self.sum_all(x);
        self.scale(s, 1.0 / n as f64)
    }

    // ------------------------------------------------------------------
    // Shape ops (first axis)
    // ------------------------------------------------------------------

    /// Concatenate along the first axis; trailing dims must match.
    pub fn concat_rows(&mut self, a: Var, b: Var) -> Var {
        let (ta, tb) = (self.value(a).clone(), self.value(b).clone());
        assert!(
            ta.shape()[1..] == tb.shape()[1..],
            "concat_rows: trailing dims {:?} vs {:?}",
            ta.shape(),
            tb.shape()
        );
        let ra = ta.shape()[0];
        let rb = tb.shape()[0];
        let mut shape = ta.shape().to_vec();
        shape[0] = ra + rb;
        let mut data = Vec::with_capacity(ta.numel() + tb.numel());
        data.extend_from_slice(ta.data());
        data.extend_from_slice(tb.data());
        let stride = if ra > 0 { ta.numel() / ra } else { tb.numel() / rb.max(1) };
        let (sa, sb) = (ta.shape().to_vec(), tb.shape().to_vec());
        self.push(
            Tensor::new(shape, data),
            Some(Box::new(move |g, sink| {
                let ga = Tensor::new(sa.clone(), g.data()[..ra * stride].to_vec());
                let gb = Tensor::new(sb.clone(), g.data()[ra * stride..].to_vec());
                sink.add(a, ga);
                sink.add(b, gb);
            })),
        )
    }

    /// Rows `r0..r1` along the first axis.
    pub fn slice_rows(&mut self, x: Var, r0: usize, r1: usize) -> Var {
        let tx = self.value(x).clone();
        let rows = tx.shape()[0];
        assert!(r0 < r1 && r1 <= rows, "slice_rows: {r0}..{r1} of {rows}");
        let stride = tx.numel() / rows;
        let mut shape = tx.shape().to_vec();
        shape[0] = r1 - r0;
        let data = tx.data()[r0 * stride..r1 * stride].to_vec();
        let full_shape = tx.shape().to_vec();
        self.push(
            Tensor::new(shape, data),
            Some(Box::new(move |g, sink| {
                let mut full = Tensor::zeros(&full_shape);
                full.data_mut()[r0 * stride..r1 * stride].copy_from_slice(g.data());
                sink.add(x, full);
            })),
        )
    }

    /// Gradient reversal: identity forward, incoming gradient scaled by
    /// `-lambda` on the way back.
    pub fn grl(&mut self, x: Var, lambda: f64) -> Var {
        assert!(lambda >= 0.0, "grl lambda must be >= 0");
        let t = self.value(x).clone();
        let neg = -T::from_f64(lambda);
        self.push(
            t,
            Some(Box::new(move |g, sink| {
                sink.add(x, g.map(|v| v * neg));
            })),
        )
    }
}

pub(crate) fn zip_mul<T: Scalar>(a: &Tensor<T>, b: &Tensor<T>) -> Tensor<T> {
    Tensor::new(
        a.shape().to_vec(),
        a.data().iter().zip(b.data()).map(|(&x, &y)| x * y).collect(),
    )
}

pub(crate) fn sigmoid_scalar<T: Scalar>(x: T) -> T {
    if x >= T::zero() {
        T::one() / (T::one() + (-x).exp())
    } else {
        let e = x.exp();
        e / (T::one() + e)
    }
}

pub(crate) fn shape_err(op: &'static str, details: String) -> Error {
    Error::Shape { op, details }
}

#[allow(dead_code)]
pub(crate) fn ok_or_shape(cond: bool, op: &'static str, details: impl Fn() -> String) -> Result<()> {
    if cond {
        Ok(())
    } else {
        Err(shape_err(op, details()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn grads_accumulate_across_multiple_uses() {
        // loss = sum(w*x) + sum(w*y): dw = x + y
        let mut g: Graph<f64> = Graph::new();
        let w = g.leaf(Tensor::new(vec![2], vec![1.0, 2.0]));
        let x = g.leaf(Tensor::new(vec![2], vec![3.0, 4.0]));
        let y = g.leaf(Tensor::new(vec![2], vec![10.0, 20.0]));
        let p1 = g.mul(w, x);
        let p2 = g.mul(w, y);
        let s = g.add(p1, p2);
        let loss = g.sum_all(s);
        let grads = g.backward_collect(loss);
        let dw = grads[w.0].as_ref().unwrap();
        assert_eq!(dw.data(), &[13.0, 24.0]);
    }

    #[test]
    fn backward_twice_doubles_param_grads() {
        let mut ps: ParamSet<f64> = ParamSet::new();
        let wid = ps.add("w", Tensor::new(vec![2], vec![1.5, -0.5]), true);
        let mut g: Graph<f64> = Graph::new();
        let w = g.param(&ps, wid);
        let loss = g.sum_all(w);
        g.backward(loss, &mut ps);
        let first = ps.grad(wid).data().to_vec();
        g.backward(loss, &mut ps);
        let second = ps.grad(wid).data().to_vec();
        assert_eq!(second, first.iter().map(|v| v * 2.0).collect::<Vec<_>>());
    }

    #[test]
    fn grl_reverses_and_scales() {
        let mut g: Graph<f64> = Graph::new();
        let x = g.leaf(Tensor::new(vec![3], vec![1.0, -2.0, 0.5]));
        let r = g.grl(x, 1.0);
        let loss = g.sum_all(r);
        let grads = g.backward_collect(loss);
        assert_eq!(grads[x.0].as_ref().unwrap().data(), &[-1.0, -1.0, -1.0]);

        let mut g: Graph<f64> = Graph::new();
        let x = g.leaf(Tensor::new(vec![2], vec![1.0, 2.0]));
        let r = g.grl(x, 0.0);
        let loss = g.sum_all(r);
        let grads = g.backward_collect(loss);
        assert_eq!(grads[x.0].as_ref().unwrap().data(), &[0.0, 0.0]);
    }

    #[test]
    fn concat_slice_roundtrip_gradients() {
        let mut g: Graph<f64> = Graph::new();
        let a = g.leaf(Tensor::new(vec![1, 2], vec![1.0, 2.0]));
        let b = g.leaf(Tensor::new(vec![2, 2], vec![3.0, 4.0, 5.0, 6.0]));
        let c = g.concat_rows(a, b);
        assert_eq!(g.value(c).shape(), &[3, 2]);
        let top = g.slice_rows(c, 0, 1);
        let loss = g.sum_all(top);
        let grads = g.backward_collect(loss);
        assert_eq!(grads[a.0].as_ref().unwrap().data(), &[1.0, 1.0]);
        assert_eq!(grads[b.0].as_ref().unwrap().data(), &[0.0; 4]);
    }
}
