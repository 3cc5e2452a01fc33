//! Building blocks: initialized conv/BN/dense layers and the residual block.

use rand_chacha::ChaCha12Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::adcore::{Graph, ParamId, ParamSet, Scalar, Tensor, Var};
use crate::error::Result;

pub const BN_MOMENTUM: f64 = 0.1;
pub const BN_EPS: f64 = 1e-5;

/// Everything a forward pass needs besides the layer weights.
pub struct ForwardCtx<'a, T: Scalar> {
    pub graph: &'a mut Graph<T>,
    pub params: &'a mut ParamSet<T>,
    pub train: bool,
    pub rng: &'a mut ChaCha12Rng,
}

/// Kaiming-normal tensor with std sqrt(2 / fan_in), sampled in index order.
pub fn kaiming<T: Scalar>(shape: &[usize], fan_in: usize, rng: &mut ChaCha12Rng) -> Tensor<T> {
    let std = (2.0 / fan_in as f64).sqrt();
    Tensor::from_fn(shape, |_| {
        let z: f64 = StandardNormal.sample(rng);
        T::from_f64(z * std)
    })
}

pub struct ConvLayer {
    pub w: ParamId,
    pub b: ParamId,
    pub stride: usize,
    pub pad: usize,
}

impl ConvLayer {
    pub fn new<T: Scalar>(
        params: &mut ParamSet<T>,
        name: &str,
        c_in: usize,
        c_out: usize,
        k: usize,
        stride: usize,
        rng: &mut ChaCha12Rng,
    ) -> Self {
        let w = params.add(
            format!("{name}.w"),
            kaiming(&[c_out, c_in, k], c_in * k, rng),
            true,
        );
        let b = params.add(format!("{name}.b"), Tensor::zeros(&[c_out]), true);
        ConvLayer {
            w,
            b,
            stride,
            pad: k / 2,
        }
    }

    pub fn forward<T: Scalar>(&self, ctx: &mut ForwardCtx<'_, T>, x: Var) -> Result<Var> {
        let w = ctx.graph.param(ctx.params, self.w);
        let b = ctx.graph.param(ctx.params, self.b);
        ctx.graph.conv1d(x, w, b, self.stride, self.pad)
    }
}

pub struct BnLayer {
    pub gamma: ParamId,
    pub beta: ParamId,
    pub running_mean: ParamId,
    pub running_var: ParamId,
}

impl BnLayer {
    pub fn new<T: Scalar>(params: &mut ParamSet<T>, name: &str, c: usize) -> Self {
        BnLayer {
            gamma: params.add(format!("{name}.gamma"), Tensor::ones(&[c]), true),
            beta: params.add(format!("{name}.beta"), Tensor::zeros(&[c]), true),
            running_mean: params.add(format!("{name}.running_mean"), Tensor::zeros(&[c]), false),
            running_var: params.add(format!("{name}.running_var"), Tensor::ones(&[c]), false),
        }
    }

    pub fn forward<T: Scalar>(&self, ctx: &mut ForwardCtx<'_, T>, x: Var) -> Result<Var> {
        let gamma = ctx.graph.param(ctx.params, self.gamma);
        let beta = ctx.graph.param(ctx.params, self.beta);
        ctx.graph.batchnorm1d(
            x,
            gamma,
            beta,
            ctx.params,
            self.running_mean,
            self.running_var,
            ctx.train,
            BN_MOMENTUM,
            BN_EPS,
        )
    }
}

pub struct DenseLayer {
    pub w: ParamId,
    pub b: ParamId,
}

impl DenseLayer {
    pub fn new<T: Scalar>(
        params: &mut ParamSet<T>,
        name: &str,
        f_in: usize,
        f_out: usize,
        rng: &mut ChaCha12Rng,
    ) -> Self {
        DenseLayer {
            w: params.add(format!("{name}.w"), kaiming(&[f_out, f_in], f_in, rng), true),
            b: params.add(format!("{name}.b"), Tensor::zeros(&[f_out]), true),
        }
    }

    pub fn forward<T: Scalar>(&self, ctx: &mut ForwardCtx<'_, T>, x: Var) -> Result<Var> {
        let w = ctx.graph.param(ctx.params, self.w);
        let b = ctx.graph.param(ctx.params, self.b);
        ctx.graph.dense(x, w, b)
    }
}

/// Residual block: conv(stride 2)-BN-ReLU, conv(stride 1)-BN, projection
/// shortcut whenever shape changes, sum, ReLU.
pub struct ResBlock {
    conv1: ConvLayer,
    bn1: BnLayer,
    conv2: ConvLayer,
    bn2: BnLayer,
    shortcut: Option<(ConvLayer, BnLayer)>,
}

impl ResBlock {
    pub fn new<T: Scalar>(
        params: &mut ParamSet<T>,
        name: &str,
        c_in: usize,
        c_out: usize,
        k: usize,
        stride: usize,
        rng: &mut ChaCha12Rng,
    ) -> Self {
        let conv1 = ConvLayer::new(params, &format!("{name}.conv1"), c_in, c_out, k, stride, rng);
        let bn1 = BnLayer::new(params, &format!("{name}.bn1"), c_out);
        let conv2 = ConvLayer::new(params, &format!("{name}.conv2"), c_out, c_out, k, 1, rng);
        let bn2 = BnLayer::new(params, &format!("{name}.bn2"), c_out);
        let shortcut = if stride != 1 || c_in != c_out {
            let sc = ConvLayer::new(params, &format!("{name}.down"), c_in, c_out, 1, stride, rng);
            let sbn = BnLayer::new(params, &format!("{name}.down_bn"), c_out);
            Some((sc, sbn))
        } else {
            None
        };
        ResBlock {
            conv1,
            bn1,
            conv2,
            bn2,
            shortcut,
        }
    }

    pub fn forward<T: Scalar>(&self, ctx: &mut ForwardCtx<'_, T>, x: Var) -> Result<Var> {
        let h = self.conv1.forward(ctx, x)?;
        let h = self.bn1.forward(ctx, h)?;
        let h = ctx.graph.relu(h);
        let h = self.conv2.forward(ctx, h)?;
        let h = self.bn2.forward(ctx, h)?;
        let sc = match &self.shortcut {
            Some((conv, bn)) => {
                let s = conv.forward(ctx, x)?;
                bn.forward(ctx, s)?
            }
            None => x,
        };
        let sum = ctx.graph.add(h, sc);
        Ok(ctx.graph.relu(sum))
    }
}
