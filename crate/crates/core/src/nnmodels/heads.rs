//! Method-specific heads on top of the shared feature extractor.

use rand_chacha::ChaCha12Rng;
use rand_distr::{Distribution, StandardNormal};

use super::layers::{DenseLayer, ForwardCtx};
use crate::adcore::{ParamId, ParamSet, Scalar, Tensor, Var};
use crate::error::{Error, Result};

/// Dense block for signal classification: d -> hidden -> K with ReLU and
/// dropout before the final layer.
pub struct ClassifierHead {
    fc1: DenseLayer,
    fc2: DenseLayer,
    dropout_p: f64,
}

impl ClassifierHead {
    pub fn new<T: Scalar>(
        params: &mut ParamSet<T>,
        name: &str,
        feature_dim: usize,
        hidden: usize,
        num_classes: usize,
        dropout_p: f64,
        rng: &mut ChaCha12Rng,
    ) -> Self {
        ClassifierHead {
            fc1: DenseLayer::new(params, &format!("{name}.fc1"), feature_dim, hidden, rng),
            fc2: DenseLayer::new(params, &format!("{name}.fc2"), hidden, num_classes, rng),
            dropout_p,
        }
    }

    pub fn forward<T: Scalar>(&self, ctx: &mut ForwardCtx<'_, T>, feats: Var) -> Result<Var> {
        let h = self.fc1.forward(ctx, feats)?;
        let train = ctx.train;
        let p = self.dropout_p;
        let h = {
            let r = ctx.graph.relu(h);
            ctx.graph.dropout(r, p, train, ctx.rng)
        };
        self.fc2.forward(ctx, h)
    }

    pub fn param_ids(&self) -> Vec<ParamId> {
        vec![self.fc1.w, self.fc1.b, self.fc2.w, self.fc2.b]
    }
}

/// Gradient-reversal coefficient ramp over training progress p in [0, 1].
pub fn grl_schedule(progress: f64) -> f64 {
    2.0 / (1.0 + (-10.0 * progress.clamp(0.0, 1.0)).exp()) - 1.0
}

/// Domain discriminator d -> hidden -> 1 behind a gradient reversal layer.
/// Raw logits feed the stable BCE; `sigmoid` maps them to (0, 1).
pub struct DomainDiscriminator {
    fc1: DenseLayer,
    fc2: DenseLayer,
}

impl DomainDiscriminator {
    pub fn new<T: Scalar>(
        params: &mut ParamSet<T>,
        name: &str,
        feature_dim: usize,
        hidden: usize,
        rng: &mut ChaCha12Rng,
    ) -> Self {
        DomainDiscriminator {
            fc1: DenseLayer::new(params, &format!("{name}.fc1"), feature_dim, hidden, rng),
            fc2: DenseLayer::new(params, &format!("{name}.fc2"), hidden, 1, rng),
        }
    }

    /// Features pass through GRL with coefficient `lambda_grl`, then the MLP.
    pub fn forward_logits<T: Scalar>(
        &self,
        ctx: &mut ForwardCtx<'_, T>,
        feats: Var,
        lambda_grl: f64,
    ) -> Result<Var> {
        let x = ctx.graph.grl(feats, lambda_grl);
        let h = self.fc1.forward(ctx, x)?;
        let h = ctx.graph.relu(h);
        self.fc2.forward(ctx, h)
    }
}

/// Two independent classifiers over shared features.
pub struct TwinHeads {
    pub first: ClassifierHead,
    pub second: ClassifierHead,
}

impl TwinHeads {
    pub fn new<T: Scalar>(
        params: &mut ParamSet<T>,
        feature_dim: usize,
        hidden: usize,
        num_classes: usize,
        dropout_p: f64,
        rng: &mut ChaCha12Rng,
    ) -> Self {
        TwinHeads {
            first: ClassifierHead::new(params, "gy1", feature_dim, hidden, num_classes, dropout_p, rng),
            second: ClassifierHead::new(params, "gy2", feature_dim, hidden, num_classes, dropout_p, rng),
        }
    }
}

/// Classifier whose final layer's weights are Gaussian: mean plus
/// softplus-transformed log-std, sampled with the reparameterization trick so
/// gradients reach both.
pub struct StochasticHead {
    fc1: DenseLayer,
    pub mu_w: ParamId,
    pub rho_w: ParamId,
    pub mu_b: ParamId,
    pub rho_b: ParamId,
    dropout_p: f64,
}

/// Initial std is `STD_SCALE * rms(mu)`.
const STD_SCALE: f64 = 0.05;

fn softplus_inv(y: f64) -> f64 {
    // ln(e^y - 1), guarded for small y.
    (y.exp() - 1.0).max(1e-12).ln()
}

impl StochasticHead {
    pub fn new<T: Scalar>(
        params: &mut ParamSet<T>,
        feature_dim: usize,
        hidden: usize,
        num_classes: usize,
        dropout_p: f64,
        rng: &mut ChaCha12Rng,
    ) -> Self {
        let fc1 = DenseLayer::new(params, "gy_star.fc1", feature_dim, hidden, rng);
        let mu_w_t: Tensor<T> = super::layers::kaiming(&[num_classes, hidden], hidden, rng);
        let rms = (mu_w_t.data().iter().map(|v| v.as_f64() * v.as_f64()).sum::<f64>()
            / mu_w_t.numel() as f64)
            .sqrt();
        let rho = softplus_inv(STD_SCALE * rms);
        let rho_w_t = Tensor::full(&[num_classes, hidden], T::from_f64(rho));
        let mu_w = params.add("gy_star.mu_w", mu_w_t, true);
        let rho_w = params.add("gy_star.rho_w", rho_w_t, true);
        let mu_b = params.add("gy_star.mu_b", Tensor::zeros(&[num_classes]), true);
        let rho_b = params.add(
            "gy_star.rho_b",
            Tensor::full(&[num_classes], T::from_f64(softplus_inv(STD_SCALE * 0.1))),
            true,
        );
        StochasticHead {
            fc1,
            mu_w,
            rho_w,
            mu_b,
            rho_b,
            dropout_p,
        }
    }

    fn hidden<T: Scalar>(&self, ctx: &mut ForwardCtx<'_, T>, feats: Var) -> Result<Var> {
        let h = self.fc1.forward(ctx, feats)?;
        let train = ctx.train;
        let p = self.dropout_p;
        let r = ctx.graph.relu(h);
        Ok(ctx.graph.dropout(r, p, train, ctx.rng))
    }

    /// Draw `c_samples` classifiers w = mu + softplus(rho) * eps and return
    /// their logits on the shared hidden activations. Requires c >= 2 so that
    /// pairwise consistency terms exist.
    pub fn sample_logits<T: Scalar>(
        &self,
        ctx: &mut ForwardCtx<'_, T>,
        feats: Var,
        c_samples: usize,
    ) -> Result<Vec<Var>> {
        if c_samples < 2 {
            return Err(Error::config(format!(
                "stochastic classifier needs >= 2 samples, got {c_samples}"
            )));
        }
        let h = self.hidden(ctx, feats)?;
        let w_shape = ctx.params.value(self.mu_w).shape().to_vec();
        let b_shape = ctx.params.value(self.mu_b).shape().to_vec();
        let mut out = Vec::with_capacity(c_samples);
        for _ in 0..c_samples {
            let eps_w: Tensor<T> = Tensor::from_fn(&w_shape, |_| {
                let z: f64 = StandardNormal.sample(ctx.rng);
                T::from_f64(z)
            });
            let eps_b: Tensor<T> = Tensor::from_fn(&b_shape, |_| {
                let z: f64 = StandardNormal.sample(ctx.rng);
                T::from_f64(z)
            });
            let logits = self.sampled_logits_with_noise(ctx, h, &eps_w, &eps_b)?;
            out.push(logits);
        }
        Ok(out)
    }

    /// One reparameterized draw with caller-provided noise (tests freeze it).
    pub fn sampled_logits_with_noise<T: Scalar>(
        &self,
        ctx: &mut ForwardCtx<'_, T>,
        hidden: Var,
        eps_w: &Tensor<T>,
        eps_b: &Tensor<T>,
    ) -> Result<Var> {
        let mu_w = ctx.graph.param(ctx.params, self.mu_w);
        let rho_w = ctx.graph.param(ctx.params, self.rho_w);
        let mu_b = ctx.graph.param(ctx.params, self.mu_b);
        let rho_b = ctx.graph.param(ctx.params, self.rho_b);
        let ew = ctx.graph.leaf(eps_w.clone());
        let eb = ctx.graph.leaf(eps_b.clone());
        let std_w = ctx.graph.softplus(rho_w);
        let noise_w = ctx.graph.mul(std_w, ew);
        let w = ctx.graph.add(mu_w, noise_w);
        let std_b = ctx.graph.softplus(rho_b);
        let noise_b = ctx.graph.mul(std_b, eb);
        let b = ctx.graph.add(mu_b, noise_b);
        ctx.graph.dense(hidden, w, b)
    }

    /// Deterministic mean classifier used at evaluation time.
    pub fn mean_logits<T: Scalar>(&self, ctx: &mut ForwardCtx<'_, T>, feats: Var) -> Result<Var> {
        let h = self.hidden(ctx, feats)?;
        let mu_w = ctx.graph.param(ctx.params, self.mu_w);
        let mu_b = ctx.graph.param(ctx.params, self.mu_b);
        ctx.graph.dense(h, mu_w, mu_b)
    }
}
