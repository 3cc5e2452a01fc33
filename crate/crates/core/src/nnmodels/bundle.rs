//! A trained model: feature extractor plus a method-specific head, with its
//! parameter set and checkpoint glue.

use std::path::Path;

use super::config::ResNetConfig;
use super::heads::{ClassifierHead, DomainDiscriminator, StochasticHead, TwinHeads};
use super::layers::ForwardCtx;
use super::resnet::FeatureExtractor;
use crate::adcore::{checkpoint, Graph, ParamSet, Scalar, Tensor, Var};
use crate::error::Result;

/// Which head(s) to attach at construction time.
#[derive(Clone, Copy, PartialEq, Eq, Debug)]
pub enum HeadSpec {
    /// Label classifier only (baseline, CORAL, JAN).
    Single,
    /// Label classifier plus domain discriminator (DANN).
    Adversarial,
    /// Two independent classifiers (MCD).
    Twin,
    /// Stochastic final layer (STAR).
    Stochastic,
}

pub enum HeadKind {
    Single(ClassifierHead),
    Adversarial {
        classifier: ClassifierHead,
        discriminator: DomainDiscriminator,
    },
    Twin(TwinHeads),
    Stochastic(StochasticHead),
}

pub struct ModelBundle<T> {
    pub cfg: ResNetConfig,
    pub params: ParamSet<T>,
    pub features: FeatureExtractor,
    pub head: HeadKind,
}

impl<T: Scalar> ModelBundle<T> {
    /// Build a fresh model; all initialization draws come from `seed`.
    pub fn new(cfg: &ResNetConfig, head: HeadSpec, seed: u64) -> Result<Self> {
        let mut params = ParamSet::new();
        let mut rng = crate::seed::rng(seed);
        let features = FeatureExtractor::build(cfg, &mut params, &mut rng)?;
        let d = cfg.feature_dim;
        let (hidden, k, p) = (cfg.head_hidden, cfg.num_classes, cfg.dropout_p);
        let head = match head {
            HeadSpec::Single => HeadKind::Single(ClassifierHead::new(
                &mut params,
                "gy",
                d,
                hidden,
                k,
                p,
                &mut rng,
            )),
            HeadSpec::Adversarial => HeadKind::Adversarial {
                classifier: ClassifierHead::new(&mut params, "gy", d, hidden, k, p, &mut rng),
                discriminator: DomainDiscriminator::new(&mut params, "gd", d, hidden, &mut rng),
            },
            HeadSpec::Twin => {
                HeadKind::Twin(TwinHeads::new(&mut params, d, hidden, k, p, &mut rng))
            }
            HeadSpec::Stochastic => {
                HeadKind::Stochastic(StochasticHead::new(&mut params, d, hidden, k, p, &mut rng))
            }
        };
        Ok(ModelBundle {
            cfg: cfg.clone(),
            params,
            features,
            head,
        })
    }

    /// Deterministic eval-mode class probabilities for a `[B, 2, N]` batch.
    /// Twin heads average their softmax outputs; the stochastic head uses its
    /// mean classifier.
    pub fn predict_probs(&mut self, batch: &Tensor<T>) -> Result<Tensor<T>> {
        let mut g: Graph<T> = Graph::new();
        let mut rng = crate::seed::rng(0); // eval path consumes no randomness
        let x = g.leaf(batch.clone());
        let mut ctx = ForwardCtx {
            graph: &mut g,
            params: &mut self.params,
            train: false,
            rng: &mut rng,
        };
        let feats = self.features.forward(&mut ctx, x)?;
        let probs: Var = match &self.head {
            HeadKind::Single(c) | HeadKind::Adversarial { classifier: c, .. } => {
                let logits = c.forward(&mut ctx, feats)?;
                ctx.graph.softmax(logits)
            }
            HeadKind::Twin(t) => {
                let l1 = t.first.forward(&mut ctx, feats)?;
                let l2 = t.second.forward(&mut ctx, feats)?;
                let p1 = ctx.graph.softmax(l1);
                let p2 = ctx.graph.softmax(l2);
                let s = ctx.graph.add(p1, p2);
                ctx.graph.scale(s, 0.5)
            }
            HeadKind::Stochastic(s) => {
                let logits = s.mean_logits(&mut ctx, feats)?;
                ctx.graph.softmax(logits)
            }
        };
        Ok(g.value(probs).clone())
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        checkpoint::save(&self.params, path)
    }

    pub fn load_weights(&mut self, path: &Path) -> Result<()> {
        checkpoint::load_into(&mut self.params, path)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Learnable parameter count computed independently from the layer
    /// dimensions (conv: c_out*c_in*k + c_out; bn: 2c; dense: out*in + out).
    fn expected_learnable(cfg: &ResNetConfig) -> usize {
        let k = cfg.kernel;
        let conv = |cin: usize, cout: usize, kk: usize| cout * cin * kk + cout;
        let bn = |c: usize| 2 * c;
        let mut total = conv(2, cfg.stem_channels, k) + bn(cfg.stem_channels);
        let mut cin = cfg.stem_channels;
        for &cout in &cfg.stage_channels {
            for _ in 0..cfg.blocks_per_stage {
                total += conv(cin, cout, k) + bn(cout); // conv1 + bn1
                total += conv(cout, cout, k) + bn(cout); // conv2 + bn2
                total += conv(cin, cout, 1) + bn(cout); // projection shortcut
                cin = cout;
            }
        }
        // Single classifier head.
        total += cfg.head_hidden * cfg.feature_dim + cfg.head_hidden;
        total += cfg.num_classes * cfg.head_hidden + cfg.num_classes;
        total
    }

    #[test]
    fn default_parameter_count_is_documented_constant() {
        let cfg = ResNetConfig::default();
        let bundle: ModelBundle<f32> = ModelBundle::new(&cfg, HeadSpec::Single, 7).unwrap();
        let got = bundle.params.learnable_count();
        assert_eq!(got, expected_learnable(&cfg));
        // Frozen constant for the default 1-D ResNet-18 with its head.
        assert_eq!(got, 4_085_332);
    }

    #[test]
    fn checkpoint_roundtrip_reproduces_eval_logits() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.rsck");
        let cfg = ResNetConfig {
            input_len: 64,
            stem_channels: 4,
            stage_channels: vec![4, 8],
            blocks_per_stage: 1,
            feature_dim: 8,
            head_hidden: 8,
            ..ResNetConfig::desk()
        };
        let mut a: ModelBundle<f32> = ModelBundle::new(&cfg, HeadSpec::Single, 42).unwrap();
        let batch = Tensor::from_fn(&[2, 2, 64], |i| ((i * 37 % 11) as f32 - 5.0) / 5.0);
        let pa = a.predict_probs(&batch).unwrap();
        a.save(&path).unwrap();

        let mut b: ModelBundle<f32> = ModelBundle::new(&cfg, HeadSpec::Single, 999).unwrap();
        b.load_weights(&path).unwrap();
        let pb = b.predict_probs(&batch).unwrap();
        assert_eq!(pa.data(), pb.data());
    }

    #[test]
    fn batch_independence_in_eval_mode() {
        let cfg = ResNetConfig {
            input_len: 64,
            stem_channels: 4,
            stage_channels: vec![4, 8],
            blocks_per_stage: 1,
            feature_dim: 8,
            head_hidden: 8,
            ..ResNetConfig::desk()
        };
        let mut m: ModelBundle<f32> = ModelBundle::new(&cfg, HeadSpec::Single, 1).unwrap();
        let row: Vec<f32> = (0..128).map(|i| ((i % 13) as f32 - 6.0) / 6.0).collect();
        let single = Tensor::new(vec![1, 2, 64], row.clone());
        let mut two = row.clone();
        two.extend_from_slice(&row);
        let dup = Tensor::new(vec![2, 2, 64], two);
        let p1 = m.predict_probs(&single).unwrap();
        let p2 = m.predict_probs(&dup).unwrap();
        assert_eq!(p1.data(), &p2.data()[..4]);
        assert_eq!(p1.data(), &p2.data()[4..]);
    }
}
