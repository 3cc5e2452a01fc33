//! 1-D ResNet feature extractor: stem conv, four stages of residual blocks,
//! global average pooling to a fixed-length feature vector.

use rand_chacha::ChaCha12Rng;

use super::config::ResNetConfig;
use super::layers::{BnLayer, ConvLayer, ForwardCtx, ResBlock};
use crate::adcore::{conv1d_out_len, ParamSet, Scalar, Var};
use crate::error::{Error, Result};

pub struct FeatureExtractor {
    stem_conv: ConvLayer,
    stem_bn: BnLayer,
    stages: Vec<Vec<ResBlock>>,
    pub feature_dim: usize,
    /// Temporal length after each stage, for inspection and tests.
    pub stage_lengths: Vec<usize>,
}

impl FeatureExtractor {
    /// Build and register all parameters; fails if any stage collapses the
    /// temporal length below 1.
    pub fn build<T: Scalar>(
        cfg: &ResNetConfig,
        params: &mut ParamSet<T>,
        rng: &mut ChaCha12Rng,
    ) -> Result<Self> {
        cfg.validate()?;
        let k = cfg.kernel;
        let mut len = conv1d_out_len(cfg.input_len, k, 2, k / 2).ok_or_else(|| {
            Error::config(format!("stem collapses input of length {}", cfg.input_len))
        })?;
        let stem_conv = ConvLayer::new(params, "gf.stem.conv", 2, cfg.stem_channels, k, 2, rng);
        let stem_bn = BnLayer::new(params, "gf.stem.bn", cfg.stem_channels);

        let mut stages = Vec::new();
        let mut stage_lengths = Vec::new();
        let mut c_in = cfg.stem_channels;
        for (si, &c_out) in cfg.stage_channels.iter().enumerate() {
            let mut blocks = Vec::new();
            for bi in 0..cfg.blocks_per_stage {
                len = conv1d_out_len(len, k, 2, k / 2).filter(|&l| l >= 1).ok_or_else(|| {
                    Error::config(format!(
                        "stage {si} block {bi} collapses temporal length (have {len})"
                    ))
                })?;
                blocks.push(ResBlock::new(
                    params,
                    &format!("gf.stage{si}.block{bi}"),
                    c_in,
                    c_out,
                    k,
                    2,
                    rng,
                ));
                c_in = c_out;
            }
            stage_lengths.push(len);
            stages.push(blocks);
        }
        Ok(FeatureExtractor {
            stem_conv,
            stem_bn,
            stages,
            feature_dim: cfg.feature_dim,
            stage_lengths,
        })
    }

    /// `[B, 2, N] -> [B, feature_dim]`
    pub fn forward<T: Scalar>(&self, ctx: &mut ForwardCtx<'_, T>, x: Var) -> Result<Var> {
        let h = self.stem_conv.forward(ctx, x)?;
        let h = self.stem_bn.forward(ctx, h)?;
        let mut h = ctx.graph.relu(h);
        for stage in &self.stages {
            for block in stage {
                h = block.forward(ctx, h)?;
            }
        }
        ctx.graph.global_avg_pool(h)
    }
}
