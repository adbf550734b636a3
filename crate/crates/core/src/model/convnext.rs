//! The volumetric ConvNeXt backbone with classification and segmentation
//! heads.
//!
//! Blocks are inverted bottlenecks: depthwise 7³ convolution, layer norm,
//! pointwise expansion to 4× width, GELU, pointwise projection back, plus a
//! residual connection. The stem patchifies with a stride-4 convolution
//! followed by layer norm; each later stage starts with a norm + stride-2
//! 2³ convolution. The forward pass is written against [`Context`], so the
//! same code runs eagerly for inference and on a tape for training.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use super::config::ModelConfig;
use super::params::ParamStore;
use crate::autodiff::Context;
use crate::error::{Error, Result};
use crate::tensor::{Element, Tensor};

const LN_EPS: f64 = 1e-6;

/// How a parameter participates in 2D-to-3D weight import.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ParamKind {
    /// Spatial convolution kernel; gains a depth axis of the given extent.
    SpatialConv { depth: usize },
    /// 1×1 convolution; copied with a trailing singleton depth axis.
    PointwiseConv,
    /// Norm affine vector or bias; copied verbatim.
    Vector,
    /// Dense head weight; copied verbatim.
    Linear,
}

#[derive(Debug, Clone, Copy)]
enum Init {
    TruncNormal,
    Zeros,
    Ones,
}

/// One row of the canonical parameter table.
pub struct ParamSpec {
    pub name: String,
    pub dims: Vec<usize>,
    pub kind: ParamKind,
    init: Init,
}

/// Canonical parameter table of a configuration, in checkpoint order.
pub fn parameter_specs(config: &ModelConfig) -> Vec<ParamSpec> {
    let mut specs = Vec::new();
    let mut push = |name: String, dims: Vec<usize>, kind: ParamKind, init: Init| {
        specs.push(ParamSpec { name, dims, kind, init });
    };
    let p = config.stem_patch;
    let k = config.depthwise_kernel;
    let ch = &config.stage_channels;

    push(
        "stem.conv.weight".into(),
        vec![config.in_channels, ch[0], p, p, p],
        ParamKind::SpatialConv { depth: p },
        Init::TruncNormal,
    );
    push("stem.conv.bias".into(), vec![ch[0]], ParamKind::Vector, Init::Zeros);
    push("stem.norm.weight".into(), vec![ch[0]], ParamKind::Vector, Init::Ones);
    push("stem.norm.bias".into(), vec![ch[0]], ParamKind::Vector, Init::Zeros);

    for s in 0..config.num_stages() {
        if s > 0 {
            let (cin, cout) = (ch[s - 1], ch[s]);
            push(format!("downsample.{s}.norm.weight"), vec![cin], ParamKind::Vector, Init::Ones);
            push(format!("downsample.{s}.norm.bias"), vec![cin], ParamKind::Vector, Init::Zeros);
            push(
                format!("downsample.{s}.conv.weight"),
                vec![cin, cout, 2, 2, 2],
                ParamKind::SpatialConv { depth: 2 },
                Init::TruncNormal,
            );
            push(format!("downsample.{s}.conv.bias"), vec![cout], ParamKind::Vector, Init::Zeros);
        }
        let c = ch[s];
        for b in 0..config.stage_depths[s] {
            let pre = format!("stages.{s}.blocks.{b}");
            push(
                format!("{pre}.dwconv.weight"),
                vec![c, 1, k, k, k],
                ParamKind::SpatialConv { depth: k },
                Init::TruncNormal,
            );
            push(format!("{pre}.dwconv.bias"), vec![c], ParamKind::Vector, Init::Zeros);
            push(format!("{pre}.norm.weight"), vec![c], ParamKind::Vector, Init::Ones);
            push(format!("{pre}.norm.bias"), vec![c], ParamKind::Vector, Init::Zeros);
            push(format!("{pre}.pwconv1.weight"), vec![c, 4 * c, 1, 1, 1], ParamKind::PointwiseConv, Init::TruncNormal);
            push(format!("{pre}.pwconv1.bias"), vec![4 * c], ParamKind::Vector, Init::Zeros);
            push(format!("{pre}.pwconv2.weight"), vec![4 * c, c, 1, 1, 1], ParamKind::PointwiseConv, Init::TruncNormal);
            push(format!("{pre}.pwconv2.bias"), vec![c], ParamKind::Vector, Init::Zeros);
        }
    }

    let c_last = *ch.last().expect("validated nonempty");
    if config.heads.classification {
        push("head.norm.weight".into(), vec![c_last], ParamKind::Vector, Init::Ones);
        push("head.norm.bias".into(), vec![c_last], ParamKind::Vector, Init::Zeros);
        // the classification head starts at zero so initial logits are
        // exactly uniform; otherwise noisy-input training collapses into
        // suppressing input dependence before any class signal is learned
        push("head.fc.weight".into(), vec![c_last, config.num_classes], ParamKind::Linear, Init::Zeros);
        push("head.fc.bias".into(), vec![config.num_classes], ParamKind::Vector, Init::Zeros);
    }
    if config.heads.segmentation {
        let g = config.seg_channels;
        for (s, &c) in ch.iter().enumerate() {
            push(format!("seg.proj.{s}.conv.weight"), vec![c, g, 1, 1, 1], ParamKind::PointwiseConv, Init::TruncNormal);
            push(format!("seg.proj.{s}.conv.bias"), vec![g], ParamKind::Vector, Init::Zeros);
            push(format!("seg.proj.{s}.norm.weight"), vec![g], ParamKind::Vector, Init::Ones);
            push(format!("seg.proj.{s}.norm.bias"), vec![g], ParamKind::Vector, Init::Zeros);
        }
        push("seg.fuse.weight".into(), vec![config.num_stages() * g, g, 3, 3, 3], ParamKind::SpatialConv { depth: 3 }, Init::TruncNormal);
        push("seg.fuse.bias".into(), vec![g], ParamKind::Vector, Init::Zeros);
        push("seg.out.weight".into(), vec![g, 2, 1, 1, 1], ParamKind::PointwiseConv, Init::TruncNormal);
        push("seg.out.bias".into(), vec![2], ParamKind::Vector, Init::Zeros);
    }
    specs
}

/// Per-stage backbone outputs, coarsest last.
pub struct StageFeatures<V> {
    pub stages: Vec<V>,
}

/// A configured model with its parameters.
pub struct Model<E: Element> {
    config: ModelConfig,
    params: ParamStore<E>,
}

impl<E: Element> Model<E> {
    /// Initialize parameters: truncated normal (std 0.02, cut at ±2 std) for
    /// conv and linear weights, zeros for biases, ones/zeros for norm affine.
    pub fn build(config: ModelConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        if config.depthwise_kernel % 2 == 0 {
            return Err(Error::Config(
                "depthwise kernel must be odd so blocks preserve extents".into(),
            ));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let normal = Normal::new(0.0f64, 0.02).expect("valid std");
        let trunc = |rng: &mut ChaCha8Rng| loop {
            let x = normal.sample(rng);
            if x.abs() <= 0.04 {
                return E::from_f64(x);
            }
        };
        let mut params = ParamStore::new();
        for spec in parameter_specs(&config) {
            let n: usize = spec.dims.iter().product();
            let data: Vec<E> = match spec.init {
                Init::TruncNormal => (0..n).map(|_| trunc(&mut rng)).collect(),
                Init::Zeros => vec![E::zero(); n],
                Init::Ones => vec![E::one(); n],
            };
            params.insert(spec.name, Tensor::from_vec(spec.dims, data)?)?;
        }
        Ok(Self { config, params })
    }

    pub fn config(&self) -> &ModelConfig {
        &self.config
    }

    pub fn params(&self) -> &ParamStore<E> {
        &self.params
    }

    pub fn set_param(&mut self, name: &str, value: Tensor<E>) -> Result<()> {
        self.params.set(name, value)
    }

    /// Convert parameter precision (e.g. to f64 for gradient verification).
    pub fn cast<F: Element>(&self) -> Model<F> {
        let mut params = ParamStore::new();
        for (name, t) in self.params.iter() {
            params.insert(name, t.cast::<F>()).expect("names unique");
        }
        Model { config: self.config.clone(), params }
    }

    fn p<C: Context<E>>(&self, ctx: &mut C, name: &str) -> Result<C::Value> {
        Ok(ctx.param(name, self.params.get(name)?))
    }

    fn norm<C: Context<E>>(&self, ctx: &mut C, x: &C::Value, prefix: &str) -> Result<C::Value> {
        let gamma = self.p(ctx, &format!("{prefix}.weight"))?;
        let beta = self.p(ctx, &format!("{prefix}.bias"))?;
        ctx.layer_norm(x, &gamma, &beta, E::from_f64(LN_EPS))
    }

    fn conv<C: Context<E>>(
        &self,
        ctx: &mut C,
        x: &C::Value,
        prefix: &str,
        stride: usize,
        pad: usize,
    ) -> Result<C::Value> {
        let w = self.p(ctx, &format!("{prefix}.weight"))?;
        let b = self.p(ctx, &format!("{prefix}.bias"))?;
        let y = ctx.conv3d(x, &w, [stride; 3], [pad; 3])?;
        ctx.bias_add(&y, &b)
    }

    /// Backbone forward pass; the input value must be `[in_channels, S, S, S]`
    /// with `S` divisible by the cumulative downsampling.
    pub fn forward_features<C: Context<E>>(
        &self,
        ctx: &mut C,
        input: &C::Value,
    ) -> Result<StageFeatures<C::Value>> {
        let dims = ctx.tensor(input).dims().to_vec();
        if dims.len() != 4 || dims[0] != self.config.in_channels {
            return Err(Error::shape(format!(
                "model input must be [{}, S, S, S], got {dims:?}",
                self.config.in_channels
            )));
        }
        let s = dims[1];
        if dims[2] != s || dims[3] != s || s % self.config.downsample_factor() != 0 {
            return Err(Error::shape(format!(
                "input extents {dims:?} must be cubic and divisible by {}",
                self.config.downsample_factor()
            )));
        }

        let mut x = self.conv(ctx, input, "stem.conv", self.config.stem_patch, 0)?;
        x = self.norm(ctx, &x, "stem.norm")?;

        let k_pad = (self.config.depthwise_kernel - 1) / 2;
        let mut stages = Vec::with_capacity(self.config.num_stages());
        for st in 0..self.config.num_stages() {
            if st > 0 {
                x = self.norm(ctx, &x, &format!("downsample.{st}.norm"))?;
                x = self.conv(ctx, &x, &format!("downsample.{st}.conv"), 2, 0)?;
            }
            for b in 0..self.config.stage_depths[st] {
                let pre = format!("stages.{st}.blocks.{b}");
                let residual = x.clone();
                let w = self.p(ctx, &format!("{pre}.dwconv.weight"))?;
                let bias = self.p(ctx, &format!("{pre}.dwconv.bias"))?;
                let mut h = ctx.depthwise_conv3d(&x, &w, [1; 3], [k_pad; 3])?;
                h = ctx.bias_add(&h, &bias)?;
                h = self.norm(ctx, &h, &format!("{pre}.norm"))?;
                h = self.conv(ctx, &h, &format!("{pre}.pwconv1"), 1, 0)?;
                h = ctx.gelu(&h)?;
                h = self.conv(ctx, &h, &format!("{pre}.pwconv2"), 1, 0)?;
                x = ctx.add(&h, &residual)?;
            }
            stages.push(x.clone());
        }
        Ok(StageFeatures { stages })
    }

    /// Classification logits: global average pool of the final stage, layer
    /// norm, then the dense head. Softmax is applied downstream.
    pub fn classify<C: Context<E>>(
        &self,
        ctx: &mut C,
        features: &StageFeatures<C::Value>,
    ) -> Result<C::Value> {
        if !self.config.heads.classification {
            return Err(Error::Config("model has no classification head".into()));
        }
        let last = features.stages.last().ok_or_else(|| Error::shape("no stage features"))?;
        let pooled = ctx.global_avg_pool(last)?;
        let normed = self.norm(ctx, &pooled, "head.norm")?;
        let w = self.p(ctx, "head.fc.weight")?;
        let b = self.p(ctx, "head.fc.bias")?;
        ctx.linear(&normed, &w, &b)
    }

    /// Segmentation logits `[2, out]`: every stage is projected to the
    /// decoder width, resized to the finest stage grid, concatenated, fused
    /// by a 3³ convolution, projected to two channels and resized to
    /// `out_size`.
    pub fn segment<C: Context<E>>(
        &self,
        ctx: &mut C,
        features: &StageFeatures<C::Value>,
        out_size: [usize; 3],
    ) -> Result<C::Value> {
        if !self.config.heads.segmentation {
            return Err(Error::Config("model has no segmentation head".into()));
        }
        let first = features.stages.first().ok_or_else(|| Error::shape("no stage features"))?;
        let fdims = ctx.tensor(first).dims().to_vec();
        let target = [fdims[1], fdims[2], fdims[3]];
        let mut parts = Vec::with_capacity(features.stages.len());
        for (s, feat) in features.stages.iter().enumerate() {
            let mut h = self.conv(ctx, feat, &format!("seg.proj.{s}.conv"), 1, 0)?;
            h = self.norm(ctx, &h, &format!("seg.proj.{s}.norm"))?;
            h = ctx.gelu(&h)?;
            h = ctx.resize(&h, target)?;
            parts.push(h);
        }
        let cat = ctx.concat(&parts)?;
        let fused = self.conv(ctx, &cat, "seg.fuse", 1, 1)?;
        let logits = self.conv(ctx, &fused, "seg.out", 1, 0)?;
        ctx.resize(&logits, out_size)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::autodiff::Eager;

    #[test]
    fn toy_stage_extents_follow_schedule() {
        let model = Model::<f32>::build(ModelConfig::toy(2), 0).unwrap();
        let mut ctx = Eager;
        let input = Tensor::zeros(&[1, 32, 32, 32]);
        let feats = model.forward_features(&mut ctx, &input).unwrap();
        let sides: Vec<usize> = feats.stages.iter().map(|t| t.dims()[1]).collect();
        assert_eq!(sides, vec![8, 4, 2, 1]);
        for (t, &c) in feats.stages.iter().zip(&model.config().stage_channels) {
            assert_eq!(t.dims()[0], c);
            assert_eq!(t.dims()[1], t.dims()[2]);
            assert_eq!(t.dims()[2], t.dims()[3]);
        }
    }

    #[test]
    fn zero_input_produces_finite_outputs() {
        let model = Model::<f32>::build(ModelConfig::toy(3), 1).unwrap();
        let mut ctx = Eager;
        let input = Tensor::zeros(&[1, 32, 32, 32]);
        let feats = model.forward_features(&mut ctx, &input).unwrap();
        assert!(feats.stages.iter().all(|t| t.all_finite()));
        let logits = model.classify(&mut ctx, &feats).unwrap();
        assert_eq!(logits.dims(), &[3]);
        assert!(logits.all_finite());
        let mask = model.segment(&mut ctx, &feats, [32, 32, 32]).unwrap();
        assert_eq!(mask.dims(), &[2, 32, 32, 32]);
        assert!(mask.all_finite());
    }

    #[test]
    fn forward_is_deterministic() {
        use rand::SeedableRng;
        let model = Model::<f32>::build(ModelConfig::toy(2), 2).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let input = Tensor::uniform(&[1, 32, 32, 32], 0.0, 1.0, &mut rng);
        let mut ctx = Eager;
        let a = model.forward_features(&mut ctx, &input).unwrap();
        let b = model.forward_features(&mut ctx, &input).unwrap();
        for (x, y) in a.stages.iter().zip(&b.stages) {
            assert_eq!(x.data(), y.data());
        }
    }

    #[test]
    fn build_is_deterministic_per_seed() {
        let a = Model::<f32>::build(ModelConfig::toy(2), 7).unwrap();
        let b = Model::<f32>::build(ModelConfig::toy(2), 7).unwrap();
        for ((na, ta), (nb, tb)) in a.params().iter().zip(b.params().iter()) {
            assert_eq!(na, nb);
            assert_eq!(ta.data(), tb.data());
        }
        let c = Model::<f32>::build(ModelConfig::toy(2), 8).unwrap();
        assert_ne!(
            a.params().get("stem.conv.weight").unwrap().data(),
            c.params().get("stem.conv.weight").unwrap().data()
        );
    }

    #[test]
    fn bad_input_extents_are_shape_errors() {
        let model = Model::<f32>::build(ModelConfig::toy(2), 0).unwrap();
        let mut ctx = Eager;
        for dims in [vec![1usize, 30, 30, 30], vec![1, 32, 32, 16], vec![2, 32, 32, 32]] {
            let input = Tensor::<f32>::zeros(&dims);
            assert!(model.forward_features(&mut ctx, &input).is_err(), "{dims:?}");
        }
    }

    #[test]
    fn missing_heads_are_config_errors() {
        let cfg = ModelConfig { heads: super::super::config::Heads { classification: true, segmentation: false }, ..ModelConfig::toy(2) };
        let model = Model::<f32>::build(cfg, 0).unwrap();
        let mut ctx = Eager;
        let input = Tensor::zeros(&[1, 32, 32, 32]);
        let feats = model.forward_features(&mut ctx, &input).unwrap();
        assert!(model.classify(&mut ctx, &feats).is_ok());
        assert!(matches!(
            model.segment(&mut ctx, &feats, [32, 32, 32]),
            Err(Error::Config(_))
        ));
    }

    #[test]
    fn classify_ignores_spatial_permutation_of_final_stage() {
        let model = Model::<f32>::build(ModelConfig::toy(4), 4).unwrap();
        let mut ctx = Eager;
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let input = Tensor::uniform(&[1, 64, 64, 64], 0.0, 1.0, &mut rng);
        let feats = model.forward_features(&mut ctx, &input).unwrap();
        let logits = model.classify(&mut ctx, &feats).unwrap();
        // reverse all spatial axes of the final stage: a permutation
        let last = feats.stages.last().unwrap();
        let c = last.dims()[0];
        let side = last.dims()[1];
        let mut permuted = last.clone();
        for ch in 0..c {
            for x in 0..side {
                for y in 0..side {
                    for z in 0..side {
                        let v = last.at(&[ch, side - 1 - x, side - 1 - y, side - 1 - z]);
                        permuted.set(&[ch, x, y, z], v);
                    }
                }
            }
        }
        let mut feats2 = StageFeatures { stages: feats.stages.clone() };
        *feats2.stages.last_mut().unwrap() = permuted;
        let logits2 = model.classify(&mut ctx, &feats2).unwrap();
        for (a, b) in logits.data().iter().zip(logits2.data()) {
            assert!((a - b).abs() < 1e-5);
        }
    }

    #[test]
    fn constant_final_features_classify_through_pooling() {
        // pooling a constant field equals the constant vector through the head
        let model = Model::<f32>::build(ModelConfig::toy(4), 6).unwrap();
        let mut ctx = Eager;
        let c_last = *model.config().stage_channels.last().unwrap();
        let constant = Tensor::full(&[c_last, 2, 2, 2], 0.37);
        let feats = StageFeatures { stages: vec![Tensor::zeros(&[4, 8, 8, 8]), Tensor::zeros(&[8, 4, 4, 4]), Tensor::zeros(&[16, 2, 2, 2]), constant] };
        let logits = model.classify(&mut ctx, &feats).unwrap();
        // oracle: identical head applied to the pooled vector directly
        let pooled = Tensor::full(&[c_last], 0.37);
        let gamma = model.params().get("head.norm.weight").unwrap();
        let beta = model.params().get("head.norm.bias").unwrap();
        let normed = crate::ops::layer_norm(&pooled, gamma, beta, 1e-6).unwrap();
        let expect = crate::ops::linear(
            &normed,
            model.params().get("head.fc.weight").unwrap(),
            model.params().get("head.fc.bias").unwrap(),
        )
        .unwrap();
        for (a, b) in logits.data().iter().zip(expect.data()) {
            assert!((a - b).abs() < 1e-6);
        }
    }

    #[test]
    fn parameter_count_matches_closed_form() {
        let cfg = ModelConfig::default();
        let model = Model::<f32>::build(cfg.clone(), 0).unwrap();
        // independent closed-form sum over layers
        let ch = &cfg.stage_channels;
        let (p, k, nc) = (cfg.stem_patch, cfg.depthwise_kernel, cfg.num_classes);
        let mut expect = cfg.in_channels * ch[0] * p * p * p + 3 * ch[0];
        for s in 0..cfg.num_stages() {
            if s > 0 {
                expect += 2 * ch[s - 1] + ch[s - 1] * ch[s] * 8 + ch[s];
            }
            let c = ch[s];
            expect += cfg.stage_depths[s]
                * (c * k * k * k + c + 2 * c + c * 4 * c + 4 * c + 4 * c * c + c);
        }
        let c_last = *ch.last().unwrap();
        expect += 2 * c_last + c_last * nc + nc;
        assert_eq!(model.params().total_elements(), expect);
    }

    #[test]
    fn even_depthwise_kernel_is_rejected() {
        let cfg = ModelConfig { depthwise_kernel: 6, ..ModelConfig::toy(2) };
        assert!(Model::<f32>::build(cfg, 0).is_err());
    }
}
