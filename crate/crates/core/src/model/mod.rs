//! Detector network: a residual backbone with an attachable sub-network
//! and two 128-dim unit-norm projection heads in pretrain mode, or a
//! multilayer-perceptron classifier over pooled backbone features in
//! calibrated mode, plus normalization-statistics refresh.

mod backbone;
mod checkpoint;

pub use backbone::{Backbone, BackboneCache, BackboneSpec, BlockKind, StemKind};
pub use checkpoint::DetectorCheckpoint;

use ndarray::{Array1, Array2, Array3, Array4};
use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::nn::{
    global_avg_pool, global_avg_pool_backward, relu, relu_backward, ChannelNorm, Conv2d,
    ConvCache, Linear, LinearCache, NormCache, Param, ParamSet,
};

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("operation requires {expected:?} mode, network is in {got:?} mode")]
    WrongMode { expected: Mode, got: Mode },
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("normalization refresh received an empty stream")]
    EmptyStream,
    #[error("checkpoint config fingerprint {got} does not match expected {expected}")]
    ConfigMismatch { expected: String, got: String },
    #[error("invalid model config: {0}")]
    InvalidConfig(String),
    #[error("checkpoint format: {0}")]
    CheckpointFormat(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    Pretrain,
    Calibrated,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub backbone: BackboneSpec,
    pub embed_dim: usize,
    /// Stage (1-indexed) whose output feeds the sub-network.
    pub subnet_stage: usize,
    pub subnet_channels: usize,
    pub head_hidden: usize,
    pub classifier_hidden: Vec<usize>,
    /// Model-identification classes (generator groups).
    pub n_groups: usize,
    /// Momentum of the per-step running-statistics update in the
    /// normalization layers.
    #[serde(default = "default_norm_momentum")]
    pub norm_momentum: f64,
    pub seed: u64,
}

fn default_norm_momentum() -> f64 {
    0.1
}

impl ModelConfig {
    pub fn small(seed: u64) -> Self {
        ModelConfig {
            backbone: BackboneSpec::small(),
            embed_dim: 128,
            subnet_stage: 3,
            subnet_channels: 16,
            head_hidden: 32,
            classifier_hidden: vec![32, 16],
            n_groups: 4,
            norm_momentum: 0.1,
            seed,
        }
    }

    pub fn tiny(seed: u64) -> Self {
        ModelConfig {
            backbone: BackboneSpec::tiny(),
            embed_dim: 16,
            subnet_stage: 2,
            subnet_channels: 4,
            head_hidden: 8,
            classifier_hidden: vec![8],
            n_groups: 4,
            norm_momentum: 0.1,
            seed,
        }
    }

    pub fn resnet18(seed: u64) -> Self {
        ModelConfig {
            backbone: BackboneSpec::resnet18(),
            embed_dim: 128,
            subnet_stage: 3,
            subnet_channels: 64,
            head_hidden: 512,
            classifier_hidden: vec![256, 128],
            n_groups: 4,
            norm_momentum: 0.1,
            seed,
        }
    }

    pub fn resnet50(seed: u64) -> Self {
        ModelConfig {
            backbone: BackboneSpec::resnet50(),
            embed_dim: 128,
            subnet_stage: 3,
            subnet_channels: 128,
            head_hidden: 2048,
            classifier_hidden: vec![512, 256],
            n_groups: 4,
            norm_momentum: 0.1,
            seed,
        }
    }

    /// Stable fingerprint of the full architecture configuration.
    pub fn fingerprint(&self) -> String {
        let json = serde_json::to_string(self).expect("config serializes");
        format!("{:016x}", crate::rng::fnv1a64(json.as_bytes()))
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        self.backbone.validate().map_err(ModelError::InvalidConfig)?;
        if self.embed_dim == 0 || self.n_groups == 0 || self.subnet_stage == 0 {
            return Err(ModelError::InvalidConfig("zero-size dimension".into()));
        }
        Ok(())
    }
}

fn relu2(x: &Array2<f64>) -> Array2<f64> {
    x.mapv(|v| v.max(0.0))
}

fn relu2_backward(x: &Array2<f64>, dy: &Array2<f64>) -> Array2<f64> {
    let mut dx = dy.clone();
    dx.zip_mut_with(x, |d, &xv| {
        if xv <= 0.0 {
            *d = 0.0;
        }
    });
    dx
}

/// Auxiliary mapping attached at the intermediate stage: a 1x1
/// convolutional reduction, normalization, rectification, and global
/// pooling.
struct SubNet {
    conv: Conv2d,
    norm: ChannelNorm,
}

struct SubNetCache {
    c: ConvCache,
    n: NormCache,
    pre_relu: Array4<f64>,
    hw: (usize, usize),
}

impl SubNet {
    fn new<R: Rng>(c_in: usize, c_out: usize, rng: &mut R) -> Self {
        SubNet {
            conv: Conv2d::new("subnet.reduce", c_in, c_out, 1, 1, 0, rng),
            norm: ChannelNorm::new("subnet.norm", c_out),
        }
    }

    fn forward_train(&mut self, x: &Array4<f64>) -> (Array2<f64>, SubNetCache) {
        let (y, c) = self.conv.forward(x);
        let (a, n) = self.norm.forward_train(&y);
        let r = relu(&a);
        let hw = (r.dim().2, r.dim().3);
        (global_avg_pool(&r), SubNetCache { c, n, pre_relu: a, hw })
    }

    fn forward_eval(&self, x: &Array4<f64>) -> Array2<f64> {
        let (y, _) = self.conv.forward(x);
        global_avg_pool(&relu(&self.norm.forward_eval(&y)))
    }

    fn backward(&mut self, cache: &SubNetCache, d_pooled: &Array2<f64>) -> Array4<f64> {
        let d_r = global_avg_pool_backward(d_pooled, cache.hw.0, cache.hw.1);
        let d_a = relu_backward(&cache.pre_relu, &d_r);
        let d_y = self.norm.backward(&cache.n, &d_a);
        self.conv.backward(&cache.c, &d_y)
    }
}

/// Two-layer projection onto the unit sphere in the embedding space.
struct ProjectionHead {
    fc1: Linear,
    fc2: Linear,
}

struct HeadCache {
    l1: LinearCache,
    pre_relu: Array2<f64>,
    l2: LinearCache,
    unit: Array2<f64>,
    norms: Array1<f64>,
}

impl ProjectionHead {
    fn new<R: Rng>(name: &str, d_in: usize, hidden: usize, d_out: usize, rng: &mut R) -> Self {
        ProjectionHead {
            fc1: Linear::new(&format!("{name}.fc1"), d_in, hidden, rng),
            fc2: Linear::new(&format!("{name}.fc2"), hidden, d_out, rng),
        }
    }

    fn forward_train(&self, x: &Array2<f64>) -> (Array2<f64>, HeadCache) {
        let (h, l1) = self.fc1.forward(x);
        let r = relu2(&h);
        let (z, l2) = self.fc2.forward(&r);
        let (unit, norms) = crate::nn::l2_normalize_rows(&z);
        (unit.clone(), HeadCache { l1, pre_relu: h, l2, unit, norms })
    }

    fn forward_eval(&self, x: &Array2<f64>) -> Array2<f64> {
        let (h, _) = self.fc1.forward(x);
        let (z, _) = self.fc2.forward(&relu2(&h));
        crate::nn::l2_normalize_rows(&z).0
    }

    fn backward(&mut self, cache: &HeadCache, d_unit: &Array2<f64>) -> Array2<f64> {
        let d_z = crate::nn::l2_normalize_rows_backward(&cache.unit, &cache.norms, d_unit);
        let d_r = self.fc2.backward(&cache.l2, &d_z);
        let d_h = relu2_backward(&cache.pre_relu, &d_r);
        self.fc1.backward(&cache.l1, &d_h)
    }
}

/// Multilayer perceptron over pooled backbone features with two output
/// heads: detection logits (2) and model-identification logits (one per
/// generator group).
struct Classifier {
    hidden: Vec<Linear>,
    det: Linear,
    gid: Linear,
}

struct ClassifierCache {
    lin: Vec<LinearCache>,
    pre_relu: Vec<Array2<f64>>,
    det: LinearCache,
    gid: LinearCache,
}

impl Classifier {
    fn new<R: Rng>(d_in: usize, hidden: &[usize], n_groups: usize, rng: &mut R) -> Self {
        let mut layers = Vec::new();
        let mut d = d_in;
        for (i, &h) in hidden.iter().enumerate() {
            layers.push(Linear::new(&format!("classifier.h{i}"), d, h, rng));
            d = h;
        }
        Classifier {
            hidden: layers,
            det: Linear::new("classifier.det", d, 2, rng),
            gid: Linear::new("classifier.gid", d, n_groups, rng),
        }
    }

    fn forward_train(&self, f: &Array2<f64>) -> (Array2<f64>, Array2<f64>, ClassifierCache) {
        let mut lin = Vec::new();
        let mut pre = Vec::new();
        let mut h = f.clone();
        for layer in &self.hidden {
            let (y, c) = layer.forward(&h);
            lin.push(c);
            pre.push(y.clone());
            h = relu2(&y);
        }
        let (det, det_c) = self.det.forward(&h);
        let (gid, gid_c) = self.gid.forward(&h);
        (
            det,
            gid,
            ClassifierCache { lin, pre_relu: pre, det: det_c, gid: gid_c },
        )
    }

    fn forward_eval(&self, f: &Array2<f64>) -> (Array2<f64>, Array2<f64>) {
        let mut h = f.clone();
        for layer in &self.hidden {
            h = relu2(&layer.forward(&h).0);
        }
        (self.det.forward(&h).0, self.gid.forward(&h).0)
    }

    fn backward(
        &mut self,
        cache: &ClassifierCache,
        d_det: &Array2<f64>,
        d_gid: &Array2<f64>,
    ) -> Array2<f64> {
        let mut d_h = self.det.backward(&cache.det, d_det);
        d_h += &self.gid.backward(&cache.gid, d_gid);
        for i in (0..self.hidden.len()).rev() {
            let d_pre = relu2_backward(&cache.pre_relu[i], &d_h);
            d_h = self.hidden[i].backward(&cache.lin[i], &d_pre);
        }
        d_h
    }

    fn collect_params<'a>(&'a self, out: &mut Vec<&'a Param>) {
        for l in &self.hidden {
            out.push(&l.w);
            out.push(&l.b);
        }
        out.push(&self.det.w);
        out.push(&self.det.b);
        out.push(&self.gid.w);
        out.push(&self.gid.b);
    }

    fn collect_params_mut<'a>(&'a mut self, out: &mut Vec<&'a mut Param>) {
        for l in &mut self.hidden {
            out.push(&mut l.w);
            out.push(&mut l.b);
        }
        out.push(&mut self.det.w);
        out.push(&mut self.det.b);
        out.push(&mut self.gid.w);
        out.push(&mut self.gid.b);
    }
}

/// Caches of one training-mode embedding pass, consumed by
/// [`DetectorNet::embed_backward`].
pub struct EmbedCache {
    backbone: BackboneCache,
    sub: SubNetCache,
    head_main: HeadCache,
    head_sub: HeadCache,
    final_hw: (usize, usize),
}

/// Caches of one training-mode feature pass (calibrated mode).
pub struct ClassifyCache {
    backbone: BackboneCache,
    cls: ClassifierCache,
    final_hw: (usize, usize),
}

pub struct DetectorNet {
    pub config: ModelConfig,
    mode: Mode,
    backbone: Backbone,
    subnet: Option<SubNet>,
    head_main: Option<ProjectionHead>,
    head_sub: Option<ProjectionHead>,
    classifier: Option<Classifier>,
}

impl DetectorNet {
    /// Fresh network in pretrain mode: backbone, sub-network, and the
    /// two projection heads.
    pub fn new_pretrain(config: &ModelConfig) -> Result<Self, ModelError> {
        config.validate()?;
        let mut rng = crate::rng::stream_rng(config.seed, "model/init");
        let backbone = Backbone::new(&config.backbone, &mut rng);
        debug_assert!(config.norm_momentum > 0.0 && config.norm_momentum <= 1.0);
        let attach = config.subnet_stage.clamp(1, config.backbone.stages());
        let attach_width = config.backbone.widths[attach - 1];
        let subnet = SubNet::new(attach_width, config.subnet_channels, &mut rng);
        let head_main = ProjectionHead::new(
            "head_main",
            config.backbone.final_width(),
            config.head_hidden,
            config.embed_dim,
            &mut rng,
        );
        let head_sub = ProjectionHead::new(
            "head_sub",
            config.subnet_channels,
            config.head_hidden,
            config.embed_dim,
            &mut rng,
        );
        let mut net = DetectorNet {
            config: config.clone(),
            mode: Mode::Pretrain,
            backbone,
            subnet: Some(subnet),
            head_main: Some(head_main),
            head_sub: Some(head_sub),
            classifier: None,
        };
        for norm in net.norm_layers_mut() {
            norm.momentum = config.norm_momentum;
        }
        Ok(net)
    }

    /// Fresh network directly in calibrated mode (used by the ablation
    /// harness, which trains a supervised classifier from scratch).
    pub fn new_calibrated(config: &ModelConfig) -> Result<Self, ModelError> {
        let net = Self::new_pretrain(config)?;
        net.into_calibrated()
    }

    /// Detach the sub-network and projection heads and attach a fresh
    /// classifier. Backbone parameters are preserved bit-exact.
    pub fn into_calibrated(mut self) -> Result<Self, ModelError> {
        if self.mode != Mode::Pretrain {
            return Err(ModelError::WrongMode { expected: Mode::Pretrain, got: self.mode });
        }
        let mut rng = crate::rng::stream_rng(self.config.seed, "model/classifier");
        self.subnet = None;
        self.head_main = None;
        self.head_sub = None;
        self.classifier = Some(Classifier::new(
            self.config.backbone.final_width(),
            &self.config.classifier_hidden,
            self.config.n_groups,
            &mut rng,
        ));
        self.mode = Mode::Calibrated;
        Ok(self)
    }

    pub fn mode(&self) -> Mode {
        self.mode
    }

    pub fn attach_stage(&self) -> usize {
        self.config.subnet_stage.clamp(1, self.config.backbone.stages())
    }

    fn check_input(&self, x: &Array4<f64>) -> Result<(), ModelError> {
        let (n, c, _, _) = x.dim();
        if n == 0 || c != 3 {
            return Err(ModelError::ShapeMismatch(format!(
                "expected a non-empty batch of 3-channel images, got {:?}",
                x.dim()
            )));
        }
        Ok(())
    }

    /// Training-mode embedding pass: per example, one unit vector from
    /// each mapping (sub-network projection, main projection). Output
    /// shape `(n, 2, embed_dim)`; view 0 is the sub branch, view 1 the
    /// main branch.
    pub fn embed_train(&mut self, x: &Array4<f64>) -> Result<(Array3<f64>, EmbedCache), ModelError> {
        if self.mode != Mode::Pretrain {
            return Err(ModelError::WrongMode { expected: Mode::Pretrain, got: self.mode });
        }
        self.check_input(x)?;
        let attach = self.attach_stage();
        let (feat_m, feat_final, backbone) = self.backbone.forward_train(x, attach);
        let final_hw = (feat_final.dim().2, feat_final.dim().3);
        let (sub_pooled, sub) = self.subnet.as_mut().expect("pretrain mode").forward_train(&feat_m);
        let pooled = global_avg_pool(&feat_final);
        let (z_main, head_main) =
            self.head_main.as_ref().expect("pretrain mode").forward_train(&pooled);
        let (z_sub, head_sub) =
            self.head_sub.as_ref().expect("pretrain mode").forward_train(&sub_pooled);

        let views = stack_views(&z_sub, &z_main);
        Ok((views, EmbedCache { backbone, sub, head_main, head_sub, final_hw }))
    }

    /// Embedding pass that keeps no intermediate state (first pass of a
    /// gradient-cached step).
    pub fn embed_train_nograd(&mut self, x: &Array4<f64>) -> Result<Array3<f64>, ModelError> {
        self.embed_train(x).map(|(views, _)| views)
    }

    /// Inference-mode embedding pass (running statistics, deterministic
    /// per example).
    pub fn embed_eval(&self, x: &Array4<f64>) -> Result<Array3<f64>, ModelError> {
        if self.mode != Mode::Pretrain {
            return Err(ModelError::WrongMode { expected: Mode::Pretrain, got: self.mode });
        }
        self.check_input(x)?;
        let attach = self.attach_stage();
        let (feat_m, feat_final) = self.backbone.forward_eval(x, attach);
        let sub_pooled = self.subnet.as_ref().expect("pretrain mode").forward_eval(&feat_m);
        let pooled = global_avg_pool(&feat_final);
        let z_main = self.head_main.as_ref().expect("pretrain mode").forward_eval(&pooled);
        let z_sub = self.head_sub.as_ref().expect("pretrain mode").forward_eval(&sub_pooled);
        Ok(stack_views(&z_sub, &z_main))
    }

    /// Backward from embedding-space gradients `(n, 2, embed_dim)`,
    /// accumulating parameter gradients.
    pub fn embed_backward(&mut self, cache: &EmbedCache, d_views: &Array3<f64>) {
        let (d_sub_view, d_main_view) = split_views(d_views);
        let d_pooled = self
            .head_main
            .as_mut()
            .expect("pretrain mode")
            .backward(&cache.head_main, &d_main_view);
        let d_sub_pooled = self
            .head_sub
            .as_mut()
            .expect("pretrain mode")
            .backward(&cache.head_sub, &d_sub_view);
        let d_feat_final = global_avg_pool_backward(&d_pooled, cache.final_hw.0, cache.final_hw.1);
        let d_feat_m = self
            .subnet
            .as_mut()
            .expect("pretrain mode")
            .backward(&cache.sub, &d_sub_pooled);
        let attach = self.attach_stage();
        self.backbone
            .backward(&cache.backbone, attach, Some(&d_feat_m), &d_feat_final);
    }

    /// Pooled backbone features in inference mode; available in both
    /// modes.
    pub fn features_eval(&self, x: &Array4<f64>) -> Result<Array2<f64>, ModelError> {
        self.check_input(x)?;
        let (_, feat_final) = self.backbone.forward_eval(x, self.attach_stage());
        Ok(global_avg_pool(&feat_final))
    }

    /// Calibrated-mode inference: detection logits and model-id logits.
    pub fn classify_eval(&self, x: &Array4<f64>) -> Result<(Array2<f64>, Array2<f64>), ModelError> {
        if self.mode != Mode::Calibrated {
            return Err(ModelError::WrongMode { expected: Mode::Calibrated, got: self.mode });
        }
        let feats = self.features_eval(x)?;
        Ok(self.classifier.as_ref().expect("calibrated mode").forward_eval(&feats))
    }

    /// Classifier logits over externally computed (frozen) features.
    pub fn classify_features_eval(
        &self,
        feats: &Array2<f64>,
    ) -> Result<(Array2<f64>, Array2<f64>), ModelError> {
        if self.mode != Mode::Calibrated {
            return Err(ModelError::WrongMode { expected: Mode::Calibrated, got: self.mode });
        }
        Ok(self.classifier.as_ref().expect("calibrated mode").forward_eval(feats))
    }

    /// One classifier-only training forward over frozen features.
    pub fn classifier_forward(
        &mut self,
        feats: &Array2<f64>,
    ) -> Result<(Array2<f64>, Array2<f64>, ClassifierOnlyCache), ModelError> {
        if self.mode != Mode::Calibrated {
            return Err(ModelError::WrongMode { expected: Mode::Calibrated, got: self.mode });
        }
        let (det, gid, cache) = self.classifier.as_ref().expect("calibrated mode").forward_train(feats);
        Ok((det, gid, ClassifierOnlyCache(cache)))
    }

    pub fn classifier_backward(
        &mut self,
        cache: &ClassifierOnlyCache,
        d_det: &Array2<f64>,
        d_gid: &Array2<f64>,
    ) {
        self.classifier
            .as_mut()
            .expect("calibrated mode")
            .backward(&cache.0, d_det, d_gid);
    }

    /// Full training-mode forward through backbone and classifier
    /// (used when training a supervised detector from scratch).
    pub fn classify_train(
        &mut self,
        x: &Array4<f64>,
    ) -> Result<(Array2<f64>, Array2<f64>, ClassifyCache), ModelError> {
        if self.mode != Mode::Calibrated {
            return Err(ModelError::WrongMode { expected: Mode::Calibrated, got: self.mode });
        }
        self.check_input(x)?;
        let attach = self.attach_stage();
        let (_, feat_final, backbone) = self.backbone.forward_train(x, attach);
        let final_hw = (feat_final.dim().2, feat_final.dim().3);
        let pooled = global_avg_pool(&feat_final);
        let (det, gid, cls) = self.classifier.as_ref().expect("calibrated mode").forward_train(&pooled);
        Ok((det, gid, ClassifyCache { backbone, cls, final_hw }))
    }

    pub fn classify_train_backward(
        &mut self,
        cache: &ClassifyCache,
        d_det: &Array2<f64>,
        d_gid: &Array2<f64>,
    ) {
        let d_pooled = self
            .classifier
            .as_mut()
            .expect("calibrated mode")
            .backward(&cache.cls, d_det, d_gid);
        let d_feat = global_avg_pool_backward(&d_pooled, cache.final_hw.0, cache.final_hw.1);
        let attach = self.attach_stage();
        self.backbone.backward(&cache.backbone, attach, None, &d_feat);
    }

    /// One training-mode pass that keeps no state beyond armed
    /// normalization accumulators.
    fn stats_pass(&mut self, x: &Array4<f64>) {
        let attach = self.attach_stage();
        let (feat_m, _) = self.backbone.forward_stats(x, attach);
        if let Some(subnet) = &mut self.subnet {
            let _ = subnet.forward_train(&feat_m);
        }
    }

    fn refresh_impl<F, I>(&mut self, make_stream: F) -> Result<(), ModelError>
    where
        F: Fn() -> I,
        I: IntoIterator<Item = Array4<f64>>,
    {
        // Layers are refreshed input-side first, one stream pass each, so
        // every layer's statistics are measured under the final
        // statistics of everything upstream. Repeating the whole refresh
        // over the same stream is then a no-op.
        let n_layers = self.norm_layers().len();
        for k in 0..n_layers {
            {
                let mut layers = self.norm_layers_mut();
                layers.get_mut(k).expect("layer index in range").begin_capture();
            }
            let mut seen = false;
            for batch in make_stream() {
                self.check_input(&batch)?;
                seen = true;
                self.stats_pass(&batch);
            }
            if !seen {
                return Err(ModelError::EmptyStream);
            }
            let mut layers = self.norm_layers_mut();
            layers.get_mut(k).expect("layer index in range").commit_exact();
        }
        Ok(())
    }

    /// Recompute every normalization layer's running statistics over the
    /// stream, momentum-free. Learned parameters are untouched. The
    /// stream closure is invoked once per normalization layer.
    pub fn refresh_norm_stats<F, I>(&mut self, make_stream: F) -> Result<(), ModelError>
    where
        F: Fn() -> I,
        I: IntoIterator<Item = Array4<f64>>,
    {
        if self.mode != Mode::Calibrated {
            return Err(ModelError::WrongMode { expected: Mode::Calibrated, got: self.mode });
        }
        self.refresh_impl(make_stream)
    }

    /// Initialize running statistics from a representative batch before
    /// the first optimization step; valid in either mode.
    pub fn prime_norm_stats(&mut self, batch: &Array4<f64>) -> Result<(), ModelError> {
        self.check_input(batch)?;
        let batch = batch.clone();
        self.refresh_impl(move || std::iter::once(batch.clone()))
    }

    /// Arm running-statistic capture on every normalization layer.
    pub fn begin_stat_capture(&mut self) {
        for norm in self.norm_layers_mut() {
            norm.begin_capture();
        }
    }

    /// Single momentum update of every layer's running statistics from
    /// the captured stream.
    pub fn commit_stat_momentum(&mut self) {
        for norm in self.norm_layers_mut() {
            norm.commit_momentum();
        }
    }

    pub fn backbone_checksum(&self) -> u64 {
        let mut params = Vec::new();
        self.backbone.collect_params(&mut params);
        let mut bytes = Vec::new();
        for p in params {
            for v in p.value.iter() {
                bytes.extend_from_slice(&v.to_bits().to_le_bytes());
            }
        }
        crate::rng::fnv1a64(&bytes)
    }

    /// Checksum of backbone learned parameters excluding normalization
    /// affine terms (the calibrate freeze contract).
    pub fn backbone_non_norm_checksum(&self) -> u64 {
        let mut params = Vec::new();
        self.backbone.collect_params(&mut params);
        let mut bytes = Vec::new();
        for p in params {
            if p.name.contains("norm") || p.name.contains("gamma") || p.name.contains("beta") {
                continue;
            }
            for v in p.value.iter() {
                bytes.extend_from_slice(&v.to_bits().to_le_bytes());
            }
        }
        crate::rng::fnv1a64(&bytes)
    }

    pub fn subnet_param_count(&self) -> usize {
        let mut out = Vec::new();
        if let Some(s) = &self.subnet {
            out.push(&s.conv.w);
            out.push(&s.conv.b);
            out.push(&s.norm.gamma);
            out.push(&s.norm.beta);
        }
        if let Some(h) = &self.head_sub {
            out.push(&h.fc1.w);
            out.push(&h.fc1.b);
            out.push(&h.fc2.w);
            out.push(&h.fc2.b);
        }
        out.iter().map(|p| p.len()).sum()
    }

    pub fn backbone_param_count(&self) -> usize {
        let mut out = Vec::new();
        self.backbone.collect_params(&mut out);
        out.iter().map(|p| p.len()).sum()
    }

    pub fn norm_layers(&self) -> Vec<&ChannelNorm> {
        let mut out = Vec::new();
        self.backbone.collect_norms(&mut out);
        if let Some(s) = &self.subnet {
            out.push(&s.norm);
        }
        out
    }

    pub fn norm_layers_mut(&mut self) -> Vec<&mut ChannelNorm> {
        let mut out = Vec::new();
        self.backbone.collect_norms_mut(&mut out);
        if let Some(s) = &mut self.subnet {
            out.push(&mut s.norm);
        }
        out
    }
}

pub struct ClassifierOnlyCache(ClassifierCache);

impl ParamSet for DetectorNet {
    fn params(&self) -> Vec<&Param> {
        let mut out = Vec::new();
        self.backbone.collect_params(&mut out);
        if let Some(s) = &self.subnet {
            out.push(&s.conv.w);
            out.push(&s.conv.b);
            out.push(&s.norm.gamma);
            out.push(&s.norm.beta);
        }
        for head in [&self.head_main, &self.head_sub].into_iter().flatten() {
            out.push(&head.fc1.w);
            out.push(&head.fc1.b);
            out.push(&head.fc2.w);
            out.push(&head.fc2.b);
        }
        if let Some(c) = &self.classifier {
            c.collect_params(&mut out);
        }
        out
    }

    fn params_mut(&mut self) -> Vec<&mut Param> {
        let mut out = Vec::new();
        self.backbone.collect_params_mut(&mut out);
        if let Some(s) = &mut self.subnet {
            out.push(&mut s.conv.w);
            out.push(&mut s.conv.b);
            out.push(&mut s.norm.gamma);
            out.push(&mut s.norm.beta);
        }
        for head in [&mut self.head_main, &mut self.head_sub].into_iter().flatten() {
            out.push(&mut head.fc1.w);
            out.push(&mut head.fc1.b);
            out.push(&mut head.fc2.w);
            out.push(&mut head.fc2.b);
        }
        if let Some(c) = &mut self.classifier {
            c.collect_params_mut(&mut out);
        }
        out
    }
}

impl DetectorNet {
    /// Mutable access to classifier parameters only (the tensors updated
    /// during calibration).
    pub fn classifier_params_mut(&mut self) -> Vec<&mut Param> {
        let mut out = Vec::new();
        if let Some(c) = &mut self.classifier {
            c.collect_params_mut(&mut out);
        }
        out
    }
}

fn stack_views(z_sub: &Array2<f64>, z_main: &Array2<f64>) -> Array3<f64> {
    let (n, d) = z_sub.dim();
    let mut views = Array3::<f64>::zeros((n, 2, d));
    for i in 0..n {
        for j in 0..d {
            views[[i, 0, j]] = z_sub[[i, j]];
            views[[i, 1, j]] = z_main[[i, j]];
        }
    }
    views
}

fn split_views(d_views: &Array3<f64>) -> (Array2<f64>, Array2<f64>) {
    let (n, _, d) = d_views.dim();
    let mut d_sub = Array2::<f64>::zeros((n, d));
    let mut d_main = Array2::<f64>::zeros((n, d));
    for i in 0..n {
        for j in 0..d {
            d_sub[[i, j]] = d_views[[i, 0, j]];
            d_main[[i, j]] = d_views[[i, 1, j]];
        }
    }
    (d_sub, d_main)
}

/// Pretrain-mode inference: per example, two unit-norm embedding views
/// (inference normalization, stochastic layers off).
pub fn forward_pretrain(net: &DetectorNet, batch: &Array4<f64>) -> Result<Array3<f64>, ModelError> {
    net.embed_eval(batch)
}
