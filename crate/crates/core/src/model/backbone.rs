//! Convolutional backbone: a residual network with a configurable stem.
//! The modified stem keeps full spatial resolution (stride-1 first
//! convolution, no initial pooling); the standard stem downsamples by
//! four before the first stage.

use ndarray::Array4;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::nn::{
    avg_pool2, avg_pool2_backward, relu, relu_backward, ChannelNorm, Conv2d, ConvCache, NormCache,
    Param,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum StemKind {
    /// Stride-1 3x3 convolution, no pooling: early downsampling removed.
    Modified,
    /// Stride-2 3x3 convolution followed by 2x2 average pooling.
    Standard,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BlockKind {
    Basic,
    Bottleneck,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BackboneSpec {
    pub stem: StemKind,
    pub block: BlockKind,
    pub stem_width: usize,
    /// Output channels per stage.
    pub widths: Vec<usize>,
    /// Residual blocks per stage.
    pub blocks: Vec<usize>,
}

impl BackboneSpec {
    /// Desk-scale backbone for tests and toy runs.
    pub fn small() -> Self {
        BackboneSpec {
            stem: StemKind::Standard,
            block: BlockKind::Basic,
            stem_width: 8,
            widths: vec![8, 16, 32],
            blocks: vec![1, 1, 1],
        }
    }

    /// Tiny backbone (well under 1e5 parameters) for gradient checks.
    pub fn tiny() -> Self {
        BackboneSpec {
            stem: StemKind::Standard,
            block: BlockKind::Basic,
            stem_width: 4,
            widths: vec![4, 8],
            blocks: vec![1, 1],
        }
    }

    /// 18-layer basic-block variant used by the content-type ablation.
    pub fn resnet18() -> Self {
        BackboneSpec {
            stem: StemKind::Modified,
            block: BlockKind::Basic,
            stem_width: 64,
            widths: vec![64, 128, 256, 512],
            blocks: vec![2, 2, 2, 2],
        }
    }

    /// 50-layer bottleneck variant matching the full-scale recipe.
    pub fn resnet50() -> Self {
        BackboneSpec {
            stem: StemKind::Modified,
            block: BlockKind::Bottleneck,
            stem_width: 64,
            widths: vec![256, 512, 1024, 2048],
            blocks: vec![3, 4, 6, 3],
        }
    }

    pub fn stages(&self) -> usize {
        self.widths.len()
    }

    pub fn final_width(&self) -> usize {
        *self.widths.last().expect("at least one stage")
    }

    pub fn validate(&self) -> Result<(), String> {
        if self.widths.is_empty() || self.widths.len() != self.blocks.len() {
            return Err(format!(
                "widths ({}) and blocks ({}) must be non-empty and equal length",
                self.widths.len(),
                self.blocks.len()
            ));
        }
        if self.blocks.iter().any(|&b| b == 0) || self.widths.iter().any(|&w| w == 0) {
            return Err("zero-size stage".into());
        }
        Ok(())
    }
}

/// Residual block; `mid` is only populated for bottlenecks.
pub struct Block {
    conv1: Conv2d,
    norm1: ChannelNorm,
    conv2: Conv2d,
    norm2: ChannelNorm,
    conv3: Option<Conv2d>,
    norm3: Option<ChannelNorm>,
    down_conv: Option<Conv2d>,
    down_norm: Option<ChannelNorm>,
}

pub struct BlockCache {
    c1: ConvCache,
    n1: NormCache,
    a1: Array4<f64>, // pre-relu after norm1
    c2: ConvCache,
    n2: NormCache,
    a2: Option<Array4<f64>>, // pre-relu after norm2 (bottleneck only)
    c3: Option<ConvCache>,
    n3: Option<NormCache>,
    down: Option<(ConvCache, NormCache)>,
    sum: Array4<f64>, // pre-relu residual sum
}

impl Block {
    fn new<R: Rng>(
        name: &str,
        kind: BlockKind,
        c_in: usize,
        c_out: usize,
        stride: usize,
        rng: &mut R,
    ) -> Self {
        let needs_down = stride != 1 || c_in != c_out;
        let (down_conv, down_norm) = if needs_down {
            (
                Some(Conv2d::new(&format!("{name}.down"), c_in, c_out, 1, stride, 0, rng)),
                Some(ChannelNorm::new(&format!("{name}.down_norm"), c_out)),
            )
        } else {
            (None, None)
        };
        match kind {
            BlockKind::Basic => Block {
                conv1: Conv2d::new(&format!("{name}.conv1"), c_in, c_out, 3, stride, 1, rng),
                norm1: ChannelNorm::new(&format!("{name}.norm1"), c_out),
                conv2: Conv2d::new(&format!("{name}.conv2"), c_out, c_out, 3, 1, 1, rng),
                norm2: ChannelNorm::new(&format!("{name}.norm2"), c_out),
                conv3: None,
                norm3: None,
                down_conv,
                down_norm,
            },
            BlockKind::Bottleneck => {
                let mid = (c_out / 4).max(1);
                Block {
                    conv1: Conv2d::new(&format!("{name}.conv1"), c_in, mid, 1, 1, 0, rng),
                    norm1: ChannelNorm::new(&format!("{name}.norm1"), mid),
                    conv2: Conv2d::new(&format!("{name}.conv2"), mid, mid, 3, stride, 1, rng),
                    norm2: ChannelNorm::new(&format!("{name}.norm2"), mid),
                    conv3: Some(Conv2d::new(&format!("{name}.conv3"), mid, c_out, 1, 1, 0, rng)),
                    norm3: Some(ChannelNorm::new(&format!("{name}.norm3"), c_out)),
                    down_conv,
                    down_norm,
                }
            }
        }
    }

    fn forward_train(&mut self, x: &Array4<f64>) -> (Array4<f64>, BlockCache) {
        let (y1, c1) = self.conv1.forward(x);
        let (a1, n1) = self.norm1.forward_train(&y1);
        let r1 = relu(&a1);
        let (y2, c2) = self.conv2.forward(&r1);
        let (mut main, n2) = self.norm2.forward_train(&y2);
        let (mut a2, mut c3, mut n3) = (None, None, None);
        if let (Some(conv3), Some(norm3)) = (&self.conv3, &mut self.norm3) {
            let pre = main;
            let r2 = relu(&pre);
            let (y3, cc3) = conv3.forward(&r2);
            let (m3, nn3) = norm3.forward_train(&y3);
            a2 = Some(pre);
            c3 = Some(cc3);
            n3 = Some(nn3);
            main = m3;
        }
        let (shortcut, down) = match (&self.down_conv, &mut self.down_norm) {
            (Some(dc), Some(dn)) => {
                let (yd, cd) = dc.forward(x);
                let (sd, nd) = dn.forward_train(&yd);
                (sd, Some((cd, nd)))
            }
            _ => (x.clone(), None),
        };
        let sum = &main + &shortcut;
        let out = relu(&sum);
        (
            out,
            BlockCache {
                c1,
                n1,
                a1,
                c2,
                n2,
                a2,
                c3,
                n3,
                down,
                sum,
            },
        )
    }

    fn forward_eval(&self, x: &Array4<f64>) -> Array4<f64> {
        let (y1, _) = self.conv1.forward(x);
        let r1 = relu(&self.norm1.forward_eval(&y1));
        let (y2, _) = self.conv2.forward(&r1);
        let mut main = self.norm2.forward_eval(&y2);
        if let (Some(conv3), Some(norm3)) = (&self.conv3, &self.norm3) {
            let r2 = relu(&main);
            let (y3, _) = conv3.forward(&r2);
            main = norm3.forward_eval(&y3);
        }
        let shortcut = match (&self.down_conv, &self.down_norm) {
            (Some(dc), Some(dn)) => dn.forward_eval(&dc.forward(x).0),
            _ => x.clone(),
        };
        relu(&(&main + &shortcut))
    }

    fn backward(&mut self, cache: &BlockCache, dy: &Array4<f64>) -> Array4<f64> {
        let d_sum = relu_backward(&cache.sum, dy);

        // Main path.
        let mut d_main = d_sum.clone();
        if let (Some(conv3), Some(norm3)) = (&mut self.conv3, &mut self.norm3) {
            let d_y3 = norm3.backward(cache.n3.as_ref().expect("bottleneck cache"), &d_main);
            let d_r2 = conv3.backward(cache.c3.as_ref().expect("bottleneck cache"), &d_y3);
            d_main = relu_backward(cache.a2.as_ref().expect("bottleneck cache"), &d_r2);
        }
        let d_y2 = self.norm2.backward(&cache.n2, &d_main);
        let d_r1 = self.conv2.backward(&cache.c2, &d_y2);
        let d_a1 = relu_backward(&cache.a1, &d_r1);
        let d_y1 = self.norm1.backward(&cache.n1, &d_a1);
        let mut dx = self.conv1.backward(&cache.c1, &d_y1);

        // Shortcut path.
        match (&mut self.down_conv, &mut self.down_norm, &cache.down) {
            (Some(dc), Some(dn), Some((cd, nd))) => {
                let d_yd = dn.backward(nd, &d_sum);
                dx += &dc.backward(cd, &d_yd);
            }
            _ => dx += &d_sum,
        }
        dx
    }

    fn collect_params<'a>(&'a self, out: &mut Vec<&'a Param>) {
        out.push(&self.conv1.w);
        out.push(&self.conv1.b);
        out.push(&self.norm1.gamma);
        out.push(&self.norm1.beta);
        out.push(&self.conv2.w);
        out.push(&self.conv2.b);
        out.push(&self.norm2.gamma);
        out.push(&self.norm2.beta);
        if let Some(c) = &self.conv3 {
            out.push(&c.w);
            out.push(&c.b);
        }
        if let Some(n) = &self.norm3 {
            out.push(&n.gamma);
            out.push(&n.beta);
        }
        if let Some(c) = &self.down_conv {
            out.push(&c.w);
            out.push(&c.b);
        }
        if let Some(n) = &self.down_norm {
            out.push(&n.gamma);
            out.push(&n.beta);
        }
    }

    fn collect_params_mut<'a>(&'a mut self, out: &mut Vec<&'a mut Param>) {
        out.push(&mut self.conv1.w);
        out.push(&mut self.conv1.b);
        out.push(&mut self.norm1.gamma);
        out.push(&mut self.norm1.beta);
        out.push(&mut self.conv2.w);
        out.push(&mut self.conv2.b);
        out.push(&mut self.norm2.gamma);
        out.push(&mut self.norm2.beta);
        if let Some(c) = &mut self.conv3 {
            out.push(&mut c.w);
            out.push(&mut c.b);
        }
        if let Some(n) = &mut self.norm3 {
            out.push(&mut n.gamma);
            out.push(&mut n.beta);
        }
        if let Some(c) = &mut self.down_conv {
            out.push(&mut c.w);
            out.push(&mut c.b);
        }
        if let Some(n) = &mut self.down_norm {
            out.push(&mut n.gamma);
            out.push(&mut n.beta);
        }
    }

    fn collect_norms<'a>(&'a self, out: &mut Vec<&'a ChannelNorm>) {
        out.push(&self.norm1);
        out.push(&self.norm2);
        if let Some(n) = &self.norm3 {
            out.push(n);
        }
        if let Some(n) = &self.down_norm {
            out.push(n);
        }
    }

    fn collect_norms_mut<'a>(&'a mut self, out: &mut Vec<&'a mut ChannelNorm>) {
        out.push(&mut self.norm1);
        out.push(&mut self.norm2);
        if let Some(n) = &mut self.norm3 {
            out.push(n);
        }
        if let Some(n) = &mut self.down_norm {
            out.push(n);
        }
    }
}

pub struct Backbone {
    pub spec: BackboneSpec,
    stem_conv: Conv2d,
    stem_norm: ChannelNorm,
    stages: Vec<Vec<Block>>,
}

pub struct StemCache {
    c: ConvCache,
    n: NormCache,
    pre_relu: Array4<f64>,
    pooled_in: Option<(usize, usize)>, // spatial size before pooling
}

pub struct BackboneCache {
    stem: StemCache,
    blocks: Vec<Vec<BlockCache>>,
}

impl Backbone {
    pub fn new<R: Rng>(spec: &BackboneSpec, rng: &mut R) -> Self {
        let stem_stride = match spec.stem {
            StemKind::Modified => 1,
            StemKind::Standard => 2,
        };
        let stem_conv = Conv2d::new("backbone.stem", 3, spec.stem_width, 3, stem_stride, 1, rng);
        let stem_norm = ChannelNorm::new("backbone.stem_norm", spec.stem_width);
        let mut stages = Vec::new();
        let mut c_in = spec.stem_width;
        for (s, (&width, &depth)) in spec.widths.iter().zip(&spec.blocks).enumerate() {
            let mut blocks = Vec::new();
            for b in 0..depth {
                // First block of every stage after the first downsamples.
                let stride = if s > 0 && b == 0 { 2 } else { 1 };
                blocks.push(Block::new(
                    &format!("backbone.s{s}b{b}"),
                    spec.block,
                    c_in,
                    width,
                    stride,
                    rng,
                ));
                c_in = width;
            }
            stages.push(blocks);
        }
        Backbone {
            spec: spec.clone(),
            stem_conv,
            stem_norm,
            stages,
        }
    }

    /// Spatial size of the feature map right after the stem.
    pub fn stem_output_size(&self, h: usize, w: usize) -> (usize, usize) {
        let (h, w) = self.stem_conv.out_size(h, w);
        match self.spec.stem {
            StemKind::Modified => (h, w),
            StemKind::Standard => (h / 2, w / 2),
        }
    }

    fn stem_train(&mut self, x: &Array4<f64>) -> (Array4<f64>, StemCache) {
        let (y, c) = self.stem_conv.forward(x);
        let (a, n) = self.stem_norm.forward_train(&y);
        let r = relu(&a);
        let (out, pooled_in) = match self.spec.stem {
            StemKind::Modified => (r, None),
            StemKind::Standard => {
                let dims = (r.dim().2, r.dim().3);
                (avg_pool2(&r), Some(dims))
            }
        };
        (out, StemCache { c, n, pre_relu: a, pooled_in })
    }

    fn stem_eval(&self, x: &Array4<f64>) -> Array4<f64> {
        let (y, _) = self.stem_conv.forward(x);
        let r = relu(&self.stem_norm.forward_eval(&y));
        match self.spec.stem {
            StemKind::Modified => r,
            StemKind::Standard => avg_pool2(&r),
        }
    }

    /// Training-mode forward. Returns the feature map after the
    /// attachment stage (1-indexed, clamped to the last stage), the
    /// final feature map, and the caches for backward.
    pub fn forward_train(
        &mut self,
        x: &Array4<f64>,
        attach_stage: usize,
    ) -> (Array4<f64>, Array4<f64>, BackboneCache) {
        let attach = attach_stage.clamp(1, self.stages.len());
        let (mut h, stem) = self.stem_train(x);
        let mut blocks = Vec::new();
        let mut attach_feat = None;
        for (s, stage) in self.stages.iter_mut().enumerate() {
            let mut stage_caches = Vec::new();
            for block in stage {
                let (next, cache) = block.forward_train(&h);
                h = next;
                stage_caches.push(cache);
            }
            blocks.push(stage_caches);
            if s + 1 == attach {
                attach_feat = Some(h.clone());
            }
        }
        (
            attach_feat.expect("attach stage within range"),
            h,
            BackboneCache { stem, blocks },
        )
    }

    /// Training-mode forward that keeps no caches: used by statistics
    /// capture passes, where only the normalization accumulators matter.
    pub fn forward_stats(&mut self, x: &Array4<f64>, attach_stage: usize) -> (Array4<f64>, Array4<f64>) {
        let attach = attach_stage.clamp(1, self.stages.len());
        let (mut h, _) = self.stem_train(x);
        let mut attach_feat = None;
        for (s, stage) in self.stages.iter_mut().enumerate() {
            for block in stage {
                let (next, _) = block.forward_train(&h);
                h = next;
            }
            if s + 1 == attach {
                attach_feat = Some(h.clone());
            }
        }
        (attach_feat.expect("attach stage within range"), h)
    }

    pub fn forward_eval(&self, x: &Array4<f64>, attach_stage: usize) -> (Array4<f64>, Array4<f64>) {
        let attach = attach_stage.clamp(1, self.stages.len());
        let mut h = self.stem_eval(x);
        let mut attach_feat = None;
        for (s, stage) in self.stages.iter().enumerate() {
            for block in stage {
                h = block.forward_eval(&h);
            }
            if s + 1 == attach {
                attach_feat = Some(h.clone());
            }
        }
        (attach_feat.expect("attach stage within range"), h)
    }

    /// Backward with two gradient injection points: `d_final` flows from
    /// the main head/classifier, `d_attach` from the sub-network at the
    /// attachment stage boundary.
    pub fn backward(
        &mut self,
        cache: &BackboneCache,
        attach_stage: usize,
        d_attach: Option<&Array4<f64>>,
        d_final: &Array4<f64>,
    ) -> Array4<f64> {
        let attach = attach_stage.clamp(1, self.stages.len());
        let mut grad = d_final.clone();
        for (s, stage) in self.stages.iter_mut().enumerate().rev() {
            if s + 1 == attach {
                if let Some(da) = d_attach {
                    grad += da;
                }
            }
            for (block, bc) in stage.iter_mut().zip(&cache.blocks[s]).rev() {
                grad = block.backward(bc, &grad);
            }
        }
        // Stem.
        let grad = match (self.spec.stem, cache.stem.pooled_in) {
            (StemKind::Standard, Some((h, w))) => avg_pool2_backward(&grad, h, w),
            _ => grad,
        };
        let d_a = relu_backward(&cache.stem.pre_relu, &grad);
        let d_y = self.stem_norm.backward(&cache.stem.n, &d_a);
        self.stem_conv.backward(&cache.stem.c, &d_y)
    }

    pub fn collect_params<'a>(&'a self, out: &mut Vec<&'a Param>) {
        out.push(&self.stem_conv.w);
        out.push(&self.stem_conv.b);
        out.push(&self.stem_norm.gamma);
        out.push(&self.stem_norm.beta);
        for stage in &self.stages {
            for block in stage {
                block.collect_params(out);
            }
        }
    }

    pub fn collect_params_mut<'a>(&'a mut self, out: &mut Vec<&'a mut Param>) {
        out.push(&mut self.stem_conv.w);
        out.push(&mut self.stem_conv.b);
        out.push(&mut self.stem_norm.gamma);
        out.push(&mut self.stem_norm.beta);
        for stage in &mut self.stages {
            for block in stage {
                block.collect_params_mut(out);
            }
        }
    }

    pub fn collect_norms<'a>(&'a self, out: &mut Vec<&'a ChannelNorm>) {
        out.push(&self.stem_norm);
        for stage in &self.stages {
            for block in stage {
                block.collect_norms(out);
            }
        }
    }

    pub fn collect_norms_mut<'a>(&'a mut self, out: &mut Vec<&'a mut ChannelNorm>) {
        out.push(&mut self.stem_norm);
        for stage in &mut self.stages {
            for block in stage {
                block.collect_norms_mut(out);
            }
        }
    }
}
