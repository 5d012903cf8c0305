//! The four building blocks of the fusion network, each with its own forward
//! cache and hand-written backward pass.

use crate::error::{Error, Result};
use crate::nn::{
    leaky_relu, leaky_relu_backward, pixel_shuffle, pixel_unshuffle, sigmoid, sigmoid_backward, upsample_bilinear2x,
    upsample_bilinear2x_backward, Conv2d, ConvTranspose2d, DeformConv2d, Initializer, ResBlock, ResBlockCache, Scalar,
    Tensor, DEFORM_OFFSET_CHANNELS,
};

pub const SCALES: usize = 4;
/// Output channels of the final 1x1 conv: 3 colours x 2x2 sub-pixels.
/// Shrinks the initial prediction towards zero.
pub const OUTPUT_INIT_SCALE: f64 = 0.1;
pub const HEAD_OUT_CHANNELS: usize = 12;

pub(crate) type Named<'a, T> = Vec<(String, &'a Tensor<T>)>;

fn push_conv<'a, T: Scalar>(out: &mut Named<'a, T>, prefix: &str, w: &'a Tensor<T>, b: &'a Tensor<T>) {
    out.push((format!("{prefix}.weight"), w));
    out.push((format!("{prefix}.bias"), b));
}

fn push_res<'a, T: Scalar>(out: &mut Named<'a, T>, prefix: &str, r: &'a ResBlock<T>) {
    push_conv(out, &format!("{prefix}.conv1"), &r.conv1.weight, &r.conv1.bias);
    push_conv(out, &format!("{prefix}.conv2"), &r.conv2.weight, &r.conv2.bias);
}

/// Head conv, then per scale a ResBlock and (except at the coarsest scale) a
/// 2x2 stride-2 downsampling conv.
#[derive(Debug, Clone, PartialEq)]
pub struct Encoder<T: Scalar> {
    pub head: Conv2d<T>,
    pub blocks: Vec<ResBlock<T>>,
    pub downs: Vec<Conv2d<T>>,
}

#[derive(Debug, Clone)]
pub struct EncoderCache<T: Scalar> {
    x: Tensor<T>,
    head_pre: Tensor<T>,
    block_in: Vec<Tensor<T>>,
    block_cache: Vec<ResBlockCache<T>>,
    down_pre: Vec<Tensor<T>>,
    /// F^t for every scale.
    pub features: Vec<Tensor<T>>,
}

impl<T: Scalar> Encoder<T> {
    pub fn new(init: &mut Initializer, in_ch: usize, channels: [usize; SCALES]) -> Self {
        Self {
            head: Conv2d::new(init, in_ch, channels[0], 3, 1),
            blocks: channels.iter().map(|&c| ResBlock::new(init, c)).collect(),
            downs: (0..SCALES - 1)
                .map(|t| Conv2d::new(init, channels[t], channels[t + 1], 2, 2))
                .collect(),
        }
    }

    pub fn forward(&self, x: &Tensor<T>) -> Result<EncoderCache<T>> {
        let head_pre = self.head.forward(x)?;
        let mut input = leaky_relu(&head_pre);
        let mut block_in = Vec::with_capacity(SCALES);
        let mut block_cache = Vec::with_capacity(SCALES);
        let mut down_pre = Vec::with_capacity(SCALES - 1);
        let mut features = Vec::with_capacity(SCALES);
        for t in 0..SCALES {
            let (f, cache) = self.blocks[t].forward(&input)?;
            block_in.push(input);
            block_cache.push(cache);
            if t + 1 < SCALES {
                let pre = self.downs[t].forward(&f)?;
                input = leaky_relu(&pre);
                down_pre.push(pre);
            } else {
                input = Tensor::zeros([0, 0, 0, 0]);
            }
            features.push(f);
        }
        Ok(EncoderCache {
            x: x.clone(),
            head_pre,
            block_in,
            block_cache,
            down_pre,
            features,
        })
    }

    /// `grad_features[t]` is dL/dF^t. Accumulates parameter gradients.
    pub fn backward(&mut self, cache: &EncoderCache<T>, mut grad_features: Vec<Tensor<T>>) -> Result<()> {
        let mut carry: Option<Tensor<T>> = None;
        for t in (0..SCALES).rev() {
            let mut g = std::mem::replace(&mut grad_features[t], Tensor::zeros([0, 0, 0, 0]));
            if let Some(extra) = carry.take() {
                g.add_assign(&extra)?;
            }
            let g_in = self.blocks[t].backward(&cache.block_in[t], &cache.block_cache[t], &g)?;
            if t > 0 {
                let g_pre = leaky_relu_backward(&cache.down_pre[t - 1], &g_in)?;
                carry = Some(self.downs[t - 1].backward(&cache.features[t - 1], &g_pre)?);
            } else {
                let g_pre = leaky_relu_backward(&cache.head_pre, &g_in)?;
                self.head.backward(&cache.x, &g_pre)?;
            }
        }
        Ok(())
    }

    pub(crate) fn named<'a>(&'a self, prefix: &str, out: &mut Named<'a, T>) {
        push_conv(out, &format!("{prefix}.head"), &self.head.weight, &self.head.bias);
        for (t, b) in self.blocks.iter().enumerate() {
            push_res(out, &format!("{prefix}.block{t}"), b);
        }
        for (t, d) in self.downs.iter().enumerate() {
            push_conv(out, &format!("{prefix}.down{t}"), &d.weight, &d.bias);
        }
    }

    pub(crate) fn params_mut<'a>(&'a mut self, out: &mut Vec<&'a mut Tensor<T>>) {
        out.extend(self.head.params_mut());
        for b in self.blocks.iter_mut() {
            out.extend(b.params_mut());
        }
        for d in self.downs.iter_mut() {
            out.extend(d.params_mut());
        }
    }
}

/// Predicts offsets from both branches plus the upsampled coarser offsets,
/// then reshapes the long features with a deformable conv.
#[derive(Debug, Clone, PartialEq)]
pub struct AlignBlock<T: Scalar> {
    pub feat: Conv2d<T>,
    pub offset: Conv2d<T>,
    pub dcn: DeformConv2d<T>,
}

#[derive(Debug, Clone)]
pub struct AlignCache<T: Scalar> {
    cat_in: Tensor<T>,
    feat_pre: Tensor<T>,
    cat_off: Tensor<T>,
    prev_shape: Option<[usize; 4]>,
    pub offsets: Tensor<T>,
}

impl<T: Scalar> AlignBlock<T> {
    pub fn new(init: &mut Initializer, channels: usize) -> Self {
        let k = DEFORM_OFFSET_CHANNELS;
        Self {
            feat: Conv2d::new(init, 2 * channels, channels, 3, 1),
            offset: Conv2d::zeroed(k + channels, k, 3, 1),
            dcn: DeformConv2d::new(init, channels, channels),
        }
    }

    /// Returns the aligned long features; the offsets live in the cache.
    pub fn forward(
        &self,
        fl: &Tensor<T>,
        fs: &Tensor<T>,
        prev_offsets: Option<&Tensor<T>>,
    ) -> Result<(Tensor<T>, AlignCache<T>)> {
        if fl.shape() != fs.shape() {
            return Err(Error::Shape(format!(
                "long features {:?} vs short features {:?}",
                fl.shape(),
                fs.shape()
            )));
        }
        let [n, _, h, w] = fl.shape();
        let cat_in = Tensor::concat_channels(&[fl, fs])?;
        let feat_pre = self.feat.forward(&cat_in)?;
        let feat = leaky_relu(&feat_pre);
        // Offsets are in pixels, so doubling the resolution doubles them.
        let up = match prev_offsets {
            Some(p) => {
                let up = upsample_bilinear2x(p, 2.0);
                up.expect_shape([n, DEFORM_OFFSET_CHANNELS, h, w])?;
                up
            }
            None => Tensor::zeros([n, DEFORM_OFFSET_CHANNELS, h, w]),
        };
        let cat_off = Tensor::concat_channels(&[&up, &feat])?;
        let offsets = self.offset.forward(&cat_off)?;
        let out = self.dcn.forward(fl, &offsets)?;
        Ok((
            out,
            AlignCache {
                cat_in,
                feat_pre,
                cat_off,
                prev_shape: prev_offsets.map(|p| p.shape()),
                offsets,
            },
        ))
    }

    /// Returns (dL/dF_l, dL/dF_s, dL/d(previous offsets)).
    pub fn backward(
        &mut self,
        fl: &Tensor<T>,
        cache: &AlignCache<T>,
        grad_out: &Tensor<T>,
        grad_offsets: Option<&Tensor<T>>,
    ) -> Result<(Tensor<T>, Tensor<T>, Option<Tensor<T>>)> {
        let c = fl.channels();
        let (mut g_fl, mut g_off) = self.dcn.backward(fl, &cache.offsets, grad_out)?;
        if let Some(extra) = grad_offsets {
            g_off.add_assign(extra)?;
        }
        let g_cat_off = self.offset.backward(&cache.cat_off, &g_off)?;
        let mut parts = g_cat_off.split_channels(&[DEFORM_OFFSET_CHANNELS, c])?;
        let g_feat = parts.pop().expect("two parts");
        let g_up = parts.pop().expect("two parts");
        let g_feat_pre = leaky_relu_backward(&cache.feat_pre, &g_feat)?;
        let g_cat_in = self.feat.backward(&cache.cat_in, &g_feat_pre)?;
        let mut parts = g_cat_in.split_channels(&[c, c])?;
        let g_fs = parts.pop().expect("two parts");
        g_fl.add_assign(&parts[0])?;
        let g_prev = match cache.prev_shape {
            Some(shape) => Some(upsample_bilinear2x_backward(&g_up, shape, 2.0)?),
            None => None,
        };
        Ok((g_fl, g_fs, g_prev))
    }

    pub(crate) fn named<'a>(&'a self, prefix: &str, out: &mut Named<'a, T>) {
        push_conv(out, &format!("{prefix}.feat"), &self.feat.weight, &self.feat.bias);
        push_conv(out, &format!("{prefix}.offset"), &self.offset.weight, &self.offset.bias);
        push_conv(out, &format!("{prefix}.dcn"), &self.dcn.weight, &self.dcn.bias);
    }

    pub(crate) fn params_mut<'a>(&'a mut self, out: &mut Vec<&'a mut Tensor<T>>) {
        out.extend(self.feat.params_mut());
        out.extend(self.offset.params_mut());
        out.extend(self.dcn.params_mut());
    }
}

/// Spatial attention: `F_l * sigmoid(conv(concat(F_l, F_s)))`.
#[derive(Debug, Clone, PartialEq)]
pub struct DeghostBlock<T: Scalar> {
    pub conv: Conv2d<T>,
}

#[derive(Debug, Clone)]
pub struct DeghostCache<T: Scalar> {
    cat: Tensor<T>,
    pub weight_map: Tensor<T>,
}

impl<T: Scalar> DeghostBlock<T> {
    pub fn new(init: &mut Initializer, channels: usize) -> Self {
        Self {
            conv: Conv2d::new(init, 2 * channels, channels, 3, 1),
        }
    }

    pub fn forward(&self, fl: &Tensor<T>, fs: &Tensor<T>) -> Result<(Tensor<T>, DeghostCache<T>)> {
        let cat = Tensor::concat_channels(&[fl, fs])?;
        let weight_map = sigmoid(&self.conv.forward(&cat)?);
        let out = fl.mul(&weight_map)?;
        Ok((out, DeghostCache { cat, weight_map }))
    }

    /// Returns (dL/dF_l, dL/dF_s).
    pub fn backward(
        &mut self,
        fl: &Tensor<T>,
        cache: &DeghostCache<T>,
        grad_out: &Tensor<T>,
    ) -> Result<(Tensor<T>, Tensor<T>)> {
        let c = fl.channels();
        let mut g_fl = grad_out.mul(&cache.weight_map)?;
        let g_w = grad_out.mul(fl)?;
        let g_pre = sigmoid_backward(&cache.weight_map, &g_w)?;
        let g_cat = self.conv.backward(&cache.cat, &g_pre)?;
        let mut parts = g_cat.split_channels(&[c, c])?;
        let g_fs = parts.pop().expect("two parts");
        g_fl.add_assign(&parts[0])?;
        Ok((g_fl, g_fs))
    }

    pub(crate) fn named<'a>(&'a self, prefix: &str, out: &mut Named<'a, T>) {
        push_conv(out, &format!("{prefix}.conv"), &self.conv.weight, &self.conv.bias);
    }

    pub(crate) fn params_mut<'a>(&'a mut self, out: &mut Vec<&'a mut Tensor<T>>) {
        out.extend(self.conv.params_mut());
    }
}

/// One decoder scale: fuse the skip features (and the upsampled coarser
/// state), refine with a ResBlock, then upsample to the next finer scale.
#[derive(Debug, Clone, PartialEq)]
pub struct DecoderStage<T: Scalar> {
    pub fuse: Conv2d<T>,
    pub block: ResBlock<T>,
    /// Absent at the finest scale.
    pub up: Option<ConvTranspose2d<T>>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Decoder<T: Scalar> {
    /// Indexed by scale, finest first.
    pub stages: Vec<DecoderStage<T>>,
    pub last: Conv2d<T>,
}

#[derive(Debug, Clone)]
struct StageCache<T: Scalar> {
    cat: Tensor<T>,
    fuse_pre: Tensor<T>,
    fused: Tensor<T>,
    block_cache: ResBlockCache<T>,
    res_out: Tensor<T>,
    up_pre: Option<Tensor<T>>,
}

#[derive(Debug, Clone)]
pub struct DecoderCache<T: Scalar> {
    stages: Vec<Option<StageCache<T>>>,
}

impl<T: Scalar> Decoder<T> {
    pub fn new(init: &mut Initializer, channels: [usize; SCALES]) -> Self {
        let stages = (0..SCALES)
            .map(|t| {
                let c = channels[t];
                let inputs = if t + 1 == SCALES { 2 } else { 3 };
                DecoderStage {
                    fuse: Conv2d::new(init, inputs * c, c, 3, 1),
                    block: ResBlock::new(init, c),
                    up: (t > 0).then(|| ConvTranspose2d::new(init, c, channels[t - 1])),
                }
            })
            .collect();
        let mut last = Conv2d::new(init, channels[0], HEAD_OUT_CHANNELS, 1, 1);
        for w in last.weight.data_mut() {
            *w *= T::cast(OUTPUT_INIT_SCALE);
        }
        Self { stages, last }
    }

    /// `short[t]` and `long[t]` are the per-scale skip features.
    pub fn forward(&self, short: &[Tensor<T>], long: &[Tensor<T>]) -> Result<(Tensor<T>, DecoderCache<T>)> {
        let mut caches: Vec<Option<StageCache<T>>> = vec![None; SCALES];
        let mut state: Option<Tensor<T>> = None;
        let mut finest = None;
        for t in (0..SCALES).rev() {
            let stage = &self.stages[t];
            let cat = match &state {
                Some(d) => Tensor::concat_channels(&[d, &short[t], &long[t]])?,
                None => Tensor::concat_channels(&[&short[t], &long[t]])?,
            };
            let fuse_pre = stage.fuse.forward(&cat)?;
            let fused = leaky_relu(&fuse_pre);
            let (res_out, block_cache) = stage.block.forward(&fused)?;
            let up_pre = match &stage.up {
                Some(up) => {
                    let pre = up.forward(&res_out)?;
                    state = Some(leaky_relu(&pre));
                    Some(pre)
                }
                None => {
                    finest = Some(pixel_shuffle(&self.last.forward(&res_out)?)?);
                    None
                }
            };
            caches[t] = Some(StageCache {
                cat,
                fuse_pre,
                fused,
                block_cache,
                res_out,
                up_pre,
            });
        }
        let out = finest.expect("finest stage has no upsampler");
        Ok((out, DecoderCache { stages: caches }))
    }

    /// Returns per-scale (dL/dshort, dL/dlong).
    pub fn backward(
        &mut self,
        cache: &DecoderCache<T>,
        grad_out: &Tensor<T>,
    ) -> Result<(Vec<Tensor<T>>, Vec<Tensor<T>>)> {
        let mut g_short = Vec::with_capacity(SCALES);
        let mut g_long = Vec::with_capacity(SCALES);
        let c0 = cache.stages[0].as_ref().expect("forward ran");
        let g_last = pixel_unshuffle(grad_out)?;
        let mut g_res = self.last.backward(&c0.res_out, &g_last)?;
        for t in 0..SCALES {
            let sc = cache.stages[t].as_ref().expect("forward ran");
            let stage = &mut self.stages[t];
            let g_fused = stage.block.backward(&sc.fused, &sc.block_cache, &g_res)?;
            let g_pre = leaky_relu_backward(&sc.fuse_pre, &g_fused)?;
            let g_cat = stage.fuse.backward(&sc.cat, &g_pre)?;
            let c = g_pre.channels();
            let has_state = t + 1 < SCALES;
            let counts: &[usize] = if has_state { &[c, c, c] } else { &[c, c] };
            let mut parts = g_cat.split_channels(counts)?;
            g_long.push(parts.pop().expect("long part"));
            g_short.push(parts.pop().expect("short part"));
            if has_state {
                let g_state = parts.pop().expect("state part");
                let coarse = cache.stages[t + 1].as_ref().expect("forward ran");
                let g_up_pre = leaky_relu_backward(coarse.up_pre.as_ref().expect("upsampler"), &g_state)?;
                let up = self.stages[t + 1].up.as_mut().expect("upsampler");
                g_res = up.backward(&coarse.res_out, &g_up_pre)?;
            }
        }
        Ok((g_short, g_long))
    }

    pub(crate) fn named<'a>(&'a self, prefix: &str, out: &mut Named<'a, T>) {
        for (t, s) in self.stages.iter().enumerate() {
            push_conv(out, &format!("{prefix}.stage{t}.fuse"), &s.fuse.weight, &s.fuse.bias);
            push_res(out, &format!("{prefix}.stage{t}.block"), &s.block);
            if let Some(up) = &s.up {
                push_conv(out, &format!("{prefix}.stage{t}.up"), &up.weight, &up.bias);
            }
        }
        push_conv(out, &format!("{prefix}.last"), &self.last.weight, &self.last.bias);
    }

    pub(crate) fn params_mut<'a>(&'a mut self, out: &mut Vec<&'a mut Tensor<T>>) {
        for s in self.stages.iter_mut() {
            out.extend(s.fuse.params_mut());
            out.extend(s.block.params_mut());
            if let Some(up) = s.up.as_mut() {
                out.extend(up.params_mut());
            }
        }
        out.extend(self.last.params_mut());
    }
}
