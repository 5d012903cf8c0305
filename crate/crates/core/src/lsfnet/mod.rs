//! LSFNet: dual-branch encoder, per-scale deformable alignment and
//! deghosting of the long-exposure features, and a coarse-to-fine decoder
//! ending in a pixel shuffle.

mod blocks;
mod checkpoint;

pub use blocks::{
    AlignBlock, AlignCache, Decoder, DecoderCache, DecoderStage, DeghostBlock, DeghostCache, Encoder, EncoderCache,
    HEAD_OUT_CHANNELS, SCALES,
};
pub use checkpoint::{
    decode_checkpoint, encode_checkpoint, load_checkpoint, save_checkpoint, Checkpoint, CHECKPOINT_MAGIC,
    CHECKPOINT_VERSION,
};

use crate::error::{Error, Result};
use crate::isp::{post_process_planar, post_process_planar_backward, IspConfig, ToneMode};
use crate::nn::{l1_loss, l1_loss_backward, Initializer, Scalar, Tensor, DEFORM_OFFSET_CHANNELS};

pub const FULL_CHANNELS: [usize; SCALES] = [32, 64, 128, 256];
pub const TOY_CHANNELS: [usize; SCALES] = [4, 8, 12, 16];
/// Packed RGGB raw.
pub const RAW_INPUT_CHANNELS: usize = 4;
/// Space-to-depth of a 3-channel sRGB image, for the sRGB-input ablation.
pub const SRGB_INPUT_CHANNELS: usize = 12;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct LsfConfig {
    pub channels: [usize; SCALES],
    pub input_channels: usize,
    pub mode: ToneMode,
}

impl Default for LsfConfig {
    fn default() -> Self {
        Self::full()
    }
}

impl LsfConfig {
    pub fn full() -> Self {
        Self {
            channels: FULL_CHANNELS,
            input_channels: RAW_INPUT_CHANNELS,
            mode: ToneMode::Gamma,
        }
    }

    pub fn toy() -> Self {
        Self {
            channels: TOY_CHANNELS,
            ..Self::full()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.channels.contains(&0) || self.input_channels == 0 {
            return Err(Error::Config(format!(
                "channel counts must be positive, got {:?} with {} input channels",
                self.channels, self.input_channels
            )));
        }
        Ok(())
    }

    /// Spatial sizes of the packed input must survive three halvings.
    pub const SIZE_MULTIPLE: usize = 1 << (SCALES - 1);
}

#[derive(Debug, Clone, PartialEq)]
pub struct LsfModel<T: Scalar> {
    pub config: LsfConfig,
    pub long_encoder: Encoder<T>,
    pub short_encoder: Encoder<T>,
    pub align: Vec<AlignBlock<T>>,
    pub deghost: Vec<DeghostBlock<T>>,
    pub decoder: Decoder<T>,
}

/// Everything the backward pass needs from one forward pass.
#[derive(Debug, Clone)]
pub struct ForwardCache<T: Scalar> {
    pub long: EncoderCache<T>,
    pub short: EncoderCache<T>,
    pub align: Vec<AlignCache<T>>,
    pub aligned: Vec<Tensor<T>>,
    pub deghost: Vec<DeghostCache<T>>,
    pub fused: Vec<Tensor<T>>,
    pub decoder: DecoderCache<T>,
}

impl<T: Scalar> LsfModel<T> {
    pub fn build(config: LsfConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let mut init = Initializer::new(seed);
        let ch = config.channels;
        let model = Self {
            config,
            long_encoder: Encoder::new(&mut init, config.input_channels, ch),
            short_encoder: Encoder::new(&mut init, config.input_channels, ch),
            align: ch.iter().map(|&c| AlignBlock::new(&mut init, c)).collect(),
            deghost: ch.iter().map(|&c| DeghostBlock::new(&mut init, c)).collect(),
            decoder: Decoder::new(&mut init, ch),
        };
        log::debug!("built LSFNet {:?} with {} parameters", ch, model.num_parameters());
        Ok(model)
    }

    pub fn named_parameters(&self) -> Vec<(String, &Tensor<T>)> {
        let mut out = Vec::new();
        self.long_encoder.named("long", &mut out);
        self.short_encoder.named("short", &mut out);
        for (t, a) in self.align.iter().enumerate() {
            a.named(&format!("align{t}"), &mut out);
        }
        for (t, d) in self.deghost.iter().enumerate() {
            d.named(&format!("deghost{t}"), &mut out);
        }
        self.decoder.named("decoder", &mut out);
        out
    }

    /// Same order as [`Self::named_parameters`].
    pub fn parameters_mut(&mut self) -> Vec<&mut Tensor<T>> {
        let mut out = Vec::new();
        self.long_encoder.params_mut(&mut out);
        self.short_encoder.params_mut(&mut out);
        for a in self.align.iter_mut() {
            a.params_mut(&mut out);
        }
        for d in self.deghost.iter_mut() {
            d.params_mut(&mut out);
        }
        self.decoder.params_mut(&mut out);
        out
    }

    pub fn num_parameters(&self) -> usize {
        self.named_parameters().iter().map(|(_, t)| t.len()).sum()
    }

    pub fn parameter_lens(&self) -> Vec<usize> {
        self.named_parameters().iter().map(|(_, t)| t.len()).collect()
    }

    pub fn zero_grad(&mut self) {
        for p in self.parameters_mut() {
            p.zero_grad();
        }
    }

    pub fn cast<U: Scalar>(&self) -> LsfModel<U> {
        let mut out = LsfModel::<U>::build(self.config, 0).expect("config already validated");
        let src: Vec<Vec<f64>> = self.named_parameters().iter().map(|(_, t)| t.to_f64()).collect();
        for (dst, src) in out.parameters_mut().into_iter().zip(src) {
            for (d, s) in dst.data_mut().iter_mut().zip(src) {
                *d = U::cast(s);
            }
        }
        out
    }

    fn check_inputs(&self, long: &Tensor<T>, short: &Tensor<T>) -> Result<()> {
        if long.shape() != short.shape() {
            return Err(Error::Shape(format!(
                "long input {:?} and short input {:?} differ",
                long.shape(),
                short.shape()
            )));
        }
        let [_, c, h, w] = long.shape();
        if c != self.config.input_channels {
            return Err(Error::Shape(format!(
                "model expects {} input channels, got {c}",
                self.config.input_channels
            )));
        }
        let m = LsfConfig::SIZE_MULTIPLE;
        if h == 0 || w == 0 || h % m != 0 || w % m != 0 {
            return Err(Error::Dimension(format!(
                "packed input {h}x{w} must be a non-zero multiple of {m} on each side"
            )));
        }
        Ok(())
    }

    pub fn forward(&self, long: &Tensor<T>, short: &Tensor<T>) -> Result<Tensor<T>> {
        Ok(self.forward_cached(long, short)?.0)
    }

    /// Returns the camera-RGB output `(N, 3, 2H, 2W)` and the forward cache.
    pub fn forward_cached(&self, long: &Tensor<T>, short: &Tensor<T>) -> Result<(Tensor<T>, ForwardCache<T>)> {
        self.check_inputs(long, short)?;
        let lc = self.long_encoder.forward(long)?;
        let sc = self.short_encoder.forward(short)?;

        let mut align = Vec::with_capacity(SCALES);
        let mut aligned = Vec::with_capacity(SCALES);
        let mut prev: Option<Tensor<T>> = None;
        for t in (0..SCALES).rev() {
            let (out, cache) = self.align[t].forward(&lc.features[t], &sc.features[t], prev.as_ref())?;
            prev = Some(cache.offsets.clone());
            align.push(cache);
            aligned.push(out);
        }
        align.reverse();
        aligned.reverse();

        let mut deghost = Vec::with_capacity(SCALES);
        let mut fused = Vec::with_capacity(SCALES);
        for t in 0..SCALES {
            let (out, cache) = self.deghost[t].forward(&aligned[t], &sc.features[t])?;
            deghost.push(cache);
            fused.push(out);
        }
        let (out, decoder) = self.decoder.forward(&sc.features, &fused)?;
        Ok((
            out,
            ForwardCache {
                long: lc,
                short: sc,
                align,
                aligned,
                deghost,
                fused,
                decoder,
            },
        ))
    }

    /// Accumulate parameter gradients for `dL/d(output) = grad_out`.
    pub fn backward(&mut self, cache: &ForwardCache<T>, grad_out: &Tensor<T>) -> Result<()> {
        let (mut g_short, g_fused) = self.decoder.backward(&cache.decoder, grad_out)?;
        let mut g_long = Vec::with_capacity(SCALES);
        let mut g_offsets: Option<Tensor<T>> = None;
        for t in 0..SCALES {
            let (g_aligned, g_fs) = self.deghost[t].backward(&cache.aligned[t], &cache.deghost[t], &g_fused[t])?;
            g_short[t].add_assign(&g_fs)?;
            let (g_fl, g_fs, g_prev) =
                self.align[t].backward(&cache.long.features[t], &cache.align[t], &g_aligned, g_offsets.as_ref())?;
            g_short[t].add_assign(&g_fs)?;
            g_long.push(g_fl);
            g_offsets = g_prev;
        }
        self.long_encoder.backward(&cache.long, g_long)?;
        self.short_encoder.backward(&cache.short, g_short)?;
        Ok(())
    }

    /// L1 distance between the post-processed prediction and the
    /// post-processed linear target `(N, 3, 2H, 2W)`.
    pub fn loss(&self, long: &Tensor<T>, short: &Tensor<T>, target: &Tensor<T>, isp: &IspConfig) -> Result<T> {
        let pred = self.forward(long, short)?;
        target.expect_shape(pred.shape())?;
        let plane = pred.plane();
        let (p, _) = post_process_planar(pred.data(), plane, isp);
        let (t, _) = post_process_planar(target.data(), plane, isp);
        l1_loss(&p, &t)
    }

    /// Loss plus freshly zeroed-then-accumulated parameter gradients.
    pub fn training_loss(
        &mut self,
        long: &Tensor<T>,
        short: &Tensor<T>,
        target: &Tensor<T>,
        isp: &IspConfig,
    ) -> Result<T> {
        self.zero_grad();
        let (pred, cache) = self.forward_cached(long, short)?;
        target.expect_shape(pred.shape())?;
        let plane = pred.plane();
        let (p, slope) = post_process_planar(pred.data(), plane, isp);
        let (t, _) = post_process_planar(target.data(), plane, isp);
        let loss = l1_loss(&p, &t)?;
        let g = post_process_planar_backward(&l1_loss_backward(&p, &t)?, &slope, plane, isp);
        self.backward(&cache, &Tensor::from_vec(pred.shape(), g)?)?;
        Ok(loss)
    }
}

/// Parameter count implied by a configuration.
pub fn parameter_count(cfg: &LsfConfig) -> usize {
    let conv = |i: usize, o: usize, k: usize| i * o * k * k + o;
    let ch = cfg.channels;
    let mut encoder = conv(cfg.input_channels, ch[0], 3);
    for t in 0..SCALES {
        encoder += 2 * conv(ch[t], ch[t], 3);
        if t + 1 < SCALES {
            encoder += conv(ch[t], ch[t + 1], 2);
        }
    }
    let mut total = 2 * encoder;
    for t in 0..SCALES {
        let c = ch[t];
        total += conv(2 * c, c, 3) + conv(DEFORM_OFFSET_CHANNELS + c, DEFORM_OFFSET_CHANNELS, 3) + conv(c, c, 3);
        total += conv(2 * c, c, 3);
        let inputs = if t + 1 == SCALES { 2 } else { 3 };
        total += conv(inputs * c, c, 3) + 2 * conv(c, c, 3);
        if t > 0 {
            total += conv(c, ch[t - 1], 2);
        }
    }
    total + conv(ch[0], HEAD_OUT_CHANNELS, 1)
}

#[cfg(test)]
mod tests;
