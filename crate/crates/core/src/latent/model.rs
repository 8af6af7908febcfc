//! Prior, posterior and likelihood networks.
//!
//! * posterior `q(s_t | s_{t-1}, a_{t-1}, o_t)`: strided conv encoder, features
//!   concatenated with `[s_{t-1}, a_{t-1}]`, two hidden ReLU layers, then mean
//!   and stddev heads;
//! * prior `p(s_t | s_{t-1}, a_{t-1})`: the same MLP head shape on
//!   `[s_{t-1}, a_{t-1}]` alone;
//! * likelihood `p(o_t | s_t)`: dense projection to the encoder's feature map
//!   followed by mirrored transposed convolutions and a sigmoid.
//!
//! Stddev heads use `softplus(x) + STDDEV_FLOOR`.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::layers::{self, ConvGeom};
use crate::domain::{Action, ImageShape, Observation};
use crate::error::{check_dim, Error, Result};

pub const STDDEV_FLOOR: f64 = 1e-4;

/// Network shape. Observation height and width must be divisible by
/// `2^conv_channels.len()`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Architecture {
    pub latent_dim: usize,
    pub action_dim: usize,
    pub observation: ImageShape,
    pub conv_channels: Vec<usize>,
    pub hidden: usize,
}

impl Architecture {
    pub fn new(
        latent_dim: usize,
        action_dim: usize,
        observation: ImageShape,
        conv_channels: Vec<usize>,
        hidden: usize,
    ) -> Result<Self> {
        let arch = Self {
            latent_dim,
            action_dim,
            observation,
            conv_channels,
            hidden,
        };
        arch.validate()?;
        Ok(arch)
    }

    /// 32-dim latent, four conv layers of 32/64/128/256 channels, 256 hidden units.
    pub fn standard(observation: ImageShape, action_dim: usize) -> Result<Self> {
        Self::new(32, action_dim, observation, vec![32, 64, 128, 256], 256)
    }

    pub fn validate(&self) -> Result<()> {
        if self.latent_dim == 0 || self.hidden == 0 || self.observation.is_empty() {
            return Err(Error::Config(
                "latent_dim, hidden and observation shape must be non-zero".into(),
            ));
        }
        if self.conv_channels.is_empty() || self.conv_channels.contains(&0) {
            return Err(Error::Config("conv_channels must be non-empty and positive".into()));
        }
        let div = 1usize << self.conv_channels.len();
        let ImageShape { height, width, .. } = self.observation;
        if height % div != 0 || width % div != 0 {
            return Err(Error::Config(format!(
                "observation {}x{} not divisible by {div} ({} conv layers)",
                height,
                width,
                self.conv_channels.len()
            )));
        }
        Ok(())
    }

    pub(crate) fn feature_map(&self) -> (usize, usize, usize) {
        let l = self.conv_channels.len();
        (
            self.observation.height >> l,
            self.observation.width >> l,
            *self.conv_channels.last().unwrap(),
        )
    }

    pub fn feature_len(&self) -> usize {
        let (h, w, c) = self.feature_map();
        h * w * c
    }

    pub(crate) fn encoder_geoms(&self) -> Vec<ConvGeom> {
        let mut h = self.observation.height;
        let mut w = self.observation.width;
        let mut c = self.observation.channels;
        self.conv_channels
            .iter()
            .map(|&out| {
                let g = ConvGeom::halving(h, w, c, out);
                (h, w, c) = (h / 2, w / 2, out);
                g
            })
            .collect()
    }

    /// Adjoint-convolution geometries of the decoder, in application order.
    pub(crate) fn decoder_geoms(&self) -> Vec<ConvGeom> {
        let (mut h, mut w, mut c) = self.feature_map();
        let mut outs: Vec<usize> = self.conv_channels.iter().rev().skip(1).copied().collect();
        outs.push(self.observation.channels);
        outs.into_iter()
            .map(|out| {
                // the adjoint conv maps the (2h, 2w, out) image down to (h, w, c)
                let g = ConvGeom::halving(2 * h, 2 * w, out, c);
                (h, w, c) = (2 * h, 2 * w, out);
                g
            })
            .collect()
    }
}

/// Location of a dense layer inside the flat parameter vector.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) struct DenseSlot {
    pub w: usize,
    pub b: usize,
    pub fan_in: usize,
    pub fan_out: usize,
}

impl DenseSlot {
    fn alloc(cursor: &mut usize, fan_in: usize, fan_out: usize) -> Self {
        let w = *cursor;
        let b = w + fan_in * fan_out;
        *cursor = b + fan_out;
        Self {
            w,
            b,
            fan_in,
            fan_out,
        }
    }

    pub fn weight<'a>(&self, v: &'a [f64]) -> &'a [f64] {
        &v[self.w..self.b]
    }

    pub fn bias<'a>(&self, v: &'a [f64]) -> &'a [f64] {
        &v[self.b..self.b + self.fan_out]
    }

    /// Mutable views of (weight, bias) gradients.
    pub fn split_mut<'a>(&self, v: &'a mut [f64]) -> (&'a mut [f64], &'a mut [f64]) {
        let (w, rest) = v[self.w..self.b + self.fan_out].split_at_mut(self.b - self.w);
        (w, rest)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) struct ConvSlot {
    pub geom: ConvGeom,
    pub w: usize,
    pub b: usize,
    pub bias_len: usize,
}

impl ConvSlot {
    fn alloc(cursor: &mut usize, geom: ConvGeom, bias_len: usize) -> Self {
        let w = *cursor;
        let b = w + geom.weight_len();
        *cursor = b + bias_len;
        Self {
            geom,
            w,
            b,
            bias_len,
        }
    }

    pub fn weight<'a>(&self, v: &'a [f64]) -> &'a [f64] {
        &v[self.w..self.b]
    }

    pub fn bias<'a>(&self, v: &'a [f64]) -> &'a [f64] {
        &v[self.b..self.b + self.bias_len]
    }

    pub fn split_mut<'a>(&self, v: &'a mut [f64]) -> (&'a mut [f64], &'a mut [f64]) {
        v[self.w..self.b + self.bias_len].split_at_mut(self.b - self.w)
    }
}

/// Two hidden ReLU layers followed by parallel mean and stddev heads.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) struct GaussianMlp {
    pub fc1: DenseSlot,
    pub fc2: DenseSlot,
    pub mean: DenseSlot,
    pub std: DenseSlot,
}

impl GaussianMlp {
    fn alloc(cursor: &mut usize, fan_in: usize, hidden: usize, out: usize) -> Self {
        Self {
            fc1: DenseSlot::alloc(cursor, fan_in, hidden),
            fc2: DenseSlot::alloc(cursor, hidden, hidden),
            mean: DenseSlot::alloc(cursor, hidden, out),
            std: DenseSlot::alloc(cursor, hidden, out),
        }
    }

    fn slots(&self) -> [DenseSlot; 4] {
        [self.fc1, self.fc2, self.mean, self.std]
    }
}

/// Offsets of every tensor in the flat parameter vector.
///
/// Storage order (each weight followed by its bias):
/// encoder convs (first to last), posterior fc1/fc2/mean/std, prior
/// fc1/fc2/mean/std, decoder dense, decoder transposed convs (first to last).
/// Dense weights are `[fan_in, fan_out]` row-major; conv weights are
/// `[kernel_y, kernel_x, c_in, c_out]` for the encoder and
/// `[kernel_y, kernel_x, c_out, c_in]` for the decoder.
#[derive(Debug, Clone, PartialEq, Eq)]
pub(crate) struct Layout {
    pub encoder: Vec<ConvSlot>,
    pub posterior: GaussianMlp,
    pub prior: GaussianMlp,
    pub decoder_fc: DenseSlot,
    pub decoder: Vec<ConvSlot>,
    pub total: usize,
}

impl Layout {
    pub fn new(arch: &Architecture) -> Self {
        let mut cur = 0;
        let d = arch.latent_dim;
        let a = arch.action_dim;
        let encoder = arch
            .encoder_geoms()
            .into_iter()
            .map(|g| ConvSlot::alloc(&mut cur, g, g.out_c))
            .collect();
        let posterior = GaussianMlp::alloc(&mut cur, arch.feature_len() + d + a, arch.hidden, d);
        let prior = GaussianMlp::alloc(&mut cur, d + a, arch.hidden, d);
        let decoder_fc = DenseSlot::alloc(&mut cur, d, arch.feature_len());
        let decoder = arch
            .decoder_geoms()
            .into_iter()
            .map(|g| ConvSlot::alloc(&mut cur, g, g.in_c))
            .collect();
        Self {
            encoder,
            posterior,
            prior,
            decoder_fc,
            decoder,
            total: cur,
        }
    }

    /// `(name, offset, len, fan_in)` for every tensor, in storage order.
    pub fn tensors(&self) -> Vec<(String, usize, usize, usize)> {
        let mut out = Vec::new();
        for (i, s) in self.encoder.iter().enumerate() {
            let fan_in = s.geom.patch_len();
            out.push((format!("encoder.conv{i}.weight"), s.w, s.b - s.w, fan_in));
            out.push((format!("encoder.conv{i}.bias"), s.b, s.bias_len, fan_in));
        }
        for (prefix, mlp) in [("posterior", &self.posterior), ("prior", &self.prior)] {
            for (name, s) in ["fc1", "fc2", "mean", "std"].iter().zip(mlp.slots()) {
                out.push((format!("{prefix}.{name}.weight"), s.w, s.b - s.w, s.fan_in));
                out.push((format!("{prefix}.{name}.bias"), s.b, s.fan_out, s.fan_in));
            }
        }
        let s = self.decoder_fc;
        out.push(("decoder.fc.weight".into(), s.w, s.b - s.w, s.fan_in));
        out.push(("decoder.fc.bias".into(), s.b, s.fan_out, s.fan_in));
        for (i, s) in self.decoder.iter().enumerate() {
            // each small-image pixel feeds kernel²/stride² outputs per output channel
            let fan_in = s.geom.out_c * 4;
            out.push((format!("decoder.deconv{i}.weight"), s.w, s.b - s.w, fan_in));
            out.push((format!("decoder.deconv{i}.bias"), s.b, s.bias_len, fan_in));
        }
        out
    }
}

/// Weights of all three networks. Immutable during inference and safe to share
/// across threads.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelParams {
    arch: Architecture,
    layout: Layout,
    values: Vec<f64>,
}

impl ModelParams {
    /// Fan-in scaled uniform initialisation `U(-1/√fan_in, 1/√fan_in)` for
    /// weights, zero biases, and stddev-head biases giving unit stddev.
    pub fn init(arch: Architecture, seed: u64) -> Result<Self> {
        arch.validate()?;
        let layout = Layout::new(&arch);
        let mut values = vec![0.0; layout.total];
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for (name, off, len, fan_in) in layout.tensors() {
            if name.ends_with(".weight") {
                let bound = 1.0 / (fan_in as f64).sqrt();
                for v in &mut values[off..off + len] {
                    *v = rng.random_range(-bound..bound);
                }
            }
        }
        let unit = layers::softplus_inverse(1.0 - STDDEV_FLOOR);
        for mlp in [layout.posterior, layout.prior] {
            values[mlp.std.b..mlp.std.b + mlp.std.fan_out].fill(unit);
        }
        Ok(Self {
            arch,
            layout,
            values,
        })
    }

    pub fn from_values(arch: Architecture, values: Vec<f64>) -> Result<Self> {
        arch.validate()?;
        let layout = Layout::new(&arch);
        check_dim("parameter vector", layout.total, values.len())?;
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("model parameters"));
        }
        Ok(Self {
            arch,
            layout,
            values,
        })
    }

    pub fn architecture(&self) -> &Architecture {
        &self.arch
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// Tensor names with their `[offset, offset + len)` ranges, in storage order.
    pub fn tensor_names(&self) -> Vec<(String, std::ops::Range<usize>)> {
        self.layout
            .tensors()
            .into_iter()
            .map(|(n, off, len, _)| (n, off..off + len))
            .collect()
    }

    pub(crate) fn layout(&self) -> &Layout {
        &self.layout
    }

    fn check_latent(&self, v: &[f64]) -> Result<()> {
        check_dim("latent sample", self.arch.latent_dim, v.len())?;
        if v.iter().any(|x| !x.is_finite()) {
            return Err(Error::NonFinite("latent sample"));
        }
        Ok(())
    }

    fn check_action(&self, a: &Action) -> Result<()> {
        check_dim("action", self.arch.action_dim, a.dim())
    }

    fn check_observation(&self, o: &Observation) -> Result<()> {
        if o.shape() != self.arch.observation {
            return Err(Error::Config(format!(
                "observation shape {} does not match model input {}",
                o.shape(),
                self.arch.observation
            )));
        }
        Ok(())
    }

    /// `p(s_t | s_{t-1}, a_{t-1})`.
    pub fn prior_predict(&self, prev: &LatentSample, action: &Action) -> Result<GaussianLatent> {
        self.check_latent(&prev.values)?;
        self.check_action(action)?;
        let input = [prev.values.as_slice(), action.controls.as_slice()].concat();
        let out = mlp_forward(&self.values, &self.layout.prior, &input);
        Ok(out.into_latent())
    }

    /// `q(s_t | s_{t-1}, a_{t-1}, o_t)`.
    pub fn posterior_infer(
        &self,
        prev: &LatentSample,
        action: &Action,
        obs: &Observation,
    ) -> Result<GaussianLatent> {
        self.check_latent(&prev.values)?;
        self.check_action(action)?;
        self.check_observation(obs)?;
        let enc = encoder_forward(&self.values, &self.layout, obs.pixels(), 1);
        let input = [
            enc.features(),
            prev.values.as_slice(),
            action.controls.as_slice(),
        ]
        .concat();
        let out = mlp_forward(&self.values, &self.layout.posterior, &input);
        Ok(out.into_latent())
    }

    /// Mean image of `p(o_t | s_t)`.
    pub fn likelihood_reconstruct(&self, sample: &LatentSample) -> Result<Observation> {
        self.check_latent(&sample.values)?;
        let dec = decoder_forward(&self.values, &self.layout, &sample.values, 1);
        Observation::new(self.arch.observation, dec.image)
    }

    /// Inference-time state estimate: the posterior mean, no sampling.
    pub fn encode(
        &self,
        prev: &LatentSample,
        action: &Action,
        obs: &Observation,
    ) -> Result<LatentSample> {
        Ok(LatentSample::from(self.posterior_infer(prev, action, obs)?.mean))
    }
}

/// Diagonal Gaussian belief over the latent state.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GaussianLatent {
    pub mean: Vec<f64>,
    pub stddev: Vec<f64>,
}

impl GaussianLatent {
    pub fn new(mean: Vec<f64>, stddev: Vec<f64>) -> Result<Self> {
        check_dim("gaussian stddev", mean.len(), stddev.len())?;
        if stddev.iter().any(|s| !(*s > 0.0) || !s.is_finite()) {
            return Err(Error::OutOfRange("stddev must be positive and finite".into()));
        }
        if mean.iter().any(|m| !m.is_finite()) {
            return Err(Error::NonFinite("gaussian mean"));
        }
        Ok(Self { mean, stddev })
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    /// Reparameterised draw `mean + stddev · eps`.
    pub fn sample_with(&self, eps: &[f64]) -> LatentSample {
        LatentSample {
            values: self
                .mean
                .iter()
                .zip(&self.stddev)
                .zip(eps)
                .map(|((m, s), e)| m + s * e)
                .collect(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LatentSample {
    pub values: Vec<f64>,
}

impl LatentSample {
    pub fn zeros(dim: usize) -> Self {
        Self {
            values: vec![0.0; dim],
        }
    }

    pub fn dim(&self) -> usize {
        self.values.len()
    }
}

impl From<Vec<f64>> for LatentSample {
    fn from(values: Vec<f64>) -> Self {
        Self { values }
    }
}

// ---------------------------------------------------------------------------
// forward passes with caches (shared by inference and training)

pub(crate) struct EncoderPass {
    /// Unfolded input of every layer.
    pub cols: Vec<Vec<f64>>,
    /// Post-ReLU output of every layer; the last one is the feature vector.
    pub acts: Vec<Vec<f64>>,
}

impl EncoderPass {
    pub fn features(&self) -> &[f64] {
        self.acts.last().unwrap()
    }
}

pub(crate) fn encoder_forward(v: &[f64], layout: &Layout, x: &[f64], n: usize) -> EncoderPass {
    let mut cols = Vec::with_capacity(layout.encoder.len());
    let mut acts: Vec<Vec<f64>> = Vec::with_capacity(layout.encoder.len());
    for slot in &layout.encoder {
        let input = acts.last().map_or(x, |a| a.as_slice());
        let mut y = Vec::new();
        let c = layers::conv_forward(&slot.geom, slot.weight(v), slot.bias(v), input, n, &mut y);
        layers::relu_inplace(&mut y);
        cols.push(c);
        acts.push(y);
    }
    EncoderPass { cols, acts }
}

pub(crate) struct MlpPass {
    pub input: Vec<f64>,
    pub h1: Vec<f64>,
    pub h2: Vec<f64>,
    pub mean: Vec<f64>,
    pub pre_std: Vec<f64>,
    pub std: Vec<f64>,
}

impl MlpPass {
    fn into_latent(self) -> GaussianLatent {
        GaussianLatent {
            mean: self.mean,
            stddev: self.std,
        }
    }
}

pub(crate) fn mlp_forward(v: &[f64], mlp: &GaussianMlp, input: &[f64]) -> MlpPass {
    let dense = |slot: &DenseSlot, x: &[f64]| {
        let mut y = Vec::new();
        layers::dense_forward(slot.weight(v), slot.bias(v), x, 1, slot.fan_in, &mut y);
        y
    };
    let mut h1 = dense(&mlp.fc1, input);
    layers::relu_inplace(&mut h1);
    let mut h2 = dense(&mlp.fc2, &h1);
    layers::relu_inplace(&mut h2);
    let mean = dense(&mlp.mean, &h2);
    let pre_std = dense(&mlp.std, &h2);
    let std = pre_std
        .iter()
        .map(|p| layers::softplus(*p) + STDDEV_FLOOR)
        .collect();
    MlpPass {
        input: input.to_vec(),
        h1,
        h2,
        mean,
        pre_std,
        std,
    }
}

pub(crate) struct DecoderPass {
    /// Post-ReLU output of the dense projection.
    pub fc_out: Vec<f64>,
    /// Inputs of every transposed conv (the first is `fc_out`, omitted here).
    pub acts: Vec<Vec<f64>>,
    /// Sigmoid output.
    pub image: Vec<f64>,
}

pub(crate) fn decoder_forward(v: &[f64], layout: &Layout, s: &[f64], n: usize) -> DecoderPass {
    let fc = &layout.decoder_fc;
    let mut fc_out = Vec::new();
    layers::dense_forward(fc.weight(v), fc.bias(v), s, n, fc.fan_in, &mut fc_out);
    layers::relu_inplace(&mut fc_out);
    let mut acts: Vec<Vec<f64>> = Vec::new();
    let last = layout.decoder.len() - 1;
    let mut image = Vec::new();
    for (i, slot) in layout.decoder.iter().enumerate() {
        let input = acts.last().map_or(fc_out.as_slice(), |a| a.as_slice());
        let mut y = Vec::new();
        layers::deconv_forward(&slot.geom, slot.weight(v), slot.bias(v), input, n, &mut y);
        if i == last {
            y.iter_mut().for_each(|z| *z = layers::sigmoid(*z));
            image = y;
        } else {
            layers::relu_inplace(&mut y);
            acts.push(y);
        }
    }
    DecoderPass {
        fc_out,
        acts,
        image,
    }
}
