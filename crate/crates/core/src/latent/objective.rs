//! Free-energy objective and its exact gradient.
//!
//! For a sequence of frames the loss is
//! `Σ_t KL(q(s_t | s_{t-1}, a_{t-1}, o_t) ‖ p(s_t | s_{t-1}, a_{t-1})) + ½ Σ_pixels (o_t − ô_t)²`
//! where `s_t` is a reparameterised posterior sample and `ô_t` the decoded
//! mean image. Batches report the mean over sequences. `s_0` is the zero vector.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::layers;
use super::model::{
    decoder_forward, encoder_forward, mlp_forward, DecoderPass, EncoderPass, GaussianLatent,
    GaussianMlp, ModelParams, MlpPass,
};
use crate::domain::{FrameRecord, Observation};
use crate::error::{check_dim, Error, Result};

/// Closed-form `KL(q ‖ p)` between diagonal Gaussians.
pub fn kl_gaussian(q: &GaussianLatent, p: &GaussianLatent) -> Result<f64> {
    check_dim("kl operands", q.dim(), p.dim())?;
    check_dim("kl stddev", q.dim(), q.stddev.len())?;
    check_dim("kl stddev", p.dim(), p.stddev.len())?;
    if q.stddev.iter().chain(&p.stddev).any(|s| !(*s > 0.0)) {
        return Err(Error::OutOfRange("kl requires positive stddev".into()));
    }
    Ok(kl_terms(&q.mean, &q.stddev, &p.mean, &p.stddev))
}

fn kl_terms(mq: &[f64], sq: &[f64], mp: &[f64], sp: &[f64]) -> f64 {
    let mut kl = 0.0;
    for i in 0..mq.len() {
        let d = mq[i] - mp[i];
        kl += (sp[i] / sq[i]).ln() + (sq[i] * sq[i] + d * d) / (2.0 * sp[i] * sp[i]) - 0.5;
    }
    kl
}

/// `½ Σ (o − ô)²`: negative log-likelihood of a unit-variance Gaussian with
/// constants dropped.
pub fn reconstruction_loss(obs: &Observation, recon: &Observation) -> Result<f64> {
    if obs.shape() != recon.shape() {
        return Err(Error::Dimension {
            what: "reconstruction",
            expected: obs.shape().len(),
            got: recon.shape().len(),
        });
    }
    Ok(half_sq(obs.pixels(), recon.pixels()))
}

fn half_sq(a: &[f64], b: &[f64]) -> f64 {
    0.5 * a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>()
}

/// A training sequence. `key` identifies the sequence for the noise stream, so
/// the same sequence always sees the same reparameterisation noise for a
/// given seed regardless of its position in a batch.
#[derive(Debug, Clone, Copy)]
pub struct Episode<'a> {
    pub key: u64,
    pub frames: &'a [FrameRecord],
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct FreeEnergy {
    pub total: f64,
    pub kl: f64,
    pub recon: f64,
}

impl std::ops::AddAssign for FreeEnergy {
    fn add_assign(&mut self, o: Self) {
        self.total += o.total;
        self.kl += o.kl;
        self.recon += o.recon;
    }
}

impl FreeEnergy {
    fn scaled(self, s: f64) -> Self {
        Self {
            total: self.total * s,
            kl: self.kl * s,
            recon: self.recon * s,
        }
    }
}

pub(crate) fn noise_seed(seed: u64, key: u64) -> u64 {
    // splitmix64 finaliser over the pair
    let mut z = seed ^ key.wrapping_mul(0x9E37_79B9_7F4A_7C15).rotate_left(17);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Standard-normal reparameterisation noise used for sequence `key` under
/// `seed`: `steps × dim` values, step-major.
pub fn episode_noise(seed: u64, key: u64, steps: usize, dim: usize) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(noise_seed(seed, key));
    (0..steps * dim)
        .map(|_| StandardNormal.sample(&mut rng))
        .collect()
}

fn validate_batch(batch: &[Episode], params: &ModelParams) -> Result<()> {
    if batch.is_empty() {
        return Err(Error::Empty("free-energy batch"));
    }
    let arch = params.architecture();
    for ep in batch {
        if ep.frames.is_empty() {
            return Err(Error::Empty("free-energy sequence"));
        }
        for f in ep.frames {
            if f.observation.shape() != arch.observation {
                return Err(Error::Config(format!(
                    "frame {} observation {} does not match model input {}",
                    f.t,
                    f.observation.shape(),
                    arch.observation
                )));
            }
            check_dim("action", arch.action_dim, f.action.dim())?;
        }
    }
    Ok(())
}

/// Mean over the batch of the summed per-step free energy.
pub fn free_energy(batch: &[Episode], params: &ModelParams, seed: u64) -> Result<f64> {
    Ok(free_energy_terms(batch, params, seed)?.total)
}

pub fn free_energy_terms(batch: &[Episode], params: &ModelParams, seed: u64) -> Result<FreeEnergy> {
    validate_batch(batch, params)?;
    let parts: Vec<FreeEnergy> = batch
        .par_iter()
        .map(|ep| SequencePass::run(params, ep, seed).terms)
        .collect();
    let mut sum = FreeEnergy::default();
    for p in parts {
        sum += p;
    }
    Ok(sum.scaled(1.0 / batch.len() as f64))
}

#[derive(Debug, Clone)]
pub struct Gradient {
    pub values: Vec<f64>,
    pub terms: FreeEnergy,
}

/// Exact reverse-mode gradient of [`free_energy`] under the same noise.
pub fn grad_free_energy(batch: &[Episode], params: &ModelParams, seed: u64) -> Result<Gradient> {
    grad_weighted(batch, params, seed, 1.0)
}

/// Gradient of `mean_batch Σ_t [kl_weight · KL + recon]`. The reported terms
/// are always the unweighted free energy.
pub fn grad_weighted(
    batch: &[Episode],
    params: &ModelParams,
    seed: u64,
    kl_weight: f64,
) -> Result<Gradient> {
    validate_batch(batch, params)?;
    let scale = 1.0 / batch.len() as f64;
    // per-sequence gradients reduced in batch order so results do not depend
    // on thread scheduling
    let parts: Vec<(Vec<f64>, FreeEnergy)> = batch
        .par_iter()
        .map(|ep| {
            let pass = SequencePass::run(params, ep, seed);
            let mut g = vec![0.0; params.len()];
            pass.backward(params, scale, kl_weight, &mut g);
            (g, pass.terms)
        })
        .collect();
    let mut values = vec![0.0; params.len()];
    let mut terms = FreeEnergy::default();
    for (g, t) in parts {
        for (a, b) in values.iter_mut().zip(&g) {
            *a += b;
        }
        terms += t;
    }
    Ok(Gradient {
        values,
        terms: terms.scaled(scale),
    })
}

struct Step {
    post: MlpPass,
    prior: MlpPass,
    eps: Vec<f64>,
}

/// Forward pass over one sequence with everything the backward pass needs.
struct SequencePass {
    steps: usize,
    obs: Vec<f64>,
    encoder: EncoderPass,
    recurrent: Vec<Step>,
    samples: Vec<f64>,
    decoder: DecoderPass,
    terms: FreeEnergy,
}

impl SequencePass {
    fn run(params: &ModelParams, ep: &Episode, seed: u64) -> Self {
        let arch = params.architecture();
        let layout = params.layout();
        let v = params.values();
        let d = arch.latent_dim;
        let steps = ep.frames.len();
        let obs: Vec<f64> = ep
            .frames
            .iter()
            .flat_map(|f| f.observation.pixels().iter().copied())
            .collect();
        let encoder = encoder_forward(v, layout, &obs, steps);
        let feats = encoder.features();
        let flen = arch.feature_len();
        let noise = episode_noise(seed, ep.key, steps, d);

        let mut recurrent = Vec::with_capacity(steps);
        let mut samples = Vec::with_capacity(steps * d);
        let mut s_prev = vec![0.0; d];
        let mut kl = 0.0;
        for (t, frame) in ep.frames.iter().enumerate() {
            let a = &frame.action.controls;
            let post_in = [&feats[t * flen..(t + 1) * flen], &s_prev[..], &a[..]].concat();
            let prior_in = [&s_prev[..], &a[..]].concat();
            let post = mlp_forward(v, &layout.posterior, &post_in);
            let prior = mlp_forward(v, &layout.prior, &prior_in);
            kl += kl_terms(&post.mean, &post.std, &prior.mean, &prior.std);
            let eps = noise[t * d..(t + 1) * d].to_vec();
            let s: Vec<f64> = (0..d).map(|i| post.mean[i] + post.std[i] * eps[i]).collect();
            samples.extend_from_slice(&s);
            s_prev = s;
            recurrent.push(Step {
                post,
                prior,
                eps,
            });
        }
        let decoder = decoder_forward(v, layout, &samples, steps);
        let recon = half_sq(&obs, &decoder.image);
        Self {
            steps,
            obs,
            encoder,
            recurrent,
            samples,
            decoder,
            terms: FreeEnergy {
                total: kl + recon,
                kl,
                recon,
            },
        }
    }

    /// Accumulates `scale · ∂(kl_weight·KL + recon)/∂θ` into `grad`.
    fn backward(&self, params: &ModelParams, scale: f64, kl_weight: f64, grad: &mut [f64]) {
        let arch = params.architecture();
        let layout = params.layout();
        let v = params.values();
        let d = arch.latent_dim;
        let n = self.steps;

        // likelihood: dL/dô = ô − o, through the sigmoid
        let mut dy: Vec<f64> = self
            .decoder
            .image
            .iter()
            .zip(&self.obs)
            .map(|(o_hat, o)| scale * (o_hat - o) * o_hat * (1.0 - o_hat))
            .collect();
        for i in (0..layout.decoder.len()).rev() {
            let slot = &layout.decoder[i];
            let input = if i == 0 {
                &self.decoder.fc_out
            } else {
                &self.decoder.acts[i - 1]
            };
            let mut dx = vec![0.0; input.len()];
            let (dw, db) = slot.split_mut(grad);
            layers::deconv_backward(&slot.geom, slot.weight(v), input, &dy, n, dw, db, Some(&mut dx));
            layers::relu_backward(input, &mut dx);
            dy = dx;
        }
        let fc = &layout.decoder_fc;
        let mut ds_all = vec![0.0; n * d];
        {
            let (dw, db) = fc.split_mut(grad);
            layers::dense_backward(
                fc.weight(v),
                &self.samples,
                &dy,
                n,
                fc.fan_in,
                dw,
                db,
                Some(&mut ds_all),
            );
        }

        // recurrent core, back through time
        let flen = arch.feature_len();
        let mut dfeat = vec![0.0; n * flen];
        let mut carry = vec![0.0; d];
        for t in (0..n).rev() {
            let step = &self.recurrent[t];
            let (pq, pp) = (&step.post, &step.prior);
            let mut dmq = vec![0.0; d];
            let mut dsq = vec![0.0; d];
            let mut dmp = vec![0.0; d];
            let mut dsp = vec![0.0; d];
            for i in 0..d {
                let ds = ds_all[t * d + i] + carry[i];
                let diff = pq.mean[i] - pp.mean[i];
                let (sq, sp) = (pq.std[i], pp.std[i]);
                let w = scale * kl_weight;
                dmq[i] = ds + w * diff / (sp * sp);
                dsq[i] = ds * step.eps[i] + w * (sq / (sp * sp) - 1.0 / sq);
                dmp[i] = -w * diff / (sp * sp);
                dsp[i] = w * (1.0 / sp - (sq * sq + diff * diff) / (sp * sp * sp));
            }
            let din_q = mlp_backward(v, &layout.posterior, pq, &dmq, &dsq, grad);
            let din_p = mlp_backward(v, &layout.prior, pp, &dmp, &dsp, grad);
            dfeat[t * flen..(t + 1) * flen].copy_from_slice(&din_q[..flen]);
            for i in 0..d {
                carry[i] = din_q[flen + i] + din_p[i];
            }
        }

        // encoder, batched over the sequence
        let mut dy = dfeat;
        for i in (0..layout.encoder.len()).rev() {
            let slot = &layout.encoder[i];
            layers::relu_backward(&self.encoder.acts[i], &mut dy);
            let (dw, db) = slot.split_mut(grad);
            if i == 0 {
                layers::conv_backward(&slot.geom, slot.weight(v), &self.encoder.cols[0], &dy, n, dw, db, None);
            } else {
                let mut dx = vec![0.0; self.encoder.acts[i - 1].len()];
                layers::conv_backward(
                    &slot.geom,
                    slot.weight(v),
                    &self.encoder.cols[i],
                    &dy,
                    n,
                    dw,
                    db,
                    Some(&mut dx),
                );
                dy = dx;
            }
        }
    }
}

/// Backward through a Gaussian MLP head; returns the gradient w.r.t. its input.
fn mlp_backward(
    v: &[f64],
    mlp: &GaussianMlp,
    pass: &MlpPass,
    dmean: &[f64],
    dstd: &[f64],
    grad: &mut [f64],
) -> Vec<f64> {
    let dpre: Vec<f64> = dstd
        .iter()
        .zip(&pass.pre_std)
        .map(|(g, p)| g * layers::sigmoid(*p))
        .collect();
    let hidden = pass.h2.len();
    let mut dh2 = vec![0.0; hidden];
    let mut tmp = vec![0.0; hidden];
    for (slot, dout) in [(&mlp.mean, dmean), (&mlp.std, &dpre[..])] {
        let (dw, db) = slot.split_mut(grad);
        layers::dense_backward(slot.weight(v), &pass.h2, dout, 1, slot.fan_in, dw, db, Some(&mut tmp));
        for (a, b) in dh2.iter_mut().zip(&tmp) {
            *a += b;
        }
    }
    layers::relu_backward(&pass.h2, &mut dh2);
    let mut dh1 = vec![0.0; pass.h1.len()];
    {
        let (dw, db) = mlp.fc2.split_mut(grad);
        layers::dense_backward(mlp.fc2.weight(v), &pass.h1, &dh2, 1, mlp.fc2.fan_in, dw, db, Some(&mut dh1));
    }
    layers::relu_backward(&pass.h1, &mut dh1);
    let mut din = vec![0.0; pass.input.len()];
    let (dw, db) = mlp.fc1.split_mut(grad);
    layers::dense_backward(mlp.fc1.weight(v), &pass.input, &dh1, 1, mlp.fc1.fan_in, dw, db, Some(&mut din));
    din
}
