//! Straight-line reference evaluator for the latent model.
//!
//! Reads tensors by name and evaluates every layer with direct nested loops,
//! sharing nothing with the library's im2col/GEMM path.

use std::collections::HashMap;
use std::ops::Range;

use latentslam_core::latent::{episode_noise, Episode, ModelParams};

pub struct Reference<'a> {
    p: &'a ModelParams,
    names: HashMap<String, Range<usize>>,
}

fn relu(v: &mut [f64]) {
    for x in v {
        if *x < 0.0 {
            *x = 0.0;
        }
    }
}

impl<'a> Reference<'a> {
    pub fn new(p: &'a ModelParams) -> Self {
        Self {
            p,
            names: p.tensor_names().into_iter().collect(),
        }
    }

    fn t(&self, name: &str) -> &[f64] {
        &self.p.values()[self.names[name].clone()]
    }

    fn dense(&self, prefix: &str, x: &[f64]) -> Vec<f64> {
        let w = self.t(&format!("{prefix}.weight"));
        let b = self.t(&format!("{prefix}.bias"));
        let out = b.len();
        assert_eq!(w.len(), x.len() * out);
        (0..out)
            .map(|o| b[o] + (0..x.len()).map(|i| x[i] * w[i * out + o]).sum::<f64>())
            .collect()
    }

    /// Kernel 4, stride 2, padding 1; weight `[ky][kx][ci][co]`.
    fn conv(&self, prefix: &str, x: &[f64], h: usize, w: usize, cin: usize) -> Vec<f64> {
        let wt = self.t(&format!("{prefix}.weight"));
        let b = self.t(&format!("{prefix}.bias"));
        let cout = b.len();
        let (ho, wo) = (h / 2, w / 2);
        let mut y = vec![0.0; ho * wo * cout];
        for oy in 0..ho {
            for ox in 0..wo {
                for co in 0..cout {
                    let mut acc = b[co];
                    for ky in 0..4 {
                        for kx in 0..4 {
                            let iy = 2 * oy as i64 + ky as i64 - 1;
                            let ix = 2 * ox as i64 + kx as i64 - 1;
                            if iy < 0 || ix < 0 || iy >= h as i64 || ix >= w as i64 {
                                continue;
                            }
                            for ci in 0..cin {
                                acc += x[(iy as usize * w + ix as usize) * cin + ci]
                                    * wt[((ky * 4 + kx) * cin + ci) * cout + co];
                            }
                        }
                    }
                    y[(oy * wo + ox) * cout + co] = acc;
                }
            }
        }
        y
    }

    /// Transposed conv by direct scattering; weight `[ky][kx][co][ci]`.
    fn deconv(&self, prefix: &str, x: &[f64], h: usize, w: usize, cin: usize) -> Vec<f64> {
        let wt = self.t(&format!("{prefix}.weight"));
        let b = self.t(&format!("{prefix}.bias"));
        let cout = b.len();
        let (ho, wo) = (2 * h, 2 * w);
        let mut y = vec![0.0; ho * wo * cout];
        for py in 0..ho {
            for px in 0..wo {
                for co in 0..cout {
                    y[(py * wo + px) * cout + co] = b[co];
                }
            }
        }
        for sy in 0..h {
            for sx in 0..w {
                for ky in 0..4 {
                    for kx in 0..4 {
                        let py = 2 * sy as i64 + ky as i64 - 1;
                        let px = 2 * sx as i64 + kx as i64 - 1;
                        if py < 0 || px < 0 || py >= ho as i64 || px >= wo as i64 {
                            continue;
                        }
                        for co in 0..cout {
                            let mut acc = 0.0;
                            for ci in 0..cin {
                                acc += x[(sy * w + sx) * cin + ci]
                                    * wt[((ky * 4 + kx) * cout + co) * cin + ci];
                            }
                            y[(py as usize * wo + px as usize) * cout + co] += acc;
                        }
                    }
                }
            }
        }
        y
    }

    pub fn features(&self, obs: &[f64]) -> Vec<f64> {
        let arch = self.p.architecture();
        let (mut h, mut w, mut c) = (
            arch.observation.height,
            arch.observation.width,
            arch.observation.channels,
        );
        let mut x = obs.to_vec();
        for (i, &out) in arch.conv_channels.iter().enumerate() {
            x = self.conv(&format!("encoder.conv{i}"), &x, h, w, c);
            relu(&mut x);
            (h, w, c) = (h / 2, w / 2, out);
        }
        x
    }

    fn head(&self, prefix: &str, input: &[f64]) -> (Vec<f64>, Vec<f64>) {
        let mut h1 = self.dense(&format!("{prefix}.fc1"), input);
        relu(&mut h1);
        let mut h2 = self.dense(&format!("{prefix}.fc2"), &h1);
        relu(&mut h2);
        let mean = self.dense(&format!("{prefix}.mean"), &h2);
        let std = self
            .dense(&format!("{prefix}.std"), &h2)
            .into_iter()
            .map(|z| (1.0 + z.exp()).ln() + 1e-4)
            .collect();
        (mean, std)
    }

    pub fn prior(&self, s: &[f64], a: &[f64]) -> (Vec<f64>, Vec<f64>) {
        let input: Vec<f64> = s.iter().chain(a).copied().collect();
        self.head("prior", &input)
    }

    pub fn posterior(&self, s: &[f64], a: &[f64], obs: &[f64]) -> (Vec<f64>, Vec<f64>) {
        let input: Vec<f64> = self
            .features(obs)
            .into_iter()
            .chain(s.iter().copied())
            .chain(a.iter().copied())
            .collect();
        self.head("posterior", &input)
    }

    pub fn decode(&self, s: &[f64]) -> Vec<f64> {
        let arch = self.p.architecture();
        let l = arch.conv_channels.len();
        let (mut h, mut w) = (arch.observation.height >> l, arch.observation.width >> l);
        let mut c = *arch.conv_channels.last().unwrap();
        let mut x = self.dense("decoder.fc", s);
        relu(&mut x);
        let mut outs: Vec<usize> = arch.conv_channels.iter().rev().skip(1).copied().collect();
        outs.push(arch.observation.channels);
        for (i, out) in outs.iter().enumerate() {
            x = self.deconv(&format!("decoder.deconv{i}"), &x, h, w, c);
            if i + 1 == outs.len() {
                x.iter_mut().for_each(|z| *z = 1.0 / (1.0 + (-*z).exp()));
            } else {
                relu(&mut x);
            }
            (h, w, c) = (2 * h, 2 * w, *out);
        }
        x
    }

    /// Sequence-unrolled free energy, mean over the batch.
    pub fn free_energy(&self, batch: &[Episode], seed: u64) -> f64 {
        let d = self.p.architecture().latent_dim;
        let mut total = 0.0;
        for ep in batch {
            let noise = episode_noise(seed, ep.key, ep.frames.len(), d);
            let mut s = vec![0.0; d];
            for (t, f) in ep.frames.iter().enumerate() {
                let a = &f.action.controls;
                let o = f.observation.pixels();
                let (mq, sq) = self.posterior(&s, a, o);
                let (mp, sp) = self.prior(&s, a);
                for i in 0..d {
                    total += (sp[i] / sq[i]).ln()
                        + (sq[i].powi(2) + (mq[i] - mp[i]).powi(2)) / (2.0 * sp[i].powi(2))
                        - 0.5;
                }
                s = (0..d).map(|i| mq[i] + sq[i] * noise[t * d + i]).collect();
                let recon = self.decode(&s);
                total += 0.5 * o.iter().zip(&recon).map(|(x, y)| (x - y).powi(2)).sum::<f64>();
            }
        }
        total / batch.len() as f64
    }
}
