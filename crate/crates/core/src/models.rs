//! Small DCGAN-style generator and discriminator.
//!
//! Generator: dense `z -> base x 4 x 4`, then stride-2 transposed convs
//! (kernel 4, padding 1, leaky ReLU 0.2) doubling the resolution up to the
//! image size, tanh head. Discriminator: the mirror image with stride-2
//! convs and a dense sigmoid head. No normalisation layers, so samples in a
//! batch never interact.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::spectral::FDrop;
use crate::tensor::{Graph, Tensor, Var};

const LEAK: f64 = 0.2;
const INIT_STD: f64 = 0.02;
const KERNEL: usize = 4;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum GeneratorKind {
    /// transposed-conv upsampling stack
    #[default]
    Dcgan,
    /// a single dense layer straight to pixels
    Linear,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Architecture {
    pub latent_dim: usize,
    pub base_channels: usize,
    pub image_size: usize,
    pub image_channels: usize,
    pub generator: GeneratorKind,
}

impl Default for Architecture {
    fn default() -> Self {
        Self {
            latent_dim: 32,
            base_channels: 8,
            image_size: 16,
            image_channels: 3,
            generator: GeneratorKind::Dcgan,
        }
    }
}

impl Architecture {
    pub fn validate(&self) -> Result<()> {
        if self.latent_dim == 0 || self.image_channels == 0 {
            return Err(Error::contract("latent_dim and image_channels must be >= 1"));
        }
        if self.image_size != 16 && self.image_size != 32 {
            return Err(Error::contract(format!(
                "image_size {} unsupported (16 or 32)",
                self.image_size
            )));
        }
        let min_base = 1 << (self.stages() - 1);
        if self.base_channels < min_base || !self.base_channels.is_multiple_of(min_base) {
            return Err(Error::contract(format!(
                "base_channels {} must be a positive multiple of {min_base}",
                self.base_channels
            )));
        }
        Ok(())
    }

    /// Number of stride-2 stages between 4x4 and the image size.
    pub fn stages(&self) -> usize {
        (self.image_size / 4).trailing_zeros() as usize
    }

    /// Channel widths from the 4x4 feature map outwards: `[base, base/2, ...]`.
    fn widths(&self) -> Vec<usize> {
        (0..self.stages()).map(|i| self.base_channels >> i).collect()
    }

    pub fn image_shape(&self) -> [usize; 3] {
        [self.image_channels, self.image_size, self.image_size]
    }

    pub fn generator_layout(&self) -> Vec<(String, Vec<usize>)> {
        let mut out = Vec::new();
        match self.generator {
            GeneratorKind::Linear => {
                let n = self.image_channels * self.image_size * self.image_size;
                out.push(("g.dense.w".into(), vec![self.latent_dim, n]));
                out.push(("g.dense.b".into(), vec![n]));
            }
            GeneratorKind::Dcgan => {
                let w = self.widths();
                out.push(("g.dense.w".into(), vec![self.latent_dim, w[0] * 16]));
                out.push(("g.dense.b".into(), vec![w[0] * 16]));
                for i in 0..w.len() {
                    let cin = w[i];
                    let cout = w.get(i + 1).copied().unwrap_or(self.image_channels);
                    out.push((format!("g.up{i}.w"), vec![cin, cout, KERNEL, KERNEL]));
                    out.push((format!("g.up{i}.b"), vec![cout]));
                }
            }
        }
        out
    }

    pub fn discriminator_layout(&self) -> Vec<(String, Vec<usize>)> {
        let mut w = self.widths();
        w.reverse();
        let mut out = Vec::new();
        let mut cin = self.image_channels;
        for (i, &cout) in w.iter().enumerate() {
            out.push((format!("d.down{i}.w"), vec![cout, cin, KERNEL, KERNEL]));
            out.push((format!("d.down{i}.b"), vec![cout]));
            cin = cout;
        }
        out.push(("d.dense.w".into(), vec![cin * 16, 1]));
        out.push(("d.dense.b".into(), vec![1]));
        out
    }
}

/// Named parameter tensors in a fixed order.
#[derive(Clone, Debug, PartialEq)]
pub struct ParamSet {
    pub names: Vec<String>,
    pub tensors: Vec<Tensor>,
}

impl ParamSet {
    fn init(layout: Vec<(String, Vec<usize>)>, rng: &mut ChaCha8Rng) -> Self {
        let normal = Normal::new(0.0, INIT_STD).expect("valid std");
        let mut names = Vec::with_capacity(layout.len());
        let mut tensors = Vec::with_capacity(layout.len());
        for (name, shape) in layout {
            let t = if name.ends_with(".b") {
                Tensor::zeros(shape)
            } else {
                let n: usize = shape.iter().product();
                let data = (0..n).map(|_| normal.sample(rng)).collect();
                Tensor::new(shape, data).expect("layout shapes are consistent")
            };
            names.push(name);
            tensors.push(t);
        }
        Self { names, tensors }
    }

    pub fn len(&self) -> usize {
        self.tensors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tensors.is_empty()
    }

    pub fn numel(&self) -> usize {
        self.tensors.iter().map(Tensor::numel).sum()
    }

    /// Place every tensor on the graph, trainable or not.
    pub fn on_graph(&self, g: &mut Graph, trainable: bool) -> Vec<Var> {
        self.tensors
            .iter()
            .map(|t| {
                if trainable {
                    g.param(t.clone())
                } else {
                    g.constant(t.clone())
                }
            })
            .collect()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct GanModel {
    pub arch: Architecture,
    pub seed: u64,
    /// F-Drop threshold in front of the discriminator; 1 means unfiltered.
    pub input_gamma: f64,
    pub gen: ParamSet,
    pub disc: ParamSet,
}

impl GanModel {
    /// Weights ~ N(0, 0.02^2), biases zero. Generator drawn before discriminator.
    pub fn init(arch: Architecture, seed: u64) -> Result<Self> {
        arch.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let gen = ParamSet::init(arch.generator_layout(), &mut rng);
        let disc = ParamSet::init(arch.discriminator_layout(), &mut rng);
        Ok(Self {
            arch,
            seed,
            input_gamma: 1.0,
            gen,
            disc,
        })
    }

    /// Put an F-Drop filter with threshold `gamma` in front of the
    /// discriminator, as used during training.
    pub fn with_input_gamma(mut self, gamma: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&gamma) {
            return Err(Error::contract(format!("input gamma must lie in [0, 1], got {gamma}")));
        }
        self.input_gamma = gamma;
        Ok(self)
    }

    /// Rebuild from stored tensors, checking them against the layout.
    pub fn from_params(
        arch: Architecture,
        seed: u64,
        gen: Vec<Tensor>,
        disc: Vec<Tensor>,
    ) -> Result<Self> {
        arch.validate()?;
        let check = |layout: Vec<(String, Vec<usize>)>, ts: Vec<Tensor>| -> Result<ParamSet> {
            if layout.len() != ts.len() {
                return Err(Error::shape(format!(
                    "expected {} tensors, got {}",
                    layout.len(),
                    ts.len()
                )));
            }
            let mut names = Vec::new();
            for ((name, shape), t) in layout.iter().zip(&ts) {
                if t.shape() != &shape[..] {
                    return Err(Error::shape(format!(
                        "{name}: expected {shape:?}, got {:?}",
                        t.shape()
                    )));
                }
                names.push(name.clone());
            }
            Ok(ParamSet { names, tensors: ts })
        };
        Ok(Self {
            arch,
            seed,
            input_gamma: 1.0,
            gen: check(arch.generator_layout(), gen)?,
            disc: check(arch.discriminator_layout(), disc)?,
        })
    }

    /// `[B, latent]` noise to images in `[-1, 1]`, inference only.
    pub fn generate(&self, z: &Tensor) -> Result<Tensor> {
        let mut g = Graph::new();
        let p = self.gen.on_graph(&mut g, false);
        let z = g.constant(z.clone());
        let out = generator_forward(&mut g, &self.arch, &p, z)?;
        Ok(g.value(out).clone())
    }

    /// `[B, C, H, W]` images to `B` probabilities, inference only. Inputs go
    /// through the model's F-Drop filter first.
    pub fn discriminate(&self, x: &Tensor) -> Result<Tensor> {
        let mut g = Graph::new();
        let p = self.disc.on_graph(&mut g, false);
        let x = if self.input_gamma < 1.0 {
            g.constant(FDrop::new(self.input_gamma, self.arch.image_size, self.arch.image_size)?.apply_tensor(x)?)
        } else {
            g.constant(x.clone())
        };
        let out = discriminator_forward(&mut g, &self.arch, &p, x)?;
        Ok(g.value(out).clone())
    }
}

/// Generator pass on a graph. `params` come from [`ParamSet::on_graph`].
pub fn generator_forward(g: &mut Graph, arch: &Architecture, params: &[Var], z: Var) -> Result<Var> {
    let zs = g.shape(z);
    if zs.len() != 2 || zs[1] != arch.latent_dim {
        return Err(Error::contract(format!(
            "latent batch {zs:?} does not match latent_dim {}",
            arch.latent_dim
        )));
    }
    let batch = zs[0];
    let h = g.matmul(z, params[0])?;
    let h = g.add(h, params[1])?;
    let s = arch.image_size;
    match arch.generator {
        GeneratorKind::Linear => {
            let h = g.reshape(h, &[batch, arch.image_channels, s, s])?;
            Ok(g.tanh(h))
        }
        GeneratorKind::Dcgan => {
            let w = arch.widths();
            let h = g.leaky_relu(h, LEAK);
            let mut h = g.reshape(h, &[batch, w[0], 4, 4])?;
            for i in 0..w.len() {
                let (wi, bi) = (params[2 + 2 * i], params[3 + 2 * i]);
                h = g.conv_transpose2d(h, wi, 2, 1)?;
                h = g.channel_bias(h, bi)?;
                h = if i + 1 < w.len() {
                    g.leaky_relu(h, LEAK)
                } else {
                    g.tanh(h)
                };
            }
            Ok(h)
        }
    }
}

/// Discriminator pass on a graph, returning `B` probabilities.
pub fn discriminator_forward(
    g: &mut Graph,
    arch: &Architecture,
    params: &[Var],
    x: Var,
) -> Result<Var> {
    let logit = discriminator_logits(g, arch, params, x)?;
    Ok(g.sigmoid(logit))
}

/// Discriminator pre-activation, `[B]`; [`discriminator_forward`] is its sigmoid.
pub fn discriminator_logits(
    g: &mut Graph,
    arch: &Architecture,
    params: &[Var],
    x: Var,
) -> Result<Var> {
    let xs = g.shape(x).to_vec();
    if xs.len() != 4 || xs[1..] != arch.image_shape()[..] {
        return Err(Error::shape(format!(
            "discriminator expects [B, {:?}], got {xs:?}",
            arch.image_shape()
        )));
    }
    let batch = xs[0];
    let stages = arch.stages();
    let mut h = x;
    for i in 0..stages {
        h = g.conv2d(h, params[2 * i], 2, 1)?;
        h = g.channel_bias(h, params[2 * i + 1])?;
        h = g.leaky_relu(h, LEAK);
    }
    let flat = g.value(h).numel() / batch;
    let h = g.reshape(h, &[batch, flat])?;
    let logit = g.matmul(h, params[2 * stages])?;
    let logit = g.add(logit, params[2 * stages + 1])?;
    g.reshape(logit, &[batch])
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small() -> Architecture {
        Architecture {
            latent_dim: 4,
            base_channels: 4,
            image_size: 16,
            image_channels: 3,
            generator: GeneratorKind::Dcgan,
        }
    }

    fn noise(b: usize, l: usize, phase: f64) -> Tensor {
        let data = (0..b * l).map(|i| ((i as f64 + phase) * 1.7).sin()).collect();
        Tensor::new(vec![b, l], data).unwrap()
    }

    #[test]
    fn same_seed_same_params() {
        let a = GanModel::init(small(), 7).unwrap();
        let b = GanModel::init(small(), 7).unwrap();
        assert_eq!(a, b);
        let c = GanModel::init(small(), 8).unwrap();
        assert_ne!(a.gen.tensors, c.gen.tensors);
    }

    #[test]
    fn unsupported_size_rejected() {
        let arch = Architecture {
            image_size: 24,
            ..small()
        };
        assert!(matches!(GanModel::init(arch, 0), Err(Error::Contract(_))));
    }

    #[test]
    fn output_shapes_and_ranges() {
        for size in [16, 32] {
            let arch = Architecture {
                image_size: size,
                ..small()
            };
            let m = GanModel::init(arch, 1).unwrap();
            let x = m.generate(&noise(2, 4, 0.0)).unwrap();
            assert_eq!(x.shape(), &[2, 3, size, size]);
            assert!(x.data().iter().all(|v| v.abs() <= 1.0));
            let p = m.discriminate(&x).unwrap();
            assert_eq!(p.shape(), &[2]);
            assert!(p.data().iter().all(|&v| v > 0.0 && v < 1.0));
        }
    }

    #[test]
    fn batch_samples_are_independent() {
        let m = GanModel::init(small(), 3).unwrap();
        let z = noise(2, 4, 0.5);
        let both = m.generate(&z).unwrap();
        let first = m.generate(&z.select0(&[0]).unwrap()).unwrap();
        let second = m.generate(&z.select0(&[1]).unwrap()).unwrap();
        assert_eq!(both.index0(0).unwrap(), first.index0(0).unwrap());
        assert_eq!(both.index0(1).unwrap(), second.index0(0).unwrap());

        let d_both = m.discriminate(&both).unwrap();
        let d_first = m.discriminate(&first).unwrap();
        assert_eq!(d_both.data()[0], d_first.data()[0]);
    }

    #[test]
    fn input_filter_is_part_of_the_discriminator() {
        let plain = GanModel::init(small(), 5).unwrap();
        let filtered = plain.clone().with_input_gamma(0.5).unwrap();
        let x = plain.generate(&noise(2, 4, 0.2)).unwrap();
        let dropped = crate::spectral::f_drop(&x, 0.5).unwrap();
        assert_eq!(filtered.discriminate(&x).unwrap(), plain.discriminate(&dropped).unwrap());
        assert_ne!(filtered.discriminate(&x).unwrap(), plain.discriminate(&x).unwrap());
        assert!(plain.with_input_gamma(1.5).is_err());
    }

    #[test]
    fn latent_mismatch_rejected() {
        let m = GanModel::init(small(), 3).unwrap();
        assert!(matches!(m.generate(&noise(1, 5, 0.0)), Err(Error::Contract(_))));
        let bad = Tensor::zeros(vec![1, 3, 8, 8]);
        assert!(matches!(m.discriminate(&bad), Err(Error::InvalidShape(_))));
    }

    #[test]
    fn linear_generator_shapes() {
        let arch = Architecture {
            generator: GeneratorKind::Linear,
            ..small()
        };
        let m = GanModel::init(arch, 2).unwrap();
        let x = m.generate(&noise(3, 4, 0.0)).unwrap();
        assert_eq!(x.shape(), &[3, 3, 16, 16]);
    }
}
