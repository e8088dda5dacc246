//! Evaluation tools: single-Fourier-attack sensitivity maps, the DCT
//! frequency gap, mean spectra and a linear real/fake probe.

use std::f64::consts::PI;

use num_complex::Complex64;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::models::GanModel;
use crate::spectral::{build_mask, DctPlan, FrequencyMask};
use crate::tensor::{AdamConfig, AdamState, Graph, Tensor, Var};

/// A single-Fourier-attack perturbation and the largest imaginary part that
/// was dropped when taking its real part.
#[derive(Clone, Debug, PartialEq)]
pub struct SfaDelta {
    pub values: Tensor,
    pub imag_residue: f64,
}

/// `eps * ((1 + j) F_u (x) F_v + (1 - j) F_{H-u} (x) F_{H-v})` with
/// unnormalised rows `F_u[i] = exp(-2 pi j u i / H)`, indices mod `H`.
///
/// The real result equals `2 sqrt(2) eps cos(2 pi (u i + v k) / H - pi / 4)`.
pub fn sfa_delta(u: usize, v: usize, epsilon: f64, size: usize) -> Result<SfaDelta> {
    if size == 0 || u >= size || v >= size {
        return Err(Error::contract(format!(
            "frequency ({u}, {v}) out of range for size {size}"
        )));
    }
    let row = |f: usize| -> Vec<Complex64> {
        (0..size)
            .map(|i| Complex64::from_polar(1.0, -2.0 * PI * ((f * i) % size) as f64 / size as f64))
            .collect()
    };
    let (fu, fv) = (row(u), row(v));
    let (gu, gv) = (row((size - u) % size), row((size - v) % size));
    let a = Complex64::new(epsilon, epsilon);
    let b = Complex64::new(epsilon, -epsilon);
    let mut values = Vec::with_capacity(size * size);
    let mut residue = 0.0f64;
    for i in 0..size {
        for k in 0..size {
            let z = a * fu[i] * fv[k] + b * gu[i] * gv[k];
            residue = residue.max(z.im.abs());
            values.push(z.re);
        }
    }
    Ok(SfaDelta {
        values: Tensor::new(vec![size, size], values)?,
        imag_residue: residue,
    })
}

/// Mean absolute discriminator change per attacked frequency.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SensitivityMap {
    pub size: usize,
    /// row-major `H x H`, index `u * H + v`
    pub values: Vec<f64>,
    pub epsilon: f64,
    pub n_images: usize,
}

impl SensitivityMap {
    pub fn get(&self, u: usize, v: usize) -> f64 {
        self.values[u * self.size + v]
    }

    pub fn max(&self) -> f64 {
        self.values.iter().copied().fold(0.0, f64::max)
    }

    /// Mean over the coordinates whose wrapped radius
    /// `sqrt(min(u, H-u)^2 + min(v, H-v)^2)` is at least `(1 - fraction)`
    /// of the largest such radius.
    pub fn high_band_mean(&self, fraction: f64) -> f64 {
        let h = self.size;
        let r = |u: usize, v: usize| {
            let a = u.min(h - u) as f64;
            let b = v.min(h - v) as f64;
            a.hypot(b)
        };
        let rmax = (0..h * h).map(|i| r(i / h, i % h)).fold(0.0, f64::max);
        let cut = (1.0 - fraction) * rmax;
        let picked: Vec<f64> = (0..h * h)
            .filter(|&i| r(i / h, i % h) >= cut - 1e-12)
            .map(|i| self.values[i])
            .collect();
        picked.iter().sum::<f64>() / picked.len() as f64
    }
}

/// Batch size used for inference-only discriminator calls.
const EVAL_CHUNK: usize = 64;

fn discriminate_chunked(model: &GanModel, images: &Tensor) -> Result<Vec<f64>> {
    let n = images.shape()[0];
    let mut out = Vec::with_capacity(n);
    for start in (0..n).step_by(EVAL_CHUNK) {
        let idx: Vec<usize> = (start..(start + EVAL_CHUNK).min(n)).collect();
        out.extend_from_slice(model.discriminate(&images.select0(&idx)?)?.data());
    }
    Ok(out)
}

/// `|D(x) - D(x + 2 delta(u, v))|` averaged over images, for every `(u, v)`.
///
/// `epsilon` is on the 0..255 pixel scale, so the perturbation applied to
/// images in `[-1, 1]` is twice [`sfa_delta`]. The same perturbation is added
/// to every channel. Frequencies are evaluated in parallel.
pub fn sfa_sensitivity_map(model: &GanModel, images: &Tensor, epsilon: f64) -> Result<SensitivityMap> {
    let (n, h) = match images.shape() {
        &[n, _, h, w] if h == w => (n, h),
        other => {
            return Err(Error::contract(format!(
                "SFA needs square [N, C, H, H] images, got {other:?}"
            )))
        }
    };
    let base = discriminate_chunked(model, images)?;
    let plane = h * h;
    let values = (0..plane)
        .into_par_iter()
        .map(|i| -> Result<f64> {
            let delta = sfa_delta(i / h, i % h, epsilon, h)?;
            let d = delta.values.data();
            let mut x = images.clone();
            for (j, px) in x.data_mut().iter_mut().enumerate() {
                *px += 2.0 * d[j % plane];
            }
            let attacked = discriminate_chunked(model, &x)?;
            let total: f64 = base.iter().zip(&attacked).map(|(a, b)| (a - b).abs()).sum();
            Ok(total / n as f64)
        })
        .collect::<Result<Vec<f64>>>()?;
    Ok(SensitivityMap {
        size: h,
        values,
        epsilon,
        n_images: n,
    })
}

/// Divide every map by the largest value found across all of them.
pub fn normalize_maps(maps: &[SensitivityMap]) -> Vec<Vec<f64>> {
    let m = maps.iter().map(SensitivityMap::max).fold(0.0, f64::max);
    maps.iter()
        .map(|s| s.values.iter().map(|&v| if m > 0.0 { v / m } else { 0.0 }).collect())
        .collect()
}

fn set_dims(images: &Tensor, what: &str) -> Result<[usize; 4]> {
    match images.shape() {
        &[n, c, h, w] => Ok([n, c, h, w]),
        other => Err(Error::contract(format!("{what} must be [N, C, H, W], got {other:?}"))),
    }
}

/// Signed DCT coefficients averaged over a set, `[C, H, W]`.
pub fn mean_dct(images: &Tensor) -> Result<Tensor> {
    let [n, c, h, w] = set_dims(images, "image set")?;
    let plane = c * h * w;
    let mut mean = vec![0.0; plane];
    for img in images.data().chunks_exact(plane) {
        for (m, x) in mean.iter_mut().zip(img) {
            *m += x;
        }
    }
    mean.iter_mut().for_each(|m| *m /= n as f64);
    DctPlan::new(h, w)?.forward_tensor(&Tensor::new(vec![c, h, w], mean)?)
}

/// Mean over all coordinates of `|M * (a - b)|`; the mask, if any, zeroes
/// coefficients but they still count in the mean.
pub fn gap_between_means(a: &Tensor, b: &Tensor, mask: Option<&FrequencyMask>) -> Result<f64> {
    if a.shape() != b.shape() || a.shape().len() != 3 {
        return Err(Error::contract(format!(
            "mean spectra differ: {:?} vs {:?}",
            a.shape(),
            b.shape()
        )));
    }
    let hw = a.shape()[1] * a.shape()[2];
    let total: f64 = a
        .data()
        .iter()
        .zip(b.data())
        .enumerate()
        .map(|(i, (x, y))| {
            let m = mask.map_or(1.0, |m| m.matrix[i % hw]);
            (m * x - m * y).abs()
        })
        .sum();
    Ok(total / a.numel() as f64)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GapReport {
    pub all_band_gap: f64,
    pub lower_band_gap: Option<f64>,
    pub gamma_used: Option<f64>,
    pub n_real: usize,
    pub n_fake: usize,
}

/// Mean absolute difference between the mean DCT spectra of two sets, plus
/// the same quantity after masking both with `M(gamma)` when `gamma` is given.
pub fn frequency_gap(real: &Tensor, fake: &Tensor, gamma: Option<f64>) -> Result<GapReport> {
    let [nr, cr, hr, wr] = set_dims(real, "real set")?;
    let [nf, cf, hf, wf] = set_dims(fake, "fake set")?;
    if (cr, hr, wr) != (cf, hf, wf) {
        return Err(Error::contract(format!(
            "image shapes differ: [{cr}, {hr}, {wr}] vs [{cf}, {hf}, {wf}]"
        )));
    }
    let a = mean_dct(real)?;
    let b = mean_dct(fake)?;
    let lower_band_gap = match gamma {
        Some(g) => Some(gap_between_means(&a, &b, Some(&build_mask(g, hr, wr)?))?),
        None => None,
    };
    Ok(GapReport {
        all_band_gap: gap_between_means(&a, &b, None)?,
        lower_band_gap,
        gamma_used: gamma,
        n_real: nr,
        n_fake: nf,
    })
}

/// Mean magnitude spectrum and its `ln(1 + x)` display copy, both `H x W`.
#[derive(Clone, Debug, PartialEq)]
pub struct MeanSpectrum {
    pub values: Tensor,
    pub display: Tensor,
}

/// `|DCT|` averaged over images and channels.
pub fn mean_spectrum(images: &Tensor) -> Result<MeanSpectrum> {
    let [n, c, h, w] = set_dims(images, "image set")?;
    let spec = DctPlan::new(h, w)?.forward_tensor(images)?;
    let mut acc = vec![0.0; h * w];
    for p in spec.data().chunks_exact(h * w) {
        for (a, x) in acc.iter_mut().zip(p) {
            *a += x.abs();
        }
    }
    let k = (n * c) as f64;
    acc.iter_mut().for_each(|a| *a /= k);
    let values = Tensor::new(vec![h, w], acc)?;
    let display = values.map(f64::ln_1p);
    Ok(MeanSpectrum { values, display })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ProbeDomain {
    Spatial,
    Frequency,
}

impl std::str::FromStr for ProbeDomain {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "spatial" => Ok(ProbeDomain::Spatial),
            "frequency" => Ok(ProbeDomain::Frequency),
            other => Err(Error::Config(format!("unknown probe domain '{other}'"))),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ProbeConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub lr: f64,
    pub train_fraction: f64,
}

impl Default for ProbeConfig {
    fn default() -> Self {
        Self {
            epochs: 100,
            batch_size: 64,
            lr: 1e-3,
            train_fraction: 0.8,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ProbeResult {
    pub domain: ProbeDomain,
    pub train_accuracy: f64,
    pub test_accuracy: f64,
    pub n_train: usize,
    pub n_test: usize,
}

/// Mean binary cross-entropy of a logistic model, `labels` in {0, 1}.
pub fn probe_loss(g: &mut Graph, features: Var, weight: Var, bias: Var, labels: Var) -> Result<Var> {
    let n = g.shape(features)[0];
    let z = g.matmul(features, weight)?;
    let z = g.channel_bias(z, bias)?;
    let z = g.reshape(z, &[n])?;
    let p = g.sigmoid(z);
    let p = g.clamp(p, 1e-12, 1.0 - 1e-12);
    let lp = g.log(p)?;
    let np = g.scale(p, -1.0);
    let q = g.add_scalar(np, 1.0);
    let lq = g.log(q)?;
    // y ln p + (1 - y) ln(1 - p) = y (ln p - ln q) + ln q
    let d = g.sub(lp, lq)?;
    let yd = g.mul(d, labels)?;
    let s = g.add(yd, lq)?;
    let m = g.mean(s);
    Ok(g.scale(m, -1.0))
}

fn features(images: &Tensor, domain: ProbeDomain) -> Result<Tensor> {
    let [n, c, h, w] = set_dims(images, "probe set")?;
    let t = match domain {
        ProbeDomain::Spatial => images.clone(),
        ProbeDomain::Frequency => DctPlan::new(h, w)?.forward_tensor(images)?,
    };
    t.reshape(vec![n, c * h * w])
}

fn split(n: usize, fraction: f64, rng: &mut ChaCha8Rng) -> (Vec<usize>, Vec<usize>) {
    let mut idx: Vec<usize> = (0..n).collect();
    idx.shuffle(rng);
    let k = (n as f64 * fraction).round() as usize;
    let test = idx.split_off(k.min(n));
    (idx, test)
}

/// Train a logistic-regression real/fake classifier on standardised pixels
/// or DCT coefficients and report train and held-out accuracy. Real images
/// are labelled 0, fakes 1.
pub fn fake_detection_probe(
    real: &Tensor,
    fake: &Tensor,
    domain: ProbeDomain,
    split_seed: u64,
    config: &ProbeConfig,
) -> Result<ProbeResult> {
    let [nr, ..] = set_dims(real, "real set")?;
    let [nf, ..] = set_dims(fake, "fake set")?;
    if nr < 20 || nf < 20 {
        return Err(Error::contract(format!("probe needs >= 20 images per class, got {nr} and {nf}")));
    }
    if real.shape()[1..] != fake.shape()[1..] {
        return Err(Error::contract("real and fake image shapes differ"));
    }
    let fr = features(real, domain)?;
    let ff = features(fake, domain)?;
    let d = fr.shape()[1];
    let mut rng = ChaCha8Rng::seed_from_u64(split_seed);
    let (r_train, r_test) = split(nr, config.train_fraction, &mut rng);
    let (f_train, f_test) = split(nf, config.train_fraction, &mut rng);
    if [&r_train, &r_test, &f_train, &f_test].iter().any(|s| s.is_empty()) {
        return Err(Error::contract("degenerate train/test split"));
    }
    let gather = |ri: &[usize], fi: &[usize]| -> Result<(Vec<f64>, Vec<f64>)> {
        let mut x = fr.select0(ri)?.into_data();
        x.extend(ff.select0(fi)?.into_data());
        let mut y = vec![0.0; ri.len()];
        y.extend(std::iter::repeat_n(1.0, fi.len()));
        Ok((x, y))
    };
    let (mut x_train, y_train) = gather(&r_train, &f_train)?;
    let (mut x_test, y_test) = gather(&r_test, &f_test)?;
    let n_train = y_train.len();

    let mut mean = vec![0.0; d];
    let mut std = vec![0.0; d];
    for row in x_train.chunks_exact(d) {
        for (m, x) in mean.iter_mut().zip(row) {
            *m += x;
        }
    }
    mean.iter_mut().for_each(|m| *m /= n_train as f64);
    for row in x_train.chunks_exact(d) {
        for ((s, x), m) in std.iter_mut().zip(row).zip(&mean) {
            *s += (x - m) * (x - m);
        }
    }
    for s in std.iter_mut() {
        *s = (*s / n_train as f64).sqrt();
        if *s < 1e-12 {
            *s = 1.0;
        }
    }
    for x in [&mut x_train, &mut x_test] {
        for row in x.chunks_exact_mut(d) {
            for ((v, m), s) in row.iter_mut().zip(&mean).zip(&std) {
                *v = (*v - m) / s;
            }
        }
    }

    let mut params = vec![Tensor::zeros(vec![d, 1]), Tensor::zeros(vec![1])];
    let mut adam = AdamState::new(
        AdamConfig {
            lr: config.lr,
            beta1: 0.0,
            beta2: 0.9,
            eps: 1e-8,
        },
        &params,
    );
    let mut order: Vec<usize> = (0..n_train).collect();
    for _ in 0..config.epochs {
        order.shuffle(&mut rng);
        for batch in order.chunks(config.batch_size.max(1)) {
            let mut bx = Vec::with_capacity(batch.len() * d);
            let mut by = Vec::with_capacity(batch.len());
            for &i in batch {
                bx.extend_from_slice(&x_train[i * d..(i + 1) * d]);
                by.push(y_train[i]);
            }
            let mut g = Graph::new();
            let xv = g.constant(Tensor::new(vec![batch.len(), d], bx)?);
            let yv = g.constant(Tensor::new(vec![batch.len()], by)?);
            let w = g.param(params[0].clone());
            let b = g.param(params[1].clone());
            let loss = probe_loss(&mut g, xv, w, b, yv)?;
            let grads = g.backward(loss)?;
            adam.step(&mut params, &[grads.wrt(w), grads.wrt(b)])?;
        }
    }

    let accuracy = |x: &[f64], y: &[f64]| -> f64 {
        let w = params[0].data();
        let b = params[1].data()[0];
        let correct = x
            .chunks_exact(d)
            .zip(y)
            .filter(|(row, &label)| {
                let z: f64 = row.iter().zip(w).map(|(a, b)| a * b).sum::<f64>() + b;
                (z > 0.0) == (label == 1.0)
            })
            .count();
        correct as f64 / y.len() as f64
    };
    Ok(ProbeResult {
        domain,
        train_accuracy: accuracy(&x_train, &y_train),
        test_accuracy: accuracy(&x_test, &y_test),
        n_train,
        n_test: y_test.len(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::Architecture;

    #[test]
    fn sfa_examples() {
        let eps = 10.0 / 255.0;
        let d = sfa_delta(0, 0, eps, 5).unwrap();
        assert!(d.values.data().iter().all(|&x| (x - 2.0 * eps).abs() < 1e-12));
        let d = sfa_delta(1, 1, eps, 2).unwrap();
        let want = [2.0 * eps, -2.0 * eps, -2.0 * eps, 2.0 * eps];
        for (a, b) in d.values.data().iter().zip(want) {
            assert!((a - b).abs() < 1e-12);
        }
        assert!(matches!(sfa_delta(3, 0, eps, 3), Err(Error::Contract(_))));
    }

    #[test]
    fn gap_example() {
        let real = Tensor::new(vec![1, 1, 2, 2], vec![1.0, 0.0, 0.0, 0.0]).unwrap();
        let fake = Tensor::zeros(vec![1, 1, 2, 2]);
        let r = frequency_gap(&real, &fake, None).unwrap();
        assert!((r.all_band_gap - 0.5).abs() < 1e-12);
        assert_eq!(frequency_gap(&real, &real, Some(0.5)).unwrap().lower_band_gap, Some(0.0));
        let other = Tensor::zeros(vec![1, 3, 2, 2]);
        assert!(matches!(frequency_gap(&real, &other, None), Err(Error::Contract(_))));
    }

    #[test]
    fn constant_set_spectrum() {
        let s = mean_spectrum(&Tensor::full(vec![2, 3, 4, 4], -0.5)).unwrap();
        assert!((s.values.data()[0] - 2.0).abs() < 1e-12);
        assert!(s.values.data()[1..].iter().all(|x| x.abs() < 1e-12));
        assert!((s.display.data()[0] - 3f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn zero_epsilon_gives_zero_map() {
        let arch = Architecture {
            base_channels: 8,
            ..Architecture::default()
        };
        let m = GanModel::init(arch, 0).unwrap();
        let imgs = Tensor::full(vec![2, 3, 16, 16], 0.1);
        let map = sfa_sensitivity_map(&m, &imgs, 0.0).unwrap();
        assert_eq!(map.values.len(), 256);
        assert!(map.values.iter().all(|&v| v == 0.0));
        let bad = Tensor::zeros(vec![1, 3, 16, 8]);
        assert!(matches!(sfa_sensitivity_map(&m, &bad, 0.1), Err(Error::Contract(_))));
    }

    #[test]
    fn probe_rejects_small_sets() {
        let a = Tensor::zeros(vec![10, 1, 2, 2]);
        let r = fake_detection_probe(&a, &a, ProbeDomain::Spatial, 0, &ProbeConfig::default());
        assert!(matches!(r, Err(Error::Contract(_))));
    }
}
