//! Training losses.
//!
//! Everything here is built on a [`Graph`] so gradients come from the tape;
//! the `*_value` helpers wrap the graph versions for plain evaluation.

use std::cell::Cell;
use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::models::{discriminator_logits, generator_forward, Architecture};
use crate::spectral::{DctPlan, DftPlan, FDrop};
use crate::tensor::{Graph, RadialBins, Tensor, Var};

/// Probabilities are clamped to `[PROB_EPS, 1 - PROB_EPS]` before logs.
pub const PROB_EPS: f64 = 1e-7;
/// Floor added to spectra before normalising them into distributions (MKL).
pub const MKL_FLOOR: f64 = 1e-12;
/// Variance floor under the square root of the batch standard deviation (MSSE).
pub const MSSE_VAR_FLOOR: f64 = 1e-12;
/// Radial profiles are clamped to `[SR_CLAMP, 1 - SR_CLAMP]` before BCE.
pub const SR_CLAMP: f64 = 1e-6;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum MatchTransform {
    #[default]
    Dct,
    /// magnitude of the unnormalised DFT
    Dft,
    /// identity
    Pixel,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum MatchDistance {
    #[default]
    Mse,
    Mae,
    /// KL divergence between spectra normalised to distributions, averaged over channels
    Mkl,
    /// MSE over concatenated batch mean and batch standard deviation
    Msse,
}

/// Transform and distance used by F-Match. Default is (DCT, MSE).
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize, Default)]
#[serde(default, deny_unknown_fields)]
pub struct MatchVariant {
    pub transform: MatchTransform,
    pub distance: MatchDistance,
}

impl MatchVariant {
    pub const ALL_TRANSFORMS: [MatchTransform; 3] =
        [MatchTransform::Dct, MatchTransform::Dft, MatchTransform::Pixel];
    pub const ALL_DISTANCES: [MatchDistance; 4] = [
        MatchDistance::Mse,
        MatchDistance::Mae,
        MatchDistance::Mkl,
        MatchDistance::Msse,
    ];

    pub fn new(transform: MatchTransform, distance: MatchDistance) -> Self {
        Self {
            transform,
            distance,
        }
    }

    /// All twelve transform x distance combinations.
    pub fn all() -> Vec<MatchVariant> {
        Self::ALL_TRANSFORMS
            .iter()
            .flat_map(|&t| Self::ALL_DISTANCES.iter().map(move |&d| Self::new(t, d)))
            .collect()
    }
}

impl fmt::Display for MatchTransform {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            MatchTransform::Dct => "dct",
            MatchTransform::Dft => "dft",
            MatchTransform::Pixel => "pixel",
        })
    }
}

impl FromStr for MatchTransform {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "dct" => Ok(MatchTransform::Dct),
            "dft" => Ok(MatchTransform::Dft),
            "pixel" => Ok(MatchTransform::Pixel),
            other => Err(Error::Config(format!("unknown match transform '{other}'"))),
        }
    }
}

impl fmt::Display for MatchDistance {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            MatchDistance::Mse => "mse",
            MatchDistance::Mae => "mae",
            MatchDistance::Mkl => "mkl",
            MatchDistance::Msse => "msse",
        })
    }
}

impl FromStr for MatchDistance {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "mse" => Ok(MatchDistance::Mse),
            "mae" => Ok(MatchDistance::Mae),
            "mkl" => Ok(MatchDistance::Mkl),
            "msse" => Ok(MatchDistance::Msse),
            other => Err(Error::Config(format!("unknown match distance '{other}'"))),
        }
    }
}

/// Generator regulariser selection.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum Regularizer {
    #[default]
    Fmatch,
    Sr,
    None,
}

impl FromStr for Regularizer {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "fmatch" | "f-match" => Ok(Regularizer::Fmatch),
            "sr" => Ok(Regularizer::Sr),
            "none" => Ok(Regularizer::None),
            other => Err(Error::Config(format!("unknown regularizer '{other}'"))),
        }
    }
}

/// Scalar summary of one evaluation of all objectives.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LossReport {
    pub d_loss: f64,
    pub g_loss_adv: f64,
    pub match_loss: f64,
    pub sr_loss: f64,
    pub lambda: f64,
    pub gamma: f64,
}

impl LossReport {
    /// Adversarial generator loss plus the weighted active regulariser.
    pub fn g_total(&self, regularizer: Regularizer) -> f64 {
        match regularizer {
            Regularizer::Fmatch => self.g_loss_adv + self.lambda * self.match_loss,
            Regularizer::Sr => self.g_loss_adv + self.lambda * self.sr_loss,
            Regularizer::None => self.g_loss_adv,
        }
    }
}

fn check_probabilities(g: &Graph, v: Var, what: &str) -> Result<()> {
    if let Some(p) = g.value(v).data().iter().find(|p| !(0.0..=1.0).contains(*p)) {
        return Err(Error::contract(format!("{what} value {p} outside [0, 1]")));
    }
    Ok(())
}

fn mean_log(g: &mut Graph, p: Var) -> Result<Var> {
    let p = g.clamp(p, PROB_EPS, 1.0 - PROB_EPS);
    let l = g.log(p)?;
    Ok(g.mean(l))
}

fn one_minus(g: &mut Graph, p: Var) -> Var {
    let n = g.scale(p, -1.0);
    g.add_scalar(n, 1.0)
}

/// `-mean log D(real) - mean log(1 - D(fake))`.
pub fn discriminator_loss(g: &mut Graph, d_real: Var, d_fake: Var) -> Result<Var> {
    check_probabilities(g, d_real, "d_real")?;
    check_probabilities(g, d_fake, "d_fake")?;
    let a = mean_log(g, d_real)?;
    let f = g.clamp(d_fake, PROB_EPS, 1.0 - PROB_EPS);
    let q = one_minus(g, f);
    let lq = g.log(q)?;
    let b = g.mean(lq);
    let s = g.add(a, b)?;
    Ok(g.scale(s, -1.0))
}

/// Non-saturating generator loss `-mean log D(fake)`.
pub fn generator_loss_adv(g: &mut Graph, d_fake: Var) -> Result<Var> {
    check_probabilities(g, d_fake, "d_fake")?;
    let m = mean_log(g, d_fake)?;
    Ok(g.scale(m, -1.0))
}

/// [`discriminator_loss`] from logits: `mean softplus(-l_real) + mean softplus(l_fake)`.
///
/// Equal to the probability form wherever its clamp is inactive, and keeps a
/// nonzero gradient when the discriminator saturates.
pub fn discriminator_loss_logits(g: &mut Graph, real_logits: Var, fake_logits: Var) -> Result<Var> {
    let nr = g.scale(real_logits, -1.0);
    let a = g.softplus(nr);
    let a = g.mean(a);
    let b = g.softplus(fake_logits);
    let b = g.mean(b);
    g.add(a, b)
}

/// [`generator_loss_adv`] from logits: `mean softplus(-l_fake)`.
pub fn generator_loss_adv_logits(g: &mut Graph, fake_logits: Var) -> Result<Var> {
    let n = g.scale(fake_logits, -1.0);
    let s = g.softplus(n);
    Ok(g.mean(s))
}

pub fn discriminator_loss_value(d_real: &[f64], d_fake: &[f64]) -> Result<f64> {
    let mut g = Graph::new();
    let r = g.constant(Tensor::new(vec![d_real.len()], d_real.to_vec())?);
    let f = g.constant(Tensor::new(vec![d_fake.len()], d_fake.to_vec())?);
    let l = discriminator_loss(&mut g, r, f)?;
    g.value(l).item()
}

pub fn generator_loss_adv_value(d_fake: &[f64]) -> Result<f64> {
    let mut g = Graph::new();
    let f = g.constant(Tensor::new(vec![d_fake.len()], d_fake.to_vec())?);
    let l = generator_loss_adv(&mut g, f)?;
    g.value(l).item()
}

fn image_batch_dims(shape: &[usize], what: &str) -> Result<[usize; 4]> {
    match shape {
        &[b, c, h, w] => Ok([b, c, h, w]),
        other => Err(Error::contract(format!("{what} must be [B, C, H, W], got {other:?}"))),
    }
}

/// F-Match: distance between batch means of a frequency transform of real
/// and generated images.
#[derive(Clone, Debug)]
pub struct FMatch {
    variant: MatchVariant,
    height: usize,
    width: usize,
    dct: Option<DctPlan>,
    dft: Option<DftPlan>,
}

impl FMatch {
    pub fn new(variant: MatchVariant, height: usize, width: usize) -> Result<Self> {
        let (dct, dft) = match variant.transform {
            MatchTransform::Dct => (Some(DctPlan::new(height, width)?), None),
            MatchTransform::Dft => (None, Some(DftPlan::new(height, width, false)?)),
            MatchTransform::Pixel => (None, None),
        };
        Ok(Self {
            variant,
            height,
            width,
            dct,
            dft,
        })
    }

    pub fn variant(&self) -> MatchVariant {
        self.variant
    }

    fn transform(&self, g: &mut Graph, x: Var) -> Result<Var> {
        match self.variant.transform {
            MatchTransform::Dct => self.dct.as_ref().expect("dct plan").forward(g, x),
            MatchTransform::Dft => self.dft.as_ref().expect("dft plan").magnitude(g, x),
            MatchTransform::Pixel => Ok(x),
        }
    }

    /// Batch mean (and for MSSE, batch std) of the transformed images,
    /// shape `[C, H, W]` or `[2C, H, W]`.
    fn statistic(&self, g: &mut Graph, x: Var) -> Result<Var> {
        let t = self.transform(g, x)?;
        let mean = g.mean_axis(t, 0)?;
        if self.variant.distance != MatchDistance::Msse {
            return Ok(mean);
        }
        let centered = g.sub(t, mean)?;
        let sq = g.square(centered);
        let var = g.mean_axis(sq, 0)?;
        let var = g.add_scalar(var, MSSE_VAR_FLOOR);
        let std = g.sqrt(var)?;
        g.concat(&[mean, std])
    }

    /// Per-channel distributions `(|s| + floor) / sum`, shape `[C, H*W]`.
    fn distribution(&self, g: &mut Graph, s: Var) -> Result<Var> {
        let c = g.shape(s)[0];
        let hw = self.height * self.width;
        let a = g.abs(s);
        let a = g.add_scalar(a, MKL_FLOOR);
        let a = g.reshape(a, &[c, hw])?;
        let m = g.mean_axis(a, 1)?;
        let total = g.scale(m, hw as f64);
        let total = g.reshape(total, &[c, 1])?;
        g.div(a, total)
    }

    pub fn loss(&self, g: &mut Graph, real: Var, fake: Var) -> Result<Var> {
        let [_, cr, hr, wr] = image_batch_dims(g.shape(real), "real batch")?;
        let [_, cf, hf, wf] = image_batch_dims(g.shape(fake), "fake batch")?;
        if (cr, hr, wr) != (cf, hf, wf) || (hr, wr) != (self.height, self.width) {
            return Err(Error::contract(format!(
                "F-Match shapes differ: real [{cr}, {hr}, {wr}] fake [{cf}, {hf}, {wf}]"
            )));
        }
        let sr = self.statistic(g, real)?;
        let sf = self.statistic(g, fake)?;
        match self.variant.distance {
            MatchDistance::Mse | MatchDistance::Msse => {
                let d = g.sub(sr, sf)?;
                let sq = g.square(d);
                Ok(g.mean(sq))
            }
            MatchDistance::Mae => {
                let d = g.sub(sr, sf)?;
                let a = g.abs(d);
                Ok(g.mean(a))
            }
            MatchDistance::Mkl => {
                let p = self.distribution(g, sr)?;
                let q = self.distribution(g, sf)?;
                let lp = g.log(p)?;
                let lq = g.log(q)?;
                let ratio = g.sub(lp, lq)?;
                let terms = g.mul(p, ratio)?;
                let total = g.sum(terms);
                Ok(g.scale(total, 1.0 / cr as f64))
            }
        }
    }
}

pub fn f_match_loss(real: &Tensor, fake: &Tensor, variant: MatchVariant) -> Result<f64> {
    let [_, _, h, w] = image_batch_dims(real.shape(), "real batch")?;
    let fm = FMatch::new(variant, h, w)?;
    let mut g = Graph::new();
    let r = g.constant(real.clone());
    let f = g.constant(fake.clone());
    let l = fm.loss(&mut g, r, f)?;
    g.value(l).item()
}

/// Default center `((H - 1) / 2, (W - 1) / 2)`.
pub fn default_center(height: usize, width: usize) -> (f64, f64) {
    ((height as f64 - 1.0) / 2.0, (width as f64 - 1.0) / 2.0)
}

/// Integer-radius ring layout used by [`azimuthal_integral`].
///
/// Pixels are stably sorted by distance to `center`; every place where the
/// truncated radius changes is a transition. Each output bin spans the pixels
/// between two consecutive transitions, so the innermost and outermost rings
/// are not reported.
pub(crate) fn radial_bins(height: usize, width: usize, center: Option<(f64, f64)>) -> RadialBins {
    let (cx, cy) = center.unwrap_or_else(|| default_center(height, width));
    let radius: Vec<f64> = (0..height * width)
        .map(|p| {
            let (x, y) = ((p / width) as f64, (p % width) as f64);
            (x - cx).hypot(y - cy)
        })
        .collect();
    let mut order: Vec<usize> = (0..radius.len()).collect();
    order.sort_by(|&a, &b| radius[a].total_cmp(&radius[b]));
    let r_int: Vec<i64> = order.iter().map(|&p| radius[p] as i64).collect();
    let transitions: Vec<usize> = (0..r_int.len().saturating_sub(1))
        .filter(|&i| r_int[i + 1] != r_int[i])
        .collect();
    let ranges = transitions
        .windows(2)
        .map(|w| (w[0] + 1, w[1] + 1))
        .collect();
    RadialBins {
        height,
        width,
        order,
        ranges,
    }
}

/// Ring means of a nonnegative `H x W` magnitude map.
pub fn azimuthal_integral(magnitude: &Tensor, center: Option<(f64, f64)>) -> Result<Vec<f64>> {
    let (h, w) = match magnitude.shape() {
        &[h, w] => (h, w),
        other => return Err(Error::contract(format!("expected H x W magnitude, got {other:?}"))),
    };
    if let Some(v) = magnitude.data().iter().find(|v| !(**v >= 0.0)) {
        return Err(Error::contract(format!("negative magnitude {v}")));
    }
    let bins = radial_bins(h, w, center);
    if bins.ranges.is_empty() {
        return Ok(Vec::new());
    }
    let mut g = Graph::new();
    let x = g.constant(magnitude.clone());
    let p = g.radial(x, Arc::new(bins))?;
    Ok(g.value(p).data().to_vec())
}

/// `-mean BCE(target, prediction)` over profile bins, both already in (0, 1).
fn negated_bce(g: &mut Graph, target: Var, prediction: Var) -> Result<Var> {
    let lp = g.log(prediction)?;
    let q = one_minus(g, prediction);
    let lq = g.log(q)?;
    let t1 = g.mul(lp, target)?;
    // (1 - t) ln(1 - p) = ln(1 - p) - t ln(1 - p)
    let tq = g.mul(lq, target)?;
    let t2 = g.sub(lq, tq)?;
    let s = g.add(t1, t2)?;
    // BCE = -mean(s), so the negated BCE is mean(s)
    Ok(g.mean(s))
}

/// Spectral-regularisation baseline: BCE between the radial profile of the
/// batch-mean real DFT magnitude and each fake image's profile, negated.
///
/// Images are reduced to one plane by channel averaging, the DFT magnitude is
/// center-shifted, and each profile is divided by its innermost bin and
/// clamped into `(0, 1)`.
#[derive(Clone, Debug)]
pub struct SpectralReg {
    size: usize,
    dft: DftPlan,
    bins: Arc<RadialBins>,
}

impl SpectralReg {
    pub fn new(size: usize) -> Result<Self> {
        if size < 4 {
            return Err(Error::contract(format!("SR needs images of at least 4x4, got {size}")));
        }
        Ok(Self {
            size,
            dft: DftPlan::new(size, size, true)?,
            bins: Arc::new(radial_bins(size, size, None)),
        })
    }

    fn profiles(&self, g: &mut Graph, x: Var) -> Result<Var> {
        let gray = g.mean_axis(x, 1)?;
        let mag = self.dft.magnitude(g, gray)?;
        g.radial(mag, self.bins.clone())
    }

    fn normalise(&self, g: &mut Graph, profile: Var) -> Result<Var> {
        let first = g.slice_last(profile, 0, 1)?;
        let n = g.div(profile, first)?;
        Ok(g.clamp(n, SR_CLAMP, 1.0 - SR_CLAMP))
    }

    pub fn loss(&self, g: &mut Graph, real: Var, fake: Var) -> Result<Var> {
        let [_, cr, hr, wr] = image_batch_dims(g.shape(real), "real batch")?;
        let [_, cf, hf, wf] = image_batch_dims(g.shape(fake), "fake batch")?;
        if hr != wr || hf != wf {
            return Err(Error::contract(format!("SR needs square images, got {hr}x{wr}")));
        }
        if (cr, hr) != (cf, hf) || hr != self.size {
            return Err(Error::contract("SR real/fake shapes differ"));
        }
        let gray = g.mean_axis(real, 1)?;
        let mag = self.dft.magnitude(g, gray)?;
        let mean_mag = g.mean_axis(mag, 0)?;
        let real_profile = g.radial(mean_mag, self.bins.clone())?;
        let real_profile = self.normalise(g, real_profile)?;
        let fake_profiles = self.profiles(g, fake)?;
        let fake_profiles = self.normalise(g, fake_profiles)?;
        negated_bce(g, real_profile, fake_profiles)
    }
}

pub fn sr_loss(real: &Tensor, fake: &Tensor) -> Result<f64> {
    let [_, _, h, w] = image_batch_dims(real.shape(), "real batch")?;
    if h != w {
        return Err(Error::contract(format!("SR needs square images, got {h}x{w}")));
    }
    let sr = SpectralReg::new(h)?;
    let mut g = Graph::new();
    let r = g.constant(real.clone());
    let f = g.constant(fake.clone());
    let l = sr.loss(&mut g, r, f)?;
    g.value(l).item()
}

/// `-mean_r BCE(target_r, prediction_r)` for ready-made profiles in (0, 1).
/// `predictions` holds one profile per row.
pub fn sr_distance(target: &[f64], predictions: &[Vec<f64>]) -> Result<f64> {
    let rows = predictions.len();
    if rows == 0 || predictions.iter().any(|p| p.len() != target.len()) {
        return Err(Error::contract("profiles must be nonempty and equally long"));
    }
    let mut g = Graph::new();
    let t = g.constant(Tensor::new(vec![target.len()], target.to_vec())?);
    let flat: Vec<f64> = predictions.iter().flatten().copied().collect();
    let p = g.constant(Tensor::new(vec![rows, target.len()], flat)?);
    let l = negated_bce(&mut g, t, p)?;
    g.value(l).item()
}

/// Loss settings shared by the trainer and [`total_losses`].
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LossConfig {
    pub gamma: f64,
    pub lambda: f64,
    pub regularizer: Regularizer,
    pub match_variant: MatchVariant,
}

/// Graph outputs of one generator objective evaluation.
#[derive(Clone, Copy, Debug)]
pub struct GeneratorTerms {
    pub total: Var,
    pub adv: Var,
    pub regularizer: Option<Var>,
}

/// F-Drop on every discriminator input plus the optional generator
/// regulariser, wired for one image size.
pub struct Objectives {
    config: LossConfig,
    drop: FDrop,
    fmatch: Option<FMatch>,
    sr: Option<SpectralReg>,
    drop_calls: Cell<u64>,
}

impl Objectives {
    pub fn new(config: LossConfig, arch: &Architecture) -> Result<Self> {
        if !(config.lambda >= 0.0) {
            return Err(Error::contract(format!("lambda {} must be >= 0", config.lambda)));
        }
        let s = arch.image_size;
        let (fmatch, sr) = match config.regularizer {
            Regularizer::Fmatch => (Some(FMatch::new(config.match_variant, s, s)?), None),
            Regularizer::Sr => (None, Some(SpectralReg::new(s)?)),
            Regularizer::None => (None, None),
        };
        Ok(Self {
            config,
            drop: FDrop::new(config.gamma, s, s)?,
            fmatch,
            sr,
            drop_calls: Cell::new(0),
        })
    }

    pub fn config(&self) -> &LossConfig {
        &self.config
    }

    /// Number of F-Drop applications so far (one per image batch).
    pub fn drop_applications(&self) -> u64 {
        self.drop_calls.get()
    }

    pub fn drop(&self, g: &mut Graph, x: Var) -> Result<Var> {
        self.drop_calls.set(self.drop_calls.get() + 1);
        self.drop.apply(g, x)
    }

    /// Regulariser on raw (unfiltered) fakes, if one is active and `lambda > 0`.
    pub fn regularizer(&self, g: &mut Graph, real: Var, fake: Var) -> Result<Option<Var>> {
        if self.config.lambda == 0.0 {
            return Ok(None);
        }
        match (&self.fmatch, &self.sr) {
            (Some(fm), _) => fm.loss(g, real, fake).map(Some),
            (_, Some(sr)) => sr.loss(g, real, fake).map(Some),
            _ => Ok(None),
        }
    }

    /// `-mean log D(Drop(G(z))) + lambda * reg(real, G(z))`, evaluated from logits.
    pub fn generator_terms(
        &self,
        g: &mut Graph,
        arch: &Architecture,
        gen: &[Var],
        disc: &[Var],
        z: Var,
        real: Var,
    ) -> Result<GeneratorTerms> {
        let fake = generator_forward(g, arch, gen, z)?;
        let reg = self.regularizer(g, real, fake)?;
        let dropped = self.drop(g, fake)?;
        let l = discriminator_logits(g, arch, disc, dropped)?;
        let adv = generator_loss_adv_logits(g, l)?;
        let total = match reg {
            Some(r) => {
                let w = g.scale(r, self.config.lambda);
                g.add(adv, w)?
            }
            None => adv,
        };
        Ok(GeneratorTerms {
            total,
            adv,
            regularizer: reg,
        })
    }

    /// `-mean log D(Drop(real)) - mean log(1 - D(Drop(fake)))`, evaluated from logits.
    pub fn discriminator_terms(
        &self,
        g: &mut Graph,
        arch: &Architecture,
        disc: &[Var],
        real: Var,
        fake: Var,
    ) -> Result<Var> {
        let real_d = self.drop(g, real)?;
        let fake_d = self.drop(g, fake)?;
        let lr = discriminator_logits(g, arch, disc, real_d)?;
        let lf = discriminator_logits(g, arch, disc, fake_d)?;
        discriminator_loss_logits(g, lr, lf)
    }
}

/// Evaluate every objective for a model, a real batch and a noise batch.
pub fn total_losses(
    model: &crate::models::GanModel,
    real: &Tensor,
    z: &Tensor,
    config: LossConfig,
) -> Result<LossReport> {
    let obj = Objectives::new(config, &model.arch)?;
    let mut g = Graph::new();
    let gen = model.gen.on_graph(&mut g, false);
    let disc = model.disc.on_graph(&mut g, false);
    let zv = g.constant(z.clone());
    let rv = g.constant(real.clone());
    let terms = obj.generator_terms(&mut g, &model.arch, &gen, &disc, zv, rv)?;
    let fake = g.constant(model.generate(z)?);
    let d = obj.discriminator_terms(&mut g, &model.arch, &disc, rv, fake)?;
    let reg = terms.regularizer.map(|r| g.value(r).item()).transpose()?.unwrap_or(0.0);
    let (match_loss, sr_loss) = match config.regularizer {
        Regularizer::Fmatch => (reg, 0.0),
        Regularizer::Sr => (0.0, reg),
        Regularizer::None => (0.0, 0.0),
    };
    Ok(LossReport {
        d_loss: g.value(d).item()?,
        g_loss_adv: g.value(terms.adv).item()?,
        match_loss,
        sr_loss,
        lambda: config.lambda,
        gamma: config.gamma,
    })
}
