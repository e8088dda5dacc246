//! Image sets: two seeded synthetic sources and a directory loader.
//!
//! All sources return `[N, C, S, S]` tensors with values in `[-1, 1]`.

use std::path::{Path, PathBuf};

use image::imageops::FilterType;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::spectral::{build_mask, DctPlan};
use crate::tensor::Tensor;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum DataSource {
    /// sums of a few low-frequency DCT cosines plus mild noise
    #[default]
    SyntheticTextures,
    /// a few Gaussian bumps per image
    SyntheticBlobs,
    ImageDir,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DatasetDescriptor {
    pub source: DataSource,
    pub image_size: usize,
    pub channels: usize,
    /// number of images; for `image-dir` an upper bound (0 loads every file)
    pub count: usize,
    pub seed: u64,
    pub dir_path: Option<PathBuf>,
    /// textures only: cosines are drawn from the DCT coordinates kept by `M(band_limit)`
    pub band_limit: f64,
    /// textures only: standard deviation of the additive Gaussian noise
    pub noise_std: f64,
    /// textures only: cosines per image
    pub terms: usize,
}

impl Default for DatasetDescriptor {
    fn default() -> Self {
        Self {
            source: DataSource::SyntheticTextures,
            image_size: 16,
            channels: 3,
            count: 2000,
            seed: 0,
            dir_path: None,
            band_limit: 0.5,
            noise_std: 0.02,
            terms: 6,
        }
    }
}

impl DatasetDescriptor {
    pub fn image_dir(path: impl Into<PathBuf>, image_size: usize, channels: usize) -> Self {
        Self {
            source: DataSource::ImageDir,
            image_size,
            channels,
            count: 0,
            dir_path: Some(path.into()),
            ..Self::default()
        }
    }
}

pub fn load_dataset(desc: &DatasetDescriptor) -> Result<Tensor> {
    if desc.image_size == 0 || desc.channels == 0 {
        return Err(Error::contract("image_size and channels must be >= 1"));
    }
    match desc.source {
        DataSource::SyntheticTextures => textures(desc),
        DataSource::SyntheticBlobs => blobs(desc),
        DataSource::ImageDir => {
            let dir = desc
                .dir_path
                .as_deref()
                .ok_or_else(|| Error::Config("image-dir source needs dir_path".into()))?;
            load_image_dir(dir, desc.image_size, desc.channels, desc.count)
        }
    }
}

fn check_count(count: usize) -> Result<()> {
    if count == 0 {
        return Err(Error::contract("synthetic dataset with count 0"));
    }
    Ok(())
}

fn textures(desc: &DatasetDescriptor) -> Result<Tensor> {
    check_count(desc.count)?;
    let s = desc.image_size;
    let c = desc.channels;
    let mask = build_mask(desc.band_limit, s, s)?;
    let kept: Vec<usize> = (0..s * s).filter(|&i| mask.matrix[i] == 1.0).collect();
    let plan = DctPlan::new(s, s)?;
    let noise = Normal::new(0.0, desc.noise_std.max(0.0))
        .map_err(|e| Error::Config(format!("noise_std: {e}")))?;
    let mut rng = ChaCha8Rng::seed_from_u64(desc.seed);
    let mut out = Vec::with_capacity(desc.count * c * s * s);
    for _ in 0..desc.count {
        let mut coeffs = vec![0.0; c * s * s];
        for _ in 0..desc.terms.max(1) {
            let at = kept[rng.random_range(0..kept.len())];
            let a: f64 = rng.sample(StandardNormal);
            for ch in 0..c {
                let gain: f64 = rng.random_range(0.5..1.0);
                coeffs[ch * s * s + at] += a * gain;
            }
        }
        let spec = Tensor::new(vec![c, s, s], coeffs)?;
        let img = plan.inverse_tensor(&spec)?;
        let peak = img.data().iter().fold(0.0f64, |m, x| m.max(x.abs()));
        let scale = if peak > 0.0 { 0.9 / peak } else { 0.0 };
        out.extend(img.data().iter().map(|&x| {
            let n = if desc.noise_std > 0.0 { noise.sample(&mut rng) } else { 0.0 };
            (x * scale + n).clamp(-1.0, 1.0)
        }));
    }
    Tensor::new(vec![desc.count, c, s, s], out)
}

fn blobs(desc: &DatasetDescriptor) -> Result<Tensor> {
    check_count(desc.count)?;
    let s = desc.image_size;
    let c = desc.channels;
    let mut rng = ChaCha8Rng::seed_from_u64(desc.seed);
    let mut out = Vec::with_capacity(desc.count * c * s * s);
    for _ in 0..desc.count {
        let mut img = vec![-0.8; c * s * s];
        let n = rng.random_range(1..=3);
        for _ in 0..n {
            let cx = rng.random_range(0.0..s as f64);
            let cy = rng.random_range(0.0..s as f64);
            let sigma = rng.random_range(1.0..(s as f64 / 4.0).max(1.5));
            let amps: Vec<f64> = (0..c).map(|_| rng.random_range(0.5..1.6)).collect();
            for (ch, amp) in amps.iter().enumerate() {
                for i in 0..s {
                    for j in 0..s {
                        let d2 = (i as f64 - cx).powi(2) + (j as f64 - cy).powi(2);
                        img[ch * s * s + i * s + j] += amp * (-d2 / (2.0 * sigma * sigma)).exp();
                    }
                }
            }
        }
        out.extend(img.into_iter().map(|x| x.clamp(-1.0, 1.0)));
    }
    Tensor::new(vec![desc.count, c, s, s], out)
}

fn is_image_file(p: &Path) -> bool {
    matches!(
        p.extension().and_then(|e| e.to_str()).map(|e| e.to_ascii_lowercase()).as_deref(),
        Some("png" | "jpg" | "jpeg")
    )
}

/// Sorted PNG/JPEG files of a directory.
pub fn image_files(dir: &Path) -> Result<Vec<PathBuf>> {
    let rd = std::fs::read_dir(dir).map_err(|e| Error::io(dir, e))?;
    let mut files = Vec::new();
    for entry in rd {
        let p = entry.map_err(|e| Error::io(dir, e))?.path();
        if p.is_file() && is_image_file(&p) {
            files.push(p);
        }
    }
    files.sort();
    Ok(files)
}

/// Decode one file, center-crop to a square, resize and map to `[-1, 1]`.
pub fn load_image(path: &Path, size: usize, channels: usize) -> Result<Tensor> {
    let img = image::open(path).map_err(|e| Error::Ingestion {
        path: path.to_path_buf(),
        reason: e.to_string(),
    })?;
    let side = img.width().min(img.height());
    let x0 = (img.width() - side) / 2;
    let y0 = (img.height() - side) / 2;
    let img = img.crop_imm(x0, y0, side, side);
    let img = if side as usize == size {
        img
    } else {
        img.resize_exact(size as u32, size as u32, FilterType::Triangle)
    };
    let plane = size * size;
    let mut data = vec![0.0; channels * plane];
    match channels {
        1 => {
            for (i, p) in img.to_luma8().pixels().enumerate() {
                data[i] = p.0[0] as f64 / 127.5 - 1.0;
            }
        }
        3 => {
            for (i, p) in img.to_rgb8().pixels().enumerate() {
                for ch in 0..3 {
                    data[ch * plane + i] = p.0[ch] as f64 / 127.5 - 1.0;
                }
            }
        }
        n => return Err(Error::contract(format!("{n} channels unsupported for image files"))),
    }
    Tensor::new(vec![channels, size, size], data)
}

pub fn load_image_dir(dir: &Path, size: usize, channels: usize, limit: usize) -> Result<Tensor> {
    let mut files = image_files(dir)?;
    if files.is_empty() {
        return Err(Error::contract(format!("no images in {}", dir.display())));
    }
    if limit > 0 {
        files.truncate(limit);
    }
    let imgs = files
        .iter()
        .map(|f| load_image(f, size, channels))
        .collect::<Result<Vec<_>>>()?;
    Tensor::stack(&imgs)
}
