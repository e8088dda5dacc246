//! Report files: CSV, JSON, 8-bit PGM/PNG images and the run manifest.

use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// `[-1, 1]` to a byte: `round((x + 1) * 127.5)`, halves away from zero.
pub fn quantize(x: f64) -> u8 {
    ((x + 1.0) * 127.5).round().clamp(0.0, 255.0) as u8
}

/// `[0, max]` to a byte, for maps and spectra.
pub fn quantize_unit(x: f64, max: f64) -> u8 {
    if max > 0.0 {
        (x / max * 255.0).round().clamp(0.0, 255.0) as u8
    } else {
        0
    }
}

pub fn ensure_dir(dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))
}

pub fn write_text(path: &Path, text: &str) -> Result<()> {
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut s = serde_json::to_string_pretty(value)?;
    s.push('\n');
    write_text(path, &s)
}

/// Row-major `H x W` values as CSV, one image row per line.
pub fn write_grid_csv(path: &Path, values: &[f64], width: usize) -> Result<()> {
    let mut s = String::new();
    for row in values.chunks(width) {
        let line: Vec<String> = row.iter().map(|v| v.to_string()).collect();
        s.push_str(&line.join(","));
        s.push('\n');
    }
    write_text(path, &s)
}

/// Binary PGM (P5) of `H x W` values scaled by `max`.
pub fn write_pgm(path: &Path, values: &[f64], height: usize, width: usize, max: f64) -> Result<()> {
    if values.len() != height * width {
        return Err(Error::shape(format!(
            "{} values for a {height}x{width} map",
            values.len()
        )));
    }
    let mut bytes = format!("P5\n{width} {height}\n255\n").into_bytes();
    bytes.extend(values.iter().map(|&v| quantize_unit(v, max)));
    std::fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

fn encode_err(path: &Path, e: image::ImageError) -> Error {
    Error::Io {
        path: path.to_path_buf(),
        source: std::io::Error::other(e),
    }
}

/// One `[C, H, W]` image in `[-1, 1]` as PNG (C = 1 gray, C = 3 RGB).
pub fn write_png(path: &Path, image: &Tensor) -> Result<()> {
    let (c, h, w) = match image.shape() {
        &[c, h, w] if c == 1 || c == 3 => (c, h, w),
        other => return Err(Error::shape(format!("PNG needs [1|3, H, W], got {other:?}"))),
    };
    let plane = h * w;
    let d = image.data();
    if c == 1 {
        let buf: Vec<u8> = d.iter().map(|&x| quantize(x)).collect();
        image::GrayImage::from_raw(w as u32, h as u32, buf)
            .expect("buffer size matches")
            .save(path)
            .map_err(|e| encode_err(path, e))
    } else {
        let buf: Vec<u8> = (0..plane)
            .flat_map(|i| (0..3).map(move |ch| quantize(d[ch * plane + i])))
            .collect();
        image::RgbImage::from_raw(w as u32, h as u32, buf)
            .expect("buffer size matches")
            .save(path)
            .map_err(|e| encode_err(path, e))
    }
}

/// Tile `[N, C, H, W]` images into rows of `cols`, separated by one pixel of
/// black, and return the mosaic as one `[C, H', W']` image.
pub fn image_grid(images: &Tensor, cols: usize) -> Result<Tensor> {
    let (n, c, h, w) = match images.shape() {
        &[n, c, h, w] => (n, c, h, w),
        other => return Err(Error::shape(format!("grid needs [N, C, H, W], got {other:?}"))),
    };
    let cols = cols.clamp(1, n);
    let rows = n.div_ceil(cols);
    let gh = rows * (h + 1) + 1;
    let gw = cols * (w + 1) + 1;
    let mut out = vec![-1.0; c * gh * gw];
    for k in 0..n {
        let (r, q) = (k / cols, k % cols);
        for ch in 0..c {
            for i in 0..h {
                for j in 0..w {
                    let src = ((k * c + ch) * h + i) * w + j;
                    let dst = (ch * gh + r * (h + 1) + 1 + i) * gw + q * (w + 1) + 1 + j;
                    out[dst] = images.data()[src];
                }
            }
        }
    }
    Tensor::new(vec![c, gh, gw], out)
}

/// Record of a completed command. Written last, so its presence marks a
/// finished run.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub command: String,
    pub config: serde_json::Value,
    pub git_describe: String,
    pub outputs: Vec<String>,
    pub started_unix_ms: u128,
    pub finished_unix_ms: u128,
}

pub fn unix_ms() -> u128 {
    SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map(|d| d.as_millis())
        .unwrap_or(0)
}

pub fn git_describe() -> String {
    std::process::Command::new("git")
        .args(["describe", "--always", "--dirty", "--tags"])
        .output()
        .ok()
        .filter(|o| o.status.success())
        .and_then(|o| String::from_utf8(o.stdout).ok())
        .map(|s| s.trim().to_string())
        .filter(|s| !s.is_empty())
        .unwrap_or_else(|| "unknown".into())
}

pub const MANIFEST_FILE: &str = "manifest.json";

impl RunManifest {
    pub fn new(command: &str, config: serde_json::Value, started_unix_ms: u128) -> Self {
        Self {
            command: command.into(),
            config,
            git_describe: git_describe(),
            outputs: Vec::new(),
            started_unix_ms,
            finished_unix_ms: 0,
        }
    }

    pub fn add_output(&mut self, path: &Path, out_dir: &Path) {
        let rel: PathBuf = path.strip_prefix(out_dir).unwrap_or(path).to_path_buf();
        self.outputs.push(rel.display().to_string());
    }

    pub fn write(mut self, out_dir: &Path) -> Result<()> {
        self.finished_unix_ms = unix_ms();
        write_json(&out_dir.join(MANIFEST_FILE), &self)
    }
}
