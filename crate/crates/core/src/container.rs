//! Flat binary container for named `f64` arrays.
//!
//! Layout: the 8-byte magic `FGCKPT01`, a little-endian `u64` header length,
//! a JSON header, then every tensor's values as little-endian `f64` in header
//! order. Used for model checkpoints and for lossless image sets.

use std::fs;
use std::io::{BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::models::{Architecture, GanModel};
use crate::tensor::Tensor;

const MAGIC: &[u8; 8] = b"FGCKPT01";

pub const KIND_CHECKPOINT: &str = "checkpoint";
pub const KIND_IMAGE_SET: &str = "image_set";

#[derive(Clone, Debug, Serialize, Deserialize)]
struct Entry {
    name: String,
    shape: Vec<usize>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
struct Header {
    kind: String,
    meta: serde_json::Value,
    tensors: Vec<Entry>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Container {
    pub kind: String,
    pub meta: serde_json::Value,
    pub tensors: Vec<(String, Tensor)>,
}

impl Container {
    pub fn get(&self, name: &str) -> Option<&Tensor> {
        self.tensors.iter().find(|(n, _)| n == name).map(|(_, t)| t)
    }
}

pub fn write_container(path: &Path, c: &Container) -> Result<()> {
    let header = Header {
        kind: c.kind.clone(),
        meta: c.meta.clone(),
        tensors: c
            .tensors
            .iter()
            .map(|(name, t)| Entry {
                name: name.clone(),
                shape: t.shape().to_vec(),
            })
            .collect(),
    };
    let json = serde_json::to_vec(&header)?;
    let file = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    let mut put = |bytes: &[u8]| w.write_all(bytes).map_err(|e| Error::io(path, e));
    put(MAGIC)?;
    put(&(json.len() as u64).to_le_bytes())?;
    put(&json)?;
    for (_, t) in &c.tensors {
        for x in t.data() {
            put(&x.to_le_bytes())?;
        }
    }
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn read_container(path: &Path) -> Result<Container> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    let bad = |reason: &str| Error::Ingestion {
        path: path.to_path_buf(),
        reason: reason.to_string(),
    };
    if bytes.len() < 16 || &bytes[..8] != MAGIC {
        return Err(bad("not a freqgan container"));
    }
    let hlen = u64::from_le_bytes(bytes[8..16].try_into().unwrap()) as usize;
    let body = bytes.get(16..).ok_or_else(|| bad("truncated header"))?;
    if body.len() < hlen {
        return Err(bad("truncated header"));
    }
    let header: Header = serde_json::from_slice(&body[..hlen])?;
    let mut data = body[hlen..].chunks_exact(8);
    let mut tensors = Vec::with_capacity(header.tensors.len());
    for e in header.tensors {
        let n: usize = e.shape.iter().product();
        let values: Vec<f64> = data
            .by_ref()
            .take(n)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
            .collect();
        if values.len() != n {
            return Err(bad("truncated tensor data"));
        }
        tensors.push((e.name, Tensor::new(e.shape, values)?));
    }
    if data.next().is_some() || !data.remainder().is_empty() {
        return Err(bad("trailing bytes"));
    }
    Ok(Container {
        kind: header.kind,
        meta: header.meta,
        tensors,
    })
}

#[derive(Serialize, Deserialize)]
struct CheckpointMeta {
    arch: Architecture,
    seed: u64,
    iteration: u64,
    #[serde(default = "unfiltered")]
    input_gamma: f64,
}

fn unfiltered() -> f64 {
    1.0
}

pub fn save_checkpoint(path: &Path, model: &GanModel, iteration: u64) -> Result<()> {
    let meta = CheckpointMeta {
        arch: model.arch,
        seed: model.seed,
        iteration,
        input_gamma: model.input_gamma,
    };
    let tensors = model
        .gen
        .names
        .iter()
        .zip(&model.gen.tensors)
        .chain(model.disc.names.iter().zip(&model.disc.tensors))
        .map(|(n, t)| (n.clone(), t.clone()))
        .collect();
    write_container(
        path,
        &Container {
            kind: KIND_CHECKPOINT.into(),
            meta: serde_json::to_value(meta)?,
            tensors,
        },
    )
}

/// Returns the model and the iteration it was saved at.
pub fn load_checkpoint(path: &Path) -> Result<(GanModel, u64)> {
    let c = read_container(path)?;
    if c.kind != KIND_CHECKPOINT {
        return Err(Error::Ingestion {
            path: path.to_path_buf(),
            reason: format!("expected a checkpoint, found '{}'", c.kind),
        });
    }
    let meta: CheckpointMeta = serde_json::from_value(c.meta)?;
    let n_gen = meta.arch.generator_layout().len();
    let mut ts: Vec<Tensor> = c.tensors.into_iter().map(|(_, t)| t).collect();
    if ts.len() < n_gen {
        return Err(Error::shape("checkpoint has too few tensors"));
    }
    let disc = ts.split_off(n_gen);
    let model = GanModel::from_params(meta.arch, meta.seed, ts, disc)?.with_input_gamma(meta.input_gamma)?;
    Ok((model, meta.iteration))
}

/// Store a `[N, C, H, W]` image batch without quantisation.
pub fn save_image_set(path: &Path, images: &Tensor) -> Result<()> {
    write_container(
        path,
        &Container {
            kind: KIND_IMAGE_SET.into(),
            meta: serde_json::json!({ "count": images.shape().first() }),
            tensors: vec![("images".into(), images.clone())],
        },
    )
}

pub fn load_image_set(path: &Path) -> Result<Tensor> {
    let c = read_container(path)?;
    match (c.kind.as_str(), c.get("images")) {
        (KIND_IMAGE_SET, Some(t)) if t.shape().len() == 4 => Ok(t.clone()),
        _ => Err(Error::Ingestion {
            path: path.to_path_buf(),
            reason: "expected an image set container".into(),
        }),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn checkpoint_roundtrip() {
        let dir = tempfile::tempdir().unwrap();
        let arch = Architecture {
            base_channels: 8,
            ..Architecture::default()
        };
        let m = GanModel::init(arch, 3).unwrap().with_input_gamma(0.8).unwrap();
        let p = dir.path().join("m.ckpt");
        save_checkpoint(&p, &m, 42).unwrap();
        let (back, it) = load_checkpoint(&p).unwrap();
        assert_eq!(it, 42);
        assert_eq!(back, m);
    }

    #[test]
    fn image_set_roundtrip_is_exact() {
        let dir = tempfile::tempdir().unwrap();
        let t = Tensor::new(vec![2, 1, 2, 2], vec![0.1, -0.3, 1.0 / 3.0, 0.0, 1e-300, -1.0, 0.5, 0.25]).unwrap();
        let p = dir.path().join("s.fgimg");
        save_image_set(&p, &t).unwrap();
        assert_eq!(load_image_set(&p).unwrap(), t);
    }

    #[test]
    fn garbage_is_ingestion_error() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("x.bin");
        fs::write(&p, b"hello world, not a container").unwrap();
        assert!(matches!(read_container(&p), Err(Error::Ingestion { .. })));
    }
}
