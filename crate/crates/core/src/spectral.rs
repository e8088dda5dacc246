//! Frequency transforms and the radial low-pass filter applied to
//! discriminator inputs.
//!
//! Every transform is a separable basis-matrix product (`L X R^T` on each
//! trailing `H x W` plane), which makes them exactly linear and gives the
//! gradient tape their adjoints for free.

use std::f64::consts::{PI, SQRT_2};
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::tensor::SeparableMap;
use crate::tensor::{Graph, Tensor, Var};

/// Orthonormal DCT-II basis, `n x n`, row `u` holds frequency `u`.
pub fn dct_matrix(n: usize) -> Vec<f64> {
    let scale = (2.0 / n as f64).sqrt();
    let mut m = vec![0.0; n * n];
    for u in 0..n {
        let alpha = if u == 0 { 1.0 / SQRT_2 } else { 1.0 };
        for i in 0..n {
            m[u * n + i] = scale * alpha * ((2 * i + 1) as f64 * u as f64 * PI / (2 * n) as f64).cos();
        }
    }
    m
}

fn transpose(n: usize, m: &[f64]) -> Vec<f64> {
    let mut t = vec![0.0; n * n];
    for i in 0..n {
        for j in 0..n {
            t[j * n + i] = m[i * n + j];
        }
    }
    t
}

fn plane_dims(shape: &[usize]) -> Result<(usize, usize)> {
    if shape.len() < 2 {
        return Err(Error::contract(format!(
            "expected at least two (H, W) dims, got {shape:?}"
        )));
    }
    Ok((shape[shape.len() - 2], shape[shape.len() - 1]))
}

/// Forward and inverse 2-D DCT for a fixed plane size.
#[derive(Clone, Debug)]
pub struct DctPlan {
    height: usize,
    width: usize,
    forward: Arc<SeparableMap>,
    inverse: Arc<SeparableMap>,
}

impl DctPlan {
    pub fn new(height: usize, width: usize) -> Result<Self> {
        if height == 0 || width == 0 {
            return Err(Error::contract("DCT of an empty plane"));
        }
        let dh = dct_matrix(height);
        let dw = dct_matrix(width);
        let forward = SeparableMap {
            left: dh.clone(),
            out_rows: height,
            rows: height,
            right: dw.clone(),
            out_cols: width,
            cols: width,
        };
        let inverse = SeparableMap {
            left: transpose(height, &dh),
            out_rows: height,
            rows: height,
            right: transpose(width, &dw),
            out_cols: width,
            cols: width,
        };
        Ok(Self {
            height,
            width,
            forward: Arc::new(forward),
            inverse: Arc::new(inverse),
        })
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn forward(&self, g: &mut Graph, x: Var) -> Result<Var> {
        g.separable(x, self.forward.clone())
    }

    pub fn inverse(&self, g: &mut Graph, x: Var) -> Result<Var> {
        g.separable(x, self.inverse.clone())
    }

    pub fn forward_tensor(&self, x: &Tensor) -> Result<Tensor> {
        let mut g = Graph::new();
        let v = g.constant(x.clone());
        let out = self.forward(&mut g, v)?;
        Ok(g.value(out).clone())
    }

    pub fn inverse_tensor(&self, x: &Tensor) -> Result<Tensor> {
        let mut g = Graph::new();
        let v = g.constant(x.clone());
        let out = self.inverse(&mut g, v)?;
        Ok(g.value(out).clone())
    }
}

/// DCT-II coefficients; `(0, 0)` of each plane is the DC term.
#[derive(Clone, Debug, PartialEq)]
pub struct SpectrumReal(pub Tensor);

/// Unnormalised DFT as separate real and imaginary parts.
#[derive(Clone, Debug, PartialEq)]
pub struct SpectrumComplex {
    pub re: Tensor,
    pub im: Tensor,
}

/// Orthonormal DCT-II of each trailing `H x W` plane (typically `C x H x W`).
pub fn dct2(image: &Tensor) -> Result<SpectrumReal> {
    let (h, w) = plane_dims(image.shape())?;
    Ok(SpectrumReal(DctPlan::new(h, w)?.forward_tensor(image)?))
}

/// Inverse of [`dct2`].
pub fn idct2(spec: &SpectrumReal) -> Result<Tensor> {
    let (h, w) = plane_dims(spec.0.shape())?;
    DctPlan::new(h, w)?.inverse_tensor(&spec.0)
}

/// DFT basis split into cosine and sine parts, optionally with rows
/// reordered so the zero frequency lands at index `n / 2`.
fn dft_parts(n: usize, shifted: bool) -> (Vec<f64>, Vec<f64>) {
    let mut c = vec![0.0; n * n];
    let mut s = vec![0.0; n * n];
    for row in 0..n {
        let u = if shifted { (row + n - n / 2) % n } else { row };
        for i in 0..n {
            // reduce u*i mod n first so the angle stays small
            let theta = 2.0 * PI * ((u * i) % n) as f64 / n as f64;
            c[row * n + i] = theta.cos();
            s[row * n + i] = theta.sin();
        }
    }
    (c, s)
}

/// Real and imaginary parts of the 2-D DFT, `F = (C - jS) X (C - jS)^T`.
#[derive(Clone, Debug)]
pub struct DftPlan {
    height: usize,
    width: usize,
    cc: Arc<SeparableMap>,
    ss: Arc<SeparableMap>,
    sc: Arc<SeparableMap>,
    cs: Arc<SeparableMap>,
}

impl DftPlan {
    /// `shifted` reorders both axes like `fftshift`, putting DC at `(H/2, W/2)`.
    pub fn new(height: usize, width: usize, shifted: bool) -> Result<Self> {
        if height == 0 || width == 0 {
            return Err(Error::contract("DFT of an empty plane"));
        }
        let (ch, sh) = dft_parts(height, shifted);
        let (cw, sw) = dft_parts(width, shifted);
        let map = |l: &Vec<f64>, r: &Vec<f64>| {
            Arc::new(SeparableMap {
                left: l.clone(),
                out_rows: height,
                rows: height,
                right: r.clone(),
                out_cols: width,
                cols: width,
            })
        };
        Ok(Self {
            height,
            width,
            cc: map(&ch, &cw),
            ss: map(&sh, &sw),
            sc: map(&sh, &cw),
            cs: map(&ch, &sw),
        })
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn complex(&self, g: &mut Graph, x: Var) -> Result<(Var, Var)> {
        let cc = g.separable(x, self.cc.clone())?;
        let ss = g.separable(x, self.ss.clone())?;
        let re = g.sub(cc, ss)?;
        let sc = g.separable(x, self.sc.clone())?;
        let cs = g.separable(x, self.cs.clone())?;
        let im = g.add(sc, cs)?;
        let im = g.scale(im, -1.0);
        Ok((re, im))
    }

    /// `|F(u, v)|` per plane.
    pub fn magnitude(&self, g: &mut Graph, x: Var) -> Result<Var> {
        let (re, im) = self.complex(g, x)?;
        let re2 = g.square(re);
        let im2 = g.square(im);
        let p = g.add(re2, im2)?;
        g.sqrt(p)
    }
}

/// Unnormalised forward DFT of each trailing plane.
pub fn dft2(image: &Tensor) -> Result<SpectrumComplex> {
    let (h, w) = plane_dims(image.shape())?;
    let plan = DftPlan::new(h, w, false)?;
    let mut g = Graph::new();
    let x = g.constant(image.clone());
    let (re, im) = plan.complex(&mut g, x)?;
    Ok(SpectrumComplex {
        re: g.value(re).clone(),
        im: g.value(im).clone(),
    })
}

/// Binary radial low-pass mask over DCT coordinates.
#[derive(Clone, Debug, PartialEq)]
pub struct FrequencyMask {
    pub gamma: f64,
    pub height: usize,
    pub width: usize,
    /// row-major `H x W`, entries 0.0 or 1.0
    pub matrix: Vec<f64>,
}

impl FrequencyMask {
    pub fn get(&self, u: usize, v: usize) -> f64 {
        self.matrix[u * self.width + v]
    }

    pub fn is_all_ones(&self) -> bool {
        self.matrix.iter().all(|&m| m == 1.0)
    }

    pub fn kept(&self) -> usize {
        self.matrix.iter().filter(|&&m| m == 1.0).count()
    }
}

/// Keep coordinate `(u, v)` iff `sqrt(u^2 + v^2) <= gamma * sqrt(H^2 + W^2)`.
///
/// Distances equal to the threshold are kept. The comparison is done on
/// squared distances with a relative slack of `1e-12` so that ties such as
/// `gamma = 0.5, H = W = 2, (u, v) = (1, 1)` survive rounding of `gamma^2`.
pub fn build_mask(gamma: f64, height: usize, width: usize) -> Result<FrequencyMask> {
    if !(0.0..=1.0).contains(&gamma) {
        return Err(Error::contract(format!("gamma {gamma} outside [0, 1]")));
    }
    if height == 0 || width == 0 {
        return Err(Error::contract("mask for an empty plane"));
    }
    let limit = gamma * gamma * (height * height + width * width) as f64;
    let slack = limit * 1e-12;
    let mut matrix = vec![0.0; height * width];
    for u in 0..height {
        for v in 0..width {
            let d2 = (u * u + v * v) as f64;
            if d2 <= limit + slack {
                matrix[u * width + v] = 1.0;
            }
        }
    }
    Ok(FrequencyMask {
        gamma,
        height,
        width,
        matrix,
    })
}

/// DCT low-pass filter, `idct2(dct2(x) * M(gamma))`, with the mask shared by
/// every channel. Differentiable when applied on a [`Graph`].
#[derive(Clone, Debug)]
pub struct FDrop {
    plan: DctPlan,
    mask: FrequencyMask,
    mask_values: Arc<Vec<f64>>,
}

impl FDrop {
    pub fn new(gamma: f64, height: usize, width: usize) -> Result<Self> {
        let mask = build_mask(gamma, height, width)?;
        Ok(Self {
            plan: DctPlan::new(height, width)?,
            mask_values: Arc::new(mask.matrix.clone()),
            mask,
        })
    }

    pub fn mask(&self) -> &FrequencyMask {
        &self.mask
    }

    pub fn gamma(&self) -> f64 {
        self.mask.gamma
    }

    /// An all-ones mask returns `x` itself; no transform round trip.
    pub fn apply(&self, g: &mut Graph, x: Var) -> Result<Var> {
        let (h, w) = plane_dims(g.shape(x))?;
        if (h, w) != (self.plan.height, self.plan.width) {
            return Err(Error::shape(format!(
                "F-Drop built for {}x{}, got {h}x{w}",
                self.plan.height, self.plan.width
            )));
        }
        if self.mask.is_all_ones() {
            return Ok(x);
        }
        let spec = self.plan.forward(g, x)?;
        let kept = g.mask_mul(spec, self.mask_values.clone())?;
        self.plan.inverse(g, kept)
    }

    pub fn apply_tensor(&self, x: &Tensor) -> Result<Tensor> {
        let mut g = Graph::new();
        let v = g.constant(x.clone());
        let out = self.apply(&mut g, v)?;
        Ok(g.value(out).clone())
    }
}

/// One-shot [`FDrop`] on a `C x H x W` (or batched) tensor.
pub fn f_drop(image: &Tensor, gamma: f64) -> Result<Tensor> {
    let (h, w) = plane_dims(image.shape())?;
    FDrop::new(gamma, h, w)?.apply_tensor(image)
}
