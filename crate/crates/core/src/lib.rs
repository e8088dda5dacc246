//! Frequency-domain tools for GAN training and evaluation.
//!
//! * [`spectral`]: DCT-II / IDCT / DFT, the radial mask `M(gamma)` and the
//!   differentiable F-Drop low-pass filter for discriminator inputs.
//! * [`objectives`]: adversarial losses, the F-Match family of batch
//!   spectrum regularisers and the spectral-regularisation baseline.
//! * [`models`], [`trainer`]: a small DCGAN-style pair and the training loop.
//! * [`analysis`]: single-Fourier-attack sensitivity maps, the DCT frequency
//!   gap, mean spectra and a linear real/fake probe.
//! * [`data`], [`report`], [`cli`]: datasets, report files and the command
//!   line front end.

pub mod analysis;
pub mod cli;
pub mod container;
pub mod data;
pub mod error;
pub mod models;
pub mod objectives;
pub mod report;
pub mod spectral;
pub mod tensor;
pub mod trainer;

pub use error::{Error, Result};
