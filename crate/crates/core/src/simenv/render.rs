//! Deterministic procedural view images.
//!
//! A latent vector weights a fixed bank of low-frequency cosine patterns per
//! channel; the sum goes through a `tanh` squashing around mid-gray. Pattern
//! coordinates are normalized to the unit square, so the same latent gives
//! the same picture at every resolution up to sampling.

use alloc::vec;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::image::ViewImage;

const GAIN: f64 = 1.5;
const GOLDEN: f64 = 0.618_033_988_749_895;

#[derive(Debug, Clone, PartialEq)]
pub struct Renderer {
    resolution: usize,
    latent_dim: usize,
    /// `[k][c][pixel]`
    basis: Vec<f64>,
}

impl Renderer {
    pub fn new(resolution: usize, latent_dim: usize) -> Result<Self> {
        if resolution == 0 || latent_dim == 0 {
            return Err(Error::Config(
                "renderer needs positive resolution and latent size".into(),
            ));
        }
        let plane = resolution * resolution;
        let mut basis = vec![0.0; latent_dim * ViewImage::CHANNELS * plane];
        for k in 0..latent_dim {
            let fx = (k % 5) as f64;
            let fy = ((k / 5) % 5) as f64;
            for c in 0..ViewImage::CHANNELS {
                let phase = core::f64::consts::TAU * libm::fmod(k as f64 * GOLDEN + c as f64 * 0.37, 1.0);
                let off = (k * ViewImage::CHANNELS + c) * plane;
                for y in 0..resolution {
                    let v = (y as f64 + 0.5) / resolution as f64;
                    for x in 0..resolution {
                        let u = (x as f64 + 0.5) / resolution as f64;
                        basis[off + y * resolution + x] = libm::cos(core::f64::consts::PI * (fx * u + fy * v) + phase);
                    }
                }
            }
        }
        Ok(Self {
            resolution,
            latent_dim,
            basis,
        })
    }

    pub fn resolution(&self) -> usize {
        self.resolution
    }

    pub fn latent_dim(&self) -> usize {
        self.latent_dim
    }

    pub fn render(&self, latent: &[f64]) -> Result<ViewImage> {
        if latent.len() != self.latent_dim {
            return Err(Error::Dimension {
                expected: self.latent_dim,
                got: latent.len(),
            });
        }
        let plane = self.resolution * self.resolution;
        let norm = GAIN / libm::sqrt(self.latent_dim as f64);
        let mut acc = vec![0.0f64; ViewImage::CHANNELS * plane];
        for (k, &z) in latent.iter().enumerate() {
            let w = z * norm;
            let bank = &self.basis[k * ViewImage::CHANNELS * plane..(k + 1) * ViewImage::CHANNELS * plane];
            for (a, &b) in acc.iter_mut().zip(bank) {
                *a += w * b;
            }
        }
        let data = acc.into_iter().map(|a| (0.5 + 0.5 * libm::tanh(a)) as f32).collect();
        ViewImage::from_clamped(self.resolution, self.resolution, data)
    }
}

/// One-off rendering; prefer a shared [`Renderer`] in loops.
pub fn render_view(latent: &[f64], resolution: usize) -> Result<ViewImage> {
    Renderer::new(resolution, latent.len())?.render(latent)
}
