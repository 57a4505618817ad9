//! RGB view images and the median filter.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use crate::error::{Error, Result};

/// A three-channel image with values in `[0, 1]`, stored channel-major
/// (`c`, then row, then column).
#[derive(Debug, Clone, PartialEq)]
pub struct ViewImage {
    height: usize,
    width: usize,
    data: Vec<f32>,
}

impl ViewImage {
    pub const CHANNELS: usize = 3;

    pub fn new(height: usize, width: usize, data: Vec<f32>) -> Result<Self> {
        if height == 0 || width == 0 {
            return Err(Error::InvalidImage(format!("empty {height}x{width} image")));
        }
        let expected = Self::CHANNELS * height * width;
        if data.len() != expected {
            return Err(Error::InvalidImage(format!(
                "expected {expected} values, got {}",
                data.len()
            )));
        }
        if let Some(bad) = data.iter().find(|v| !(0.0..=1.0).contains(*v)) {
            return Err(Error::InvalidImage(format!("value {bad} outside [0, 1]")));
        }
        Ok(Self { height, width, data })
    }

    /// Builds an image clamping every value into `[0, 1]`; non-finite values
    /// become 0.
    pub fn from_clamped(height: usize, width: usize, mut data: Vec<f32>) -> Result<Self> {
        for v in &mut data {
            *v = if v.is_finite() { v.clamp(0.0, 1.0) } else { 0.0 };
        }
        Self::new(height, width, data)
    }

    pub fn filled(height: usize, width: usize, value: f32) -> Result<Self> {
        Self::new(height, width, vec![value; Self::CHANNELS * height * width])
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    /// The flattened view, as used for hashing and raw-view similarity.
    pub fn data(&self) -> &[f32] {
        &self.data
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn channel(&self, c: usize) -> &[f32] {
        let plane = self.height * self.width;
        &self.data[c * plane..(c + 1) * plane]
    }

    pub fn get(&self, c: usize, y: usize, x: usize) -> f32 {
        self.data[(c * self.height + y) * self.width + x]
    }

    /// Applies `f` to every value and clamps the result into `[0, 1]`.
    pub fn map_clamped(&self, mut f: impl FnMut(f32) -> f32) -> ViewImage {
        let data = self
            .data
            .iter()
            .map(|&v| {
                let out = f(v);
                if out.is_finite() {
                    out.clamp(0.0, 1.0)
                } else {
                    0.0
                }
            })
            .collect();
        ViewImage {
            height: self.height,
            width: self.width,
            data,
        }
    }

    /// Per-channel 2-D correlation with a separable pair of normalized 1-D
    /// kernels under edge replication.
    pub(crate) fn separable_filter(&self, horizontal: &[f32], vertical: &[f32]) -> ViewImage {
        let (h, w) = (self.height, self.width);
        let hr = (horizontal.len() / 2) as isize;
        let vr = (vertical.len() / 2) as isize;
        let mut out = vec![0.0f32; self.data.len()];
        let mut tmp = vec![0.0f32; h * w];
        for c in 0..Self::CHANNELS {
            let src = self.channel(c);
            for y in 0..h {
                for x in 0..w {
                    let mut acc = 0.0f32;
                    for (i, k) in horizontal.iter().enumerate() {
                        let xx = clamp_index(x as isize + i as isize - hr, w);
                        acc += k * src[y * w + xx];
                    }
                    tmp[y * w + x] = acc;
                }
            }
            let dst = &mut out[c * h * w..(c + 1) * h * w];
            for y in 0..h {
                for x in 0..w {
                    let mut acc = 0.0f32;
                    for (i, k) in vertical.iter().enumerate() {
                        let yy = clamp_index(y as isize + i as isize - vr, h);
                        acc += k * tmp[yy * w + x];
                    }
                    dst[y * w + x] = acc.clamp(0.0, 1.0);
                }
            }
        }
        ViewImage {
            height: h,
            width: w,
            data: out,
        }
    }
}

fn clamp_index(i: isize, len: usize) -> usize {
    i.clamp(0, len as isize - 1) as usize
}

/// Per-channel spatial median over a `kernel`×`kernel` window with edge
/// replication.
pub fn median_filter(img: &ViewImage, kernel: usize) -> Result<ViewImage> {
    let (h, w) = (img.height, img.width);
    if kernel == 0 || kernel.is_multiple_of(2) || kernel > h.min(w) {
        return Err(Error::InvalidKernel {
            kernel,
            height: h,
            width: w,
        });
    }
    if kernel == 1 {
        return Ok(img.clone());
    }
    let r = (kernel / 2) as isize;
    let mut window = Vec::with_capacity(kernel * kernel);
    let mut out = vec![0.0f32; img.data.len()];
    for c in 0..ViewImage::CHANNELS {
        let src = img.channel(c);
        for y in 0..h {
            for x in 0..w {
                window.clear();
                for dy in -r..=r {
                    let yy = clamp_index(y as isize + dy, h);
                    for dx in -r..=r {
                        window.push(src[yy * w + clamp_index(x as isize + dx, w)]);
                    }
                }
                let mid = window.len() / 2;
                let (_, m, _) = window.select_nth_unstable_by(mid, f32::total_cmp);
                out[(c * h + y) * w + x] = *m;
            }
        }
    }
    Ok(ViewImage {
        height: h,
        width: w,
        data: out,
    })
}
