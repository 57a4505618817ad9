//! Visual corruptions, each at severity 1..=5.
//!
//! - speckle: `x * (1 + s * n)` with `n` standard normal
//! - low light: `x * (1 - 0.15 * s)`
//! - defocus: box blur of radius `s`
//! - motion blur: horizontal box kernel of length `2s + 1`
//!
//! Outputs are clamped to `[0, 1]`.

use alloc::format;
use alloc::vec;
use core::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::image::ViewImage;
use crate::rng::Stream;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Corruption {
    Speckle,
    LowLight,
    Defocus,
    MotionBlur,
}

impl Corruption {
    pub const ALL: [Corruption; 4] = [
        Corruption::Speckle,
        Corruption::LowLight,
        Corruption::Defocus,
        Corruption::MotionBlur,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Corruption::Speckle => "speckle",
            Corruption::LowLight => "low_light",
            Corruption::Defocus => "defocus",
            Corruption::MotionBlur => "motion_blur",
        }
    }
}

impl FromStr for Corruption {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Corruption::ALL
            .into_iter()
            .find(|c| c.name() == s)
            .ok_or_else(|| Error::Config(format!("unknown corruption kind {s:?}")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct CorruptionSpec {
    pub kind: Corruption,
    pub severity: u8,
}

pub fn corrupt(img: &ViewImage, kind: Corruption, severity: u8, stream: &mut Stream) -> Result<ViewImage> {
    if !(1..=5).contains(&severity) {
        return Err(Error::Config(format!("severity {severity} outside 1..=5")));
    }
    let s = f32::from(severity);
    Ok(match kind {
        Corruption::Speckle => img.map_clamped(|x| x * (1.0 + s * stream.normal() as f32)),
        Corruption::LowLight => {
            let factor = 1.0 - 0.15 * s;
            img.map_clamped(|x| x * factor)
        }
        Corruption::Defocus => {
            let len = 2 * usize::from(severity) + 1;
            let k = vec![1.0 / len as f32; len];
            img.separable_filter(&k, &k)
        }
        Corruption::MotionBlur => {
            let len = 2 * usize::from(severity) + 1;
            img.separable_filter(&vec![1.0 / len as f32; len], &[1.0])
        }
    })
}
