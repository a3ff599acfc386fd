use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const DEFAULT_STE_CLIP: f64 = 1.0;
pub const DEFAULT_SWISH_BETA: f64 = 5.0;

/// Forward pass is always the exact sign; the variants differ only in the
/// surrogate derivative used on the way back.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum QuantizerKind {
    /// Derivative `𝟙{|t| ≤ clip}`.
    SteSign { clip: f64 },
    /// Derivative `β(2 - βt·tanh(βt/2)) / (1 + cosh(βt))`.
    SwishSign { beta: f64 },
}

impl QuantizerKind {
    pub fn ste() -> Self {
        QuantizerKind::SteSign { clip: DEFAULT_STE_CLIP }
    }

    pub fn swish() -> Self {
        QuantizerKind::SwishSign { beta: DEFAULT_SWISH_BETA }
    }

    pub fn name(&self) -> &'static str {
        match self {
            QuantizerKind::SteSign { .. } => "SteSign",
            QuantizerKind::SwishSign { .. } => "SwishSign",
        }
    }

    pub fn validate(&self) -> Result<()> {
        match *self {
            QuantizerKind::SteSign { clip } if !(clip > 0.0) => {
                Err(Error::InvalidArgument(format!("SteSign clip must be > 0, got {clip}")))
            }
            QuantizerKind::SwishSign { beta } if !(beta > 0.0) => {
                Err(Error::InvalidArgument(format!("SwishSign beta must be > 0, got {beta}")))
            }
            _ => Ok(()),
        }
    }

    #[inline]
    pub fn forward(&self, t: f64) -> f64 {
        if t >= 0.0 {
            1.0
        } else {
            -1.0
        }
    }

    #[inline]
    pub fn surrogate_grad(&self, t: f64) -> f64 {
        match *self {
            QuantizerKind::SteSign { clip } => {
                if t.abs() <= clip {
                    1.0
                } else {
                    0.0
                }
            }
            QuantizerKind::SwishSign { beta } => {
                let bt = beta * t;
                // cosh overflows past |βt| ≈ 710, where the derivative is 0.
                if bt.abs() > 700.0 {
                    return 0.0;
                }
                beta * (2.0 - bt * (bt / 2.0).tanh()) / (1.0 + bt.cosh())
            }
        }
    }
}
