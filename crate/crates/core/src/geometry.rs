use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Image shape. Pixel data is stored row-major with channels interleaved
/// (HWC), so coordinate `(r, c, ch)` lives at `(r·width + c)·channels + ch`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Geometry {
    pub height: usize,
    pub width: usize,
    pub channels: usize,
}

impl Geometry {
    pub fn new(height: usize, width: usize, channels: usize) -> Result<Self> {
        if height == 0 || width == 0 || channels == 0 {
            return Err(Error::InvalidArgument(format!(
                "image geometry must be positive, got {height}x{width}x{channels}"
            )));
        }
        Ok(Geometry {
            height,
            width,
            channels,
        })
    }

    /// Flat length `d = h·w·c`.
    pub fn len(&self) -> usize {
        self.height * self.width * self.channels
    }

    pub fn pixels(&self) -> usize {
        self.height * self.width
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

impl fmt::Display for Geometry {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}x{}x{}", self.height, self.width, self.channels)
    }
}
