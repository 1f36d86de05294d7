//! Pixel-erasure masks and the degradation `y = Hx + ε`.
//!
//! `H` is diagonal with a 0/1 main diagonal and is stored as an
//! [`ErasureMask`]. Noise is added on every coordinate, erased or not,
//! unless `noise_on_kept_only` is set. Degraded values are never clipped.

use std::fmt;
use std::path::PathBuf;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::geometry::Geometry;
use crate::numerics::{derive_seed, gaussian_vector, Rng, Vector};

/// Diagonal of a 0/1 erasure operator: `true` keeps the coordinate.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct ErasureMask {
    keep: Vec<bool>,
}

impl ErasureMask {
    pub fn new(keep: Vec<bool>) -> Self {
        ErasureMask { keep }
    }

    pub fn all_kept(d: usize) -> Self {
        ErasureMask {
            keep: vec![true; d],
        }
    }

    pub fn all_erased(d: usize) -> Self {
        ErasureMask {
            keep: vec![false; d],
        }
    }

    /// From 0/1 values; anything else is rejected.
    pub fn from_bits(bits: &[u8]) -> Result<Self> {
        bits.iter()
            .enumerate()
            .map(|(i, &b)| match b {
                0 => Ok(false),
                1 => Ok(true),
                other => Err(Error::InvalidArgument(format!(
                    "mask entry {i} is {other}, expected 0 or 1"
                ))),
            })
            .collect::<Result<Vec<_>>>()
            .map(ErasureMask::new)
    }

    /// Each coordinate kept independently with probability 1/2.
    pub fn bernoulli_half(d: usize, rng: &mut Rng) -> Self {
        ErasureMask {
            keep: (0..d).map(|_| rng.bernoulli(0.5)).collect(),
        }
    }

    pub fn len(&self) -> usize {
        self.keep.len()
    }

    pub fn is_empty(&self) -> bool {
        self.keep.is_empty()
    }

    #[inline]
    pub fn is_kept(&self, i: usize) -> bool {
        self.keep[i]
    }

    pub fn as_slice(&self) -> &[bool] {
        &self.keep
    }

    pub fn bits(&self) -> Vec<u8> {
        self.keep.iter().map(|&k| u8::from(k)).collect()
    }

    pub fn as_vector(&self) -> Vector {
        self.keep
            .iter()
            .map(|&k| if k { 1.0 } else { 0.0 })
            .collect()
    }

    pub fn kept_count(&self) -> usize {
        self.keep.iter().filter(|&&k| k).count()
    }

    pub fn kept_fraction(&self) -> f64 {
        self.kept_count() as f64 / self.len() as f64
    }

    /// Number of coordinates where the two masks disagree.
    pub fn hamming(&self, other: &ErasureMask) -> Result<usize> {
        if self.len() != other.len() {
            return Err(Error::dims("mask length", self.len(), other.len()));
        }
        Ok(self
            .keep
            .iter()
            .zip(&other.keep)
            .filter(|(a, b)| a != b)
            .count())
    }

    /// `H·x`.
    pub fn apply(&self, x: &[f64]) -> Result<Vector> {
        if x.len() != self.len() {
            return Err(Error::dims("mask application", self.len(), x.len()));
        }
        Ok(x.iter()
            .zip(&self.keep)
            .map(|(&v, &k)| if k { v } else { 0.0 })
            .collect())
    }

    /// Replicates a per-pixel mask across `channels` interleaved channels.
    pub fn expand_channels(&self, channels: usize) -> ErasureMask {
        ErasureMask {
            keep: self
                .keep
                .iter()
                .flat_map(|&k| std::iter::repeat_n(k, channels))
                .collect(),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Side {
    Left,
    Right,
    Top,
    Bottom,
}

/// Mask generator families.
#[derive(Clone, Debug, PartialEq)]
pub enum MaskPattern {
    /// Each pixel erased independently with probability `p_erase`.
    UniformRandom { p_erase: f64 },
    /// A centred rectangle covering `fraction` of the image area erased.
    CenterBlock { fraction: f64 },
    /// Horizontal stripes: row `r` erased when `r mod period` falls in the
    /// first `round(duty·period)` rows of the period.
    Stripes { period: usize, duty: f64 },
    /// One half of the image erased.
    Half { side: Side },
    /// A stored mask (see [`crate::io::read_mask`]).
    FromFile(PathBuf),
}

impl MaskPattern {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidArgument(m));
        match self {
            MaskPattern::UniformRandom { p_erase } if !(0.0..=1.0).contains(p_erase) => {
                bad(format!("p_erase must be in [0,1], got {p_erase}"))
            }
            MaskPattern::CenterBlock { fraction } if !(0.0..=1.0).contains(fraction) => {
                bad(format!("block fraction must be in [0,1], got {fraction}"))
            }
            MaskPattern::Stripes { period, duty }
                if *period == 0 || !(0.0..=1.0).contains(duty) =>
            {
                bad(format!("bad stripes period={period} duty={duty}"))
            }
            _ => Ok(()),
        }
    }
}

impl fmt::Display for MaskPattern {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            MaskPattern::UniformRandom { p_erase } => write!(f, "uniform_random:{p_erase}"),
            MaskPattern::CenterBlock { fraction } => write!(f, "center_block:{fraction}"),
            MaskPattern::Stripes { period, duty } => write!(f, "stripes:{period}:{duty}"),
            MaskPattern::Half { side } => {
                let s = match side {
                    Side::Left => "left",
                    Side::Right => "right",
                    Side::Top => "top",
                    Side::Bottom => "bottom",
                };
                write!(f, "half:{s}")
            }
            MaskPattern::FromFile(p) => write!(f, "file:{}", p.display()),
        }
    }
}

/// `uniform_random:P`, `center_block:F`, `stripes:PERIOD:DUTY`,
/// `half:left|right|top|bottom`, `file:PATH`.
impl FromStr for MaskPattern {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let mut parts = s.splitn(2, ':');
        let name = parts.next().unwrap_or_default().trim();
        let rest = parts.next().map(str::trim);
        let num = |v: Option<&str>| -> Result<f64> {
            v.ok_or_else(|| Error::Config(format!("mask pattern '{s}' needs a parameter")))?
                .parse::<f64>()
                .map_err(|_| Error::Config(format!("bad mask parameter in '{s}'")))
        };
        let pattern = match name {
            "uniform_random" | "random" => MaskPattern::UniformRandom {
                p_erase: num(rest)?,
            },
            "center_block" | "block" => MaskPattern::CenterBlock {
                fraction: num(rest)?,
            },
            "stripes" => {
                let (p, d) = rest
                    .and_then(|r| r.split_once(':'))
                    .ok_or_else(|| Error::Config(format!("stripes needs PERIOD:DUTY in '{s}'")))?;
                let period = p
                    .trim()
                    .parse::<usize>()
                    .map_err(|_| Error::Config(format!("bad stripe period in '{s}'")))?;
                MaskPattern::Stripes {
                    period,
                    duty: num(Some(d.trim()))?,
                }
            }
            "half" => MaskPattern::Half {
                side: match rest {
                    Some("left") => Side::Left,
                    Some("right") => Side::Right,
                    Some("top") => Side::Top,
                    Some("bottom") => Side::Bottom,
                    _ => return Err(Error::Config(format!("bad half side in '{s}'"))),
                },
            },
            "file" | "from_file" => MaskPattern::FromFile(PathBuf::from(
                rest.ok_or_else(|| Error::Config("file mask needs a path".into()))?,
            )),
            other => return Err(Error::Config(format!("unknown mask pattern '{other}'"))),
        };
        pattern.validate()?;
        Ok(pattern)
    }
}

/// Builds a mask for images of shape `geometry`. A pixel is kept or erased
/// as a whole, across all its channels.
pub fn generate_mask(
    pattern: &MaskPattern,
    geometry: Geometry,
    rng: &mut Rng,
) -> Result<ErasureMask> {
    pattern.validate()?;
    let (h, w) = (geometry.height, geometry.width);
    let pixel_keep: Vec<bool> = match pattern {
        MaskPattern::UniformRandom { p_erase } => {
            (0..h * w).map(|_| !rng.bernoulli(*p_erase)).collect()
        }
        MaskPattern::CenterBlock { fraction } => {
            let side = fraction.sqrt();
            let bh = (side * h as f64).round() as usize;
            let bw = (side * w as f64).round() as usize;
            let (r0, c0) = ((h - bh) / 2, (w - bw) / 2);
            (0..h * w)
                .map(|i| {
                    let (r, c) = (i / w, i % w);
                    !(r >= r0 && r < r0 + bh && c >= c0 && c < c0 + bw)
                })
                .collect()
        }
        MaskPattern::Stripes { period, duty } => {
            let erased_rows = (duty * *period as f64).round() as usize;
            (0..h * w)
                .map(|i| (i / w) % period >= erased_rows)
                .collect()
        }
        MaskPattern::Half { side } => (0..h * w)
            .map(|i| {
                let (r, c) = (i / w, i % w);
                match side {
                    Side::Left => c >= w / 2,
                    Side::Right => c < w / 2,
                    Side::Top => r >= h / 2,
                    Side::Bottom => r < h / 2,
                }
            })
            .collect(),
        MaskPattern::FromFile(path) => {
            let mask = crate::io::read_mask(path)?;
            return if mask.len() == geometry.len() {
                Ok(mask)
            } else if mask.len() == geometry.pixels() {
                Ok(mask.expand_channels(geometry.channels))
            } else {
                Err(Error::dims("mask file length", geometry.len(), mask.len()))
            };
        }
    };
    Ok(ErasureMask::new(pixel_keep).expand_channels(geometry.channels))
}

/// Degradation operator plus additive Gaussian noise.
#[derive(Clone, Debug, PartialEq)]
pub struct DegradationSpec {
    pub mask: ErasureMask,
    pub sigma_eps: f64,
    pub noise_on_kept_only: bool,
    /// Seeds the noise stream.
    pub seed: u64,
}

impl DegradationSpec {
    pub fn noiseless(mask: ErasureMask) -> Self {
        DegradationSpec {
            mask,
            sigma_eps: 0.0,
            noise_on_kept_only: false,
            seed: 0,
        }
    }

    /// Same operator, noise seed derived for sample `index`.
    pub fn for_sample(&self, index: usize) -> Self {
        DegradationSpec {
            seed: derive_seed(self.seed, index as u64),
            ..self.clone()
        }
    }
}

/// `y_i = mask_i·x_i + ε_i` with `ε ~ N(0, σ²I)`.
pub fn degrade(x: &[f64], spec: &DegradationSpec) -> Result<Vector> {
    if spec.sigma_eps.is_nan() || spec.sigma_eps < 0.0 {
        return Err(Error::InvalidArgument(format!(
            "sigma_eps must be >= 0, got {}",
            spec.sigma_eps
        )));
    }
    let mut y = spec.mask.apply(x)?;
    let noise = gaussian_vector(&mut Rng::new(spec.seed), x.len(), spec.sigma_eps)?;
    for (i, (yi, e)) in y.iter_mut().zip(noise.iter()).enumerate() {
        if !spec.noise_on_kept_only || spec.mask.is_kept(i) {
            *yi += e;
        }
    }
    Ok(y)
}
