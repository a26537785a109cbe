//! Virtual prototype lens (VPL) simulation.
//!
//! The crate turns statistical descriptions of minimalist-optics aberrations
//! into concrete lenses, computes their wave-optics point spread functions and
//! applies them to images as a spatially-variant blur. It also carries the
//! small numeric kernels used around that pipeline: the correlation-based
//! distillation loss and mIoU scoring.
//!
//! Module map:
//!
//! * [`zernike`] Noll-indexed Zernike polynomials and wavefront synthesis.
//! * [`diffraction`] pupil function, Fraunhofer PSF, RMS radius, rescaling,
//!   per-lens PSF grids and their binary cache format.
//! * [`vplgen`] level tables and the random lens generator.
//! * [`render`] patch-wise convolution, dataset degradation, checkerboards.
//! * [`distill`] correlation-distillation and Charbonnier losses with gradients.
//! * [`segeval`] confusion matrices and mIoU.
//!
//! With the default `parallel` feature the heavy loops run on rayon; building
//! with `--no-default-features` gives an equivalent sequential build.

pub mod diffraction;
pub mod distill;
mod error;
pub mod par;
pub mod render;
pub mod rng;
pub mod segeval;
pub mod vplgen;
pub mod zernike;

pub use error::{Error, Result};

use serde::{Deserialize, Serialize};
use std::fmt;
use std::str::FromStr;

/// Number of normalized field-of-view bins every lens is described over.
pub const FOV_COUNT: usize = 128;

/// Number of Zernike terms carried per field point.
pub const ZERNIKE_TERMS: usize = 37;

/// Spectral channel of an RGB sensor.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Channel {
    R,
    G,
    B,
}

impl Channel {
    pub const ALL: [Channel; 3] = [Channel::R, Channel::G, Channel::B];

    pub fn index(self) -> usize {
        match self {
            Channel::R => 0,
            Channel::G => 1,
            Channel::B => 2,
        }
    }

    pub fn from_index(i: usize) -> Option<Channel> {
        Channel::ALL.get(i).copied()
    }
}

impl fmt::Display for Channel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            Channel::R => "R",
            Channel::G => "G",
            Channel::B => "B",
        };
        f.write_str(s)
    }
}

/// Aberration behavior of a lens family.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Behavior {
    /// Common simple lens: blur grows with field angle.
    Csl,
    /// Hybrid refractive-diffractive lens: blur roughly uniform over the field.
    Hrdl,
}

impl Behavior {
    /// Level-id prefix (`C` or `H`).
    pub fn prefix(self) -> char {
        match self {
            Behavior::Csl => 'C',
            Behavior::Hrdl => 'H',
        }
    }
}

impl fmt::Display for Behavior {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Behavior::Csl => "csl",
            Behavior::Hrdl => "hrdl",
        })
    }
}

impl FromStr for Behavior {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "csl" | "c" => Ok(Behavior::Csl),
            "hrdl" | "h" => Ok(Behavior::Hrdl),
            other => Err(Error::Lookup(format!("unknown behavior `{other}`"))),
        }
    }
}
