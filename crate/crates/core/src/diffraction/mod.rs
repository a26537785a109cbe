//! Scalar diffraction from exit pupil to image plane.
//!
//! The pupil function `P · exp(i·2π/λ·W)` is zero-padded by
//! [`DiffractionConfig::padding`] and Fourier transformed; the squared modulus
//! is the intensity PSF. Only the rows that hold pupil samples and the columns
//! that fall inside the output crop are transformed, which gives exactly the
//! same numbers as a full 2-D FFT of the padded array.
//!
//! Image-plane sampling of the raw transform is `λ·d / (padding · D)`.

mod cache;
mod grid;
mod resample;

pub use cache::{read_file as read_psf_file, write_file as write_psf_file};
pub use cache::{read_psf_grid, write_psf_grid, PSF_CACHE_MAGIC, PSF_CACHE_VERSION};
pub use grid::{build_psf_grid, PsfEngine, PsfGrid};
pub use resample::{
    resample_psf, resample_psf_onto, rescale_psf, rescale_psf_onto, rescale_psf_to_pitch,
};

use crate::zernike::{PupilGrid, WavefrontMap};
use crate::{Channel, Error, Result};
use num_complex::Complex64;
use rustfft::{Fft, FftPlanner};
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;
use std::sync::Arc;

/// Optics and sampling used to turn wavefronts into PSF kernels.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DiffractionConfig {
    /// Wavelength per R, G, B channel, micrometers.
    pub wavelengths_um: [f64; 3],
    /// Exit pupil to image plane distance, millimeters.
    pub distance_mm: f64,
    pub pupil_diameter_mm: f64,
    /// Pupil samples per side; a power of two.
    pub pupil_samples: usize,
    /// Zero-padding factor of the pupil before the transform.
    pub padding: usize,
    /// Side of the raw PSF crop taken from the transform, in transform
    /// pixels; odd. Airy tails make this much wider than the final kernel
    /// for the crop to keep all but `truncation_limit` of the energy.
    pub crop_size: usize,
    /// Side of every finished PSF kernel in sensor pixels; odd.
    pub kernel_size: usize,
    /// Pitch of the finished kernels, micrometers per pixel. This is the
    /// sensor pitch the kernels are applied at.
    pub pixel_pitch_um: f64,
    /// Amplitude constant `E₀`; drops out after normalization.
    pub illumination: f64,
    /// Largest fraction of energy the crop may discard.
    pub truncation_limit: f64,
    /// Fraction of the kernel half-width the geometric spot of a wavefront
    /// may span before diffraction. Steeper wavefronts are attenuated
    /// uniformly before the transform; the final size is set by the radius
    /// targets anyway. `0` disables attenuation.
    pub slope_budget: f64,
}

impl Default for DiffractionConfig {
    fn default() -> Self {
        DiffractionConfig {
            wavelengths_um: [0.620, 0.550, 0.470],
            distance_mm: 50.0,
            pupil_diameter_mm: 10.0,
            pupil_samples: 128,
            padding: 4,
            crop_size: 255,
            kernel_size: 63,
            pixel_pitch_um: 20.0,
            illumination: 1.0,
            truncation_limit: 0.01,
            slope_budget: 0.5,
        }
    }
}

impl DiffractionConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::Configuration(msg));
        if let Some(l) = self
            .wavelengths_um
            .iter()
            .find(|l| !(**l > 0.0 && l.is_finite()))
        {
            return bad(format!("wavelength {l} must be positive"));
        }
        if !(self.distance_mm > 0.0 && self.distance_mm.is_finite()) {
            return bad(format!("distance {} must be positive", self.distance_mm));
        }
        if !(self.pupil_diameter_mm > 0.0 && self.pupil_diameter_mm.is_finite()) {
            return bad(format!(
                "pupil diameter {} must be positive",
                self.pupil_diameter_mm
            ));
        }
        if self.kernel_size < 3 || self.kernel_size.is_multiple_of(2) {
            return bad(format!(
                "kernel size {} must be odd and >= 3",
                self.kernel_size
            ));
        }
        if !self.pupil_samples.is_power_of_two() || self.pupil_samples < 16 {
            return bad(format!(
                "pupil samples {} must be a power of two >= 16",
                self.pupil_samples
            ));
        }
        if self.pupil_samples < 2 * self.kernel_size {
            return bad(format!(
                "pupil samples {} must be at least twice the kernel size {}",
                self.pupil_samples, self.kernel_size
            ));
        }
        if self.padding == 0 {
            return bad("padding factor must be >= 1".into());
        }
        if self.crop_size < 3 || self.crop_size.is_multiple_of(2) {
            return bad(format!("crop size {} must be odd and >= 3", self.crop_size));
        }
        if self.padding * self.pupil_samples < self.crop_size {
            return bad(format!(
                "padded transform of {} px is smaller than the {} px crop",
                self.padding * self.pupil_samples,
                self.crop_size
            ));
        }
        if !(self.pixel_pitch_um > 0.0 && self.pixel_pitch_um.is_finite()) {
            return bad(format!(
                "pixel pitch {} must be positive",
                self.pixel_pitch_um
            ));
        }
        if !(self.illumination > 0.0 && self.illumination.is_finite()) {
            return bad("illumination must be positive".into());
        }
        if !(self.truncation_limit > 0.0 && self.truncation_limit <= 1.0) {
            return bad(format!(
                "truncation limit {} must be in (0, 1]",
                self.truncation_limit
            ));
        }
        if !(self.slope_budget >= 0.0 && self.slope_budget.is_finite()) {
            return bad("slope budget must be >= 0".into());
        }
        Ok(())
    }

    pub fn wavelength(&self, channel: Channel) -> f64 {
        self.wavelengths_um[channel.index()]
    }

    /// Side of the padded transform.
    pub fn transform_size(&self) -> usize {
        self.padding * self.pupil_samples
    }

    /// Image-plane pitch of the raw transform at wavelength `λ`, micrometers.
    pub fn raw_pitch(&self, wavelength_um: f64) -> f64 {
        wavelength_um * self.distance_mm / (self.padding as f64 * self.pupil_diameter_mm)
    }

    /// Largest wavefront phase slope, radians per unit pupil radius, whose
    /// geometric spot stays within the slope budget. `None` when disabled.
    pub fn max_phase_slope(&self) -> Option<f64> {
        (self.slope_budget > 0.0).then(|| {
            let half = (self.crop_size / 2) as f64;
            self.slope_budget * half * PI / self.padding as f64
        })
    }

    /// Radius of the first dark Airy ring, micrometers.
    pub fn airy_radius(&self, wavelength_um: f64) -> f64 {
        1.22 * wavelength_um * self.distance_mm / self.pupil_diameter_mm
    }
}

/// Complex pupil function sampled on a [`PupilGrid`].
#[derive(Debug, Clone)]
pub struct PupilField {
    grid: PupilGrid,
    wavelength_um: f64,
    values: Vec<Complex64>,
}

impl PupilField {
    pub fn grid(&self) -> &PupilGrid {
        &self.grid
    }

    pub fn wavelength(&self) -> f64 {
        self.wavelength_um
    }

    pub fn values(&self) -> &[Complex64] {
        &self.values
    }

    /// `Σ |P|² / N²`: the fraction of the square the open aperture fills.
    pub fn energy(&self) -> f64 {
        let n = self.grid.size() as f64;
        self.values.iter().map(|v| v.norm_sqr()).sum::<f64>() / (n * n)
    }
}

/// `circ(x', y') · exp(i · 2π/λ · W(x', y'))`.
pub fn pupil_field(wavefront: &WavefrontMap, wavelength_um: f64) -> Result<PupilField> {
    if !(wavelength_um > 0.0 && wavelength_um.is_finite()) {
        return Err(Error::InvalidArgument(format!(
            "wavelength {wavelength_um} must be positive"
        )));
    }
    let grid = wavefront.grid().clone();
    let k0 = 2.0 * PI / wavelength_um;
    let mask = grid.mask();
    let values = wavefront
        .values()
        .iter()
        .zip(mask)
        .map(|(w, inside)| {
            if inside {
                Complex64::from_polar(1.0, k0 * w)
            } else {
                Complex64::new(0.0, 0.0)
            }
        })
        .collect();
    Ok(PupilField {
        grid,
        wavelength_um,
        values,
    })
}

/// Normalized intensity PSF on a square odd-sized pixel grid.
///
/// Weights are row-major with rows along image-plane y; the optical axis is
/// the central pixel.
#[derive(Debug, Clone, PartialEq)]
pub struct PsfKernel {
    size: usize,
    weights: Vec<f64>,
    pitch_um: f64,
    fov_index: usize,
    channel: Channel,
    centroid: (f64, f64),
}

impl PsfKernel {
    /// Builds a kernel from non-negative weights, normalizing them to unit sum.
    pub fn from_weights(size: usize, weights: Vec<f64>, pitch_um: f64) -> Result<Self> {
        if size.is_multiple_of(2) || weights.len() != size * size {
            return Err(Error::ShapeMismatch(format!(
                "{} weights for an odd {size}x{size} kernel",
                weights.len()
            )));
        }
        if !(pitch_um > 0.0 && pitch_um.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "pitch {pitch_um} must be positive"
            )));
        }
        if weights.iter().any(|w| !w.is_finite() || *w < 0.0) {
            return Err(Error::InvalidArgument(
                "kernel weights must be finite and non-negative".into(),
            ));
        }
        let total: f64 = weights.iter().sum();
        if total <= 0.0 {
            return Err(Error::DegenerateInput("kernel has no energy".into()));
        }
        let weights: Vec<f64> = weights.into_iter().map(|w| w / total).collect();
        let centroid = centroid_of(size, &weights);
        Ok(PsfKernel {
            size,
            weights,
            pitch_um,
            fov_index: 0,
            channel: Channel::G,
            centroid,
        })
    }

    /// Rebuilds a kernel from already-normalized weights without touching
    /// them, so cached kernels stay bit-exact.
    pub(crate) fn from_stored(size: usize, weights: Vec<f64>, pitch_um: f64) -> Result<Self> {
        let mut k = Self::from_weights(size, weights.clone(), pitch_um)?;
        k.centroid = centroid_of(size, &weights);
        k.weights = weights;
        Ok(k)
    }

    /// Unit impulse at the central pixel.
    pub fn delta(size: usize, pitch_um: f64) -> Result<Self> {
        let mut w = vec![0.0; size * size];
        if let Some(c) = w.get_mut(size * size / 2) {
            *c = 1.0;
        }
        Self::from_weights(size, w, pitch_um)
    }

    /// Tags the kernel with its grid slot.
    pub fn at_slot(mut self, fov_index: usize, channel: Channel) -> Self {
        self.fov_index = fov_index;
        self.channel = channel;
        self
    }

    pub fn size(&self) -> usize {
        self.size
    }

    pub fn half(&self) -> usize {
        self.size / 2
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn weight(&self, row: usize, col: usize) -> f64 {
        self.weights[row * self.size + col]
    }

    pub fn pitch(&self) -> f64 {
        self.pitch_um
    }

    pub fn fov_index(&self) -> usize {
        self.fov_index
    }

    pub fn channel(&self) -> Channel {
        self.channel
    }

    /// Intensity centroid `(x, y)` in pixels from the central pixel.
    pub fn centroid(&self) -> (f64, f64) {
        self.centroid
    }
}

fn centroid_of(size: usize, weights: &[f64]) -> (f64, f64) {
    let h = (size / 2) as f64;
    let (mut cx, mut cy) = (0.0, 0.0);
    for (k, w) in weights.iter().enumerate() {
        cx += w * ((k % size) as f64 - h);
        cy += w * ((k / size) as f64 - h);
    }
    (cx, cy)
}

/// Intensity second-moment radius about the centroid, micrometers.
pub fn rms_radius(psf: &PsfKernel) -> f64 {
    let size = psf.size;
    let h = (size / 2) as f64;
    let (cx, cy) = psf.centroid;
    let m2: f64 = psf
        .weights
        .iter()
        .enumerate()
        .map(|(k, w)| {
            let dx = (k % size) as f64 - h - cx;
            let dy = (k / size) as f64 - h - cy;
            w * (dx * dx + dy * dy)
        })
        .sum();
    psf.pitch_um * m2.max(0.0).sqrt()
}

/// Forward FFT plan for the padded transform; shareable across threads.
#[derive(Clone)]
pub struct TransformPlan {
    size: usize,
    fft: Arc<dyn Fft<f64>>,
}

impl std::fmt::Debug for TransformPlan {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("TransformPlan")
            .field("size", &self.size)
            .finish()
    }
}

impl TransformPlan {
    pub fn new(size: usize) -> Self {
        let fft = FftPlanner::new().plan_fft_forward(size);
        TransformPlan { size, fft }
    }

    pub fn size(&self) -> usize {
        self.size
    }
}

/// Cropped image-plane intensity together with the total energy of the full
/// plane. Both carry the `E₀²/(M²N²)` normalization, so the total equals
/// `E₀² · Σ|P|²/N²` by Parseval.
#[derive(Debug, Clone)]
pub struct ImagePlane {
    pub size: usize,
    pub intensity: Vec<f64>,
    pub total_energy: f64,
}

impl ImagePlane {
    pub fn crop_energy(&self) -> f64 {
        self.intensity.iter().sum()
    }
}

/// Intensity on the central `crop_size²` pixels of the padded transform.
pub fn image_plane_intensity(
    pupil: &PupilField,
    cfg: &DiffractionConfig,
    plan: &TransformPlan,
) -> Result<ImagePlane> {
    let n = pupil.grid.size();
    let m = cfg.padding * n;
    if plan.size != m {
        return Err(Error::Configuration(format!(
            "transform plan of size {} for a {m}-point padded pupil",
            plan.size
        )));
    }
    if n != cfg.pupil_samples {
        return Err(Error::ShapeMismatch(format!(
            "pupil has {n} samples per side, config expects {}",
            cfg.pupil_samples
        )));
    }
    let k = cfg.crop_size;
    let h = (k / 2) as isize;
    let bin = |offset: isize| -> usize { offset.rem_euclid(m as isize) as usize };

    let mut scratch = vec![Complex64::default(); plan.fft.get_inplace_scratch_len()];
    // rows of the padded array that hold pupil samples
    let mut row_spectra = vec![Complex64::default(); n * m];
    for (r, spectrum) in row_spectra.chunks_exact_mut(m).enumerate() {
        spectrum[..n].copy_from_slice(&pupil.values[r * n..(r + 1) * n]);
        plan.fft.process_with_scratch(spectrum, &mut scratch);
    }
    let scale = cfg.illumination * cfg.illumination / ((m * m) as f64 * (n * n) as f64);
    let mut intensity = vec![0.0; k * k];
    let mut column = vec![Complex64::default(); m];
    for col in 0..k {
        let kx = bin(col as isize - h);
        column.iter_mut().for_each(|c| *c = Complex64::default());
        for r in 0..n {
            column[r] = row_spectra[r * m + kx];
        }
        plan.fft.process_with_scratch(&mut column, &mut scratch);
        for row in 0..k {
            let ky = bin(row as isize - h);
            intensity[row * k + col] = column[ky].norm_sqr() * scale;
        }
    }
    let total_energy = cfg.illumination * cfg.illumination * pupil.energy();
    Ok(ImagePlane {
        size: k,
        intensity,
        total_energy,
    })
}

/// Full `M × M` intensity of the padded transform, zero frequency at index
/// `(0, 0)`. Meant for small grids and energy bookkeeping.
pub fn full_plane_intensity(pupil: &PupilField, cfg: &DiffractionConfig) -> Vec<f64> {
    let n = pupil.grid.size();
    let m = cfg.padding * n;
    let plan = TransformPlan::new(m);
    let mut scratch = vec![Complex64::default(); plan.fft.get_inplace_scratch_len()];
    let mut data = vec![Complex64::default(); m * m];
    for r in 0..n {
        data[r * m..r * m + n].copy_from_slice(&pupil.values[r * n..(r + 1) * n]);
        plan.fft
            .process_with_scratch(&mut data[r * m..(r + 1) * m], &mut scratch);
    }
    let mut column = vec![Complex64::default(); m];
    for c in 0..m {
        for r in 0..m {
            column[r] = data[r * m + c];
        }
        plan.fft.process_with_scratch(&mut column, &mut scratch);
        for r in 0..m {
            data[r * m + c] = column[r];
        }
    }
    let scale = cfg.illumination * cfg.illumination / ((m * m) as f64 * (n * n) as f64);
    data.iter().map(|v| v.norm_sqr() * scale).collect()
}

/// PSF of a pupil: cropped, checked for truncation and normalized to unit
/// sum. The kernel pitch is the raw image-plane pitch at the pupil's
/// wavelength.
pub fn psf_compute(pupil: &PupilField, cfg: &DiffractionConfig) -> Result<PsfKernel> {
    let plan = TransformPlan::new(cfg.transform_size());
    psf_compute_with(pupil, cfg, &plan)
}

/// [`psf_compute`] with a caller-owned transform plan.
pub fn psf_compute_with(
    pupil: &PupilField,
    cfg: &DiffractionConfig,
    plan: &TransformPlan,
) -> Result<PsfKernel> {
    cfg.validate()?;
    let plane = image_plane_intensity(pupil, cfg, plan)?;
    if plane.total_energy <= 0.0 {
        return Err(Error::DegenerateInput("pupil transmits no energy".into()));
    }
    let kept = plane.crop_energy();
    let lost_fraction = (1.0 - kept / plane.total_energy).max(0.0);
    if lost_fraction > cfg.truncation_limit {
        return Err(Error::Truncation {
            lost_fraction,
            limit: cfg.truncation_limit,
        });
    }
    PsfKernel::from_weights(
        plane.size,
        plane.intensity,
        cfg.raw_pitch(pupil.wavelength_um),
    )
}
