use super::{
    image_plane_intensity, psf_compute_with, pupil_field, resample_psf, rescale_psf_onto,
    rms_radius, DiffractionConfig, PsfKernel, TransformPlan,
};
use crate::vplgen::VplSample;
use crate::zernike::{PupilGrid, WavefrontMap, ZernikeBasis};
use crate::{Channel, Error, Result, FOV_COUNT, ZERNIKE_TERMS};
use std::f64::consts::PI;

/// PSF kernels of one lens for every field bin and channel.
#[derive(Debug, Clone, PartialEq)]
pub struct PsfGrid {
    source: String,
    config: DiffractionConfig,
    /// Field-major: `kernels[fov * 3 + channel]`.
    kernels: Vec<PsfKernel>,
}

impl PsfGrid {
    pub const SLOTS: usize = FOV_COUNT * 3;

    pub fn new(source: String, config: DiffractionConfig, kernels: Vec<PsfKernel>) -> Result<Self> {
        if kernels.len() != Self::SLOTS {
            return Err(Error::ShapeMismatch(format!(
                "PSF grid needs {} kernels, got {}",
                Self::SLOTS,
                kernels.len()
            )));
        }
        let (size, pitch) = (kernels[0].size(), kernels[0].pitch());
        for (i, k) in kernels.iter().enumerate() {
            if k.size() != size || k.pitch() != pitch {
                return Err(Error::ShapeMismatch(
                    "all kernels of a grid must share size and pitch".into(),
                ));
            }
            if k.fov_index() != i / 3 || k.channel().index() != i % 3 {
                return Err(Error::ShapeMismatch(format!(
                    "kernel {i} is tagged fov {} channel {}",
                    k.fov_index(),
                    k.channel()
                )));
            }
        }
        Ok(PsfGrid {
            source,
            config,
            kernels,
        })
    }

    /// The same kernel in every slot.
    pub fn uniform(source: &str, config: DiffractionConfig, kernel: &PsfKernel) -> Result<Self> {
        let kernels = (0..Self::SLOTS)
            .map(|i| {
                kernel
                    .clone()
                    .at_slot(i / 3, Channel::from_index(i % 3).expect("three channels"))
            })
            .collect();
        Self::new(source.to_string(), config, kernels)
    }

    /// Builds a grid from a per-slot kernel function.
    pub fn from_fn(
        source: &str,
        config: DiffractionConfig,
        mut f: impl FnMut(usize, Channel) -> PsfKernel,
    ) -> Result<Self> {
        let kernels = (0..Self::SLOTS)
            .map(|i| {
                let ch = Channel::from_index(i % 3).expect("three channels");
                f(i / 3, ch).at_slot(i / 3, ch)
            })
            .collect();
        Self::new(source.to_string(), config, kernels)
    }

    pub fn source(&self) -> &str {
        &self.source
    }

    pub fn config(&self) -> &DiffractionConfig {
        &self.config
    }

    pub fn kernel(&self, fov: usize, channel: Channel) -> &PsfKernel {
        &self.kernels[fov * 3 + channel.index()]
    }

    pub fn kernels(&self) -> &[PsfKernel] {
        &self.kernels
    }

    pub fn pitch(&self) -> f64 {
        self.kernels[0].pitch()
    }

    pub fn kernel_size(&self) -> usize {
        self.kernels[0].size()
    }

    /// RMS radius per field bin for one channel, µm.
    pub fn rms_radii(&self, channel: Channel) -> Vec<f64> {
        (0..FOV_COUNT)
            .map(|f| rms_radius(self.kernel(f, channel)))
            .collect()
    }

    /// Resamples every kernel to another pixel pitch without changing its
    /// physical size.
    pub fn to_pitch(&self, pitch_um: f64) -> Result<PsfGrid> {
        if pitch_um == self.pitch() {
            return Ok(self.clone());
        }
        let kernels = crate::par::map_slice(&self.kernels, |k| resample_psf(k, 1.0, pitch_um))
            .into_iter()
            .collect::<Result<Vec<_>>>()?;
        let config = DiffractionConfig {
            pixel_pitch_um: pitch_um,
            ..self.config.clone()
        };
        Self::new(self.source.clone(), config, kernels)
    }
}

/// Reusable state for turning lenses into PSF grids: the sampled Zernike
/// basis and the transform plan.
#[derive(Debug, Clone)]
pub struct PsfEngine {
    cfg: DiffractionConfig,
    basis: ZernikeBasis,
    plan: TransformPlan,
}

impl PsfEngine {
    pub fn new(cfg: &DiffractionConfig) -> Result<Self> {
        cfg.validate()?;
        let grid = PupilGrid::new(cfg.pupil_samples)?;
        Ok(PsfEngine {
            cfg: cfg.clone(),
            basis: ZernikeBasis::new(&grid),
            plan: TransformPlan::new(cfg.transform_size()),
        })
    }

    pub fn config(&self) -> &DiffractionConfig {
        &self.cfg
    }

    /// Wavefront for `coeffs`, attenuated to the phase-slope budget at
    /// `wavelength_um` when it is steeper.
    pub fn wavefront(&self, coeffs: &[f64], wavelength_um: f64) -> Result<WavefrontMap> {
        let w = self.basis.synthesize(coeffs)?;
        if let Some(budget) = self.cfg.max_phase_slope() {
            let slope = 2.0 * PI / wavelength_um * w.max_gradient();
            if slope > budget {
                return Ok(w.scaled(budget / slope));
            }
        }
        Ok(w)
    }

    /// Diffraction PSF at the raw image-plane pitch.
    pub fn raw_psf(&self, coeffs: &[f64], channel: Channel) -> Result<PsfKernel> {
        let lambda = self.cfg.wavelength(channel);
        let pupil = pupil_field(&self.wavefront(coeffs, lambda)?, lambda)?;
        psf_compute_with(&pupil, &self.cfg, &self.plan)
    }

    /// Fraction of energy the raw crop keeps for `coeffs`, before any
    /// truncation check.
    pub fn kept_energy(&self, coeffs: &[f64], channel: Channel) -> Result<f64> {
        let lambda = self.cfg.wavelength(channel);
        let pupil = pupil_field(&self.wavefront(coeffs, lambda)?, lambda)?;
        let plane = image_plane_intensity(&pupil, &self.cfg, &self.plan)?;
        Ok(plane.crop_energy() / plane.total_energy)
    }

    /// Finished kernel: raw PSF rescaled to `target_um` at the sensor pitch.
    pub fn kernel(&self, coeffs: &[f64], channel: Channel, target_um: f64) -> Result<PsfKernel> {
        let raw = self.raw_psf(coeffs, channel)?;
        rescale_psf_onto(
            &raw,
            target_um,
            self.cfg.pixel_pitch_um,
            self.cfg.kernel_size,
        )
    }

    /// Kernels for all 128 × 3 slots of `vpl`.
    pub fn build_grid(&self, vpl: &VplSample) -> Result<PsfGrid> {
        if vpl.radius_targets.len() != FOV_COUNT {
            return Err(Error::ShapeMismatch("radius curve length".into()));
        }
        let kernels = crate::par::map_range(PsfGrid::SLOTS, |slot| {
            let fov = slot / 3;
            let channel = Channel::from_index(slot % 3).expect("three channels");
            let coeffs: [f64; ZERNIKE_TERMS] = vpl.coeffs.column(fov, channel);
            self.kernel(&coeffs, channel, vpl.radius_targets[fov])
                .map(|k| k.at_slot(fov, channel))
                .map_err(|e| Error::Kernel {
                    fov,
                    channel,
                    cause: Box::new(e),
                })
        })
        .into_iter()
        .collect::<Result<Vec<_>>>()?;
        PsfGrid::new(vpl.id.clone(), self.cfg.clone(), kernels)
    }

    /// RMS radius of the unaberrated PSF of `channel` at its raw pitch, µm.
    pub fn diffraction_limited_rms(&self, channel: Channel) -> Result<f64> {
        Ok(rms_radius(&self.raw_psf(&[0.0; ZERNIKE_TERMS], channel)?))
    }
}

/// Builds the PSF grid of `vpl` under `cfg`.
pub fn build_psf_grid(vpl: &VplSample, cfg: &DiffractionConfig) -> Result<PsfGrid> {
    PsfEngine::new(cfg)?.build_grid(vpl)
}
