//! Geometric rescaling of PSF kernels.
//!
//! Resampling is separable. Each output pixel maps back to a footprint of
//! `f = out_pitch / (scale · in_pitch)` input pixels around the scaled
//! centroid. When `f ≤ 1` the bilinear reconstruction of the input is point
//! sampled; when the output is coarser, the same bilinear surface is
//! integrated over the footprint so sub-pixel PSFs keep their energy. The
//! centroid keeps its physical offset from the optical axis.

use super::{rms_radius, PsfKernel};
use crate::{Error, Result};

const RADIUS_TOLERANCE: f64 = 1e-4;
const ACCEPT_TOLERANCE: f64 = 0.03;
const MAX_ITERATIONS: usize = 40;

fn tent(x: f64) -> f64 {
    (1.0 - x.abs()).max(0.0)
}

/// Integral of the tent from `-∞` to `x`.
fn tent_cdf(x: f64) -> f64 {
    if x <= -1.0 {
        0.0
    } else if x < 0.0 {
        0.5 * (x + 1.0) * (x + 1.0)
    } else if x < 1.0 {
        1.0 - 0.5 * (1.0 - x) * (1.0 - x)
    } else {
        1.0
    }
}

/// Sparse rows of a 1-D resampling operator: `(first input index, weights)`.
fn axis_operator(
    in_size: usize,
    out_size: usize,
    centroid_in: f64,
    centroid_out: f64,
    footprint: f64,
) -> Vec<(usize, Vec<f64>)> {
    let h_in = (in_size / 2) as f64;
    let h_out = (out_size / 2) as f64;
    let reach = footprint.max(1.0) / 2.0 + 1.0;
    (0..out_size)
        .map(|j| {
            let u = h_in + centroid_in + (j as f64 - h_out - centroid_out) * footprint;
            let lo = (u - reach).floor().max(0.0);
            let hi = (u + reach).ceil().min(in_size as f64 - 1.0);
            if hi < lo {
                return (0, Vec::new());
            }
            let (lo, hi) = (lo as usize, hi as usize);
            let weights = (lo..=hi)
                .map(|i| {
                    let d = u - i as f64;
                    if footprint <= 1.0 {
                        tent(d)
                    } else {
                        let half = footprint / 2.0;
                        (tent_cdf(d + half) - tent_cdf(d - half)) / footprint
                    }
                })
                .collect();
            (lo, weights)
        })
        .collect()
}

/// Resamples `psf` magnified by `scale` about its centroid onto a kernel of
/// the same size at `out_pitch`. The result is renormalized.
pub fn resample_psf(psf: &PsfKernel, scale: f64, out_pitch: f64) -> Result<PsfKernel> {
    resample_psf_onto(psf, scale, out_pitch, psf.size())
}

/// [`resample_psf`] onto an `out_size²` kernel.
pub fn resample_psf_onto(
    psf: &PsfKernel,
    scale: f64,
    out_pitch: f64,
    out_size: usize,
) -> Result<PsfKernel> {
    if !(scale >= 0.0 && scale.is_finite()) {
        return Err(Error::InvalidArgument(format!(
            "scale {scale} must be >= 0"
        )));
    }
    if !(out_pitch > 0.0 && out_pitch.is_finite()) {
        return Err(Error::InvalidArgument(format!(
            "pitch {out_pitch} must be positive"
        )));
    }
    if out_size.is_multiple_of(2) {
        return Err(Error::InvalidArgument(format!(
            "kernel size {out_size} must be odd"
        )));
    }
    let (size, osize) = (psf.size(), out_size);
    let (cx, cy) = psf.centroid();
    let ratio = psf.pitch() / out_pitch;
    let (cx_out, cy_out) = (cx * ratio, cy * ratio);
    let h = (osize / 2) as f64;
    if cx_out.abs() > h || cy_out.abs() > h {
        return Err(Error::DegenerateInput(format!(
            "centroid ({cx_out:.2}, {cy_out:.2}) px falls outside the output kernel"
        )));
    }
    let tagged = |k: PsfKernel| k.at_slot(psf.fov_index(), psf.channel());
    if scale == 0.0 {
        let mut w = vec![0.0; osize * osize];
        let col = (h + cx_out).round() as usize;
        let row = (h + cy_out).round() as usize;
        w[row * osize + col] = 1.0;
        return PsfKernel::from_weights(osize, w, out_pitch).map(tagged);
    }
    let footprint = out_pitch / (scale * psf.pitch());
    let ax = axis_operator(size, osize, cx, cx_out, footprint);
    let ay = axis_operator(size, osize, cy, cy_out, footprint);

    // rows of the input times the column operator
    let mut tmp = vec![0.0; size * osize];
    for r in 0..size {
        let src = &psf.weights()[r * size..(r + 1) * size];
        if src.iter().all(|v| *v == 0.0) {
            continue;
        }
        for (j, (lo, weights)) in ax.iter().enumerate() {
            tmp[r * osize + j] = weights.iter().zip(&src[*lo..]).map(|(a, b)| a * b).sum();
        }
    }
    let mut out = vec![0.0; osize * osize];
    for (jy, (lo, weights)) in ay.iter().enumerate() {
        for (k, wy) in weights.iter().enumerate() {
            if *wy == 0.0 {
                continue;
            }
            let r = lo + k;
            let (dst, src) = (
                &mut out[jy * osize..(jy + 1) * osize],
                &tmp[r * osize..(r + 1) * osize],
            );
            for (d, s) in dst.iter_mut().zip(src) {
                *d += wy * s;
            }
        }
    }
    // clear rounding residue below zero
    for v in &mut out {
        if *v < 0.0 {
            *v = 0.0;
        }
    }
    PsfKernel::from_weights(osize, out, out_pitch).map(tagged)
}

/// Rescales `psf` at its own pitch so its RMS radius becomes `target_um`.
pub fn rescale_psf(psf: &PsfKernel, target_um: f64) -> Result<PsfKernel> {
    rescale_psf_to_pitch(psf, target_um, psf.pitch())
}

/// Rescales `psf` so its RMS radius becomes `target_um` on a kernel of pitch
/// `out_pitch`.
///
/// The first magnification is `target / rms(psf)`. Pixelization shifts the
/// measured radius slightly, so the magnification is refined with a
/// bracketed secant search until the measured radius is within `1e-4`
/// relative of the target.
pub fn rescale_psf_to_pitch(psf: &PsfKernel, target_um: f64, out_pitch: f64) -> Result<PsfKernel> {
    rescale_psf_onto(psf, target_um, out_pitch, psf.size())
}

/// [`rescale_psf_to_pitch`] onto an `out_size²` kernel.
pub fn rescale_psf_onto(
    psf: &PsfKernel,
    target_um: f64,
    out_pitch: f64,
    out_size: usize,
) -> Result<PsfKernel> {
    if !(target_um >= 0.0 && target_um.is_finite()) {
        return Err(Error::InvalidArgument(format!(
            "target radius {target_um} must be >= 0"
        )));
    }
    let current = rms_radius(psf);
    if target_um == 0.0 {
        return resample_psf_onto(psf, 0.0, out_pitch, out_size);
    }
    if current == 0.0 {
        return Err(Error::DegenerateInput(
            "cannot rescale a PSF with zero RMS radius to a positive target".into(),
        ));
    }

    let mut scale = target_um / current;
    let mut below: Option<f64> = None;
    let mut above: Option<f64> = None;
    let mut best: Option<(f64, PsfKernel)> = None;
    for _ in 0..MAX_ITERATIONS {
        let out = resample_psf_onto(psf, scale, out_pitch, out_size)?;
        let r = rms_radius(&out);
        let err = (r - target_um).abs() / target_um;
        if best.as_ref().is_none_or(|(e, _)| err < *e) {
            best = Some((err, out));
        }
        if err <= RADIUS_TOLERANCE {
            break;
        }
        if r < target_um {
            below = Some(below.map_or(scale, |b: f64| b.max(scale)));
        } else {
            above = Some(above.map_or(scale, |a: f64| a.min(scale)));
        }
        let proposal = if r > 0.0 {
            scale * target_um / r
        } else {
            scale * 2.0
        };
        scale = match (below, above) {
            (Some(lo), Some(hi)) if !(proposal > lo && proposal < hi) => (lo * hi).sqrt(),
            _ => proposal,
        };
    }
    match best {
        Some((err, out)) if err <= ACCEPT_TOLERANCE => Ok(out),
        Some((_, out)) => Err(Error::RadiusUnreachable {
            target_um,
            achieved_um: rms_radius(&out),
        }),
        None => unreachable!("at least one resampling pass runs"),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn gaussian(size: usize, sigma: f64, pitch: f64, offset: (f64, f64)) -> PsfKernel {
        let h = (size / 2) as f64;
        let w = (0..size * size)
            .map(|k| {
                let x = (k % size) as f64 - h - offset.0;
                let y = (k / size) as f64 - h - offset.1;
                (-(x * x + y * y) / (2.0 * sigma * sigma)).exp()
            })
            .collect();
        PsfKernel::from_weights(size, w, pitch).unwrap()
    }

    #[test]
    fn tent_cdf_is_consistent() {
        assert_eq!(tent_cdf(-2.0), 0.0);
        assert_eq!(tent_cdf(0.0), 0.5);
        assert_eq!(tent_cdf(3.0), 1.0);
        let h = 1e-6;
        for x in [-0.7, -0.2, 0.3, 0.9] {
            let d = (tent_cdf(x + h) - tent_cdf(x - h)) / (2.0 * h);
            assert!((d - tent(x)).abs() < 1e-6);
        }
    }

    #[test]
    fn unit_scale_same_pitch_is_identity() {
        let psf = gaussian(31, 2.5, 1.5, (0.3, -0.8));
        let out = resample_psf(&psf, 1.0, 1.5).unwrap();
        for (a, b) in psf.weights().iter().zip(out.weights()) {
            assert!((a - b).abs() < 1e-15);
        }
        let r = rescale_psf(&psf, rms_radius(&psf)).unwrap();
        assert!((rms_radius(&r) - rms_radius(&psf)).abs() / rms_radius(&psf) < 1e-3);
    }

    #[test]
    fn doubling_target_doubles_radius() {
        let psf = gaussian(63, 3.0, 1.0, (0.0, 0.0));
        let r0 = rms_radius(&psf);
        let out = rescale_psf(&psf, 2.0 * r0).unwrap();
        assert!((rms_radius(&out) / r0 - 2.0).abs() < 0.03 * 2.0);
        assert!((out.weights().iter().sum::<f64>() - 1.0).abs() < 1e-9);
    }

    #[test]
    fn shrinking_onto_coarse_pitch_hits_subpixel_targets() {
        let psf = gaussian(63, 4.0, 0.7, (0.0, 0.0));
        for target in [0.5, 2.0, 5.0, 11.0, 40.0] {
            let out = rescale_psf_to_pitch(&psf, target, 20.0).unwrap();
            let r = rms_radius(&out);
            assert!(
                (r - target).abs() / target < 1e-3,
                "target {target}, got {r}"
            );
            assert_eq!(out.pitch(), 20.0);
        }
    }

    #[test]
    fn wide_raw_crop_onto_small_kernel() {
        let psf = gaussian(255, 6.0, 0.7, (1.5, 0.0));
        for target in [5.0, 60.0, 300.0] {
            let out = rescale_psf_onto(&psf, target, 20.0, 63).unwrap();
            assert_eq!(out.size(), 63);
            let r = rms_radius(&out);
            assert!(
                (r - target).abs() / target < 1e-3,
                "target {target}, got {r}"
            );
        }
        assert!(resample_psf_onto(&psf, 1.0, 20.0, 62).is_err());
    }

    #[test]
    fn zero_target_gives_delta() {
        let psf = gaussian(15, 1.0, 1.0, (0.0, 0.0));
        let out = rescale_psf(&psf, 0.0).unwrap();
        assert_eq!(rms_radius(&out), 0.0);
        assert_eq!(out.weight(7, 7), 1.0);
    }

    #[test]
    fn zero_radius_input_is_degenerate() {
        let d = PsfKernel::delta(9, 1.0).unwrap();
        assert!(matches!(
            rescale_psf(&d, 2.0),
            Err(Error::DegenerateInput(_))
        ));
        assert!(rescale_psf(&d, 0.0).is_ok());
    }

    #[test]
    fn centroid_keeps_physical_offset() {
        let psf = gaussian(63, 2.0, 1.0, (4.0, -2.0));
        let out = rescale_psf_to_pitch(&psf, 3.0, 2.0).unwrap();
        let (cx, cy) = out.centroid();
        assert!(
            (cx - 2.0).abs() < 0.05 && (cy + 1.0).abs() < 0.05,
            "{cx} {cy}"
        );
    }

    #[test]
    fn negative_target_is_rejected() {
        let psf = gaussian(9, 1.0, 1.0, (0.0, 0.0));
        assert!(rescale_psf(&psf, -1.0).is_err());
    }
}
