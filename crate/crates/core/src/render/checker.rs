use super::layout::fov_of_pixel;
use super::{degrade_image, PatchLayout, RgbImage};
use crate::diffraction::{DiffractionConfig, PsfEngine, PsfGrid};
use crate::vplgen::VplSample;
use crate::{Error, Result};

/// Black and white checkerboard with `square_px` squares, phase-aligned to the
/// image center so the pattern is point-symmetric.
pub fn checkerboard(width: usize, height: usize, square_px: usize) -> Result<RgbImage> {
    if square_px == 0 {
        return Err(Error::InvalidArgument("square size must be >= 1".into()));
    }
    let s = square_px as f64;
    let cx = width as f64 / 2.0;
    let cy = height as f64 / 2.0;
    RgbImage::from_fn(width, height, |x, y| {
        let i = ((x as f64 + 0.5 - cx) / s).floor() as i64;
        let j = ((y as f64 + 0.5 - cy) / s).floor() as i64;
        let v = if (i + j).rem_euclid(2) == 0 { 1.0 } else { 0.0 };
        [v; 3]
    })
}

/// Checkerboard degraded through a prepared grid.
pub fn render_checkerboard_with(
    grid: &PsfGrid,
    width: usize,
    height: usize,
    square_px: usize,
    layout: &PatchLayout,
) -> Result<RgbImage> {
    let k = grid.kernel_size();
    if width < k || height < k {
        return Err(Error::InvalidArgument(format!(
            "checkerboard {width}x{height} is smaller than the {k} px kernel"
        )));
    }
    degrade_image(&checkerboard(width, height, square_px)?, grid, layout)
}

/// Builds the PSF grid of `vpl` and images a checkerboard through it.
pub fn render_checkerboard(
    vpl: &VplSample,
    width: usize,
    height: usize,
    square_px: usize,
    cfg: &DiffractionConfig,
    layout: &PatchLayout,
) -> Result<RgbImage> {
    let grid = PsfEngine::new(cfg)?.build_grid(vpl)?;
    render_checkerboard_with(&grid, width, height, square_px, layout)
}

/// Central-difference gradient magnitude of the channel-mean intensity.
/// Border pixels get zero.
pub fn gradient_magnitude(img: &RgbImage) -> Vec<f64> {
    let (w, h) = (img.width(), img.height());
    let lum: Vec<f64> = (0..w * h)
        .map(|i| (img.plane(0)[i] + img.plane(1)[i] + img.plane(2)[i]) / 3.0)
        .collect();
    let mut g = vec![0.0; w * h];
    for y in 1..h.saturating_sub(1) {
        for x in 1..w.saturating_sub(1) {
            let gx = (lum[y * w + x + 1] - lum[y * w + x - 1]) / 2.0;
            let gy = (lum[(y + 1) * w + x] - lum[(y - 1) * w + x]) / 2.0;
            g[y * w + x] = gx.hypot(gy);
        }
    }
    g
}

/// Mean gradient magnitude over interior pixels whose normalized field lies
/// in `[lo, hi]`.
pub fn mean_gradient(img: &RgbImage, lo: f64, hi: f64) -> Result<f64> {
    let (w, h) = (img.width(), img.height());
    let g = gradient_magnitude(img);
    let (mut sum, mut n) = (0.0, 0usize);
    for y in 1..h.saturating_sub(1) {
        for x in 1..w.saturating_sub(1) {
            let f = fov_of_pixel(x, y, w, h).0;
            if f >= lo && f <= hi {
                sum += g[y * w + x];
                n += 1;
            }
        }
    }
    if n == 0 {
        return Err(Error::InvalidArgument(format!(
            "no interior pixels with field in [{lo}, {hi}]"
        )));
    }
    Ok(sum / n as f64)
}

/// Mean gradient of the outer annulus (field ≥ 0.8) over that of the central
/// disk (field ≤ 0.2).
pub fn radial_gradient_ratio(img: &RgbImage) -> Result<f64> {
    let center = mean_gradient(img, 0.0, 0.2)?;
    if center <= 0.0 {
        return Err(Error::DegenerateInput("flat central disk".into()));
    }
    Ok(mean_gradient(img, 0.8, 1.0)? / center)
}

/// Radial gradient ratio of `degraded` divided by that of the `reference`
/// it was rendered from. Cancels how the pattern itself happens to fall on
/// the central disk and the outer annulus.
pub fn relative_gradient_ratio(degraded: &RgbImage, reference: &RgbImage) -> Result<f64> {
    if (degraded.width(), degraded.height()) != (reference.width(), reference.height()) {
        return Err(Error::ShapeMismatch("images differ in size".into()));
    }
    Ok(radial_gradient_ratio(degraded)? / radial_gradient_ratio(reference)?)
}

/// Checkerboard diagnostics of one lens.
#[derive(Debug, Clone, PartialEq)]
pub struct CheckerReport {
    pub image: RgbImage,
    /// Annulus/center gradient ratio of the degraded board.
    pub gradient_ratio: f64,
    /// The same ratio normalized by the pristine board's.
    pub relative_ratio: f64,
    /// Mean gradient of the degraded board over that of the pristine one.
    pub contrast_retained: f64,
}

/// Renders the checkerboard through `grid` and measures it.
pub fn checker_report(
    grid: &PsfGrid,
    width: usize,
    height: usize,
    square_px: usize,
    layout: &PatchLayout,
) -> Result<CheckerReport> {
    let reference = checkerboard(width, height, square_px)?;
    let image = render_checkerboard_with(grid, width, height, square_px, layout)?;
    let gradient_ratio = radial_gradient_ratio(&image)?;
    let relative_ratio = gradient_ratio / radial_gradient_ratio(&reference)?;
    let contrast_retained = mean_gradient(&image, 0.0, 1.0)? / mean_gradient(&reference, 0.0, 1.0)?;
    Ok(CheckerReport {
        image,
        gradient_ratio,
        relative_ratio,
        contrast_retained,
    })
}
