use crate::{Error, Result};
use std::path::Path;

/// Linear-light RGB image, planar, values in `[0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct RgbImage {
    width: usize,
    height: usize,
    planes: [Vec<f64>; 3],
}

impl RgbImage {
    pub fn new(width: usize, height: usize, planes: [Vec<f64>; 3]) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(Error::InvalidArgument(
                "image dimensions must be >= 1".into(),
            ));
        }
        if planes.iter().any(|p| p.len() != width * height) {
            return Err(Error::ShapeMismatch(format!(
                "planes do not match {width}x{height}"
            )));
        }
        if planes.iter().flatten().any(|v| !(0.0..=1.0).contains(v)) {
            return Err(Error::InvalidArgument(
                "pixel values must lie in [0, 1]".into(),
            ));
        }
        Ok(RgbImage {
            width,
            height,
            planes,
        })
    }

    /// Same value in every pixel and channel.
    pub fn filled(width: usize, height: usize, value: f64) -> Result<Self> {
        let p = vec![value; width * height];
        Self::new(width, height, [p.clone(), p.clone(), p])
    }

    /// Builds an image from `f(x, y) -> [r, g, b]`.
    pub fn from_fn(
        width: usize,
        height: usize,
        f: impl Fn(usize, usize) -> [f64; 3],
    ) -> Result<Self> {
        let mut planes = [
            Vec::with_capacity(width * height),
            Vec::with_capacity(width * height),
            Vec::with_capacity(width * height),
        ];
        for y in 0..height {
            for x in 0..width {
                let px = f(x, y);
                for c in 0..3 {
                    planes[c].push(px[c]);
                }
            }
        }
        Self::new(width, height, planes)
    }

    pub(crate) fn from_planes_clipped(
        width: usize,
        height: usize,
        mut planes: [Vec<f64>; 3],
    ) -> Self {
        for v in planes.iter_mut().flatten() {
            *v = v.clamp(0.0, 1.0);
        }
        RgbImage {
            width,
            height,
            planes,
        }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn plane(&self, channel: usize) -> &[f64] {
        &self.planes[channel]
    }

    pub fn get(&self, x: usize, y: usize, channel: usize) -> f64 {
        self.planes[channel][y * self.width + x]
    }

    /// Mean over pixels and channels.
    pub fn mean(&self) -> f64 {
        self.planes.iter().flatten().sum::<f64>() / (3 * self.width * self.height) as f64
    }

    /// Largest absolute per-sample difference to `other`.
    pub fn max_abs_diff(&self, other: &RgbImage) -> f64 {
        self.planes
            .iter()
            .flatten()
            .zip(other.planes.iter().flatten())
            .fold(0.0, |m, (a, b)| m.max((a - b).abs()))
    }
}

fn srgb_to_linear(c: f64) -> f64 {
    if c <= 0.04045 {
        c / 12.92
    } else {
        ((c + 0.055) / 1.055).powf(2.4)
    }
}

fn linear_to_srgb(v: f64) -> f64 {
    if v <= 0.0031308 {
        12.92 * v
    } else {
        1.055 * v.powf(1.0 / 2.4) - 0.055
    }
}

/// Decodes 8-bit sRGB samples to linear light.
pub fn decode_srgb8(v: u8) -> f64 {
    srgb_to_linear(f64::from(v) / 255.0)
}

/// Encodes linear light to 8-bit sRGB, rounding to nearest.
pub fn encode_srgb8(v: f64) -> u8 {
    (linear_to_srgb(v.clamp(0.0, 1.0)) * 255.0).round() as u8
}

/// Reads an image (any format the decoder knows) as linear RGB.
pub fn load_image(path: &Path) -> Result<RgbImage> {
    let img = image::open(path)
        .map_err(|cause| Error::Image {
            path: path.into(),
            cause,
        })?
        .to_rgb8();
    let lut: Vec<f64> = (0..=255u8).map(decode_srgb8).collect();
    let (w, h) = (img.width() as usize, img.height() as usize);
    let mut planes = [vec![0.0; w * h], vec![0.0; w * h], vec![0.0; w * h]];
    for (i, px) in img.pixels().enumerate() {
        for c in 0..3 {
            planes[c][i] = lut[px.0[c] as usize];
        }
    }
    RgbImage::new(w, h, planes)
}

/// Writes an 8-bit sRGB PNG.
pub fn save_png(img: &RgbImage, path: &Path) -> Result<()> {
    let mut buf = image::RgbImage::new(img.width as u32, img.height as u32);
    for (i, px) in buf.pixels_mut().enumerate() {
        for c in 0..3 {
            px.0[c] = encode_srgb8(img.planes[c][i]);
        }
    }
    buf.save_with_format(path, image::ImageFormat::Png)
        .map_err(|cause| Error::Image {
            path: path.into(),
            cause,
        })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn srgb_codes_survive_a_round_trip() {
        for v in 0..=255u8 {
            assert_eq!(encode_srgb8(decode_srgb8(v)), v);
        }
        assert_eq!(decode_srgb8(0), 0.0);
        assert_eq!(decode_srgb8(255), 1.0);
    }

    #[test]
    fn rejects_out_of_range_pixels() {
        assert!(RgbImage::filled(2, 2, 1.5).is_err());
        assert!(RgbImage::filled(0, 2, 0.5).is_err());
        assert!(RgbImage::new(2, 2, [vec![0.0; 4], vec![0.0; 3], vec![0.0; 4]]).is_err());
    }

    #[test]
    fn png_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("a.png");
        let img = RgbImage::from_fn(5, 3, |x, y| {
            [
                decode_srgb8((x * 40) as u8),
                decode_srgb8((y * 70) as u8),
                decode_srgb8(200),
            ]
        })
        .unwrap();
        save_png(&img, &path).unwrap();
        let back = load_image(&path).unwrap();
        assert_eq!(back, img);
    }
}
