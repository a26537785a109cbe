use crate::{Error, Result, FOV_COUNT};
use serde::{Deserialize, Serialize};

/// Normalized field position of a pixel and its field bin.
///
/// The field is the distance from the image center, `((W-1)/2, (H-1)/2)`,
/// divided by the center-to-corner distance; the bin is
/// `floor(field · 127.999)`.
pub fn fov_of_pixel(x: usize, y: usize, width: usize, height: usize) -> (f64, usize) {
    field_at(x as f64, y as f64, width, height)
}

pub(crate) fn field_at(x: f64, y: f64, width: usize, height: usize) -> (f64, usize) {
    let cx = (width as f64 - 1.0) / 2.0;
    let cy = (height as f64 - 1.0) / 2.0;
    let corner = cx.hypot(cy);
    let field = if corner > 0.0 {
        ((x - cx).hypot(y - cy) / corner).min(1.0)
    } else {
        0.0
    };
    let index = ((field * (FOV_COUNT as f64 - 0.001)).floor() as usize).min(FOV_COUNT - 1);
    (field, index)
}

/// Overlapping square tiling used for patch-wise convolution.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PatchLayout {
    pub patch_size: usize,
    pub overlap: usize,
}

impl Default for PatchLayout {
    fn default() -> Self {
        PatchLayout {
            patch_size: 64,
            overlap: 16,
        }
    }
}

/// One tile along one axis.
#[derive(Debug, Clone, PartialEq)]
pub(crate) struct AxisTile {
    pub start: usize,
    pub len: usize,
    /// Blend weight per position, already divided by the sum over all tiles
    /// covering that position.
    pub weights: Vec<f64>,
}

/// One patch of an image.
#[derive(Debug, Clone, PartialEq)]
pub struct Patch {
    pub x0: usize,
    pub y0: usize,
    pub width: usize,
    pub height: usize,
    /// Field bin of the patch center.
    pub fov: usize,
}

impl PatchLayout {
    pub fn validate(&self) -> Result<()> {
        if self.patch_size == 0 || self.overlap >= self.patch_size {
            return Err(Error::Configuration(format!(
                "overlap {} must be smaller than patch size {}",
                self.overlap, self.patch_size
            )));
        }
        Ok(())
    }

    fn tent(&self, t: usize, len: usize) -> f64 {
        if self.overlap == 0 {
            return 1.0;
        }
        let ov = self.overlap as f64;
        let up = (t as f64 + 0.5) / ov;
        let down = (len as f64 - t as f64 - 0.5) / ov;
        up.min(down).min(1.0)
    }

    pub(crate) fn axis_tiles(&self, len: usize) -> Vec<AxisTile> {
        let p = self.patch_size.min(len);
        let mut starts = vec![0usize];
        if len > p {
            let stride = p - self.overlap.min(p - 1);
            let mut s = stride;
            while s + p < len {
                starts.push(s);
                s += stride;
            }
            starts.push(len - p);
            starts.dedup();
        }
        let mut sums = vec![0.0; len];
        for &s in &starts {
            for t in 0..p {
                sums[s + t] += self.tent(t, p);
            }
        }
        starts
            .into_iter()
            .map(|s| AxisTile {
                start: s,
                len: p,
                weights: (0..p).map(|t| self.tent(t, p) / sums[s + t]).collect(),
            })
            .collect()
    }

    /// Patches covering a `width × height` image, row-major.
    pub fn patches(&self, width: usize, height: usize) -> Vec<Patch> {
        let xs = self.axis_tiles(width);
        let ys = self.axis_tiles(height);
        ys.iter()
            .flat_map(|ty| {
                xs.iter().map(move |tx| {
                    let cx = tx.start as f64 + (tx.len as f64 - 1.0) / 2.0;
                    let cy = ty.start as f64 + (ty.len as f64 - 1.0) / 2.0;
                    Patch {
                        x0: tx.start,
                        y0: ty.start,
                        width: tx.len,
                        height: ty.len,
                        fov: field_at(cx, cy, width, height).1,
                    }
                })
            })
            .collect()
    }

    /// Sum of normalized blend weights at every pixel; 1 everywhere.
    pub fn blend_weight_sum(&self, width: usize, height: usize) -> Vec<f64> {
        let xs = self.axis_tiles(width);
        let ys = self.axis_tiles(height);
        let mut sum = vec![0.0; width * height];
        for ty in &ys {
            for tx in &xs {
                for (j, wy) in ty.weights.iter().enumerate() {
                    for (i, wx) in tx.weights.iter().enumerate() {
                        sum[(ty.start + j) * width + tx.start + i] += wy * wx;
                    }
                }
            }
        }
        sum
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn field_examples() {
        assert_eq!(fov_of_pixel(50, 25, 101, 51), (0.0, 0));
        for (x, y) in [(0, 0), (100, 0), (0, 50), (100, 50)] {
            let (f, i) = fov_of_pixel(x, y, 101, 51);
            assert!((f - 1.0).abs() < 1e-15);
            assert_eq!(i, 127);
        }
        // half way along the diagonal of a 201x201 image
        let (f, i) = fov_of_pixel(150, 150, 201, 201);
        assert!((f - 0.5).abs() < 1e-15);
        assert_eq!(i, (0.5f64 * 127.999).floor() as usize);
        assert_eq!(i, 63);
    }

    #[test]
    fn tiles_cover_and_partition() {
        let layout = PatchLayout::default();
        for (w, h) in [(1, 1), (10, 7), (64, 64), (65, 200), (1024, 512), (333, 97)] {
            let sums = layout.blend_weight_sum(w, h);
            assert!(sums.iter().all(|s| (s - 1.0).abs() < 1e-12), "{w}x{h}");
            for p in layout.patches(w, h) {
                assert!(p.x0 + p.width <= w && p.y0 + p.height <= h);
            }
        }
    }

    #[test]
    fn overlap_must_be_below_patch_size() {
        assert!(PatchLayout {
            patch_size: 16,
            overlap: 16
        }
        .validate()
        .is_err());
        assert!(PatchLayout {
            patch_size: 16,
            overlap: 0
        }
        .validate()
        .is_ok());
    }

    #[test]
    fn default_tiling_of_a_wide_image() {
        let tiles = PatchLayout::default().axis_tiles(1024);
        assert_eq!(tiles[0].start, 0);
        assert_eq!(tiles[1].start, 48);
        assert_eq!(tiles.last().unwrap().start, 1024 - 64);
    }
}
