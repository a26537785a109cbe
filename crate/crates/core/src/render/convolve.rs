//! Spatially-variant convolution by overlapping patches.
//!
//! Every patch is convolved with the kernel of its center field bin through
//! an FFT of the reflect-padded tile, then blended into the output with the
//! layout's normalized tent weights.

use super::layout::PatchLayout;
use super::RgbImage;
use crate::diffraction::PsfGrid;
use crate::{Channel, Error, Result};
use num_complex::Complex64;
use rustfft::{Fft, FftPlanner};
use std::collections::HashMap;
use std::sync::Arc;

/// Mirror index without repeating the edge sample (`d c b | a b c d | c b a`).
pub(crate) fn reflect(i: isize, n: usize) -> usize {
    if n == 1 {
        return 0;
    }
    let period = 2 * (n as isize - 1);
    let m = i.rem_euclid(period);
    if m >= n as isize {
        (period - m) as usize
    } else {
        m as usize
    }
}

fn fast_len(n: usize) -> usize {
    // smallest 2^a 3^b >= n
    let mut best = n.next_power_of_two();
    let mut p3 = 1;
    while p3 < best {
        let mut v = p3;
        while v < n {
            v *= 2;
        }
        best = best.min(v);
        p3 *= 3;
    }
    best
}

struct Plans {
    fwd: HashMap<usize, Arc<dyn Fft<f64>>>,
    inv: HashMap<usize, Arc<dyn Fft<f64>>>,
}

impl Plans {
    fn new(sizes: impl IntoIterator<Item = usize>) -> Self {
        let mut planner = FftPlanner::new();
        let mut fwd = HashMap::new();
        let mut inv = HashMap::new();
        for n in sizes {
            fwd.entry(n).or_insert_with(|| planner.plan_fft_forward(n));
            inv.entry(n).or_insert_with(|| planner.plan_fft_inverse(n));
        }
        Plans { fwd, inv }
    }
}

fn fft2(data: &mut [Complex64], ly: usize, lx: usize, row: &dyn Fft<f64>, col: &dyn Fft<f64>) {
    let mut scratch = vec![
        Complex64::default();
        row.get_inplace_scratch_len()
            .max(col.get_inplace_scratch_len())
    ];
    for r in data.chunks_exact_mut(lx) {
        row.process_with_scratch(r, &mut scratch);
    }
    let mut column = vec![Complex64::default(); ly];
    for c in 0..lx {
        for r in 0..ly {
            column[r] = data[r * lx + c];
        }
        col.process_with_scratch(&mut column, &mut scratch);
        for r in 0..ly {
            data[r * lx + c] = column[r];
        }
    }
}

/// Transform sizes of a patch: `(ly, lx)`.
fn transform_dims(height: usize, width: usize, half: usize) -> (usize, usize) {
    (fast_len(height + 2 * half), fast_len(width + 2 * half))
}

/// Degrades `img` with the kernels of `grid` patch by patch.
pub fn degrade_image(img: &RgbImage, grid: &PsfGrid, layout: &PatchLayout) -> Result<RgbImage> {
    layout.validate()?;
    let k = grid.kernel_size();
    if k > layout.patch_size + layout.overlap {
        return Err(Error::Configuration(format!(
            "kernel of {k} px exceeds patch size {} plus overlap {}",
            layout.patch_size, layout.overlap
        )));
    }
    let half = k / 2;
    let (w, h) = (img.width(), img.height());
    let patches = layout.patches(w, h);
    let xs = layout.axis_tiles(w);
    let ys = layout.axis_tiles(h);

    let mut dims: Vec<(usize, usize)> = patches
        .iter()
        .map(|p| transform_dims(p.height, p.width, half))
        .collect();
    dims.sort_unstable();
    dims.dedup();
    let plans = Plans::new(dims.iter().flat_map(|&(a, b)| [a, b]));

    // kernel spectra for every (fov, dims) that occurs
    let mut keys: Vec<(usize, (usize, usize))> = patches
        .iter()
        .map(|p| (p.fov, transform_dims(p.height, p.width, half)))
        .collect();
    keys.sort_unstable();
    keys.dedup();
    let spectra: Vec<[Vec<Complex64>; 3]> = crate::par::map_slice(&keys, |&(fov, (ly, lx))| {
        Channel::ALL.map(|ch| {
            let kernel = grid.kernel(fov, ch);
            let mut buf = vec![Complex64::default(); ly * lx];
            for dy in 0..k {
                for dx in 0..k {
                    let r = (dy as isize - half as isize).rem_euclid(ly as isize) as usize;
                    let c = (dx as isize - half as isize).rem_euclid(lx as isize) as usize;
                    buf[r * lx + c] = Complex64::new(kernel.weight(dy, dx), 0.0);
                }
            }
            fft2(
                &mut buf,
                ly,
                lx,
                plans.fwd[&lx].as_ref(),
                plans.fwd[&ly].as_ref(),
            );
            buf
        })
    });
    let spectrum_of: HashMap<(usize, (usize, usize)), usize> =
        keys.iter().enumerate().map(|(i, key)| (*key, i)).collect();

    let results = crate::par::map_slice(&patches, |p| {
        let (ly, lx) = transform_dims(p.height, p.width, half);
        let spec = &spectra[spectrum_of[&(p.fov, (ly, lx))]];
        let scale = 1.0 / (ly * lx) as f64;
        let mut out = [
            vec![0.0; p.width * p.height],
            vec![0.0; p.width * p.height],
            vec![0.0; p.width * p.height],
        ];
        let mut buf = vec![Complex64::default(); ly * lx];
        for c in 0..3 {
            let plane = img.plane(c);
            buf.iter_mut().for_each(|v| *v = Complex64::default());
            let th = p.height + 2 * half;
            let tw = p.width + 2 * half;
            for ty in 0..th {
                let sy = reflect(p.y0 as isize + ty as isize - half as isize, h);
                for tx in 0..tw {
                    let sx = reflect(p.x0 as isize + tx as isize - half as isize, w);
                    buf[ty * lx + tx] = Complex64::new(plane[sy * w + sx], 0.0);
                }
            }
            fft2(
                &mut buf,
                ly,
                lx,
                plans.fwd[&lx].as_ref(),
                plans.fwd[&ly].as_ref(),
            );
            for (v, s) in buf.iter_mut().zip(&spec[c]) {
                *v *= s;
            }
            fft2(
                &mut buf,
                ly,
                lx,
                plans.inv[&lx].as_ref(),
                plans.inv[&ly].as_ref(),
            );
            for y in 0..p.height {
                for x in 0..p.width {
                    out[c][y * p.width + x] = buf[(y + half) * lx + x + half].re * scale;
                }
            }
        }
        out
    });

    let mut planes = [vec![0.0; w * h], vec![0.0; w * h], vec![0.0; w * h]];
    let mut idx = 0;
    for ty in &ys {
        for tx in &xs {
            let p = &patches[idx];
            debug_assert_eq!((p.x0, p.y0), (tx.start, ty.start));
            for c in 0..3 {
                let src = &results[idx][c];
                for (j, wy) in ty.weights.iter().enumerate() {
                    let row = &mut planes[c][(ty.start + j) * w + tx.start..][..tx.len];
                    for ((dst, wx), v) in row.iter_mut().zip(&tx.weights).zip(&src[j * tx.len..]) {
                        *dst += wy * wx * v;
                    }
                }
            }
            idx += 1;
        }
    }
    Ok(RgbImage::from_planes_clipped(w, h, planes))
}
