use proptest::prelude::*;
use std::collections::HashMap;
use vpl_core::diffraction::{DiffractionConfig, PsfGrid, PsfKernel};
use vpl_core::render::{
    degrade_dataset, degrade_image, fov_of_pixel, save_png, DatasetManifest, EntryStatus,
    ManifestEntry, PatchLayout, RgbImage,
};
use vpl_core::rng::SampleRng;
use vpl_core::vplgen::{level_spec_by_name, sample_vpl};
use vpl_core::Behavior;

const PITCH: f64 = 20.0;

fn config(kernel_size: usize) -> DiffractionConfig {
    DiffractionConfig {
        kernel_size,
        ..DiffractionConfig::default()
    }
}

/// Anisotropic, off-center Gaussian blob so orientation mistakes show up.
fn blob(size: usize, sx: f64, sy: f64, shift: f64) -> PsfKernel {
    let h = (size / 2) as f64;
    let w = (0..size * size)
        .map(|i| {
            let x = (i % size) as f64 - h - shift;
            let y = (i / size) as f64 - h;
            (-(x * x) / (2.0 * sx * sx) - (y * y) / (2.0 * sy * sy)).exp()
        })
        .collect();
    PsfKernel::from_weights(size, w, PITCH).unwrap()
}

fn noise_image(w: usize, h: usize, seed: u64) -> RgbImage {
    let mut rng = SampleRng::new(seed);
    let px: Vec<[f64; 3]> = (0..w * h)
        .map(|_| [rng.uniform(), rng.uniform(), rng.uniform()])
        .collect();
    RgbImage::from_fn(w, h, |x, y| px[y * w + x]).unwrap()
}

fn reflect(i: isize, n: usize) -> usize {
    let n = n as isize;
    let mut i = i;
    while i < 0 || i >= n {
        i = if i < 0 { -i } else { 2 * (n - 1) - i };
    }
    i as usize
}

/// Dense spatial convolution with reflect-101 borders.
fn dense_convolve(img: &RgbImage, kernels: [&PsfKernel; 3]) -> Vec<Vec<f64>> {
    let (w, h) = (img.width(), img.height());
    (0..3)
        .map(|c| {
            let k = kernels[c];
            let r = k.half() as isize;
            let mut out = vec![0.0; w * h];
            for y in 0..h {
                for x in 0..w {
                    let mut acc = 0.0;
                    for dy in -r..=r {
                        for dx in -r..=r {
                            let sy = reflect(y as isize - dy, h);
                            let sx = reflect(x as isize - dx, w);
                            acc +=
                                k.weight((dy + r) as usize, (dx + r) as usize) * img.get(sx, sy, c);
                        }
                    }
                    out[y * w + x] = acc;
                }
            }
            out
        })
        .collect()
}

#[test]
fn delta_grid_is_the_identity() {
    let img = noise_image(150, 97, 1);
    let grid =
        PsfGrid::uniform("delta", config(15), &PsfKernel::delta(15, PITCH).unwrap()).unwrap();
    let out = degrade_image(&img, &grid, &PatchLayout::default()).unwrap();
    assert!(out.max_abs_diff(&img) <= 1e-6);
}

#[test]
fn single_patch_matches_dense_convolution() {
    let img = noise_image(57, 44, 2);
    let kernels = [
        blob(9, 1.0, 2.0, 1.5),
        blob(9, 2.0, 0.7, -1.0),
        blob(9, 1.3, 1.3, 0.0),
    ];
    let grid = PsfGrid::from_fn("blob", config(9), |_, ch| kernels[ch.index()].clone()).unwrap();
    let layout = PatchLayout {
        patch_size: 64,
        overlap: 16,
    };
    let out = degrade_image(&img, &grid, &layout).unwrap();
    let want = dense_convolve(&img, [&kernels[0], &kernels[1], &kernels[2]]);
    for (c, want) in want.iter().enumerate() {
        let d = out
            .plane(c)
            .iter()
            .zip(want)
            .fold(0.0f64, |m, (a, b)| m.max((a - b).abs()));
        assert!(d <= 1e-8, "channel {c}: {d}");
    }
}

fn varying_grid(size: usize) -> PsfGrid {
    PsfGrid::from_fn("varying", config(size), |fov, ch| {
        let s = 0.5 + fov as f64 / 20.0 + ch.index() as f64 * 0.3;
        blob(size, s, s * 0.7, (fov % 3) as f64 - 1.0)
    })
    .unwrap()
}

#[test]
fn flat_fields_stay_flat() {
    let grid = varying_grid(15);
    for v in [0.0, 0.37, 1.0] {
        let img = RgbImage::filled(200, 130, v).unwrap();
        let out = degrade_image(&img, &grid, &PatchLayout::default()).unwrap();
        assert!(out.max_abs_diff(&img) <= 1e-6, "gray {v}");
    }
}

#[test]
fn mean_intensity_is_preserved() {
    let grid = varying_grid(15);
    for seed in 0..3 {
        let img = RgbImage::from_fn(190, 140, |x, y| {
            let g = ((x / 7 + y / 5 + seed) % 2) as f64;
            [g, 0.5 * g + 0.25, 1.0 - g]
        })
        .unwrap();
        let out = degrade_image(&img, &grid, &PatchLayout::default()).unwrap();
        assert!(
            (out.mean() - img.mean()).abs() <= 1e-4,
            "{} vs {}",
            out.mean(),
            img.mean()
        );
    }
}

#[test]
fn changing_one_field_bin_is_local() {
    let (w, h) = (300, 220);
    let layout = PatchLayout::default();
    let img = noise_image(w, h, 4);
    let base = varying_grid(15);
    let target = layout.patches(w, h)[7].fov;
    let changed = PsfGrid::from_fn("changed", config(15), |fov, ch| {
        if fov == target {
            blob(15, 3.0, 1.0, 2.0)
        } else {
            base.kernel(fov, ch).clone()
        }
    })
    .unwrap();
    let a = degrade_image(&img, &base, &layout).unwrap();
    let b = degrade_image(&img, &changed, &layout).unwrap();
    let mut touched = vec![false; w * h];
    for p in layout.patches(w, h).iter().filter(|p| p.fov == target) {
        for y in p.y0..p.y0 + p.height {
            for x in p.x0..p.x0 + p.width {
                touched[y * w + x] = true;
            }
        }
    }
    let mut moved = 0;
    for c in 0..3 {
        for (i, t) in touched.iter().enumerate() {
            let (va, vb) = (a.plane(c)[i], b.plane(c)[i]);
            if *t {
                moved += (va != vb) as usize;
            } else {
                assert_eq!(va, vb, "pixel {i} outside the changed patches moved");
            }
        }
    }
    assert!(moved > 0);
}

#[test]
fn kernels_wider_than_the_patch_reach_are_rejected() {
    let img = noise_image(100, 100, 5);
    let grid = PsfGrid::uniform("wide", config(41), &PsfKernel::delta(41, PITCH).unwrap()).unwrap();
    let layout = PatchLayout {
        patch_size: 24,
        overlap: 8,
    };
    assert!(degrade_image(&img, &grid, &layout).is_err());
}

proptest! {
    #[test]
    fn blend_weights_partition_unity(w in 1usize..300, h in 1usize..300, p in 8usize..96, ov_frac in 0.0f64..0.9) {
        let overlap = ((p as f64) * ov_frac) as usize;
        let layout = PatchLayout { patch_size: p, overlap };
        for s in layout.blend_weight_sum(w, h) {
            prop_assert!((s - 1.0).abs() <= 1e-12);
        }
        let patches = layout.patches(w, h);
        let mut covered = vec![false; w * h];
        for q in &patches {
            for y in q.y0..q.y0 + q.height {
                for x in q.x0..q.x0 + q.width {
                    covered[y * w + x] = true;
                }
            }
        }
        prop_assert!(covered.iter().all(|c| *c));
    }

    #[test]
    fn field_index_is_radial_and_bounded(w in 1usize..2000, h in 1usize..2000, fx in 0.0f64..1.0, fy in 0.0f64..1.0) {
        let x = ((w as f64) * fx) as usize;
        let y = ((h as f64) * fy) as usize;
        let (field, idx) = fov_of_pixel(x, y, w, h);
        prop_assert!((0.0..=1.0).contains(&field));
        prop_assert!(idx < 128);
        prop_assert_eq!(idx, ((field * 127.999).floor() as usize).min(127));
        let (mirror, midx) = fov_of_pixel(w - 1 - x, h - 1 - y, w, h);
        prop_assert!((mirror - field).abs() < 1e-12);
        prop_assert_eq!(midx, idx);
    }
}

fn light_optics() -> DiffractionConfig {
    DiffractionConfig {
        pupil_samples: 64,
        padding: 2,
        crop_size: 127,
        kernel_size: 31,
        pixel_pitch_um: 40.0,
        ..DiffractionConfig::default()
    }
}

fn run_dataset(dir: &std::path::Path, out: &str) -> (DatasetManifest, Vec<Vec<u8>>) {
    let samples: Vec<_> = (0..5)
        .map(|i| {
            let name = ["C1", "C2", "C3", "C4", "C2"][i];
            sample_vpl(
                &level_spec_by_name(name).unwrap(),
                Behavior::Csl,
                40 + i as u64,
            )
            .unwrap()
        })
        .collect();
    let manifest = DatasetManifest {
        config: None,
        entries: (0..10)
            .map(|i| ManifestEntry::new(dir.join(format!("img{i}.png"))))
            .collect(),
    };
    let out_dir = dir.join(out);
    std::fs::create_dir_all(&out_dir).unwrap();
    let done = degrade_dataset(
        &manifest,
        &samples,
        &light_optics(),
        &PatchLayout::default(),
        3,
        &out_dir,
        &HashMap::new(),
    )
    .unwrap();
    let bytes = done
        .entries
        .iter()
        .map(|e| std::fs::read(e.output.as_ref().unwrap()).unwrap())
        .collect();
    (done, bytes)
}

#[test]
fn dataset_runs_are_reproducible() {
    let dir = tempfile::tempdir().unwrap();
    for i in 0..10 {
        let img = noise_image(96, 72, 100 + i);
        save_png(&img, &dir.path().join(format!("img{i}.png"))).unwrap();
    }
    std::fs::write(dir.path().join("img0_labelIds.png"), b"label").unwrap();
    let (m1, b1) = run_dataset(dir.path(), "a");
    let (m2, b2) = run_dataset(dir.path(), "b");
    assert_eq!(m1.entries.len(), 10);
    for (e1, e2) in m1.entries.iter().zip(&m2.entries) {
        assert_eq!(e1.status, EntryStatus::Done);
        assert_eq!(e1.sample_id, e2.sample_id);
        assert_eq!(e1.seed, e2.seed);
        let name = e1
            .output
            .as_ref()
            .unwrap()
            .file_name()
            .unwrap()
            .to_string_lossy()
            .to_string();
        assert!(name.ends_with(&format!("__{}.png", e1.sample_id.as_ref().unwrap())));
    }
    assert_eq!(b1, b2);
    assert_eq!(
        std::fs::read(dir.path().join("img0_labelIds.png")).unwrap(),
        b"label"
    );
}
