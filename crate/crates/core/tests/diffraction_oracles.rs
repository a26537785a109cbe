use num_complex::Complex64;
use std::f64::consts::PI;
use vpl_core::diffraction::{
    build_psf_grid, full_plane_intensity, psf_compute, pupil_field, rms_radius, DiffractionConfig,
    PsfEngine, PsfKernel,
};
use vpl_core::rng::SampleRng;
use vpl_core::vplgen::{level_spec_by_name, sample_vpl, VplSample};
use vpl_core::zernike::{wavefront_map, PupilGrid};
use vpl_core::{Behavior, Channel, FOV_COUNT};

fn small(n: usize, crop: usize, padding: usize) -> DiffractionConfig {
    DiffractionConfig {
        pupil_samples: n,
        crop_size: crop,
        kernel_size: 3,
        padding,
        truncation_limit: 1.0,
        ..DiffractionConfig::default()
    }
}

/// Brute-force DFT of the zero-padded pupil on the centered crop.
fn direct_psf(field: &[Complex64], n: usize, m: usize, crop: usize) -> Vec<f64> {
    let h = (crop / 2) as isize;
    let mut out = Vec::with_capacity(crop * crop);
    for row in 0..crop {
        let ky = (row as isize - h) as f64;
        for col in 0..crop {
            let kx = (col as isize - h) as f64;
            let mut acc = Complex64::new(0.0, 0.0);
            for r in 0..n {
                for c in 0..n {
                    let phase = -2.0 * PI * (kx * c as f64 + ky * r as f64) / m as f64;
                    acc += field[r * n + c] * Complex64::from_polar(1.0, phase);
                }
            }
            out.push(acc.norm_sqr());
        }
    }
    let total: f64 = out.iter().sum();
    out.iter().map(|v| v / total).collect()
}

#[test]
fn transform_matches_direct_dft() {
    let mut rng = SampleRng::new(2024);
    let mut cases = 0;
    for &(n, crop) in &[(16usize, 15usize), (32, 21)] {
        let cfg = small(n, crop, 2);
        let g = PupilGrid::new(n).unwrap();
        for _ in 0..10 {
            let c: Vec<f64> = (0..37).map(|_| rng.range(-0.3, 0.3)).collect();
            let lambda = cfg.wavelengths_um[rng.below(3)];
            let pupil = pupil_field(&wavefront_map(&c, &g).unwrap(), lambda).unwrap();
            let fast = psf_compute(&pupil, &cfg).unwrap();
            let slow = direct_psf(pupil.values(), n, n * 2, crop);
            let num: f64 = fast
                .weights()
                .iter()
                .zip(&slow)
                .map(|(a, b)| (a - b).powi(2))
                .sum();
            let den: f64 = slow.iter().map(|b| b * b).sum();
            assert!((num / den).sqrt() < 1e-10, "n={n}: {}", (num / den).sqrt());
            cases += 1;
        }
    }
    assert_eq!(cases, 20);
}

#[test]
fn total_energy_is_the_pupil_area_fraction() {
    let cfg = small(16, 15, 4);
    let g = PupilGrid::new(16).unwrap();
    let pupil = pupil_field(&wavefront_map(&[0.1; 37], &g).unwrap(), 0.55).unwrap();
    let total: f64 = full_plane_intensity(&pupil, &cfg).iter().sum();
    let fraction = g.area() as f64 / (16 * 16) as f64;
    assert!((total - fraction).abs() < 1e-6);
}

/// Radius of the first local minimum along the +x axis, pixels.
fn first_dark_ring(psf: &PsfKernel) -> usize {
    let h = psf.half();
    (1..h)
        .find(|&d| psf.weight(h, h + d) < psf.weight(h, h + d + 1))
        .expect("a minimum inside the crop")
}

#[test]
fn unaberrated_psf_has_the_airy_dark_ring() {
    for padding in [4, 8] {
        let cfg = DiffractionConfig {
            padding,
            crop_size: 63,
            truncation_limit: 1.0,
            ..DiffractionConfig::default()
        };
        let g = PupilGrid::new(cfg.pupil_samples).unwrap();
        for channel in Channel::ALL {
            let lambda = cfg.wavelength(channel);
            let pupil = pupil_field(&wavefront_map(&[0.0; 37], &g).unwrap(), lambda).unwrap();
            let psf = psf_compute(&pupil, &cfg).unwrap();
            let h = psf.half();
            let peak = psf.weights().iter().cloned().fold(0.0, f64::max);
            assert_eq!(psf.weight(h, h), peak);
            let ring_um = first_dark_ring(&psf) as f64 * psf.pitch();
            assert!(
                (ring_um - cfg.airy_radius(lambda)).abs() <= psf.pitch(),
                "pad {padding} {channel}: {ring_um} vs {}",
                cfg.airy_radius(lambda)
            );
        }
    }
}

fn tilted(c: f64, cfg: &DiffractionConfig) -> PsfKernel {
    let g = PupilGrid::new(cfg.pupil_samples).unwrap();
    let mut coeffs = [0.0; 37];
    coeffs[2] = c;
    coeffs[3] = 0.05;
    let pupil = pupil_field(&wavefront_map(&coeffs, &g).unwrap(), 0.55).unwrap();
    psf_compute(&pupil, cfg).unwrap()
}

#[test]
fn tilt_translates_without_reshaping() {
    let cfg = DiffractionConfig::default();
    let base = tilted(0.0, &cfg);
    let one = tilted(0.05, &cfg);
    let two = tilted(0.1, &cfg);
    let shift1 = one.centroid().1 - base.centroid().1;
    let shift2 = two.centroid().1 - base.centroid().1;
    // the phase ramp of 2c·y moves the spot by 4·pad·c/λ pixels
    let expected = 4.0 * cfg.padding as f64 * 0.05 / 0.55;
    assert!(
        (shift1 - expected).abs() / expected < 0.05,
        "{shift1} vs {expected}"
    );
    assert!((shift2 / shift1 - 2.0).abs() < 0.04, "{shift2} / {shift1}");
    assert!(one.centroid().0.abs() < 1e-6);
    for k in [&one, &two] {
        let r = rms_radius(k) / rms_radius(&base);
        assert!((r - 1.0).abs() < 0.01, "rms ratio {r}");
    }
}

#[test]
fn zero_aberration_grid_is_field_independent() {
    let cfg = DiffractionConfig {
        pixel_pitch_um: 1.0,
        ..DiffractionConfig::default()
    };
    let engine = PsfEngine::new(&cfg).unwrap();
    let r = engine.diffraction_limited_rms(Channel::G).unwrap();
    let vpl = VplSample::unaberrated("flat", Behavior::Hrdl, vec![r; FOV_COUNT]).unwrap();
    let grid = build_psf_grid(&vpl, &cfg).unwrap();
    let first = grid.kernels()[0].weights();
    for k in grid.kernels() {
        let d = k
            .weights()
            .iter()
            .zip(first)
            .fold(0.0f64, |m, (a, b)| m.max((a - b).abs()));
        assert!(d < 1e-9, "fov {} {}: {d}", k.fov_index(), k.channel());
        assert!((k.weights().iter().sum::<f64>() - 1.0).abs() < 1e-9);
    }
}

#[test]
fn csl_grid_follows_its_radius_curve() {
    let vpl = sample_vpl(&level_spec_by_name("C3").unwrap(), Behavior::Csl, 11).unwrap();
    let grid = build_psf_grid(&vpl, &DiffractionConfig::default()).unwrap();
    for channel in Channel::ALL {
        let rms = grid.rms_radii(channel);
        assert!(rms[FOV_COUNT - 1] > rms[0]);
        let want = vpl.radius_targets[FOV_COUNT - 1] / vpl.radius_targets[0];
        let got = rms[FOV_COUNT - 1] / rms[0];
        assert!((got / want - 1.0).abs() < 0.05, "{got} vs {want}");
        for w in rms.windows(2) {
            assert!(w[1] >= w[0], "rms radius decreased: {} -> {}", w[0], w[1]);
        }
    }
}

#[test]
fn hrdl_grid_stays_within_its_band() {
    let vpl = sample_vpl(&level_spec_by_name("H1").unwrap(), Behavior::Hrdl, 5).unwrap();
    let grid = build_psf_grid(&vpl, &DiffractionConfig::default()).unwrap();
    for channel in Channel::ALL {
        let rms = grid.rms_radii(channel);
        let max = rms.iter().cloned().fold(f64::MIN, f64::max);
        let min = rms.iter().cloned().fold(f64::MAX, f64::min);
        assert!(max / min <= 25.0 / 15.0 * 1.05);
    }
}
