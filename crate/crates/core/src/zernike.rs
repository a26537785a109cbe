//! Zernike circle polynomials in Noll ordering.
//!
//! | j | 1 | 2 | 3 | 4 | 5 | 6 | 7 | 8 | 9 | 10 | 11 | ... |
//! |---|---|---|---|---|---|---|---|---|---|----|----|-----|
//! | n | 0 | 1 | 1 | 2 | 2 | 2 | 3 | 3 | 3 | 3  | 4  | ... |
//! | m | 0 | 1 | -1| 0 | -2| 2 | -1| 1 | -3| 3  | 0  | ... |
//!
//! Positive `m` is the cosine term, negative `m` the sine term; within a
//! radial degree, even `j` carries the cosine. Polynomials use Noll's unit-RMS
//! normalization over the unit disk, so `Z_4` is defocus `√3 (2ρ² − 1)` and
//! `Z_3` is y-tilt `2ρ sin θ`. Wavefront coefficients are micrometers of
//! optical path difference.

use crate::{Error, Result, ZERNIKE_TERMS};

/// Noll index `j` in `1..=37`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct NollIndex(u8);

impl NollIndex {
    pub const MAX: usize = ZERNIKE_TERMS;

    pub fn new(j: usize) -> Result<Self> {
        if (1..=Self::MAX).contains(&j) {
            Ok(NollIndex(j as u8))
        } else {
            Err(Error::IndexOutOfRange(format!(
                "Noll index {j} outside 1..={}",
                Self::MAX
            )))
        }
    }

    pub fn get(self) -> usize {
        self.0 as usize
    }

    /// Zero-based slot, `j - 1`.
    pub fn slot(self) -> usize {
        self.0 as usize - 1
    }

    pub fn all() -> impl Iterator<Item = NollIndex> {
        (1..=Self::MAX).map(|j| NollIndex(j as u8))
    }
}

/// Radial degree `n` and signed azimuthal frequency `m` for a Noll index.
pub fn noll_to_nm(j: NollIndex) -> (u32, i32) {
    let j = j.get();
    // row n holds indices n(n+1)/2 + 1 ..= (n+1)(n+2)/2
    let mut n = 0usize;
    while (n + 1) * (n + 2) / 2 < j {
        n += 1;
    }
    let p = j - n * (n + 1) / 2 - 1;
    let abs_m = if n.is_multiple_of(2) {
        2 * p.div_ceil(2)
    } else {
        2 * (p / 2) + 1
    };
    let m = if abs_m == 0 {
        0
    } else if j.is_multiple_of(2) {
        abs_m as i32
    } else {
        -(abs_m as i32)
    };
    (n as u32, m)
}

/// Power-series coefficients of the radial polynomial `R_n^|m|`, highest
/// power first, stepping down by two.
fn radial_coefficients(n: u32, abs_m: u32) -> Vec<(i32, f64)> {
    fn fact(k: u32) -> f64 {
        (1..=k).map(f64::from).product()
    }
    let half_sum = (n + abs_m) / 2;
    let half_diff = (n - abs_m) / 2;
    (0..=half_diff)
        .map(|s| {
            let sign = if s % 2 == 0 { 1.0 } else { -1.0 };
            let c = sign * fact(n - s) / (fact(s) * fact(half_sum - s) * fact(half_diff - s));
            ((n - 2 * s) as i32, c)
        })
        .collect()
}

/// One Zernike term with its radial coefficients resolved.
#[derive(Debug, Clone)]
struct Term {
    m: i32,
    norm: f64,
    radial: Vec<(i32, f64)>,
}

impl Term {
    fn new(j: NollIndex) -> Self {
        let (n, m) = noll_to_nm(j);
        let norm = if m == 0 {
            f64::from(n + 1).sqrt()
        } else {
            (2.0 * f64::from(n + 1)).sqrt()
        };
        Term {
            m,
            norm,
            radial: radial_coefficients(n, m.unsigned_abs()),
        }
    }

    fn eval(&self, rho: f64, theta: f64) -> f64 {
        let r: f64 = self.radial.iter().map(|&(p, c)| c * rho.powi(p)).sum();
        let angular = match self.m {
            0 => 1.0,
            m if m > 0 => (f64::from(m) * theta).cos(),
            m => (f64::from(-m) * theta).sin(),
        };
        self.norm * r * angular
    }
}

/// Evaluates the Noll-normalized `Z_j(ρ, θ)`. `ρ` must lie in `[0, 1]`.
pub fn zernike_eval(j: NollIndex, rho: f64, theta: f64) -> Result<f64> {
    if !(0.0..=1.0).contains(&rho) {
        return Err(Error::Domain(format!("rho = {rho} outside [0, 1]")));
    }
    Ok(Term::new(j).eval(rho, theta))
}

/// Square sampling of the normalized exit pupil `[-1, 1]²`.
///
/// Sample `i` sits at `(2i + 1 - n) / n`, so the lattice is symmetric about
/// the origin and never samples it directly.
#[derive(Debug, Clone, PartialEq)]
pub struct PupilGrid {
    n: usize,
}

impl PupilGrid {
    pub fn new(n: usize) -> Result<Self> {
        if n < 16 || !n.is_multiple_of(2) {
            return Err(Error::InvalidArgument(format!(
                "pupil grid needs an even size >= 16, got {n}"
            )));
        }
        Ok(PupilGrid { n })
    }

    pub fn size(&self) -> usize {
        self.n
    }

    pub fn len(&self) -> usize {
        self.n * self.n
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    /// Normalized coordinate of sample `i` along either axis.
    pub fn coord(&self, i: usize) -> f64 {
        (2.0 * i as f64 + 1.0 - self.n as f64) / self.n as f64
    }

    /// `(x', y')` of the sample at `(row, col)`; rows run along y.
    pub fn xy(&self, row: usize, col: usize) -> (f64, f64) {
        (self.coord(col), self.coord(row))
    }

    pub fn in_pupil(&self, row: usize, col: usize) -> bool {
        let (x, y) = self.xy(row, col);
        x * x + y * y <= 1.0
    }

    /// Row-major aperture mask.
    pub fn mask(&self) -> Vec<bool> {
        (0..self.len())
            .map(|k| self.in_pupil(k / self.n, k % self.n))
            .collect()
    }

    /// Number of samples inside the unit disk.
    pub fn area(&self) -> usize {
        self.mask().iter().filter(|m| **m).count()
    }

    /// Polar coordinates of a sample, `None` outside the pupil.
    pub fn polar(&self, row: usize, col: usize) -> Option<(f64, f64)> {
        let (x, y) = self.xy(row, col);
        let r2 = x * x + y * y;
        (r2 <= 1.0).then(|| (r2.sqrt(), y.atan2(x)))
    }
}

/// Optical path difference over a pupil grid, micrometers; zero outside the
/// aperture.
#[derive(Debug, Clone, PartialEq)]
pub struct WavefrontMap {
    grid: PupilGrid,
    values: Vec<f64>,
}

impl WavefrontMap {
    /// Wraps raw values. Entries outside the aperture are forced to zero.
    pub fn from_values(grid: PupilGrid, mut values: Vec<f64>) -> Result<Self> {
        if values.len() != grid.len() {
            return Err(Error::ShapeMismatch(format!(
                "{} values for a {}x{} grid",
                values.len(),
                grid.size(),
                grid.size()
            )));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidArgument("non-finite wavefront value".into()));
        }
        let n = grid.size();
        for (k, v) in values.iter_mut().enumerate() {
            if !grid.in_pupil(k / n, k % n) {
                *v = 0.0;
            }
        }
        Ok(WavefrontMap { grid, values })
    }

    /// Constant OPD inside the aperture.
    pub fn constant(grid: PupilGrid, value: f64) -> Result<Self> {
        let values = vec![value; grid.len()];
        Self::from_values(grid, values)
    }

    pub fn grid(&self) -> &PupilGrid {
        &self.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn at(&self, row: usize, col: usize) -> f64 {
        self.values[row * self.grid.size() + col]
    }

    /// Uniformly scales the map.
    pub fn scaled(&self, factor: f64) -> WavefrontMap {
        WavefrontMap {
            grid: self.grid.clone(),
            values: self.values.iter().map(|v| v * factor).collect(),
        }
    }

    /// Largest OPD gradient magnitude inside the aperture, µm per unit of
    /// normalized pupil radius, from central differences between pupil samples.
    pub fn max_gradient(&self) -> f64 {
        let n = self.grid.size();
        let step = 2.0 / n as f64;
        let mut best = 0.0f64;
        for row in 1..n - 1 {
            for col in 1..n - 1 {
                if !(self.grid.in_pupil(row, col)
                    && self.grid.in_pupil(row, col - 1)
                    && self.grid.in_pupil(row, col + 1)
                    && self.grid.in_pupil(row - 1, col)
                    && self.grid.in_pupil(row + 1, col))
                {
                    continue;
                }
                let gx = (self.at(row, col + 1) - self.at(row, col - 1)) / (2.0 * step);
                let gy = (self.at(row + 1, col) - self.at(row - 1, col)) / (2.0 * step);
                best = best.max(gx.hypot(gy));
            }
        }
        best
    }
}

/// All 37 terms sampled on one pupil grid, for fast repeated synthesis.
#[derive(Debug, Clone)]
pub struct ZernikeBasis {
    grid: PupilGrid,
    /// `terms[j-1][k]` for row-major sample `k`; zero outside the aperture.
    terms: Vec<Vec<f64>>,
}

impl ZernikeBasis {
    pub fn new(grid: &PupilGrid) -> Self {
        let n = grid.size();
        let terms = NollIndex::all()
            .map(|j| {
                let term = Term::new(j);
                (0..grid.len())
                    .map(|k| match grid.polar(k / n, k % n) {
                        Some((rho, theta)) => term.eval(rho, theta),
                        None => 0.0,
                    })
                    .collect()
            })
            .collect();
        ZernikeBasis {
            grid: grid.clone(),
            terms,
        }
    }

    pub fn grid(&self) -> &PupilGrid {
        &self.grid
    }

    /// Sampled values of `Z_j`.
    pub fn term(&self, j: NollIndex) -> &[f64] {
        &self.terms[j.slot()]
    }

    /// Wavefront for a coefficient vector, same result as [`wavefront_map`].
    pub fn synthesize(&self, coeffs: &[f64]) -> Result<WavefrontMap> {
        check_coeffs(coeffs)?;
        let mut values = vec![0.0; self.grid.len()];
        for (c, term) in coeffs.iter().zip(&self.terms) {
            if *c == 0.0 {
                continue;
            }
            for (v, z) in values.iter_mut().zip(term) {
                *v += c * z;
            }
        }
        Ok(WavefrontMap {
            grid: self.grid.clone(),
            values,
        })
    }
}

fn check_coeffs(coeffs: &[f64]) -> Result<()> {
    if coeffs.len() != ZERNIKE_TERMS {
        return Err(Error::InvalidArgument(format!(
            "expected {ZERNIKE_TERMS} Zernike coefficients, got {}",
            coeffs.len()
        )));
    }
    if let Some(j) = coeffs.iter().position(|c| !c.is_finite()) {
        return Err(Error::InvalidArgument(format!(
            "coefficient for j={} is not finite",
            j + 1
        )));
    }
    Ok(())
}

/// `W(x', y') = Σ_j c_j Z_j(ρ, θ)` on the aperture, zero outside.
pub fn wavefront_map(coeffs: &[f64], grid: &PupilGrid) -> Result<WavefrontMap> {
    check_coeffs(coeffs)?;
    let terms: Vec<Term> = NollIndex::all().map(Term::new).collect();
    let n = grid.size();
    let values = (0..grid.len())
        .map(|k| match grid.polar(k / n, k % n) {
            Some((rho, theta)) => coeffs
                .iter()
                .zip(&terms)
                .filter(|(c, _)| **c != 0.0)
                .map(|(c, t)| c * t.eval(rho, theta))
                .sum(),
            None => 0.0,
        })
        .collect();
    Ok(WavefrontMap {
        grid: grid.clone(),
        values,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::SampleRng;
    use std::f64::consts::{FRAC_PI_2, PI};

    fn j(v: usize) -> NollIndex {
        NollIndex::new(v).unwrap()
    }

    #[test]
    fn noll_index_bounds() {
        assert!(NollIndex::new(0).is_err());
        assert!(NollIndex::new(38).is_err());
        assert!(NollIndex::new(1).is_ok());
        assert!(NollIndex::new(37).is_ok());
    }

    #[test]
    fn noll_named_orders() {
        assert_eq!(noll_to_nm(j(1)), (0, 0));
        assert_eq!(noll_to_nm(j(3)), (1, -1));
        assert_eq!(noll_to_nm(j(4)), (2, 0));
        assert_eq!(noll_to_nm(j(6)), (2, 2));
        assert_eq!(noll_to_nm(j(7)), (3, -1));
        assert_eq!(noll_to_nm(j(9)), (3, -3));
        assert_eq!(noll_to_nm(j(11)), (4, 0));
        assert_eq!(noll_to_nm(j(22)), (6, 0));
        assert_eq!(noll_to_nm(j(37)), (8, 0));
    }

    #[test]
    fn noll_mapping_is_a_bijection_onto_valid_pairs() {
        let mut seen = std::collections::HashSet::new();
        for idx in NollIndex::all() {
            let (n, m) = noll_to_nm(idx);
            assert!(m.unsigned_abs() <= n);
            assert_eq!((n - m.unsigned_abs()) % 2, 0);
            assert!(seen.insert((n, m)), "duplicate pair for j={}", idx.get());
        }
        assert_eq!(seen.len(), 37);
    }

    #[test]
    fn eval_examples() {
        assert_eq!(zernike_eval(j(1), 0.3, 1.1).unwrap(), 1.0);
        let defocus = zernike_eval(j(4), 0.0, 0.0).unwrap();
        assert!((defocus + 3f64.sqrt()).abs() < 1e-15);
        let tilt = zernike_eval(j(3), 1.0, FRAC_PI_2).unwrap();
        assert!((tilt - 2.0).abs() < 1e-15);
    }

    #[test]
    fn eval_rejects_rho_outside_disk() {
        assert!(matches!(
            zernike_eval(j(4), 1.0001, 0.0),
            Err(Error::Domain(_))
        ));
        assert!(zernike_eval(j(4), -0.1, 0.0).is_err());
    }

    #[test]
    fn rotationally_symmetric_terms_ignore_theta() {
        for idx in NollIndex::all().filter(|i| noll_to_nm(*i).1 == 0) {
            for rho in [0.0, 0.25, 0.7, 1.0] {
                let a = zernike_eval(idx, rho, 0.0).unwrap();
                for theta in [0.4, 1.9, PI, 5.0] {
                    let b = zernike_eval(idx, rho, theta).unwrap();
                    assert!((a - b).abs() < 1e-12);
                }
            }
        }
    }

    #[test]
    fn pupil_grid_symmetry_and_mask() {
        let g = PupilGrid::new(32).unwrap();
        for i in 0..32 {
            assert!((g.coord(i) + g.coord(31 - i)).abs() < 1e-15);
        }
        for row in 0..32 {
            for col in 0..32 {
                let (x, y) = g.xy(row, col);
                assert_eq!(g.in_pupil(row, col), x * x + y * y <= 1.0);
            }
        }
        assert!(PupilGrid::new(15).is_err());
        assert!(PupilGrid::new(17).is_err());
        assert!(PupilGrid::new(8).is_err());
    }

    #[test]
    fn wavefront_zero_and_piston() {
        let g = PupilGrid::new(16).unwrap();
        let w = wavefront_map(&[0.0; 37], &g).unwrap();
        assert!(w.values().iter().all(|v| *v == 0.0));
        let mut c = [0.0; 37];
        c[0] = 0.5;
        let w = wavefront_map(&c, &g).unwrap();
        let mask = g.mask();
        for (v, m) in w.values().iter().zip(mask) {
            assert_eq!(*v, if m { 0.5 } else { 0.0 });
        }
    }

    #[test]
    fn wavefront_rejects_non_finite() {
        let g = PupilGrid::new(16).unwrap();
        let mut c = [0.0; 37];
        c[5] = f64::NAN;
        assert!(wavefront_map(&c, &g).is_err());
        assert!(wavefront_map(&[0.0; 36], &g).is_err());
    }

    #[test]
    fn wavefront_matches_term_by_term_sum() {
        let g = PupilGrid::new(32).unwrap();
        let mut rng = SampleRng::new(11);
        let c: Vec<f64> = (0..37).map(|_| rng.range(-1.0, 1.0)).collect();
        let w = wavefront_map(&c, &g).unwrap();
        let b = ZernikeBasis::new(&g).synthesize(&c).unwrap();
        for row in 0..32 {
            for col in 0..32 {
                let (x, y) = g.xy(row, col);
                let r2 = x * x + y * y;
                let expected = if r2 <= 1.0 {
                    // independent route: evaluate every term separately
                    let (rho, theta) = (r2.sqrt(), y.atan2(x));
                    let mut acc = 0.0;
                    for idx in NollIndex::all() {
                        acc += c[idx.slot()] * zernike_eval(idx, rho, theta).unwrap();
                    }
                    acc
                } else {
                    0.0
                };
                assert!((w.at(row, col) - expected).abs() < 1e-12);
                assert!((b.at(row, col) - expected).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn discrete_orthonormality_on_1024_grid() {
        let g = PupilGrid::new(1024).unwrap();
        let basis = ZernikeBasis::new(&g);
        let area = g.area() as f64;
        for a in NollIndex::all() {
            for b in NollIndex::all().filter(|b| *b >= a) {
                let dot: f64 = basis
                    .term(a)
                    .iter()
                    .zip(basis.term(b))
                    .map(|(x, y)| x * y)
                    .sum::<f64>()
                    / area;
                if a == b {
                    assert!((dot - 1.0).abs() < 1e-3, "<Z{0},Z{0}> = {dot}", a.get());
                } else {
                    assert!(dot.abs() < 1e-3, "<Z{},Z{}> = {dot}", a.get(), b.get());
                }
            }
        }
    }

    #[test]
    fn max_gradient_of_tilt() {
        let g = PupilGrid::new(64).unwrap();
        let mut c = [0.0; 37];
        c[2] = 0.25;
        let w = wavefront_map(&c, &g).unwrap();
        // y-tilt 2ρ sin θ = 2y has gradient 2 per unit radius
        assert!((w.max_gradient() - 0.5).abs() < 1e-12);
    }
}
