//! Random virtual prototype lenses.
//!
//! A lens is drawn per Noll order: pick a curve trend over the field, draw a
//! signed peak from the level row, fit the trend through that peak over the
//! 128 field bins, then jitter each spectral channel. Spot-radius targets
//! over the field come from the row's radius range.
//!
//! Draw order for a seed, all from one [`SampleRng`]: center radius, edge
//! radius, then for `j = 1..=37` the trend, the sign, the fraction `r` and
//! the R, G, B jitter factors.

mod io;
mod levels;

pub use io::{read_sample, sample_from_str, sample_to_string, write_sample, SAMPLE_SCHEMA};
pub use levels::{level_spec, level_spec_by_name, LevelId, LevelSpec, OrderRange, DOMINANT_ORDERS};

use crate::rng::SampleRng;
use crate::zernike::NollIndex;
use crate::{Behavior, Channel, Error, Result, FOV_COUNT, ZERNIKE_TERMS};
use serde::{Deserialize, Serialize};

/// Shape of a coefficient-over-field curve.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TrendId {
    Constant,
    Increasing,
    Decreasing,
    UnimodalMid,
    UnimodalEdge,
}

/// Trend picked for one order, with the peak it was fitted through.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrendChoice {
    pub order: usize,
    pub trend: TrendId,
    /// Extreme value of the fitted curve before chromatic jitter, µm.
    pub peak: f64,
}

/// Tunables of the generator that the level table leaves open.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GeneratorConfig {
    /// Peak-fraction range for orders without a tabulated range.
    pub fallback_fraction: (f64, f64),
    /// Per-channel multiplicative jitter half-width.
    pub chromatic_jitter: f64,
    /// Center radius is drawn from `[min, min · center_factor]`.
    pub center_factor: f64,
    /// Edge radius is drawn from `[max · edge_factor, max]`.
    pub edge_factor: f64,
}

impl Default for GeneratorConfig {
    fn default() -> Self {
        GeneratorConfig {
            fallback_fraction: (0.05, 0.3),
            chromatic_jitter: 0.1,
            center_factor: 1.2,
            edge_factor: 0.8,
        }
    }
}

impl GeneratorConfig {
    pub fn validate(&self) -> Result<()> {
        let (lo, hi) = self.fallback_fraction;
        if !(0.0 <= lo && lo <= hi && hi <= 1.0) {
            return Err(Error::Configuration(format!(
                "fallback fraction ({lo}, {hi}) must be an ordered range in [0, 1]"
            )));
        }
        if !(0.0..1.0).contains(&self.chromatic_jitter) {
            return Err(Error::Configuration(
                "chromatic jitter must be in [0, 1)".into(),
            ));
        }
        if !(self.center_factor >= 1.0 && self.edge_factor > 0.0 && self.edge_factor <= 1.0) {
            return Err(Error::Configuration(
                "center factor must be >= 1 and edge factor in (0, 1]".into(),
            ));
        }
        Ok(())
    }
}

/// Zernike coefficients over 37 orders × 128 field bins × 3 channels, µm OPD.
#[derive(Debug, Clone, PartialEq)]
pub struct ZernikeField {
    values: Vec<f64>,
}

impl ZernikeField {
    pub const LEN: usize = ZERNIKE_TERMS * FOV_COUNT * 3;

    pub fn zeros() -> Self {
        ZernikeField {
            values: vec![0.0; Self::LEN],
        }
    }

    pub fn from_values(values: Vec<f64>) -> Result<Self> {
        if values.len() != Self::LEN {
            return Err(Error::ShapeMismatch(format!(
                "coefficient tensor has {} entries, expected 37x128x3",
                values.len()
            )));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidArgument("non-finite coefficient".into()));
        }
        Ok(ZernikeField { values })
    }

    fn offset(order: NollIndex, fov: usize, channel: Channel) -> usize {
        (order.slot() * FOV_COUNT + fov) * 3 + channel.index()
    }

    pub fn get(&self, order: NollIndex, fov: usize, channel: Channel) -> f64 {
        self.values[Self::offset(order, fov, channel)]
    }

    pub fn set(&mut self, order: NollIndex, fov: usize, channel: Channel, value: f64) {
        self.values[Self::offset(order, fov, channel)] = value;
    }

    /// The 37 coefficients of one field bin and channel.
    pub fn column(&self, fov: usize, channel: Channel) -> [f64; ZERNIKE_TERMS] {
        let mut out = [0.0; ZERNIKE_TERMS];
        for j in NollIndex::all() {
            out[j.slot()] = self.get(j, fov, channel);
        }
        out
    }

    /// Flat values in `[order][fov][channel]` order.
    pub fn values(&self) -> &[f64] {
        &self.values
    }
}

/// One virtual lens.
#[derive(Debug, Clone, PartialEq)]
pub struct VplSample {
    pub id: String,
    pub behavior: Behavior,
    /// Tabulated level the sample was drawn from, 1 to 4.
    pub level: u8,
    pub seed: u64,
    pub trend_log: Vec<TrendChoice>,
    /// Target RMS spot radius per field bin, µm, shared by the channels.
    pub radius_targets: Vec<f64>,
    pub coeffs: ZernikeField,
}

impl VplSample {
    pub fn level_id(&self) -> Result<LevelId> {
        LevelId::new(self.behavior, self.level)
    }

    /// Lens with no aberrations and the given radius curve.
    pub fn unaberrated(id: &str, behavior: Behavior, radius_targets: Vec<f64>) -> Result<Self> {
        if radius_targets.len() != FOV_COUNT {
            return Err(Error::ShapeMismatch(format!(
                "{} radius targets, expected {FOV_COUNT}",
                radius_targets.len()
            )));
        }
        Ok(VplSample {
            id: id.to_string(),
            behavior,
            level: 1,
            seed: 0,
            trend_log: Vec::new(),
            radius_targets,
            coeffs: ZernikeField::zeros(),
        })
    }

    /// Checks shape and conformance to `spec`.
    pub fn check_against(&self, spec: &LevelSpec) -> Result<()> {
        let (neg, pos) = spec.overall;
        if let Some(v) = self.coeffs.values().iter().find(|v| **v < neg || **v > pos) {
            return Err(Error::InvalidArgument(format!(
                "{}: coefficient {v} outside ({neg}, {pos})",
                self.id
            )));
        }
        let (rmin, rmax) = spec.radius_um;
        if self.radius_targets.len() != FOV_COUNT {
            return Err(Error::ShapeMismatch("radius curve length".into()));
        }
        if let Some(r) = self
            .radius_targets
            .iter()
            .find(|r| **r < rmin || **r > rmax)
        {
            return Err(Error::InvalidArgument(format!(
                "{}: radius target {r} outside ({rmin}, {rmax})",
                self.id
            )));
        }
        Ok(())
    }
}

/// Signed peak from a fixed sign and fraction: `±r · |bound|`.
pub fn peak_from_draws(spec: &LevelSpec, negative: bool, r: f64) -> f64 {
    if negative {
        -r * spec.overall.0.abs()
    } else {
        r * spec.overall.1.abs()
    }
}

fn fraction_range(
    spec: &LevelSpec,
    order: NollIndex,
    negative: bool,
    gen: &GeneratorConfig,
) -> (f64, f64) {
    match spec.order_range(order.get()) {
        Some(r) if negative => r.negative,
        Some(r) => r.positive,
        None => gen.fallback_fraction,
    }
}

/// Draws the signed curve peak of `order`: a fair sign, then `r` uniform in
/// that sign's fraction range, times the matching overall bound.
pub fn sample_curve_peak(spec: &LevelSpec, order: NollIndex, rng: &mut SampleRng) -> f64 {
    sample_curve_peak_with(spec, order, rng, &GeneratorConfig::default())
}

pub fn sample_curve_peak_with(
    spec: &LevelSpec,
    order: NollIndex,
    rng: &mut SampleRng,
    gen: &GeneratorConfig,
) -> f64 {
    let negative = rng.coin();
    let (lo, hi) = fraction_range(spec, order, negative, gen);
    let r = rng.range(lo, hi);
    peak_from_draws(spec, negative, r)
}

/// Fits `trend` through `peak` over `n` field bins.
///
/// All shapes are piecewise low-order polynomials whose largest magnitude is
/// exactly `|peak|`. `UnimodalMid` peaks at bin `n / 2` and is built from two
/// quadratic halves with zero slope at the top.
pub fn fit_fov_curve(trend: TrendId, peak: f64, n: usize) -> Vec<f64> {
    assert!(n >= 2, "a field curve needs at least two bins");
    let last = (n - 1) as f64;
    let mid = n / 2;
    (0..n)
        .map(|i| {
            let t = i as f64 / last;
            match trend {
                TrendId::Constant => peak,
                TrendId::Increasing => peak * t,
                TrendId::Decreasing => peak * (1.0 - t),
                TrendId::UnimodalEdge => peak * t * t,
                TrendId::UnimodalMid => {
                    let span = if i <= mid { mid } else { n - 1 - mid } as f64;
                    let d = (i as f64 - mid as f64) / span;
                    peak * (1.0 - d * d)
                }
            }
        })
        .map(|v| if v == 0.0 { 0.0 } else { v })
        .collect()
}

/// Trend menu per behavior: `(trend, peak factor, weight)`.
fn trend_menu(behavior: Behavior) -> [(TrendId, f64, f64); 3] {
    match behavior {
        Behavior::Csl => [
            (TrendId::Increasing, 1.0, 0.5),
            (TrendId::UnimodalMid, 1.0, 0.25),
            (TrendId::UnimodalEdge, 1.0, 0.25),
        ],
        Behavior::Hrdl => [
            (TrendId::Constant, 1.0, 0.5),
            (TrendId::Increasing, 0.5, 0.25),
            (TrendId::UnimodalMid, 1.0, 0.25),
        ],
    }
}

/// Spot-radius targets over the field.
///
/// The center value is uniform in `[min, min·1.2]` and the edge value in
/// `[max·0.8, max]`, both clipped to the row range. CSL interpolates with a
/// quadratic ramp, HRDL linearly.
pub fn radius_targets(spec: &LevelSpec, behavior: Behavior, rng: &mut SampleRng) -> Vec<f64> {
    radius_targets_with(spec, behavior, rng, &GeneratorConfig::default())
}

pub fn radius_targets_with(
    spec: &LevelSpec,
    behavior: Behavior,
    rng: &mut SampleRng,
    gen: &GeneratorConfig,
) -> Vec<f64> {
    let (rmin, rmax) = spec.radius_um;
    let center = rng.range(rmin, rmin * gen.center_factor).clamp(rmin, rmax);
    let edge = rng.range(rmax * gen.edge_factor, rmax).clamp(rmin, rmax);
    let last = (FOV_COUNT - 1) as f64;
    (0..FOV_COUNT)
        .map(|i| {
            let t = i as f64 / last;
            let w = match behavior {
                Behavior::Csl => t * t,
                Behavior::Hrdl => t,
            };
            let v = match i {
                0 => center,
                i if i == FOV_COUNT - 1 => edge,
                _ => center + (edge - center) * w,
            };
            v.clamp(rmin, rmax)
        })
        .collect()
}

/// Draws one lens for `spec` with the default generator settings.
pub fn sample_vpl(spec: &LevelSpec, behavior: Behavior, seed: u64) -> Result<VplSample> {
    sample_vpl_with(spec, behavior, seed, &GeneratorConfig::default())
}

pub fn sample_vpl_with(
    spec: &LevelSpec,
    behavior: Behavior,
    seed: u64,
    gen: &GeneratorConfig,
) -> Result<VplSample> {
    spec.validate()?;
    gen.validate()?;
    if spec.id.behavior != behavior {
        return Err(Error::InvalidArgument(format!(
            "level {} does not belong to behavior {behavior}",
            spec.id
        )));
    }
    let mut rng = SampleRng::new(seed);
    let radius = radius_targets_with(spec, behavior, &mut rng, gen);
    let menu = trend_menu(behavior);
    let weights: Vec<f64> = menu.iter().map(|m| m.2).collect();
    let (neg, pos) = spec.overall;

    let mut coeffs = ZernikeField::zeros();
    let mut trend_log = Vec::with_capacity(ZERNIKE_TERMS);
    for order in NollIndex::all() {
        let (trend, factor, _) = menu[rng.weighted(&weights)];
        let peak = factor * sample_curve_peak_with(spec, order, &mut rng, gen);
        let curve = fit_fov_curve(trend, peak, FOV_COUNT);
        for channel in Channel::ALL {
            let jitter = rng.range(1.0 - gen.chromatic_jitter, 1.0 + gen.chromatic_jitter);
            for (fov, v) in curve.iter().enumerate() {
                coeffs.set(order, fov, channel, (v * jitter).clamp(neg, pos));
            }
        }
        trend_log.push(TrendChoice {
            order: order.get(),
            trend,
            peak,
        });
    }
    Ok(VplSample {
        id: format!("{}-{seed}", spec.id),
        behavior,
        level: spec.id.level,
        seed,
        trend_log,
        radius_targets: radius,
        coeffs,
    })
}

/// Hybrid level-5 pool: samples cycle through levels 1 to 4 of `behavior`,
/// one seed each.
pub fn sample_level5(behavior: Behavior, seeds: &[u64]) -> Result<Vec<VplSample>> {
    sample_level5_with(behavior, seeds, &GeneratorConfig::default())
}

pub fn sample_level5_with(
    behavior: Behavior,
    seeds: &[u64],
    gen: &GeneratorConfig,
) -> Result<Vec<VplSample>> {
    if seeds.len() < 4 {
        return Err(Error::InvalidArgument(format!(
            "level 5 needs at least 4 samples, got {}",
            seeds.len()
        )));
    }
    let mut seen = std::collections::HashSet::new();
    if let Some(dup) = seeds.iter().find(|s| !seen.insert(**s)) {
        return Err(Error::InvalidArgument(format!("duplicate seed {dup}")));
    }
    crate::par::map_range(seeds.len(), |i| {
        let id = LevelId::new(behavior, (i % 4) as u8 + 1)?;
        sample_vpl_with(&level_spec(id), behavior, seeds[i], gen)
    })
    .into_iter()
    .collect()
}
