use anyhow::{Context, Result};
use clap::Args;
use serde::{Deserialize, Serialize};
use std::path::Path;
use vpl_core::diffraction::DiffractionConfig;
use vpl_core::render::PatchLayout;
use vpl_core::vplgen::GeneratorConfig;

/// Everything a run depends on besides its inputs and seeds.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub optics: DiffractionConfig,
    pub layout: PatchLayout,
    pub generator: GeneratorConfig,
}

/// Flags that override single configuration values.
#[derive(Args, Debug, Default)]
pub struct Overrides {
    /// Sensor pixel pitch in micrometers.
    #[arg(long, global = true, value_name = "UM")]
    pixel_pitch: Option<f64>,
    /// PSF kernel side in pixels (odd).
    #[arg(long, global = true, value_name = "PX")]
    kernel_size: Option<usize>,
    /// Pupil samples per side.
    #[arg(long, global = true, value_name = "N")]
    pupil_samples: Option<usize>,
    /// Zero-padding factor of the pupil transform.
    #[arg(long, global = true, value_name = "F")]
    padding: Option<usize>,
    #[arg(long, global = true, value_name = "PX")]
    patch_size: Option<usize>,
    #[arg(long, global = true, value_name = "PX")]
    overlap: Option<usize>,
}

/// Config echo written next to every run's outputs.
#[derive(Debug, Serialize)]
pub struct RunEcho<'a> {
    pub vpl_version: &'static str,
    pub argv: &'a [String],
    pub config: &'a RunConfig,
}

pub const ECHO_FILE: &str = "vpl-run.toml";

impl RunConfig {
    pub fn load(path: Option<&Path>, overrides: &Overrides) -> Result<Self> {
        let mut cfg = match path {
            Some(p) => {
                let text = std::fs::read_to_string(p)
                    .with_context(|| format!("reading config {}", p.display()))?;
                toml::from_str(&text).with_context(|| format!("parsing config {}", p.display()))?
            }
            None => RunConfig::default(),
        };
        let o = overrides;
        if let Some(v) = o.pixel_pitch {
            cfg.optics.pixel_pitch_um = v;
        }
        if let Some(v) = o.kernel_size {
            cfg.optics.kernel_size = v;
        }
        if let Some(v) = o.pupil_samples {
            cfg.optics.pupil_samples = v;
        }
        if let Some(v) = o.padding {
            cfg.optics.padding = v;
        }
        if let Some(v) = o.patch_size {
            cfg.layout.patch_size = v;
        }
        if let Some(v) = o.overlap {
            cfg.layout.overlap = v;
        }
        cfg.optics.validate()?;
        cfg.layout.validate()?;
        cfg.generator.validate()?;
        Ok(cfg)
    }

    pub fn echo<'a>(&'a self, argv: &'a [String]) -> RunEcho<'a> {
        RunEcho {
            vpl_version: env!("CARGO_PKG_VERSION"),
            argv,
            config: self,
        }
    }

    /// Writes the config echo into `dir`.
    pub fn write_echo(&self, dir: &Path, argv: &[String]) -> Result<()> {
        let text = toml::to_string(&self.echo(argv))?;
        let path = dir.join(ECHO_FILE);
        std::fs::write(&path, text).with_context(|| format!("writing {}", path.display()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn echo_reloads_to_the_same_config() {
        let cfg = RunConfig {
            optics: DiffractionConfig {
                pixel_pitch_um: 37.5,
                ..Default::default()
            },
            ..Default::default()
        };
        let text = toml::to_string(&cfg).unwrap();
        let back: RunConfig = toml::from_str(&text).unwrap();
        assert_eq!(back, cfg);
    }

    #[test]
    fn flags_win_over_file() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("c.toml");
        std::fs::write(&path, "[optics]\npixel_pitch_um = 10.0\nkernel_size = 31\n").unwrap();
        let o = Overrides {
            pixel_pitch: Some(30.0),
            ..Default::default()
        };
        let cfg = RunConfig::load(Some(&path), &o).unwrap();
        assert_eq!(cfg.optics.pixel_pitch_um, 30.0);
        assert_eq!(cfg.optics.kernel_size, 31);
    }

    #[test]
    fn unknown_keys_are_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("c.toml");
        std::fs::write(&path, "[optics]\nfocal = 1.0\n").unwrap();
        assert!(RunConfig::load(Some(&path), &Overrides::default()).is_err());
    }
}
