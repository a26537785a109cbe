//! JSON sample files.
//!
//! Floats are written with 17 significant digits (`{:.16e}`), which
//! round-trips every `f64` exactly; the coefficient tensor is nested as
//! `[order][fov][channel]` with the innermost RGB triple on one line.

use super::{TrendChoice, VplSample, ZernikeField};
use crate::{Behavior, Error, Result, FOV_COUNT, ZERNIKE_TERMS};
use serde::{Deserialize, Serialize};
use serde_json::ser::Formatter;
use std::io::{self, Write};
use std::path::Path;

pub const SAMPLE_SCHEMA: &str = "vpl-sample/1";

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct SampleDoc {
    schema: String,
    id: String,
    behavior: Behavior,
    level: u8,
    seed: u64,
    trend_log: Vec<TrendChoice>,
    radius_targets_um: Vec<f64>,
    coefficients_um: Vec<Vec<[f64; 3]>>,
}

/// Pretty JSON with full-precision floats; arrays nested at depth
/// [`INLINE_DEPTH`] or deeper stay on one line.
struct SampleFormatter {
    depth: usize,
    has_value: bool,
}

const INLINE_DEPTH: usize = 4;

impl SampleFormatter {
    fn newline_indent<W: ?Sized + Write>(&self, w: &mut W, depth: usize) -> io::Result<()> {
        w.write_all(b"\n")?;
        for _ in 0..depth {
            w.write_all(b"  ")?;
        }
        Ok(())
    }

    fn inline(&self) -> bool {
        self.depth >= INLINE_DEPTH
    }
}

impl Formatter for SampleFormatter {
    fn write_f64<W: ?Sized + Write>(&mut self, w: &mut W, value: f64) -> io::Result<()> {
        write!(w, "{value:.16e}")
    }

    fn write_f32<W: ?Sized + Write>(&mut self, w: &mut W, value: f32) -> io::Result<()> {
        self.write_f64(w, f64::from(value))
    }

    fn begin_array<W: ?Sized + Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.depth += 1;
        self.has_value = false;
        w.write_all(b"[")
    }

    fn end_array<W: ?Sized + Write>(&mut self, w: &mut W) -> io::Result<()> {
        let was_inline = self.inline();
        self.depth -= 1;
        if self.has_value && !was_inline {
            self.newline_indent(w, self.depth)?;
        }
        w.write_all(b"]")
    }

    fn begin_array_value<W: ?Sized + Write>(&mut self, w: &mut W, first: bool) -> io::Result<()> {
        if !first {
            w.write_all(if self.inline() { b", " } else { b"," })?;
        }
        if !self.inline() {
            self.newline_indent(w, self.depth)?;
        }
        Ok(())
    }

    fn end_array_value<W: ?Sized + Write>(&mut self, _w: &mut W) -> io::Result<()> {
        self.has_value = true;
        Ok(())
    }

    fn begin_object<W: ?Sized + Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.depth += 1;
        self.has_value = false;
        w.write_all(b"{")
    }

    fn end_object<W: ?Sized + Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.depth -= 1;
        if self.has_value {
            self.newline_indent(w, self.depth)?;
        }
        w.write_all(b"}")
    }

    fn begin_object_key<W: ?Sized + Write>(&mut self, w: &mut W, first: bool) -> io::Result<()> {
        if !first {
            w.write_all(b",")?;
        }
        self.newline_indent(w, self.depth)
    }

    fn begin_object_value<W: ?Sized + Write>(&mut self, w: &mut W) -> io::Result<()> {
        w.write_all(b": ")
    }

    fn end_object_value<W: ?Sized + Write>(&mut self, _w: &mut W) -> io::Result<()> {
        self.has_value = true;
        Ok(())
    }
}

/// Serializes `value` as pretty JSON with 17-significant-digit floats.
pub(crate) fn to_precise_json<T: Serialize>(value: &T) -> Result<String> {
    let mut buf = Vec::new();
    let mut ser = serde_json::Serializer::with_formatter(
        &mut buf,
        SampleFormatter {
            depth: 0,
            has_value: false,
        },
    );
    value
        .serialize(&mut ser)
        .map_err(|e| Error::format("json document", e.to_string()))?;
    buf.push(b'\n');
    String::from_utf8(buf).map_err(|e| Error::format("json document", e.to_string()))
}

pub fn sample_to_string(sample: &VplSample) -> Result<String> {
    let coefficients_um = (0..ZERNIKE_TERMS)
        .map(|o| {
            (0..FOV_COUNT)
                .map(|f| {
                    let base = (o * FOV_COUNT + f) * 3;
                    let v = &sample.coeffs.values()[base..base + 3];
                    [v[0], v[1], v[2]]
                })
                .collect()
        })
        .collect();
    let doc = SampleDoc {
        schema: SAMPLE_SCHEMA.to_string(),
        id: sample.id.clone(),
        behavior: sample.behavior,
        level: sample.level,
        seed: sample.seed,
        trend_log: sample.trend_log.clone(),
        radius_targets_um: sample.radius_targets.clone(),
        coefficients_um,
    };
    to_precise_json(&doc)
}

pub fn sample_from_str(text: &str) -> Result<VplSample> {
    let doc: SampleDoc =
        serde_json::from_str(text).map_err(|e| Error::format("sample file", e.to_string()))?;
    if doc.schema != SAMPLE_SCHEMA {
        return Err(Error::format(
            "sample file",
            format!("unsupported schema `{}`", doc.schema),
        ));
    }
    if doc.coefficients_um.len() != ZERNIKE_TERMS
        || doc.coefficients_um.iter().any(|o| o.len() != FOV_COUNT)
    {
        return Err(Error::format(
            "sample file",
            "coefficient tensor is not 37x128x3",
        ));
    }
    if doc.radius_targets_um.len() != FOV_COUNT {
        return Err(Error::format(
            "sample file",
            "radius curve must have 128 entries",
        ));
    }
    if !(1..=4).contains(&doc.level) {
        return Err(Error::format("sample file", format!("level {}", doc.level)));
    }
    let values = doc
        .coefficients_um
        .into_iter()
        .flatten()
        .flatten()
        .collect();
    Ok(VplSample {
        id: doc.id,
        behavior: doc.behavior,
        level: doc.level,
        seed: doc.seed,
        trend_log: doc.trend_log,
        radius_targets: doc.radius_targets_um,
        coeffs: ZernikeField::from_values(values)?,
    })
}

pub fn write_sample(sample: &VplSample, path: &Path) -> Result<()> {
    let text = sample_to_string(sample)?;
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

pub fn read_sample(path: &Path) -> Result<VplSample> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    sample_from_str(&text)
}
