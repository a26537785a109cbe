//! Whole-dataset degradation driven by a tab-separated manifest.
//!
//! ```text
//! #vpl-manifest/1
//! #config  {"optics":...}
//! input  output  sample_id  seed  status
//! img/a.png  -  -  -  -
//! ```
//!
//! Columns are separated by tabs and `-` marks an unset field. Relative
//! paths are resolved against the manifest's directory when it is read from
//! disk.

use super::{degrade_image, load_image, save_png, PatchLayout};
use crate::diffraction::{DiffractionConfig, PsfEngine, PsfGrid};
use crate::rng::SampleRng;
use crate::vplgen::VplSample;
use crate::{Error, Result};
use std::collections::{BTreeMap, HashMap, HashSet};
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

pub const MANIFEST_SCHEMA: &str = "#vpl-manifest/1";
const COLUMNS: &str = "input\toutput\tsample_id\tseed\tstatus";

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum EntryStatus {
    Pending,
    Done,
    Failed(String),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ManifestEntry {
    pub input: PathBuf,
    pub output: Option<PathBuf>,
    pub sample_id: Option<String>,
    pub seed: Option<u64>,
    pub status: EntryStatus,
}

impl ManifestEntry {
    pub fn new(input: impl Into<PathBuf>) -> Self {
        ManifestEntry {
            input: input.into(),
            output: None,
            sample_id: None,
            seed: None,
            status: EntryStatus::Pending,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct DatasetManifest {
    /// Single-line configuration echo of the run that produced the manifest.
    pub config: Option<String>,
    pub entries: Vec<ManifestEntry>,
}

fn field(s: &str) -> Option<&str> {
    (s != "-" && !s.is_empty()).then_some(s)
}

fn clean(s: &str) -> String {
    s.replace(['\t', '\n', '\r'], " ")
}

impl DatasetManifest {
    pub fn parse(text: &str) -> Result<Self> {
        let mut lines = text.lines();
        match lines.next() {
            Some(l) if l.trim_end() == MANIFEST_SCHEMA => {}
            other => {
                return Err(Error::format(
                    "manifest",
                    format!("expected `{MANIFEST_SCHEMA}` header, found {other:?}"),
                ))
            }
        }
        let mut manifest = DatasetManifest::default();
        for (n, line) in lines.enumerate() {
            let line = line.trim_end_matches('\r');
            if let Some(cfg) = line.strip_prefix("#config\t") {
                manifest.config = Some(cfg.to_string());
                continue;
            }
            if line.is_empty() || line.starts_with('#') || line.starts_with("input\t") {
                continue;
            }
            let cols: Vec<&str> = line.split('\t').collect();
            if !(4..=5).contains(&cols.len()) {
                return Err(Error::format(
                    "manifest",
                    format!(
                        "line {}: expected 4 or 5 columns, found {}",
                        n + 2,
                        cols.len()
                    ),
                ));
            }
            let seed = field(cols[3])
                .map(|s| {
                    s.parse::<u64>().map_err(|e| {
                        Error::format("manifest", format!("line {}: seed `{s}`: {e}", n + 2))
                    })
                })
                .transpose()?;
            let status = match cols.get(4).copied().and_then(field) {
                None => EntryStatus::Pending,
                Some("ok") => EntryStatus::Done,
                Some(s) => EntryStatus::Failed(s.strip_prefix("failed: ").unwrap_or(s).to_string()),
            };
            let input = field(cols[0]).ok_or_else(|| {
                Error::format("manifest", format!("line {}: missing input path", n + 2))
            })?;
            manifest.entries.push(ManifestEntry {
                input: input.into(),
                output: field(cols[1]).map(PathBuf::from),
                sample_id: field(cols[2]).map(str::to_string),
                seed,
                status,
            });
        }
        Ok(manifest)
    }

    pub fn to_text(&self) -> String {
        let mut out = String::new();
        out.push_str(MANIFEST_SCHEMA);
        out.push('\n');
        if let Some(cfg) = &self.config {
            let _ = writeln!(out, "#config\t{}", clean(cfg));
        }
        out.push_str(COLUMNS);
        out.push('\n');
        let path = |p: &Path| clean(&p.to_string_lossy());
        for e in &self.entries {
            let _ = writeln!(
                out,
                "{}\t{}\t{}\t{}\t{}",
                path(&e.input),
                e.output.as_deref().map_or("-".into(), path),
                e.sample_id.as_deref().map_or("-".into(), clean),
                e.seed.map_or("-".into(), |s| s.to_string()),
                match &e.status {
                    EntryStatus::Pending => "-".to_string(),
                    EntryStatus::Done => "ok".to_string(),
                    EntryStatus::Failed(m) => format!("failed: {}", clean(m)),
                }
            );
        }
        out
    }

    /// Makes relative paths absolute with respect to `base`.
    pub fn resolve(mut self, base: &Path) -> Self {
        for e in &mut self.entries {
            if e.input.is_relative() {
                e.input = base.join(&e.input);
            }
            if let Some(o) = &mut e.output {
                if o.is_relative() {
                    *o = base.join(&*o);
                }
            }
        }
        self
    }

    pub fn failures(&self) -> usize {
        self.entries
            .iter()
            .filter(|e| matches!(e.status, EntryStatus::Failed(_)))
            .count()
    }
}

/// Reads a manifest and resolves its paths against the file's directory.
pub fn read_manifest(path: &Path) -> Result<DatasetManifest> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let base = path.parent().unwrap_or(Path::new("."));
    Ok(DatasetManifest::parse(&text)?.resolve(base))
}

pub fn write_manifest(manifest: &DatasetManifest, path: &Path) -> Result<()> {
    std::fs::write(path, manifest.to_text()).map_err(|e| Error::io(path, e))
}

fn same_file(a: &Path, b: &Path) -> bool {
    match (a.canonicalize(), b.canonicalize()) {
        (Ok(a), Ok(b)) => a == b,
        _ => a == b,
    }
}

/// Degrades every manifest entry with its assigned sample.
///
/// Entries without a sample id get one by a uniform draw seeded with the
/// entry seed; entries without a seed take the next value of a stream seeded
/// with `seed`. Outputs default to `<out_dir>/<stem>__<sample-id>.png`.
/// Grids in `grids` are reused (resampled to the sensor pitch if needed);
/// missing ones are built. Failures are recorded per entry; the call only
/// fails when the arguments are unusable or every entry failed.
pub fn degrade_dataset(
    manifest: &DatasetManifest,
    samples: &[VplSample],
    optics: &DiffractionConfig,
    layout: &PatchLayout,
    seed: u64,
    out_dir: &Path,
    grids: &HashMap<String, PsfGrid>,
) -> Result<DatasetManifest> {
    if samples.is_empty() {
        return Err(Error::InvalidArgument("sample set is empty".into()));
    }
    if manifest.entries.is_empty() {
        return Err(Error::InvalidArgument("manifest has no entries".into()));
    }
    optics.validate()?;
    layout.validate()?;
    let mut by_id: BTreeMap<&str, &VplSample> = BTreeMap::new();
    for s in samples {
        if by_id.insert(s.id.as_str(), s).is_some() {
            return Err(Error::InvalidArgument(format!(
                "duplicate sample id `{}`",
                s.id
            )));
        }
    }
    let ids: Vec<&str> = by_id.keys().copied().collect();

    let mut stream = SampleRng::new(seed);
    let mut done = manifest.clone();
    for e in &mut done.entries {
        let entry_seed = *e.seed.get_or_insert_with(|| stream.next_u64());
        let id = e
            .sample_id
            .get_or_insert_with(|| ids[SampleRng::new(entry_seed).below(ids.len())].to_string());
        if !by_id.contains_key(id.as_str()) {
            return Err(Error::Lookup(format!(
                "manifest names unknown sample `{id}`"
            )));
        }
        if e.output.is_none() {
            let stem = e
                .input
                .file_stem()
                .map(|s| s.to_string_lossy().into_owned())
                .unwrap_or_else(|| "image".into());
            e.output = Some(out_dir.join(format!("{stem}__{id}.png")));
        }
        e.status = EntryStatus::Pending;
    }
    let mut seen = HashSet::new();
    for e in &done.entries {
        let out = e.output.as_ref().expect("filled above");
        if !seen.insert(out.clone()) {
            return Err(Error::InvalidArgument(format!(
                "output path {} appears twice",
                out.display()
            )));
        }
    }

    let needed: Vec<&str> = {
        let set: std::collections::BTreeSet<&str> = done
            .entries
            .iter()
            .filter_map(|e| e.sample_id.as_deref())
            .collect();
        set.into_iter().collect()
    };
    let engine = PsfEngine::new(optics)?;
    let mut ready: HashMap<&str, std::result::Result<PsfGrid, String>> = HashMap::new();
    for id in needed {
        let grid = match grids.get(id) {
            Some(g) if g.pitch() == optics.pixel_pitch_um => Ok(g.clone()),
            Some(g) => g.to_pitch(optics.pixel_pitch_um),
            None => engine.build_grid(by_id[id]),
        };
        ready.insert(id, grid.map_err(|e| format!("PSF grid of {id}: {e}")));
    }

    std::fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;
    let statuses = crate::par::map_slice(&done.entries, |e| {
        let out = e.output.as_deref().expect("filled above");
        let id = e.sample_id.as_deref().expect("filled above");
        let run = || -> std::result::Result<(), String> {
            if same_file(&e.input, out) {
                return Err("output would overwrite the input".into());
            }
            let grid = ready[id].as_ref().map_err(Clone::clone)?;
            let img = load_image(&e.input).map_err(|e| e.to_string())?;
            let degraded = degrade_image(&img, grid, layout).map_err(|e| e.to_string())?;
            if let Some(dir) = out.parent() {
                std::fs::create_dir_all(dir).map_err(|e| e.to_string())?;
            }
            save_png(&degraded, out).map_err(|e| e.to_string())
        };
        match run() {
            Ok(()) => EntryStatus::Done,
            Err(m) => EntryStatus::Failed(m),
        }
    });
    for (e, s) in done.entries.iter_mut().zip(statuses) {
        e.status = s;
    }
    if done.failures() == done.entries.len() {
        return Err(Error::AllEntriesFailed(done.entries.len()));
    }
    Ok(done)
}
