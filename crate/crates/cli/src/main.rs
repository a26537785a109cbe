//! `vpl`: generate virtual lenses, build their PSF grids, degrade images,
//! render checkerboard diagnostics and score segmentations.

mod config;

use anyhow::{bail, Context, Result};
use clap::{CommandFactory, Parser, Subcommand};
use config::{Overrides, RunConfig};
use serde_json::{json, Value};
use std::collections::HashMap;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use vpl_core::diffraction::{read_psf_file, write_psf_file, PsfEngine, PsfGrid};
use vpl_core::render::{
    checker_report, degrade_dataset, degrade_image, load_image, read_manifest, save_png,
    write_manifest, EntryStatus,
};
use vpl_core::segeval::{evaluate_dirs, CITYSCAPES_CLASSES};
use vpl_core::vplgen::{
    level_spec, read_sample, sample_level5_with, sample_vpl_with, write_sample, LevelId, VplSample,
};
use vpl_core::{Behavior, Channel};

#[derive(Parser, Debug)]
#[command(name = "vpl", version, about = "Virtual prototype lens simulation")]
struct Cli {
    /// TOML run configuration; command-line flags take precedence.
    #[arg(long, global = true, value_name = "FILE")]
    config: Option<PathBuf>,

    /// Worker threads (default: logical cores).
    #[arg(long, global = true, value_name = "N", value_parser = clap::value_parser!(u32).range(1..))]
    jobs: Option<u32>,

    /// Also write a machine-readable summary of the run.
    #[arg(long, global = true, value_name = "FILE")]
    json_summary: Option<PathBuf>,

    #[command(flatten)]
    overrides: Overrides,

    #[command(subcommand)]
    command: Command,
}

/// Level selector: `1`..`5`, or `C1`..`C5` / `H1`..`H5`.
#[derive(Debug, Clone, Copy)]
struct LevelArg {
    behavior: Option<Behavior>,
    level: u8,
}

fn parse_level(s: &str) -> std::result::Result<LevelArg, String> {
    let unknown = || format!("unknown level `{s}` (expected 1-5 or C1-C5 / H1-H5)");
    let (behavior, digits) = match s.chars().next() {
        Some(c) if c.is_ascii_alphabetic() => (
            Some(c.to_string().parse::<Behavior>().map_err(|_| unknown())?),
            &s[1..],
        ),
        _ => (None, s),
    };
    match digits.parse::<u8>() {
        Ok(level @ 1..=5) => Ok(LevelArg { behavior, level }),
        _ => Err(unknown()),
    }
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Draw VPL samples and write them as JSON files.
    Gen {
        #[arg(long)]
        behavior: Option<Behavior>,
        #[arg(long, value_parser = parse_level)]
        level: LevelArg,
        /// Number of samples (default 1, or 20 for level 5).
        #[arg(long)]
        count: Option<usize>,
        /// Sample `i` uses seed `seed + i`.
        #[arg(long)]
        seed: u64,
        #[arg(long, value_name = "DIR")]
        out: PathBuf,
    },
    /// Build and cache the PSF grid of every sample.
    Psf {
        /// A sample file or a directory of them.
        #[arg(long, value_name = "PATH")]
        samples: PathBuf,
        #[arg(long, value_name = "DIR")]
        out: PathBuf,
    },
    /// Degrade one image, or every entry of a manifest.
    Degrade {
        #[arg(long, value_name = "FILE", conflicts_with_all = ["input", "sample", "output"])]
        manifest: Option<PathBuf>,
        /// Directory of sample files (manifest mode).
        #[arg(long, value_name = "DIR", requires = "manifest")]
        samples: Option<PathBuf>,
        /// Directory of cached grids named `<sample-id>.psf` (manifest mode).
        #[arg(long, value_name = "DIR", requires = "manifest")]
        grids: Option<PathBuf>,
        /// Assignment seed (manifest mode).
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Output directory (manifest mode).
        #[arg(long, value_name = "DIR", requires = "manifest")]
        out: Option<PathBuf>,
        #[arg(long, value_name = "FILE", requires_all = ["sample", "output"])]
        input: Option<PathBuf>,
        /// Sample file or cached grid (single-image mode).
        #[arg(long, value_name = "FILE")]
        sample: Option<PathBuf>,
        #[arg(long, value_name = "FILE")]
        output: Option<PathBuf>,
    },
    /// Image a checkerboard through a sample and report its radial sharpness.
    Checkerboard {
        /// Sample file or cached grid.
        #[arg(long, value_name = "FILE")]
        sample: PathBuf,
        #[arg(long, value_name = "FILE")]
        out: PathBuf,
        #[arg(long, default_value_t = 512)]
        width: usize,
        #[arg(long, default_value_t = 512)]
        height: usize,
        #[arg(long, default_value_t = 24)]
        square: usize,
    },
    /// Score predicted label images against ground truth.
    Eval {
        #[arg(long, value_name = "DIR")]
        pred: PathBuf,
        #[arg(long, value_name = "DIR")]
        gt: PathBuf,
        #[arg(long, default_value_t = 19)]
        classes: usize,
        #[arg(long, default_value_t = 255)]
        ignore: u32,
        /// Write the text report here as well as to stdout.
        #[arg(long, value_name = "FILE")]
        report: Option<PathBuf>,
    },
}

fn usage_error(kind: clap::error::ErrorKind, msg: impl std::fmt::Display) -> ! {
    Cli::command().error(kind, msg).exit()
}

fn main() -> ExitCode {
    let argv: Vec<String> = std::env::args().collect();
    let cli = Cli::parse_from(&argv);
    if let Command::Degrade {
        manifest: None,
        input: None,
        ..
    } = &cli.command
    {
        usage_error(
            clap::error::ErrorKind::MissingRequiredArgument,
            "degrade needs either --manifest or --input",
        );
    }
    let jobs = cli.jobs.map(|j| j as usize);
    match vpl_core::par::with_jobs(jobs, || run(&cli, &argv)) {
        Ok(summary) => {
            if let Some(path) = &cli.json_summary {
                if let Err(e) = write_json(path, &summary) {
                    eprintln!("error: {e:#}");
                    return ExitCode::FAILURE;
                }
            }
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}

fn write_json(path: &Path, value: &Value) -> Result<()> {
    let text = serde_json::to_string_pretty(value)? + "\n";
    std::fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}

fn run(cli: &Cli, argv: &[String]) -> Result<Value> {
    let cfg = RunConfig::load(cli.config.as_deref(), &cli.overrides)?;
    match &cli.command {
        Command::Gen {
            behavior,
            level,
            count,
            seed,
            out,
        } => {
            let behavior = match (behavior, level.behavior) {
                (Some(a), Some(b)) if *a != b => usage_error(
                    clap::error::ErrorKind::ArgumentConflict,
                    format!("--behavior {a} contradicts level prefix {}", b.prefix()),
                ),
                (Some(a), _) => *a,
                (None, Some(b)) => b,
                (None, None) => usage_error(
                    clap::error::ErrorKind::MissingRequiredArgument,
                    "--behavior is required unless the level carries a C/H prefix",
                ),
            };
            gen(&cfg, argv, behavior, level.level, *count, *seed, out)
        }
        Command::Psf { samples, out } => psf(&cfg, argv, samples, out),
        Command::Degrade {
            manifest: Some(manifest),
            samples,
            grids,
            seed,
            out,
            ..
        } => {
            let (Some(samples), Some(out)) = (samples, out) else {
                usage_error(
                    clap::error::ErrorKind::MissingRequiredArgument,
                    "manifest mode needs --samples and --out",
                )
            };
            degrade_manifest(&cfg, argv, manifest, samples, grids.as_deref(), *seed, out)
        }
        Command::Degrade {
            input: Some(input),
            sample: Some(sample),
            output: Some(output),
            ..
        } => degrade_single(&cfg, argv, input, sample, output),
        Command::Degrade { .. } => unreachable!("argument groups are checked by clap"),
        Command::Checkerboard {
            sample,
            out,
            width,
            height,
            square,
        } => checkerboard(&cfg, argv, sample, out, *width, *height, *square),
        Command::Eval {
            pred,
            gt,
            classes,
            ignore,
            report,
        } => eval(argv, pred, gt, *classes, *ignore, report.as_deref()),
    }
}

fn create_dir(dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))
}

fn gen(
    cfg: &RunConfig,
    argv: &[String],
    behavior: Behavior,
    level: u8,
    count: Option<usize>,
    seed: u64,
    out: &Path,
) -> Result<Value> {
    let count = count.unwrap_or(if level == 5 { 20 } else { 1 });
    if count == 0 {
        bail!("--count must be at least 1");
    }
    let seeds: Vec<u64> = (0..count as u64).map(|i| seed.wrapping_add(i)).collect();
    let samples = if level == 5 {
        sample_level5_with(behavior, &seeds, &cfg.generator)?
    } else {
        let spec = level_spec(LevelId::new(behavior, level)?);
        vpl_core::par::map_slice(&seeds, |&s| {
            sample_vpl_with(&spec, behavior, s, &cfg.generator)
        })
        .into_iter()
        .collect::<vpl_core::Result<Vec<_>>>()?
    };
    create_dir(out)?;
    let mut written = Vec::new();
    for s in &samples {
        let path = out.join(format!("{}.json", s.id));
        write_sample(s, &path)?;
        written.push(json!({ "id": s.id, "seed": s.seed, "file": path }));
    }
    cfg.write_echo(out, argv)?;
    println!("wrote {} samples to {}", samples.len(), out.display());
    Ok(json!({ "command": "gen", "behavior": behavior, "level": level, "samples": written }))
}

fn parent_dir(file: &Path) -> &Path {
    file.parent()
        .filter(|d| !d.as_os_str().is_empty())
        .unwrap_or(Path::new("."))
}

fn sample_files(path: &Path) -> Result<Vec<PathBuf>> {
    if path.is_file() {
        return Ok(vec![path.to_path_buf()]);
    }
    let mut files: Vec<PathBuf> = std::fs::read_dir(path)
        .with_context(|| format!("reading {}", path.display()))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x == "json") && p.is_file())
        .collect();
    files.sort();
    if files.is_empty() {
        bail!("no sample files in {}", path.display());
    }
    Ok(files)
}

fn read_samples(path: &Path) -> Result<Vec<VplSample>> {
    sample_files(path)?
        .iter()
        .map(|p| read_sample(p).map_err(Into::into))
        .collect()
}

/// Loads a cached grid (`.psf`) or builds one from a sample file, at the
/// configured sensor pitch.
fn load_grid(cfg: &RunConfig, path: &Path) -> Result<PsfGrid> {
    let grid = if path.extension().is_some_and(|x| x == "psf") {
        read_psf_file(path)?
    } else {
        PsfEngine::new(&cfg.optics)?.build_grid(&read_sample(path)?)?
    };
    if grid.pitch() != cfg.optics.pixel_pitch_um {
        return Ok(grid.to_pitch(cfg.optics.pixel_pitch_um)?);
    }
    Ok(grid)
}

fn psf(cfg: &RunConfig, argv: &[String], samples: &Path, out: &Path) -> Result<Value> {
    let samples = read_samples(samples)?;
    create_dir(out)?;
    let engine = PsfEngine::new(&cfg.optics)?;
    let mut built = Vec::new();
    for s in &samples {
        let grid = engine
            .build_grid(s)
            .with_context(|| format!("building PSF grid of {}", s.id))?;
        let path = out.join(format!("{}.psf", s.id));
        write_psf_file(&grid, &path)?;
        let rms = grid.rms_radii(Channel::G);
        println!(
            "{}: rms radius {:.2} um at center, {:.2} um at edge",
            s.id,
            rms[0],
            rms[rms.len() - 1]
        );
        built.push(json!({
            "id": s.id,
            "file": path,
            "rms_center_um": rms[0],
            "rms_edge_um": rms[rms.len() - 1],
        }));
    }
    cfg.write_echo(out, argv)?;
    Ok(json!({ "command": "psf", "grids": built }))
}

fn degrade_manifest(
    cfg: &RunConfig,
    argv: &[String],
    manifest: &Path,
    samples: &Path,
    grids: Option<&Path>,
    seed: u64,
    out: &Path,
) -> Result<Value> {
    let m = read_manifest(manifest)?;
    let samples = read_samples(samples)?;
    let mut cache = HashMap::new();
    if let Some(dir) = grids {
        let mut files: Vec<PathBuf> = std::fs::read_dir(dir)
            .with_context(|| format!("reading {}", dir.display()))?
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| p.extension().is_some_and(|x| x == "psf"))
            .collect();
        files.sort();
        for f in files {
            let grid = read_psf_file(&f)?;
            cache.insert(grid.source().to_string(), grid);
        }
    }
    let mut done = degrade_dataset(&m, &samples, &cfg.optics, &cfg.layout, seed, out, &cache)?;
    done.config = Some(serde_json::to_string(&cfg.echo(argv))?);
    let manifest_out = out.join("manifest.tsv");
    if manifest_out.exists() && same_path(&manifest_out, manifest) {
        bail!(
            "refusing to overwrite the input manifest {}",
            manifest.display()
        );
    }
    write_manifest(&done, &manifest_out)?;
    cfg.write_echo(out, argv)?;
    let failed: Vec<Value> = done
        .entries
        .iter()
        .filter_map(|e| match &e.status {
            EntryStatus::Failed(msg) => Some(json!({ "input": e.input, "error": msg })),
            _ => None,
        })
        .collect();
    println!(
        "degraded {} of {} images; manifest at {}",
        done.entries.len() - failed.len(),
        done.entries.len(),
        manifest_out.display()
    );
    for f in &failed {
        eprintln!("failed: {} ({})", f["input"], f["error"]);
    }
    if !failed.is_empty() {
        bail!("{} entries failed", failed.len());
    }
    let entries: Vec<Value> = done
        .entries
        .iter()
        .map(|e| json!({ "input": e.input, "output": e.output, "sample_id": e.sample_id, "seed": e.seed }))
        .collect();
    Ok(json!({ "command": "degrade", "manifest": manifest_out, "entries": entries }))
}

fn same_path(a: &Path, b: &Path) -> bool {
    match (a.canonicalize(), b.canonicalize()) {
        (Ok(a), Ok(b)) => a == b,
        _ => a == b,
    }
}

fn degrade_single(
    cfg: &RunConfig,
    argv: &[String],
    input: &Path,
    sample: &Path,
    output: &Path,
) -> Result<Value> {
    if same_path(input, output) {
        bail!("output would overwrite the input {}", input.display());
    }
    let grid = load_grid(cfg, sample)?;
    let img = load_image(input)?;
    let out = degrade_image(&img, &grid, &cfg.layout)?;
    let dir = parent_dir(output);
    create_dir(dir)?;
    save_png(&out, output)?;
    cfg.write_echo(dir, argv)?;
    println!("wrote {}", output.display());
    Ok(
        json!({ "command": "degrade", "input": input, "output": output, "sample_id": grid.source() }),
    )
}

fn checkerboard(
    cfg: &RunConfig,
    argv: &[String],
    sample: &Path,
    out: &Path,
    width: usize,
    height: usize,
    square: usize,
) -> Result<Value> {
    let grid = load_grid(cfg, sample)?;
    let report = checker_report(&grid, width, height, square, &cfg.layout)?;
    let dir = parent_dir(out);
    create_dir(dir)?;
    save_png(&report.image, out)?;
    cfg.write_echo(dir, argv)?;
    println!(
        "{}: annulus/center gradient ratio {:.4} (relative to pristine board {:.4}), contrast retained {:.4}",
        grid.source(),
        report.gradient_ratio,
        report.relative_ratio,
        report.contrast_retained
    );
    Ok(json!({
        "command": "checkerboard",
        "sample_id": grid.source(),
        "output": out,
        "gradient_ratio": report.gradient_ratio,
        "relative_gradient_ratio": report.relative_ratio,
        "contrast_retained": report.contrast_retained,
    }))
}

fn eval(
    argv: &[String],
    pred: &Path,
    gt: &Path,
    classes: usize,
    ignore: u32,
    report: Option<&Path>,
) -> Result<Value> {
    let (conf, images) = evaluate_dirs(pred, gt, classes, ignore)?;
    let result = conf.miou()?;
    let names = (classes == CITYSCAPES_CLASSES.len()).then_some(&CITYSCAPES_CLASSES[..]);
    let text = result.to_text(names);
    print!("{text}");
    if let Some(path) = report {
        std::fs::write(path, &text).with_context(|| format!("writing {}", path.display()))?;
    }
    Ok(json!({
        "command": "eval",
        "argv": argv,
        "images": images,
        "miou": result.miou,
        "per_class_iou": result.per_class,
        "pixels": result.pixels,
    }))
}
