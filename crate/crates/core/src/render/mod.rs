//! Spatially-variant image degradation.
//!
//! Images are processed in linear light. A [`PsfGrid`](crate::diffraction::PsfGrid)
//! supplies one kernel per field bin and channel; each overlapping patch is
//! convolved with the kernels of its center bin and the patches are blended
//! with normalized tent weights.

mod checker;
mod convolve;
mod dataset;
mod image;
mod layout;

pub use checker::{
    checker_report, checkerboard, gradient_magnitude, mean_gradient, radial_gradient_ratio,
    relative_gradient_ratio, render_checkerboard, render_checkerboard_with, CheckerReport,
};
pub use convolve::degrade_image;
pub use dataset::{
    degrade_dataset, read_manifest, write_manifest, DatasetManifest, EntryStatus, ManifestEntry,
    MANIFEST_SCHEMA,
};
pub use image::{decode_srgb8, encode_srgb8, load_image, save_png, RgbImage};
pub use layout::{fov_of_pixel, Patch, PatchLayout};
