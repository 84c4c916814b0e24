//! Dataset directories: `manifest.json` plus one folder per sequence.
//!
//! ```text
//! <root>/manifest.json
//! <root>/seq_0000/frame_000_dense.tcube
//! <root>/seq_0000/frame_000_distorted.tcube
//! <root>/seq_0000/frame_000_gt.pgm
//! ```

use std::fs;
use std::path::{Path, PathBuf};

use nlos_core::dataset::{MotionSpec, SequenceConfig, SequenceFrame, SequencePlan, SequenceSample, ShapeSpec};
use nlos_core::{ReconImage, TransientCube};
use serde::{Deserialize, Serialize};

use crate::error::{CliError, Result};
use crate::tcube::{read_tcube, write_tcube};

pub const MANIFEST: &str = "manifest.json";
pub const MANIFEST_VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Manifest {
    pub format_version: u32,
    pub plan: SequencePlan,
    pub config: SequenceConfig,
    pub sequences: Vec<ManifestEntry>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ManifestEntry {
    pub id: u64,
    pub name: String,
    pub shape: ShapeSpec,
    pub motion: MotionSpec,
    pub frames: Vec<FrameFiles>,
}

/// Paths relative to the dataset root.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FrameFiles {
    pub dense: String,
    pub distorted: String,
    pub gt: String,
}

pub fn frame_stem(frame: usize) -> String {
    format!("frame_{frame:03}")
}

/// Which cube of a frame to read.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum CubeRole {
    Dense,
    Distorted,
}

impl FrameFiles {
    pub fn cube(&self, role: CubeRole) -> &str {
        match role {
            CubeRole::Dense => &self.dense,
            CubeRole::Distorted => &self.distorted,
        }
    }
}

pub fn write_bytes(path: &Path, bytes: &[u8]) -> Result<()> {
    fs::write(path, bytes).map_err(CliError::io(path))
}

pub fn create_dir(path: &Path) -> Result<()> {
    fs::create_dir_all(path).map_err(CliError::io(path))
}

pub fn load_cube(path: &Path) -> Result<TransientCube> {
    read_tcube(path).map_err(|e| CliError::from((path.to_path_buf(), e)))
}

pub fn save_cube(path: &Path, cube: &TransientCube) -> Result<()> {
    write_tcube(path, cube).map_err(|e| CliError::from((path.to_path_buf(), e)))
}

pub fn load_image(path: &Path) -> Result<ReconImage> {
    let bytes = fs::read(path).map_err(CliError::io(path))?;
    ReconImage::from_pgm_bytes(&bytes).map_err(|e| CliError::Format {
        path: path.to_path_buf(),
        message: e.to_string(),
    })
}

pub fn save_image(path: &Path, image: &ReconImage) -> Result<()> {
    write_bytes(path, &image.to_pgm_bytes())
}

/// Write one generated sequence and return its manifest entry.
pub fn write_sequence(root: &Path, seq: &SequenceSample) -> Result<ManifestEntry> {
    let name = seq.name();
    let dir = root.join(&name);
    create_dir(&dir)?;
    let mut frames = Vec::with_capacity(seq.frames.len());
    for (k, f) in seq.frames.iter().enumerate() {
        let stem = frame_stem(k);
        let files = FrameFiles {
            dense: format!("{name}/{stem}_dense.tcube"),
            distorted: format!("{name}/{stem}_distorted.tcube"),
            gt: format!("{name}/{stem}_gt.pgm"),
        };
        save_cube(&root.join(&files.dense), &f.dense)?;
        save_cube(&root.join(&files.distorted), &f.distorted)?;
        save_image(&root.join(&files.gt), &f.gt)?;
        frames.push(files);
    }
    Ok(ManifestEntry {
        id: seq.id,
        name,
        shape: seq.shape.clone(),
        motion: seq.motion.clone(),
        frames,
    })
}

pub fn write_manifest(root: &Path, manifest: &Manifest) -> Result<()> {
    let text = serde_json::to_string_pretty(manifest).expect("manifest serialises") + "\n";
    write_bytes(&root.join(MANIFEST), text.as_bytes())
}

pub fn is_dataset(dir: &Path) -> bool {
    dir.join(MANIFEST).is_file()
}

pub fn read_manifest(root: &Path) -> Result<Manifest> {
    let path = root.join(MANIFEST);
    let text = fs::read_to_string(&path).map_err(CliError::io(&path))?;
    let m: Manifest = serde_json::from_str(&text).map_err(|e| CliError::Format {
        path: path.clone(),
        message: e.to_string(),
    })?;
    if m.format_version != MANIFEST_VERSION {
        return Err(CliError::Format {
            path,
            message: format!("unsupported version {} (supported: {MANIFEST_VERSION})", m.format_version),
        });
    }
    Ok(m)
}

/// Read a sequence back from disk.
pub fn load_sequence(root: &Path, entry: &ManifestEntry) -> Result<SequenceSample> {
    let mut frames = Vec::with_capacity(entry.frames.len());
    for f in &entry.frames {
        frames.push(SequenceFrame {
            dense: load_cube(&root.join(&f.dense))?,
            distorted: load_cube(&root.join(&f.distorted))?,
            gt: load_image(&root.join(&f.gt))?,
        });
    }
    Ok(SequenceSample {
        id: entry.id,
        shape: entry.shape.clone(),
        motion: entry.motion.clone(),
        frames,
    })
}

/// A named, ordered group of cube files reconstructed as one sequence.
#[derive(Clone, Debug, PartialEq)]
pub struct CubeSequence {
    pub name: String,
    /// `(frame name, path)` in temporal order.
    pub frames: Vec<(String, PathBuf)>,
}

fn sorted_entries(dir: &Path) -> Result<Vec<PathBuf>> {
    let mut out = Vec::new();
    for e in fs::read_dir(dir).map_err(CliError::io(dir))? {
        out.push(e.map_err(CliError::io(dir))?.path());
    }
    out.sort();
    Ok(out)
}

fn has_ext(p: &Path, ext: &str) -> bool {
    p.extension().is_some_and(|e| e == ext)
}

fn stem(p: &Path) -> String {
    p.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default()
}

fn dir_name(p: &Path) -> String {
    p.canonicalize()
        .ok()
        .and_then(|c| c.file_name().map(|s| s.to_string_lossy().into_owned()))
        .unwrap_or_else(|| "input".into())
}

/// Expand command-line inputs into sequences. A dataset directory yields
/// its sequences with the chosen cube role; any other directory is one
/// sequence of its `.tcube` files in name order; loose files form one
/// sequence named `input`.
pub fn collect_cube_sequences(inputs: &[PathBuf], role: CubeRole) -> Result<Vec<CubeSequence>> {
    let mut out = Vec::new();
    let mut loose = Vec::new();
    for input in inputs {
        if input.is_dir() {
            if is_dataset(input) {
                let m = read_manifest(input)?;
                for e in m.sequences {
                    let frames = e
                        .frames
                        .iter()
                        .enumerate()
                        .map(|(k, f)| (frame_stem(k), input.join(f.cube(role))))
                        .collect();
                    out.push(CubeSequence { name: e.name, frames });
                }
            } else {
                let frames: Vec<_> = sorted_entries(input)?
                    .into_iter()
                    .filter(|p| p.is_file() && has_ext(p, "tcube"))
                    .map(|p| (stem(&p), p))
                    .collect();
                if frames.is_empty() {
                    return Err(CliError::Usage(format!("{}: no .tcube files", input.display())));
                }
                out.push(CubeSequence {
                    name: dir_name(input),
                    frames,
                });
            }
        } else if input.is_file() {
            loose.push((stem(input), input.clone()));
        } else {
            return Err(CliError::Io {
                path: input.clone(),
                source: std::io::Error::new(std::io::ErrorKind::NotFound, "no such file or directory"),
            });
        }
    }
    if !loose.is_empty() {
        out.push(CubeSequence {
            name: "input".into(),
            frames: loose,
        });
    }
    Ok(out)
}

/// Frame key used to pair reconstructions with ground truth: the file
/// stem without a trailing `_gt`, `_dense` or `_distorted`.
pub fn frame_key(stem: &str) -> &str {
    for suffix in ["_gt", "_dense", "_distorted"] {
        if let Some(s) = stem.strip_suffix(suffix) {
            return s;
        }
    }
    stem
}

/// Object name and its `(frame key, path)` pairs.
pub type ImageGroup = (String, Vec<(String, PathBuf)>);

/// Images below `dir`, grouped by object: each subdirectory holding PGM
/// files is one object, and PGM files directly in `dir` form an object
/// named after `dir`. Frames are keyed by [`frame_key`].
pub fn collect_images(dir: &Path) -> Result<Vec<ImageGroup>> {
    let mut groups = Vec::new();
    let mut top = Vec::new();
    for p in sorted_entries(dir)? {
        if p.is_dir() {
            let frames: Vec<_> = sorted_entries(&p)?
                .into_iter()
                .filter(|f| f.is_file() && has_ext(f, "pgm"))
                .map(|f| (frame_key(&stem(&f)).to_string(), f))
                .collect();
            if !frames.is_empty() {
                groups.push((stem(&p), frames));
            }
        } else if has_ext(&p, "pgm") {
            top.push((frame_key(&stem(&p)).to_string(), p));
        }
    }
    if !top.is_empty() {
        groups.insert(0, (dir_name(dir), top));
    }
    Ok(groups)
}
