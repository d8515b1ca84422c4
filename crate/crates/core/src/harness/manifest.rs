//! Line-delimited JSON corpus manifests.

use std::collections::HashSet;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::degrade::DegradationRecipe;
use crate::error::{invalid, Error, Result};
use crate::image::{save_image, Image};
use crate::rng::CounterRng;

pub const DEFAULT_TRAIN_FRACTION: f64 = 0.75;
pub const MANIFEST_FILE: &str = "manifest.jsonl";

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Val,
    Test,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub id: String,
    pub clean_path: PathBuf,
    pub split: Split,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub recipe: Option<DegradationRecipe>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub degraded_path: Option<PathBuf>,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct Manifest {
    entries: Vec<ManifestEntry>,
}

impl Manifest {
    pub fn new(entries: Vec<ManifestEntry>) -> Result<Self> {
        let mut seen = HashSet::new();
        for e in &entries {
            if !seen.insert(e.id.as_str()) {
                return Err(invalid!("duplicate manifest id {:?}", e.id));
            }
        }
        Ok(Manifest { entries })
    }

    pub fn entries(&self) -> &[ManifestEntry] {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Relative paths are resolved against the manifest's directory.
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let base = path.parent().unwrap_or(Path::new(""));
        let mut entries = Vec::new();
        for (n, line) in text.lines().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let mut e: ManifestEntry = serde_json::from_str(line).map_err(|err| Error::Decode {
                path: path.to_path_buf(),
                reason: format!("line {}: {err}", n + 1),
            })?;
            e.clean_path = base.join(&e.clean_path);
            e.degraded_path = e.degraded_path.map(|p| base.join(p));
            entries.push(e);
        }
        Manifest::new(entries)
    }

    pub fn to_jsonl(&self) -> String {
        let mut out = String::new();
        for e in &self.entries {
            let line = serde_json::to_string(e).expect("manifest entries serialize");
            writeln!(out, "{line}").expect("writing to a String");
        }
        out
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.to_jsonl()).map_err(|e| Error::io(path, e))
    }

    /// Every entry's clean file, checked for existence.
    pub fn check_files(&self) -> Result<()> {
        for e in &self.entries {
            for p in std::iter::once(&e.clean_path).chain(e.degraded_path.as_ref()) {
                if !p.is_file() {
                    return Err(Error::io(
                        p,
                        std::io::Error::new(std::io::ErrorKind::NotFound, "listed in manifest"),
                    ));
                }
            }
        }
        Ok(())
    }

    /// Builds a manifest from the PNG/PPM/PGM files of a directory, sorted by
    /// name, with a seeded train/val split.
    pub fn from_dir(dir: impl AsRef<Path>, train_fraction: f64, seed: u64) -> Result<Self> {
        let dir = dir.as_ref();
        let mut files: Vec<PathBuf> = std::fs::read_dir(dir)
            .map_err(|e| Error::io(dir, e))?
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| {
                matches!(
                    p.extension().and_then(|e| e.to_str()).map(str::to_ascii_lowercase).as_deref(),
                    Some("png" | "ppm" | "pgm")
                )
            })
            .collect();
        files.sort();
        if files.is_empty() {
            return Err(invalid!("no PNG/PPM/PGM images in {}", dir.display()));
        }
        let splits = assign_splits(files.len(), train_fraction, seed)?;
        let entries = files
            .into_iter()
            .zip(splits)
            .map(|(p, split)| ManifestEntry {
                id: p.file_stem().unwrap_or_default().to_string_lossy().into_owned(),
                clean_path: p,
                split,
                recipe: None,
                degraded_path: None,
            })
            .collect();
        Manifest::new(entries)
    }
}

/// Seeded split: `round(n * train_fraction)` entries go to train, the rest
/// to val.
pub fn assign_splits(n: usize, train_fraction: f64, seed: u64) -> Result<Vec<Split>> {
    if !(0.0..=1.0).contains(&train_fraction) {
        return Err(invalid!("train fraction must lie in [0, 1], got {train_fraction}"));
    }
    let n_train = (n as f64 * train_fraction).round() as usize;
    let mut order: Vec<usize> = (0..n).collect();
    CounterRng::new(seed).shuffle(&mut order);
    let mut splits = vec![Split::Val; n];
    for &i in &order[..n_train] {
        splits[i] = Split::Train;
    }
    Ok(splits)
}

/// Writes `images` as `scene_NNNN.png` plus a manifest with relative paths,
/// and returns the manifest with paths resolved.
pub fn write_corpus(
    dir: impl AsRef<Path>,
    images: &[Image],
    train_fraction: f64,
    seed: u64,
) -> Result<Manifest> {
    let dir = dir.as_ref();
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let splits = assign_splits(images.len(), train_fraction, seed)?;
    let mut entries = Vec::with_capacity(images.len());
    for (i, (img, split)) in images.iter().zip(splits).enumerate() {
        let id = format!("scene_{i:04}");
        let file = format!("{id}.png");
        save_image(img, dir.join(&file))?;
        entries.push(ManifestEntry {
            id,
            clean_path: PathBuf::from(file),
            split,
            recipe: None,
            degraded_path: None,
        });
    }
    let path = dir.join(MANIFEST_FILE);
    Manifest::new(entries)?.save(&path)?;
    Manifest::load(path)
}

/// Loads every entry's clean image, keyed by id.
pub fn load_clean_images(manifest: &Manifest) -> Result<Vec<(String, Image)>> {
    manifest
        .entries()
        .iter()
        .map(|e| Ok((e.id.clone(), crate::image::load_image(&e.clean_path)?)))
        .collect()
}
