//! Image directory indexing and bundled procedural sample data.
//!
//! A dataset is a directory of photos plus, optionally, a directory of
//! portraits paired by file stem (`photos/ann.png` pairs with
//! `portraits/ann.png`). [`generate_sample_data`] synthesizes a
//! self-contained sample tree from two differently seeded toy generators,
//! so experiments run without shipping any real face data.

use std::path::{Path, PathBuf};

use crate::error::{Error, Result};
use crate::generator::{Generator, ToyConfig, ToyGenerator};
use crate::io::{load_png, save_png, write_generator};
use crate::seeds;

/// One subject: a photo and, when the portrait directory has a file with
/// the same stem, its paired portrait.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DatasetEntry {
    pub photo: PathBuf,
    pub portrait: Option<PathBuf>,
}

/// Sorted index of a photo directory with optional portrait pairing.
#[derive(Debug, Clone)]
pub struct DatasetIndex {
    pub style: String,
    pub entries: Vec<DatasetEntry>,
}

/// PNG files directly inside `dir`, sorted by file name for determinism.
pub fn list_images(dir: impl AsRef<Path>) -> Result<Vec<PathBuf>> {
    let dir = dir.as_ref();
    let rd = std::fs::read_dir(dir).map_err(|e| Error::io(dir, e.to_string()))?;
    let mut out = Vec::new();
    for entry in rd {
        let entry = entry.map_err(|e| Error::io(dir, e.to_string()))?;
        let path = entry.path();
        let is_png = path
            .extension()
            .and_then(|e| e.to_str())
            .is_some_and(|e| e.eq_ignore_ascii_case("png"));
        if path.is_file() && is_png {
            out.push(path);
        }
    }
    out.sort();
    Ok(out)
}

impl DatasetIndex {
    /// Indexes `photos`, pairing with files of the same stem in
    /// `portraits` when given. Every listed file must decode as an image;
    /// the first failure aborts the scan with its path.
    pub fn scan(
        photos: impl AsRef<Path>,
        portraits: Option<&Path>,
        style: impl Into<String>,
    ) -> Result<Self> {
        let photo_paths = list_images(&photos)?;
        if photo_paths.is_empty() {
            return Err(Error::invalid(format!(
                "no PNG images in {}",
                photos.as_ref().display()
            )));
        }
        let portrait_paths = match portraits {
            Some(dir) => list_images(dir)?,
            None => Vec::new(),
        };
        let mut entries = Vec::with_capacity(photo_paths.len());
        for photo in photo_paths {
            load_png(&photo)?;
            let stem = photo.file_stem();
            let portrait = portrait_paths
                .iter()
                .find(|p| p.file_stem() == stem)
                .cloned();
            if let Some(p) = &portrait {
                load_png(p)?;
            }
            entries.push(DatasetEntry { photo, portrait });
        }
        Ok(Self { style: style.into(), entries })
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Entries that have a paired portrait.
    pub fn paired(&self) -> impl Iterator<Item = (&PathBuf, &PathBuf)> {
        self.entries
            .iter()
            .filter_map(|e| e.portrait.as_ref().map(|p| (&e.photo, p)))
    }
}

/// Locations written by [`generate_sample_data`].
#[derive(Debug, Clone)]
pub struct SamplePaths {
    pub root: PathBuf,
    /// Checkpoint of the pretrained (photo-domain) generator.
    pub pretrained: PathBuf,
    pub photos: Vec<PathBuf>,
    pub refs: Vec<PathBuf>,
    /// Style-domain renders of the photo latents, paired by stem.
    pub portraits: Vec<PathBuf>,
}

/// Writes a deterministic sample tree under `root`:
///
/// * `pretrained.sidg` — checkpoint of the default toy generator;
/// * `photos/photo_NN.png` — renders of prior samples of that generator;
/// * `refs/ref_NN.png` — renders from a differently seeded generator, the
///   bundled stand-in for a hand-drawn style;
/// * `portraits/photo_NN.png` — the style generator rendering each
///   photo's latent, giving a paired ground truth per stem.
///
/// Pure function of `(photo_count, ref_count, seed)` up to the PNG bytes.
pub fn generate_sample_data(
    root: impl AsRef<Path>,
    photo_count: usize,
    ref_count: usize,
    seed: u64,
) -> Result<SamplePaths> {
    let root = root.as_ref();
    if photo_count == 0 || ref_count == 0 {
        return Err(Error::invalid("sample data needs photo_count, ref_count >= 1"));
    }
    let mkdir = |p: &Path| {
        std::fs::create_dir_all(p).map_err(|e| Error::io(p, e.to_string()))
    };
    mkdir(root)?;
    let photo_dir = root.join("photos");
    let ref_dir = root.join("refs");
    let portrait_dir = root.join("portraits");
    mkdir(&photo_dir)?;
    mkdir(&ref_dir)?;
    mkdir(&portrait_dir)?;

    let photo_gen = ToyGenerator::new(ToyConfig::default())?;
    let style_gen = ToyGenerator::new(ToyConfig {
        seed: ToyConfig::default().seed.wrapping_add(16),
        ..ToyConfig::default()
    })?;

    let pretrained = root.join("pretrained.sidg");
    write_generator(&pretrained, &photo_gen)?;

    let mut photos = Vec::with_capacity(photo_count);
    let mut portraits = Vec::with_capacity(photo_count);
    for i in 0..photo_count {
        let w = photo_gen.sample_prior(seeds::derive(seed, 1000 + i as u64));
        let name = format!("photo_{i:02}.png");
        let photo_path = photo_dir.join(&name);
        save_png(&photo_path, &photo_gen.synthesize(&w)?)?;
        let portrait_path = portrait_dir.join(&name);
        save_png(&portrait_path, &style_gen.synthesize(&w)?)?;
        photos.push(photo_path);
        portraits.push(portrait_path);
    }

    let mut refs = Vec::with_capacity(ref_count);
    for i in 0..ref_count {
        let w = style_gen.sample_prior(seeds::derive(seed, 2000 + i as u64));
        let path = ref_dir.join(format!("ref_{i:02}.png"));
        save_png(&path, &style_gen.synthesize(&w)?)?;
        refs.push(path);
    }

    Ok(SamplePaths { root: root.to_path_buf(), pretrained, photos, refs, portraits })
}
