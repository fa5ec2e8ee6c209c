//! Directory-per-class image inventories (`root/<class>/*.png|pgm`).

use std::path::{Path, PathBuf};

use image::imageops::FilterType;

use crate::error::{Error, Result};

#[derive(Debug, Clone)]
pub struct ImageClass {
    pub name: String,
    /// Flattened grayscale images in `[0, 1]`.
    pub images: Vec<Vec<f64>>,
}

#[derive(Debug, Clone)]
pub struct ImageInventory {
    pub side: u32,
    pub classes: Vec<ImageClass>,
}

fn is_image(path: &Path) -> bool {
    path.extension()
        .and_then(|e| e.to_str())
        .is_some_and(|e| e.eq_ignore_ascii_case("png") || e.eq_ignore_ascii_case("pgm"))
}

fn sorted_entries(dir: &Path) -> Result<Vec<PathBuf>> {
    let mut out = std::fs::read_dir(dir)
        .map_err(|e| Error::io(dir, e))?
        .map(|e| e.map(|e| e.path()).map_err(|err| Error::io(dir, err)))
        .collect::<Result<Vec<_>>>()?;
    out.sort();
    Ok(out)
}

/// Load one image as grayscale, bilinearly resized to `side × side`, scaled to `[0, 1]`.
pub fn load_image(path: &Path, side: u32) -> Result<Vec<f64>> {
    let img = image::open(path).map_err(|source| Error::Image { path: path.to_path_buf(), source })?;
    let gray = img.to_luma8();
    let resized = image::imageops::resize(&gray, side, side, FilterType::Triangle);
    Ok(resized.into_raw().into_iter().map(|p| f64::from(p) / 255.0).collect())
}

impl ImageInventory {
    /// Classes and files are visited in sorted path order so the inventory is stable.
    pub fn load(root: &Path, side: u32) -> Result<Self> {
        let mut classes = Vec::new();
        for dir in sorted_entries(root)?.into_iter().filter(|p| p.is_dir()) {
            let images = sorted_entries(&dir)?
                .into_iter()
                .filter(|p| p.is_file() && is_image(p))
                .map(|p| load_image(&p, side))
                .collect::<Result<Vec<_>>>()?;
            if images.is_empty() {
                continue;
            }
            let name = dir.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default();
            classes.push(ImageClass { name, images });
        }
        log::info!("loaded {} image classes from {}", classes.len(), root.display());
        Ok(Self { side, classes })
    }

    pub fn input_dim(&self) -> usize {
        (self.side * self.side) as usize
    }
}
