//! Sprite detection by sliding-window template matching.
//!
//! Templates are RGBA; a pixel with alpha 0 matches anything. Frames are RGB.
//! Images are read from PNG files.

use std::collections::BTreeSet;
use std::fs;
use std::path::{Path, PathBuf};

use rayon::prelude::*;

use crate::corpus::{FrameRecord, SpriteCounts};
use crate::error::{Error, Result};

pub type Rgb = [u8; 3];
pub type Rgba = [u8; 4];

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SpriteTemplate {
    pub name: String,
    width: u32,
    height: u32,
    pixels: Vec<Rgba>,
    // (dx, dy, rgb) of every non-wildcard pixel, for matching.
    solid: Vec<(u32, u32, Rgb)>,
}

impl SpriteTemplate {
    /// `pixels` is row-major, `width * height` long.
    pub fn new(name: impl Into<String>, width: u32, height: u32, pixels: Vec<Rgba>) -> Result<Self> {
        let name = name.into();
        if width == 0 || height == 0 || pixels.len() != (width * height) as usize {
            return Err(Error::InvalidParameter(format!(
                "template {name}: {} pixels for a {width}x{height} grid",
                pixels.len()
            )));
        }
        let solid: Vec<_> = pixels
            .iter()
            .enumerate()
            .filter(|(_, p)| p[3] != 0)
            .map(|(i, p)| (i as u32 % width, i as u32 / width, [p[0], p[1], p[2]]))
            .collect();
        if solid.is_empty() {
            return Err(Error::InvalidParameter(format!("template {name} is entirely transparent")));
        }
        Ok(SpriteTemplate { name, width, height, pixels, solid })
    }

    /// A fully opaque template.
    pub fn from_rgb(name: impl Into<String>, width: u32, height: u32, pixels: &[Rgb]) -> Result<Self> {
        Self::new(name, width, height, pixels.iter().map(|p| [p[0], p[1], p[2], 255]).collect())
    }

    pub fn width(&self) -> u32 {
        self.width
    }

    pub fn height(&self) -> u32 {
        self.height
    }

    pub fn pixel(&self, x: u32, y: u32) -> Rgba {
        self.pixels[(y * self.width + x) as usize]
    }

    pub fn load(path: &Path) -> Result<Self> {
        let name = path
            .file_stem()
            .and_then(|s| s.to_str())
            .ok_or_else(|| Error::InvalidParameter(format!("{}: no usable file stem", path.display())))?;
        let img = image::open(path).map_err(|source| Error::Image { path: path.to_path_buf(), source })?.to_rgba8();
        let (w, h) = img.dimensions();
        Self::new(name, w, h, img.pixels().map(|p| p.0).collect())
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FrameImage {
    width: u32,
    height: u32,
    pixels: Vec<Rgb>,
}

impl FrameImage {
    pub fn new(width: u32, height: u32, pixels: Vec<Rgb>) -> Result<Self> {
        if pixels.len() != (width as usize) * (height as usize) {
            return Err(Error::InvalidParameter(format!("frame: {} pixels for a {width}x{height} grid", pixels.len())));
        }
        Ok(FrameImage { width, height, pixels })
    }

    pub fn filled(width: u32, height: u32, color: Rgb) -> Self {
        FrameImage { width, height, pixels: vec![color; (width as usize) * (height as usize)] }
    }

    pub fn width(&self) -> u32 {
        self.width
    }

    pub fn height(&self) -> u32 {
        self.height
    }

    pub fn pixel(&self, x: u32, y: u32) -> Rgb {
        self.pixels[(y as usize) * (self.width as usize) + x as usize]
    }

    pub fn set_pixel(&mut self, x: u32, y: u32, color: Rgb) {
        let w = self.width as usize;
        self.pixels[(y as usize) * w + x as usize] = color;
    }

    /// Paint the template's opaque pixels with its top-left corner at (x, y),
    /// clipping at the frame border.
    pub fn draw(&mut self, tmpl: &SpriteTemplate, x: u32, y: u32) {
        for &(dx, dy, rgb) in &tmpl.solid {
            let (px, py) = (x + dx, y + dy);
            if px < self.width && py < self.height {
                self.set_pixel(px, py, rgb);
            }
        }
    }

    pub fn load(path: &Path) -> Result<Self> {
        let img = image::open(path).map_err(|source| Error::Image { path: path.to_path_buf(), source })?.to_rgb8();
        let (w, h) = img.dimensions();
        Self::new(w, h, img.pixels().map(|p| p.0).collect())
    }

    pub fn save_png(&self, path: &Path) -> Result<()> {
        let raw: Vec<u8> = self.pixels.iter().flatten().copied().collect();
        image::save_buffer(path, &raw, self.width, self.height, image::ExtendedColorType::Rgb8)
            .map_err(|source| Error::Image { path: path.to_path_buf(), source })
    }
}

fn matches_at(frame: &FrameImage, tmpl: &SpriteTemplate, x: u32, y: u32, tolerance: u8) -> bool {
    tmpl.solid.iter().all(|&(dx, dy, want)| {
        let got = frame.pixel(x + dx, y + dy);
        (0..3).all(|c| got[c].abs_diff(want[c]) <= tolerance)
    })
}

/// Top-left positions where every opaque template pixel is within `tolerance`
/// of the frame in each channel, in row-major order.
pub fn match_template(frame: &FrameImage, tmpl: &SpriteTemplate, tolerance: u8) -> Vec<(u32, u32)> {
    if tmpl.width > frame.width || tmpl.height > frame.height {
        return Vec::new();
    }
    let mut out = Vec::new();
    for y in 0..=frame.height - tmpl.height {
        for x in 0..=frame.width - tmpl.width {
            if matches_at(frame, tmpl, x, y, tolerance) {
                out.push((x, y));
            }
        }
    }
    out
}

/// Drop matches whose box overlaps an earlier kept one.
fn suppress_overlaps(positions: &[(u32, u32)], w: u32, h: u32) -> Vec<(u32, u32)> {
    let mut kept: Vec<(u32, u32)> = Vec::new();
    for &(x, y) in positions {
        let overlaps = kept.iter().any(|&(kx, ky)| x < kx + w && kx < x + w && y < ky + h && ky < y + h);
        if !overlaps {
            kept.push((x, y));
        }
    }
    kept
}

/// A set of templates with unique names.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Spritesheet {
    templates: Vec<SpriteTemplate>,
}

impl Spritesheet {
    pub fn new(templates: Vec<SpriteTemplate>) -> Result<Self> {
        if templates.is_empty() {
            return Err(Error::Empty("spritesheet"));
        }
        let mut seen = BTreeSet::new();
        for t in &templates {
            if !seen.insert(t.name.as_str()) {
                return Err(Error::InvalidParameter(format!("duplicate sprite name {}", t.name)));
            }
        }
        Ok(Spritesheet { templates })
    }

    /// Every `*.png` in `dir`, named by file stem, in name order.
    pub fn load_dir(dir: &Path) -> Result<Self> {
        let templates = png_files(dir)?.iter().map(|p| SpriteTemplate::load(p)).collect::<Result<Vec<_>>>()?;
        Self::new(templates)
    }

    pub fn templates(&self) -> &[SpriteTemplate] {
        &self.templates
    }

    pub fn get(&self, name: &str) -> Option<&SpriteTemplate> {
        self.templates.iter().find(|t| t.name == name)
    }
}

/// Sprite counts for one frame. Overlapping matches of the same sprite count
/// once (first in row-major order wins); different sprites may overlap freely.
pub fn detect_bag(frame: &FrameImage, sheet: &Spritesheet, tolerance: u8) -> SpriteCounts {
    let mut counts = SpriteCounts::new();
    for t in &sheet.templates {
        let kept = suppress_overlaps(&match_template(frame, t, tolerance), t.width, t.height);
        if !kept.is_empty() {
            counts.insert(t.name.clone(), kept.len() as u32);
        }
    }
    counts
}

fn png_files(dir: &Path) -> Result<Vec<PathBuf>> {
    let mut out = Vec::new();
    for entry in fs::read_dir(dir).map_err(|e| Error::io(dir, e))? {
        let path = entry.map_err(|e| Error::io(dir, e))?.path();
        let is_png = path.extension().and_then(|e| e.to_str()).is_some_and(|e| e.eq_ignore_ascii_case("png"));
        if is_png && path.is_file() {
            out.push(path);
        }
    }
    out.sort();
    Ok(out)
}

/// PNG frames in `dir` keyed by the integer second in their file stem,
/// sorted by time.
pub fn frame_files(dir: &Path) -> Result<Vec<(u32, PathBuf)>> {
    let mut out = Vec::new();
    for path in png_files(dir)? {
        let stem = path.file_stem().and_then(|s| s.to_str()).unwrap_or_default();
        let t: u32 = stem.parse().map_err(|_| {
            Error::InvalidParameter(format!("{}: frame file stem must be an integer second", path.display()))
        })?;
        out.push((t, path));
    }
    out.sort_by_key(|(t, _)| *t);
    if let Some(w) = out.windows(2).find(|w| w[0].0 == w[1].0) {
        return Err(Error::InvalidParameter(format!(
            "two frame files for second {}: {} and {}",
            w[0].0,
            w[0].1.display(),
            w[1].1.display()
        )));
    }
    Ok(out)
}

/// Detect sprites in every frame of `dir`, in parallel; output is ordered by time.
pub fn detect_frames_dir(dir: &Path, sheet: &Spritesheet, tolerance: u8) -> Result<Vec<FrameRecord>> {
    frame_files(dir)?
        .par_iter()
        .map(|(t, path)| Ok(FrameRecord { t: *t, sprites: detect_bag(&FrameImage::load(path)?, sheet, tolerance) }))
        .collect()
}
