//! Volume PDFs to per-page PNG images.
//!
//! Rasterization runs an external renderer with `pdftoppm` calling
//! conventions: `PROGRAM -r DPI -png INPUT.pdf PREFIX` writes
//! `PREFIX-N.png` for every page (N possibly zero-padded).

use std::fs;
use std::path::{Path, PathBuf};
use std::process::Command;

use pagescan_core::PageRef;

use crate::error::{Error, Result};

pub const DEFAULT_DPI: u32 = 300;
pub const MIN_DPI: u32 = 72;
pub const MAX_DPI: u32 = 600;

const INCHES_PER_METRE: f64 = 39.3701;

/// One rendered page: a validated PNG payload and the resolution it was
/// rendered at.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct PageImage {
    page: PageRef,
    png: Vec<u8>,
    dpi: u32,
    width: u32,
    height: u32,
}

impl PageImage {
    pub fn new(page: PageRef, png: Vec<u8>, dpi: u32) -> Result<Self> {
        if dpi == 0 {
            return Err(Error::Ingest { path: page.to_string().into(), message: "dpi must be positive".into() });
        }
        let (width, height, _) = png_info(&png).map_err(|message| Error::Ingest { path: page.to_string().into(), message })?;
        Ok(Self { page, png, dpi, width, height })
    }

    pub fn page(&self) -> &PageRef {
        &self.page
    }

    pub fn png(&self) -> &[u8] {
        &self.png
    }

    pub fn dpi(&self) -> u32 {
        self.dpi
    }

    pub fn width(&self) -> u32 {
        self.width
    }

    pub fn height(&self) -> u32 {
        self.height
    }
}

/// Width, height and, when a pHYs chunk in metres is present, the DPI.
fn png_info(bytes: &[u8]) -> std::result::Result<(u32, u32, Option<u32>), String> {
    let decoder = png::Decoder::new(std::io::Cursor::new(bytes));
    let reader = decoder.read_info().map_err(|e| format!("invalid PNG: {e}"))?;
    let info = reader.info();
    let dpi = info
        .pixel_dims
        .filter(|d| d.unit == png::Unit::Meter)
        .map(|d| (d.xppu as f64 / INCHES_PER_METRE).round() as u32);
    Ok((info.width, info.height, dpi))
}

/// Pixel size of a page measured in PostScript points (1/72 in) at `dpi`.
pub fn page_pixel_dims(width_pt: f64, height_pt: f64, dpi: u32) -> (u32, u32) {
    let px = |pt: f64| (pt / 72.0 * dpi as f64).round() as u32;
    (px(width_pt), px(height_pt))
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Renderer {
    pub program: PathBuf,
}

impl Default for Renderer {
    fn default() -> Self {
        Self { program: "pdftoppm".into() }
    }
}

impl Renderer {
    pub fn new(program: impl Into<PathBuf>) -> Self {
        Self { program: program.into() }
    }
}

pub fn volume_id_for(pdf: &Path) -> Result<String> {
    pdf.file_stem()
        .and_then(|s| s.to_str())
        .filter(|s| !s.is_empty())
        .map(str::to_owned)
        .ok_or_else(|| Error::Ingest { path: pdf.into(), message: "cannot derive a volume id from the file name".into() })
}

/// Renders every page of `pdf`. Page numbers run from 1 in page order and
/// the volume id is the file stem.
pub fn rasterize_volume(pdf: &Path, dpi: u32, renderer: &Renderer) -> Result<Vec<PageImage>> {
    if !(MIN_DPI..=MAX_DPI).contains(&dpi) {
        return Err(Error::Ingest { path: pdf.into(), message: format!("dpi {dpi} outside [{MIN_DPI}, {MAX_DPI}]") });
    }
    let volume = volume_id_for(pdf)?;
    let work = tempfile::tempdir().map_err(|e| Error::io(std::env::temp_dir(), e))?;
    let prefix = work.path().join("page");
    let output = Command::new(&renderer.program)
        .arg("-r")
        .arg(dpi.to_string())
        .arg("-png")
        .arg(pdf)
        .arg(&prefix)
        .output()
        .map_err(|e| Error::Ingest {
            path: pdf.into(),
            message: format!("cannot run renderer {}: {e}", renderer.program.display()),
        })?;
    if !output.status.success() {
        let stderr = String::from_utf8_lossy(&output.stderr);
        return Err(Error::Ingest { path: pdf.into(), message: format!("renderer failed ({}): {}", output.status, stderr.trim()) });
    }

    let mut numbered = Vec::new();
    for entry in fs::read_dir(work.path()).map_err(|e| Error::io(work.path(), e))? {
        let name = entry.map_err(|e| Error::io(work.path(), e))?.file_name();
        let Some(n) = name.to_str().and_then(|n| n.strip_prefix("page-")).and_then(|n| n.strip_suffix(".png")) else {
            continue;
        };
        if let Ok(n) = n.parse::<u32>() {
            numbered.push((n, work.path().join(&name)));
        }
    }
    if numbered.is_empty() {
        return Err(Error::EmptyVolume(pdf.into()));
    }
    numbered.sort();
    if numbered.iter().enumerate().any(|(i, (n, _))| *n as usize != i + 1) {
        return Err(Error::Ingest { path: pdf.into(), message: "renderer output pages are not numbered 1..N".into() });
    }
    numbered
        .into_iter()
        .map(|(n, path)| {
            let png = fs::read(&path).map_err(|e| Error::io(&path, e))?;
            let page = PageRef::new(volume.as_str(), n)?;
            PageImage::new(page, png, dpi).map_err(|e| match e {
                Error::Ingest { message, .. } => Error::Ingest { path: pdf.into(), message: format!("page {n}: {message}") },
                other => other,
            })
        })
        .collect()
}

/// Rasterizes every `*.pdf` in `dir`, sorted by file name.
pub fn rasterize_dir(dir: &Path, dpi: u32, renderer: &Renderer) -> Result<Vec<Vec<PageImage>>> {
    let mut pdfs: Vec<PathBuf> = fs::read_dir(dir)
        .map_err(|e| Error::io(dir, e))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x.eq_ignore_ascii_case("pdf")))
        .collect();
    pdfs.sort();
    pdfs.iter().map(|p| rasterize_volume(p, dpi, renderer)).collect()
}

pub fn image_path(root: &Path, page: &PageRef) -> PathBuf {
    root.join(page.volume_id()).join(format!("{}.png", page.page_number()))
}

/// Stores images as `root/<volume_id>/<page_number>.png`.
pub fn write_page_images(root: &Path, images: &[PageImage]) -> Result<()> {
    for img in images {
        let path = image_path(root, img.page());
        let dir = path.parent().expect("image path has a parent");
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        fs::write(&path, img.png()).map_err(|e| Error::io(&path, e))?;
    }
    Ok(())
}

/// Loads every page image under `root`, ordered by volume then page number.
///
/// The resolution comes from the PNG pHYs chunk when present, else
/// `default_dpi`.
pub fn read_page_images(root: &Path, default_dpi: u32) -> Result<Vec<PageImage>> {
    let mut volumes: Vec<PathBuf> = fs::read_dir(root)
        .map_err(|e| Error::io(root, e))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.is_dir())
        .collect();
    volumes.sort();
    let mut out = Vec::new();
    for vol_dir in volumes {
        let volume = vol_dir.file_name().and_then(|s| s.to_str()).unwrap_or_default().to_owned();
        let mut pages = Vec::new();
        for entry in fs::read_dir(&vol_dir).map_err(|e| Error::io(&vol_dir, e))? {
            let path = entry.map_err(|e| Error::io(&vol_dir, e))?.path();
            let n = path.extension().filter(|x| *x == "png").and(path.file_stem()).and_then(|s| s.to_str()?.parse::<u32>().ok());
            if let Some(n) = n {
                pages.push((n, path));
            }
        }
        pages.sort();
        for (n, path) in pages {
            let png = fs::read(&path).map_err(|e| Error::io(&path, e))?;
            let dpi = png_info(&png)
                .map_err(|message| Error::Ingest { path: path.clone(), message })?
                .2
                .unwrap_or(default_dpi);
            out.push(PageImage::new(PageRef::new(volume.as_str(), n)?, png, dpi)?);
        }
    }
    Ok(out)
}
