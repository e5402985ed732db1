mod common;

use std::fs;
use std::path::Path;

use pagescan::ingest::{rasterize_dir, rasterize_volume, read_page_images, write_page_images, Renderer};
use pagescan::Error;

fn renderer() -> Renderer {
    Renderer::new(common::fake_renderer())
}

fn fake_pdf(dir: &Path, name: &str, body: &str) -> std::path::PathBuf {
    let path = dir.join(name);
    fs::write(&path, body).unwrap();
    path
}

#[test]
fn ten_pages_numbered_from_one() {
    let dir = tempfile::tempdir().unwrap();
    let pdf = fake_pdf(dir.path(), "operating-systems.pdf", "pages=10\nwidth_pt=100\nheight_pt=50\n");
    let pages = rasterize_volume(&pdf, 144, &renderer()).unwrap();
    assert_eq!(pages.len(), 10);
    for (i, p) in pages.iter().enumerate() {
        assert_eq!(p.page().volume_id(), "operating-systems");
        assert_eq!(p.page().page_number() as usize, i + 1);
        assert_eq!(p.dpi(), 144);
        assert_eq!((p.width(), p.height()), (200, 100));
    }
}

#[test]
fn us_letter_at_300_dpi_is_2550_by_3300() {
    let dir = tempfile::tempdir().unwrap();
    let pdf = fake_pdf(dir.path(), "letter.pdf", "pages=1\nwidth_pt=612\nheight_pt=792\n");
    let pages = rasterize_volume(&pdf, 300, &renderer()).unwrap();
    assert_eq!((pages[0].width(), pages[0].height()), (2550, 3300));
}

#[test]
fn rasterizing_twice_gives_same_geometry() {
    let dir = tempfile::tempdir().unwrap();
    let pdf = fake_pdf(dir.path(), "v.pdf", "pages=3\nwidth_pt=90\nheight_pt=120\n");
    let a = rasterize_volume(&pdf, 72, &renderer()).unwrap();
    let b = rasterize_volume(&pdf, 72, &renderer()).unwrap();
    let geometry = |v: &[pagescan::ingest::PageImage]| v.iter().map(|p| (p.page().clone(), p.width(), p.height())).collect::<Vec<_>>();
    assert_eq!(geometry(&a), geometry(&b));
    assert_eq!(a, b);
}

#[test]
fn zero_page_volume() {
    let dir = tempfile::tempdir().unwrap();
    let pdf = fake_pdf(dir.path(), "empty.pdf", "pages=0\n");
    assert!(matches!(rasterize_volume(&pdf, 300, &renderer()), Err(Error::EmptyVolume(_))));
}

#[test]
fn encrypted_and_unreadable_volumes() {
    let dir = tempfile::tempdir().unwrap();
    let locked = fake_pdf(dir.path(), "locked.pdf", "encrypted=1\n");
    let err = rasterize_volume(&locked, 300, &renderer()).unwrap_err();
    assert!(matches!(err, Error::Ingest { .. }));
    assert!(err.to_string().contains("password"), "{err}");
    let missing = dir.path().join("missing.pdf");
    assert!(matches!(rasterize_volume(&missing, 300, &renderer()), Err(Error::Ingest { .. })));
}

#[test]
fn image_tree_round_trip_keeps_dpi() {
    let dir = tempfile::tempdir().unwrap();
    let pdfs = dir.path().join("pdfs");
    fs::create_dir(&pdfs).unwrap();
    fake_pdf(&pdfs, "b.pdf", "pages=2\nwidth_pt=36\nheight_pt=36\n");
    fake_pdf(&pdfs, "a.pdf", "pages=12\nwidth_pt=36\nheight_pt=72\n");
    fake_pdf(&pdfs, "notes.txt", "ignored");
    let volumes = rasterize_dir(&pdfs, 200, &renderer()).unwrap();
    assert_eq!(volumes.iter().map(Vec::len).collect::<Vec<_>>(), [12, 2]);

    let images = dir.path().join("images");
    for v in &volumes {
        write_page_images(&images, v).unwrap();
    }
    assert!(images.join("a/12.png").is_file());
    let back = read_page_images(&images, 300).unwrap();
    let all: Vec<_> = volumes.into_iter().flatten().collect();
    assert_eq!(back, all);
    assert!(back.iter().all(|p| p.dpi() == 200));
}
