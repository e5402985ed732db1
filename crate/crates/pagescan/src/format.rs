//! Binary embedding files and collection snapshots.
//!
//! Embedding file (`.mve`), all integers little-endian:
//!
//! ```text
//! "MVE1" | version u32 | entry count u32
//! per entry: volume_id len u16 | volume_id UTF-8 | page_number u32 | rows u32 | dims u32
//!            | rows*dims f32, row-major
//! ```
//!
//! Collection snapshot (`.mvc`): `"MVC1" | version u32 | name len u16 | name
//! | metric len u16 | metric name | dims u32` followed by a complete embedding
//! file holding the pages in insertion order.
//!
//! Each embedding file may carry a `<file>.manifest` sidecar of `key=value`
//! lines.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use pagescan_core::{Collection, Metric, MultiVector, PageEmbedding, PageRef};

use crate::error::{Error, Result};

pub const EMBEDDING_MAGIC: &[u8; 4] = b"MVE1";
pub const COLLECTION_MAGIC: &[u8; 4] = b"MVC1";
pub const FORMAT_VERSION: u32 = 1;

const HEADER_LEN: usize = 12;

/// Serializes pages; every entry must share one width.
pub fn encode_embeddings(entries: &[PageEmbedding]) -> Result<Vec<u8>> {
    let dims = entries.first().map(|e| e.embedding.dims());
    let payload: usize = entries.iter().map(|e| 14 + e.page.volume_id().len() + e.embedding.as_slice().len() * 4).sum();
    let mut out = Vec::with_capacity(HEADER_LEN + payload);
    out.extend_from_slice(EMBEDDING_MAGIC);
    out.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
    out.extend_from_slice(&u32_field(entries.len(), "entry count")?.to_le_bytes());
    for (i, e) in entries.iter().enumerate() {
        let expected = dims.unwrap_or_default();
        if e.embedding.dims() != expected {
            return Err(Error::DimensionMismatch { entry: i, expected, found: e.embedding.dims() });
        }
        let vol = e.page.volume_id().as_bytes();
        let vol_len = u16::try_from(vol.len()).map_err(|_| Error::Validation {
            entry: i,
            detail: format!("volume id is {} bytes, limit is {}", vol.len(), u16::MAX),
        })?;
        out.extend_from_slice(&vol_len.to_le_bytes());
        out.extend_from_slice(vol);
        out.extend_from_slice(&e.page.page_number().to_le_bytes());
        out.extend_from_slice(&u32_field(e.embedding.rows(), "rows")?.to_le_bytes());
        out.extend_from_slice(&u32_field(e.embedding.dims(), "dims")?.to_le_bytes());
        for v in e.embedding.as_slice() {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    Ok(out)
}

fn u32_field(n: usize, what: &str) -> Result<u32> {
    u32::try_from(n).map_err(|_| Error::Format(format!("{what} {n} exceeds u32")))
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
    entry: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let available = self.buf.len() - self.pos;
        if n > available {
            return Err(Error::Truncated { entry: self.entry, offset: self.pos, needed: n, available });
        }
        let out = &self.buf[self.pos..self.pos + n];
        self.pos += n;
        Ok(out)
    }

    fn u16(&mut self) -> Result<u16> {
        Ok(u16::from_le_bytes(self.take(2)?.try_into().unwrap()))
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn string(&mut self, what: &str) -> Result<String> {
        let len = self.u16()? as usize;
        let bytes = self.take(len)?;
        String::from_utf8(bytes.to_vec()).map_err(|_| Error::Validation {
            entry: self.entry,
            detail: format!("{what} is not valid UTF-8"),
        })
    }
}

/// Parses an embedding file held in memory. Nothing is returned unless the
/// whole buffer is valid.
pub fn decode_embeddings(buf: &[u8]) -> Result<Vec<PageEmbedding>> {
    let mut r = Reader { buf, pos: 0, entry: 0 };
    decode_embeddings_from(&mut r)
}

fn decode_embeddings_from(r: &mut Reader<'_>) -> Result<Vec<PageEmbedding>> {
    let magic = r.take(4).map_err(|_| Error::Format("file too short for header".into()))?;
    if magic != EMBEDDING_MAGIC {
        return Err(Error::Format(format!("bad magic {:?}, expected \"MVE1\"", String::from_utf8_lossy(magic))));
    }
    let version = r.u32().map_err(|_| Error::Format("file too short for header".into()))?;
    if version != FORMAT_VERSION {
        return Err(Error::Format(format!("unsupported format version {version}")));
    }
    let count = r.u32().map_err(|_| Error::Format("file too short for header".into()))? as usize;
    let mut out = Vec::with_capacity(count.min(1 << 16));
    let mut width = None;
    for i in 0..count {
        r.entry = i;
        let volume = r.string("volume id")?;
        let page_number = r.u32()?;
        let rows = r.u32()? as usize;
        let dims = r.u32()? as usize;
        let page = PageRef::new(volume, page_number).map_err(|e| Error::Validation { entry: i, detail: e.to_string() })?;
        if rows == 0 || dims == 0 {
            return Err(Error::Validation { entry: i, detail: format!("empty matrix {rows}x{dims}") });
        }
        let expected = *width.get_or_insert(dims);
        if dims != expected {
            return Err(Error::DimensionMismatch { entry: i, expected, found: dims });
        }
        let bytes = rows
            .checked_mul(dims)
            .and_then(|n| n.checked_mul(4))
            .ok_or_else(|| Error::Validation { entry: i, detail: format!("matrix {rows}x{dims} too large") })?;
        let payload = r.take(bytes)?;
        let data: Vec<f32> = payload.chunks_exact(4).map(|c| f32::from_le_bytes(c.try_into().unwrap())).collect();
        let embedding = MultiVector::new(rows, dims, data).map_err(|e| Error::Validation { entry: i, detail: e.to_string() })?;
        out.push(PageEmbedding::new(page, embedding));
    }
    Ok(out)
}

fn finish(r: &Reader<'_>) -> Result<()> {
    if r.pos != r.buf.len() {
        return Err(Error::Format(format!("{} trailing bytes after last entry", r.buf.len() - r.pos)));
    }
    Ok(())
}

/// Writes to a temporary file in the target directory, then renames it into
/// place, so readers never see a partial file.
fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p,
        _ => Path::new("."),
    };
    let mut tmp = tempfile::NamedTempFile::new_in(dir).map_err(|e| Error::io(path, e))?;
    tmp.write_all(bytes).map_err(|e| Error::io(path, e))?;
    tmp.as_file().sync_all().map_err(|e| Error::io(path, e))?;
    tmp.persist(path).map_err(|e| Error::io(path, e.error))?;
    Ok(())
}

pub fn write_embedding_file(path: impl AsRef<Path>, entries: &[PageEmbedding]) -> Result<()> {
    let path = path.as_ref();
    write_atomic(path, &encode_embeddings(entries)?)
}

pub fn read_embedding_file(path: impl AsRef<Path>) -> Result<Vec<PageEmbedding>> {
    let path = path.as_ref();
    let buf = fs::read(path).map_err(|e| Error::io(path, e))?;
    let mut r = Reader { buf: &buf, pos: 0, entry: 0 };
    let entries = decode_embeddings_from(&mut r)?;
    finish(&r)?;
    Ok(entries)
}

pub fn encode_collection(collection: &Collection) -> Result<Vec<u8>> {
    let entries: Vec<PageEmbedding> =
        collection.pages().map(|(p, m)| PageEmbedding::new(p.clone(), m.clone())).collect();
    let mut out = Vec::new();
    out.extend_from_slice(COLLECTION_MAGIC);
    out.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
    for s in [collection.name(), collection.metric().as_str()] {
        let len = u16::try_from(s.len()).map_err(|_| Error::Format(format!("header string too long: {s}")))?;
        out.extend_from_slice(&len.to_le_bytes());
        out.extend_from_slice(s.as_bytes());
    }
    out.extend_from_slice(&u32_field(collection.dims(), "dims")?.to_le_bytes());
    out.extend_from_slice(&encode_embeddings(&entries)?);
    Ok(out)
}

pub fn decode_collection(buf: &[u8]) -> Result<Collection> {
    let mut r = Reader { buf, pos: 0, entry: 0 };
    let short = |_| Error::Format("file too short for collection header".into());
    let magic = r.take(4).map_err(short)?;
    if magic != COLLECTION_MAGIC {
        return Err(Error::Format(format!("bad magic {:?}, expected \"MVC1\"", String::from_utf8_lossy(magic))));
    }
    let version = r.u32().map_err(short)?;
    if version != FORMAT_VERSION {
        return Err(Error::Format(format!("unsupported snapshot version {version}")));
    }
    let name = r.string("collection name").map_err(|e| Error::Format(e.to_string()))?;
    let metric_name = r.string("metric").map_err(|e| Error::Format(e.to_string()))?;
    let metric: Metric = metric_name.parse().map_err(|e| Error::Format(format!("metric `{metric_name}`: {e}")))?;
    let dims = r.u32().map_err(short)? as usize;
    let entries = decode_embeddings_from(&mut r)?;
    finish(&r)?;
    if let Some((i, e)) = entries.iter().enumerate().find(|(_, e)| e.embedding.dims() != dims) {
        return Err(Error::DimensionMismatch { entry: i, expected: dims, found: e.embedding.dims() });
    }
    let mut seen = std::collections::BTreeSet::new();
    if let Some(i) = entries.iter().position(|e| !seen.insert(&e.page)) {
        return Err(Error::Validation { entry: i, detail: format!("duplicate page {}", entries[i].page) });
    }
    let mut collection = Collection::new(name, metric, dims)?;
    collection.upsert(entries)?;
    Ok(collection)
}

pub fn save_collection(collection: &Collection, path: impl AsRef<Path>) -> Result<()> {
    write_atomic(path.as_ref(), &encode_collection(collection)?)
}

pub fn load_collection(path: impl AsRef<Path>) -> Result<Collection> {
    let path = path.as_ref();
    decode_collection(&fs::read(path).map_err(|e| Error::io(path, e))?)
}

/// Sidecar describing where an embedding file came from.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct Manifest {
    pub source: String,
    pub dpi: Option<u32>,
    pub model: String,
    pub created: String,
    /// Any other keys, preserved on round-trip.
    pub extra: BTreeMap<String, String>,
}

impl Manifest {
    pub fn sidecar_path(embedding_file: &Path) -> PathBuf {
        let mut s = embedding_file.as_os_str().to_owned();
        s.push(".manifest");
        PathBuf::from(s)
    }

    pub fn render(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "source={}", self.source);
        if let Some(dpi) = self.dpi {
            let _ = writeln!(out, "dpi={dpi}");
        }
        let _ = writeln!(out, "model={}", self.model);
        let _ = writeln!(out, "created={}", self.created);
        for (k, v) in &self.extra {
            let _ = writeln!(out, "{k}={v}");
        }
        out
    }

    pub fn parse(text: &str, path: &Path) -> Result<Self> {
        let mut m = Manifest::default();
        for (i, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (k, v) = line.split_once('=').ok_or_else(|| Error::Parse {
                path: path.into(),
                line: i + 1,
                message: "expected key=value".into(),
            })?;
            match k.trim() {
                "source" => m.source = v.into(),
                "dpi" => {
                    m.dpi = Some(v.trim().parse().map_err(|_| Error::Parse {
                        path: path.into(),
                        line: i + 1,
                        message: format!("bad dpi `{v}`"),
                    })?)
                }
                "model" => m.model = v.into(),
                "created" => m.created = v.into(),
                other => {
                    m.extra.insert(other.into(), v.into());
                }
            }
        }
        Ok(m)
    }

    pub fn write_for(&self, embedding_file: &Path) -> Result<()> {
        write_atomic(&Self::sidecar_path(embedding_file), self.render().as_bytes())
    }

    pub fn read_for(embedding_file: &Path) -> Result<Self> {
        let path = Self::sidecar_path(embedding_file);
        let text = fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
        Self::parse(&text, &path)
    }
}
