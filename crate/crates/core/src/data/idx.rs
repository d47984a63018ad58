//! IDX file parsing and writing (the MNIST-family on-disk format).
//!
//! Big-endian throughout. Image files carry magic 2051 and dims
//! `[n, rows, cols]`; label files carry magic 2049 and `[n]`.

use std::io::{Cursor, Write};
use std::path::Path;

use byteorder::{BigEndian, ReadBytesExt, WriteBytesExt};

use crate::data::RawImages;
use crate::error::{Error, Result};

pub const IMAGE_MAGIC: u32 = 2051;
pub const LABEL_MAGIC: u32 = 2049;

/// Parsed content of one IDX file.
#[derive(Debug, Clone, PartialEq)]
pub enum IdxFile {
    Images(RawImages),
    Labels(Vec<u8>),
}

/// Load an IDX file, dispatching on its magic number. Errors name the file
/// and the byte offset where parsing failed.
pub fn load_idx(path: &Path) -> Result<IdxFile> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    parse_idx(&bytes).map_err(|msg| Error::data(path, msg))
}

fn parse_idx(bytes: &[u8]) -> std::result::Result<IdxFile, String> {
    let mut cur = Cursor::new(bytes);
    let magic = cur
        .read_u32::<BigEndian>()
        .map_err(|_| "truncated before magic number (offset 0)".to_string())?;
    match magic {
        IMAGE_MAGIC => {
            let n = read_dim(&mut cur, "image count")? as usize;
            let rows = read_dim(&mut cur, "row count")? as usize;
            let cols = read_dim(&mut cur, "column count")? as usize;
            let expected = n * rows * cols;
            let offset = cur.position() as usize;
            let got = bytes.len() - offset;
            if got != expected {
                return Err(format!(
                    "expected {expected} pixel bytes after offset {offset}, found {got}"
                ));
            }
            Ok(IdxFile::Images(RawImages {
                data: bytes[offset..].to_vec(),
                n,
                channels: 1,
                height: rows,
                width: cols,
            }))
        }
        LABEL_MAGIC => {
            let n = read_dim(&mut cur, "label count")? as usize;
            let offset = cur.position() as usize;
            let got = bytes.len() - offset;
            if got != n {
                return Err(format!("expected {n} label bytes after offset {offset}, found {got}"));
            }
            Ok(IdxFile::Labels(bytes[offset..].to_vec()))
        }
        other => Err(format!(
            "bad magic {other} at offset 0 (expected {IMAGE_MAGIC} for images or {LABEL_MAGIC} for labels)"
        )),
    }
}

fn read_dim(cur: &mut Cursor<&[u8]>, what: &str) -> std::result::Result<u32, String> {
    let off = cur.position();
    cur.read_u32::<BigEndian>().map_err(|_| format!("truncated reading {what} at offset {off}"))
}

/// Write images in IDX format.
pub fn write_idx_images(path: &Path, images: &RawImages) -> Result<()> {
    assert_eq!(images.channels, 1, "idx images are single-channel");
    let mut buf = Vec::with_capacity(16 + images.data.len());
    buf.write_u32::<BigEndian>(IMAGE_MAGIC).unwrap();
    buf.write_u32::<BigEndian>(images.n as u32).unwrap();
    buf.write_u32::<BigEndian>(images.height as u32).unwrap();
    buf.write_u32::<BigEndian>(images.width as u32).unwrap();
    buf.write_all(&images.data).unwrap();
    std::fs::write(path, buf).map_err(|e| Error::io(path, e))
}

/// Write labels in IDX format.
pub fn write_idx_labels(path: &Path, labels: &[u8]) -> Result<()> {
    let mut buf = Vec::with_capacity(8 + labels.len());
    buf.write_u32::<BigEndian>(LABEL_MAGIC).unwrap();
    buf.write_u32::<BigEndian>(labels.len() as u32).unwrap();
    buf.write_all(labels).unwrap();
    std::fs::write(path, buf).map_err(|e| Error::io(path, e))
}

/// Convenience: load a `(images, labels)` pair and cross-check counts.
pub fn load_idx_pair(images_path: &Path, labels_path: &Path) -> Result<(RawImages, Vec<u8>)> {
    let images = match load_idx(images_path)? {
        IdxFile::Images(im) => im,
        IdxFile::Labels(_) => {
            return Err(Error::data(images_path, "expected an image file, found labels"))
        }
    };
    let labels = match load_idx(labels_path)? {
        IdxFile::Labels(l) => l,
        IdxFile::Images(_) => {
            return Err(Error::data(labels_path, "expected a label file, found images"))
        }
    };
    if images.n != labels.len() {
        return Err(Error::data(
            images_path,
            format!("{} images but {} labels", images.n, labels.len()),
        ));
    }
    Ok((images, labels))
}
