//! CIFAR-10 binary format: each record is 1 label byte followed by
//! 3072 pixel bytes (1024 red, 1024 green, 1024 blue, row-major).

use std::path::Path;

use crate::data::RawImages;
use crate::error::{Error, Result};

pub const RECORD_BYTES: usize = 1 + 3 * 32 * 32;

/// Load one CIFAR-10 binary batch file.
pub fn load_cifar_binary(path: &Path) -> Result<(RawImages, Vec<u8>)> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    if bytes.is_empty() || bytes.len() % RECORD_BYTES != 0 {
        return Err(Error::data(
            path,
            format!(
                "file length {} is not a positive multiple of the {RECORD_BYTES}-byte record",
                bytes.len()
            ),
        ));
    }
    let n = bytes.len() / RECORD_BYTES;
    let mut labels = Vec::with_capacity(n);
    let mut data = Vec::with_capacity(n * (RECORD_BYTES - 1));
    for (i, rec) in bytes.chunks_exact(RECORD_BYTES).enumerate() {
        let label = rec[0];
        if label > 9 {
            return Err(Error::data(
                path,
                format!("record {i} (offset {}) has label {label} > 9", i * RECORD_BYTES),
            ));
        }
        labels.push(label);
        data.extend_from_slice(&rec[1..]);
    }
    Ok((RawImages { data, n, channels: 3, height: 32, width: 32 }, labels))
}

/// Write records in CIFAR-10 binary layout.
pub fn write_cifar_binary(path: &Path, images: &RawImages, labels: &[u8]) -> Result<()> {
    assert_eq!(images.channels, 3, "cifar images are 3-channel");
    assert_eq!(images.n, labels.len(), "image/label count mismatch");
    let per = images.pixels_per_image();
    let mut buf = Vec::with_capacity(images.n * RECORD_BYTES);
    for i in 0..images.n {
        buf.push(labels[i]);
        buf.extend_from_slice(&images.data[i * per..(i + 1) * per]);
    }
    std::fs::write(path, buf).map_err(|e| Error::io(path, e))
}
