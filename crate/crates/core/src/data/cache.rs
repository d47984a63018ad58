//! Flat binary cache for decorated federated datasets.
//!
//! Layout (all integers and floats little-endian):
//!   magic  "FGD1"            4 bytes
//!   version                  u32 (currently 1)
//!   classes                  u32
//!   input_dim                u64
//!   train_clients            u32
//!   then `train_clients + 1` blocks (train clients in order, then test):
//!     rows                   u64
//!     inputs                 rows * input_dim * f64, row-major
//!     labels                 rows * i32
//!     spurious tags          rows * i32

use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use byteorder::{LittleEndian, ReadBytesExt, WriteBytesExt};
use ndarray::Array2;

use crate::data::{ClientDataset, FederatedDataset};
use crate::error::{Error, Result};

const MAGIC: &[u8; 4] = b"FGD1";
const VERSION: u32 = 1;

pub fn save_dataset(path: &Path, ds: &FederatedDataset) -> Result<()> {
    let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    let io_err = |e: std::io::Error| Error::io(path, e);
    w.write_all(MAGIC).map_err(io_err)?;
    w.write_u32::<LittleEndian>(VERSION).map_err(io_err)?;
    w.write_u32::<LittleEndian>(ds.classes as u32).map_err(io_err)?;
    w.write_u64::<LittleEndian>(ds.input_dim as u64).map_err(io_err)?;
    w.write_u32::<LittleEndian>(ds.train.len() as u32).map_err(io_err)?;
    for client in ds.train.iter().chain([&ds.test]) {
        w.write_u64::<LittleEndian>(client.n() as u64).map_err(io_err)?;
        for &v in client.inputs.iter() {
            w.write_f64::<LittleEndian>(v).map_err(io_err)?;
        }
        for &l in &client.labels {
            w.write_i32::<LittleEndian>(l as i32).map_err(io_err)?;
        }
        for &z in &client.spurious {
            w.write_i32::<LittleEndian>(z as i32).map_err(io_err)?;
        }
    }
    w.flush().map_err(io_err)
}

pub fn load_dataset(path: &Path) -> Result<FederatedDataset> {
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut r = BufReader::new(file);
    let io_err = |e: std::io::Error| Error::data(path, format!("truncated cache file: {e}"));
    let mut magic = [0u8; 4];
    r.read_exact(&mut magic).map_err(io_err)?;
    if &magic != MAGIC {
        return Err(Error::data(path, format!("bad cache magic {magic:?} at offset 0")));
    }
    let version = r.read_u32::<LittleEndian>().map_err(io_err)?;
    if version != VERSION {
        return Err(Error::data(path, format!("unsupported cache version {version}")));
    }
    let classes = r.read_u32::<LittleEndian>().map_err(io_err)?;
    if classes == 0 || classes > 255 {
        return Err(Error::data(path, format!("implausible class count {classes}")));
    }
    let input_dim = r.read_u64::<LittleEndian>().map_err(io_err)? as usize;
    let train_clients = r.read_u32::<LittleEndian>().map_err(io_err)? as usize;

    let read_client = |r: &mut BufReader<std::fs::File>| -> Result<ClientDataset> {
        let rows = r.read_u64::<LittleEndian>().map_err(io_err)? as usize;
        let mut values = vec![0.0f64; rows * input_dim];
        r.read_f64_into::<LittleEndian>(&mut values).map_err(io_err)?;
        let inputs = Array2::from_shape_vec((rows, input_dim), values)
            .expect("shape follows from the read sizes");
        let mut read_u8s = |what: &str| -> Result<Vec<u8>> {
            let mut raw = vec![0i32; rows];
            r.read_i32_into::<LittleEndian>(&mut raw).map_err(io_err)?;
            raw.into_iter()
                .map(|v| {
                    u8::try_from(v).map_err(|_| {
                        Error::data(path, format!("{what} value {v} outside u8 range"))
                    })
                })
                .collect()
        };
        let labels = read_u8s("label")?;
        let spurious = read_u8s("spurious tag")?;
        Ok(ClientDataset { inputs, labels, spurious })
    };

    let mut train = Vec::with_capacity(train_clients);
    for _ in 0..train_clients {
        train.push(read_client(&mut r)?);
    }
    let test = read_client(&mut r)?;
    let mut trailing = [0u8; 1];
    if r.read(&mut trailing).map_err(io_err)? != 0 {
        return Err(Error::data(path, "trailing bytes after final block"));
    }
    let ds = FederatedDataset { train, test, classes: classes as u8, input_dim };
    ds.validate()?;
    Ok(ds)
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    fn tiny_dataset() -> FederatedDataset {
        FederatedDataset {
            train: vec![
                ClientDataset {
                    inputs: array![[0.0, 0.5], [1.0, 0.25]],
                    labels: vec![0, 1],
                    spurious: vec![1, 1],
                },
                ClientDataset {
                    inputs: array![[0.125, 0.625]],
                    labels: vec![1],
                    spurious: vec![0],
                },
            ],
            test: ClientDataset {
                inputs: array![[0.75, 0.875]],
                labels: vec![0],
                spurious: vec![1],
            },
            classes: 2,
            input_dim: 2,
        }
    }

    #[test]
    fn cache_round_trip_is_exact() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("ds.fgd");
        let ds = tiny_dataset();
        save_dataset(&path, &ds).unwrap();
        let rt = load_dataset(&path).unwrap();
        assert_eq!(rt, ds);
        // file content is itself deterministic
        let bytes1 = std::fs::read(&path).unwrap();
        save_dataset(&path, &ds).unwrap();
        assert_eq!(bytes1, std::fs::read(&path).unwrap());
    }

    #[test]
    fn cache_rejects_corruption() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("ds.fgd");
        save_dataset(&path, &tiny_dataset()).unwrap();
        let good = std::fs::read(&path).unwrap();

        let mut bad_magic = good.clone();
        bad_magic[0] = b'X';
        std::fs::write(&path, &bad_magic).unwrap();
        assert!(load_dataset(&path).unwrap_err().to_string().contains("magic"));

        let mut truncated = good.clone();
        truncated.truncate(good.len() - 4);
        std::fs::write(&path, &truncated).unwrap();
        assert!(load_dataset(&path).is_err());

        let mut trailing = good.clone();
        trailing.push(0);
        std::fs::write(&path, &trailing).unwrap();
        assert!(load_dataset(&path).unwrap_err().to_string().contains("trailing"));
    }
}
