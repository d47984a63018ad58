//! Label mapping, noising, and image decoration.

use rand::Rng;

use crate::data::BaseDataset;
use crate::error::{Error, Result};

/// How the spurious tag is painted onto an image.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SpuriousMechanism {
    /// Tag selects a color: binary tasks emit two channels (channel `z`
    /// holds the pixels, the other is zero); multi-class tasks emit three
    /// channels scaled by a palette entry.
    Color,
    /// Tag selects which top corner of the image gets a 5x5 zeroed patch
    /// (z=0 left, z=1 right). CIFAR only; keeps the native 3 channels.
    Patch,
}

/// RGB multipliers used to color multi-class tasks; entry `z` decorates
/// tag `z`. Chosen for mutual distance in RGB space.
pub const PALETTE10: [[f64; 3]; 10] = [
    [1.0, 0.0, 0.0], // red
    [0.0, 1.0, 0.0], // green
    [0.0, 0.0, 1.0], // blue
    [1.0, 1.0, 0.0], // yellow
    [1.0, 0.0, 1.0], // magenta
    [0.0, 1.0, 1.0], // cyan
    [1.0, 0.5, 0.0], // orange
    [0.5, 0.0, 1.0], // violet
    [0.0, 1.0, 0.5], // spring green
    [1.0, 1.0, 1.0], // white
];

/// Flattened input dimension after decoration of a 28x28 (color) or
/// 32x32x3 (patch) image.
pub fn decorated_dim(mechanism: SpuriousMechanism, classes: u8) -> usize {
    match (mechanism, classes) {
        (SpuriousMechanism::Color, 2) => 2 * 28 * 28,
        (SpuriousMechanism::Color, _) => 3 * 28 * 28,
        (SpuriousMechanism::Patch, _) => 3 * 32 * 32,
    }
}

/// Map raw base labels into task classes; `None` drops the sample.
///
/// Binary rules: MNIST digit < 5 -> 0; Fashion-MNIST clothing
/// {t-shirt, trouser, pullover, dress, coat, shirt} -> 0 and footwear
/// {sandal, sneaker, ankle boot} -> 1 with `bag` dropped; CIFAR vehicles
/// {airplane, automobile, ship, truck} -> 0 and animals
/// {bird, cat, deer, dog, horse} -> 1 with `frog` dropped.
/// 5-class tasks keep base classes 0-4; 10-class tasks keep everything.
pub fn map_base_labels(
    raw: &[u8],
    base: BaseDataset,
    classes: u8,
) -> Result<Vec<Option<u8>>> {
    let map_one = |v: u8| -> Result<Option<u8>> {
        if v > 9 {
            return Err(Error::DataGeneral(format!("raw label {v} > 9")));
        }
        Ok(match (base, classes) {
            (BaseDataset::Mnist, 2) => Some(u8::from(v >= 5)),
            (BaseDataset::FashionMnist, 2) => match v {
                0 | 1 | 2 | 3 | 4 | 6 => Some(0),
                5 | 7 | 9 => Some(1),
                _ => None, // bag
            },
            (BaseDataset::Cifar10, 2) => match v {
                0 | 1 | 8 | 9 => Some(0),
                2 | 3 | 4 | 5 | 7 => Some(1),
                _ => None, // frog
            },
            (_, 5) => (v < 5).then_some(v),
            (_, 10) => Some(v),
            _ => return Err(Error::InvalidArgument(format!("unsupported class count {classes}"))),
        })
    };
    raw.iter().map(|&v| map_one(v)).collect()
}

/// Binary task mapping: task label plus the kept raw indices.
pub fn binarize_labels(raw: &[u8], base: BaseDataset) -> Result<(Vec<u8>, Vec<usize>)> {
    let mapped = map_base_labels(raw, base, 2)?;
    let mut labels = Vec::with_capacity(raw.len());
    let mut kept = Vec::with_capacity(raw.len());
    for (i, m) in mapped.into_iter().enumerate() {
        if let Some(y) = m {
            labels.push(y);
            kept.push(i);
        }
    }
    Ok((labels, kept))
}

/// Independently replace each entry by `(v + 1) mod classes` with
/// probability `prob`. One uniform draw is consumed per entry regardless of
/// the outcome, so stream positions are input-independent.
pub fn flip_with_prob<R: Rng>(labels: &[u8], prob: f64, classes: u8, rng: &mut R) -> Vec<u8> {
    labels
        .iter()
        .map(|&v| {
            let u: f64 = rng.gen();
            if u < prob {
                (v + 1) % classes
            } else {
                v
            }
        })
        .collect()
}

/// Decorate one raw image with spurious tag `z`, returning the flattened
/// f64 input row (pixels divided by 255).
pub fn apply_spurious_feature(
    image: &[u8],
    mechanism: SpuriousMechanism,
    classes: u8,
    z: u8,
) -> Vec<f64> {
    match (mechanism, classes) {
        (SpuriousMechanism::Color, 2) => {
            debug_assert_eq!(image.len(), 28 * 28);
            let mut out = vec![0.0; 2 * 28 * 28];
            let plane = 28 * 28;
            let offset = z as usize * plane;
            for (i, &p) in image.iter().enumerate() {
                out[offset + i] = p as f64 / 255.0;
            }
            out
        }
        (SpuriousMechanism::Color, _) => {
            debug_assert_eq!(image.len(), 28 * 28);
            let mult = PALETTE10[z as usize];
            let plane = 28 * 28;
            let mut out = vec![0.0; 3 * plane];
            for (i, &p) in image.iter().enumerate() {
                let v = p as f64 / 255.0;
                out[i] = v * mult[0];
                out[plane + i] = v * mult[1];
                out[2 * plane + i] = v * mult[2];
            }
            out
        }
        (SpuriousMechanism::Patch, _) => {
            debug_assert_eq!(image.len(), 3 * 32 * 32);
            let mut out: Vec<f64> = image.iter().map(|&p| p as f64 / 255.0).collect();
            let col0 = if z == 0 { 0 } else { 32 - 5 };
            for ch in 0..3 {
                for r in 0..5 {
                    for c in col0..col0 + 5 {
                        out[ch * 1024 + r * 32 + c] = 0.0;
                    }
                }
            }
            out
        }
    }
}
