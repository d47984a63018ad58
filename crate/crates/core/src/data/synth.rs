//! Corpus file IO plus a deterministic synthetic stand-in generator.
//!
//! `load_corpus` reads the standard on-disk layouts (IDX files for the
//! 28x28 corpora, binary batches for the 32x32x3 corpus). When those files
//! are absent, `ensure_corpus` fabricates glyph corpora with the same file
//! formats, image shapes, class count, and split sizes, writes them under
//! the standard names next to a `SYNTHETIC.txt` marker, and loads them back
//! through the same parsers — so every downstream stage exercises identical
//! code paths whether the corpus is real or generated.
//!
//! The generated tasks are calibrated so that a small MLP behaves like it
//! does on the real corpora: the 28x28 glyph sets are highly learnable,
//! while the 32x32 set adds position jitter, clutter, and noise to keep the
//! clean task materially harder.

use std::path::{Path, PathBuf};

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::data::{cifar, idx, BaseCorpus, BaseDataset, RawImages, RawSplit};
use crate::error::{Error, Result};
use crate::rng::{stream, Domain};

/// Marker file written beside generated corpora so synthetic data is never
/// mistaken for the real thing.
pub const SYNTH_MARKER: &str = "SYNTHETIC.txt";

const TRAIN_N: usize = 60_000;
const TEST_N: usize = 10_000;
const CIFAR_TRAIN_N: usize = 50_000;
const CIFAR_BATCH: usize = 10_000;

/// Directory holding one corpus's files, following each format's
/// conventional layout.
pub fn corpus_dir(root: &Path, kind: BaseDataset) -> PathBuf {
    match kind {
        BaseDataset::Mnist => root.join("mnist"),
        BaseDataset::FashionMnist => root.join("fashion_mnist"),
        BaseDataset::Cifar10 => root.join("cifar-10-batches-bin"),
    }
}

/// Every file a corpus needs on disk, in loading order.
pub fn expected_files(root: &Path, kind: BaseDataset) -> Vec<PathBuf> {
    let dir = corpus_dir(root, kind);
    match kind {
        BaseDataset::Mnist | BaseDataset::FashionMnist => vec![
            dir.join("train-images-idx3-ubyte"),
            dir.join("train-labels-idx1-ubyte"),
            dir.join("t10k-images-idx3-ubyte"),
            dir.join("t10k-labels-idx1-ubyte"),
        ],
        BaseDataset::Cifar10 => {
            let mut v: Vec<PathBuf> =
                (1..=5).map(|i| dir.join(format!("data_batch_{i}.bin"))).collect();
            v.push(dir.join("test_batch.bin"));
            v
        }
    }
}

/// Load a corpus from its standard files under `root`.
pub fn load_corpus(root: &Path, kind: BaseDataset) -> Result<BaseCorpus> {
    let files = expected_files(root, kind);
    match kind {
        BaseDataset::Mnist | BaseDataset::FashionMnist => {
            let (train_images, train_labels) = idx::load_idx_pair(&files[0], &files[1])?;
            let (test_images, test_labels) = idx::load_idx_pair(&files[2], &files[3])?;
            for im in [&train_images, &test_images] {
                if im.height != 28 || im.width != 28 {
                    return Err(Error::DataGeneral(format!(
                        "expected 28x28 images for {}, got {}x{}",
                        kind.name(),
                        im.height,
                        im.width
                    )));
                }
            }
            Ok(BaseCorpus {
                train: RawSplit { images: train_images, labels: train_labels },
                test: RawSplit { images: test_images, labels: test_labels },
            })
        }
        BaseDataset::Cifar10 => {
            let mut data = Vec::new();
            let mut labels = Vec::new();
            for f in &files[..5] {
                let (im, lb) = cifar::load_cifar_binary(f)?;
                data.extend_from_slice(&im.data);
                labels.extend_from_slice(&lb);
            }
            let train = RawSplit {
                images: RawImages { data, n: labels.len(), channels: 3, height: 32, width: 32 },
                labels,
            };
            let (im, lb) = cifar::load_cifar_binary(&files[5])?;
            Ok(BaseCorpus { train, test: RawSplit { images: im, labels: lb } })
        }
    }
}

/// Load the corpus if its files exist; otherwise generate the synthetic
/// stand-in, write it under the standard names, and load that. Returns the
/// corpus and whether it came from generated files.
pub fn ensure_corpus(root: &Path, kind: BaseDataset, seed: u64) -> Result<(BaseCorpus, bool)> {
    let files = expected_files(root, kind);
    let missing: Vec<&PathBuf> = files.iter().filter(|f| !f.exists()).collect();
    if missing.is_empty() {
        return Ok((load_corpus(root, kind)?, false));
    }
    if missing.len() < files.len() {
        let list: Vec<String> = missing.iter().map(|p| p.display().to_string()).collect();
        return Err(Error::DataGeneral(format!(
            "corpus {} is incomplete; missing: {}",
            kind.name(),
            list.join(", ")
        )));
    }
    write_synthetic_corpus(root, kind, seed)?;
    Ok((load_corpus(root, kind)?, true))
}

/// Generate the synthetic corpus for `kind` and write it under `root` in
/// the standard file layout, plus the `SYNTHETIC.txt` marker.
pub fn write_synthetic_corpus(root: &Path, kind: BaseDataset, seed: u64) -> Result<Vec<PathBuf>> {
    let corpus = generate_corpus(kind, seed);
    let dir = corpus_dir(root, kind);
    std::fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
    let files = expected_files(root, kind);
    match kind {
        BaseDataset::Mnist | BaseDataset::FashionMnist => {
            idx::write_idx_images(&files[0], &corpus.train.images)?;
            idx::write_idx_labels(&files[1], &corpus.train.labels)?;
            idx::write_idx_images(&files[2], &corpus.test.images)?;
            idx::write_idx_labels(&files[3], &corpus.test.labels)?;
        }
        BaseDataset::Cifar10 => {
            for (i, f) in files[..5].iter().enumerate() {
                let lo = i * CIFAR_BATCH;
                let hi = lo + CIFAR_BATCH;
                let images = RawImages {
                    data: corpus.train.images.data[lo * 3072..hi * 3072].to_vec(),
                    n: CIFAR_BATCH,
                    channels: 3,
                    height: 32,
                    width: 32,
                };
                cifar::write_cifar_binary(f, &images, &corpus.train.labels[lo..hi])?;
            }
            cifar::write_cifar_binary(&files[5], &corpus.test.images, &corpus.test.labels)?;
        }
    }
    let marker = dir.join(SYNTH_MARKER);
    std::fs::write(
        &marker,
        format!(
            "Generated stand-in corpus (seed {seed}). Replace these files with the \
             real {} files to run on actual data.\n",
            kind.name()
        ),
    )
    .map_err(|e| Error::io(&marker, e))?;
    Ok(files)
}

/// Build a full corpus for `kind` in memory, deterministically from `seed`.
pub fn generate_corpus(kind: BaseDataset, seed: u64) -> BaseCorpus {
    // one rng stream per (kind, split) so splits are independent
    let base = match kind {
        BaseDataset::Mnist => 0,
        BaseDataset::FashionMnist => 2,
        BaseDataset::Cifar10 => 4,
    };
    let mut train_rng = stream(seed, Domain::SynthImages, base);
    let mut test_rng = stream(seed, Domain::SynthImages, base + 1);
    match kind {
        BaseDataset::Mnist => BaseCorpus {
            train: glyph_split(TRAIN_N, &DIGIT_GLYPHS, &MNIST_STYLE, &mut train_rng),
            test: glyph_split(TEST_N, &DIGIT_GLYPHS, &MNIST_STYLE, &mut test_rng),
        },
        BaseDataset::FashionMnist => BaseCorpus {
            train: glyph_split(TRAIN_N, &FASHION_GLYPHS, &FASHION_STYLE, &mut train_rng),
            test: glyph_split(TEST_N, &FASHION_GLYPHS, &FASHION_STYLE, &mut test_rng),
        },
        BaseDataset::Cifar10 => BaseCorpus {
            train: scene_split(CIFAR_TRAIN_N, &mut train_rng),
            test: scene_split(TEST_N, &mut test_rng),
        },
    }
}

// ---------------------------------------------------------------------------
// 28x28 grayscale glyph corpora
// ---------------------------------------------------------------------------

/// Per-corpus rendering style; the constants steer how hard the clean
/// classification task is for a small MLP.
struct GlyphStyle {
    /// uniform pixel shift in [-shift, +shift] per axis
    shift: i32,
    /// probability each 4x4 glyph cell is dropped for an image
    erode: f64,
    stroke_lo: u8,
    stroke_hi: u8,
    /// additive per-pixel stroke jitter in [-j, +j]
    stroke_jitter: i32,
    /// background pixels uniform in [0, bg_hi]
    bg_hi: u8,
}

static MNIST_STYLE: GlyphStyle = GlyphStyle {
    shift: 2,
    erode: 0.03,
    stroke_lo: 150,
    stroke_hi: 255,
    stroke_jitter: 40,
    bg_hi: 30,
};

static FASHION_STYLE: GlyphStyle = GlyphStyle {
    shift: 3,
    erode: 0.15,
    stroke_lo: 110,
    stroke_hi: 255,
    stroke_jitter: 70,
    bg_hi: 45,
};

/// 7x7 glyph masks, one per class, drawn on a 4x upscaled 28x28 canvas.
type Glyph = [&'static str; 7];

static DIGIT_GLYPHS: [Glyph; 10] = [
    [".#####.", "#.....#", "#.....#", "#.....#", "#.....#", "#.....#", ".#####."],
    ["...#...", "..##...", "...#...", "...#...", "...#...", "...#...", "..###.."],
    [".#####.", "......#", "......#", ".#####.", "#......", "#......", "#######"],
    [".#####.", "......#", "......#", "..####.", "......#", "......#", ".#####."],
    ["#......", "#...#..", "#...#..", "#######", "....#..", "....#..", "....#.."],
    ["#######", "#......", "#......", "######.", "......#", "......#", "######."],
    [".#####.", "#......", "#......", "######.", "#.....#", "#.....#", ".#####."],
    ["#######", "......#", ".....#.", "....#..", "...#...", "..#....", "..#...."],
    [".#####.", "#.....#", "#.....#", ".#####.", "#.....#", "#.....#", ".#####."],
    [".#####.", "#.....#", "#.....#", ".######", "......#", "......#", ".#####."],
];

static FASHION_GLYPHS: [Glyph; 10] = [
    ["##...##", "#######", ".#####.", ".#####.", ".#####.", ".#####.", ".#####."],
    ["#######", "###.###", "##...##", "##...##", "##...##", "##...##", "##...##"],
    ["#.###.#", "#######", "#######", ".#####.", ".#####.", ".#####.", ".#####."],
    ["..###..", "..###..", ".#####.", ".#####.", "#######", "#######", "#######"],
    ["##.#.##", "#######", "##.#.##", "##.#.##", "##.#.##", "#######", "##.#.##"],
    [".......", ".......", "....###", "..#####", "#######", "#.#.#.#", "#######"],
    ["##...##", "#.###.#", ".#####.", ".##.##.", ".#####.", ".##.##.", ".#####."],
    [".......", ".......", ".###...", ".####..", "#######", "#######", "#######"],
    ["..###..", ".#...#.", "#######", "#.....#", "#.....#", "#.....#", "#######"],
    [".###...", ".###...", ".###...", ".###...", ".#####.", ".######", ".######"],
];

fn glyph_bits(glyph: &Glyph) -> [[bool; 7]; 7] {
    let mut bits = [[false; 7]; 7];
    for (r, row) in glyph.iter().enumerate() {
        debug_assert_eq!(row.len(), 7);
        for (c, ch) in row.bytes().enumerate() {
            bits[r][c] = ch == b'#';
        }
    }
    bits
}

fn glyph_split(
    n: usize,
    glyphs: &[Glyph; 10],
    style: &GlyphStyle,
    rng: &mut ChaCha8Rng,
) -> RawSplit {
    let bits: Vec<[[bool; 7]; 7]> = glyphs.iter().map(glyph_bits).collect();
    let mut data = Vec::with_capacity(n * 28 * 28);
    let mut labels = Vec::with_capacity(n);
    for _ in 0..n {
        let label = rng.gen_range(0..10u8);
        labels.push(label);
        render_glyph28(&bits[label as usize], style, rng, &mut data);
    }
    RawSplit {
        images: RawImages { data, n, channels: 1, height: 28, width: 28 },
        labels,
    }
}

fn render_glyph28(
    cells: &[[bool; 7]; 7],
    style: &GlyphStyle,
    rng: &mut ChaCha8Rng,
    out: &mut Vec<u8>,
) {
    let dx = rng.gen_range(-style.shift..=style.shift);
    let dy = rng.gen_range(-style.shift..=style.shift);
    let base = rng.gen_range(style.stroke_lo..=style.stroke_hi) as i32;
    let mut kept = *cells;
    if style.erode > 0.0 {
        for row in kept.iter_mut() {
            for cell in row.iter_mut() {
                if *cell && rng.gen_bool(style.erode) {
                    *cell = false;
                }
            }
        }
    }
    for r in 0..28i32 {
        for c in 0..28i32 {
            let sr = r - dy;
            let sc = c - dx;
            let on = (0..28).contains(&sr)
                && (0..28).contains(&sc)
                && kept[(sr / 4) as usize][(sc / 4) as usize];
            let v = if on {
                base + rng.gen_range(-style.stroke_jitter..=style.stroke_jitter)
            } else {
                rng.gen_range(0..=style.bg_hi as i32)
            };
            out.push(v.clamp(0, 255) as u8);
        }
    }
}

// ---------------------------------------------------------------------------
// 32x32x3 scene corpus (harder: position jitter, clutter, color-free class)
// ---------------------------------------------------------------------------

/// Glyph placement range: top-left corner in [POS_LO, POS_HI] per axis for a
/// 14x14 (2x upscaled) glyph on the 32x32 canvas.
const SCENE_POS_LO: i32 = 1;
const SCENE_POS_HI: i32 = 17;
const SCENE_BG_NOISE: i32 = 25;
const SCENE_PX_NOISE: i32 = 18;
const SCENE_CLUTTER: usize = 3;

fn scene_split(n: usize, rng: &mut ChaCha8Rng) -> RawSplit {
    let bits: Vec<[[bool; 7]; 7]> = DIGIT_GLYPHS.iter().map(glyph_bits).collect();
    let mut data = Vec::with_capacity(n * 3072);
    let mut labels = Vec::with_capacity(n);
    for _ in 0..n {
        let label = rng.gen_range(0..10u8);
        labels.push(label);
        render_scene32(&bits[label as usize], rng, &mut data);
    }
    RawSplit {
        images: RawImages { data, n, channels: 3, height: 32, width: 32 },
        labels,
    }
}

fn render_scene32(cells: &[[bool; 7]; 7], rng: &mut ChaCha8Rng, out: &mut Vec<u8>) {
    // smooth background: bilinear blend of four random corner colors
    let corners: [[i32; 3]; 4] =
        std::array::from_fn(|_| std::array::from_fn(|_| rng.gen_range(30..=200)));
    let mut px = [[[0i32; 32]; 32]; 3];
    for r in 0..32 {
        for c in 0..32 {
            let fr = r as i32;
            let fc = c as i32;
            for ch in 0..3 {
                let top = corners[0][ch] * (31 - fc) + corners[1][ch] * fc;
                let bot = corners[2][ch] * (31 - fc) + corners[3][ch] * fc;
                let v = (top * (31 - fr) + bot * fr) / (31 * 31);
                px[ch][r][c] = v + rng.gen_range(-SCENE_BG_NOISE..=SCENE_BG_NOISE);
            }
        }
    }
    // clutter rectangles in random colors
    for _ in 0..SCENE_CLUTTER {
        let h = rng.gen_range(3..=8usize);
        let w = rng.gen_range(3..=8usize);
        let r0 = rng.gen_range(0..=(32 - h));
        let c0 = rng.gen_range(0..=(32 - w));
        let color: [i32; 3] = std::array::from_fn(|_| rng.gen_range(0..=255));
        for r in r0..r0 + h {
            for c in c0..c0 + w {
                for ch in 0..3 {
                    px[ch][r][c] = (px[ch][r][c] + color[ch]) / 2;
                }
            }
        }
    }
    // class glyph at 2x scale, random position, random bright color
    let gr = rng.gen_range(SCENE_POS_LO..=SCENE_POS_HI);
    let gc = rng.gen_range(SCENE_POS_LO..=SCENE_POS_HI);
    let color: [i32; 3] = std::array::from_fn(|_| rng.gen_range(120..=255));
    for r in 0..14 {
        for c in 0..14 {
            if cells[r / 2][c / 2] {
                let rr = (gr + r as i32) as usize;
                let cc = (gc + c as i32) as usize;
                for ch in 0..3 {
                    px[ch][rr][cc] = (px[ch][rr][cc] + 5 * color[ch]) / 6;
                }
            }
        }
    }
    // final per-pixel noise, channel-planar layout (all R, all G, all B)
    for ch in 0..3 {
        for r in 0..32 {
            for c in 0..32 {
                let v = px[ch][r][c] + rng.gen_range(-SCENE_PX_NOISE..=SCENE_PX_NOISE);
                out.push(v.clamp(0, 255) as u8);
            }
        }
    }
}
