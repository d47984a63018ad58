//! Dataset synthesis: base corpora (IDX / CIFAR binary files) are relabeled,
//! noised, and decorated with a per-client spurious feature, then split into
//! per-client training sets plus one held-out test client.
//!
//! Per kept sample the pipeline is
//!   base label -> class map -> y~  (drop classes outside the task)
//!   y  = flip(y~, label_noise)     (invariant-feature ceiling)
//!   z  = flip(y,  p_client)        (spurious tag; p reverses at test time)
//!   x  = decorate(image, z)        (color channels or corner patch, /255)
//! with flips drawn from per-client, per-stage rng streams.

pub mod cache;
pub mod cifar;
pub mod idx;
pub mod spurious;
pub mod synth;

use ndarray::Array2;
use rand::seq::SliceRandom;

use crate::error::{Error, Result};
use crate::rng::{stream, Domain, NO_CLIENT};

pub use spurious::{
    apply_spurious_feature, binarize_labels, flip_with_prob, map_base_labels, SpuriousMechanism,
    PALETTE10,
};

/// Which raw corpus feeds the pipeline.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BaseDataset {
    Mnist,
    FashionMnist,
    Cifar10,
}

impl BaseDataset {
    pub fn name(self) -> &'static str {
        match self {
            BaseDataset::Mnist => "mnist",
            BaseDataset::FashionMnist => "fashion_mnist",
            BaseDataset::Cifar10 => "cifar10",
        }
    }
}

/// Raw images as stored on disk: `n` images, `channels` planes of
/// `height x width` bytes, sample-major then channel-major.
#[derive(Debug, Clone, PartialEq)]
pub struct RawImages {
    pub data: Vec<u8>,
    pub n: usize,
    pub channels: usize,
    pub height: usize,
    pub width: usize,
}

impl RawImages {
    pub fn pixels_per_image(&self) -> usize {
        self.channels * self.height * self.width
    }

    pub fn image(&self, i: usize) -> &[u8] {
        let sz = self.pixels_per_image();
        &self.data[i * sz..(i + 1) * sz]
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RawSplit {
    pub images: RawImages,
    pub labels: Vec<u8>,
}

/// A full base corpus (train + test splits) in memory.
#[derive(Debug, Clone, PartialEq)]
pub struct BaseCorpus {
    pub train: RawSplit,
    pub test: RawSplit,
}

/// How the kept training samples are divided among clients.
#[derive(Debug, Clone, PartialEq)]
pub enum SplitPlan {
    /// Sizes differ by at most one; the first `n % k` clients get the extra.
    Even,
    /// Explicit fractions (must sum to 1); largest-remainder rounding keeps
    /// the split an exact partition.
    Proportions(Vec<f64>),
}

/// Complete description of a decorated federated dataset.
#[derive(Debug, Clone, PartialEq)]
pub struct SpuriousDatasetSpec {
    pub base: BaseDataset,
    /// Number of task classes C. 2, 5, or 10 for the MNIST-family corpora
    /// (5 keeps base classes 0-4, 10 keeps all); must be 2 for CIFAR.
    pub classes: u8,
    pub n_clients: usize,
    /// Probability the task label differs from the mapped base label.
    pub label_noise: f64,
    /// Per-client probability that the spurious tag differs from the label.
    pub client_spurious_p: Vec<f64>,
    /// Same, for the held-out test client (high: the correlation reverses).
    pub test_spurious_p: f64,
    pub mechanism: SpuriousMechanism,
    pub split: SplitPlan,
}

impl SpuriousDatasetSpec {
    /// The two-client benchmark configuration for a base corpus:
    /// delta 0.25, p = (0.2, 0.1), p_test 0.9, even split, binary task.
    pub fn standard(base: BaseDataset) -> Self {
        let mechanism = match base {
            BaseDataset::Cifar10 => SpuriousMechanism::Patch,
            _ => SpuriousMechanism::Color,
        };
        SpuriousDatasetSpec {
            base,
            classes: 2,
            n_clients: 2,
            label_noise: 0.25,
            client_spurious_p: vec![0.2, 0.1],
            test_spurious_p: 0.9,
            mechanism,
            split: SplitPlan::Even,
        }
    }

    /// N-client variant: spurious probabilities evenly spaced from 0.3 down
    /// to 0.1 (so the mean train correlation stays 0.8), even split.
    pub fn extended(base: BaseDataset, n_clients: usize) -> Result<Self> {
        if !(2..=10).contains(&n_clients) {
            return Err(Error::InvalidArgument(format!(
                "extended spec supports 2..=10 clients, got {n_clients}"
            )));
        }
        let mut spec = Self::standard(base);
        spec.n_clients = n_clients;
        spec.client_spurious_p = linspace(0.3, 0.1, n_clients);
        Ok(spec)
    }

    /// Five clients holding 30/25/20/15/10 percent of the data.
    pub fn uneven_five(base: BaseDataset) -> Self {
        let mut spec = Self::extended(base, 5).expect("5 is in range");
        spec.split = SplitPlan::Proportions(vec![0.30, 0.25, 0.20, 0.15, 0.10]);
        spec
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_clients == 0 {
            return Err(Error::InvalidArgument("n_clients must be positive".into()));
        }
        if self.client_spurious_p.len() != self.n_clients {
            return Err(Error::InvalidArgument(format!(
                "{} spurious probabilities for {} clients",
                self.client_spurious_p.len(),
                self.n_clients
            )));
        }
        for &p in self.client_spurious_p.iter().chain([&self.test_spurious_p]) {
            if !(0.0..=1.0).contains(&p) {
                return Err(Error::InvalidArgument(format!("spurious probability {p} outside [0,1]")));
            }
        }
        if !(0.0..1.0).contains(&self.label_noise) {
            return Err(Error::InvalidArgument(format!(
                "label_noise {} outside [0,1)",
                self.label_noise
            )));
        }
        match self.base {
            BaseDataset::Cifar10 => {
                if self.classes != 2 {
                    return Err(Error::InvalidArgument("cifar10 task must be binary".into()));
                }
                if self.mechanism != SpuriousMechanism::Patch {
                    return Err(Error::InvalidArgument("cifar10 uses the patch mechanism".into()));
                }
            }
            _ => {
                if ![2, 5, 10].contains(&self.classes) {
                    return Err(Error::InvalidArgument(format!(
                        "classes must be 2, 5, or 10, got {}",
                        self.classes
                    )));
                }
                if self.mechanism != SpuriousMechanism::Color {
                    return Err(Error::InvalidArgument(
                        "mnist-family corpora use the color mechanism".into(),
                    ));
                }
            }
        }
        if let SplitPlan::Proportions(props) = &self.split {
            if props.len() != self.n_clients {
                return Err(Error::InvalidArgument("one proportion per client required".into()));
            }
            if props.iter().any(|&p| p <= 0.0) {
                return Err(Error::InvalidArgument("proportions must be positive".into()));
            }
            let s: f64 = props.iter().sum();
            if (s - 1.0).abs() > 1e-9 {
                return Err(Error::InvalidArgument(format!("proportions sum to {s}, not 1")));
            }
        }
        Ok(())
    }

    /// Flattened input dimension produced by the decoration.
    pub fn input_dim(&self) -> usize {
        spurious::decorated_dim(self.mechanism, self.classes)
    }
}

pub fn linspace(start: f64, end: f64, n: usize) -> Vec<f64> {
    assert!(n >= 2, "linspace needs at least two points");
    (0..n).map(|i| start + (end - start) * i as f64 / (n - 1) as f64).collect()
}

/// One client's decorated data.
#[derive(Debug, Clone, PartialEq)]
pub struct ClientDataset {
    /// Row-major `[N, D]`, f64, pixel values already divided by 255.
    pub inputs: Array2<f64>,
    pub labels: Vec<u8>,
    /// Spurious tag each sample was decorated with.
    pub spurious: Vec<u8>,
}

impl ClientDataset {
    pub fn n(&self) -> usize {
        self.labels.len()
    }

    pub fn dim(&self) -> usize {
        self.inputs.ncols()
    }

    pub fn validate(&self, classes: u8) -> Result<()> {
        if self.inputs.nrows() != self.labels.len() || self.labels.len() != self.spurious.len() {
            return Err(Error::Shape(format!(
                "client rows {} / labels {} / tags {} disagree",
                self.inputs.nrows(),
                self.labels.len(),
                self.spurious.len()
            )));
        }
        if self.labels.iter().chain(self.spurious.iter()).any(|&v| v >= classes) {
            return Err(Error::InvalidArgument("label or tag outside [0, classes)".into()));
        }
        if self.inputs.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("client inputs"));
        }
        Ok(())
    }
}

/// Decorated training clients plus the single test client.
#[derive(Debug, Clone, PartialEq)]
pub struct FederatedDataset {
    pub train: Vec<ClientDataset>,
    pub test: ClientDataset,
    pub classes: u8,
    pub input_dim: usize,
}

impl FederatedDataset {
    pub fn n_clients(&self) -> usize {
        self.train.len()
    }

    pub fn client_sizes(&self) -> Vec<usize> {
        self.train.iter().map(|c| c.n()).collect()
    }

    pub fn total_train(&self) -> usize {
        self.train.iter().map(|c| c.n()).sum()
    }

    pub fn validate(&self) -> Result<()> {
        for c in self.train.iter().chain([&self.test]) {
            c.validate(self.classes)?;
            if c.dim() != self.input_dim {
                return Err(Error::Shape("client input dim differs from dataset dim".into()));
            }
        }
        Ok(())
    }
}

/// Fraction of each client's rows kept under `--scale desk`.
pub const DESK_FRACTION: f64 = 0.10;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Scale {
    Full,
    Desk,
}

impl Scale {
    pub fn name(self) -> &'static str {
        match self {
            Scale::Full => "full",
            Scale::Desk => "desk",
        }
    }

    fn take(self, n: usize) -> usize {
        match self {
            Scale::Full => n,
            Scale::Desk => ((n as f64) * DESK_FRACTION).ceil() as usize,
        }
    }
}

/// Exact client sizes for `n` kept samples under a split plan.
fn split_sizes(n: usize, k: usize, plan: &SplitPlan) -> Vec<usize> {
    match plan {
        SplitPlan::Even => {
            let base = n / k;
            let extra = n % k;
            (0..k).map(|i| base + usize::from(i < extra)).collect()
        }
        SplitPlan::Proportions(props) => {
            // largest-remainder rounding: floors first, then hand out the
            // shortfall to the largest fractional parts (ties by index)
            let raw: Vec<f64> = props.iter().map(|p| p * n as f64).collect();
            let mut sizes: Vec<usize> = raw.iter().map(|r| r.floor() as usize).collect();
            let mut short = n - sizes.iter().sum::<usize>();
            let mut order: Vec<usize> = (0..k).collect();
            order.sort_by(|&a, &b| {
                let fa = raw[a] - raw[a].floor();
                let fb = raw[b] - raw[b].floor();
                fb.partial_cmp(&fa).unwrap().then(a.cmp(&b))
            });
            for &i in order.iter().cycle().take(short.min(k * 2)) {
                if short == 0 {
                    break;
                }
                sizes[i] += 1;
                short -= 1;
            }
            sizes
        }
    }
}

/// Stages of one split's label pipeline, kept for statistics and tests.
pub struct LabelStages {
    /// Indices into the raw split (post class-map filtering, pre shuffle
    /// assignment), one per decorated sample.
    pub base_index: Vec<usize>,
    /// Mapped base label before noise.
    pub y_tilde: Vec<u8>,
    pub y: Vec<u8>,
    pub z: Vec<u8>,
}

fn decorate_split(
    spec: &SpuriousDatasetSpec,
    split: &RawSplit,
    indices: &[usize],
    y_tilde_all: &[u8],
    p_spurious: f64,
    client: u32,
    master_seed: u64,
) -> (ClientDataset, LabelStages) {
    let y_tilde: Vec<u8> = indices.iter().map(|&i| y_tilde_all[i]).collect();
    let mut noise_rng = stream(master_seed, Domain::LabelNoise, client);
    let y = flip_with_prob(&y_tilde, spec.label_noise, spec.classes, &mut noise_rng);
    let mut tag_rng = stream(master_seed, Domain::SpuriousTag, client);
    let z = flip_with_prob(&y, p_spurious, spec.classes, &mut tag_rng);

    let d = spec.input_dim();
    let mut inputs = Array2::zeros((indices.len(), d));
    for (row, (&idx, &zi)) in indices.iter().zip(&z).enumerate() {
        let decorated =
            apply_spurious_feature(split.images.image(idx), spec.mechanism, spec.classes, zi);
        inputs.row_mut(row).assign(&ndarray::ArrayView1::from(&decorated));
    }
    (
        ClientDataset { inputs, labels: y.clone(), spurious: z.clone() },
        LabelStages { base_index: indices.to_vec(), y_tilde, y, z },
    )
}

/// Build the decorated federated dataset and per-split label stages.
///
/// `scale` selects full data or the 10% desk subsample (a prefix of each
/// client's shuffled slice, so desk data is a bitwise subset of full data).
pub fn build_federated_dataset_stages(
    spec: &SpuriousDatasetSpec,
    corpus: &BaseCorpus,
    master_seed: u64,
    scale: Scale,
) -> Result<(FederatedDataset, Vec<LabelStages>, LabelStages)> {
    spec.validate()?;

    // class-map the train split, keep only mapped samples
    let y_tilde_train = map_base_labels(&corpus.train.labels, spec.base, spec.classes)?;
    let mut kept: Vec<usize> =
        (0..corpus.train.labels.len()).filter(|&i| y_tilde_train[i].is_some()).collect();
    let y_tilde_train: Vec<u8> =
        y_tilde_train.into_iter().map(|v| v.unwrap_or(0)).collect();

    let mut shuffle_rng = stream(master_seed, Domain::SplitShuffle, NO_CLIENT);
    kept.shuffle(&mut shuffle_rng);

    let sizes = split_sizes(kept.len(), spec.n_clients, &spec.split);
    let mut train = Vec::with_capacity(spec.n_clients);
    let mut stages = Vec::with_capacity(spec.n_clients);
    let mut offset = 0;
    for (k, &sz) in sizes.iter().enumerate() {
        let slice = &kept[offset..offset + sz];
        offset += sz;
        let take = scale.take(slice.len());
        let (ds, st) = decorate_split(
            spec,
            &corpus.train,
            &slice[..take],
            &y_tilde_train,
            spec.client_spurious_p[k],
            k as u32,
            master_seed,
        );
        train.push(ds);
        stages.push(st);
    }

    // test client: class-map the test split, keep natural order
    let y_tilde_test = map_base_labels(&corpus.test.labels, spec.base, spec.classes)?;
    let kept_test: Vec<usize> =
        (0..corpus.test.labels.len()).filter(|&i| y_tilde_test[i].is_some()).collect();
    let y_tilde_test: Vec<u8> = y_tilde_test.into_iter().map(|v| v.unwrap_or(0)).collect();
    let take = scale.take(kept_test.len());
    let (test, test_stages) = decorate_split(
        spec,
        &corpus.test,
        &kept_test[..take],
        &y_tilde_test,
        spec.test_spurious_p,
        NO_CLIENT,
        master_seed,
    );

    let fed = FederatedDataset { train, test, classes: spec.classes, input_dim: spec.input_dim() };
    fed.validate()?;
    Ok((fed, stages, test_stages))
}

/// Build the decorated federated dataset (full scale).
pub fn build_federated_dataset(
    spec: &SpuriousDatasetSpec,
    corpus: &BaseCorpus,
    master_seed: u64,
) -> Result<FederatedDataset> {
    Ok(build_federated_dataset_stages(spec, corpus, master_seed, Scale::Full)?.0)
}
