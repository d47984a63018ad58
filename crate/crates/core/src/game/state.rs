//! Mutable run state: per-client models and optimizers, the server's shared
//! representation, and the communicated snapshot every client trains
//! against.

use std::collections::VecDeque;
use std::rc::Rc;

use ndarray::{Array2, Axis};
use rand::seq::SliceRandom;
use rand_chacha::ChaCha8Rng;

use crate::data::{ClientDataset, FederatedDataset};
use crate::error::Result;
use crate::nn::{Activation, AdamState, MlpParams};
use crate::rng::{stream, Domain, NO_CLIENT};

use super::GameConfig;

/// Epoch-style minibatch scheduler: shuffled pass over the data, full
/// batches only (a trailing partial batch triggers a reshuffle instead).
/// Datasets smaller than one batch yield the whole set, reshuffled every
/// draw.
#[derive(Debug, Clone)]
pub struct BatchCursor {
    order: Vec<u32>,
    pos: usize,
    batch: usize,
    rng: ChaCha8Rng,
}

impl BatchCursor {
    pub fn new(n: usize, batch: usize, rng: ChaCha8Rng) -> Self {
        assert!(n > 0 && batch > 0, "cursor needs data and a positive batch size");
        BatchCursor {
            order: (0..n as u32).collect(),
            pos: n, // force a shuffle on the first draw
            batch,
            rng,
        }
    }

    /// Indices of the next minibatch.
    pub fn next_indices(&mut self) -> &[u32] {
        let chunk = self.batch.min(self.order.len());
        if self.pos + chunk > self.order.len() {
            self.order.shuffle(&mut self.rng);
            self.pos = 0;
        }
        let s = &self.order[self.pos..self.pos + chunk];
        self.pos += chunk;
        s
    }
}

/// Copy the selected rows and labels out of a client dataset.
pub fn gather_batch(ds: &ClientDataset, idx: &[u32]) -> (Array2<f64>, Vec<u8>) {
    let rows: Vec<usize> = idx.iter().map(|&i| i as usize).collect();
    let x = ds.inputs.select(Axis(0), &rows);
    let y = rows.iter().map(|&i| ds.labels[i]).collect();
    (x, y)
}

/// One client's live training state.
#[derive(Debug, Clone)]
pub struct ClientState {
    pub id: usize,
    pub predictor: MlpParams,
    pub opt: AdamState,
    /// FIFO of this client's own past committed models (smooth variants).
    pub buffer: VecDeque<Rc<MlpParams>>,
    pub cursor: BatchCursor,
    pub phi_cursor: BatchCursor,
    /// Bumped whenever `predictor` changes; drives snapshot refresh and
    /// evaluation caching.
    pub version: u64,
}

/// The snapshot every client sees of everyone else: latest communicated
/// predictors plus each client's buffered history. Shared, not per-client:
/// refreshing it right after each predictor round gives parallel rounds
/// their round-start view and sequential rounds full freshness.
#[derive(Debug, Clone, Default)]
pub struct Committed {
    pub predictors: Vec<Rc<MlpParams>>,
    pub buffers: Vec<Vec<Rc<MlpParams>>>,
    versions: Vec<u64>,
}

impl Committed {
    pub fn fresh(clients: &[ClientState]) -> Self {
        let mut c = Committed::default();
        c.predictors = clients.iter().map(|cl| Rc::new(cl.predictor.clone())).collect();
        c.buffers = clients.iter().map(|cl| cl.buffer.iter().cloned().collect()).collect();
        c.versions = clients.iter().map(|cl| cl.version).collect();
        c
    }

    /// Re-publish every client whose live model moved since the last call.
    pub fn communicate(&mut self, clients: &[ClientState]) {
        for (k, cl) in clients.iter().enumerate() {
            if self.versions[k] != cl.version {
                self.predictors[k] = Rc::new(cl.predictor.clone());
                self.buffers[k] = cl.buffer.iter().cloned().collect();
                self.versions[k] = cl.version;
            }
        }
    }
}

/// Server-side state: round counters, the shared representation (when
/// trained), and the global model (baselines).
#[derive(Debug, Clone)]
pub struct ServerState {
    /// Completed rounds.
    pub round: usize,
    /// Completed predictor rounds; picks the sequential turn-taker.
    pub predictor_rounds_done: usize,
    pub phi: Option<MlpParams>,
    pub phi_opt: Option<AdamState>,
    pub phi_version: u64,
    /// Baseline global model (model-averaging variants only).
    pub global: Option<MlpParams>,
    pub comm_rounds: u64,
    pub client_updates: u64,
}

#[derive(Debug, Clone)]
pub struct GameState {
    pub server: ServerState,
    pub clients: Vec<ClientState>,
    pub committed: Committed,
}

fn predictor_acts(dims: &[usize]) -> Vec<Activation> {
    let mut acts = vec![Activation::Elu; dims.len() - 2];
    acts.push(Activation::Linear);
    acts
}

/// Build the seed-determined starting state for a run.
pub fn init_state(cfg: &GameConfig, data: &FederatedDataset, seed: u64) -> Result<GameState> {
    let dims = cfg.predictor_dims(data.input_dim, data.classes as usize);
    let acts = predictor_acts(&dims);

    let mut clients = Vec::with_capacity(data.n_clients());
    for (k, ds) in data.train.iter().enumerate() {
        let predictor = MlpParams::init(&dims, &acts, &mut stream(seed, Domain::PredictorInit, k as u32))?;
        let opt = AdamState::new(&predictor);
        clients.push(ClientState {
            id: k,
            predictor,
            opt,
            buffer: VecDeque::new(),
            cursor: BatchCursor::new(ds.n(), cfg.batch_size, stream(seed, Domain::BatchOrder, k as u32)),
            phi_cursor: BatchCursor::new(
                ds.n(),
                cfg.batch_size,
                stream(seed, Domain::PhiBatchOrder, k as u32),
            ),
            version: 1,
        });
    }

    let (phi, phi_opt) = match cfg.phi_dims(data.input_dim) {
        Some(pdims) => {
            let phi = MlpParams::init(
                &pdims,
                &vec![Activation::Elu; pdims.len() - 1],
                &mut stream(seed, Domain::PhiInit, NO_CLIENT),
            )?;
            let opt = AdamState::new(&phi);
            (Some(phi), Some(opt))
        }
        None => (None, None),
    };

    let global = if cfg.variant.is_baseline() {
        Some(MlpParams::init(&dims, &acts, &mut stream(seed, Domain::PredictorInit, NO_CLIENT))?)
    } else {
        None
    };

    let committed = Committed::fresh(&clients);
    Ok(GameState {
        server: ServerState {
            round: 0,
            predictor_rounds_done: 0,
            phi,
            phi_opt,
            phi_version: 1,
            global,
            comm_rounds: 0,
            client_updates: 0,
        },
        clients,
        committed,
    })
}
