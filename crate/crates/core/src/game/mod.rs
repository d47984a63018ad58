//! The federated game engine.
//!
//! Clients hold per-client predictors that act through a shared ensemble:
//! each client best-responds to the sum of its own live model, its
//! opponents' latest communicated models, and (for smooth variants) the
//! mean of each opponent's FIFO buffer of historical models. A server
//! optionally trains a shared representation on even rounds from
//! sample-weighted client gradients. FedSGD/FedAVG model-averaging
//! baselines share the same client plumbing.

mod engine;
mod ensemble;
mod eval;
mod experiment;
mod state;

pub use engine::{
    acting_loss_grads, baseline_round, parallel_predictor_round_with_order, predictor_update,
    representation_loss_and_grads, representation_update, run_round,
};
pub use ensemble::{acting_scale, eval_ensemble_logits, opponent_logits};
pub use eval::{build_eval_sets, EvalOutcome, EvalSets, Evaluator};
pub use experiment::{run_experiment, ExperimentResult};
pub use state::{gather_batch, init_state, BatchCursor, ClientState, Committed, GameState, ServerState};

use crate::error::{Error, Result};
use crate::metrics::TerminationConfig;

/// Which training algorithm runs.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Variant {
    FedSgd,
    FedAvg,
    /// best-response game, identity representation
    FIrmGames,
    /// best-response game, trained representation
    VIrmGames,
    /// game with buffer smoothing, identity representation
    FFlSmooth,
    /// game with buffer smoothing, trained representation
    VFlSmooth,
    /// buffer smoothing plus full-dataset representation steps
    VFlSmoothFast,
}

impl Variant {
    pub const ALL: [Variant; 7] = [
        Variant::FedSgd,
        Variant::FedAvg,
        Variant::FIrmGames,
        Variant::VIrmGames,
        Variant::FFlSmooth,
        Variant::VFlSmooth,
        Variant::VFlSmoothFast,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Variant::FedSgd => "fedsgd",
            Variant::FedAvg => "fedavg",
            Variant::FIrmGames => "f_irm_games",
            Variant::VIrmGames => "v_irm_games",
            Variant::FFlSmooth => "f_fl_smooth",
            Variant::VFlSmooth => "v_fl_smooth",
            Variant::VFlSmoothFast => "v_fl_smooth_fast",
        }
    }

    pub fn parse(s: &str) -> Result<Variant> {
        Variant::ALL
            .into_iter()
            .find(|v| v.name() == s)
            .ok_or_else(|| Error::InvalidArgument(format!("unknown variant `{s}`")))
    }

    pub fn is_baseline(self) -> bool {
        matches!(self, Variant::FedSgd | Variant::FedAvg)
    }

    /// True when the shared representation is the identity (no trained phi).
    pub fn fixed_phi(self) -> bool {
        !matches!(self, Variant::VIrmGames | Variant::VFlSmooth | Variant::VFlSmoothFast)
    }

    /// True when opponents' historical-model buffers join the loss ensemble.
    pub fn uses_buffers(self) -> bool {
        matches!(self, Variant::FFlSmooth | Variant::VFlSmooth | Variant::VFlSmoothFast)
    }

    /// True when representation rounds accumulate gradients over the whole
    /// local dataset instead of one minibatch.
    pub fn fast_phi(self) -> bool {
        self == Variant::VFlSmoothFast
    }
}

/// Predictor-round playing order.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Schedule {
    /// one client per round, fixed cyclic order
    Sequential,
    /// all clients per round, against the round-start snapshot
    Parallel,
}

impl Schedule {
    pub fn name(self) -> &'static str {
        match self {
            Schedule::Sequential => "sequential",
            Schedule::Parallel => "parallel",
        }
    }

    pub fn parse(s: &str) -> Result<Schedule> {
        match s {
            "sequential" => Ok(Schedule::Sequential),
            "parallel" => Ok(Schedule::Parallel),
            _ => Err(Error::InvalidArgument(format!("unknown schedule `{s}`"))),
        }
    }
}

/// How the acting client's summed ensemble logits are normalized.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EnsembleNorm {
    /// divide by the client count exactly as the objective writes it,
    /// even though smoothing sums ~2K-1 terms
    LiteralEq4,
    /// divide by the number of summed terms
    Mean,
}

impl EnsembleNorm {
    pub fn name(self) -> &'static str {
        match self {
            EnsembleNorm::LiteralEq4 => "literal_eq4",
            EnsembleNorm::Mean => "mean",
        }
    }

    pub fn parse(s: &str) -> Result<EnsembleNorm> {
        match s {
            "literal_eq4" => Ok(EnsembleNorm::LiteralEq4),
            "mean" => Ok(EnsembleNorm::Mean),
            _ => Err(Error::InvalidArgument(format!("unknown ensemble_norm `{s}`"))),
        }
    }
}

/// Work per predictor turn.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum LocalSteps {
    /// fixed number of minibatch steps
    Steps(usize),
    /// fraction of the steps in one epoch; 1.0 means one accumulated
    /// full-dataset gradient step (exact best response direction)
    Fraction(f64),
}

/// Resolved per-turn work.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StepPlan {
    Minibatch(usize),
    FullBatch,
}

impl LocalSteps {
    pub fn plan(self, steps_per_epoch: usize) -> StepPlan {
        match self {
            LocalSteps::Steps(n) => StepPlan::Minibatch(n),
            LocalSteps::Fraction(f) if f >= 1.0 => StepPlan::FullBatch,
            LocalSteps::Fraction(f) => {
                StepPlan::Minibatch(((f * steps_per_epoch as f64).round() as usize).max(1))
            }
        }
    }
}

/// FedAVG local work per round. FedSGD always runs exactly one step.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BaselineLocalWork {
    Epochs(usize),
    Steps(usize),
}

/// Evaluation cost/cadence knobs. They never change what is learned — only
/// how often accuracies are measured and on how large a train subsample.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct EvalConfig {
    /// total pooled train-evaluation rows, spread over clients in
    /// proportion to their sizes (0 = use every row)
    pub train_cap: usize,
    /// record (and train-evaluate) every n-th round; the final round is
    /// always recorded
    pub train_every: usize,
    /// test-evaluate every m-th recorded row; the first and final rows are
    /// always test-evaluated, other rows carry the last value forward
    pub test_every: usize,
}

impl Default for EvalConfig {
    fn default() -> Self {
        EvalConfig { train_cap: 0, train_every: 1, test_every: 1 }
    }
}

/// Full algorithm configuration for one run.
#[derive(Debug, Clone, PartialEq)]
pub struct GameConfig {
    pub variant: Variant,
    pub schedule: Schedule,
    pub buffer_capacity: usize,
    pub local_steps: LocalSteps,
    pub lr_predictor: f64,
    pub lr_phi: f64,
    pub batch_size: usize,
    pub ensemble_norm: EnsembleNorm,
    /// update the representation with plain gradient steps instead of Adam
    pub phi_plain_sgd: bool,
    pub max_rounds: usize,
    pub termination: Option<TerminationConfig>,
    /// treat a run that never meets the stop rule as an error instead of an
    /// ordinary max-rounds finish
    pub require_convergence: bool,
    /// width of every hidden layer
    pub hidden: usize,
    pub fedavg_local: BaselineLocalWork,
    pub eval: EvalConfig,
}

impl GameConfig {
    pub fn new(variant: Variant) -> Self {
        GameConfig {
            variant,
            schedule: Schedule::Sequential,
            buffer_capacity: 5,
            local_steps: LocalSteps::Steps(1),
            lr_predictor: 2.5e-4,
            lr_phi: 2.5e-5,
            batch_size: 256,
            ensemble_norm: EnsembleNorm::LiteralEq4,
            phi_plain_sgd: false,
            max_rounds: 100,
            termination: None,
            require_convergence: false,
            hidden: 390,
            fedavg_local: BaselineLocalWork::Epochs(1),
            eval: EvalConfig::default(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.batch_size == 0 {
            return Err(Error::InvalidArgument("batch_size must be positive".into()));
        }
        if self.hidden == 0 {
            return Err(Error::InvalidArgument("hidden width must be positive".into()));
        }
        if self.variant.uses_buffers() && self.buffer_capacity == 0 {
            return Err(Error::InvalidArgument(
                "smooth variants need buffer_capacity >= 1".into(),
            ));
        }
        if !(self.lr_predictor > 0.0 && self.lr_phi > 0.0) {
            return Err(Error::InvalidArgument("learning rates must be positive".into()));
        }
        match self.local_steps {
            LocalSteps::Steps(n) if n == 0 => {
                return Err(Error::InvalidArgument("local_steps must be >= 1".into()))
            }
            LocalSteps::Fraction(f) if !(f > 0.0 && f <= 1.0) => {
                return Err(Error::InvalidArgument(format!(
                    "local_steps fraction {f} outside (0, 1]"
                )))
            }
            _ => {}
        }
        if let BaselineLocalWork::Epochs(0) | BaselineLocalWork::Steps(0) = self.fedavg_local {
            return Err(Error::InvalidArgument("fedavg local work must be >= 1".into()));
        }
        if self.eval.train_every == 0 || self.eval.test_every == 0 {
            return Err(Error::InvalidArgument("eval cadences must be >= 1".into()));
        }
        if let Some(t) = &self.termination {
            t.validate()?;
        }
        Ok(())
    }

    /// Layer sizes of one client predictor.
    pub fn predictor_dims(&self, input_dim: usize, classes: usize) -> Vec<usize> {
        if self.variant.fixed_phi() {
            vec![input_dim, self.hidden, self.hidden, classes]
        } else {
            vec![self.hidden, self.hidden, self.hidden, classes]
        }
    }

    /// Layer sizes of the shared representation, when trained.
    pub fn phi_dims(&self, input_dim: usize) -> Option<Vec<usize>> {
        if self.variant.fixed_phi() {
            None
        } else {
            Some(vec![input_dim, self.hidden])
        }
    }
}

/// Full minibatch steps in one pass over `n` samples (the trailing partial
/// batch is not a step; datasets smaller than one batch count as one).
pub fn steps_per_epoch(n: usize, batch: usize) -> usize {
    (n / batch).max(1)
}

#[cfg(test)]
pub(crate) mod test_support {
    use ndarray::Array2;
    use rand::Rng;

    use crate::data::{ClientDataset, FederatedDataset};
    use crate::rng::{stream, Domain};

    /// Small learnable task for engine tests: the label is the argmax of
    /// the first `classes` input coordinates.
    pub fn toy_dataset(sizes: &[usize], dim: usize, classes: u8, seed: u64) -> FederatedDataset {
        assert!(dim >= classes as usize);
        let make = |n: usize, client: u32| {
            let mut rng = stream(seed, Domain::SynthImages, client);
            let inputs = Array2::from_shape_fn((n, dim), |_| rng.gen_range(-1.0..1.0));
            let labels: Vec<u8> = (0..n)
                .map(|i| {
                    let row = inputs.row(i);
                    let mut best = 0usize;
                    for c in 1..classes as usize {
                        if row[c] > row[best] {
                            best = c;
                        }
                    }
                    best as u8
                })
                .collect();
            ClientDataset { inputs, labels, spurious: vec![0; n] }
        };
        let train: Vec<ClientDataset> =
            sizes.iter().enumerate().map(|(k, &n)| make(n, k as u32)).collect();
        let test = make(30, u32::MAX);
        FederatedDataset { train, test, classes, input_dim: dim }
    }
}
