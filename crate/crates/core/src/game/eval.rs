//! Accuracy and loss measurement of the deployed ensemble, with
//! version-keyed caching so repeated evaluations only re-run what changed.

use std::ops::Range;

use ndarray::{s, Array2, ArrayView2};

use crate::data::FederatedDataset;
use crate::error::Result;
use crate::metrics::accuracy;
use crate::nn::{forward, softmax_xent, MlpParams};
use crate::rng::{stream, Domain};

use super::state::{ClientState, ServerState};

/// Fixed evaluation rows, chosen once per run.
///
/// Train rows are a per-client subsample proportional to client size
/// (capped at `train_cap` pooled rows, everything when 0), pooled into one
/// matrix with per-client row spans. The test split is evaluated whole.
#[derive(Debug, Clone)]
pub struct EvalSets {
    pub train_x: Array2<f64>,
    pub train_y: Vec<u8>,
    pub client_rows: Vec<Range<usize>>,
    /// Each client's share of the full training pool; pooled train accuracy
    /// weighs per-client accuracies with these, so a subsample estimates
    /// the same quantity as the full set.
    pub client_weight: Vec<f64>,
    pub test_x: Array2<f64>,
    pub test_y: Vec<u8>,
}

pub fn build_eval_sets(data: &FederatedDataset, train_cap: usize, seed: u64) -> EvalSets {
    let total = data.total_train();
    let mut picked: Vec<Vec<usize>> = Vec::with_capacity(data.n_clients());
    for (k, ds) in data.train.iter().enumerate() {
        let n_k = ds.n();
        let take = if train_cap == 0 || train_cap >= total {
            n_k
        } else {
            ((train_cap as f64 * n_k as f64 / total as f64).round() as usize).clamp(1, n_k)
        };
        let rows: Vec<usize> = if take == n_k {
            (0..n_k).collect()
        } else {
            let mut rng = stream(seed, Domain::EvalSubsample, k as u32);
            let mut v = rand::seq::index::sample(&mut rng, n_k, take).into_vec();
            v.sort_unstable();
            v
        };
        picked.push(rows);
    }
    let rows_total: usize = picked.iter().map(|v| v.len()).sum();
    let mut train_x = Array2::zeros((rows_total, data.input_dim));
    let mut train_y = Vec::with_capacity(rows_total);
    let mut client_rows = Vec::with_capacity(picked.len());
    let mut at = 0usize;
    for (ds, rows) in data.train.iter().zip(&picked) {
        let span = at..at + rows.len();
        for (dst, &src) in span.clone().zip(rows) {
            train_x.row_mut(dst).assign(&ds.inputs.row(src));
            train_y.push(ds.labels[src]);
        }
        client_rows.push(span);
        at += rows.len();
    }
    let client_weight =
        data.client_sizes().iter().map(|&n| n as f64 / total as f64).collect();
    EvalSets {
        train_x,
        train_y,
        client_rows,
        client_weight,
        test_x: data.test.inputs.clone(),
        test_y: data.test.labels.clone(),
    }
}

#[derive(Debug, Clone)]
pub struct EvalOutcome {
    /// Pooled train accuracy: client accuracies weighted by sample share.
    pub train_acc: f64,
    /// `None` when the test pass was skipped this evaluation.
    pub test_acc: Option<f64>,
    /// Mean deployed-ensemble loss on each client's own eval rows.
    pub client_losses: Vec<f64>,
}

type LogitKey = (u64, u64); // (client model version, representation version)

/// Caching evaluator. Per-client logits are keyed by (model version,
/// representation version); the representation's output on the fixed eval
/// rows is cached by its version. Version bumps are the invalidation
/// contract — mutating parameters without bumping versions serves stale
/// numbers by design.
pub struct Evaluator {
    pub sets: EvalSets,
    train_rep: Option<(u64, Array2<f64>)>,
    test_rep: Option<(u64, Array2<f64>)>,
    train_logits: Vec<Option<(LogitKey, Array2<f64>)>>,
    test_logits: Vec<Option<(LogitKey, Array2<f64>)>>,
}

impl Evaluator {
    pub fn new(sets: EvalSets, n_clients: usize) -> Self {
        Evaluator {
            sets,
            train_rep: None,
            test_rep: None,
            train_logits: vec![None; n_clients],
            test_logits: vec![None; n_clients],
        }
    }

    fn rep<'a>(
        cache: &'a mut Option<(u64, Array2<f64>)>,
        phi: Option<&MlpParams>,
        phi_version: u64,
        x: &'a Array2<f64>,
    ) -> ArrayView2<'a, f64> {
        match phi {
            None => x.view(),
            Some(p) => {
                let stale = cache.as_ref().map_or(true, |(v, _)| *v != phi_version);
                if stale {
                    *cache = Some((phi_version, forward(p, x.view())));
                }
                cache.as_ref().expect("cache just filled").1.view()
            }
        }
    }

    /// Evaluate the deployed game ensemble (mean of live predictors on the
    /// shared representation).
    pub fn evaluate(
        &mut self,
        server: &ServerState,
        clients: &[ClientState],
        include_test: bool,
    ) -> Result<EvalOutcome> {
        assert_eq!(clients.len(), self.train_logits.len(), "client count changed");
        let phi = server.phi.as_ref();
        let phi_v = if phi.is_some() { server.phi_version } else { 0 };
        let k = clients.len();
        let classes = clients[0].predictor.output_dim();

        let rep = Self::rep(&mut self.train_rep, phi, phi_v, &self.sets.train_x);
        for (i, cl) in clients.iter().enumerate() {
            let key = (cl.version, phi_v);
            let hit = self.train_logits[i].as_ref().map_or(false, |(kk, _)| *kk == key);
            if !hit {
                self.train_logits[i] = Some((key, forward(&cl.predictor, rep)));
            }
        }
        let mut ens = Array2::zeros((self.sets.train_y.len(), classes));
        for entry in &self.train_logits {
            ens += &entry.as_ref().expect("filled above").1;
        }
        ens.mapv_inplace(|v| v / k as f64);
        let (train_acc, client_losses) = self.pooled_train(&ens)?;

        let test_acc = if include_test {
            let rep_t = Self::rep(&mut self.test_rep, phi, phi_v, &self.sets.test_x);
            for (i, cl) in clients.iter().enumerate() {
                let key = (cl.version, phi_v);
                let hit = self.test_logits[i].as_ref().map_or(false, |(kk, _)| *kk == key);
                if !hit {
                    self.test_logits[i] = Some((key, forward(&cl.predictor, rep_t)));
                }
            }
            let mut ens_t = Array2::zeros((self.sets.test_y.len(), classes));
            for entry in &self.test_logits {
                ens_t += &entry.as_ref().expect("filled above").1;
            }
            ens_t.mapv_inplace(|v| v / k as f64);
            Some(accuracy(ens_t.view(), &self.sets.test_y))
        } else {
            None
        };

        Ok(EvalOutcome { train_acc, test_acc, client_losses })
    }

    /// Evaluate a single global model (baselines). Uncached: the model has
    /// no version identity and changes every round anyway.
    pub fn evaluate_global(&self, global: &MlpParams, include_test: bool) -> Result<EvalOutcome> {
        let ens = forward(global, self.sets.train_x.view());
        let (train_acc, client_losses) = self.pooled_train(&ens)?;
        let test_acc = if include_test {
            let lg = forward(global, self.sets.test_x.view());
            Some(accuracy(lg.view(), &self.sets.test_y))
        } else {
            None
        };
        Ok(EvalOutcome { train_acc, test_acc, client_losses })
    }

    fn pooled_train(&self, ens: &Array2<f64>) -> Result<(f64, Vec<f64>)> {
        let mut train_acc = 0.0;
        let mut client_losses = Vec::with_capacity(self.sets.client_rows.len());
        for (i, span) in self.sets.client_rows.iter().enumerate() {
            let lg = ens.slice(s![span.clone(), ..]);
            let ys = &self.sets.train_y[span.clone()];
            train_acc += self.sets.client_weight[i] * accuracy(lg, ys);
            let (loss, _) = softmax_xent(&lg.to_owned(), ys)?;
            client_losses.push(loss);
        }
        Ok((train_acc, client_losses))
    }
}
