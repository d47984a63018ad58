//! Round execution: client best-response updates, server representation
//! updates, and the model-averaging baseline rounds.

use std::rc::Rc;

use ndarray::{Array2, ArrayView2};

use crate::data::FederatedDataset;
use crate::error::{Error, Result};
use crate::metrics::Phase;
use crate::nn::{
    adam_step, backward, forward, forward_traced, loss_and_grads, params_linear_combine, sgd_step,
    softmax_xent, AdamHp, Batch, Grads, MlpParams,
};

use super::ensemble::{acting_scale, opponent_logits};
use super::state::{gather_batch, ClientState, Committed, GameState, ServerState};
use super::{steps_per_epoch, BaselineLocalWork, EnsembleNorm, GameConfig, Schedule, StepPlan, Variant};

/// Loss and parameter gradients of the acting client's ensemble objective
/// on one batch. Only the live predictor is differentiated; opponents and
/// buffers enter as constants.
pub fn acting_loss_grads(
    predictor: &MlpParams,
    acting: usize,
    phi: Option<&MlpParams>,
    committed: &Committed,
    x: ArrayView2<f64>,
    y: &[u8],
    norm: EnsembleNorm,
    use_buffers: bool,
) -> Result<(f64, Grads)> {
    let rep_owned;
    let rep: ArrayView2<f64> = match phi {
        Some(p) => {
            rep_owned = forward(p, x);
            rep_owned.view()
        }
        None => x.view(),
    };
    let (const_logits, n_terms) = opponent_logits(committed, acting, rep, use_buffers);
    let scale = acting_scale(norm, committed.predictors.len(), n_terms);
    let trace = forward_traced(predictor, rep);
    let mut total = trace.logits() + &const_logits;
    total.mapv_inplace(|v| v * scale);
    let (loss, mut dtotal) = softmax_xent(&total, y)?;
    dtotal.mapv_inplace(|v| v * scale);
    let (grads, _) = backward(predictor, rep, &trace, &dtotal);
    Ok((loss, grads))
}

/// Run one client's predictor turn: its planned number of Adam steps on the
/// ensemble objective, then (for smooth variants) push the result onto its
/// own FIFO buffer.
pub fn predictor_update(
    cfg: &GameConfig,
    data: &FederatedDataset,
    phi: Option<&MlpParams>,
    committed: &Committed,
    client: &mut ClientState,
) -> Result<()> {
    let ds = &data.train[client.id];
    let plan = cfg.local_steps.plan(steps_per_epoch(ds.n(), cfg.batch_size));
    let use_buffers = cfg.variant.uses_buffers();
    let hp = AdamHp::with_lr(cfg.lr_predictor);

    match plan {
        StepPlan::Minibatch(steps) => {
            if steps == 0 {
                return Ok(()); // nothing ran: no version bump, no buffer push
            }
            for _ in 0..steps {
                let (x, y) = {
                    let idx = client.cursor.next_indices().to_vec();
                    gather_batch(ds, &idx)
                };
                let (_, grads) = acting_loss_grads(
                    &client.predictor,
                    client.id,
                    phi,
                    committed,
                    x.view(),
                    &y,
                    cfg.ensemble_norm,
                    use_buffers,
                )?;
                adam_step(&mut client.predictor, &grads, &mut client.opt, &hp);
            }
        }
        StepPlan::FullBatch => {
            // exact full-dataset gradient: accumulate over natural-order
            // chunks (the trailing remainder included), weighted by chunk
            // size so the result is the mean over every sample
            let n = ds.n();
            let mut acc = client.predictor.zero_grads();
            let mut start = 0usize;
            while start < n {
                let end = (start + cfg.batch_size).min(n);
                let idx: Vec<u32> = (start as u32..end as u32).collect();
                let (x, y) = gather_batch(ds, &idx);
                let (_, grads) = acting_loss_grads(
                    &client.predictor,
                    client.id,
                    phi,
                    committed,
                    x.view(),
                    &y,
                    cfg.ensemble_norm,
                    use_buffers,
                )?;
                acc.add_scaled(&grads, (end - start) as f64 / n as f64);
                start = end;
            }
            adam_step(&mut client.predictor, &acc, &mut client.opt, &hp);
        }
    }

    client.version += 1;
    if use_buffers {
        client.buffer.push_back(Rc::new(client.predictor.clone()));
        while client.buffer.len() > cfg.buffer_capacity {
            client.buffer.pop_front();
        }
    }
    Ok(())
}

/// Loss and representation-parameter gradients of the shared objective on
/// one batch: the mean-of-all-predictors ensemble loss, backpropagated
/// through every (frozen) predictor into `phi`.
pub fn representation_loss_and_grads(
    phi: &MlpParams,
    committed: &Committed,
    x: ArrayView2<f64>,
    y: &[u8],
) -> Result<(f64, Grads)> {
    let k = committed.predictors.len();
    let scale = 1.0 / k as f64;
    let tr_phi = forward_traced(phi, x);
    let rep = tr_phi.logits(); // the representation output
    let classes = committed.predictors[0].output_dim();
    let mut traces = Vec::with_capacity(k);
    let mut total = Array2::<f64>::zeros((x.nrows(), classes));
    for w in &committed.predictors {
        let t = forward_traced(w, rep.view());
        total += t.logits();
        traces.push(t);
    }
    total.mapv_inplace(|v| v * scale);
    let (loss, mut dtotal) = softmax_xent(&total, y)?;
    dtotal.mapv_inplace(|v| v * scale);
    let mut d_rep = Array2::<f64>::zeros(rep.raw_dim());
    for (w, t) in committed.predictors.iter().zip(&traces) {
        let (_, dx) = backward(w, rep.view(), t, &dtotal);
        d_rep += &dx;
    }
    let (g_phi, _) = backward(phi, x, &tr_phi, &d_rep);
    Ok((loss, g_phi))
}

/// Run one server representation round: per-client gradients (one minibatch
/// each, or the exact full-dataset gradient for the fast variant),
/// aggregated with sample-count weights, applied as one optimizer step.
pub fn representation_update(
    cfg: &GameConfig,
    data: &FederatedDataset,
    server: &mut ServerState,
    clients: &mut [ClientState],
    committed: &Committed,
) -> Result<()> {
    if cfg.variant.fixed_phi() {
        return Err(Error::InvalidArgument(format!(
            "variant `{}` has no trained representation",
            cfg.variant.name()
        )));
    }
    let total_n = data.total_train() as f64;
    let mut agg: Option<Grads> = None;
    {
        let phi = server.phi.as_ref().expect("trained representation present");
        for (k, client) in clients.iter_mut().enumerate() {
            let ds = &data.train[k];
            let g_k = if cfg.variant.fast_phi() {
                let n = ds.n();
                let mut acc = phi.zero_grads();
                let mut start = 0usize;
                while start < n {
                    let end = (start + cfg.batch_size).min(n);
                    let idx: Vec<u32> = (start as u32..end as u32).collect();
                    let (x, y) = gather_batch(ds, &idx);
                    let (_, g) = representation_loss_and_grads(phi, committed, x.view(), &y)?;
                    acc.add_scaled(&g, (end - start) as f64 / n as f64);
                    start = end;
                }
                acc
            } else {
                let (x, y) = {
                    let idx = client.phi_cursor.next_indices().to_vec();
                    gather_batch(ds, &idx)
                };
                representation_loss_and_grads(phi, committed, x.view(), &y)?.1
            };
            let w = ds.n() as f64 / total_n;
            match &mut agg {
                Some(a) => a.add_scaled(&g_k, w),
                None => {
                    let mut g = g_k;
                    g.scale(w);
                    agg = Some(g);
                }
            }
        }
    }
    let agg = agg.expect("at least one client");
    let phi = server.phi.as_mut().expect("trained representation present");
    if cfg.phi_plain_sgd {
        sgd_step(phi, &agg, cfg.lr_phi);
    } else {
        let opt = server.phi_opt.as_mut().expect("phi optimizer present");
        adam_step(phi, &agg, opt, &AdamHp::with_lr(cfg.lr_phi));
    }
    server.phi_version += 1;
    Ok(())
}

/// One FedSGD/FedAVG round: every client pulls the global model, runs its
/// local steps (one for FedSGD), and the server replaces the global model
/// with the sample-count-weighted average of the local results. Per-client
/// optimizer state persists across rounds.
pub fn baseline_round(cfg: &GameConfig, data: &FederatedDataset, state: &mut GameState) -> Result<Phase> {
    if !cfg.variant.is_baseline() {
        return Err(Error::InvalidArgument(format!(
            "variant `{}` is not a model-averaging baseline",
            cfg.variant.name()
        )));
    }
    let global = state.server.global.as_ref().expect("baseline global model").clone();
    let sizes = data.client_sizes();
    let total: f64 = sizes.iter().map(|&n| n as f64).sum();
    let hp = AdamHp::with_lr(cfg.lr_predictor);
    let mut locals: Vec<MlpParams> = Vec::with_capacity(state.clients.len());
    for (k, client) in state.clients.iter_mut().enumerate() {
        let ds = &data.train[k];
        let steps = match cfg.variant {
            Variant::FedSgd => 1,
            Variant::FedAvg => match cfg.fedavg_local {
                BaselineLocalWork::Steps(s) => s,
                BaselineLocalWork::Epochs(e) => e * steps_per_epoch(ds.n(), cfg.batch_size),
            },
            _ => unreachable!("guarded above"),
        };
        let mut w = global.clone();
        for _ in 0..steps {
            let (x, y) = {
                let idx = client.cursor.next_indices().to_vec();
                gather_batch(ds, &idx)
            };
            let (_, grads) = loss_and_grads(&w, Batch::new(x.view(), &y)?)?;
            adam_step(&mut w, &grads, &mut client.opt, &hp);
        }
        locals.push(w);
    }
    let terms: Vec<(f64, &MlpParams)> =
        sizes.iter().zip(&locals).map(|(&n, w)| (n as f64 / total, w)).collect();
    state.server.global = Some(params_linear_combine(&terms)?);
    state.server.comm_rounds += 1;
    state.server.client_updates += state.clients.len() as u64;
    Ok(Phase::Baseline)
}

/// Advance the run by one round and say what kind it was.
///
/// Variants with a trained representation alternate: even completed-round
/// counts (including the very first round) update the representation, odd
/// ones update predictors. Fixed-representation variants run predictor
/// rounds only; baselines run averaging rounds only.
pub fn run_round(cfg: &GameConfig, data: &FederatedDataset, state: &mut GameState) -> Result<Phase> {
    let phase = if cfg.variant.is_baseline() {
        baseline_round(cfg, data, state)?
    } else if !cfg.variant.fixed_phi() && state.server.round % 2 == 0 {
        representation_update(cfg, data, &mut state.server, &mut state.clients, &state.committed)?;
        state.server.comm_rounds += 1;
        Phase::Phi
    } else {
        let k_clients = state.clients.len();
        match cfg.schedule {
            Schedule::Sequential => {
                // Turn-taking with rotation-start information sets: the
                // snapshot refreshes only when a new rotation begins, so all
                // K turns of one rotation best-respond to the models held at
                // its start. Refreshing after every single turn instead lets
                // each counter-move be absorbed immediately and the play
                // settles into the pooled fit: the spurious feature is never
                // driven out. One rotation here is one parallel round spread
                // over K rounds.
                let k = state.server.predictor_rounds_done % k_clients;
                if k == 0 {
                    state.committed.communicate(&state.clients);
                }
                let phi = state.server.phi.as_ref();
                predictor_update(cfg, data, phi, &state.committed, &mut state.clients[k])?;
                state.server.client_updates += 1;
            }
            Schedule::Parallel => {
                let phi = state.server.phi.as_ref();
                for k in 0..k_clients {
                    predictor_update(cfg, data, phi, &state.committed, &mut state.clients[k])?;
                }
                state.committed.communicate(&state.clients);
                state.server.client_updates += k_clients as u64;
            }
        }
        state.server.predictor_rounds_done += 1;
        state.server.comm_rounds += 1;
        Phase::Predictor
    };
    state.server.round += 1;
    Ok(phase)
}

/// A parallel predictor round executed in an arbitrary client order.
/// Because every update reads only the shared round-start snapshot and the
/// client's own state, the post-round state must not depend on `order`
/// (which must be a permutation of `0..K`). Exists so tests can verify
/// exactly that; `run_round` always uses ascending order.
pub fn parallel_predictor_round_with_order(
    cfg: &GameConfig,
    data: &FederatedDataset,
    state: &mut GameState,
    order: &[usize],
) -> Result<()> {
    let phi = state.server.phi.as_ref();
    for &k in order {
        predictor_update(cfg, data, phi, &state.committed, &mut state.clients[k])?;
    }
    state.server.client_updates += order.len() as u64;
    state.server.predictor_rounds_done += 1;
    state.committed.communicate(&state.clients);
    state.server.comm_rounds += 1;
    state.server.round += 1;
    Ok(())
}
