//! Ensemble assembly: the logit sums a client trains against and the
//! deployment-time ensemble used for evaluation.

use ndarray::{Array2, ArrayView2};

use crate::nn::{forward, MlpParams};

use super::state::Committed;
use super::EnsembleNorm;

/// Scale applied to the acting client's summed ensemble logits.
/// `n_terms` counts every summed member including the live model.
pub fn acting_scale(norm: EnsembleNorm, k_clients: usize, n_terms: usize) -> f64 {
    match norm {
        EnsembleNorm::LiteralEq4 => 1.0 / k_clients as f64,
        EnsembleNorm::Mean => 1.0 / n_terms as f64,
    }
}

/// Constant (non-differentiated) part of client `acting`'s training
/// ensemble on representation `rep`: the sum of every opponent's committed
/// logits plus, when smoothing, each opponent's buffer-mean logits. The
/// acting client's own buffer never joins its own loss.
///
/// Returns the logit sum and the total term count including the acting
/// client's live model (which the caller adds).
pub fn opponent_logits(
    committed: &Committed,
    acting: usize,
    rep: ArrayView2<f64>,
    use_buffers: bool,
) -> (Array2<f64>, usize) {
    let classes = committed.predictors[acting].output_dim();
    let mut sum = Array2::zeros((rep.nrows(), classes));
    let mut terms = 1; // the acting client's live model
    for (q, w) in committed.predictors.iter().enumerate() {
        if q == acting {
            continue;
        }
        sum += &forward(w, rep);
        terms += 1;
    }
    if use_buffers {
        for (p, buf) in committed.buffers.iter().enumerate() {
            if p == acting || buf.is_empty() {
                continue;
            }
            let mut mean = Array2::zeros((rep.nrows(), classes));
            for b in buf {
                mean += &forward(b, rep);
            }
            mean.mapv_inplace(|v| v / buf.len() as f64);
            sum += &mean;
            terms += 1;
        }
    }
    (sum, terms)
}

/// Deployment ensemble: the plain mean of every client's current predictor
/// applied to `phi(x)` (identity `phi` when the representation is fixed).
/// Buffers never contribute here.
pub fn eval_ensemble_logits(
    phi: Option<&MlpParams>,
    predictors: &[&MlpParams],
    x: ArrayView2<f64>,
) -> Array2<f64> {
    assert!(!predictors.is_empty(), "ensemble needs at least one predictor");
    let rep_owned;
    let rep = match phi {
        Some(p) => {
            rep_owned = forward(p, x);
            rep_owned.view()
        }
        None => x.view(),
    };
    let classes = predictors[0].output_dim();
    let mut sum = Array2::zeros((rep.nrows(), classes));
    for w in predictors {
        sum += &forward(w, rep);
    }
    sum.mapv_inplace(|v| v / predictors.len() as f64);
    sum
}
