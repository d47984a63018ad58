//! Metrics over training traces: accuracy, the warm-start/threshold stop
//! rule, oscillation quantification, and rounds-to-equilibrium.

use ndarray::ArrayView2;

use crate::error::{Error, Result};

/// What kind of work a round performed.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Phase {
    /// shared-representation update round
    Phi,
    /// predictor best-response round
    Predictor,
    /// baseline (global-model) round
    Baseline,
}

impl Phase {
    pub fn name(self) -> &'static str {
        match self {
            Phase::Phi => "phi",
            Phase::Predictor => "predictor",
            Phase::Baseline => "baseline",
        }
    }
}

/// One row of a training trace.
#[derive(Debug, Clone, PartialEq)]
pub struct RoundRecord {
    pub round: usize,
    pub phase: Phase,
    /// Pooled train accuracy of the evaluation ensemble (clients weighted by
    /// sample count).
    pub train_acc: f64,
    /// Held-out test-client accuracy of the evaluation ensemble.
    pub test_acc: f64,
    /// Per-client train loss of the acting ensemble (diagnostic only).
    pub client_losses: Vec<f64>,
    /// Cumulative server-orchestrated rounds.
    pub comm_rounds: u64,
    /// Cumulative count of client predictor updates communicated.
    pub client_updates: u64,
    /// Wall-clock milliseconds consumed so far (zeroed in deterministic
    /// trace files; see the runner).
    pub wall_ms: u64,
}

/// Warm-start span during which the stop rule is suppressed.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum WarmStart {
    /// Derive from the run shape: fixed-representation games use the client
    /// count, variable-representation games use steps-per-epoch.
    Auto,
    Rounds(usize),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TerminationConfig {
    /// Stop once pooled train accuracy falls below this (after warm start).
    pub train_acc_threshold: f64,
    pub warm_start: WarmStart,
}

impl TerminationConfig {
    pub fn validate(&self) -> Result<()> {
        if !(0.0 < self.train_acc_threshold && self.train_acc_threshold < 1.0) {
            return Err(Error::InvalidArgument(format!(
                "train_acc_threshold {} outside (0,1)",
                self.train_acc_threshold
            )));
        }
        Ok(())
    }

    /// Concrete warm-start rounds for a run.
    pub fn resolve_warm_start(
        &self,
        fixed_phi: bool,
        n_clients: usize,
        steps_per_epoch: usize,
    ) -> usize {
        match self.warm_start {
            WarmStart::Rounds(r) => r,
            WarmStart::Auto => {
                if fixed_phi {
                    n_clients
                } else {
                    steps_per_epoch
                }
            }
        }
    }
}

/// True iff the newest record is past the warm start and its pooled train
/// accuracy sits below the threshold.
pub fn should_terminate(trace: &[RoundRecord], threshold: f64, warm_start_rounds: usize) -> bool {
    match trace.last() {
        None => false,
        Some(rec) => rec.round > warm_start_rounds && rec.train_acc < threshold,
    }
}

/// First round at which the stop rule fires on a finished trace; `None`
/// means the run never met it (did not converge).
pub fn rounds_to_equilibrium(
    trace: &[RoundRecord],
    threshold: f64,
    warm_start_rounds: usize,
) -> Option<usize> {
    trace
        .iter()
        .find(|rec| rec.round > warm_start_rounds && rec.train_acc < threshold)
        .map(|rec| rec.round)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OscillationStats {
    /// Number of direction reversals whose magnitude exceeds the amplitude.
    pub events: usize,
    /// Mean rounds between consecutive events; a trace with fewer than two
    /// events reports its full length (nothing oscillates slower than the
    /// observation span).
    pub mean_gap_rounds: f64,
}

/// Quantify oscillation in an accuracy series.
///
/// A round is an event when the series reverses direction with magnitude
/// above `amplitude`: it rises more than `amplitude` above the trailing
/// `window`-round minimum after last moving down, or falls more than
/// `amplitude` below the trailing maximum after last moving up. Monotone
/// and flat series therefore report zero events regardless of window.
pub fn oscillation_events(acc: &[f64], window: usize, amplitude: f64) -> Result<OscillationStats> {
    if window == 0 {
        return Err(Error::InvalidArgument("oscillation window must be positive".into()));
    }
    if window > acc.len() {
        return Err(Error::InvalidArgument(format!(
            "oscillation window {window} exceeds trace length {}",
            acc.len()
        )));
    }
    let mut events: Vec<usize> = Vec::new();
    let mut last_dir = 0i8;
    for i in 1..acc.len() {
        let lo = i.saturating_sub(window);
        let trail = &acc[lo..i];
        let tmax = trail.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let tmin = trail.iter().cloned().fold(f64::INFINITY, f64::min);
        let drop = tmax - acc[i];
        let rise = acc[i] - tmin;
        let dir = if drop > amplitude && rise > amplitude {
            if drop >= rise {
                -1
            } else {
                1
            }
        } else if drop > amplitude {
            -1
        } else if rise > amplitude {
            1
        } else {
            0
        };
        if dir != 0 {
            if last_dir != 0 && dir != last_dir {
                events.push(i);
            }
            last_dir = dir;
        }
    }
    let mean_gap_rounds = if events.len() >= 2 {
        let span = (events[events.len() - 1] - events[0]) as f64;
        span / (events.len() - 1) as f64
    } else {
        acc.len() as f64
    };
    Ok(OscillationStats { events: events.len(), mean_gap_rounds })
}

/// Fraction of rows whose argmax logit matches the label. Ties resolve to
/// the lowest class index, so the result is deterministic.
pub fn accuracy(logits: ArrayView2<'_, f64>, labels: &[u8]) -> f64 {
    assert_eq!(logits.nrows(), labels.len(), "logit rows must match labels");
    assert!(!labels.is_empty(), "accuracy of an empty set is undefined");
    let mut hits = 0usize;
    for (row, &label) in logits.outer_iter().zip(labels) {
        let mut best = 0usize;
        let mut best_v = row[0];
        for (j, &v) in row.iter().enumerate().skip(1) {
            if v > best_v {
                best = j;
                best_v = v;
            }
        }
        if best == label as usize {
            hits += 1;
        }
    }
    hits as f64 / labels.len() as f64
}

/// Mean and sample standard deviation (n-1 denominator; 0 for n < 2).
pub fn mean_std(xs: &[f64]) -> (f64, f64) {
    assert!(!xs.is_empty(), "mean of an empty set is undefined");
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    if xs.len() < 2 {
        return (mean, 0.0);
    }
    let var = xs.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}
