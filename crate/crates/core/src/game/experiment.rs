//! One full run: rounds, periodic evaluation, the stop rule, and the
//! resulting trace.

use std::time::Instant;

use crate::data::FederatedDataset;
use crate::error::Result;
use crate::metrics::{self, RoundRecord};

use super::engine::run_round;
use super::eval::{build_eval_sets, EvalOutcome, Evaluator};
use super::state::{init_state, GameState};
use super::{steps_per_epoch, GameConfig};

#[derive(Debug, Clone)]
pub struct ExperimentResult {
    /// One record per evaluated round (the final round is always evaluated).
    pub trace: Vec<RoundRecord>,
    /// Accuracies of the final state, with a fresh test evaluation.
    pub terminal_train_acc: f64,
    pub terminal_test_acc: f64,
    /// First recorded round where the stop rule fired; `None` when it never
    /// did (or no stop rule was configured).
    pub rounds_to_equilibrium: Option<usize>,
    /// True when the stop rule ended the run before `max_rounds`.
    pub terminated_early: bool,
    pub comm_rounds: u64,
    pub client_updates: u64,
    pub wall_ms_total: u64,
}

fn eval_now(
    cfg: &GameConfig,
    evaluator: &mut Evaluator,
    state: &GameState,
    include_test: bool,
) -> Result<EvalOutcome> {
    if cfg.variant.is_baseline() {
        let global = state.server.global.as_ref().expect("baseline global model");
        evaluator.evaluate_global(global, include_test)
    } else {
        evaluator.evaluate(&state.server, &state.clients, include_test)
    }
}

/// Run `cfg` on `data` from a seed-determined start until `max_rounds` or
/// the stop rule. Evaluation cadence only affects what is measured, never
/// what is learned.
pub fn run_experiment(cfg: &GameConfig, data: &FederatedDataset, seed: u64) -> Result<ExperimentResult> {
    cfg.validate()?;
    data.validate()?;
    let started = Instant::now();
    let mut state = init_state(cfg, data, seed)?;
    let mut evaluator =
        Evaluator::new(build_eval_sets(data, cfg.eval.train_cap, seed), data.n_clients());

    let warm = cfg.termination.as_ref().map(|t| {
        let spe = steps_per_epoch(data.train[0].n(), cfg.batch_size);
        t.resolve_warm_start(cfg.variant.fixed_phi(), data.n_clients(), spe)
    });

    let mut trace: Vec<RoundRecord> = Vec::new();
    let mut records = 0usize;
    let mut last_test = f64::NAN;
    let mut terminated_early = false;

    while state.server.round < cfg.max_rounds {
        let phase = run_round(cfg, data, &mut state)?;
        let round = state.server.round; // completed-round count
        let due = round % cfg.eval.train_every == 0 || round == cfg.max_rounds;
        if !due {
            continue;
        }
        let include_test = records % cfg.eval.test_every == 0;
        records += 1;
        let out = eval_now(cfg, &mut evaluator, &state, include_test)?;
        if let Some(t) = out.test_acc {
            last_test = t;
        }
        trace.push(RoundRecord {
            round,
            phase,
            train_acc: out.train_acc,
            test_acc: last_test,
            client_losses: out.client_losses,
            comm_rounds: state.server.comm_rounds,
            client_updates: state.server.client_updates,
            wall_ms: started.elapsed().as_millis() as u64,
        });
        if let (Some(term), Some(w)) = (&cfg.termination, warm) {
            if metrics::should_terminate(&trace, term.train_acc_threshold, w) {
                terminated_early = true;
                break;
            }
        }
    }

    // Terminal numbers always reflect the final state with a fresh test
    // pass; the version-keyed cache makes this nearly free when the last
    // recorded row already measured it.
    let fin = eval_now(cfg, &mut evaluator, &state, true)?;
    let terminal_test = fin.test_acc.expect("test evaluation requested");
    if let Some(last) = trace.last_mut() {
        last.train_acc = fin.train_acc;
        last.test_acc = terminal_test;
        last.client_losses = fin.client_losses.clone();
    }
    let rounds_to_equilibrium = match (&cfg.termination, warm) {
        (Some(term), Some(w)) => {
            metrics::rounds_to_equilibrium(&trace, term.train_acc_threshold, w)
        }
        _ => None,
    };

    Ok(ExperimentResult {
        terminal_train_acc: fin.train_acc,
        terminal_test_acc: terminal_test,
        rounds_to_equilibrium,
        terminated_early,
        comm_rounds: state.server.comm_rounds,
        client_updates: state.server.client_updates,
        wall_ms_total: started.elapsed().as_millis() as u64,
        trace,
    })
}

#[cfg(test)]
mod tests {
    use crate::metrics::{Phase, TerminationConfig, WarmStart};

    use super::super::test_support::toy_dataset;
    use super::super::{EvalConfig, GameConfig, LocalSteps, Schedule, Variant};
    use super::*;

    fn base_cfg(variant: Variant) -> GameConfig {
        let mut cfg = GameConfig::new(variant);
        cfg.batch_size = 8;
        cfg.local_steps = LocalSteps::Steps(1);
        cfg.max_rounds = 6;
        cfg
    }

    #[test]
    fn sequential_game_trace_shape_and_counters() {
        let data = toy_dataset(&[24, 16], 6, 2, 1);
        let cfg = base_cfg(Variant::FIrmGames);
        let res = run_experiment(&cfg, &data, 9).unwrap();
        assert_eq!(res.trace.len(), 6);
        for (i, rec) in res.trace.iter().enumerate() {
            assert_eq!(rec.round, i + 1);
            assert_eq!(rec.phase, Phase::Predictor);
            assert_eq!(rec.comm_rounds, (i + 1) as u64);
            assert_eq!(rec.client_updates, (i + 1) as u64, "sequential: one per round");
            assert!(rec.train_acc.is_finite() && rec.test_acc.is_finite());
            assert_eq!(rec.client_losses.len(), 2);
        }
        assert!(!res.terminated_early);
        assert_eq!(res.rounds_to_equilibrium, None, "no stop rule configured");
        assert_eq!(res.comm_rounds, 6);
        let last = res.trace.last().unwrap();
        assert_eq!(res.terminal_train_acc, last.train_acc);
        assert_eq!(res.terminal_test_acc, last.test_acc);
    }

    #[test]
    fn variable_phi_alternates_starting_with_phi() {
        let data = toy_dataset(&[24, 16], 6, 2, 1);
        let mut cfg = base_cfg(Variant::VIrmGames);
        cfg.schedule = Schedule::Parallel;
        let res = run_experiment(&cfg, &data, 9).unwrap();
        let phases: Vec<Phase> = res.trace.iter().map(|r| r.phase).collect();
        assert_eq!(
            phases,
            vec![
                Phase::Phi,
                Phase::Predictor,
                Phase::Phi,
                Phase::Predictor,
                Phase::Phi,
                Phase::Predictor
            ]
        );
        // parallel predictor rounds update K clients; phi rounds none
        assert_eq!(res.trace[0].client_updates, 0);
        assert_eq!(res.trace[1].client_updates, 2);
        assert_eq!(res.trace[5].client_updates, 6);
    }

    #[test]
    fn baseline_phase_and_counters() {
        let data = toy_dataset(&[24, 16], 6, 2, 1);
        let cfg = base_cfg(Variant::FedAvg);
        let res = run_experiment(&cfg, &data, 9).unwrap();
        assert!(res.trace.iter().all(|r| r.phase == Phase::Baseline));
        assert_eq!(res.trace.last().unwrap().client_updates, 12);
    }

    #[test]
    fn zero_rounds_reports_initial_state() {
        let data = toy_dataset(&[24, 16], 6, 2, 1);
        let mut cfg = base_cfg(Variant::FIrmGames);
        cfg.max_rounds = 0;
        let res = run_experiment(&cfg, &data, 9).unwrap();
        assert!(res.trace.is_empty());
        assert!(res.terminal_train_acc.is_finite());
        assert!(res.terminal_test_acc.is_finite());
        assert_eq!(res.comm_rounds, 0);
    }

    #[test]
    fn runs_are_deterministic_up_to_wall_clock() {
        let data = toy_dataset(&[24, 16], 6, 2, 1);
        let mut cfg = base_cfg(Variant::FFlSmooth);
        cfg.schedule = Schedule::Parallel;
        let a = run_experiment(&cfg, &data, 33).unwrap();
        let b = run_experiment(&cfg, &data, 33).unwrap();
        assert_eq!(a.trace.len(), b.trace.len());
        for (ra, rb) in a.trace.iter().zip(&b.trace) {
            assert_eq!(ra.round, rb.round);
            assert_eq!(ra.phase, rb.phase);
            assert_eq!(ra.train_acc, rb.train_acc, "bitwise-identical accuracies");
            assert_eq!(ra.test_acc, rb.test_acc);
            assert_eq!(ra.client_losses, rb.client_losses);
            assert_eq!(ra.comm_rounds, rb.comm_rounds);
            assert_eq!(ra.client_updates, rb.client_updates);
        }
        assert_eq!(a.terminal_train_acc, b.terminal_train_acc);
        assert_eq!(a.terminal_test_acc, b.terminal_test_acc);
        // a different seed changes the numbers; accuracies on a tiny eval
        // set are coarsely quantized, so compare the continuous losses
        let c = run_experiment(&cfg, &data, 34).unwrap();
        assert_ne!(
            a.trace.last().unwrap().client_losses,
            c.trace.last().unwrap().client_losses
        );
    }

    #[test]
    fn stop_rule_fires_after_warm_start() {
        let data = toy_dataset(&[24, 16], 6, 2, 1);
        let mut cfg = base_cfg(Variant::FIrmGames);
        cfg.max_rounds = 50;
        // threshold nobody can beat: accuracy is always < 0.9999, so the
        // rule fires on the first record past the warm start
        cfg.termination = Some(TerminationConfig {
            train_acc_threshold: 0.9999,
            warm_start: WarmStart::Rounds(3),
        });
        let res = run_experiment(&cfg, &data, 9).unwrap();
        assert!(res.terminated_early);
        assert_eq!(res.trace.last().unwrap().round, 4);
        assert_eq!(res.rounds_to_equilibrium, Some(4));
    }

    #[test]
    fn eval_cadence_records_and_carries_test_forward() {
        let data = toy_dataset(&[24, 16], 6, 2, 1);
        let mut cfg = base_cfg(Variant::FIrmGames);
        cfg.max_rounds = 5;
        cfg.eval = EvalConfig { train_cap: 0, train_every: 2, test_every: 2 };
        let res = run_experiment(&cfg, &data, 9).unwrap();
        let rounds: Vec<usize> = res.trace.iter().map(|r| r.round).collect();
        assert_eq!(rounds, vec![2, 4, 5], "cadence plus the forced final round");
        // round 4 skipped its test pass and carried round 2's value forward
        assert_eq!(res.trace[1].test_acc, res.trace[0].test_acc);
        // the final row is always freshly test-evaluated
        assert_eq!(res.trace[2].test_acc, res.terminal_test_acc);
    }

    #[test]
    fn cadence_does_not_change_learning() {
        let data = toy_dataset(&[24, 16], 6, 2, 1);
        let mut every = base_cfg(Variant::FIrmGames);
        every.max_rounds = 6;
        let mut sparse = every.clone();
        sparse.eval = EvalConfig { train_cap: 0, train_every: 3, test_every: 2 };
        let a = run_experiment(&every, &data, 9).unwrap();
        let b = run_experiment(&sparse, &data, 9).unwrap();
        assert_eq!(a.terminal_train_acc, b.terminal_train_acc);
        assert_eq!(a.terminal_test_acc, b.terminal_test_acc);
    }
}
