//! End-to-end acceptance checks.
//!
//! Runs every documented product property and prints exactly one
//! `PASS`/`FAIL` line per check, then exits nonzero if any failed. Checks
//! run at `--scale desk` by default so the whole suite fits on a laptop
//! core; set `FEDGAME_ACCEPT_SCALE=full` for the full-dataset protocol
//! (dataset statistics are always measured at full scale — they are cheap
//! and scale-independent by construction).
//!
//! Corpora are generated on first use under `FEDGAME_DATA_DIR` (default:
//! a directory under the cargo target tmp dir, reused across runs). Run
//! artifacts are written to a fresh directory per invocation.

use std::collections::HashMap;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::PathBuf;
use std::time::Instant;

use ndarray::Array2;

use fedgame::data::synth::ensure_corpus;
use fedgame::data::{
    build_federated_dataset_stages, BaseDataset, ClientDataset, FederatedDataset, Scale,
    SpuriousDatasetSpec,
};
use fedgame::game::{
    acting_loss_grads, init_state, parallel_predictor_round_with_order,
    representation_loss_and_grads, run_round, GameConfig, GameState, Schedule, Variant,
};
use fedgame::metrics::{mean_std, oscillation_events};
use fedgame::nn::{adam_step, AdamHp, AdamState, Grads, MlpParams};
use fedgame::presets::DEFAULT_SEEDS;
use fedgame::runner::{run_preset, JobOutcome, RunnerOptions, CORPUS_SEED};

// ---------------------------------------------------------------------------
// harness

struct Ctx {
    scale: Scale,
    data_dir: PathBuf,
    out_root: PathBuf,
    /// preset name -> finished outcomes, so checks can share runs
    cache: HashMap<String, Vec<JobOutcome>>,
}

impl Ctx {
    fn opts(&self, seeds: &[u64]) -> RunnerOptions {
        RunnerOptions {
            data_dir: self.data_dir.clone(),
            out_dir: self.out_root.clone(),
            scale: self.scale,
            seeds: seeds.to_vec(),
            verbose: false,
        }
    }

    /// Run a preset once per process; later checks reuse the outcomes.
    fn preset(&mut self, name: &str, seeds: &[u64]) -> Result<&Vec<JobOutcome>, String> {
        if !self.cache.contains_key(name) {
            let outcomes = run_preset(name, &self.opts(seeds))
                .map_err(|e| format!("preset {name} failed: {e}"))?;
            self.cache.insert(name.to_string(), outcomes);
        }
        Ok(&self.cache[name])
    }

    fn single_job(&mut self, name: &str, seeds: &[u64]) -> Result<&JobOutcome, String> {
        let outcomes = self.preset(name, seeds)?;
        outcomes.first().ok_or_else(|| format!("preset {name} produced no jobs"))
    }
}

/// Mean terminal test accuracy of a finished job, in percent points.
fn mean_terminal_test_pct(job: &JobOutcome) -> f64 {
    let accs: Vec<f64> = job.runs.iter().map(|r| r.result.terminal_test_acc * 100.0).collect();
    mean_std(&accs).0
}

fn mean_terminal_train_pct(job: &JobOutcome) -> f64 {
    let accs: Vec<f64> = job.runs.iter().map(|r| r.result.terminal_train_acc * 100.0).collect();
    mean_std(&accs).0
}

fn main() {
    let scale = match std::env::var("FEDGAME_ACCEPT_SCALE").as_deref() {
        Ok("full") => Scale::Full,
        _ => Scale::Desk,
    };
    let tmp = PathBuf::from(env!("CARGO_TARGET_TMPDIR"));
    let data_dir = std::env::var_os("FEDGAME_DATA_DIR")
        .map(PathBuf::from)
        .unwrap_or_else(|| tmp.join("accept-data"));
    let out_root = tmp.join(match scale {
        Scale::Desk => "accept-out-desk",
        Scale::Full => "accept-out-full",
    });
    let _ = std::fs::remove_dir_all(&out_root);

    let mut ctx = Ctx { scale, data_dir, out_root, cache: HashMap::new() };
    let scale_name = match scale {
        Scale::Desk => "desk",
        Scale::Full => "full",
    };
    println!("acceptance checks at --scale {scale_name}");

    type Check = (&'static str, fn(&mut Ctx) -> Result<String, String>);
    let checks: [Check; 10] = [
        ("01 gradient and optimizer oracles", c01_oracles),
        ("02 dataset statistics", c02_dataset_statistics),
        ("03 averaging baselines memorize train, fail test", c03_baselines),
        ("04 terminal test-accuracy bands", c04_bands),
        ("05 buffer smoothing stretches oscillation gaps", c05_smoothing),
        ("06 full-dataset representation steps reach 60% sooner", c06_fast_phi),
        ("07 client-count scaling", c07_scaling),
        ("08 exact best response degrades terminal accuracy", c08_local_steps),
        ("09 determinism and order invariance", c09_determinism),
        ("10 ten-class robustness", c10_ten_class),
    ];

    let mut failures = 0usize;
    for (name, check) in checks {
        let started = Instant::now();
        let outcome = catch_unwind(AssertUnwindSafe(|| check(&mut ctx)));
        let elapsed = started.elapsed().as_secs();
        match outcome {
            Ok(Ok(detail)) => println!("PASS  {name} — {detail} [{elapsed}s]"),
            Ok(Err(reason)) => {
                failures += 1;
                println!("FAIL  {name} — {reason} [{elapsed}s]");
            }
            Err(panic) => {
                failures += 1;
                let msg = panic
                    .downcast_ref::<&str>()
                    .map(|s| s.to_string())
                    .or_else(|| panic.downcast_ref::<String>().cloned())
                    .unwrap_or_else(|| "panic".into());
                println!("FAIL  {name} — panicked: {msg} [{elapsed}s]");
            }
        }
    }

    let passed = checks.len() - failures;
    println!("acceptance: {passed}/{} passed ({scale_name} scale)", checks.len());
    std::process::exit(if failures > 0 { 1 } else { 0 });
}

// ---------------------------------------------------------------------------
// small shared helpers

/// Deterministic toy federated dataset: `k` clients, `n` rows each, `dim`
/// inputs, `classes` labels. Inputs are a fixed quasi-random pattern in
/// [0,1); labels cycle so every class is populated.
fn toy_dataset(k: usize, n: usize, dim: usize, classes: u8) -> FederatedDataset {
    let client = |salt: usize| {
        let mut x = Array2::<f64>::zeros((n, dim));
        for i in 0..n {
            for j in 0..dim {
                // low-discrepancy-ish filler; exact values are irrelevant,
                // determinism is what matters
                let v = ((i * 31 + j * 17 + salt * 101) % 97) as f64 / 97.0;
                x[[i, j]] = v;
            }
        }
        let labels: Vec<u8> = (0..n).map(|i| ((i + salt) % classes as usize) as u8).collect();
        let spurious = labels.clone();
        ClientDataset { inputs: x, labels, spurious }
    };
    FederatedDataset {
        train: (0..k).map(client).collect(),
        test: client(k),
        classes,
        input_dim: dim,
    }
}

/// xorshift64* — a tiny deterministic index source for probe positions.
struct Lcg(u64);
impl Lcg {
    fn next(&mut self) -> u64 {
        let mut x = self.0;
        x ^= x << 13;
        x ^= x >> 7;
        x ^= x << 17;
        self.0 = x;
        x.wrapping_mul(0x2545_f491_4f6c_dd1d)
    }
    fn below(&mut self, n: usize) -> usize {
        (self.next() % n as u64) as usize
    }
}

// ---------------------------------------------------------------------------
// 01: finite-difference gradient probes + Adam recurrence oracle

/// One parameter coordinate of an MLP, addressable for perturbation.
#[derive(Clone, Copy)]
enum Coord {
    W(usize, usize, usize),
    B(usize, usize),
}

fn pick_coord(params: &MlpParams, rng: &mut Lcg) -> Coord {
    let l = rng.below(params.layers.len());
    let layer = &params.layers[l];
    let (rows, cols) = (layer.w.nrows(), layer.w.ncols());
    // bias picked in proportion to its share of the layer's parameters
    if rng.below(rows * cols + rows) < rows * cols {
        Coord::W(l, rng.below(rows), rng.below(cols))
    } else {
        Coord::B(l, rng.below(rows))
    }
}

fn get_coord(params: &MlpParams, c: Coord) -> f64 {
    match c {
        Coord::W(l, r, k) => params.layers[l].w[[r, k]],
        Coord::B(l, r) => params.layers[l].b[r],
    }
}

fn set_coord(params: &mut MlpParams, c: Coord, v: f64) {
    match c {
        Coord::W(l, r, k) => params.layers[l].w[[r, k]] = v,
        Coord::B(l, r) => params.layers[l].b[r] = v,
    }
}

fn grad_coord(grads: &Grads, c: Coord) -> f64 {
    match c {
        Coord::W(l, r, k) => grads.layers[l].0[[r, k]],
        Coord::B(l, r) => grads.layers[l].1[r],
    }
}

/// Central-difference check of `probes` random coordinates of `params`
/// against `analytic`, where `loss_at` re-evaluates the objective for a
/// perturbed parameter set. Returns (passes, worst relative error).
fn fd_probe(
    params: &MlpParams,
    analytic: &Grads,
    probes: usize,
    rng: &mut Lcg,
    mut loss_at: impl FnMut(&MlpParams) -> f64,
) -> (usize, f64) {
    const EPS: f64 = 1e-5;
    const TOL: f64 = 1e-3;
    let mut passes = 0usize;
    let mut worst = 0.0f64;
    let mut work = params.clone();
    for _ in 0..probes {
        let c = pick_coord(params, rng);
        let v0 = get_coord(params, c);
        set_coord(&mut work, c, v0 + EPS);
        let up = loss_at(&work);
        set_coord(&mut work, c, v0 - EPS);
        let dn = loss_at(&work);
        set_coord(&mut work, c, v0);
        let fd = (up - dn) / (2.0 * EPS);
        let g = grad_coord(analytic, c);
        // floor keeps near-zero gradients from amplifying the difference
        // quotient's own O(1e-10) noise into a spurious relative error
        let rel = (fd - g).abs() / fd.abs().max(g.abs()).max(1e-5);
        if rel <= TOL {
            passes += 1;
        }
        worst = worst.max(rel);
    }
    (passes, worst)
}

fn c01_oracles(_ctx: &mut Ctx) -> Result<String, String> {
    const PROBES: usize = 128;
    let mut rng = Lcg(0x9e37_79b9_7f4a_7c15);
    let mut total = 0usize;
    let mut passed = 0usize;
    let mut worst = 0.0f64;

    // -- fixed-representation architecture: predictors read raw inputs;
    //    the probe goes through the acting-client ensemble objective with
    //    populated opponent buffers (the full constant-term path).
    {
        let data = toy_dataset(3, 48, 12, 3);
        let mut cfg = GameConfig::new(Variant::FFlSmooth);
        cfg.schedule = Schedule::Parallel;
        cfg.hidden = 9;
        cfg.batch_size = 16;
        cfg.max_rounds = 4;
        let mut st = init_state(&cfg, &data, 11).map_err(|e| e.to_string())?;
        for _ in 0..4 {
            run_round(&cfg, &data, &mut st).map_err(|e| e.to_string())?; // fills buffers
        }
        let ds = &data.train[0];
        let x = ds.inputs.slice(ndarray::s![0..16, ..]);
        let y = &ds.labels[0..16];
        let predictor = st.clients[0].predictor.clone();
        let (_, analytic) = acting_loss_grads(
            &predictor,
            0,
            None,
            &st.committed,
            x,
            y,
            cfg.ensemble_norm,
            true,
        )
        .map_err(|e| e.to_string())?;
        let (p, w) = fd_probe(&predictor, &analytic, PROBES, &mut rng, |params| {
            acting_loss_grads(params, 0, None, &st.committed, x, y, cfg.ensemble_norm, true)
                .expect("probe loss")
                .0
        });
        total += PROBES;
        passed += p;
        worst = worst.max(w);
    }

    // -- trained-representation architecture: probes through the shared
    //    representation (gradient flows through every frozen predictor) and
    //    through a predictor behind the representation.
    {
        let data = toy_dataset(2, 48, 10, 2);
        let mut cfg = GameConfig::new(Variant::VIrmGames);
        cfg.schedule = Schedule::Parallel;
        cfg.hidden = 7;
        cfg.batch_size = 16;
        cfg.max_rounds = 4;
        let mut st = init_state(&cfg, &data, 23).map_err(|e| e.to_string())?;
        for _ in 0..4 {
            run_round(&cfg, &data, &mut st).map_err(|e| e.to_string())?;
        }
        let ds = &data.train[1];
        let x = ds.inputs.slice(ndarray::s![0..16, ..]);
        let y = &ds.labels[0..16];

        let phi = st.server.phi.clone().expect("trained representation");
        let (_, g_phi) = representation_loss_and_grads(&phi, &st.committed, x, y)
            .map_err(|e| e.to_string())?;
        let (p, w) = fd_probe(&phi, &g_phi, PROBES, &mut rng, |params| {
            representation_loss_and_grads(params, &st.committed, x, y).expect("probe loss").0
        });
        total += PROBES;
        passed += p;
        worst = worst.max(w);

        let predictor = st.clients[1].predictor.clone();
        let (_, g_pred) = acting_loss_grads(
            &predictor,
            1,
            Some(&phi),
            &st.committed,
            x,
            y,
            cfg.ensemble_norm,
            false,
        )
        .map_err(|e| e.to_string())?;
        let (p, w) = fd_probe(&predictor, &g_pred, PROBES, &mut rng, |params| {
            acting_loss_grads(params, 1, Some(&phi), &st.committed, x, y, cfg.ensemble_norm, false)
                .expect("probe loss")
                .0
        });
        total += PROBES;
        passed += p;
        worst = worst.max(w);
    }

    if passed != total {
        return Err(format!(
            "{}/{total} finite-difference probes within 1e-3 (worst rel err {worst:.2e})",
            passed
        ));
    }

    // -- Adam oracle: three steps against the hand-evaluated recurrence.
    let mut params = MlpParams {
        layers: vec![fedgame::nn::Layer {
            w: Array2::from_elem((1, 1), 0.5),
            b: ndarray::Array1::from_elem(1, -0.25),
            act: fedgame::nn::Activation::Linear,
        }],
    };
    let hp = AdamHp::with_lr(0.01);
    let mut opt = AdamState::new(&params);
    let grad_schedule = [(0.3, -0.2), (-0.11, 0.07), (0.053, 0.019)];
    let (mut ew, mut eb) = (0.5f64, -0.25f64);
    let (mut mw, mut vw, mut mb, mut vb) = (0.0f64, 0.0f64, 0.0f64, 0.0f64);
    let mut adam_err = 0.0f64;
    for (t, (gw, gb)) in grad_schedule.iter().enumerate() {
        let g = Grads {
            layers: vec![(Array2::from_elem((1, 1), *gw), ndarray::Array1::from_elem(1, *gb))],
        };
        adam_step(&mut params, &g, &mut opt, &hp);
        let bc1 = 1.0 - hp.beta1.powi(t as i32 + 1);
        let bc2 = 1.0 - hp.beta2.powi(t as i32 + 1);
        mw = hp.beta1 * mw + (1.0 - hp.beta1) * gw;
        vw = hp.beta2 * vw + (1.0 - hp.beta2) * gw * gw;
        ew -= hp.lr * (mw / bc1) / ((vw / bc2).sqrt() + hp.eps);
        mb = hp.beta1 * mb + (1.0 - hp.beta1) * gb;
        vb = hp.beta2 * vb + (1.0 - hp.beta2) * gb * gb;
        eb -= hp.lr * (mb / bc1) / ((vb / bc2).sqrt() + hp.eps);
        adam_err = adam_err
            .max((params.layers[0].w[[0, 0]] - ew).abs())
            .max((params.layers[0].b[0] - eb).abs());
    }
    if adam_err > 1e-10 {
        return Err(format!("adam 3-step recurrence deviates by {adam_err:.2e} > 1e-10"));
    }

    Ok(format!(
        "{passed}/{total} finite-difference probes within 1e-3 (worst rel err {worst:.1e}); \
         adam 3-step deviation {adam_err:.1e}"
    ))
}

// ---------------------------------------------------------------------------
// 02: dataset statistics (always full scale)

fn c02_dataset_statistics(ctx: &mut Ctx) -> Result<String, String> {
    let spec = SpuriousDatasetSpec::standard(BaseDataset::Mnist);
    let (corpus, _) =
        ensure_corpus(&ctx.data_dir, BaseDataset::Mnist, CORPUS_SEED).map_err(|e| e.to_string())?;
    let (_, train_stages, test_stage) =
        build_federated_dataset_stages(&spec, &corpus, 1, Scale::Full).map_err(|e| e.to_string())?;

    let frac_eq = |a: &[u8], b: &[u8]| {
        a.iter().zip(b).filter(|(x, y)| x == y).count() as f64 / a.len() as f64
    };

    let expected = [0.8, 0.9];
    let mut client_fracs = Vec::new();
    for (k, st) in train_stages.iter().enumerate() {
        let f = frac_eq(&st.z, &st.y);
        client_fracs.push(f);
        if (f - expected[k]).abs() > 0.01 {
            return Err(format!(
                "client {k} P(tag==label) {f:.4} outside {:.2}±0.01",
                expected[k]
            ));
        }
    }
    let test_frac = frac_eq(&test_stage.z, &test_stage.y);
    if (test_frac - 0.1).abs() > 0.01 {
        return Err(format!("test P(tag==label) {test_frac:.4} outside 0.10±0.01"));
    }

    // the best shape-only predictor recovers the pre-noise label, so its
    // accuracy equals P(label survived the flip)
    let mut oracle_train_hits = 0usize;
    let mut oracle_train_n = 0usize;
    for st in &train_stages {
        oracle_train_hits += st.y_tilde.iter().zip(&st.y).filter(|(a, b)| a == b).count();
        oracle_train_n += st.y.len();
    }
    let oracle_train = oracle_train_hits as f64 / oracle_train_n as f64;
    let oracle_test = frac_eq(&test_stage.y_tilde, &test_stage.y);
    if (oracle_train - 0.75).abs() > 0.01 || (oracle_test - 0.75).abs() > 0.01 {
        return Err(format!(
            "pre-noise-label oracle {:.4} train / {:.4} test outside 0.75±0.01",
            oracle_train, oracle_test
        ));
    }

    Ok(format!(
        "per-client P(tag==label) {:.3}/{:.3}, test {:.3}; oracle {:.3} train / {:.3} test",
        client_fracs[0], client_fracs[1], test_frac, oracle_train, oracle_test
    ))
}

// ---------------------------------------------------------------------------
// 03: averaging baselines

fn c03_baselines(ctx: &mut Ctx) -> Result<String, String> {
    let mut details = Vec::new();
    for name in ["table1_fedsgd", "table1_fedavg"] {
        let job = ctx.single_job(name, &DEFAULT_SEEDS)?;
        let train = mean_terminal_train_pct(job);
        let test = mean_terminal_test_pct(job);
        if train < 80.0 || test > 25.0 {
            return Err(format!(
                "{name} mean train {train:.2} / test {test:.2} (need train ≥ 80, test ≤ 25)"
            ));
        }
        details.push(format!("{name} {train:.1}/{test:.1}"));
    }
    Ok(details.join(", "))
}

// ---------------------------------------------------------------------------
// 04: terminal accuracy bands

fn c04_bands(ctx: &mut Ctx) -> Result<String, String> {
    // (preset, band center, half-width)
    let bands: [(&str, f64, f64); 7] = [
        ("table1_f_irm_seq", 66.56, 6.0),
        ("table1_f_irm_par", 67.14, 6.0),
        // dense-eval twin of table1_v_irm_par: identical recipe and
        // trajectory, also feeds check 06
        ("fig3_v_irm_par", 68.34, 6.0),
        ("table1_f_smooth_par", 67.21, 6.0),
        ("table1_v_smooth_fast_par", 65.73, 6.0),
        ("table2_f_smooth_par", 71.36, 6.0),
        ("table3_f_irm_par", 52.07, 8.0),
    ];
    let mut details = Vec::new();
    let mut failures = Vec::new();
    for (name, center, half) in bands {
        let job = ctx.single_job(name, &DEFAULT_SEEDS)?;
        let mean = mean_terminal_test_pct(job);
        let ok = (mean - center).abs() <= half;
        details.push(format!("{name} {mean:.1} (target {center}±{half})"));
        if !ok {
            failures.push(format!("{name} mean test {mean:.2} outside {center}±{half}"));
        }
    }
    if failures.is_empty() {
        Ok(details.join(", "))
    } else {
        Err(failures.join("; "))
    }
}

// ---------------------------------------------------------------------------
// 05: oscillation smoothing

fn c05_smoothing(ctx: &mut Ctx) -> Result<String, String> {
    const SEEDS: [u64; 3] = [1, 2, 3];
    const WINDOW: usize = 10;
    const AMPLITUDE: f64 = 0.10;
    let mut gaps = HashMap::new();
    for name in ["fig3_f_irm_300", "fig3_f_smooth_300"] {
        let job = ctx.single_job(name, &SEEDS)?;
        let mut per_seed = Vec::new();
        for run in &job.runs {
            let series: Vec<f64> = run.result.trace.iter().map(|r| r.train_acc).collect();
            let stats =
                oscillation_events(&series, WINDOW, AMPLITUDE).map_err(|e| e.to_string())?;
            per_seed.push(stats.mean_gap_rounds);
        }
        gaps.insert(name, mean_std(&per_seed).0);
    }
    let raw = gaps["fig3_f_irm_300"];
    let smooth = gaps["fig3_f_smooth_300"];
    if smooth < 10.0 * raw || smooth < 30.0 {
        return Err(format!(
            "smoothed mean gap {smooth:.1} rounds vs un-smoothed {raw:.1} \
             (need ≥ 10× and ≥ 30 rounds)"
        ));
    }
    Ok(format!(
        "mean reversal gap {raw:.1} rounds un-smoothed vs {smooth:.1} smoothed \
         ({:.0}×, window {WINDOW}, amplitude {AMPLITUDE})",
        smooth / raw
    ))
}

// ---------------------------------------------------------------------------
// 06: full-dataset representation steps reach 60% test sooner

/// Communication rounds at the first recorded row whose test accuracy
/// reaches the threshold; `None` if the run never gets there.
fn comm_rounds_to_test(job: &JobOutcome, seed: u64, threshold: f64) -> Option<u64> {
    let run = job.runs.iter().find(|r| r.seed == seed)?;
    run.result
        .trace
        .iter()
        .find(|rec| rec.test_acc >= threshold)
        .map(|rec| rec.comm_rounds)
}

fn c06_fast_phi(ctx: &mut Ctx) -> Result<String, String> {
    let _ = ctx.preset("fig3_v_irm_par", &DEFAULT_SEEDS)?;
    let _ = ctx.preset("table1_v_smooth_fast_par", &DEFAULT_SEEDS)?;
    let baseline = ctx.cache["fig3_v_irm_par"].first().ok_or("missing baseline job")?;
    let fast = ctx.cache["table1_v_smooth_fast_par"].first().ok_or("missing fast job")?;

    let mut pairs = Vec::new();
    for &seed in &DEFAULT_SEEDS {
        let f = comm_rounds_to_test(fast, seed, 0.60)
            .ok_or(format!("fast variant never reached 60% test on seed {seed}"))?;
        match comm_rounds_to_test(baseline, seed, 0.60) {
            Some(b) if f >= b => {
                return Err(format!(
                    "seed {seed}: fast variant reached 60% at comm round {f}, \
                     baseline at {b} (need strictly fewer)"
                ));
            }
            Some(b) => pairs.push(format!("seed {seed}: {f} vs {b}")),
            None => pairs.push(format!("seed {seed}: {f} vs never")),
        }
    }
    let terminal = mean_terminal_test_pct(fast);
    if (terminal - 65.73).abs() > 6.0 {
        return Err(format!("fast variant mean terminal test {terminal:.2} outside 65.73±6"));
    }
    Ok(format!("comm rounds to 60% test — {}; terminal {terminal:.1}", pairs.join(", ")))
}

// ---------------------------------------------------------------------------
// 07: client-count scaling

fn c07_scaling(ctx: &mut Ctx) -> Result<String, String> {
    const SEEDS: [u64; 3] = [1, 2, 3];
    let mean_eq = |job: &JobOutcome| -> f64 {
        let vals: Vec<f64> = job
            .runs
            .iter()
            .map(|r| r.result.rounds_to_equilibrium.expect("convergence enforced") as f64)
            .collect();
        mean_std(&vals).0
    };

    let seq = ctx.preset("fig2_seq_clients", &SEEDS)?;
    let seq_eq: Vec<(String, f64)> =
        seq.iter().map(|j| (j.dir_label.clone(), mean_eq(j))).collect();
    for w in seq_eq.windows(2) {
        if w[1].1 <= w[0].1 {
            return Err(format!(
                "sequential rounds-to-equilibrium not strictly increasing: {} {:.0} -> {} {:.0}",
                w[0].0, w[0].1, w[1].0, w[1].1
            ));
        }
    }

    let par = ctx.preset("fig2_par_clients", &SEEDS)?;
    let par_eq: Vec<f64> = par.iter().map(mean_eq).collect();
    let (k2, k10) = (par_eq[0], par_eq[par_eq.len() - 1]);
    if k10 > 1.5 * k2 {
        return Err(format!(
            "parallel rounds-to-equilibrium at 10 clients {k10:.0} exceeds 1.5× two-client {k2:.0}"
        ));
    }
    let expected = [66.57, 65.35, 65.53, 67.49];
    let mut par_tests = Vec::new();
    for (job, center) in par.iter().zip(expected) {
        let mean = mean_terminal_test_pct(job);
        if (mean - center).abs() > 6.0 {
            return Err(format!(
                "{} mean terminal test {mean:.2} outside {center}±6",
                job.dir_label
            ));
        }
        par_tests.push(format!("{} {mean:.1}", job.dir_label.rsplit('/').next().unwrap_or("")));
    }

    let seq_desc: Vec<String> = seq_eq
        .iter()
        .map(|(l, v)| format!("{} {v:.0}", l.rsplit('/').next().unwrap_or("")))
        .collect();
    Ok(format!(
        "sequential rounds-to-eq {}; parallel k10/k2 = {:.0}/{:.0} = {:.2}; parallel test {}",
        seq_desc.join(" < "),
        k10,
        k2,
        k10 / k2,
        par_tests.join(", ")
    ))
}

// ---------------------------------------------------------------------------
// 08: exact best response

fn c08_local_steps(ctx: &mut Ctx) -> Result<String, String> {
    const SEEDS: [u64; 2] = [1, 2];
    let jobs = ctx.preset("fig4_local_steps", &SEEDS)?;
    let find = |suffix: &str| -> Result<&JobOutcome, String> {
        jobs.iter()
            .find(|j| j.dir_label.ends_with(suffix))
            .ok_or(format!("sweep job {suffix} missing"))
    };
    let smallest = mean_terminal_test_pct(find("f01.71")?);
    let full = find("f100.00")?;
    let full_test = mean_terminal_test_pct(full);
    // the sweep marks its full-epoch job require_convergence, which the
    // runner enforces: reaching this point means every seed of the 100%
    // job terminated via the stop rule
    if full_test > smallest - 3.0 {
        return Err(format!(
            "full-epoch best response {full_test:.2} not ≥3 points below \
             smallest fraction {smallest:.2}"
        ));
    }
    Ok(format!(
        "terminal test {smallest:.1} at 1.71% steps vs {full_test:.1} at 100% \
         (drop {:.1} ≥ 3); 100% terminated on every seed",
        smallest - full_test
    ))
}

// ---------------------------------------------------------------------------
// 09: determinism + schedule-order invariance

fn c09_determinism(ctx: &mut Ctx) -> Result<String, String> {
    // byte-identical re-run through the public runner
    let preset = "table1_f_irm_par";
    let mut opts = ctx.opts(&[1]);
    opts.out_dir = ctx.out_root.join("determinism-a");
    let a = run_preset(preset, &opts).map_err(|e| e.to_string())?;
    opts.out_dir = ctx.out_root.join("determinism-b");
    let b = run_preset(preset, &opts).map_err(|e| e.to_string())?;
    let read = |job: &JobOutcome| -> Result<Vec<u8>, String> {
        std::fs::read(&job.runs[0].trace_path).map_err(|e| e.to_string())
    };
    let (bytes_a, bytes_b) = (read(&a[0])?, read(&b[0])?);
    if bytes_a != bytes_b {
        return Err("re-run trace differs from first run".into());
    }

    // parallel rounds commute over client execution order
    let data = toy_dataset(3, 60, 8, 2);
    let mut cfg = GameConfig::new(Variant::FIrmGames);
    cfg.schedule = Schedule::Parallel;
    cfg.hidden = 6;
    cfg.batch_size = 10;
    let mut st_a = init_state(&cfg, &data, 41).map_err(|e| e.to_string())?;
    let mut st_b = init_state(&cfg, &data, 41).map_err(|e| e.to_string())?;
    let mut rng = Lcg(0xc0ff_ee11_d00d_f00d);
    let mut shuffled = |st: &mut GameState| -> Result<(), String> {
        let mut order = vec![0usize, 1, 2];
        // Fisher-Yates with the probe rng
        for i in (1..order.len()).rev() {
            order.swap(i, rng.below(i + 1));
        }
        parallel_predictor_round_with_order(&cfg, &data, st, &order).map_err(|e| e.to_string())
    };
    for _ in 0..5 {
        shuffled(&mut st_a)?;
        shuffled(&mut st_b)?;
    }
    for k in 0..3 {
        if st_a.clients[k].predictor != st_b.clients[k].predictor {
            return Err(format!("client {k} diverged across execution orders"));
        }
        if *st_a.committed.predictors[k] != *st_b.committed.predictors[k] {
            return Err(format!("committed model {k} diverged across execution orders"));
        }
    }
    Ok(format!(
        "re-run byte-identical ({} bytes); 5 parallel rounds bitwise-equal \
         across randomized execution orders",
        bytes_a.len()
    ))
}

// ---------------------------------------------------------------------------
// 10: ten-class robustness

fn c10_ten_class(ctx: &mut Ctx) -> Result<String, String> {
    let job = ctx.single_job("table5_f_irm_par_10class", &DEFAULT_SEEDS)?;
    let mean = mean_terminal_test_pct(job);
    if (mean - 69.29).abs() > 6.0 {
        return Err(format!("mean terminal test {mean:.2} outside 69.29±6"));
    }
    Ok(format!("mean terminal test {mean:.1} (target 69.29±6)"))
}
