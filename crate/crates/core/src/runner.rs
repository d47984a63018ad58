//! Run orchestration: corpus and dataset resolution, multi-seed execution of
//! named presets or ad-hoc configs, deterministic trace CSVs, and summary
//! aggregation with verifiable statistics.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use crate::config::RunConfig;
use crate::data::{
    build_federated_dataset_stages, synth, BaseCorpus, FederatedDataset, Scale,
};
use crate::error::{Error, Result};
use crate::game::{run_experiment, ExperimentResult};
use crate::metrics::{mean_std, RoundRecord};
use crate::presets::{self, PresetJob};

/// Seed for the synthetic stand-in corpora. A shared constant, not the run
/// seed: every run draws from the same base image pool the way real runs
/// share one downloaded corpus. Per-run variation enters through the split
/// shuffle, label pipeline, and initialization streams.
pub const CORPUS_SEED: u64 = 7;

#[derive(Debug, Clone)]
pub struct RunnerOptions {
    /// Where corpora live (generated on first use).
    pub data_dir: PathBuf,
    /// Where trace and summary CSVs are written.
    pub out_dir: PathBuf,
    pub scale: Scale,
    pub seeds: Vec<u64>,
    /// Print one progress line per finished seed.
    pub verbose: bool,
}

#[derive(Debug)]
pub struct SeedRun {
    pub seed: u64,
    pub result: ExperimentResult,
    pub trace_path: PathBuf,
}

#[derive(Debug)]
pub struct JobOutcome {
    /// Directory name under `out_dir` holding this job's files.
    pub dir_label: String,
    pub config: RunConfig,
    pub runs: Vec<SeedRun>,
    pub summary_path: PathBuf,
}

/// Load (or generate on first use) the base corpus for a spec.
pub fn corpus_for(config: &RunConfig, data_dir: &Path) -> Result<BaseCorpus> {
    let (corpus, _generated) = synth::ensure_corpus(data_dir, config.dataset.base, CORPUS_SEED)?;
    Ok(corpus)
}

/// Build the decorated federated dataset for one run seed.
pub fn dataset_for(
    config: &RunConfig,
    corpus: &BaseCorpus,
    seed: u64,
    scale: Scale,
) -> Result<FederatedDataset> {
    Ok(build_federated_dataset_stages(&config.dataset, corpus, seed, scale)?.0)
}

/// Render a trace as CSV. `wall_ms` is zeroed so re-runs are byte-identical.
pub fn trace_csv(records: &[RoundRecord]) -> String {
    let mut out = String::from("round,phase,train_acc,test_acc,comm_rounds,client_updates,wall_ms\n");
    for r in records {
        writeln!(
            out,
            "{},{},{},{},{},{},0",
            r.round,
            r.phase.name(),
            r.train_acc,
            r.test_acc,
            r.comm_rounds,
            r.client_updates
        )
        .expect("string write cannot fail");
    }
    out
}

fn opt_cell(v: Option<usize>) -> String {
    v.map(|r| r.to_string()).unwrap_or_default()
}

fn float_cell(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

/// Render the per-seed summary with trailing mean and std rows. The
/// rounds-to-equilibrium statistics cover converged seeds only; their cells
/// stay empty when no seed converged.
pub fn summary_csv(runs: &[SeedRun]) -> String {
    let mut out = String::from(
        "seed,terminal_train_acc,terminal_test_acc,rounds_to_equilibrium,comm_rounds,client_updates\n",
    );
    for r in runs {
        writeln!(
            out,
            "{},{},{},{},{},{}",
            r.seed,
            r.result.terminal_train_acc,
            r.result.terminal_test_acc,
            opt_cell(r.result.rounds_to_equilibrium),
            r.result.comm_rounds,
            r.result.client_updates
        )
        .expect("string write cannot fail");
    }
    let train: Vec<f64> = runs.iter().map(|r| r.result.terminal_train_acc).collect();
    let test: Vec<f64> = runs.iter().map(|r| r.result.terminal_test_acc).collect();
    let eq: Vec<f64> = runs
        .iter()
        .filter_map(|r| r.result.rounds_to_equilibrium.map(|v| v as f64))
        .collect();
    let comm: Vec<f64> = runs.iter().map(|r| r.result.comm_rounds as f64).collect();
    let upd: Vec<f64> = runs.iter().map(|r| r.result.client_updates as f64).collect();
    let (tr_m, tr_s) = mean_std(&train);
    let (te_m, te_s) = mean_std(&test);
    let eq_stats = if eq.is_empty() { None } else { Some(mean_std(&eq)) };
    let (cm_m, cm_s) = mean_std(&comm);
    let (up_m, up_s) = mean_std(&upd);
    writeln!(
        out,
        "mean,{},{},{},{},{}",
        tr_m,
        te_m,
        float_cell(eq_stats.map(|s| s.0)),
        cm_m,
        up_m
    )
    .expect("string write cannot fail");
    writeln!(
        out,
        "std,{},{},{},{},{}",
        tr_s,
        te_s,
        float_cell(eq_stats.map(|s| s.1)),
        cm_s,
        up_s
    )
    .expect("string write cannot fail");
    out
}

fn write_file(path: &Path, contents: &str) -> Result<()> {
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
    }
    fs::write(path, contents).map_err(|e| Error::io(path, e))
}

/// Run one job across all seeds, writing `seed{N}.csv` traces and a
/// `summary.csv` into `out_dir/dir_label/`.
pub fn run_job(
    dir_label: &str,
    job: &PresetJob,
    corpus: &BaseCorpus,
    opts: &RunnerOptions,
) -> Result<JobOutcome> {
    let job_dir = opts.out_dir.join(dir_label);
    let mut runs = Vec::with_capacity(opts.seeds.len());
    for &seed in &opts.seeds {
        let data = dataset_for(&job.config, corpus, seed, opts.scale)?;
        let result = run_experiment(&job.config.game, &data, seed)?;
        if job.config.game.require_convergence && result.rounds_to_equilibrium.is_none() {
            return Err(Error::DidNotConverge(dir_label.to_string()));
        }
        if opts.verbose {
            println!(
                "{dir_label} seed {seed}: train {:.4} test {:.4} rounds_to_eq {} comm {} ({} ms)",
                result.terminal_train_acc,
                result.terminal_test_acc,
                result
                    .rounds_to_equilibrium
                    .map(|r| r.to_string())
                    .unwrap_or_else(|| "-".into()),
                result.comm_rounds,
                result.wall_ms_total
            );
        }
        let trace_path = job_dir.join(format!("seed{seed}.csv"));
        write_file(&trace_path, &trace_csv(&result.trace))?;
        runs.push(SeedRun { seed, result, trace_path });
    }
    let summary_path = job_dir.join("summary.csv");
    write_file(&summary_path, &summary_csv(&runs))?;
    Ok(JobOutcome { dir_label: dir_label.to_string(), config: job.config.clone(), runs, summary_path })
}

/// Run every job of a named preset. Sweep jobs land in
/// `out_dir/{preset}/{label}/`, single jobs in `out_dir/{preset}/`.
pub fn run_preset(name: &str, opts: &RunnerOptions) -> Result<Vec<JobOutcome>> {
    let preset = presets::resolve(name)?;
    let jobs = presets::jobs(preset.name, opts.scale)?;
    let mut outcomes = Vec::with_capacity(jobs.len());
    for job in &jobs {
        let dir_label = if job.label.is_empty() {
            preset.name.to_string()
        } else {
            format!("{}/{}", preset.name, job.label)
        };
        let corpus = corpus_for(&job.config, &opts.data_dir)?;
        outcomes.push(run_job(&dir_label, job, &corpus, opts)?);
    }
    Ok(outcomes)
}

/// Run an ad-hoc config under an arbitrary directory label.
pub fn run_config(dir_label: &str, config: &RunConfig, opts: &RunnerOptions) -> Result<Vec<JobOutcome>> {
    let job = PresetJob { label: String::new(), config: config.clone() };
    let corpus = corpus_for(config, &opts.data_dir)?;
    Ok(vec![run_job(dir_label, &job, &corpus, opts)?])
}

/// One parsed summary file.
#[derive(Debug, Clone)]
pub struct SummaryFile {
    /// (seed, terminal_train_acc, terminal_test_acc, rounds_to_equilibrium)
    pub seed_rows: Vec<(u64, f64, f64, Option<usize>)>,
    pub mean_train: f64,
    pub std_train: f64,
    pub mean_test: f64,
    pub std_test: f64,
    pub mean_eq: Option<f64>,
    pub std_eq: Option<f64>,
}

fn parse_f64(cell: &str, path: &Path) -> Result<f64> {
    cell.parse::<f64>()
        .map_err(|_| Error::data(path, format!("malformed numeric cell `{cell}`")))
}

/// Parse a summary CSV written by [`summary_csv`].
pub fn read_summary(path: &Path) -> Result<SummaryFile> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut seed_rows = Vec::new();
    let mut mean_row: Option<Vec<String>> = None;
    let mut std_row: Option<Vec<String>> = None;
    for (i, line) in text.lines().enumerate() {
        if i == 0 {
            continue; // header
        }
        let cells: Vec<String> = line.split(',').map(str::to_string).collect();
        if cells.len() != 6 {
            return Err(Error::data(path, format!("row {} has {} cells, want 6", i + 1, cells.len())));
        }
        match cells[0].as_str() {
            "mean" => mean_row = Some(cells),
            "std" => std_row = Some(cells),
            seed => {
                let seed: u64 = seed
                    .parse()
                    .map_err(|_| Error::data(path, format!("bad seed cell on row {}", i + 1)))?;
                let eq = if cells[3].is_empty() {
                    None
                } else {
                    Some(cells[3].parse::<usize>().map_err(|_| {
                        Error::data(path, format!("bad rounds cell on row {}", i + 1))
                    })?)
                };
                seed_rows.push((seed, parse_f64(&cells[1], path)?, parse_f64(&cells[2], path)?, eq));
            }
        }
    }
    let mean_row = mean_row.ok_or_else(|| Error::data(path, "missing mean row"))?;
    let std_row = std_row.ok_or_else(|| Error::data(path, "missing std row"))?;
    let opt = |cell: &str| -> Result<Option<f64>> {
        if cell.is_empty() { Ok(None) } else { parse_f64(cell, path).map(Some) }
    };
    Ok(SummaryFile {
        seed_rows,
        mean_train: parse_f64(&mean_row[1], path)?,
        std_train: parse_f64(&std_row[1], path)?,
        mean_test: parse_f64(&mean_row[2], path)?,
        std_test: parse_f64(&std_row[2], path)?,
        mean_eq: opt(&mean_row[3])?,
        std_eq: opt(&std_row[3])?,
    })
}

/// Recompute a summary's statistics from its own per-seed rows and demand
/// agreement to 1e-12 (CSV floats round-trip exactly, so honest files match
/// bitwise). Returns the parsed summary on success.
pub fn verify_summary(path: &Path) -> Result<SummaryFile> {
    let s = read_summary(path)?;
    if s.seed_rows.is_empty() {
        return Err(Error::data(path, "summary has no seed rows"));
    }
    let train: Vec<f64> = s.seed_rows.iter().map(|r| r.1).collect();
    let test: Vec<f64> = s.seed_rows.iter().map(|r| r.2).collect();
    let eq: Vec<f64> = s.seed_rows.iter().filter_map(|r| r.3.map(|v| v as f64)).collect();
    let (tr_m, tr_s) = mean_std(&train);
    let (te_m, te_s) = mean_std(&test);
    let mut checks = vec![
        (tr_m, s.mean_train, "mean train"),
        (tr_s, s.std_train, "std train"),
        (te_m, s.mean_test, "mean test"),
        (te_s, s.std_test, "std test"),
    ];
    if !eq.is_empty() {
        let (eq_m, eq_s) = mean_std(&eq);
        let got_m = s.mean_eq.ok_or_else(|| Error::data(path, "missing mean rounds cell"))?;
        let got_s = s.std_eq.ok_or_else(|| Error::data(path, "missing std rounds cell"))?;
        checks.push((eq_m, got_m, "mean rounds"));
        checks.push((eq_s, got_s, "std rounds"));
    }
    for (want, got, what) in checks {
        if (want - got).abs() > 1e-12 {
            return Err(Error::data(
                path,
                format!("{what} disagrees with recomputation: file {got}, recomputed {want}"),
            ));
        }
    }
    Ok(s)
}

/// A verified summary found under an output directory.
#[derive(Debug)]
pub struct ReportRow {
    pub label: String,
    pub summary: SummaryFile,
}

fn collect_summaries(dir: &Path, prefix: &str, rows: &mut Vec<ReportRow>) -> Result<()> {
    let entries = fs::read_dir(dir).map_err(|e| Error::io(dir, e))?;
    let mut paths: Vec<PathBuf> = entries
        .filter_map(|e| e.ok().map(|e| e.path()))
        .collect();
    paths.sort();
    for path in paths {
        let name = path.file_name().and_then(|n| n.to_str()).unwrap_or("").to_string();
        if path.is_dir() {
            let nested = if prefix.is_empty() { name } else { format!("{prefix}/{name}") };
            collect_summaries(&path, &nested, rows)?;
        } else if name == "summary.csv" {
            rows.push(ReportRow { label: prefix.to_string(), summary: verify_summary(&path)? });
        }
    }
    Ok(())
}

/// Walk an output directory, verify every summary against recomputation, and
/// return the aggregated rows sorted by label.
pub fn report(out_dir: &Path) -> Result<Vec<ReportRow>> {
    let mut rows = Vec::new();
    collect_summaries(out_dir, "", &mut rows)?;
    if rows.is_empty() {
        return Err(Error::data(out_dir, "no summary.csv files found"));
    }
    Ok(rows)
}

/// Render report rows as an aligned text table.
pub fn render_report(rows: &[ReportRow]) -> String {
    let mut out = String::new();
    writeln!(out, "{:<40} {:>8} {:>18} {:>18} {:>16}", "run", "seeds", "train acc", "test acc", "rounds to eq")
        .expect("string write cannot fail");
    for row in rows {
        let s = &row.summary;
        let eq = match (s.mean_eq, s.std_eq) {
            (Some(m), Some(sd)) => format!("{m:.1} ± {sd:.1}"),
            _ => "-".to_string(),
        };
        writeln!(
            out,
            "{:<40} {:>8} {:>18} {:>18} {:>16}",
            row.label,
            s.seed_rows.len(),
            format!("{:.2} ± {:.2}", 100.0 * s.mean_train, 100.0 * s.std_train),
            format!("{:.2} ± {:.2}", 100.0 * s.mean_test, 100.0 * s.std_test),
            eq
        )
        .expect("string write cannot fail");
    }
    out
}
