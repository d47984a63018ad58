//! Command-line front end: generate corpora, run configs or named presets
//! over seeds, and aggregate results.
//!
//! Exit codes: 0 success, 1 configuration/usage error, 2 data error,
//! 3 a convergence-requiring run hit its round cap without terminating.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use fedgame::config::RunConfig;
use fedgame::data::{cache, synth, BaseDataset, Scale};
use fedgame::error::Error;
use fedgame::presets;
use fedgame::runner::{self, RunnerOptions};

/// Environment variable overriding the default corpus directory.
const DATA_DIR_ENV: &str = "FEDGAME_DATA_DIR";

#[derive(Parser)]
#[command(
    name = "fedgame",
    version,
    about = "Federated best-response game simulator on spurious-feature datasets"
)]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Generate synthetic corpora (and optional decorated dataset caches).
    GenerateData {
        /// Config file whose dataset section selects the corpus.
        #[arg(long)]
        config: Option<PathBuf>,
        /// Preset whose jobs select the corpora.
        #[arg(long)]
        preset: Option<String>,
        /// Also build the decorated datasets and save them as binary caches
        /// into this directory (one file per job and seed).
        #[arg(long)]
        cache_out: Option<PathBuf>,
        #[command(flatten)]
        common: CommonOpts,
    },
    /// Run the experiment described by a config file.
    Run {
        /// INI-style config file (see README for the format).
        #[arg(long)]
        config: PathBuf,
        /// Directory label for outputs under --out (defaults to the config
        /// file stem).
        #[arg(long)]
        label: Option<String>,
        #[command(flatten)]
        common: CommonOpts,
    },
    /// Run a named preset; --list shows the catalog.
    Preset {
        name: Option<String>,
        #[arg(long)]
        list: bool,
        #[command(flatten)]
        common: CommonOpts,
    },
    /// Run a sweep preset (same machinery as `preset`, named for clarity).
    Sweep {
        name: String,
        #[command(flatten)]
        common: CommonOpts,
    },
    /// Verify and aggregate every summary.csv under an output directory.
    Report {
        #[arg(long, default_value = "results")]
        out: PathBuf,
    },
}

#[derive(Args)]
struct CommonOpts {
    /// Comma-separated run seeds (default: 1,2,3,4,5).
    #[arg(long, value_delimiter = ',')]
    seeds: Vec<u64>,
    /// Output directory for trace and summary CSVs.
    #[arg(long, default_value = "results")]
    out: PathBuf,
    /// full: complete corpora; desk: 10% subsample for quick runs.
    #[arg(long, default_value = "full", value_parser = parse_scale)]
    scale: Scale,
    /// Corpus directory (default: $FEDGAME_DATA_DIR or ./data).
    #[arg(long)]
    data_dir: Option<PathBuf>,
}

fn parse_scale(s: &str) -> Result<Scale, String> {
    match s {
        "full" => Ok(Scale::Full),
        "desk" => Ok(Scale::Desk),
        other => Err(format!("scale must be `full` or `desk`, got `{other}`")),
    }
}

impl CommonOpts {
    fn runner_options(&self) -> RunnerOptions {
        let data_dir = self
            .data_dir
            .clone()
            .or_else(|| std::env::var_os(DATA_DIR_ENV).map(PathBuf::from))
            .unwrap_or_else(|| PathBuf::from("data"));
        let seeds = if self.seeds.is_empty() {
            presets::DEFAULT_SEEDS.to_vec()
        } else {
            self.seeds.clone()
        };
        RunnerOptions {
            data_dir,
            out_dir: self.out.clone(),
            scale: self.scale,
            seeds,
            verbose: true,
        }
    }
}

fn print_outcomes(outcomes: &[runner::JobOutcome]) -> fedgame::Result<()> {
    let mut rows = Vec::with_capacity(outcomes.len());
    for o in outcomes {
        rows.push(runner::ReportRow {
            label: o.dir_label.clone(),
            summary: runner::verify_summary(&o.summary_path)?,
        });
    }
    print!("{}", runner::render_report(&rows));
    Ok(())
}

fn generate_data(
    config: Option<PathBuf>,
    preset: Option<String>,
    cache_out: Option<PathBuf>,
    common: &CommonOpts,
) -> fedgame::Result<()> {
    let opts = common.runner_options();
    let jobs: Vec<(String, RunConfig)> = match (&config, &preset) {
        (Some(path), None) => {
            let cfg = RunConfig::from_file(path)?;
            let stem = path.file_stem().and_then(|s| s.to_str()).unwrap_or("config").to_string();
            vec![(stem, cfg)]
        }
        (None, Some(name)) => presets::jobs(name, opts.scale)?
            .into_iter()
            .map(|j| {
                let label = if j.label.is_empty() { name.clone() } else { format!("{name}_{}", j.label) };
                (label, j.config)
            })
            .collect(),
        (None, None) => Vec::new(),
        (Some(_), Some(_)) => {
            return Err(Error::InvalidArgument(
                "pass either --config or --preset, not both".into(),
            ))
        }
    };

    if jobs.is_empty() {
        // no selector: materialize every corpus
        for base in [BaseDataset::Mnist, BaseDataset::FashionMnist, BaseDataset::Cifar10] {
            let (_, generated) = synth::ensure_corpus(&opts.data_dir, base, runner::CORPUS_SEED)?;
            println!(
                "{}: corpus {}",
                base.name(),
                if generated { "generated" } else { "already present" }
            );
        }
        return Ok(());
    }

    for (label, cfg) in &jobs {
        let (corpus, generated) =
            synth::ensure_corpus(&opts.data_dir, cfg.dataset.base, runner::CORPUS_SEED)?;
        println!(
            "{label}: corpus {} ({})",
            cfg.dataset.base.name(),
            if generated { "generated" } else { "already present" }
        );
        if let Some(out) = &cache_out {
            std::fs::create_dir_all(out).map_err(|e| Error::io(out, e))?;
            for &seed in &opts.seeds {
                let ds = runner::dataset_for(cfg, &corpus, seed, opts.scale)?;
                let path =
                    out.join(format!("{label}_seed{seed}_{}.bin", opts.scale.name()));
                cache::save_dataset(&path, &ds)?;
                println!("  wrote {}", path.display());
            }
        }
    }
    Ok(())
}

fn real_main(cli: Cli) -> fedgame::Result<()> {
    match cli.cmd {
        Cmd::GenerateData { config, preset, cache_out, common } => {
            generate_data(config, preset, cache_out, &common)
        }
        Cmd::Run { config, label, common } => {
            let cfg = RunConfig::from_file(&config)?;
            let label = label.unwrap_or_else(|| {
                config.file_stem().and_then(|s| s.to_str()).unwrap_or("run").to_string()
            });
            let outcomes = runner::run_config(&label, &cfg, &common.runner_options())?;
            print_outcomes(&outcomes)
        }
        Cmd::Preset { name, list, common } => {
            if list {
                for p in presets::list() {
                    let aliases = if p.aliases.is_empty() {
                        String::new()
                    } else {
                        format!("  (aliases: {})", p.aliases.join(", "))
                    };
                    println!("{:<28} {}{aliases}", p.name, p.about);
                }
                return Ok(());
            }
            let name = name.ok_or_else(|| {
                Error::InvalidArgument("pass a preset name or --list".into())
            })?;
            let outcomes = runner::run_preset(&name, &common.runner_options())?;
            print_outcomes(&outcomes)
        }
        Cmd::Sweep { name, common } => {
            let outcomes = runner::run_preset(&name, &common.runner_options())?;
            print_outcomes(&outcomes)
        }
        Cmd::Report { out } => {
            let rows = runner::report(&out)?;
            print!("{}", runner::render_report(&rows));
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            // --help/--version land here too; only real usage errors are failures
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match real_main(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
