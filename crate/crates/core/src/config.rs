//! Plain-text run configuration.
//!
//! A strict INI dialect: `[section]` headers, `key = value` lines, and
//! full-line `#`/`;` comments. Unknown sections, unknown keys, duplicate
//! keys, and malformed values are all errors that name their line. Every
//! config can be rendered back to text; parsing a rendered config
//! reproduces it exactly.

use std::fmt::Write as _;
use std::path::Path;

use crate::data::{BaseDataset, SplitPlan, SpuriousDatasetSpec, SpuriousMechanism};
use crate::error::{Error, Result};
use crate::game::{
    BaselineLocalWork, EnsembleNorm, EvalConfig, GameConfig, LocalSteps, Schedule, Variant,
};
use crate::metrics::{TerminationConfig, WarmStart};

/// Everything one run needs: what data to decorate and how to train on it.
#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub dataset: SpuriousDatasetSpec,
    pub game: GameConfig,
}

fn cfg_err(line: usize, msg: impl Into<String>) -> Error {
    Error::Config { line, msg: msg.into() }
}

fn p_usize(line: usize, key: &str, v: &str) -> Result<usize> {
    v.parse().map_err(|_| cfg_err(line, format!("`{key}` expects an unsigned integer, got `{v}`")))
}

fn p_f64(line: usize, key: &str, v: &str) -> Result<f64> {
    let x: f64 =
        v.parse().map_err(|_| cfg_err(line, format!("`{key}` expects a number, got `{v}`")))?;
    if !x.is_finite() {
        return Err(cfg_err(line, format!("`{key}` must be finite")));
    }
    Ok(x)
}

fn p_bool(line: usize, key: &str, v: &str) -> Result<bool> {
    match v {
        "true" => Ok(true),
        "false" => Ok(false),
        _ => Err(cfg_err(line, format!("`{key}` expects true or false, got `{v}`"))),
    }
}

fn p_f64_list(line: usize, key: &str, v: &str) -> Result<Vec<f64>> {
    v.split(',').map(|part| p_f64(line, key, part.trim())).collect()
}

fn p_base(line: usize, v: &str) -> Result<BaseDataset> {
    match v {
        "mnist" => Ok(BaseDataset::Mnist),
        "fashion_mnist" => Ok(BaseDataset::FashionMnist),
        "cifar10" => Ok(BaseDataset::Cifar10),
        _ => Err(cfg_err(line, format!("unknown base dataset `{v}`"))),
    }
}

fn p_local_steps(line: usize, v: &str) -> Result<LocalSteps> {
    if v == "full" {
        return Ok(LocalSteps::Fraction(1.0));
    }
    if let Some(f) = v.strip_prefix("fraction:") {
        return Ok(LocalSteps::Fraction(p_f64(line, "local_steps", f.trim())?));
    }
    Ok(LocalSteps::Steps(p_usize(line, "local_steps", v)?))
}

fn p_fedavg_local(line: usize, v: &str) -> Result<BaselineLocalWork> {
    if let Some(n) = v.strip_prefix("epochs:") {
        return Ok(BaselineLocalWork::Epochs(p_usize(line, "fedavg_local", n.trim())?));
    }
    if let Some(n) = v.strip_prefix("steps:") {
        return Ok(BaselineLocalWork::Steps(p_usize(line, "fedavg_local", n.trim())?));
    }
    Err(cfg_err(line, format!("`fedavg_local` expects epochs:N or steps:N, got `{v}`")))
}

const SECTIONS: [&str; 4] = ["dataset", "run", "termination", "eval"];

impl RunConfig {
    pub fn parse_str(text: &str) -> Result<RunConfig> {
        // tokenize
        let mut section = String::new();
        let mut pairs: Vec<(usize, String, String, String)> = Vec::new();
        for (i, raw) in text.lines().enumerate() {
            let line_no = i + 1;
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') || line.starts_with(';') {
                continue;
            }
            if let Some(rest) = line.strip_prefix('[') {
                let name = rest
                    .strip_suffix(']')
                    .ok_or_else(|| cfg_err(line_no, "unterminated section header"))?
                    .trim();
                if !SECTIONS.contains(&name) {
                    return Err(cfg_err(line_no, format!("unknown section `{name}`")));
                }
                section = name.to_string();
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| cfg_err(line_no, "expected `key = value`"))?;
            if section.is_empty() {
                return Err(cfg_err(line_no, "key before any [section] header"));
            }
            let (k, v) = (k.trim().to_string(), v.trim().to_string());
            if let Some((dup, ..)) =
                pairs.iter().find(|(_, s, pk, _)| *s == section && *pk == k)
            {
                return Err(cfg_err(
                    line_no,
                    format!("duplicate key `{k}` in [{section}] (first at line {dup})"),
                ));
            }
            pairs.push((line_no, section.clone(), k, v));
        }

        // reject unknown keys before anything else, so the first diagnostic
        // points at the actual typo rather than a knock-on missing key
        const KNOWN: &[(&str, &[&str])] = &[
            (
                "dataset",
                &["base", "classes", "clients", "label_noise", "client_spurious", "test_spurious", "split"],
            ),
            (
                "run",
                &[
                    "variant",
                    "schedule",
                    "rounds",
                    "batch_size",
                    "lr_predictor",
                    "lr_phi",
                    "buffer_capacity",
                    "local_steps",
                    "ensemble_norm",
                    "phi_plain_sgd",
                    "fedavg_local",
                    "hidden",
                    "require_convergence",
                ],
            ),
            ("termination", &["train_acc_threshold", "warm_start"]),
            ("eval", &["train_cap", "train_every", "test_every"]),
        ];
        for (line, sec, key, _) in &pairs {
            let ok = KNOWN
                .iter()
                .any(|(s, keys)| s == sec && keys.contains(&key.as_str()));
            if !ok {
                return Err(cfg_err(*line, format!("unknown key `{key}` in [{sec}]")));
            }
        }

        // required anchors
        let base = pairs
            .iter()
            .find(|(_, s, k, _)| s == "dataset" && k == "base")
            .map(|(l, _, _, v)| p_base(*l, v))
            .transpose()?
            .ok_or_else(|| Error::ConfigGeneral("missing required key dataset.base".into()))?;
        let variant = pairs
            .iter()
            .find(|(_, s, k, _)| s == "run" && k == "variant")
            .map(|(l, _, _, v)| {
                Variant::parse(v).map_err(|e| cfg_err(*l, e.to_string()))
            })
            .transpose()?
            .ok_or_else(|| Error::ConfigGeneral("missing required key run.variant".into()))?;

        let mut dataset = SpuriousDatasetSpec::standard(base);
        let mut game = GameConfig::new(variant);
        let mut explicit_spurious = false;
        let mut term_threshold: Option<f64> = None;
        let mut term_warm = WarmStart::Auto;
        let mut saw_termination = false;
        let mut eval = EvalConfig::default();

        for (line, sec, key, v) in &pairs {
            let (line, v) = (*line, v.as_str());
            match (sec.as_str(), key.as_str()) {
                ("dataset", "base") => {} // consumed above
                ("dataset", "classes") => {
                    let c = p_usize(line, "classes", v)?;
                    if !(1..=255).contains(&c) {
                        return Err(cfg_err(line, "`classes` must be in 1..=255"));
                    }
                    dataset.classes = c as u8;
                }
                ("dataset", "clients") => {
                    let n = p_usize(line, "clients", v)?;
                    if n == 0 {
                        return Err(cfg_err(line, "`clients` must be positive"));
                    }
                    dataset.n_clients = n;
                }
                ("dataset", "label_noise") => {
                    let x = p_f64(line, "label_noise", v)?;
                    if !(0.0..1.0).contains(&x) {
                        return Err(cfg_err(line, "`label_noise` must be in [0,1)"));
                    }
                    dataset.label_noise = x;
                }
                ("dataset", "client_spurious") => {
                    explicit_spurious = true;
                    dataset.client_spurious_p = if v == "linspace" {
                        Vec::new() // resolved after `clients` is known
                    } else {
                        let list = p_f64_list(line, "client_spurious", v)?;
                        if list.iter().any(|p| !(0.0..=1.0).contains(p)) {
                            return Err(cfg_err(line, "spurious probabilities must be in [0,1]"));
                        }
                        list
                    };
                }
                ("dataset", "test_spurious") => {
                    let x = p_f64(line, "test_spurious", v)?;
                    if !(0.0..=1.0).contains(&x) {
                        return Err(cfg_err(line, "`test_spurious` must be in [0,1]"));
                    }
                    dataset.test_spurious_p = x;
                }
                ("dataset", "split") => {
                    dataset.split = if v == "even" {
                        SplitPlan::Even
                    } else {
                        SplitPlan::Proportions(p_f64_list(line, "split", v)?)
                    };
                }
                ("run", "variant") => {} // consumed above
                ("run", "schedule") => {
                    game.schedule =
                        Schedule::parse(v).map_err(|e| cfg_err(line, e.to_string()))?;
                }
                ("run", "rounds") => game.max_rounds = p_usize(line, "rounds", v)?,
                ("run", "batch_size") => game.batch_size = p_usize(line, "batch_size", v)?,
                ("run", "lr_predictor") => game.lr_predictor = p_f64(line, "lr_predictor", v)?,
                ("run", "lr_phi") => game.lr_phi = p_f64(line, "lr_phi", v)?,
                ("run", "buffer_capacity") => {
                    game.buffer_capacity = p_usize(line, "buffer_capacity", v)?
                }
                ("run", "local_steps") => game.local_steps = p_local_steps(line, v)?,
                ("run", "ensemble_norm") => {
                    game.ensemble_norm =
                        EnsembleNorm::parse(v).map_err(|e| cfg_err(line, e.to_string()))?;
                }
                ("run", "phi_plain_sgd") => game.phi_plain_sgd = p_bool(line, "phi_plain_sgd", v)?,
                ("run", "require_convergence") => {
                    game.require_convergence = p_bool(line, "require_convergence", v)?
                }
                ("run", "fedavg_local") => game.fedavg_local = p_fedavg_local(line, v)?,
                ("run", "hidden") => game.hidden = p_usize(line, "hidden", v)?,
                ("termination", "train_acc_threshold") => {
                    saw_termination = true;
                    term_threshold = Some(p_f64(line, "train_acc_threshold", v)?);
                }
                ("termination", "warm_start") => {
                    saw_termination = true;
                    term_warm = if v == "auto" {
                        WarmStart::Auto
                    } else {
                        WarmStart::Rounds(p_usize(line, "warm_start", v)?)
                    };
                }
                ("eval", "train_cap") => eval.train_cap = p_usize(line, "train_cap", v)?,
                ("eval", "train_every") => eval.train_every = p_usize(line, "train_every", v)?,
                ("eval", "test_every") => eval.test_every = p_usize(line, "test_every", v)?,
                (sec, key) => {
                    return Err(cfg_err(line, format!("unknown key `{key}` in [{sec}]")))
                }
            }
        }

        // client count and spurious probabilities must agree; when the list
        // was not given explicitly, derive the standard one for the count
        if !explicit_spurious || dataset.client_spurious_p.is_empty() {
            dataset.client_spurious_p = if dataset.n_clients == 2 {
                vec![0.2, 0.1]
            } else if dataset.n_clients == 1 {
                vec![0.2]
            } else {
                crate::data::linspace(0.3, 0.1, dataset.n_clients)
            };
        }
        // the mechanism always follows the base corpus
        dataset.mechanism = match dataset.base {
            BaseDataset::Cifar10 => SpuriousMechanism::Patch,
            _ => SpuriousMechanism::Color,
        };

        if saw_termination {
            let threshold = term_threshold.ok_or_else(|| {
                Error::ConfigGeneral(
                    "[termination] requires train_acc_threshold".into(),
                )
            })?;
            game.termination =
                Some(TerminationConfig { train_acc_threshold: threshold, warm_start: term_warm });
        }
        game.eval = eval;

        dataset.validate().map_err(|e| Error::ConfigGeneral(e.to_string()))?;
        game.validate().map_err(|e| Error::ConfigGeneral(e.to_string()))?;
        Ok(RunConfig { dataset, game })
    }

    pub fn from_file(path: impl AsRef<Path>) -> Result<RunConfig> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse_str(&text)
    }

    /// Canonical text form; `parse_str(render(c)) == c` for every valid `c`.
    pub fn render(&self) -> String {
        fn join(xs: &[f64]) -> String {
            xs.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(",")
        }
        let mut s = String::new();
        let d = &self.dataset;
        writeln!(s, "[dataset]").unwrap();
        writeln!(s, "base = {}", d.base.name()).unwrap();
        writeln!(s, "classes = {}", d.classes).unwrap();
        writeln!(s, "clients = {}", d.n_clients).unwrap();
        writeln!(s, "label_noise = {}", d.label_noise).unwrap();
        writeln!(s, "client_spurious = {}", join(&d.client_spurious_p)).unwrap();
        writeln!(s, "test_spurious = {}", d.test_spurious_p).unwrap();
        match &d.split {
            SplitPlan::Even => writeln!(s, "split = even").unwrap(),
            SplitPlan::Proportions(p) => writeln!(s, "split = {}", join(p)).unwrap(),
        }
        let g = &self.game;
        writeln!(s, "\n[run]").unwrap();
        writeln!(s, "variant = {}", g.variant.name()).unwrap();
        writeln!(s, "schedule = {}", g.schedule.name()).unwrap();
        writeln!(s, "rounds = {}", g.max_rounds).unwrap();
        writeln!(s, "batch_size = {}", g.batch_size).unwrap();
        writeln!(s, "lr_predictor = {}", g.lr_predictor).unwrap();
        writeln!(s, "lr_phi = {}", g.lr_phi).unwrap();
        writeln!(s, "buffer_capacity = {}", g.buffer_capacity).unwrap();
        match g.local_steps {
            LocalSteps::Steps(n) => writeln!(s, "local_steps = {n}").unwrap(),
            LocalSteps::Fraction(f) if f >= 1.0 => writeln!(s, "local_steps = full").unwrap(),
            LocalSteps::Fraction(f) => writeln!(s, "local_steps = fraction:{f}").unwrap(),
        }
        writeln!(s, "ensemble_norm = {}", g.ensemble_norm.name()).unwrap();
        writeln!(s, "phi_plain_sgd = {}", g.phi_plain_sgd).unwrap();
        match g.fedavg_local {
            BaselineLocalWork::Epochs(n) => writeln!(s, "fedavg_local = epochs:{n}").unwrap(),
            BaselineLocalWork::Steps(n) => writeln!(s, "fedavg_local = steps:{n}").unwrap(),
        }
        writeln!(s, "hidden = {}", g.hidden).unwrap();
        if let Some(t) = &g.termination {
            writeln!(s, "\n[termination]").unwrap();
            writeln!(s, "train_acc_threshold = {}", t.train_acc_threshold).unwrap();
            match t.warm_start {
                WarmStart::Auto => writeln!(s, "warm_start = auto").unwrap(),
                WarmStart::Rounds(r) => writeln!(s, "warm_start = {r}").unwrap(),
            }
        }
        writeln!(s, "\n[eval]").unwrap();
        writeln!(s, "train_cap = {}", g.eval.train_cap).unwrap();
        writeln!(s, "train_every = {}", g.eval.train_every).unwrap();
        writeln!(s, "test_every = {}", g.eval.test_every).unwrap();
        s
    }
}
