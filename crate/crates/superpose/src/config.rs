//! Plain-text `key=value` experiment configuration.
//!
//! Lines starting with `#` and blank lines are ignored. Unknown and
//! duplicate keys are rejected so typos can't silently fall back to
//! defaults.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use crate::augment::{MixCoefficient, MixMethod, PairPolicy};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DatasetKind {
    Mnist,
    AudioDir,
    Smfx,
}

impl DatasetKind {
    pub fn name(&self) -> &'static str {
        match self {
            DatasetKind::Mnist => "mnist",
            DatasetKind::AudioDir => "audio-dir",
            DatasetKind::Smfx => "smfx",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ModelKind {
    Lstm,
    Hmm,
}

impl ModelKind {
    pub fn name(&self) -> &'static str {
        match self {
            ModelKind::Lstm => "lstm",
            ModelKind::Hmm => "hmm",
        }
    }
}

/// Augmentation selector; `None` trains on the raw subset.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Method {
    None,
    Mixup,
    QuantumMix,
    Superposition,
    Density,
}

impl Method {
    pub fn name(&self) -> &'static str {
        match self {
            Method::None => "none",
            Method::Mixup => "mixup",
            Method::QuantumMix => "quantum_mix",
            Method::Superposition => "superposition",
            Method::Density => "density",
        }
    }

    pub fn parse(s: &str) -> Result<Method> {
        match s {
            "none" => Ok(Method::None),
            "mixup" => Ok(Method::Mixup),
            "quantum_mix" => Ok(Method::QuantumMix),
            "superposition" => Ok(Method::Superposition),
            "density" => Ok(Method::Density),
            _ => Err(Error::Config(format!("unknown method '{s}'"))),
        }
    }

    /// The mixing formula behind each augmenting method.
    pub fn mix_method(&self) -> Option<MixMethod> {
        match self {
            Method::None => None,
            Method::Mixup => Some(MixMethod::Mixup),
            Method::QuantumMix => Some(MixMethod::QuantumMix),
            Method::Superposition => Some(MixMethod::SuperposeSample),
            Method::Density => Some(MixMethod::SuperposeDensity),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub dataset: DatasetKind,
    pub data_path: PathBuf,
    /// Keep only the first N samples of the training data; None keeps all.
    pub sample_cap: Option<usize>,
    pub method: Method,
    pub model: ModelKind,
    pub lambda_sq: Vec<f64>,
    pub pair_policy: PairPolicy,
    pub include_originals: bool,
    /// 0 means one mixed sample per source sample, per lambda.
    pub pairs_per_lambda: usize,
    pub split_fraction: f64,
    pub val_fraction: f64,
    pub seed: u64,
    pub output_dir: PathBuf,
    pub n_classes: usize,
    // LSTM hyperparameters.
    pub hidden: [usize; 3],
    pub embed_dim: usize,
    pub seq_len: Option<usize>,
    pub learning_rate: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub clip_norm: Option<f64>,
    // HMM hyperparameters.
    pub n_states: usize,
    pub hmm_iters: usize,
    pub hmm_tol: f64,
}

impl ExperimentConfig {
    /// Mixing coefficients validated into the unit interval.
    pub fn lambda_set(&self) -> Result<Vec<MixCoefficient>> {
        self.lambda_sq.iter().map(|&l| MixCoefficient::new(l)).collect()
    }

    fn validate(&self) -> Result<()> {
        if self.method == Method::Density && self.model == ModelKind::Hmm {
            return Err(Error::Config(
                "method=density requires model=lstm".into(),
            ));
        }
        if self.model == ModelKind::Hmm
            && self.method != Method::None
            && self.pair_policy != PairPolicy::IntraClass
        {
            return Err(Error::Config(
                "model=hmm augmentation requires pair_policy=intra (labels must stay one-hot)"
                    .into(),
            ));
        }
        if self.method == Method::Density && self.embed_dim != 64 {
            return Err(Error::Config(format!(
                "method=density requires embed_dim=64, got {}",
                self.embed_dim
            )));
        }
        if !(self.split_fraction > 0.0 && self.split_fraction < 1.0) {
            return Err(Error::Config(format!(
                "split_fraction {} not in (0, 1)",
                self.split_fraction
            )));
        }
        if self.val_fraction < 0.0 || self.val_fraction >= 1.0 {
            return Err(Error::Config(format!(
                "val_fraction {} not in [0, 1)",
                self.val_fraction
            )));
        }
        if self.lambda_sq.is_empty() {
            return Err(Error::Config("lambda_sq must be non-empty".into()));
        }
        self.lambda_set()?;
        if self.n_classes == 0 {
            return Err(Error::Config("n_classes must be positive".into()));
        }
        Ok(())
    }

    /// Canonical one-line-per-field rendering, used for provenance hashing.
    pub fn canonical_string(&self) -> String {
        let lambda: Vec<String> = self.lambda_sq.iter().map(|l| format!("{l}")).collect();
        let mut s = String::new();
        let mut push = |k: &str, v: String| {
            s.push_str(k);
            s.push('=');
            s.push_str(&v);
            s.push('\n');
        };
        push("dataset", self.dataset.name().into());
        push("data_path", self.data_path.display().to_string());
        push(
            "sample_cap",
            self.sample_cap.map_or("all".into(), |n| n.to_string()),
        );
        push("method", self.method.name().into());
        push("model", self.model.name().into());
        push("lambda_sq", lambda.join(","));
        push(
            "pair_policy",
            match self.pair_policy {
                PairPolicy::IntraClass => "intra".into(),
                PairPolicy::InterClass => "inter".into(),
                PairPolicy::Both => "both".into(),
            },
        );
        push("include_originals", self.include_originals.to_string());
        push("pairs_per_lambda", self.pairs_per_lambda.to_string());
        push("split_fraction", self.split_fraction.to_string());
        push("val_fraction", self.val_fraction.to_string());
        push("seed", self.seed.to_string());
        push("output_dir", self.output_dir.display().to_string());
        push("n_classes", self.n_classes.to_string());
        push(
            "hidden",
            format!("{},{},{}", self.hidden[0], self.hidden[1], self.hidden[2]),
        );
        push("embed_dim", self.embed_dim.to_string());
        push(
            "seq_len",
            self.seq_len.map_or("auto".into(), |n| n.to_string()),
        );
        push("learning_rate", self.learning_rate.to_string());
        push("epochs", self.epochs.to_string());
        push("batch_size", self.batch_size.to_string());
        push(
            "clip_norm",
            self.clip_norm.map_or("none".into(), |c| c.to_string()),
        );
        push("n_states", self.n_states.to_string());
        push("hmm_iters", self.hmm_iters.to_string());
        push("hmm_tol", self.hmm_tol.to_string());
        s
    }
}

const KNOWN_KEYS: &[&str] = &[
    "dataset",
    "data_path",
    "sample_cap",
    "method",
    "model",
    "lambda_sq",
    "pair_policy",
    "include_originals",
    "pairs_per_lambda",
    "split_fraction",
    "val_fraction",
    "seed",
    "output_dir",
    "n_classes",
    "hidden",
    "embed_dim",
    "seq_len",
    "learning_rate",
    "epochs",
    "batch_size",
    "clip_norm",
    "n_states",
    "hmm_iters",
    "hmm_tol",
];

const REQUIRED_KEYS: &[&str] = &["dataset", "data_path", "method", "output_dir"];

fn parse_num<T: std::str::FromStr>(key: &str, v: &str) -> Result<T> {
    v.parse()
        .map_err(|_| Error::Config(format!("key '{key}': cannot parse '{v}'")))
}

fn parse_bool(key: &str, v: &str) -> Result<bool> {
    match v {
        "true" => Ok(true),
        "false" => Ok(false),
        _ => Err(Error::Config(format!(
            "key '{key}': expected true or false, got '{v}'"
        ))),
    }
}

pub fn parse_config_str(text: &str) -> Result<ExperimentConfig> {
    let mut kv: BTreeMap<&str, &str> = BTreeMap::new();
    for (lineno, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (key, value) = line.split_once('=').ok_or_else(|| {
            Error::Config(format!("line {}: expected key=value", lineno + 1))
        })?;
        let (key, value) = (key.trim(), value.trim());
        if !KNOWN_KEYS.contains(&key) {
            return Err(Error::Config(format!("unknown key '{key}'")));
        }
        if kv.insert(key, value).is_some() {
            return Err(Error::Config(format!("duplicate key '{key}'")));
        }
    }
    let missing: Vec<&str> = REQUIRED_KEYS
        .iter()
        .filter(|k| !kv.contains_key(*k))
        .copied()
        .collect();
    if !missing.is_empty() {
        return Err(Error::Config(format!(
            "missing required keys: {}",
            missing.join(", ")
        )));
    }

    let dataset = match kv["dataset"] {
        "mnist" => DatasetKind::Mnist,
        "audio-dir" => DatasetKind::AudioDir,
        "smfx" => DatasetKind::Smfx,
        other => return Err(Error::Config(format!("unknown dataset '{other}'"))),
    };
    let method = Method::parse(kv["method"])?;
    let model = match kv.get("model").copied().unwrap_or("lstm") {
        "lstm" => ModelKind::Lstm,
        "hmm" => ModelKind::Hmm,
        other => return Err(Error::Config(format!("unknown model '{other}'"))),
    };
    let lambda_sq = match kv.get("lambda_sq") {
        None => vec![1.0, 0.2, 0.5, 0.8],
        Some(v) => v
            .split(',')
            .map(|s| parse_num("lambda_sq", s.trim()))
            .collect::<Result<_>>()?,
    };
    let pair_policy = match kv.get("pair_policy").copied() {
        None => {
            // HMM per-class fits need one-hot labels, so augmentation
            // defaults to same-class pairs there.
            if model == ModelKind::Hmm {
                PairPolicy::IntraClass
            } else {
                PairPolicy::Both
            }
        }
        Some("intra") => PairPolicy::IntraClass,
        Some("inter") => PairPolicy::InterClass,
        Some("both") => PairPolicy::Both,
        Some(other) => return Err(Error::Config(format!("unknown pair_policy '{other}'"))),
    };
    let hidden = match kv.get("hidden") {
        None => [64, 64, 64],
        Some(v) => {
            let parts: Vec<usize> = v
                .split(',')
                .map(|s| parse_num("hidden", s.trim()))
                .collect::<Result<_>>()?;
            if parts.len() != 3 {
                return Err(Error::Config(format!(
                    "key 'hidden': expected 3 sizes, got {}",
                    parts.len()
                )));
            }
            [parts[0], parts[1], parts[2]]
        }
    };
    let opt = |key: &str| kv.get(key).copied();

    let cfg = ExperimentConfig {
        dataset,
        data_path: PathBuf::from(kv["data_path"]),
        sample_cap: opt("sample_cap").map(|v| parse_num("sample_cap", v)).transpose()?,
        method,
        model,
        lambda_sq,
        pair_policy,
        include_originals: opt("include_originals")
            .map(|v| parse_bool("include_originals", v))
            .transpose()?
            .unwrap_or(true),
        pairs_per_lambda: opt("pairs_per_lambda")
            .map(|v| parse_num("pairs_per_lambda", v))
            .transpose()?
            .unwrap_or(0),
        split_fraction: opt("split_fraction")
            .map(|v| parse_num("split_fraction", v))
            .transpose()?
            .unwrap_or(0.2),
        val_fraction: opt("val_fraction")
            .map(|v| parse_num("val_fraction", v))
            .transpose()?
            .unwrap_or(0.1),
        seed: opt("seed").map(|v| parse_num("seed", v)).transpose()?.unwrap_or(42),
        output_dir: PathBuf::from(kv["output_dir"]),
        n_classes: opt("n_classes")
            .map(|v| parse_num("n_classes", v))
            .transpose()?
            .unwrap_or(10),
        hidden,
        embed_dim: opt("embed_dim")
            .map(|v| parse_num("embed_dim", v))
            .transpose()?
            .unwrap_or(64),
        seq_len: opt("seq_len").map(|v| parse_num("seq_len", v)).transpose()?,
        learning_rate: opt("learning_rate")
            .map(|v| parse_num("learning_rate", v))
            .transpose()?
            .unwrap_or(1e-3),
        epochs: opt("epochs").map(|v| parse_num("epochs", v)).transpose()?.unwrap_or(30),
        batch_size: opt("batch_size")
            .map(|v| parse_num("batch_size", v))
            .transpose()?
            .unwrap_or(32),
        clip_norm: opt("clip_norm").map(|v| parse_num("clip_norm", v)).transpose()?,
        n_states: opt("n_states")
            .map(|v| parse_num("n_states", v))
            .transpose()?
            .unwrap_or(5),
        hmm_iters: opt("hmm_iters")
            .map(|v| parse_num("hmm_iters", v))
            .transpose()?
            .unwrap_or(20),
        hmm_tol: opt("hmm_tol")
            .map(|v| parse_num("hmm_tol", v))
            .transpose()?
            .unwrap_or(1e-4),
    };
    cfg.validate()?;
    Ok(cfg)
}

pub fn parse_config(path: &Path) -> Result<ExperimentConfig> {
    let text = std::fs::read_to_string(path)?;
    parse_config_str(&text)
}
