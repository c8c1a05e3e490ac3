//! Flat `key = value` run configuration.
//!
//! One setting per line, `#` starts a comment, blank lines are ignored.
//! Every key can also be given as a flag (`batch_size` becomes
//! `--batch-size`); flags override the file, the file overrides the
//! defaults in [`KEYS`]. Unknown keys, duplicate keys, unparsable values
//! and out-of-range values are errors that name the key.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use endreg::data::{DatasetSpec, Dims, Generator};
use endreg::net::{Architecture, ClassifierInput, OptimizerConfig, OptimizerKind};
use endreg::trainer::TrainConfig;
use endreg::EndConfig;

use crate::error::CliError;

pub struct Key {
    pub name: &'static str,
    /// Empty means "unset" (optional path, or derived from other keys).
    pub default: &'static str,
    pub help: &'static str,
}

const fn key(name: &'static str, default: &'static str, help: &'static str) -> Key {
    Key { name, default, help }
}

pub const KEYS: &[Key] = &[
    key("generator", "colored_patterns", "colored_patterns | gaussian_clusters | injected_idx"),
    key("n_samples", "10000", "training samples to generate"),
    key("n_targets", "10", "target classes T"),
    key("n_biases", "10", "bias classes B"),
    key("rho", "0.995", "probability of the class-aligned bias"),
    key("height", "16", "image height"),
    key("width", "16", "image width"),
    key("channels", "3", "image channels"),
    key("dim", "16", "vector dimension for gaussian clusters"),
    key("data_seed", "1", "dataset seed"),
    key("n_test", "2000", "samples per generated test split"),
    key("palette", "", "palette file, one `R G B` line per color"),
    key("train_data", "", "ENDD training set (instead of generating one)"),
    key("biased_data", "", "ENDD biased test set"),
    key("unbiased_data", "", "ENDD unbiased test set"),
    key("conflicting_data", "", "ENDD bias-conflicting test set"),
    key("idx_images", "", "IDX training images (injected_idx)"),
    key("idx_labels", "", "IDX training labels (injected_idx)"),
    key("idx_test_images", "", "IDX test images (injected_idx)"),
    key("idx_test_labels", "", "IDX test labels (injected_idx)"),
    key("epochs", "30", "training epochs"),
    key("batch_size", "64", "minibatch size M"),
    key("optimizer", "adam", "adam | sgd | momentum"),
    key("lr", "0.001", "learning rate"),
    key("momentum", "0.9", "momentum coefficient (optimizer = momentum)"),
    key("alpha", "", "disentangling weight; default depends on the data kind"),
    key("beta", "", "entangling weight; default depends on the data kind"),
    key("classifier", "normalized", "normalized | raw classifier input (image data)"),
    key("hidden", "32", "hidden width of the vector-data MLP"),
    key("seed", "0", "training seed"),
    key("seeds", "0,1,2", "comma-separated seeds for ablate"),
    key("eval_every", "1", "evaluate held-out splits every this many epochs"),
    key("checkpoint", "", "model checkpoint for eval (default: <out_dir>/model.endm)"),
    key("eval_data", "", "ENDD dataset for eval"),
    key("gradcheck_instances", "20", "random batches for gradcheck"),
    key("out_dir", "out", "output directory"),
];

/// Keys holding input paths that must exist when set.
const INPUT_PATHS: &[&str] = &[
    "palette",
    "train_data",
    "biased_data",
    "unbiased_data",
    "conflicting_data",
    "idx_images",
    "idx_labels",
    "idx_test_images",
    "idx_test_labels",
    "checkpoint",
    "eval_data",
];

pub fn flag_name(key: &str) -> String {
    key.replace('_', "-")
}

/// Parses file text into raw key/value pairs.
pub fn parse_text(text: &str) -> Result<BTreeMap<String, String>, CliError> {
    let mut out = BTreeMap::new();
    for (n, line) in text.lines().enumerate() {
        let line = line.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let Some((k, v)) = line.split_once('=') else {
            return Err(CliError::config(line, format!("line {}: expected `key = value`", n + 1)));
        };
        let (k, v) = (k.trim(), v.trim());
        if !KEYS.iter().any(|key| key.name == k) {
            return Err(CliError::config(k, "unknown key"));
        }
        if out.insert(k.to_string(), v.to_string()).is_some() {
            return Err(CliError::config(k, format!("line {}: duplicate key", n + 1)));
        }
    }
    Ok(out)
}

/// Effective settings: defaults, then `file`, then `flags`.
#[derive(Clone, Debug)]
pub struct RawConfig {
    values: BTreeMap<String, String>,
}

impl RawConfig {
    pub fn merge(file: BTreeMap<String, String>, flags: BTreeMap<String, String>) -> Result<Self, CliError> {
        let mut values: BTreeMap<String, String> =
            KEYS.iter().map(|k| (k.name.to_string(), k.default.to_string())).collect();
        for (k, v) in file.into_iter().chain(flags) {
            if !values.contains_key(&k) {
                return Err(CliError::config(&k, "unknown key"));
            }
            values.insert(k, v);
        }
        Ok(Self { values })
    }

    pub fn values(&self) -> &BTreeMap<String, String> {
        &self.values
    }

    fn raw(&self, key: &str) -> &str {
        self.values.get(key).map(String::as_str).unwrap_or("")
    }

    fn parse<T: std::str::FromStr>(&self, key: &str, what: &str) -> Result<T, CliError> {
        self.raw(key)
            .parse()
            .map_err(|_| CliError::config(key, format!("expected {what}, got `{}`", self.raw(key))))
    }

    fn usize_at_least(&self, key: &str, min: usize) -> Result<usize, CliError> {
        let v: usize = self.parse(key, "a non-negative integer")?;
        if v < min {
            return Err(CliError::config(key, format!("must be >= {min}, got {v}")));
        }
        Ok(v)
    }

    fn float(&self, key: &str) -> Result<f64, CliError> {
        let v: f64 = self.parse(key, "a number")?;
        if !v.is_finite() {
            return Err(CliError::config(key, "must be finite"));
        }
        Ok(v)
    }

    fn non_negative(&self, key: &str) -> Result<Option<f64>, CliError> {
        if self.raw(key).is_empty() {
            return Ok(None);
        }
        let v = self.float(key)?;
        if v < 0.0 {
            return Err(CliError::config(key, format!("must be >= 0, got {v}")));
        }
        Ok(Some(v))
    }

    fn path(&self, key: &str) -> Option<PathBuf> {
        let v = self.raw(key);
        (!v.is_empty()).then(|| PathBuf::from(v))
    }
}

#[derive(Clone, Debug)]
pub struct RunConfig {
    pub spec: DatasetSpec,
    pub n_test: usize,
    pub palette: Option<PathBuf>,
    pub train_data: Option<PathBuf>,
    pub biased_data: Option<PathBuf>,
    pub unbiased_data: Option<PathBuf>,
    pub conflicting_data: Option<PathBuf>,
    /// Training and test IDX pools, `(images, labels)`.
    pub idx_train: Option<(PathBuf, PathBuf)>,
    pub idx_test: Option<(PathBuf, PathBuf)>,
    pub epochs: usize,
    pub batch_size: usize,
    pub optimizer: OptimizerConfig,
    pub alpha: Option<f64>,
    pub beta: Option<f64>,
    pub classifier: ClassifierInput,
    pub hidden: usize,
    pub seed: u64,
    pub seeds: Vec<u64>,
    pub eval_every: usize,
    pub checkpoint: PathBuf,
    pub eval_data: Option<PathBuf>,
    pub gradcheck_instances: usize,
    pub out_dir: PathBuf,
    /// Every effective key, for the summary report.
    pub echo: BTreeMap<String, String>,
}

impl RunConfig {
    pub fn from_raw(raw: &RawConfig) -> Result<Self, CliError> {
        for &key in INPUT_PATHS {
            if let Some(p) = raw.path(key) {
                if !p.exists() {
                    return Err(CliError::config(key, format!("file not found: {}", p.display())));
                }
            }
        }
        let generator = match raw.raw("generator") {
            "colored_patterns" => Generator::ColoredPatterns,
            "gaussian_clusters" => Generator::GaussianClusters,
            "injected_idx" => Generator::InjectedIdx,
            other => return Err(CliError::config("generator", format!("unknown generator `{other}`"))),
        };
        let rho = raw.float("rho")?;
        if !(0.0..=1.0).contains(&rho) {
            return Err(CliError::config("rho", format!("must lie in [0, 1], got {rho}")));
        }
        let dims = match generator {
            Generator::GaussianClusters => Dims::Vector(raw.usize_at_least("dim", 2)?),
            _ => Dims::Image {
                height: raw.usize_at_least("height", 1)?,
                width: raw.usize_at_least("width", 1)?,
                channels: raw.usize_at_least("channels", 1)?,
            },
        };
        let spec = DatasetSpec {
            n_samples: raw.usize_at_least("n_samples", 1)?,
            n_targets: raw.usize_at_least("n_targets", 1)?,
            n_biases: raw.usize_at_least("n_biases", 1)?,
            rho,
            generator,
            dims,
            seed: raw.parse("data_seed", "an unsigned integer")?,
        };
        let lr = raw.float("lr")?;
        if lr <= 0.0 {
            return Err(CliError::config("lr", format!("must be > 0, got {lr}")));
        }
        let kind = match raw.raw("optimizer") {
            "adam" => OptimizerKind::adam(),
            "sgd" => OptimizerKind::Sgd,
            "momentum" => OptimizerKind::Momentum {
                momentum: raw.float("momentum")?,
            },
            other => return Err(CliError::config("optimizer", format!("unknown optimizer `{other}`"))),
        };
        let classifier = match raw.raw("classifier") {
            "normalized" => ClassifierInput::Normalized,
            "raw" => ClassifierInput::Raw,
            other => return Err(CliError::config("classifier", format!("expected normalized or raw, got `{other}`"))),
        };
        let seeds = raw
            .raw("seeds")
            .split(',')
            .map(|s| s.trim().parse::<u64>())
            .collect::<Result<Vec<_>, _>>()
            .map_err(|_| CliError::config("seeds", format!("expected comma-separated integers, got `{}`", raw.raw("seeds"))))?;
        let pair = |a: &str, b: &str| -> Result<Option<(PathBuf, PathBuf)>, CliError> {
            match (raw.path(a), raw.path(b)) {
                (Some(x), Some(y)) => Ok(Some((x, y))),
                (None, None) => Ok(None),
                (None, Some(_)) => Err(CliError::config(a, format!("required together with {b}"))),
                (Some(_), None) => Err(CliError::config(b, format!("required together with {a}"))),
            }
        };
        let out_dir = PathBuf::from(raw.raw("out_dir"));
        Ok(Self {
            spec,
            n_test: raw.usize_at_least("n_test", 1)?,
            palette: raw.path("palette"),
            train_data: raw.path("train_data"),
            biased_data: raw.path("biased_data"),
            unbiased_data: raw.path("unbiased_data"),
            conflicting_data: raw.path("conflicting_data"),
            idx_train: pair("idx_images", "idx_labels")?,
            idx_test: pair("idx_test_images", "idx_test_labels")?,
            epochs: raw.usize_at_least("epochs", 1)?,
            batch_size: raw.usize_at_least("batch_size", 2)?,
            optimizer: OptimizerConfig { kind, lr },
            alpha: raw.non_negative("alpha")?,
            beta: raw.non_negative("beta")?,
            classifier,
            hidden: raw.usize_at_least("hidden", 1)?,
            seed: raw.parse("seed", "an unsigned integer")?,
            seeds,
            eval_every: raw.usize_at_least("eval_every", 1)?,
            checkpoint: raw.path("checkpoint").unwrap_or_else(|| out_dir.join("model.endm")),
            eval_data: raw.path("eval_data"),
            gradcheck_instances: raw.usize_at_least("gradcheck_instances", 1)?,
            out_dir,
            echo: raw.values().clone(),
        })
    }

    /// Training settings for data described by `spec`; unset weights take
    /// the trainer defaults for the data kind.
    pub fn train_config(&self, spec: &DatasetSpec) -> Result<TrainConfig, CliError> {
        let mut cfg = TrainConfig::for_spec(spec)?;
        cfg.architecture = match spec.dims {
            Dims::Image { height, width, channels } => {
                Architecture::desk_conv_with(channels, height, width, spec.n_targets, self.classifier)?
            }
            Dims::Vector(d) => Architecture::mlp(d, &[self.hidden], spec.n_targets)?,
        };
        cfg.epochs = self.epochs;
        cfg.batch_size = self.batch_size;
        cfg.optimizer = self.optimizer;
        cfg.end = EndConfig {
            alpha: self.alpha.unwrap_or(cfg.end.alpha),
            beta: self.beta.unwrap_or(cfg.end.beta),
            ..cfg.end
        };
        cfg.seed = self.seed;
        cfg.eval_every = self.eval_every;
        Ok(cfg)
    }

    pub fn out_path(&self, name: &str) -> PathBuf {
        self.out_dir.join(name)
    }
}

pub fn read_file(path: &Path) -> Result<BTreeMap<String, String>, CliError> {
    let text = std::fs::read_to_string(path).map_err(|e| CliError::config("config", format!("{}: {e}", path.display())))?;
    parse_text(&text)
}
