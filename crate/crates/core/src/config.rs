//! Training configuration and its flat `key = value` text form.

use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::tag::SchemeKind;

/// Where the model's input vectors come from. Paths are stored as given.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum EmbeddingMode {
    Static { path: String, dim: usize },
    Contextual { path: String },
    Hashed { dim: usize },
}

impl fmt::Display for EmbeddingMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            EmbeddingMode::Static { path, dim } => write!(f, "static:{dim}:{path}"),
            EmbeddingMode::Contextual { path } => write!(f, "contextual:{path}"),
            EmbeddingMode::Hashed { dim } => write!(f, "hashed:{dim}"),
        }
    }
}

impl FromStr for EmbeddingMode {
    type Err = Error;

    /// `static:<dim>:<path>`, `contextual:<path>` or `hashed:<dim>`.
    fn from_str(s: &str) -> Result<Self> {
        let bad = |why: &str| Error::Argument(format!("embedding mode {s:?}: {why}"));
        let dim = |d: &str| -> Result<usize> {
            match d.parse::<usize>() {
                Ok(n) if n > 0 => Ok(n),
                _ => Err(bad("dimension must be a positive integer")),
            }
        };
        let (kind, rest) = s.split_once(':').ok_or_else(|| bad("missing ':'"))?;
        match kind {
            "static" => {
                let (d, path) = rest.split_once(':').ok_or_else(|| bad("expected static:<dim>:<path>"))?;
                if path.is_empty() {
                    return Err(bad("empty path"));
                }
                Ok(EmbeddingMode::Static {
                    path: path.to_owned(),
                    dim: dim(d)?,
                })
            }
            "contextual" if !rest.is_empty() => Ok(EmbeddingMode::Contextual { path: rest.to_owned() }),
            "contextual" => Err(bad("empty path")),
            "hashed" => Ok(EmbeddingMode::Hashed { dim: dim(rest)? }),
            _ => Err(bad("unknown kind (static, contextual, hashed)")),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub weight_decay: f64,
    pub batch_size: usize,
    pub epochs: usize,
    pub seed: u64,
    pub hidden_dim: usize,
    pub embedding: EmbeddingMode,
    pub adam_beta1: f64,
    pub adam_beta2: f64,
    pub adam_epsilon: f64,
    pub grad_clip_norm: f64,
    pub shuffle: bool,
    /// Inverted dropout on the BiLSTM features during training.
    pub dropout: f64,
    /// Fraction of sentences held out for per-epoch accuracy.
    pub holdout: f64,
    /// Train and tag under this scheme, converting the corpus if needed.
    /// `None` keeps the corpus's own scheme.
    pub scheme: Option<SchemeKind>,
    /// Forbid BIO-invalid transitions when decoding.
    pub bio_constrained: bool,
    /// Write measured wall time into the epoch CSV. Off by default so that
    /// identical runs produce identical files.
    pub record_timing: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            learning_rate: 0.01,
            weight_decay: 1e-4,
            batch_size: 50,
            epochs: 100,
            seed: 1,
            hidden_dim: 200,
            embedding: EmbeddingMode::Hashed { dim: 100 },
            adam_beta1: 0.9,
            adam_beta2: 0.999,
            adam_epsilon: 1e-8,
            grad_clip_norm: 5.0,
            shuffle: true,
            dropout: 0.0,
            holdout: 0.1,
            scheme: None,
            bio_constrained: false,
            record_timing: false,
        }
    }
}

/// Every recognised key, in snapshot order.
pub const KEYS: &[&str] = &[
    "learning_rate",
    "weight_decay",
    "batch_size",
    "epochs",
    "seed",
    "hidden_dim",
    "embedding",
    "adam_beta1",
    "adam_beta2",
    "adam_epsilon",
    "grad_clip_norm",
    "shuffle",
    "dropout",
    "holdout",
    "scheme",
    "bio_constrained",
    "record_timing",
];

fn parse_value<T: FromStr>(key: &str, value: &str) -> Result<T> {
    value
        .parse()
        .map_err(|_| Error::Argument(format!("{key}: cannot parse {value:?}")))
}

fn parse_bool(key: &str, value: &str) -> Result<bool> {
    match value {
        "true" | "yes" | "1" => Ok(true),
        "false" | "no" | "0" => Ok(false),
        _ => Err(Error::Argument(format!("{key}: expected true or false, got {value:?}"))),
    }
}

impl TrainConfig {
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let v = value.trim();
        match key.trim() {
            "learning_rate" => self.learning_rate = parse_value(key, v)?,
            "weight_decay" => self.weight_decay = parse_value(key, v)?,
            "batch_size" => self.batch_size = parse_value(key, v)?,
            "epochs" => self.epochs = parse_value(key, v)?,
            "seed" => self.seed = parse_value(key, v)?,
            "hidden_dim" => self.hidden_dim = parse_value(key, v)?,
            "embedding" => self.embedding = v.parse()?,
            "adam_beta1" => self.adam_beta1 = parse_value(key, v)?,
            "adam_beta2" => self.adam_beta2 = parse_value(key, v)?,
            "adam_epsilon" => self.adam_epsilon = parse_value(key, v)?,
            "grad_clip_norm" => self.grad_clip_norm = parse_value(key, v)?,
            "shuffle" => self.shuffle = parse_bool(key, v)?,
            "dropout" => self.dropout = parse_value(key, v)?,
            "holdout" => self.holdout = parse_value(key, v)?,
            "scheme" => {
                self.scheme = match v {
                    "auto" => None,
                    _ => Some(v.parse()?),
                }
            }
            "bio_constrained" => self.bio_constrained = parse_bool(key, v)?,
            "record_timing" => self.record_timing = parse_bool(key, v)?,
            other => return Err(Error::Argument(format!("unknown configuration key {other:?}"))),
        }
        Ok(())
    }

    /// Every setting as `(key, value)`; feeding these back through
    /// [`TrainConfig::set`] reproduces the config exactly.
    pub fn to_pairs(&self) -> Vec<(&'static str, String)> {
        KEYS.iter()
            .map(|&k| {
                let v = match k {
                    "learning_rate" => self.learning_rate.to_string(),
                    "weight_decay" => self.weight_decay.to_string(),
                    "batch_size" => self.batch_size.to_string(),
                    "epochs" => self.epochs.to_string(),
                    "seed" => self.seed.to_string(),
                    "hidden_dim" => self.hidden_dim.to_string(),
                    "embedding" => self.embedding.to_string(),
                    "adam_beta1" => self.adam_beta1.to_string(),
                    "adam_beta2" => self.adam_beta2.to_string(),
                    "adam_epsilon" => self.adam_epsilon.to_string(),
                    "grad_clip_norm" => self.grad_clip_norm.to_string(),
                    "shuffle" => self.shuffle.to_string(),
                    "dropout" => self.dropout.to_string(),
                    "holdout" => self.holdout.to_string(),
                    "scheme" => self.scheme.map_or("auto".to_owned(), |s| s.to_string()),
                    "bio_constrained" => self.bio_constrained.to_string(),
                    "record_timing" => self.record_timing.to_string(),
                    _ => unreachable!("key list and match out of sync"),
                };
                (k, v)
            })
            .collect()
    }

    pub fn from_pairs<K: AsRef<str>, V: AsRef<str>>(pairs: &[(K, V)]) -> Result<Self> {
        let mut c = TrainConfig::default();
        for (k, v) in pairs {
            c.set(k.as_ref(), v.as_ref())?;
        }
        Ok(c)
    }

    pub fn validate(&self) -> Result<()> {
        let fail = |m: String| Err(Error::Argument(m));
        // a zero rate is allowed: it makes a run that changes nothing
        if !(self.learning_rate >= 0.0 && self.learning_rate.is_finite()) {
            return fail(format!("learning_rate must be finite and >= 0, got {}", self.learning_rate));
        }
        if !(self.weight_decay >= 0.0 && self.weight_decay.is_finite()) {
            return fail(format!("weight_decay must be finite and >= 0, got {}", self.weight_decay));
        }
        if self.batch_size == 0 {
            return fail("batch_size must be at least 1".into());
        }
        if self.epochs == 0 {
            return fail("epochs must be at least 1".into());
        }
        if self.hidden_dim == 0 {
            return fail("hidden_dim must be at least 1".into());
        }
        for (name, b) in [("adam_beta1", self.adam_beta1), ("adam_beta2", self.adam_beta2)] {
            if !(0.0..1.0).contains(&b) {
                return fail(format!("{name} must lie in [0, 1), got {b}"));
            }
        }
        if !(self.adam_epsilon > 0.0) {
            return fail(format!("adam_epsilon must be positive, got {}", self.adam_epsilon));
        }
        if !(self.grad_clip_norm > 0.0) {
            return fail(format!("grad_clip_norm must be positive, got {}", self.grad_clip_norm));
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return fail(format!("dropout must lie in [0, 1), got {}", self.dropout));
        }
        if !(0.0..1.0).contains(&self.holdout) {
            return fail(format!("holdout must lie in [0, 1), got {}", self.holdout));
        }
        Ok(())
    }
}

/// Reads `key = value` lines onto `base`. Blank lines and lines starting
/// with `#` are skipped; unknown keys are errors.
pub fn parse_config(text: &str, base: TrainConfig) -> Result<TrainConfig> {
    let mut c = base;
    for (i, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (k, v) = line.split_once('=').ok_or_else(|| Error::Config {
            line: i + 1,
            message: format!("expected key = value, got {line:?}"),
        })?;
        c.set(k, v).map_err(|e| Error::Config {
            line: i + 1,
            message: e.to_string(),
        })?;
    }
    Ok(c)
}

pub fn render_config(c: &TrainConfig) -> String {
    c.to_pairs()
        .into_iter()
        .map(|(k, v)| format!("{k} = {v}\n"))
        .collect()
}
