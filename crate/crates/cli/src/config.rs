//! Flat `key = value` run configuration with a closed schema.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use hetinfomax::encoder::Activation;
use hetinfomax::evalkit::SplitFractions;
use hetinfomax::objective::TrainConfig;
use hetinfomax::seeding::{derive_seed, stream};

/// `(key, default, description)` for every accepted key, in echo order.
pub const SCHEMA: &[(&str, &str, &str)] = &[
    ("dataset", "", "dataset directory (nodes.tsv, edges.tsv, metapaths.txt, features)"),
    ("metapaths", "", "comma-separated meta-path names to use; empty uses all"),
    ("split_metapath", "", "meta-path whose edges are held out; empty uses the first"),
    ("target_type", "", "target node type; empty infers it from the meta-paths"),
    ("raw_features", "false", "skip row L2 normalisation of features"),
    ("val_fraction", "0.05", "fraction of edges held out for validation"),
    ("test_fraction", "0.1", "fraction of edges held out for testing"),
    ("split_seed", "auto", "edge split seed; auto derives it from seed"),
    ("out", "", "output directory"),
    ("theta", "0.5", "weight of the global term, in [0, 1]"),
    ("embed_dim", "16", "embedding width, divisible by heads"),
    ("heads", "4", "attention heads per meta-path"),
    ("semantic_dim", "128", "hidden width of the semantic attention"),
    ("activation", "elu", "attention layer output activation: elu, leaky_relu or tanh"),
    ("clusters", "3", "number of soft clusters"),
    ("beta", "100", "assignment sharpness"),
    ("kmeans_iters", "10", "soft k-means iterations per epoch"),
    ("literal_sign", "false", "assign with softmax(-beta * cos) instead of softmax(beta * cos)"),
    ("bilinear", "false", "score pairs through a learned d x d matrix"),
    ("resample_corruption", "true", "draw a fresh feature shuffle every epoch"),
    ("learning_rate", "0.001", "Adam step size"),
    ("max_epochs", "1000", "epoch limit"),
    ("patience", "20", "epochs without improvement before stopping"),
    ("seed", "0", "base seed for initialisation, corruption and clustering"),
];

#[derive(Debug, thiserror::Error, PartialEq)]
pub enum ConfigError {
    #[error("unknown config key `{0}`")]
    UnknownKey(String),
    #[error("bad value `{value}` for `{key}`: {reason}")]
    BadValue { key: String, value: String, reason: String },
    #[error("{path}:{line}: {message}")]
    Syntax { path: String, line: usize, message: String },
    #[error("{0}")]
    Invalid(String),
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub dataset: Option<PathBuf>,
    pub metapaths: Vec<String>,
    pub split_metapath: Option<String>,
    pub target_type: Option<String>,
    pub raw_features: bool,
    pub fractions: SplitFractions,
    pub split_seed: Option<u64>,
    pub out: Option<PathBuf>,
    pub train: TrainConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        let mut c = Self {
            dataset: None,
            metapaths: Vec::new(),
            split_metapath: None,
            target_type: None,
            raw_features: false,
            fractions: SplitFractions::default(),
            split_seed: None,
            out: None,
            train: TrainConfig::default(),
        };
        for (k, v, _) in SCHEMA {
            c.set(k, v).expect("schema defaults parse");
        }
        c
    }
}

fn parse<T: std::str::FromStr>(key: &str, value: &str) -> Result<T, ConfigError>
where
    T::Err: std::fmt::Display,
{
    value.parse().map_err(|e: T::Err| ConfigError::BadValue {
        key: key.to_string(),
        value: value.to_string(),
        reason: e.to_string(),
    })
}

fn non_empty(value: &str) -> Option<String> {
    (!value.is_empty()).then(|| value.to_string())
}

impl RunConfig {
    pub fn set(&mut self, key: &str, value: &str) -> Result<(), ConfigError> {
        let value = value.trim();
        let t = &mut self.train;
        match key {
            "dataset" => self.dataset = non_empty(value).map(PathBuf::from),
            "metapaths" => {
                self.metapaths = value
                    .split(',')
                    .map(str::trim)
                    .filter(|s| !s.is_empty())
                    .map(String::from)
                    .collect()
            }
            "split_metapath" => self.split_metapath = non_empty(value),
            "target_type" => self.target_type = non_empty(value),
            "raw_features" => self.raw_features = parse(key, value)?,
            "val_fraction" => self.fractions.val = parse(key, value)?,
            "test_fraction" => self.fractions.test = parse(key, value)?,
            "split_seed" => {
                self.split_seed = match value {
                    "auto" => None,
                    v => Some(parse(key, v)?),
                }
            }
            "out" => self.out = non_empty(value).map(PathBuf::from),
            "theta" => t.theta = parse(key, value)?,
            "embed_dim" => t.embed_dim = parse(key, value)?,
            "heads" => t.heads = parse(key, value)?,
            "semantic_dim" => t.semantic_dim = parse(key, value)?,
            "activation" => t.activation = parse::<Activation>(key, value)?,
            "clusters" => t.clusters = parse(key, value)?,
            "beta" => t.beta = parse(key, value)?,
            "kmeans_iters" => t.kmeans_iters = parse(key, value)?,
            "literal_sign" => t.literal_sign = parse(key, value)?,
            "bilinear" => t.bilinear = parse(key, value)?,
            "resample_corruption" => t.resample_corruption = parse(key, value)?,
            "learning_rate" => t.learning_rate = parse(key, value)?,
            "max_epochs" => t.max_epochs = parse(key, value)?,
            "patience" => t.patience = parse(key, value)?,
            "seed" => t.seed = parse(key, value)?,
            other => return Err(ConfigError::UnknownKey(other.to_string())),
        }
        Ok(())
    }

    /// Current value of `key` in the textual form [`RunConfig::set`] accepts.
    pub fn get(&self, key: &str) -> Option<String> {
        let t = &self.train;
        let path = |p: &Option<PathBuf>| p.as_ref().map(|p| p.display().to_string()).unwrap_or_default();
        Some(match key {
            "dataset" => path(&self.dataset),
            "metapaths" => self.metapaths.join(","),
            "split_metapath" => self.split_metapath.clone().unwrap_or_default(),
            "target_type" => self.target_type.clone().unwrap_or_default(),
            "raw_features" => self.raw_features.to_string(),
            "val_fraction" => self.fractions.val.to_string(),
            "test_fraction" => self.fractions.test.to_string(),
            "split_seed" => self.split_seed.map_or("auto".into(), |s| s.to_string()),
            "out" => path(&self.out),
            "theta" => t.theta.to_string(),
            "embed_dim" => t.embed_dim.to_string(),
            "heads" => t.heads.to_string(),
            "semantic_dim" => t.semantic_dim.to_string(),
            "activation" => t.activation.to_string(),
            "clusters" => t.clusters.to_string(),
            "beta" => t.beta.to_string(),
            "kmeans_iters" => t.kmeans_iters.to_string(),
            "literal_sign" => t.literal_sign.to_string(),
            "bilinear" => t.bilinear.to_string(),
            "resample_corruption" => t.resample_corruption.to_string(),
            "learning_rate" => t.learning_rate.to_string(),
            "max_epochs" => t.max_epochs.to_string(),
            "patience" => t.patience.to_string(),
            "seed" => t.seed.to_string(),
            _ => return None,
        })
    }

    /// Applies `key = value` lines; `#` starts a comment.
    pub fn apply_text(&mut self, text: &str, origin: &str) -> Result<(), ConfigError> {
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let syntax = |message: String| ConfigError::Syntax {
                path: origin.to_string(),
                line: i + 1,
                message,
            };
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| syntax("expected `key = value`".into()))?;
            self.set(k.trim(), v).map_err(|e| syntax(e.to_string()))?;
        }
        Ok(())
    }

    pub fn from_file(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|e| ConfigError::Invalid(format!("cannot read config {}: {e}", path.display())))?;
        let mut c = Self::default();
        c.apply_text(&text, &path.display().to_string())?;
        // relative dataset paths are taken relative to the config file
        if let (Some(ds), Some(dir)) = (&c.dataset, path.parent()) {
            if ds.is_relative() {
                c.dataset = Some(dir.join(ds));
            }
        }
        Ok(c)
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        self.train.validate().map_err(|e| ConfigError::Invalid(e.to_string()))?;
        let f = self.fractions;
        if !(f.val >= 0.0 && f.test >= 0.0 && f.val + f.test < 1.0) {
            return Err(ConfigError::Invalid("split fractions must be non-negative and sum below 1".into()));
        }
        Ok(())
    }

    pub fn effective_split_seed(&self) -> u64 {
        self.split_seed.unwrap_or_else(|| derive_seed(self.train.seed, stream::SPLIT))
    }

    /// Every key with its effective value, one `key = value` per line.
    pub fn render(&self) -> String {
        let mut out = String::new();
        for (k, _, _) in SCHEMA {
            let _ = writeln!(out, "{k} = {}", self.get(k).expect("schema key"));
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults() {
        let c = RunConfig::default();
        assert_eq!(c.train, TrainConfig::default());
        assert_eq!(c.fractions, SplitFractions::default());
        assert!(c.validate().is_ok());
    }

    #[test]
    fn render_round_trips() {
        let mut c = RunConfig::default();
        c.set("theta", "0.3").unwrap();
        c.set("metapaths", "A, B").unwrap();
        c.set("split_seed", "9").unwrap();
        let mut again = RunConfig::default();
        again.apply_text(&c.render(), "echo").unwrap();
        assert_eq!(again, c);
    }

    #[test]
    fn unknown_keys_and_bad_values() {
        let mut c = RunConfig::default();
        assert_eq!(c.set("thta", "1"), Err(ConfigError::UnknownKey("thta".into())));
        assert!(matches!(c.set("heads", "two"), Err(ConfigError::BadValue { .. })));
        let err = c.apply_text("seed = 1\n\nnoise\n", "f.cfg").unwrap_err();
        assert!(matches!(err, ConfigError::Syntax { line: 3, .. }));
        c.set("theta", "1.5").unwrap();
        assert!(c.validate().is_err());
    }

    #[test]
    fn schema_is_complete() {
        let c = RunConfig::default();
        for (k, _, _) in SCHEMA {
            assert!(c.get(k).is_some(), "{k}");
        }
    }
}
