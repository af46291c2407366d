//! Run configuration: flat `key = value` text files plus flag overrides.
//!
//! Lines are `key = value`; blank lines and lines starting with `#` are
//! ignored. Relative paths in a file are resolved against the file's
//! directory, relative paths given as overrides against the working
//! directory. All paths are stored absolute, so the echoed configuration
//! reproduces the run from anywhere.

use std::collections::BTreeSet;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use anyhow::{anyhow, bail, Context, Result};
use rtucker_core::{BilinearModel, FilterSplits, InitConfig, ModelKind, TiePolicy, TrainConfig};

/// Every recognised key, in echo order.
pub const KEYS: &[&str] = &[
    "model",
    "d_e",
    "d_r",
    "data_dir",
    "train",
    "valid",
    "test",
    "filter_splits",
    "tie",
    "output_dir",
    "seed",
    "learning_rate",
    "weight_decay",
    "dropout",
    "num_negatives",
    "batch_size",
    "lambda",
    "warmup_epochs",
    "patience",
    "max_epochs",
    "softmax",
    "adagrad_eps",
    "record_time",
    "embedding_std",
    "core_std",
];

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub model: ModelKind,
    pub entity_dim: usize,
    pub relation_dim: usize,
    /// Directory holding `train.txt`, `valid.txt` and `test.txt`.
    pub data_dir: Option<PathBuf>,
    pub train: Option<PathBuf>,
    pub valid: Option<PathBuf>,
    pub test: Option<PathBuf>,
    pub filter_splits: FilterSplits,
    pub tie: TiePolicy,
    pub output_dir: PathBuf,
    pub training: TrainConfig,
    pub init: InitConfig,
    /// Keys assigned by a file or an override, as opposed to defaults.
    explicit: BTreeSet<String>,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            model: ModelKind::Drt,
            entity_dim: 32,
            relation_dim: 8,
            data_dir: None,
            train: None,
            valid: None,
            test: None,
            filter_splits: FilterSplits::default(),
            tie: TiePolicy::default(),
            output_dir: PathBuf::from("run"),
            training: TrainConfig::default(),
            init: InitConfig::default(),
            explicit: BTreeSet::new(),
        }
    }
}

/// Resolved locations of the three splits.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DataPaths {
    pub train: PathBuf,
    pub valid: PathBuf,
    pub test: PathBuf,
}

impl DataPaths {
    pub fn all(&self) -> [PathBuf; 3] {
        [self.train.clone(), self.valid.clone(), self.test.clone()]
    }
}

fn parse<T: std::str::FromStr>(key: &str, value: &str) -> Result<T>
where
    T::Err: std::fmt::Display,
{
    value
        .parse()
        .map_err(|e| anyhow!("invalid value `{value}` for `{key}`: {e}"))
}

fn resolve(path: &str, base: Option<&Path>) -> Result<PathBuf> {
    let p = Path::new(path);
    let joined = match base {
        Some(dir) if p.is_relative() => dir.join(p),
        _ => p.to_path_buf(),
    };
    std::path::absolute(&joined).with_context(|| format!("cannot resolve path {}", joined.display()))
}

impl RunConfig {
    /// Reads a configuration file on top of the defaults.
    pub fn from_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("cannot read config {}", path.display()))?;
        let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
        let mut cfg = RunConfig::default();
        cfg.apply_text(&text, Some(&base))
            .with_context(|| format!("in config {}", path.display()))?;
        Ok(cfg)
    }

    pub fn apply_text(&mut self, text: &str, base: Option<&Path>) -> Result<()> {
        for (n, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| anyhow!("line {}: expected `key = value`, got `{line}`", n + 1))?;
            self.set_with_base(key.trim(), value.trim(), base)
                .with_context(|| format!("line {}", n + 1))?;
        }
        Ok(())
    }

    /// Applies one `key=value` override; relative paths resolve against the
    /// working directory.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        self.set_with_base(key, value, None)
    }

    /// Applies a `key=value` string as given on the command line.
    pub fn set_pair(&mut self, pair: &str) -> Result<()> {
        let (key, value) = pair
            .split_once('=')
            .ok_or_else(|| anyhow!("override `{pair}` is not of the form key=value"))?;
        self.set(key.trim(), value.trim())
    }

    fn set_with_base(&mut self, key: &str, value: &str, base: Option<&Path>) -> Result<()> {
        let t = &mut self.training;
        match key {
            "model" => self.model = parse(key, value)?,
            "d_e" => self.entity_dim = parse(key, value)?,
            "d_r" => self.relation_dim = parse(key, value)?,
            "data_dir" => self.data_dir = Some(resolve(value, base)?),
            "train" => self.train = Some(resolve(value, base)?),
            "valid" => self.valid = Some(resolve(value, base)?),
            "test" => self.test = Some(resolve(value, base)?),
            "filter_splits" => self.filter_splits = parse(key, value)?,
            "tie" => self.tie = parse(key, value)?,
            "output_dir" => self.output_dir = resolve(value, base)?,
            "seed" => t.seed = parse(key, value)?,
            "learning_rate" => t.learning_rate = parse(key, value)?,
            "weight_decay" => t.weight_decay = parse(key, value)?,
            "dropout" => t.dropout = parse(key, value)?,
            "num_negatives" => t.num_negatives = parse(key, value)?,
            "batch_size" => t.batch_size = parse(key, value)?,
            "lambda" => t.l0.lambda = parse(key, value)?,
            "warmup_epochs" => t.l0.warmup_epochs = parse(key, value)?,
            "patience" => t.patience = parse(key, value)?,
            "max_epochs" => t.max_epochs = parse(key, value)?,
            "softmax" => t.softmax = parse(key, value)?,
            "adagrad_eps" => t.adagrad_eps = parse(key, value)?,
            "record_time" => t.record_time = parse(key, value)?,
            "embedding_std" => self.init.embedding_std = parse(key, value)?,
            "core_std" => self.init.core_std = parse(key, value)?,
            other => bail!("unknown configuration key `{other}`"),
        }
        self.explicit.insert(key.to_owned());
        Ok(())
    }

    pub fn is_explicit(&self, key: &str) -> bool {
        self.explicit.contains(key)
    }

    /// Checks every parameter against the preconditions of the library
    /// before any data is touched.
    pub fn validate(&self) -> Result<()> {
        if self.entity_dim == 0 || self.relation_dim == 0 {
            bail!(
                "d_e and d_r must be positive (got d_e={}, d_r={})",
                self.entity_dim,
                self.relation_dim
            );
        }
        if let ModelKind::Bilinear(kind) = &self.model {
            let kind = match kind {
                rtucker_core::BilinearKind::Analogy(layout) if layout.0.is_empty() => {
                    rtucker_core::BilinearKind::Analogy(rtucker_core::AnalogyLayout::default_for(self.entity_dim))
                }
                other => other.clone(),
            };
            BilinearModel::new(kind, self.entity_dim)?;
        }
        self.training.validate()?;
        for (name, std) in [
            ("embedding_std", self.init.embedding_std),
            ("core_std", self.init.core_std),
        ] {
            if !(std > 0.0 && std.is_finite()) {
                bail!("{name} must be positive, got {std}");
            }
        }
        self.init.gates.validate()?;
        self.data_paths()?;
        Ok(())
    }

    /// Train/valid/test files: explicit paths win over `data_dir`.
    pub fn data_paths(&self) -> Result<DataPaths> {
        let pick = |explicit: &Option<PathBuf>, name: &str| -> Result<PathBuf> {
            match (explicit, &self.data_dir) {
                (Some(p), _) => Ok(p.clone()),
                (None, Some(dir)) => Ok(dir.join(format!("{name}.txt"))),
                (None, None) => bail!("no `{name}` file: set `data_dir` or `{name}`"),
            }
        };
        Ok(DataPaths {
            train: pick(&self.train, "train")?,
            valid: pick(&self.valid, "valid")?,
            test: pick(&self.test, "test")?,
        })
    }

    /// Effective configuration in the file format, every key present.
    pub fn to_text(&self) -> String {
        let t = &self.training;
        let path = |p: &Option<PathBuf>| p.as_ref().map(|p| p.display().to_string());
        let mut out = String::new();
        for &key in KEYS {
            let value = match key {
                "model" => Some(self.model.to_string()),
                "d_e" => Some(self.entity_dim.to_string()),
                "d_r" => Some(self.relation_dim.to_string()),
                "data_dir" => path(&self.data_dir),
                "train" => path(&self.train),
                "valid" => path(&self.valid),
                "test" => path(&self.test),
                "filter_splits" => Some(self.filter_splits.to_string()),
                "tie" => Some(self.tie.to_string()),
                "output_dir" => Some(
                    std::path::absolute(&self.output_dir)
                        .unwrap_or_else(|_| self.output_dir.clone())
                        .display()
                        .to_string(),
                ),
                "seed" => Some(t.seed.to_string()),
                "learning_rate" => Some(t.learning_rate.to_string()),
                "weight_decay" => Some(t.weight_decay.to_string()),
                "dropout" => Some(t.dropout.to_string()),
                "num_negatives" => Some(t.num_negatives.to_string()),
                "batch_size" => Some(t.batch_size.to_string()),
                "lambda" => Some(t.l0.lambda.to_string()),
                "warmup_epochs" => Some(t.l0.warmup_epochs.to_string()),
                "patience" => Some(t.patience.to_string()),
                "max_epochs" => Some(t.max_epochs.to_string()),
                "softmax" => Some(t.softmax.to_string()),
                "adagrad_eps" => Some(t.adagrad_eps.to_string()),
                "record_time" => Some(t.record_time.to_string()),
                "embedding_std" => Some(self.init.embedding_std.to_string()),
                "core_std" => Some(self.init.core_std.to_string()),
                _ => unreachable!("every key in KEYS is handled"),
            };
            if let Some(v) = value {
                writeln!(out, "{key} = {v}").expect("writing to a String");
            }
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn file_then_override() {
        let mut cfg = RunConfig::default();
        cfg.apply_text("# comment\nmodel = complex\nd_e = 10\n\nlearning_rate = 0.05\n", None)
            .unwrap();
        cfg.set_pair("d_e=12").unwrap();
        assert_eq!(cfg.model.to_string(), "complex");
        assert_eq!(cfg.entity_dim, 12);
        assert_eq!(cfg.training.learning_rate, 0.05);
        assert!(cfg.is_explicit("d_e"));
        assert!(!cfg.is_explicit("d_r"));
    }

    #[test]
    fn echo_round_trips() {
        let mut cfg = RunConfig::default();
        cfg.apply_text(
            "model = srt\nd_e = 8\nd_r = 2\ndata_dir = /tmp/data\nlambda = 0.1\ndropout = 0.30000000000000004\nfilter_splits = train,valid\ntie = pessimistic\nsoftmax = joint\nrecord_time = false\n",
            None,
        )
        .unwrap();
        let mut again = RunConfig::default();
        again.apply_text(&cfg.to_text(), None).unwrap();
        assert_eq!(again.to_text(), cfg.to_text());
        assert_eq!(again.training, cfg.training);
        assert_eq!(again.model, cfg.model);
        assert_eq!(again.filter_splits, cfg.filter_splits);
    }

    #[test]
    fn relative_paths_follow_the_file() {
        let dir = tempfile::tempdir().unwrap();
        let conf = dir.path().join("run.conf");
        std::fs::write(&conf, "data_dir = data\noutput_dir = out\n").unwrap();
        let cfg = RunConfig::from_file(&conf).unwrap();
        assert_eq!(
            cfg.data_paths().unwrap().train,
            dir.path().join("data").join("train.txt")
        );
        assert_eq!(cfg.output_dir, dir.path().join("out"));
    }

    #[test]
    fn rejects_bad_input() {
        let mut cfg = RunConfig::default();
        assert!(cfg.set("bogus", "1").is_err());
        assert!(cfg.set("d_e", "ten").is_err());
        assert!(cfg.set_pair("d_e").is_err());
        assert!(cfg.apply_text("just words\n", None).is_err());

        let mut cfg = RunConfig::default();
        cfg.set("data_dir", "/tmp").unwrap();
        cfg.validate().unwrap();
        cfg.set("dropout", "1.5").unwrap();
        assert!(cfg.validate().is_err());

        let mut cfg = RunConfig::default();
        cfg.set("data_dir", "/tmp").unwrap();
        cfg.set("model", "complex").unwrap();
        cfg.set("d_e", "5").unwrap();
        assert!(cfg.validate().is_err(), "ComplEx needs an even d_e");

        assert!(RunConfig::default().validate().is_err(), "no data configured");
    }
}
