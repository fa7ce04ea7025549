//! Run configuration: built-in defaults, overridden by a `key = value`
//! file, overridden by command-line flags.

use std::collections::BTreeMap;
use std::path::Path;
use std::str::FromStr;

use occupancy_core::model::Mode;

use crate::CliError;

/// Parsed `key = value` file. Keys are normalized to snake_case so
/// `hidden-dim` and `hidden_dim` are the same key.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ConfigFile {
    values: BTreeMap<String, String>,
}

fn normalize_key(key: &str) -> String {
    key.trim().trim_start_matches("--").replace('-', "_").to_ascii_lowercase()
}

impl ConfigFile {
    pub fn parse(text: &str) -> Result<Self, CliError> {
        let mut values = BTreeMap::new();
        for (n, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| CliError::Usage(format!("config line {}: expected `key = value`", n + 1)))?;
            values.insert(normalize_key(k), v.trim().to_string());
        }
        Ok(ConfigFile { values })
    }

    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Usage(format!("cannot read config {}: {e}", path.display())))?;
        Self::parse(&text)
    }

    /// Flag value if given, else the file's value, else `default`.
    pub fn resolve<T: FromStr>(&self, flag: Option<T>, key: &str, default: T) -> Result<T, CliError> {
        if let Some(v) = flag {
            return Ok(v);
        }
        match self.values.get(&normalize_key(key)) {
            Some(s) => s
                .parse()
                .map_err(|_| CliError::Usage(format!("config key `{key}`: cannot parse `{s}`"))),
            None => Ok(default),
        }
    }

    pub fn resolve_opt<T: FromStr>(&self, flag: Option<T>, key: &str) -> Result<Option<T>, CliError> {
        if flag.is_some() {
            return Ok(flag);
        }
        self.values
            .get(&normalize_key(key))
            .map(|s| s.parse().map_err(|_| CliError::Usage(format!("config key `{key}`: cannot parse `{s}`"))))
            .transpose()
    }
}

/// Settings shared by the training and evaluation commands.
#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub mode: Mode,
    pub hidden_dim: usize,
    pub window_len: usize,
    pub stride: usize,
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub seed: u64,
    pub n_train: usize,
    pub n_val: usize,
    pub n_test: usize,
    pub threads: usize,
    pub clip_norm: Option<f64>,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            mode: Mode::Classifier,
            hidden_dim: 64,
            window_len: 12,
            stride: 1,
            epochs: 30,
            batch_size: 32,
            learning_rate: 1e-3,
            seed: 1,
            n_train: 7,
            n_val: 2,
            n_test: 2,
            threads: 1,
            clip_norm: None,
        }
    }
}

impl RunConfig {
    pub fn validate(&self) -> Result<(), CliError> {
        let counts = [
            ("hidden_dim", self.hidden_dim),
            ("window_len", self.window_len),
            ("stride", self.stride),
            ("batch", self.batch_size),
            ("n_train", self.n_train),
            ("n_val", self.n_val),
            ("n_test", self.n_test),
            ("threads", self.threads),
        ];
        if let Some((name, _)) = counts.iter().find(|(_, v)| *v == 0) {
            return Err(CliError::Usage(format!("`{name}` must be positive")));
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(CliError::Usage("learning rate must be positive".into()));
        }
        if matches!(self.clip_norm, Some(c) if c.is_nan() || c <= 0.0) {
            return Err(CliError::Usage("clip norm must be positive".into()));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn precedence() {
        let file = ConfigFile::parse("# comment\nhidden-dim = 32\nepochs=5 # trailing\n\n").unwrap();
        assert_eq!(file.resolve(Some(8usize), "hidden_dim", 64).unwrap(), 8);
        assert_eq!(file.resolve(None::<usize>, "hidden_dim", 64).unwrap(), 32);
        assert_eq!(file.resolve(None::<usize>, "epochs", 30).unwrap(), 5);
        assert_eq!(file.resolve(None::<usize>, "batch", 32).unwrap(), 32);
        assert_eq!(file.resolve_opt(None::<f64>, "clip_norm").unwrap(), None);
    }

    #[test]
    fn bad_lines_are_usage_errors() {
        assert!(matches!(ConfigFile::parse("just words"), Err(CliError::Usage(_))));
        let file = ConfigFile::parse("epochs = many").unwrap();
        assert!(file.resolve(None::<usize>, "epochs", 1).is_err());
    }

    #[test]
    fn zero_counts_rejected() {
        let cfg = RunConfig { window_len: 0, ..RunConfig::default() };
        assert!(cfg.validate().is_err());
        assert!(RunConfig::default().validate().is_ok());
    }
}
