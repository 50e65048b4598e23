//! Layered `key=value` settings: built-in defaults, then a config file, then
//! command-line flags.

use std::collections::BTreeMap;
use std::fmt::Display;
use std::path::Path;
use std::str::FromStr;

use crate::error::CliError;

/// Every recognised key with its default; `None` means unset.
const KEYS: &[(&str, Option<&str>)] = &[
    ("seed", Some("0")),
    ("jobs", Some("0")),
    ("layout", None),
    ("out", None),
    ("features", Some("both")),
    ("spectral_attn", Some("true")),
    ("spatial_attn", Some("true")),
    ("temporal_attn", Some("true")),
    ("input", None),
    ("segment_seconds", Some("3")),
    ("window_seconds", Some("0.5")),
    ("per_class", Some("40")),
    ("classes", Some("3")),
    ("amplitude", Some("1.5")),
    ("noise", Some("1")),
    ("focus_slice", None),
    ("subject", Some("1")),
    ("experiment", Some("1")),
    ("lr", Some("0.0003")),
    ("batch_size", Some("12")),
    ("epochs", Some("150")),
    ("folds", Some("5")),
    ("stop_at_train_acc", None),
    ("beta1", Some("0.9")),
    ("beta2", Some("0.999")),
    ("eps", Some("1e-8")),
    ("conv_channels", Some("64,128,256,64")),
    ("conv_kernels", Some("5,5,5,3")),
    ("fc_units", Some("150")),
    ("lstm_units", Some("36")),
    ("temporal_hidden", Some("32")),
    ("reduction", Some("8")),
    ("spatial_kernel", Some("7")),
    ("ablate", Some("false")),
    ("checkpoint", None),
    ("sample", None),
    ("index", Some("0")),
    ("class", None),
    ("labels", Some("false")),
];

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct Settings {
    values: BTreeMap<String, String>,
}

fn known(key: &str) -> bool {
    KEYS.iter().any(|(k, _)| *k == key)
}

/// Parse `key=value` lines; blank lines and `#` comments are skipped.
pub fn parse_config(text: &str) -> Result<Vec<(String, String)>, CliError> {
    let mut out = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (k, v) = line
            .split_once('=')
            .ok_or_else(|| CliError::Usage(format!("config line {}: expected key=value", i + 1)))?;
        let key = k.trim().replace('-', "_");
        if !known(&key) {
            return Err(CliError::Usage(format!("config line {}: unknown key `{}`", i + 1, k.trim())));
        }
        out.push((key, v.trim().to_string()));
    }
    Ok(out)
}

impl Settings {
    pub fn defaults() -> Self {
        let values = KEYS.iter().filter_map(|(k, v)| v.map(|v| (k.to_string(), v.to_string()))).collect();
        Self { values }
    }

    pub fn set(&mut self, key: &str, value: impl Into<String>) -> Result<(), CliError> {
        let key = key.replace('-', "_");
        if !known(&key) {
            return Err(CliError::Usage(format!("unknown setting `{key}`")));
        }
        self.values.insert(key, value.into());
        Ok(())
    }

    pub fn load_file(&mut self, path: &Path) -> Result<(), CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Usage(format!("cannot read config {}: {e}", path.display())))?;
        for (k, v) in parse_config(&text)? {
            self.values.insert(k, v);
        }
        Ok(())
    }

    pub fn raw(&self, key: &str) -> Option<&str> {
        self.values.get(key).map(String::as_str).filter(|v| !v.is_empty())
    }

    pub fn require(&self, key: &str) -> Result<&str, CliError> {
        self.raw(key).ok_or_else(|| CliError::Usage(format!("missing required setting `{key}`")))
    }

    pub fn get<T: FromStr>(&self, key: &str) -> Result<T, CliError>
    where
        T::Err: Display,
    {
        let raw = self.require(key)?;
        raw.parse().map_err(|e| CliError::Usage(format!("bad value `{raw}` for {key}: {e}")))
    }

    pub fn get_opt<T: FromStr>(&self, key: &str) -> Result<Option<T>, CliError>
    where
        T::Err: Display,
    {
        self.raw(key).map(|_| self.get(key)).transpose()
    }

    pub fn get_list(&self, key: &str) -> Result<Vec<usize>, CliError> {
        let raw = self.require(key)?;
        raw.split(',')
            .map(|v| v.trim().parse().map_err(|e| CliError::Usage(format!("bad list `{raw}` for {key}: {e}"))))
            .collect()
    }

    /// Snapshot of `keys` (with their resolved values) in `key=value` form.
    pub fn snapshot(&self, command: &str, keys: &[&str]) -> String {
        let mut out = format!("# eeg4d {command}\n");
        for key in keys {
            out.push_str(&format!("{key}={}\n", self.raw(key).unwrap_or("")));
        }
        out
    }
}
