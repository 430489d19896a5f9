//! Line-oriented `key = value` configuration files.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::str::FromStr;

use thiserror::Error;

use crate::frontend::FrontendConfig;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ConfigError {
    #[error("config line {line}: expected `key = value`")]
    Malformed { line: usize },
    #[error("config line {line}: duplicate key {key}")]
    Duplicate { line: usize, key: String },
    #[error("config key {key}: bad value {value:?}")]
    BadValue { key: String, value: String },
    #[error("unknown config key {0}")]
    UnknownKey(String),
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct KeyValues {
    entries: BTreeMap<String, String>,
}

impl KeyValues {
    /// Parses `key = value` lines; blank lines and `#` comments are skipped.
    pub fn parse(text: &str) -> Result<Self, ConfigError> {
        let mut entries = BTreeMap::new();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (k, v) = line.split_once('=').ok_or(ConfigError::Malformed { line: i + 1 })?;
            let (k, v) = (k.trim(), v.trim());
            if k.is_empty() {
                return Err(ConfigError::Malformed { line: i + 1 });
            }
            if entries.insert(k.to_string(), v.to_string()).is_some() {
                return Err(ConfigError::Duplicate { line: i + 1, key: k.to_string() });
            }
        }
        Ok(Self { entries })
    }

    pub fn raw(&self, key: &str) -> Option<&str> {
        self.entries.get(key).map(String::as_str)
    }

    pub fn get<T: FromStr>(&self, key: &str) -> Result<Option<T>, ConfigError> {
        self.raw(key)
            .map(|v| {
                v.parse().map_err(|_| ConfigError::BadValue { key: key.to_string(), value: v.to_string() })
            })
            .transpose()
    }

    pub fn keys(&self) -> impl Iterator<Item = &str> {
        self.entries.keys().map(String::as_str)
    }

    /// Fails on the first key not in `known`.
    pub fn check_keys(&self, known: &[&str]) -> Result<(), ConfigError> {
        match self.keys().find(|k| !known.contains(k)) {
            Some(k) => Err(ConfigError::UnknownKey(k.to_string())),
            None => Ok(()),
        }
    }
}

macro_rules! frontend_fields {
    ($m:ident) => {
        $m!(
            frame_len_samples,
            hop_samples,
            preemphasis_alpha,
            num_filters,
            delta_window,
            ste_threshold_ratio,
            ste_floor,
            zcr_threshold,
            zcr_min_energy_ratio,
            max_zcr_extension_frames,
            background_ms,
            min_speech_frames,
            max_silence_gap_frames
        )
    };
}

impl FrontendConfig {
    /// Reads a frontend config; missing keys keep their defaults.
    pub fn from_key_values(kv: &KeyValues) -> Result<Self, ConfigError> {
        let mut cfg = FrontendConfig::default();
        macro_rules! read {
            ($($f:ident),*) => {
                kv.check_keys(&[$(stringify!($f)),*])?;
                $(if let Some(v) = kv.get(stringify!($f))? { cfg.$f = v; })*
            };
        }
        frontend_fields!(read);
        Ok(cfg)
    }

    pub fn to_config_text(&self) -> String {
        let mut out = String::new();
        macro_rules! write_fields {
            ($($f:ident),*) => {
                $(writeln!(out, "{} = {}", stringify!($f), self.$f).unwrap();)*
            };
        }
        frontend_fields!(write_fields);
        out
    }
}
