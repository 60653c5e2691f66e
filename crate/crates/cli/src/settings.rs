//! Run settings: a flat TOML file overlaid by command-line flags.
//!
//! Pipeline keys are listed in [`FileSettings`]; every other key in the file
//! is a cohort-generator key and is handed to [`CohortConfig`].

use crate::error::CliError;
use chronorules_core::synthgen::CohortConfig;
use chronorules_core::tabulate::AttributeSchema;
use chronorules_core::{SearchConfig, WindowSize};
use serde::Deserialize;
use std::path::{Path, PathBuf};

pub const DEFAULT_SEED: u64 = 20200120;
pub const DEFAULT_WINDOW: u32 = 30;
pub const DEFAULT_BETA2: f64 = 0.25;
pub const DEFAULT_MAX_RULE_LEN: usize = 2;
pub const DEFAULT_MAX_SET_SIZE: usize = 1;
pub const DEFAULT_FOLDS: usize = 10;
pub const DEFAULT_ATTRS: &str = "core";

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FileSettings {
    pub events: Option<PathBuf>,
    pub rules: Option<PathBuf>,
    pub out: Option<PathBuf>,
    pub window: Option<u32>,
    pub beta2: Option<f64>,
    pub max_rule_len: Option<usize>,
    pub max_set_size: Option<usize>,
    pub attrs: Option<String>,
    pub folds: Option<usize>,
    pub seed: Option<u64>,
    pub windows: Option<Vec<u32>>,
    pub beta2_grid: Option<Vec<f64>>,
    pub attrs_grid: Option<Vec<String>>,
    pub max_rule_len_grid: Option<Vec<usize>>,
    pub max_set_size_grid: Option<Vec<usize>>,
}

const FILE_KEYS: [&str; 15] = [
    "events",
    "rules",
    "out",
    "window",
    "beta2",
    "max_rule_len",
    "max_set_size",
    "attrs",
    "folds",
    "seed",
    "windows",
    "beta2_grid",
    "attrs_grid",
    "max_rule_len_grid",
    "max_set_size_grid",
];

/// Splits a config file into pipeline settings and cohort settings.
pub fn load_file(path: &Path) -> Result<(FileSettings, CohortConfig), CliError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::Input(format!("{}: {e}", path.display())))?;
    let bad = |e: toml::de::Error| CliError::Input(format!("{}: {e}", path.display()));
    let mut table: toml::Table = text.parse().map_err(bad)?;
    let mut own = toml::Table::new();
    for key in FILE_KEYS {
        if let Some(v) = table.remove(key) {
            own.insert(key.to_owned(), v);
        }
    }
    let file: FileSettings = toml::Value::Table(own).try_into().map_err(bad)?;
    let mut cohort: CohortConfig = toml::Value::Table(table).try_into().map_err(bad)?;
    if let Some(seed) = file.seed {
        cohort.seed = seed;
    }
    Ok((file, cohort))
}

/// Fully resolved settings for one command.
#[derive(Debug, Clone)]
pub struct Settings {
    pub events: Option<PathBuf>,
    pub rules: Option<PathBuf>,
    pub out: Option<PathBuf>,
    /// `None` when neither the file nor a flag chose a window.
    pub window: Option<u32>,
    pub beta2: f64,
    pub max_rule_len: usize,
    pub max_set_size: usize,
    pub attrs: String,
    pub folds: usize,
    pub seed: u64,
    pub cohort: CohortConfig,
    pub grid: Grid,
}

#[derive(Debug, Clone, Default)]
pub struct Grid {
    pub windows: Option<Vec<u32>>,
    pub beta2: Option<Vec<f64>>,
    pub attrs: Option<Vec<String>>,
    pub max_rule_len: Option<Vec<usize>>,
    pub max_set_size: Option<Vec<usize>>,
}

impl Settings {
    pub fn window_or_default(&self) -> Result<WindowSize, CliError> {
        window(self.window.unwrap_or(DEFAULT_WINDOW))
    }

    pub fn schema(&self) -> Result<AttributeSchema, CliError> {
        schema(&self.attrs)
    }

    pub fn search(&self) -> SearchConfig {
        SearchConfig {
            beta2: self.beta2,
            max_rule_len: self.max_rule_len,
            max_set_size: self.max_set_size,
        }
    }

    pub fn events_path(&self) -> Result<&Path, CliError> {
        self.events
            .as_deref()
            .ok_or_else(|| CliError::Usage("--events is required".into()))
    }

    pub fn rules_path(&self) -> Result<&Path, CliError> {
        self.rules
            .as_deref()
            .ok_or_else(|| CliError::Usage("--rules is required".into()))
    }

    pub fn out_or(&self, default: &str) -> PathBuf {
        self.out.clone().unwrap_or_else(|| PathBuf::from(default))
    }
}

pub fn window(days: u32) -> Result<WindowSize, CliError> {
    WindowSize::new(days).map_err(|e| CliError::Usage(e.to_string()))
}

pub fn schema(selector: &str) -> Result<AttributeSchema, CliError> {
    AttributeSchema::from_selector(selector).map_err(|e| CliError::Usage(e.to_string()))
}

/// Flag values; `None` means "not given on the command line".
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub config: Option<PathBuf>,
    pub events: Option<PathBuf>,
    pub rules: Option<PathBuf>,
    pub out: Option<PathBuf>,
    pub window: Option<u32>,
    pub beta2: Option<f64>,
    pub max_rule_len: Option<usize>,
    pub max_set_size: Option<usize>,
    pub attrs: Option<String>,
    pub folds: Option<usize>,
    pub seed: Option<u64>,
    pub grid: Grid,
}

pub fn resolve(flags: Overrides) -> Result<Settings, CliError> {
    let (file, mut cohort) = match &flags.config {
        Some(path) => load_file(path)?,
        None => (FileSettings::default(), CohortConfig::default()),
    };
    let seed = flags.seed.or(file.seed).unwrap_or(DEFAULT_SEED);
    cohort.seed = flags.seed.or(file.seed).unwrap_or(cohort.seed);
    Ok(Settings {
        events: flags.events.or(file.events),
        rules: flags.rules.or(file.rules),
        out: flags.out.or(file.out),
        window: flags.window.or(file.window),
        beta2: flags.beta2.or(file.beta2).unwrap_or(DEFAULT_BETA2),
        max_rule_len: flags
            .max_rule_len
            .or(file.max_rule_len)
            .unwrap_or(DEFAULT_MAX_RULE_LEN),
        max_set_size: flags
            .max_set_size
            .or(file.max_set_size)
            .unwrap_or(DEFAULT_MAX_SET_SIZE),
        attrs: flags
            .attrs
            .or(file.attrs)
            .unwrap_or_else(|| DEFAULT_ATTRS.to_owned()),
        folds: flags.folds.or(file.folds).unwrap_or(DEFAULT_FOLDS),
        seed,
        cohort,
        grid: Grid {
            windows: flags.grid.windows.or(file.windows),
            beta2: flags.grid.beta2.or(file.beta2_grid),
            attrs: flags.grid.attrs.or(file.attrs_grid),
            max_rule_len: flags.grid.max_rule_len.or(file.max_rule_len_grid),
            max_set_size: flags.grid.max_set_size.or(file.max_set_size_grid),
        },
    })
}
