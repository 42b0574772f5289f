//! Flat TOML run configuration: data paths plus every training hyperparameter.

use std::path::{Path, PathBuf};

use ssvmr_core::config::TrainConfig;

use crate::error::{CliError, Result};

/// Keys naming files; everything else is a training hyperparameter.
pub const PATH_KEYS: [&str; 7] = ["train_videos", "train_music", "train_pairs", "test_videos", "test_music", "test_pairs", "out_dir"];

#[derive(Debug, Clone, PartialEq, Default)]
pub struct Paths {
    pub train_videos: Option<PathBuf>,
    pub train_music: Option<PathBuf>,
    pub train_pairs: Option<PathBuf>,
    pub test_videos: Option<PathBuf>,
    pub test_music: Option<PathBuf>,
    pub test_pairs: Option<PathBuf>,
    pub out_dir: Option<PathBuf>,
}

impl Paths {
    fn slot(&mut self, key: &str) -> &mut Option<PathBuf> {
        match key {
            "train_videos" => &mut self.train_videos,
            "train_music" => &mut self.train_music,
            "train_pairs" => &mut self.train_pairs,
            "test_videos" => &mut self.test_videos,
            "test_music" => &mut self.test_music,
            "test_pairs" => &mut self.test_pairs,
            "out_dir" => &mut self.out_dir,
            _ => unreachable!("not a path key: {key}"),
        }
    }

    fn get(&self, key: &str) -> Option<&PathBuf> {
        match key {
            "train_videos" => self.train_videos.as_ref(),
            "train_music" => self.train_music.as_ref(),
            "train_pairs" => self.train_pairs.as_ref(),
            "test_videos" => self.test_videos.as_ref(),
            "test_music" => self.test_music.as_ref(),
            "test_pairs" => self.test_pairs.as_ref(),
            "out_dir" => self.out_dir.as_ref(),
            _ => None,
        }
    }

    /// A required path, or a config error naming the key.
    pub fn require(&self, key: &'static str) -> Result<&Path> {
        self.get(key).map(PathBuf::as_path).ok_or_else(|| CliError::config(key, "required path is missing"))
    }

    /// The test split, present only when all three files are configured.
    pub fn test_split(&self) -> Result<Option<(&Path, &Path, &Path)>> {
        match (&self.test_videos, &self.test_music, &self.test_pairs) {
            (Some(v), Some(m), Some(p)) => Ok(Some((v, m, p))),
            (None, None, None) => Ok(None),
            _ => Err(CliError::config("test_videos", "test_videos, test_music and test_pairs must be set together")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct RunConfig {
    pub paths: Paths,
    pub train: TrainConfig,
}

fn defaults_table() -> toml::Table {
    toml::Table::try_from(TrainConfig::default()).expect("default config serializes")
}

/// Parses a flat TOML document. Relative paths resolve against `base_dir`.
pub fn parse_config(text: &str, base_dir: &Path) -> Result<RunConfig> {
    let table: toml::Table = text.parse().map_err(|e: toml::de::Error| CliError::config("<document>", e.message().to_owned()))?;
    let defaults = defaults_table();
    let mut merged = defaults.clone();
    let mut paths = Paths::default();
    for (key, value) in table {
        if let Some(&k) = PATH_KEYS.iter().find(|&&k| k == key) {
            let s = value.as_str().ok_or_else(|| CliError::config(k, format!("expected a path string, got {}", value.type_str())))?;
            let p = Path::new(s);
            *paths.slot(k) = Some(if p.is_absolute() { p.to_path_buf() } else { base_dir.join(p) });
            continue;
        }
        if !defaults.contains_key(&key) {
            return Err(CliError::config(key, "unknown key"));
        }
        // Deserialize against the defaults with only this key replaced so type errors name it.
        let mut probe = defaults.clone();
        probe.insert(key.clone(), value.clone());
        if let Err(e) = probe.try_into::<TrainConfig>() {
            return Err(CliError::config(key, e.message().to_owned()));
        }
        merged.insert(key, value);
    }
    let train: TrainConfig = merged.try_into().map_err(|e: toml::de::Error| CliError::config("<document>", e.message().to_owned()))?;
    train.validate().map_err(|e| match e {
        ssvmr_core::Error::Config { field, reason } => CliError::config(field, reason),
        other => other.into(),
    })?;
    Ok(RunConfig { paths, train })
}

pub fn load_config(path: &Path) -> Result<RunConfig> {
    let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
    parse_config(&text, path.parent().unwrap_or(Path::new(".")))
}

/// Renders a complete config: every path that is set, then every hyperparameter.
pub fn render_config(cfg: &RunConfig) -> String {
    let mut out = String::new();
    for key in PATH_KEYS {
        if let Some(p) = cfg.paths.get(key) {
            out.push_str(&format!("{key} = {}\n", toml::Value::String(p.display().to_string())));
        }
    }
    let table = toml::Table::try_from(&cfg.train).expect("config serializes");
    out.push_str(&toml::to_string(&table).expect("table renders"));
    out
}

/// Defaults with the path keys listed as comments.
pub fn default_config_text() -> String {
    let mut out = String::from("# Data files (relative paths resolve against this file's directory).\n");
    for key in PATH_KEYS {
        out.push_str(&format!("# {key} = \"...\"\n"));
    }
    out.push('\n');
    out.push_str(&render_config(&RunConfig::default()));
    out
}

/// Writes `config.snapshot.toml` into `dir` with absolute paths.
pub fn write_snapshot(cfg: &RunConfig, dir: &Path) -> Result<PathBuf> {
    let mut abs = cfg.clone();
    for key in PATH_KEYS {
        let slot = abs.paths.slot(key);
        if let Some(p) = slot.as_ref() {
            *slot = Some(std::path::absolute(p).map_err(|e| CliError::io(p, e))?);
        }
    }
    let path = dir.join("config.snapshot.toml");
    std::fs::write(&path, render_config(&abs)).map_err(|e| CliError::io(&path, e))?;
    Ok(path)
}
