//! Run configuration: preset defaults, overlaid by a TOML file, overlaid by
//! command-line flags.

use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use tubelean_core::channels::ReportOptions;
use tubelean_core::corpus::SplitRatios;
use tubelean_core::embed::SgnsConfig;
use tubelean_core::models::{ArchitectureConfig, Scale, Variant};
use tubelean_core::train::TrainConfig;

/// File and directory inputs. Relative paths in a config file are taken
/// relative to that file.
#[derive(Debug, Clone, Default, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct DataPaths {
    pub input: Option<PathBuf>,
    pub train: Option<PathBuf>,
    pub validation: Option<PathBuf>,
    pub test: Option<PathBuf>,
    pub vocab: Option<PathBuf>,
    pub embeddings: Option<PathBuf>,
    pub checkpoint: Option<PathBuf>,
    pub exports: Option<PathBuf>,
    pub ground_truth: Option<PathBuf>,
}

impl DataPaths {
    fn rebase(&mut self, base: &Path) {
        for p in [
            &mut self.input,
            &mut self.train,
            &mut self.validation,
            &mut self.test,
            &mut self.vocab,
            &mut self.embeddings,
            &mut self.checkpoint,
            &mut self.exports,
            &mut self.ground_truth,
        ]
        .into_iter()
        .flatten()
        {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        }
    }
}

/// The TOML file as written by the user. Every section is optional.
#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct FileConfig {
    seed: Option<u64>,
    out: Option<PathBuf>,
    preset: Option<String>,
    scale: Option<String>,
    verbosity: Option<String>,
    #[serde(default)]
    data: DataPaths,
    split: Option<SplitRatios>,
    model: Option<toml::Table>,
    train: Option<toml::Table>,
    embed: Option<toml::Table>,
    channels: Option<toml::Table>,
}

/// Flags that override file values.
#[derive(Debug, Default)]
pub struct Overrides {
    pub config: Option<PathBuf>,
    pub seed: Option<u64>,
    pub out: Option<PathBuf>,
    pub preset: Option<Variant>,
    pub scale: Option<Scale>,
    pub verbose: u8,
}

/// Fully resolved settings for one command.
#[derive(Debug, Clone)]
pub struct RunConfig {
    pub seed: u64,
    pub out: PathBuf,
    pub variant: Variant,
    pub scale: Scale,
    pub verbosity: log::LevelFilter,
    pub data: DataPaths,
    pub split: SplitRatios,
    pub model: ArchitectureConfig,
    pub train: TrainConfig,
    pub embed: SgnsConfig,
    pub channels: ReportOptions,
}

/// Replace top-level fields of `base` with those present in `table`.
fn overlay<T: Serialize + DeserializeOwned>(base: &T, table: Option<&toml::Table>, section: &str) -> Result<T> {
    let mut merged = toml::Table::try_from(base).with_context(|| format!("[{section}] defaults"))?;
    if let Some(t) = table {
        merged.extend(t.iter().map(|(k, v)| (k.clone(), v.clone())));
    }
    toml::Value::Table(merged)
        .try_into()
        .with_context(|| format!("invalid [{section}] section"))
}

impl RunConfig {
    pub fn resolve(flags: &Overrides) -> Result<Self> {
        let file = match &flags.config {
            Some(path) => {
                let text = fs::read_to_string(path).with_context(|| format!("reading config {}", path.display()))?;
                let mut f: FileConfig =
                    toml::from_str(&text).with_context(|| format!("parsing config {}", path.display()))?;
                let base = path.parent().unwrap_or(Path::new(""));
                f.data.rebase(base);
                if let Some(out) = &mut f.out {
                    if out.is_relative() {
                        *out = base.join(&*out);
                    }
                }
                f
            }
            None => FileConfig::default(),
        };
        let variant = match (flags.preset, &file.preset) {
            (Some(v), _) => v,
            (None, Some(s)) => s.parse()?,
            (None, None) => Variant::Word2vecCnn,
        };
        let scale = match (flags.scale, &file.scale) {
            (Some(s), _) => s,
            (None, Some(s)) => s.parse()?,
            (None, None) => Scale::Desk,
        };
        let seed = flags.seed.or(file.seed).unwrap_or(0);
        let verbosity = match flags.verbose {
            0 => match file.verbosity.as_deref() {
                Some(v) => v.parse().with_context(|| format!("unknown verbosity {v:?}"))?,
                None => log::LevelFilter::Warn,
            },
            1 => log::LevelFilter::Info,
            2 => log::LevelFilter::Debug,
            _ => log::LevelFilter::Trace,
        };

        let model = overlay(
            &ArchitectureConfig::preset(variant, scale),
            file.model.as_ref(),
            "model",
        )?;
        let mut train = overlay(&TrainConfig::preset(variant, scale), file.train.as_ref(), "train")?;
        if flags.seed.is_some() || file.train.as_ref().is_none_or(|t| !t.contains_key("seed")) {
            train.seed = seed;
        }
        let embed_base = SgnsConfig {
            dim: model.embed_dim,
            ..SgnsConfig::default()
        };
        let embed = overlay(&embed_base, file.embed.as_ref(), "embed")?;
        let channels = overlay(&ReportOptions::default(), file.channels.as_ref(), "channels")?;
        let split = file.split.unwrap_or_default();
        split.validate()?;
        Ok(RunConfig {
            seed,
            out: flags.out.clone().or(file.out).unwrap_or_else(|| PathBuf::from("out")),
            variant,
            scale,
            verbosity,
            data: file.data,
            split,
            model,
            train,
            embed,
            channels,
        })
    }
}
