//! Subcommand implementations, callable without going through argument parsing.

use std::path::{Path, PathBuf};

use ssvmr_core::ablation::{component_grid, run_variant, span_grid, AblationRow, Variant};
use ssvmr_core::back_retrieval::{augment, train_reverse_model, AugmentationReport};
use ssvmr_core::dataset::{generate_synthetic, FeatureBank, PairRecord, SyntheticSpec};
use ssvmr_core::eval::EvalResult;
use ssvmr_core::train::{describe_epoch, train, EvalSet, TrainOutcome, TrainingSet};

use crate::bank::{read_bank, write_bank};
use crate::checkpoint::{read_checkpoint, write_checkpoint};
use crate::config::{render_config, write_snapshot, Paths, RunConfig};
use crate::error::{CliError, Result};
use crate::manifest::{read_manifest, write_jsonl, write_manifest};
use crate::report::{ablation_table, eval_table};

pub const TRAIN_VIDEOS: &str = "train_videos.ssvb";
pub const TRAIN_MUSIC: &str = "train_music.ssvb";
pub const TRAIN_PAIRS: &str = "train_pairs.jsonl";
pub const TEST_VIDEOS: &str = "test_videos.ssvb";
pub const TEST_MUSIC: &str = "test_music.ssvb";
pub const TEST_PAIRS: &str = "test_pairs.jsonl";
pub const CHECKPOINT: &str = "model.ssvm";
pub const REVERSE_CHECKPOINT: &str = "reverse.ssvm";
pub const METRICS: &str = "metrics.jsonl";
pub const STEPS: &str = "steps.jsonl";
pub const AUGMENTATION: &str = "augmentation.jsonl";
pub const AUGMENTED_PAIRS: &str = "augmented_pairs.jsonl";

fn create_dir(dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))
}

#[derive(Debug, Clone, PartialEq)]
pub struct GenSummary {
    pub train_pairs: usize,
    pub corrupted: usize,
    pub test_pairs: usize,
    pub d_v: usize,
    pub d_m: usize,
    pub config: PathBuf,
}

/// Writes a synthetic train/test split plus a `config.toml` pointing at it.
pub fn cmd_gen(out: &Path, spec: &SyntheticSpec) -> Result<GenSummary> {
    let data = generate_synthetic(spec)?;
    create_dir(out)?;
    write_bank(&data.train.videos, &out.join(TRAIN_VIDEOS))?;
    write_bank(&data.train.music, &out.join(TRAIN_MUSIC))?;
    write_manifest(&out.join(TRAIN_PAIRS), &data.train.pairs)?;
    write_bank(&data.test.videos, &out.join(TEST_VIDEOS))?;
    write_bank(&data.test.music, &out.join(TEST_MUSIC))?;
    write_manifest(&out.join(TEST_PAIRS), &data.test.pairs)?;
    let cfg = RunConfig {
        paths: Paths {
            train_videos: Some(TRAIN_VIDEOS.into()),
            train_music: Some(TRAIN_MUSIC.into()),
            train_pairs: Some(TRAIN_PAIRS.into()),
            test_videos: Some(TEST_VIDEOS.into()),
            test_music: Some(TEST_MUSIC.into()),
            test_pairs: Some(TEST_PAIRS.into()),
            out_dir: Some("run".into()),
        },
        ..Default::default()
    };
    let config = out.join("config.toml");
    std::fs::write(&config, render_config(&cfg)).map_err(|e| CliError::io(&config, e))?;
    Ok(GenSummary {
        train_pairs: data.train.pairs.len(),
        corrupted: data.train.pairs.iter().filter(|p| p.true_match == Some(false)).count(),
        test_pairs: data.test.pairs.len(),
        d_v: spec.d_v,
        d_m: spec.d_m,
        config,
    })
}

/// Banks and manifests named by a run configuration.
pub struct Data {
    pub train_videos: FeatureBank,
    pub train_music: FeatureBank,
    pub train_pairs: Vec<PairRecord>,
    pub test: Option<(FeatureBank, FeatureBank, Vec<PairRecord>)>,
}

impl Data {
    pub fn load(paths: &Paths) -> Result<Self> {
        let test = match paths.test_split()? {
            Some((v, m, p)) => Some((read_bank(v)?, read_bank(m)?, read_manifest(p)?)),
            None => None,
        };
        Ok(Data {
            train_videos: read_bank(paths.require("train_videos")?)?,
            train_music: read_bank(paths.require("train_music")?)?,
            train_pairs: read_manifest(paths.require("train_pairs")?)?,
            test,
        })
    }

    pub fn eval_set(&self) -> Result<Option<EvalSet<'_>>> {
        Ok(match &self.test {
            Some((v, m, p)) => Some(EvalSet::new(v, m, p)?),
            None => None,
        })
    }
}

fn write_augmentation(dir: &Path, report: &AugmentationReport) -> Result<()> {
    write_jsonl(&dir.join(AUGMENTATION), &report.entries)
}

/// Trains the music-to-video model and writes the augmented manifest.
pub fn cmd_augment(cfg: &RunConfig) -> Result<AugmentationReport> {
    let out = cfg.paths.require("out_dir")?;
    create_dir(out)?;
    let data = Data::load(&cfg.paths)?;
    let set = TrainingSet::new(&data.train_videos, &data.train_music, data.train_pairs.clone())?.originals()?;
    let reverse = train_reverse_model(&cfg.train, &set)?;
    write_checkpoint(&reverse, &out.join(REVERSE_CHECKPOINT))?;
    let (extra, report) = augment(&reverse, &data.train_videos, &data.train_music, cfg.train.reverse_top_k, cfg.train.seed)?;
    let mut pairs = data.train_pairs;
    pairs.extend(extra);
    write_manifest(&out.join(AUGMENTED_PAIRS), &pairs)?;
    write_augmentation(out, &report)?;
    write_snapshot(cfg, out)?;
    Ok(report)
}

#[derive(Debug, Clone)]
pub struct TrainSummary {
    pub checkpoint: PathBuf,
    pub checkpoint_id: String,
    pub outcome: TrainOutcome,
}

/// Full training run; writes checkpoint, per-epoch metrics, per-step losses and a config snapshot.
pub fn cmd_train(cfg: &RunConfig, verbose: bool) -> Result<TrainSummary> {
    let out = cfg.paths.require("out_dir")?;
    create_dir(out)?;
    let data = Data::load(&cfg.paths)?;
    let eval = data.eval_set()?;
    let outcome = train(&cfg.train, &data.train_videos, &data.train_music, &data.train_pairs, eval.as_ref())?;
    if verbose {
        for e in &outcome.epochs {
            eprintln!("{}", describe_epoch(e));
        }
    }
    let checkpoint = out.join(CHECKPOINT);
    let checkpoint_id = write_checkpoint(&outcome.params, &checkpoint)?;
    write_jsonl(&out.join(METRICS), &outcome.epochs)?;
    write_jsonl(&out.join(STEPS), &outcome.steps)?;
    if let Some(report) = &outcome.augmentation {
        write_augmentation(out, report)?;
        write_manifest(&out.join(AUGMENTED_PAIRS), &outcome.pairs)?;
    }
    write_snapshot(cfg, out)?;
    Ok(TrainSummary { checkpoint, checkpoint_id, outcome })
}

/// Evaluates a checkpoint; queries are the videos of `pairs`, the gallery is the whole music bank.
pub fn cmd_eval(checkpoint: &Path, videos: &Path, music: &Path, pairs: &Path, ks: &[usize], report: Option<&Path>) -> Result<EvalResult> {
    let (params, id) = read_checkpoint(checkpoint)?;
    let (videos, music, pairs) = (read_bank(videos)?, read_bank(music)?, read_manifest(pairs)?);
    let set = EvalSet::new(&videos, &music, &pairs)?;
    let mut result = set.evaluate(&params, ks)?;
    result.checkpoint_id = Some(id);
    if let Some(path) = report {
        write_jsonl(path, std::slice::from_ref(&result))?;
        let table = path.with_extension("txt");
        std::fs::write(&table, eval_table(&result)).map_err(|e| CliError::io(&table, e))?;
    }
    Ok(result)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Grid {
    Components,
    Spans,
    Both,
}

/// Runs the component and/or span grids; requires a test split.
/// With `parallel`, variants run on separate threads; every run draws only
/// from its own config seed, so results match the sequential order.
pub fn cmd_ablate(cfg: &RunConfig, grid: Grid, max_spans: usize, parallel: bool) -> Result<Vec<AblationRow>> {
    let out = cfg.paths.require("out_dir")?;
    create_dir(out)?;
    let data = Data::load(&cfg.paths)?;
    let eval = data.eval_set()?.ok_or_else(|| CliError::config("test_pairs", "ablation needs a test split"))?;
    let mut variants: Vec<Variant> = Vec::new();
    if matches!(grid, Grid::Components | Grid::Both) {
        variants.extend(component_grid(&cfg.train));
    }
    if matches!(grid, Grid::Spans | Grid::Both) {
        variants.extend(span_grid(&cfg.train, max_spans));
    }
    let run = |v: &Variant| run_variant(v, &data.train_videos, &data.train_music, &data.train_pairs, &eval).0;
    let rows: Vec<AblationRow> = if parallel {
        std::thread::scope(|s| {
            let handles: Vec<_> = variants.iter().map(|v| s.spawn(move || run(v))).collect();
            handles.into_iter().map(|h| h.join().expect("ablation worker panicked")).collect()
        })
    } else {
        variants.iter().map(run).collect()
    };
    write_jsonl(&out.join("ablation.jsonl"), &rows)?;
    let table = out.join("ablation.txt");
    std::fs::write(&table, ablation_table(&rows)).map_err(|e| CliError::io(&table, e))?;
    write_snapshot(cfg, out)?;
    Ok(rows)
}
