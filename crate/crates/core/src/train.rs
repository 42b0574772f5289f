//! Training loop: supervised warm-up, then per-epoch noise partitioning,
//! relabeling and the regularized objective.

use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use rand::seq::SliceRandom;

use crate::autodiff::{Tape, Var};
use crate::back_retrieval::{augment, train_reverse_model, AugmentationReport};
use crate::backbone::{embed_music, embed_videos, music_embeddings, ModelParams, NoRng, PARAM_NAMES};
use crate::config::{RDropScope, TrainConfig};
use crate::dataset::{make_batches, FeatureBank, Origin, PairRecord};
use crate::error::{contract, dim_err, Result};
use crate::eval::{auroc, recall_at_k, EvalResult};
use crate::losses::{mix_loss, rdrop_loss, total_loss, triplet_loss, MixInputs, TripleSampling};
use crate::noise::{fit_gmm, noisy_posterior, partition, relabel, Component, SoftLabel};
use crate::optim::AdamState;
use crate::rng::{self, derive_seed, Stream};
use crate::saliency::{mix_batch, saliency, SaliencyContext};
use crate::tensor::Tensor;

/// Training pairs resolved against their feature banks.
#[derive(Debug, Clone)]
pub struct TrainingSet<'a> {
    pub videos: &'a FeatureBank,
    pub music: &'a FeatureBank,
    pub records: Vec<PairRecord>,
    /// `(video index, music index)` per record.
    index: Vec<(usize, usize)>,
    /// Frame means per video, `n_v x d_v`.
    video_means: Tensor,
    /// Raw music vectors, `n_m x d_m`.
    music_raw: Tensor,
}

fn resolve(videos: &FeatureBank, music: &FeatureBank, records: &[PairRecord]) -> Result<Vec<(usize, usize)>> {
    records
        .iter()
        .enumerate()
        .map(|(i, r)| {
            let v = videos.index_of(&r.video_id).ok_or_else(|| contract!("pair {i}: unknown video id `{}`", r.video_id))?;
            let m = music.index_of(&r.music_id).ok_or_else(|| contract!("pair {i}: unknown music id `{}`", r.music_id))?;
            Ok((v, m))
        })
        .collect()
}

impl<'a> TrainingSet<'a> {
    pub fn new(videos: &'a FeatureBank, music: &'a FeatureBank, records: Vec<PairRecord>) -> Result<Self> {
        if records.len() < 3 {
            return Err(contract!("training needs at least 3 pairs, got {}", records.len()));
        }
        let index = resolve(videos, music, &records)?;
        let means: Vec<Tensor> = videos.items().iter().map(|v| v.frames.mean_rows()).collect::<Result<_>>()?;
        let means: Vec<&Tensor> = means.iter().collect();
        let raw: Vec<&Tensor> = music.items().iter().map(|m| &m.frames).collect();
        Ok(TrainingSet { videos, music, records, index, video_means: Tensor::concat_rows(&means)?, music_raw: Tensor::concat_rows(&raw)? })
    }

    /// The same banks with `extra` pairs appended.
    pub fn extended(&self, extra: Vec<PairRecord>) -> Result<Self> {
        let mut records = self.records.clone();
        let more = resolve(self.videos, self.music, &extra)?;
        records.extend(extra);
        let mut index = self.index.clone();
        index.extend(more);
        Ok(TrainingSet { records, index, ..self.clone() })
    }

    /// Pairs whose origin is not back retrieval.
    pub fn originals(&self) -> Result<Self> {
        let records: Vec<PairRecord> = self.records.iter().filter(|r| r.origin != Origin::BackRetrieved).cloned().collect();
        TrainingSet::new(self.videos, self.music, records)
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn pair(&self, i: usize) -> (usize, usize) {
        self.index[i]
    }

    pub fn video_frames(&self, i: usize) -> &'a Tensor {
        &self.videos.get(self.index[i].0).frames
    }

    pub fn music_raw(&self) -> &Tensor {
        &self.music_raw
    }

    fn video_means_of(&self, pairs: &[usize]) -> Result<Tensor> {
        let idx: Vec<usize> = pairs.iter().map(|&p| self.index[p].0).collect();
        self.video_means.gather_rows(&idx)
    }

    fn music_raw_of(&self, pairs: &[usize]) -> Result<Tensor> {
        let idx: Vec<usize> = pairs.iter().map(|&p| self.index[p].1).collect();
        self.music_raw.gather_rows(&idx)
    }

    /// `Some(true)` for pairs known to be corrupted, `None` when any pair lacks ground truth.
    fn corrupted(&self) -> Option<Vec<bool>> {
        self.records.iter().map(|r| r.true_match.map(|t| !t)).collect()
    }
}

/// Video queries against a music gallery with one correct item per query.
#[derive(Debug, Clone)]
pub struct EvalSet<'a> {
    pub queries: Vec<&'a Tensor>,
    pub gallery: Tensor,
    pub truth: Vec<usize>,
}

impl<'a> EvalSet<'a> {
    /// Every pair contributes its video as a query; the gallery is the whole music bank.
    pub fn new(videos: &'a FeatureBank, music: &FeatureBank, records: &[PairRecord]) -> Result<Self> {
        let index = resolve(videos, music, records)?;
        let raw: Vec<&Tensor> = music.items().iter().map(|m| &m.frames).collect();
        Ok(EvalSet {
            queries: index.iter().map(|&(v, _)| &videos.get(v).frames).collect(),
            gallery: Tensor::concat_rows(&raw)?,
            truth: index.iter().map(|&(_, m)| m).collect(),
        })
    }

    pub fn evaluate(&self, params: &ModelParams, ks: &[usize]) -> Result<EvalResult> {
        recall_at_k(params, &self.queries, &self.gallery, &self.truth, ks)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize), serde(rename_all = "snake_case"))]
pub enum Phase {
    Warmup,
    Robust,
}

/// Loss values of one optimizer step.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct StepLoss {
    pub epoch: usize,
    pub step: usize,
    pub l_t: f64,
    pub l_r: f64,
    pub l_m: f64,
    pub total: f64,
}

/// Noise-partition statistics for one epoch.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct NoiseDiagnostics {
    pub clean_component: Component,
    pub noisy_component: Component,
    pub gmm_iterations: usize,
    pub n_clean: usize,
    pub n_noisy: usize,
    /// Against ground truth when every pair carries it.
    pub precision: Option<f64>,
    pub recall: Option<f64>,
    pub auroc: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct EpochLog {
    pub epoch: usize,
    pub phase: Phase,
    pub steps: usize,
    pub mean_l_t: f64,
    pub mean_l_r: f64,
    pub mean_l_m: f64,
    pub mean_total: f64,
    pub noise: Option<NoiseDiagnostics>,
    pub test: Option<EvalResult>,
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub params: ModelParams,
    pub epochs: Vec<EpochLog>,
    pub steps: Vec<StepLoss>,
    pub augmentation: Option<AugmentationReport>,
    /// Pairs actually trained on, including back-retrieved ones.
    pub pairs: Vec<PairRecord>,
}

/// Which branch plays the query role in the triplet loss.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) enum Direction {
    VideoToMusic,
    MusicToVideo,
}

pub(crate) struct StepContext<'s, 'a> {
    pub cfg: &'s TrainConfig,
    pub set: &'s TrainingSet<'a>,
    /// Per pair; `Some` replaces the given music with a soft label.
    pub soft: &'s [Option<SoftLabel>],
    /// Dropout-free embeddings of the whole music bank, needed by R-Drop.
    pub bank: Option<&'s Tensor>,
    pub regularize: bool,
    pub direction: Direction,
    pub dropout_stream: Stream,
}

fn zero(tape: &mut Tape) -> Var {
    tape.constant(Tensor::scalar(0.0))
}

fn step_sampling(cfg: &TrainConfig, stream: Stream, epoch: usize, step: usize) -> TripleSampling {
    TripleSampling { seed: derive_seed(cfg.seed, stream, epoch as u64, step as u64), ..cfg.triple_sampling() }
}

/// Rows of the batch music targets: given labels stay on the tape, soft labels become constants.
fn music_targets(tape: &mut Tape, m: Var, batch: &[usize], soft: &[Option<SoftLabel>]) -> Result<Var> {
    let d_e = tape.value(m).cols();
    if batch.iter().all(|&p| soft[p].is_none()) {
        return Ok(m);
    }
    let mut mask = vec![1.0; batch.len() * d_e];
    let mut fixed = vec![0.0; batch.len() * d_e];
    for (r, &p) in batch.iter().enumerate() {
        if let Some(s) = &soft[p] {
            if s.target.len() != d_e {
                return Err(dim_err!("soft label of width {} for embeddings of width {d_e}", s.target.len()));
            }
            mask[r * d_e..(r + 1) * d_e].fill(0.0);
            fixed[r * d_e..(r + 1) * d_e].copy_from_slice(&s.target);
        }
    }
    let kept = tape.mul_const(m, Tensor::new(batch.len(), d_e, mask)?)?;
    let fixed = tape.constant(Tensor::new(batch.len(), d_e, fixed)?);
    tape.add(kept, fixed)
}

fn intra_music_targets(set: &TrainingSet<'_>, batch: &[usize], soft: &[Option<SoftLabel>]) -> Result<Tensor> {
    let raw = set.music_raw_of(batch)?;
    let d = raw.cols();
    let mut data = raw.into_data();
    for (r, &p) in batch.iter().enumerate() {
        if let Some(s) = &soft[p] {
            data[r * d..(r + 1) * d].copy_from_slice(&s.intra);
        }
    }
    Tensor::new(batch.len(), d, data)
}

/// One optimizer step on `batch` (pair indices).
pub(crate) fn train_step(
    params: &mut ModelParams,
    adam: &mut AdamState,
    ctx: &StepContext<'_, '_>,
    batch: &[usize],
    epoch: usize,
    step: usize,
) -> Result<StepLoss> {
    let cfg = ctx.cfg;
    let set = ctx.set;
    let drop = cfg.drop_rate();
    let weights = cfg.loss_weights();
    let sampling = step_sampling(cfg, Stream::Subsample, epoch, step);
    let videos: Vec<&Tensor> = batch.iter().map(|&p| set.video_frames(p)).collect();
    let music_feats = set.music_raw_of(batch)?;
    let intra_v = set.video_means_of(batch)?;
    let intra_m = intra_music_targets(set, batch, ctx.soft)?;

    let mut tape = Tape::new();
    let vars = params.register(&mut tape);
    let mut drng = rng::stream(cfg.seed, ctx.dropout_stream, epoch as u64, step as u64);
    let v_out = embed_videos(&mut tape, &vars, &videos, drop, &mut drng, false)?;
    let m_raw = embed_music(&mut tape, &vars, &music_feats, drop, &mut drng)?;
    let m = music_targets(&mut tape, m_raw, batch, ctx.soft)?;
    let v = v_out.embedding;

    let l_t = match ctx.direction {
        Direction::VideoToMusic => triplet_loss(&mut tape, v, m, &intra_v, &intra_m, &weights, &sampling)?,
        Direction::MusicToVideo => triplet_loss(&mut tape, m, v, &intra_m, &intra_v, &weights, &sampling)?,
    }
    .total;

    let l_r = if ctx.regularize && cfg.rdrop {
        let rows: Vec<usize> = match cfg.rdrop_scope {
            RDropScope::Noisy => (0..batch.len()).filter(|&r| ctx.soft[batch[r]].is_some()).collect(),
            RDropScope::All => (0..batch.len()).collect(),
        };
        if rows.is_empty() {
            zero(&mut tape)
        } else {
            let bank = ctx.bank.ok_or_else(|| contract!("R-Drop needs candidate bank embeddings"))?;
            let bank_t = tape.constant(bank.transpose());
            let v1 = tape.gather_rows(v, rows.clone())?;
            let logits1 = tape.matmul(v1, bank_t)?;
            let again: Vec<&Tensor> = rows.iter().map(|&r| videos[r]).collect();
            let mut rrng = rng::stream(cfg.seed, Stream::RDropPass, epoch as u64, step as u64);
            let v2 = embed_videos(&mut tape, &vars, &again, drop, &mut rrng, false)?.embedding;
            let logits2 = tape.matmul(v2, bank_t)?;
            let all: Vec<usize> = (0..rows.len()).collect();
            rdrop_loss(&mut tape, logits1, logits2, &all)?
        }
    } else {
        zero(&mut tape)
    };

    let l_m = if ctx.regularize && cfg.mixup {
        // Saliency sees the same targets without dropout.
        let m_clean = {
            let mut t = Tape::new();
            let pv = params.register(&mut t);
            let raw = embed_music(&mut t, &pv, &music_feats, 0.0, &mut NoRng)?;
            let mv = music_targets(&mut t, raw, batch, ctx.soft)?;
            t.value(mv).clone()
        };
        let profiles = saliency(
            params,
            &videos,
            &SaliencyContext { music: &m_clean, intra_video: &intra_v, intra_music: &intra_m, weights: &weights, sampling: &sampling },
        )?;
        let mut prng = rng::stream(cfg.seed, Stream::MixPartners, epoch as u64, step as u64);
        let mixed = mix_batch(&videos, &profiles, &cfg.mix_settings(), &mut prng)?;
        if mixed.len() < 3 {
            zero(&mut tape)
        } else {
            let frames: Vec<&Tensor> = mixed.iter().map(|s| &s.frames).collect();
            let mut mrng = rng::stream(cfg.seed, Stream::MixDropout, epoch as u64, step as u64);
            let v_hat = embed_videos(&mut tape, &vars, &frames, drop, &mut mrng, false)?.embedding;
            let receivers: Vec<usize> = mixed.iter().map(|s| s.receiver).collect();
            let donors: Vec<usize> = mixed.iter().map(|s| s.donor).collect();
            let music1 = tape.gather_rows(m, receivers.clone())?;
            let music2 = tape.gather_rows(m, donors.clone())?;
            let means: Vec<Tensor> = frames.iter().map(|f| f.mean_rows()).collect::<Result<_>>()?;
            let means: Vec<&Tensor> = means.iter().collect();
            let intra_mixed = Tensor::concat_rows(&means)?;
            let intra_music1 = intra_m.gather_rows(&receivers)?;
            let intra_music2 = intra_m.gather_rows(&donors)?;
            let lambdas: Vec<f64> = mixed.iter().map(|s| s.lambda).collect();
            let inputs = MixInputs {
                mixed_video: v_hat,
                music1,
                music2,
                intra_mixed: &intra_mixed,
                intra_music1: &intra_music1,
                intra_music2: &intra_music2,
                lambdas: &lambdas,
            };
            mix_loss(&mut tape, &inputs, &weights, &sampling, cfg.mix_weight_convention)?
        }
    } else {
        zero(&mut tape)
    };

    let total = total_loss(&mut tape, l_t, l_r, l_m)?;
    let grads = tape.backward(total)?;
    let grads: Vec<Tensor> = vars.all().iter().map(|&p| grads.get(p)).collect();
    adam.step(&mut params.tensors_mut(), &grads, &PARAM_NAMES)?;
    Ok(StepLoss {
        epoch,
        step,
        l_t: tape.value(l_t).item()?,
        l_r: tape.value(l_r).item()?,
        l_m: tape.value(l_m).item()?,
        total: tape.value(total).item()?,
    })
}

/// Splits `n` items into `ceil(n / max)` chunks whose sizes differ by at most one.
fn balanced_chunks(n: usize, max: usize) -> Vec<core::ops::Range<usize>> {
    let k = n.div_ceil(max);
    let (base, extra) = (n / k, n % k);
    let mut out = Vec::with_capacity(k);
    let mut start = 0;
    for c in 0..k {
        let len = base + usize::from(c < extra);
        out.push(start..start + len);
        start += len;
    }
    out
}

/// Dropout-free per-sample triplet losses under the given labels, evaluated
/// in seeded batches so every pair is scored against in-batch negatives.
pub fn per_sample_losses(params: &ModelParams, set: &TrainingSet<'_>, cfg: &TrainConfig, epoch: usize) -> Result<Vec<f64>> {
    let n = set.len();
    if n < 3 {
        return Err(contract!("per-sample losses need at least 3 pairs, got {n}"));
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut rng::stream(cfg.seed, Stream::LossEval, epoch as u64, 0));
    let weights = cfg.loss_weights();
    let mut out = vec![0.0; n];
    for (c, range) in balanced_chunks(n, cfg.batch_size).into_iter().enumerate() {
        let batch = &order[range];
        let videos: Vec<&Tensor> = batch.iter().map(|&p| set.video_frames(p)).collect();
        let mut tape = Tape::new();
        let vars = params.register(&mut tape);
        let v = embed_videos(&mut tape, &vars, &videos, 0.0, &mut NoRng, false)?.embedding;
        let m = embed_music(&mut tape, &vars, &set.music_raw_of(batch)?, 0.0, &mut NoRng)?;
        let sampling = step_sampling(cfg, Stream::LossEval, epoch, c + 1);
        let loss = triplet_loss(&mut tape, v, m, &set.video_means_of(batch)?, &set.music_raw_of(batch)?, &weights, &sampling)?;
        for (&p, &l) in batch.iter().zip(tape.value(loss.per_sample).data()) {
            out[p] = l;
        }
    }
    Ok(out)
}

/// Result of splitting the training pairs at the start of a robust epoch.
#[derive(Debug, Clone)]
pub struct NoiseStep {
    pub w: Vec<f64>,
    pub soft: Vec<Option<SoftLabel>>,
    pub diagnostics: NoiseDiagnostics,
}

/// Fits the loss mixture, partitions at `tau` and relabels the noisy pairs
/// against `bank` (dropout-free music embeddings of the whole bank).
pub fn noise_step(params: &ModelParams, set: &TrainingSet<'_>, cfg: &TrainConfig, epoch: usize, bank: &Tensor) -> Result<NoiseStep> {
    let losses = per_sample_losses(params, set, cfg, epoch)?;
    let gmm = fit_gmm(&losses, cfg.gmm_max_iters, cfg.gmm_tol)?;
    let w = noisy_posterior(&gmm, &losses);
    let split = partition(&w, cfg.tau)?;
    let noisy_videos: Vec<&Tensor> = split.noisy.iter().map(|&p| set.video_frames(p)).collect();
    let labels = relabel(params, &noisy_videos, bank, set.music_raw(), cfg.temperature)?;
    let mut soft = vec![None; set.len()];
    for (&p, label) in split.noisy.iter().zip(labels) {
        soft[p] = Some(label);
    }
    let (precision, recall, auc) = match set.corrupted() {
        Some(truth) => {
            let flagged_bad = split.noisy.iter().filter(|&&p| truth[p]).count() as f64;
            let n_bad = truth.iter().filter(|&&t| t).count() as f64;
            let precision = (!split.noisy.is_empty()).then(|| flagged_bad / split.noisy.len() as f64);
            let recall = (n_bad > 0.0).then(|| flagged_bad / n_bad);
            (precision, recall, auroc(&w, &truth).ok())
        }
        None => (None, None, None),
    };
    let diagnostics = NoiseDiagnostics {
        clean_component: *gmm.clean(),
        noisy_component: *gmm.noisy(),
        gmm_iterations: gmm.log_likelihood.len(),
        n_clean: split.clean.len(),
        n_noisy: split.noisy.len(),
        precision,
        recall,
        auroc: auc,
    };
    Ok(NoiseStep { w, soft, diagnostics })
}

fn mean(xs: impl Iterator<Item = f64>) -> f64 {
    let (s, n) = xs.fold((0.0, 0usize), |(s, n), x| (s + x, n + 1));
    if n == 0 {
        0.0
    } else {
        s / n as f64
    }
}

fn epoch_log(epoch: usize, phase: Phase, steps: &[StepLoss], noise: Option<NoiseDiagnostics>, test: Option<EvalResult>) -> EpochLog {
    EpochLog {
        epoch,
        phase,
        steps: steps.len(),
        mean_l_t: mean(steps.iter().map(|s| s.l_t)),
        mean_l_r: mean(steps.iter().map(|s| s.l_r)),
        mean_l_m: mean(steps.iter().map(|s| s.l_m)),
        mean_total: mean(steps.iter().map(|s| s.total)),
        noise,
        test,
    }
}

/// Runs the configured schedule on an already assembled training set.
pub fn fit(cfg: &TrainConfig, set: &TrainingSet<'_>, eval: Option<&EvalSet<'_>>) -> Result<(ModelParams, Vec<EpochLog>, Vec<StepLoss>)> {
    cfg.validate()?;
    let dims = cfg.dims(set.videos.dim, set.music.dim);
    let mut params = ModelParams::init(dims, cfg.seed)?;
    let mut adam = AdamState::new(cfg.learning_rate, &ModelParams::shapes_for(dims))?;
    let no_soft: Vec<Option<SoftLabel>> = vec![None; set.len()];
    let mut logs = Vec::with_capacity(cfg.epochs);
    let mut all_steps = Vec::new();
    let mut bank: Option<Tensor> = None;
    for epoch in 0..cfg.epochs {
        let robust = epoch >= cfg.warmup_epochs;
        let phase = if robust { Phase::Robust } else { Phase::Warmup };
        let needs_bank = robust && (cfg.self_training || cfg.rdrop);
        if needs_bank && (bank.is_none() || (epoch - cfg.warmup_epochs).is_multiple_of(cfg.bank_refresh_epochs)) {
            bank = Some(music_embeddings(&params, set.music_raw())?);
        }
        let noise = match (&bank, robust && cfg.self_training) {
            (Some(b), true) => Some(noise_step(&params, set, cfg, epoch, b)?),
            _ => None,
        };
        let soft = noise.as_ref().map_or(&no_soft[..], |n| &n.soft[..]);
        let ctx = StepContext {
            cfg,
            set,
            soft,
            bank: bank.as_ref(),
            regularize: robust,
            direction: Direction::VideoToMusic,
            dropout_stream: Stream::Dropout,
        };
        let batches = make_batches(set.len(), cfg.batch_size, derive_seed(cfg.seed, Stream::Batches, epoch as u64, 0))?;
        let mut steps = Vec::with_capacity(batches.len());
        for (s, batch) in batches.iter().enumerate() {
            let step = train_step(&mut params, &mut adam, &ctx, batch, epoch, s)?;
            // Disabled objectives must contribute exactly zero.
            if (!(robust && cfg.rdrop) && step.l_r != 0.0) || (!(robust && cfg.mixup) && step.l_m != 0.0) {
                return Err(contract!("epoch {epoch} step {s}: disabled objective contributed L_R {} L_M {}", step.l_r, step.l_m));
            }
            steps.push(step);
        }
        let test = eval.map(|e| e.evaluate(&params, &cfg.eval_ks)).transpose()?;
        logs.push(epoch_log(epoch, phase, &steps, noise.map(|n| n.diagnostics), test));
        all_steps.extend(steps);
    }
    Ok((params, logs, all_steps))
}

/// Full pipeline: optional back-retrieval augmentation followed by [`fit`].
pub fn train(
    cfg: &TrainConfig,
    videos: &FeatureBank,
    music: &FeatureBank,
    records: &[PairRecord],
    eval: Option<&EvalSet<'_>>,
) -> Result<TrainOutcome> {
    cfg.validate()?;
    let base = TrainingSet::new(videos, music, records.to_vec())?;
    let (set, augmentation) = if cfg.back_retrieval {
        let originals = base.originals()?;
        let reverse = train_reverse_model(cfg, &originals)?;
        let (extra, report) = augment(&reverse, videos, music, cfg.reverse_top_k, cfg.seed)?;
        (base.extended(extra)?, Some(report))
    } else {
        (base, None)
    };
    let (params, epochs, steps) = fit(cfg, &set, eval)?;
    Ok(TrainOutcome { params, epochs, steps, augmentation, pairs: set.records })
}

/// Human-readable one-line summary of an epoch.
pub fn describe_epoch(log: &EpochLog) -> String {
    let mut s = format!(
        "epoch {:>3} {:?} steps {} L_T {:.4} L_R {:.4} L_M {:.4}",
        log.epoch, log.phase, log.steps, log.mean_l_t, log.mean_l_r, log.mean_l_m
    );
    if let Some(n) = &log.noise {
        s.push_str(&format!(" |X| {} |U| {}", n.n_clean, n.n_noisy));
        if let Some(a) = n.auroc {
            s.push_str(&format!(" AUROC {a:.3}"));
        }
    }
    if let Some(t) = &log.test {
        for (k, r) in &t.recall_at {
            s.push_str(&format!(" R@{k} {r:.4}"));
        }
    }
    s
}
