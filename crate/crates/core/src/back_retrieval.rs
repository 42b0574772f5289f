//! Back retrieval: a music-to-video model mints extra training pairs.

use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use rand::Rng as _;

use crate::backbone::{music_embeddings, video_embeddings, ModelParams};
use crate::config::TrainConfig;
use crate::dataset::{make_batches, FeatureBank, Origin, PairRecord};
use crate::error::{contract, Result};
use crate::noise::SoftLabel;
use crate::optim::AdamState;
use crate::rng::{self, derive_seed, Stream};
use crate::tensor::Tensor;
use crate::train::{train_step, Direction, StepContext, TrainingSet};

/// Candidate list and choice for one music query.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct AugmentationEntry {
    pub music_id: String,
    /// Top-ranked `(video id, score)` in descending score order.
    pub candidates: Vec<(String, f64)>,
    pub chosen: String,
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct AugmentationReport {
    pub seed: u64,
    pub top_k: usize,
    pub entries: Vec<AugmentationEntry>,
}

/// Trains a model whose music branch is the query side, using the supervised
/// triplet objective only. `set` should hold original pairs.
pub fn train_reverse_model(cfg: &TrainConfig, set: &TrainingSet<'_>) -> Result<ModelParams> {
    cfg.validate()?;
    let dims = cfg.dims(set.videos.dim, set.music.dim);
    let mut params = ModelParams::init(dims, derive_seed(cfg.seed, Stream::ReverseModel, 0, 0))?;
    let mut adam = AdamState::new(cfg.learning_rate, &ModelParams::shapes_for(dims))?;
    let soft: Vec<Option<SoftLabel>> = vec![None; set.len()];
    let ctx = StepContext {
        cfg,
        set,
        soft: &soft,
        bank: None,
        regularize: false,
        direction: Direction::MusicToVideo,
        dropout_stream: Stream::ReverseModel,
    };
    for epoch in 0..cfg.reverse_epochs {
        // Offset keeps batch orders distinct from the forward model's epochs.
        let seed = derive_seed(cfg.seed, Stream::ReverseModel, epoch as u64 + 1, 1);
        for (s, batch) in make_batches(set.len(), cfg.batch_size, seed)?.iter().enumerate() {
            // Epochs shifted by one so step streams never coincide with the init stream.
            train_step(&mut params, &mut adam, &ctx, batch, epoch + 1, s)?;
        }
    }
    Ok(params)
}

/// Indices of the `k` largest scores, ties to the smaller index.
fn top_k(scores: &[f64], k: usize) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..scores.len()).collect();
    idx.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]).then(a.cmp(&b)));
    idx.truncate(k);
    idx
}

/// For every music item, ranks all videos with the reverse model and pairs the
/// music with one of the top `top_k` videos drawn uniformly at random.
pub fn augment(
    reverse: &ModelParams,
    videos: &FeatureBank,
    music: &FeatureBank,
    top_k_count: usize,
    seed: u64,
) -> Result<(Vec<PairRecord>, AugmentationReport)> {
    if top_k_count == 0 {
        return Err(contract!("back retrieval needs top_k >= 1"));
    }
    if videos.is_empty() || music.is_empty() {
        return Err(contract!("back retrieval needs non-empty video and music banks"));
    }
    let frames: Vec<&Tensor> = videos.items().iter().map(|v| &v.frames).collect();
    let raw: Vec<&Tensor> = music.items().iter().map(|m| &m.frames).collect();
    let v = video_embeddings(reverse, &frames)?;
    let m = music_embeddings(reverse, &Tensor::concat_rows(&raw)?)?;
    let scores = m.matmul(&v.transpose())?;
    let mut pairs = Vec::with_capacity(music.len());
    let mut entries = Vec::with_capacity(music.len());
    for (i, item) in music.items().iter().enumerate() {
        let row = scores.row(i);
        let top = top_k(row, top_k_count);
        let pick = rng::stream(seed, Stream::BackRetrieval, i as u64, 0).random_range(0..top.len());
        let chosen = videos.get(top[pick]).id.clone();
        pairs.push(PairRecord { video_id: chosen.clone(), music_id: item.id.clone(), origin: Origin::BackRetrieved, true_match: None });
        entries.push(AugmentationEntry {
            music_id: item.id.clone(),
            candidates: top.iter().map(|&j| (videos.get(j).id.clone(), row[j])).collect(),
            chosen,
        });
    }
    Ok((pairs, AugmentationReport { seed, top_k: top_k_count, entries }))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn top_k_orders_and_breaks_ties() {
        assert_eq!(top_k(&[0.1, 0.9, 0.5, 0.9], 3), [1, 3, 2]);
        assert_eq!(top_k(&[1.0, 2.0], 5), [1, 0]);
    }
}
