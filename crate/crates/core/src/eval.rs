//! Recall@K over inner-product rankings, plus AUROC for noise detection.

use alloc::collections::BTreeMap;
use alloc::string::String;
use alloc::vec::Vec;

use crate::backbone::{music_embeddings, video_embeddings, ModelParams};
use crate::error::{contract, dim_err, Result};
use crate::tensor::Tensor;

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct EvalResult {
    pub recall_at: BTreeMap<usize, f64>,
    pub n_queries: usize,
    /// FNV-1a over the bit patterns of the similarity matrix.
    pub similarity_checksum: u64,
    pub checkpoint_id: Option<String>,
}

impl EvalResult {
    pub fn recall(&self, k: usize) -> Option<f64> {
        self.recall_at.get(&k).copied()
    }
}

fn fnv1a(bits: impl Iterator<Item = u64>) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in bits {
        for byte in b.to_le_bytes() {
            h ^= u64::from(byte);
            h = h.wrapping_mul(0x0100_0000_01b3);
        }
    }
    h
}

/// 0-based rank of `truth` within `scores`: items scoring higher, plus equal
/// scores at a smaller gallery index.
pub fn rank_of(scores: &[f64], truth: usize) -> usize {
    let t = scores[truth];
    scores.iter().enumerate().filter(|&(j, &s)| s > t || (s == t && j < truth)).count()
}

/// Recall@K from a `queries x gallery` similarity matrix with one ground-truth
/// gallery index per query.
pub fn recall_from_scores(scores: &Tensor, truth: &[usize], ks: &[usize]) -> Result<EvalResult> {
    let (nq, ng) = (scores.rows(), scores.cols());
    if truth.len() != nq {
        return Err(dim_err!("{} ground-truth entries for {nq} queries", truth.len()));
    }
    if let Some(&k) = ks.iter().find(|&&k| k == 0 || k > ng) {
        return Err(contract!("K = {k} outside 1..={ng} (gallery size)"));
    }
    if let Some(&t) = truth.iter().find(|&&t| t >= ng) {
        return Err(contract!("ground truth index {t} outside gallery of {ng}"));
    }
    let ranks: Vec<usize> = (0..nq).map(|i| rank_of(scores.row(i), truth[i])).collect();
    let recall_at = ks
        .iter()
        .map(|&k| {
            let hits = ranks.iter().filter(|&&r| r < k).count();
            (k, if nq == 0 { 0.0 } else { hits as f64 / nq as f64 })
        })
        .collect();
    Ok(EvalResult { recall_at, n_queries: nq, similarity_checksum: fnv1a(scores.data().iter().map(|x| x.to_bits())), checkpoint_id: None })
}

/// Recall@K for video queries against a music gallery (dropout off).
pub fn recall_at_k(
    params: &ModelParams,
    queries: &[&Tensor],
    gallery_features: &Tensor,
    truth: &[usize],
    ks: &[usize],
) -> Result<EvalResult> {
    let q = video_embeddings(params, queries)?;
    let g = music_embeddings(params, gallery_features)?;
    recall_from_scores(&q.matmul(&g.transpose())?, truth, ks)
}

/// Area under the ROC curve of `scores` for detecting `positive` items;
/// tied scores count one half.
pub fn auroc(scores: &[f64], positive: &[bool]) -> Result<f64> {
    if scores.len() != positive.len() {
        return Err(dim_err!("{} scores for {} labels", scores.len(), positive.len()));
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]));
    // Midranks over tie groups.
    let mut rank_sum_pos = 0.0;
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && scores[order[j + 1]] == scores[order[i]] {
            j += 1;
        }
        let mid = (i + j) as f64 / 2.0 + 1.0;
        for &o in &order[i..=j] {
            if positive[o] {
                rank_sum_pos += mid;
            }
        }
        i = j + 1;
    }
    let n_pos = positive.iter().filter(|&&p| p).count() as f64;
    let n_neg = positive.len() as f64 - n_pos;
    if n_pos == 0.0 || n_neg == 0.0 {
        return Err(contract!("AUROC needs both positive and negative items"));
    }
    Ok((rank_sum_pos - n_pos * (n_pos + 1.0) / 2.0) / (n_pos * n_neg))
}
