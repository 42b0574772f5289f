//! Span-level video mixup guided by input-gradient saliency.

use alloc::vec::Vec;

use crate::autodiff::Tape;
use crate::backbone::{embed_videos, ModelParams, NoRng};
use crate::error::{contract, dim_err, Result};
use crate::losses::{triplet_loss, LossWeights, TripleSampling};
use crate::tensor::Tensor;

/// Per-frame saliency of one video.
#[derive(Debug, Clone, PartialEq)]
pub struct SaliencyProfile(pub Vec<f64>);

impl SaliencyProfile {
    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

/// Batch context for the saliency pass: everything the triplet loss needs besides the videos.
pub struct SaliencyContext<'a> {
    /// `B x d_e` music targets, held constant.
    pub music: &'a Tensor,
    pub intra_video: &'a Tensor,
    pub intra_music: &'a Tensor,
    pub weights: &'a LossWeights,
    pub sampling: &'a TripleSampling,
}

/// Per-frame L2 norm of the batch triplet-loss gradient with respect to each
/// input frame. Dropout is off so the result is deterministic.
pub fn saliency(params: &ModelParams, videos: &[&Tensor], ctx: &SaliencyContext<'_>) -> Result<Vec<SaliencyProfile>> {
    if let Some(i) = videos.iter().position(|v| v.rows() == 0) {
        return Err(contract!("video {i} has no frames"));
    }
    let mut tape = Tape::new();
    let vars = params.register(&mut tape);
    let out = embed_videos(&mut tape, &vars, videos, 0.0, &mut NoRng, true)?;
    let music = tape.constant(ctx.music.clone());
    let loss = triplet_loss(&mut tape, out.embedding, music, ctx.intra_video, ctx.intra_music, ctx.weights, ctx.sampling)?;
    let grads = tape.backward(loss.total)?;
    Ok(out.inputs.iter().map(|&v| SaliencyProfile(grads.get(v).row_norms().into_data())).collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize), serde(rename_all = "snake_case"))]
pub enum SpanRounding {
    /// `[x]` read as round-half-up.
    #[default]
    HalfUp,
    Floor,
}

/// `max(min([lambda0 * len_v1], len_v2), 1)`, additionally capped at `len_v1`.
pub fn span_length(len_v1: usize, len_v2: usize, lambda0: f64, rounding: SpanRounding) -> usize {
    let x = lambda0 * len_v1 as f64;
    let r = match rounding {
        SpanRounding::HalfUp => libm::floor(x + 0.5),
        SpanRounding::Floor => libm::floor(x),
    } as usize;
    r.min(len_v2).max(1).min(len_v1.max(1))
}

/// Half-open frame range `[start, start + len)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct Span {
    pub start: usize,
    pub len: usize,
}

impl Span {
    pub fn end(&self) -> usize {
        self.start + self.len
    }

    fn overlaps(&self, other: &Span) -> bool {
        self.start < other.end() && other.start < self.end()
    }
}

/// Greedy choice of `n` non-overlapping windows of length `len`, each the best
/// remaining by window sum (lowest when `lowest`), ties to the smallest start.
fn pick_windows(s: &[f64], len: usize, n: usize, lowest: bool) -> Vec<Span> {
    let count = if len == 0 || len > s.len() { 0 } else { s.len() - len + 1 };
    // Direct window sums (no running total) keep equal windows bit-identical for tie-breaking.
    let sums: Vec<f64> = (0..count).map(|i| s[i..i + len].iter().sum()).collect();
    let mut chosen: Vec<Span> = Vec::with_capacity(n);
    for _ in 0..n {
        let mut best: Option<(usize, f64)> = None;
        for (start, &v) in sums.iter().enumerate() {
            let cand = Span { start, len };
            if chosen.iter().any(|c| c.overlaps(&cand)) {
                continue;
            }
            let better = match best {
                None => true,
                Some((_, b)) => (lowest && v < b) || (!lowest && v > b),
            };
            if better {
                best = Some((start, v));
            }
        }
        match best {
            Some((start, _)) => chosen.push(Span { start, len }),
            None => break,
        }
    }
    chosen.sort_by_key(|s| s.start);
    chosen
}

/// Least-salient window of `v1` (receiver) and most-salient window of `v2` (donor).
pub fn select_spans(s1: &SaliencyProfile, s2: &SaliencyProfile, len: usize) -> Result<(Span, Span)> {
    if len == 0 || len > s1.len() || len > s2.len() {
        return Err(contract!("span length {len} does not fit profiles of length {} and {}", s1.len(), s2.len()));
    }
    let r = pick_windows(&s1.0, len, 1, true)[0];
    let d = pick_windows(&s2.0, len, 1, false)[0];
    Ok((r, d))
}

/// Up to `n` disjoint receiver/donor window pairs of length `len`, paired in positional order.
pub fn select_spans_n(s1: &SaliencyProfile, s2: &SaliencyProfile, len: usize, n: usize) -> Result<Vec<(Span, Span)>> {
    if len == 0 || len > s1.len() || len > s2.len() || n == 0 {
        return Err(contract!("span length {len} x {n} does not fit profiles of length {} and {}", s1.len(), s2.len()));
    }
    let r = pick_windows(&s1.0, len, n, true);
    let d = pick_windows(&s2.0, len, n, false);
    Ok(r.into_iter().zip(d).collect())
}

#[derive(Debug, Clone, PartialEq)]
pub struct MixedSample {
    pub frames: Tensor,
    /// Donor fraction of the mixed video, `replaced / |v1|`.
    pub lambda: f64,
    /// Batch positions of the receiver (1) and donor (2).
    pub receiver: usize,
    pub donor: usize,
    pub spans: Vec<(Span, Span)>,
}

/// Replaces each receiver window of `v1` with the paired donor window of `v2`.
pub fn splice(v1: &Tensor, v2: &Tensor, spans: &[(Span, Span)]) -> Result<(Tensor, f64)> {
    if v1.cols() != v2.cols() {
        return Err(dim_err!("splice: frame dims {} and {} differ", v1.cols(), v2.cols()));
    }
    let c = v1.cols();
    let mut data = v1.data().to_vec();
    let mut replaced = 0;
    for (r, d) in spans {
        if r.len != d.len || r.end() > v1.rows() || d.end() > v2.rows() {
            return Err(contract!("splice: spans {r:?} / {d:?} do not fit videos of {} and {} frames", v1.rows(), v2.rows()));
        }
        data[r.start * c..r.end() * c].copy_from_slice(&v2.data()[d.start * c..d.end() * c]);
        replaced += r.len;
    }
    let lambda = replaced as f64 / v1.rows() as f64;
    Ok((Tensor::new(v1.rows(), c, data)?, lambda))
}

/// Uniformly random cyclic permutation (Sattolo); never maps an index to itself.
pub fn derangement<R: rand::Rng + ?Sized>(n: usize, rng: &mut R) -> Vec<usize> {
    let mut p: Vec<usize> = (0..n).collect();
    for i in (1..n).rev() {
        let j = rng.random_range(0..i);
        p.swap(i, j);
    }
    p
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MixSettings {
    pub lambda0: f64,
    pub spans: usize,
    pub rounding: SpanRounding,
}

impl Default for MixSettings {
    fn default() -> Self {
        MixSettings { lambda0: 0.4, spans: 1, rounding: SpanRounding::HalfUp }
    }
}

/// Pairs every video with a deranged partner and splices the partner's most
/// salient span(s) into its least salient span(s).
///
/// Samples whose donor fraction would reach 1 (the whole receiver replaced) are
/// left out. Batches of fewer than two videos produce nothing.
pub fn mix_batch<R: rand::Rng + ?Sized>(
    videos: &[&Tensor],
    profiles: &[SaliencyProfile],
    settings: &MixSettings,
    rng: &mut R,
) -> Result<Vec<MixedSample>> {
    if videos.len() != profiles.len() {
        return Err(dim_err!("{} videos but {} saliency profiles", videos.len(), profiles.len()));
    }
    if videos.len() < 2 {
        return Ok(Vec::new());
    }
    if settings.spans == 0 {
        return Err(contract!("span count must be at least 1"));
    }
    let partner = derangement(videos.len(), rng);
    let mut out = Vec::with_capacity(videos.len());
    for (i, &j) in partner.iter().enumerate() {
        let (v1, v2) = (videos[i], videos[j]);
        let len = span_length(v1.rows(), v2.rows(), settings.lambda0, settings.rounding);
        // Extra spans only while they still fit and leave part of v1 intact.
        let mut n = settings.spans;
        while n > 1 && (n * len >= v1.rows() || n * len > v2.rows()) {
            n -= 1;
        }
        let spans = select_spans_n(&profiles[i], &profiles[j], len, n)?;
        let (frames, lambda) = splice(v1, v2, &spans)?;
        if lambda >= 1.0 {
            continue;
        }
        out.push(MixedSample { frames, lambda, receiver: i, donor: j, spans });
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::seeded;
    use alloc::vec;

    #[test]
    fn span_length_cases() {
        assert_eq!(span_length(10, 5, 0.4, SpanRounding::HalfUp), 4);
        assert_eq!(span_length(1, 7, 0.4, SpanRounding::HalfUp), 1);
        assert_eq!(span_length(10, 2, 0.4, SpanRounding::HalfUp), 2);
        // 0.4 * 9 = 3.6
        assert_eq!(span_length(9, 9, 0.4, SpanRounding::HalfUp), 4);
        assert_eq!(span_length(9, 9, 0.4, SpanRounding::Floor), 3);
    }

    #[test]
    fn select_unique_extremes() {
        let (r, d) = select_spans(&SaliencyProfile(vec![5.0, 1.0, 1.0, 5.0]), &SaliencyProfile(vec![0.0, 9.0, 9.0, 0.0]), 2).unwrap();
        assert_eq!(r, Span { start: 1, len: 2 });
        assert_eq!(d, Span { start: 1, len: 2 });
    }

    #[test]
    fn ties_take_smallest_start() {
        let flat = SaliencyProfile(vec![1.0; 6]);
        let (r, d) = select_spans(&flat, &flat, 3).unwrap();
        assert_eq!((r.start, d.start), (0, 0));
    }

    #[test]
    fn splice_keeps_outside_frames() {
        let v1 = Tensor::new(10, 2, (0..20).map(f64::from).collect()).unwrap();
        let v2 = Tensor::new(4, 2, (100..108).map(f64::from).collect()).unwrap();
        let (m, lambda) = splice(&v1, &v2, &[(Span { start: 3, len: 4 }, Span { start: 0, len: 4 })]).unwrap();
        assert_eq!(m.rows(), 10);
        assert_eq!(lambda, 0.4);
        for f in (0..3).chain(7..10) {
            assert_eq!(m.row(f), v1.row(f));
        }
        for f in 3..7 {
            assert_eq!(m.row(f), v2.row(f - 3));
        }
    }

    #[test]
    fn full_replacement_is_lambda_one() {
        let v1 = Tensor::full(3, 2, 1.0);
        let v2 = Tensor::full(5, 2, 2.0);
        let (m, lambda) = splice(&v1, &v2, &[(Span { start: 0, len: 3 }, Span { start: 1, len: 3 })]).unwrap();
        assert_eq!(lambda, 1.0);
        assert_eq!(m, Tensor::full(3, 2, 2.0));
    }

    #[test]
    fn self_mix_is_identity() {
        let v = Tensor::new(5, 2, (0..10).map(f64::from).collect()).unwrap();
        let s = Span { start: 1, len: 2 };
        assert_eq!(splice(&v, &v, &[(s, s)]).unwrap().0, v);
    }

    #[test]
    fn splice_dim_mismatch() {
        let r = splice(&Tensor::zeros(3, 2), &Tensor::zeros(3, 3), &[]);
        assert!(matches!(r, Err(crate::Error::Dimension(_))));
    }

    #[test]
    fn derangement_has_no_fixed_points() {
        assert_eq!(derangement(2, &mut seeded(0)), [1, 0]);
        for seed in 0..50 {
            let p = derangement(8, &mut seeded(seed));
            assert!(p.iter().enumerate().all(|(i, &j)| i != j));
        }
        assert_eq!(derangement(8, &mut seeded(3)), derangement(8, &mut seeded(3)));
    }

    #[test]
    fn mix_batch_of_one_is_empty() {
        let v = Tensor::zeros(4, 2);
        let out = mix_batch(&[&v], &[SaliencyProfile(vec![0.0; 4])], &MixSettings::default(), &mut seeded(0)).unwrap();
        assert!(out.is_empty());
    }

    #[test]
    fn multi_span_respects_capacity() {
        let v1 = Tensor::new(10, 1, (0..10).map(f64::from).collect()).unwrap();
        let v2 = Tensor::new(10, 1, (10..20).map(f64::from).collect()).unwrap();
        let p1 = SaliencyProfile((0..10).map(|x| x as f64).collect());
        let p2 = SaliencyProfile((0..10).map(|x| -(x as f64)).collect());
        let settings = MixSettings { spans: 2, ..Default::default() };
        let out = mix_batch(&[&v1, &v2], &[p1, p2], &settings, &mut seeded(1)).unwrap();
        assert_eq!(out.len(), 2);
        for m in &out {
            assert_eq!(m.spans.len(), 2);
            assert!((m.lambda - 0.8).abs() < 1e-15);
        }
        let settings = MixSettings { spans: 3, ..Default::default() };
        let p1 = SaliencyProfile(vec![0.0; 10]);
        let out = mix_batch(&[&v1, &v2], &[p1.clone(), p1], &settings, &mut seeded(1)).unwrap();
        assert!(out.iter().all(|m| m.spans.len() == 2));
    }
}
