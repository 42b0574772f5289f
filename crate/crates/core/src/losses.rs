//! Training objectives: the ranking triplet loss with soft intra-modal structure
//! terms, the symmetric-KL dropout consistency loss, the span-mix loss and their sum.

use alloc::vec;
use alloc::vec::Vec;

use rand::Rng as _;

use crate::autodiff::{Tape, Var};
use crate::error::{contract, dim_err, Result};
use crate::rng::{self, Stream};
use crate::tensor::Tensor;

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct LossWeights {
    /// video -> music ranking
    pub lambda1: f64,
    /// music -> video ranking
    pub lambda2: f64,
    /// video structure
    pub lambda3: f64,
    /// music structure
    pub lambda4: f64,
    pub margin: f64,
    pub structure_sign: StructureSign,
}

impl Default for LossWeights {
    fn default() -> Self {
        LossWeights { lambda1: 3.0, lambda2: 1.0, lambda3: 0.2, lambda4: 0.2, margin: 6.0, structure_sign: StructureSign::default() }
    }
}

/// Orientation of the structure coefficient.
///
/// With `C_ijk = sign(g_ik - g_ij) - sign(gt_ik - gt_ij)` a triple contributes
/// `C_ijk (g_ij - g_ik)`, which is zero when both spaces order `j, k` alike and
/// `-2|g_ij - g_ik|` when they disagree: unbounded below, rewarding violations.
/// `Corrective` negates `C_ijk` so every triple contributes `>= 0` and only
/// violated orderings are penalized.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize), serde(rename_all = "snake_case"))]
pub enum StructureSign {
    #[default]
    Corrective,
    AsPrinted,
}

impl StructureSign {
    pub fn factor(self) -> f64 {
        match self {
            StructureSign::Corrective => -1.0,
            StructureSign::AsPrinted => 1.0,
        }
    }
}

/// Which target the mix weight `lambda` multiplies.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize), serde(rename_all = "snake_case"))]
pub enum MixWeightConvention {
    /// `lambda * L(v_hat, m1) + (1 - lambda) * L(v_hat, m2)`, lambda being the donor fraction.
    #[default]
    Paper,
    /// `(1 - lambda) * L(v_hat, m1) + lambda * L(v_hat, m2)`.
    Swapped,
}

/// Triple enumeration policy for the structure terms.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TripleSampling {
    /// Batches up to this size enumerate every `(i, j, k)`.
    pub full_up_to: usize,
    /// Above it, this many random `(j, k)` per anchor, rescaled to the full count.
    pub pairs_per_anchor: usize,
    pub seed: u64,
}

impl Default for TripleSampling {
    fn default() -> Self {
        TripleSampling { full_up_to: 32, pairs_per_anchor: 64, seed: 0 }
    }
}

#[derive(Debug, Clone, Copy)]
pub struct TripletOutput {
    /// `1 x 1`
    pub total: Var,
    /// `B x 1`; row `i` holds every term anchored at `i`.
    pub per_sample: Var,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LossBreakdown {
    pub l_t: f64,
    pub l_r: f64,
    pub l_m: f64,
    pub total: f64,
    pub per_sample: Vec<f64>,
}

fn sign(x: f64) -> f64 {
    if x > 0.0 {
        1.0
    } else if x < 0.0 {
        -1.0
    } else {
        0.0
    }
}

fn gram(x: &Tensor) -> Result<Tensor> {
    x.matmul(&x.transpose())
}

/// `C_ijk = sign(g_ik - g_ij) - sign(gt_ik - gt_ij)` for trainable gram `g` and pre-network gram `gt`.
pub fn structure_coefficient(g: &Tensor, gt: &Tensor, i: usize, j: usize, k: usize) -> f64 {
    sign(g.get(i, k) - g.get(i, j)) - sign(gt.get(i, k) - gt.get(i, j))
}

/// Coefficient matrix `A` with `sum_{i != j != k} C_ijk (g_ij - g_ik) = sum_ij A_ij g_ij`.
fn structure_weights(g: &Tensor, gt: &Tensor, sampling: &TripleSampling, sign_factor: f64, salt: u64) -> Tensor {
    let b = g.rows();
    let mut a = vec![0.0; b * b];
    if b <= sampling.full_up_to {
        for i in 0..b {
            for j in 0..b {
                if j == i {
                    continue;
                }
                for k in 0..b {
                    if k == i || k == j {
                        continue;
                    }
                    let c = sign_factor * structure_coefficient(g, gt, i, j, k);
                    a[i * b + j] += c;
                    a[i * b + k] -= c;
                }
            }
        }
    } else {
        let scale = ((b - 1) * (b - 2)) as f64 / sampling.pairs_per_anchor as f64;
        for i in 0..b {
            let mut r = rng::stream(sampling.seed, Stream::Subsample, salt, i as u64);
            for _ in 0..sampling.pairs_per_anchor {
                let j = loop {
                    let j = r.random_range(0..b);
                    if j != i {
                        break j;
                    }
                };
                let k = loop {
                    let k = r.random_range(0..b);
                    if k != i && k != j {
                        break k;
                    }
                };
                let c = sign_factor * scale * structure_coefficient(g, gt, i, j, k);
                a[i * b + j] += c;
                a[i * b + k] -= c;
            }
        }
    }
    Tensor::from_parts(g.shape(), a)
}

fn off_diagonal(b: usize) -> Tensor {
    let mut t = Tensor::full(b, b, 1.0);
    let mut data = core::mem::take(&mut t).into_data();
    for i in 0..b {
        data[i * b + i] = 0.0;
    }
    Tensor::from_parts(crate::tensor::Shape::new(b, b), data)
}

/// Per-anchor sums of `max(0, s_ij - s_ii + margin)` over `j != i` for scores `anchor * other^T`.
fn ranking_rows(tape: &mut Tape, anchor: Var, other: Var, positive: Var, margin: f64) -> Result<Var> {
    let b = tape.value(anchor).rows();
    let other_t = tape.transpose(other)?;
    let scores = tape.matmul(anchor, other_t)?;
    let shifted = tape.sub_col(scores, positive)?;
    let shifted = tape.add_scalar(shifted, margin)?;
    let hinge = tape.max_with_zero(shifted)?;
    let hinge = tape.mul_const(hinge, off_diagonal(b))?;
    tape.sum_cols(hinge)
}

fn structure_rows(tape: &mut Tape, x: Var, intra: &Tensor, sampling: &TripleSampling, sign: StructureSign, salt: u64) -> Result<Var> {
    let g = gram(tape.value(x))?;
    let gt = gram(intra)?;
    let weights = structure_weights(&g, &gt, sampling, sign.factor(), salt);
    let xt = tape.transpose(x)?;
    let gv = tape.matmul(x, xt)?;
    let weighted = tape.mul_const(gv, weights)?;
    tape.sum_cols(weighted)
}

/// Triplet loss over a batch of `B >= 3` aligned rows.
///
/// Row `i` of `video` is paired with row `i` of `music`; all other rows act as
/// negatives. `intra_video`/`intra_music` are the pre-network features used to
/// define the structure coefficients, which are treated as constants.
pub fn triplet_loss(
    tape: &mut Tape,
    video: Var,
    music: Var,
    intra_video: &Tensor,
    intra_music: &Tensor,
    weights: &LossWeights,
    sampling: &TripleSampling,
) -> Result<TripletOutput> {
    let (vs, ms) = (tape.value(video).shape(), tape.value(music).shape());
    let b = vs.rows;
    if b < 3 {
        return Err(contract!("triplet loss needs a batch of at least 3, got {b}"));
    }
    if ms != vs {
        return Err(dim_err!("video embeddings {vs} vs music embeddings {ms}"));
    }
    if intra_video.rows() != b || intra_music.rows() != b {
        return Err(dim_err!("intra features have {} / {} rows, batch is {b}", intra_video.rows(), intra_music.rows()));
    }
    let prod = tape.mul(video, music)?;
    let positive = tape.sum_cols(prod)?;
    let r1 = ranking_rows(tape, video, music, positive, weights.margin)?;
    let r2 = ranking_rows(tape, music, video, positive, weights.margin)?;
    let r3 = structure_rows(tape, video, intra_video, sampling, weights.structure_sign, 3)?;
    let r4 = structure_rows(tape, music, intra_music, sampling, weights.structure_sign, 4)?;
    let r1 = tape.scale(r1, weights.lambda1)?;
    let r2 = tape.scale(r2, weights.lambda2)?;
    let r3 = tape.scale(r3, weights.lambda3)?;
    let r4 = tape.scale(r4, weights.lambda4)?;
    let inter = tape.add(r1, r2)?;
    let intra = tape.add(r3, r4)?;
    let per_sample = tape.add(inter, intra)?;
    let total = tape.sum_all(per_sample)?;
    Ok(TripletOutput { total, per_sample })
}

/// Symmetric KL between row-softmax distributions of two score matrices,
/// `sum_{i in rows} (KL(p1_i || p2_i) + KL(p2_i || p1_i)) / 2`. Zero for no rows.
pub fn rdrop_loss(tape: &mut Tape, logits1: Var, logits2: Var, rows: &[usize]) -> Result<Var> {
    let (s1, s2) = (tape.value(logits1).shape(), tape.value(logits2).shape());
    if s1 != s2 {
        return Err(dim_err!("rdrop: pass shapes {s1} and {s2} differ"));
    }
    if rows.is_empty() {
        return Ok(tape.constant(Tensor::scalar(0.0)));
    }
    let (a, b) = if rows.len() == s1.rows && rows.iter().enumerate().all(|(i, &r)| i == r) {
        (logits1, logits2)
    } else {
        (tape.gather_rows(logits1, rows.to_vec())?, tape.gather_rows(logits2, rows.to_vec())?)
    };
    let lp1 = tape.log_softmax(a)?;
    let lp2 = tape.log_softmax(b)?;
    let p1 = tape.exp(lp1)?;
    let p2 = tape.exp(lp2)?;
    // KL(p1||p2) + KL(p2||p1) = sum (p1 - p2)(log p1 - log p2)
    let dp = tape.sub(p1, p2)?;
    let dl = tape.sub(lp1, lp2)?;
    let prod = tape.mul(dp, dl)?;
    let s = tape.sum_all(prod)?;
    tape.scale(s, 0.5)
}

/// Inputs for [`mix_loss`], one row per mixed sample.
pub struct MixInputs<'a> {
    pub mixed_video: Var,
    pub music1: Var,
    pub music2: Var,
    pub intra_mixed: &'a Tensor,
    pub intra_music1: &'a Tensor,
    pub intra_music2: &'a Tensor,
    /// Donor fraction per mixed sample, each in `(0, 1)`.
    pub lambdas: &'a [f64],
}

/// `sum_i lambda_i * l_i(v_hat, m1) + (1 - lambda_i) * l_i(v_hat, m2)` using
/// per-anchor triplet terms, weights swapped under [`MixWeightConvention::Swapped`].
pub fn mix_loss(
    tape: &mut Tape,
    inputs: &MixInputs<'_>,
    weights: &LossWeights,
    sampling: &TripleSampling,
    convention: MixWeightConvention,
) -> Result<Var> {
    let b = tape.value(inputs.mixed_video).rows();
    if inputs.lambdas.len() != b {
        return Err(dim_err!("{} mix weights for {b} mixed samples", inputs.lambdas.len()));
    }
    if let Some(l) = inputs.lambdas.iter().find(|l| !(**l > 0.0 && **l < 1.0)) {
        return Err(contract!("mix weight must lie in (0, 1), got {l}"));
    }
    let first = triplet_loss(tape, inputs.mixed_video, inputs.music1, inputs.intra_mixed, inputs.intra_music1, weights, sampling)?;
    let second = triplet_loss(tape, inputs.mixed_video, inputs.music2, inputs.intra_mixed, inputs.intra_music2, weights, sampling)?;
    let lam: Vec<f64> = match convention {
        MixWeightConvention::Paper => inputs.lambdas.to_vec(),
        MixWeightConvention::Swapped => inputs.lambdas.iter().map(|l| 1.0 - l).collect(),
    };
    let rest: Vec<f64> = lam.iter().map(|l| 1.0 - l).collect();
    let a = tape.mul_const(first.per_sample, Tensor::column_vector(lam)?)?;
    let c = tape.mul_const(second.per_sample, Tensor::column_vector(rest)?)?;
    let both = tape.add(a, c)?;
    tape.sum_all(both)
}

/// Unweighted sum of the three objectives.
pub fn total_loss(tape: &mut Tape, l_t: Var, l_r: Var, l_m: Var) -> Result<Var> {
    let s = tape.add(l_t, l_r)?;
    tape.add(s, l_m)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn satisfied_constraints_give_zero() {
        // Orthogonal embeddings with v_i . m_i = e + 1.
        let e = 6.0;
        let s = libm::sqrt(e + 1.0);
        let v = Tensor::from_rows(&[[s, 0.0, 0.0], [0.0, s, 0.0], [0.0, 0.0, s]]).unwrap();
        let mut tape = Tape::new();
        let vv = tape.constant(v.clone());
        let mm = tape.constant(v.clone());
        // Intra features with the same (all-zero off-diagonal) gram ordering.
        let out = triplet_loss(&mut tape, vv, mm, &v, &v, &LossWeights::default(), &TripleSampling::default()).unwrap();
        assert_eq!(tape.value(out.total).item().unwrap(), 0.0);
    }

    #[test]
    fn zero_margin_inactive_hinges() {
        let v = Tensor::from_rows(&[[2.0, 0.1], [0.1, 2.0], [1.5, 1.5]]).unwrap();
        let w = LossWeights { margin: 0.0, lambda3: 0.0, lambda4: 0.0, ..Default::default() };
        let m = Tensor::from_rows(&[[3.0, -1.0], [-1.0, 3.0], [1.0, 2.0]]).unwrap();
        let mut tape = Tape::new();
        let (vv, mm) = (tape.constant(v.clone()), tape.constant(m.clone()));
        let scores = v.matmul(&m.transpose()).unwrap();
        for i in 0..3 {
            for j in 0..3 {
                if i != j {
                    assert!(scores.get(i, i) > scores.get(i, j) && scores.get(i, i) > scores.get(j, i));
                }
            }
        }
        let out = triplet_loss(&mut tape, vv, mm, &v, &m, &w, &TripleSampling::default()).unwrap();
        assert_eq!(tape.value(out.total).item().unwrap(), 0.0);
    }

    #[test]
    fn batch_of_two_rejected() {
        let mut tape = Tape::new();
        let v = tape.constant(Tensor::zeros(2, 2));
        let r =
            triplet_loss(&mut tape, v, v, &Tensor::zeros(2, 2), &Tensor::zeros(2, 2), &LossWeights::default(), &TripleSampling::default());
        assert!(matches!(r, Err(crate::Error::Contract(_))));
    }

    #[test]
    fn rdrop_hand_value() {
        // p1 = [0.9, 0.1], p2 = [0.5, 0.5] via log-probabilities as logits.
        let mut tape = Tape::new();
        let a = tape.constant(Tensor::from_rows(&[[libm::log(0.9), libm::log(0.1)]]).unwrap());
        let b = tape.constant(Tensor::from_rows(&[[libm::log(0.5), libm::log(0.5)]]).unwrap());
        let l = rdrop_loss(&mut tape, a, b, &[0]).unwrap();
        let kl12 = 0.9 * libm::log(0.9 / 0.5) + 0.1 * libm::log(0.1 / 0.5);
        let kl21 = 0.5 * libm::log(0.5 / 0.9) + 0.5 * libm::log(0.5 / 0.1);
        let expected = 0.5 * (kl12 + kl21);
        assert!((tape.value(l).item().unwrap() - expected).abs() < 1e-12);
        assert!((expected - 0.43945).abs() < 5e-5);
    }

    #[test]
    fn rdrop_identical_and_empty_are_zero() {
        let mut tape = Tape::new();
        let a = tape.constant(Tensor::from_rows(&[[1.0, 2.0, 3.0], [0.0, -1.0, 1.0]]).unwrap());
        let l = rdrop_loss(&mut tape, a, a, &[0, 1]).unwrap();
        assert!(tape.value(l).item().unwrap().abs() < 1e-15);
        let z = rdrop_loss(&mut tape, a, a, &[]).unwrap();
        assert_eq!(tape.value(z).item().unwrap(), 0.0);
    }

    #[test]
    fn mix_weight_bounds_enforced() {
        let mut tape = Tape::new();
        let v = tape.constant(Tensor::zeros(3, 2));
        let f = Tensor::zeros(3, 2);
        let inputs = MixInputs {
            mixed_video: v,
            music1: v,
            music2: v,
            intra_mixed: &f,
            intra_music1: &f,
            intra_music2: &f,
            lambdas: &[0.5, 1.0, 0.5],
        };
        let r = mix_loss(&mut tape, &inputs, &LossWeights::default(), &TripleSampling::default(), MixWeightConvention::Paper);
        assert!(matches!(r, Err(crate::Error::Contract(_))));
    }

    #[test]
    fn total_is_plain_sum() {
        let mut tape = Tape::new();
        let (a, b, c) = (tape.constant(Tensor::scalar(1.0)), tape.constant(Tensor::scalar(2.0)), tape.constant(Tensor::scalar(3.0)));
        let t = total_loss(&mut tape, a, b, c).unwrap();
        assert_eq!(tape.value(t).item().unwrap(), 6.0);
        let z = tape.constant(Tensor::scalar(0.0));
        let t = total_loss(&mut tape, a, z, z).unwrap();
        assert_eq!(tape.value(t).item().unwrap(), 1.0);
    }
}
