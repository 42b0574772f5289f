//! Loss-based noisy-label detection and soft relabeling.
//!
//! A two-component 1-D Gaussian mixture is fitted to per-sample losses by EM;
//! the posterior of the larger-mean component is the probability that a pair is
//! mislabeled. Pairs above the threshold get a soft target built from the model's
//! sharpened prediction over the candidate music bank.

use alloc::format;
use alloc::vec::Vec;
use core::f64::consts::PI;

use crate::backbone::{video_embeddings, ModelParams};
use crate::error::{contract, Error, Result};
use crate::tensor::Tensor;

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct Component {
    pub mean: f64,
    pub variance: f64,
    pub weight: f64,
}

impl Component {
    fn log_density(&self, x: f64) -> f64 {
        let d = x - self.mean;
        -0.5 * (libm::log(2.0 * PI * self.variance) + d * d / self.variance)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Gmm1D {
    pub components: [Component; 2],
    /// Log-likelihood after each EM iteration.
    pub log_likelihood: Vec<f64>,
}

impl Gmm1D {
    /// Index of the component with the larger mean (the "noisy" one).
    pub fn noisy_index(&self) -> usize {
        if self.components[1].mean >= self.components[0].mean {
            1
        } else {
            0
        }
    }

    pub fn noisy(&self) -> &Component {
        &self.components[self.noisy_index()]
    }

    pub fn clean(&self) -> &Component {
        &self.components[1 - self.noisy_index()]
    }

    /// Responsibilities `(r_0, r_1)` and the log of the mixture density at `x`.
    fn responsibilities(&self, x: f64) -> ([f64; 2], f64) {
        let a = libm::log(self.components[0].weight) + self.components[0].log_density(x);
        let b = libm::log(self.components[1].weight) + self.components[1].log_density(x);
        let m = a.max(b);
        let lse = m + libm::log(libm::exp(a - m) + libm::exp(b - m));
        ([libm::exp(a - lse), libm::exp(b - lse)], lse)
    }

    pub fn log_likelihood_of(&self, xs: &[f64]) -> f64 {
        xs.iter().map(|&x| self.responsibilities(x).1).sum()
    }
}

fn quantile(sorted: &[f64], q: f64) -> f64 {
    let pos = q * (sorted.len() - 1) as f64;
    let lo = libm::floor(pos) as usize;
    let hi = (lo + 1).min(sorted.len() - 1);
    let t = pos - lo as f64;
    sorted[lo] * (1.0 - t) + sorted[hi] * t
}

/// Fits a two-component mixture to `losses` by expectation-maximization.
///
/// Means start at the 10th and 90th percentiles with the pooled variance and equal
/// weights. Iteration stops when the log-likelihood gain drops below `tol` or after
/// `max_iters`. Variances are floored at `1e-6 * var(losses)`.
pub fn fit_gmm(losses: &[f64], max_iters: usize, tol: f64) -> Result<Gmm1D> {
    let n = losses.len();
    if n < 4 {
        return Err(contract!("GMM fit needs at least 4 samples, got {n}"));
    }
    if let Some(x) = losses.iter().find(|x| !x.is_finite()) {
        return Err(Error::Numeric(format!("non-finite loss {x}")));
    }
    let mean = losses.iter().sum::<f64>() / n as f64;
    let var = losses.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / n as f64;
    if var <= 0.0 || losses.iter().all(|&x| x == losses[0]) {
        return Err(Error::Degenerate(format!("all {n} losses are equal")));
    }
    let floor = 1e-6 * var;
    let mut sorted = losses.to_vec();
    sorted.sort_by(f64::total_cmp);
    let mut gmm = Gmm1D {
        components: [
            Component { mean: quantile(&sorted, 0.1), variance: var, weight: 0.5 },
            Component { mean: quantile(&sorted, 0.9), variance: var, weight: 0.5 },
        ],
        log_likelihood: Vec::new(),
    };
    let mut resp = alloc::vec![[0.0f64; 2]; n];
    let mut prev = gmm.log_likelihood_of(losses);
    for _ in 0..max_iters {
        for (r, &x) in resp.iter_mut().zip(losses) {
            *r = gmm.responsibilities(x).0;
        }
        for c in 0..2 {
            let nk: f64 = resp.iter().map(|r| r[c]).sum();
            if nk <= f64::MIN_POSITIVE {
                // An emptied component keeps its parameters with vanishing weight.
                gmm.components[c].weight = f64::MIN_POSITIVE;
                continue;
            }
            let mu = resp.iter().zip(losses).map(|(r, x)| r[c] * x).sum::<f64>() / nk;
            let v = resp.iter().zip(losses).map(|(r, x)| r[c] * (x - mu) * (x - mu)).sum::<f64>() / nk;
            gmm.components[c] = Component { mean: mu, variance: v.max(floor), weight: nk / n as f64 };
        }
        let total = gmm.components[0].weight + gmm.components[1].weight;
        for c in &mut gmm.components {
            c.weight /= total;
        }
        let ll = gmm.log_likelihood_of(losses);
        gmm.log_likelihood.push(ll);
        if (ll - prev).abs() < tol {
            break;
        }
        prev = ll;
    }
    Ok(gmm)
}

/// Posterior probability of the larger-mean component for every loss.
pub fn noisy_posterior(gmm: &Gmm1D, losses: &[f64]) -> Vec<f64> {
    let k = gmm.noisy_index();
    losses.iter().map(|&x| gmm.responsibilities(x).0[k]).collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct NoisePartition {
    pub w: Vec<f64>,
    pub clean: Vec<usize>,
    pub noisy: Vec<usize>,
    pub tau: f64,
}

/// Splits samples by `w_i > tau` (noisy) versus `w_i <= tau` (clean).
pub fn partition(w: &[f64], tau: f64) -> Result<NoisePartition> {
    if !(tau > 0.0 && tau < 1.0) {
        return Err(contract!("threshold must lie in (0, 1), got {tau}"));
    }
    let (mut clean, mut noisy) = (Vec::new(), Vec::new());
    for (i, &wi) in w.iter().enumerate() {
        if wi > tau {
            noisy.push(i);
        } else {
            clean.push(i);
        }
    }
    Ok(NoisePartition { w: w.to_vec(), clean, noisy, tau })
}

/// Temperature sharpening `q_i = p_i^(1/T) / sum_j p_j^(1/T)`.
pub fn sharpen(p: &[f64], temperature: f64) -> Result<Vec<f64>> {
    if !(temperature > 0.0 && temperature.is_finite()) {
        return Err(contract!("temperature must be positive, got {temperature}"));
    }
    if p.iter().any(|&x| !(x >= 0.0 && x.is_finite())) {
        return Err(contract!("distribution entries must be finite and non-negative"));
    }
    let max = p.iter().copied().fold(0.0, f64::max);
    if max == 0.0 {
        return Err(contract!("cannot sharpen an all-zero distribution"));
    }
    // Work relative to the largest entry so small p^(1/T) do not underflow first.
    let inv_t = 1.0 / temperature;
    let powered: Vec<f64> = p.iter().map(|&x| if x == 0.0 { 0.0 } else { libm::exp(inv_t * libm::log(x / max)) }).collect();
    let z: f64 = powered.iter().sum();
    Ok(powered.into_iter().map(|x| x / z).collect())
}

/// `sharpen(softmax(logits), T)` evaluated as `softmax(log_softmax(logits) / T)`.
pub fn sharpen_logits(logits: &[f64], temperature: f64) -> Result<Vec<f64>> {
    if !(temperature > 0.0 && temperature.is_finite()) {
        return Err(contract!("temperature must be positive, got {temperature}"));
    }
    let row = Tensor::row_vector(logits.to_vec())?;
    let scaled = row.log_softmax_rows()?.scale(1.0 / temperature)?;
    Ok(scaled.softmax_rows()?.into_data())
}

pub fn entropy(p: &[f64]) -> f64 {
    -p.iter().filter(|&&x| x > 0.0).map(|&x| x * libm::log(x)).sum::<f64>()
}

/// Replacement target for a suspected-noisy pair.
#[derive(Debug, Clone, PartialEq)]
pub struct SoftLabel {
    /// Sharpened distribution over the candidate music bank.
    pub q: Vec<f64>,
    /// `sum_j q_j * emb_j`, used as a constant positive target.
    pub target: Vec<f64>,
    /// `sum_j q_j * raw_j`, the pre-network counterpart for the structure terms.
    pub intra: Vec<f64>,
    pub argmax: usize,
}

fn convex_rows(q: &[f64], rows: &Tensor) -> Vec<f64> {
    let mut out = alloc::vec![0.0; rows.cols()];
    for (j, &qj) in q.iter().enumerate() {
        if qj == 0.0 {
            continue;
        }
        for (o, &x) in out.iter_mut().zip(rows.row(j)) {
            *o += qj * x;
        }
    }
    out
}

/// Soft labels for `noisy_videos` against a fixed candidate bank.
///
/// `bank_embeddings` (`n_m x d_e`) are dropout-free music embeddings and
/// `bank_features` (`n_m x d_m`) the raw music vectors. The prediction is the
/// softmax over inner products with every candidate.
pub fn relabel(
    params: &ModelParams,
    noisy_videos: &[&Tensor],
    bank_embeddings: &Tensor,
    bank_features: &Tensor,
    temperature: f64,
) -> Result<Vec<SoftLabel>> {
    if noisy_videos.is_empty() {
        return Ok(Vec::new());
    }
    if bank_embeddings.rows() == 0 {
        return Err(contract!("relabel needs a non-empty candidate bank"));
    }
    let emb = video_embeddings(params, noisy_videos)?;
    let logits = emb.matmul(&bank_embeddings.transpose())?;
    (0..logits.rows())
        .map(|i| {
            let q = sharpen_logits(logits.row(i), temperature)?;
            let argmax = q.iter().enumerate().fold(0, |best, (j, &x)| if x > q[best] { j } else { best });
            Ok(SoftLabel { target: convex_rows(&q, bank_embeddings), intra: convex_rows(&q, bank_features), q, argmax })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn posterior_is_half_at_midpoint() {
        let gmm = Gmm1D {
            components: [Component { mean: 1.0, variance: 0.5, weight: 0.5 }, Component { mean: 5.0, variance: 0.5, weight: 0.5 }],
            log_likelihood: Vec::new(),
        };
        let w = noisy_posterior(&gmm, &[3.0, 1e3]);
        assert!((w[0] - 0.5).abs() < 1e-12);
        assert!((w[1] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn degenerate_losses_rejected() {
        assert!(matches!(fit_gmm(&[2.0; 10], 100, 1e-8), Err(Error::Degenerate(_))));
        assert!(matches!(fit_gmm(&[1.0, 2.0, 3.0], 100, 1e-8), Err(Error::Contract(_))));
    }

    #[test]
    fn partition_boundary_goes_clean() {
        let p = partition(&[0.1, 0.3, 0.5], 0.3).unwrap();
        assert_eq!(p.clean, [0, 1]);
        assert_eq!(p.noisy, [2]);
        let p = partition(&[0.1, 0.5, 0.998], 0.999).unwrap();
        assert!(p.noisy.is_empty());
        assert!(partition(&[0.1], 1.0).is_err());
    }

    #[test]
    fn sharpen_hand_values() {
        assert_eq!(sharpen(&[0.3, 0.7], 1.0).unwrap(), [0.3, 0.7]);
        let q = sharpen(&[0.5, 0.5], 0.37).unwrap();
        assert!((q[0] - 0.5).abs() < 1e-15);
        let q = sharpen(&[0.8, 0.2], 0.5).unwrap();
        assert!((q[0] - 0.64 / 0.68).abs() < 1e-12);
        assert!((q[1] - 0.04 / 0.68).abs() < 1e-12);
        assert!((q[0] - 0.9412).abs() < 1e-4);
        assert!(sharpen(&[0.0, 0.0], 0.5).is_err());
    }

    #[test]
    fn sharpen_logits_matches_probability_route() {
        let logits = [0.3, -1.2, 2.0, 0.0];
        let p = Tensor::row_vector(logits.to_vec()).unwrap().softmax_rows().unwrap().into_data();
        let a = sharpen(&p, 0.8).unwrap();
        let b = sharpen_logits(&logits, 0.8).unwrap();
        for (x, y) in a.iter().zip(&b) {
            assert!((x - y).abs() < 1e-14);
        }
    }

    #[test]
    fn near_one_hot_prediction_targets_that_music() {
        use crate::backbone::{Branch, Dims};
        let d = 2;
        let id = || Branch { w1: Tensor::identity(d), b1: Tensor::zeros(1, d), w2: Tensor::identity(d), b2: Tensor::zeros(1, d) };
        let params = ModelParams { dims: Dims { d_v: d, d_m: d, hidden: d, d_e: d }, video: id(), music: id() };
        let video = Tensor::from_rows(&[[3.0, 0.0]]).unwrap();
        // Candidate 1 aligns with tanh(3) * 40 far more than the others.
        let bank = Tensor::from_rows(&[[0.0, 40.0], [40.0, 0.0], [-40.0, 0.0]]).unwrap();
        let raw = Tensor::from_rows(&[[1.0, 0.0], [0.0, 1.0], [1.0, 1.0]]).unwrap();
        let labels = relabel(&params, &[&video], &bank, &raw, 0.8).unwrap();
        assert_eq!(labels[0].argmax, 1);
        assert!((labels[0].target[0] - 40.0).abs() < 1e-6);
        assert!((labels[0].intra[1] - 1.0).abs() < 1e-6);
        // A vanishing temperature collapses onto the argmax even for a mild preference.
        let mild = Tensor::from_rows(&[[0.0, 0.1], [0.2, 0.0], [-0.2, 0.0]]).unwrap();
        let sharp = relabel(&params, &[&video], &mild, &raw, 1e-4).unwrap();
        assert!((sharp[0].target[0] - 0.2).abs() < 1e-9);
        assert!(relabel(&params, &[], &bank, &raw, 0.8).unwrap().is_empty());
    }
}
