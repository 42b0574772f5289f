//! Feature banks, pair records, batching and the synthetic latent-factor generator.

use alloc::collections::BTreeMap;
use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use rand::seq::{index, SliceRandom};
use rand::Rng as _;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{contract, dim_err, Result};
use crate::rng::{self, Stream};
use crate::tensor::Tensor;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize), serde(rename_all = "snake_case"))]
pub enum Modality {
    Video,
    Music,
}

impl Modality {
    pub fn code(self) -> u8 {
        match self {
            Modality::Video => 0,
            Modality::Music => 1,
        }
    }

    pub fn from_code(code: u8) -> Option<Self> {
        match code {
            0 => Some(Modality::Video),
            1 => Some(Modality::Music),
            _ => None,
        }
    }
}

/// One item's features: `F x d` frames for a video, `1 x d` for music.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureSequence {
    pub id: String,
    pub frames: Tensor,
}

impl FeatureSequence {
    pub fn len(&self) -> usize {
        self.frames.rows()
    }

    pub fn is_empty(&self) -> bool {
        self.frames.rows() == 0
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FeatureBank {
    pub modality: Modality,
    pub dim: usize,
    items: Vec<FeatureSequence>,
    by_id: BTreeMap<String, usize>,
}

impl FeatureBank {
    pub fn new(modality: Modality, dim: usize) -> Self {
        FeatureBank { modality, dim, items: Vec::new(), by_id: BTreeMap::new() }
    }

    pub fn from_items(modality: Modality, dim: usize, items: Vec<FeatureSequence>) -> Result<Self> {
        let mut bank = FeatureBank::new(modality, dim);
        for item in items {
            bank.push(item)?;
        }
        Ok(bank)
    }

    pub fn push(&mut self, item: FeatureSequence) -> Result<()> {
        if item.frames.rows() == 0 {
            return Err(contract!("item `{}` has no frames", item.id));
        }
        if item.frames.cols() != self.dim {
            return Err(dim_err!("item `{}` has dim {}, bank dim is {}", item.id, item.frames.cols(), self.dim));
        }
        if self.modality == Modality::Music && item.frames.rows() != 1 {
            return Err(contract!("music item `{}` must be a single vector, got {} rows", item.id, item.frames.rows()));
        }
        if self.by_id.contains_key(&item.id) {
            return Err(contract!("duplicate id `{}`", item.id));
        }
        self.by_id.insert(item.id.clone(), self.items.len());
        self.items.push(item);
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    pub fn items(&self) -> &[FeatureSequence] {
        &self.items
    }

    pub fn get(&self, i: usize) -> &FeatureSequence {
        &self.items[i]
    }

    pub fn index_of(&self, id: &str) -> Option<usize> {
        self.by_id.get(id).copied()
    }

    pub fn max_frames(&self) -> usize {
        self.items.iter().map(FeatureSequence::len).max().unwrap_or(0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize), serde(rename_all = "snake_case"))]
pub enum Origin {
    Original,
    BackRetrieved,
    Synthetic,
}

#[derive(Debug, Clone, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct PairRecord {
    pub video_id: String,
    pub music_id: String,
    pub origin: Origin,
    /// Ground truth for synthetic data only.
    pub true_match: Option<bool>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticSpec {
    pub n_pairs: usize,
    /// Clean held-out pairs generated from the same latent maps.
    pub n_test: usize,
    pub latent_dim: usize,
    pub d_v: usize,
    pub d_m: usize,
    pub frames_min: usize,
    pub frames_max: usize,
    pub noise_rate: f64,
    pub feature_noise_sigma: f64,
    pub seed: u64,
}

impl Default for SyntheticSpec {
    fn default() -> Self {
        SyntheticSpec {
            n_pairs: 1000,
            n_test: 500,
            latent_dim: 16,
            d_v: 128,
            d_m: 128,
            frames_min: 8,
            frames_max: 16,
            noise_rate: 0.3,
            feature_noise_sigma: 1.0,
            seed: 7,
        }
    }
}

impl SyntheticSpec {
    pub fn validate(&self) -> Result<()> {
        if self.n_pairs < 2 {
            return Err(contract!("n_pairs must be at least 2 so a noisy swap exists, got {}", self.n_pairs));
        }
        if !(0.0..1.0).contains(&self.noise_rate) {
            return Err(contract!("noise_rate must lie in [0, 1), got {}", self.noise_rate));
        }
        if self.latent_dim < 2 || self.d_v < 2 || self.d_m < 2 {
            return Err(contract!("latent_dim, d_v and d_m must all be at least 2"));
        }
        if self.frames_min == 0 || self.frames_min > self.frames_max {
            return Err(contract!("frame range [{}, {}] is invalid", self.frames_min, self.frames_max));
        }
        if !(self.feature_noise_sigma >= 0.0 && self.feature_noise_sigma.is_finite()) {
            return Err(contract!("feature_noise_sigma must be finite and non-negative"));
        }
        Ok(())
    }

    /// Number of pairs whose music is swapped for a wrong one.
    pub fn corrupted_count(&self) -> usize {
        libm::floor(self.noise_rate * self.n_pairs as f64) as usize
    }
}

/// One split of generated data. Pair `i` was built from `latents[i]`.
#[derive(Debug, Clone)]
pub struct SyntheticSplit {
    pub videos: FeatureBank,
    pub music: FeatureBank,
    pub pairs: Vec<PairRecord>,
    pub latents: Vec<Vec<f64>>,
}

#[derive(Debug, Clone)]
pub struct SyntheticData {
    pub train: SyntheticSplit,
    pub test: SyntheticSplit,
}

fn gaussian_matrix(rows: usize, cols: usize, scale: f64, rng: &mut rng::Rng) -> Vec<f64> {
    (0..rows * cols).map(|_| scale * Distribution::<f64>::sample(&StandardNormal, rng)).collect::<Vec<f64>>()
}

fn project(map: &[f64], out_dim: usize, z: &[f64]) -> Vec<f64> {
    (0..out_dim).map(|r| map[r * z.len()..(r + 1) * z.len()].iter().zip(z).map(|(a, b)| a * b).sum()).collect()
}

/// Generates paired banks from shared latent factors.
///
/// Pair `i` draws `z_i ~ N(0, I)`; every video frame is `A_v z_i + sigma * eps` and
/// the music vector is `A_m z_i + sigma * eps` for two fixed Gaussian maps. In the
/// training split exactly `floor(noise_rate * n)` pairs, sampled without
/// replacement, get a uniformly random different music id.
pub fn generate_synthetic(spec: &SyntheticSpec) -> Result<SyntheticData> {
    spec.validate()?;
    let mut maps_rng = rng::stream(spec.seed, Stream::Synthetic, 0, 0);
    let scale = 1.0 / libm::sqrt(spec.latent_dim as f64);
    let video_map = gaussian_matrix(spec.d_v, spec.latent_dim, scale, &mut maps_rng);
    let music_map = gaussian_matrix(spec.d_m, spec.latent_dim, scale, &mut maps_rng);

    let split = |n: usize, tag: u64, prefix: &str| -> Result<SyntheticSplit> {
        let mut rng = rng::stream(spec.seed, Stream::Synthetic, tag, 0);
        let mut videos = FeatureBank::new(Modality::Video, spec.d_v);
        let mut music = FeatureBank::new(Modality::Music, spec.d_m);
        let mut pairs = Vec::with_capacity(n);
        let mut latents = Vec::with_capacity(n);
        for i in 0..n {
            let z: Vec<f64> = (0..spec.latent_dim).map(|_| StandardNormal.sample(&mut rng)).collect();
            let frames = rng.random_range(spec.frames_min..=spec.frames_max);
            let clean_v = project(&video_map, spec.d_v, &z);
            let mut vdata = Vec::with_capacity(frames * spec.d_v);
            for _ in 0..frames {
                vdata
                    .extend(clean_v.iter().map(|&x| x + spec.feature_noise_sigma * Distribution::<f64>::sample(&StandardNormal, &mut rng)));
            }
            let mdata: Vec<f64> = project(&music_map, spec.d_m, &z)
                .into_iter()
                .map(|x| x + spec.feature_noise_sigma * Distribution::<f64>::sample(&StandardNormal, &mut rng))
                .collect();
            let vid = format!("{prefix}v{i:05}");
            let mid = format!("{prefix}m{i:05}");
            videos.push(FeatureSequence { id: vid.clone(), frames: Tensor::new(frames, spec.d_v, vdata)? })?;
            music.push(FeatureSequence { id: mid.clone(), frames: Tensor::new(1, spec.d_m, mdata)? })?;
            pairs.push(PairRecord { video_id: vid, music_id: mid, origin: Origin::Synthetic, true_match: Some(true) });
            latents.push(z);
        }
        Ok(SyntheticSplit { videos, music, pairs, latents })
    };

    let mut train = split(spec.n_pairs, 1, "")?;
    let test = split(spec.n_test, 2, "test-")?;

    let mut noise_rng = rng::stream(spec.seed, Stream::Synthetic, 3, 0);
    let mut corrupted = index::sample(&mut noise_rng, spec.n_pairs, spec.corrupted_count()).into_vec();
    corrupted.sort_unstable();
    for i in corrupted {
        let mut j = noise_rng.random_range(0..spec.n_pairs - 1);
        if j >= i {
            j += 1;
        }
        let pair = &mut train.pairs[i];
        pair.music_id = train.music.get(j).id.clone();
        pair.true_match = Some(false);
    }
    Ok(SyntheticData { train, test })
}

/// Seeded permutation of `0..n_pairs` cut into batches; a trailing batch with
/// fewer than three pairs is dropped.
pub fn make_batches(n_pairs: usize, batch_size: usize, seed: u64) -> Result<Vec<Vec<usize>>> {
    if batch_size < 3 {
        return Err(contract!("batch_size must be at least 3, got {batch_size}"));
    }
    if n_pairs < 3 {
        return Err(contract!("need at least 3 pairs to form a batch, got {n_pairs}"));
    }
    let mut order: Vec<usize> = (0..n_pairs).collect();
    order.shuffle(&mut rng::seeded(seed));
    Ok(order.chunks(batch_size).filter(|c| c.len() >= 3).map(<[usize]>::to_vec).collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small_spec() -> SyntheticSpec {
        SyntheticSpec { n_pairs: 40, n_test: 10, d_v: 8, d_m: 6, latent_dim: 4, frames_min: 2, frames_max: 5, ..Default::default() }
    }

    #[test]
    fn no_noise_means_all_true() {
        let data = generate_synthetic(&SyntheticSpec { noise_rate: 0.0, ..small_spec() }).unwrap();
        assert!(data.train.pairs.iter().all(|p| p.true_match == Some(true)));
    }

    #[test]
    fn exact_corrupted_count() {
        let spec = SyntheticSpec { n_pairs: 1000, d_v: 4, d_m: 4, frames_min: 1, frames_max: 2, ..Default::default() };
        let data = generate_synthetic(&spec).unwrap();
        let bad: Vec<_> = data.train.pairs.iter().filter(|p| p.true_match == Some(false)).collect();
        assert_eq!(bad.len(), 300);
        for p in bad {
            assert_ne!(p.video_id[1..], p.music_id[1..]);
        }
        assert!(data.test.pairs.iter().all(|p| p.true_match == Some(true)));
    }

    #[test]
    fn deterministic_under_seed() {
        let a = generate_synthetic(&small_spec()).unwrap();
        let b = generate_synthetic(&small_spec()).unwrap();
        assert_eq!(a.train.videos, b.train.videos);
        assert_eq!(a.train.pairs, b.train.pairs);
        let c = generate_synthetic(&SyntheticSpec { seed: 8, ..small_spec() }).unwrap();
        assert_ne!(a.train.videos, c.train.videos);
    }

    #[test]
    fn too_few_pairs_rejected() {
        assert!(generate_synthetic(&SyntheticSpec { n_pairs: 1, ..small_spec() }).is_err());
    }

    #[test]
    fn batches_drop_short_tail() {
        let b = make_batches(10, 3, 1).unwrap();
        assert_eq!(b.len(), 3);
        assert!(b.iter().all(|x| x.len() == 3));
        let b = make_batches(1000, 32, 1).unwrap();
        assert_eq!(b.len(), 32);
        assert_eq!(b.last().unwrap().len(), 8);
    }

    #[test]
    fn batches_deterministic_and_seed_dependent() {
        assert_eq!(make_batches(50, 4, 3).unwrap(), make_batches(50, 4, 3).unwrap());
        let runs: Vec<_> = (0..5).map(|s| make_batches(50, 4, s).unwrap()).collect();
        for i in 0..5 {
            for j in i + 1..5 {
                assert_ne!(runs[i], runs[j]);
            }
        }
    }

    #[test]
    fn batches_contract() {
        assert!(make_batches(10, 2, 0).is_err());
        assert!(make_batches(2, 3, 0).is_err());
    }

    #[test]
    fn bank_rejects_bad_items() {
        let mut bank = FeatureBank::new(Modality::Music, 2);
        assert!(bank.push(FeatureSequence { id: "a".into(), frames: Tensor::zeros(2, 2) }).is_err());
        assert!(bank.push(FeatureSequence { id: "a".into(), frames: Tensor::zeros(1, 3) }).is_err());
        bank.push(FeatureSequence { id: "a".into(), frames: Tensor::zeros(1, 2) }).unwrap();
        assert!(bank.push(FeatureSequence { id: "a".into(), frames: Tensor::zeros(1, 2) }).is_err());
    }
}
