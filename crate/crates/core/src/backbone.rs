//! Two-branch embedding network.
//!
//! Video: per-frame affine + tanh, mean over frames, dropout, affine.
//! Music: affine + tanh, dropout, affine.
//! Both branches land in a shared `d_e`-dimensional space scored by inner product;
//! embeddings are not normalized.

use alloc::vec::Vec;

use rand_distr::{Distribution, StandardNormal};

use crate::autodiff::{Tape, Var};
use crate::dataset::FeatureSequence;
use crate::error::{dim_err, Result};
use crate::rng::{self, Stream};
use crate::tensor::Tensor;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Dims {
    pub d_v: usize,
    pub d_m: usize,
    pub hidden: usize,
    pub d_e: usize,
}

impl Default for Dims {
    fn default() -> Self {
        Dims { d_v: 128, d_m: 128, hidden: 256, d_e: 64 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Branch {
    pub w1: Tensor,
    pub b1: Tensor,
    pub w2: Tensor,
    pub b2: Tensor,
}

impl Branch {
    fn init(input: usize, hidden: usize, out: usize, rng: &mut rng::Rng) -> Result<Self> {
        let mut gauss = |rows: usize, cols: usize| {
            let scale = 1.0 / libm::sqrt(rows as f64);
            Tensor::new(rows, cols, (0..rows * cols).map(|_| scale * Distribution::<f64>::sample(&StandardNormal, &mut *rng)).collect())
        };
        Ok(Branch { w1: gauss(input, hidden)?, b1: Tensor::zeros(1, hidden), w2: gauss(hidden, out)?, b2: Tensor::zeros(1, out) })
    }

    fn tensors(&self) -> [&Tensor; 4] {
        [&self.w1, &self.b1, &self.w2, &self.b2]
    }

    fn tensors_mut(&mut self) -> [&mut Tensor; 4] {
        [&mut self.w1, &mut self.b1, &mut self.w2, &mut self.b2]
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ModelParams {
    pub dims: Dims,
    pub video: Branch,
    pub music: Branch,
}

pub const PARAM_NAMES: [&str; 8] = ["video.w1", "video.b1", "video.w2", "video.b2", "music.w1", "music.b1", "music.w2", "music.b2"];

impl ModelParams {
    pub fn init(dims: Dims, seed: u64) -> Result<Self> {
        let mut rng = rng::stream(seed, Stream::Init, 0, 0);
        Ok(ModelParams {
            dims,
            video: Branch::init(dims.d_v, dims.hidden, dims.d_e, &mut rng)?,
            music: Branch::init(dims.d_m, dims.hidden, dims.d_e, &mut rng)?,
        })
    }

    /// Rebuilds parameters from tensors in [`PARAM_NAMES`] order, checking shapes.
    pub fn from_tensors(dims: Dims, tensors: Vec<Tensor>) -> Result<Self> {
        let expected = Self::shapes_for(dims);
        if tensors.len() != expected.len() {
            return Err(dim_err!("expected {} parameter tensors, got {}", expected.len(), tensors.len()));
        }
        for ((t, s), name) in tensors.iter().zip(&expected).zip(PARAM_NAMES) {
            if t.shape() != *s {
                return Err(dim_err!("parameter `{name}` has shape {}, expected {s}", t.shape()));
            }
        }
        let mut it = tensors.into_iter();
        let mut next = || it.next().unwrap_or_default();
        Ok(ModelParams {
            dims,
            video: Branch { w1: next(), b1: next(), w2: next(), b2: next() },
            music: Branch { w1: next(), b1: next(), w2: next(), b2: next() },
        })
    }

    pub fn shapes_for(dims: Dims) -> [crate::tensor::Shape; 8] {
        use crate::tensor::Shape;
        let Dims { d_v, d_m, hidden, d_e } = dims;
        [
            Shape::new(d_v, hidden),
            Shape::new(1, hidden),
            Shape::new(hidden, d_e),
            Shape::new(1, d_e),
            Shape::new(d_m, hidden),
            Shape::new(1, hidden),
            Shape::new(hidden, d_e),
            Shape::new(1, d_e),
        ]
    }

    pub fn tensors(&self) -> [&Tensor; 8] {
        let [a, b, c, d] = self.video.tensors();
        let [e, f, g, h] = self.music.tensors();
        [a, b, c, d, e, f, g, h]
    }

    pub fn tensors_mut(&mut self) -> [&mut Tensor; 8] {
        let [a, b, c, d] = self.video.tensors_mut();
        let [e, f, g, h] = self.music.tensors_mut();
        [a, b, c, d, e, f, g, h]
    }

    /// Puts every weight on `tape` as a tracked leaf.
    pub fn register(&self, tape: &mut Tape) -> ParamVars {
        let mut reg = |b: &Branch| BranchVars {
            w1: tape.param(b.w1.clone()),
            b1: tape.param(b.b1.clone()),
            w2: tape.param(b.w2.clone()),
            b2: tape.param(b.b2.clone()),
        };
        let video = reg(&self.video);
        let music = reg(&self.music);
        ParamVars { video, music, dims: self.dims }
    }
}

#[derive(Debug, Clone, Copy)]
pub struct BranchVars {
    pub w1: Var,
    pub b1: Var,
    pub w2: Var,
    pub b2: Var,
}

#[derive(Debug, Clone, Copy)]
pub struct ParamVars {
    pub video: BranchVars,
    pub music: BranchVars,
    pub dims: Dims,
}

impl ParamVars {
    pub fn all(&self) -> [Var; 8] {
        let (v, m) = (self.video, self.music);
        [v.w1, v.b1, v.w2, v.b2, m.w1, m.b1, m.w2, m.b2]
    }
}

/// Embeddings of a batch of videos plus the handles needed for saliency.
#[derive(Debug, Clone)]
pub struct BranchOutput {
    /// `B x d_e`
    pub embedding: Var,
    /// Per-frame first-layer activations (`sum F x hidden`), before pooling.
    pub frame_activations: Var,
    /// One leaf per video; tracked when the forward pass recorded input gradients.
    pub inputs: Vec<Var>,
}

/// Forward pass of the video branch over a batch of frame matrices.
///
/// With `record_inputs`, each frame matrix is a tracked leaf so the loss can be
/// differentiated with respect to individual frames.
pub fn embed_videos<R: rand::Rng + ?Sized>(
    tape: &mut Tape,
    vars: &ParamVars,
    videos: &[&Tensor],
    dropout_rate: f64,
    rng: &mut R,
    record_inputs: bool,
) -> Result<BranchOutput> {
    if videos.is_empty() {
        return Err(crate::error::contract!("embed_videos on an empty batch"));
    }
    let d_v = vars.dims.d_v;
    let mut inputs = Vec::with_capacity(videos.len());
    for v in videos {
        if v.rows() == 0 {
            return Err(crate::error::contract!("video with zero frames"));
        }
        if v.cols() != d_v {
            return Err(dim_err!("video frames have dim {}, model expects {d_v}", v.cols()));
        }
        inputs.push(if record_inputs { tape.param((*v).clone()) } else { tape.constant((*v).clone()) });
    }
    let stacked = if inputs.len() == 1 { inputs[0] } else { tape.concat_rows(&inputs)? };
    let h = tape.matmul(stacked, vars.video.w1)?;
    let h = tape.add_row(h, vars.video.b1)?;
    let act = tape.tanh(h)?;
    let mut pooled = Vec::with_capacity(videos.len());
    let mut start = 0;
    for v in videos {
        let rows = tape.slice_rows(act, start, v.rows())?;
        pooled.push(tape.mean_rows(rows)?);
        start += v.rows();
    }
    let pooled = if pooled.len() == 1 { pooled[0] } else { tape.concat_rows(&pooled)? };
    let dropped = tape.dropout(pooled, dropout_rate, rng)?;
    let out = tape.matmul(dropped, vars.video.w2)?;
    let embedding = tape.add_row(out, vars.video.b2)?;
    Ok(BranchOutput { embedding, frame_activations: act, inputs })
}

/// Single-video convenience wrapper around [`embed_videos`].
pub fn embed_video<R: rand::Rng + ?Sized>(
    tape: &mut Tape,
    vars: &ParamVars,
    frames: &Tensor,
    dropout_rate: f64,
    rng: &mut R,
    record_tape: bool,
) -> Result<BranchOutput> {
    embed_videos(tape, vars, &[frames], dropout_rate, rng, record_tape)
}

/// Forward pass of the music branch over `B x d_m` features.
pub fn embed_music<R: rand::Rng + ?Sized>(
    tape: &mut Tape,
    vars: &ParamVars,
    features: &Tensor,
    dropout_rate: f64,
    rng: &mut R,
) -> Result<Var> {
    if features.cols() != vars.dims.d_m {
        return Err(dim_err!("music features have dim {}, model expects {}", features.cols(), vars.dims.d_m));
    }
    let x = tape.constant(features.clone());
    let h = tape.matmul(x, vars.music.w1)?;
    let h = tape.add_row(h, vars.music.b1)?;
    let act = tape.tanh(h)?;
    let dropped = tape.dropout(act, dropout_rate, rng)?;
    let out = tape.matmul(dropped, vars.music.w2)?;
    tape.add_row(out, vars.music.b2)
}

/// Inference embeddings (no dropout) for many videos, `n x d_e`.
pub fn video_embeddings(params: &ModelParams, videos: &[&Tensor]) -> Result<Tensor> {
    let mut rows = Vec::with_capacity(videos.len());
    for chunk in videos.chunks(256) {
        let mut tape = Tape::new();
        let vars = params.register(&mut tape);
        let out = embed_videos(&mut tape, &vars, chunk, 0.0, &mut NoRng, false)?;
        rows.push(tape.value(out.embedding).clone());
    }
    let refs: Vec<&Tensor> = rows.iter().collect();
    Tensor::concat_rows(&refs)
}

/// Inference embeddings (no dropout) for stacked music features, `n x d_e`.
pub fn music_embeddings(params: &ModelParams, features: &Tensor) -> Result<Tensor> {
    let mut tape = Tape::new();
    let vars = params.register(&mut tape);
    let out = embed_music(&mut tape, &vars, features, 0.0, &mut NoRng)?;
    Ok(tape.value(out).clone())
}

/// Pre-network features used by the intra-modal structure terms: the frame mean
/// for a video, the raw vector for music.
pub fn intra_features(item: &FeatureSequence) -> Result<Tensor> {
    item.frames.mean_rows()
}

/// Stacks music features `1 x d_m` into `n x d_m`.
pub fn stack_rows(items: &[&Tensor]) -> Result<Tensor> {
    Tensor::concat_rows(items)
}

/// Random source for dropout-free passes; any draw is a logic error.
pub(crate) struct NoRng;

impl rand::RngCore for NoRng {
    fn next_u32(&mut self) -> u32 {
        unreachable!("dropout-free pass drew a random number")
    }
    fn next_u64(&mut self) -> u64 {
        unreachable!("dropout-free pass drew a random number")
    }
    fn fill_bytes(&mut self, _dst: &mut [u8]) {
        unreachable!("dropout-free pass drew a random number")
    }
}
