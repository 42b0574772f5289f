//! Training hyperparameters and feature toggles.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use crate::backbone::Dims;
use crate::error::{Error, Result};
use crate::losses::{LossWeights, MixWeightConvention, StructureSign, TripleSampling};
use crate::saliency::{MixSettings, SpanRounding};

/// How the configured dropout probability is read.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize), serde(rename_all = "snake_case"))]
pub enum DropoutSemantics {
    /// The value is the probability of zeroing a unit.
    #[default]
    Drop,
    /// The value is the probability of keeping a unit.
    Keep,
}

/// Which samples the dropout-consistency loss covers.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize), serde(rename_all = "snake_case"))]
pub enum RDropScope {
    /// Only pairs currently flagged noisy.
    #[default]
    Noisy,
    All,
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize), serde(default, deny_unknown_fields))]
pub struct TrainConfig {
    pub lambda1: f64,
    pub lambda2: f64,
    pub lambda3: f64,
    pub lambda4: f64,
    pub margin: f64,
    pub structure_sign: StructureSign,
    pub temperature: f64,
    pub tau: f64,
    pub lambda0: f64,
    pub span_rounding: SpanRounding,
    pub spans: usize,
    pub dropout: f64,
    pub dropout_semantics: DropoutSemantics,
    pub learning_rate: f64,
    pub batch_size: usize,
    pub warmup_epochs: usize,
    pub epochs: usize,
    pub seed: u64,
    pub hidden_dim: usize,
    pub embed_dim: usize,
    pub back_retrieval: bool,
    pub mixup: bool,
    pub rdrop: bool,
    pub self_training: bool,
    pub mix_weight_convention: MixWeightConvention,
    pub rdrop_scope: RDropScope,
    pub gmm_max_iters: usize,
    pub gmm_tol: f64,
    /// Epochs between refreshes of the candidate music embeddings.
    pub bank_refresh_epochs: usize,
    /// Epochs of supervised training for the music-to-video model.
    pub reverse_epochs: usize,
    pub reverse_top_k: usize,
    pub full_triples_up_to: usize,
    pub sampled_triples_per_anchor: usize,
    pub eval_ks: Vec<usize>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            lambda1: 3.0,
            lambda2: 1.0,
            lambda3: 0.2,
            lambda4: 0.2,
            margin: 6.0,
            structure_sign: StructureSign::Corrective,
            temperature: 0.8,
            tau: 0.3,
            lambda0: 0.4,
            span_rounding: SpanRounding::HalfUp,
            spans: 1,
            dropout: 0.9,
            dropout_semantics: DropoutSemantics::Drop,
            learning_rate: 4e-4,
            batch_size: 32,
            warmup_epochs: 10,
            epochs: 30,
            seed: 0,
            hidden_dim: 256,
            embed_dim: 64,
            back_retrieval: true,
            mixup: true,
            rdrop: true,
            self_training: true,
            mix_weight_convention: MixWeightConvention::Paper,
            rdrop_scope: RDropScope::Noisy,
            gmm_max_iters: 200,
            gmm_tol: 1e-8,
            bank_refresh_epochs: 1,
            reverse_epochs: 10,
            reverse_top_k: 3,
            full_triples_up_to: 32,
            sampled_triples_per_anchor: 64,
            eval_ks: vec![1, 10, 25],
        }
    }
}

fn bad(field: &'static str, reason: impl Into<alloc::string::String>) -> Error {
    Error::Config { field, reason: reason.into() }
}

impl TrainConfig {
    /// Baseline: triplet loss only, no augmentation or self-training.
    pub fn backbone_only(mut self) -> Self {
        self.back_retrieval = false;
        self.mixup = false;
        self.rdrop = false;
        self.self_training = false;
        self
    }

    pub fn loss_weights(&self) -> LossWeights {
        LossWeights {
            lambda1: self.lambda1,
            lambda2: self.lambda2,
            lambda3: self.lambda3,
            lambda4: self.lambda4,
            margin: self.margin,
            structure_sign: self.structure_sign,
        }
    }

    /// Probability of zeroing a unit after applying [`DropoutSemantics`].
    pub fn drop_rate(&self) -> f64 {
        match self.dropout_semantics {
            DropoutSemantics::Drop => self.dropout,
            DropoutSemantics::Keep => 1.0 - self.dropout,
        }
    }

    pub fn mix_settings(&self) -> MixSettings {
        MixSettings { lambda0: self.lambda0, spans: self.spans, rounding: self.span_rounding }
    }

    pub fn triple_sampling(&self) -> TripleSampling {
        TripleSampling { full_up_to: self.full_triples_up_to, pairs_per_anchor: self.sampled_triples_per_anchor, seed: self.seed }
    }

    pub fn dims(&self, d_v: usize, d_m: usize) -> Dims {
        Dims { d_v, d_m, hidden: self.hidden_dim, d_e: self.embed_dim }
    }

    pub fn validate(&self) -> Result<()> {
        let nonneg = [
            ("lambda1", self.lambda1),
            ("lambda2", self.lambda2),
            ("lambda3", self.lambda3),
            ("lambda4", self.lambda4),
            ("margin", self.margin),
        ];
        for (field, v) in nonneg {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(bad(field, format!("must be finite and non-negative, got {v}")));
            }
        }
        if !(self.temperature > 0.0 && self.temperature.is_finite()) {
            return Err(bad("temperature", format!("must be positive, got {}", self.temperature)));
        }
        if !(self.tau > 0.0 && self.tau < 1.0) {
            return Err(bad("tau", format!("must lie in (0, 1), got {}", self.tau)));
        }
        if !(self.lambda0 > 0.0 && self.lambda0 <= 1.0) {
            return Err(bad("lambda0", format!("must lie in (0, 1], got {}", self.lambda0)));
        }
        if self.spans == 0 {
            return Err(bad("spans", "must be at least 1"));
        }
        if !(0.0..=1.0).contains(&self.dropout) || !(0.0..1.0).contains(&self.drop_rate()) {
            return Err(bad("dropout", format!("effective drop rate must lie in [0, 1), got {}", self.drop_rate())));
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(bad("learning_rate", format!("must be positive, got {}", self.learning_rate)));
        }
        if self.batch_size < 3 {
            return Err(bad("batch_size", format!("must be at least 3, got {}", self.batch_size)));
        }
        if self.warmup_epochs > self.epochs {
            return Err(bad("warmup_epochs", format!("{} exceeds epochs = {}", self.warmup_epochs, self.epochs)));
        }
        if self.hidden_dim == 0 {
            return Err(bad("hidden_dim", "must be positive"));
        }
        if self.embed_dim == 0 {
            return Err(bad("embed_dim", "must be positive"));
        }
        if self.gmm_max_iters == 0 {
            return Err(bad("gmm_max_iters", "must be positive"));
        }
        if self.gmm_tol.is_nan() || self.gmm_tol < 0.0 {
            return Err(bad("gmm_tol", "must be non-negative"));
        }
        if self.bank_refresh_epochs == 0 {
            return Err(bad("bank_refresh_epochs", "must be positive"));
        }
        if self.reverse_top_k == 0 {
            return Err(bad("reverse_top_k", "must be positive"));
        }
        if self.full_triples_up_to < 3 {
            return Err(bad("full_triples_up_to", "must be at least 3"));
        }
        if self.sampled_triples_per_anchor == 0 {
            return Err(bad("sampled_triples_per_anchor", "must be positive"));
        }
        if self.eval_ks.contains(&0) {
            return Err(bad("eval_ks", "every K must be positive"));
        }
        Ok(())
    }
}
