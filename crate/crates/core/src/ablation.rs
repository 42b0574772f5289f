//! Component ablations and span-count sweeps over a shared dataset.

use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use crate::config::TrainConfig;
use crate::dataset::{FeatureBank, PairRecord};
use crate::error::{contract, Result};
use crate::eval::EvalResult;
use crate::train::{train, EvalSet, TrainOutcome};

/// One named configuration of a grid.
#[derive(Debug, Clone, PartialEq)]
pub struct Variant {
    pub name: String,
    pub config: TrainConfig,
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct AblationRow {
    pub name: String,
    pub back_retrieval: bool,
    pub mixup: bool,
    pub rdrop: bool,
    pub self_training: bool,
    pub spans: usize,
    /// Final test recall, absent when the run failed.
    pub result: Option<EvalResult>,
    pub error: Option<String>,
}

/// Components removed cumulatively: full model, then without back retrieval,
/// mixup, R-Drop, and finally the plain backbone.
pub fn component_grid(base: &TrainConfig) -> Vec<Variant> {
    let full = TrainConfig { back_retrieval: true, mixup: true, rdrop: true, self_training: true, ..base.clone() };
    let no_br = TrainConfig { back_retrieval: false, ..full.clone() };
    let no_mix = TrainConfig { mixup: false, ..no_br.clone() };
    let no_rdrop = TrainConfig { rdrop: false, ..no_mix.clone() };
    let backbone = full.clone().backbone_only();
    [("full", full), ("w/o BR", no_br), ("w/o BR+Mix", no_mix), ("w/o BR+Mix+R-Drop", no_rdrop), ("backbone", backbone)]
        .into_iter()
        .map(|(name, config)| Variant { name: String::from(name), config })
        .collect()
}

/// The full model with `1..=max_spans` mixed spans.
pub fn span_grid(base: &TrainConfig, max_spans: usize) -> Vec<Variant> {
    (1..=max_spans)
        .map(|n| Variant {
            name: format!("N={n}"),
            config: TrainConfig { back_retrieval: true, mixup: true, rdrop: true, self_training: true, spans: n, ..base.clone() },
        })
        .collect()
}

/// Trains one variant and evaluates its final parameters; failures are kept in the row.
pub fn run_variant(
    variant: &Variant,
    videos: &FeatureBank,
    music: &FeatureBank,
    records: &[PairRecord],
    eval: &EvalSet<'_>,
) -> (AblationRow, Option<TrainOutcome>) {
    let run = || -> Result<(EvalResult, TrainOutcome)> {
        if variant.config.eval_ks.is_empty() {
            return Err(contract!("variant `{}` evaluates no K", variant.name));
        }
        let outcome = train(&variant.config, videos, music, records, None)?;
        Ok((eval.evaluate(&outcome.params, &variant.config.eval_ks)?, outcome))
    };
    let (result, error, outcome) = match run() {
        Ok((r, o)) => (Some(r), None, Some(o)),
        Err(e) => (None, Some(format!("{e}")), None),
    };
    let c = &variant.config;
    let row = AblationRow {
        name: variant.name.clone(),
        back_retrieval: c.back_retrieval,
        mixup: c.mixup,
        rdrop: c.rdrop,
        self_training: c.self_training,
        spans: c.spans,
        result,
        error,
    };
    (row, outcome)
}

/// Trains every variant in order on the same data; a failed row does not stop the grid.
pub fn run_grid(
    variants: &[Variant],
    videos: &FeatureBank,
    music: &FeatureBank,
    records: &[PairRecord],
    eval: &EvalSet<'_>,
    mut on_done: impl FnMut(&AblationRow, Option<&TrainOutcome>),
) -> Vec<AblationRow> {
    variants
        .iter()
        .map(|v| {
            let (row, outcome) = run_variant(v, videos, music, records, eval);
            on_done(&row, outcome.as_ref());
            row
        })
        .collect()
}
