//! Text tables for evaluation and ablation results.

use ssvmr_core::ablation::AblationRow;
use ssvmr_core::eval::EvalResult;

fn flag(b: bool) -> &'static str {
    if b {
        "on"
    } else {
        "off"
    }
}

/// Column-aligned `R@K` table for a single evaluation.
pub fn eval_table(result: &EvalResult) -> String {
    let mut head = format!("{:<10}", "queries");
    let mut row = format!("{:<10}", result.n_queries);
    for (k, r) in &result.recall_at {
        head.push_str(&format!(" {:>8}", format!("R@{k}")));
        row.push_str(&format!(" {:>8.4}", r));
    }
    format!("{head}\n{row}\n")
}

/// One line per configuration with its toggles and recalls.
pub fn ablation_table(rows: &[AblationRow]) -> String {
    let name_w = rows.iter().map(|r| r.name.len()).max().unwrap_or(0).max(7);
    let ks: Vec<usize> = rows.iter().find_map(|r| r.result.as_ref()).map(|r| r.recall_at.keys().copied().collect()).unwrap_or_default();
    let mut out = format!("{:<name_w$} {:>4} {:>4} {:>6} {:>4} {:>5}", "variant", "BR", "Mix", "R-Drop", "SL", "spans");
    for k in &ks {
        out.push_str(&format!(" {:>8}", format!("R@{k}")));
    }
    out.push('\n');
    for r in rows {
        out.push_str(&format!(
            "{:<name_w$} {:>4} {:>4} {:>6} {:>4} {:>5}",
            r.name,
            flag(r.back_retrieval),
            flag(r.mixup),
            flag(r.rdrop),
            flag(r.self_training),
            r.spans
        ));
        match (&r.result, &r.error) {
            (Some(res), _) => {
                for k in &ks {
                    match res.recall(*k) {
                        Some(v) => out.push_str(&format!(" {v:>8.4}")),
                        None => out.push_str(&format!(" {:>8}", "-")),
                    }
                }
            }
            (None, e) => out.push_str(&format!("  failed: {}", e.as_deref().unwrap_or("unknown error"))),
        }
        out.push('\n');
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::collections::BTreeMap;

    #[test]
    fn eval_table_lists_every_k() {
        let r = EvalResult { recall_at: BTreeMap::from([(1, 0.25), (10, 0.5)]), n_queries: 4, similarity_checksum: 0, checkpoint_id: None };
        let t = eval_table(&r);
        assert!(t.contains("R@1") && t.contains("R@10") && t.contains("0.2500"));
    }
}
