//! Line-delimited JSON files: pair manifests and report streams.

use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::Serialize;
use ssvmr_core::dataset::PairRecord;

use crate::error::{CliError, Result};

/// Writes one JSON object per line.
pub fn write_jsonl<T: Serialize>(path: &Path, rows: &[T]) -> Result<()> {
    let file = std::fs::File::create(path).map_err(|e| CliError::io(path, e))?;
    let mut w = BufWriter::new(file);
    for row in rows {
        let line = serde_json::to_string(row).map_err(|e| CliError::io(path, e.into()))?;
        writeln!(w, "{line}").map_err(|e| CliError::io(path, e))?;
    }
    w.flush().map_err(|e| CliError::io(path, e))
}

/// Reads one JSON object per non-blank line.
pub fn read_jsonl<T: DeserializeOwned>(path: &Path) -> Result<Vec<T>> {
    let file = std::fs::File::open(path).map_err(|e| CliError::io(path, e))?;
    let mut out = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| CliError::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let row =
            serde_json::from_str(&line).map_err(|e| CliError::Manifest { path: path.to_path_buf(), line: i + 1, reason: e.to_string() })?;
        out.push(row);
    }
    Ok(out)
}

pub fn write_manifest(path: &Path, pairs: &[PairRecord]) -> Result<()> {
    write_jsonl(path, pairs)
}

pub fn read_manifest(path: &Path) -> Result<Vec<PairRecord>> {
    read_jsonl(path)
}

#[cfg(test)]
mod tests {
    use super::*;
    use ssvmr_core::dataset::Origin;

    #[test]
    fn manifest_round_trip_and_null_truth() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("pairs.jsonl");
        let pairs = vec![
            PairRecord { video_id: "v1".into(), music_id: "m1".into(), origin: Origin::Original, true_match: None },
            PairRecord { video_id: "v2".into(), music_id: "m9".into(), origin: Origin::Synthetic, true_match: Some(false) },
        ];
        write_manifest(&path, &pairs).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        assert!(text.lines().next().unwrap().contains("\"true_match\":null"));
        assert_eq!(read_manifest(&path).unwrap(), pairs);
    }

    #[test]
    fn bad_line_is_reported() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("pairs.jsonl");
        std::fs::write(&path, "{\"video_id\":\"v\",\"music_id\":\"m\",\"origin\":\"original\",\"true_match\":null}\n{oops}\n").unwrap();
        assert!(matches!(read_manifest(&path), Err(CliError::Manifest { line: 2, .. })));
    }
}
