pub mod ablate;
pub mod ect;
pub mod encode;
pub mod synth;
pub mod train;

use std::path::Path;

use anyhow::{Context, Result};
use leap::data::{parse_tu, read_jsonl, read_records, GraphRecord};
use leap::Dataset;

/// A TU directory or a JSON-lines file.
pub fn load_dataset(path: &Path) -> Result<Dataset> {
    let dataset = if path.is_dir() { parse_tu(path) } else { read_jsonl(path) };
    dataset.with_context(|| format!("cannot load dataset {}", path.display()))
}

/// Records of a TU directory or a JSON-lines file.
pub fn load_records(path: &Path) -> Result<Vec<GraphRecord>> {
    if path.is_dir() {
        let ds = load_dataset(path)?;
        Ok(ds
            .graphs
            .iter()
            .zip(ds.targets)
            .map(|(g, t)| GraphRecord::from_graph(g, t))
            .collect())
    } else {
        read_records(path).with_context(|| format!("cannot read {}", path.display()))
    }
}

/// One compact JSON object per line.
pub fn jsonl_bytes<T: serde::Serialize>(rows: &[T]) -> Result<Vec<u8>> {
    let mut out = Vec::new();
    for row in rows {
        serde_json::to_writer(&mut out, row)?;
        out.push(b'\n');
    }
    Ok(out)
}
