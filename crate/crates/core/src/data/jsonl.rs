//! One graph per line:
//! `{"nodes": n, "edges": [[u, v], ...], "features": [[...], ...], "target": label-or-vector}`.
//! An optional `"pe"` array holds per-node encodings.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::dataset::infer_task;
use super::{Dataset, Target};
use crate::error::{Error, Result};
use crate::graph::FeaturedGraph;
use crate::matrix::DenseMatrix;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GraphRecord {
    pub nodes: usize,
    pub edges: Vec<[usize; 2]>,
    pub features: Vec<Vec<f64>>,
    pub target: Target,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub pe: Option<Vec<Vec<f64>>>,
}

impl GraphRecord {
    pub fn from_graph(g: &FeaturedGraph, target: Target) -> Self {
        Self {
            nodes: g.num_nodes(),
            edges: g.edges().iter().map(|&(u, v)| [u, v]).collect(),
            features: g.features().to_rows(),
            target,
            pe: None,
        }
    }

    pub fn to_graph(&self) -> Result<FeaturedGraph> {
        let edges: Vec<(usize, usize)> = self.edges.iter().map(|e| (e[0], e[1])).collect();
        FeaturedGraph::new(self.nodes, &edges, DenseMatrix::from_rows(&self.features)?)
    }
}

pub fn read_records(path: &Path) -> Result<Vec<GraphRecord>> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut records = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let record: GraphRecord =
            serde_json::from_str(&line).map_err(|e| Error::parse(path, i + 1, e.to_string()))?;
        record
            .to_graph()
            .map_err(|e| Error::parse(path, i + 1, e.to_string()))?;
        records.push(record);
    }
    Ok(records)
}

pub fn read_jsonl(path: &Path) -> Result<Dataset> {
    let records = read_records(path)?;
    let mut graphs = Vec::with_capacity(records.len());
    let mut targets = Vec::with_capacity(records.len());
    for r in records {
        graphs.push(r.to_graph()?);
        targets.push(r.target);
    }
    let name = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default();
    let task = infer_task(&targets)?;
    Dataset::new(name, graphs, targets, task)
}

pub fn write_records(records: &[GraphRecord], path: &Path) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    for r in records {
        serde_json::to_writer(&mut w, r)?;
        w.write_all(b"\n").map_err(|e| Error::io(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn write_jsonl(dataset: &Dataset, path: &Path) -> Result<()> {
    let records: Vec<GraphRecord> = dataset
        .graphs
        .iter()
        .zip(&dataset.targets)
        .map(|(g, t)| GraphRecord::from_graph(g, t.clone()))
        .collect();
    write_records(&records, path)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{generate_synthetic, SyntheticSpec};

    #[test]
    fn round_trip_is_exact() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("s.jsonl");
        let ds = generate_synthetic(SyntheticSpec { count: 40, seed: 2 }).unwrap();
        write_jsonl(&ds, &path).unwrap();
        let back = read_jsonl(&path).unwrap();
        assert_eq!(back.graphs, ds.graphs);
        assert_eq!(back.targets, ds.targets);
        assert_eq!(back.task, ds.task);
    }

    #[test]
    fn empty_file_is_empty_dataset() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("e.jsonl");
        std::fs::write(&path, "").unwrap();
        assert!(read_jsonl(&path).unwrap().is_empty());
    }

    #[test]
    fn missing_features_names_line() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("bad.jsonl");
        std::fs::write(
            &path,
            "{\"nodes\":1,\"edges\":[],\"features\":[[0.0]],\"target\":0}\n{\"nodes\":1,\"edges\":[],\"target\":1}\n",
        )
        .unwrap();
        match read_jsonl(&path) {
            Err(Error::Parse { line, message, .. }) => {
                assert_eq!(line, 2);
                assert!(message.contains("features"), "{message}");
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn regression_targets() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("r.jsonl");
        std::fs::write(&path, "{\"nodes\":1,\"edges\":[],\"features\":[[0.5]],\"target\":[1.5,-2.0]}\n").unwrap();
        let ds = read_jsonl(&path).unwrap();
        assert_eq!(ds.task, crate::nn::Task::Regression { targets: 2 });
    }
}
