//! Reader for the TU benchmark text layout: `DS_A.txt`,
//! `DS_graph_indicator.txt`, `DS_graph_labels.txt` and optionally
//! `DS_node_attributes.txt` / `DS_node_labels.txt`. Indices in the files
//! are 1-based.

use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::path::{Path, PathBuf};

use super::{Dataset, Target};
use crate::error::{Error, Result};
use crate::graph::FeaturedGraph;
use crate::matrix::DenseMatrix;
use crate::nn::Task;

struct Lines {
    path: PathBuf,
    lines: Vec<(usize, String)>,
}

fn read_lines(path: PathBuf, required: bool) -> Result<Option<Lines>> {
    if !path.exists() {
        return if required {
            Err(Error::MissingFile(path))
        } else {
            Ok(None)
        };
    }
    let text = fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
    let lines = text
        .lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l.trim().to_string()))
        .filter(|(_, l)| !l.is_empty())
        .collect();
    Ok(Some(Lines { path, lines }))
}

impl Lines {
    fn fields<T: std::str::FromStr>(&self, line: usize, text: &str) -> Result<Vec<T>> {
        text.split(',')
            .map(|f| {
                let f = f.trim();
                f.parse::<T>()
                    .map_err(|_| Error::parse(&self.path, line, format!("cannot parse `{f}`")))
            })
            .collect()
    }

    fn single<T: std::str::FromStr>(&self, line: usize, text: &str) -> Result<T> {
        let mut v = self.fields::<T>(line, text)?;
        if v.len() != 1 {
            return Err(Error::parse(&self.path, line, "expected a single value"));
        }
        Ok(v.remove(0))
    }

    fn expect_count(&self, expected: usize, what: &str) -> Result<()> {
        if self.lines.len() != expected {
            let line = self.lines.last().map_or(0, |(l, _)| *l);
            return Err(Error::parse(
                &self.path,
                line,
                format!("expected {expected} {what}, found {}", self.lines.len()),
            ));
        }
        Ok(())
    }
}

/// Parses the dataset in `dir`, inferring the prefix from the `*_A.txt` file.
pub fn parse_tu(dir: &Path) -> Result<Dataset> {
    let entries = fs::read_dir(dir).map_err(|e| Error::io(dir, e))?;
    let mut prefixes = BTreeSet::new();
    for entry in entries {
        let entry = entry.map_err(|e| Error::io(dir, e))?;
        let name = entry.file_name().to_string_lossy().into_owned();
        if let Some(prefix) = name.strip_suffix("_A.txt") {
            prefixes.insert(prefix.to_string());
        }
    }
    match prefixes.len() {
        0 => Err(Error::MissingFile(dir.join("DS_A.txt"))),
        1 => parse_tu_named(dir, prefixes.first().expect("one prefix")),
        _ => Err(Error::InvalidArgument(format!(
            "{} holds several datasets: {prefixes:?}",
            dir.display()
        ))),
    }
}

pub fn parse_tu_named(dir: &Path, name: &str) -> Result<Dataset> {
    let file = |suffix: &str| dir.join(format!("{name}_{suffix}.txt"));
    let adjacency = read_lines(file("A"), true)?.expect("required");
    let indicator = read_lines(file("graph_indicator"), true)?.expect("required");
    let graph_labels = read_lines(file("graph_labels"), true)?.expect("required");
    let attributes = read_lines(file("node_attributes"), false)?;
    let node_labels = read_lines(file("node_labels"), false)?;

    // Node -> graph (both 0-based), with graphs numbered 1..=G in the file.
    let num_nodes = indicator.lines.len();
    let mut graph_of = Vec::with_capacity(num_nodes);
    for (line, text) in &indicator.lines {
        let g: usize = indicator.single(*line, text)?;
        if g == 0 {
            return Err(Error::parse(&indicator.path, *line, "graph ids start at 1"));
        }
        if let Some(&prev) = graph_of.last() {
            if g - 1 < prev {
                return Err(Error::parse(&indicator.path, *line, "graph ids must be non-decreasing"));
            }
        }
        graph_of.push(g - 1);
    }
    let num_graphs = graph_labels.lines.len();
    let mut first_node = vec![usize::MAX; num_graphs];
    let mut sizes = vec![0usize; num_graphs];
    for (v, &g) in graph_of.iter().enumerate() {
        if g >= num_graphs {
            let line = indicator.lines[v].0;
            return Err(Error::parse(
                &indicator.path,
                line,
                format!("graph id {} exceeds the {num_graphs} graph labels", g + 1),
            ));
        }
        first_node[g] = first_node[g].min(v);
        sizes[g] += 1;
    }
    if let Some(g) = sizes.iter().position(|&s| s == 0) {
        return Err(Error::parse(
            &indicator.path,
            indicator.lines.last().map_or(0, |(l, _)| *l),
            format!("graph {} has no nodes", g + 1),
        ));
    }

    let mut edges: Vec<Vec<(usize, usize)>> = vec![Vec::new(); num_graphs];
    for (line, text) in &adjacency.lines {
        let pair: Vec<usize> = adjacency.fields(*line, text)?;
        let [a, b] = pair[..] else {
            return Err(Error::parse(&adjacency.path, *line, "expected `u, v`"));
        };
        if a == 0 || b == 0 || a > num_nodes || b > num_nodes {
            return Err(Error::parse(&adjacency.path, *line, format!("node id out of range 1..={num_nodes}")));
        }
        let (a, b) = (a - 1, b - 1);
        let g = graph_of[a];
        if graph_of[b] != g {
            return Err(Error::parse(&adjacency.path, *line, "edge joins two different graphs"));
        }
        if a == b {
            log::warn!("{}:{line}: dropping self-loop on node {}", adjacency.path.display(), a + 1);
            continue;
        }
        edges[g].push((a - first_node[g], b - first_node[g]));
    }

    let features = match (&attributes, &node_labels) {
        (Some(attr), _) => {
            attr.expect_count(num_nodes, "attribute rows")?;
            let rows = attr
                .lines
                .iter()
                .map(|(line, text)| attr.fields::<f64>(*line, text))
                .collect::<Result<Vec<_>>>()?;
            let width = rows[0].len();
            if let Some(i) = rows.iter().position(|r| r.len() != width) {
                return Err(Error::parse(&attr.path, attr.lines[i].0, format!("expected {width} attributes")));
            }
            DenseMatrix::from_rows(&rows)?
        }
        (None, Some(labels)) => {
            labels.expect_count(num_nodes, "node labels")?;
            let values = labels
                .lines
                .iter()
                .map(|(line, text)| labels.single::<i64>(*line, text))
                .collect::<Result<Vec<_>>>()?;
            let index = contiguous(&values);
            let mut m = DenseMatrix::zeros(num_nodes, index.len());
            for (v, x) in values.iter().enumerate() {
                m[(v, index[x])] = 1.0;
            }
            m
        }
        (None, None) => DenseMatrix::filled(num_nodes, 1, 1.0),
    };

    let labels = graph_labels
        .lines
        .iter()
        .map(|(line, text)| graph_labels.single::<i64>(*line, text))
        .collect::<Result<Vec<_>>>()?;
    let index = contiguous(&labels);

    let mut graphs = Vec::with_capacity(num_graphs);
    for g in 0..num_graphs {
        let rows: Vec<f64> = (first_node[g]..first_node[g] + sizes[g])
            .flat_map(|v| features.row(v).iter().copied())
            .collect();
        let feats = DenseMatrix::from_vec(sizes[g], features.cols(), rows)?;
        graphs.push(FeaturedGraph::new(sizes[g], &edges[g], feats)?);
    }
    let targets = labels.iter().map(|l| Target::Class(index[l])).collect();
    Dataset::new(
        name,
        graphs,
        targets,
        Task::Classification {
            classes: index.len().max(2),
        },
    )
}

/// Sorted distinct values mapped to 0, 1, ...
fn contiguous(values: &[i64]) -> BTreeMap<i64, usize> {
    let distinct: BTreeSet<i64> = values.iter().copied().collect();
    distinct.into_iter().enumerate().map(|(i, v)| (v, i)).collect()
}
